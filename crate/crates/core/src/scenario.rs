//! Timed application scenarios: sensing, host compute, accelerator
//! inference and sleep composed into a piecewise-constant power trace.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::accel_sim::CycleReport;
use crate::bench;
use crate::energy_model::{estimate, host_power, EnergyParams, OperatingPoint};
use crate::error::{FlexError, Result};
use crate::wuc::{sleep_power, wake_latency, DomainMap, PowerMode, Wuc, WucParams};

/// Retentive L2 available to the uDMA in LP_DATA_ACQ.
pub const RETENTIVE_L2_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Duration {
    Seconds(f64),
    /// Host core cycles at the script's host operating point.
    Cycles(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SleepLength {
    Seconds(f64),
    /// Long enough that everything else in the repetition takes this
    /// fraction of it.
    Duty(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostLevel {
    Watts(f64),
    /// Fraction of full core clock activity; see `host_power`.
    Activity(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    Sense {
        mode: PowerMode,
        sample_rate: f64,
        window_s: f64,
        bytes_per_sample: usize,
        /// Collection keeps running through the phases after this one (up
        /// to the next SENSE); only the rest of the window is spent in
        /// the acquisition mode.
        #[serde(default)]
        overlapped: bool,
    },
    HostCompute {
        label: String,
        duration: Duration,
        level: HostLevel,
    },
    AccelInfer {
        program: String,
        #[serde(default = "OperatingPoint::efficient")]
        op_point: OperatingPoint,
        #[serde(default = "one")]
        batches: usize,
    },
    Sleep {
        mode: PowerMode,
        length: SleepLength,
    },
    StoreMram {
        bytes: usize,
    },
}

fn one() -> usize {
    1
}

fn default_aon() -> f64 {
    33e3
}

impl Phase {
    fn mode(&self) -> PowerMode {
        match self {
            Phase::Sense { mode, .. } | Phase::Sleep { mode, .. } => *mode,
            _ => PowerMode::FullActive,
        }
    }

    fn label(&self) -> String {
        match self {
            Phase::Sense { mode, .. } => format!("sense:{mode}"),
            Phase::HostCompute { label, .. } => format!("host:{label}"),
            Phase::AccelInfer { program, .. } => format!("infer:{program}"),
            Phase::Sleep { mode, .. } => format!("sleep:{mode}"),
            Phase::StoreMram { .. } => "store_mram".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub name: String,
    pub phases: Vec<Phase>,
    #[serde(default = "one")]
    pub repeat: usize,
    #[serde(default = "default_aon")]
    pub aon_freq: f64,
    /// Operating point for host compute and MRAM stores.
    #[serde(default = "OperatingPoint::efficient")]
    pub host_op: OperatingPoint,
}

impl ScenarioScript {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() || self.repeat == 0 {
            return Err(FlexError::Range(format!("scenario {} has nothing to run", self.name)));
        }
        for p in &self.phases {
            match p {
                Phase::Sense {
                    mode,
                    sample_rate,
                    window_s,
                    bytes_per_sample,
                    ..
                } => {
                    if !matches!(mode, PowerMode::DataAcq | PowerMode::LpDataAcq) {
                        return Err(FlexError::Range(format!("SENSE in {mode}")));
                    }
                    if !(*sample_rate > 0.0 && *window_s > 0.0) {
                        return Err(FlexError::Range("SENSE rate and window must be positive".into()));
                    }
                    let bytes = (sample_rate * window_s).ceil() as usize * bytes_per_sample;
                    if *mode == PowerMode::LpDataAcq && bytes > RETENTIVE_L2_BYTES {
                        return Err(FlexError::Capacity(format!(
                            "{bytes} bytes of samples exceed the {RETENTIVE_L2_BYTES} byte retentive L2"
                        )));
                    }
                }
                Phase::Sleep { length, .. } => match *length {
                    SleepLength::Seconds(s) if !(s >= 0.0) => {
                        return Err(FlexError::Range(format!("sleep {s} s")));
                    }
                    SleepLength::Duty(d) if !(d > 0.0 && d <= 1.0) => {
                        return Err(FlexError::Range(format!("duty {d}")));
                    }
                    _ => {}
                },
                Phase::HostCompute { duration, level, .. } => {
                    let bad_d = matches!(duration, Duration::Seconds(s) if !(*s >= 0.0));
                    let bad_l = matches!(level, HostLevel::Watts(w) | HostLevel::Activity(w) if !(*w >= 0.0));
                    if bad_d || bad_l {
                        return Err(FlexError::Range("host phase duration and level must be >= 0".into()));
                    }
                }
                Phase::AccelInfer { batches, .. } if *batches == 0 => {
                    return Err(FlexError::Range("zero inference batches".into()));
                }
                _ => {}
            }
        }
        if self.phases.iter().filter(|p| matches!(p, Phase::Sleep { length: SleepLength::Duty(_), .. })).count() > 1 {
            return Err(FlexError::Range("at most one duty-sized sleep per script".into()));
        }
        Ok(())
    }
}

/// Everything a scenario run needs besides the script.
#[derive(Debug, Clone)]
pub struct ScenarioEnv {
    /// `None` until calibrated; phases that need it fail with UNCALIBRATED.
    pub energy: Option<EnergyParams>,
    pub wuc: WucParams,
    pub map: DomainMap,
    /// Cycle reports by program name.
    pub programs: BTreeMap<String, CycleReport>,
    /// Extra energy drawn by each wake-up.
    pub wake_energy_j: f64,
    pub mram_write_bytes_per_s: f64,
}

impl ScenarioEnv {
    pub fn new(energy: Option<EnergyParams>) -> Self {
        Self {
            energy,
            wuc: WucParams::default(),
            map: DomainMap::default(),
            programs: BTreeMap::new(),
            wake_energy_j: 0.0,
            mram_write_bytes_per_s: 1e6,
        }
    }

    /// Simulates every referenced program not yet known, looking names up
    /// in the benchmark suite.
    pub fn load_bench_programs(&mut self, script: &ScenarioScript) -> Result<()> {
        for p in &script.phases {
            if let Phase::AccelInfer { program, .. } = p {
                if self.programs.contains_key(program) {
                    continue;
                }
                let c = bench::case(program)
                    .ok_or_else(|| FlexError::MissingParam(format!("program `{program}` is not compiled")))?;
                self.programs.insert(program.clone(), bench::timing_report(&c)?);
            }
        }
        Ok(())
    }

    fn energy(&self) -> Result<&EnergyParams> {
        self.energy
            .as_ref()
            .ok_or_else(|| FlexError::Uncalibrated("active phases need fitted energy parameters".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Segment start.
    pub t: f64,
    pub power_w: f64,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub average_w: f64,
    pub total_s: f64,
    pub energy_j: f64,
    /// Time fraction outside SLEEP phases.
    pub duty_cycle: f64,
    /// Energy per phase label, summed over repetitions.
    pub phase_energy_j: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub points: Vec<TracePoint>,
    pub summary: TraceSummary,
}

impl PowerTrace {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t_seconds,power_watts,mode")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.t, p.power_w, p.mode)?;
        }
        Ok(())
    }
}

pub fn duty_cycle_average(p_active: f64, p_sleep: f64, duty: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&duty) {
        return Err(FlexError::Range(format!("duty {duty} outside [0, 1]")));
    }
    Ok(p_active * duty + p_sleep * (1.0 - duty))
}

struct Segment {
    label: String,
    /// Mode column of the trace; wake gaps show as WAKE.
    mode: String,
    seconds: f64,
    power_w: f64,
    sleep: bool,
}

/// Phase power and fixed length; overlapped SENSE and duty sleeps get their
/// length later.
fn phase_cost(p: &Phase, script: &ScenarioScript, env: &ScenarioEnv) -> Result<(f64, Option<f64>)> {
    let op = &script.host_op;
    Ok(match p {
        Phase::Sense {
            mode,
            window_s,
            overlapped,
            ..
        } => {
            let w = sleep_power(*mode, script.aon_freq, &env.wuc, &env.map)?;
            (w, (!overlapped).then_some(*window_s))
        }
        Phase::Sleep { mode, length } => {
            let w = sleep_power(*mode, script.aon_freq, &env.wuc, &env.map)?;
            (w, if let SleepLength::Seconds(s) = length { Some(*s) } else { None })
        }
        Phase::HostCompute { duration, level, .. } => {
            let s = match *duration {
                Duration::Seconds(s) => s,
                Duration::Cycles(c) => c as f64 / op.core_freq,
            };
            let w = match *level {
                HostLevel::Watts(w) => w,
                HostLevel::Activity(a) => host_power(op, env.energy()?, a)?,
            };
            (w, Some(s))
        }
        Phase::AccelInfer {
            program,
            op_point,
            batches,
        } => {
            let r = env
                .programs
                .get(program)
                .ok_or_else(|| FlexError::MissingParam(format!("program `{program}` is not compiled")))?;
            let e = estimate(r, op_point, env.energy()?)?;
            (e.power_w, Some(e.seconds * *batches as f64))
        }
        Phase::StoreMram { bytes } => {
            let p = env.energy()?;
            if !(env.mram_write_bytes_per_s > 0.0) {
                return Err(FlexError::Range("MRAM write bandwidth".into()));
            }
            let s = *bytes as f64 / env.mram_write_bytes_per_s;
            let base = host_power(op, p, 0.0)?;
            let w = if s > 0.0 {
                base + *bytes as f64 * p.mram_write_byte / s
            } else {
                base
            };
            (w, Some(s))
        }
    })
}

pub fn run_scenario(script: &ScenarioScript, env: &ScenarioEnv) -> Result<PowerTrace> {
    script.validate()?;
    env.wuc.validate()?;
    if !(33e3..=40e6).contains(&script.aon_freq) {
        return Err(FlexError::Range(format!("AON clock {} Hz", script.aon_freq)));
    }
    let costs = script
        .phases
        .iter()
        .map(|p| phase_cost(p, script, env))
        .collect::<Result<Vec<_>>>()?;

    // Walk the mode sequence through the WuC to find the wake gaps; a gap
    // sits before phase i when entering it needs a wake from low power.
    let first = script.phases[0].mode();
    let mut wuc = Wuc::new(env.map.clone(), script.aon_freq, script.host_op.core_freq);
    wuc.request_mode(first, None)?;
    let wake_s = wake_latency(script.aon_freq);
    let mut wake_before = vec![Vec::<PowerMode>::new(); script.phases.len()];
    for (i, p) in script.phases.iter().enumerate() {
        wake_before[i] = transition(&mut wuc, p.mode())?;
    }
    let wrap_wake = if script.repeat > 1 {
        transition(&mut wuc, first)?
    } else {
        Vec::new()
    };
    let gap_power = |from: PowerMode| -> Result<f64> {
        Ok(sleep_power(from, script.aon_freq, &env.wuc, &env.map)? + env.wake_energy_j / wake_s)
    };

    // Resolve lengths for one repetition (wrap wake counted at its start).
    let mut len: Vec<f64> = costs.iter().map(|c| c.1.unwrap_or(0.0)).collect();
    for (i, p) in script.phases.iter().enumerate() {
        if let Phase::Sense {
            window_s,
            overlapped: true,
            ..
        } = p
        {
            let mut busy = 0.0;
            for j in i + 1..script.phases.len() {
                if matches!(script.phases[j], Phase::Sense { .. }) {
                    break;
                }
                busy += len[j] + wake_before[j].len() as f64 * wake_s;
            }
            if busy > *window_s {
                return Err(FlexError::Range(format!(
                    "phases after SENSE take {busy:.6} s, longer than its {window_s} s window"
                )));
            }
            len[i] = window_s - busy;
        }
    }
    let duty_idx = script
        .phases
        .iter()
        .position(|p| matches!(p, Phase::Sleep { length: SleepLength::Duty(_), .. }));

    let mut segs = Vec::new();
    for rep in 0..script.repeat {
        let rep_start = segs.len();
        for (i, p) in script.phases.iter().enumerate() {
            let gaps = if i == 0 && rep > 0 { &wrap_wake } else { &wake_before[i] };
            for &from in gaps {
                segs.push(Segment {
                    label: "wake".into(),
                    mode: "WAKE".into(),
                    seconds: wake_s,
                    power_w: gap_power(from)?,
                    sleep: false,
                });
            }
            segs.push(Segment {
                label: p.label(),
                mode: p.mode().to_string(),
                seconds: len[i],
                power_w: costs[i].0,
                sleep: matches!(p, Phase::Sleep { .. }),
            });
        }
        if let (Some(d), Some(Phase::Sleep {
            length: SleepLength::Duty(duty),
            ..
        })) = (duty_idx, duty_idx.map(|d| &script.phases[d]))
        {
            let active: f64 = segs[rep_start..].iter().filter(|s| !s.sleep).map(|s| s.seconds).sum();
            let fixed_sleep: f64 = segs[rep_start..].iter().filter(|s| s.sleep).map(|s| s.seconds).sum();
            let total = active / duty;
            let seg = segs[rep_start..]
                .iter_mut()
                .filter(|s| s.sleep)
                .nth(script.phases[..d].iter().filter(|p| matches!(p, Phase::Sleep { .. })).count())
                .expect("duty sleep segment");
            seg.seconds = (total - active - fixed_sleep).max(0.0);
        }
    }

    let mut points = Vec::new();
    let mut t = 0.0;
    let mut energy = 0.0;
    let mut sleep_s = 0.0;
    let mut phase_energy_j = BTreeMap::new();
    for s in &segs {
        if s.seconds <= 0.0 {
            continue;
        }
        points.push(TracePoint {
            t,
            power_w: s.power_w,
            mode: s.mode.clone(),
        });
        let e = s.power_w * s.seconds;
        energy += e;
        *phase_energy_j.entry(s.label.clone()).or_insert(0.0) += e;
        if s.sleep {
            sleep_s += s.seconds;
        }
        t += s.seconds;
    }
    if t <= 0.0 {
        return Err(FlexError::Range(format!("scenario {} has zero length", script.name)));
    }
    Ok(PowerTrace {
        points,
        summary: TraceSummary {
            average_w: energy / t,
            total_s: t,
            energy_j: energy,
            duty_cycle: 1.0 - sleep_s / t,
            phase_energy_j,
        },
    })
}

/// Requests `to`, going through FULL_ACTIVE when the direct move is not
/// allowed. Returns the low-power modes woken from on the way.
fn transition(wuc: &mut Wuc, to: PowerMode) -> Result<Vec<PowerMode>> {
    let mut woke = Vec::new();
    if wuc.mode == to {
        return Ok(woke);
    }
    let from = wuc.mode;
    match wuc.request_mode(to, None) {
        Ok(_) => {
            if from != PowerMode::FullActive && from != PowerMode::Reserved {
                woke.push(from);
            }
        }
        Err(FlexError::IllegalTransition { .. }) => {
            wuc.request_mode(PowerMode::FullActive, None)?;
            woke.push(from);
            wuc.request_mode(to, None)?;
        }
        Err(e) => return Err(e),
    }
    Ok(woke)
}

/// Audio batches per KWS window.
pub const KWS_BATCHES: usize = 16;

/// Continuous keyword spotting: a 2 s window at 44.1 kHz collected in
/// LP_DATA_ACQ as 16 batches, each run through the streaming TCN while the
/// next batch is being collected; the class scores go to MRAM.
pub fn preset_kws() -> ScenarioScript {
    let window = 2.0;
    let batch = window / KWS_BATCHES as f64;
    let mut phases = Vec::new();
    for _ in 0..KWS_BATCHES {
        phases.push(Phase::Sense {
            mode: PowerMode::LpDataAcq,
            sample_rate: 44.1e3,
            window_s: batch,
            bytes_per_sample: 2,
            overlapped: true,
        });
        phases.push(Phase::AccelInfer {
            program: "kws-stream".into(),
            op_point: OperatingPoint::efficient(),
            batches: 1,
        });
    }
    phases.push(Phase::StoreMram { bytes: KWS_BATCHES * 12 });
    ScenarioScript {
        name: "kws".into(),
        phases,
        repeat: 1,
        aon_freq: 33e3,
        host_op: OperatingPoint::efficient(),
    }
}

/// Host time for the INT16 MFEC front end on one second of audio.
pub const MFEC_SECONDS: f64 = 3.0;

/// SoC power while the host runs the MFEC front end. The host core itself
/// is outside the energy model, so this is a fixed level comparable to the
/// busy accelerator rather than a derived figure.
pub const MFEC_WATTS: f64 = 200e-6;

/// Machine monitoring: 1 s at 16 kHz in LP_DATA_ACQ, MFEC features on the
/// host, the auto-encoder on the accelerator, then deep sleep sized to the
/// requested duty cycle.
pub fn preset_machine_monitoring_with(duty: f64) -> ScenarioScript {
    ScenarioScript {
        name: "machine-monitoring".into(),
        phases: vec![
            Phase::Sense {
                mode: PowerMode::LpDataAcq,
                sample_rate: 16e3,
                window_s: 1.0,
                bytes_per_sample: 2,
                overlapped: false,
            },
            Phase::HostCompute {
                label: "mfec".into(),
                duration: Duration::Seconds(MFEC_SECONDS),
                level: HostLevel::Watts(MFEC_WATTS),
            },
            Phase::AccelInfer {
                program: "cae".into(),
                op_point: OperatingPoint::efficient(),
                batches: 1,
            },
            Phase::Sleep {
                mode: PowerMode::DeepSleep,
                length: SleepLength::Duty(duty),
            },
        ],
        repeat: 1,
        aon_freq: 33e3,
        host_op: OperatingPoint::efficient(),
    }
}

pub fn preset_machine_monitoring() -> ScenarioScript {
    preset_machine_monitoring_with(0.05)
}
