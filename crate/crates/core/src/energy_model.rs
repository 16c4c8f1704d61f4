//! Power and energy estimates from simulator event counts, and calibration
//! of the per-event energies against measured powers.
//!
//! Dynamic energies are given at the 0.8 V reference and scale as
//! (V / 0.8)^exponent, logic events with the logic rail and memory events
//! with the memory rail. Leakage is tabulated per component at a few rail
//! voltages and interpolated linearly in the logic voltage.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::accel_sim::CycleReport;
use crate::error::{FlexError, Result};

pub const V_REF: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub core_freq: f64,
    pub v_logic: f64,
    pub v_mem: f64,
    pub aon_freq: f64,
}

impl OperatingPoint {
    pub const fn new(core_freq: f64, v_logic: f64, v_mem: f64) -> Self {
        Self {
            core_freq,
            v_logic,
            v_mem,
            aon_freq: 33e3,
        }
    }

    /// Peak energy-efficiency point.
    pub const fn efficient() -> Self {
        Self::new(5e6, 0.4, 0.5)
    }

    /// Peak throughput point.
    pub const fn fast() -> Self {
        Self::new(150e6, 0.8, 0.8)
    }

    /// Voltage-frequency sweep from 5 to 150 MHz.
    pub fn standard_points() -> Vec<Self> {
        [
            (5e6, 0.40, 0.50),
            (10e6, 0.45, 0.55),
            (20e6, 0.50, 0.60),
            (30e6, 0.55, 0.60),
            (40e6, 0.60, 0.65),
            (50e6, 0.60, 0.65),
            (100e6, 0.70, 0.70),
            (120e6, 0.75, 0.75),
            (150e6, 0.80, 0.80),
        ]
        .into_iter()
        .map(|(f, vl, vm)| Self::new(f, vl, vm))
        .collect()
    }
}

/// One value per SoC component, in watts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub wuc: f64,
    pub l2: f64,
    pub l2_udma: f64,
    pub l1: f64,
    pub logic: f64,
    pub dma: f64,
    pub mram_periphery: f64,
    pub mram_array: f64,
}

impl Components {
    pub fn sum(&self) -> f64 {
        self.wuc + self.l2 + self.l2_udma + self.l1 + self.logic + self.dma + self.mram_periphery + self.mram_array
    }

    fn zip(&self, o: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            wuc: f(self.wuc, o.wuc),
            l2: f(self.l2, o.l2),
            l2_udma: f(self.l2_udma, o.l2_udma),
            l1: f(self.l1, o.l1),
            logic: f(self.logic, o.logic),
            dma: f(self.dma, o.dma),
            mram_periphery: f(self.mram_periphery, o.mram_periphery),
            mram_array: f(self.mram_array, o.mram_array),
        }
    }

    fn scaled(&self, s: f64) -> Self {
        self.zip(self, |a, _| a * s)
    }

    fn values(&self) -> [f64; 8] {
        [
            self.wuc,
            self.l2,
            self.l2_udma,
            self.l1,
            self.logic,
            self.dma,
            self.mram_periphery,
            self.mram_array,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakagePoint {
    pub v_logic: f64,
    pub v_mem: f64,
    pub watts: Components,
}

/// Per-event energies in joules at the reference voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    /// One 8-byte L2 bus beat.
    pub l2: f64,
    pub l1_weight: f64,
    pub l1_act: f64,
    pub l0: f64,
    pub index_mem: f64,
    pub instr_mem: f64,
    pub mac8: f64,
    pub mac4: f64,
    pub mac2: f64,
    pub dma_byte: f64,
    pub mram_read_byte: f64,
    pub mram_write_byte: f64,
    /// Clock tree and control per active cycle.
    pub logic_cycle: f64,
    /// uDMA and peripheral interconnect per active cycle.
    pub udma_cycle: f64,
    /// L2 and L1 clocking per active cycle, independent of accesses.
    pub l2_cycle: f64,
    pub l1_cycle: f64,
    pub dma_cycle: f64,
    pub leakage: Vec<LeakagePoint>,
    pub voltage_exponent: f64,
}

impl Default for EnergyParams {
    /// Derived from the CNN3x3 component breakdown measured at 5 MHz
    /// (0.4/0.5 V) and 150 MHz (0.8 V): each component's power at the two
    /// points is split into leakage and a per-cycle dynamic part, and the
    /// dynamic part is split between per-cycle clocking (80 % for the
    /// memories and the DMA) and that component's events.
    fn default() -> Self {
        let pj = 1e-12;
        let uw = 1e-6;
        Self {
            l2: 31.7 * pj,
            l1_weight: 0.22 * pj,
            l1_act: 0.22 * pj,
            l0: 1.0 * pj,
            index_mem: 0.22 * pj,
            instr_mem: 8.0 * pj,
            mac8: 1.06 * pj,
            mac4: 0.40 * pj,
            mac2: 0.15 * pj,
            dma_byte: 2.74 * pj,
            mram_read_byte: 50.0 * pj,
            mram_write_byte: 500.0 * pj,
            logic_cycle: 30.4 * pj,
            udma_cycle: 0.37 * pj,
            l2_cycle: 9.8 * pj,
            l1_cycle: 9.8 * pj,
            dma_cycle: 6.8 * pj,
            leakage: vec![
                LeakagePoint {
                    v_logic: 0.4,
                    v_mem: 0.5,
                    watts: Components {
                        wuc: 0.832 * uw,
                        l2: 36.5 * uw,
                        l2_udma: 3.27 * uw,
                        l1: 16.2 * uw,
                        logic: 2.0 * uw,
                        dma: 1.4 * uw,
                        mram_periphery: 0.4 * uw,
                        mram_array: 0.0,
                    },
                },
                LeakagePoint {
                    v_logic: 0.8,
                    v_mem: 0.8,
                    watts: Components {
                        wuc: 0.832 * uw,
                        l2: 93.4 * uw,
                        l2_udma: 8.4 * uw,
                        l1: 41.5 * uw,
                        logic: 8.0 * uw,
                        dma: 5.6 * uw,
                        mram_periphery: 0.4 * uw,
                        mram_array: 0.0,
                    },
                },
            ],
            voltage_exponent: 2.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("l2", self.l2),
            ("l1_weight", self.l1_weight),
            ("l1_act", self.l1_act),
            ("l0", self.l0),
            ("index_mem", self.index_mem),
            ("instr_mem", self.instr_mem),
            ("mac8", self.mac8),
            ("mac4", self.mac4),
            ("mac2", self.mac2),
            ("dma_byte", self.dma_byte),
            ("mram_read_byte", self.mram_read_byte),
            ("mram_write_byte", self.mram_write_byte),
            ("logic_cycle", self.logic_cycle),
            ("udma_cycle", self.udma_cycle),
            ("l2_cycle", self.l2_cycle),
            ("l1_cycle", self.l1_cycle),
            ("dma_cycle", self.dma_cycle),
            ("voltage_exponent", self.voltage_exponent),
        ];
        if let Some((n, v)) = scalars.iter().find(|(_, v)| !v.is_finite() || *v < 0.0) {
            return Err(FlexError::Range(format!("energy parameter {n} = {v}")));
        }
        if self.leakage.is_empty() {
            return Err(FlexError::MissingParam("leakage table".into()));
        }
        if self.leakage.iter().flat_map(|p| p.watts.values()).any(|v| !v.is_finite() || v < 0.0) {
            return Err(FlexError::Range("negative leakage".into()));
        }
        Ok(())
    }

    /// Component leakage at a rail setting.
    pub fn leakage_at(&self, op: &OperatingPoint) -> Components {
        let mut pts = self.leakage.clone();
        pts.sort_by(|a, b| a.v_logic.total_cmp(&b.v_logic));
        let v = op.v_logic;
        match pts.iter().position(|p| p.v_logic >= v) {
            None => pts[pts.len() - 1].watts,
            Some(0) => pts[0].watts,
            Some(i) => {
                let (a, b) = (&pts[i - 1], &pts[i]);
                let t = (v - a.v_logic) / (b.v_logic - a.v_logic);
                a.watts.zip(&b.watts, |x, y| x + t * (y - x))
            }
        }
    }

    fn scale(&self, v: f64) -> f64 {
        (v / V_REF).powf(self.voltage_exponent)
    }

    fn mac_energy(&self, bits: u32) -> f64 {
        match bits {
            2 => self.mac2,
            4 => self.mac4,
            _ => self.mac8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub power_w: f64,
    pub breakdown: Components,
    pub leakage_w: f64,
    pub seconds: f64,
    pub energy_j: f64,
    /// Throughput counting every nominal MAC as two ops.
    pub gops: f64,
    pub gops_effective: f64,
    pub tops_per_w: f64,
    pub tops_per_w_effective: f64,
}

/// Dynamic energy per component for one run, at the given rails.
fn dynamic(report: &CycleReport, op: &OperatingPoint, p: &EnergyParams) -> Components {
    let a = &report.accesses;
    let (sl, sm) = (p.scale(op.v_logic), p.scale(op.v_mem));
    let cycles = report.total_cycles as f64;
    let macs: f64 = if report.layers.is_empty() {
        report.macs_effective as f64 * p.mac8
    } else {
        report
            .layers
            .iter()
            .map(|l| l.macs_effective as f64 * p.mac_energy(l.precision.bits()))
            .sum()
    };
    Components {
        l2: (a.l2 as f64 * p.l2 + cycles * p.l2_cycle) * sm,
        l2_udma: cycles * p.udma_cycle * sm,
        l1: (a.l1_weight as f64 * p.l1_weight
            + a.l1_act as f64 * p.l1_act
            + a.index_mem as f64 * p.index_mem
            + a.instr_mem as f64 * p.instr_mem
            + cycles * p.l1_cycle)
            * sm,
        logic: (macs + a.l0 as f64 * p.l0 + cycles * p.logic_cycle) * sl,
        dma: (a.l2 as f64 * 8.0 * p.dma_byte + cycles * p.dma_cycle) * sl,
        ..Default::default()
    }
}

pub fn estimate(report: &CycleReport, op: &OperatingPoint, params: &EnergyParams) -> Result<EnergyReport> {
    params.validate()?;
    if !(op.core_freq > 0.0) {
        return Err(FlexError::Range(format!("core frequency {}", op.core_freq)));
    }
    let leak = params.leakage_at(op);
    let seconds = report.total_cycles as f64 / op.core_freq;
    let dyn_e = dynamic(report, op, params);
    let breakdown = if seconds > 0.0 {
        leak.zip(&dyn_e, |l, d| l + d / seconds)
    } else {
        leak
    };
    let power_w = breakdown.sum();
    let energy_j = power_w * seconds;
    let (gops, gops_effective) = if seconds > 0.0 {
        (
            2.0 * report.macs_nominal as f64 / seconds / 1e9,
            2.0 * report.macs_effective as f64 / seconds / 1e9,
        )
    } else {
        (0.0, 0.0)
    };
    Ok(EnergyReport {
        power_w,
        breakdown,
        leakage_w: leak.sum(),
        seconds,
        energy_j,
        gops,
        gops_effective,
        tops_per_w: gops / power_w / 1e3,
        tops_per_w_effective: gops_effective / power_w / 1e3,
    })
}

/// Power of the SoC in active mode with only the host core running:
/// leakage plus the core's and L2's per-cycle clocking, weighted by
/// `activity` (1.0 for a compute-bound loop). The accelerator is clock gated.
pub fn host_power(op: &OperatingPoint, params: &EnergyParams, activity: f64) -> Result<f64> {
    params.validate()?;
    if !(activity >= 0.0) || !(op.core_freq > 0.0) {
        return Err(FlexError::Range(format!("host activity {activity} at {} Hz", op.core_freq)));
    }
    let (sl, sm) = (params.scale(op.v_logic), params.scale(op.v_mem));
    let per_cycle = params.logic_cycle * sl + (params.l2_cycle + params.udma_cycle) * sm;
    Ok(params.leakage_at(op).sum() + activity * per_cycle * op.core_freq)
}

/// Parameter groups the calibration may scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    Mac,
    LogicCycle,
    L1,
    L2,
    Udma,
    Leakage,
}

impl FreeParam {
    pub const ALL: [FreeParam; 6] = [
        FreeParam::Mac,
        FreeParam::LogicCycle,
        FreeParam::L1,
        FreeParam::L2,
        FreeParam::Udma,
        FreeParam::Leakage,
    ];

    fn apply(self, p: &mut EnergyParams, s: f64) {
        match self {
            FreeParam::Mac => {
                p.mac8 *= s;
                p.mac4 *= s;
                p.mac2 *= s;
            }
            FreeParam::LogicCycle => {
                p.logic_cycle *= s;
                p.l0 *= s;
            }
            FreeParam::L1 => {
                p.l1_weight *= s;
                p.l1_act *= s;
                p.index_mem *= s;
                p.instr_mem *= s;
                p.l1_cycle *= s;
            }
            FreeParam::L2 => {
                p.l2 *= s;
                p.dma_byte *= s;
                p.l2_cycle *= s;
                p.dma_cycle *= s;
            }
            FreeParam::Udma => p.udma_cycle *= s,
            FreeParam::Leakage => {
                for l in &mut p.leakage {
                    l.watts = l.watts.scaled(s);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub name: String,
    pub report: CycleReport,
    pub op: OperatingPoint,
    pub power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: EnergyParams,
    /// Fitted multiplier per free group.
    pub scales: Vec<(FreeParam, f64)>,
    /// ln(model) - ln(measured) per target.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl Calibration {
    pub fn rms(&self) -> f64 {
        if self.residuals.is_empty() {
            return 0.0;
        }
        (self.residuals.iter().map(|r| r * r).sum::<f64>() / self.residuals.len() as f64).sqrt()
    }
}

/// Calibrated scales stay within this factor of the prior in either
/// direction, so groups the targets cannot distinguish do not run off to
/// zero or infinity.
pub const SCALE_BOUND: f64 = 10.0;

fn scale_of(z: f64) -> f64 {
    (SCALE_BOUND.ln() * z.tanh()).exp()
}

fn with_scales(base: &EnergyParams, free: &[FreeParam], x: &DVector<f64>) -> EnergyParams {
    let mut p = base.clone();
    for (f, &z) in free.iter().zip(x.iter()) {
        f.apply(&mut p, scale_of(z));
    }
    p
}

fn residuals(base: &EnergyParams, free: &[FreeParam], targets: &[CalibrationTarget], x: &DVector<f64>) -> Result<DVector<f64>> {
    let p = with_scales(base, free, x);
    let mut r = DVector::zeros(targets.len());
    for (i, t) in targets.iter().enumerate() {
        let e = estimate(&t.report, &t.op, &p)?;
        r[i] = e.power_w.ln() - t.power_w.ln();
    }
    Ok(r)
}

/// Least-squares fit of group scales in log-power space
/// (Levenberg-Marquardt with a numeric Jacobian).
pub fn calibrate(base: &EnergyParams, free: &[FreeParam], targets: &[CalibrationTarget]) -> Result<Calibration> {
    if targets.len() < free.len() || free.is_empty() {
        return Err(FlexError::Underdetermined {
            targets: targets.len(),
            params: free.len(),
        });
    }
    if let Some(t) = targets.iter().find(|t| !(t.power_w > 0.0)) {
        return Err(FlexError::Range(format!("target {} has power {}", t.name, t.power_w)));
    }
    let n = free.len();
    let mut x = DVector::zeros(n);
    let mut r = residuals(base, free, targets, &x)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 0..200 {
        iterations = it + 1;
        let h = 1e-6;
        let mut j = DMatrix::zeros(targets.len(), n);
        for k in 0..n {
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let col = (residuals(base, free, targets, &xp)? - residuals(base, free, targets, &xm)?) / (2.0 * h);
            j.set_column(k, &col);
        }
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        if g.amax() < 1e-12 {
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-9);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let xn = &x + &step;
            let rn = residuals(base, free, targets, &xn)?;
            let cn = rn.norm_squared();
            if cn < cost {
                let done = (cost - cn) < 1e-15 * (1.0 + cost) || step.amax() < 1e-10;
                x = xn;
                r = rn;
                cost = cn;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if done {
                    return Ok(finish(base, free, x, r, iterations));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(finish(base, free, x, r, iterations))
}

fn finish(base: &EnergyParams, free: &[FreeParam], x: DVector<f64>, r: DVector<f64>, iterations: usize) -> Calibration {
    Calibration {
        params: with_scales(base, free, &x),
        scales: free.iter().zip(x.iter()).map(|(&f, &z)| (f, scale_of(z))).collect(),
        residuals: r.iter().copied().collect(),
        iterations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub op: OperatingPoint,
    pub power_w: f64,
    pub gops: f64,
    pub tops_per_w: f64,
    pub tops_per_w_effective: f64,
}

pub fn sweep(points: &[OperatingPoint], report: &CycleReport, params: &EnergyParams) -> Result<Vec<SweepRow>> {
    points
        .iter()
        .map(|op| {
            let e = estimate(report, op, params)?;
            Ok(SweepRow {
                op: *op,
                power_w: e.power_w,
                gops: e.gops,
                tops_per_w: e.tops_per_w,
                tops_per_w_effective: e.tops_per_w_effective,
            })
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "core_freq_hz,v_logic,v_mem,power_w,gops,tops_per_w,tops_per_w_effective")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.6e},{:.6},{:.6},{:.6}",
            r.op.core_freq, r.op.v_logic, r.op.v_mem, r.power_w, r.gops, r.tops_per_w, r.tops_per_w_effective
        )?;
    }
    Ok(())
}
