//! Command implementations shared by the `flexsim` and `flexc` binaries.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use flexml::accel_sim::{simulate, CycleReport, SimKnobs};
use flexml::bench::{self, BenchClass};
use flexml::compiler::{link_program, MemConfig, MemoryImage};
use flexml::energy_model::{
    calibrate, estimate, sweep, write_sweep_csv, Calibration, CalibrationTarget, EnergyParams, EnergyReport, FreeParam,
    OperatingPoint,
};
use flexml::ir::tensor::QuantTensor;
use flexml::ir::workload::Workload;
use flexml::oracle::GoldenBundle;
use flexml::scenario::{self, run_scenario, ScenarioEnv, ScenarioScript};
use flexml::wuc::{DomainMap, WucParams};
use flexml::{fnv1a64, FlexError};
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_COMPILE: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::new(EXIT_IO, format!("{}: {e}", path.display()))
    }

    fn config(e: impl fmt::Display) -> Self {
        Self::new(EXIT_CONFIG, format!("config: {e}"))
    }
}

impl From<FlexError> for CliError {
    fn from(e: FlexError) -> Self {
        use FlexError::*;
        let code = match &e {
            Io(_) | Json(_) | Format(_) | Decode(_) => EXIT_IO,
            MissingParam(_) | Range(_) | Uncalibrated(_) | Underdetermined { .. } | IllegalTransition { .. } => {
                EXIT_CONFIG
            }
            _ => EXIT_COMPILE,
        };
        Self::new(code, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runtime configuration; every field falls back to its default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub mem: MemConfig,
    pub knobs: SimKnobs,
    /// Energy parameters; when absent the built-in table fit is used.
    pub energy: Option<EnergyParams>,
    pub op_point: Option<OperatingPoint>,
    pub wuc: WucParams,
    pub domains: DomainMap,
}

impl Config {
    /// `FLEXSIM_CONFIG` takes precedence over `--config`.
    pub fn resolve(flag: Option<&Path>) -> CliResult<(Self, Option<PathBuf>)> {
        let path = std::env::var_os("FLEXSIM_CONFIG")
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| flag.map(Path::to_path_buf));
        let Some(path) = path else {
            return Ok((Self::default(), None));
        };
        let text = fs::read_to_string(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if let Some(p) = &cfg.energy {
            p.validate().map_err(CliError::config)?;
        }
        cfg.wuc.validate().map_err(CliError::config)?;
        Ok((cfg, Some(path)))
    }

    fn op(&self) -> OperatingPoint {
        self.op_point.unwrap_or_else(OperatingPoint::efficient)
    }

    /// Energy parameters from the config or, failing that, fitted to the
    /// synthetic benchmark rows.
    pub fn energy_params(&self) -> CliResult<EnergyParams> {
        match &self.energy {
            Some(p) => Ok(p.clone()),
            None => Ok(bench::fit_energy(&EnergyParams::default())?.params),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub fnv1a64: String,
}

/// Provenance of a report. Everything but `timestamp_unix` is a pure
/// function of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub config: Option<InputDigest>,
    pub knobs: SimKnobs,
    pub mem: MemConfig,
    pub op_point: OperatingPoint,
    pub timestamp_unix: u64,
}

fn digest_file(path: &Path) -> CliResult<InputDigest> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        fnv1a64: format!("{:016x}", fnv1a64(&bytes)),
    })
}

fn manifest(command: &str, inputs: &[&Path], cfg: &Config, cfg_path: Option<&Path>) -> CliResult<RunManifest> {
    Ok(RunManifest {
        tool: "flexsim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        inputs: inputs.iter().map(|p| digest_file(p)).collect::<CliResult<_>>()?,
        config: cfg_path.map(digest_file).transpose()?,
        knobs: cfg.knobs,
        mem: cfg.mem,
        op_point: cfg.op(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "flexsim", version, about = "Simulator, compiler and power model for the FlexML accelerator")]
pub struct FlexsimArgs {
    /// JSON config file (overridden by FLEXSIM_CONFIG)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a workload JSON into a memory image
    Compile {
        workload: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the golden bundle
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Run an image and report cycles, energy and output digests
    Simulate {
        image: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Timing model only; skips computing values
        #[arg(long)]
        timing_only: bool,
    },
    /// Check an image's outputs against a golden bundle
    Verify { image: PathBuf, bundle: PathBuf },
    /// Power and throughput table for the benchmark suite
    Bench {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Power and efficiency across operating points
    Sweep {
        /// Image to sweep; defaults to the CNN3x3 INT8 benchmark
        image: Option<PathBuf>,
        #[arg(long, conflicts_with = "image")]
        bench: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a scenario script, or a preset (`kws`, `machine-monitoring`)
    Scenario {
        script: String,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Duty cycle for the machine-monitoring preset
        #[arg(long)]
        duty: Option<f64>,
    },
    /// Fit energy parameters to measured powers
    Calibrate {
        /// JSON list of {"program", "power_uw"}; defaults to the synthetic rows
        #[arg(long)]
        targets: Option<PathBuf>,
        /// Parameter groups to fit
        #[arg(long, value_delimiter = ',', default_value = "mac,logic_cycle,l1,l2")]
        free: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    All,
    Synthetic,
    Application,
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).map_err(|e| CliError::new(EXIT_IO, e.to_string()))
        }
    }
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("reports serialize");
    s.push(b'\n');
    s
}

fn load_image(path: &Path) -> CliResult<MemoryImage> {
    if !path.exists() {
        return Err(CliError::io(path, "no such file"));
    }
    Ok(MemoryImage::load(path)?)
}

pub fn compile(workload: &Path, output: &Path, bundle: Option<&Path>, mem: &MemConfig) -> CliResult<()> {
    if !workload.exists() {
        return Err(CliError::io(workload, "no such file"));
    }
    let w = Workload::load(workload)?;
    let (img, golden) = link_program(&w, mem)?;
    img.save(output).map_err(|e| CliError::io(output, e))?;
    if let Some(b) = bundle {
        golden.save(b).map_err(|e| CliError::io(b, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDigest {
    pub name: String,
    pub shape: Vec<usize>,
    pub fnv1a64: String,
}

fn tensor_digest(name: &str, t: &QuantTensor) -> TensorDigest {
    TensorDigest {
        name: name.into(),
        shape: t.shape().to_vec(),
        fnv1a64: format!("{:016x}", fnv1a64(&t.to_bytes())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub manifest: RunManifest,
    pub cycles: CycleReport,
    pub energy: EnergyReport,
    pub outputs: Vec<TensorDigest>,
}

pub fn simulate_image(image: &Path, timing_only: bool, cfg: &Config, cfg_path: Option<&Path>) -> CliResult<SimulateReport> {
    let img = load_image(image)?;
    let mut knobs = cfg.knobs;
    if timing_only {
        knobs.functional = false;
    }
    let res = simulate(&img, &cfg.mem, &knobs)?;
    let energy = estimate(&res.report, &cfg.op(), &cfg.energy_params()?)?;
    let outputs = if knobs.functional {
        res.outputs.iter().map(|(n, t)| tensor_digest(n, t)).collect()
    } else {
        Vec::new()
    };
    let mut m = manifest("simulate", &[image], cfg, cfg_path)?;
    m.knobs = knobs;
    Ok(SimulateReport {
        manifest: m,
        cycles: res.report,
        energy,
        outputs,
    })
}

fn layer_csv(r: &CycleReport) -> Vec<u8> {
    let mut s = String::from("layer,kind,precision,tiles,cycles,compute,dma_in,writeback,stall,macs_nominal,macs_effective\n");
    for l in &r.layers {
        s += &format!(
            "{},{:?},{},{},{},{},{},{},{},{},{}\n",
            l.index,
            l.kind,
            l.precision,
            l.tiles,
            l.cycles,
            l.phases.compute,
            l.phases.dma_in,
            l.phases.writeback,
            l.phases.stall,
            l.macs_nominal,
            l.macs_effective
        );
    }
    s.into_bytes()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub tensor: usize,
    pub name: String,
    /// Flat element index; `None` when the shapes differ.
    pub index: Option<usize>,
    pub got: Option<i32>,
    pub want: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub manifest: RunManifest,
    pub matched: bool,
    pub tensors: usize,
    pub mismatching_elements: usize,
    /// First ten mismatches.
    pub mismatches: Vec<Mismatch>,
}

pub fn verify(image: &Path, bundle: &Path, cfg: &Config, cfg_path: Option<&Path>) -> CliResult<VerifyReport> {
    let img = load_image(image)?;
    if !bundle.exists() {
        return Err(CliError::io(bundle, "no such file"));
    }
    let golden = GoldenBundle::load(bundle)?;
    let mut knobs = cfg.knobs;
    knobs.functional = true;
    let res = simulate(&img, &cfg.mem, &knobs)?;
    let mut mismatches = Vec::new();
    let mut count = 0;
    let n = res.outputs.len().max(golden.expected_outputs.len());
    for i in 0..n {
        let got = res.outputs.get(i);
        let want = golden.expected_outputs.get(i).map(|b| &b.0);
        let name = got.map(|g| g.0.clone()).unwrap_or_else(|| format!("out{i}"));
        match (got, want) {
            (Some((_, g)), Some(w)) if g.shape() == w.shape() => {
                for (j, (a, b)) in g.data().iter().zip(w.data()).enumerate() {
                    if a != b {
                        count += 1;
                        if mismatches.len() < 10 {
                            mismatches.push(Mismatch {
                                tensor: i,
                                name: name.clone(),
                                index: Some(j),
                                got: Some(*a),
                                want: Some(*b),
                            });
                        }
                    }
                }
            }
            _ => {
                count += 1;
                if mismatches.len() < 10 {
                    mismatches.push(Mismatch {
                        tensor: i,
                        name,
                        index: None,
                        got: None,
                        want: None,
                    });
                }
            }
        }
    }
    Ok(VerifyReport {
        manifest: manifest("verify", &[image, bundle], cfg, cfg_path)?,
        matched: count == 0,
        tensors: n,
        mismatching_elements: count,
        mismatches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub workload: String,
    pub class: BenchClass,
    pub cycles: u64,
    pub power_uw: f64,
    pub gops: f64,
    pub tops_per_w: f64,
    pub tops_per_w_effective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub manifest: RunManifest,
    pub rows: Vec<BenchRow>,
}

pub fn bench_suite(suite: Suite, cfg: &Config, cfg_path: Option<&Path>) -> CliResult<BenchReport> {
    let params = cfg.energy_params()?;
    let op = cfg.op();
    let knobs = SimKnobs {
        functional: false,
        ..cfg.knobs
    };
    let mut rows = Vec::new();
    for c in bench::suite() {
        let keep = match suite {
            Suite::All => true,
            Suite::Synthetic => c.class == BenchClass::Synthetic,
            Suite::Application => c.class == BenchClass::Application,
        };
        if !keep {
            continue;
        }
        let (img, _) = link_program(&c.workload(1), &cfg.mem)?;
        let r = simulate(&img, &cfg.mem, &knobs)?.report;
        let e = estimate(&r, &op, &params)?;
        rows.push(BenchRow {
            workload: c.name.into(),
            class: c.class,
            cycles: r.total_cycles,
            power_uw: e.power_w * 1e6,
            gops: e.gops,
            tops_per_w: e.tops_per_w,
            tops_per_w_effective: e.tops_per_w_effective,
        });
    }
    let mut m = manifest("bench", &[], cfg, cfg_path)?;
    m.knobs = knobs;
    Ok(BenchReport { manifest: m, rows })
}

fn bench_csv(rows: &[BenchRow]) -> Vec<u8> {
    let mut s = String::from("workload,class,cycles,power_uw,gops,tops_per_w,tops_per_w_effective\n");
    for r in rows {
        s += &format!(
            "{},{:?},{},{:.3},{:.5},{:.5},{:.5}\n",
            r.workload, r.class, r.cycles, r.power_uw, r.gops, r.tops_per_w, r.tops_per_w_effective
        );
    }
    s.into_bytes()
}

fn report_for(image: Option<&Path>, bench_name: Option<&str>, cfg: &Config) -> CliResult<CycleReport> {
    let knobs = SimKnobs {
        functional: false,
        ..cfg.knobs
    };
    match image {
        Some(p) => Ok(simulate(&load_image(p)?, &cfg.mem, &knobs)?.report),
        None => {
            let name = bench_name.unwrap_or("cnn-int8");
            let c = bench::case(name).ok_or_else(|| CliError::config(format!("unknown benchmark `{name}`")))?;
            let (img, _) = link_program(&c.workload(1), &cfg.mem)?;
            Ok(simulate(&img, &cfg.mem, &knobs)?.report)
        }
    }
}

fn load_script(arg: &str, duty: Option<f64>) -> CliResult<ScenarioScript> {
    match arg {
        "kws" => Ok(scenario::preset_kws()),
        "machine-monitoring" => Ok(scenario::preset_machine_monitoring_with(duty.unwrap_or(0.05))),
        path => {
            let p = Path::new(path);
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::io(p, e))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub manifest: RunManifest,
    pub summary: scenario::TraceSummary,
}

#[derive(Debug, Deserialize)]
struct TargetRecord {
    program: String,
    power_uw: f64,
    #[serde(default)]
    op_point: Option<OperatingPoint>,
}

fn parse_free(names: &[String]) -> CliResult<Vec<FreeParam>> {
    names
        .iter()
        .map(|n| {
            serde_json::from_value(serde_json::Value::String(n.trim().to_string()))
                .map_err(|_| CliError::config(format!("unknown parameter group `{n}`")))
        })
        .collect()
}

pub fn calibrate_targets(targets: Option<&Path>, free: &[String], cfg: &Config) -> CliResult<Calibration> {
    let records: Vec<TargetRecord> = match targets {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::io(p, e))?
        }
        None => bench::FIT_ROWS
            .iter()
            .map(|&(n, w)| TargetRecord {
                program: n.into(),
                power_uw: w * 1e6,
                op_point: None,
            })
            .collect(),
    };
    let targets = records
        .iter()
        .map(|r| {
            Ok(CalibrationTarget {
                name: r.program.clone(),
                report: report_for(None, Some(&r.program), cfg)?,
                op: r.op_point.unwrap_or_else(|| cfg.op()),
                power_w: r.power_uw * 1e-6,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let base = cfg.energy.clone().unwrap_or_default();
    Ok(calibrate(&base, &parse_free(free)?, &targets)?)
}

fn run(args: FlexsimArgs) -> CliResult<i32> {
    let (cfg, cfg_path) = Config::resolve(args.config.as_deref())?;
    let cp = cfg_path.as_deref();
    match args.cmd {
        Command::Compile {
            workload,
            output,
            bundle,
        } => {
            compile(&workload, &output, bundle.as_deref(), &cfg.mem)?;
        }
        Command::Simulate {
            image,
            output,
            timing_only,
        } => {
            let r = simulate_image(&image, timing_only, &cfg, cp)?;
            let bytes = match args.format {
                Format::Json => json(&r),
                Format::Csv => layer_csv(&r.cycles),
            };
            write_out(output.as_deref(), &bytes)?;
        }
        Command::Verify { image, bundle } => {
            let r = verify(&image, &bundle, &cfg, cp)?;
            let bytes = match args.format {
                Format::Json => json(&r),
                Format::Csv => {
                    let mut s = String::from("tensor,name,index,got,want\n");
                    for m in &r.mismatches {
                        let f = |v: Option<i32>| v.map(|x| x.to_string()).unwrap_or_default();
                        s += &format!(
                            "{},{},{},{},{}\n",
                            m.tensor,
                            m.name,
                            m.index.map(|x| x.to_string()).unwrap_or_default(),
                            f(m.got),
                            f(m.want)
                        );
                    }
                    s.into_bytes()
                }
            };
            write_out(None, &bytes)?;
            return Ok(if r.matched { EXIT_OK } else { EXIT_MISMATCH });
        }
        Command::Bench { suite, output } => {
            let r = bench_suite(suite, &cfg, cp)?;
            let bytes = match args.format {
                Format::Json => json(&r),
                Format::Csv => bench_csv(&r.rows),
            };
            write_out(output.as_deref(), &bytes)?;
        }
        Command::Sweep { image, bench, output } => {
            let report = report_for(image.as_deref(), bench.as_deref(), &cfg)?;
            let rows = sweep(&OperatingPoint::standard_points(), &report, &cfg.energy_params()?)?;
            let bytes = match args.format {
                Format::Json => {
                    let inputs: Vec<&Path> = image.as_deref().into_iter().collect();
                    json(&serde_json::json!({
                        "manifest": manifest("sweep", &inputs, &cfg, cp)?,
                        "rows": rows,
                    }))
                }
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_sweep_csv(&rows, &mut buf)?;
                    buf
                }
            };
            write_out(output.as_deref(), &bytes)?;
        }
        Command::Scenario {
            script,
            trace,
            summary,
            duty,
        } => {
            let s = load_script(&script, duty)?;
            let mut env = ScenarioEnv::new(Some(cfg.energy_params()?));
            env.wuc = cfg.wuc.clone();
            env.map = cfg.domains.clone();
            env.load_bench_programs(&s)?;
            let tr = run_scenario(&s, &env)?;
            if let Some(p) = &trace {
                let mut buf = Vec::new();
                tr.write_csv(&mut buf)?;
                fs::write(p, buf).map_err(|e| CliError::io(p, e))?;
            }
            let inputs: Vec<&Path> = [Path::new(&script)].into_iter().filter(|p| p.exists()).collect();
            let report = ScenarioReport {
                manifest: manifest("scenario", &inputs, &cfg, cp)?,
                summary: tr.summary,
            };
            write_out(summary.as_deref(), &json(&report))?;
        }
        Command::Calibrate { targets, free, output } => {
            let c = calibrate_targets(targets.as_deref(), &free, &cfg)?;
            write_out(output.as_deref(), &json(&c))?;
        }
    }
    Ok(EXIT_OK)
}

fn finish(r: CliResult<i32>, tool: &str) -> i32 {
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{tool}: {e}");
            e.code
        }
    }
}

/// Entry point of `flexsim`; returns the process exit code.
pub fn flexsim_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match FlexsimArgs::try_parse_from(args) {
        Ok(a) => finish(run(a), "flexsim"),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "flexc", version, about = "Compile a workload into a FlexML memory image")]
pub struct FlexcArgs {
    #[command(subcommand)]
    pub cmd: FlexcCommand,
}

#[derive(Debug, Subcommand)]
pub enum FlexcCommand {
    Compile {
        workload: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// JSON config file; only the `mem` section is used
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

pub fn flexc_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match FlexcArgs::try_parse_from(args) {
        Ok(FlexcArgs {
            cmd:
                FlexcCommand::Compile {
                    workload,
                    output,
                    bundle,
                    config,
                },
        }) => finish(
            Config::resolve(config.as_deref())
                .and_then(|(cfg, _)| compile(&workload, &output, bundle.as_deref(), &cfg.mem))
                .map(|_| EXIT_OK),
            "flexc",
        ),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
