//! Python bindings. Reports cross the boundary as plain dicts built from
//! their JSON form.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use flexml::accel_sim::{simulate, CycleReport, SimKnobs};
use flexml::bench;
use flexml::compiler::{link_program, MemConfig, MemoryImage};
use flexml::energy_model::{estimate, EnergyParams, OperatingPoint};
use flexml::ir::requant::{NlFunction, NlfgTable};
use flexml::ir::workload::Workload;
use flexml::oracle::{svm_decision, GoldenBundle};
use flexml::scenario::{self, run_scenario, ScenarioEnv, ScenarioScript};
use flexml::wuc::{self, DomainMap, PowerMode, WucParams};
use flexml::FlexError;

pyo3::create_exception!(flexml_py, FlexmlError, pyo3::exceptions::PyException);

fn err(e: FlexError) -> PyErr {
    FlexmlError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn mode(name: &str) -> PyResult<PowerMode> {
    serde_json::from_value(serde_json::Value::String(name.to_uppercase()))
        .map_err(|_| PyValueError::new_err(format!("unknown power mode `{name}`")))
}

fn op_point(freq: Option<f64>) -> OperatingPoint {
    match freq {
        Some(f) if f >= 150e6 => OperatingPoint::fast(),
        Some(f) => OperatingPoint::standard_points()
            .into_iter()
            .find(|p| p.core_freq >= f)
            .map(|p| OperatingPoint::new(f, p.v_logic, p.v_mem))
            .unwrap_or_else(OperatingPoint::fast),
        None => OperatingPoint::efficient(),
    }
}

fn fitted() -> PyResult<EnergyParams> {
    Ok(bench::fit_energy(&EnergyParams::default()).map_err(err)?.params)
}

fn timing(name: &str) -> PyResult<CycleReport> {
    let c = bench::case(name).ok_or_else(|| PyValueError::new_err(format!("unknown benchmark `{name}`")))?;
    bench::timing_report(&c).map_err(err)
}

/// Names of the benchmark cases.
#[pyfunction]
fn bench_names() -> Vec<&'static str> {
    bench::suite().iter().map(|c| c.name).collect()
}

/// Cycle report of a benchmark case (timing model).
#[pyfunction]
fn bench_cycles<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &timing(name)?)
}

/// Power estimate of a benchmark case with the fitted energy model.
#[pyfunction]
#[pyo3(signature = (name, core_freq=None))]
fn bench_energy<'py>(py: Python<'py>, name: &str, core_freq: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let e = estimate(&timing(name)?, &op_point(core_freq), &fitted()?).map_err(err)?;
    to_py(py, &e)
}

/// Compiles a workload JSON into an image and a golden bundle.
#[pyfunction]
#[pyo3(signature = (workload, image, bundle=None))]
fn compile(workload: &str, image: &str, bundle: Option<&str>) -> PyResult<()> {
    let w = Workload::load(workload).map_err(err)?;
    let (img, golden) = link_program(&w, &MemConfig::default()).map_err(err)?;
    img.save(image).map_err(err)?;
    if let Some(b) = bundle {
        golden.save(b).map_err(err)?;
    }
    Ok(())
}

/// Runs an image; returns the cycle report and the output tensors as lists.
#[pyfunction]
#[pyo3(signature = (image, functional=true))]
fn simulate_image<'py>(py: Python<'py>, image: &str, functional: bool) -> PyResult<Bound<'py, PyDict>> {
    let img = MemoryImage::load(image).map_err(err)?;
    let knobs = SimKnobs {
        functional,
        ..Default::default()
    };
    let r = simulate(&img, &MemConfig::default(), &knobs).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("report", to_py(py, &r.report)?)?;
    let outs = PyDict::new(py);
    for (name, t) in &r.outputs {
        outs.set_item(name, t.data().to_vec())?;
    }
    d.set_item("outputs", outs)?;
    Ok(d)
}

/// True when the image reproduces every tensor of the bundle.
#[pyfunction]
fn verify(image: &str, bundle: &str) -> PyResult<bool> {
    let img = MemoryImage::load(image).map_err(err)?;
    let golden = GoldenBundle::load(bundle).map_err(err)?;
    let r = simulate(&img, &MemConfig::default(), &SimKnobs::default()).map_err(err)?;
    Ok(r.outputs.len() == golden.expected_outputs.len()
        && r.outputs.iter().zip(&golden.expected_outputs).all(|((_, a), b)| *a == b.0))
}

#[pyfunction]
fn wake_latency(aon_freq: f64) -> f64 {
    wuc::wake_latency(aon_freq)
}

#[pyfunction]
#[pyo3(signature = (mode_name, aon_freq=33e3))]
fn sleep_power(mode_name: &str, aon_freq: f64) -> PyResult<f64> {
    wuc::sleep_power(mode(mode_name)?, aon_freq, &WucParams::default(), &DomainMap::default()).map_err(err)
}

#[pyfunction]
fn duty_cycle_average(p_active: f64, p_sleep: f64, duty: f64) -> PyResult<f64> {
    scenario::duty_cycle_average(p_active, p_sleep, duty).map_err(err)
}

/// Runs a preset (`kws`, `machine-monitoring`) or a script given as JSON
/// text; returns the summary and the trace points.
#[pyfunction]
fn run_scenario_script<'py>(py: Python<'py>, script: &str) -> PyResult<Bound<'py, PyAny>> {
    let s: ScenarioScript = match script {
        "kws" => scenario::preset_kws(),
        "machine-monitoring" => scenario::preset_machine_monitoring(),
        text => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
    };
    let mut env = ScenarioEnv::new(Some(fitted()?));
    env.load_bench_programs(&s).map_err(err)?;
    let tr = run_scenario(&s, &env).map_err(err)?;
    to_py(py, &tr)
}

/// Piecewise-linear activation on one Q4.4 code.
#[pyfunction]
fn nlfg(code: i32, function: &str) -> PyResult<i32> {
    let f = match function {
        "tanh" => NlFunction::Tanh,
        "sigmoid" => NlFunction::Sigmoid,
        _ => return Err(PyValueError::new_err(format!("unknown function `{function}`"))),
    };
    Ok(NlfgTable::get(f).eval(code))
}

#[pyfunction]
#[pyo3(signature = (norms, alphas, sigma, bias, norm_squared=false))]
fn svm_decision_value(norms: Vec<i32>, alphas: Vec<f64>, sigma: f64, bias: f64, norm_squared: bool) -> PyResult<f64> {
    if norms.len() != alphas.len() {
        return Err(PyValueError::new_err("norms and alphas differ in length"));
    }
    Ok(svm_decision(&norms, &alphas, sigma, bias, norm_squared))
}

/// The wake-up controller state machine.
#[pyclass(name = "Wuc")]
struct PyWuc {
    inner: wuc::Wuc,
}

#[pymethods]
impl PyWuc {
    #[new]
    #[pyo3(signature = (aon_freq=33e3, core_freq=5e6))]
    fn new(aon_freq: f64, core_freq: f64) -> Self {
        Self {
            inner: wuc::Wuc::new(DomainMap::default(), aon_freq, core_freq),
        }
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[getter]
    fn now(&self) -> u64 {
        self.inner.now
    }

    /// Returns the number of events emitted.
    #[pyo3(signature = (target, rtc_deadline_ms=None))]
    fn request_mode(&mut self, target: &str, rtc_deadline_ms: Option<f64>) -> PyResult<usize> {
        Ok(self.inner.request_mode(mode(target)?, rtc_deadline_ms).map_err(err)?.len())
    }

    fn log<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.log)
    }

    fn sequencing_ok(&self) -> bool {
        wuc::check_sequencing(&self.inner.log).is_ok()
    }
}

#[pymodule]
fn flexml_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FlexmlError", m.py().get_type::<FlexmlError>())?;
    m.add_class::<PyWuc>()?;
    m.add_function(wrap_pyfunction!(bench_names, m)?)?;
    m.add_function(wrap_pyfunction!(bench_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(bench_energy, m)?)?;
    m.add_function(wrap_pyfunction!(compile, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_image, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(wake_latency, m)?)?;
    m.add_function(wrap_pyfunction!(sleep_power, m)?)?;
    m.add_function(wrap_pyfunction!(duty_cycle_average, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario_script, m)?)?;
    m.add_function(wrap_pyfunction!(nlfg, m)?)?;
    m.add_function(wrap_pyfunction!(svm_decision_value, m)?)?;
    Ok(())
}
