//! Python bindings: `import nsp_sim`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use nsp_core::config::{parse_scenario, write_scenario};
use nsp_core::energy::{system_power, EnergyTable, Pipeline};
use nsp_core::fidelity::{CameraSettings, NoiseModel};
use nsp_core::policy::{GapStrategy, PolicyKind};
use nsp_core::presets::PresetStore;
use nsp_core::sim::{self, AxisValue, SweepAxis};
use nsp_core::thermal::{self, ThermalState};
use nsp_core::validate::regression_suite;
use nsp_core::Error;

pyo3::create_exception!(nsp_sim, InfeasibleFidelityError, PyValueError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InfeasibleFidelity(m) => InfeasibleFidelityError::new_err(m),
        Error::Io(m) => PyRuntimeError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        serde_json::Value::Number(n) => match n.as_u64() {
            Some(u) => u.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        serde_json::Value::Array(a) => {
            let list = PyList::empty(py);
            for item in a {
                list.append(to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        serde_json::Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, item) in o {
                d.set_item(k, to_py(py, item)?)?;
            }
            d.into_any().unbind()
        }
    })
}

/// Two-node RC thermal model of the sensor stack.
#[pyclass(name = "ThermalStack", skip_from_py_object)]
#[derive(Clone)]
struct PyThermalStack {
    inner: thermal::ThermalStack,
}

#[pymethods]
impl PyThermalStack {
    #[new]
    #[pyo3(signature = (alpha_jump=None, tau_die=None, c_pkg=None))]
    fn new(alpha_jump: Option<f64>, tau_die: Option<f64>, c_pkg: Option<f64>) -> PyResult<Self> {
        let mut inner = thermal::ThermalStack::default();
        if let Some(a) = alpha_jump {
            inner.alpha_jump = a;
        }
        if let Some(t) = tau_die {
            inner.tau_die = t;
        }
        if let Some(c) = c_pkg {
            inner.c_pkg = c;
        }
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn r_eff(&self) -> f64 {
        self.inner.r_eff()
    }

    #[getter]
    fn alpha_jump(&self) -> f64 {
        self.inner.alpha_jump
    }

    #[getter]
    fn tau_die(&self) -> f64 {
        self.inner.tau_die
    }

    /// Steady (die, package) temperatures, °C.
    fn steady_state(&self, p_near_sensor: f64, t_ambient: f64) -> PyResult<(f64, f64)> {
        let s = thermal::steady_state(&self.inner, p_near_sensor, t_ambient).map_err(py_err)?;
        Ok((s.die, s.pkg))
    }

    fn temperature_jump(&self, p_nsp: f64, p_cap: f64) -> PyResult<f64> {
        thermal::temperature_jump(&self.inner, p_nsp, p_cap).map_err(py_err)
    }

    /// Advances (die, package) by `dt` seconds under constant power.
    fn step(&self, t_die: f64, t_pkg: f64, p_near_sensor: f64, t_ambient: f64, dt: f64) -> PyResult<(f64, f64)> {
        let s = ThermalState { t_die, t_pkg, time: 0.0 };
        let next = thermal::transient_step(&self.inner, &s, p_near_sensor, t_ambient, dt).map_err(py_err)?;
        Ok((next.t_die, next.t_pkg))
    }

    /// Copy rescaled to a calibrated die-to-ambient resistance.
    fn with_die_to_ambient(&self, r_total: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_die_to_ambient(r_total).map_err(py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("ThermalStack(r_eff={:.3}, alpha_jump={}, tau_die={})", self.inner.r_eff(), self.inner.alpha_jump, self.inner.tau_die)
    }
}

/// Fits `T = ambient + p * R`; returns (R, ambient).
#[pyfunction]
#[pyo3(signature = (pairs, ambient=None))]
fn calibrate(pairs: Vec<(f64, f64)>, ambient: Option<f64>) -> PyResult<(f64, f64)> {
    let fit = thermal::calibrate(&pairs, ambient).map_err(py_err)?;
    Ok((fit.r_die_ambient, fit.ambient))
}

/// Component powers of a bundled workload, W.
#[pyfunction]
#[pyo3(signature = (workload, pipeline="near_sensor"))]
fn power_breakdown(py: Python<'_>, workload: &str, pipeline: &str) -> PyResult<Py<PyAny>> {
    let profile = PresetStore::from_env().and_then(|s| s.get(workload)).map_err(py_err)?;
    let pipeline: Pipeline = pipeline.parse().map_err(py_err)?;
    let b = system_power(&EnergyTable::default(), &profile, pipeline).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("sensing", b.sensing)?;
    d.set_item("csi", b.csi)?;
    d.set_item("ddr", b.ddr)?;
    d.set_item("dram", b.dram)?;
    d.set_item("compute", b.compute)?;
    d.set_item("total", b.total())?;
    Ok(d.into_any().unbind())
}

#[pyfunction]
fn snr_db(lux: f64, t_die: f64) -> PyResult<f64> {
    let s = CameraSettings::for_lux(lux).map_err(py_err)?;
    NoiseModel::default().snr_db(&s, t_die).map_err(py_err)
}

/// Hottest die temperature meeting `snr` at this illumination, °C.
#[pyfunction]
fn threshold_temperature(lux: f64, snr: f64) -> PyResult<f64> {
    let s = CameraSettings::for_lux(lux).map_err(py_err)?;
    NoiseModel::default().threshold_temperature(&s, snr).map_err(py_err)
}

#[pyfunction]
fn list_presets() -> PyResult<Vec<String>> {
    Ok(PresetStore::from_env().map_err(py_err)?.names())
}

/// Runs the regression suite; returns (name, actual, passed) triples.
#[pyfunction]
fn validate() -> PyResult<Vec<(String, f64, bool)>> {
    let store = PresetStore::from_env().map_err(py_err)?;
    let checks = regression_suite(
        &thermal::ThermalStack::default(),
        &EnergyTable::default(),
        &NoiseModel::default(),
        &store,
    )
    .map_err(py_err)?;
    Ok(checks.into_iter().map(|c| (c.name, c.actual, c.passed)).collect())
}

/// A simulation scenario.
#[pyclass(name = "Scenario", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: sim::Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (workload, policy="seasonal_migration", duration=120.0, ambient=25.0, lux=320.0, imaging_snr=Some(26.0)))]
    fn new(workload: &str, policy: &str, duration: f64, ambient: f64, lux: f64, imaging_snr: Option<f64>) -> PyResult<Self> {
        let profile = PresetStore::from_env().and_then(|s| s.get(workload)).map_err(py_err)?;
        let kind: PolicyKind = policy.parse().map_err(py_err)?;
        let mut inner = sim::Scenario::new(profile, kind);
        inner.duration = duration;
        inner.ambient_trace = vec![(0.0, ambient)];
        inner.lighting_trace = vec![(0.0, lux)];
        inner.fidelity.imaging_snr = imaging_snr;
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Parses a scenario file's text.
    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        let store = PresetStore::from_env().map_err(py_err)?;
        Ok(Self {
            inner: parse_scenario(text, &store).map_err(py_err)?,
        })
    }

    fn to_config(&self) -> String {
        write_scenario(&self.inner)
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }

    #[setter]
    fn set_duration(&mut self, v: f64) {
        self.inner.duration = v;
    }

    #[getter]
    fn policy(&self) -> String {
        self.inner.policy.kind.to_string()
    }

    #[setter]
    fn set_policy(&mut self, v: &str) -> PyResult<()> {
        self.inner.policy.kind = v.parse().map_err(py_err)?;
        Ok(())
    }

    #[getter]
    fn triggers(&self) -> Vec<f64> {
        self.inner.triggers.clone()
    }

    /// On-demand capture requests, s.
    #[setter]
    fn set_triggers(&mut self, v: Vec<f64>) {
        self.inner.triggers = v;
    }

    fn set_gap(&mut self, gap: Option<f64>) {
        self.inner.policy.gap = gap.map_or(GapStrategy::MinimizePower, GapStrategy::Fixed);
    }

    fn set_nsp_power(&mut self, watts: Option<f64>) {
        self.inner.workload.nsp_power_override = watts;
    }

    /// Boundaries under the initial conditions as a dict.
    fn boundaries(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let b = self
            .inner
            .boundaries(self.inner.ambient_at(0.0), self.inner.lux_at(0.0))
            .map_err(py_err)?;
        to_py(py, &serde_json::to_value(b).map_err(|e| PyRuntimeError::new_err(e.to_string()))?)
    }

    /// Simulates and returns the metrics dict; the GIL is released meanwhile.
    fn run(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let scenario = self.inner.clone();
        let trace = py.detach(move || sim::run(&scenario)).map_err(py_err)?;
        to_py(py, &trace.metrics.to_json())
    }

    /// Simulates and writes the trace CSV to `path`; returns the metrics dict.
    fn run_to_csv(&self, py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
        let scenario = self.inner.clone();
        let trace = py.detach(move || sim::run(&scenario)).map_err(py_err)?;
        let f = std::fs::File::create(path).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        trace
            .write_csv(std::io::BufWriter::new(f))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        to_py(py, &trace.metrics.to_json())
    }

    /// Sweeps one axis; `None` values are only valid for `fidelity_snr`.
    fn sweep(&self, py: Python<'_>, axis: &str, values: Vec<Option<f64>>) -> PyResult<Vec<(Option<f64>, Py<PyAny>)>> {
        let axis: SweepAxis = axis.parse().map_err(py_err)?;
        let vals: Vec<AxisValue> = values.iter().map(|v| v.map_or(AxisValue::None, AxisValue::Value)).collect();
        let scenario = self.inner.clone();
        let cells = py.detach(move || sim::sweep(&scenario, axis, &vals));
        cells
            .into_iter()
            .zip(values)
            .map(|(c, v)| Ok((v, to_py(py, &c.metrics.map_err(py_err)?.to_json())?)))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(workload={:?}, policy={}, duration={})",
            self.inner.workload.name, self.inner.policy.kind, self.inner.duration
        )
    }
}

#[pymodule]
fn nsp_sim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyThermalStack>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(power_breakdown, m)?)?;
    m.add_function(wrap_pyfunction!(snr_db, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_temperature, m)?)?;
    m.add_function(wrap_pyfunction!(list_presets, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add("InfeasibleFidelityError", m.py().get_type::<InfeasibleFidelityError>())?;
    Ok(())
}
