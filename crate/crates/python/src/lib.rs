//! Python bindings: a `Scenario` class built from a TOML scenario, whose
//! methods return plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use spectramech::config::{Scenario as CoreScenario, ScenarioConfig, SolverSettings};
use spectramech::montecarlo::{expected_revenue, interim_estimate};
use spectramech::verification::{default_grids, verify_suite, Suite, VerifyOptions};
use spectramech::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Solver(_) | Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Round-trips through JSON so Python sees dicts, lists and floats.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PyModule::import(py, "json")?.call_method1("loads", (text,))?.unbind())
}

/// A validated auction scenario.
#[pyclass(module = "spectramech_py")]
struct Scenario {
    config: ScenarioConfig,
    scenario: CoreScenario,
}

impl Scenario {
    fn settings(&self, mc_samples: Option<usize>, grid_m: Option<usize>) -> SolverSettings {
        let mut s = self.config.solver;
        if let Some(m) = mc_samples {
            s.mc_samples = m;
        }
        if let Some(m) = grid_m {
            s.grid_m = m;
        }
        s
    }
}

#[pymethods]
impl Scenario {
    /// Parses and validates a TOML scenario.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let config = ScenarioConfig::from_toml_str(text).map_err(to_py_err)?;
        let scenario = config.build().map_err(to_py_err)?;
        Ok(Self { config, scenario })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
        Self::from_toml(&text)
    }

    #[getter]
    fn model(&self) -> &'static str {
        match self.scenario {
            CoreScenario::Fd(_) => "fd",
            CoreScenario::Ss(_) => "ss",
        }
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.scenario.num_users()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.config.seed
    }

    fn validate(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.config.validate())
    }

    fn virtual_types(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        self.scenario.profile().virtual_types(&theta).map_err(to_py_err)
    }

    /// Allocation, payments and diagnostics for reported types `theta`.
    #[pyo3(signature = (theta, grid_m=None, seed=None))]
    fn allocate(&self, py: Python<'_>, theta: Vec<f64>, grid_m: Option<usize>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
        let s = self.settings(None, grid_m);
        match &self.scenario {
            CoreScenario::Fd(fd) => to_py(py, &fd.outcome(&theta, s.grid_m).map_err(to_py_err)?),
            CoreScenario::Ss(ss) => {
                let options = s.ss_options(seed.unwrap_or(self.config.seed));
                to_py(py, &ss.outcome(&theta, s.grid_m, &options).map_err(to_py_err)?)
            }
        }
    }

    /// Interim expected rate and payment of `user` at `report`.
    #[pyo3(signature = (user, report, mc_samples=None, seed=None))]
    fn interim(&self, py: Python<'_>, user: usize, report: f64, mc_samples: Option<usize>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
        let s = self.settings(mc_samples, None);
        let seed = seed.unwrap_or(self.config.seed);
        let mech = self.scenario.mechanism(&s, seed);
        let e = py.detach(|| interim_estimate(&*mech, user, report, s.mc_samples, seed)).map_err(to_py_err)?;
        to_py(py, &e)
    }

    /// Expected revenue from payments and from virtual surplus.
    #[pyo3(signature = (mc_samples=None, seed=None))]
    fn revenue(&self, py: Python<'_>, mc_samples: Option<usize>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
        let s = self.settings(mc_samples, None);
        let seed = seed.unwrap_or(self.config.seed);
        let mech = self.scenario.mechanism(&s, seed);
        let r = py.detach(|| expected_revenue(&*mech, s.mc_samples, seed)).map_err(to_py_err)?;
        to_py(py, &r)
    }

    /// Runs the `ic`, `ir`, `identity`, `monotone` or `all` checks.
    #[pyo3(signature = (suite="all", grid_points=None, mc_samples=None, seed=None))]
    fn verify(
        &self,
        py: Python<'_>,
        suite: &str,
        grid_points: Option<usize>,
        mc_samples: Option<usize>,
        seed: Option<u64>,
    ) -> PyResult<Py<PyAny>> {
        let suite = match suite {
            "ic" => Suite::Ic,
            "ir" => Suite::Ir,
            "identity" => Suite::Identity,
            "monotone" => Suite::Monotone,
            "all" => Suite::All,
            other => return Err(PyValueError::new_err(format!("unknown suite {other:?}"))),
        };
        let s = self.settings(mc_samples, None);
        let seed = seed.unwrap_or(self.config.seed);
        let mech = self.scenario.mechanism(&s, seed);
        let report = py
            .detach(|| {
                let grids = default_grids(&*mech, grid_points.unwrap_or(s.verify_grid))?;
                let options = VerifyOptions { mc_samples: s.mc_samples, seed, ..Default::default() };
                verify_suite(&*mech, suite, &grids, &options)
            })
            .map_err(to_py_err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Scenario(model={:?}, num_users={})", self.model(), self.num_users())
    }
}

#[pymodule]
fn spectramech_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    Ok(())
}
