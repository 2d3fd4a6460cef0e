//! Python bindings for `oscdamp`.

use oscdamp::damping::{duality_gram, pairing_required_dim};
use oscdamp::fock::{self, number, thermal_state};
use oscdamp::liouvillian::eigenvalue as lambda;
use oscdamp::micromaser::{cycle_average, cyclic_steady_state, maser_steady_state as maser, one_photon_kick};
use oscdamp::statistics::DetectionModel;
use oscdamp::trajectory::{Observer, Simulator, TrajectoryConfig};
use oscdamp::{Branch, DetectionConfig, Error, KickPair, OscillatorParams};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyComplex, PyDict, PyList};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::DimensionMismatch { .. } | Error::NonFinite(_) => PyValueError::new_err(e.to_string()),
        _ => PyArithmeticError::new_err(e.to_string()),
    }
}

fn branch(name: &str) -> PyResult<Branch> {
    match name {
        "down" => Ok(Branch::Down),
        "up" => Ok(Branch::Up),
        _ => Err(PyValueError::new_err(format!("branch must be 'down' or 'up', not {name:?}"))),
    }
}

fn populations(rho: &oscdamp::FockOperator) -> Vec<f64> {
    (0..rho.dim()).map(|n| rho.get(n, n).re).collect()
}

/// Oscillator frequency, damping rate `A` and thermal photon number.
#[pyclass(name = "OscillatorParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParams(OscillatorParams);

#[pymethods]
impl PyParams {
    #[new]
    fn new(omega: f64, decay: f64, nu: f64) -> PyResult<Self> {
        OscillatorParams::new(omega, decay, nu).map(Self).map_err(to_py)
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.0.omega
    }

    #[getter]
    fn decay(&self) -> f64 {
        self.0.decay
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.0.nu
    }

    fn __repr__(&self) -> String {
        format!("OscillatorParams(omega={}, decay={}, nu={})", self.0.omega, self.0.decay, self.0.nu)
    }
}

/// The two branch maps of one atom crossing the cavity.
#[pyclass(name = "KickPair", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyKick(KickPair);

#[pymethods]
impl PyKick {
    #[staticmethod]
    fn jc(phi: f64, dim: usize) -> PyResult<Self> {
        KickPair::jc(phi, dim).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn parity(dim: usize) -> PyResult<Self> {
        KickPair::parity(dim).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn trivial(q: f64, dim: usize) -> PyResult<Self> {
        KickPair::trivial(q, dim).map(Self).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// Detector efficiencies and atomic arrival rate.
#[pyclass(name = "DetectionConfig", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDetection(DetectionConfig);

#[pymethods]
impl PyDetection {
    #[new]
    fn new(eta_down: f64, eta_up: f64, rate: f64) -> PyResult<Self> {
        DetectionConfig::new(eta_down, eta_up, rate).map(Self).map_err(to_py)
    }

    #[getter]
    fn eta_down(&self) -> f64 {
        self.0.eta_down
    }

    #[getter]
    fn eta_up(&self) -> f64 {
        self.0.eta_up
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.0.rate
    }
}

/// Click statistics of a steadily running cavity.
#[pyclass(name = "DetectionModel", frozen)]
struct PyModel(DetectionModel);

#[pymethods]
impl PyModel {
    #[new]
    fn new(params: &PyParams, kick: &PyKick, config: &PyDetection) -> PyResult<Self> {
        DetectionModel::new(&params.0, kick.0.clone(), config.0).map(Self).map_err(to_py)
    }

    /// Photon-number distribution of the steady state.
    fn steady_populations(&self) -> Vec<f64> {
        populations(self.0.steady_state().as_operator())
    }

    /// A-priori click probabilities per atom, `(down, up)`.
    fn apriori(&self) -> (f64, f64) {
        self.0.apriori()
    }

    fn correlation(&self, from_branch: &str, to_branch: &str, times: Vec<f64>) -> PyResult<Vec<f64>> {
        let c = self.0.correlation(branch(from_branch)?, branch(to_branch)?, &times).map_err(to_py)?;
        Ok(c.values)
    }

    fn waiting_time(&self, from_branch: &str, to_branch: &str, times: Vec<f64>) -> PyResult<Vec<f64>> {
        let w = self.0.waiting_time(branch(from_branch)?, branch(to_branch)?, &times).map_err(to_py)?;
        Ok(w.values)
    }

    fn fano(&self, branch_name: &str, times: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.0.fano(branch(branch_name)?, &times).map_err(to_py)?.values)
    }

    fn counting_distribution(&self, branch_name: &str, t: f64, n_max: usize) -> PyResult<Vec<f64>> {
        Ok(self.0.counting_distribution(branch(branch_name)?, t, n_max).map_err(to_py)?.probs)
    }

    fn mean_count(&self, branch_name: &str, t: f64) -> PyResult<f64> {
        Ok(self.0.mean_count(branch(branch_name)?, t))
    }

    fn no_click_probability(&self, branch_name: &str, t: f64) -> PyResult<f64> {
        self.0.no_click_probability(branch(branch_name)?, t).map_err(to_py)
    }
}

/// Liouvillian eigenvalue `lambda_n^(k)`.
#[pyfunction]
fn eigenvalue<'py>(py: Python<'py>, n: usize, k: i64, params: &PyParams) -> Bound<'py, PyComplex> {
    let l = lambda(n, k, &params.0);
    PyComplex::from_doubles(py, l.re, l.im)
}

#[pyfunction]
fn thermal_populations(nu: f64, dim: usize) -> PyResult<Vec<f64>> {
    Ok(thermal_state(nu, dim).map_err(to_py)?.populations())
}

/// Steady photon distribution of a Jaynes-Cummings maser pumped at rate `r`.
#[pyfunction]
fn maser_steady_state(params: &PyParams, phi: f64, r: f64, dim: usize) -> PyResult<Vec<f64>> {
    Ok(maser(&params.0, phi, r, dim).map_err(to_py)?.populations())
}

/// Period-averaged photon number of the cyclically steady state under one-photon kicks.
#[pyfunction]
fn kicked_mean_number(params: &PyParams, p: f64, period: f64, dim: usize) -> PyResult<f64> {
    let l = oscdamp::liouvillian::build_liouvillian(&params.0, dim).map_err(to_py)?;
    let k = one_photon_kick(p, dim).map_err(to_py)?;
    let css = cyclic_steady_state(&l, &k, period).map_err(to_py)?;
    let avg = cycle_average(&l, &k, period, css.as_operator()).map_err(to_py)?;
    Ok(fock::expectation(&number(dim).map_err(to_py)?, &avg).map_err(to_py)?.re)
}

/// Largest deviation of the damping-basis Gram matrix from the identity.
#[pyfunction]
fn duality_deviation(n_max: usize, k_max: usize, nu: f64) -> PyResult<f64> {
    let dim = pairing_required_dim(n_max, k_max, nu).map_err(to_py)?;
    let g = duality_gram(n_max, k_max, nu, dim).map_err(to_py)?;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - want).norm());
        }
    }
    Ok(worst)
}

/// One Monte-Carlo run; returns clicks and the expectation series of every account.
#[pyfunction]
#[pyo3(signature = (params, kick, config, observers, t_end, sample_dt, seed, stream = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    params: &PyParams,
    kick: &PyKick,
    config: &PyDetection,
    observers: Vec<String>,
    t_end: f64,
    sample_dt: f64,
    seed: u64,
    stream: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let det = config.0;
    let obs = observers
        .iter()
        .map(|name| match name.as_str() {
            "alice" => Ok(Observer::alice(&det)),
            "bob" => Ok(Observer::bob(&det)),
            "chuck" => Ok(Observer::chuck(&det)),
            "doris" => Ok(Observer::doris(&det)),
            _ => Err(PyValueError::new_err(format!("unknown observer {name:?}"))),
        })
        .collect::<PyResult<Vec<_>>>()?;
    let sim = Simulator::new(TrajectoryConfig {
        params: params.0,
        kick: kick.0.clone(),
        detection: det,
        observers: obs,
        t_end,
        sample_dt: Some(sample_dt),
        initial: None,
        check_states: false,
    })
    .map_err(to_py)?;
    let r = py.detach(|| sim.run(seed, stream)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("seed", r.seed)?;
    out.set_item("stream", r.stream)?;
    out.set_item("rng", r.rng)?;
    let clicks: Vec<(f64, String, bool)> = r.clicks.iter().map(|c| (c.time, c.branch.to_string(), c.detected)).collect();
    out.set_item("clicks", PyList::new(py, clicks)?)?;
    let series = PyDict::new(py);
    for s in std::iter::once(&r.omniscient).chain(&r.observer_series) {
        let d = PyDict::new(py);
        d.set_item("times", s.times.clone())?;
        d.set_item("parity", s.parity.clone())?;
        d.set_item("number", s.number.clone())?;
        d.set_item("no_click", s.no_click.clone())?;
        series.set_item(s.name.as_str(), d)?;
    }
    out.set_item("series", series)?;
    Ok(out)
}

#[pymodule]
fn pyoscdamp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyKick>()?;
    m.add_class::<PyDetection>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(eigenvalue, m)?)?;
    m.add_function(wrap_pyfunction!(thermal_populations, m)?)?;
    m.add_function(wrap_pyfunction!(maser_steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(kicked_mean_number, m)?)?;
    m.add_function(wrap_pyfunction!(duality_deviation, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_names() {
        assert_eq!(branch("down").unwrap(), Branch::Down);
        assert_eq!(branch("up").unwrap(), Branch::Up);
    }

    #[test]
    fn errors_map_by_kind() {
        Python::initialize();
        Python::attach(|py| {
            assert!(to_py(Error::Domain("x".into())).is_instance_of::<PyValueError>(py));
            assert!(to_py(Error::Underflow("x".into())).is_instance_of::<PyArithmeticError>(py));
        });
    }
}
