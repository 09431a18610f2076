use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rrdps::optimize::{NthRule, SearchSpace};
use rrdps::{channel, entropy, keyrate, optimize, oracle, phi, sim, DetectorModel, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Domain(_) | Error::Config(_) | Error::Limit(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn model(pnr: bool) -> DetectorModel {
    if pnr {
        DetectorModel::Pnr
    } else {
        DetectorModel::YesNo
    }
}

#[pyclass(name = "ChannelParams", from_py_object)]
#[derive(Clone)]
pub struct PyChannelParams {
    inner: rrdps::ChannelParams,
}

#[pymethods]
impl PyChannelParams {
    #[new]
    #[pyo3(signature = (eta_d=0.4, p_d=1e-7, f=1.15, e_0=0.5, alpha_f=0.2, E_d=0.015, distance_km=0.0))]
    #[allow(non_snake_case)]
    fn new(eta_d: f64, p_d: f64, f: f64, e_0: f64, alpha_f: f64, E_d: f64, distance_km: f64) -> PyResult<Self> {
        let inner = rrdps::ChannelParams { eta_d, p_d, f, e_0, alpha_f, e_d: E_d, distance: distance_km };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn at_distance(&self, distance_km: f64) -> Self {
        Self { inner: self.inner.at_distance(distance_km) }
    }

    fn transmittance(&self) -> f64 {
        channel::transmittance(&self.inner)
    }

    #[getter]
    fn eta_d(&self) -> f64 {
        self.inner.eta_d
    }
    #[getter]
    fn p_d(&self) -> f64 {
        self.inner.p_d
    }
    #[getter]
    fn f(&self) -> f64 {
        self.inner.f
    }
    #[getter]
    fn e_0(&self) -> f64 {
        self.inner.e_0
    }
    #[getter]
    fn alpha_f(&self) -> f64 {
        self.inner.alpha_f
    }
    #[getter(E_d)]
    fn e_d(&self) -> f64 {
        self.inner.e_d
    }
    #[getter]
    fn distance_km(&self) -> f64 {
        self.inner.distance
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "ChannelParams(eta_d={}, p_d={}, f={}, e_0={}, alpha_f={}, E_d={}, distance_km={})",
            c.eta_d, c.p_d, c.f, c.e_0, c.alpha_f, c.e_d, c.distance
        )
    }
}

#[pyclass(name = "ProtocolParams", from_py_object)]
#[derive(Clone)]
pub struct PyProtocolParams {
    inner: rrdps::ProtocolParams,
}

#[pymethods]
impl PyProtocolParams {
    #[new]
    #[allow(non_snake_case)]
    fn new(L: usize, mu: f64, n_th: usize) -> PyResult<Self> {
        Ok(Self { inner: rrdps::ProtocolParams::new(L, mu, n_th).map_err(to_py)? })
    }

    #[getter(L)]
    fn l(&self) -> usize {
        self.inner.l
    }
    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }
    #[getter]
    fn n_th(&self) -> usize {
        self.inner.n_th
    }

    fn __repr__(&self) -> String {
        format!("ProtocolParams(L={}, mu={}, n_th={})", self.inner.l, self.inner.mu, self.inner.n_th)
    }
}

#[pyclass(name = "KeyRateReport", frozen, skip_from_py_object)]
pub struct PyKeyRateReport {
    inner: rrdps::KeyRateReport,
}

#[pymethods]
impl PyKeyRateReport {
    #[getter(R)]
    fn r(&self) -> f64 {
        self.inner.r
    }
    #[getter(LR)]
    fn lr(&self) -> f64 {
        self.inner.lr
    }
    #[getter]
    fn gamma_opt(&self) -> f64 {
        self.inner.gamma_opt
    }
    #[getter]
    fn alpha_used(&self) -> f64 {
        self.inner.alpha_used
    }
    #[getter]
    fn alpha_min(&self) -> f64 {
        self.inner.alpha_min
    }
    #[getter]
    fn phi(&self) -> f64 {
        self.inner.phi
    }
    #[getter(Q)]
    fn q(&self) -> Option<f64> {
        self.inner.observables.map(|o| o.q)
    }
    #[getter(E)]
    fn e(&self) -> Option<f64> {
        self.inner.observables.map(|o| o.e)
    }
    #[getter]
    fn e_src(&self) -> Option<f64> {
        self.inner.observables.map(|o| o.e_src)
    }
    /// Reason for a zero rate, or None.
    #[getter]
    fn flag(&self) -> Option<&'static str> {
        self.inner.flag.map(|f| match f {
            keyrate::ZeroRateFlag::TaggedDominated => "tagged-dominated",
            keyrate::ZeroRateFlag::DarkDominated => "dark-dominated",
            keyrate::ZeroRateFlag::NegativeRate => "negative-rate",
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "KeyRateReport(R={:e}, alpha_used={}, gamma_opt={})",
            self.inner.r, self.inner.alpha_used, self.inner.gamma_opt
        )
    }
}

#[pyclass(name = "SimStats", frozen, skip_from_py_object)]
pub struct PySimStats {
    inner: sim::SimStats,
}

#[pymethods]
impl PySimStats {
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[getter]
    fn trials(&self) -> u64 {
        self.inner.trials
    }
    #[getter]
    fn counts(&self) -> u64 {
        self.inner.counts
    }
    #[getter]
    fn errors(&self) -> u64 {
        self.inner.errors
    }
    #[getter(Q_hat)]
    fn q_hat(&self) -> f64 {
        self.inner.q_hat
    }
    #[getter(E_hat)]
    fn e_hat(&self) -> f64 {
        self.inner.e_hat
    }
    #[getter(stderr_Q)]
    fn stderr_q(&self) -> f64 {
        self.inner.stderr_q
    }
    #[getter(stderr_E)]
    fn stderr_e(&self) -> f64 {
        self.inner.stderr_e
    }
}

/// `phi(N, L)` and its maximizer.
#[pyfunction]
#[pyo3(name = "phi")]
#[allow(non_snake_case)]
fn phi_py(N: usize, L: usize) -> PyResult<(f64, Vec<f64>)> {
    let r = phi::phi(N, L).map_err(to_py)?;
    Ok((r.value, r.argmax.weights().to_vec()))
}

#[pyfunction]
#[allow(non_snake_case)]
fn phi_bruteforce(py: Python<'_>, N: usize, L: usize, grid: f64) -> PyResult<f64> {
    py.detach(|| phi::phi_bruteforce(N, L, grid)).map_err(to_py)
}

#[pyfunction]
fn binary_entropy(x: f64) -> PyResult<f64> {
    entropy::binary_entropy(x).map_err(to_py)
}

#[pyfunction]
fn e_src(mu: f64, n_th: u32) -> PyResult<f64> {
    entropy::e_src(mu, n_th).map_err(to_py)
}

/// `(Q, E, e_src)` for one train.
#[pyfunction]
#[pyo3(signature = (channel, protocol, pnr=false))]
fn observables(channel: &PyChannelParams, protocol: &PyProtocolParams, pnr: bool) -> PyResult<(f64, f64, f64)> {
    let o = channel::observables(&channel.inner, &protocol.inner, model(pnr)).map_err(to_py)?;
    Ok((o.q, o.e, o.e_src))
}

#[pyfunction]
#[pyo3(signature = (channel, protocol, pnr=false))]
fn rate_report(channel: &PyChannelParams, protocol: &PyProtocolParams, pnr: bool) -> PyResult<PyKeyRateReport> {
    let p = &protocol.inner;
    let phi = phi::PhiCache::new().get(p.n_th, p.l).map_err(to_py)?;
    let inner = keyrate::rate_report(&channel.inner, p, model(pnr), phi).map_err(to_py)?;
    Ok(PyKeyRateReport { inner })
}

/// Best yes-no protocol parameters for the channel.
#[pyfunction]
#[pyo3(signature = (channel, L_min=16, L_max=160, mu_min=0.01, mu_max=20.0, n_th=None))]
#[allow(non_snake_case)]
fn optimize_protocol(
    py: Python<'_>,
    channel: &PyChannelParams,
    L_min: usize,
    L_max: usize,
    mu_min: f64,
    mu_max: f64,
    n_th: Option<usize>,
) -> PyResult<(PyProtocolParams, PyKeyRateReport)> {
    let space =
        SearchSpace { l_min: L_min, l_max: L_max, mu_min, mu_max, n_th: n_th.map_or(NthRule::Full, NthRule::Fixed) };
    space.validate().map_err(to_py)?;
    let cp = channel.inner;
    let o = py.detach(|| optimize::optimize_protocol(&cp, &space, &phi::PhiCache::new())).map_err(to_py)?;
    Ok((PyProtocolParams { inner: o.params }, PyKeyRateReport { inner: o.report }))
}

#[pyfunction]
fn simulate_trains(
    py: Python<'_>,
    channel: &PyChannelParams,
    protocol: &PyProtocolParams,
    trials: u64,
    seed: u64,
) -> PyResult<PySimStats> {
    let (cp, pp) = (channel.inner, protocol.inner);
    let inner = py.detach(|| sim::simulate_trains(&cp, &pp, trials, seed)).map_err(to_py)?;
    Ok(PySimStats { inner })
}

/// Largest `|P(D1, even) - P(D2, even)|` over the scanned inputs.
#[pyfunction]
#[pyo3(signature = (max_n=4, max_l=6, draws=3, seed=1))]
fn even_parity_symmetry(py: Python<'_>, max_n: u8, max_l: usize, draws: usize, seed: u64) -> PyResult<f64> {
    let rep = py.detach(|| oracle::even_parity_symmetry_scan(max_n, max_l, draws, seed)).map_err(to_py)?;
    Ok(rep.max_abs_diff)
}

/// `(max Holevo quantity, phi(1, L))` over random single-photon attacks.
#[pyfunction]
#[pyo3(signature = (L=4, draws=1000, seed=1))]
#[allow(non_snake_case)]
fn holevo_audit(py: Python<'_>, L: usize, draws: usize, seed: u64) -> PyResult<(f64, f64)> {
    let rep = py.detach(|| oracle::holevo_audit(L, draws, seed)).map_err(to_py)?;
    Ok((rep.max_holevo, rep.phi_1_l))
}

#[pymodule]
fn pyrrdps(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChannelParams>()?;
    m.add_class::<PyProtocolParams>()?;
    m.add_class::<PyKeyRateReport>()?;
    m.add_class::<PySimStats>()?;
    m.add_function(wrap_pyfunction!(phi_py, m)?)?;
    m.add_function(wrap_pyfunction!(phi_bruteforce, m)?)?;
    m.add_function(wrap_pyfunction!(binary_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(e_src, m)?)?;
    m.add_function(wrap_pyfunction!(observables, m)?)?;
    m.add_function(wrap_pyfunction!(rate_report, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_protocol, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_trains, m)?)?;
    m.add_function(wrap_pyfunction!(even_parity_symmetry, m)?)?;
    m.add_function(wrap_pyfunction!(holevo_audit, m)?)?;
    Ok(())
}
