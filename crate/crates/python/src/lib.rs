//! Python bindings: the learners, the loss helpers, LIBSVM loading, the
//! experiment runner and the numerical checks.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gaf::baselines::{Ogd as CoreOgd, Ons as CoreOns, ONS_EPSILON};
use gaf::gaf::{confidence_mu, theorem_bound as core_bound, MuRule};
use gaf::harness::{self, Algo, RunConfig};
use gaf::losses::{self, LossKind};
use gaf::verify::{self as checks, Suite};
use gaf::{Error, InputFeatures, LearnerConfig, SimplexVector, VawTerm};
use nalgebra::DVector;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Solver { .. } | Error::Factorization { .. } | Error::NotPsd { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn dvec(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

fn features(x: Vec<f64>, classes: usize) -> PyResult<InputFeatures> {
    InputFeatures::new(x, classes, f64::INFINITY).map_err(to_py)
}

fn simplex(p: Vec<f64>) -> PyResult<SimplexVector> {
    SimplexVector::new(p).map_err(to_py)
}

/// Gaussian aggregating forecaster for `K`-class logistic regression on `d′` features.
#[pyclass(name = "Gaf")]
struct PyGaf {
    inner: gaf::Gaf,
}

#[pymethods]
impl PyGaf {
    #[new]
    #[pyo3(signature = (dprime, classes, lambda_=1.0, beta=1.0, mu=1e-3, samples=100, seed=0, b=1.0, r=1.0, alpha=1.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dprime: usize,
        classes: usize,
        lambda_: f64,
        beta: f64,
        mu: f64,
        samples: usize,
        seed: u64,
        b: f64,
        r: f64,
        alpha: f64,
    ) -> PyResult<Self> {
        let cfg = LearnerConfig {
            lambda: lambda_,
            beta,
            mu,
            samples,
            seed,
            b,
            r,
            alpha,
            ..LearnerConfig::new(dprime, classes)
        };
        Ok(Self {
            inner: gaf::Gaf::new(cfg).map_err(to_py)?,
        })
    }

    /// Learner with the constants of the regret guarantee for `n` rounds.
    #[staticmethod]
    #[pyo3(signature = (dprime, classes, b, r, n, samples=100, seed=0))]
    fn theoretical(dprime: usize, classes: usize, b: f64, r: f64, n: usize, samples: usize, seed: u64) -> PyResult<Self> {
        let mut cfg = LearnerConfig::theoretical(dprime, classes, b, r, n).map_err(to_py)?;
        cfg.samples = samples;
        cfg.seed = seed;
        Ok(Self {
            inner: gaf::Gaf::new(cfg).map_err(to_py)?,
        })
    }

    /// Smoothed probability vector for `x`.
    fn predict(&mut self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let f = features(x, self.inner.config().classes)?;
        Ok(self.inner.predict(&f).map_err(to_py)?.ptilde.into_vec())
    }

    /// Logits `σ⁺(p̃)` of the prediction for `x`.
    fn predict_logits(&mut self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let f = features(x, self.inner.config().classes)?;
        Ok(self.inner.predict(&f).map_err(to_py)?.yhat)
    }

    fn update(&mut self, x: Vec<f64>, y: usize) -> PyResult<()> {
        let f = features(x, self.inner.config().classes)?;
        self.inner.update(&f, y).map_err(to_py)
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta().as_slice().to_vec()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn logdet(&self) -> f64 {
        self.inner.a().logdet()
    }

    /// `A_t` as a list of rows.
    fn a_matrix(&self) -> Vec<Vec<f64>> {
        let a = self.inner.a().mat();
        (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
    }
}

/// Ridge forecaster for the squared loss.
#[pyclass(name = "VawRidge")]
struct PyVaw {
    inner: gaf::VawRidge,
}

#[pymethods]
impl PyVaw {
    #[new]
    #[pyo3(signature = (dim, lambda_=1.0, quadratic=false))]
    fn new(dim: usize, lambda_: f64, quadratic: bool) -> PyResult<Self> {
        let term = if quadratic { VawTerm::Quadratic } else { VawTerm::Linear };
        Ok(Self {
            inner: gaf::VawRidge::new(dim, lambda_, term).map_err(to_py)?,
        })
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.predict(&dvec(x)).map_err(to_py)
    }

    fn update(&mut self, x: Vec<f64>, y: f64) -> PyResult<()> {
        self.inner.update(&dvec(x), y).map_err(to_py)
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }
}

/// Projected online gradient descent baseline.
#[pyclass(name = "Ogd")]
struct PyOgd {
    inner: CoreOgd,
    classes: usize,
}

#[pymethods]
impl PyOgd {
    #[new]
    #[pyo3(signature = (dprime, classes, radius=1.0, step_scale=None, r=1.0))]
    fn new(dprime: usize, classes: usize, radius: f64, step_scale: Option<f64>, r: f64) -> PyResult<Self> {
        let eta = step_scale.unwrap_or_else(|| CoreOgd::default_step_scale(radius, r));
        Ok(Self {
            inner: CoreOgd::new(dprime * classes, radius, eta).map_err(to_py)?,
            classes,
        })
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.predict(&features(x, self.classes)?).map_err(to_py)?.into_vec())
    }

    fn update(&mut self, x: Vec<f64>, y: usize) -> PyResult<()> {
        self.inner.step(&features(x, self.classes)?, y).map_err(to_py)
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta().as_slice().to_vec()
    }
}

/// Online Newton step baseline.
#[pyclass(name = "Ons")]
struct PyOns {
    inner: CoreOns,
    classes: usize,
}

#[pymethods]
impl PyOns {
    #[new]
    #[pyo3(signature = (dprime, classes, radius=1.0, eta=0.1, epsilon=ONS_EPSILON))]
    fn new(dprime: usize, classes: usize, radius: f64, eta: f64, epsilon: f64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreOns::new(dprime * classes, radius, eta, epsilon).map_err(to_py)?,
            classes,
        })
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.predict(&features(x, self.classes)?).map_err(to_py)?.into_vec())
    }

    fn update(&mut self, x: Vec<f64>, y: usize) -> PyResult<()> {
        self.inner.step(&features(x, self.classes)?, y).map_err(to_py)
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta().as_slice().to_vec()
    }
}

#[pyfunction]
fn log_sum_exp(z: Vec<f64>) -> f64 {
    losses::log_sum_exp(&z)
}

#[pyfunction]
fn softmax(z: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(losses::softmax(&z).map_err(to_py)?.into_vec())
}

#[pyfunction]
fn sigma_plus(p: Vec<f64>) -> PyResult<Vec<f64>> {
    losses::sigma_plus(&simplex(p)?).map_err(to_py)
}

#[pyfunction]
fn smooth(p: Vec<f64>, mu: f64) -> PyResult<Vec<f64>> {
    Ok(losses::smooth(&simplex(p)?, mu).map_err(to_py)?.into_vec())
}

#[pyfunction]
fn logistic_value(x: Vec<f64>, classes: usize, y: usize, theta: Vec<f64>) -> PyResult<f64> {
    losses::logistic_value(&features(x, classes)?, y, &dvec(theta)).map_err(to_py)
}

#[pyfunction]
fn logistic_grad(x: Vec<f64>, classes: usize, y: usize, theta: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(losses::logistic_grad(&features(x, classes)?, y, &dvec(theta))
        .map_err(to_py)?
        .as_slice()
        .to_vec())
}

/// The assumption constants as a dict (`loss` is `"logistic"` or `"squared"`).
#[pyfunction]
#[pyo3(signature = (loss, b, r, dprime, classes, y_bound=None))]
fn params_for<'py>(
    py: Python<'py>,
    loss: &str,
    b: f64,
    r: f64,
    dprime: usize,
    classes: usize,
    y_bound: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = losses::params_for(loss_kind(loss)?, b, r, y_bound, dprime, classes).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("alpha", p.alpha)?;
    d.set_item("beta", p.beta)?;
    d.set_item("gamma", p.gamma)?;
    d.set_item("stated_gamma", p.stated_gamma)?;
    d.set_item("zeta", p.zeta)?;
    d.set_item("lambda", p.lambda)?;
    Ok(d)
}

fn loss_kind(name: &str) -> PyResult<LossKind> {
    match name {
        "logistic" => Ok(LossKind::Logistic),
        "squared" => Ok(LossKind::Squared),
        _ => Err(PyValueError::new_err(format!("unknown loss `{name}`"))),
    }
}

/// Regret bound after `n` rounds at the theoretical constants of `loss`.
#[pyfunction]
#[pyo3(signature = (loss, b, r, dprime, classes, n, norm_theta, y_bound=None))]
#[allow(clippy::too_many_arguments)]
fn theorem_bound(
    loss: &str,
    b: f64,
    r: f64,
    dprime: usize,
    classes: usize,
    n: usize,
    norm_theta: f64,
    y_bound: Option<f64>,
) -> PyResult<f64> {
    let p = losses::params_for(loss_kind(loss)?, b, r, y_bound, dprime, classes).map_err(to_py)?;
    Ok(core_bound(&p, dprime * classes, n, norm_theta))
}

#[pyfunction]
#[pyo3(signature = (n, delta, m, classes, optimized=true))]
fn smoothing_level(n: usize, delta: f64, m: usize, classes: usize, optimized: bool) -> f64 {
    let rule = if optimized { MuRule::Optimized } else { MuRule::Hypothesis };
    confidence_mu(n, delta, m, classes, rule)
}

/// Loads a LIBSVM file as `(rows, labels, classes)` with dense rows and
/// 0-based class indices.
#[pyfunction]
fn parse_libsvm(path: &str) -> PyResult<(Vec<Vec<f64>>, Vec<usize>, usize)> {
    let ds = harness::parse_libsvm(path).map_err(to_py)?;
    let rows = (0..ds.len()).map(|i| ds.dense_row(i)).collect();
    let labels = ds.rows.iter().map(|r| r.class).collect();
    Ok((rows, labels, ds.classes))
}

/// Runs `algo` on a LIBSVM file; one dict of per-step series per seed.
#[pyfunction]
#[pyo3(signature = (algo, path, b=1.0, r=1.0, lambda_=1.0, beta=1.0, eta=None, mu=None, m=100, seeds=vec![0], oracle=true))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    algo: &str,
    path: &str,
    b: f64,
    r: f64,
    lambda_: f64,
    beta: f64,
    eta: Option<f64>,
    mu: Option<f64>,
    m: usize,
    seeds: Vec<u64>,
    oracle: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let algo: Algo = algo.parse().map_err(to_py)?;
    let cfg = RunConfig {
        radius: b,
        feature_bound: r,
        lambda: lambda_,
        beta,
        eta,
        mu,
        samples: m,
        seeds,
        oracle,
        ..RunConfig::new(algo)
    };
    let data = harness::prepare(&harness::parse_libsvm(path).map_err(to_py)?, r).map_err(to_py)?;
    let reports = py.detach(|| harness::run(&cfg, &data)).map_err(to_py)?;
    reports
        .iter()
        .map(|rep| {
            let d = PyDict::new(py);
            d.set_item("algo", &rep.algo)?;
            d.set_item("seed", rep.seed)?;
            d.set_item("loss", rep.learner_losses.clone())?;
            d.set_item("avg_loss", rep.average_losses())?;
            d.set_item("regret", rep.cumulative_regret.clone())?;
            d.set_item("bound", rep.bound.clone())?;
            Ok(d)
        })
        .collect()
}

/// Runs a check suite (`all`, `lemmas`, `gradients`, `regret`); one dict per check.
#[pyfunction]
#[pyo3(signature = (suite="all", seed=0))]
fn verify<'py>(py: Python<'py>, suite: &str, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let suite: Suite = suite.parse().map_err(to_py)?;
    let reports = py.detach(|| checks::run_suite(suite, seed)).map_err(to_py)?;
    reports
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("name", &r.name)?;
            d.set_item("trials", r.trials)?;
            d.set_item("worst_violation", r.worst_violation)?;
            d.set_item("pass", r.pass)?;
            d.set_item("tolerance", r.tolerance)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn gafpy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGaf>()?;
    m.add_class::<PyVaw>()?;
    m.add_class::<PyOgd>()?;
    m.add_class::<PyOns>()?;
    m.add_function(wrap_pyfunction!(log_sum_exp, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_plus, m)?)?;
    m.add_function(wrap_pyfunction!(smooth, m)?)?;
    m.add_function(wrap_pyfunction!(logistic_value, m)?)?;
    m.add_function(wrap_pyfunction!(logistic_grad, m)?)?;
    m.add_function(wrap_pyfunction!(params_for, m)?)?;
    m.add_function(wrap_pyfunction!(theorem_bound, m)?)?;
    m.add_function(wrap_pyfunction!(smoothing_level, m)?)?;
    m.add_function(wrap_pyfunction!(parse_libsvm, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
