//! Python bindings for `hscale`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hscale::harness::report::rate_summary;
use hscale::harness::{generate_sample, run_rate_study, Config, Experiment, NoiseSpec};
use hscale::regularizer::TikhonovProblem;
use hscale::rkhs::effective_dimension as effective_dimension_rs;
use hscale::rules::{invert_theta as invert_theta_rs, theoretical_exponents, DecayModel, RateParams};
use hscale::smoothness::distance_function as distance_function_rs;
use hscale::{Basis, CoefficientVector, ForwardModel, KernelModel, RegularizationConfig, ScaleSpectrum};

fn py_err(e: hscale::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_basis(name: &str) -> PyResult<Basis> {
    match name {
        "cosine" => Ok(Basis::Cosine),
        "sine" => Ok(Basis::Sine),
        other => Err(PyValueError::new_err(format!("unknown basis `{other}`"))),
    }
}

/// Diagonal scale operator with eigenvalues `l_k`.
#[pyclass(name = "ScaleSpectrum", module = "pyhscale", frozen)]
struct PyScaleSpectrum(ScaleSpectrum);

#[pymethods]
impl PyScaleSpectrum {
    #[new]
    fn new(eigenvalues: Vec<f64>) -> PyResult<Self> {
        ScaleSpectrum::new(eigenvalues).map(Self).map_err(py_err)
    }

    /// `l_k = k^gamma`, k = 1..dim.
    #[staticmethod]
    fn power_law(dim: usize, gamma: f64) -> PyResult<Self> {
        ScaleSpectrum::power_law(dim, gamma).map(Self).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues().to_vec()
    }

    fn norm(&self, f: Vec<f64>, a: f64) -> PyResult<f64> {
        self.0.scale_norm(&CoefficientVector::from_vec(f), a).map_err(py_err)
    }

    fn apply_power(&self, f: Vec<f64>, a: f64) -> PyResult<Vec<f64>> {
        self.0.apply_power(&CoefficientVector::from_vec(f), a).map(|v| v.to_vec()).map_err(py_err)
    }

    fn interpolation_residual(&self, f: Vec<f64>, a: f64, b: f64, c: f64) -> PyResult<f64> {
        self.0.interpolation_residual(&CoefficientVector::from_vec(f), a, b, c).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("ScaleSpectrum(dim={})", self.0.dim())
    }
}

/// Mercer kernel on [0, 1] with a trigonometric eigenbasis.
#[pyclass(name = "KernelModel", module = "pyhscale", frozen)]
struct PyKernelModel(KernelModel);

#[pymethods]
impl PyKernelModel {
    #[new]
    #[pyo3(signature = (eigenvalues, basis = "cosine"))]
    fn new(eigenvalues: Vec<f64>, basis: &str) -> PyResult<Self> {
        KernelModel::new(parse_basis(basis)?, eigenvalues).map(Self).map_err(py_err)
    }

    /// `t_j = j^{-1/b}`.
    #[staticmethod]
    #[pyo3(signature = (dim, b, basis = "cosine"))]
    fn power_decay(dim: usize, b: f64, basis: &str) -> PyResult<Self> {
        KernelModel::power_decay(parse_basis(basis)?, dim, b).map(Self).map_err(py_err)
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa()
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues().to_vec()
    }

    fn kernel(&self, x: f64, y: f64) -> f64 {
        self.0.kernel(x, y)
    }

    fn sample_values(&self, g: Vec<f64>, inputs: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.sample_values(&CoefficientVector::from_vec(g), &inputs).map_err(py_err)
    }

    fn effective_dimension(&self, lam: f64) -> PyResult<f64> {
        effective_dimension_rs(&self.0.covariance(), lam).map_err(py_err)
    }
}

#[pyclass(name = "ForwardModel", module = "pyhscale", frozen)]
struct PyForwardModel(ForwardModel);

#[pymethods]
impl PyForwardModel {
    /// Linear diagonal model with stability exponent `p`, on the ball of `radius` around `center`.
    #[staticmethod]
    fn linear(scale: &PyScaleSpectrum, kernel: &PyKernelModel, p: f64, center: Vec<f64>, radius: f64) -> PyResult<Self> {
        ForwardModel::calibrated_linear(&scale.0, &kernel.0, p, CoefficientVector::from_vec(center), radius)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn quadratic(
        scale: &PyScaleSpectrum,
        kernel: &PyKernelModel,
        p: f64,
        gamma: f64,
        center: Vec<f64>,
        radius: f64,
    ) -> PyResult<Self> {
        ForwardModel::calibrated_quadratic(&scale.0, &kernel.0, p, gamma, CoefficientVector::from_vec(center), radius)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn is_linear(&self) -> bool {
        self.0.is_linear()
    }

    fn apply(&self, f: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.forward_apply(&CoefficientVector::from_vec(f)).map(|v| v.to_vec()).map_err(py_err)
    }

    fn contains(&self, f: Vec<f64>) -> bool {
        self.0.contains(&CoefficientVector::from_vec(f))
    }
}

/// Draws `m` noisy observations of `model(truth)` with Gaussian noise of level `sigma`.
#[pyfunction]
fn sample(
    truth: Vec<f64>,
    model: &PyForwardModel,
    kernel: &PyKernelModel,
    sigma: f64,
    m: usize,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let noise = NoiseSpec::gaussian(sigma).map_err(py_err)?;
    let s = generate_sample(&CoefficientVector::from_vec(truth), &model.0, &kernel.0, &noise, m, seed).map_err(py_err)?;
    Ok((s.inputs, s.outputs))
}

/// Minimizes the Tikhonov functional; returns a dict with `f`, `value`,
/// `residual`, `iterations`, `converged` and `in_domain`.
#[pyfunction]
#[pyo3(signature = (inputs, outputs, model, kernel, lam, f_bar, init = None))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
    model: &PyForwardModel,
    kernel: &PyKernelModel,
    lam: f64,
    f_bar: Vec<f64>,
    init: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let sample = hscale::SampleSet::new(inputs, outputs).map_err(py_err)?;
    let cfg = RegularizationConfig::new(lam, CoefficientVector::from_vec(f_bar)).map_err(py_err)?;
    let out = py
        .detach(|| {
            let problem = TikhonovProblem::new(&sample, &model.0, &kernel.0, &cfg)?;
            if model.0.is_linear() {
                problem.minimize_linear()
            } else {
                let start = init.map(CoefficientVector::from_vec).unwrap_or_else(|| cfg.f_bar.clone());
                problem.minimize_nonlinear(&start)
            }
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("f", out.f.to_vec())?;
    d.set_item("value", out.value)?;
    d.set_item("residual", out.residual)?;
    d.set_item("iterations", out.iterations)?;
    d.set_item("converged", out.converged)?;
    d.set_item("in_domain", out.in_domain)?;
    Ok(d)
}

/// Returns `(lambda, clamped)` solving `Theta(lambda) = 1/sqrt(m)`.
#[pyfunction]
fn invert_theta(m: usize, u: f64, kernel: &PyKernelModel) -> PyResult<(f64, bool)> {
    invert_theta_rs(m, u, &kernel.0.covariance()).map(|t| (t.lambda, t.clamped)).map_err(py_err)
}

/// Rate exponents for a polynomial decay model with exponent `b`.
#[pyfunction]
#[pyo3(signature = (p, q, r, b, s = 1.0))]
fn rate_exponents<'py>(py: Python<'py>, p: f64, q: f64, r: f64, b: f64, s: f64) -> PyResult<Bound<'py, PyDict>> {
    let params = RateParams::new(p, q, r, s).map_err(py_err)?;
    let decay = DecayModel::polynomial(b, 1.0).map_err(py_err)?;
    let e = theoretical_exponents(&params, &decay).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("u", params.u)?;
    d.set_item("regime", format!("{:?}", params.regime).to_lowercase())?;
    d.set_item("lambda_reconstruction", e.lambda_exponent_reconstruction)?;
    d.set_item("lambda_prediction", e.lambda_exponent_prediction)?;
    d.set_item("m_reconstruction", e.m_exponent_reconstruction)?;
    d.set_item("m_prediction", e.m_exponent_prediction)?;
    Ok(d)
}

/// Returns `(distance, minimizer)`.
#[pyfunction]
fn distance_function(radius: f64, q: f64, f_hat: Vec<f64>, f_bar: Vec<f64>, scale: &PyScaleSpectrum) -> PyResult<(f64, Vec<f64>)> {
    distance_function_rs(radius, q, &CoefficientVector::from_vec(f_hat), &CoefficientVector::from_vec(f_bar), &scale.0)
        .map(|d| (d.distance, d.minimizer.to_vec()))
        .map_err(py_err)
}

/// Runs a rate study from TOML text and returns the JSON summary as a string.
#[pyfunction]
fn rate_study(py: Python<'_>, config_toml: &str) -> PyResult<String> {
    let config = Config::from_toml_str(config_toml).map_err(py_err)?;
    let report = py
        .detach(|| Experiment::from_config(config).and_then(|exp| run_rate_study(&exp)))
        .map_err(py_err)?;
    Ok(rate_summary(&report).to_string())
}

#[pymodule]
pub fn pyhscale(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScaleSpectrum>()?;
    m.add_class::<PyKernelModel>()?;
    m.add_class::<PyForwardModel>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(invert_theta, m)?)?;
    m.add_function(wrap_pyfunction!(rate_exponents, m)?)?;
    m.add_function(wrap_pyfunction!(distance_function, m)?)?;
    m.add_function(wrap_pyfunction!(rate_study, m)?)?;
    Ok(())
}
