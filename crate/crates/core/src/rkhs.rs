//! Mercer kernel on `[0, 1]`, sampling operator, covariance operators and the
//! two perturbation quantities `Θ_z` and `Ψ_x`.
//!
//! Coordinate convention for `H′`: an element `g` is stored as the vector `c`
//! with `g = Σ_j c_j √t_j φ_j`. In these coordinates `‖g‖_{H′} = ‖c‖`, the
//! embedding `I_ν` has singular values `√t_j`, and `T_ν = diag(t_j)`.
//! Outputs are scalar (`Y = ℝ`).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_positive, Error, Result};
use crate::spectral::CoefficientVector;

/// Steps between exact re-evaluations of the rotation recurrence.
const REANCHOR: usize = 64;

/// Orthonormal system in `L²([0,1], uniform)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// `φ_1 = 1`, `φ_j(x) = √2 cos((j−1)πx)`.
    Cosine,
    /// `φ_j(x) = √2 sin(jπx)`.
    Sine,
}

impl Basis {
    /// Frequency (in units of `πx`) of the zero-based basis function `j`.
    fn frequency(self, j: usize) -> usize {
        match self {
            Basis::Cosine => j,
            Basis::Sine => j + 1,
        }
    }

    /// Value of the zero-based basis function `j` at `x`.
    pub fn eval(self, j: usize, x: f64) -> f64 {
        let theta = self.frequency(j) as f64 * std::f64::consts::PI * x;
        match self {
            Basis::Cosine if j == 0 => 1.0,
            Basis::Cosine => std::f64::consts::SQRT_2 * theta.cos(),
            Basis::Sine => std::f64::consts::SQRT_2 * theta.sin(),
        }
    }

    /// Fills `out[j] = φ_j(x)` for `j < out.len()`.
    pub fn eval_all(self, x: f64, out: &mut [f64]) {
        let offset = self.frequency(0);
        let mut k = 0;
        for_each_harmonic(x, offset, out.len(), |_, c, s| {
            out[k] = match self {
                Basis::Cosine if k == 0 => 1.0,
                Basis::Cosine => std::f64::consts::SQRT_2 * c,
                Basis::Sine => std::f64::consts::SQRT_2 * s,
            };
            k += 1;
        });
    }

    /// An upper bound on `sup_x Σ_j t_j φ_j(x)²`; exact for the cosine system.
    pub fn sup_trace_bound(self, t: &[f64]) -> f64 {
        let total: f64 = t.iter().sum();
        match self {
            Basis::Cosine => 2.0 * total - t.first().copied().unwrap_or(0.0),
            Basis::Sine => 2.0 * total,
        }
    }
}

/// Calls `visit(n, cos(nπx), sin(nπx))` for `n = start..start + count`,
/// using a rotation recurrence re-anchored every [`REANCHOR`] steps.
fn for_each_harmonic(x: f64, start: usize, count: usize, mut visit: impl FnMut(usize, f64, f64)) {
    let theta = std::f64::consts::PI * x;
    let (s1, c1) = theta.sin_cos();
    let (mut s, mut c) = (0.0, 1.0);
    for i in 0..count {
        let n = start + i;
        if i % REANCHOR == 0 {
            (s, c) = (n as f64 * theta).sin_cos();
        }
        visit(n, c, s);
        (c, s) = (c * c1 - s * s1, s * c1 + c * s1);
    }
}

/// Empirical cosine moments `C_n = (1/m) Σ_i cos(nπ x_i)` for `n < count`.
fn cosine_moments(inputs: &[f64], count: usize) -> Vec<f64> {
    let mut acc = vec![0.0; count];
    for &x in inputs {
        for_each_harmonic(x, 0, count, |n, c, _| acc[n] += c);
    }
    let m = inputs.len() as f64;
    acc.iter_mut().for_each(|v| *v /= m);
    acc
}

/// Kernel `K(x, x′) = Σ_j t_j φ_j(x) φ_j(x′)` truncated to `N` terms.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    basis: Basis,
    eigenvalues: Vec<f64>,
    kappa: f64,
}

impl KernelModel {
    pub fn new(basis: Basis, eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidParameter("kernel spectrum must be non-empty".into()));
        }
        if eigenvalues.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::InvalidParameter("kernel eigenvalues must be >= 0".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter("kernel eigenvalues must be nonincreasing".into()));
        }
        let kappa = basis.sup_trace_bound(&eigenvalues).sqrt();
        Ok(Self { basis, eigenvalues, kappa })
    }

    /// `t_j = j^{−1/b}`, realizing polynomial decay of the effective dimension with exponent `b`.
    pub fn power_decay(basis: Basis, dim: usize, b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!("decay exponent b must be > 0, got {b}")));
        }
        Self::new(basis, (1..=dim).map(|j| (j as f64).powf(-1.0 / b)).collect())
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn covariance(&self) -> CovarianceModel {
        CovarianceModel::Spectral(self.eigenvalues.clone())
    }

    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        (0..self.dim())
            .map(|j| self.eigenvalues[j] * self.basis.eval(j, x) * self.basis.eval(j, y))
            .sum()
    }

    /// Row `√t_j φ_j(x)`, the `H′` coordinates of the kernel section `K_x`.
    pub fn feature_row(&self, x: f64, out: &mut [f64]) {
        self.basis.eval_all(x, out);
        out.iter_mut().zip(&self.eigenvalues).for_each(|(v, t)| *v *= t.sqrt());
    }

    /// The `m × N` matrix of `S_x` in `H′` coordinates.
    pub fn feature_matrix(&self, inputs: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut phi = DMatrix::zeros(inputs.len(), n);
        let mut row = vec![0.0; n];
        for (i, &x) in inputs.iter().enumerate() {
            self.feature_row(x, &mut row);
            for j in 0..n {
                phi[(i, j)] = row[j];
            }
        }
        phi
    }

    /// `(S_x g)_i = g(x_i)`.
    pub fn sample_values(&self, g: &CoefficientVector, inputs: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), g.len())?;
        let mut row = vec![0.0; self.dim()];
        Ok(inputs
            .iter()
            .map(|&x| {
                self.feature_row(x, &mut row);
                row.iter().zip(g.as_slice()).map(|(a, b)| a * b).sum()
            })
            .collect())
    }

    /// `S_x* w = (1/m) Σ_i w_i K_{x_i}` in `H′` coordinates.
    pub fn sampling_adjoint(&self, inputs: &[f64], weights: &[f64]) -> Result<CoefficientVector> {
        check_len(inputs.len(), weights.len())?;
        let n = self.dim();
        let mut acc = vec![0.0; n];
        let mut row = vec![0.0; n];
        for (&x, &w) in inputs.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            self.feature_row(x, &mut row);
            acc.iter_mut().zip(&row).for_each(|(a, r)| *a += w * r);
        }
        let m = inputs.len().max(1) as f64;
        Ok(CoefficientVector::from_vec(acc.into_iter().map(|a| a / m).collect()))
    }

    /// `‖I_ν g‖_{L²(ν)} = (Σ t_j c_j²)^{1/2}`.
    pub fn embedded_norm(&self, g: &CoefficientVector) -> f64 {
        g.as_slice()
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, t)| t * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// `T_x = S_x* S_x` in `H′` coordinates, assembled from `O(N)` empirical
    /// cosine moments via product-to-sum identities.
    pub fn empirical_covariance(&self, inputs: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        if inputs.is_empty() {
            return DMatrix::zeros(n, n);
        }
        let moments = cosine_moments(inputs, 2 * n + 1);
        let sqrt_t: Vec<f64> = self.eigenvalues.iter().map(|t| t.sqrt()).collect();
        let mut tx = DMatrix::zeros(n, n);
        for k in 0..n {
            for j in 0..=k {
                let g = match self.basis {
                    Basis::Cosine => match (j, k) {
                        (0, 0) => 1.0,
                        (0, _) => std::f64::consts::SQRT_2 * moments[k],
                        _ => moments[k - j] + moments[j + k],
                    },
                    Basis::Sine => moments[k - j] - moments[j + k + 2],
                };
                let v = g * sqrt_t[j] * sqrt_t[k];
                tx[(j, k)] = v;
                tx[(k, j)] = v;
            }
        }
        tx
    }

    /// `T_x` by explicit `Φᵀ Φ / m`.
    pub fn empirical_covariance_dense(&self, inputs: &[f64]) -> DMatrix<f64> {
        let phi = self.feature_matrix(inputs);
        phi.tr_mul(&phi) / inputs.len().max(1) as f64
    }

    /// The `m × m` matrix `(1/m) [K(x_i, x_j)]`.
    pub fn gram(&self, inputs: &[f64]) -> DMatrix<f64> {
        let phi = self.feature_matrix(inputs);
        &phi * phi.transpose() / inputs.len().max(1) as f64
    }
}

/// Source of the covariance spectrum used by the effective dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceModel {
    /// Eigenvalues of `T_ν`.
    Spectral(Vec<f64>),
    /// Empirical `m × m` matrix `(1/m) [K(x_i, x_j)]`.
    Empirical(DMatrix<f64>),
}

impl CovarianceModel {
    pub fn spectrum(&self) -> Vec<f64> {
        match self {
            CovarianceModel::Spectral(t) => t.clone(),
            CovarianceModel::Empirical(g) => SymmetricEigen::new(g.clone())
                .eigenvalues
                .iter()
                .map(|v| v.max(0.0))
                .collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            CovarianceModel::Spectral(t) => t.iter().sum(),
            CovarianceModel::Empirical(g) => g.trace(),
        }
    }
}

/// `N(λ) = Tr((T + λI)⁻¹ T) = Σ_j t_j / (t_j + λ)`.
pub fn effective_dimension(cov: &CovarianceModel, lambda: f64) -> Result<f64> {
    check_positive("lambda", lambda)?;
    Ok(effective_dimension_of(&cov.spectrum(), lambda))
}

pub(crate) fn effective_dimension_of(spectrum: &[f64], lambda: f64) -> f64 {
    spectrum.iter().map(|t| t / (t + lambda)).sum()
}

/// `Θ_z = ‖(T_ν + λI)^{−1/2} S_x* ε‖_{H′}`.
pub fn theta_z(kernel: &KernelModel, inputs: &[f64], residuals: &[f64], lambda: f64) -> Result<f64> {
    check_positive("lambda", lambda)?;
    let adj = kernel.sampling_adjoint(inputs, residuals)?;
    Ok(adj
        .as_slice()
        .iter()
        .zip(kernel.eigenvalues())
        .map(|(a, t)| a * a / (t + lambda))
        .sum::<f64>()
        .sqrt())
}

/// `Ψ_x = ‖(T_ν + λI)^{−1/2} (T_ν − T_x)‖_{HS}` for a given `T_x`.
pub fn psi_x(kernel: &KernelModel, tx: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    check_positive("lambda", lambda)?;
    let n = kernel.dim();
    check_len(n, tx.nrows())?;
    check_len(n, tx.ncols())?;
    let t = kernel.eigenvalues();
    let mut sum = 0.0;
    for k in 0..n {
        for j in 0..n {
            let diff = if j == k { t[j] - tx[(j, k)] } else { -tx[(j, k)] };
            sum += diff * diff / (t[j] + lambda);
        }
    }
    Ok(sum.sqrt())
}

/// Convenience wrapper assembling `T_x` from the inputs first.
pub fn psi_x_from_inputs(kernel: &KernelModel, inputs: &[f64], lambda: f64) -> Result<f64> {
    psi_x(kernel, &kernel.empirical_covariance(inputs), lambda)
}

/// Observed data `z = {(x_i, y_i)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl SampleSet {
    pub fn new(inputs: Vec<f64>, outputs: Vec<f64>) -> Result<Self> {
        check_len(inputs.len(), outputs.len())?;
        if inputs.is_empty() {
            return Err(Error::InvalidParameter("sample must contain at least one point".into()));
        }
        Ok(Self { inputs, outputs })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn output_norm(&self) -> f64 {
        DVector::from_column_slice(&self.outputs).norm()
    }
}

/// Config form of the kernel spectrum: `{ power = b }` or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpectrumConfig {
    Power { power: f64 },
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marginal {
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "default_spectrum")]
    pub spectrum: SpectrumConfig,
    #[serde(default = "default_basis")]
    pub basis: Basis,
    #[serde(default = "default_marginal")]
    pub marginal: Marginal,
}

fn default_spectrum() -> SpectrumConfig {
    SpectrumConfig::Power { power: 0.5 }
}

fn default_basis() -> Basis {
    Basis::Cosine
}

fn default_marginal() -> Marginal {
    Marginal::Uniform
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { spectrum: default_spectrum(), basis: default_basis(), marginal: default_marginal() }
    }
}

impl KernelConfig {
    pub fn build(&self, dim: usize) -> Result<KernelModel> {
        match &self.spectrum {
            SpectrumConfig::Power { power } => KernelModel::power_decay(self.basis, dim, *power),
            SpectrumConfig::List(t) => {
                if t.len() != dim {
                    return Err(Error::Config(format!(
                        "kernel.spectrum has {} entries but scale.dim is {dim}",
                        t.len()
                    )));
                }
                KernelModel::new(self.basis, t.clone())
            }
        }
    }
}
