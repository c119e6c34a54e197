//! Hilbert scale generated by a strictly positive diagonal operator `L`.
//!
//! The scale is represented on the first `N` vectors of the eigenbasis of `L`,
//! so every element of `H` is a [`CoefficientVector`] and every power `L^a`
//! acts coordinatewise by `l_k^a`. The norm of `H_a` is `‖L^a f‖_H`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Exponent magnitude beyond which `exp` would leave the normal `f64` range.
const LOG_SPACE_THRESHOLD: f64 = 700.0;

/// Coordinates of an element of `H` in the eigenbasis of `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector(DVector<f64>);

impl CoefficientVector {
    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    /// The `k`-th unit vector (zero based).
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[k] = 1.0;
        Self(v)
    }

    pub fn from_vec(coeffs: Vec<f64>) -> Self {
        Self(DVector::from_vec(coeffs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }

    /// Euclidean norm, i.e. the norm of `H`.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn scale(&self, t: f64) -> Self {
        Self(&self.0 * t)
    }
}

impl From<DVector<f64>> for CoefficientVector {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

impl From<Vec<f64>> for CoefficientVector {
    fn from(v: Vec<f64>) -> Self {
        Self::from_vec(v)
    }
}

impl std::ops::Index<usize> for CoefficientVector {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// Diagonal representation of `L` on a truncated orthonormal basis.
///
/// Eigenvalues are stored in ascending order and are bounded below by
/// `lower_bound = l_1 > 0`, so `ℓ_L ‖f‖ ≤ ‖L f‖` holds coordinatewise.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSpectrum {
    eigenvalues: Vec<f64>,
    log_eigenvalues: Vec<f64>,
}

impl ScaleSpectrum {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidParameter("scale spectrum must be non-empty".into()));
        }
        if let Some(bad) = eigenvalues.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "eigenvalues of L must be strictly positive and finite, found {bad}"
            )));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("eigenvalues of L must be nondecreasing".into()));
        }
        let log_eigenvalues = eigenvalues.iter().map(|l| l.ln()).collect();
        Ok(Self { eigenvalues, log_eigenvalues })
    }

    /// `l_k = k^gamma` for `k = 1..=dim`.
    pub fn power_law(dim: usize, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
        }
        Self::new((1..=dim).map(|k| (k as f64).powf(gamma)).collect())
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The constant `ℓ_L` with `ℓ_L ‖f‖ ≤ ‖Lf‖`.
    pub fn lower_bound(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `l_k^a`, saturating to `0` or `inf` outside the representable range.
    pub fn power(&self, k: usize, a: f64) -> f64 {
        (a * self.log_eigenvalues[k]).exp()
    }

    pub fn check(&self, f: &CoefficientVector) -> Result<()> {
        check_len(self.dim(), f.len())
    }

    /// `‖f‖_{H_a} = ‖L^a f‖_H`.
    pub fn scale_norm(&self, f: &CoefficientVector, a: f64) -> Result<f64> {
        self.check(f)?;
        if a == 0.0 {
            return Ok(f.norm());
        }
        // Scaled summation in log space: each term is exp(2 w_k).
        let logs: Vec<f64> = f
            .as_slice()
            .iter()
            .zip(&self.log_eigenvalues)
            .filter(|(c, _)| **c != 0.0)
            .map(|(c, ll)| a * ll + c.abs().ln())
            .collect();
        let Some(top) = logs.iter().cloned().reduce(f64::max) else {
            return Ok(0.0);
        };
        let sum: f64 = logs.iter().map(|w| (2.0 * (w - top)).exp()).sum();
        Ok(top.exp() * sum.sqrt())
    }

    /// Coordinatewise multiplication by `l_k^a`.
    pub fn apply_power(&self, f: &CoefficientVector, a: f64) -> Result<CoefficientVector> {
        self.check(f)?;
        if a == 0.0 {
            return Ok(f.clone());
        }
        let out = f
            .as_slice()
            .iter()
            .zip(&self.log_eigenvalues)
            .map(|(&c, &ll)| {
                let e = a * ll;
                if e.abs() <= LOG_SPACE_THRESHOLD || c == 0.0 {
                    c * e.exp()
                } else {
                    c.signum() * (e + c.abs().ln()).exp()
                }
            })
            .collect();
        Ok(CoefficientVector::from_vec(out))
    }

    /// `‖f‖_b − ‖f‖_a^{(c−b)/(c−a)} ‖f‖_c^{(b−a)/(c−a)}`, nonpositive up to roundoff.
    pub fn interpolation_residual(
        &self,
        f: &CoefficientVector,
        a: f64,
        b: f64,
        c: f64,
    ) -> Result<f64> {
        if !(a < b && b < c) {
            return Err(Error::InvalidParameter(format!(
                "interpolation requires a < b < c, got ({a}, {b}, {c})"
            )));
        }
        let nb = self.scale_norm(f, b)?;
        let na = self.scale_norm(f, a)?;
        let nc = self.scale_norm(f, c)?;
        let wa = (c - b) / (c - a);
        let wc = (b - a) / (c - a);
        Ok(nb - na.powf(wa) * nc.powf(wc))
    }
}

/// Config form of a scale spectrum: an explicit list or the rule `l_k = k^gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub eigenvalues: Option<Vec<f64>>,
}

fn default_dim() -> usize {
    512
}

fn default_gamma() -> f64 {
    1.0
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self { dim: default_dim(), gamma: default_gamma(), eigenvalues: None }
    }
}

impl ScaleConfig {
    pub fn build(&self) -> Result<ScaleSpectrum> {
        match &self.eigenvalues {
            Some(list) => ScaleSpectrum::new(list.clone()),
            None => ScaleSpectrum::power_law(self.dim, self.gamma),
        }
    }
}
