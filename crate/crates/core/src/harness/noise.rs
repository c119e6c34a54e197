//! Observation noise and its Bernstein constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
}

/// Centred noise with Bernstein constants `(M, Σ)`:
/// `E[e^{|ε|/M} − |ε|/M − 1] ≤ Σ² / (2M²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
    #[serde(rename = "M")]
    pub m_const: f64,
    #[serde(rename = "Sigma")]
    pub sigma_bern: f64,
}

impl NoiseSpec {
    /// Gaussian noise with `M = σ` and the smallest valid `Σ`, from quadrature.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::with_constants(sigma, default_m(sigma), None)
    }

    /// `sigma_bern = None` picks `Σ = M √(2 E[…])`.
    pub fn with_constants(sigma: f64, m_const: f64, sigma_bern: Option<f64>) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise.sigma must be nonnegative, got {sigma}")));
        }
        if !(m_const > 0.0 && m_const.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise.M must be positive, got {m_const}")));
        }
        let sigma_bern = match sigma_bern {
            Some(s) if s > 0.0 && s.is_finite() => s,
            Some(s) => return Err(Error::InvalidParameter(format!("noise.Sigma must be positive, got {s}"))),
            None => m_const * (2.0 * bernstein_moment(sigma, m_const)).sqrt(),
        };
        Ok(Self { kind: NoiseKind::Gaussian, sigma, m_const, sigma_bern })
    }

    /// `Σ² / (2M²)`.
    pub fn bernstein_rhs(&self) -> f64 {
        self.sigma_bern.powi(2) / (2.0 * self.m_const.powi(2))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        match self.kind {
            NoiseKind::Gaussian => Normal::new(0.0, self.sigma).expect("sigma validated").sample(rng),
        }
    }
}

fn default_m(sigma: f64) -> f64 {
    if sigma > 0.0 {
        sigma
    } else {
        1.0
    }
}

fn bernstein_integrand(u: f64) -> f64 {
    // e^u − u − 1 without cancellation for small u.
    if u < 1e-3 {
        u * u * (0.5 + u * (1.0 / 6.0 + u / 24.0))
    } else {
        u.exp_m1() - u
    }
}

/// `E[e^{|ε|/M} − |ε|/M − 1]` for `ε ~ N(0, σ²)` by composite Simpson
/// quadrature against the half-normal density.
pub fn bernstein_moment(sigma: f64, m_const: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let a = sigma / m_const;
    let upper = a + 40.0;
    let n = 20_000;
    let h = upper / n as f64;
    let density = |z: f64| (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * z * z).exp();
    let f = |z: f64| density(z) * bernstein_integrand(a * z);
    let mut acc = f(0.0) + f(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinAudit {
    pub draws: usize,
    /// Monte Carlo estimate of `E[e^{|ε|/M} − |ε|/M − 1]`.
    pub lhs: f64,
    pub std_err: f64,
    /// `std_err / lhs`, or 0 for degenerate noise.
    pub rel_std_err: f64,
    /// Quadrature value of the same expectation.
    pub quadrature: f64,
    /// `Σ² / (2M²)`.
    pub rhs: f64,
    pub passes: bool,
}

/// Passes if the estimate is at most `rhs · (1 + 3 · relative standard error)`.
pub fn bernstein_audit(noise: &NoiseSpec, draws: usize, seed: u64) -> Result<BernsteinAudit> {
    if draws < 10_000 {
        return Err(Error::InvalidParameter(format!("bernstein_audit needs at least 10^4 draws, got {draws}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let v = bernstein_integrand(noise.sample(&mut rng).abs() / noise.m_const);
        sum += v;
        sum_sq += v * v;
    }
    let n = draws as f64;
    let lhs = sum / n;
    let var = (sum_sq / n - lhs * lhs).max(0.0) * n / (n - 1.0);
    let std_err = (var / n).sqrt();
    let rhs = noise.bernstein_rhs();
    let rel_std_err = if lhs > 0.0 { std_err / lhs } else { 0.0 };
    Ok(BernsteinAudit {
        draws,
        lhs,
        std_err,
        rel_std_err,
        quadrature: bernstein_moment(noise.sigma, noise.m_const),
        rhs,
        passes: lhs <= rhs * (1.0 + 3.0 * rel_std_err),
    })
}

/// Config section `[noise]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_kind")]
    pub kind: NoiseKind,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m_const: Option<f64>,
    #[serde(rename = "Sigma", default, skip_serializing_if = "Option::is_none")]
    pub sigma_bern: Option<f64>,
}

fn default_kind() -> NoiseKind {
    NoiseKind::Gaussian
}

fn default_sigma() -> f64 {
    0.1
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { kind: default_kind(), sigma: default_sigma(), m_const: None, sigma_bern: None }
    }
}

impl NoiseConfig {
    pub fn build(&self) -> Result<NoiseSpec> {
        let m_const = self.m_const.unwrap_or(default_m(self.sigma));
        NoiseSpec::with_constants(self.sigma, m_const, self.sigma_bern)
    }
}
