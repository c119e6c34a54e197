//! Effective-dimension decay models, a-priori parameter choices and the
//! theoretical convergence exponents.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::rkhs::{effective_dimension_of, CovarianceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayKind {
    /// `N(λ) ≤ C λ^{−b}`.
    Polynomial,
    /// `N(λ) ≤ C log(1/λ)`.
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayModel {
    pub kind: DecayKind,
    pub b: f64,
    pub c: f64,
}

impl DecayModel {
    pub fn polynomial(b: f64, c: f64) -> Result<Self> {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::InvalidParameter(format!("decay.b must lie in (0, 1), got {b}")));
        }
        check_positive("decay.C", c)?;
        Ok(Self { kind: DecayKind::Polynomial, b, c })
    }

    pub fn logarithmic(c: f64) -> Result<Self> {
        check_positive("decay.C", c)?;
        Ok(Self { kind: DecayKind::Logarithmic, b: 0.0, c })
    }

    /// Polynomial model for `t_j = j^{−1/b}`, with `C = bπ / sin(bπ)`, the
    /// value of `λ^b ∫_0^∞ dx / (1 + λ x^{1/b})`.
    pub fn for_power_spectrum(b: f64) -> Result<Self> {
        let pi_b = std::f64::consts::PI * b;
        Self::polynomial(b, pi_b / pi_b.sin())
    }

    pub fn bound(&self, lambda: f64) -> f64 {
        match self.kind {
            DecayKind::Polynomial => self.c * lambda.powf(-self.b),
            DecayKind::Logarithmic => self.c * (1.0 / lambda).ln(),
        }
    }

    /// Checks `N(λ) ≤ bound(λ)` on `lambdas`; the largest λ may exceed the
    /// bound by at most 1%.
    pub fn audit(&self, cov: &CovarianceModel, lambdas: &[f64]) -> DecayAudit {
        let spectrum = cov.spectrum();
        let coarsest = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut worst_ratio: f64 = 0.0;
        let mut passes = true;
        for &lambda in lambdas {
            let ratio = effective_dimension_of(&spectrum, lambda) / self.bound(lambda);
            let allowed = if lambda == coarsest { 1.01 } else { 1.0 };
            passes &= ratio <= allowed;
            worst_ratio = worst_ratio.max(ratio);
        }
        DecayAudit { worst_ratio, passes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayAudit {
    /// Largest `N(λ) / bound(λ)` on the grid.
    pub worst_ratio: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `r ≥ q`.
    Regular,
    /// `r ≤ q`, `r + p ≤ 2q`.
    Oversmoothing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateParams {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub u: f64,
    pub regime: Regime,
}

impl RateParams {
    /// Regime derived from `q` versus `r`.
    pub fn new(p: f64, q: f64, r: f64, s: f64) -> Result<Self> {
        let regime = if r >= q { Regime::Regular } else { Regime::Oversmoothing };
        Self::with_regime(p, q, r, s, regime)
    }

    pub fn with_regime(p: f64, q: f64, r: f64, s: f64, regime: Regime) -> Result<Self> {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must be nonnegative, got {p}")));
        }
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidParameter(format!("s must lie in (0, 1], got {s}")));
        }
        check_positive("q", q)?;
        check_positive("r", r)?;
        match regime {
            Regime::Regular if r < q => {
                return Err(Error::RegimeViolation(format!("regular case needs r >= q, got r = {r}, q = {q}")));
            }
            Regime::Oversmoothing if r > q || r + p > 2.0 * q => {
                return Err(Error::RegimeViolation(format!(
                    "oversmoothing case needs r <= q and r + p <= 2q, got p = {p}, q = {q}, r = {r}"
                )));
            }
            _ => {}
        }
        let index = match regime {
            Regime::Regular => q,
            Regime::Oversmoothing => r,
        };
        let denom = 2.0 * (p + index) - 2.0 * s * (index - 1.0);
        if denom <= 0.0 {
            return Err(Error::RegimeViolation(format!("rate denominator {denom} is not positive")));
        }
        Ok(Self { p, q, r, s, u: (p + index) / denom, regime })
    }

    /// Smoothness index that drives the rate: `q` when regular, `r` when oversmoothing.
    pub fn effective_index(&self) -> f64 {
        match self.regime {
            Regime::Regular => self.q,
            Regime::Oversmoothing => self.r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponents {
    /// `‖f_{z,λ} − f̂‖ = O(λ^e)`.
    pub lambda_exponent_reconstruction: f64,
    /// `‖I_ν[A(f_{z,λ}) − A(f̂)]‖ = O(λ^e)`.
    pub lambda_exponent_prediction: f64,
    /// Reconstruction error `= O(m^{−e})` at the a-priori `λ*`.
    pub m_exponent_reconstruction: f64,
    pub m_exponent_prediction: f64,
}

pub fn theoretical_exponents(params: &RateParams, decay: &DecayModel) -> Result<Exponents> {
    let RateParams { p, q, r, s, regime, .. } = *params;
    let checked = RateParams::with_regime(p, q, r, s, regime)?;
    let index = checked.effective_index();
    let recon = s * index / (2.0 * (p + index) - 2.0 * s * (index - 1.0));
    let m_scale = match decay.kind {
        DecayKind::Polynomial => 1.0 / (2.0 * checked.u + decay.b),
        DecayKind::Logarithmic => 1.0 / (2.0 * r + 1.0),
    };
    Ok(Exponents {
        lambda_exponent_reconstruction: recon,
        lambda_exponent_prediction: checked.u,
        m_exponent_reconstruction: recon * m_scale,
        m_exponent_prediction: checked.u * m_scale,
    })
}

/// `0 < λ ≤ 1` and `N(λ) ≤ mλ`; the boundary case counts as admissible.
pub fn check_admissible(m: usize, lambda: f64, cov: &CovarianceModel) -> bool {
    lambda > 0.0 && lambda <= 1.0 && effective_dimension_of(&cov.spectrum(), lambda) <= m as f64 * lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaInversion {
    pub lambda: f64,
    /// Target unreachable in `(0, 1]`; `lambda` was clamped to 1.
    pub clamped: bool,
}

/// `Θ(t) = t^u / √N(t)`.
pub fn theta(t: f64, u: f64, spectrum: &[f64]) -> f64 {
    t.powf(u) / effective_dimension_of(spectrum, t).sqrt()
}

/// Solves `Θ(λ) = 1/√m` by bisection on `log t` over `[1e−16, 1]`.
/// The upper end of the final bracket is returned, so `Θ(λ*) ≥ 1/√m`.
pub fn invert_theta(m: usize, u: f64, cov: &CovarianceModel) -> Result<ThetaInversion> {
    invert_theta_spectrum(m, u, &cov.spectrum())
}

pub fn invert_theta_spectrum(m: usize, u: f64, spectrum: &[f64]) -> Result<ThetaInversion> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("invert_theta needs m >= 2, got {m}")));
    }
    check_positive("u", u)?;
    let target = 1.0 / (m as f64).sqrt();
    if theta(1.0, u, spectrum) < target {
        log::warn!("Θ(1) < 1/√m for m = {m}; clamping λ* to 1");
        return Ok(ThetaInversion { lambda: 1.0, clamped: true });
    }
    if reaches(m as f64, THETA_FLOOR, u, spectrum) {
        return Ok(ThetaInversion { lambda: THETA_FLOOR, clamped: true });
    }
    Ok(ThetaInversion { lambda: bisect_theta(m as f64, u, spectrum), clamped: false })
}

const THETA_FLOOR: f64 = 1e-16;

/// `Θ(t) ≥ 1/√m`, written as `m t^{2u} ≥ N(t)` so that for `u = 1/2` it is
/// exactly the admissibility inequality.
fn reaches(m: f64, t: f64, u: f64, spectrum: &[f64]) -> bool {
    m * t.powf(2.0 * u) >= effective_dimension_of(spectrum, t)
}

/// Smallest `t` in `[1e−16, 1]` with `Θ(t) ≥ 1/√m`, to machine precision in `log t`.
fn bisect_theta(m: f64, u: f64, spectrum: &[f64]) -> f64 {
    let (mut lo, mut hi) = (THETA_FLOOR.ln(), 0.0_f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if reaches(m, mid.exp(), u, spectrum) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi.exp()
}

/// Closed-form a-priori choice: `m^{−1/(2u+b)}` (polynomial) or
/// `(log m / m)^{1/(2r+1)}` (logarithmic).
pub fn apriori_lambda(m: f64, decay: &DecayModel, params: &RateParams) -> Result<f64> {
    if !(m >= 2.0) {
        return Err(Error::InvalidParameter(format!("apriori_lambda needs m >= 2, got {m}")));
    }
    Ok(match decay.kind {
        DecayKind::Polynomial => m.powf(-1.0 / (2.0 * params.u + decay.b)),
        DecayKind::Logarithmic => (m.ln() / m).powf(1.0 / (2.0 * params.r + 1.0)),
    })
}

/// Config section `[decay]`. Omitted keys are derived from the kernel spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<DecayKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

impl DecayConfig {
    /// `spectrum_b` is the exponent of a `t_j = j^{−1/b}` kernel spectrum, if any.
    pub fn build(&self, spectrum_b: Option<f64>) -> Result<DecayModel> {
        match self.kind.unwrap_or(DecayKind::Polynomial) {
            DecayKind::Polynomial => {
                let b = self.b.or(spectrum_b).ok_or_else(|| {
                    Error::Config("decay.b is required when the kernel spectrum is not a power law".into())
                })?;
                match self.c {
                    Some(c) => DecayModel::polynomial(b, c),
                    None => DecayModel::for_power_spectrum(b),
                }
            }
            DecayKind::Logarithmic => {
                let c = self.c.ok_or_else(|| Error::Config("decay.C is required for logarithmic decay".into()))?;
                DecayModel::logarithmic(c)
            }
        }
    }
}

/// Config section `[rate]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    /// Overrides the regime derived from `q` versus `r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
}
