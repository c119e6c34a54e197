//! Forward operators `A: H → H′` with auditable conditional stability.
//!
//! Both families act coordinatewise between the eigenbasis of `L` and the
//! Mercer coordinates of `H′`. With the calibration `√t_k a_k = l_k^{−p}` the
//! linear family satisfies `‖f − f̂‖_{H_{−p}} = ‖I_ν[A(f) − A(f̂)]‖`, i.e. the
//! stability estimate holds in both directions with `s = 1`, `α = β = 1`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_positive, Error, Result};
use crate::rkhs::KernelModel;
use crate::spectral::{CoefficientVector, ScaleSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardKind {
    DiagonalLinear,
    QuadraticPerturbation,
}

/// Constants of the conditional stability estimate and of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityProfile {
    pub p: f64,
    pub s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub domain_radius: f64,
    /// Lipschitz constant of `f ↦ I_ν A(f)` on the domain ball.
    pub lipschitz: f64,
}

impl StabilityProfile {
    fn validate(&self) -> Result<()> {
        if !(self.p >= 0.0) {
            return Err(Error::InvalidParameter(format!("p must be >= 0, got {}", self.p)));
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(Error::InvalidParameter(format!("s must lie in (0, 1], got {}", self.s)));
        }
        check_positive("alpha", self.alpha)?;
        check_positive("beta", self.beta)?;
        check_positive("domain_radius", self.domain_radius)?;
        check_positive("lipschitz", self.lipschitz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    kind: ForwardKind,
    diag: Vec<f64>,
    gamma: f64,
    center: CoefficientVector,
    profile: StabilityProfile,
    scale: ScaleSpectrum,
    sqrt_t: Vec<f64>,
}

/// `a_k = l_k^{−p} / √t_k`.
fn calibrated_diag(scale: &ScaleSpectrum, kernel: &KernelModel, p: f64) -> Result<Vec<f64>> {
    check_len(scale.dim(), kernel.dim())?;
    if kernel.eigenvalues().iter().any(|t| *t <= 0.0) {
        return Err(Error::InvalidParameter(
            "link calibration needs strictly positive kernel eigenvalues".into(),
        ));
    }
    Ok((0..scale.dim())
        .map(|k| scale.power(k, -p) / kernel.eigenvalues()[k].sqrt())
        .collect())
}

impl ForwardModel {
    /// Linear diagonal model with the link calibration `√t_k a_k = l_k^{−p}`.
    pub fn calibrated_linear(
        scale: &ScaleSpectrum,
        kernel: &KernelModel,
        p: f64,
        center: CoefficientVector,
        domain_radius: f64,
    ) -> Result<Self> {
        Self::calibrated_quadratic(scale, kernel, p, 0.0, center, domain_radius)
            .map(|m| Self { kind: ForwardKind::DiagonalLinear, ..m })
    }

    /// `A(f)_k = a_k f_k + γ (a_k f_k)²` with calibrated `a_k`.
    ///
    /// The profile keeps `s = 1` and widens `α = 1/(1 − ε)`, `β = α(1 + ε)`
    /// where `ε = 2|γ| max_k a_k (|c_k| + radius)` over the domain ball.
    pub fn calibrated_quadratic(
        scale: &ScaleSpectrum,
        kernel: &KernelModel,
        p: f64,
        gamma: f64,
        center: CoefficientVector,
        domain_radius: f64,
    ) -> Result<Self> {
        check_positive("domain_radius", domain_radius)?;
        check_len(scale.dim(), center.len())?;
        let diag = calibrated_diag(scale, kernel, p)?;
        let sqrt_t: Vec<f64> = kernel.eigenvalues().iter().map(|t| t.sqrt()).collect();
        let c = center.as_slice();
        let spread = (0..diag.len())
            .map(|k| 2.0 * diag[k] * (c[k].abs() + domain_radius))
            .fold(0.0, f64::max);
        let eps = gamma.abs() * spread;
        if eps >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "nonlinearity too strong for a stability certificate on the domain (gamma * spread = {eps})"
            )));
        }
        let lipschitz = (0..diag.len())
            .map(|k| sqrt_t[k] * diag[k] * (1.0 + 2.0 * gamma.abs() * diag[k] * (c[k].abs() + domain_radius)))
            .fold(0.0, f64::max);
        let alpha = 1.0 / (1.0 - eps);
        let profile = StabilityProfile {
            p,
            s: 1.0,
            alpha,
            beta: alpha * (1.0 + eps),
            domain_radius,
            lipschitz,
        };
        profile.validate()?;
        let kind = if gamma == 0.0 { ForwardKind::DiagonalLinear } else { ForwardKind::QuadraticPerturbation };
        Ok(Self { kind, diag, gamma, center, profile, scale: scale.clone(), sqrt_t })
    }

    /// General constructor with a declared profile.
    pub fn new(
        kind: ForwardKind,
        diag: Vec<f64>,
        gamma: f64,
        center: CoefficientVector,
        profile: StabilityProfile,
        scale: &ScaleSpectrum,
        kernel: &KernelModel,
    ) -> Result<Self> {
        check_len(scale.dim(), diag.len())?;
        check_len(scale.dim(), kernel.dim())?;
        check_len(scale.dim(), center.len())?;
        if diag.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter("diagonal coefficients must be positive".into()));
        }
        if kind == ForwardKind::DiagonalLinear && gamma != 0.0 {
            return Err(Error::InvalidParameter("diagonal_linear requires gamma = 0".into()));
        }
        profile.validate()?;
        let sqrt_t = kernel.eigenvalues().iter().map(|t| t.sqrt()).collect();
        Ok(Self { kind, diag, gamma, center, profile, scale: scale.clone(), sqrt_t })
    }

    /// Replaces the declared profile, e.g. with a conservative `s < 1`.
    pub fn with_profile(mut self, profile: StabilityProfile) -> Result<Self> {
        profile.validate()?;
        self.profile = profile;
        Ok(self)
    }

    pub fn kind(&self) -> ForwardKind {
        self.kind
    }

    pub fn is_linear(&self) -> bool {
        self.gamma == 0.0
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn center(&self) -> &CoefficientVector {
        &self.center
    }

    pub fn profile(&self) -> &StabilityProfile {
        &self.profile
    }

    pub fn scale(&self) -> &ScaleSpectrum {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn contains(&self, f: &CoefficientVector) -> bool {
        f.len() == self.dim()
            && f.sub(&self.center).norm() <= self.profile.domain_radius * (1.0 + 1e-12)
    }

    pub fn check_domain(&self, f: &CoefficientVector) -> Result<()> {
        check_len(self.dim(), f.len())?;
        let distance = f.sub(&self.center).norm();
        if distance <= self.profile.domain_radius * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(Error::DomainViolation { distance, radius: self.profile.domain_radius })
        }
    }

    /// Euclidean projection onto the domain ball.
    pub fn project(&self, f: &CoefficientVector) -> CoefficientVector {
        let d = f.sub(&self.center);
        let n = d.norm();
        if n <= self.profile.domain_radius {
            f.clone()
        } else {
            self.center.add(&d.scale(self.profile.domain_radius / n))
        }
    }

    /// `A(f)` in `H′` coordinates; rejects points outside the domain ball.
    pub fn forward_apply(&self, f: &CoefficientVector) -> Result<CoefficientVector> {
        self.check_domain(f)?;
        Ok(self.apply_unchecked(f))
    }

    pub(crate) fn apply_unchecked(&self, f: &CoefficientVector) -> CoefficientVector {
        let g = self.gamma;
        CoefficientVector::from_vec(
            f.as_slice()
                .iter()
                .zip(&self.diag)
                .map(|(x, a)| {
                    let y = a * x;
                    y + g * y * y
                })
                .collect(),
        )
    }

    /// Diagonal of the derivative `A′(f)`.
    pub fn derivative_diag(&self, f: &CoefficientVector) -> Vec<f64> {
        f.as_slice()
            .iter()
            .zip(&self.diag)
            .map(|(x, a)| a * (1.0 + 2.0 * self.gamma * a * x))
            .collect()
    }

    /// `‖I_ν g‖` for `g` in `H′` coordinates.
    pub fn embedded_norm(&self, g: &CoefficientVector) -> f64 {
        g.as_slice()
            .iter()
            .zip(&self.sqrt_t)
            .map(|(c, s)| (s * c).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖I_ν[A(f) − A(g)]‖` without domain checks.
    pub fn image_distance(&self, f: &CoefficientVector, g: &CoefficientVector) -> f64 {
        self.embedded_norm(&self.apply_unchecked(f).sub(&self.apply_unchecked(g)))
    }
}

/// Worst-case ratios of the two stability inequalities over sampled points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityAudit {
    pub trials: usize,
    /// `max ‖f − f̂‖_{−p} / (α ‖I_ν[A(f) − A(f̂)]‖^s)`.
    pub lower_ratio: f64,
    /// `max α ‖I_ν[A(f) − A(f̂)]‖^s / (β ‖f − f̂‖_{−p})`.
    pub upper_ratio: f64,
    /// `max ‖I_ν[A(f) − A(g)]‖ / (ℓ_A ‖f − g‖)`.
    pub lipschitz_ratio: f64,
}

impl StabilityAudit {
    pub fn passes(&self, slack: f64) -> bool {
        self.lower_ratio <= 1.0 + slack
            && self.upper_ratio <= 1.0 + slack
            && self.lipschitz_ratio <= 1.0 + slack
    }
}

/// Uniform draw from the ball of radius `radius` around `center`.
fn draw_in_ball(rng: &mut ChaCha8Rng, center: &CoefficientVector, radius: f64) -> CoefficientVector {
    let n = center.len();
    let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let dir = CoefficientVector::from_vec(dir);
    let u: f64 = Uniform::new(0.0, 1.0).unwrap().sample(rng);
    let r = radius * u.powf(1.0 / n as f64);
    center.add(&dir.scale(r / dir.norm()))
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Samples `f` uniformly in the largest ball around `f̂` inside the domain
/// and records the worst violation of both stability directions.
pub fn stability_audit(
    model: &ForwardModel,
    f_hat: &CoefficientVector,
    trials: usize,
    seed: u64,
) -> Result<StabilityAudit> {
    if trials == 0 {
        return Err(Error::InvalidParameter("audit needs at least one trial".into()));
    }
    model.check_domain(f_hat)?;
    let prof = *model.profile();
    let radius = prof.domain_radius - f_hat.sub(model.center()).norm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lower: f64 = 0.0;
    let mut upper: f64 = 0.0;
    let mut lip: f64 = 0.0;
    for i in 0..trials {
        // The first probe is the degenerate point f = f̂.
        let f = if i == 0 { f_hat.clone() } else { draw_in_ball(&mut rng, f_hat, radius) };
        let weak = model.scale().scale_norm(&f.sub(f_hat), -prof.p)?;
        let image = prof.alpha * model.image_distance(&f, f_hat).powf(prof.s);
        lower = lower.max(ratio(weak, image));
        upper = upper.max(ratio(image, prof.beta * weak));

        let g = draw_in_ball(&mut rng, model.center(), prof.domain_radius);
        let h = draw_in_ball(&mut rng, model.center(), prof.domain_radius);
        lip = lip.max(ratio(model.image_distance(&g, &h), prof.lipschitz * g.sub(&h).norm()));
    }
    Ok(StabilityAudit { trials, lower_ratio: lower, upper_ratio: upper, lipschitz_ratio: lip })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_kind")]
    pub kind: ForwardKind,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub p: f64,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_radius")]
    pub domain_radius: f64,
}

fn default_kind() -> ForwardKind {
    ForwardKind::DiagonalLinear
}

fn default_s() -> f64 {
    1.0
}

fn default_radius() -> f64 {
    10.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kind: default_kind(), gamma: 0.0, p: 0.0, s: default_s(), domain_radius: default_radius() }
    }
}

impl ModelConfig {
    /// Builds the calibrated model centred at `center` (normally `f̂`).
    pub fn build(
        &self,
        scale: &ScaleSpectrum,
        kernel: &KernelModel,
        center: CoefficientVector,
    ) -> Result<ForwardModel> {
        let model = match self.kind {
            ForwardKind::DiagonalLinear => {
                if self.gamma != 0.0 {
                    return Err(Error::Config("model.gamma must be 0 for diagonal_linear".into()));
                }
                ForwardModel::calibrated_linear(scale, kernel, self.p, center, self.domain_radius)?
            }
            ForwardKind::QuadraticPerturbation => ForwardModel::calibrated_quadratic(
                scale,
                kernel,
                self.p,
                self.gamma,
                center,
                self.domain_radius,
            )
            .map(|m| Self::force_kind(m, ForwardKind::QuadraticPerturbation))?,
        };
        if self.s != model.profile().s {
            // A declared s < 1 is implied by s = 1 on bounded residuals.
            let mut prof = *model.profile();
            prof.s = self.s;
            return model.with_profile(prof);
        }
        Ok(model)
    }

    fn force_kind(mut m: ForwardModel, kind: ForwardKind) -> ForwardModel {
        m.kind = kind;
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rkhs::Basis;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn setup(n: usize) -> (ScaleSpectrum, KernelModel) {
        (
            ScaleSpectrum::power_law(n, 1.0).unwrap(),
            KernelModel::power_decay(Basis::Cosine, n, 0.5).unwrap(),
        )
    }

    fn plain_diag(diag: Vec<f64>, gamma: f64) -> ForwardModel {
        let n = diag.len();
        let scale = ScaleSpectrum::new(vec![1.0; n]).unwrap();
        let kernel = KernelModel::new(Basis::Cosine, vec![1.0; n]).unwrap();
        let prof = StabilityProfile { p: 0.0, s: 1.0, alpha: 1.0, beta: 1.0, domain_radius: 100.0, lipschitz: 1.0 };
        let kind = if gamma == 0.0 { ForwardKind::DiagonalLinear } else { ForwardKind::QuadraticPerturbation };
        ForwardModel::new(kind, diag, gamma, CoefficientVector::zeros(n), prof, &scale, &kernel).unwrap()
    }

    #[test]
    fn forward_apply_examples() {
        let lin = plain_diag(vec![1.0, 0.5], 0.0);
        let out = lin.forward_apply(&CoefficientVector::from_vec(vec![2.0, 2.0])).unwrap();
        assert_eq!(out.to_vec(), vec![2.0, 1.0]);
        let quad = plain_diag(vec![1.0, 0.5], 0.3);
        for m in [&lin, &quad] {
            let z = m.forward_apply(&CoefficientVector::zeros(2)).unwrap();
            assert!(z.as_slice().iter().all(|v| *v == 0.0));
        }
        let q = quad.forward_apply(&CoefficientVector::from_vec(vec![2.0, 2.0])).unwrap();
        assert_relative_eq!(q[0], 2.0 + 0.3 * 4.0);
        assert_relative_eq!(q[1], 1.0 + 0.3 * 1.0);
    }

    #[test]
    fn domain_violation_rejected() {
        let (scale, kernel) = setup(4);
        let m = ForwardModel::calibrated_linear(&scale, &kernel, 1.0, CoefficientVector::zeros(4), 1.0).unwrap();
        let far = CoefficientVector::from_vec(vec![2.0, 0.0, 0.0, 0.0]);
        assert!(matches!(m.forward_apply(&far), Err(Error::DomainViolation { .. })));
        let proj = m.project(&far);
        assert_relative_eq!(proj.norm(), 1.0, max_relative = 1e-15);
        assert!(m.forward_apply(&proj).is_ok());
    }

    #[test]
    fn zero_gamma_reduces_to_linear() {
        let (scale, kernel) = setup(16);
        let c = CoefficientVector::zeros(16);
        let lin = ForwardModel::calibrated_linear(&scale, &kernel, 0.5, c.clone(), 5.0).unwrap();
        let quad = ForwardModel::calibrated_quadratic(&scale, &kernel, 0.5, 0.0, c, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let f = lin.project(&CoefficientVector::from_vec((0..16).map(|_| rng.random_range(-1.0..1.0)).collect()));
            let a = lin.forward_apply(&f).unwrap();
            let b = quad.forward_apply(&f).unwrap();
            assert_eq!(a, b);
            // Deterministic bitwise.
            assert_eq!(a, lin.forward_apply(&f).unwrap());
        }
    }

    #[test]
    fn calibrated_linear_is_exactly_two_sided() {
        let (scale, kernel) = setup(32);
        let p = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f_hat = CoefficientVector::from_vec((0..32).map(|_| rng.random_range(-0.1..0.1)).collect());
        let m = ForwardModel::calibrated_linear(&scale, &kernel, p, f_hat.clone(), 2.0).unwrap();
        for _ in 0..50 {
            let f = draw_in_ball(&mut rng, &f_hat, 2.0);
            let weak = scale.scale_norm(&f.sub(&f_hat), -p).unwrap();
            let image = m.image_distance(&f, &f_hat);
            assert_relative_eq!(weak, image, max_relative = 1e-12);
        }
        let audit = stability_audit(&m, &f_hat, 200, 4).unwrap();
        assert!(audit.lower_ratio <= 1.0 + 1e-12);
        assert!(audit.upper_ratio <= 1.0 + 1e-12);
        assert!(audit.lipschitz_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn small_gamma_quadratic_audit() {
        // a_k ≤ 1 so γ ≤ 0.01 / radius keeps the certificate tight.
        let n = 24;
        let scale = ScaleSpectrum::power_law(n, 1.0).unwrap();
        let kernel = KernelModel::new(Basis::Cosine, vec![1.0; n]).unwrap();
        let radius = 2.0;
        let f_hat = CoefficientVector::from_vec(vec![0.05; n]);
        let m = ForwardModel::calibrated_quadratic(&scale, &kernel, 1.0, 0.01 / radius, f_hat.clone(), radius).unwrap();
        assert_eq!(m.kind(), ForwardKind::QuadraticPerturbation);
        let audit = stability_audit(&m, &f_hat, 300, 2).unwrap();
        assert!(audit.passes(0.05), "{audit:?}");

        // Same model declared with the exact linear constants stays within slack.
        let mut declared = *m.profile();
        declared.alpha = 1.0;
        declared.beta = 1.0;
        let m = m.with_profile(declared).unwrap();
        let audit = stability_audit(&m, &f_hat, 300, 2).unwrap();
        assert!(audit.lower_ratio <= 1.05 && audit.upper_ratio <= 1.05, "{audit:?}");
    }

    #[test]
    fn degenerate_point_ratio_is_zero() {
        let (scale, kernel) = setup(8);
        let f_hat = CoefficientVector::zeros(8);
        let m = ForwardModel::calibrated_linear(&scale, &kernel, 0.0, f_hat.clone(), 1.0).unwrap();
        let audit = stability_audit(&m, &f_hat, 1, 0).unwrap();
        assert_eq!(audit.lower_ratio, 0.0);
        assert_eq!(audit.upper_ratio, 0.0);
        assert!(stability_audit(&m, &f_hat, 0, 0).is_err());
    }

    #[test]
    fn lipschitz_holds_on_random_pairs() {
        let n = 20;
        let scale = ScaleSpectrum::power_law(n, 1.0).unwrap();
        let kernel = KernelModel::power_decay(Basis::Cosine, n, 0.5).unwrap();
        let m = ForwardModel::calibrated_quadratic(&scale, &kernel, 1.0, 0.01, CoefficientVector::zeros(n), 1.0).unwrap();
        let lip = m.profile().lipschitz;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let f = draw_in_ball(&mut rng, m.center(), 1.0);
            let g = draw_in_ball(&mut rng, m.center(), 1.0);
            assert!(m.image_distance(&f, &g) <= lip * f.sub(&g).norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn strong_nonlinearity_rejected() {
        let (scale, kernel) = setup(8);
        let err = ForwardModel::calibrated_quadratic(&scale, &kernel, 0.0, 10.0, CoefficientVector::zeros(8), 1.0);
        assert!(err.is_err());
    }
}
