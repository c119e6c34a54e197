//! Source conditions, distance functions and the radius balancing rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_positive, Error, Result};
use crate::forward::ForwardModel;
use crate::spectral::{CoefficientVector, ScaleSpectrum};

/// `f̂ − f̄ = L^{−r} v` with `‖v‖ ≤ R†`, plus the benchmark smoothness `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceCondition {
    pub r: f64,
    pub r_dagger: f64,
    pub q: f64,
    pub f_bar: CoefficientVector,
    /// Decay exponent of the coefficient profile `|v_k| ∝ k^{−v_decay}`.
    pub v_decay: f64,
}

impl SourceCondition {
    pub fn new(r: f64, r_dagger: f64, q: f64, f_bar: CoefficientVector) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("r must be nonnegative, got {r}")));
        }
        check_positive("R_dagger", r_dagger)?;
        if !q.is_finite() {
            return Err(Error::InvalidParameter(format!("q must be finite, got {q}")));
        }
        Ok(Self { r, r_dagger, q, f_bar, v_decay: 0.5 })
    }

    pub fn with_v_decay(mut self, v_decay: f64) -> Result<Self> {
        if !(v_decay >= 0.0 && v_decay.is_finite()) {
            return Err(Error::InvalidParameter(format!("v_decay must be nonnegative, got {v_decay}")));
        }
        self.v_decay = v_decay;
        Ok(self)
    }

    /// `1 ≤ q ≤ 2 + p` and `q(s − 1) ≤ p + s`.
    pub fn check_hypotheses(&self, p: f64, s: f64) -> Result<()> {
        let q = self.q;
        if !(1.0..=2.0 + p).contains(&q) {
            return Err(Error::RegimeViolation(format!("need 1 <= q <= 2 + p, got q = {q}, p = {p}")));
        }
        if q * (s - 1.0) > p + s {
            return Err(Error::RegimeViolation(format!("need q(s - 1) <= p + s, got q = {q}, s = {s}, p = {p}")));
        }
        Ok(())
    }
}

/// `f̄ + L^{−r} v`.
pub fn truth_from_source(
    f_bar: &CoefficientVector,
    scale: &ScaleSpectrum,
    r: f64,
    v: &CoefficientVector,
) -> Result<CoefficientVector> {
    check_len(scale.dim(), f_bar.len())?;
    Ok(f_bar.add(&scale.apply_power(v, -r)?))
}

/// Synthetic truth on the boundary `‖v‖ = R†`, with Rademacher signs and
/// magnitudes `k^{−v_decay}` drawn from `seed`.
pub fn make_truth(source: &SourceCondition, scale: &ScaleSpectrum, seed: u64) -> Result<CoefficientVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = CoefficientVector::from_vec(
        (0..scale.dim())
            .map(|k| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * ((k + 1) as f64).powf(-source.v_decay)
            })
            .collect(),
    );
    let v = raw.scale(source.r_dagger / raw.norm());
    truth_from_source(&source.f_bar, scale, source.r, &v)
}

/// Minimizer of `‖f − f̂‖` over `f = f̄ + L^{−q} v`, `‖v‖ ≤ R`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSolution {
    pub distance: f64,
    pub minimizer: CoefficientVector,
    /// Lagrange multiplier of the norm constraint.
    pub multiplier: f64,
    /// `‖v‖ = ‖L^q(f̂^R − f̄)‖` at the minimizer.
    pub source_norm: f64,
}

/// `R̄ = ‖L^q(f̂ − f̄)‖`, the smallest radius with `d(R) = 0`.
pub fn fixed_radius(q: f64, f_hat: &CoefficientVector, f_bar: &CoefficientVector, scale: &ScaleSpectrum) -> Result<f64> {
    check_len(scale.dim(), f_bar.len())?;
    scale.scale_norm(&f_hat.sub(f_bar), q)
}

/// Solves the distance problem with `f_k = f̄_k + w_k / (1 + μ l_k^{2q})`,
/// `w = f̂ − f̄`, and `μ ≥ 0` found by bisection on `‖v(μ)‖ = R`.
pub fn distance_function(
    radius: f64,
    q: f64,
    f_hat: &CoefficientVector,
    f_bar: &CoefficientVector,
    scale: &ScaleSpectrum,
) -> Result<DistanceSolution> {
    check_positive("R", radius)?;
    check_len(scale.dim(), f_hat.len())?;
    check_len(scale.dim(), f_bar.len())?;
    let w = f_hat.sub(f_bar);
    let weights: Vec<f64> = (0..scale.dim()).map(|k| scale.power(k, 2.0 * q)).collect();
    let source_norm = |mu: f64| -> f64 {
        weights
            .iter()
            .zip(w.as_slice())
            .map(|(g, wk)| g * (wk / (1.0 + mu * g)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mu = if source_norm(0.0) <= radius {
        0.0
    } else {
        let mut hi = 1.0;
        while source_norm(hi) > radius {
            hi *= 2.0;
            assert!(hi.is_finite(), "multiplier bracket diverged");
        }
        let mut lo = 0.0;
        while hi - lo > f64::EPSILON * hi {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if source_norm(mid) > radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let minimizer = CoefficientVector::from_vec(
        (0..scale.dim())
            .map(|k| f_bar[k] + w[k] / (1.0 + mu * weights[k]))
            .collect(),
    );
    Ok(DistanceSolution {
        distance: minimizer.sub(f_hat).norm(),
        source_norm: source_norm(mu),
        multiplier: mu,
        minimizer,
    })
}

/// `d(R)`, the image distance `d_A(R)` and the weak distance `d^p(R)`
/// evaluated at the minimizer `f̂^R`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceProfiles {
    pub d: f64,
    pub d_a: f64,
    pub d_p: f64,
    pub minimizer: CoefficientVector,
}

pub fn distance_profiles(
    radius: f64,
    q: f64,
    model: &ForwardModel,
    f_hat: &CoefficientVector,
    f_bar: &CoefficientVector,
) -> Result<DistanceProfiles> {
    let sol = distance_function(radius, q, f_hat, f_bar, model.scale())?;
    let diff = sol.minimizer.sub(f_hat);
    Ok(DistanceProfiles {
        d: sol.distance,
        d_a: model.image_distance(&sol.minimizer, f_hat),
        d_p: model.scale().scale_norm(&diff, -model.profile().p)?,
        minimizer: sol.minimizer,
    })
}

/// `(R†)^{q/(q−r)} / R^{r/(q−r)}`, valid for `r < q`.
pub fn distance_bound(radius: f64, r_dagger: f64, q: f64, r: f64) -> f64 {
    weak_distance_bound(radius, r_dagger, q, r, 0.0)
}

/// `(R†)^{(q+p)/(q−r)} / R^{(r+p)/(q−r)}`, valid for `r < q`, `r + p ≤ 2q`.
pub fn weak_distance_bound(radius: f64, r_dagger: f64, q: f64, r: f64, p: f64) -> f64 {
    let gap = q - r;
    (((q + p) * r_dagger.ln() - (r + p) * radius.ln()) / gap).exp()
}

/// Power-law surrogate `d_A(R) = (R†)^{(q+p)/(s(q−r))} / R^{(r+p)/(s(q−r))}`,
/// the weak distance bound pushed through the stability estimate with unit
/// constants.
pub fn power_law_image_distance(r_dagger: f64, p: f64, q: f64, r: f64, s: f64) -> impl Fn(f64) -> f64 {
    move |radius: f64| weak_distance_bound(radius, r_dagger, q, r, p).powf(1.0 / s)
}

/// The indices entering the balancing equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceIndices {
    pub p: f64,
    pub q: f64,
    pub s: f64,
}

impl BalanceIndices {
    fn denominator(&self) -> f64 {
        (self.p + self.q) - self.s * (self.q - 1.0)
    }

    /// `Γ(R) = d_A(R) R^{−(p+1)/((p+q) − s(q−1))}`.
    pub fn gamma(&self, d_a: f64, radius: f64) -> f64 {
        d_a * radius.powf(-(self.p + 1.0) / self.denominator())
    }

    /// `λ^{(p+q)/(2(p+q) − 2s(q−1))}`.
    pub fn target(&self, lambda: f64) -> f64 {
        lambda.powf((self.p + self.q) / (2.0 * self.denominator()))
    }
}

/// Closed-form `R(λ) = (R†)^{((p+q)−s(q−1))/((p+r)−s(r−1))} λ^{s(r−q)/(2(p+r)−2s(r−1))}`
/// that solves the balancing equation for the power-law surrogate.
pub fn power_law_radius(lambda: f64, r_dagger: f64, idx: BalanceIndices, r: f64) -> f64 {
    let BalanceIndices { p, q, s } = idx;
    let dr = (p + r) - s * (r - 1.0);
    r_dagger.powf(idx.denominator() / dr) * lambda.powf(s * (r - q) / (2.0 * dr))
}

/// Solves `Γ(R) = target(λ)` by bisection on `log R`, for a nonincreasing
/// `d_A`. The initial bracket `[lo, hi]` is widened by decades as needed.
pub fn resolve_radius(
    lambda: f64,
    idx: BalanceIndices,
    d_a: impl Fn(f64) -> f64,
    bracket: (f64, f64),
) -> Result<f64> {
    check_positive("lambda", lambda)?;
    if idx.denominator() <= 0.0 {
        return Err(Error::RegimeViolation("need (p+q) - s(q-1) > 0".into()));
    }
    let (mut lo, mut hi) = bracket;
    check_positive("R lower bracket", lo)?;
    if hi <= lo {
        return Err(Error::InvalidParameter(format!("empty radius bracket [{lo}, {hi}]")));
    }
    let target = idx.target(lambda);
    let excess = |r: f64| idx.gamma(d_a(r), r) - target;
    if d_a(lo) == 0.0 {
        return Err(Error::VanishingDistance { fixed_radius: lo });
    }
    for _ in 0..64 {
        if excess(lo) >= 0.0 {
            break;
        }
        lo /= 10.0;
    }
    for _ in 0..64 {
        if excess(hi) <= 0.0 {
            break;
        }
        hi *= 10.0;
    }
    if excess(lo) < 0.0 || excess(hi) > 0.0 {
        return Err(Error::InvalidParameter("balancing equation could not be bracketed".into()));
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let value = excess(mid.exp());
        if (value / target).abs() <= 1e-12 {
            return Ok(mid.exp());
        }
        if value > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// How `R(λ)` was chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusChoice {
    Balanced(f64),
    Fixed(f64),
}

impl RadiusChoice {
    pub fn radius(self) -> f64 {
        match self {
            RadiusChoice::Balanced(r) | RadiusChoice::Fixed(r) => r,
        }
    }
}

/// `R(λ)` from the numeric image distance of `model`. Falls back to the fixed
/// radius `R̄` when the truth already satisfies the benchmark condition
/// (`r ≥ q`) or the distance vanishes.
pub fn radius_for(
    lambda: f64,
    source: &SourceCondition,
    model: &ForwardModel,
    f_hat: &CoefficientVector,
) -> Result<RadiusChoice> {
    let r_bar = fixed_radius(source.q, f_hat, &source.f_bar, model.scale())?;
    if source.r >= source.q || r_bar == 0.0 {
        return Ok(RadiusChoice::Fixed(r_bar));
    }
    let idx = BalanceIndices { p: model.profile().p, q: source.q, s: model.profile().s };
    let d_a = |radius: f64| {
        if radius >= r_bar {
            return 0.0;
        }
        distance_function(radius, source.q, f_hat, &source.f_bar, model.scale())
            .map(|sol| model.image_distance(&sol.minimizer, f_hat))
            .unwrap_or(0.0)
    };
    match resolve_radius(lambda, idx, d_a, (r_bar * 1e-6, r_bar)) {
        Ok(radius) => Ok(RadiusChoice::Balanced(radius.min(r_bar))),
        Err(Error::VanishingDistance { .. }) => Ok(RadiusChoice::Fixed(r_bar)),
        Err(e) => Err(e),
    }
}

/// Config section `[source]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(rename = "R_dagger", default = "default_r_dagger")]
    pub r_dagger: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_v_decay")]
    pub v_decay: f64,
    /// Initial guess `f̄`; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_bar: Option<Vec<f64>>,
}

fn default_r() -> f64 {
    1.0
}

fn default_r_dagger() -> f64 {
    1.0
}

fn default_q() -> f64 {
    1.0
}

fn default_v_decay() -> f64 {
    0.5
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self { r: default_r(), r_dagger: default_r_dagger(), q: default_q(), v_decay: default_v_decay(), f_bar: None }
    }
}

impl SourceConfig {
    pub fn build(&self, dim: usize) -> Result<SourceCondition> {
        let f_bar = match &self.f_bar {
            Some(values) => {
                check_len(dim, values.len())?;
                CoefficientVector::from_vec(values.clone())
            }
            None => CoefficientVector::zeros(dim),
        };
        SourceCondition::new(self.r, self.r_dagger, self.q, f_bar)?.with_v_decay(self.v_decay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rkhs::{Basis, KernelModel};
    use approx::assert_relative_eq;

    fn scale(n: usize) -> ScaleSpectrum {
        ScaleSpectrum::power_law(n, 1.0).unwrap()
    }

    #[test]
    fn make_truth_examples() {
        let l = scale(64);
        let src = SourceCondition::new(0.0, 2.0, 1.0, CoefficientVector::zeros(64)).unwrap();
        let f = make_truth(&src, &l, 3).unwrap();
        assert_relative_eq!(f.norm(), 2.0, max_relative = 1e-14);

        let src = SourceCondition::new(1.5, 0.7, 2.0, CoefficientVector::from_vec(vec![0.1; 64])).unwrap();
        let f = make_truth(&src, &l, 4).unwrap();
        assert_relative_eq!(l.scale_norm(&f.sub(&src.f_bar), 1.5).unwrap(), 0.7, max_relative = 1e-13);
        assert_eq!(f, make_truth(&src, &l, 4).unwrap());

        let two = ScaleSpectrum::new(vec![1.0, 2.0]).unwrap();
        let v = CoefficientVector::from_vec(vec![0.0, 3.0]);
        let f = truth_from_source(&CoefficientVector::zeros(2), &two, 1.0, &v).unwrap();
        assert_eq!(f.to_vec(), vec![0.0, 1.5]);
    }

    #[test]
    fn distance_function_examples() {
        let l = ScaleSpectrum::new(vec![2.0]).unwrap();
        let f_hat = CoefficientVector::from_vec(vec![1.0]);
        let sol = distance_function(1.0, 1.0, &f_hat, &CoefficientVector::zeros(1), &l).unwrap();
        assert_relative_eq!(sol.distance, 0.5, max_relative = 1e-14);
        assert_relative_eq!(sol.minimizer[0], 0.5, max_relative = 1e-14);

        let l = scale(32);
        let src = SourceCondition::new(1.0, 1.0, 2.0, CoefficientVector::zeros(32)).unwrap();
        let f_hat = make_truth(&src, &l, 9).unwrap();
        let r_bar = fixed_radius(2.0, &f_hat, &src.f_bar, &l).unwrap();
        let sol = distance_function(r_bar * 1.01, 2.0, &f_hat, &src.f_bar, &l).unwrap();
        assert_eq!(sol.distance, 0.0);
        assert_eq!(sol.minimizer, f_hat);

        let mut last = f64::INFINITY;
        for i in 0..50 {
            let radius = r_bar * 10f64.powf(-3.0 + 3.5 * i as f64 / 49.0);
            let sol = distance_function(radius, 2.0, &f_hat, &src.f_bar, &l).unwrap();
            assert!(sol.distance <= last);
            assert!(sol.multiplier * (sol.source_norm - radius) <= 1e-10);
            assert!(sol.source_norm <= radius * (1.0 + 1e-12));
            last = sol.distance;
        }
    }

    #[test]
    fn linear_image_distance_is_weak_distance() {
        let n = 48;
        let l = scale(n);
        let kernel = KernelModel::power_decay(Basis::Cosine, n, 0.5).unwrap();
        let src = SourceCondition::new(1.0, 1.0, 2.0, CoefficientVector::zeros(n)).unwrap();
        let f_hat = make_truth(&src, &l, 5).unwrap();
        let model = ForwardModel::calibrated_linear(&l, &kernel, 1.0, f_hat.clone(), 10.0).unwrap();
        for radius in [0.3, 1.0, 3.0] {
            let prof = distance_profiles(radius, 2.0, &model, &f_hat, &src.f_bar).unwrap();
            assert_relative_eq!(prof.d_a, prof.d_p / model.profile().alpha, max_relative = 1e-12);
        }
    }

    #[test]
    fn resolve_radius_matches_closed_form() {
        for &(p, q, r, s) in &[(1.0, 2.0, 1.0, 1.0), (0.0, 1.5, 0.5, 1.0), (0.5, 2.0, 1.2, 0.7)] {
            let idx = BalanceIndices { p, q, s };
            let r_dagger = 1.7;
            let d_a = power_law_image_distance(r_dagger, p, q, r, s);
            for lambda in [1e-4, 1e-2, 0.5] {
                let got = resolve_radius(lambda, idx, &d_a, (0.1, 10.0)).unwrap();
                let want = power_law_radius(lambda, r_dagger, idx, r);
                assert_relative_eq!(got, want, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn resolve_radius_inverts_gamma() {
        let idx = BalanceIndices { p: 1.0, q: 2.0, s: 1.0 };
        let d_a = |r: f64| (1.0 / (1.0 + r)).powi(3);
        let r0 = 0.37;
        let gamma0 = idx.gamma(d_a(r0), r0);
        let lambda = gamma0.powf(2.0 * 2.0 / 3.0);
        let got = resolve_radius(lambda, idx, d_a, (1.0, 2.0)).unwrap();
        assert_relative_eq!(got, r0, max_relative = 1e-8);
        assert_relative_eq!(idx.gamma(d_a(got), got), idx.target(lambda), max_relative = 1e-8);
    }

    #[test]
    fn radius_decreases_in_lambda() {
        let n = 64;
        let l = scale(n);
        let kernel = KernelModel::power_decay(Basis::Cosine, n, 0.5).unwrap();
        let src = SourceCondition::new(1.0, 1.0, 2.0, CoefficientVector::zeros(n)).unwrap();
        let f_hat = make_truth(&src, &l, 6).unwrap();
        let model = ForwardModel::calibrated_linear(&l, &kernel, 1.0, f_hat.clone(), 10.0).unwrap();
        let mut last = f64::INFINITY;
        for lambda in [1e-5, 1e-4, 1e-3, 1e-2, 1e-1] {
            let choice = radius_for(lambda, &src, &model, &f_hat).unwrap();
            assert!(matches!(choice, RadiusChoice::Balanced(_)));
            assert!(choice.radius() <= last);
            last = choice.radius();
        }
        let regular = SourceCondition::new(2.0, 1.0, 1.0, CoefficientVector::zeros(n)).unwrap();
        let f_reg = make_truth(&regular, &l, 6).unwrap();
        let choice = radius_for(1e-3, &regular, &model, &f_reg).unwrap();
        assert_eq!(choice, RadiusChoice::Fixed(fixed_radius(1.0, &f_reg, &regular.f_bar, &l).unwrap()));
    }

    #[test]
    fn vanishing_distance_signals_fixed_branch() {
        let idx = BalanceIndices { p: 0.0, q: 1.0, s: 1.0 };
        assert!(matches!(
            resolve_radius(0.1, idx, |_| 0.0, (1.0, 2.0)),
            Err(Error::VanishingDistance { .. })
        ));
    }

    #[test]
    fn hypotheses() {
        let src = SourceCondition::new(1.0, 1.0, 2.0, CoefficientVector::zeros(1)).unwrap();
        assert!(src.check_hypotheses(1.0, 1.0).is_ok());
        assert!(src.check_hypotheses(-0.5, 1.0).is_err());
        let src = SourceCondition::new(1.0, 1.0, 0.5, CoefficientVector::zeros(1)).unwrap();
        assert!(src.check_hypotheses(0.0, 1.0).is_err());
    }
}
