//! Monte Carlo rate studies, concentration checks and smaller sweeps.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{stability_audit, StabilityAudit};
use crate::harness::config::{Experiment, LambdaRule};
use crate::harness::noise::{bernstein_audit, BernsteinAudit};
use crate::harness::sampling::{generate_sample_with, trial_rng};
use crate::harness::stats::{fit_loglog, median, quantile, SlopeFit};
use crate::regularizer::{RegularizationConfig, TikhonovProblem};
use crate::rkhs::{effective_dimension_of, psi_x, theta_z, CovarianceModel, KernelModel};
use crate::rules::{apriori_lambda, check_admissible, invert_theta, DecayAudit, Regime};
use crate::smoothness::{distance_bound, distance_profiles, radius_for, weak_distance_bound, RadiusChoice};
use crate::spectral::CoefficientVector;

/// Share of non-converged solves above which a report is invalid.
const MAX_NONCONVERGED: f64 = 0.10;

/// Runs `f` on a pool sized by `HSCALE_THREADS` (0 or unset: rayon default).
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = std::env::var("HSCALE_THREADS")
        .ok()
        .map(|v| v.trim().parse::<usize>())
        .transpose()
        .map_err(|e| Error::Config(format!("HSCALE_THREADS: {e}")))?
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// `λ*` for sample size `m` under the plan's rule, and whether it was clamped.
pub fn lambda_star(exp: &Experiment, m: usize) -> Result<(f64, bool)> {
    match exp.config.plan.lambda_rule {
        LambdaRule::Theta => {
            let inv = invert_theta(m, exp.params.u, &exp.kernel.covariance())?;
            Ok((inv.lambda, inv.clamped))
        }
        LambdaRule::ClosedForm => Ok((apriori_lambda(m as f64, &exp.decay, &exp.params)?.min(1.0), false)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialErrors {
    /// `‖f_{z,λ} − f̂‖`.
    pub err_h: f64,
    /// `‖I_ν[A(f_{z,λ}) − A(f̂)]‖`.
    pub err_pred: f64,
    /// `‖L(f_{z,λ} − f̂^R)‖`.
    pub err_l: f64,
    pub converged: bool,
    pub in_domain: bool,
    /// `‖e‖ ≤ ‖Le‖^{p/(p+1)} ‖e‖_{−p}^{1/(p+1)}` for `e = f_{z,λ} − f̂`.
    pub interpolation_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub m: usize,
    pub lambda_star: f64,
    pub clamped: bool,
    pub admissible: bool,
    /// `R(λ*)` used for `f̂^R`.
    pub radius: f64,
    pub err_h_median: f64,
    pub err_h_q: f64,
    pub err_pred_median: f64,
    pub err_pred_q: f64,
    pub err_l_median: f64,
    pub err_l_q: f64,
    pub converged: usize,
    pub in_domain: usize,
    pub interpolation_ok: usize,
    pub trials: Vec<TrialErrors>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub fit: Option<SlopeFit>,
    pub regime: Regime,
    /// Theoretical slope of the median reconstruction error in `ln m` (negative).
    pub theoretical_slope: f64,
    pub slope_tol: f64,
    pub nonconverged_fraction: f64,
    /// Fewer than 10% of the solves failed to converge.
    pub valid: bool,
    pub all_admissible: bool,
    pub slope_pass: bool,
    pub seed: u64,
    pub config_hash: String,
}

impl RateReport {
    /// Slope within tolerance and the report is valid.
    pub fn passes(&self) -> bool {
        self.slope_pass && self.valid
    }

    pub fn verdict(&self) -> &'static str {
        match (self.valid, self.slope_pass) {
            (false, _) => "invalid",
            (true, true) => "pass",
            (true, false) => "fail",
        }
    }

    /// Share of adjacent sample sizes where the median error does not increase.
    pub fn monotone_fraction(&self) -> f64 {
        let pairs = self.rows.len().saturating_sub(1);
        if pairs == 0 {
            return 1.0;
        }
        let ok = self.rows.windows(2).filter(|w| w[1].err_h_median <= w[0].err_h_median).count();
        ok as f64 / pairs as f64
    }
}

fn run_trial(
    exp: &Experiment,
    cfg: &RegularizationConfig,
    f_r: &CoefficientVector,
    m: usize,
    trial: usize,
) -> Result<TrialErrors> {
    let mut rng = trial_rng(exp.config.plan.seed, m, trial);
    let sample = generate_sample_with(&exp.truth, &exp.model, &exp.kernel, &exp.noise, m, &mut rng)?;
    let problem = TikhonovProblem::new(&sample, &exp.model, &exp.kernel, cfg)?;
    let out = if exp.model.is_linear() {
        problem.minimize_linear()?
    } else {
        problem.minimize_nonlinear(&cfg.f_bar)?
    };
    let err = out.f.sub(&exp.truth);
    let p = exp.model.profile().p;
    let err_h = err.norm();
    let strong = exp.scale.scale_norm(&err, 1.0)?;
    let weak = exp.scale.scale_norm(&err, -p)?;
    let interp = strong.powf(p / (p + 1.0)) * weak.powf(1.0 / (p + 1.0));
    Ok(TrialErrors {
        err_h,
        err_pred: exp.model.image_distance(&out.f, &exp.truth),
        err_l: exp.scale.scale_norm(&out.f.sub(f_r), 1.0)?,
        converged: out.converged,
        in_domain: out.in_domain,
        interpolation_ok: err_h <= interp * (1.0 + 1e-12) + 1e-300,
    })
}

/// Solves `trials` independent problems per sample size at `λ*(m)` and fits
/// the log-log slope of the median reconstruction error.
pub fn run_rate_study(exp: &Experiment) -> Result<RateReport> {
    let plan = &exp.config.plan;
    let cov = exp.kernel.covariance();
    let eta = plan.eta;
    let mut rows = Vec::with_capacity(plan.sample_sizes.len());
    for &m in &plan.sample_sizes {
        let (lambda, clamped) = lambda_star(exp, m)?;
        let admissible = check_admissible(m, lambda, &cov);
        if !admissible {
            log::warn!("m = {m}: λ* = {lambda} violates N(λ) <= mλ");
        }
        let choice = radius_for(lambda, &exp.source, &exp.model, &exp.truth)?;
        let f_r = match choice {
            RadiusChoice::Fixed(_) => exp.truth.clone(),
            RadiusChoice::Balanced(radius) => {
                crate::smoothness::distance_function(radius, exp.source.q, &exp.truth, &exp.source.f_bar, &exp.scale)?
                    .minimizer
            }
        };
        let cfg = RegularizationConfig::new(lambda, exp.source.f_bar.clone())?.with_solver(&exp.config.solver)?;
        let results: Vec<Result<TrialErrors>> = with_pool(|| {
            (0..plan.trials).into_par_iter().map(|t| run_trial(exp, &cfg, &f_r, m, t)).collect()
        })?;
        let trials = results.into_iter().collect::<Result<Vec<_>>>()?;
        let col = |f: fn(&TrialErrors) -> f64| trials.iter().map(f).collect::<Vec<f64>>();
        let (h, pred, l) = (col(|t| t.err_h), col(|t| t.err_pred), col(|t| t.err_l));
        log::info!("m = {m}: λ* = {lambda:.4e}, median error {:.4e}", median(&h));
        rows.push(RateRow {
            m,
            lambda_star: lambda,
            clamped,
            admissible,
            radius: choice.radius(),
            err_h_median: median(&h),
            err_h_q: quantile(&h, 1.0 - eta),
            err_pred_median: median(&pred),
            err_pred_q: quantile(&pred, 1.0 - eta),
            err_l_median: median(&l),
            err_l_q: quantile(&l, 1.0 - eta),
            converged: trials.iter().filter(|t| t.converged).count(),
            in_domain: trials.iter().filter(|t| t.in_domain).count(),
            interpolation_ok: trials.iter().filter(|t| t.interpolation_ok).count(),
            trials,
        });
    }
    let ms: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let med: Vec<f64> = rows.iter().map(|r| r.err_h_median).collect();
    let fit = fit_loglog(&ms, &med);
    let theoretical_slope = -exp.exponents.m_exponent_reconstruction;
    let total = (rows.len() * plan.trials) as f64;
    let failed: usize = rows.iter().map(|r| plan.trials - r.converged).sum();
    let nonconverged_fraction = failed as f64 / total;
    let slope_pass = fit.is_some_and(|f| (f.slope - theoretical_slope).abs() <= plan.slope_tol);
    Ok(RateReport {
        all_admissible: rows.iter().all(|r| r.admissible),
        rows,
        fit,
        regime: exp.params.regime,
        theoretical_slope,
        slope_tol: plan.slope_tol,
        nonconverged_fraction,
        valid: nonconverged_fraction <= MAX_NONCONVERGED,
        slope_pass,
        seed: plan.seed,
        config_hash: exp.config.hash(),
    })
}

/// Right-hand sides of the simplified concentration bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationBounds {
    /// `2(κM/N(1) + Σ) √(N(λ)/m) log(4/η)`.
    pub theta: f64,
    /// `2(κ²/N(1) + κ) √(N(λ)/m) log(4/η)`.
    pub psi: f64,
}

pub fn concentration_bounds(
    kernel: &KernelModel,
    m_const: f64,
    sigma_bern: f64,
    m: usize,
    lambda: f64,
    eta: f64,
) -> ConcentrationBounds {
    let t = kernel.eigenvalues();
    let kappa = kernel.kappa();
    let n1 = effective_dimension_of(t, 1.0);
    let root = (effective_dimension_of(t, lambda) / m as f64).sqrt() * (4.0 / eta).ln();
    ConcentrationBounds {
        theta: 2.0 * (kappa * m_const / n1 + sigma_bern) * root,
        psi: 2.0 * (kappa * kappa / n1 + kappa) * root,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub m: usize,
    pub lambda: f64,
    pub eta: f64,
    pub theta_quantile: f64,
    pub theta_bound: f64,
    pub psi_quantile: f64,
    pub psi_bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub rows: Vec<ConcentrationRow>,
    /// `(m, λ)` pairs skipped because `N(λ) > mλ`.
    pub skipped: Vec<(usize, f64)>,
    pub trials: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl ConcentrationReport {
    pub fn passes(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.pass)
    }
}

/// Empirical `(1−η)`-quantiles of `Θ_z` and `Ψ_x` at `λ*(m)` against the bounds.
pub fn run_concentration_study(exp: &Experiment, etas: &[f64]) -> Result<ConcentrationReport> {
    if etas.is_empty() || etas.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::Config("every eta must lie in (0, 1)".into()));
    }
    let plan = &exp.config.plan;
    let cov: CovarianceModel = exp.kernel.covariance();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &m in &plan.sample_sizes {
        let (lambda, _) = lambda_star(exp, m)?;
        if !check_admissible(m, lambda, &cov) {
            log::warn!("skipping m = {m}, λ = {lambda}: not admissible");
            skipped.push((m, lambda));
            continue;
        }
        let draws: Vec<Result<(f64, f64)>> = with_pool(|| {
            (0..plan.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(plan.seed, m, t);
                    let inputs: Vec<f64> = (0..m).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
                    let eps: Vec<f64> = (0..m).map(|_| exp.noise.sample(&mut rng)).collect();
                    let theta = theta_z(&exp.kernel, &inputs, &eps, lambda)?;
                    let psi = psi_x(&exp.kernel, &exp.kernel.empirical_covariance(&inputs), lambda)?;
                    Ok((theta, psi))
                })
                .collect()
        })?;
        let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
        let thetas: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let psis: Vec<f64> = draws.iter().map(|d| d.1).collect();
        for &eta in etas {
            let bounds =
                concentration_bounds(&exp.kernel, exp.noise.m_const, exp.noise.sigma_bern, m, lambda, eta);
            let theta_quantile = quantile(&thetas, 1.0 - eta);
            let psi_quantile = quantile(&psis, 1.0 - eta);
            rows.push(ConcentrationRow {
                m,
                lambda,
                eta,
                theta_quantile,
                theta_bound: bounds.theta,
                psi_quantile,
                psi_bound: bounds.psi,
                pass: theta_quantile <= bounds.theta && psi_quantile <= bounds.psi,
            });
        }
    }
    Ok(ConcentrationReport { rows, skipped, trials: plan.trials, seed: plan.seed, config_hash: exp.config.hash() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveDimensionRow {
    pub lambda: f64,
    #[serde(rename = "N_lambda")]
    pub n_lambda: f64,
    pub bound_kappa2_over_lambda: f64,
}

/// `N(λ)` and the trivial bound `κ²/λ` on a grid.
pub fn effective_dimension_sweep(kernel: &KernelModel, lambdas: &[f64]) -> Vec<EffectiveDimensionRow> {
    let kappa2 = kernel.kappa().powi(2);
    lambdas
        .iter()
        .map(|&lambda| EffectiveDimensionRow {
            lambda,
            n_lambda: effective_dimension_of(kernel.eigenvalues(), lambda),
            bound_kappa2_over_lambda: kappa2 / lambda,
        })
        .collect()
}

/// `count` points from `lo` to `hi`, evenly spaced in `log`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && count >= 1) || (count == 1 && hi != lo) {
        return Err(Error::Config(format!("invalid log grid {lo}:{hi}:{count}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| match i {
            0 => lo,
            i if i == count - 1 => hi,
            i => (a + (b - a) * i as f64 / (count - 1) as f64).exp(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceRow {
    #[serde(rename = "R")]
    pub radius: f64,
    pub d: f64,
    #[serde(rename = "d_A")]
    pub d_a: f64,
    pub d_p: f64,
    /// NaN when `r ≥ q`.
    pub bound_d: f64,
    pub bound_d_p: f64,
    pub holds: bool,
}

/// Distance functions of the synthetic truth over `radii`, with the
/// source-condition bounds when `r < q`.
pub fn distance_sweep(exp: &Experiment, radii: &[f64]) -> Result<Vec<DistanceRow>> {
    let src = &exp.source;
    let p = exp.model.profile().p;
    radii
        .iter()
        .map(|&radius| {
            let prof = distance_profiles(radius, src.q, &exp.model, &exp.truth, &src.f_bar)?;
            let (bound_d, bound_d_p) = if src.r < src.q {
                (
                    distance_bound(radius, src.r_dagger, src.q, src.r),
                    weak_distance_bound(radius, src.r_dagger, src.q, src.r, p),
                )
            } else {
                (f64::NAN, f64::NAN)
            };
            let slack = 1.0 + 1e-12;
            let holds = src.r >= src.q || (prof.d <= bound_d * slack && prof.d_p <= bound_d_p * slack);
            Ok(DistanceRow { radius, d: prof.d, d_a: prof.d_a, d_p: prof.d_p, bound_d, bound_d_p, holds })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub stability: StabilityAudit,
    pub stability_pass: bool,
    pub bernstein: BernsteinAudit,
    pub decay: DecayAudit,
    pub config_hash: String,
}

impl AuditReport {
    pub fn passes(&self) -> bool {
        self.stability_pass && self.bernstein.passes && self.decay.passes
    }
}

/// Stability, Bernstein and decay-model audits for the configured experiment.
pub fn run_audit(exp: &Experiment, draws: usize) -> Result<AuditReport> {
    let seed = exp.config.plan.seed;
    let stability = stability_audit(&exp.model, &exp.truth, 1000, seed)?;
    let bernstein = bernstein_audit(&exp.noise, draws, seed)?;
    let lambdas = log_grid(1e-6, 1.0, 61)?;
    let decay = exp.decay.audit(&exp.kernel.covariance(), &lambdas);
    Ok(AuditReport {
        stability_pass: stability.passes(1e-9),
        stability,
        bernstein,
        decay,
        config_hash: exp.config.hash(),
    })
}
