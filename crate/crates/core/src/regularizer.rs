//! Tikhonov functional in Hilbert scales and its minimizer.
//!
//! `E(f) = (1/m) Σ_i ([A(f)](x_i) − y_i)² + λ ‖L(f − f̄)‖²`.
//!
//! The data term only enters through the sufficient statistics
//! `T_x = S_x* S_x`, `S_x* y` and `(1/m)‖y‖²`, so every solver step costs
//! `O(N³)` regardless of the sample size.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_positive, Error, Result};
use crate::forward::ForwardModel;
use crate::rkhs::{KernelModel, SampleSet};
use crate::spectral::CoefficientVector;

/// Damping beyond which a Gauss–Newton step is considered stalled.
const MAX_DAMPING: f64 = 1e20;

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationConfig {
    pub lambda: f64,
    pub f_bar: CoefficientVector,
    pub solver_tol: f64,
    pub max_iters: usize,
    pub damping_init: f64,
}

impl RegularizationConfig {
    pub fn new(lambda: f64, f_bar: CoefficientVector) -> Result<Self> {
        check_positive("lambda", lambda)?;
        Ok(Self { lambda, f_bar, solver_tol: 1e-10, max_iters: 200, damping_init: 1.0 })
    }

    pub fn with_solver(mut self, solver: &SolverConfig) -> Result<Self> {
        check_positive("solver.tol", solver.tol)?;
        check_positive("solver.damping_init", solver.damping_init)?;
        if solver.max_iters == 0 {
            return Err(Error::InvalidParameter("solver.max_iters must be >= 1".into()));
        }
        self.solver_tol = solver.tol;
        self.max_iters = solver.max_iters;
        self.damping_init = solver.damping_init;
        Ok(self)
    }
}

/// Config section `[solver]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_damping")]
    pub damping_init: f64,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iters() -> usize {
    200
}

fn default_damping() -> f64 {
    1.0
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: default_tol(), max_iters: default_max_iters(), damping_init: default_damping() }
    }
}

/// Result of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub f: CoefficientVector,
    pub value: f64,
    /// First-order residual at `f` (projected gradient norm).
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether `f` lies in the domain ball of the forward model.
    pub in_domain: bool,
}

/// Direct evaluation of the Tikhonov functional from the sample.
pub fn functional_value(
    f: &CoefficientVector,
    sample: &SampleSet,
    model: &ForwardModel,
    kernel: &KernelModel,
    cfg: &RegularizationConfig,
) -> Result<f64> {
    check_len(model.dim(), cfg.f_bar.len())?;
    let image = model.forward_apply(f)?;
    let fitted = kernel.sample_values(&image, &sample.inputs)?;
    let m = sample.len() as f64;
    let fidelity: f64 =
        fitted.iter().zip(&sample.outputs).map(|(a, y)| (a - y).powi(2)).sum::<f64>() / m;
    let penalty = model.scale().scale_norm(&f.sub(&cfg.f_bar), 1.0)?.powi(2);
    Ok(fidelity + cfg.lambda * penalty)
}

/// A sample reduced to the statistics the functional depends on.
#[derive(Debug, Clone)]
pub struct TikhonovProblem<'a> {
    model: &'a ForwardModel,
    cfg: &'a RegularizationConfig,
    tx: DMatrix<f64>,
    adjoint_y: DVector<f64>,
    mean_sq_y: f64,
    output_norm: f64,
    l_squared: DVector<f64>,
}

impl<'a> TikhonovProblem<'a> {
    pub fn new(
        sample: &SampleSet,
        model: &'a ForwardModel,
        kernel: &KernelModel,
        cfg: &'a RegularizationConfig,
    ) -> Result<Self> {
        check_positive("lambda", cfg.lambda)?;
        check_len(model.dim(), kernel.dim())?;
        check_len(model.dim(), cfg.f_bar.len())?;
        let tx = kernel.empirical_covariance(&sample.inputs);
        Self::from_parts(sample, model, kernel, cfg, tx)
    }

    /// Reuses a precomputed `T_x` for the sample inputs.
    pub fn from_parts(
        sample: &SampleSet,
        model: &'a ForwardModel,
        kernel: &KernelModel,
        cfg: &'a RegularizationConfig,
        tx: DMatrix<f64>,
    ) -> Result<Self> {
        check_len(model.dim(), tx.nrows())?;
        let adjoint_y = kernel.sampling_adjoint(&sample.inputs, &sample.outputs)?.into_vector();
        let mean_sq_y = sample.outputs.iter().map(|y| y * y).sum::<f64>() / sample.len() as f64;
        let scale = model.scale();
        let l_squared = DVector::from_iterator(model.dim(), (0..model.dim()).map(|k| scale.power(k, 2.0)));
        Ok(Self {
            model,
            cfg,
            tx,
            adjoint_y,
            mean_sq_y,
            output_norm: sample.output_norm(),
            l_squared,
        })
    }

    /// Gradient tolerance `solver_tol · (1 + ‖y‖)`.
    pub fn tolerance(&self) -> f64 {
        self.cfg.solver_tol * (1.0 + self.output_norm)
    }

    /// Functional value from the sufficient statistics (no domain check).
    pub fn value(&self, f: &CoefficientVector) -> f64 {
        let c = self.model.apply_unchecked(f).into_vector();
        let data = c.dot(&(&self.tx * &c)) - 2.0 * c.dot(&self.adjoint_y) + self.mean_sq_y;
        let d = f.as_vector() - self.cfg.f_bar.as_vector();
        data.max(0.0) + self.cfg.lambda * d.component_mul(&d).dot(&self.l_squared)
    }

    /// `∇E(f) = 2 A′(f)ᵀ (T_x A(f) − S_x* y) + 2λ L²(f − f̄)`.
    pub fn gradient(&self, f: &CoefficientVector) -> DVector<f64> {
        let c = self.model.apply_unchecked(f).into_vector();
        let jac = DVector::from_vec(self.model.derivative_diag(f));
        let data = jac.component_mul(&(&self.tx * &c - &self.adjoint_y));
        let d = f.as_vector() - self.cfg.f_bar.as_vector();
        (data + self.cfg.lambda * self.l_squared.component_mul(&d)) * 2.0
    }

    /// `J T_x J + λ L²` with `J = diag(A′(f))`.
    fn gauss_newton_matrix(&self, jac: &DVector<f64>) -> DMatrix<f64> {
        let n = jac.len();
        let mut h = DMatrix::zeros(n, n);
        for k in 0..n {
            for j in 0..n {
                h[(j, k)] = jac[j] * self.tx[(j, k)] * jac[k];
            }
            h[(k, k)] += self.cfg.lambda * self.l_squared[k];
        }
        h
    }

    fn projected_residual(&self, f: &CoefficientVector, grad: &DVector<f64>) -> f64 {
        let moved = CoefficientVector::from(f.as_vector() - grad);
        self.model.project(&moved).sub(f).norm()
    }

    /// Closed-form minimizer for a linear forward model via the normal equations
    /// `(D_a T_x D_a + λL²)(f − f̄) = D_a (S_x* y − T_x D_a f̄)`.
    pub fn minimize_linear(&self) -> Result<SolveOutcome> {
        if !self.model.is_linear() {
            return Err(Error::InvalidParameter("minimize_linear needs a linear forward model".into()));
        }
        let a = DVector::from_column_slice(self.model.diag());
        let matrix = self.gauss_newton_matrix(&a);
        let image_bar = a.component_mul(self.cfg.f_bar.as_vector());
        let rhs = a.component_mul(&(&self.adjoint_y - &self.tx * image_bar));
        let chol = matrix.clone().cholesky().ok_or(Error::SingularSystem)?;
        let mut delta = chol.solve(&rhs);
        // One round of iterative refinement.
        let correction = chol.solve(&(&rhs - &matrix * &delta));
        delta += correction;
        let f = CoefficientVector::from(self.cfg.f_bar.as_vector() + delta);
        let grad = self.gradient(&f);
        let residual = grad.norm();
        Ok(SolveOutcome {
            value: self.value(&f),
            residual,
            iterations: 1,
            converged: residual <= self.tolerance(),
            in_domain: self.model.contains(&f),
            f,
        })
    }

    /// Damped Gauss–Newton with Marquardt scaling. Steps that do not decrease
    /// the functional are rejected and the damping is multiplied by ten;
    /// every iterate is projected onto the domain ball.
    pub fn minimize_nonlinear(&self, init: &CoefficientVector) -> Result<SolveOutcome> {
        check_len(self.model.dim(), init.len())?;
        let tol = self.tolerance();
        let mut f = self.model.project(init);
        let mut value = self.value(&f);
        let mut damping = self.cfg.damping_init;
        let mut iterations = 0;
        let mut residual = self.projected_residual(&f, &self.gradient(&f));
        while iterations < self.cfg.max_iters && residual > tol {
            iterations += 1;
            let grad = self.gradient(&f);
            let jac = DVector::from_vec(self.model.derivative_diag(&f));
            let mut h = self.gauss_newton_matrix(&jac);
            let diag = h.diagonal();
            let mut accepted = false;
            while damping <= MAX_DAMPING {
                for k in 0..h.nrows() {
                    h[(k, k)] = diag[k] * (1.0 + damping);
                }
                let Some(chol) = h.clone().cholesky() else {
                    damping *= 10.0;
                    continue;
                };
                let step = chol.solve(&(-&grad * 0.5));
                let candidate = self.model.project(&CoefficientVector::from(f.as_vector() + step));
                let cand_value = self.value(&candidate);
                if cand_value < value {
                    f = candidate;
                    value = cand_value;
                    damping = (damping / 10.0).max(1e-15);
                    accepted = true;
                    break;
                }
                damping *= 10.0;
            }
            residual = self.projected_residual(&f, &self.gradient(&f));
            if !accepted {
                break;
            }
        }
        Ok(SolveOutcome {
            value,
            residual,
            iterations,
            converged: residual <= tol,
            in_domain: self.model.contains(&f),
            f,
        })
    }
}

/// Closed-form Tikhonov minimizer for a linear model.
pub fn minimize_linear(
    sample: &SampleSet,
    model: &ForwardModel,
    kernel: &KernelModel,
    cfg: &RegularizationConfig,
) -> Result<SolveOutcome> {
    TikhonovProblem::new(sample, model, kernel, cfg)?.minimize_linear()
}

/// Damped Gauss–Newton minimizer started at `init`.
pub fn minimize_nonlinear(
    sample: &SampleSet,
    model: &ForwardModel,
    kernel: &KernelModel,
    cfg: &RegularizationConfig,
    init: &CoefficientVector,
) -> Result<SolveOutcome> {
    TikhonovProblem::new(sample, model, kernel, cfg)?.minimize_nonlinear(init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{ForwardKind, StabilityProfile};
    use crate::rkhs::Basis;
    use crate::spectral::ScaleSpectrum;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_setup() -> (ScaleSpectrum, KernelModel, ForwardModel) {
        let scale = ScaleSpectrum::new(vec![1.0]).unwrap();
        let kernel = KernelModel::new(Basis::Cosine, vec![1.0]).unwrap();
        let prof = StabilityProfile { p: 0.0, s: 1.0, alpha: 1.0, beta: 1.0, domain_radius: 10.0, lipschitz: 1.0 };
        let model = ForwardModel::new(
            ForwardKind::DiagonalLinear,
            vec![1.0],
            0.0,
            CoefficientVector::zeros(1),
            prof,
            &scale,
            &kernel,
        )
        .unwrap();
        (scale, kernel, model)
    }

    struct Instance {
        kernel: KernelModel,
        model: ForwardModel,
        sample: SampleSet,
        cfg: RegularizationConfig,
        truth: CoefficientVector,
    }

    fn random_instance(seed: u64, n: usize, m: usize, gamma: f64, lambda: f64, sigma: f64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = ScaleSpectrum::power_law(n, 1.0).unwrap();
        let kernel = KernelModel::power_decay(Basis::Cosine, n, 0.5).unwrap();
        let truth = CoefficientVector::from_vec((0..n).map(|k| rng.random_range(-1.0..1.0) / (k + 1) as f64).collect());
        let model = ForwardModel::calibrated_quadratic(&scale, &kernel, 1.0, gamma, truth.clone(), 2.0).unwrap();
        let inputs: Vec<f64> = (0..m).map(|_| rng.random()).collect();
        let clean = kernel.sample_values(&model.forward_apply(&truth).unwrap(), &inputs).unwrap();
        let outputs = clean.iter().map(|v| v + sigma * rng.random_range(-1.0..1.0)).collect();
        let f_bar = CoefficientVector::from_vec((0..n).map(|_| rng.random_range(-0.05..0.05)).collect());
        let cfg = RegularizationConfig::new(lambda, f_bar).unwrap();
        Instance { kernel, model, sample: SampleSet::new(inputs, outputs).unwrap(), cfg, truth }
    }

    #[test]
    fn functional_value_examples() {
        let (_, kernel, model) = scalar_setup();
        let sample = SampleSet::new(vec![0.3], vec![1.0]).unwrap();
        let cfg = RegularizationConfig::new(1.0, CoefficientVector::zeros(1)).unwrap();
        let f = CoefficientVector::from_vec(vec![0.5]);
        assert_relative_eq!(functional_value(&f, &sample, &model, &kernel, &cfg).unwrap(), 0.5);

        // Noiseless data at f = f̄.
        let inst = random_instance(1, 10, 30, 0.0, 0.1, 0.0);
        let clean = inst.kernel.sample_values(&inst.model.forward_apply(&inst.cfg.f_bar).unwrap(), &inst.sample.inputs).unwrap();
        let s = SampleSet::new(inst.sample.inputs.clone(), clean).unwrap();
        assert!(functional_value(&inst.cfg.f_bar, &s, &inst.model, &inst.kernel, &inst.cfg).unwrap() < 1e-28);

        let far = CoefficientVector::from_vec(vec![20.0]);
        assert!(matches!(
            functional_value(&far, &sample, &model, &kernel, &cfg),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn sufficient_statistics_match_direct_value() {
        let inst = random_instance(2, 12, 40, 0.02, 0.05, 0.1);
        let p = TikhonovProblem::new(&inst.sample, &inst.model, &inst.kernel, &inst.cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let f = inst.model.project(&CoefficientVector::from_vec((0..12).map(|_| rng.random_range(-0.5..0.5)).collect()));
            let direct = functional_value(&f, &inst.sample, &inst.model, &inst.kernel, &inst.cfg).unwrap();
            assert_relative_eq!(p.value(&f), direct, max_relative = 1e-10);
            let penalty = inst.model.scale().scale_norm(&f.sub(&inst.cfg.f_bar), 1.0).unwrap().powi(2);
            assert!(direct >= inst.cfg.lambda * penalty);
        }
    }

    #[test]
    fn scalar_normal_equation() {
        let (_, kernel, model) = scalar_setup();
        let sample = SampleSet::new(vec![0.7], vec![1.0]).unwrap();
        let cfg = RegularizationConfig::new(1.0, CoefficientVector::zeros(1)).unwrap();
        let out = minimize_linear(&sample, &model, &kernel, &cfg).unwrap();
        assert_relative_eq!(out.f[0], 0.5, max_relative = 1e-14);
        assert!(out.converged && out.in_domain);
    }

    #[test]
    fn lambda_zero_rejected() {
        assert!(RegularizationConfig::new(0.0, CoefficientVector::zeros(1)).is_err());
    }

    #[test]
    fn huge_lambda_returns_f_bar() {
        let inst = random_instance(3, 16, 50, 0.0, 1e8, 0.1);
        let out = minimize_linear(&inst.sample, &inst.model, &inst.kernel, &inst.cfg).unwrap();
        assert!(out.f.sub(&inst.cfg.f_bar).norm() <= 1e-6);
    }

    #[test]
    fn noiseless_consistency() {
        let inst = random_instance(4, 8, 4000, 0.0, 1e-12, 0.0);
        let out = minimize_linear(&inst.sample, &inst.model, &inst.kernel, &inst.cfg).unwrap();
        assert!(out.f.sub(&inst.truth).norm() <= 1e-4, "{}", out.f.sub(&inst.truth).norm());
    }

    #[test]
    fn gauss_newton_with_zero_gamma_matches_linear() {
        let inst = random_instance(5, 20, 200, 0.0, 1e-3, 0.2);
        let lin = minimize_linear(&inst.sample, &inst.model, &inst.kernel, &inst.cfg).unwrap();
        let gn = minimize_nonlinear(&inst.sample, &inst.model, &inst.kernel, &inst.cfg, &inst.cfg.f_bar).unwrap();
        assert!(gn.converged);
        assert!(gn.f.sub(&lin.f).norm() <= 1e-8);
    }

    #[test]
    fn gauss_newton_decreases_and_is_locally_optimal() {
        let inst = random_instance(6, 16, 300, 0.05, 1e-2, 0.1);
        let p = TikhonovProblem::new(&inst.sample, &inst.model, &inst.kernel, &inst.cfg).unwrap();
        let out = p.minimize_nonlinear(&inst.cfg.f_bar).unwrap();
        assert!(out.converged, "{out:?}");
        assert!(out.value <= p.value(&inst.cfg.f_bar));
        assert!(out.value <= p.value(&inst.truth));
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let d: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = CoefficientVector::from_vec(d);
            let probe = out.f.add(&d.scale(1e-3 / d.norm()));
            assert!(p.value(&probe) >= out.value - 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let inst = random_instance(7, 10, 80, 0.03, 0.02, 0.1);
        let p = TikhonovProblem::new(&inst.sample, &inst.model, &inst.kernel, &inst.cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let f = inst.model.project(&CoefficientVector::from_vec((0..10).map(|_| rng.random_range(-0.3..0.3)).collect()));
            let g = p.gradient(&f);
            let h = 1e-6;
            let fd: Vec<f64> = (0..10)
                .map(|k| {
                    let mut up = f.to_vec();
                    let mut dn = f.to_vec();
                    up[k] += h;
                    dn[k] -= h;
                    let eu = functional_value(&up.into(), &inst.sample, &inst.model, &inst.kernel, &inst.cfg).unwrap();
                    let ed = functional_value(&dn.into(), &inst.sample, &inst.model, &inst.kernel, &inst.cfg).unwrap();
                    (eu - ed) / (2.0 * h)
                })
                .collect();
            let fd = DVector::from_vec(fd);
            assert!((&g - &fd).norm() <= 1e-5 * g.norm().max(1e-8));
        }
    }

    #[test]
    fn non_convergence_is_flagged() {
        let inst = random_instance(8, 16, 300, 0.05, 1e-2, 0.1);
        let mut cfg = inst.cfg.clone();
        cfg.max_iters = 1;
        cfg.solver_tol = 1e-300;
        let out = minimize_nonlinear(&inst.sample, &inst.model, &inst.kernel, &cfg, &cfg.f_bar).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }
}
