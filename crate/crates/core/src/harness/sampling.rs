//! Random design samples `y_i = [A(f̂)](x_i) + ε_i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::harness::noise::NoiseSpec;
use crate::rkhs::{KernelModel, SampleSet};
use crate::spectral::CoefficientVector;

/// Random stream for one trial, fixed by `(seed, m, trial)` alone.
pub fn trial_rng(seed: u64, m: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((m as u64) << 32) | trial as u64);
    rng
}

/// Draws `m` uniform inputs and noisy outputs from `rng`.
pub fn generate_sample_with<R: Rng + ?Sized>(
    truth: &CoefficientVector,
    model: &ForwardModel,
    kernel: &KernelModel,
    noise: &NoiseSpec,
    m: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    if m == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    let inputs: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    let image = model.forward_apply(truth)?;
    let clean = kernel.sample_values(&image, &inputs)?;
    let outputs = clean.into_iter().map(|v| v + noise.sample(rng)).collect();
    SampleSet::new(inputs, outputs)
}

/// Deterministic per `(seed, m)`.
pub fn generate_sample(
    truth: &CoefficientVector,
    model: &ForwardModel,
    kernel: &KernelModel,
    noise: &NoiseSpec,
    m: usize,
    seed: u64,
) -> Result<SampleSet> {
    generate_sample_with(truth, model, kernel, noise, m, &mut trial_rng(seed, m, 0))
}
