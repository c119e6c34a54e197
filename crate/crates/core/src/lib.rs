//! Nonlinear Tikhonov regularization in Hilbert scales for statistical
//! learning from random design samples.

pub mod error;
pub mod forward;
pub mod harness;
pub mod regularizer;
pub mod rkhs;
pub mod rules;
pub mod smoothness;
pub mod spectral;

pub use error::{Error, Result};
pub use forward::{ForwardKind, ForwardModel, StabilityProfile};
pub use regularizer::{RegularizationConfig, SolveOutcome};
pub use rkhs::{Basis, CovarianceModel, KernelModel, SampleSet};
pub use spectral::{CoefficientVector, ScaleSpectrum};
