//! Localized harmonic parametrix P(x−y) = P_Δ(x−y)·I with P_Δ = −χ/(4π|x−y|),
//! its derivatives and remainders, and the volume and surface potentials built on it.

mod kernels;
pub mod surface;
pub mod volume;

pub use kernels::{sym_index, KernelSet, Moments, D1_RANGE, D2_RANGE, P_SLOT, SYM_PAIRS};

use thiserror::Error;

use crate::expr::ExprError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error("kernel evaluated at coincident points")]
    SingularPoint,
    #[error("target {index} at {point:?} lies outside the domain closure")]
    TargetOutside { index: usize, point: [f64; 3] },
    #[error(transparent)]
    Expression(#[from] ExprError),
}
