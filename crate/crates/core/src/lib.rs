//! Exact dynamics of gradient descent with dropout in linear regression.
//!
//! The crate provides, at desk scale: closed-form moments of Bernoulli
//! dropout masks, the marginalized and calibrated regularized minimizers,
//! iterate simulators for plain, dropout, simplified-dropout, and
//! minibatch schemes, the second-moment recursion operators with their
//! fixed points, convergence and sub-optimality bounds, and Monte Carlo
//! ensembles that verify every bound at stated tolerances.

pub mod dropout;
pub mod dynamics;
pub mod error;
pub mod matrix;
pub mod model;
pub mod montecarlo;
pub mod operators;
pub mod rng;

pub use dropout::{DropoutLaw, MaskSampler};
pub use dynamics::{SchemeConfig, SchemeKind, Trajectory, VarDecomposition};
pub use error::{Error, Result};
pub use matrix::{Matrix, SymEig, Vector};
pub use model::{GramBundle, LinearModel, NoiseKind};
pub use montecarlo::{
    compare_to_fixed_point, gauss_markov_defect, replica_trajectory, run_ensemble, EnsembleConfig,
    EnsembleStats, MomentStats, WelfordAccumulator,
};
pub use operators::{
    exact_chain_moments, singular_design_floor, singular_design_recursion, BoundReport,
    ChainMoments, MomentSequence, SOperator, SmallAlphaGap, TOperator,
};
pub use rng::CounterRng;

/// Library version, embedded in run manifests for reproducibility.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
