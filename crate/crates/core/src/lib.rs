//! Adaptive importance sampling driven by stochastic approximation.
//!
//! A proposal `f(·|θ)` is refit to the target `π` after every batch of
//! importance-weighted draws by `θ ← Π(θ + γ_t (θ̃ − θ))`, where `θ̃` comes
//! from a model-specific [`adapters::AdaptationMap`], while the same weights
//! feed a running estimate of `∫ h π`.

pub mod adapters;
pub mod density;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod quadrature;

pub use adapters::{AdaptationMap, CauchyMmMap, CurvatureMode, ExpFamilyMap, MixtureIndicatorMap, MixtureRbMap};
pub use density::{
    CauchyScale, Component, FixedComponentMixture, NormalMean, ProposalFamily, TargetDensity, WeightedSample,
};
pub use engine::{AdaptationTrace, AdaptiveSampler, GainSchedule, ParameterBox};
pub use error::{Error, Result};
pub use estimator::{ArmSummary, IntegralEstimate, MseReport};
pub use experiment::{ExperimentConfig, Preset};
