//! Nonparametric Bayesian inference and imputation for incomplete
//! multivariate categorical data.
//!
//! Rows are modelled as a Dirichlet-process mixture of product-multinomials
//! in which "missing" is an extra category of every variable. A
//! Chinese-restaurant-process Gibbs sampler fits the augmented model; the
//! missing category is then collapsed out by renormalising, leaving a
//! mixture over the observed categories that drives imputation, joint and
//! pairwise distribution estimates and independence tests.
//!
//! The numeric types are generic over [`Scalar`]/[`Real`]; the aliases
//! below fix the common choices.

pub mod data;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod synth;

pub use data::{parse_dataset, CategoricalSchema, Dataset, MISSING};
pub use error::{Error, Result};
pub use model::{deserialize_model, serialize_model};
pub use num_rational::BigRational;
pub use sampler::{run_gibbs, GibbsConfig};
pub use scalar::{Real, Scalar};

/// Double-precision collapsed model, the type written to model files.
pub type CollapsedModel = model::CollapsedModel<f64>;
pub type CollapsedModel32 = model::CollapsedModel<f32>;
/// Exact rational collapsed model.
pub type ExactCollapsedModel = model::CollapsedModel<BigRational>;

pub type Priors = model::Priors<f64>;
pub type ModelState = model::ModelState<f64>;
pub type PosteriorSample = sampler::PosteriorSample<f64>;

pub type JointDistribution = model::JointDistribution<f64>;
pub type ExactJointDistribution = model::JointDistribution<BigRational>;
pub type MissingnessTable = model::MissingnessTable<f64>;
pub type ExactMissingnessTable = model::MissingnessTable<BigRational>;

pub type ImputationResult = inference::ImputationResult<f64>;
