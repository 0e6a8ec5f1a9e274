//! Empirical-Bayes adjustment of probability estimates for selection bias.
//!
//! Large collections of individually unbiased probability estimates still
//! mislead anyone who acts on the most extreme of them: conditional on an
//! estimate being very small, the truth tends to be larger. This crate
//! shrinks each estimate toward 0.5 using only the marginal distribution of
//! the estimates themselves, via a beta-model variant of Tweedie's formula:
//! the score of the marginal is fitted with a penalized natural cubic
//! spline, plugged into closed-form conditional moments, and pushed through
//! the loss-optimal adjustment rule. Extensions handle systematically biased
//! estimates (a cubic bias link) and beta-mixture observation models.
//!
//! The crate also ships the supporting machinery: a seeded simulation harness
//! with a James-Stein baseline for benchmarking, a numerically exact score
//! oracle for validation, and a windowed empirical excess-certainty evaluator
//! with bootstrap intervals for real forecast archives.

pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod simulation;
pub mod spline;

pub use error::{EcapError, Result};
pub use estimator::{
    adjust, fit, fit_opt, AdjustedProbability, EcapConfig, EcapModel, MixtureSpec,
    ProbabilitySample,
};
pub use model::{excess_certainty, BiasLinkParam, Probability};
pub use spline::{CvConfig, ScoreSplineFit, SplineBasis};
