//! Coupled-entropy scoring and alpha-beta fusion of probabilistic classifiers.
//!
//! The numeric core (`coupled_math`, `entropy`, `scoring`, `fusion`) is
//! independent of the experiment code; `classifier`, `dataset` and
//! `experiment` reproduce the mfeat multiple-feature study on top of it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod coupled_math;
pub mod dataset;
pub mod entropy;
pub mod experiment;
pub mod fusion;
pub mod scoring;

pub use coupled_math::{Cost, Coupling, MathError, ProbVector};
pub use fusion::{fuse, FusionParams, Preset, SourcePosteriors};
pub use scoring::{RiskProfile, ScoredBatch};
