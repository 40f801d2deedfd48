//! Vocabulary growth in collaborative tagging streams.
//!
//! The crate turns a log of tagging events (posts) into a time-ordered table
//! of tag assignments and measures how the number of distinct tags grows as a
//! function of intrinsic time, both for the whole system and for the
//! sub-streams of single resources and users.
//!
//! * [`ingest`] parses and cleans post logs and builds the assignment table.
//! * [`growth`] runs intrinsic-time clocks and distinct-tag trackers.
//! * [`stats`] builds linear and log-binned histograms (post lengths).
//! * [`fit`] estimates growth exponents, rescales curves, bins exponent
//!   populations and fits Gaussians.
//! * [`synth`] generates seeded streams with known growth exponents.
//!
//! The statistical routines are generic over the floating point type; the
//! `*64` / `*32` aliases below name the common instantiations.

// `!(x > y)` comparisons are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fit;
pub mod growth;
mod hll;
pub mod ingest;
mod intern;
pub mod io;
mod scalar;
pub mod stats;
pub mod synth;

pub use intern::Interner;
pub use scalar::Scalar;

pub use growth::{ContextSelector, EntityKind, GrowthCurve, SamplingPolicy, UserAccumulationCurve};
pub use ingest::{CleaningPolicy, DatasetSummary, Post, TasRecord, TasTable};

pub type Histogram64 = stats::Histogram<f64>;
pub type Histogram32 = stats::Histogram<f32>;
pub type LogBinnedHistogram64 = stats::LogBinnedHistogram<f64>;
pub type LogBinnedHistogram32 = stats::LogBinnedHistogram<f32>;
pub type TailFit64 = stats::TailFit<f64>;
pub type PostLengthDistribution64 = stats::PostLengthDistribution<f64>;

pub type ExponentEstimate64 = fit::ExponentEstimate<f64>;
pub type ExponentEstimate32 = fit::ExponentEstimate<f32>;
pub type RescaledCurve64 = fit::RescaledCurve<f64>;
pub type RescaledCurve32 = fit::RescaledCurve<f32>;
pub type GaussianFit64 = fit::GaussianFit<f64>;
pub type GaussianFit32 = fit::GaussianFit<f32>;
pub type LineFit64 = fit::LineFit<f64>;
