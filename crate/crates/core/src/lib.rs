//! Meal detection from continuous glucose monitoring (CGM) data.
//!
//! A CGM series is delay-embedded, and a short sliding window of snapshot
//! pairs is decomposed with dynamic mode decomposition (DMD) at every
//! step. The trailing trajectory of the largest eigenvalue magnitude feeds
//! a regularized logistic regression that emits meal events online.
//!
//! | module | purpose |
//! |---|---|
//! | [`ingest`] | CSV parsing, grid alignment, gap filling |
//! | [`embedding`] | delay embedding and snapshot matrices |
//! | [`dmd`] | windowed and streaming DMD |
//! | [`features`] | λ_max trace, spikes, feature vectors, training sets |
//! | [`classifier`] | logistic regression and the online detector |
//! | [`eval`] | matching, recall/FPR, ROC/AUC, delays, spike statistics |
//! | [`synth`] | synthetic corpora with known meals |
//! | [`baseline`] | rate-of-change comparison detector |
//! | [`pipeline`] | end-to-end batch/streaming detection, corpus train/eval |
//! | [`cli`] | the `mealdmd` subcommands as library functions |

pub mod baseline;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod dmd;
pub mod embedding;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod synth;

pub use config::{RunConfig, VERSION};
