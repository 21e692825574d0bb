//! Hyperspectral skin-imaging biomarker pipeline.
//!
//! The crate covers the whole desk-scale workflow:
//!
//! * [`cube`]: SpecCube v1 storage, white/dark calibration, l1 normalization,
//!   circular ROI cropping and resampling to network input size;
//! * [`index`]: band-ratio tissue indices (oxygenation, perfusion, haemoglobin,
//!   water) and per-patient feature vectors;
//! * [`clinical`]: the clinical parameter dictionary, CSV ingestion, imputation,
//!   cohort filtering and descriptive statistics;
//! * [`scores`]: a table-driven engine for bedside and ICU severity scores;
//! * [`forest`]: a class-balanced random forest with impurity importance and
//!   cross-validated recursive feature elimination;
//! * [`eval`]: nested stratified cross-validation, ensembling, ROC/AUROC and
//!   bootstrap confidence intervals;
//! * [`stats`]: Welch's t-test, Bonferroni correction and boxplot summaries;
//! * [`synth`]: synthetic cohorts with planted effects;
//! * [`workflow`]: feature tables from stored cubes and cohorts;
//! * [`manifest`]: run manifests with configuration hashes and file digests.

pub mod clinical;
pub mod cube;
pub mod error;
pub mod eval;
pub mod forest;
pub mod index;
pub mod manifest;
pub mod scores;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod workflow;

pub use error::{Error, Result};
