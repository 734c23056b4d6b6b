//! Clustering-driven, self-adapting anomaly detection for KPI time series.
//!
//! The pipeline has four stages:
//!
//! 1. [`features`] turns each series into three fixed-length feature vectors
//!    (trend signature, amplitude, impulse density);
//! 2. [`clustering`] splits a dataset with a three-level binary k-means tree
//!    into eight groups labelled by a [`ClusterCode`];
//! 3. [`evolve`] searches, per group, for the detection pipeline
//!    ([`detect::PipelineConfig`]) that lets the most series pass;
//! 4. new series are routed through the tree and handled by their group's
//!    pipeline.
//!
//! [`datagen`] produces labelled synthetic data and [`eval`] scores results.

pub mod clustering;
pub mod datagen;
pub mod detect;
pub mod error;
pub mod eval;
pub mod evolve;
pub mod features;
pub mod io;
pub mod preprocess;
pub mod series;
pub mod stats;

pub use error::{Error, Result};
pub use series::{AnomalyLabels, ClusterCode, DatasetEntry, LabeledDataset, Segment, TimeSeries};
