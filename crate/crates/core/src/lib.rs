//! Batch analysis of request execution traces.
//!
//! The crate ingests a portable newline-delimited trace format, segments it
//! into per-request windows, extracts each request's cross-thread critical
//! path, encodes run-time behavior as feature vectors, isolates outlying
//! requests by density clustering, groups them by behavior, and emits
//! diagnostic reports. A deterministic workload simulator with fault
//! injection provides reproducible ground truth for end-to-end testing.
//!
//! Pipeline stages map onto modules:
//!
//! * [`trace`] — event schema, parsing, request segmentation
//! * [`sim`] — synthetic workload generation with injected anomalies
//! * [`path`] — execution states, wakeup graph, critical-path extraction
//! * [`features`] — state counts/durations, syscall bags, TF-IDF, n-grams
//! * [`detect`] — DBSCAN outlier detection over feature matrices
//! * [`cluster`] — standardization, k-means, elbow selection
//! * [`report`] — statistics, differential n-grams, Isomap projection,
//!   report bundle emission
//!
//! Numeric routines are generic over [`Real`]; the pipeline instantiates
//! them at [`Scalar`].

pub mod artifacts;
pub mod cluster;
pub mod detect;
pub mod features;
pub mod path;
pub mod report;
pub mod scalar;
pub mod sim;
pub mod trace;

pub use scalar::Real;

/// Default floating-point precision used by the pipeline.
pub type Scalar = f64;

/// Row-major feature matrix at the pipeline's default precision.
pub type FeatureMatrix = ndarray::Array2<Scalar>;
