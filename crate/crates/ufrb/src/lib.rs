//! Unsupervised fuzzy rule-based nonlinear dimensionality reduction.
//!
//! This crate learns a first-order Takagi–Sugeno rule base that maps
//! high-dimensional points to 2-D/3-D coordinates. Rule antecedents are
//! seeded by geodesic c-means clustering over a kNN neighborhood graph,
//! and all rule parameters (centers, spreads, consequents) are refined by
//! momentum gradient descent on a distance-preserving stress: either the
//! geodesic stress (manifold unfolding) or the classical Sammon stress.
//!
//! Because the learned mapping is parametric, unseen points can be
//! projected out of sample, and points whose maximum rule firing strength
//! is low can be rejected as lying off the training manifold.
//!
//! Pipeline overview:
//!
//! 1. [`data`] — synthetic generators (swiss roll, s curve, helix), CSV
//!    ingestion, feature-wise zero-one normalization.
//! 2. [`graph`] — Euclidean kNN graph, connectivity check, all-pairs
//!    shortest-path geodesic estimation.
//! 3. [`gcm`] — geodesic c-means; centroids snap onto data points so the
//!    initial rules sit on the manifold.
//! 4. [`fuzzy`] — the rule base: memberships, firing strengths, projection
//!    and the rejection decision; model (de)serialization.
//! 5. [`train`] — stress objectives, analytic gradients, momentum descent.
//! 6. [`eval`] — quality metrics for a projection.
//! 7. [`cli`] — command-line pipeline (`generate`, `fit`, `project`,
//!    `evaluate`, `plot`).

pub mod cli;
pub mod data;
pub mod eval;
pub mod fuzzy;
pub mod gcm;
pub mod graph;
pub mod plot;
pub mod train;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error in {path}: {detail}")]
    Csv { path: String, detail: String },

    #[error("{path}: row {row}, column {col}: cannot parse {value:?} as a number")]
    CsvParse {
        path: String,
        row: usize,
        col: usize,
        value: String,
    },

    #[error("{path}: row {row} has {got} fields, expected {expected}")]
    CsvRagged {
        path: String,
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("neighborhood graph is disconnected: {0}")]
    Disconnected(graph::ComponentReport),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate firing: no rule fires above the underflow floor")]
    DegenerateFiring,

    #[error("non-finite stress at iteration {iteration}; training aborted")]
    NonFiniteStress { iteration: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("model file error: {0}")]
    ModelFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
