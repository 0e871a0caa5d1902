//! Two-stage estimation for multivariate linear regression when an unknown,
//! sparse subset of (response, predictor) pairs is mismatched.
//!
//! The library is organized around a simple pipeline:
//!
//! 1. [`estimators`] — stage one: estimate the coefficient matrix `B` by
//!    treating mismatched rows as row-sparse contamination (group-penalized
//!    convex program solved by block coordinate descent), with refitting and
//!    an iterative-hard-thresholding competitor.
//! 2. [`matcher`] — stage two: recover the row correspondence by thresholded
//!    nearest-neighbor matching, exact linear assignment, or constrained
//!    re-matching of pre-linked files.
//! 3. [`relaxations`] — structured convex relaxations over the matching
//!    polytope, solved by Frank-Wolfe with a combinatorial LP oracle.
//!
//! [`synth`] generates seeded benchmark instances, [`metrics`] evaluates
//! them, and [`model`] holds the shared data types.

pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod matcher;
pub mod metrics;
pub mod model;
pub mod relaxations;
pub mod synth;

pub use error::{Error, Result};
pub use model::{FitResult, GeneralizedMatch, GroundTruth, MatchResult, RegressionData};
