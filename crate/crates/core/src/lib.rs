//! Multi-model 3D registration.
//!
//! Given correspondences `(a_i, b_i)` between two point clouds that show
//! several independently moving rigid objects, jointly segment the
//! correspondences by object and estimate each object's motion. The main
//! solver is an EM scheme over rigid-motion hypotheses ([`em`]); Sequential
//! RANSAC, T-Linkage and per-cluster Horn fits are provided as baselines
//! ([`baselines`]), together with the evaluation metrics ([`metrics`]) and
//! a synthetic scene generator ([`scenegen`]).
//!
//! Data-parallel loops (E-step rows, M-step columns, RANSAC scoring, trial
//! sweeps) run on rayon with the default `parallel` feature and fall back
//! to sequential iteration without it. Results do not depend on the number
//! of threads.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod em;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod horn;
pub mod init;
pub mod io;
pub mod metrics;
pub mod par;
pub mod scenegen;
pub mod spatial;

pub use em::{solve_em, EmParams, Hypothesis, MultiModelEstimate};
pub use error::{Error, Result};
pub use geometry::{
    angular_distance, Correspondence, CorrespondenceSet, Labeling, Point3, RigidTransform, OUTLIER,
};
