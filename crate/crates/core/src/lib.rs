//! Reconstruction of recurrently deforming shapes from monocular 2D tracks.
//!
//! Frames whose shape re-occurs are detected pairwise with a sampled
//! epipolar rigidity test, grouped by spectral clustering of the resulting
//! affinity graph, and each group is reconstructed with ordinary rigid
//! structure from motion.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, parallel
//! execution and the command line live in the `sfrm` crate.
#![no_std]
// NaN must fall into the rejecting branch of these comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod affinity;
pub mod bundle;
mod error;
pub mod eval;
pub mod geometry;
mod math;
pub mod reconstruct;
pub mod rigidity;
pub mod spectral;
pub mod synthetic;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use geometry::{
    CameraIntrinsics, CameraPose, Correspondence, FundamentalMatrix, Homography, Point2, Point3,
    SimilarityTransform,
};
