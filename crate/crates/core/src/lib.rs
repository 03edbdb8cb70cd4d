//! Trajectory analytics for dense circulating crowds.
//!
//! Image-to-ground calibration (`geometry`), keyframed tracks and gate timing
//! (`tracks`), gridded local density (`density`), speed statistics and the
//! speed-density relation (`analytics`), a seeded ground-truth generator
//! (`synth`), file formats (`io`) and the command-line driver (`cli`).
//!
//! Runnable walkthroughs live in `examples/`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod cli;
pub mod density;
pub mod geometry;
pub mod io;
pub mod numeric;
pub mod synth;
pub mod tracks;

pub use geometry::{GridSpec, Homography, SiteGeometry, WorldPoint};
pub use tracks::{Cohort, Keyframe, Track};
