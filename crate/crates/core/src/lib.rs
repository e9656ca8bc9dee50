//! First-break picking toolkit.
//!
//! Trains a per-pixel first-break probability predictor jointly with latent
//! "true" pick positions, so that outlier traces and noisy manual labels do
//! not poison training. Two inference modes come out of the same model:
//! automatic picking (per-trace argmax) and manual-pick refinement (MAP
//! correction under a Laplace labeling prior).

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod net;
pub mod seed;
pub mod spr;
pub mod synth;
pub mod types;
pub mod window;

pub use error::{Error, Result};
pub use types::{Gather, LabelMask2D, PickSet1D, ProbabilityMap, WindowedGather, UNLABELED};
