//! Unsupervised video foreground segmentation by interactively constrained
//! encoding of motion and appearance, with occlusion-aware initialization and
//! superpixel graph-cut refinement.

pub mod assignment;
pub mod color;
pub mod commands;
pub mod components;
pub mod config;
pub mod descriptors;
pub mod error;
pub mod flow;
pub mod grid;
pub mod ice;
pub mod initialization;
pub mod maxflow;
pub mod media_io;
pub mod metrics;
pub mod pipeline;
pub mod proposals;
pub mod refine;
pub mod registry;
pub mod saliency;
pub mod superpixels;
pub mod synthetic;
pub mod trimap;

pub use error::{Error, Result};
