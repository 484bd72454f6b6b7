//! Measures how well a Vision Transformer's CLS attention agrees with an
//! input-attribution map of the same image.
//!
//! The core quantity is the IA-Score of one head on one sample: the cosine
//! between the head's CLS-to-patch attention and the patch attribution for
//! the chosen class. Stacking it over every head gives the sample's
//! Interpretability-Attention Vector (IAV), layer-major. Everything else in
//! the crate feeds or consumes those vectors:
//!
//! - [`bundle`] reads and writes analysis bundles (NPY arrays plus a JSON
//!   manifest) and enforces their invariants.
//! - [`vit`] is a small deterministic ViT for synthetic data and tests.
//! - [`attribution`] builds occlusion maps and validates external ones.
//! - [`metrics`] has IA-Score, IAV, global IAV/AAV, entropy, head typing and
//!   checkpoint drift.
//! - [`perturb`] masks, blurs and shuffles images and records accuracy.
//! - [`embedding`] runs exact t-SNE over per-layer IAV slices.
//! - [`report`] writes CSV, JSON and SVG outputs for all of the above.

pub mod attribution;
pub mod bundle;
pub mod embedding;
pub mod error;
mod fsutil;
pub mod metrics;
pub mod npy;
pub mod perturb;
pub mod report;
pub mod scorer;
pub mod svg;
pub mod tensor;
pub mod vit;

pub use error::{Error, Result};
pub use tensor::Tensor;
