//! Unsupervised co-localization of the object shared by a set of images,
//! working from per-image grids of convolutional descriptors.
//!
//! The pipeline fits the mean and covariance of every descriptor in the set,
//! projects each image's centered descriptors onto the leading principal
//! direction, and boxes the largest positive region of the resulting
//! indicator map. A single-image baseline ([`scda`]), evaluation metrics
//! ([`eval`]) and a planted-signal generator ([`synth`]) come along.

pub mod bbox;
pub mod descriptor;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod localize;
pub mod pipeline;
pub mod scda;
pub mod synth;
pub mod transform;

pub use bbox::BoundingBox;
pub use descriptor::{Annotation, Annotations, DescriptorGrid, DescriptorSet};
pub use error::{Error, Result};
pub use pipeline::{run, Method, RunOptions, RunResults};
pub use transform::{fit, DdtModel, IndicatorMap};
