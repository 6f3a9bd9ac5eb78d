//! Topological summaries of convolutional-network activations.
//!
//! The crate turns per-image activation tensors into labeled point clouds
//! ([`sampling`]), computes Vietoris–Rips persistence in dimensions 0 and 1
//! ([`persistence`]), compares diagrams with the sliced Wasserstein distance
//! ([`diagram_distance`]), builds mapper graphs over an activation space
//! ([`mapper`]) and scores how well those graphs separate classes
//! ([`purity`]). On-disk formats live in [`tensor_io`].

pub mod diagram_distance;
pub mod error;
pub mod mapper;
pub mod persistence;
pub mod purity;
pub mod sampling;
pub mod tensor_io;

pub use error::{Error, Result};
pub use tensor_io::{ActivationTensor, Feature, LabeledPointCloud, PersistenceDiagram};
