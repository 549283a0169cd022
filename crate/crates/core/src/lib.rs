//! Skeleton rigging toolkit: a semantic-aware token codec for skeletal trees,
//! learnable density-interval conditioning, dataset curation and evaluation
//! metrics.
//!
//! Coordinates live in a normalized `[-1, 1]^3` frame once [`normalize`] has
//! been applied; the codec, metrics and toy model all assume that frame.

pub mod curation;
pub mod density;
pub mod geometry;
pub mod groups;
pub mod json;
pub mod mesh;
pub mod metrics;
pub mod normalize;
pub mod obj;
pub mod quantize;
pub mod skeleton;
pub mod synth;
pub mod tokenizer;
pub mod union_find;
pub mod viz;

pub use geometry::{Aabb, Vec3};
pub use mesh::{sample_mesh, MeshSample, TriMesh};
pub use normalize::{normalize, NormalizationTransform};
pub use quantize::{dequantize, quantize, DEFAULT_RESOLUTION};
pub use skeleton::{Category, Coarse, Joint, SemanticLabel, Skeleton};
