//! Small decoder-only transformer over skeleton token sequences.
//!
//! The decoder attends causally over a conditioning prefix (shape feature,
//! class embedding, density vector and optional Main-group tokens) followed
//! by the sequence itself, and every layer adds a cross-attention step back
//! into the conditioning set. Everything runs on the CPU in `f32`.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod generate;
pub mod model;
pub mod nn;
pub mod shape;
pub mod toy;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{ModelConfig, TrainConfig};
pub use error::ModelError;
pub use generate::{generate, GenerateConfig, Generation, GenerationNote, Sampling};
pub use model::{ClsKind, ConditionBundle, Model};
pub use shape::{ShapeEncoder, ShapeEncoderConfig};
pub use toy::{example_from_rig, toy_examples, PreparedRig};
pub use train::{evaluate, BatchStats, StepReport, TrainExample, Trainer};
