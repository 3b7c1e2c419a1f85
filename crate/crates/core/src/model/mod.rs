//! The C⁴Net model: micro-encoder, compression shortcuts, pyramid-semantic
//! head, guidance flow, complementary-extraction decoder and multi-level
//! supervision, plus the Pipe/Branch ablation decoders and a no-shortcut
//! baseline.

pub mod ablation;
pub mod blocks;
pub mod checkpoint;
mod config;
pub mod encoder;
mod net;

pub use config::{Aggregation, DecoderMode, ModelConfig, LEVELS};
pub use net::{Arch, ForwardOptions, Net, Outputs};
