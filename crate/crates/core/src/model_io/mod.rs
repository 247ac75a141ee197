//! On-disk model representation: tensor archive, BF16 codec, config, and the
//! model ↔ archive mapping.

pub mod archive;
pub mod bf16;
pub mod config;
pub mod model;

pub use archive::{read_archive, write_archive, TensorArchive, TensorEntry};
pub use bf16::{bf16_to_f32, f32_to_bf16};
pub use config::ModelConfig;
pub use model::{load_model, load_model_dir, save_model, save_model_dir};
