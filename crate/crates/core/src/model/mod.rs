//! The report generation network: Visual Unit, Semantic Unit, visual-semantic
//! fusion and a transformer decoder.
//!
//! Every attention or feed-forward sublayer is wrapped in a residual
//! connection followed by layer normalization.

mod checkpoint;
mod config;
mod forward;
mod generate;
mod params;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_matching, save_checkpoint, Manifest, TensorEntry, MANIFEST_FILE, PARAMS_FILE,
};
pub use config::ModelConfig;
pub use forward::{positional_encoding, stack_rows, Forward};
pub use generate::{argmax, generate, generate_batch, generate_streams, sample_token, DEFAULT_TEMPERATURE};
pub use params::{check_parameters, init_parameters, parameter_shapes, ModelParameters};
