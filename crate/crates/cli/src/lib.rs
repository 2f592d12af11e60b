//! The `stn` command-line pipeline: training, compression, evaluation and
//! model files.

pub mod config;
pub mod container;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod verify;

pub use container::{load_model, save_model, Manifest, ModelContainer};
pub use error::{CliError, Result};
pub use model::{Evaluation, Model};
pub use pipeline::{
    compress_model, emit_tradeoff, run_compress, run_eval, run_report, run_train, train_model, Budget,
    CompressionReport, LayerReport,
};
