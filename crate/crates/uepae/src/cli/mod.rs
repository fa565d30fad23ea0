//! Command-line front end: flat key-value experiment configs, the
//! versioned binary checkpoint format, CSV emission, and the four
//! subcommands (`bounds`, `train`, `eval`, `sweep`).

mod checkpoint;
mod commands;
mod config_file;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use commands::{run, Cli};
pub use config_file::ExperimentConfig;
