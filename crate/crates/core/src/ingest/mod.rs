//! Getting data in: configuration, CSV tables and synthetic streams.

pub mod config;
pub mod synthetic;
pub mod table;

pub use config::Config;
pub use synthetic::{generate_synthetic, Shape, Synthetic, SyntheticSpec};
pub use table::{
    calibrate, load_csv, normalize, parse_csv, read_csv, write_csv, ColumnRole, Dataset,
    DatasetSchema, Normalized, SchemaConfig,
};
