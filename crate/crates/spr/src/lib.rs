//! Datasets, file formats, the staged pipeline and the `spr` command line on
//! top of `spr-core`.

mod binio;
pub mod checkpoint;
pub mod config;
pub mod cubefile;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod synth_io;

pub use error::{Error, Result};
