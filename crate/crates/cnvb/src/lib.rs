//! File formats, reports and the command-line interface on top of
//! [`cnvb_core`].

pub mod cache;
pub mod cifar;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod report;
pub mod snapshot;
pub mod suites;

pub use cache::NormCache;
pub use error::{Error, Result};
pub use snapshot::{read_snapshot, write_snapshot, Metadata, Snapshot};
