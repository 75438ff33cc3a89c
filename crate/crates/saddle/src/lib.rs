//! Std front end of `saddle-core`: file formats, reports, table runs,
//! verification suites and the `saddle` command-line tool.

pub mod error;
pub mod export;
pub mod mm;
pub mod report;
pub mod run;
pub mod suites;

pub use error::{Error, Result};
