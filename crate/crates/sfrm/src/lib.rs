//! File formats, parallel stage execution, sweeps and the `sfrm` command
//! line for the `sfrm-core` reconstruction library.

pub mod config;
pub mod error;
pub mod formats;
pub mod stages;
pub mod sweep;

pub use error::{Error, Result};
