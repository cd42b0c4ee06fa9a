//! File formats, synthetic data and the command-line front end for
//! [`qtmine_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod logging;
pub mod par;
pub mod synth;

pub use error::{Error, Result};
