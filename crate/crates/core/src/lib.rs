pub mod cli;
pub mod config;
pub mod data;
pub mod embedding;
pub mod error;
pub mod fsutil;
pub mod harness;
pub mod model;
pub mod msti;
pub mod numerics;
pub mod roada;

pub use error::{Error, Result};
