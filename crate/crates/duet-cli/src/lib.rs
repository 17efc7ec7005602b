//! Library surface of the pipeline driver; the binary is a thin argument
//! parser over these functions, and the integration tests call them
//! directly.

pub mod commands;
pub mod config;
pub mod plots;
