//! Command line and HTTP front ends over the `sde_core` pipeline.

pub mod cli;
pub mod http;
