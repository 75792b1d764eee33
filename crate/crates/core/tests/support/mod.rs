//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod faults;
pub mod gen;
pub mod oracle;
