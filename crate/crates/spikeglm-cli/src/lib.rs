//! Library surface behind the `spikeglm` binary, exposed so integration
//! tests can drive whole experiment runs in-process.

pub mod config;
pub mod ops;
pub mod rows;
