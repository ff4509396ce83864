//! Two-layer probabilistic spiking networks with GLM neurons.
//!
//! The crate covers the full loop: IDX image loading, Bernoulli rate
//! encoding into spike trains, the neuron model itself (raised-cosine
//! kernel bases, membrane potentials, likelihoods), two SGD trainers
//! (rate-coded targets and first-to-spike), spike-count and first-spike
//! decoders with operation counting, and verification tools (finite
//! differences, exhaustive event enumeration).

pub mod checkpoint;
pub mod data;
pub mod encoding;
pub mod error;
pub mod glm;
pub mod inference;
pub mod seeds;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
