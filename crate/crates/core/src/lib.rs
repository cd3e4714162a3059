//! Cardiotocography trace analysis: signal model, feature analyzers, rule
//! tables, rendering, and a synthetic trace generator.

pub mod analysis;
pub mod baseline;
pub mod classify;
pub mod dsp;
pub mod episodes;
pub mod error;
pub mod render;
pub mod signal;
pub mod sinusoidal;
pub mod synth;

pub use error::{CtgError, Result};
