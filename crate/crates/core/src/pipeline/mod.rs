//! File formats, synthetic data, run manifests, and the command-line
//! interface.

pub mod cli;
pub mod flo;
pub mod manifest;
pub mod pfm;
pub mod pgm;
pub mod synth;
