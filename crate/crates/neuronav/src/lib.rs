//! File formats, experiment drivers and the command-line interface.

pub mod cli;
pub mod formats;
pub mod pipeline;
pub mod plot;
