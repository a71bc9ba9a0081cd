//! Experiment configuration, runners and acceptance checks for `svgp-core`.

pub mod config;
pub mod experiments;
pub mod oracle;
pub mod rows;
pub mod svg;
