//! Command-line front end for the `blindmimo` estimators: configuration
//! loading, the binary block container and CSV output.

pub mod commands;
pub mod container;
