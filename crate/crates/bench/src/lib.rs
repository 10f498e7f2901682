//! Problem generators, experiment runner, reports and command-line front end.

pub mod cli;
pub mod generators;
pub mod problem;
pub mod run;
pub mod suites;
