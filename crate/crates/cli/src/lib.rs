//! Command line and HTTP front ends over `metabal_core::api`.

pub mod cli;
pub mod report;
pub mod service;
