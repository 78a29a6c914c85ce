//! Batch commands and the live session service for shared-control
//! simulations.

pub mod commands;
pub mod failure;
pub mod server;
pub mod session;
