//! Command-line tools and the live session service for the BOPE engine.

pub mod commands;
pub mod server;
pub mod session;
