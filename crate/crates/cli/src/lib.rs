//! Command-line front end of the shared-control lab and the live session
//! server the cockpit connects to.

pub mod commands;
pub mod config;
pub mod live;
pub mod protocol;
pub mod server;
