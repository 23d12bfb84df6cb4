//! Command-line front end and live session server for `meshsplat`.

pub mod commands;
pub mod exit;
pub mod protocol;
pub mod server;
