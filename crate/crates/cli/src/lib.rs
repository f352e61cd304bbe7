//! Command implementations and the HTTP service behind the `cmad` binary.

pub mod commands;
pub mod exit;
pub mod render;
pub mod service;
