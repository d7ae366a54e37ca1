//! Command line verbs and the websocket teleoperation service.

pub mod commands;
pub mod config;
pub mod serve;
pub mod wire;
