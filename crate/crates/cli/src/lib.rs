//! Batch front end for the sheetlab library: configuration, dispatch, artifacts.

pub mod commands;
pub mod config;
