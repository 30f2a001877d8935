//! Command-line tool and HTTP service around the guided-reasoning library.

pub mod backend;
pub mod cli;
pub mod config;
pub mod service;
pub mod store;
