//! Experiment harness for preference-based landing reward learning: the
//! configuration format, session files, CSV exports, sweep runner and the
//! HTTP service used for live elicitation.

pub mod config;
pub mod export;
pub mod runner;
pub mod service;
pub mod session;
