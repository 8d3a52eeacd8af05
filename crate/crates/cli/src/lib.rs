//! Experiment runner for the geofb core: built-in reproductions,
//! config-driven runs, trace export, SVG plots, and certification of
//! externally produced traces.

pub mod app;
pub mod artifacts;
pub mod builtins;
pub mod certify;
pub mod outcome;
pub mod spec;
pub mod table;

pub use app::main_with_args;
