//! Batch front end for `kfl-core`: subcommands, the desk experiments and
//! their JSON/CSV/SVG output.

pub mod commands;
pub mod experiments;
pub mod output;
pub mod plot;
