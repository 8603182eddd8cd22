//! File formats, CSV tables and report rendering for the `dhflow` tool.
//!
//! The solvers themselves live in `dhflow-core`; this crate carries
//! everything that needs the standard library: file IO, the JSON network
//! format, CSV result tables, and the command-line entry points.

pub mod format;
pub mod report;
pub mod table;
