//! File formats, checkpoints, reports, the experiment grid and the command
//! line around `kgat-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod io;
pub mod report;
pub mod svg;
