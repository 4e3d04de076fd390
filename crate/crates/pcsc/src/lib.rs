//! Simulator harness around [`pcsc_core`]: synthetic industrial scenes on
//! disk, training runs with reproducible artifacts, fixed-SNR sweeps with
//! CSV/plot output, and the `pcsc` command-line tool.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod plot;
pub mod ply;
pub mod runner;
pub mod scene;
