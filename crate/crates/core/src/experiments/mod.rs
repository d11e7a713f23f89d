//! Configuration, Monte Carlo sweeps, oracle comparisons and CSV output.

mod config;
mod oracle;
mod run;

pub use config::*;
pub use oracle::*;
pub use run::*;
