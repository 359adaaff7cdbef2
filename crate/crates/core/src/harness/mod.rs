//! Experiment runner: configuration, scripted scenarios, randomized sweeps,
//! metrics output and the built-in verification suite.
//!
//! All outputs are deterministic for a given configuration and seed. CSV files
//! use a header row, comma separators and LF line endings; JSON files are
//! pretty-printed with stable key order.

mod config;
mod scenario;
mod schedule;
mod sweep;
mod verify;

use std::io::Write;
use std::path::Path;

pub use config::{ExperimentConfig, ScheduleConfig, SweepConfig, SEED_ENV};
pub use scenario::{
    co_firing_growth, overlap_events, run_scenario, CoFiringGrowth, MetricsRow, ScenarioSummary,
    SCENARIOS, SPLIT_CORPUS, STACK_CORPUS,
};
pub use schedule::{AllFiring, RandomFiring, Scripted};
pub use sweep::{sweep, write_sweep_csv, SweepRow};
pub use verify::{
    check_excess_formula, check_weighted_equivalence, hash_dir, verify, verify_checks,
    CriterionResult, VerifyReport,
};

use crate::error::{Error, Result};

pub(crate) fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
