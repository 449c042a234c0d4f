//! Verification harness for `lftrie`: a sequential oracle, a
//! linearizability checker, history recording, invariant sweeps and
//! randomized trial drivers.

pub mod checker;
pub mod contract;
pub mod copy_script;
pub mod history;
pub mod models;
pub mod oracle;
pub mod progress;
pub mod sweep;
pub mod trial;

pub use checker::{check, CheckError, Model, Operation, SetModel, Verdict};
pub use history::{HistoryEvent, Phase, Recorder};
pub use oracle::{Op, Oracle};
pub use sweep::{quiescent_sweep, SweepReport};
pub use trial::{run_trial, TrialReport, TrialSpec};
