//! Calibration runs: a coordinator that owns the scheduler and journal,
//! in-process and TCP workers, crash-resume by journal replay, and run
//! reports.

pub mod config;
pub mod coordinator;
pub mod evaluate;
pub mod inprocess;
pub mod journal;
pub mod net;
pub mod report;
pub mod run;

pub use config::{ConfigError, ResolvedConfig, RunConfig};
pub use coordinator::{Assignment, CoordError, Coordinator, Evaluation};
pub use evaluate::Evaluator;
pub use inprocess::{run_in_process, InProcessOptions, RunOutcome};
pub use journal::{read_journal, ConfigRecord, Journal, JournalContents, JournalError, ResultRecord};
pub use report::{build_report, write_report, Report, Summary};
pub use run::{calibrate, CalibrateOptions, RunError};
