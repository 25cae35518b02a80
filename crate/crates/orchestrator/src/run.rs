//! Fresh and resumed calibration runs.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::thread;

use modecal_core::par::ExecPolicy;

use crate::config::ResolvedConfig;
use crate::coordinator::{CoordError, Coordinator};
use crate::evaluate::Evaluator;
use crate::inprocess::{run_in_process, InProcessOptions, RunOutcome};
use crate::journal::{Journal, JournalError};
use crate::net::{self, MasterOptions, NetError};
use crate::report::{write_report, Report, ReportError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Coordinator(CoordError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl From<CoordError> for RunError {
    fn from(e: CoordError) -> Self {
        match e {
            CoordError::Journal(j) => RunError::Journal(j),
            other => RunError::Coordinator(other),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CalibrateOptions {
    pub run_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub resume: bool,
    pub halt_after_results: Option<usize>,
    pub policy: ExecPolicy,
}

/// Result of a calibration call.
#[derive(Debug)]
pub struct RunSummary {
    pub outcome: RunOutcome,
    pub report: Report,
    pub coordinator: Coordinator,
}

/// Runs (or resumes) a calibration into `opts.run_dir`, then writes the
/// report files. With `listen` set in the config the master serves TCP
/// workers and also starts `opts.workers` local ones over loopback;
/// otherwise workers are in-process on a virtual clock.
pub fn calibrate(cfg: &ResolvedConfig, opts: &CalibrateOptions) -> Result<RunSummary, RunError> {
    let (mut coord, start) = if opts.resume {
        if !opts.run_dir.join(crate::journal::CONFIGS_FILE).exists() {
            return Err(RunError::Config(format!("{} holds no journal to resume", opts.run_dir.display())));
        }
        Coordinator::resume(cfg, opts.seed, &opts.run_dir, opts.policy)?
    } else {
        let journal = Journal::create(&opts.run_dir)?;
        (Coordinator::new(cfg, opts.seed, Some(journal), opts.policy)?, 0.0)
    };
    write_run_file(&opts.run_dir, cfg, opts.seed)?;
    let (outcome, coord) = match &cfg.config.listen {
        None => {
            let evaluator = Evaluator::new(cfg.scenario.clone(), cfg.config.early_stop.check_iteration)
                .map_err(|e| RunError::Config(e.to_string()))?;
            let run_opts = InProcessOptions {
                workers: opts.workers,
                minutes_per_iteration: cfg.config.minutes_per_iteration,
                halt_after_results: opts.halt_after_results,
                policy: opts.policy,
            };
            let outcome = run_in_process(&mut coord, &evaluator, start, &run_opts)?;
            (outcome, coord)
        }
        Some(addr) => {
            let listener = TcpListener::bind(addr).map_err(NetError::from)?;
            let local = listener.local_addr().map_err(NetError::from)?.to_string();
            let master_opts = MasterOptions {
                time_scale: cfg.config.time_scale,
                start_minutes: start,
                ..MasterOptions::default()
            };
            let handles: Vec<_> = (0..opts.workers)
                .map(|_| {
                    let local = local.clone();
                    thread::spawn(move || net::run_worker(&local))
                })
                .collect();
            let coord = net::serve(coord, listener, cfg.scenario.clone(), master_opts)?;
            for h in handles {
                match h.join() {
                    Ok(r) => {
                        r?;
                    }
                    Err(_) => return Err(NetError::Unexpected("local worker panicked".into()).into()),
                }
            }
            (RunOutcome::Finished, coord)
        }
    };
    let report = write_report(&opts.run_dir)?;
    Ok(RunSummary {
        outcome,
        report,
        coordinator: coord,
    })
}

/// Records the effective configuration and seed beside the journal.
fn write_run_file(dir: &Path, cfg: &ResolvedConfig, seed: u64) -> Result<(), RunError> {
    let body = serde_json::json!({ "seed": seed, "config": cfg.config, "scenario": cfg.scenario });
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&body).expect("serializable"))
        .map_err(|source| JournalError::Io { path, source }.into())
}
