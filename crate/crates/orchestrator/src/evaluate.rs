//! Worker-side trial evaluation.

use std::panic::{catch_unwind, AssertUnwindSafe};

use modecal_core::hyperband::{StopDecision, TrialStatus};
use modecal_core::sim::{SimError, Scenario, Simulator};

use crate::coordinator::{Assignment, Evaluation};

/// Runs jobs on one scenario's synthetic population.
pub struct Evaluator {
    sim: Simulator,
    check_iteration: u64,
}

impl Evaluator {
    pub fn new(scenario: Scenario, check_iteration: u64) -> Result<Self, SimError> {
        Ok(Evaluator {
            sim: Simulator::new(scenario)?,
            check_iteration,
        })
    }

    pub fn from_simulator(sim: Simulator, check_iteration: u64) -> Self {
        Evaluator { sim, check_iteration }
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    /// Runs `job.budget` iterations. After `check_iteration` iterations the
    /// loss goes to `on_check`; a prune decision stops the run there if
    /// iterations remain, and the trial reports that censored loss.
    pub fn evaluate(&self, job: &Assignment, mut on_check: impl FnMut(u64, f64) -> StopDecision) -> Evaluation {
        let run = catch_unwind(AssertUnwindSafe(|| {
            let mut run = self.sim.start(&job.config.values, job.sim_seed);
            let mut loss = f64::NAN;
            for iteration in 1..=job.budget {
                loss = run.step().1;
                if iteration == self.check_iteration
                    && on_check(iteration, loss) == StopDecision::Prune
                    && iteration < job.budget
                {
                    return (TrialStatus::Pruned, loss, iteration);
                }
            }
            (TrialStatus::Completed, loss, job.budget)
        }));
        match run {
            Ok((status, loss, iterations_run)) if job.budget > 0 => Evaluation {
                status,
                loss: Some(loss),
                iterations_run,
                diagnostic: None,
            },
            Ok(_) => Evaluation {
                status: TrialStatus::Failed,
                loss: None,
                iterations_run: 0,
                diagnostic: Some("zero budget".into()),
            },
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "unknown panic".into());
                Evaluation {
                    status: TrialStatus::Failed,
                    loss: None,
                    iterations_run: 0,
                    diagnostic: Some(format!("simulation panicked: {msg}")),
                }
            }
        }
    }
}
