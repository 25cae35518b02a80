//! In-process workers driven by a discrete-event loop on a virtual clock.
//!
//! Each job occupies its worker for `iterations_run * minutes_per_iteration`
//! virtual minutes. Jobs dispatched at the same instant are evaluated in
//! parallel; completions are applied in (finish time, worker) order, so a
//! run is reproducible regardless of thread count.

use modecal_core::hyperband::StopDecision;
use modecal_core::par::{self, ExecPolicy};

use crate::coordinator::{Assignment, CoordError, Coordinator, Evaluation};
use crate::evaluate::Evaluator;

#[derive(Clone, Debug, PartialEq)]
pub struct InProcessOptions {
    pub workers: usize,
    pub minutes_per_iteration: f64,
    /// stop once this many results are in and the idle workers have been
    /// handed their next jobs, leaving those jobs unfinished
    pub halt_after_results: Option<usize>,
    pub policy: ExecPolicy,
}

impl Default for InProcessOptions {
    fn default() -> Self {
        InProcessOptions {
            workers: 1,
            minutes_per_iteration: 12.0,
            halt_after_results: None,
            policy: ExecPolicy::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    Finished,
    Halted,
}

struct Pending {
    finish: f64,
    worker: usize,
    trial: u64,
    eval: Evaluation,
}

pub fn worker_name(index: usize) -> String {
    format!("w{}", index + 1)
}

/// Drives `coord` to completion starting at run-clock minute `start`.
pub fn run_in_process(
    coord: &mut Coordinator,
    evaluator: &Evaluator,
    start: f64,
    opts: &InProcessOptions,
) -> Result<RunOutcome, CoordError> {
    let names: Vec<String> = (0..opts.workers.max(1)).map(worker_name).collect();
    for name in &names {
        coord.register_as(name, "in-process", 0.0)?;
    }
    let mpi = opts.minutes_per_iteration;
    let mut busy = vec![false; names.len()];
    let mut pending: Vec<Pending> = Vec::new();
    let mut now = start;
    loop {
        let mut batch: Vec<(usize, Assignment)> = Vec::new();
        for (w, name) in names.iter().enumerate() {
            if busy[w] {
                continue;
            }
            match coord.request_job(name, now)? {
                Some(job) => {
                    busy[w] = true;
                    batch.push((w, job));
                }
                None => break,
            }
        }
        let shared: &Coordinator = coord;
        let evals = par::map_range(batch.len(), opts.policy, |i| {
            let (w, job) = &batch[i];
            evaluator.evaluate(job, |iteration, l1| {
                shared
                    .intermediate(&names[*w], job.trial, iteration, l1, now + iteration as f64 * mpi)
                    .unwrap_or(StopDecision::Continue)
            })
        });
        for ((w, job), eval) in batch.into_iter().zip(evals) {
            pending.push(Pending {
                finish: now + eval.iterations_run as f64 * mpi,
                worker: w,
                trial: job.trial,
                eval,
            });
        }
        if opts
            .halt_after_results
            .is_some_and(|k| coord.scheduler().results_seen() >= k)
        {
            return Ok(RunOutcome::Halted);
        }
        let Some(next) = (0..pending.len()).min_by(|&a, &b| {
            pending[a]
                .finish
                .total_cmp(&pending[b].finish)
                .then(pending[a].worker.cmp(&pending[b].worker))
        }) else {
            if !coord.is_finished() {
                log::warn!("no work left to dispatch but the scheduler is not finished");
            }
            return Ok(RunOutcome::Finished);
        };
        let done = pending.swap_remove(next);
        now = done.finish;
        busy[done.worker] = false;
        coord.complete(&names[done.worker], done.trial, done.eval, now)?;
    }
}
