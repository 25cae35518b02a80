//! The single authority over scheduler state, the worker registry, trials
//! and the journal. Callers supply the time, so the same code runs under a
//! virtual clock in tests and the wall clock in networked runs.

use std::collections::BTreeMap;
use std::path::Path;

use modecal_core::hyperband::{
    should_stop, EarlyStopRule, Job, Scheduler, SchedulerError, StopDecision, TrialOutcome, TrialStatus,
};
use modecal_core::mode::ModeMap;
use modecal_core::par::ExecPolicy;
use modecal_core::rng;
use modecal_core::space::{ConfigId, InterceptConfig};
use serde::{Deserialize, Serialize};

use crate::config::ResolvedConfig;
use crate::journal::{read_journal, ConfigRecord, Journal, JournalError, ResultRecord, CONFIGS_FILE, RESULTS_FILE};

pub const HEARTBEAT_INTERVAL_SECS: f64 = 5.0;
pub const MISSED_BEATS: u32 = 3;

const SIM_STREAM: u64 = 0x5349_4d;

#[derive(Debug, thiserror::Error)]
pub enum CoordError {
    #[error("unknown worker {0}")]
    UnknownWorker(String),
    #[error("worker {0} is already registered")]
    DuplicateWorker(String),
    #[error("worker {worker} already runs trial {trial}")]
    WorkerBusy { worker: String, trial: u64 },
    #[error("worker {0} was marked lost")]
    WorkerLost(String),
    #[error("unknown trial {0}")]
    UnknownTrial(u64),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "state", content = "trial")]
pub enum WorkerState {
    Idle,
    Busy(u64),
    Lost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub id: String,
    pub address: String,
    pub state: WorkerState,
    /// caller-supplied monotonic seconds
    pub last_heartbeat: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialInfo {
    pub job: Job,
    pub status: TrialStatus,
    pub t_submit: f64,
    pub t_start: Option<f64>,
    pub worker: Option<String>,
    pub result: Option<ResultRecord>,
}

/// What a worker is asked to evaluate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub trial: u64,
    pub config: InterceptConfig,
    pub budget: u64,
    pub sim_seed: u64,
}

/// A worker's final report on one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub status: TrialStatus,
    pub loss: Option<f64>,
    pub iterations_run: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug)]
pub struct Coordinator {
    scheduler: Scheduler,
    journal: Option<Journal>,
    trials: BTreeMap<u64, TrialInfo>,
    workers: BTreeMap<String, WorkerRecord>,
    next_worker: u64,
    rule: EarlyStopRule,
    seed: u64,
}

impl Coordinator {
    pub fn new(cfg: &ResolvedConfig, seed: u64, journal: Option<Journal>, policy: ExecPolicy) -> Result<Self, CoordError> {
        let scheduler = Scheduler::new(cfg.config.optimizer.clone(), cfg.space.clone(), seed)?.with_policy(policy);
        Ok(Coordinator {
            scheduler,
            journal,
            trials: BTreeMap::new(),
            workers: BTreeMap::new(),
            next_worker: 1,
            rule: cfg.config.early_stop,
            seed,
        })
    }

    /// Rebuilds the state recorded in `dir` by replaying every proposal and
    /// result through a fresh scheduler, then reopens the journal for
    /// appending. Returns the coordinator and the run clock to resume at.
    pub fn resume(cfg: &ResolvedConfig, seed: u64, dir: &Path, policy: ExecPolicy) -> Result<(Self, f64), CoordError> {
        let contents = read_journal(dir)?;
        let mut coord = Coordinator::new(cfg, seed, None, policy)?;
        let mut next_config = 0;
        let mut clock = 0.0f64;
        for k in 0..=contents.results.len() {
            while let Some(rec) = contents.configs.get(next_config).filter(|r| r.results_seen <= k) {
                if rec.results_seen < k {
                    return Err(JournalError::corrupt(
                        CONFIGS_FILE,
                        next_config + 1,
                        format!("drawn after {} results but replay reached {k}", rec.results_seen),
                    )
                    .into());
                }
                coord.replay_proposal(rec, next_config + 1)?;
                clock = clock.max(rec.t_created);
                next_config += 1;
            }
            if let Some(rec) = contents.results.get(k) {
                coord.replay_result(rec, k + 1)?;
                clock = clock.max(rec.t_finish);
            }
        }
        if next_config < contents.configs.len() {
            return Err(JournalError::corrupt(
                CONFIGS_FILE,
                next_config + 1,
                "drawn after more results than the journal holds",
            )
            .into());
        }
        // proposals drawn but unfinished were already handed out; run them first
        for trial in coord.scheduler.outstanding().into_iter().rev() {
            coord.scheduler.requeue(trial)?;
        }
        coord.journal = Some(Journal::open(dir)?);
        log::info!(
            "resumed {} configs and {} results from {}",
            contents.configs.len(),
            contents.results.len(),
            dir.display()
        );
        Ok((coord, clock))
    }

    fn replay_proposal(&mut self, rec: &ConfigRecord, line: usize) -> Result<(), CoordError> {
        let corrupt = |reason: String| CoordError::from(JournalError::corrupt(CONFIGS_FILE, line, reason));
        let job = self
            .scheduler
            .propose()
            .ok_or_else(|| corrupt("the scheduler proposes nothing here".into()))?;
        if job.config.id != rec.config
            || job.config.values != rec.values.0
            || job.budget != rec.budget
            || job.origin != rec.origin
        {
            return Err(corrupt(format!(
                "record does not match the replayed proposal (config {}, budget {})",
                job.config.id, job.budget
            )));
        }
        self.trials.insert(job.trial, TrialInfo::pending(job, rec.t_created));
        Ok(())
    }

    fn replay_result(&mut self, rec: &ResultRecord, line: usize) -> Result<(), CoordError> {
        let corrupt = |reason: String| CoordError::from(JournalError::corrupt(RESULTS_FILE, line, reason));
        let info = self
            .trials
            .get(&rec.trial)
            .ok_or_else(|| corrupt(format!("trial {} was never created", rec.trial)))?;
        if info.job.config.id != rec.config || info.job.budget != rec.budget {
            return Err(corrupt(format!("trial {} does not match its job", rec.trial)));
        }
        if !rec.status.is_final() || info.status.is_final() {
            return Err(corrupt(format!("trial {} finished twice or not at all", rec.trial)));
        }
        self.ingest(rec.clone(), rec.t_finish)?;
        Ok(())
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn trials(&self) -> &BTreeMap<u64, TrialInfo> {
        &self.trials
    }

    pub fn workers(&self) -> &BTreeMap<String, WorkerRecord> {
        &self.workers
    }

    pub fn rule(&self) -> &EarlyStopRule {
        &self.rule
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn running(&self) -> usize {
        self.trials.values().filter(|t| t.status == TrialStatus::Running).count()
    }

    pub fn is_finished(&self) -> bool {
        self.scheduler.is_finished()
    }

    /// Registers a worker under a fresh id.
    pub fn register(&mut self, address: &str, now_secs: f64) -> String {
        loop {
            let id = format!("w{}", self.next_worker);
            self.next_worker += 1;
            if !self.workers.contains_key(&id) {
                self.insert_worker(id.clone(), address, now_secs);
                return id;
            }
        }
    }

    /// Registers a worker under a chosen id. A live id is rejected; a lost
    /// one may come back.
    pub fn register_as(&mut self, id: &str, address: &str, now_secs: f64) -> Result<(), CoordError> {
        if self.workers.get(id).is_some_and(|w| w.state != WorkerState::Lost) {
            return Err(CoordError::DuplicateWorker(id.into()));
        }
        self.insert_worker(id.into(), address, now_secs);
        Ok(())
    }

    fn insert_worker(&mut self, id: String, address: &str, now_secs: f64) {
        log::debug!("worker {id} registered from {address}");
        self.workers.insert(
            id.clone(),
            WorkerRecord {
                id,
                address: address.into(),
                state: WorkerState::Idle,
                last_heartbeat: now_secs,
            },
        );
    }

    fn live_worker(&mut self, id: &str) -> Result<&mut WorkerRecord, CoordError> {
        match self.workers.get_mut(id) {
            None => Err(CoordError::UnknownWorker(id.into())),
            Some(w) if w.state == WorkerState::Lost => Err(CoordError::WorkerLost(id.into())),
            Some(w) => Ok(w),
        }
    }

    pub fn heartbeat(&mut self, id: &str, now_secs: f64) -> Result<(), CoordError> {
        self.live_worker(id)?.last_heartbeat = now_secs;
        Ok(())
    }

    /// Removes a worker; a trial it was running goes back to the queue.
    pub fn deregister(&mut self, id: &str) -> Result<(), CoordError> {
        let w = self
            .workers
            .remove(id)
            .ok_or_else(|| CoordError::UnknownWorker(id.into()))?;
        if let WorkerState::Busy(trial) = w.state {
            self.release(trial)?;
        }
        Ok(())
    }

    /// Marks workers silent for more than `MISSED_BEATS` heartbeat intervals
    /// as lost and requeues their trials.
    pub fn reap(&mut self, now_secs: f64, interval_secs: f64) -> Result<Vec<String>, CoordError> {
        let timeout = interval_secs * MISSED_BEATS as f64;
        let lost: Vec<String> = self
            .workers
            .values()
            .filter(|w| w.state != WorkerState::Lost && now_secs - w.last_heartbeat > timeout)
            .map(|w| w.id.clone())
            .collect();
        for id in &lost {
            let w = self.workers.get_mut(id).expect("listed above");
            let state = std::mem::replace(&mut w.state, WorkerState::Lost);
            log::warn!("worker {id} missed {MISSED_BEATS} heartbeats; marked lost");
            if let WorkerState::Busy(trial) = state {
                self.release(trial)?;
            }
        }
        Ok(lost)
    }

    fn release(&mut self, trial: u64) -> Result<(), CoordError> {
        let info = self.trials.get_mut(&trial).ok_or(CoordError::UnknownTrial(trial))?;
        if info.status == TrialStatus::Running {
            info.status = TrialStatus::Pending;
            info.worker = None;
            info.t_start = None;
            self.scheduler.requeue(trial)?;
            log::info!("trial {trial} returned to the queue");
        }
        Ok(())
    }

    /// Hands the worker its next job, or `None` if nothing is available now.
    pub fn request_job(&mut self, worker: &str, now: f64) -> Result<Option<Assignment>, CoordError> {
        if let WorkerState::Busy(trial) = self.live_worker(worker)?.state {
            return Err(CoordError::WorkerBusy {
                worker: worker.into(),
                trial,
            });
        }
        let job = match self.scheduler.pop_ready() {
            Some(job) => job,
            None => match self.scheduler.propose() {
                Some(job) => {
                    let record = ConfigRecord {
                        config: job.config.id,
                        values: ModeMap(job.config.values),
                        origin: job.origin,
                        budget: job.budget,
                        results_seen: self.scheduler.results_seen(),
                        t_created: now,
                    };
                    if let Some(journal) = self.journal.as_mut() {
                        journal.append_config(&record)?;
                    }
                    self.trials.insert(job.trial, TrialInfo::pending(job.clone(), now));
                    job
                }
                None => return Ok(None),
            },
        };
        let info = self.trials.get_mut(&job.trial).expect("every job has a trial entry");
        info.status = TrialStatus::Running;
        info.t_start = Some(now);
        info.worker = Some(worker.into());
        self.live_worker(worker)?.state = WorkerState::Busy(job.trial);
        log::debug!("trial {} ({}, budget {}) -> {worker}", job.trial, job.config.id, job.budget);
        Ok(Some(Assignment {
            trial: job.trial,
            sim_seed: sim_seed(self.seed, job.config.id),
            config: job.config,
            budget: job.budget,
        }))
    }

    /// Early-stop decision for an intermediate loss reported at `iteration`.
    pub fn intermediate(&self, worker: &str, trial: u64, iteration: u64, l1: f64, now: f64) -> Result<StopDecision, CoordError> {
        let info = self.trials.get(&trial).ok_or(CoordError::UnknownTrial(trial))?;
        if info.worker.as_deref() != Some(worker) {
            log::warn!("intermediate report for trial {trial} from {worker}, which does not own it");
            return Ok(StopDecision::Continue);
        }
        if iteration != self.rule.check_iteration {
            return Ok(StopDecision::Continue);
        }
        let decision = should_stop(l1, &self.rule, now);
        if decision == StopDecision::Prune {
            log::debug!("trial {trial}: L1 {l1:.2} at iteration {iteration} exceeds the threshold; pruning");
        }
        Ok(decision)
    }

    /// Journals and ingests a worker's final report. Returns `false` when
    /// the report is a duplicate or comes from a worker not owning the
    /// trial; such reports are discarded.
    pub fn complete(&mut self, worker: &str, trial: u64, eval: Evaluation, now: f64) -> Result<bool, CoordError> {
        let info = self.trials.get(&trial).ok_or(CoordError::UnknownTrial(trial))?;
        if info.status.is_final() {
            log::debug!("duplicate result for trial {trial} from {worker} ignored");
            return Ok(false);
        }
        if info.status != TrialStatus::Running || info.worker.as_deref() != Some(worker) {
            log::warn!("result for trial {trial} from {worker}, which does not own it; discarded");
            return Ok(false);
        }
        if let Some(d) = &eval.diagnostic {
            log::warn!("trial {trial} on {worker}: {d}");
        }
        let valid_loss = eval.loss.filter(|l| l.is_finite() && *l >= 0.0);
        let (status, loss) = match eval.status {
            TrialStatus::Completed | TrialStatus::Pruned if valid_loss.is_some() => (eval.status, valid_loss),
            _ => (TrialStatus::Failed, None),
        };
        let record = ResultRecord {
            trial,
            config: info.job.config.id,
            budget: info.job.budget,
            status,
            loss,
            iterations_run: eval.iterations_run,
            t_submit: info.t_submit,
            t_start: info.t_start.unwrap_or(now),
            t_finish: now,
            worker: worker.into(),
        };
        if let Some(journal) = self.journal.as_mut() {
            journal.append_result(&record)?;
        }
        self.ingest(record, now)?;
        if let Some(w) = self.workers.get_mut(worker) {
            if w.state == WorkerState::Busy(trial) {
                w.state = WorkerState::Idle;
            }
        }
        Ok(true)
    }

    fn ingest(&mut self, record: ResultRecord, now: f64) -> Result<(), CoordError> {
        let before = self.scheduler.trial_count() as u64;
        self.scheduler.ingest(TrialOutcome {
            trial: record.trial,
            status: record.status,
            loss: record.loss,
        })?;
        let info = self.trials.get_mut(&record.trial).expect("checked by caller");
        info.status = record.status;
        info.t_start = Some(record.t_start);
        info.worker = Some(record.worker.clone());
        info.result = Some(record);
        for trial in before + 1..=self.scheduler.trial_count() as u64 {
            let job = self.scheduler.job(trial).expect("just created").clone();
            self.trials.insert(trial, TrialInfo::pending(job, now));
        }
        Ok(())
    }
}

impl TrialInfo {
    fn pending(job: Job, t_submit: f64) -> Self {
        TrialInfo {
            job,
            status: TrialStatus::Pending,
            t_submit,
            t_start: None,
            worker: None,
            result: None,
        }
    }
}

/// Simulator seed for a configuration: the same config repeats its
/// iteration prefix at every budget.
pub fn sim_seed(run_seed: u64, config: ConfigId) -> u64 {
    rng::derive(run_seed, &[SIM_STREAM, config.0])
}
