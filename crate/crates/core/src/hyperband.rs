//! Budget ladder, successive-halving brackets, the elapsed-time early-stop
//! rule, and the asynchronous BOHB scheduler.
//!
//! [`Scheduler`] is a pure state machine. Its state is a deterministic
//! function of the seed and the sequence of [`Scheduler::propose`] and
//! [`Scheduler::ingest`] calls, which is what makes journal replay work.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gp::{gp_fit, multistart_sga, KernelParams, SgaParams};
use crate::mode::NUM_MODES;
use crate::par::ExecPolicy;
use crate::rng;
use crate::space::{ConfigId, InterceptConfig, Interval, ParameterSpace};
use crate::tpe::{self, KdePair, TpeParams};

const PROPOSAL_STREAM: u64 = 0x5052_4f50;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LadderError {
    #[error("eta must exceed 1, got {0}")]
    Eta(f64),
    #[error("b_min must be at least 1")]
    MinBudget,
    #[error("b_max ({b_max}) is below b_min ({b_min})")]
    Inverted { b_min: u64, b_max: u64 },
}

/// Geometric budget range shared by all brackets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetLadder {
    pub b_min: u64,
    pub b_max: u64,
    pub eta: f64,
    pub s_max: usize,
}

pub fn build_ladder(b_min: u64, b_max: u64, eta: f64) -> Result<BudgetLadder, LadderError> {
    if !(eta > 1.0) || !eta.is_finite() {
        return Err(LadderError::Eta(eta));
    }
    if b_min < 1 {
        return Err(LadderError::MinBudget);
    }
    if b_max < b_min {
        return Err(LadderError::Inverted { b_min, b_max });
    }
    // the small slack keeps exact powers like log_3(9) from flooring to 1
    let s_max = ((b_max as f64 / b_min as f64).ln() / eta.ln() + 1e-9).floor() as usize;
    Ok(BudgetLadder {
        b_min,
        b_max,
        eta,
        s_max,
    })
}

impl BudgetLadder {
    /// Budget of a bracket's first stage: `round(b_max * eta^-s)`, at least
    /// `b_min`.
    pub fn budget(&self, s: usize) -> u64 {
        let b = (self.b_max as f64 * self.eta.powi(-(s as i32))).round() as u64;
        b.clamp(self.b_min, self.b_max)
    }

    /// Distinct budgets from smallest to largest.
    pub fn budgets(&self) -> Vec<u64> {
        let mut out: Vec<u64> = (0..=self.s_max).rev().map(|s| self.budget(s)).collect();
        out.dedup();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub n_configs: usize,
    pub budget: u64,
}

/// Stage plan of one successive-halving run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub s: usize,
    pub stages: Vec<Stage>,
}

/// Stage plan for bracket `s` (clamped to `s_max`).
pub fn bracket_schedule(ladder: &BudgetLadder, s: usize) -> Bracket {
    let s = s.min(ladder.s_max);
    let eta = ladder.eta;
    let n0 = ((ladder.s_max + 1) as f64 / (s + 1) as f64 * eta.powi(s as i32) - 1e-9).ceil() as usize;
    let mut stages = Vec::with_capacity(s + 1);
    let mut n = n0.max(1);
    for i in 0..=s {
        stages.push(Stage {
            n_configs: n,
            budget: ladder.budget(s - i),
        });
        n = ((n as f64 / eta + 1e-9).floor() as usize).max(1);
    }
    Bracket { s, stages }
}

/// One member of a completed rung. `loss` is `None` for failed trials;
/// `order` is the submission order (lower is earlier).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungEntry {
    pub config: ConfigId,
    pub loss: Option<f64>,
    pub order: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromoteError {
    #[error("cannot promote from an empty rung")]
    EmptyRung,
}

/// Keeps the best `max(1, floor(n / eta))` entries by ascending loss.
/// Failed entries rank last and ties go to the earlier submission.
pub fn sh_promote(rung: &[RungEntry], eta: f64) -> Result<Vec<ConfigId>, PromoteError> {
    if rung.is_empty() {
        return Err(PromoteError::EmptyRung);
    }
    let keep = ((rung.len() as f64 / eta + 1e-9).floor() as usize).max(1);
    let mut ranked: Vec<&RungEntry> = rung.iter().collect();
    ranked.sort_by(|a, b| {
        let la = a.loss.filter(|l| !l.is_nan());
        let lb = b.loss.filter(|l| !l.is_nan());
        match (la, lb) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then(a.order.cmp(&b.order))
    });
    Ok(ranked.into_iter().take(keep).map(|e| e.config).collect())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EarlyStopError {
    #[error("t_start ({t_start}) must be below t_end ({t_end})")]
    Times { t_start: f64, t_end: f64 },
    #[error("threshold_start ({start}) is below threshold_end ({end})")]
    Thresholds { start: f64, end: f64 },
    #[error("check_iteration must be at least 1")]
    CheckIteration,
}

/// Prunes trials whose L1 after `check_iteration` iterations exceeds a
/// threshold that decays linearly with elapsed run time (minutes).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyStopRule {
    pub t_start: f64,
    pub t_end: f64,
    pub threshold_start: f64,
    pub threshold_end: f64,
    pub check_iteration: u64,
}

impl Default for EarlyStopRule {
    fn default() -> Self {
        EarlyStopRule {
            t_start: 150.0,
            t_end: 750.0,
            threshold_start: 115.0,
            threshold_end: 5.0,
            check_iteration: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopDecision {
    Continue,
    Prune,
}

impl EarlyStopRule {
    pub fn validate(&self) -> Result<(), EarlyStopError> {
        if !(self.t_start < self.t_end) {
            return Err(EarlyStopError::Times {
                t_start: self.t_start,
                t_end: self.t_end,
            });
        }
        if !(self.threshold_start >= self.threshold_end) {
            return Err(EarlyStopError::Thresholds {
                start: self.threshold_start,
                end: self.threshold_end,
            });
        }
        if self.check_iteration == 0 {
            return Err(EarlyStopError::CheckIteration);
        }
        Ok(())
    }
}

pub fn early_stop_threshold(rule: &EarlyStopRule, elapsed: f64) -> f64 {
    if elapsed <= rule.t_start {
        rule.threshold_start
    } else if elapsed >= rule.t_end {
        rule.threshold_end
    } else {
        let f = (elapsed - rule.t_start) / (rule.t_end - rule.t_start);
        rule.threshold_start + f * (rule.threshold_end - rule.threshold_start)
    }
}

pub fn should_stop(intermediate_l1: f64, rule: &EarlyStopRule, elapsed: f64) -> StopDecision {
    if intermediate_l1 > early_stop_threshold(rule, elapsed) {
        StopDecision::Prune
    } else {
        StopDecision::Continue
    }
}

/// Source of new configurations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Bohb,
    GpQei,
    Random,
}

/// Fixed GP settings for the `gp-qei` backend. Inputs are scaled to the unit
/// cube and losses standardized before fitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpSettings {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// points per optimized batch
    pub batch_size: usize,
    pub sga: SgaParams,
}

impl Default for GpSettings {
    fn default() -> Self {
        GpSettings {
            length_scale: 0.3,
            signal_variance: 1.0,
            noise_variance: 1e-2,
            batch_size: 4,
            sga: SgaParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub b_min: u64,
    pub b_max: u64,
    pub eta: f64,
    /// probability of drawing a uniform configuration regardless of model
    pub rho: f64,
    /// number of brackets to open
    pub n_iterations: usize,
    /// uniform configurations evaluated at `b_max` before any bracket
    pub initial_random: usize,
    /// stop creating jobs once this many `b_max` trials exist
    pub max_full_budget_trials: Option<usize>,
    pub backend: Backend,
    pub tpe: TpeParams,
    pub gp: GpSettings,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            b_min: 3,
            b_max: 21,
            eta: 3.0,
            rho: 1.0 / 3.0,
            n_iterations: 100,
            initial_random: 9,
            max_full_budget_trials: None,
            backend: Backend::Bohb,
            tpe: TpeParams::default(),
            gp: GpSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedulerError {
    #[error(transparent)]
    Ladder(#[from] LadderError),
    #[error("rho must lie in [0, 1], got {0}")]
    Rho(f64),
    #[error("gamma must lie in (0, 1), got {0}")]
    Gamma(f64),
    #[error("h_min must be positive, got {0}")]
    HMin(f64),
    #[error("invalid GP settings: {0}")]
    Gp(String),
    #[error("unknown trial {0}")]
    UnknownTrial(u64),
}

/// How a configuration was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Random,
    Tpe,
    Gp,
    Promoted,
}

/// A unit of work: evaluate `config` for `budget` iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub trial: u64,
    pub config: InterceptConfig,
    pub budget: u64,
    pub origin: Origin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Pending,
    Running,
    Completed,
    Pruned,
    Failed,
}

impl TrialStatus {
    pub fn is_final(self) -> bool {
        matches!(self, TrialStatus::Completed | TrialStatus::Pruned | TrialStatus::Failed)
    }
}

/// Final outcome of a trial as seen by the scheduler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub status: TrialStatus,
    pub loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
struct TrialSlot {
    job: Job,
    bracket: Option<usize>,
    outcome: Option<TrialOutcome>,
}

#[derive(Clone, Debug, PartialEq)]
struct BracketState {
    plan: Bracket,
    stage: usize,
    /// trial ids of the current stage, in creation order
    members: Vec<u64>,
    finished: bool,
}

impl BracketState {
    fn slots_left(&self) -> usize {
        if self.stage == 0 && !self.finished {
            self.plan.stages[0].n_configs - self.members.len()
        } else {
            0
        }
    }
}

/// Loss a trial contributes to the model and its rung. A pruned trial only
/// saw `check_iteration` iterations, so it ranks behind every completed one.
fn censored_loss(outcome: &TrialOutcome) -> Option<f64> {
    let loss = outcome.loss.filter(|l| l.is_finite())?;
    match outcome.status {
        TrialStatus::Completed => Some(loss),
        TrialStatus::Pruned => Some(f64::INFINITY),
        _ => None,
    }
}

/// Asynchronous BOHB: warm-up draws, then Hyperband brackets opened as
/// workers ask for work, with new configurations from the TPE model, the
/// q-EI optimizer, or uniform sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct Scheduler {
    config: SchedulerConfig,
    ladder: BudgetLadder,
    space: ParameterSpace,
    seed: u64,
    policy: ExecPolicy,
    configs: Vec<InterceptConfig>,
    trials: Vec<TrialSlot>,
    brackets: Vec<BracketState>,
    ready: VecDeque<u64>,
    observations: BTreeMap<u64, Vec<(Vec<f64>, f64)>>,
    proposals: u64,
    full_budget_created: usize,
    results_seen: usize,
    gp_cache: VecDeque<Vec<f64>>,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig, space: ParameterSpace, seed: u64) -> Result<Self, SchedulerError> {
        let ladder = build_ladder(config.b_min, config.b_max, config.eta)?;
        if !(0.0..=1.0).contains(&config.rho) {
            return Err(SchedulerError::Rho(config.rho));
        }
        if !(config.tpe.gamma > 0.0 && config.tpe.gamma < 1.0) {
            return Err(SchedulerError::Gamma(config.tpe.gamma));
        }
        if !(config.tpe.h_min > 0.0) {
            return Err(SchedulerError::HMin(config.tpe.h_min));
        }
        let gp = &config.gp;
        if !(gp.length_scale > 0.0 && gp.signal_variance > 0.0 && gp.noise_variance > 0.0) {
            return Err(SchedulerError::Gp("length scale and variances must be positive".into()));
        }
        if gp.batch_size == 0 {
            return Err(SchedulerError::Gp("batch_size must be at least 1".into()));
        }
        Ok(Scheduler {
            config,
            ladder,
            space,
            seed,
            policy: ExecPolicy::default(),
            configs: Vec::new(),
            trials: Vec::new(),
            brackets: Vec::new(),
            ready: VecDeque::new(),
            observations: BTreeMap::new(),
            proposals: 0,
            full_budget_created: 0,
            results_seen: 0,
            gp_cache: VecDeque::new(),
        })
    }

    pub fn with_policy(mut self, policy: ExecPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn ladder(&self) -> &BudgetLadder {
        &self.ladder
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    /// Number of results ingested so far.
    pub fn results_seen(&self) -> usize {
        self.results_seen
    }

    pub fn trial_count(&self) -> usize {
        self.trials.len()
    }

    pub fn job(&self, trial: u64) -> Option<&Job> {
        self.slot(trial).map(|s| &s.job)
    }

    pub fn outcome(&self, trial: u64) -> Option<&TrialOutcome> {
        self.slot(trial).and_then(|s| s.outcome.as_ref())
    }

    pub fn config_by_id(&self, id: ConfigId) -> Option<&InterceptConfig> {
        id.0.checked_sub(1).and_then(|i| self.configs.get(i as usize))
    }

    /// Observations `(values, loss)` recorded per budget.
    pub fn observations(&self) -> &BTreeMap<u64, Vec<(Vec<f64>, f64)>> {
        &self.observations
    }

    /// Trials created but not yet finished, in trial order.
    pub fn outstanding(&self) -> Vec<u64> {
        self.trials
            .iter()
            .filter(|s| s.outcome.is_none())
            .map(|s| s.job.trial)
            .collect()
    }

    fn slot(&self, trial: u64) -> Option<&TrialSlot> {
        trial.checked_sub(1).and_then(|i| self.trials.get(i as usize))
    }

    fn limit_reached(&self) -> bool {
        self.config
            .max_full_budget_trials
            .is_some_and(|m| self.full_budget_created >= m)
    }

    /// Next promoted job waiting for a worker.
    pub fn pop_ready(&mut self) -> Option<Job> {
        let trial = self.ready.pop_front()?;
        self.job(trial).cloned()
    }

    /// True when no more jobs will ever be created and every created job
    /// has an outcome.
    pub fn is_finished(&self) -> bool {
        self.ready.is_empty() && self.trials.iter().all(|t| t.outcome.is_some()) && !self.can_propose()
    }

    fn can_propose(&self) -> bool {
        if self.limit_reached() {
            return false;
        }
        self.configs.len() < self.config.initial_random
            || self.brackets.iter().any(|b| b.slots_left() > 0)
            || self.brackets.len() < self.config.n_iterations
    }

    /// Creates a job with a new configuration, or `None` if the run has
    /// nothing left to open (promotions may still arrive).
    pub fn propose(&mut self) -> Option<Job> {
        if self.limit_reached() {
            return None;
        }
        if self.configs.len() < self.config.initial_random {
            let config = self.draw_config(true);
            return Some(self.create_trial(config.0, self.ladder.b_max, config.1, None));
        }
        let bracket = match self.brackets.iter().position(|b| b.slots_left() > 0) {
            Some(i) => i,
            None => {
                if self.brackets.len() >= self.config.n_iterations {
                    return None;
                }
                let s = self.ladder.s_max - self.brackets.len() % (self.ladder.s_max + 1);
                self.brackets.push(BracketState {
                    plan: bracket_schedule(&self.ladder, s),
                    stage: 0,
                    members: Vec::new(),
                    finished: false,
                });
                self.brackets.len() - 1
            }
        };
        let budget = self.brackets[bracket].plan.stages[0].budget;
        let (config, origin) = self.draw_config(false);
        let job = self.create_trial(config, budget, origin, Some(bracket));
        self.brackets[bracket].members.push(job.trial);
        Some(job)
    }

    fn create_trial(&mut self, config: InterceptConfig, budget: u64, origin: Origin, bracket: Option<usize>) -> Job {
        let job = Job {
            trial: self.trials.len() as u64 + 1,
            config,
            budget,
            origin,
        };
        if budget == self.ladder.b_max {
            self.full_budget_created += 1;
        }
        self.trials.push(TrialSlot {
            job: job.clone(),
            bracket,
            outcome: None,
        });
        job
    }

    fn draw_config(&mut self, warmup: bool) -> (InterceptConfig, Origin) {
        let index = self.proposals;
        self.proposals += 1;
        let mut rng = rng::stream(self.seed, &[PROPOSAL_STREAM, index]);
        let coin: f64 = rng.random();
        let id = ConfigId(self.configs.len() as u64 + 1);
        let explore = warmup || coin < self.config.rho || self.config.backend == Backend::Random;
        let modeled = if explore {
            None
        } else {
            match self.config.backend {
                Backend::Bohb => self.tpe_proposal(&mut rng).map(|v| (v, Origin::Tpe)),
                Backend::GpQei => self.gp_proposal(&mut rng).map(|v| (v, Origin::Gp)),
                Backend::Random => None,
            }
        };
        let (config, origin) = match modeled {
            Some((values, origin)) => (InterceptConfig::new(id, self.space.clip(&values)), origin),
            None => (self.space.sample_uniform(id, &mut rng), Origin::Random),
        };
        self.configs.push(config.clone());
        (config, origin)
    }

    /// Largest budget with enough observations for both sides of the split.
    pub fn model_budget(&self) -> Option<u64> {
        let need = 2 * self.config.tpe.min_points.max(1);
        self.observations
            .iter()
            .rev()
            .find(|(_, obs)| obs.len() >= need)
            .map(|(b, _)| *b)
    }

    /// Fits the density pair on the model budget's observations.
    pub fn tpe_model(&self) -> Option<KdePair> {
        let budget = self.model_budget()?;
        KdePair::fit(&self.observations[&budget], self.space.intervals(), budget, &self.config.tpe).ok()
    }

    fn tpe_proposal<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<[f64; NUM_MODES]> {
        let pair = self.tpe_model()?;
        let x = tpe::propose(&pair, self.config.tpe.n_candidates, rng);
        x.try_into().ok()
    }

    fn gp_proposal<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<[f64; NUM_MODES]> {
        if self.gp_cache.is_empty() {
            let budget = self.model_budget()?;
            let obs = &self.observations[&budget];
            let worst = obs.iter().map(|o| o.1).filter(|y| y.is_finite()).fold(f64::NAN, f64::max);
            let obs: Vec<(Vec<f64>, f64)> = obs
                .iter()
                .map(|(x, y)| (x.clone(), if y.is_finite() { *y } else { worst }))
                .filter(|o| o.1.is_finite())
                .collect();
            if obs.is_empty() {
                return None;
            }
            let n = obs.len() as f64;
            let mean = obs.iter().map(|o| o.1).sum::<f64>() / n;
            let sd = (obs.iter().map(|o| (o.1 - mean).powi(2)).sum::<f64>() / n).sqrt();
            let sd = if sd > 1e-12 { sd } else { 1.0 };
            let data: Vec<(Vec<f64>, f64)> = obs
                .iter()
                .map(|(x, y)| {
                    let values: [f64; NUM_MODES] = x.as_slice().try_into().expect("8 coordinates");
                    (self.space.to_unit(&values).to_vec(), (y - mean) / sd)
                })
                .collect();
            let f_star = data.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
            let gp = &self.config.gp;
            let params = KernelParams::isotropic(NUM_MODES, gp.signal_variance, gp.length_scale, gp.noise_variance);
            let state = gp_fit(&data, params).ok()?;
            let unit_bounds: Vec<Interval> = self
                .space
                .intervals()
                .iter()
                .map(|b| {
                    if b.width() > 0.0 {
                        Interval::new(0.0, 1.0)
                    } else {
                        Interval::new(0.5, 0.5)
                    }
                })
                .collect();
            let batch = multistart_sga(&state, gp.batch_size, &unit_bounds, f_star, &gp.sga, rng, self.policy).ok()?;
            self.gp_cache.extend(batch.into_points());
        }
        let unit = self.gp_cache.pop_front()?;
        Some(self.space.from_unit(&unit))
    }

    /// Records a final outcome. Completed and pruned trials join the
    /// observations at the trial's budget, pruned ones with an infinite loss;
    /// a finished rung promotes its survivors to the next stage. Duplicate outcomes are ignored and
    /// return `false`.
    pub fn ingest(&mut self, outcome: TrialOutcome) -> Result<bool, SchedulerError> {
        let idx = outcome
            .trial
            .checked_sub(1)
            .filter(|&i| (i as usize) < self.trials.len())
            .ok_or(SchedulerError::UnknownTrial(outcome.trial))? as usize;
        if self.trials[idx].outcome.is_some() {
            return Ok(false);
        }
        self.trials[idx].outcome = Some(outcome);
        self.results_seen += 1;
        self.ready.retain(|t| *t != outcome.trial);
        let job = &self.trials[idx].job;
        if let Some(loss) = censored_loss(&outcome) {
            self.observations
                .entry(job.budget)
                .or_default()
                .push((job.config.values.to_vec(), loss));
        }
        if let Some(b) = self.trials[idx].bracket {
            self.advance_bracket(b);
        }
        Ok(true)
    }

    fn advance_bracket(&mut self, b: usize) {
        let state = &self.brackets[b];
        let stage = state.plan.stages[state.stage];
        if state.finished
            || state.members.len() < stage.n_configs
            || state.members.iter().any(|t| self.slot(*t).is_some_and(|s| s.outcome.is_none()))
        {
            return;
        }
        if state.stage + 1 >= state.plan.stages.len() {
            self.brackets[b].finished = true;
            return;
        }
        let rung: Vec<RungEntry> = state
            .members
            .iter()
            .map(|t| {
                let slot = self.slot(*t).expect("member trial exists");
                let outcome = slot.outcome.expect("rung complete");
                RungEntry {
                    config: slot.job.config.id,
                    loss: censored_loss(&outcome),
                    order: *t,
                }
            })
            .collect();
        let next = state.plan.stages[state.stage + 1];
        let survivors = sh_promote(&rung, self.ladder.eta).expect("non-empty rung");
        let mut members = Vec::new();
        for id in survivors.into_iter().take(next.n_configs) {
            if self.limit_reached() {
                break;
            }
            let config = self.config_by_id(id).expect("known config").clone();
            let job = self.create_trial(config, next.budget, Origin::Promoted, Some(b));
            self.ready.push_back(job.trial);
            members.push(job.trial);
        }
        let state = &mut self.brackets[b];
        state.stage += 1;
        if members.is_empty() {
            state.finished = true;
        }
        // a stage cut short by the trial limit still completes on its members
        state.plan.stages[state.stage].n_configs = members.len().max(1);
        state.members = members;
    }

    /// Puts an outstanding trial back at the head of the ready queue, e.g.
    /// after its worker was lost.
    pub fn requeue(&mut self, trial: u64) -> Result<(), SchedulerError> {
        let slot = self.slot(trial).ok_or(SchedulerError::UnknownTrial(trial))?;
        if slot.outcome.is_none() && !self.ready.contains(&trial) {
            self.ready.push_front(trial);
        }
        Ok(())
    }

    /// Best loss among completed trials at `b_max`, if any.
    pub fn incumbent(&self) -> Option<f64> {
        self.trials
            .iter()
            .filter(|t| t.job.budget == self.ladder.b_max)
            .filter_map(|t| t.outcome)
            .filter(|o| o.status == TrialStatus::Completed)
            .filter_map(|o| o.loss)
            .min_by(f64::total_cmp)
    }
}
