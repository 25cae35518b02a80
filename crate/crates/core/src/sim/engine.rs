//! The iterated mode-choice simulation.
//!
//! Each iteration every agent draws a mode from its logit probabilities
//! under the current car travel times; the resulting car volume feeds a
//! BPR delay curve and car times relax toward it with the scenario's
//! damping factor.

use serde::{Deserialize, Serialize};

use super::logit::{congestion_update, l1_objective, softmax_in_place, utility, ModeAttributes};
use super::scenario::Scenario;
use super::SimError;
use crate::mode::{Mode, ModeShare, NUM_MODES};
use crate::par::{self, ExecPolicy};
use crate::rng;
use crate::space::InterceptConfig;

/// Agents per parallel work item.
const AGENT_CHUNK: usize = 512;

/// Full record of one simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub final_share: ModeShare,
    pub share_trajectory: Vec<ModeShare>,
    /// L1 distance to the benchmark after each iteration, in percent
    pub loss_trajectory: Vec<f64>,
    pub iterations_run: usize,
}

impl SimulationResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trajectory.last().expect("at least one iteration")
    }
}

/// A scenario with its synthesized population, ready to run many times.
#[derive(Clone, Debug)]
pub struct Simulator {
    scenario: Scenario,
    agents: Vec<[ModeAttributes; NUM_MODES]>,
    policy: ExecPolicy,
}

impl Simulator {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let agents = scenario.synthesize_population();
        Ok(Simulator {
            scenario,
            agents,
            policy: ExecPolicy::default(),
        })
    }

    pub fn with_policy(mut self, policy: ExecPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn population(&self) -> usize {
        self.agents.len()
    }

    /// Starts a run that can be advanced one iteration at a time.
    pub fn start(&self, intercepts: &[f64; NUM_MODES], seed: u64) -> SimulationRun<'_> {
        SimulationRun {
            sim: self,
            intercepts: *intercepts,
            seed,
            delay_factor: 1.0,
            shares: Vec::new(),
            losses: Vec::new(),
        }
    }

    /// Runs `budget` iterations.
    pub fn run(
        &self,
        intercepts: &[f64; NUM_MODES],
        budget: usize,
        seed: u64,
    ) -> Result<SimulationResult, SimError> {
        if budget == 0 {
            return Err(SimError::ZeroBudget);
        }
        let mut run = self.start(intercepts, seed);
        for _ in 0..budget {
            run.step();
        }
        Ok(run.finish())
    }

    /// Mean final shares over `seeds` runs at `intercepts`; used to build a
    /// benchmark from known intercepts.
    pub fn mean_final_share(
        &self,
        intercepts: &[f64; NUM_MODES],
        budget: usize,
        seeds: impl IntoIterator<Item = u64>,
    ) -> Result<ModeShare, SimError> {
        let mut acc = [0.0; NUM_MODES];
        let mut n = 0usize;
        for seed in seeds {
            let r = self.run(intercepts, budget, seed)?;
            for (a, s) in acc.iter_mut().zip(r.final_share.as_array()) {
                *a += s;
            }
            n += 1;
        }
        if n == 0 {
            return Err(SimError::InvalidScenario("no seeds given".into()));
        }
        let mut mean = acc.map(|a| a / n as f64);
        let drift = 100.0 - mean.iter().sum::<f64>();
        mean[Mode::Car.index()] += drift;
        Ok(ModeShare::new(mean)?)
    }

    fn iterate(&self, intercepts: &[f64; NUM_MODES], delay_factor: f64, seed: u64, iteration: u64) -> [u64; NUM_MODES] {
        let coef = self.scenario.coefficients;
        let car = Mode::Car.index();
        let n_chunks = self.agents.len().div_ceil(AGENT_CHUNK);
        let partial = par::map_range(n_chunks, self.policy, |c| {
            let mut counts = [0u64; NUM_MODES];
            let lo = c * AGENT_CHUNK;
            let hi = (lo + AGENT_CHUNK).min(self.agents.len());
            let mut v = [0.0; NUM_MODES];
            for (offset, attrs) in self.agents[lo..hi].iter().enumerate() {
                for k in 0..NUM_MODES {
                    let mut a = attrs[k];
                    if k == car {
                        a.time *= delay_factor;
                    }
                    v[k] = utility(intercepts[k], &a, &coef);
                }
                softmax_in_place(&mut v);
                let agent = (lo + offset) as u64;
                let u = rng::unit_f64(rng::derive(seed, &[agent, iteration]));
                counts[pick(&v, u)] += 1;
            }
            counts
        });
        partial.iter().fold([0u64; NUM_MODES], |mut acc, c| {
            for k in 0..NUM_MODES {
                acc[k] += c[k];
            }
            acc
        })
    }
}

/// Inverse-CDF draw from a probability vector.
fn pick(p: &[f64; NUM_MODES], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last = 0;
    for (k, &pk) in p.iter().enumerate() {
        if pk > 0.0 {
            cum += pk;
            last = k;
            if u < cum {
                return k;
            }
        }
    }
    last
}

/// An in-progress simulation.
pub struct SimulationRun<'a> {
    sim: &'a Simulator,
    intercepts: [f64; NUM_MODES],
    seed: u64,
    delay_factor: f64,
    shares: Vec<ModeShare>,
    losses: Vec<f64>,
}

impl SimulationRun<'_> {
    /// Runs one more iteration and returns its mode share and L1 loss.
    pub fn step(&mut self) -> (ModeShare, f64) {
        let scenario = &self.sim.scenario;
        let iteration = self.shares.len() as u64;
        let counts = self
            .sim
            .iterate(&self.intercepts, self.delay_factor, self.seed, iteration);
        let share = ModeShare::from_counts(&counts).expect("population is non-empty");
        let loss = l1_objective(&share, &scenario.benchmark);

        let car_volume = counts[Mode::Car.index()] as f64;
        let target = congestion_update(
            1.0,
            car_volume,
            scenario.capacity,
            scenario.bpr_alpha,
            scenario.bpr_beta,
        );
        self.delay_factor = (1.0 - scenario.damping) * self.delay_factor + scenario.damping * target;

        self.shares.push(share);
        self.losses.push(loss);
        (share, loss)
    }

    pub fn iterations_run(&self) -> usize {
        self.shares.len()
    }

    /// Current car travel-time multiplier relative to free flow.
    pub fn delay_factor(&self) -> f64 {
        self.delay_factor
    }

    /// Panics if no iteration has been run.
    pub fn finish(self) -> SimulationResult {
        SimulationResult {
            final_share: *self.shares.last().expect("at least one iteration"),
            iterations_run: self.shares.len(),
            share_trajectory: self.shares,
            loss_trajectory: self.losses,
        }
    }
}

/// One-shot convenience wrapper: builds the population and runs.
pub fn run_simulation(
    scenario: &Scenario,
    config: &InterceptConfig,
    budget: usize,
    seed: u64,
) -> Result<SimulationResult, SimError> {
    Simulator::new(scenario.clone())?.run(&config.values, budget, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pick_respects_boundaries() {
        let p = [0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(pick(&p, 0.0), 1);
        assert_eq!(pick(&p, 0.4999), 1);
        assert_eq!(pick(&p, 0.5), 3);
        assert_eq!(pick(&p, 0.99999999), 3);
    }

    #[test]
    fn zero_budget_rejected() {
        let sim = Simulator::new(Scenario::bundled()).unwrap();
        assert!(matches!(sim.run(&[0.0; NUM_MODES], 0, 1), Err(SimError::ZeroBudget)));
    }

    #[test]
    fn policies_are_bit_identical() {
        let sim = Simulator::new(Scenario::bundled()).unwrap();
        let a = sim.clone().with_policy(ExecPolicy::Parallel).run(&[0.5; 8], 4, 9).unwrap();
        let b = sim.with_policy(ExecPolicy::Sequential).run(&[0.5; 8], 4, 9).unwrap();
        assert_eq!(a, b);
    }
}
