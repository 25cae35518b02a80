#![allow(dead_code)]

use std::path::Path;

use modecal_core::hyperband::SchedulerConfig;
use modecal_core::mode::ModeMap;
use modecal_core::par::ExecPolicy;
use modecal_core::sim::{Scenario, BUNDLED_GROUND_TRUTH};
use modecal_orchestrator::config::ScenarioSource;
use modecal_orchestrator::{calibrate, CalibrateOptions, ResolvedConfig, RunConfig};

pub fn small_scenario() -> Scenario {
    let mut s = Scenario::bundled();
    s.population = 800;
    s.capacity = 320.0;
    s.ground_truth = Some(ModeMap(BUNDLED_GROUND_TRUTH));
    s
}

pub fn small_config(max_full: usize) -> ResolvedConfig {
    RunConfig {
        scenario: ScenarioSource::Inline(Box::new(small_scenario())),
        optimizer: SchedulerConfig {
            max_full_budget_trials: Some(max_full),
            ..SchedulerConfig::default()
        },
        minutes_per_iteration: 1.0,
        ..RunConfig::default()
    }
    .resolve(Path::new("."))
    .expect("valid config")
}

pub fn options(dir: &Path, seed: u64, workers: usize) -> CalibrateOptions {
    CalibrateOptions {
        run_dir: dir.to_owned(),
        seed,
        workers,
        resume: false,
        halt_after_results: None,
        policy: ExecPolicy::Parallel,
    }
}

pub fn run_fresh(cfg: &ResolvedConfig, dir: &Path, seed: u64, workers: usize) {
    calibrate(cfg, &options(dir, seed, workers)).expect("run succeeds");
}

pub fn journal_bytes(dir: &Path) -> (String, String) {
    (
        std::fs::read_to_string(dir.join("configs.jsonl")).unwrap(),
        std::fs::read_to_string(dir.join("results.jsonl")).unwrap(),
    )
}
