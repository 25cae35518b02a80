mod common;

use std::fs::OpenOptions;
use std::io::Write;

use common::*;
use modecal_orchestrator::journal::{read_journal, JournalError};
use modecal_orchestrator::{calibrate, Coordinator, CoordError, RunError};
use modecal_core::par::ExecPolicy;
use proptest::prelude::*;

#[test]
fn single_worker_journal_is_bit_identical_across_runs() {
    let cfg = small_config(12);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_fresh(&cfg, a.path(), 5, 1);
    run_fresh(&cfg, b.path(), 5, 1);
    assert_eq!(journal_bytes(a.path()), journal_bytes(b.path()));
}

#[test]
fn thread_count_does_not_change_the_journal() {
    let cfg = small_config(12);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_fresh(&cfg, a.path(), 9, 4);
    let mut opts = options(b.path(), 9, 4);
    opts.policy = ExecPolicy::Sequential;
    calibrate(&cfg, &opts).unwrap();
    assert_eq!(journal_bytes(a.path()), journal_bytes(b.path()));
}

fn interrupted_equals_uninterrupted(workers: usize, seed: u64, halt: usize) {
    let cfg = small_config(12);
    let full = tempfile::tempdir().unwrap();
    run_fresh(&cfg, full.path(), seed, workers);

    let part = tempfile::tempdir().unwrap();
    let mut opts = options(part.path(), seed, workers);
    opts.halt_after_results = Some(halt);
    calibrate(&cfg, &opts).unwrap();
    opts.halt_after_results = None;
    opts.resume = true;
    let resumed = calibrate(&cfg, &opts).unwrap();
    assert_eq!(journal_bytes(full.path()), journal_bytes(part.path()));

    let (replayed, _) = Coordinator::resume(&cfg, seed, full.path(), ExecPolicy::Parallel).unwrap();
    assert_eq!(replayed.scheduler(), resumed.coordinator.scheduler());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn resume_after_any_prefix_reproduces_the_run(halt in 0usize..40, seed in 0u64..1000) {
        interrupted_equals_uninterrupted(1, seed, halt);
    }
}

#[test]
fn replay_state_equals_live_state_with_many_workers() {
    let cfg = small_config(12);
    let dir = tempfile::tempdir().unwrap();
    let live = calibrate(&cfg, &options(dir.path(), 3, 6)).unwrap();
    let (replayed, _) = Coordinator::resume(&cfg, 3, dir.path(), ExecPolicy::Parallel).unwrap();
    assert_eq!(replayed.scheduler(), live.coordinator.scheduler());
    assert!(replayed.is_finished());
}

#[test]
fn resume_after_nine_results_continues_at_trial_ten() {
    let mut cfg = small_config(30);
    cfg.config.optimizer.tpe.min_points = 4;
    let dir = tempfile::tempdir().unwrap();
    let mut opts = options(dir.path(), 11, 1);
    opts.halt_after_results = Some(9);
    let halted = calibrate(&cfg, &opts).unwrap();
    // one worker: the tenth trial was handed out just before the halt
    assert_eq!(halted.coordinator.scheduler().trial_count(), 10);
    let (coord, clock) = Coordinator::resume(&cfg, 11, dir.path(), ExecPolicy::Parallel).unwrap();
    assert_eq!(coord.scheduler().observations()[&21].len(), 9);
    assert_eq!(coord.scheduler().outstanding(), vec![10]);
    assert_eq!(clock, 9.0 * 21.0);
    assert_eq!(coord.scheduler().tpe_model().unwrap().budget, 21);
}

#[test]
fn trailing_partial_line_is_dropped_on_resume() {
    let cfg = small_config(10);
    let full = tempfile::tempdir().unwrap();
    run_fresh(&cfg, full.path(), 2, 1);

    let part = tempfile::tempdir().unwrap();
    let mut opts = options(part.path(), 2, 1);
    opts.halt_after_results = Some(4);
    calibrate(&cfg, &opts).unwrap();
    let mut f = OpenOptions::new().append(true).open(part.path().join("results.jsonl")).unwrap();
    f.write_all(br#"{"trial":5,"config":5,"bud"#).unwrap();
    drop(f);
    assert_eq!(read_journal(part.path()).unwrap().results.len(), 4);
    opts.halt_after_results = None;
    opts.resume = true;
    calibrate(&cfg, &opts).unwrap();
    assert_eq!(journal_bytes(full.path()), journal_bytes(part.path()));
}

fn rewrite(path: &std::path::Path, f: impl FnOnce(Vec<String>) -> Vec<String>) {
    let text = std::fs::read_to_string(path).unwrap();
    let lines = f(text.lines().map(String::from).collect());
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn resume_error(cfg: &modecal_orchestrator::ResolvedConfig, dir: &std::path::Path) -> JournalError {
    match Coordinator::resume(cfg, 4, dir, ExecPolicy::Parallel) {
        Err(CoordError::Journal(e)) => e,
        other => panic!("expected a journal error, got {other:?}"),
    }
}

#[test]
fn missing_config_reference_refuses_to_start() {
    let cfg = small_config(10);
    let dir = tempfile::tempdir().unwrap();
    run_fresh(&cfg, dir.path(), 4, 1);
    rewrite(&dir.path().join("results.jsonl"), |mut lines| {
        lines[2] = lines[2].replacen("\"config\":3", "\"config\":999", 1);
        lines
    });
    match resume_error(&cfg, dir.path()) {
        JournalError::Corrupt { file, line, reason } => {
            assert_eq!((file, line), ("results.jsonl", 3));
            assert!(reason.contains("c999"), "{reason}");
        }
        other => panic!("{other}"),
    }
}

#[test]
fn malformed_line_names_the_record() {
    let cfg = small_config(10);
    let dir = tempfile::tempdir().unwrap();
    run_fresh(&cfg, dir.path(), 4, 1);
    rewrite(&dir.path().join("configs.jsonl"), |mut lines| {
        lines[1] = "{not json".into();
        lines
    });
    assert!(matches!(
        resume_error(&cfg, dir.path()),
        JournalError::Corrupt { file: "configs.jsonl", line: 2, .. }
    ));
}

#[test]
fn tampered_values_are_detected_on_replay() {
    let cfg = small_config(10);
    let dir = tempfile::tempdir().unwrap();
    run_fresh(&cfg, dir.path(), 4, 1);
    rewrite(&dir.path().join("configs.jsonl"), |mut lines| {
        let mut rec: serde_json::Value = serde_json::from_str(&lines[3]).unwrap();
        let v = rec["values"]["walk"].as_f64().unwrap();
        rec["values"]["walk"] = serde_json::json!(v + 1e-9);
        lines[3] = rec.to_string();
        lines
    });
    assert!(matches!(
        resume_error(&cfg, dir.path()),
        JournalError::Corrupt { file: "configs.jsonl", line: 4, .. }
    ));
}

#[test]
fn fresh_run_refuses_an_existing_journal() {
    let cfg = small_config(5);
    let dir = tempfile::tempdir().unwrap();
    run_fresh(&cfg, dir.path(), 1, 1);
    match calibrate(&cfg, &options(dir.path(), 1, 1)) {
        Err(RunError::Journal(JournalError::Exists(_))) => {}
        other => panic!("{:?}", other.map(|_| ())),
    }
}

#[test]
fn fresh_run_starts_at_trial_one() {
    let cfg = small_config(5);
    let dir = tempfile::tempdir().unwrap();
    run_fresh(&cfg, dir.path(), 1, 2);
    let j = read_journal(dir.path()).unwrap();
    assert_eq!(j.configs[0].config.0, 1);
    assert!(j.results.iter().any(|r| r.trial == 1));
}
