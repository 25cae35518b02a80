use modecal_core::hyperband::{Backend, GpSettings, Job, Origin, Scheduler, SchedulerConfig, TrialOutcome, TrialStatus};
use modecal_core::par::ExecPolicy;
use modecal_core::space::ParameterSpace;
use modecal_core::gp::SgaParams;

fn space() -> ParameterSpace {
    ParameterSpace::cube(-2.0, 2.0).unwrap()
}

fn bowl(job: &Job) -> f64 {
    job.config.values.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>() * 21.0 / job.budget as f64
}

/// Runs to completion with `workers` jobs in flight, finishing them oldest
/// first; returns every job in creation order.
fn drive(mut s: Scheduler, workers: usize, loss: impl Fn(&Job) -> f64) -> (Scheduler, Vec<Job>) {
    let mut created = Vec::new();
    let mut running: Vec<Job> = Vec::new();
    loop {
        while running.len() < workers {
            let next = s.pop_ready().or_else(|| {
                let job = s.propose();
                created.extend(job.clone());
                job
            });
            match next {
                Some(job) => running.push(job),
                None => break,
            }
        }
        if running.is_empty() {
            break;
        }
        let job = running.remove(0);
        let outcome = TrialOutcome {
            trial: job.trial,
            status: TrialStatus::Completed,
            loss: Some(loss(&job)),
        };
        assert!(s.ingest(outcome).unwrap());
    }
    assert!(s.is_finished());
    (s, created)
}

fn config(backend: Backend, rho: f64, limit: usize) -> SchedulerConfig {
    SchedulerConfig {
        backend,
        rho,
        max_full_budget_trials: Some(limit),
        ..SchedulerConfig::default()
    }
}

#[test]
fn warm_up_is_random_at_full_budget() {
    let s = Scheduler::new(config(Backend::Bohb, 1.0 / 3.0, 30), space(), 1).unwrap();
    let (_, jobs) = drive(s, 4, bowl);
    for j in &jobs[..9] {
        assert_eq!((j.origin, j.budget), (Origin::Random, 21));
    }
    assert!(jobs.iter().any(|j| j.origin == Origin::Tpe));
}

#[test]
fn pure_hyperband_configs_depend_only_on_the_seed() {
    let values = |seed, loss: fn(&Job) -> f64| {
        let s = Scheduler::new(config(Backend::Random, 1.0, 25), space(), seed).unwrap();
        let (_, jobs) = drive(s, 3, loss);
        jobs.iter().map(|j| j.config.values).collect::<Vec<_>>()
    };
    let a = values(5, bowl);
    let b = values(5, |j| -bowl(j));
    let n = a.len().min(b.len());
    assert!(n > 20);
    assert_eq!(a[..n], b[..n]);
    assert_ne!(a[..n], values(6, bowl)[..n]);
}

#[test]
fn identical_inputs_replay_identically() {
    let run = || {
        let s = Scheduler::new(config(Backend::Bohb, 1.0 / 3.0, 40), space(), 9).unwrap();
        drive(s, 5, bowl)
    };
    let (s1, j1) = run();
    let (s2, j2) = run();
    assert_eq!(j1, j2);
    assert_eq!(s1, s2);
}

#[test]
fn parallel_and_sequential_policies_agree() {
    let run = |policy| {
        let s = Scheduler::new(config(Backend::Bohb, 0.0, 30), space(), 2).unwrap().with_policy(policy);
        drive(s, 4, bowl).1
    };
    assert_eq!(run(ExecPolicy::Sequential), run(ExecPolicy::Parallel));
}

#[test]
fn model_based_proposals_beat_random_ones_on_a_bowl() {
    let (s, jobs) = drive(Scheduler::new(config(Backend::Bohb, 0.0, 80), space(), 3).unwrap(), 2, bowl);
    let mean = |o: Origin| {
        let v: Vec<f64> = jobs.iter().filter(|j| j.origin == o).map(|j| bowl(&Job { budget: 21, ..j.clone() })).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(Origin::Tpe) < mean(Origin::Random));
    assert!(s.incumbent().is_some());
}

#[test]
fn gp_backend_runs_and_stays_in_bounds() {
    let cfg = SchedulerConfig {
        initial_random: 6,
        gp: GpSettings {
            batch_size: 2,
            sga: SgaParams {
                restarts: 2,
                steps: 5,
                gradient_samples: 32,
                eval_samples: 256,
                ..SgaParams::default()
            },
            ..GpSettings::default()
        },
        tpe: modecal_core::tpe::TpeParams {
            min_points: 3,
            ..Default::default()
        },
        ..config(Backend::GpQei, 0.0, 15)
    };
    let (_, jobs) = drive(Scheduler::new(cfg, space(), 4).unwrap(), 3, bowl);
    assert!(jobs.iter().any(|j| j.origin == Origin::Gp));
    assert!(jobs.iter().all(|j| space().validate(&j.config).is_ok()));
}

#[test]
fn pruned_trials_count_as_bad() {
    let mut s = Scheduler::new(config(Backend::Bohb, 1.0 / 3.0, 30), space(), 1).unwrap();
    let job = s.propose().unwrap();
    s.ingest(TrialOutcome {
        trial: job.trial,
        status: TrialStatus::Pruned,
        loss: Some(0.01),
    })
    .unwrap();
    assert_eq!(s.observations()[&21][0].1, f64::INFINITY);
    assert_eq!(s.incumbent(), None);
}

#[test]
fn finished_trials_leave_the_ready_queue() {
    let mut s = Scheduler::new(config(Backend::Random, 1.0, 30), space(), 1).unwrap();
    let mut promoted = None;
    let mut open = Vec::new();
    while promoted.is_none() {
        let job = s.propose().unwrap();
        open.push(job.trial);
        for t in std::mem::take(&mut open) {
            s.ingest(TrialOutcome {
                trial: t,
                status: TrialStatus::Completed,
                loss: Some(t as f64),
            })
            .unwrap();
        }
        promoted = s.outstanding().first().copied();
    }
    // finishing a queued trial before dispatch removes it from the queue
    let t = promoted.unwrap();
    s.ingest(TrialOutcome {
        trial: t,
        status: TrialStatus::Completed,
        loss: Some(1.0),
    })
    .unwrap();
    assert!(s.pop_ready().is_none_or(|j| j.trial != t));
}
