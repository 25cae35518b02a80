use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use modecal_core::mode::{Mode, ModeMap};
use modecal_core::par::ExecPolicy;
use modecal_core::sim::{estimate_beta, ChoiceObservation, ModeAttributes, Simulator};
use modecal_orchestrator::config::{load_scenario, RunConfig};
use modecal_orchestrator::journal::JournalError;
use modecal_orchestrator::{calibrate, net, write_report, CalibrateOptions, RunError};
use modecal_orchestrator::report::ReportError;

const EXIT_CONFIG: u8 = 1;
const EXIT_JOURNAL: u8 = 2;
const EXIT_PROTOCOL: u8 = 3;

#[derive(Parser)]
#[command(name = "modecal", version, about = "Mode-choice intercept calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run or resume a calibration.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// resume the run journaled in this directory
        #[arg(long)]
        resume: Option<PathBuf>,
        /// run directory for a fresh run
        #[arg(long)]
        out: Option<PathBuf>,
        /// evaluate jobs one at a time
        #[arg(long)]
        sequential: bool,
    },
    /// Evaluate jobs for a networked master.
    Worker {
        #[arg(long)]
        master: String,
    },
    /// Run one simulation and print per-iteration shares as CSV.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        intercepts: PathBuf,
        #[arg(long)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write curve, trial table and summary for a run directory.
    Report { run_dir: PathBuf },
    /// Fit a conditional logit to long-format choice data.
    Estimate {
        #[arg(long)]
        choices: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate {
            config,
            workers,
            seed,
            resume,
            out,
            sequential,
        } => cmd_calibrate(&config, workers, seed, resume, out, sequential),
        Command::Worker { master } => net::run_worker(&master)
            .map(|stats| log::info!("{} evaluated {} trials", stats.worker, stats.trials))
            .map_err(|e| Failure::new(EXIT_PROTOCOL, e)),
        Command::Simulate {
            scenario,
            intercepts,
            budget,
            seed,
        } => cmd_simulate(&scenario, &intercepts, budget, seed),
        Command::Report { run_dir } => cmd_report(&run_dir),
        Command::Estimate { choices } => cmd_estimate(&choices),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_calibrate(
    config: &Path,
    workers: usize,
    seed: u64,
    resume: Option<PathBuf>,
    out: Option<PathBuf>,
    sequential: bool,
) -> Result<(), Failure> {
    let cfg = RunConfig::load(config).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let run_dir = resume
        .clone()
        .or(out)
        .or_else(|| cfg.config.run_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("run-{seed}")));
    let opts = CalibrateOptions {
        run_dir,
        seed,
        workers: workers.max(1),
        resume: resume.is_some(),
        halt_after_results: None,
        policy: if sequential {
            ExecPolicy::Sequential
        } else {
            ExecPolicy::Parallel
        },
    };
    let summary = calibrate(&cfg, &opts).map_err(|e| {
        let code = match &e {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Journal(JournalError::Corrupt { .. }) => EXIT_JOURNAL,
            RunError::Report(ReportError::Journal(JournalError::Corrupt { .. })) => EXIT_JOURNAL,
            RunError::Journal(_) | RunError::Report(_) => EXIT_CONFIG,
            RunError::Net(_) | RunError::Coordinator(_) => EXIT_PROTOCOL,
        };
        Failure::new(code, e)
    })?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary.report.summary).expect("serializable")
    );
    log::info!("run written to {}", opts.run_dir.display());
    Ok(())
}

fn cmd_simulate(scenario: &Path, intercepts: &Path, budget: usize, seed: u64) -> Result<(), Failure> {
    let scenario = load_scenario(scenario).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let text = std::fs::read_to_string(intercepts)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", intercepts.display())))?;
    let values: ModeMap<f64> =
        serde_json::from_str(&text).map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", intercepts.display())))?;
    let sim = Simulator::new(scenario).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let result = sim
        .run(&values.0, budget, seed)
        .map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let mut w = csv::Writer::from_writer(std::io::stdout());
    let mut write = || -> csv::Result<()> {
        w.write_record(["iteration", "mode", "share"])?;
        for (i, share) in result.share_trajectory.iter().enumerate() {
            for mode in Mode::ALL {
                w.write_record([(i + 1).to_string(), mode.to_string(), share.get(mode).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    eprintln!("final L1: {:.3}", result.final_loss());
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<(), Failure> {
    let report = write_report(dir).map_err(|e| {
        let code = match e {
            ReportError::Journal(JournalError::Corrupt { .. }) => EXIT_JOURNAL,
            _ => EXIT_CONFIG,
        };
        Failure::new(code, e)
    })?;
    println!("{}", serde_json::to_string_pretty(&report.summary).expect("serializable"));
    Ok(())
}

#[derive(serde::Deserialize)]
struct ChoiceRow {
    obs: String,
    alt: String,
    chosen: String,
    cost: f64,
    time: f64,
    transfers: f64,
}

/// Parses long-format rows: one row per (observation, alternative).
fn read_choices(path: &Path) -> Result<(Vec<String>, Vec<ChoiceObservation>), String> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut labels: Vec<String> = Vec::new();
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(usize, bool, ModeAttributes)>> = HashMap::new();
    for (line, row) in reader.deserialize::<ChoiceRow>().enumerate() {
        let row = row.map_err(|e| format!("{}: {e}", path.display()))?;
        let alt = match labels.iter().position(|l| *l == row.alt) {
            Some(i) => i,
            None => {
                labels.push(row.alt.clone());
                labels.len() - 1
            }
        };
        let chosen = match row.chosen.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(format!("row {}: chosen must be 0/1, got {other:?}", line + 2)),
        };
        let attrs = ModeAttributes {
            cost: row.cost,
            time: row.time,
            transfers: row.transfers,
        };
        rows.entry(row.obs.clone())
            .or_insert_with(|| {
                order.push(row.obs.clone());
                Vec::new()
            })
            .push((alt, chosen, attrs));
    }
    let mut observations = Vec::with_capacity(order.len());
    for obs in &order {
        let entries = &rows[obs];
        let mut alternatives = vec![None; labels.len()];
        let mut chosen = Vec::new();
        for (alt, is_chosen, attrs) in entries {
            if alternatives[*alt].replace(*attrs).is_some() {
                return Err(format!("observation {obs}: alternative {} listed twice", labels[*alt]));
            }
            if *is_chosen {
                chosen.push(*alt);
            }
        }
        let alternatives: Option<Vec<ModeAttributes>> = alternatives.into_iter().collect();
        let alternatives =
            alternatives.ok_or_else(|| format!("observation {obs}: every alternative needs a row"))?;
        let [chosen] = chosen[..] else {
            return Err(format!("observation {obs}: exactly one alternative must be chosen"));
        };
        observations.push(ChoiceObservation { chosen, alternatives });
    }
    Ok((labels, observations))
}

fn cmd_estimate(path: &Path) -> Result<(), Failure> {
    let (labels, observations) = read_choices(path).map_err(|m| Failure::new(EXIT_CONFIG, m))?;
    let mut estimate = estimate_beta(&observations).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    for (j, p) in estimate.parameters.iter_mut().take(labels.len().saturating_sub(1)).enumerate() {
        p.name = format!("intercept[{}]", labels[j + 1]);
    }
    let out = serde_json::json!({
        "reference": labels.first(),
        "estimate": estimate,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(())
}
