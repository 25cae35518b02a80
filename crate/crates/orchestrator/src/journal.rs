//! Append-only run journal: `configs.jsonl` holds one record per distinct
//! configuration, `results.jsonl` one record per finished trial.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use modecal_core::hyperband::{Origin, TrialStatus};
use modecal_core::mode::ModeMap;
use modecal_core::space::ConfigId;
use serde::{Deserialize, Serialize};

pub const CONFIGS_FILE: &str = "configs.jsonl";
pub const RESULTS_FILE: &str = "results.jsonl";

/// A configuration as proposed, with the scheduler position it was drawn at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub config: ConfigId,
    pub values: ModeMap<f64>,
    pub origin: Origin,
    pub budget: u64,
    pub results_seen: usize,
    pub t_created: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub trial: u64,
    pub config: ConfigId,
    pub budget: u64,
    pub status: TrialStatus,
    pub loss: Option<f64>,
    pub iterations_run: u64,
    pub t_submit: f64,
    pub t_start: f64,
    pub t_finish: f64,
    pub worker: String,
}

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("journal i/o on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{file} line {line}: {reason}")]
    Corrupt {
        file: &'static str,
        line: usize,
        reason: String,
    },
    #[error("{0} already holds a journal; resume it instead")]
    Exists(PathBuf),
}

impl JournalError {
    pub fn corrupt(file: &'static str, line: usize, reason: impl Into<String>) -> Self {
        JournalError::Corrupt {
            file,
            line,
            reason: reason.into(),
        }
    }
}

/// Open journal files positioned for appending.
#[derive(Debug)]
pub struct Journal {
    dir: PathBuf,
    configs: File,
    results: File,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> JournalError + '_ {
    move |source| JournalError::Io {
        path: path.to_owned(),
        source,
    }
}

impl Journal {
    /// Creates an empty journal; fails if one already exists in `dir`.
    pub fn create(dir: &Path) -> Result<Self, JournalError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let open = |name: &str| {
            let path = dir.join(name);
            OpenOptions::new()
                .append(true)
                .create_new(true)
                .open(&path)
                .map_err(|e| {
                    if e.kind() == io::ErrorKind::AlreadyExists {
                        JournalError::Exists(dir.to_owned())
                    } else {
                        JournalError::Io { path, source: e }
                    }
                })
        };
        Ok(Journal {
            dir: dir.to_owned(),
            configs: open(CONFIGS_FILE)?,
            results: open(RESULTS_FILE)?,
        })
    }

    /// Opens an existing journal for appending, dropping any partial last
    /// line left by a crash.
    pub fn open(dir: &Path) -> Result<Self, JournalError> {
        let open = |name: &str| -> Result<File, JournalError> {
            let path = dir.join(name);
            let mut f = OpenOptions::new()
                .read(true)
                .write(true)
                .create(true)
                .truncate(false)
                .open(&path)
                .map_err(io_err(&path))?;
            let mut bytes = Vec::new();
            f.read_to_end(&mut bytes).map_err(io_err(&path))?;
            let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
            if keep < bytes.len() {
                log::warn!("{}: dropping {} bytes of a partial record", path.display(), bytes.len() - keep);
                f.set_len(keep as u64).map_err(io_err(&path))?;
            }
            f.seek(SeekFrom::End(0)).map_err(io_err(&path))?;
            Ok(f)
        };
        Ok(Journal {
            dir: dir.to_owned(),
            configs: open(CONFIGS_FILE)?,
            results: open(RESULTS_FILE)?,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append_config(&mut self, record: &ConfigRecord) -> Result<(), JournalError> {
        let path = self.dir.join(CONFIGS_FILE);
        append(&mut self.configs, record).map_err(io_err(&path))
    }

    pub fn append_result(&mut self, record: &ResultRecord) -> Result<(), JournalError> {
        let path = self.dir.join(RESULTS_FILE);
        append(&mut self.results, record).map_err(io_err(&path))
    }
}

fn append<T: Serialize>(file: &mut File, record: &T) -> io::Result<()> {
    let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.flush()
}

/// Both logs as read from disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JournalContents {
    pub configs: Vec<ConfigRecord>,
    pub results: Vec<ResultRecord>,
}

/// Reads and cross-checks a journal. A missing directory or missing files
/// read as empty; a trailing partial line is ignored.
pub fn read_journal(dir: &Path) -> Result<JournalContents, JournalError> {
    let configs: Vec<ConfigRecord> = read_lines(dir, CONFIGS_FILE)?;
    let results: Vec<ResultRecord> = read_lines(dir, RESULTS_FILE)?;
    for (i, c) in configs.iter().enumerate() {
        if c.config != ConfigId(i as u64 + 1) {
            return Err(JournalError::corrupt(
                CONFIGS_FILE,
                i + 1,
                format!("expected config {}, found {}", ConfigId(i as u64 + 1), c.config),
            ));
        }
    }
    for (i, r) in results.iter().enumerate() {
        if r.config.0 == 0 || r.config.0 as usize > configs.len() {
            return Err(JournalError::corrupt(
                RESULTS_FILE,
                i + 1,
                format!("trial {} references missing config {}", r.trial, r.config),
            ));
        }
    }
    Ok(JournalContents { configs, results })
}

fn read_lines<T: for<'de> Deserialize<'de>>(dir: &Path, name: &'static str) -> Result<Vec<T>, JournalError> {
    let path = dir.join(name);
    let text = match std::fs::read(&path) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(JournalError::Io { path, source: e }),
    };
    let complete = text.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    let mut out = Vec::new();
    for (i, line) in text[..complete].split_inclusive(|b| *b == b'\n').enumerate() {
        let record = serde_json::from_slice(&line[..line.len() - 1])
            .map_err(|e| JournalError::corrupt(name, i + 1, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}
