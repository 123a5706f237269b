//! Training log: a `# seed=<seed>` line, a CSV header, then one row per
//! step. Floats use the shortest representation that round-trips.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use attntrack_core::train::StepRecord;

use crate::error::{CliError, Result};

pub const HEADER: &str = "step,total,cls,l1,giou";

pub fn format_row(r: &StepRecord) -> String {
    format!("{},{},{},{},{}", r.step, r.loss.total, r.loss.cls, r.loss.l1, r.loss.giou)
}

pub struct TrainLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TrainLog {
    /// Starts a new log, replacing any existing file.
    pub fn create(path: &Path, seed: u64) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut log = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        log.line(&format!("# seed={seed}"))?;
        log.line(HEADER)?;
        Ok(log)
    }

    /// Appends to an existing log; creates it with headers if missing.
    pub fn append(path: &Path, seed: u64) -> Result<Self> {
        if !path.exists() {
            return Self::create(path, seed);
        }
        let file = OpenOptions::new().append(true).open(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn record(&mut self, r: &StepRecord) -> Result<()> {
        self.line(&format_row(r))
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))
    }
}
