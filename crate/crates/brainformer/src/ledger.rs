//! Append-only JSONL trial ledger.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use brainformer_core::search::TrialRecord;

use crate::error::{AppError, AppResult};

pub struct Ledger {
    path: PathBuf,
    file: File,
    /// Trials already on disk; ids below this are not appended again.
    written: u64,
}

impl Ledger {
    /// Starts an empty ledger at `path`, replacing any existing file.
    pub fn create(path: &Path) -> AppResult<Self> {
        let file = File::create(path).map_err(|e| AppError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            written: 0,
        })
    }

    /// Reopens `path` for appending and returns the records it holds. A
    /// final line without a newline is the trace of an interrupted write
    /// and is cut off; any other unreadable line is an error.
    pub fn resume(path: &Path) -> AppResult<(Self, Vec<TrialRecord>)> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(AppError::io(path, e)),
        };
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        if complete < text.len() {
            log::warn!(
                "{}: dropping {} bytes of an unfinished record",
                path.display(),
                text.len() - complete
            );
        }
        let mut records = Vec::new();
        for (i, line) in text[..complete].lines().enumerate() {
            let r: TrialRecord = serde_json::from_str(line).map_err(|e| AppError::Config {
                path: path.to_path_buf(),
                field: format!("line {}", i + 1),
                message: e.to_string(),
            })?;
            if r.trial_id != i as u64 {
                return Err(AppError::Runtime(format!(
                    "{}: line {} holds trial {}, expected {}",
                    path.display(),
                    i + 1,
                    r.trial_id,
                    i
                )));
            }
            records.push(r);
        }
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(path)
            .map_err(|e| AppError::io(path, e))?;
        file.set_len(complete as u64)
            .map_err(|e| AppError::io(path, e))?;
        let mut ledger = Self {
            path: path.to_path_buf(),
            file,
            written: records.len() as u64,
        };
        ledger.seek_end()?;
        Ok((ledger, records))
    }

    fn seek_end(&mut self) -> AppResult<()> {
        use std::io::{Seek, SeekFrom};
        self.file
            .seek(SeekFrom::End(0))
            .map(|_| ())
            .map_err(|e| AppError::io(&self.path, e))
    }

    /// Appends `record` unless a record with its id is already on disk.
    pub fn append(&mut self, record: &TrialRecord) -> AppResult<()> {
        if record.trial_id < self.written {
            return Ok(());
        }
        let mut line =
            serde_json::to_string(record).map_err(|e| AppError::Runtime(e.to_string()))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| AppError::io(&self.path, e))?;
        self.written = record.trial_id + 1;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Result of a tolerant ledger read.
#[derive(Debug, Default)]
pub struct LedgerScan {
    pub records: Vec<TrialRecord>,
    /// `(line number, message)` for every line that could not be parsed.
    pub skipped: Vec<(usize, String)>,
}

/// Reads every parseable record, skipping and reporting the rest.
pub fn scan(path: &Path) -> AppResult<LedgerScan> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let mut out = LedgerScan::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TrialRecord>(line) {
            Ok(r) => out.records.push(r),
            Err(e) => {
                log::warn!(
                    "{}:{}: skipping corrupt record: {}",
                    path.display(),
                    i + 1,
                    e
                );
                out.skipped.push((i + 1, e.to_string()));
            }
        }
    }
    Ok(out)
}
