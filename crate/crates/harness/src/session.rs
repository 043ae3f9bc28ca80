//! Session files: JSON lines with a header, then a `record` line and a
//! `posterior` summary line per answered query. The file is only ever
//! appended to; the last `posterior` line is the current summary.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uam_prefs_core::iteration::{AnsweredQuery, IterationMetrics, RewardIteration};
use uam_prefs_core::RewardWeights;

use crate::config::SessionConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub iteration: usize,
    pub estimate: RewardWeights,
    pub acceptance_rate: f64,
    pub std_dev: [f64; 3],
    pub cosine_similarity: Option<f64>,
}

impl From<&IterationMetrics> for PosteriorSummary {
    fn from(m: &IterationMetrics) -> Self {
        Self {
            iteration: m.iteration,
            estimate: m.estimate,
            acceptance_rate: m.acceptance_rate,
            std_dev: m.std_dev,
            cosine_similarity: m.cosine_similarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Line {
    Header {
        format_version: u32,
        config: SessionConfig,
    },
    Record(AnsweredQuery),
    Posterior(PosteriorSummary),
}

#[derive(Debug, thiserror::Error)]
pub enum SessionFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSession {
    pub config: SessionConfig,
    pub answered: Vec<AnsweredQuery>,
    pub summaries: Vec<PosteriorSummary>,
    /// Byte length of the well-formed prefix.
    pub valid_len: u64,
}

impl LoadedSession {
    pub fn footer(&self) -> Option<&PosteriorSummary> {
        self.summaries.last()
    }
}

/// Reads a session file. An unterminated or unparsable final line is treated
/// as an interrupted write and dropped; anything malformed earlier is an error.
pub fn load(path: &Path) -> Result<LoadedSession, SessionFileError> {
    let io = |source| SessionFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let fmt = |line: usize, message: String| SessionFileError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = BufReader::new(File::open(path).map_err(io)?);
    let mut raw_lines = Vec::new();
    loop {
        let mut buf = String::new();
        let n = reader.read_line(&mut buf).map_err(io)?;
        if n == 0 {
            break;
        }
        raw_lines.push(buf);
    }

    let mut config = None;
    let mut answered: Vec<AnsweredQuery> = Vec::new();
    let mut summaries = Vec::new();
    let mut valid_len = 0u64;
    let count = raw_lines.len();
    for (i, raw) in raw_lines.iter().enumerate() {
        let last = i + 1 == count;
        let terminated = raw.ends_with('\n');
        let parsed = if terminated {
            serde_json::from_str::<Line>(raw.trim_end())
        } else {
            serde_json::from_str::<Line>(raw)
        };
        let line = match (parsed, terminated, last) {
            (Ok(l), true, _) => l,
            (_, false, true) | (Err(_), _, true) => break,
            (Err(e), _, false) => return Err(fmt(i + 1, e.to_string())),
            (Ok(_), false, false) => unreachable!("only the last line can lack a newline"),
        };
        match line {
            Line::Header {
                format_version,
                config: c,
            } => {
                if i != 0 {
                    return Err(fmt(i + 1, "header after the first line".into()));
                }
                if format_version != FORMAT_VERSION {
                    return Err(fmt(
                        i + 1,
                        format!("unsupported format version {format_version}"),
                    ));
                }
                config = Some(c);
            }
            Line::Record(a) => {
                if config.is_none() {
                    return Err(fmt(i + 1, "record before header".into()));
                }
                if a.iteration != answered.len() + 1 {
                    return Err(fmt(
                        i + 1,
                        format!(
                            "record for iteration {} where {} was expected",
                            a.iteration,
                            answered.len() + 1
                        ),
                    ));
                }
                answered.push(a);
            }
            Line::Posterior(p) => summaries.push(p),
        }
        valid_len += raw.len() as u64;
    }
    let config = config.ok_or_else(|| fmt(1, "missing header".into()))?;
    Ok(LoadedSession {
        config,
        answered,
        summaries,
        valid_len,
    })
}

/// Appends lines, flushing after each.
#[derive(Debug)]
pub struct SessionWriter {
    path: PathBuf,
    file: File,
}

impl SessionWriter {
    /// Creates a new file holding only the header.
    pub fn create(path: &Path, config: &SessionConfig) -> Result<Self, SessionFileError> {
        let file = File::create(path).map_err(|source| SessionFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = Self {
            path: path.to_path_buf(),
            file,
        };
        w.append(&Line::Header {
            format_version: FORMAT_VERSION,
            config: config.clone(),
        })?;
        Ok(w)
    }

    /// Reopens a loaded file for appending, dropping any torn final line.
    pub fn reopen(path: &Path, loaded: &LoadedSession) -> Result<Self, SessionFileError> {
        let io = |source| SessionFileError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = OpenOptions::new().read(true).write(true).open(path).map_err(io)?;
        file.set_len(loaded.valid_len).map_err(io)?;
        file.seek(SeekFrom::End(0)).map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, line: &Line) -> Result<(), SessionFileError> {
        let mut text = serde_json::to_string(line).map_err(|e| SessionFileError::Format {
            path: self.path.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        text.push('\n');
        self.file
            .write_all(text.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| SessionFileError::Io {
                path: self.path.clone(),
                source,
            })
    }

    /// Writes the record and summary for the session's latest iteration.
    pub fn append_latest(&mut self, session: &RewardIteration<'_>) -> Result<(), SessionFileError> {
        if let Some(a) = session.last_answered() {
            self.append(&Line::Record(a))?;
        }
        if let Some(m) = session.state().history.last() {
            self.append(&Line::Posterior(m.into()))?;
        }
        Ok(())
    }
}
