//! Record/replay of backend responses. A transcript pins every completion a
//! run consumed, keyed by request content, so a replayed run is a pure
//! function of its inputs.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// One recorded completion. Identical requests map to one entry (last write
/// wins), which keeps replay independent of call ordering and concurrency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptCall {
    pub model: String,
    pub prompt: String,
    pub temperature_bucket: i64,
    pub max_tokens: u32,
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub approximate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TranscriptLine {
    Header { run_id: String },
    Call(TranscriptCall),
}

fn transcript_io(path: &Path, source: std::io::Error) -> GatewayError {
    GatewayError::Transcript {
        path: path.display().to_string(),
        message: source.to_string(),
    }
}

/// Appends calls to a transcript file as they happen.
pub struct TranscriptRecorder {
    writer: Mutex<BufWriter<File>>,
    path: String,
}

impl TranscriptRecorder {
    pub fn create(path: impl AsRef<Path>, run_id: &str) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| transcript_io(path, e))?;
        let mut writer = BufWriter::new(file);
        let header = TranscriptLine::Header {
            run_id: run_id.to_string(),
        };
        let line = serde_json::to_string(&header).expect("header serializes");
        writeln!(writer, "{line}").map_err(|e| transcript_io(path, e))?;
        writer.flush().map_err(|e| transcript_io(path, e))?;
        Ok(Self {
            writer: Mutex::new(writer),
            path: path.display().to_string(),
        })
    }

    pub fn record(&self, call: &TranscriptCall) -> Result<(), GatewayError> {
        let line = serde_json::to_string(&TranscriptLine::Call(call.clone())).map_err(|e| {
            GatewayError::Transcript {
                path: self.path.clone(),
                message: e.to_string(),
            }
        })?;
        let mut writer = self.writer.lock().expect("transcript writer poisoned");
        writeln!(writer, "{line}").map_err(|e| GatewayError::Transcript {
            path: self.path.clone(),
            message: e.to_string(),
        })?;
        writer.flush().map_err(|e| GatewayError::Transcript {
            path: self.path.clone(),
            message: e.to_string(),
        })
    }
}

/// An in-memory index of a recorded transcript, keyed like the cache.
pub struct ReplayStore {
    calls: HashMap<String, TranscriptCall>,
    pub run_id: Option<String>,
}

impl ReplayStore {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| transcript_io(path, e))?;
        let reader = BufReader::new(file);
        let mut calls = HashMap::new();
        let mut run_id = None;
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| transcript_io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TranscriptLine =
                serde_json::from_str(&line).map_err(|e| GatewayError::Transcript {
                    path: path.display().to_string(),
                    message: format!("line {}: {e}", idx + 1),
                })?;
            match parsed {
                TranscriptLine::Header { run_id: id } => run_id = Some(id),
                TranscriptLine::Call(call) => {
                    let key = super::cache_key(
                        &call.model,
                        &call.prompt,
                        call.max_tokens,
                        call.temperature_bucket,
                    );
                    calls.insert(key, call);
                }
            }
        }
        Ok(Self { calls, run_id })
    }

    pub fn get(&self, key: &str) -> Option<&TranscriptCall> {
        self.calls.get(key)
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }
}
