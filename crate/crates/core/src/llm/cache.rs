//! Append-only replay cache: one JSON record per line, keyed by request
//! fingerprint. Reads are concurrent; appends are serialized.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::llm::{ChatExchange, LlmError, Usage};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheRecord {
    pub fingerprint: String,
    pub request: serde_json::Value,
    pub response_text: String,
    pub usage: Usage,
    pub latency_secs: f64,
    pub provider: String,
    pub timestamp: String,
}

impl CacheRecord {
    pub fn from_exchange(exchange: &ChatExchange) -> Self {
        CacheRecord {
            fingerprint: exchange.fingerprint.clone(),
            request: exchange.request.clone(),
            response_text: exchange.response_text.clone(),
            usage: exchange.usage,
            latency_secs: exchange.latency_secs,
            provider: exchange.provider.clone(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn into_exchange(self) -> ChatExchange {
        ChatExchange {
            fingerprint: self.fingerprint,
            request: self.request,
            response_text: self.response_text,
            usage: self.usage,
            latency_secs: self.latency_secs,
            provider: self.provider,
        }
    }
}

/// Exact-match replay store backed by one JSONL file.
#[derive(Debug)]
pub struct ReplayCache {
    path: PathBuf,
    entries: Mutex<HashMap<String, CacheRecord>>,
}

impl ReplayCache {
    /// Opens (or creates) a cache file and loads all entries. A torn final
    /// line without a newline (an interrupted append) is ignored; any
    /// other malformed line is an error.
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| LlmError::Cache {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let mut reader = BufReader::new(file);
            let mut line = String::new();
            let mut lineno = 0usize;
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(|e| LlmError::Cache {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                if n == 0 {
                    break;
                }
                lineno += 1;
                let trimmed = line.trim_end();
                if trimmed.is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(trimmed) {
                    Ok(record) => {
                        entries.insert(record.fingerprint.clone(), record);
                    }
                    Err(e) => {
                        if line.ends_with('\n') {
                            return Err(LlmError::Cache {
                                path: path.display().to_string(),
                                message: format!("malformed record on line {lineno}: {e}"),
                            });
                        }
                        // torn trailing write; drop it
                        break;
                    }
                }
            }
        }
        Ok(ReplayCache {
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, fingerprint: &str) -> Option<CacheRecord> {
        self.entries.lock().unwrap().get(fingerprint).cloned()
    }

    /// Appends one record to the file and the in-memory index.
    pub fn append(&self, record: &CacheRecord) -> Result<(), LlmError> {
        let mut entries = self.entries.lock().unwrap();
        let line = serde_json::to_string(record).map_err(|e| LlmError::Cache {
            path: self.path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| LlmError::Cache {
                path: self.path.display().to_string(),
                message: e.to_string(),
            })?;
        writeln!(file, "{line}").map_err(|e| LlmError::Cache {
            path: self.path.display().to_string(),
            message: e.to_string(),
        })?;
        entries.insert(record.fingerprint.clone(), record.clone());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(fp: &str, text: &str) -> CacheRecord {
        CacheRecord {
            fingerprint: fp.into(),
            request: serde_json::json!({"q": text}),
            response_text: text.into(),
            usage: Usage {
                input_tokens: 5,
                cached_input_tokens: 0,
                output_tokens: 2,
            },
            latency_secs: 0.1,
            provider: "p".into(),
            timestamp: "2025-01-01T00:00:00Z".into(),
        }
    }

    #[test]
    fn append_then_reopen_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cache = ReplayCache::open(&path).unwrap();
        cache.append(&record("aa", "one")).unwrap();
        cache.append(&record("bb", "two")).unwrap();
        assert_eq!(cache.len(), 2);

        let reopened = ReplayCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(reopened.get("aa").unwrap().response_text, "one");
        assert!(reopened.get("cc").is_none());
    }

    #[test]
    fn torn_final_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cache = ReplayCache::open(&path).unwrap();
        cache.append(&record("aa", "one")).unwrap();
        // simulate a crash mid-append: partial JSON with no trailing newline
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"fingerprint\": \"bb\", \"resp").unwrap();
        drop(f);
        let reopened = ReplayCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 1);
    }

    #[test]
    fn malformed_interior_line_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "not json\n{\"also\": \"bad\"}\n").unwrap();
        assert!(ReplayCache::open(&path).is_err());
    }

    #[test]
    fn concurrent_appends_are_serialized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cache = std::sync::Arc::new(ReplayCache::open(&path).unwrap());
        std::thread::scope(|scope| {
            for t in 0..4 {
                let cache = cache.clone();
                scope.spawn(move || {
                    for i in 0..25 {
                        cache.append(&record(&format!("{t}-{i}"), "x")).unwrap();
                    }
                });
            }
        });
        assert_eq!(cache.len(), 100);
        let reopened = ReplayCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 100);
    }
}
