//! Batch prediction runner: assembles a prompt per test event, calls the
//! client over a bounded worker pool, parses decisions, and persists a
//! line-structured run manifest.
//!
//! Failures are recorded, never dropped: every test event yields exactly
//! one prediction, and manifest order always equals input order whatever
//! the completion order was.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{InteractionEvent, Site, SplitSpec};
use crate::knowledge::KnowledgeBase;
use crate::llm::{ChatClient, ChatExchange, Usage};
use crate::prompt::{assemble, load_site_image, FewShotExemplar, ImagePart};
use crate::schema::VariableSchema;

/// Runs with more than this share of failed predictions are flagged
/// degraded.
pub const DEGRADED_FAILURE_SHARE: f64 = 0.10;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("no decision line found in response")]
    Unparseable,
    #[error("contradictory decisions on the final decision line")]
    Ambiguous,
    #[error("parallelism must be at least 1")]
    BadParallelism,
    #[error("manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error(transparent)]
    Prompt(#[from] crate::prompt::PromptError),
}

/// Scans from the last line upward for a `DECISION: YIELD` /
/// `DECISION: NO-YIELD` marker (case-insensitive, tolerant of surrounding
/// markup). The last line carrying any marker decides; contradictory
/// markers on that line are an error.
pub fn parse_decision(raw_response: &str) -> Result<bool, InferenceError> {
    // NO-YIELD first so the YIELD branch cannot shadow it
    let re = Regex::new(
        r#"(?i)decision\s*[:\-]\s*[*_`"'\[\(\s]*(no[\s_-]?yield|non[\s_-]?yield|yield)"#,
    )
    .expect("static regex");
    for line in raw_response.lines().rev() {
        let mut verdicts = Vec::new();
        for capture in re.captures_iter(line) {
            let token = capture.get(1).expect("group").as_str().to_ascii_lowercase();
            verdicts.push(token.starts_with('y'));
        }
        if verdicts.is_empty() {
            continue;
        }
        if verdicts.iter().all(|&v| v == verdicts[0]) {
            return Ok(verdicts[0]);
        }
        return Err(InferenceError::Ambiguous);
    }
    Err(InferenceError::Unparseable)
}

/// The response text with its decision line removed.
pub fn strip_decision_line(raw_response: &str) -> String {
    let re = Regex::new(r"(?i)decision\s*[:\-]").expect("static regex");
    let lines: Vec<&str> = raw_response.lines().collect();
    if let Some(last_match) = lines.iter().rposition(|l| re.is_match(l)) {
        lines
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != last_match)
            .map(|(_, l)| *l)
            .collect::<Vec<_>>()
            .join("\n")
            .trim_end()
            .to_string()
    } else {
        raw_response.trim_end().to_string()
    }
}

/// Outcome of one test event.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub event_id: String,
    pub site_id: u32,
    /// None = failed (unparseable response, replay miss, transport error).
    pub decision: Option<bool>,
    pub rationale: String,
    pub raw_response: String,
    pub usage: Usage,
    pub latency_secs: f64,
    pub provider: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything a batch run needs besides the events and the client.
pub struct BatchContext<'a> {
    pub schema: &'a VariableSchema,
    pub kb: &'a KnowledgeBase,
    pub exemplars: &'a (FewShotExemplar, FewShotExemplar),
    pub split: &'a SplitSpec,
    pub sites: &'a [Site],
    /// Directory holding site images; None disables image attachment.
    pub images_dir: Option<&'a Path>,
    pub template_version: String,
}

impl BatchContext<'_> {
    /// Loads each site's image once, keyed by site id.
    fn load_images(&self) -> Result<HashMap<u32, ImagePart>, InferenceError> {
        let mut images = HashMap::new();
        let Some(dir) = self.images_dir else {
            return Ok(images);
        };
        for site in self.sites {
            if let Some(rel) = &site.image_path {
                let path = dir.join(rel);
                images.insert(site.site_id, load_site_image(&path)?);
            }
        }
        Ok(images)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub provider: String,
    pub template_version: String,
    pub split: SplitSpec,
    pub mode: String,
    pub started: String,
    pub finished: String,
    pub degraded: bool,
    pub predictions: Vec<Prediction>,
}

impl RunManifest {
    pub fn n_failed(&self) -> usize {
        self.predictions.iter().filter(|p| p.decision.is_none()).count()
    }

    /// Exchanges for cost accounting (failed predictions included, they
    /// may still have burned tokens).
    pub fn exchanges(&self) -> Vec<ChatExchange> {
        self.predictions
            .iter()
            .map(|p| ChatExchange {
                fingerprint: String::new(),
                request: serde_json::Value::Null,
                response_text: p.raw_response.clone(),
                usage: p.usage,
                latency_secs: p.latency_secs,
                provider: p.provider.clone(),
            })
            .collect()
    }
}

/// Predicts every test event exactly once over a bounded worker pool.
///
/// `journal` (when given) receives one line per completed prediction in
/// completion order, so partial progress survives a crash; the returned
/// manifest is always in input order.
pub fn run_batch(
    test_events: &[&InteractionEvent],
    ctx: &BatchContext<'_>,
    client: &ChatClient,
    parallelism: usize,
    journal: Option<&Path>,
) -> Result<RunManifest, InferenceError> {
    if parallelism == 0 {
        return Err(InferenceError::BadParallelism);
    }
    let started = chrono::Utc::now().to_rfc3339();
    let images = ctx.load_images()?;

    let journal_file = match journal {
        Some(path) => Some(Mutex::new(std::fs::File::create(path).map_err(|e| {
            InferenceError::Manifest {
                path: path.display().to_string(),
                message: e.to_string(),
            }
        })?)),
        None => None,
    };

    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Prediction>>> =
        (0..test_events.len()).map(|_| Mutex::new(None)).collect();

    let worker = |_worker_id: usize| {
        loop {
            let index = next.fetch_add(1, Ordering::SeqCst);
            if index >= test_events.len() {
                break;
            }
            let event = test_events[index];
            let prediction = predict_one(event, ctx, client, &images);
            if let Some(journal) = &journal_file {
                if let Ok(line) = serde_json::to_string(&prediction) {
                    let mut file = journal.lock().unwrap();
                    let _ = writeln!(file, "{line}");
                }
            }
            *results[index].lock().unwrap() = Some(prediction);
        }
    };

    std::thread::scope(|scope| {
        for worker_id in 0..parallelism.min(test_events.len()).max(1) {
            scope.spawn(move || worker(worker_id));
        }
    });

    let predictions: Vec<Prediction> = results
        .into_iter()
        .map(|cell| cell.into_inner().unwrap().expect("every index visited"))
        .collect();
    let n_failed = predictions.iter().filter(|p| p.decision.is_none()).count();
    let degraded = !predictions.is_empty()
        && (n_failed as f64) / (predictions.len() as f64) > DEGRADED_FAILURE_SHARE;

    Ok(RunManifest {
        run_id: uuid::Uuid::new_v4().to_string(),
        provider: client.provider().name.clone(),
        template_version: ctx.template_version.clone(),
        split: ctx.split.clone(),
        mode: client.mode_name().to_string(),
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        degraded,
        predictions,
    })
}

fn predict_one(
    event: &InteractionEvent,
    ctx: &BatchContext<'_>,
    client: &ChatClient,
    images: &HashMap<u32, ImagePart>,
) -> Prediction {
    let image = images.get(&event.site_id).cloned();
    let prompt = match assemble(event, ctx.kb, ctx.exemplars, ctx.split, image, ctx.schema) {
        Ok(p) => p,
        Err(e) => {
            return Prediction {
                event_id: event.event_id.clone(),
                site_id: event.site_id,
                decision: None,
                rationale: String::new(),
                raw_response: String::new(),
                usage: Usage::default(),
                latency_secs: 0.0,
                provider: client.provider().name.clone(),
                error: Some(format!("prompt assembly failed: {e}")),
            }
        }
    };
    match client.complete(&prompt) {
        Ok(exchange) => match parse_decision(&exchange.response_text) {
            Ok(decision) => Prediction {
                event_id: event.event_id.clone(),
                site_id: event.site_id,
                decision: Some(decision),
                rationale: strip_decision_line(&exchange.response_text),
                raw_response: exchange.response_text,
                usage: exchange.usage,
                latency_secs: exchange.latency_secs,
                provider: exchange.provider,
                error: None,
            },
            Err(parse_error) => Prediction {
                event_id: event.event_id.clone(),
                site_id: event.site_id,
                decision: None,
                rationale: String::new(),
                raw_response: exchange.response_text,
                usage: exchange.usage,
                latency_secs: exchange.latency_secs,
                provider: exchange.provider,
                error: Some(parse_error.to_string()),
            },
        },
        Err(transport) => Prediction {
            event_id: event.event_id.clone(),
            site_id: event.site_id,
            decision: None,
            rationale: String::new(),
            raw_response: String::new(),
            usage: Usage::default(),
            latency_secs: 0.0,
            provider: client.provider().name.clone(),
            error: Some(transport.to_string()),
        },
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    run_id: String,
    provider: String,
    template_version: String,
    split: SplitSpec,
    mode: String,
    started: String,
    finished: String,
    degraded: bool,
}

#[derive(Serialize, Deserialize)]
struct ManifestFooter {
    complete: bool,
    n_predictions: usize,
    n_failed: usize,
}

impl RunManifest {
    /// Writes the manifest as line-structured text (header, one prediction
    /// per line, completion footer), atomically via a temp file + rename.
    pub fn write(&self, path: &Path) -> Result<(), InferenceError> {
        let err = |message: String| InferenceError::Manifest {
            path: path.display().to_string(),
            message,
        };
        let mut text = String::new();
        let header = ManifestHeader {
            run_id: self.run_id.clone(),
            provider: self.provider.clone(),
            template_version: self.template_version.clone(),
            split: self.split.clone(),
            mode: self.mode.clone(),
            started: self.started.clone(),
            finished: self.finished.clone(),
            degraded: self.degraded,
        };
        text.push_str(&serde_json::to_string(&header).map_err(|e| err(e.to_string()))?);
        text.push('\n');
        for prediction in &self.predictions {
            text.push_str(&serde_json::to_string(prediction).map_err(|e| err(e.to_string()))?);
            text.push('\n');
        }
        let footer = ManifestFooter {
            complete: true,
            n_predictions: self.predictions.len(),
            n_failed: self.n_failed(),
        };
        text.push_str(&serde_json::to_string(&footer).map_err(|e| err(e.to_string()))?);
        text.push('\n');

        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &text).map_err(|e| err(e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| err(e.to_string()))?;
        Ok(())
    }

    /// Reads a manifest, requiring the completion footer.
    pub fn read(path: &Path) -> Result<RunManifest, InferenceError> {
        let err = |message: String| InferenceError::Manifest {
            path: path.display().to_string(),
            message,
        };
        let file = std::fs::File::open(path).map_err(|e| err(e.to_string()))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| err("empty manifest".into()))?
            .map_err(|e| err(e.to_string()))?;
        let header: ManifestHeader =
            serde_json::from_str(&header_line).map_err(|e| err(format!("bad header: {e}")))?;
        let mut predictions = Vec::new();
        let mut footer: Option<ManifestFooter> = None;
        for line in lines {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            if let Ok(f) = serde_json::from_str::<ManifestFooter>(&line) {
                footer = Some(f);
                continue;
            }
            let prediction: Prediction =
                serde_json::from_str(&line).map_err(|e| err(format!("bad prediction: {e}")))?;
            predictions.push(prediction);
        }
        let footer = footer.ok_or_else(|| err("missing completion footer".into()))?;
        if !footer.complete || footer.n_predictions != predictions.len() {
            return Err(err(format!(
                "incomplete manifest: footer says {} predictions, file has {}",
                footer.n_predictions,
                predictions.len()
            )));
        }
        Ok(RunManifest {
            run_id: header.run_id,
            provider: header.provider,
            template_version: header.template_version,
            split: header.split,
            mode: header.mode,
            started: header.started,
            finished: header.finished,
            degraded: header.degraded,
            predictions,
        })
    }
}
