use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{normalize_answer, PromptTemplate};
use crate::error::{Error, Result};
use crate::rng::sha256_hex;

/// Source of raw VQA answers for (stimulus, label) pairs.
pub trait VqaBackend: Sync {
    fn ask(&self, stimulus_id: &str, label: &str, prompt: &str) -> Result<String>;

    /// Number of answers served so far.
    fn requests(&self) -> usize;
}

/// Answers read from a `stimulus_id\tlabel\tanswer` TSV.
#[derive(Debug, Default)]
pub struct FixtureBackend {
    answers: HashMap<(String, String), String>,
    served: AtomicUsize,
}

impl FixtureBackend {
    pub fn from_rows(rows: impl IntoIterator<Item = (String, String, String)>) -> Self {
        Self {
            answers: rows.into_iter().map(|(s, l, a)| ((s, l), a)).collect(),
            served: AtomicUsize::new(0),
        }
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::InvalidArgument(format!(
                    "fixture line {}: expected 3 tab-separated fields, found {}",
                    n + 1,
                    fields.len()
                )));
            }
            if n == 0 && fields == ["stimulus_id", "label", "answer"] {
                continue;
            }
            rows.push((fields[0].to_string(), fields[1].to_string(), fields[2].to_string()));
        }
        Ok(Self::from_rows(rows))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }
}

impl VqaBackend for FixtureBackend {
    fn ask(&self, stimulus_id: &str, label: &str, _prompt: &str) -> Result<String> {
        let answer = self
            .answers
            .get(&(stimulus_id.to_string(), label.to_string()))
            .ok_or_else(|| Error::MissingFixture {
                stimulus: stimulus_id.to_string(),
                label: label.to_string(),
            })?;
        self.served.fetch_add(1, Ordering::Relaxed);
        Ok(answer.clone())
    }

    fn requests(&self) -> usize {
        self.served.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Base URL of the service, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    /// Directory holding the stimulus images, named by stimulus id.
    pub image_dir: PathBuf,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    200
}

fn default_timeout_s() -> u64 {
    60
}

#[derive(Serialize)]
struct VqaRequest<'a> {
    image_b64: String,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct VqaResponse {
    answer: String,
    #[allow(dead_code)]
    confidence: Option<f64>,
}

/// Client for the `POST /v1/vqa` service.
pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
    served: AtomicUsize,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self> {
        if config.endpoint.trim().is_empty() {
            return Err(Error::InvalidArgument("http backend needs an endpoint URL".into()));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .build()
            .into();
        Ok(Self {
            config,
            agent,
            served: AtomicUsize::new(0),
        })
    }

    fn url(&self) -> String {
        format!("{}/v1/vqa", self.config.endpoint.trim_end_matches('/'))
    }
}

enum Attempt {
    Done(String),
    Transient(String),
    Fatal(String),
}

impl VqaBackend for HttpBackend {
    fn ask(&self, stimulus_id: &str, label: &str, prompt: &str) -> Result<String> {
        let backend_err = |message: String| Error::Backend {
            stimulus: stimulus_id.to_string(),
            label: label.to_string(),
            message,
        };
        let image_path = self.config.image_dir.join(stimulus_id);
        let bytes = std::fs::read(&image_path).map_err(|e| Error::io(&image_path, e))?;
        let body = VqaRequest {
            image_b64: base64::engine::general_purpose::STANDARD.encode(bytes),
            prompt,
        };
        let url = self.url();
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            let outcome = match self.agent.post(&url).send_json(&body) {
                Err(e) => Attempt::Transient(e.to_string()),
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    match status {
                        200 => match resp.body_mut().read_json::<VqaResponse>() {
                            Ok(r) => Attempt::Done(r.answer),
                            Err(e) => Attempt::Fatal(format!("malformed response: {e}")),
                        },
                        400 => Attempt::Fatal("400 malformed request".into()),
                        422 => Attempt::Fatal("422 undecodable image".into()),
                        s if s == 429 || s >= 500 => Attempt::Transient(format!("status {s}")),
                        s => Attempt::Fatal(format!("status {s}")),
                    }
                }
            };
            match outcome {
                Attempt::Done(answer) => {
                    self.served.fetch_add(1, Ordering::Relaxed);
                    return Ok(answer);
                }
                Attempt::Fatal(msg) => return Err(backend_err(msg)),
                Attempt::Transient(msg) => last = msg,
            }
        }
        Err(backend_err(format!(
            "gave up after {} retries: {last}",
            self.config.max_retries
        )))
    }

    fn requests(&self) -> usize {
        self.served.load(Ordering::Relaxed)
    }
}

/// One small TSV file per (stimulus, label, template), named by the SHA-256
/// of that key.
#[derive(Debug, Clone)]
pub struct AnswerCache {
    dir: PathBuf,
}

impl AnswerCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    fn path(&self, stimulus_id: &str, label: &str, template: &PromptTemplate) -> PathBuf {
        let template_hash = sha256_hex(template.as_str().as_bytes());
        let key = format!("{stimulus_id}\0{label}\0{template_hash}");
        self.dir.join(format!("{}.tsv", sha256_hex(key.as_bytes())))
    }

    pub fn get(&self, stimulus_id: &str, label: &str, template: &PromptTemplate) -> Result<Option<bool>> {
        let path = self.path(stimulus_id, label, template);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let fields: Vec<&str> = text.trim_end_matches('\n').split('\t').collect();
        match fields.as_slice() {
            [s, l, a] if *s == stimulus_id && *l == label => Ok(normalize_answer(a)),
            _ => Ok(None),
        }
    }

    pub fn put(&self, stimulus_id: &str, label: &str, template: &PromptTemplate, answer: bool) -> Result<()> {
        let path = self.path(stimulus_id, label, template);
        let tmp = path.with_extension("tmp");
        let line = format!("{stimulus_id}\t{label}\t{}\n", if answer { "yes" } else { "no" });
        std::fs::write(&tmp, line).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}
