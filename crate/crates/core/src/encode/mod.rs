//! Semantic annotation of stimuli: binary VQA answers and continuous
//! image–text feature similarity.

mod backend;
mod similarity;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub use backend::{AnswerCache, FixtureBackend, HttpBackend, HttpBackendConfig, VqaBackend};
pub use similarity::{cosine_similarity, feature_similarity_annotate, EmbeddingSet};

use crate::container::MatrixContainer;
use crate::error::{Error, Result};
use crate::labels::LabelSet;

pub const DEFAULT_TEMPLATE: &str =
    "Is there any {label} that can be easily recognized in this image?";
const PLACEHOLDER: &str = "{label}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate(String);

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        match template.matches(PLACEHOLDER).count() {
            1 => Ok(Self(template)),
            n => Err(Error::Template(format!(
                "expected exactly one {PLACEHOLDER} placeholder, found {n}"
            ))),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn render(&self, label: &str) -> Result<String> {
        if label.is_empty() {
            return Err(Error::InvalidArgument("empty label".into()));
        }
        Ok(self.0.replacen(PLACEHOLDER, label, 1))
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self(DEFAULT_TEMPLATE.to_string())
    }
}

pub fn render_prompt(label: &str, template: &PromptTemplate) -> Result<String> {
    template.render(label)
}

/// Lowercases and strips surrounding whitespace and punctuation; only
/// `yes` and `no` survive.
pub fn normalize_answer(raw: &str) -> Option<bool> {
    let trimmed = raw
        .trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .to_lowercase();
    match trimmed.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Builds the binary stimuli × labels matrix from backend answers.
///
/// Cached answers are reused without touching the backend. Uncached pairs
/// are dispatched over at most `max_in_flight` threads; assembly is by
/// (row, column), so completion order does not matter. When several pairs
/// fail, the error for the first pair in row-major order is returned.
pub fn vqa_annotate(
    stimulus_ids: &[String],
    labels: &LabelSet,
    template: &PromptTemplate,
    backend: &dyn VqaBackend,
    cache: Option<&AnswerCache>,
    max_in_flight: usize,
) -> Result<MatrixContainer> {
    if stimulus_ids.is_empty() {
        return Err(Error::InvalidArgument("no stimuli".into()));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = stimulus_ids.iter().find(|s| !seen.insert(s.as_str())) {
        return Err(Error::InvalidArgument(format!("duplicate stimulus id {dup:?}")));
    }
    let n_labels = labels.len();
    let prompts = labels
        .iter()
        .map(|l| template.render(l))
        .collect::<Result<Vec<_>>>()?;

    let mut cells: Vec<Option<bool>> = vec![None; stimulus_ids.len() * n_labels];
    let mut pending = Vec::new();
    for (i, stim) in stimulus_ids.iter().enumerate() {
        for (j, label) in labels.iter().enumerate() {
            let cached = match cache {
                Some(c) => c.get(stim, label, template)?,
                None => None,
            };
            match cached {
                Some(answer) => cells[i * n_labels + j] = Some(answer),
                None => pending.push((i, j)),
            }
        }
    }

    let results: Mutex<Vec<(usize, Result<bool>)>> = Mutex::new(Vec::with_capacity(pending.len()));
    let next = AtomicUsize::new(0);
    let workers = max_in_flight.max(1).min(pending.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(i, j)) = pending.get(k) else { break };
                let stim = &stimulus_ids[i];
                let label = &labels.as_slice()[j];
                let outcome = backend
                    .ask(stim, label, &prompts[j])
                    .and_then(|raw| {
                        normalize_answer(&raw).ok_or_else(|| Error::Answer {
                            stimulus: stim.clone(),
                            label: label.clone(),
                            answer: raw,
                        })
                    })
                    .and_then(|answer| {
                        if let Some(c) = cache {
                            c.put(stim, label, template, answer)?;
                        }
                        Ok(answer)
                    });
                results.lock().unwrap().push((i * n_labels + j, outcome));
            });
        }
    });

    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(cell, _)| *cell);
    for (cell, outcome) in results {
        cells[cell] = Some(outcome?);
    }
    let values = cells
        .into_iter()
        .map(|c| if c.expect("every cell resolved") { 1.0 } else { 0.0 })
        .collect();
    MatrixContainer::new(stimulus_ids.len(), n_labels, values)
}
