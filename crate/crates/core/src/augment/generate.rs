use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ack::resolve_chunks;
use super::{worker_pool, AugmentError, AugmentedClinicalKnowledge};
use crate::dataset::{original_schema, Dataset, FeatureDescriptor, FeatureValue, Lesion, Row, ValueMap, Vital};
use crate::kstore::{Embedder, VectorIndex};
use crate::llm::{GenerationConfig, LlmClient, LlmError};
use crate::prompts::{parse_feature_values, TemplateSet};

pub const DEFAULT_FAILURE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    /// Evidence chunks retrieved per patient.
    pub k: usize,
    pub ablation: bool,
    /// Largest tolerated fraction of failed patients.
    pub failure_threshold: f64,
    pub workers: usize,
    pub generation: GenerationConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            k: 5,
            ablation: false,
            failure_threshold: DEFAULT_FAILURE_THRESHOLD,
            workers: 1,
            generation: GenerationConfig::default(),
        }
    }
}

/// One issued prompt and what it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLogEntry {
    pub patient_id: String,
    pub ablation: bool,
    pub fingerprint: String,
    /// Evidence chunk ids, best first.
    pub evidence: Vec<String>,
    /// `<lesion>/<question id>` of each knowledge entry included.
    pub ack: Vec<String>,
    pub prompt: String,
    pub completion: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientFailure {
    pub patient_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub values: ValueMap,
    pub log: Vec<PromptLogEntry>,
    pub failures: Vec<PatientFailure>,
    /// Fraction of patients with a value, per feature.
    pub coverage: BTreeMap<String, f64>,
    /// Values present in a completion but not parseable for their feature.
    pub unparsed: usize,
}

struct PatientResult {
    values: BTreeMap<String, FeatureValue>,
    unparsed: usize,
    log: PromptLogEntry,
}

/// Backend conditions that would fail every patient the same way.
fn is_fatal(e: &LlmError) -> bool {
    matches!(
        e,
        LlmError::CacheMiss { .. } | LlmError::NotConfigured(_) | LlmError::NoCache(_) | LlmError::InvalidConfig(_)
    )
}

fn complete_and_parse(
    client: &LlmClient,
    generation: &GenerationConfig,
    schema: &[FeatureDescriptor],
    mut log: PromptLogEntry,
) -> Result<Result<PatientResult, (String, PromptLogEntry)>, AugmentError> {
    log.fingerprint = crate::llm::fingerprint(&log.prompt, generation);
    let completion = match client.complete(&log.prompt, generation) {
        Ok(c) => c,
        Err(e) if is_fatal(&e) => {
            return Err(AugmentError::Llm {
                context: format!("patient {}", log.patient_id),
                source: e,
            })
        }
        Err(e) => {
            let msg = e.to_string();
            log.error = Some(msg.clone());
            return Ok(Err((msg, log)));
        }
    };
    log.completion = Some(completion.text.clone());
    match parse_feature_values(&completion.text, schema) {
        Ok(parsed) => {
            let mut values = BTreeMap::new();
            let mut unparsed = 0;
            for v in parsed.values {
                match v.value {
                    Some(value) => {
                        values.insert(v.name, value);
                    }
                    None => unparsed += 1,
                }
            }
            Ok(Ok(PatientResult { values, unparsed, log }))
        }
        Err(e) => {
            let msg = format!("{e} (fingerprint {})", completion.fingerprint);
            log.error = Some(msg.clone());
            Ok(Err((msg, log)))
        }
    }
}

type PatientTask<'a> =
    dyn Fn(&Row) -> Result<Result<PatientResult, (String, PromptLogEntry)>, AugmentError> + Sync + 'a;

fn run_patients(
    dataset: &Dataset,
    schema: &[FeatureDescriptor],
    workers: usize,
    threshold: f64,
    task: &PatientTask<'_>,
) -> Result<GenerationOutcome, AugmentError> {
    let pool = worker_pool(workers)?;
    let results: Vec<_> = pool.install(|| dataset.rows().par_iter().map(task).collect());
    let mut outcome = GenerationOutcome {
        values: ValueMap::new(),
        log: Vec::with_capacity(results.len()),
        failures: Vec::new(),
        coverage: BTreeMap::new(),
        unparsed: 0,
    };
    for (row, result) in dataset.rows().iter().zip(results) {
        match result? {
            Ok(r) => {
                outcome.unparsed += r.unparsed;
                outcome.log.push(r.log);
                if !r.values.is_empty() {
                    outcome.values.insert(row.id().to_owned(), r.values);
                }
            }
            Err((message, log)) => {
                log::warn!("patient {}: {message}", row.id());
                outcome.log.push(log);
                outcome.failures.push(PatientFailure {
                    patient_id: row.id().to_owned(),
                    message,
                });
            }
        }
    }
    let total = dataset.len().max(1) as f64;
    for d in schema {
        let n = outcome.values.values().filter(|m| m.contains_key(&d.name)).count();
        outcome.coverage.insert(d.name.clone(), n as f64 / total);
    }
    let failed = outcome.failures.len();
    if failed as f64 > threshold * dataset.len() as f64 {
        return Err(AugmentError::FailureRate {
            failed,
            total: dataset.len(),
            threshold,
            outcome: Box::new(outcome),
        });
    }
    Ok(outcome)
}

/// Lesions whose knowledge conditions a patient's prompt: the positive
/// labels present in the index, or every indexed lesion when there are none.
fn evidence_lesions(row: &Row, index: &VectorIndex) -> Vec<Lesion> {
    let indexed: Vec<Lesion> = index.lesions().collect();
    let positives: Vec<Lesion> = row
        .case
        .labels
        .positives()
        .into_iter()
        .filter(|l| indexed.contains(l))
        .collect();
    if positives.is_empty() {
        indexed
    } else {
        positives
    }
}

/// One four-source prompt per patient covering every feature in `features`.
#[allow(clippy::too_many_arguments)]
pub fn generate_values(
    dataset: &Dataset,
    features: &[FeatureDescriptor],
    ack: &AugmentedClinicalKnowledge,
    index: &VectorIndex,
    embedder: &dyn Embedder,
    templates: &TemplateSet,
    client: &LlmClient,
    config: &GenerateConfig,
) -> Result<GenerationOutcome, AugmentError> {
    if features.is_empty() {
        return Err(AugmentError::NoFeatures);
    }
    let task = |row: &Row| {
        let lesions = evidence_lesions(row, index);
        let report = row.case.report.trim();
        let query = if report.is_empty() {
            lesions.iter().map(|l| l.display_name()).collect::<Vec<_>>().join(" ")
        } else {
            report.to_owned()
        };
        let hits = index.search_in(embedder, &query, config.k, &lesions)?;
        let evidence: Vec<String> = hits.into_iter().map(|h| h.chunk_id).collect();
        let ack_entries = ack.for_lesions(&lesions);
        let prompt = templates
            .render_value_generation_prompt(
                &ack_entries,
                features,
                &resolve_chunks(index, &evidence),
                &row.case,
                config.ablation,
            )
            .map_err(|source| AugmentError::Prompt {
                context: format!("patient {}", row.id()),
                source,
            })?;
        let log = PromptLogEntry {
            patient_id: row.id().to_owned(),
            ablation: config.ablation,
            fingerprint: String::new(),
            evidence,
            ack: ack_entries
                .iter()
                .map(|e| format!("{}/{}", e.lesion.key(), e.question_id))
                .collect(),
            prompt,
            completion: None,
            error: None,
        };
        complete_and_parse(client, &config.generation, features, log)
    };
    run_patients(dataset, features, config.workers, config.failure_threshold, &task)
}

/// Asks for existing vitals from each patient's report and demographics.
pub fn generate_existing_values(
    dataset: &Dataset,
    targets: &[Vital],
    templates: &TemplateSet,
    client: &LlmClient,
    config: &GenerateConfig,
) -> Result<GenerationOutcome, AugmentError> {
    let schema: Vec<FeatureDescriptor> = original_schema()
        .into_iter()
        .filter(|d| targets.iter().any(|t| t.name() == d.name))
        .collect();
    let names: Vec<&str> = targets.iter().map(|t| t.name()).collect();
    let task = |row: &Row| {
        let prompt = templates
            .render_existing_value_prompt(&row.case, &names)
            .map_err(|source| AugmentError::Prompt {
                context: format!("patient {}", row.id()),
                source,
            })?;
        let log = PromptLogEntry {
            patient_id: row.id().to_owned(),
            ablation: false,
            fingerprint: String::new(),
            evidence: Vec::new(),
            ack: Vec::new(),
            prompt,
            completion: None,
            error: None,
        };
        complete_and_parse(client, &config.generation, &schema, log)
    };
    run_patients(dataset, &schema, config.workers, config.failure_threshold, &task)
}
