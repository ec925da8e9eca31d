use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{worker_pool, AugmentError};
use crate::dataset::Lesion;
use crate::kstore::{Embedder, KnowledgeChunk, KstoreError, VectorIndex};
use crate::llm::{GenerationConfig, LlmClient};
use crate::prompts::{AckEntry, TemplateSet, EXPERT_QUESTIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckConfig {
    /// Evidence chunks retrieved per question.
    pub k: usize,
    pub generation: GenerationConfig,
    pub workers: usize,
}

impl Default for AckConfig {
    fn default() -> Self {
        AckConfig {
            k: 5,
            generation: GenerationConfig::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AckMeta {
    pub index_id: String,
    pub k: usize,
    pub backend: String,
    pub model: String,
    pub template_version: String,
}

/// Seven answered questions per lesion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedClinicalKnowledge {
    pub meta: AckMeta,
    pub entries: BTreeMap<Lesion, Vec<AckEntry>>,
}

impl AugmentedClinicalKnowledge {
    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lesion(&self, lesion: Lesion) -> &[AckEntry] {
        self.entries.get(&lesion).map_or(&[], Vec::as_slice)
    }

    /// Entries for `lesions` in lesion order.
    pub fn for_lesions(&self, lesions: &[Lesion]) -> Vec<AckEntry> {
        let mut sorted = lesions.to_vec();
        sorted.sort();
        sorted.dedup();
        sorted.iter().flat_map(|l| self.lesion(*l).iter().cloned()).collect()
    }

    pub fn all(&self) -> Vec<AckEntry> {
        self.entries.values().flatten().cloned().collect()
    }

    pub fn to_json(&self) -> Result<Vec<u8>, serde_json::Error> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

pub(crate) fn resolve_chunks(index: &VectorIndex, ids: &[String]) -> Vec<KnowledgeChunk> {
    ids.iter().filter_map(|id| index.chunk(id).cloned()).collect()
}

/// Answers every expert question for every lesion by retrieval over that
/// lesion's partition.
pub fn build_ack(
    index: &VectorIndex,
    embedder: &dyn Embedder,
    lesions: &[Lesion],
    templates: &TemplateSet,
    client: &LlmClient,
    config: &AckConfig,
) -> Result<AugmentedClinicalKnowledge, AugmentError> {
    let index_id = index.content_id()?;
    for lesion in lesions {
        if index.lesions().all(|l| l != *lesion) {
            return Err(AugmentError::EmptyPartition(*lesion));
        }
    }
    let tasks: Vec<(Lesion, usize)> = lesions
        .iter()
        .flat_map(|l| (0..EXPERT_QUESTIONS.len()).map(move |q| (*l, q)))
        .collect();
    let answer = |(lesion, qi): (Lesion, usize)| -> Result<AckEntry, AugmentError> {
        let q = &EXPERT_QUESTIONS[qi];
        let text = q.render(lesion);
        let context = format!("lesion {lesion}, question {}", q.id);
        let hits = index
            .search(embedder, &text, config.k, Some(lesion))
            .map_err(|e| match e {
                KstoreError::UnknownPartition(l) => AugmentError::EmptyPartition(l),
                other => AugmentError::Kstore(other),
            })?;
        let evidence: Vec<String> = hits.into_iter().map(|h| h.chunk_id).collect();
        let prompt = templates
            .render_expert_prompt(&text, &resolve_chunks(index, &evidence))
            .map_err(|source| AugmentError::Prompt {
                context: context.clone(),
                source,
            })?;
        let completion = client
            .complete(&prompt, &config.generation)
            .map_err(|source| AugmentError::Llm {
                context: context.clone(),
                source,
            })?;
        let answer = completion.text.trim().to_owned();
        if answer.is_empty() {
            return Err(AugmentError::Llm {
                context,
                source: crate::llm::LlmError::Remote {
                    retryable: false,
                    message: format!("empty answer (fingerprint {})", completion.fingerprint),
                },
            });
        }
        Ok(AckEntry {
            lesion,
            question_id: q.id,
            question: text,
            evidence,
            answer,
            fingerprint: completion.fingerprint,
        })
    };
    let pool = worker_pool(config.workers)?;
    let results: Vec<Result<AckEntry, AugmentError>> = pool.install(|| tasks.into_par_iter().map(answer).collect());
    let mut entries: BTreeMap<Lesion, Vec<AckEntry>> = BTreeMap::new();
    for r in results {
        let e = r?;
        entries.entry(e.lesion).or_default().push(e);
    }
    Ok(AugmentedClinicalKnowledge {
        meta: AckMeta {
            index_id,
            k: config.k,
            backend: client.backend_descriptor(),
            model: config.generation.model.clone(),
            template_version: templates.version(),
        },
        entries,
    })
}
