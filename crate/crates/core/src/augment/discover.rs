use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AugmentError, AugmentedClinicalKnowledge};
use crate::dataset::{FeatureDescriptor, Lesion};
use crate::llm::{GenerationConfig, LlmClient};
use crate::prompts::{parse_feature_list, Exemplar, TemplateSet};

/// What one lesion's discovery completion contributed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryRecord {
    pub lesion: Lesion,
    pub fingerprint: String,
    pub parsed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discovery {
    /// Deduplicated union in first-seen order; its length is m.
    pub features: Vec<FeatureDescriptor>,
    pub records: Vec<DiscoveryRecord>,
}

/// One few-shot discovery prompt per lesion; results are unioned by name,
/// the first lesion to propose a name fixing its kind and units.
pub fn discover_features(
    ack: &AugmentedClinicalKnowledge,
    shots: &[Exemplar],
    existing: &[FeatureDescriptor],
    templates: &TemplateSet,
    client: &LlmClient,
    generation: &GenerationConfig,
) -> Result<Discovery, AugmentError> {
    let mut features = Vec::new();
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for (lesion, entries) in &ack.entries {
        let context = format!("discovery for lesion {lesion}");
        let prompt = templates
            .render_feature_discovery_prompt(entries, shots, existing)
            .map_err(|source| AugmentError::Prompt {
                context: context.clone(),
                source,
            })?;
        let completion = client
            .complete(&prompt, generation)
            .map_err(|source| AugmentError::Llm {
                context: context.clone(),
                source,
            })?;
        let parsed = parse_feature_list(&completion.text).map_err(|source| AugmentError::Prompt {
            context: format!("{context} (fingerprint {})", completion.fingerprint),
            source,
        })?;
        records.push(DiscoveryRecord {
            lesion: *lesion,
            fingerprint: completion.fingerprint,
            parsed: parsed.iter().map(|d| d.name.clone()).collect(),
        });
        for d in parsed {
            if seen.insert(d.name.clone()) {
                features.push(d);
            }
        }
    }
    if features.is_empty() {
        return Err(AugmentError::NoFeatures);
    }
    Ok(Discovery { features, records })
}
