use dallm_core::augment::{apply_expert_curation, discover_features, load_curation, AugmentedClinicalKnowledge};
use dallm_core::dataset::{original_schema, ORIGINAL_FEATURES};
use dallm_core::prompts::{builtin_exemplars, load_exemplars};

use super::{FeaturesArtifact, ACK, FEATURES};
use crate::context::Context;
use crate::error::CliError;
use crate::manifest::to_pretty_json;

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let paths = &ctx.settings.config.paths;
    let mut m = ctx.manifest("discover");
    let ack_path = ctx.artifact_input(&mut m, ACK, "ack")?;
    let ack = AugmentedClinicalKnowledge::from_json(&std::fs::read(ack_path)?)?;
    let shots = match &paths.shots {
        Some(rel) => {
            let path = ctx.settings.resolve(rel);
            ctx.config_input(&mut m, "shots", &path)?;
            load_exemplars(&path).map_err(|e| CliError::Config(format!("shots {}: {e}", path.display())))?
        }
        None => builtin_exemplars(),
    };
    let templates = ctx.templates(&mut m)?;
    let client = ctx.client(&mut m)?;
    let discovery = discover_features(&ack, &shots, &original_schema(), &templates, &client, &ctx.generation())?;

    let curated = match &paths.curation {
        Some(rel) => {
            let path = ctx.settings.resolve(rel);
            ctx.config_input(&mut m, "curation", &path)?;
            let entries = load_curation(&path)?;
            Some(apply_expert_curation(&discovery.features, &entries)?)
        }
        None => None,
    };
    let artifact = FeaturesArtifact {
        m: discovery.features.len(),
        discovered: discovery.features,
        records: discovery.records,
        curated,
    };
    ctx.write_output(&mut m, FEATURES, &to_pretty_json(&artifact)?)?;
    m.fingerprints = artifact.records.iter().map(|r| r.fingerprint.clone()).collect();
    m.stat("m", artifact.m);
    m.stat("augmented_features", ORIGINAL_FEATURES.len() + artifact.m);
    if let Some(c) = &artifact.curated {
        m.stat("expert_features", ORIGINAL_FEATURES.len() + c.len());
    }
    ctx.finish(&m)
}
