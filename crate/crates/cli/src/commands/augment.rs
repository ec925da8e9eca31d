use dallm_core::augment::{
    generate_values, AugmentError, AugmentedClinicalKnowledge, GenerateConfig, GenerationOutcome,
};
use dallm_core::dataset::{merge_augmented, save_dataset, DataFormat, DatasetMetadata};

use super::{
    prompt_log_bytes, read_json, FeaturesArtifact, ACK, AUGMENTED, AUGMENTED_ABLATION, FEATURES, PROMPT_LOG,
    PROMPT_LOG_ABLATION,
};
use crate::context::Context;
use crate::error::CliError;
use crate::manifest::Manifest;

/// Generates values for every discovered and curated feature and merges
/// them into the dataset. `ablation` drops the expert-knowledge block.
pub fn run(ctx: &Context, ablation: bool) -> Result<(), CliError> {
    let c = &ctx.settings.config;
    let (command, data_name, log_name) = if ablation {
        ("augment_ablation", AUGMENTED_ABLATION, PROMPT_LOG_ABLATION)
    } else {
        ("augment", AUGMENTED, PROMPT_LOG)
    };
    let mut m = ctx.manifest(command);
    let dataset = ctx.dataset(&mut m)?;
    let embedder = ctx.embedder()?;
    let index = ctx.index(&mut m, embedder.as_ref())?;
    let ack = AugmentedClinicalKnowledge::from_json(&std::fs::read(ctx.artifact_input(&mut m, ACK, "ack")?)?)?;
    let features: FeaturesArtifact = read_json(&ctx.artifact_input(&mut m, FEATURES, "discover")?)?;
    let schema = features.generation_schema();
    let templates = ctx.templates(&mut m)?;
    let client = ctx.client(&mut m)?;
    let config = GenerateConfig {
        k: c.retrieval.k,
        ablation,
        failure_threshold: c.augment.failure_threshold,
        workers: ctx.settings.workers(),
        generation: ctx.generation(),
    };
    let result = generate_values(
        &dataset,
        &schema,
        &ack,
        &index,
        embedder.as_ref(),
        &templates,
        &client,
        &config,
    );
    let outcome = match result {
        Ok(o) => o,
        Err(AugmentError::FailureRate {
            failed,
            total,
            threshold,
            outcome,
        }) => {
            // Keep the log so the failures can be inspected.
            ctx.write_output(&mut m, log_name, &prompt_log_bytes(&outcome.log)?)?;
            note_outcome(&mut m, &outcome);
            ctx.finish(&m)?;
            return Err(CliError::FailureRate(format!(
                "{failed} of {total} patients failed, above the {threshold} threshold; see {log_name}"
            )));
        }
        Err(e) => return Err(e.into()),
    };

    let merged = merge_augmented(&dataset, &outcome.values, &schema)?.with_metadata(DatasetMetadata {
        seed: Some(c.seed),
        backend: Some(client.backend_descriptor()),
        ablation,
    });
    save_dataset(&merged, &ctx.out(data_name), DataFormat::Csv)?;
    ctx.record_output(&mut m, data_name)?;
    ctx.record_output(&mut m, &format!("{data_name}.schema.json"))?;
    ctx.write_output(&mut m, log_name, &prompt_log_bytes(&outcome.log)?)?;
    note_outcome(&mut m, &outcome);
    m.stat("ablation", ablation);
    m.stat("features", schema.len());
    ctx.finish(&m)
}

fn note_outcome(m: &mut Manifest, outcome: &GenerationOutcome) {
    m.fingerprints = outcome.log.iter().map(|e| e.fingerprint.clone()).collect();
    m.stat("coverage", &outcome.coverage);
    m.stat("unparsed", outcome.unparsed);
    m.stat("failed_patients", outcome.failures.len());
    for f in &outcome.failures {
        m.warnings.push(format!("patient {}: {}", f.patient_id, f.message));
    }
}
