use dallm_core::augment::{generate_existing_values, AugmentError, GenerateConfig};
use dallm_core::dataset::Vital;

use super::{prompt_log_bytes, ValuesArtifact, EXISTING, EXISTING_LOG};
use crate::context::Context;
use crate::error::CliError;
use crate::manifest::to_pretty_json;

/// Asks the backend for each patient's six vitals from report and
/// demographics alone, for scoring against the recorded values.
pub fn run(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.settings.config;
    let mut m = ctx.manifest("existing");
    let dataset = ctx.dataset(&mut m)?;
    let templates = ctx.templates(&mut m)?;
    let client = ctx.client(&mut m)?;
    let config = GenerateConfig {
        k: c.retrieval.k,
        ablation: false,
        failure_threshold: c.augment.failure_threshold,
        workers: ctx.settings.workers(),
        generation: ctx.generation(),
    };
    let outcome = match generate_existing_values(&dataset, &Vital::ALL, &templates, &client, &config) {
        Ok(o) => o,
        Err(AugmentError::FailureRate { outcome, .. }) => {
            ctx.write_output(&mut m, EXISTING_LOG, &prompt_log_bytes(&outcome.log)?)?;
            ctx.finish(&m)?;
            return Err(CliError::FailureRate(format!(
                "{} of {} patients failed; see {EXISTING_LOG}",
                outcome.failures.len(),
                dataset.len()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    ctx.write_output(&mut m, EXISTING_LOG, &prompt_log_bytes(&outcome.log)?)?;
    m.fingerprints = outcome.log.iter().map(|e| e.fingerprint.clone()).collect();
    for f in &outcome.failures {
        m.warnings.push(format!("patient {}: {}", f.patient_id, f.message));
    }
    let artifact = ValuesArtifact {
        generator: client.backend_descriptor(),
        features: Vital::ALL.iter().map(|v| v.name().to_owned()).collect(),
        values: outcome.values,
        skipped: Vec::new(),
        coverage: outcome.coverage,
        failures: outcome.failures,
        unparsed: outcome.unparsed,
    };
    ctx.write_output(&mut m, EXISTING, &to_pretty_json(&artifact)?)?;
    m.stat("coverage", &artifact.coverage);
    m.stat("unparsed", artifact.unparsed);
    ctx.finish(&m)
}
