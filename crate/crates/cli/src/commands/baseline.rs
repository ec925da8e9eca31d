use dallm_core::augment::gaussian_baseline;
use dallm_core::dataset::Vital;

use super::{ValuesArtifact, BASELINE, BASELINE_GENERATOR};
use crate::context::Context;
use crate::error::CliError;
use crate::manifest::to_pretty_json;

/// Seeded context-free draws for the six vitals.
pub fn run(ctx: &Context) -> Result<(), CliError> {
    let mut m = ctx.manifest("baseline");
    let dataset = ctx.dataset(&mut m)?;
    let names: Vec<&str> = Vital::ALL.iter().map(|v| v.name()).collect();
    let outcome = gaussian_baseline(&dataset, &names, ctx.settings.config.seed)?;
    for s in &outcome.skipped {
        m.warnings.push(format!("{s}: zero variance, skipped"));
    }
    let artifact = ValuesArtifact {
        generator: BASELINE_GENERATOR.into(),
        features: names.iter().map(|s| s.to_string()).collect(),
        values: outcome.values,
        skipped: outcome.skipped,
        coverage: Default::default(),
        failures: Vec::new(),
        unparsed: 0,
    };
    ctx.write_output(&mut m, BASELINE, &to_pretty_json(&artifact)?)?;
    m.stat("patients", artifact.values.len());
    ctx.finish(&m)
}
