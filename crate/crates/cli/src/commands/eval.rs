use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use dallm_core::dataset::{load_dataset, DataFormat, Dataset, FeatureDescriptor, GENERATED_SUFFIX};
use dallm_eval::{compare_feature_sets, mse_table, CompareConfig, MetricsReport, MseTable, SplitConfig, Variant};

use super::{
    read_json, FeaturesArtifact, ValuesArtifact, AUGMENTED, AUGMENTED_ABLATION, BASELINE, EVAL, EXISTING, FEATURES,
};
use crate::context::Context;
use crate::error::CliError;
use crate::manifest::to_pretty_json;

pub const ORIGINAL: &str = "Original";
pub const AUGMENTED_VARIANT: &str = "Augmented";
pub const EXPERT: &str = "Augmented+Expert";
pub const ABLATION: &str = "Ablation";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub name: String,
    /// Schema size, original features included.
    pub features: usize,
}

/// Output of `eval`, rendered by `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalArtifact {
    pub variants: Vec<VariantSummary>,
    pub mse: Vec<MseTable>,
    pub metrics: MetricsReport,
}

/// Restricts an augmented dataset to the base columns plus the stored
/// columns of `wanted`.
pub fn project(augmented: &Dataset, base: &Dataset, wanted: &[FeatureDescriptor]) -> Result<Dataset, CliError> {
    let base_names: BTreeSet<&str> = base.schema().iter().map(|d| d.name.as_str()).collect();
    let mut schema = base.schema().to_vec();
    let mut keep: BTreeSet<String> = base_names.iter().map(|s| s.to_string()).collect();
    for d in wanted {
        let stored = if base_names.contains(d.name.as_str()) {
            format!("{}{GENERATED_SUFFIX}", d.name)
        } else {
            d.name.clone()
        };
        let desc = augmented
            .descriptor(&stored)
            .ok_or_else(|| CliError::Failed(format!("augmented dataset has no column `{stored}`")))?;
        schema.push(desc.clone());
        keep.insert(stored);
    }
    let rows = augmented
        .rows()
        .iter()
        .map(|r| {
            let mut row = r.clone();
            row.extra.retain(|k, _| keep.contains(k));
            row
        })
        .collect();
    Ok(Dataset::new(schema, rows, augmented.metadata().clone())?)
}

fn load(path: &std::path::Path) -> Result<Dataset, CliError> {
    Ok(load_dataset(path, DataFormat::Csv)?.dataset)
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.settings.config;
    let mut m = ctx.manifest("eval");
    let base = ctx.dataset(&mut m)?;
    let features: FeaturesArtifact = read_json(&ctx.artifact_input(&mut m, FEATURES, "discover")?)?;
    let augmented = load(&ctx.artifact_input(&mut m, AUGMENTED, "augment")?)?;

    let mut variants = vec![
        Variant::new(ORIGINAL, base.clone()),
        Variant::new(AUGMENTED_VARIANT, project(&augmented, &base, &features.discovered)?),
    ];
    if let Some(curated) = &features.curated {
        variants.push(Variant::new(EXPERT, project(&augmented, &base, curated)?));
    }
    if ctx.out(AUGMENTED_ABLATION).exists() {
        let ablation = load(&ctx.artifact_input(&mut m, AUGMENTED_ABLATION, "augment --ablation")?)?;
        variants.push(Variant::new(ABLATION, project(&ablation, &base, &features.discovered)?));
    } else {
        log::info!("no {AUGMENTED_ABLATION}; the ablation group is omitted");
    }

    let config = CompareConfig {
        lesions: c.eval.lesions.clone(),
        specs: c.classifier_specs(),
        split: SplitConfig {
            test_fraction: c.eval.test_fraction,
            seed: c.seed,
        },
        cv_folds: c.eval.cv_folds,
        workers: ctx.settings.workers(),
    };
    let metrics = compare_feature_sets(&variants, &config)?;

    let mut mse = Vec::new();
    for (name, producer) in [(BASELINE, "baseline"), (EXISTING, "existing")] {
        if !ctx.out(name).exists() {
            continue;
        }
        let values: ValuesArtifact = read_json(&ctx.artifact_input(&mut m, name, producer)?)?;
        let names: Vec<&str> = values
            .features
            .iter()
            .map(String::as_str)
            .filter(|f| !values.skipped.iter().any(|s| s == f))
            .collect();
        mse.push(mse_table(&values.values, &base, &names, &values.generator)?);
    }

    let artifact = EvalArtifact {
        variants: variants
            .iter()
            .map(|v| VariantSummary {
                name: v.name.clone(),
                features: v.dataset.schema().len(),
            })
            .collect(),
        mse,
        metrics,
    };
    ctx.write_output(&mut m, EVAL, &to_pretty_json(&artifact)?)?;
    m.stat("variants", &artifact.variants);
    ctx.finish(&m)
}
