use std::collections::BTreeSet;
use std::fmt::Write as _;

use dallm_eval::{render_importance_csv, render_metrics_csv, render_metrics_text, render_mse_csv, render_mse_text};

use super::eval::EvalArtifact;
use super::{read_json, EVAL};
use crate::context::Context;
use crate::error::CliError;

/// Renders the MSE and classification tables from `eval.json`.
pub fn run(ctx: &Context) -> Result<(), CliError> {
    let mut m = ctx.manifest("report");
    let eval: EvalArtifact = read_json(&ctx.artifact_input(&mut m, EVAL, "eval")?)?;
    let mut text = String::new();

    text.push_str("Feature sets\n");
    let width = eval.variants.iter().map(|v| v.name.len()).max().unwrap_or(0).max(11);
    let _ = writeln!(text, "{:<width$}  # feat", "Feature set");
    for v in &eval.variants {
        let _ = writeln!(text, "{:<width$}  {}", v.name, v.features);
    }
    text.push('\n');

    if eval.mse.is_empty() {
        log::info!("no generated vitals were scored; skipping the MSE table");
    } else {
        ctx.write_output(&mut m, "mse_table.csv", render_mse_csv(&eval.mse)?.as_bytes())?;
        let mse_text = render_mse_text(&eval.mse);
        ctx.write_output(&mut m, "mse_table.txt", mse_text.as_bytes())?;
        text.push_str(&mse_text);
        text.push('\n');
    }

    let metrics = &eval.metrics;
    ctx.write_output(&mut m, "metrics.csv", render_metrics_csv(metrics)?.as_bytes())?;
    let metrics_text = render_metrics_text(metrics);
    ctx.write_output(&mut m, "metrics.txt", metrics_text.as_bytes())?;
    text.push_str(&metrics_text);

    let kinds: BTreeSet<_> = metrics.rows.iter().map(|r| r.classifier).collect();
    for kind in kinds {
        let name = format!("importance_{}.csv", kind.short());
        ctx.write_output(&mut m, &name, render_importance_csv(metrics, kind)?.as_bytes())?;
    }
    ctx.write_output(&mut m, "report.txt", text.as_bytes())?;
    m.stat("variants", metrics.variants());
    ctx.finish(&m)
}
