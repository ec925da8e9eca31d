use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dallm_core::dataset::{Dataset, Lesion};

use crate::classifier::{lesion_labels, train_classifier, ClassifierKind, ClassifierSpec};
use crate::metrics::Metrics;
use crate::mse::align;
use crate::split::{stratified_folds, stratified_split, Split, SplitConfig};
use crate::{EvalError, RELEVANCE_THRESHOLD};

/// A named feature set over the shared patient rows.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub dataset: Dataset,
}

impl Variant {
    pub fn new(name: impl Into<String>, dataset: Dataset) -> Variant {
        Variant {
            name: name.into(),
            dataset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub lesions: Vec<Lesion>,
    pub specs: Vec<ClassifierSpec>,
    pub split: SplitConfig,
    /// Stratified k-fold instead of the single holdout split.
    pub cv_folds: Option<usize>,
    pub workers: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            lesions: Lesion::ALL.to_vec(),
            specs: ClassifierSpec::defaults(42),
            split: SplitConfig::default(),
            cv_folds: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    /// `None` for the macro average over lesions.
    pub lesion: Option<Lesion>,
    pub classifier: ClassifierKind,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    /// Source features with normalized importance above 1e-6; a mean when
    /// averaged over folds or lesions.
    pub relevant_features: f64,
    pub total_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub variant: String,
    pub lesion: Lesion,
    pub classifier: ClassifierKind,
    pub feature: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    /// One row per (variant, lesion, classifier), in input order.
    pub rows: Vec<MetricsRow>,
    /// Macro averages per (variant, classifier).
    pub rollups: Vec<MetricsRow>,
    pub importances: Vec<ImportanceRow>,
}

impl MetricsReport {
    pub fn rollup(&self, variant: &str, classifier: ClassifierKind) -> Option<&MetricsRow> {
        self.rollups
            .iter()
            .find(|r| r.variant == variant && r.classifier == classifier)
    }

    pub fn row(&self, variant: &str, lesion: Lesion, classifier: ClassifierKind) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.lesion == Some(lesion) && r.classifier == classifier)
    }

    /// Variant names in report order.
    pub fn variants(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rollups {
            if !out.contains(&r.variant.as_str()) {
                out.push(&r.variant);
            }
        }
        out
    }
}

fn check_rows(reference: &Variant, other: &Variant) -> Result<(), EvalError> {
    let mismatch = |message: String| EvalError::RowMismatch {
        variant: other.name.clone(),
        message,
    };
    let (a, b) = (reference.dataset.rows(), other.dataset.rows());
    if a.len() != b.len() {
        return Err(mismatch(format!("{} rows, expected {}", b.len(), a.len())));
    }
    for (ra, rb) in a.iter().zip(b) {
        if ra.id() != rb.id() {
            return Err(mismatch(format!("row `{}` where `{}` was expected", rb.id(), ra.id())));
        }
        if ra.case.labels != rb.case.labels {
            return Err(mismatch(format!("labels differ for `{}`", ra.id())));
        }
    }
    Ok(())
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| mean(v.into_iter()))
}

struct TaskOutput {
    row: MetricsRow,
    importances: Vec<ImportanceRow>,
}

fn run_task(
    variant: &Variant,
    lesion: Lesion,
    spec: &ClassifierSpec,
    splits: &[Split],
) -> Result<TaskOutput, EvalError> {
    let features = variant.dataset.schema();
    let mut metrics: Vec<Metrics> = Vec::with_capacity(splits.len());
    let mut relevant = Vec::with_capacity(splits.len());
    let mut imp = vec![0.0; features.len()];
    for split in splits {
        let fitted = train_classifier(spec, &variant.dataset, features, lesion, split)?;
        metrics.push(fitted.evaluate(&variant.dataset, &split.test)?);
        let fi = fitted.feature_importances();
        relevant.push(fi.iter().filter(|(_, v)| *v > RELEVANCE_THRESHOLD).count() as f64);
        for (acc, (_, v)) in imp.iter_mut().zip(fi) {
            *acc += v / splits.len() as f64;
        }
    }
    let row = MetricsRow {
        variant: variant.name.clone(),
        lesion: Some(lesion),
        classifier: spec.kind,
        accuracy: mean(metrics.iter().map(|m| m.accuracy)),
        auc: mean_opt(metrics.iter().map(|m| m.auc)),
        precision: mean(metrics.iter().map(|m| m.precision)),
        recall: mean(metrics.iter().map(|m| m.recall)),
        f1: mean(metrics.iter().map(|m| m.f1)),
        precision_undefined: metrics.iter().any(|m| m.precision_undefined),
        recall_undefined: metrics.iter().any(|m| m.recall_undefined),
        relevant_features: mean(relevant.into_iter()),
        total_features: features.len(),
    };
    let importances = features
        .iter()
        .zip(imp)
        .map(|(d, importance)| ImportanceRow {
            variant: variant.name.clone(),
            lesion,
            classifier: spec.kind,
            feature: d.name.clone(),
            importance,
        })
        .collect();
    Ok(TaskOutput { row, importances })
}

fn rollup(rows: &[&MetricsRow]) -> MetricsRow {
    let first = rows[0];
    MetricsRow {
        variant: first.variant.clone(),
        lesion: None,
        classifier: first.classifier,
        accuracy: mean(rows.iter().map(|r| r.accuracy)),
        auc: mean_opt(rows.iter().map(|r| r.auc)),
        precision: mean(rows.iter().map(|r| r.precision)),
        recall: mean(rows.iter().map(|r| r.recall)),
        f1: mean(rows.iter().map(|r| r.f1)),
        precision_undefined: rows.iter().any(|r| r.precision_undefined),
        recall_undefined: rows.iter().any(|r| r.recall_undefined),
        relevant_features: mean(rows.iter().map(|r| r.relevant_features)),
        total_features: first.total_features,
    }
}

/// Trains every spec on every variant for every lesion.
///
/// Splits are computed once per lesion from the shared labels, so all
/// variants see exactly the same train/test rows. Tasks run on a pool of
/// `config.workers` threads and are reduced in input order.
pub fn compare_feature_sets(variants: &[Variant], config: &CompareConfig) -> Result<MetricsReport, EvalError> {
    let Some(reference) = variants.first() else {
        return Ok(MetricsReport::default());
    };
    for v in &variants[1..] {
        check_rows(reference, v)?;
    }
    for s in &config.specs {
        s.validate()?;
    }
    let mut splits = Vec::with_capacity(config.lesions.len());
    for &lesion in &config.lesions {
        let labels = lesion_labels(&reference.dataset, lesion);
        let s = match config.cv_folds {
            Some(k) => stratified_folds(&labels, k, config.split.seed),
            None => stratified_split(&labels, &config.split).map(|s| vec![s]),
        }
        .map_err(|e| EvalError::Task {
            variant: reference.name.clone(),
            lesion: lesion.to_string(),
            classifier: "split".into(),
            source: Box::new(e),
        })?;
        splits.push(s);
    }

    let mut tasks = Vec::new();
    for v in variants {
        for (li, &lesion) in config.lesions.iter().enumerate() {
            for spec in &config.specs {
                tasks.push((v, li, lesion, spec));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let results: Vec<Result<TaskOutput, EvalError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(v, li, lesion, spec)| {
                run_task(v, *lesion, spec, &splits[*li]).map_err(|e| EvalError::Task {
                    variant: v.name.clone(),
                    lesion: lesion.to_string(),
                    classifier: spec.kind.to_string(),
                    source: Box::new(e),
                })
            })
            .collect()
    });

    let mut report = MetricsReport::default();
    for r in results {
        let out = r?;
        report.rows.push(out.row);
        report.importances.extend(out.importances);
    }
    for v in variants {
        for spec in &config.specs {
            let group: Vec<&MetricsRow> = report
                .rows
                .iter()
                .filter(|r| r.variant == v.name && r.classifier == spec.kind)
                .collect();
            if !group.is_empty() {
                report.rollups.push(rollup(&group));
            }
        }
    }
    Ok(report)
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String, EvalError> {
    let bytes = w.into_inner().map_err(|e| EvalError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Columns: `variant, lesion, classifier, accuracy, auc, precision, recall,
/// f1, precision_undefined, recall_undefined, relevant_features,
/// total_features`. Per-lesion rows first, then rollups with lesion `macro`.
/// An empty `auc` cell means the test split held a single class.
pub fn render_metrics_csv(report: &MetricsReport) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "variant",
        "lesion",
        "classifier",
        "accuracy",
        "auc",
        "precision",
        "recall",
        "f1",
        "precision_undefined",
        "recall_undefined",
        "relevant_features",
        "total_features",
    ])?;
    for r in report.rows.iter().chain(&report.rollups) {
        w.write_record([
            r.variant.clone(),
            r.lesion.map_or_else(|| "macro".to_owned(), |l| l.key().to_owned()),
            r.classifier.key().to_owned(),
            f(r.accuracy),
            r.auc.map(f).unwrap_or_default(),
            f(r.precision),
            f(r.recall),
            f(r.f1),
            r.precision_undefined.to_string(),
            r.recall_undefined.to_string(),
            format!("{:.2}", r.relevant_features),
            r.total_features.to_string(),
        ])?;
    }
    csv_string(w)
}

/// `variant, lesion, feature, importance` for one classifier kind.
pub fn render_importance_csv(report: &MetricsReport, kind: ClassifierKind) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "lesion", "feature", "importance"])?;
    for r in report.importances.iter().filter(|r| r.classifier == kind) {
        w.write_record([r.variant.as_str(), r.lesion.key(), r.feature.as_str(), &f(r.importance)])?;
    }
    csv_string(w)
}

fn metric_cells(r: &MetricsRow) -> Vec<String> {
    let flag = |v: f64, undefined: bool| {
        if undefined {
            format!("{v:.4}*")
        } else {
            format!("{v:.4}")
        }
    };
    vec![
        format!("{:.4}", r.accuracy),
        r.auc.map_or_else(|| "n/a".to_owned(), |a| format!("{a:.4}")),
        flag(r.precision, r.precision_undefined),
        flag(r.recall, r.recall_undefined),
        format!("{:.4}", r.f1),
        format!("{:.1}/{}", r.relevant_features, r.total_features),
    ]
}

const HEADER: [&str; 6] = ["Accuracy", "AUC", "Precision", "Recall", "F1", "#Rel. Features"];

/// Macro table grouped by variant, followed by the per-lesion detail.
pub fn render_metrics_text(report: &MetricsReport) -> String {
    let mut grid = vec![["Feature set", "Model"]
        .iter()
        .chain(&HEADER)
        .map(|s| s.to_string())
        .collect()];
    for v in report.variants() {
        for (i, r) in report.rollups.iter().filter(|r| r.variant == v).enumerate() {
            let mut line = vec![
                if i == 0 { v.to_owned() } else { String::new() },
                r.classifier.short().to_uppercase(),
            ];
            line.extend(metric_cells(r));
            grid.push(line);
        }
    }
    let mut out = String::from("Macro average over lesions\n");
    out.push_str(&align(&grid));
    out.push_str(
        "\n#Rel. Features: source features whose normalized impurity-reduction importance \
         exceeds 1e-6, out of all features.\n* precision/recall denominator was zero in at least one split; reported as 0.\n\n",
    );

    let mut detail = vec![["Feature set", "Lesion", "Model"]
        .iter()
        .chain(&HEADER)
        .map(|s| s.to_string())
        .collect()];
    for r in &report.rows {
        let mut line = vec![
            r.variant.clone(),
            r.lesion.map_or("macro", |l| l.key()).to_owned(),
            r.classifier.short().to_uppercase(),
        ];
        line.extend(metric_cells(r));
        detail.push(line);
    }
    out.push_str("Per lesion\n");
    out.push_str(&align(&detail));
    out
}
