use std::fmt;

use serde::{Deserialize, Serialize};

use dallm_core::dataset::{Dataset, FeatureDescriptor, Lesion};

use crate::forest::{ForestParams, RandomForest};
use crate::gbt::{GbtParams, GradientBoosted};
use crate::matrix::{aggregate_by_source, Encoder, Matrix};
use crate::metrics::{compute_metrics, Metrics};
use crate::split::Split;
use crate::tree::{fit_classification_tree, Tree, TreeParams};
use crate::{EvalError, RELEVANCE_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    DecisionTree,
    RandomForest,
    GradientBoostedTrees,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [
        ClassifierKind::DecisionTree,
        ClassifierKind::RandomForest,
        ClassifierKind::GradientBoostedTrees,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ClassifierKind::DecisionTree => "decision_tree",
            ClassifierKind::RandomForest => "random_forest",
            ClassifierKind::GradientBoostedTrees => "gradient_boosted_trees",
        }
    }

    /// Short label used in report tables and importance file names.
    pub fn short(self) -> &'static str {
        match self {
            ClassifierKind::DecisionTree => "dt",
            ClassifierKind::RandomForest => "rf",
            ClassifierKind::GradientBoostedTrees => "gbt",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Features considered at each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
    Fraction(f64),
}

impl MaxFeatures {
    /// Per-split feature count for `p` columns; `None` means all of them.
    pub fn resolve(self, p: usize) -> Option<usize> {
        let n = match self {
            MaxFeatures::All => return None,
            MaxFeatures::Sqrt => (p as f64).sqrt().floor() as usize,
            MaxFeatures::Count(n) => n,
            MaxFeatures::Fraction(f) => (f * p as f64).floor() as usize,
        };
        Some(n.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub max_depth: usize,
    /// Trees for a forest, boosting rounds for GBT; ignored by DT.
    pub n_trees: usize,
    /// GBT shrinkage; ignored otherwise.
    pub learning_rate: f64,
    pub feature_subsample: MaxFeatures,
    pub min_samples_leaf: usize,
    /// Forest bootstrap sampling.
    pub bootstrap: bool,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn default_for(kind: ClassifierKind) -> ClassifierSpec {
        match kind {
            ClassifierKind::DecisionTree => ClassifierSpec {
                kind,
                max_depth: 6,
                n_trees: 1,
                learning_rate: 1.0,
                feature_subsample: MaxFeatures::All,
                min_samples_leaf: 5,
                bootstrap: false,
                seed: 0,
            },
            ClassifierKind::RandomForest => ClassifierSpec {
                kind,
                max_depth: 8,
                n_trees: 100,
                learning_rate: 1.0,
                feature_subsample: MaxFeatures::Sqrt,
                min_samples_leaf: 2,
                bootstrap: true,
                seed: 0,
            },
            ClassifierKind::GradientBoostedTrees => ClassifierSpec {
                kind,
                max_depth: 3,
                n_trees: 100,
                learning_rate: 0.1,
                feature_subsample: MaxFeatures::All,
                min_samples_leaf: 5,
                bootstrap: false,
                seed: 0,
            },
        }
    }

    /// DT, RF and GBT with default hyperparameters and a shared seed.
    pub fn defaults(seed: u64) -> Vec<ClassifierSpec> {
        ClassifierKind::ALL
            .into_iter()
            .map(|k| ClassifierSpec {
                seed,
                ..ClassifierSpec::default_for(k)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidSpec(format!("{}: {m}", self.kind)));
        if self.max_depth == 0 {
            return bad("max_depth must be positive".into());
        }
        if self.n_trees == 0 {
            return bad("n_trees must be positive".into());
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive".into());
        }
        if self.kind == ClassifierKind::GradientBoostedTrees && !(self.learning_rate > 0.0 && self.learning_rate <= 1.0)
        {
            return bad(format!("learning_rate {} outside (0, 1]", self.learning_rate));
        }
        match self.feature_subsample {
            MaxFeatures::Count(0) => bad("feature_subsample count must be positive".into()),
            MaxFeatures::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                bad(format!("feature_subsample fraction {f} outside (0, 1]"))
            }
            _ => Ok(()),
        }
    }

    fn tree_params(&self, p: usize) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            max_features: self.feature_subsample.resolve(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    DecisionTree(Tree),
    RandomForest(RandomForest),
    GradientBoosted(GradientBoosted),
}

impl Model {
    /// Fits on `rows` of `x`; `y` is indexed by row.
    pub fn fit(spec: &ClassifierSpec, x: &Matrix, y: &[bool], rows: &[usize]) -> Result<Model, EvalError> {
        spec.validate()?;
        if rows.is_empty() {
            return Err(EvalError::EmptySplit("train"));
        }
        let pos = rows.iter().filter(|&&i| y[i]).count();
        if pos == 0 || pos == rows.len() {
            return Err(EvalError::SingleClass);
        }
        let tree = spec.tree_params(x.cols());
        Ok(match spec.kind {
            ClassifierKind::DecisionTree => {
                Model::DecisionTree(fit_classification_tree(x, y, rows.to_vec(), tree, spec.seed))
            }
            ClassifierKind::RandomForest => Model::RandomForest(RandomForest::fit(
                x,
                y,
                rows,
                &ForestParams {
                    n_trees: spec.n_trees,
                    tree,
                    bootstrap: spec.bootstrap,
                    seed: spec.seed,
                },
            )),
            ClassifierKind::GradientBoostedTrees => Model::GradientBoosted(GradientBoosted::fit(
                x,
                y,
                rows,
                &GbtParams {
                    n_rounds: spec.n_trees,
                    learning_rate: spec.learning_rate,
                    tree,
                    seed: spec.seed,
                },
            )),
        })
    }

    /// Leaf class fraction, vote fraction or sigmoid margin.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        match self {
            Model::DecisionTree(t) => t.predict(row),
            Model::RandomForest(f) => f.predict_proba(row),
            Model::GradientBoosted(g) => g.predict_proba(row),
        }
    }

    /// Normalized impurity-reduction importance per column.
    pub fn importances(&self, n_cols: usize) -> Vec<f64> {
        match self {
            Model::DecisionTree(t) => t.importances(),
            Model::RandomForest(f) => f.importances(n_cols),
            Model::GradientBoosted(g) => g.importances(n_cols),
        }
    }
}

/// Model plus the encoder fitted on its training rows.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: ClassifierSpec,
    pub target: Lesion,
    pub encoder: Encoder,
    pub model: Model,
}

/// Per-row presence of `lesion`.
pub fn lesion_labels(dataset: &Dataset, lesion: Lesion) -> Vec<bool> {
    dataset.rows().iter().map(|r| r.case.labels.get(lesion)).collect()
}

/// Fits imputation, encoding and the classifier on `split.train`.
pub fn train_classifier(
    spec: &ClassifierSpec,
    dataset: &Dataset,
    features: &[FeatureDescriptor],
    target: Lesion,
    split: &Split,
) -> Result<FittedModel, EvalError> {
    spec.validate()?;
    if split.test.is_empty() {
        return Err(EvalError::EmptySplit("test"));
    }
    let encoder = Encoder::fit(dataset, features, &split.train)?;
    let x = encoder.transform(dataset, &split.train)?;
    let all = lesion_labels(dataset, target);
    let y: Vec<bool> = split.train.iter().map(|&i| all[i]).collect();
    let rows: Vec<usize> = (0..y.len()).collect();
    let model = Model::fit(spec, &x, &y, &rows)?;
    Ok(FittedModel {
        spec: *spec,
        target,
        encoder,
        model,
    })
}

impl FittedModel {
    pub fn scores(&self, dataset: &Dataset, rows: &[usize]) -> Result<Vec<f64>, EvalError> {
        let x = self.encoder.transform(dataset, rows)?;
        Ok((0..x.rows()).map(|i| self.model.predict_proba(x.row(i))).collect())
    }

    pub fn evaluate(&self, dataset: &Dataset, rows: &[usize]) -> Result<Metrics, EvalError> {
        let scores = self.scores(dataset, rows)?;
        let all = lesion_labels(dataset, self.target);
        let labels: Vec<bool> = rows.iter().map(|&i| all[i]).collect();
        compute_metrics(&scores, &labels)
    }

    /// Importance per source feature; one-hot columns are summed.
    pub fn feature_importances(&self) -> Vec<(String, f64)> {
        let sources = self.encoder.column_sources();
        let cols = self.model.importances(sources.len());
        let per = aggregate_by_source(&cols, &sources, self.encoder.features().len());
        self.encoder.features().iter().cloned().zip(per).collect()
    }

    /// Source features with importance strictly above
    /// [`RELEVANCE_THRESHOLD`].
    pub fn relevant_feature_count(&self) -> usize {
        self.feature_importances()
            .iter()
            .filter(|(_, v)| *v > RELEVANCE_THRESHOLD)
            .count()
    }
}
