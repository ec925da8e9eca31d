//! Measurement side of the pipeline.
//!
//! * [`mse`]: normalized mean-squared-error tables comparing generated vital
//!   signs with ground truth.
//! * [`split`] and [`matrix`]: stratified splits, train-fitted imputation and
//!   one-hot encoding.
//! * [`tree`], [`forest`], [`gbt`]: CART, random forest and first-order
//!   gradient boosting, all deterministic under a seed.
//! * [`metrics`]: accuracy, rank AUC, precision, recall, F1.
//! * [`compare`]: per-lesion, per-classifier comparison of feature-set
//!   variants with macro rollups and CSV/text rendering.
//!
//! "Relevant features" throughout means features whose normalized
//! impurity-reduction importance is strictly greater than
//! [`RELEVANCE_THRESHOLD`].

use thiserror::Error;

use dallm_core::dataset::DatasetError;

pub mod classifier;
pub mod compare;
pub mod forest;
pub mod gbt;
pub mod matrix;
pub mod metrics;
pub mod mse;
pub mod split;
pub mod tree;

pub use classifier::{train_classifier, ClassifierKind, ClassifierSpec, FittedModel, MaxFeatures, Model};
pub use compare::{
    compare_feature_sets, render_importance_csv, render_metrics_csv, render_metrics_text, CompareConfig, ImportanceRow,
    MetricsReport, MetricsRow, Variant,
};
pub use matrix::{Encoder, Matrix};
pub use metrics::{auc, compute_metrics, Metrics};
pub use mse::{mse_table, render_mse_csv, render_mse_text, FeatureMse, MseTable};
pub use split::{stratified_folds, stratified_split, Split, SplitConfig};

/// Importance above which a feature counts as relevant.
pub const RELEVANCE_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("feature `{0}` has no rows where both generated and true values are present")]
    NoOverlap(String),
    #[error("generated values reference unknown patient `{0}`")]
    UnknownPatient(String),
    #[error("no features to evaluate")]
    NoFeatures,
    #[error("training target has a single class")]
    SingleClass,
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("invalid classifier spec: {0}")]
    InvalidSpec(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("matrix: {0}")]
    Matrix(String),
    #[error("variant `{variant}` does not match the reference rows: {message}")]
    RowMismatch { variant: String, message: String },
    #[error("{variant} / {lesion} / {classifier}: {source}")]
    Task {
        variant: String,
        lesion: String,
        classifier: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
