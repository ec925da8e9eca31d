use std::collections::BTreeMap;

use dallm_core::dataset::{Dataset, FeatureDescriptor, FeatureKind, FeatureValue};

use crate::EvalError;

/// Dense row-major matrix of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Matrix, EvalError> {
        let cols = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != cols {
                return Err(EvalError::Matrix(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(EvalError::Matrix(format!("row {i} has a non-finite value")));
            }
            data.extend(r);
        }
        Ok(Matrix { rows: n, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Column {
    /// Numeric or boolean (as 0/1); missing cells take the train median.
    Numeric { feature: usize, fill: f64 },
    /// One indicator per train category; missing cells take the train mode.
    OneHot {
        feature: usize,
        category: String,
        mode: Option<String>,
    },
}

/// Imputation and encoding fitted on the training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    features: Vec<String>,
    columns: Vec<Column>,
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    })
}

fn category(v: Option<FeatureValue>) -> Option<String> {
    match v {
        Some(FeatureValue::Category(s)) => Some(s),
        _ => None,
    }
}

impl Encoder {
    pub fn fit(dataset: &Dataset, features: &[FeatureDescriptor], train: &[usize]) -> Result<Encoder, EvalError> {
        if features.is_empty() {
            return Err(EvalError::NoFeatures);
        }
        if train.is_empty() {
            return Err(EvalError::EmptySplit("train"));
        }
        let rows = dataset.rows();
        let mut columns = Vec::new();
        for (fi, d) in features.iter().enumerate() {
            match d.kind {
                FeatureKind::Numeric | FeatureKind::Boolean => {
                    let present: Vec<f64> = train.iter().filter_map(|&i| rows[i].numeric(&d.name)).collect();
                    let fill = median(present).unwrap_or_else(|| {
                        log::warn!("`{}` is missing on every training row; imputing 0", d.name);
                        0.0
                    });
                    columns.push(Column::Numeric { feature: fi, fill });
                }
                FeatureKind::Categorical => {
                    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                    for &i in train {
                        if let Some(c) = category(rows[i].value(&d.name)) {
                            *counts.entry(c).or_default() += 1;
                        }
                    }
                    // Highest count, then the alphabetically first category.
                    let mode = counts
                        .iter()
                        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                        .map(|(c, _)| c.clone());
                    for c in counts.keys() {
                        columns.push(Column::OneHot {
                            feature: fi,
                            category: c.clone(),
                            mode: mode.clone(),
                        });
                    }
                }
            }
        }
        Ok(Encoder {
            features: features.iter().map(|d| d.name.clone()).collect(),
            columns,
        })
    }

    /// Source feature names, in fit order.
    pub fn features(&self) -> &[String] {
        &self.features
    }

    /// Encoded column names: the feature name, or `<feature>=<category>`.
    pub fn column_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .map(|c| match c {
                Column::Numeric { feature, .. } => self.features[*feature].clone(),
                Column::OneHot { feature, category, .. } => format!("{}={category}", self.features[*feature]),
            })
            .collect()
    }

    /// Index into [`Encoder::features`] for each encoded column.
    pub fn column_sources(&self) -> Vec<usize> {
        self.columns
            .iter()
            .map(|c| match c {
                Column::Numeric { feature, .. } | Column::OneHot { feature, .. } => *feature,
            })
            .collect()
    }

    pub fn transform(&self, dataset: &Dataset, rows: &[usize]) -> Result<Matrix, EvalError> {
        let all = dataset.rows();
        let out = rows
            .iter()
            .map(|&i| {
                let row = &all[i];
                self.columns
                    .iter()
                    .map(|c| match c {
                        Column::Numeric { feature, fill } => row.numeric(&self.features[*feature]).unwrap_or(*fill),
                        Column::OneHot {
                            feature,
                            category: level,
                            mode,
                        } => {
                            let v = category(row.value(&self.features[*feature])).or(mode.clone());
                            f64::from(v.as_deref() == Some(level.as_str()))
                        }
                    })
                    .collect()
            })
            .collect();
        Matrix::from_rows(out)
    }
}

/// Sums encoded-column values back onto their source features.
pub fn aggregate_by_source(values: &[f64], sources: &[usize], n_features: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_features];
    for (v, &s) in values.iter().zip(sources) {
        out[s] += v;
    }
    out
}
