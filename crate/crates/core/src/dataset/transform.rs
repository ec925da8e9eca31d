use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    check_kind, is_valid_feature_name, Dataset, DatasetError, FeatureDescriptor, FeatureKind, FeatureValue, ValueMap,
    Vital,
};

/// Suffix for generated columns whose name collides with an existing feature.
pub const GENERATED_SUFFIX: &str = "__generated";

/// Population statistics of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    /// Set when `std == 0`; such features are left unscaled.
    pub zero_variance: bool,
}

impl FeatureStats {
    /// Mean and divide-by-N standard deviation over the present values.
    pub fn from_values(values: &[f64]) -> Option<FeatureStats> {
        if values.is_empty() {
            return None;
        }
        // Summation error would otherwise give a constant column a tiny std.
        if values.iter().all(|v| *v == values[0]) {
            return Some(FeatureStats {
                mean: values[0],
                std: 0.0,
                zero_variance: true,
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Some(FeatureStats {
            mean,
            std,
            zero_variance: std == 0.0,
        })
    }

    pub fn scale(&self, x: f64) -> f64 {
        if self.zero_variance {
            x
        } else {
            (x - self.mean) / self.std
        }
    }

    pub fn unscale(&self, z: f64) -> f64 {
        if self.zero_variance {
            z
        } else {
            z * self.std + self.mean
        }
    }
}

#[derive(Debug, Clone)]
pub struct Standardized {
    pub dataset: Dataset,
    pub stats: BTreeMap<String, FeatureStats>,
}

/// Statistics for each named numeric feature.
pub fn feature_stats(
    dataset: &Dataset,
    feature_names: &[&str],
) -> Result<BTreeMap<String, FeatureStats>, DatasetError> {
    let mut stats = BTreeMap::new();
    for name in feature_names {
        let present: Vec<f64> = dataset.numeric_column(name)?.into_iter().flatten().collect();
        let s = FeatureStats::from_values(&present).ok_or_else(|| DatasetError::AllMissing((*name).to_owned()))?;
        stats.insert((*name).to_owned(), s);
    }
    Ok(stats)
}

fn writable(dataset: &Dataset, name: &str) -> Result<(), DatasetError> {
    if Vital::from_name(name).is_some() {
        return Ok(());
    }
    match dataset.descriptor(name) {
        None => Err(DatasetError::UnknownFeature(name.to_owned())),
        Some(d) if d.kind != FeatureKind::Numeric => Err(DatasetError::NotNumeric(name.to_owned())),
        // age is stored as whole years on the case record
        Some(d) if d.name == "age" => Err(DatasetError::NotStandardizable(name.to_owned())),
        Some(_) => Ok(()),
    }
}

fn map_numeric(
    dataset: &Dataset,
    stats: &BTreeMap<String, FeatureStats>,
    f: impl Fn(&FeatureStats, f64) -> f64,
) -> Result<Dataset, DatasetError> {
    for name in stats.keys() {
        writable(dataset, name)?;
    }
    let (schema, mut rows, metadata) = dataset.clone().into_parts();
    for row in &mut rows {
        for (name, s) in stats {
            if let Some(vital) = Vital::from_name(name) {
                let v = row.case.vital(vital).map(|x| f(s, x));
                row.case.set_vital(vital, v);
            } else if let Some(FeatureValue::Number(x)) = row.extra.get_mut(name) {
                *x = f(s, *x);
            }
        }
    }
    // Scaled vitals no longer satisfy clinical range checks, so skip
    // `Dataset::new` validation here.
    Ok(Dataset { schema, rows, metadata })
}

/// Z-scores each named feature using population statistics.
///
/// Missing cells stay missing. Zero-variance features keep their values and are
/// flagged in the returned statistics.
pub fn standardize(dataset: &Dataset, feature_names: &[&str]) -> Result<Standardized, DatasetError> {
    for name in feature_names {
        writable(dataset, name)?;
    }
    let stats = feature_stats(dataset, feature_names)?;
    let scaled = map_numeric(dataset, &stats, |s, x| s.scale(x))?;
    Ok(Standardized { dataset: scaled, stats })
}

/// Inverse of [`standardize`] given its returned statistics.
pub fn unstandardize(dataset: &Dataset, stats: &BTreeMap<String, FeatureStats>) -> Result<Dataset, DatasetError> {
    map_numeric(dataset, stats, |s, z| s.unscale(z))
}

/// Appends generated columns to `base`.
///
/// `additions` is keyed by patient id, then by the declared descriptor name.
/// A descriptor whose name already exists in `base` is stored as
/// `<name>__generated`. New columns are appended in sorted order of their
/// stored names; existing cells and row order are never touched.
pub fn merge_augmented(
    base: &Dataset,
    additions: &ValueMap,
    new_schema: &[FeatureDescriptor],
) -> Result<Dataset, DatasetError> {
    let existing: BTreeSet<&str> = base.schema().iter().map(|d| d.name.as_str()).collect();
    let mut resolved: BTreeMap<String, FeatureDescriptor> = BTreeMap::new();
    let mut stored_name: BTreeMap<&str, String> = BTreeMap::new();
    for d in new_schema {
        if !is_valid_feature_name(&d.name) {
            return Err(DatasetError::InvalidFeatureName(d.name.clone()));
        }
        if stored_name.contains_key(d.name.as_str()) {
            return Err(DatasetError::DuplicateFeature(d.name.clone()));
        }
        let name = if existing.contains(d.name.as_str()) {
            format!("{}{GENERATED_SUFFIX}", d.name)
        } else {
            d.name.clone()
        };
        if existing.contains(name.as_str()) || resolved.contains_key(&name) {
            return Err(DatasetError::DuplicateFeature(name));
        }
        let mut stored = d.clone();
        stored.name = name.clone();
        resolved.insert(name.clone(), stored);
        stored_name.insert(d.name.as_str(), name);
    }

    let index: BTreeMap<&str, usize> = base.rows().iter().enumerate().map(|(i, r)| (r.id(), i)).collect();
    let (mut schema, mut rows, metadata) = base.clone().into_parts();
    for (pid, values) in additions {
        let &i = index
            .get(pid.as_str())
            .ok_or_else(|| DatasetError::UnknownPatient(pid.clone()))?;
        for (name, value) in values {
            let target = stored_name
                .get(name.as_str())
                .ok_or_else(|| DatasetError::UnknownFeature(name.clone()))?;
            check_kind(name, resolved[target].kind, value)?;
            rows[i].extra.insert(target.clone(), value.clone());
        }
    }
    schema.extend(resolved.into_values());
    Dataset::new(schema, rows, metadata)
}
