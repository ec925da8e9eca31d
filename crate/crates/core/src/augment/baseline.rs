use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::AugmentError;
use crate::dataset::{feature_stats, Dataset, FeatureValue, ValueMap};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub values: ValueMap,
    /// Features skipped for having zero variance.
    pub skipped: Vec<String>,
}

/// Context-free generator: every cell is an independent standard normal
/// draw in standardized space, mapped back through the feature's population
/// mean and std. Draws go row by row, feature by feature.
pub fn gaussian_baseline(dataset: &Dataset, features: &[&str], seed: u64) -> Result<BaselineOutcome, AugmentError> {
    let stats = feature_stats(dataset, features)?;
    let mut skipped = Vec::new();
    let mut active = Vec::new();
    for name in features {
        let s = stats[*name];
        if s.zero_variance {
            log::warn!("baseline: `{name}` has zero variance; skipped");
            skipped.push((*name).to_owned());
        } else {
            active.push((*name, s));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = ValueMap::new();
    for row in dataset.rows() {
        let mut cells = BTreeMap::new();
        for (name, s) in &active {
            let z: f64 = StandardNormal.sample(&mut rng);
            cells.insert((*name).to_owned(), FeatureValue::Number(s.unscale(z)));
        }
        if !cells.is_empty() {
            values.insert(row.id().to_owned(), cells);
        }
    }
    Ok(BaselineOutcome { values, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetError, PatientCase};

    fn dataset(n: usize) -> Dataset {
        let cases = (0..n)
            .map(|i| {
                let mut c = PatientCase::new(format!("p{i:05}"));
                c.heartrate = Some(60.0 + (i % 40) as f64);
                c.temperature = Some(98.6);
                c
            })
            .collect();
        Dataset::from_cases(cases).unwrap()
    }

    #[test]
    fn seeded_and_reproducible() {
        let d = dataset(50);
        let a = gaussian_baseline(&d, &["heartrate"], 7).unwrap();
        let b = gaussian_baseline(&d, &["heartrate"], 7).unwrap();
        let c = gaussian_baseline(&d, &["heartrate"], 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.values.len(), 50);
    }

    #[test]
    fn zero_variance_is_skipped() {
        let out = gaussian_baseline(&dataset(10), &["heartrate", "temperature"], 1).unwrap();
        assert_eq!(out.skipped, ["temperature"]);
        assert!(out.values.values().all(|m| m.len() == 1));
        assert!(matches!(
            gaussian_baseline(&dataset(10), &["gender"], 1),
            Err(AugmentError::Dataset(DatasetError::NotNumeric(_)))
        ));
    }

    #[test]
    fn matches_target_moments() {
        let d = dataset(4000);
        let out = gaussian_baseline(&d, &["heartrate"], 3).unwrap();
        let xs: Vec<f64> = out.values.values().map(|m| m["heartrate"].as_f64().unwrap()).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        // Source column: 0..40 repeated, mean 79.5, population std sqrt((40^2-1)/12).
        let target_sd = ((1600.0f64 - 1.0) / 12.0).sqrt();
        assert!((mean - 79.5).abs() < 4.0 * target_sd / n.sqrt());
        assert!((sd / target_sd - 1.0).abs() < 0.05);
    }
}
