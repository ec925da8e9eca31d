use serde::{Deserialize, Serialize};

use dallm_core::dataset::{feature_stats, Dataset, ValueMap};

use crate::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMse {
    pub name: String,
    pub mse: f64,
    /// Rows where both the generated and the true value were present.
    pub rows: usize,
}

/// One generator's row of the MSE table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseTable {
    pub generator: String,
    pub features: Vec<FeatureMse>,
    /// Arithmetic mean of the per-feature MSEs.
    pub mean: f64,
}

impl MseTable {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.features.iter().find(|f| f.name == name).map(|f| f.mse)
    }
}

/// Normalized MSE of `generated` against `truth`.
///
/// Both sides are z-scored with the truth column's population mean and std,
/// so a generator that matches the marginal distribution but ignores the
/// patient scores about 2.
pub fn mse_table(
    generated: &ValueMap,
    truth: &Dataset,
    features: &[&str],
    generator: &str,
) -> Result<MseTable, EvalError> {
    if features.is_empty() {
        return Err(EvalError::NoFeatures);
    }
    if let Some(pid) = generated.keys().find(|id| truth.row(id).is_none()) {
        return Err(EvalError::UnknownPatient(pid.clone()));
    }
    let stats = feature_stats(truth, features)?;
    let mut out = Vec::with_capacity(features.len());
    for name in features {
        let s = &stats[*name];
        let mut sum = 0.0;
        let mut rows = 0usize;
        for row in truth.rows() {
            let Some(t) = row.numeric(name) else { continue };
            let Some(g) = generated
                .get(row.id())
                .and_then(|m| m.get(*name))
                .and_then(|v| v.as_f64())
            else {
                continue;
            };
            let d = s.scale(g) - s.scale(t);
            sum += d * d;
            rows += 1;
        }
        if rows == 0 {
            return Err(EvalError::NoOverlap((*name).to_owned()));
        }
        out.push(FeatureMse {
            name: (*name).to_owned(),
            mse: sum / rows as f64,
            rows,
        });
    }
    let mean = out.iter().map(|f| f.mse).sum::<f64>() / out.len() as f64;
    Ok(MseTable {
        generator: generator.to_owned(),
        features: out,
        mean,
    })
}

fn columns(tables: &[MseTable]) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for t in tables {
        for f in &t.features {
            if !cols.contains(&f.name) {
                cols.push(f.name.clone());
            }
        }
    }
    cols
}

fn cell(t: &MseTable, col: &str) -> String {
    t.get(col).map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// `generator,<feature>...,mean`; one line per table, features in first-seen
/// order. Cells absent from a table are left empty.
pub fn render_mse_csv(tables: &[MseTable]) -> Result<String, EvalError> {
    let cols = columns(tables);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["generator".to_owned()];
    header.extend(cols.iter().cloned());
    header.push("mean".into());
    w.write_record(&header)?;
    for t in tables {
        let mut rec = vec![t.generator.clone()];
        rec.extend(cols.iter().map(|c| cell(t, c)));
        rec.push(format!("{:.6}", t.mean));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Aligned plain-text version of [`render_mse_csv`], three decimals.
pub fn render_mse_text(tables: &[MseTable]) -> String {
    let cols = columns(tables);
    let mut grid: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Generator".to_owned()];
    header.extend(cols.iter().cloned());
    header.push("Mean".into());
    grid.push(header);
    for t in tables {
        let mut line = vec![t.generator.clone()];
        line.extend(
            cols.iter()
                .map(|c| t.get(c).map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())),
        );
        line.push(format!("{:.3}", t.mean));
        grid.push(line);
    }
    let mut out = String::from("Normalized MSE (z-scored with ground-truth mean/std)\n");
    out.push_str(&align(&grid));
    out
}

/// Left-aligns the first column, right-aligns the rest.
pub(crate) fn align(grid: &[Vec<String>]) -> String {
    let ncol = grid.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncol)
        .map(|c| {
            grid.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in grid.iter().enumerate() {
        let mut line = String::new();
        for (c, s) in row.iter().enumerate() {
            if c == 0 {
                line.push_str(&format!("{s:<w$}", w = widths[c]));
            } else {
                line.push_str(&format!("  {s:>w$}", w = widths[c]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * ncol.saturating_sub(1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use dallm_core::dataset::{FeatureValue, PatientCase, Vital};

    use super::*;

    fn truth() -> Dataset {
        let cases = (0..20)
            .map(|i| {
                let mut c = PatientCase::new(format!("p{i:02}"));
                c.heartrate = Some(60.0 + 2.0 * i as f64);
                c.resprate = if i % 5 == 0 { None } else { Some(12.0 + (i % 7) as f64) };
                c
            })
            .collect();
        Dataset::from_cases(cases).unwrap()
    }

    fn copy(d: &Dataset, f: impl Fn(Vital, f64) -> f64) -> ValueMap {
        let mut out = ValueMap::new();
        for row in d.rows() {
            let mut m = BTreeMap::new();
            for v in [Vital::Heartrate, Vital::Resprate] {
                if let Some(x) = row.case.vital(v) {
                    m.insert(v.name().to_owned(), FeatureValue::Number(f(v, x)));
                }
            }
            out.insert(row.id().to_owned(), m);
        }
        out
    }

    #[test]
    fn identity_is_zero() {
        let d = truth();
        let t = mse_table(&copy(&d, |_, x| x), &d, &["heartrate", "resprate"], "copy").unwrap();
        assert_eq!(t.get("heartrate"), Some(0.0));
        assert_eq!(t.get("resprate"), Some(0.0));
        assert_eq!(t.mean, 0.0);
        assert_eq!(t.features[1].rows, 16);
    }

    #[test]
    fn unit_offset_in_standardized_space_is_one() {
        let d = truth();
        let stats = feature_stats(&d, &["heartrate", "resprate"]).unwrap();
        let gen = copy(&d, |v, x| {
            let s = stats[v.name()];
            s.unscale(s.scale(x) + 1.0)
        });
        let t = mse_table(&gen, &d, &["heartrate", "resprate"], "offset").unwrap();
        for f in &t.features {
            assert!((f.mse - 1.0).abs() < 1e-12, "{f:?}");
        }
        assert!((t.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_overlap_and_unknown_patients_are_errors() {
        let d = truth();
        let empty = ValueMap::new();
        assert!(matches!(
            mse_table(&empty, &d, &["heartrate"], "x"),
            Err(EvalError::NoOverlap(f)) if f == "heartrate"
        ));
        let mut stray = copy(&d, |_, x| x);
        stray.insert("zz".into(), BTreeMap::new());
        assert!(matches!(
            mse_table(&stray, &d, &["heartrate"], "x"),
            Err(EvalError::UnknownPatient(p)) if p == "zz"
        ));
        assert!(matches!(mse_table(&stray, &d, &[], "x"), Err(EvalError::NoFeatures)));
    }

    #[test]
    fn renders_csv_and_text() {
        let d = truth();
        let a = mse_table(&copy(&d, |_, x| x), &d, &["heartrate", "resprate"], "copy").unwrap();
        let csv = render_mse_csv(std::slice::from_ref(&a)).unwrap();
        assert_eq!(
            csv,
            "generator,heartrate,resprate,mean\ncopy,0.000000,0.000000,0.000000\n"
        );
        let text = render_mse_text(&[a]);
        assert!(text.contains("Generator  heartrate  resprate   Mean"));
        assert!(text.lines().nth(3).unwrap().starts_with("copy"));
    }
}
