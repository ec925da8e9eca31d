//! CSV and JSON Lines persistence.
//!
//! Both formats carry the same columns: `id`, the eight canonical features,
//! `report`, one `label_<lesion>` flag per lesion (JSON Lines nests these under
//! `labels`), then every extra schema feature. A `<file>.schema.json` sidecar
//! records the full schema with provenance and the dataset metadata; when it is
//! absent, extra columns are admitted as original features with inferred kinds.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    original_schema, Dataset, DatasetError, DatasetMetadata, FeatureDescriptor, FeatureKind, FeatureValue, Gender,
    Lesion, PatientCase, Provenance, Row, Vital, ORIGINAL_FEATURES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Csv,
    Jsonlines,
}

impl DataFormat {
    /// Guesses from the file extension (`.jsonl`/`.jsonlines` vs anything else).
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("jsonlines") | Some("ndjson") => DataFormat::Jsonlines,
            _ => DataFormat::Csv,
        }
    }
}

/// A recoverable problem found while loading; the cell is left missing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    pub line: usize,
    pub column: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub warnings: Vec<LoadWarning>,
}

impl LoadOutcome {
    pub fn warning_count(&self) -> usize {
        self.warnings.len()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    schema: Vec<FeatureDescriptor>,
    metadata: DatasetMetadata,
}

const SIDECAR_FORMAT: &str = "dallm-dataset-schema";

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".schema.json");
    path.with_file_name(name)
}

fn label_column(lesion: Lesion) -> String {
    format!("label_{}", lesion.key())
}

fn is_reserved(name: &str) -> bool {
    matches!(name, "id" | "report" | "labels")
        || ORIGINAL_FEATURES.contains(&name)
        || Lesion::ALL.iter().any(|l| label_column(*l) == name)
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<LoadOutcome, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.display().to_string()));
    }
    let sidecar = read_sidecar(path)?;
    match format {
        DataFormat::Csv => load_csv(path, sidecar),
        DataFormat::Jsonlines => load_jsonl(path, sidecar),
    }
}

fn read_sidecar(path: &Path) -> Result<Option<Sidecar>, DatasetError> {
    let sc = sidecar_path(path);
    if !sc.is_file() {
        return Ok(None);
    }
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(&sc)?)?;
    if sidecar.format != SIDECAR_FORMAT || sidecar.version != 1 {
        return Err(DatasetError::Sidecar(format!(
            "unsupported sidecar {} v{}",
            sidecar.format, sidecar.version
        )));
    }
    Ok(Some(sidecar))
}

/// Writes the dataset and its schema sidecar.
pub fn save_dataset(dataset: &Dataset, path: &Path, format: DataFormat) -> Result<(), DatasetError> {
    match format {
        DataFormat::Csv => save_csv(dataset, path)?,
        DataFormat::Jsonlines => save_jsonl(dataset, path)?,
    }
    let sidecar = Sidecar {
        format: SIDECAR_FORMAT.into(),
        version: 1,
        schema: dataset.schema().to_vec(),
        metadata: dataset.metadata().clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&sidecar)?;
    bytes.push(b'\n');
    fs::write(sidecar_path(path), bytes)?;
    Ok(())
}

struct RecordContext<'a> {
    line: usize,
    warnings: &'a mut Vec<LoadWarning>,
}

impl RecordContext<'_> {
    fn warn(&mut self, column: &str, message: String) {
        self.warnings.push(LoadWarning {
            line: self.line,
            column: column.to_owned(),
            message,
        });
    }

    fn malformed(&self, message: String) -> DatasetError {
        DatasetError::MalformedRecord {
            line: self.line,
            message,
        }
    }

    fn vital(&mut self, column: &str, raw: &str) -> Option<f64> {
        let raw = raw.trim();
        if raw.is_empty() {
            return None;
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.warn(column, format!("unparseable value `{raw}`"));
                None
            }
        }
    }

    fn age(&mut self, raw: &str) -> Result<Option<u32>, DatasetError> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Ok(None);
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() && v < 0.0 => Err(self.malformed(format!("negative age {v}"))),
            Ok(v) if v.is_finite() && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(Some(v as u32)),
            _ => {
                self.warn("age", format!("unparseable age `{raw}`"));
                Ok(None)
            }
        }
    }

    fn gender(&mut self, raw: &str) -> Gender {
        Gender::parse(raw).unwrap_or_else(|| {
            self.warn("gender", format!("unrecognised gender `{raw}`"));
            Gender::Unknown
        })
    }

    fn label(&self, column: &str, raw: &str) -> Result<bool, DatasetError> {
        parse_bool(raw).ok_or_else(|| self.malformed(format!("invalid label `{raw}` in {column}")))
    }

    fn extra(&mut self, d: &FeatureDescriptor, raw: &str) -> Option<FeatureValue> {
        let raw = raw.trim();
        if raw.is_empty() {
            return None;
        }
        let parsed = match d.kind {
            FeatureKind::Numeric => raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(FeatureValue::Number),
            FeatureKind::Boolean => parse_bool(raw).map(FeatureValue::Boolean),
            FeatureKind::Categorical => Some(FeatureValue::Category(raw.to_owned())),
        };
        if parsed.is_none() {
            self.warn(&d.name, format!("unparseable {} value `{raw}`", d.kind.as_str()));
        }
        parsed
    }
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

fn infer_kind<'a>(values: impl Iterator<Item = &'a str>) -> FeatureKind {
    let present: Vec<&str> = values.map(str::trim).filter(|v| !v.is_empty()).collect();
    if present.is_empty() {
        return FeatureKind::Categorical;
    }
    let is_bool = |v: &&str| matches!(v.to_ascii_lowercase().as_str(), "true" | "false");
    if present.iter().all(is_bool) {
        FeatureKind::Boolean
    } else if present.iter().all(|v| v.parse::<f64>().is_ok_and(f64::is_finite)) {
        FeatureKind::Numeric
    } else {
        FeatureKind::Categorical
    }
}

/// Builds the full schema from the sidecar or from inferred extra kinds.
fn resolve_schema(
    extras: &[String],
    all_columns_present: bool,
    sidecar: Option<Sidecar>,
    infer: impl Fn(&str) -> FeatureKind,
) -> Result<(Vec<FeatureDescriptor>, DatasetMetadata), DatasetError> {
    match sidecar {
        Some(sc) => {
            let declared: BTreeSet<&str> = sc
                .schema
                .iter()
                .map(|d| d.name.as_str())
                .filter(|n| !ORIGINAL_FEATURES.contains(n))
                .collect();
            let found: BTreeSet<&str> = extras.iter().map(String::as_str).collect();
            let consistent = if all_columns_present {
                declared == found
            } else {
                found.is_subset(&declared)
            };
            if !consistent {
                return Err(DatasetError::Sidecar(format!(
                    "columns {found:?} do not match sidecar schema {declared:?}"
                )));
            }
            Ok((sc.schema, sc.metadata))
        }
        None => {
            let mut schema = original_schema();
            for name in extras {
                schema.push(FeatureDescriptor::new(
                    name.clone(),
                    infer(name),
                    None,
                    Provenance::Original,
                )?);
            }
            Ok((schema, DatasetMetadata::default()))
        }
    }
}

fn load_csv(path: &Path, sidecar: Option<Sidecar>) -> Result<LoadOutcome, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col: BTreeMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();

    let mut required: Vec<String> = vec!["id".into(), "report".into()];
    required.extend(ORIGINAL_FEATURES.iter().map(|s| s.to_string()));
    required.extend(Lesion::ALL.iter().map(|l| label_column(*l)));
    for name in &required {
        if !col.contains_key(name.as_str()) {
            return Err(DatasetError::MalformedRecord {
                line: 1,
                message: format!("missing column `{name}`"),
            });
        }
    }
    let extras: Vec<String> = headers.iter().filter(|h| !is_reserved(h)).map(str::to_owned).collect();

    let records = reader.records().collect::<Result<Vec<_>, _>>()?;
    let (schema, metadata) = resolve_schema(&extras, true, sidecar, |name| {
        let i = col[name];
        infer_kind(records.iter().map(|r| r.get(i).unwrap_or("")))
    })?;

    let mut warnings = Vec::new();
    let mut rows = Vec::with_capacity(records.len());
    let mut ids = BTreeSet::new();
    for record in &records {
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut ctx = RecordContext {
            line,
            warnings: &mut warnings,
        };
        let get = |name: &str| record.get(col[name]).unwrap_or("");

        let id = get("id").trim().to_owned();
        if id.is_empty() {
            return Err(ctx.malformed("empty patient id".into()));
        }
        if !ids.insert(id.clone()) {
            return Err(DatasetError::DuplicatePatientId(id));
        }
        let mut case = PatientCase::new(id);
        case.age = ctx.age(get("age"))?;
        case.gender = ctx.gender(get("gender"));
        for vital in Vital::ALL {
            case.set_vital(vital, ctx.vital(vital.name(), get(vital.name())));
        }
        case.report = get("report").to_owned();
        for lesion in Lesion::ALL {
            let column = label_column(lesion);
            case.labels.set(lesion, ctx.label(&column, get(&column))?);
        }
        if let Err(message) = case.validate() {
            return Err(ctx.malformed(format!("patient `{}`: {message}", case.id)));
        }

        let mut row = Row::new(case);
        for d in schema.iter().filter(|d| !ORIGINAL_FEATURES.contains(&d.name.as_str())) {
            if let Some(v) = ctx.extra(d, get(&d.name)) {
                row.extra.insert(d.name.clone(), v);
            }
        }
        rows.push(row);
    }

    let dataset = Dataset::new(schema, rows, metadata)?;
    Ok(LoadOutcome { dataset, warnings })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn save_csv(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_path(path)?;
    let extras: Vec<&FeatureDescriptor> = dataset.extra_schema().collect();

    let mut header: Vec<String> = vec!["id".into()];
    header.extend(ORIGINAL_FEATURES.iter().map(|s| s.to_string()));
    header.push("report".into());
    header.extend(Lesion::ALL.iter().map(|l| label_column(*l)));
    header.extend(extras.iter().map(|d| d.name.clone()));
    writer.write_record(&header)?;

    for row in dataset.rows() {
        let c = &row.case;
        let mut record: Vec<String> = vec![
            c.id.clone(),
            c.age.map(|a| a.to_string()).unwrap_or_default(),
            c.gender.as_str().to_owned(),
        ];
        record.extend(Vital::ALL.iter().map(|v| fmt_opt(c.vital(*v))));
        record.push(c.report.clone());
        record.extend(
            Lesion::ALL
                .iter()
                .map(|l| if c.labels.get(*l) { "1" } else { "0" }.to_owned()),
        );
        record.extend(
            extras
                .iter()
                .map(|d| row.extra.get(&d.name).map(FeatureValue::to_cell).unwrap_or_default()),
        );
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

fn json_to_cell(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

fn load_jsonl(path: &Path, sidecar: Option<Sidecar>) -> Result<LoadOutcome, DatasetError> {
    let text = fs::read_to_string(path)?;
    let mut objects = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(map)) => objects.push((line_no, map)),
            Ok(_) => {
                return Err(DatasetError::MalformedRecord {
                    line: line_no,
                    message: "record is not a JSON object".into(),
                })
            }
            Err(e) => {
                return Err(DatasetError::MalformedRecord {
                    line: line_no,
                    message: e.to_string(),
                })
            }
        }
    }

    let mut extras: Vec<String> = Vec::new();
    let mut inferred: BTreeMap<String, FeatureKind> = BTreeMap::new();
    for (line, obj) in &objects {
        for (key, value) in obj {
            if is_reserved(key) {
                continue;
            }
            if !extras.contains(key) {
                extras.push(key.clone());
            }
            let kind = match value {
                Value::Null => continue,
                Value::Bool(_) => FeatureKind::Boolean,
                Value::Number(_) => FeatureKind::Numeric,
                _ => FeatureKind::Categorical,
            };
            match inferred.get(key) {
                Some(k) if *k != kind && sidecar.is_none() => {
                    return Err(DatasetError::MalformedRecord {
                        line: *line,
                        message: format!("mixed value types for `{key}`"),
                    })
                }
                _ => {
                    inferred.insert(key.clone(), kind);
                }
            }
        }
    }
    extras.sort();
    let (schema, metadata) = resolve_schema(&extras, false, sidecar, |name| {
        inferred.get(name).copied().unwrap_or(FeatureKind::Categorical)
    })?;

    let mut warnings = Vec::new();
    let mut rows = Vec::with_capacity(objects.len());
    let mut ids = BTreeSet::new();
    for (line, obj) in &objects {
        let mut ctx = RecordContext {
            line: *line,
            warnings: &mut warnings,
        };
        let cell = |key: &str| obj.get(key).and_then(json_to_cell).unwrap_or_default();

        let id = match obj.get("id") {
            Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_owned(),
            _ => return Err(ctx.malformed("missing or non-string `id`".into())),
        };
        if !ids.insert(id.clone()) {
            return Err(DatasetError::DuplicatePatientId(id));
        }
        let mut case = PatientCase::new(id);
        case.age = ctx.age(&cell("age"))?;
        case.gender = ctx.gender(&cell("gender"));
        for vital in Vital::ALL {
            case.set_vital(vital, ctx.vital(vital.name(), &cell(vital.name())));
        }
        case.report = match obj.get("report") {
            None | Some(Value::Null) => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(ctx.malformed("`report` is not a string".into())),
        };
        let labels = match obj.get("labels") {
            Some(Value::Object(m)) => m,
            _ => return Err(ctx.malformed("missing `labels` object".into())),
        };
        if labels.len() != Lesion::ALL.len() {
            return Err(ctx.malformed("labels must contain exactly the five lesion keys".into()));
        }
        for lesion in Lesion::ALL {
            let raw = labels.get(lesion.key()).and_then(json_to_cell).unwrap_or_default();
            case.labels.set(lesion, ctx.label(lesion.key(), &raw)?);
        }
        if let Err(message) = case.validate() {
            return Err(ctx.malformed(format!("patient `{}`: {message}", case.id)));
        }

        let mut row = Row::new(case);
        for d in schema.iter().filter(|d| !ORIGINAL_FEATURES.contains(&d.name.as_str())) {
            if let Some(v) = ctx.extra(d, &cell(&d.name)) {
                row.extra.insert(d.name.clone(), v);
            }
        }
        rows.push(row);
    }

    let dataset = Dataset::new(schema, rows, metadata)?;
    Ok(LoadOutcome { dataset, warnings })
}

fn value_to_json(v: &FeatureValue) -> Value {
    match v {
        FeatureValue::Boolean(b) => Value::Bool(*b),
        FeatureValue::Number(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
        FeatureValue::Category(s) => Value::String(s.clone()),
    }
}

fn save_jsonl(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let mut out = String::new();
    for row in dataset.rows() {
        let c = &row.case;
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), Value::String(c.id.clone()));
        if let Some(age) = c.age {
            obj.insert("age".into(), Value::from(age));
        }
        obj.insert("gender".into(), Value::String(c.gender.as_str().into()));
        for vital in Vital::ALL {
            if let Some(v) = c.vital(vital) {
                obj.insert(vital.name().into(), value_to_json(&FeatureValue::Number(v)));
            }
        }
        obj.insert("report".into(), Value::String(c.report.clone()));
        obj.insert("labels".into(), serde_json::to_value(c.labels)?);
        for (name, value) in &row.extra {
            obj.insert(name.clone(), value_to_json(value));
        }
        out.push_str(&serde_json::to_string(&Value::Object(obj))?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
