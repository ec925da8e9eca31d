//! Canonical patient dataset model.
//!
//! A [`Dataset`] is an ordered feature schema plus one [`Row`] per patient.
//! The eight original features (age, gender and six vitals) live on the
//! [`PatientCase`] itself; any other feature, whether a ninth original column
//! or an augmented one, lives in the row's `extra` map keyed by feature name.
//! Missing values are explicit `None`s, never sentinel numbers.

mod io;
mod transform;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use io::{load_dataset, save_dataset, DataFormat, LoadOutcome, LoadWarning};
pub use transform::{
    feature_stats, merge_augmented, standardize, unstandardize, FeatureStats, Standardized, GENERATED_SUFFIX,
};

/// Per-patient generated values: patient id -> feature name -> value.
pub type ValueMap = BTreeMap<String, BTreeMap<String, FeatureValue>>;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset file not found: {0}")]
    MissingFile(String),
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("duplicate patient id `{0}`")]
    DuplicatePatientId(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` has no non-missing values")]
    AllMissing(String),
    #[error("feature `{0}` is not numeric")]
    NotNumeric(String),
    #[error("feature `{0}` cannot hold standardized values")]
    NotStandardizable(String),
    #[error("invalid feature name `{0}`")]
    InvalidFeatureName(String),
    #[error("duplicate feature `{0}` in schema")]
    DuplicateFeature(String),
    #[error("unknown patient id `{0}`")]
    UnknownPatient(String),
    #[error("type conflict for `{feature}`: declared {declared:?}, got {got}")]
    TypeConflict {
        feature: String,
        declared: FeatureKind,
        got: String,
    },
    #[error("invalid patient `{id}`: {message}")]
    InvalidPatient { id: String, message: String },
    #[error("schema sidecar: {0}")]
    Sidecar(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// The five chest X-ray findings used as ground-truth labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lesion {
    Atelectasis,
    Consolidation,
    EnlargedCardiacSilhouette,
    PleuralEffusion,
    PleuralAbnormality,
}

impl Lesion {
    pub const ALL: [Lesion; 5] = [
        Lesion::Atelectasis,
        Lesion::Consolidation,
        Lesion::EnlargedCardiacSilhouette,
        Lesion::PleuralEffusion,
        Lesion::PleuralAbnormality,
    ];

    /// Snake-case identifier used for column names and directories.
    pub fn key(self) -> &'static str {
        match self {
            Lesion::Atelectasis => "atelectasis",
            Lesion::Consolidation => "consolidation",
            Lesion::EnlargedCardiacSilhouette => "enlarged_cardiac_silhouette",
            Lesion::PleuralEffusion => "pleural_effusion",
            Lesion::PleuralAbnormality => "pleural_abnormality",
        }
    }

    /// Human-readable name, as substituted into prompts and search terms.
    pub fn display_name(self) -> &'static str {
        match self {
            Lesion::Atelectasis => "atelectasis",
            Lesion::Consolidation => "consolidation",
            Lesion::EnlargedCardiacSilhouette => "enlarged cardiac silhouette",
            Lesion::PleuralEffusion => "pleural effusion",
            Lesion::PleuralAbnormality => "pleural abnormality",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Lesion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Lesion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Lesion::ALL
            .into_iter()
            .find(|l| l.key() == wanted)
            .ok_or_else(|| format!("unknown lesion `{s}`"))
    }
}

/// Presence flags for exactly the five lesions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct LesionLabels([bool; 5]);

impl LesionLabels {
    pub fn new(flags: [bool; 5]) -> Self {
        LesionLabels(flags)
    }

    pub fn get(&self, lesion: Lesion) -> bool {
        self.0[lesion.index()]
    }

    pub fn set(&mut self, lesion: Lesion, present: bool) {
        self.0[lesion.index()] = present;
    }

    pub fn positives(&self) -> Vec<Lesion> {
        Lesion::ALL.into_iter().filter(|l| self.get(*l)).collect()
    }
}

impl Serialize for LesionLabels {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, bool> = Lesion::ALL.iter().map(|l| (l.key(), self.get(*l))).collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LesionLabels {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, bool>::deserialize(deserializer)?;
        let mut labels = LesionLabels::default();
        let mut seen = BTreeSet::new();
        for (key, value) in map {
            let lesion = Lesion::from_str(&key).map_err(serde::de::Error::custom)?;
            labels.set(lesion, value);
            seen.insert(lesion);
        }
        if seen.len() != Lesion::ALL.len() {
            return Err(serde::de::Error::custom(
                "labels must contain exactly the five lesion keys",
            ));
        }
        Ok(labels)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    #[default]
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unknown => "unknown",
        }
    }

    /// Accepts `f`/`female`/`m`/`male`/`unknown` (any case); empty means unknown.
    pub fn parse(raw: &str) -> Option<Gender> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Some(Gender::Female),
            "m" | "male" => Some(Gender::Male),
            "" | "u" | "unknown" => Some(Gender::Unknown),
            _ => None,
        }
    }
}

/// The six numeric vital signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vital {
    Temperature,
    Heartrate,
    Resprate,
    O2sat,
    Sbp,
    Dbp,
}

impl Vital {
    pub const ALL: [Vital; 6] = [
        Vital::Temperature,
        Vital::Heartrate,
        Vital::Resprate,
        Vital::O2sat,
        Vital::Sbp,
        Vital::Dbp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Vital::Temperature => "temperature",
            Vital::Heartrate => "heartrate",
            Vital::Resprate => "resprate",
            Vital::O2sat => "o2sat",
            Vital::Sbp => "sbp",
            Vital::Dbp => "dbp",
        }
    }

    /// Canonical unit token, as stored in the schema.
    pub fn units(self) -> &'static str {
        match self {
            Vital::Temperature => "fahrenheit",
            Vital::Heartrate => "bpm",
            Vital::Resprate => "breaths_per_minute",
            Vital::O2sat => "percent",
            Vital::Sbp | Vital::Dbp => "mmhg",
        }
    }

    /// Phrase used when describing the measurement in prompts.
    pub fn description(self) -> &'static str {
        match self {
            Vital::Temperature => "body temperature in degrees Fahrenheit",
            Vital::Heartrate => "heart rate in beats per minute",
            Vital::Resprate => "respiratory rate in breaths per minute",
            Vital::O2sat => "peripheral oxygen saturation as a percentage (0-100)",
            Vital::Sbp => "systolic blood pressure in mmHg",
            Vital::Dbp => "diastolic blood pressure in mmHg",
        }
    }

    pub fn from_name(name: &str) -> Option<Vital> {
        Vital::ALL.into_iter().find(|v| v.name() == name)
    }
}

/// One clinical record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientCase {
    pub id: String,
    pub age: Option<u32>,
    pub gender: Gender,
    pub temperature: Option<f64>,
    pub heartrate: Option<f64>,
    pub resprate: Option<f64>,
    pub o2sat: Option<f64>,
    pub sbp: Option<f64>,
    pub dbp: Option<f64>,
    pub report: String,
    pub labels: LesionLabels,
}

impl PatientCase {
    pub fn new(id: impl Into<String>) -> Self {
        PatientCase {
            id: id.into(),
            age: None,
            gender: Gender::Unknown,
            temperature: None,
            heartrate: None,
            resprate: None,
            o2sat: None,
            sbp: None,
            dbp: None,
            report: String::new(),
            labels: LesionLabels::default(),
        }
    }

    pub fn vital(&self, vital: Vital) -> Option<f64> {
        match vital {
            Vital::Temperature => self.temperature,
            Vital::Heartrate => self.heartrate,
            Vital::Resprate => self.resprate,
            Vital::O2sat => self.o2sat,
            Vital::Sbp => self.sbp,
            Vital::Dbp => self.dbp,
        }
    }

    pub fn set_vital(&mut self, vital: Vital, value: Option<f64>) {
        let slot = match vital {
            Vital::Temperature => &mut self.temperature,
            Vital::Heartrate => &mut self.heartrate,
            Vital::Resprate => &mut self.resprate,
            Vital::O2sat => &mut self.o2sat,
            Vital::Sbp => &mut self.sbp,
            Vital::Dbp => &mut self.dbp,
        };
        *slot = value;
    }

    /// Checks the range invariants on vitals.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty patient id".into());
        }
        for vital in Vital::ALL {
            if let Some(v) = self.vital(vital) {
                if !v.is_finite() {
                    return Err(format!("{} is not finite", vital.name()));
                }
            }
        }
        if let Some(o2) = self.o2sat {
            if !(0.0..=100.0).contains(&o2) {
                return Err(format!("o2sat {o2} outside [0, 100]"));
            }
        }
        if let (Some(sbp), Some(dbp)) = (self.sbp, self.dbp) {
            if sbp < dbp {
                return Err(format!("sbp {sbp} below dbp {dbp}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Boolean,
    Categorical,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Numeric => "numeric",
            FeatureKind::Boolean => "boolean",
            FeatureKind::Categorical => "categorical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    LlmDiscovered,
    ExpertAdded,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    pub provenance: Provenance,
}

impl FeatureDescriptor {
    pub fn new(
        name: impl Into<String>,
        kind: FeatureKind,
        units: Option<&str>,
        provenance: Provenance,
    ) -> Result<Self, DatasetError> {
        let name = name.into();
        if !is_valid_feature_name(&name) {
            return Err(DatasetError::InvalidFeatureName(name));
        }
        Ok(FeatureDescriptor {
            name,
            kind,
            units: units.map(str::to_owned),
            provenance,
        })
    }
}

/// `[a-z][a-z0-9_]*`
pub fn is_valid_feature_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Lowercases and joins alphanumeric runs with single underscores.
///
/// Returns `None` when nothing usable remains or the result would not start
/// with a letter.
pub fn normalize_feature_name(raw: &str) -> Option<String> {
    let mut out = String::with_capacity(raw.len());
    let mut pending_sep = false;
    for c in raw.trim().chars() {
        if c.is_ascii_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending_sep = true;
        }
    }
    is_valid_feature_name(&out).then_some(out)
}

/// A single typed cell value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Boolean(bool),
    Number(f64),
    Category(String),
}

impl FeatureValue {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureValue::Boolean(_) => FeatureKind::Boolean,
            FeatureValue::Number(_) => FeatureKind::Numeric,
            FeatureValue::Category(_) => FeatureKind::Categorical,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FeatureValue::Number(v) => Some(*v),
            FeatureValue::Boolean(b) => Some(if *b { 1.0 } else { 0.0 }),
            FeatureValue::Category(_) => None,
        }
    }

    /// Text form used in CSV cells.
    pub fn to_cell(&self) -> String {
        match self {
            FeatureValue::Boolean(b) => b.to_string(),
            FeatureValue::Number(v) => v.to_string(),
            FeatureValue::Category(s) => s.clone(),
        }
    }
}

/// One patient plus any non-canonical feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub case: PatientCase,
    pub extra: BTreeMap<String, FeatureValue>,
}

impl Row {
    pub fn new(case: PatientCase) -> Self {
        Row {
            case,
            extra: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.case.id
    }

    /// Looks up any feature by name, canonical or extra.
    pub fn value(&self, name: &str) -> Option<FeatureValue> {
        if let Some(vital) = Vital::from_name(name) {
            return self.case.vital(vital).map(FeatureValue::Number);
        }
        match name {
            "age" => self.case.age.map(|a| FeatureValue::Number(a as f64)),
            "gender" => Some(FeatureValue::Category(self.case.gender.as_str().to_owned())),
            _ => self.extra.get(name).cloned(),
        }
    }

    pub fn numeric(&self, name: &str) -> Option<f64> {
        self.value(name).and_then(|v| v.as_f64())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default)]
    pub ablation: bool,
}

/// Names of the eight canonical original features, in schema order.
pub const ORIGINAL_FEATURES: [&str; 8] = [
    "age",
    "gender",
    "temperature",
    "heartrate",
    "resprate",
    "o2sat",
    "sbp",
    "dbp",
];

/// Schema entries for the eight canonical original features.
pub fn original_schema() -> Vec<FeatureDescriptor> {
    let mut schema = vec![
        FeatureDescriptor {
            name: "age".into(),
            kind: FeatureKind::Numeric,
            units: Some("years".into()),
            provenance: Provenance::Original,
        },
        FeatureDescriptor {
            name: "gender".into(),
            kind: FeatureKind::Categorical,
            units: None,
            provenance: Provenance::Original,
        },
    ];
    schema.extend(Vital::ALL.iter().map(|v| FeatureDescriptor {
        name: v.name().into(),
        kind: FeatureKind::Numeric,
        units: Some(v.units().into()),
        provenance: Provenance::Original,
    }));
    schema
}

/// Immutable collection of patient rows with a typed schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Vec<FeatureDescriptor>,
    rows: Vec<Row>,
    metadata: DatasetMetadata,
}

impl Dataset {
    /// Builds a dataset, checking every invariant.
    ///
    /// The schema must start with the eight canonical features; extra
    /// descriptors may follow in any order.
    pub fn new(
        schema: Vec<FeatureDescriptor>,
        rows: Vec<Row>,
        metadata: DatasetMetadata,
    ) -> Result<Self, DatasetError> {
        let mut names = BTreeSet::new();
        for d in &schema {
            if !is_valid_feature_name(&d.name) {
                return Err(DatasetError::InvalidFeatureName(d.name.clone()));
            }
            if !names.insert(d.name.as_str()) {
                return Err(DatasetError::DuplicateFeature(d.name.clone()));
            }
        }
        for name in ORIGINAL_FEATURES {
            if !names.contains(name) {
                return Err(DatasetError::UnknownFeature(name.to_owned()));
            }
        }
        let kinds: BTreeMap<&str, FeatureKind> = schema.iter().map(|d| (d.name.as_str(), d.kind)).collect();

        let mut ids = BTreeSet::new();
        for row in &rows {
            if !ids.insert(row.case.id.as_str()) {
                return Err(DatasetError::DuplicatePatientId(row.case.id.clone()));
            }
            row.case.validate().map_err(|message| DatasetError::InvalidPatient {
                id: row.case.id.clone(),
                message,
            })?;
            for (name, value) in &row.extra {
                let declared = match kinds.get(name.as_str()) {
                    Some(k) if !ORIGINAL_FEATURES.contains(&name.as_str()) => *k,
                    _ => return Err(DatasetError::UnknownFeature(name.clone())),
                };
                check_kind(name, declared, value)?;
            }
        }
        Ok(Dataset { schema, rows, metadata })
    }

    /// Dataset with the canonical schema only.
    pub fn from_cases(cases: Vec<PatientCase>) -> Result<Self, DatasetError> {
        Dataset::new(
            original_schema(),
            cases.into_iter().map(Row::new).collect(),
            DatasetMetadata::default(),
        )
    }

    pub fn schema(&self) -> &[FeatureDescriptor] {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn metadata(&self) -> &DatasetMetadata {
        &self.metadata
    }

    pub fn with_metadata(mut self, metadata: DatasetMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn descriptor(&self, name: &str) -> Option<&FeatureDescriptor> {
        self.schema.iter().find(|d| d.name == name)
    }

    pub fn row(&self, id: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.case.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.case.id.as_str())
    }

    /// Descriptors that are not part of the canonical eight.
    pub fn extra_schema(&self) -> impl Iterator<Item = &FeatureDescriptor> {
        self.schema
            .iter()
            .filter(|d| !ORIGINAL_FEATURES.contains(&d.name.as_str()))
    }

    /// Non-missing numeric values of a feature, in row order.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<Option<f64>>, DatasetError> {
        let d = self
            .descriptor(name)
            .ok_or_else(|| DatasetError::UnknownFeature(name.to_owned()))?;
        if d.kind != FeatureKind::Numeric {
            return Err(DatasetError::NotNumeric(name.to_owned()));
        }
        Ok(self.rows.iter().map(|r| r.numeric(name)).collect())
    }

    pub(crate) fn into_parts(self) -> (Vec<FeatureDescriptor>, Vec<Row>, DatasetMetadata) {
        (self.schema, self.rows, self.metadata)
    }
}

pub(crate) fn check_kind(name: &str, declared: FeatureKind, value: &FeatureValue) -> Result<(), DatasetError> {
    let ok = match value {
        FeatureValue::Number(v) => declared == FeatureKind::Numeric && v.is_finite(),
        other => other.kind() == declared,
    };
    if ok {
        Ok(())
    } else {
        Err(DatasetError::TypeConflict {
            feature: name.to_owned(),
            declared,
            got: format!("{value:?}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_feature_names() {
        assert_eq!(normalize_feature_name("Dyspnea").as_deref(), Some("dyspnea"));
        assert_eq!(
            normalize_feature_name("  smoking history ").as_deref(),
            Some("smoking_history")
        );
        assert_eq!(normalize_feature_name("O2 Sat (%)").as_deref(), Some("o2_sat"));
        assert_eq!(normalize_feature_name("9th rib"), None);
        assert_eq!(normalize_feature_name("***"), None);
    }

    #[test]
    fn lesion_parses_key_and_display_name() {
        assert_eq!(
            "enlarged cardiac silhouette".parse::<Lesion>().unwrap(),
            Lesion::EnlargedCardiacSilhouette
        );
        assert_eq!("Pleural_Effusion".parse::<Lesion>().unwrap(), Lesion::PleuralEffusion);
        assert!("pneumonia".parse::<Lesion>().is_err());
    }

    #[test]
    fn labels_require_all_five_keys() {
        let partial = r#"{"atelectasis": true}"#;
        assert!(serde_json::from_str::<LesionLabels>(partial).is_err());
        let full = r#"{"atelectasis":true,"consolidation":false,"enlarged_cardiac_silhouette":false,"pleural_effusion":true,"pleural_abnormality":false}"#;
        let labels: LesionLabels = serde_json::from_str(full).unwrap();
        assert_eq!(labels.positives(), vec![Lesion::Atelectasis, Lesion::PleuralEffusion]);
    }

    #[test]
    fn case_validation_checks_vital_ranges() {
        let mut case = PatientCase::new("p1");
        case.o2sat = Some(180.0);
        assert!(case.validate().is_err());
        case.o2sat = Some(97.0);
        case.sbp = Some(80.0);
        case.dbp = Some(90.0);
        assert!(case.validate().is_err());
        case.dbp = Some(60.0);
        assert!(case.validate().is_ok());
    }

    #[test]
    fn dataset_rejects_unknown_extra_keys() {
        let mut row = Row::new(PatientCase::new("p1"));
        row.extra.insert("cough".into(), FeatureValue::Boolean(true));
        let err = Dataset::new(original_schema(), vec![row], DatasetMetadata::default());
        assert!(matches!(err, Err(DatasetError::UnknownFeature(_))));
    }

    #[test]
    fn dataset_rejects_duplicate_ids() {
        let err = Dataset::from_cases(vec![PatientCase::new("a"), PatientCase::new("a")]);
        assert!(matches!(err, Err(DatasetError::DuplicatePatientId(_))));
    }
}
