use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::PromptError;
use crate::dataset::{normalize_feature_name, FeatureDescriptor, FeatureKind, FeatureValue, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    ParsedJson,
    ParsedLine,
    Unparsed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedFeatureValue {
    pub name: String,
    pub raw: String,
    pub value: Option<FeatureValue>,
    pub units: Option<String>,
    pub confidence: Confidence,
}

/// Values in schema order plus notes about ignored content.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedValues {
    pub values: Vec<ParsedFeatureValue>,
    pub warnings: Vec<String>,
}

impl ParsedValues {
    pub fn get(&self, name: &str) -> Option<&ParsedFeatureValue> {
        self.values.iter().find(|v| v.name == name)
    }
}

/// The outermost `open`..`close` span, tried from the first opener.
fn json_span(text: &str, open: char, close: char) -> Option<Value> {
    let start = text.find(open)?;
    let end = text.rfind(close)?;
    if end <= start {
        return None;
    }
    serde_json::from_str(&text[start..=end]).ok()
}

fn parse_kind(raw: &str) -> Option<FeatureKind> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "numeric" | "number" | "numerical" | "continuous" | "float" | "integer" | "int" | "real" => {
            Some(FeatureKind::Numeric)
        }
        "boolean" | "bool" | "binary" | "yes/no" | "yes_no" | "flag" => Some(FeatureKind::Boolean),
        "categorical" | "category" | "string" | "text" | "enum" | "nominal" | "ordinal" => {
            Some(FeatureKind::Categorical)
        }
        _ => None,
    }
}

fn clean_units(raw: Option<&str>) -> Option<String> {
    let u = raw?.trim();
    let lower = u.to_ascii_lowercase();
    if u.is_empty() || matches!(lower.as_str(), "null" | "none" | "n/a" | "na" | "-") {
        None
    } else {
        Some(u.to_owned())
    }
}

fn descriptor(name: &str, kind: FeatureKind, units: Option<&str>) -> Option<FeatureDescriptor> {
    let name = normalize_feature_name(name)?;
    FeatureDescriptor::new(name, kind, clean_units(units).as_deref(), Provenance::LlmDiscovered).ok()
}

fn features_from_json(items: &[Value]) -> Vec<FeatureDescriptor> {
    items
        .iter()
        .filter_map(|item| {
            let obj = item.as_object()?;
            let name = obj.get("name")?.as_str()?;
            let kind = parse_kind(obj.get("kind").or_else(|| obj.get("type"))?.as_str()?)?;
            let units = obj.get("units").or_else(|| obj.get("unit")).and_then(Value::as_str);
            descriptor(name, kind, units)
        })
        .collect()
}

fn strip_bullet(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for marker in ["- ", "* ", "\u{2022} "] {
        if let Some(rest) = t.strip_prefix(marker) {
            return Some(rest);
        }
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return Some(r);
        }
    }
    None
}

/// `- name (kind[, units])`
fn feature_from_bullet(line: &str) -> Option<FeatureDescriptor> {
    let body = strip_bullet(line)?.trim();
    let open = body.rfind('(')?;
    let close = body.rfind(')')?;
    if close < open || !body[close + 1..].trim().is_empty() {
        return None;
    }
    let name = body[..open].trim().trim_end_matches(':');
    let mut parts = body[open + 1..close].splitn(2, ',');
    let kind = parse_kind(parts.next()?)?;
    descriptor(name, kind, parts.next())
}

fn dedupe(features: Vec<FeatureDescriptor>) -> Vec<FeatureDescriptor> {
    let mut seen = BTreeSet::new();
    features.into_iter().filter(|f| seen.insert(f.name.clone())).collect()
}

/// Features from a discovery completion: a JSON array if one parses to at
/// least one feature, otherwise `- name (kind[, units])` bullets. Items
/// without a recognizable kind are dropped; the first of duplicate names wins.
pub fn parse_feature_list(text: &str) -> Result<Vec<FeatureDescriptor>, PromptError> {
    if let Some(Value::Array(items)) = json_span(text, '[', ']') {
        let found = dedupe(features_from_json(&items));
        if !found.is_empty() {
            return Ok(found);
        }
    }
    let found = dedupe(text.lines().filter_map(feature_from_bullet).collect());
    if found.is_empty() {
        return Err(PromptError::NothingParsed);
    }
    Ok(found)
}

pub fn render_feature_list_json(features: &[FeatureDescriptor]) -> String {
    let items: Vec<Value> = features
        .iter()
        .map(|f| {
            serde_json::json!({
                "name": f.name,
                "kind": f.kind.as_str(),
                "units": f.units,
            })
        })
        .collect();
    Value::Array(items).to_string()
}

const MISSING_MARKERS: [&str; 16] = [
    "",
    "unknown",
    "n/a",
    "na",
    "null",
    "nil",
    "-",
    "?",
    "not available",
    "not specified",
    "not mentioned",
    "not reported",
    "unclear",
    "indeterminate",
    "cannot be determined",
    "cannot determine",
];

fn is_missing(raw: &str) -> bool {
    let t = raw.trim().trim_end_matches('.').to_ascii_lowercase();
    MISSING_MARKERS.contains(&t.as_str())
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.trim().trim_end_matches('.').to_ascii_lowercase().as_str() {
        "yes" | "true" | "present" => Some(true),
        "no" | "false" | "absent" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Fahrenheit,
    Celsius,
    Percent,
    MmHg,
    Bpm,
    BreathsPerMinute,
    PerMinute,
}

impl Unit {
    fn canonical(self) -> &'static str {
        match self {
            Unit::Fahrenheit | Unit::Celsius => "fahrenheit",
            Unit::Percent => "percent",
            Unit::MmHg => "mmhg",
            Unit::Bpm => "bpm",
            Unit::BreathsPerMinute => "breaths_per_minute",
            Unit::PerMinute => "per_minute",
        }
    }
}

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .flat_map(char::to_lowercase)
        .collect()
}

fn known_unit(raw: &str) -> Option<Unit> {
    let s = squash(raw).replace('\u{b0}', "");
    match s.as_str() {
        "f" | "degf" | "degreesf" | "fahrenheit" | "degreesfahrenheit" => Some(Unit::Fahrenheit),
        "c" | "degc" | "degreesc" | "celsius" | "degreescelsius" | "centigrade" => Some(Unit::Celsius),
        "%" | "percent" | "pct" => Some(Unit::Percent),
        "mmhg" => Some(Unit::MmHg),
        "bpm" | "beats/min" | "beatsperminute" | "beats/minute" => Some(Unit::Bpm),
        "breaths/min" | "breathsperminute" | "breaths/minute" | "rpm" => Some(Unit::BreathsPerMinute),
        "/min" | "perminute" | "min-1" => Some(Unit::PerMinute),
        _ => None,
    }
}

fn units_compatible(given: Unit, declared: Unit) -> bool {
    match (given, declared) {
        (Unit::Celsius, Unit::Fahrenheit) => true,
        (Unit::PerMinute, Unit::Bpm | Unit::BreathsPerMinute) => true,
        (a, b) => a == b,
    }
}

/// Leading decimal number and the remaining text.
fn split_number(raw: &str) -> Option<(f64, &str)> {
    let t = raw.trim();
    let bytes = t.as_bytes();
    let mut end = 0;
    if end < bytes.len() && (bytes[end] == b'-' || bytes[end] == b'+') {
        end += 1;
    }
    let digits_start = end;
    while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
        end += 1;
    }
    if end == digits_start {
        return None;
    }
    let value: f64 = t[..end].parse().ok()?;
    value.is_finite().then_some((value, t[end..].trim()))
}

/// Number with optional units, checked against the declared units.
/// Returns `None` (unparsed) for anything ambiguous.
fn parse_numeric(raw: &str, declared: Option<&str>) -> Option<(f64, Option<String>)> {
    let (value, rest) = split_number(raw)?;
    if rest.is_empty() {
        return Some((value, declared.map(str::to_owned)));
    }
    if rest.chars().any(|c| c.is_ascii_digit()) || rest.starts_with(['-', '.', ',', '/']) && rest != "/min" {
        return None;
    }
    match (known_unit(rest), declared) {
        (Some(given), Some(decl)) => {
            let decl_unit = known_unit(decl)?;
            if !units_compatible(given, decl_unit) {
                return None;
            }
            let value = if given == Unit::Celsius && decl_unit == Unit::Fahrenheit {
                value * 9.0 / 5.0 + 32.0
            } else {
                value
            };
            Some((value, Some(decl.to_owned())))
        }
        (Some(given), None) => {
            if given == Unit::Celsius {
                Some((value, Some("celsius".into())))
            } else {
                Some((value, Some(given.canonical().into())))
            }
        }
        (None, Some(decl)) => (squash(rest) == squash(decl)).then(|| (value, Some(decl.to_owned()))),
        (None, None) => Some((value, Some(rest.to_owned()))),
    }
}

fn typed_from_text(raw: &str, d: &FeatureDescriptor) -> Option<(FeatureValue, Option<String>)> {
    if is_missing(raw) {
        return None;
    }
    match d.kind {
        FeatureKind::Numeric => parse_numeric(raw, d.units.as_deref()).map(|(v, u)| (FeatureValue::Number(v), u)),
        FeatureKind::Boolean => parse_bool(raw).map(|b| (FeatureValue::Boolean(b), None)),
        FeatureKind::Categorical => {
            let label = raw.trim().trim_end_matches('.').trim().to_lowercase();
            (!label.is_empty()).then_some((FeatureValue::Category(label), None))
        }
    }
}

fn typed_from_json(v: &Value, d: &FeatureDescriptor) -> Option<(FeatureValue, Option<String>)> {
    match (v, d.kind) {
        (Value::Null, _) => None,
        (Value::Number(n), FeatureKind::Numeric) => {
            let x = n.as_f64().filter(|x| x.is_finite())?;
            Some((FeatureValue::Number(x), d.units.clone()))
        }
        (Value::Bool(b), FeatureKind::Boolean) => Some((FeatureValue::Boolean(*b), None)),
        (Value::String(s), _) => typed_from_text(s, d),
        (Value::Number(n), FeatureKind::Categorical) => Some((FeatureValue::Category(n.to_string()), None)),
        _ => None,
    }
}

fn raw_json(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn lookup<'a>(schema: &'a [FeatureDescriptor], key: &str) -> Option<&'a FeatureDescriptor> {
    let name = normalize_feature_name(key)?;
    schema.iter().find(|d| d.name == name)
}

/// `name: value` or `name = value`, optionally bulleted.
fn split_line(line: &str) -> Option<(&str, &str)> {
    let body = strip_bullet(line).unwrap_or(line).trim();
    let at = body.find([':', '='])?;
    let (name, value) = (body[..at].trim(), body[at + 1..].trim());
    let name = name.trim_matches(|c| c == '*' || c == '"' || c == '`');
    (!name.is_empty()).then_some((name, value))
}

/// Feature name, raw text, typed value with units, confidence.
type Found = (String, String, Option<(FeatureValue, Option<String>)>, Confidence);

/// Values from a generation completion: a JSON object first, `name: value`
/// lines as a fallback. Names outside `schema` are ignored with a warning;
/// values that do not fit the descriptor come back `Unparsed`.
pub fn parse_feature_values(text: &str, schema: &[FeatureDescriptor]) -> Result<ParsedValues, PromptError> {
    if schema.is_empty() {
        return Err(PromptError::EmptySchema);
    }
    let mut found: Vec<Found> = Vec::new();
    let mut warnings = Vec::new();
    let mut push = |key: &str,
                    raw: String,
                    typed: Option<(FeatureValue, Option<String>)>,
                    conf: Confidence,
                    warnings: &mut Vec<String>| {
        match lookup(schema, key) {
            Some(d) if found.iter().any(|f| f.0 == d.name) => {
                warnings.push(format!("duplicate value for `{}`", d.name))
            }
            Some(d) => {
                let conf = if typed.is_some() { conf } else { Confidence::Unparsed };
                found.push((d.name.clone(), raw, typed, conf));
            }
            None => warnings.push(format!("ignoring unknown feature `{key}`")),
        }
    };
    if let Some(Value::Object(obj)) = json_span(text, '{', '}') {
        for (key, v) in &obj {
            let typed = lookup(schema, key).and_then(|d| typed_from_json(v, d));
            push(key, raw_json(v), typed, Confidence::ParsedJson, &mut warnings);
        }
    } else {
        let mut any = false;
        for line in text.lines() {
            let Some((key, value)) = split_line(line) else { continue };
            if normalize_feature_name(key).is_none() {
                continue;
            }
            any = true;
            let typed = lookup(schema, key).and_then(|d| typed_from_text(value, d));
            push(key, value.to_owned(), typed, Confidence::ParsedLine, &mut warnings);
        }
        if !any {
            return Err(PromptError::Unparseable);
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut values = Vec::with_capacity(found.len());
    for d in schema {
        if let Some((name, raw, typed, confidence)) = found.iter().find(|f| f.0 == d.name).cloned() {
            let (value, units) = match typed {
                Some((v, u)) => (Some(v), u),
                None => (None, None),
            };
            values.push(ParsedFeatureValue {
                name,
                raw,
                value,
                units,
                confidence,
            });
        }
    }
    Ok(ParsedValues { values, warnings })
}

/// JSON object of the parsed values; unparsed entries become `null`.
pub fn render_values_json(values: &[ParsedFeatureValue]) -> String {
    let mut obj = Map::new();
    for v in values {
        let json = match &v.value {
            None => Value::Null,
            Some(FeatureValue::Boolean(b)) => Value::Bool(*b),
            Some(FeatureValue::Number(x)) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Some(FeatureValue::Category(s)) => Value::String(s.clone()),
        };
        obj.insert(v.name.clone(), json);
    }
    Value::Object(obj).to_string()
}
