use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::dataset::{normalize_feature_name, FeatureDescriptor, Provenance};
use crate::prompts::FeatureSpec;

/// One reviewed change to the discovered feature list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum CurationEntry {
    Add { descriptor: FeatureSpec },
    Remove { name: String },
    Rename { from: String, to: String },
}

/// Reads a JSON list of curation entries; an empty file means no changes.
pub fn load_curation(path: &Path) -> Result<Vec<CurationEntry>, AugmentError> {
    let text = fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    Ok(serde_json::from_str(&text)?)
}

/// Applies entries in file order. Renamed features keep their position;
/// additions are appended and tagged expert-added.
pub fn apply_expert_curation(
    discovered: &[FeatureDescriptor],
    entries: &[CurationEntry],
) -> Result<Vec<FeatureDescriptor>, AugmentError> {
    let mut out = discovered.to_vec();
    let fail = |index: usize, message: String| AugmentError::Curation { index, message };
    let normalize = |index: usize, raw: &str| {
        normalize_feature_name(raw).ok_or_else(|| fail(index, format!("invalid feature name `{raw}`")))
    };
    for (i, entry) in entries.iter().enumerate() {
        match entry {
            CurationEntry::Add { descriptor } => {
                let name = normalize(i, &descriptor.name)?;
                if out.iter().any(|d| d.name == name) {
                    return Err(fail(i, format!("`{name}` already exists")));
                }
                out.push(FeatureDescriptor {
                    name,
                    kind: descriptor.kind,
                    units: descriptor.units.clone(),
                    provenance: Provenance::ExpertAdded,
                });
            }
            CurationEntry::Remove { name } => {
                let name = normalize(i, name)?;
                let at = out
                    .iter()
                    .position(|d| d.name == name)
                    .ok_or_else(|| fail(i, format!("cannot remove unknown feature `{name}`")))?;
                out.remove(at);
            }
            CurationEntry::Rename { from, to } => {
                let from = normalize(i, from)?;
                let to = normalize(i, to)?;
                let at = out
                    .iter()
                    .position(|d| d.name == from)
                    .ok_or_else(|| fail(i, format!("cannot rename unknown feature `{from}`")))?;
                if from != to && out.iter().any(|d| d.name == to) {
                    return Err(fail(i, format!("rename target `{to}` already exists")));
                }
                out[at].name = to;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureKind;

    fn discovered(n: usize) -> Vec<FeatureDescriptor> {
        (0..n)
            .map(|i| {
                FeatureDescriptor::new(format!("f{i}"), FeatureKind::Boolean, None, Provenance::LlmDiscovered).unwrap()
            })
            .collect()
    }

    fn add(name: &str) -> CurationEntry {
        CurationEntry::Add {
            descriptor: FeatureSpec {
                name: name.into(),
                kind: FeatureKind::Numeric,
                units: None,
            },
        }
    }

    #[test]
    fn thirteen_additions_to_seventy_eight() {
        let entries: Vec<CurationEntry> = (0..13).map(|i| add(&format!("expert_{i}"))).collect();
        let out = apply_expert_curation(&discovered(78), &entries).unwrap();
        assert_eq!(out.len(), 91);
        assert!(out[78..].iter().all(|d| d.provenance == Provenance::ExpertAdded));
    }

    #[test]
    fn empty_curation_is_identity() {
        assert_eq!(apply_expert_curation(&discovered(4), &[]).unwrap(), discovered(4));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, "").unwrap();
        assert!(load_curation(&path).unwrap().is_empty());
    }

    #[test]
    fn remove_rename_and_errors() {
        let entries = vec![
            CurationEntry::Remove { name: "f0".into() },
            CurationEntry::Rename {
                from: "f2".into(),
                to: "Fever Onset".into(),
            },
        ];
        let out = apply_expert_curation(&discovered(3), &entries).unwrap();
        assert_eq!(
            out.iter().map(|d| d.name.as_str()).collect::<Vec<_>>(),
            ["f1", "fever_onset"]
        );
        let colliding = [CurationEntry::Rename {
            from: "f1".into(),
            to: "f2".into(),
        }];
        assert!(matches!(
            apply_expert_curation(&discovered(3), &colliding),
            Err(AugmentError::Curation { index: 0, .. })
        ));
        let unknown = [CurationEntry::Remove { name: "zzz".into() }];
        assert!(apply_expert_curation(&discovered(3), &unknown).is_err());
    }

    #[test]
    fn parses_tagged_json() {
        let json = r#"[
            {"action": "add", "descriptor": {"name": "crp", "kind": "numeric", "units": "mg/L"}},
            {"action": "remove", "name": "f1"},
            {"action": "rename", "from": "f0", "to": "fever"}
        ]"#;
        let entries: Vec<CurationEntry> = serde_json::from_str(json).unwrap();
        let out = apply_expert_curation(&discovered(2), &entries).unwrap();
        assert_eq!(
            out.iter().map(|d| d.name.as_str()).collect::<Vec<_>>(),
            ["fever", "crp"]
        );
        assert_eq!(out[1].units.as_deref(), Some("mg/L"));
    }
}
