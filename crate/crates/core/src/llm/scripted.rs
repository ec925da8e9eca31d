use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CacheStatus, CompletionBackend, GenerationConfig, LlmError};

type Responder = Box<dyn Fn(&str) -> Option<String> + Send + Sync>;

/// Substring rule. With `after` set, only the prompt text following the
/// first occurrence of that marker is searched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub contains: String,
    #[serde(default)]
    pub after: Option<String>,
    pub response: String,
}

impl ScriptRule {
    fn matches(&self, prompt: &str) -> bool {
        let haystack = match &self.after {
            Some(marker) => match prompt.find(marker.as_str()) {
                Some(i) => &prompt[i + marker.len()..],
                None => return false,
            },
            None => prompt,
        };
        haystack.contains(&self.contains)
    }
}

/// On-disk mock script.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub by_fingerprint: BTreeMap<String, String>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub default: Option<String>,
}

/// Deterministic mock. Lookup order: exact fingerprint, closure responder,
/// first matching rule, default.
pub struct ScriptedBackend {
    name: String,
    by_fingerprint: BTreeMap<String, String>,
    responder: Option<Responder>,
    rules: Vec<ScriptRule>,
    default: Option<String>,
}

impl ScriptedBackend {
    pub fn new(name: &str) -> Self {
        ScriptedBackend {
            name: name.to_owned(),
            by_fingerprint: BTreeMap::new(),
            responder: None,
            rules: Vec::new(),
            default: None,
        }
    }

    pub fn from_script(script: ScriptFile) -> Self {
        ScriptedBackend {
            name: script.name.unwrap_or_else(|| "script".into()),
            by_fingerprint: script.by_fingerprint,
            responder: None,
            rules: script.rules,
            default: script.default,
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let script: ScriptFile = serde_json::from_slice(&fs::read(path)?)?;
        Ok(Self::from_script(script))
    }

    pub fn with_fingerprint(mut self, fingerprint: &str, response: &str) -> Self {
        self.by_fingerprint.insert(fingerprint.to_owned(), response.to_owned());
        self
    }

    pub fn with_rule(mut self, contains: &str, response: &str) -> Self {
        self.rules.push(ScriptRule {
            contains: contains.to_owned(),
            after: None,
            response: response.to_owned(),
        });
        self
    }

    pub fn with_rule_after(mut self, after: &str, contains: &str, response: &str) -> Self {
        self.rules.push(ScriptRule {
            contains: contains.to_owned(),
            after: Some(after.to_owned()),
            response: response.to_owned(),
        });
        self
    }

    pub fn with_default(mut self, response: &str) -> Self {
        self.default = Some(response.to_owned());
        self
    }

    pub fn with_responder(mut self, f: impl Fn(&str) -> Option<String> + Send + Sync + 'static) -> Self {
        self.responder = Some(Box::new(f));
        self
    }
}

impl CompletionBackend for ScriptedBackend {
    fn descriptor(&self) -> String {
        format!("scripted:{}", self.name)
    }

    fn status(&self) -> CacheStatus {
        CacheStatus::Mocked
    }

    fn generate(&self, prompt: &str, _config: &GenerationConfig, fingerprint: &str) -> Result<String, LlmError> {
        if let Some(text) = self.by_fingerprint.get(fingerprint) {
            return Ok(text.clone());
        }
        if let Some(text) = self.responder.as_ref().and_then(|f| f(prompt)) {
            return Ok(text);
        }
        if let Some(rule) = self.rules.iter().find(|r| r.matches(prompt)) {
            return Ok(rule.response.clone());
        }
        self.default.clone().ok_or_else(|| LlmError::NoScriptedResponse {
            fingerprint: fingerprint.to_owned(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_order() {
        let c = GenerationConfig::default();
        let b = ScriptedBackend::new("t")
            .with_fingerprint("ff", "exact")
            .with_rule_after("REPORT:", "effusion", "after-marker")
            .with_rule("effusion", "anywhere")
            .with_default("fallback");
        assert_eq!(b.generate("x", &c, "ff").unwrap(), "exact");
        assert_eq!(b.generate("effusion REPORT: clear", &c, "0").unwrap(), "anywhere");
        assert_eq!(b.generate("REPORT: small effusion", &c, "0").unwrap(), "after-marker");
        assert_eq!(b.generate("nothing", &c, "0").unwrap(), "fallback");
    }

    #[test]
    fn loads_script_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        fs::write(
            &path,
            r#"{"name": "golden", "rules": [{"contains": "cough", "response": "yes"}]}"#,
        )
        .unwrap();
        let b = ScriptedBackend::load(&path).unwrap();
        assert_eq!(b.descriptor(), "scripted:golden");
        let c = GenerationConfig::default();
        assert_eq!(b.generate("cough?", &c, "0").unwrap(), "yes");
        assert!(b.generate("other", &c, "0").is_err());
    }
}
