//! Prompt rendering and completion parsing.
//!
//! Wording lives in plain-text templates (`templates/` in this crate, or an
//! override directory); only the seven expert questions are fixed in code.

mod parse;
mod template;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{FeatureDescriptor, FeatureKind, Lesion, PatientCase, Vital};
use crate::kstore::KnowledgeChunk;

pub use parse::{
    parse_feature_list, parse_feature_values, render_feature_list_json, render_values_json, Confidence,
    ParsedFeatureValue, ParsedValues,
};
pub use template::Template;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template `{template}` has no value for `{{{name}}}`")]
    MissingVariable { template: String, name: String },
    #[error("template `{template}` uses unknown placeholder `{{{name}}}`")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template `{template}` lacks required placeholder `{{{name}}}`")]
    MissingPlaceholder { template: String, name: String },
    #[error("no target features requested")]
    EmptyTargets,
    #[error("`{0}` is not one of the six vitals")]
    NotAVital(String),
    #[error("patient {0} has an empty report")]
    EmptyReport(String),
    #[error("feature list is empty")]
    NoFeatures,
    #[error("at least one discovery exemplar is required")]
    NoShots,
    #[error("completion contains no parseable feature")]
    NothingParsed,
    #[error("completion contains no parseable value")]
    Unparseable,
    #[error("value schema is empty")]
    EmptySchema,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionCategory {
    GeneralKnowledge,
    Observational,
    Physical,
    Laboratory,
    PatientCharacteristics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpertQuestion {
    pub id: u8,
    pub category: QuestionCategory,
    /// Question text with a literal `{lesion}` placeholder.
    pub template: &'static str,
}

impl ExpertQuestion {
    pub fn render(&self, lesion: Lesion) -> String {
        self.template.replace("{lesion}", lesion.display_name())
    }
}

pub const EXPERT_QUESTIONS: [ExpertQuestion; 7] = [
    ExpertQuestion {
        id: 1,
        category: QuestionCategory::GeneralKnowledge,
        template: "What are the symptoms associated with {lesion}?",
    },
    ExpertQuestion {
        id: 2,
        category: QuestionCategory::GeneralKnowledge,
        template: "What can cause {lesion}?",
    },
    ExpertQuestion {
        id: 3,
        category: QuestionCategory::Observational,
        template: "What are the patient\u{2019}s symptoms that are relevant for {lesion}?",
    },
    ExpertQuestion {
        id: 4,
        category: QuestionCategory::Physical,
        template: "What are the relevant clinical signs for the etiological diagnosis of {lesion}?",
    },
    ExpertQuestion {
        id: 5,
        category: QuestionCategory::Physical,
        template: "What are the relevant clinical characteristics for the etiological diagnosis of {lesion}?",
    },
    ExpertQuestion {
        id: 6,
        category: QuestionCategory::Laboratory,
        template: "What are the relevant laboratory data for the etiological diagnosis of {lesion}?",
    },
    ExpertQuestion {
        id: 7,
        category: QuestionCategory::PatientCharacteristics,
        template: "What is the patient\u{2019}s personal, relevant history for the etiological diagnosis of {lesion}?",
    },
];

pub fn question(id: u8) -> Option<&'static ExpertQuestion> {
    EXPERT_QUESTIONS.iter().find(|q| q.id == id)
}

/// One answered expert question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AckEntry {
    pub lesion: Lesion,
    pub question_id: u8,
    pub question: String,
    /// Chunk ids of the retrieved evidence, best first.
    pub evidence: Vec<String>,
    pub answer: String,
    pub fingerprint: String,
}

/// A discovery exemplar: clinical text and the features it suggests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    pub features: Vec<FeatureSpec>,
}

/// Descriptor shape used in exemplars and model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub units: Option<String>,
}

pub fn load_exemplars(path: &Path) -> Result<Vec<Exemplar>, PromptError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn builtin_exemplars() -> Vec<Exemplar> {
    serde_json::from_str(include_str!("../../templates/discovery_shots.json"))
        .expect("bundled exemplars are valid JSON")
}

pub const NO_CONTEXT: &str = "(no retrieved context)";

/// The prompt templates, each checked for its exact placeholder set.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    expert_question: Template,
    existing_values: Template,
    value_generation: Template,
    ack_section: Template,
    discovery: Template,
    discovery_shot: Template,
}

const TEMPLATE_FILES: [(&str, &str, &[&str]); 6] = [
    (
        "expert_question.txt",
        include_str!("../../templates/expert_question.txt"),
        &["question", "evidence"],
    ),
    (
        "existing_values.txt",
        include_str!("../../templates/existing_values.txt"),
        &["report", "age", "gender", "targets", "keys"],
    ),
    (
        "value_generation.txt",
        include_str!("../../templates/value_generation.txt"),
        &["ack_section", "features", "evidence", "report", "age", "gender"],
    ),
    (
        "ack_section.txt",
        include_str!("../../templates/ack_section.txt"),
        &["ack"],
    ),
    (
        "discovery.txt",
        include_str!("../../templates/discovery.txt"),
        &["shots", "ack", "existing"],
    ),
    (
        "discovery_shot.txt",
        include_str!("../../templates/discovery_shot.txt"),
        &["index", "text", "features"],
    ),
];

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::build(|_| Ok(None)).expect("bundled templates are consistent")
    }

    /// Loads templates from `dir`; files absent there fall back to the
    /// bundled versions.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        Self::build(|file| {
            let path = dir.join(file);
            if path.is_file() {
                Ok(Some(fs::read_to_string(path)?))
            } else {
                Ok(None)
            }
        })
    }

    fn build(mut source: impl FnMut(&str) -> Result<Option<String>, PromptError>) -> Result<Self, PromptError> {
        let mut loaded = Vec::with_capacity(TEMPLATE_FILES.len());
        for (file, bundled, placeholders) in TEMPLATE_FILES {
            let text = source(file)?.unwrap_or_else(|| bundled.to_owned());
            let t = Template::parse(file, &text);
            t.expect_placeholders(placeholders)?;
            loaded.push(t);
        }
        let mut it = loaded.into_iter();
        let mut next = || it.next().expect("six templates");
        Ok(TemplateSet {
            expert_question: next(),
            existing_values: next(),
            value_generation: next(),
            ack_section: next(),
            discovery: next(),
            discovery_shot: next(),
        })
    }

    /// Hash over all template texts, recorded in run manifests.
    pub fn version(&self) -> String {
        let mut h = Sha256::new();
        for t in [
            &self.expert_question,
            &self.existing_values,
            &self.value_generation,
            &self.ack_section,
            &self.discovery,
            &self.discovery_shot,
        ] {
            h.update(t.name().as_bytes());
            h.update([0]);
            h.update(t.render_source().as_bytes());
            h.update([0]);
        }
        hex::encode(&h.finalize()[..8])
    }

    /// The seven questions for `lesion`, ordered by id.
    pub fn render_expert_questions(&self, lesion: Lesion) -> Vec<String> {
        EXPERT_QUESTIONS.iter().map(|q| q.render(lesion)).collect()
    }

    pub fn render_expert_prompt(&self, question: &str, evidence: &[KnowledgeChunk]) -> Result<String, PromptError> {
        self.expert_question
            .render(&[("question", question), ("evidence", &render_evidence(evidence))])
    }

    /// Prompt asking for the given vitals from report and demographics only.
    pub fn render_existing_value_prompt(&self, case: &PatientCase, targets: &[&str]) -> Result<String, PromptError> {
        if targets.is_empty() {
            return Err(PromptError::EmptyTargets);
        }
        if case.report.trim().is_empty() {
            return Err(PromptError::EmptyReport(case.id.clone()));
        }
        let mut vitals = Vec::with_capacity(targets.len());
        for t in targets {
            vitals.push(Vital::from_name(t).ok_or_else(|| PromptError::NotAVital((*t).to_owned()))?);
        }
        let mut lines = String::new();
        for v in &vitals {
            let _ = writeln!(lines, "- {}: {}", v.name(), v.description());
        }
        let keys = vitals
            .iter()
            .map(|v| format!("\"{}\"", v.name()))
            .collect::<Vec<_>>()
            .join(", ");
        self.existing_values.render(&[
            ("report", case.report.trim()),
            ("age", &render_age(case.age)),
            ("gender", case.gender.as_str()),
            ("targets", lines.trim_end()),
            ("keys", &keys),
        ])
    }

    /// Four-source prompt: expert knowledge, feature list, retrieved
    /// evidence, patient. With `ablation` the knowledge block is dropped and
    /// nothing else changes.
    pub fn render_value_generation_prompt(
        &self,
        ack: &[AckEntry],
        features: &[FeatureDescriptor],
        evidence: &[KnowledgeChunk],
        case: &PatientCase,
        ablation: bool,
    ) -> Result<String, PromptError> {
        if features.is_empty() {
            return Err(PromptError::NoFeatures);
        }
        let ack_section = if ablation {
            String::new()
        } else {
            self.ack_section.render(&[("ack", &render_ack(ack))])?
        };
        self.value_generation.render(&[
            ("ack_section", &ack_section),
            ("features", &render_feature_bullets(features)),
            ("evidence", &render_evidence(evidence)),
            ("report", case.report.trim()),
            ("age", &render_age(case.age)),
            ("gender", case.gender.as_str()),
        ])
    }

    /// The exact text the ablation variant removes from a value prompt.
    pub fn render_ack_block(&self, ack: &[AckEntry]) -> Result<String, PromptError> {
        self.ack_section.render(&[("ack", &render_ack(ack))])
    }

    /// Few-shot discovery prompt; exemplars precede the knowledge block.
    pub fn render_feature_discovery_prompt(
        &self,
        ack: &[AckEntry],
        shots: &[Exemplar],
        existing: &[FeatureDescriptor],
    ) -> Result<String, PromptError> {
        if shots.is_empty() {
            return Err(PromptError::NoShots);
        }
        let mut rendered = String::new();
        for (i, shot) in shots.iter().enumerate() {
            let features = serde_json::to_string(&shot.features)?;
            rendered.push_str(&self.discovery_shot.render(&[
                ("index", &(i + 1).to_string()),
                ("text", shot.text.trim()),
                ("features", &features),
            ])?);
        }
        let existing = existing.iter().map(|d| d.name.as_str()).collect::<Vec<_>>().join(", ");
        self.discovery
            .render(&[("shots", &rendered), ("ack", &render_ack(ack)), ("existing", &existing)])
    }
}

impl Template {
    fn render_source(&self) -> String {
        let names: Vec<&str> = self.placeholders().into_iter().collect();
        let marked: Vec<(&str, String)> = names.iter().map(|n| (*n, format!("{{{n}}}"))).collect();
        let vars: Vec<(&str, &str)> = marked.iter().map(|(n, v)| (*n, v.as_str())).collect();
        self.render(&vars).expect("all placeholders bound")
    }
}

fn render_age(age: Option<u32>) -> String {
    age.map_or_else(|| "unknown".to_owned(), |a| format!("{a} years"))
}

/// `[chunk_id] text` per line, or the no-context marker.
pub fn render_evidence(evidence: &[KnowledgeChunk]) -> String {
    if evidence.is_empty() {
        return NO_CONTEXT.to_owned();
    }
    evidence
        .iter()
        .map(|c| format!("[{}] {}", c.chunk_id, c.text.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_ack(ack: &[AckEntry]) -> String {
    if ack.is_empty() {
        return "(none)".to_owned();
    }
    ack.iter()
        .map(|e| {
            format!(
                "[{}] Q{}: {}\n{}",
                e.lesion.key(),
                e.question_id,
                e.question,
                e.answer.trim()
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// `- name (kind[, units])`, the same grammar the bullet parser accepts.
pub fn render_feature_bullets(features: &[FeatureDescriptor]) -> String {
    features
        .iter()
        .map(|f| match &f.units {
            Some(u) => format!("- {} ({}, {u})", f.name, f.kind.as_str()),
            None => format!("- {} ({})", f.name, f.kind.as_str()),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Gender, Provenance};
    use crate::ingest::SourceKind;

    fn case() -> PatientCase {
        let mut c = PatientCase::new("p1");
        c.age = Some(64);
        c.gender = Gender::Female;
        c.temperature = Some(101.3);
        c.heartrate = Some(112.0);
        c.resprate = Some(24.0);
        c.o2sat = Some(91.0);
        c.sbp = Some(138.0);
        c.dbp = Some(86.0);
        c.report = "Right lower lobe opacity with small effusion.".into();
        c
    }

    fn chunk(id: &str, text: &str) -> KnowledgeChunk {
        KnowledgeChunk {
            chunk_id: id.into(),
            lesion: Lesion::Consolidation,
            source: SourceKind::Fixture,
            document: "fixture:x".into(),
            text: text.into(),
            token_span: (0, 1),
        }
    }

    fn ack() -> Vec<AckEntry> {
        (1..=7)
            .map(|q| AckEntry {
                lesion: Lesion::Consolidation,
                question_id: q,
                question: question(q).unwrap().render(Lesion::Consolidation),
                evidence: vec!["c1".into()],
                answer: format!("answer {q}"),
                fingerprint: "00".into(),
            })
            .collect()
    }

    fn features() -> Vec<FeatureDescriptor> {
        vec![
            FeatureDescriptor::new("dyspnea", FeatureKind::Boolean, None, Provenance::LlmDiscovered).unwrap(),
            FeatureDescriptor::new("crp", FeatureKind::Numeric, Some("mg/L"), Provenance::LlmDiscovered).unwrap(),
        ]
    }

    #[test]
    fn seven_questions_partitioned() {
        let ids: Vec<u8> = EXPERT_QUESTIONS.iter().map(|q| q.id).collect();
        assert_eq!(ids, [1, 2, 3, 4, 5, 6, 7]);
        let count = |c| EXPERT_QUESTIONS.iter().filter(|q| q.category == c).count();
        assert_eq!(count(QuestionCategory::GeneralKnowledge), 2);
        assert_eq!(count(QuestionCategory::Observational), 1);
        assert_eq!(count(QuestionCategory::Physical), 2);
        assert_eq!(count(QuestionCategory::Laboratory), 1);
        assert_eq!(count(QuestionCategory::PatientCharacteristics), 1);
        assert!(EXPERT_QUESTIONS.iter().all(|q| q.template.contains("{lesion}")));
    }

    #[test]
    fn expert_questions_substitute_lesion() {
        let t = TemplateSet::builtin();
        let qs = t.render_expert_questions(Lesion::Atelectasis);
        assert_eq!(qs.len(), 7);
        assert_eq!(qs[0], "What are the symptoms associated with atelectasis?");
        let p = t.render_expert_prompt(&qs[0], &[chunk("c1", "collapse")]).unwrap();
        assert!(p.contains("What are the symptoms associated with atelectasis?"));
        assert!(p.contains("[c1] collapse"));
    }

    #[test]
    fn lesions_differ_only_at_substitution_sites() {
        let t = TemplateSet::builtin();
        let a = t.render_expert_questions(Lesion::Atelectasis);
        let b = t.render_expert_questions(Lesion::EnlargedCardiacSilhouette);
        for (x, y) in a.iter().zip(&b) {
            assert_ne!(x, y);
            assert_eq!(
                x.replace(Lesion::Atelectasis.display_name(), "{lesion}"),
                y.replace(Lesion::EnlargedCardiacSilhouette.display_name(), "{lesion}")
            );
        }
    }

    #[test]
    fn existing_value_prompt_names_units_and_hides_truth() {
        let t = TemplateSet::builtin();
        let c = case();
        let all: Vec<&str> = Vital::ALL.iter().map(|v| v.name()).collect();
        let p = t.render_existing_value_prompt(&c, &all).unwrap();
        assert!(p.contains("temperature in degrees Fahrenheit"));
        assert!(p.contains("mmHg") && p.contains("beats per minute") && p.contains("breaths per minute"));
        assert!(p.contains(&c.report) && p.contains("64 years") && p.contains("female"));
        for v in Vital::ALL {
            let stored = c.vital(v).unwrap();
            assert!(!p.contains(&stored.to_string()), "leaked {v:?}");
        }
        let one = t.render_existing_value_prompt(&c, &["o2sat"]).unwrap();
        assert!(one.contains("keys must be exactly: \"o2sat\"."));
        assert!(matches!(
            t.render_existing_value_prompt(&c, &[]),
            Err(PromptError::EmptyTargets)
        ));
        assert!(matches!(
            t.render_existing_value_prompt(&c, &["age"]),
            Err(PromptError::NotAVital(_))
        ));
    }

    #[test]
    fn ablation_removes_exactly_the_ack_block() {
        let t = TemplateSet::builtin();
        let ev = [chunk("c1", "lobar consolidation")];
        let full = t
            .render_value_generation_prompt(&ack(), &features(), &ev, &case(), false)
            .unwrap();
        let ablated = t
            .render_value_generation_prompt(&ack(), &features(), &ev, &case(), true)
            .unwrap();
        let block = t.render_ack_block(&ack()).unwrap();
        let at = full.find(&block).unwrap();
        assert_eq!(format!("{}{}", &full[..at], &full[at + block.len()..]), ablated);
        assert!(!ablated.contains("answer 1"));
        let order = ["answer 7", "- dyspnea (boolean)", "[c1] lobar", "Radiology report:"];
        let pos: Vec<usize> = order.iter().map(|s| full.find(s).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(full.contains("- crp (numeric, mg/L)"));
    }

    #[test]
    fn empty_evidence_gets_marker() {
        let t = TemplateSet::builtin();
        let p = t
            .render_value_generation_prompt(&ack(), &features(), &[], &case(), false)
            .unwrap();
        assert!(p.contains(NO_CONTEXT));
        assert_eq!(
            p,
            t.render_value_generation_prompt(&ack(), &features(), &[], &case(), false)
                .unwrap()
        );
        assert!(matches!(
            t.render_value_generation_prompt(&ack(), &[], &[], &case(), false),
            Err(PromptError::NoFeatures)
        ));
    }

    #[test]
    fn discovery_prompt_puts_shots_first() {
        let t = TemplateSet::builtin();
        let shots = builtin_exemplars();
        assert_eq!(shots.len(), 2);
        let p = t.render_feature_discovery_prompt(&ack(), &shots, &features()).unwrap();
        let ack_at = p.find("answer 1").unwrap();
        assert!(p.find("Example 1").unwrap() < ack_at);
        assert!(p.find("Example 2").unwrap() < ack_at);
        assert!(p.contains("\"pleural_fluid_ldh\""));
        assert_eq!(
            p,
            t.render_feature_discovery_prompt(&ack(), &shots, &features()).unwrap()
        );
        assert!(matches!(
            t.render_feature_discovery_prompt(&ack(), &[], &[]),
            Err(PromptError::NoShots)
        ));
    }

    #[test]
    fn override_directory_is_validated() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("expert_question.txt"), "Q: {question}\n{evidence}\n").unwrap();
        let t = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(
            t.render_expert_prompt("why?", &[]).unwrap(),
            format!("Q: why?\n{NO_CONTEXT}\n")
        );
        assert_ne!(t.version(), TemplateSet::builtin().version());
        fs::write(
            dir.path().join("expert_question.txt"),
            "Q: {question} {lesion}\n{evidence}",
        )
        .unwrap();
        assert!(matches!(
            TemplateSet::load_dir(dir.path()),
            Err(PromptError::UnknownPlaceholder { .. })
        ));
    }
}
