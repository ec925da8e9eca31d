use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fetch_documents, DocumentSource, IngestError, RawDocument, Scope, SourceKind, SourceQuery};
use crate::dataset::Lesion;

/// A source plus scope; the search term is filled in per lesion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTemplate {
    pub source: SourceKind,
    pub scope: Scope,
}

#[derive(Default)]
pub struct SourceRegistry {
    sources: BTreeMap<SourceKind, Box<dyn DocumentSource>>,
}

impl SourceRegistry {
    pub fn new() -> Self {
        SourceRegistry::default()
    }

    pub fn register(&mut self, source: Box<dyn DocumentSource>) {
        self.sources.insert(source.kind(), source);
    }

    pub fn get(&self, kind: SourceKind) -> Option<&dyn DocumentSource> {
        self.sources.get(&kind).map(|s| s.as_ref())
    }
}

/// Documents per lesion, in (source template, rank) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub documents: BTreeMap<Lesion, Vec<RawDocument>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DocumentMeta {
    rank: usize,
    source: SourceKind,
    term: String,
    title: String,
    locator: String,
    retrieved_at: Option<u64>,
}

fn collect_lesion(
    lesion: Lesion,
    templates: &[SourceTemplate],
    registry: &SourceRegistry,
) -> Result<(Vec<RawDocument>, Vec<String>), IngestError> {
    let mut docs = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = BTreeSet::new();
    for template in templates {
        let source = registry
            .get(template.source)
            .ok_or(IngestError::UnconfiguredSource(template.source))?;
        let query = SourceQuery::new(template.source, lesion.display_name(), template.scope)?;
        let fetched = fetch_documents(source, &query)?;
        for skipped in fetched.skipped {
            warnings.push(format!("{lesion}/{}: skipped {skipped}", template.source));
        }
        if fetched.documents.is_empty() {
            warnings.push(format!("{lesion}: {} returned no documents", template.source));
        }
        for doc in fetched.documents {
            if seen.insert((doc.source, doc.locator.clone())) {
                docs.push(doc);
            }
        }
    }
    if docs.is_empty() {
        return Err(IngestError::EmptyLesion(lesion));
    }
    Ok((docs, warnings))
}

/// Fetches documents for every lesion from every configured source.
///
/// Lesions are fetched concurrently on at most `parallelism` threads; output
/// order is fixed by (lesion, template, rank) regardless of scheduling.
pub fn build_corpus(
    lesions: &[Lesion],
    templates: &[SourceTemplate],
    registry: &SourceRegistry,
    parallelism: usize,
) -> Result<Corpus, IngestError> {
    if templates.is_empty() {
        return Err(IngestError::NoSources);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| IngestError::Corpus(e.to_string()))?;
    let results: Vec<_> = pool.install(|| {
        lesions
            .par_iter()
            .map(|l| collect_lesion(*l, templates, registry).map(|r| (*l, r)))
            .collect()
    });
    let mut corpus = Corpus::default();
    for result in results {
        let (lesion, (docs, warnings)) = result?;
        for w in &warnings {
            log::warn!("{w}");
        }
        corpus.warnings.extend(warnings);
        corpus.documents.insert(lesion, docs);
    }
    Ok(corpus)
}

impl Corpus {
    pub fn total_documents(&self) -> usize {
        self.documents.values().map(Vec::len).sum()
    }

    /// Writes `<dir>/<lesion>/<rank>.txt` plus a `<rank>.json` metadata
    /// sidecar per document, replacing any previous lesion directories.
    pub fn save(&self, dir: &Path) -> Result<(), IngestError> {
        fs::create_dir_all(dir)?;
        for (lesion, docs) in &self.documents {
            let lesion_dir = dir.join(lesion.key());
            if lesion_dir.exists() {
                fs::remove_dir_all(&lesion_dir)?;
            }
            fs::create_dir_all(&lesion_dir)?;
            for (rank, doc) in docs.iter().enumerate() {
                let meta = DocumentMeta {
                    rank,
                    source: doc.source,
                    term: doc.term.clone(),
                    title: doc.title.clone(),
                    locator: doc.locator.clone(),
                    retrieved_at: doc.retrieved_at,
                };
                fs::write(lesion_dir.join(format!("{rank:03}.txt")), &doc.body)?;
                let mut json = serde_json::to_vec_pretty(&meta)?;
                json.push(b'\n');
                fs::write(lesion_dir.join(format!("{rank:03}.json")), json)?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Corpus, IngestError> {
        if !dir.is_dir() {
            return Err(IngestError::Corpus(format!("{} is not a directory", dir.display())));
        }
        let mut corpus = Corpus::default();
        for lesion in Lesion::ALL {
            let lesion_dir = dir.join(lesion.key());
            if !lesion_dir.is_dir() {
                continue;
            }
            let mut metas: Vec<DocumentMeta> = Vec::new();
            for entry in fs::read_dir(&lesion_dir)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) == Some("json") {
                    metas.push(serde_json::from_slice(&fs::read(&path)?)?);
                }
            }
            metas.sort_by_key(|m| m.rank);
            let mut docs = Vec::with_capacity(metas.len());
            for meta in metas {
                let body = fs::read_to_string(lesion_dir.join(format!("{:03}.txt", meta.rank)))?;
                docs.push(RawDocument {
                    source: meta.source,
                    term: meta.term,
                    title: meta.title,
                    locator: meta.locator,
                    body,
                    retrieved_at: meta.retrieved_at,
                });
            }
            corpus.documents.insert(lesion, docs);
        }
        Ok(corpus)
    }
}
