use std::fs;
use std::path::{Path, PathBuf};

use super::{strip_html, DocumentSource, Fetched, IngestError, RawDocument, SourceKind, SourceQuery};

/// Offline corpus laid out as `<root>/<term_slug>/<file>`.
///
/// `.txt` and `.md` files are read verbatim, `.html`/`.htm` files are
/// stripped to text; anything else (e.g. metadata sidecars) is ignored. Files
/// are returned in file-name order.
#[derive(Debug, Clone)]
pub struct FixtureSource {
    root: PathBuf,
}

impl FixtureSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FixtureSource { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

pub(crate) fn term_slug(term: &str) -> String {
    let mut slug = String::new();
    for word in term
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        if !slug.is_empty() {
            slug.push('_');
        }
        slug.push_str(&word.to_ascii_lowercase());
    }
    slug
}

impl DocumentSource for FixtureSource {
    fn kind(&self) -> SourceKind {
        SourceKind::Fixture
    }

    fn fetch(&self, query: &SourceQuery) -> Result<Fetched, IngestError> {
        let slug = term_slug(&query.term);
        let dir = self.root.join(&slug);
        let mut fetched = Fetched::default();
        if !dir.is_dir() {
            return Ok(fetched);
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for path in files {
            let ext = path
                .extension()
                .and_then(|e| e.to_str())
                .unwrap_or("")
                .to_ascii_lowercase();
            let is_html = matches!(ext.as_str(), "html" | "htm");
            if !is_html && !matches!(ext.as_str(), "txt" | "md") {
                continue;
            }
            let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let raw = match fs::read_to_string(&path) {
                Ok(raw) => raw,
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    fetched.skipped.push(format!("{file_name}: {e}"));
                    continue;
                }
            };
            let body = if is_html { strip_html(&raw) } else { raw };
            if body.trim().is_empty() {
                log::warn!("skipping {}: empty body", path.display());
                fetched.skipped.push(format!("{file_name}: empty body"));
                continue;
            }
            let title = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            fetched.documents.push(RawDocument {
                source: SourceKind::Fixture,
                term: query.term.clone(),
                title,
                locator: format!("fixture:{slug}/{file_name}"),
                body,
                retrieved_at: None,
            });
        }
        Ok(fetched)
    }
}
