use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::KstoreError;
use crate::dataset::Lesion;
use crate::ingest::{RawDocument, SourceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    /// Window length in whitespace tokens.
    pub size: usize,
    /// Tokens shared by consecutive windows.
    pub overlap: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig { size: 256, overlap: 32 }
    }
}

impl ChunkConfig {
    pub fn validate(&self) -> Result<(), KstoreError> {
        if self.size == 0 || self.overlap >= self.size {
            return Err(KstoreError::InvalidChunking {
                size: self.size,
                overlap: self.overlap,
            });
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.size - self.overlap
    }

    /// Window start offsets for a document of `n_tokens` tokens.
    ///
    /// A document that fits in one window yields a single window. Longer
    /// documents get a window at every multiple of the stride below
    /// `n_tokens`, so the final window may be shorter than `size`.
    pub fn window_starts(&self, n_tokens: usize) -> Vec<usize> {
        if n_tokens == 0 {
            return Vec::new();
        }
        if n_tokens <= self.size {
            return vec![0];
        }
        (0..n_tokens).step_by(self.stride()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeChunk {
    pub chunk_id: String,
    pub lesion: Lesion,
    pub source: SourceKind,
    /// Locator of the originating document.
    pub document: String,
    pub text: String,
    /// Half-open token range `[start, end)` within the document.
    pub token_span: (usize, usize),
}

fn document_key(doc: &RawDocument) -> String {
    let mut h = Sha256::new();
    h.update(doc.source.as_str().as_bytes());
    h.update(b"\n");
    h.update(doc.locator.as_bytes());
    hex::encode(&h.finalize()[..6])
}

/// Splits a document into overlapping whitespace-token windows.
///
/// Chunk ids have the form `<lesion>/<doc-key>/<start>` with a zero-padded
/// start so lexical order follows document position.
pub fn chunk_document(
    doc: &RawDocument,
    lesion: Lesion,
    config: ChunkConfig,
) -> Result<Vec<KnowledgeChunk>, KstoreError> {
    config.validate()?;
    let tokens: Vec<&str> = doc.body.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(KstoreError::EmptyDocument(doc.locator.clone()));
    }
    let key = document_key(doc);
    Ok(config
        .window_starts(tokens.len())
        .into_iter()
        .map(|start| {
            let end = (start + config.size).min(tokens.len());
            KnowledgeChunk {
                chunk_id: format!("{}/{key}/{start:06}", lesion.key()),
                lesion,
                source: doc.source,
                document: doc.locator.clone(),
                text: tokens[start..end].join(" "),
                token_span: (start, end),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(n: usize) -> RawDocument {
        RawDocument {
            source: SourceKind::Fixture,
            term: "atelectasis".into(),
            title: "t".into(),
            locator: "fixture:atelectasis/t.txt".into(),
            body: (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "),
            retrieved_at: None,
        }
    }

    fn cfg(size: usize, overlap: usize) -> ChunkConfig {
        ChunkConfig { size, overlap }
    }

    /// Windows by direct enumeration: every token index that is a multiple of
    /// the stride opens a window, unless the whole document fits in one.
    fn enumerate_starts(n: usize, size: usize, overlap: usize) -> Vec<usize> {
        let stride = size - overlap;
        let mut starts = Vec::new();
        for i in 0..n {
            if i % stride == 0 {
                starts.push(i);
            }
        }
        if n <= size {
            starts.truncate(1);
        }
        starts
    }

    #[test]
    fn ten_tokens_size_four_overlap_one() {
        let chunks = chunk_document(&doc(10), Lesion::Atelectasis, cfg(4, 1)).unwrap();
        let starts: Vec<usize> = chunks.iter().map(|c| c.token_span.0).collect();
        assert_eq!(starts, enumerate_starts(10, 4, 1));
        assert_eq!(starts, [0, 3, 6, 9]);
        assert_eq!(chunks[3].token_span, (9, 10));
        assert_eq!(chunks[3].text, "w9");
        assert_eq!(chunks[1].text, "w3 w4 w5 w6");
    }

    #[test]
    fn single_window_document() {
        let chunks = chunk_document(&doc(4), Lesion::Atelectasis, cfg(4, 1)).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_span, (0, 4));
    }

    #[test]
    fn rejects_bad_config_and_empty_docs() {
        assert!(matches!(
            chunk_document(&doc(10), Lesion::Atelectasis, cfg(4, 4)),
            Err(KstoreError::InvalidChunking { .. })
        ));
        assert!(matches!(
            chunk_document(&doc(0), Lesion::Atelectasis, cfg(4, 1)),
            Err(KstoreError::EmptyDocument(_))
        ));
    }

    proptest! {
        #[test]
        fn windows_cover_every_token(n in 1usize..300, size in 1usize..40, overlap_frac in 0.0f64..1.0) {
            let overlap = ((size as f64) * overlap_frac) as usize % size;
            let chunks = chunk_document(&doc(n), Lesion::Consolidation, cfg(size, overlap)).unwrap();
            let starts: Vec<usize> = chunks.iter().map(|c| c.token_span.0).collect();
            prop_assert_eq!(starts, enumerate_starts(n, size, overlap));
            let mut covered = vec![false; n];
            for c in &chunks {
                prop_assert!(c.token_span.1 <= n && c.token_span.0 < c.token_span.1);
                prop_assert!(c.token_span.1 - c.token_span.0 <= size);
                covered[c.token_span.0..c.token_span.1].iter_mut().for_each(|x| *x = true);
            }
            prop_assert!(covered.into_iter().all(|x| x));
            let mut ids: Vec<&str> = chunks.iter().map(|c| c.chunk_id.as_str()).collect();
            let sorted = ids.clone();
            ids.dedup();
            prop_assert_eq!(ids, sorted);
        }
    }
}
