use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{chunk_document, ChunkConfig, Embedder, EmbedderDescriptor, KnowledgeChunk, KstoreError};
use crate::dataset::Lesion;
use crate::ingest::Corpus;

const FORMAT: &str = "dallm-vector-index";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: String,
    pub score: f64,
}

/// Accumulates embedded chunks; [`IndexBuilder::seal`] freezes them.
#[derive(Debug)]
pub struct IndexBuilder {
    descriptor: EmbedderDescriptor,
    entries: Vec<(KnowledgeChunk, Vec<f32>)>,
    ids: BTreeSet<String>,
}

impl IndexBuilder {
    pub fn new(descriptor: EmbedderDescriptor) -> Self {
        IndexBuilder {
            descriptor,
            entries: Vec::new(),
            ids: BTreeSet::new(),
        }
    }

    pub fn add(&mut self, chunk: KnowledgeChunk, vector: Vec<f32>) -> Result<(), KstoreError> {
        if vector.len() != self.descriptor.dimension {
            return Err(KstoreError::DimensionMismatch {
                expected: self.descriptor.dimension,
                got: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(KstoreError::NonFinite(chunk.chunk_id));
        }
        if chunk.text.trim().is_empty() {
            return Err(KstoreError::EmptyText);
        }
        if !self.ids.insert(chunk.chunk_id.clone()) {
            return Err(KstoreError::DuplicateChunk(chunk.chunk_id));
        }
        self.entries.push((chunk, vector));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seal(mut self) -> VectorIndex {
        self.entries.sort_by(|a, b| a.0.chunk_id.cmp(&b.0.chunk_id));
        let (chunks, vectors): (Vec<_>, Vec<_>) = self.entries.into_iter().unzip();
        VectorIndex::from_parts(self.descriptor, chunks, vectors)
    }
}

/// Sealed, immutable exact-cosine index.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    descriptor: EmbedderDescriptor,
    chunks: Vec<KnowledgeChunk>,
    vectors: Vec<Vec<f32>>,
    norms: Vec<f64>,
    partitions: BTreeMap<Lesion, Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    embedder: EmbedderDescriptor,
    dimension: usize,
    chunks: Vec<KnowledgeChunk>,
    /// One base64 string of little-endian f32s per chunk.
    vectors: Vec<String>,
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt()
}

fn rank(a: &SearchHit, b: &SearchHit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id))
}

impl VectorIndex {
    fn from_parts(descriptor: EmbedderDescriptor, chunks: Vec<KnowledgeChunk>, vectors: Vec<Vec<f32>>) -> Self {
        let mut partitions: BTreeMap<Lesion, Vec<usize>> = BTreeMap::new();
        for (i, c) in chunks.iter().enumerate() {
            partitions.entry(c.lesion).or_default().push(i);
        }
        let norms = vectors.iter().map(|v| norm(v)).collect();
        VectorIndex {
            descriptor,
            chunks,
            vectors,
            norms,
            partitions,
        }
    }

    pub fn descriptor(&self) -> &EmbedderDescriptor {
        &self.descriptor
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[KnowledgeChunk] {
        &self.chunks
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i]
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&KnowledgeChunk> {
        self.chunks
            .binary_search_by(|c| c.chunk_id.as_str().cmp(chunk_id))
            .ok()
            .map(|i| &self.chunks[i])
    }

    pub fn lesions(&self) -> impl Iterator<Item = Lesion> + '_ {
        self.partitions.keys().copied()
    }

    /// Embeds `query` and returns the top `k` chunks, optionally restricted
    /// to one lesion partition.
    pub fn search(
        &self,
        embedder: &dyn Embedder,
        query: &str,
        k: usize,
        lesion: Option<Lesion>,
    ) -> Result<Vec<SearchHit>, KstoreError> {
        let lesions: Vec<Lesion> = lesion.into_iter().collect();
        self.search_in(embedder, query, k, &lesions)
    }

    /// Like [`VectorIndex::search`] over the union of several partitions; an
    /// empty slice means the whole index.
    pub fn search_in(
        &self,
        embedder: &dyn Embedder,
        query: &str,
        k: usize,
        lesions: &[Lesion],
    ) -> Result<Vec<SearchHit>, KstoreError> {
        if embedder.descriptor() != self.descriptor {
            return Err(KstoreError::EmbedderMismatch {
                index: self.descriptor.clone(),
                embedder: embedder.descriptor(),
            });
        }
        self.check_query(k, lesions)?;
        let q = embedder.embed(query)?;
        self.search_vector(&q, k, lesions)
    }

    fn check_query(&self, k: usize, lesions: &[Lesion]) -> Result<(), KstoreError> {
        if self.is_empty() {
            return Err(KstoreError::EmptyIndex);
        }
        if k == 0 {
            return Err(KstoreError::InvalidK);
        }
        if let Some(l) = lesions.iter().find(|l| !self.partitions.contains_key(l)) {
            return Err(KstoreError::UnknownPartition(*l));
        }
        Ok(())
    }

    /// Exact cosine scan over the selected partitions.
    pub fn search_vector(&self, query: &[f32], k: usize, lesions: &[Lesion]) -> Result<Vec<SearchHit>, KstoreError> {
        self.check_query(k, lesions)?;
        if query.len() != self.descriptor.dimension {
            return Err(KstoreError::DimensionMismatch {
                expected: self.descriptor.dimension,
                got: query.len(),
            });
        }
        let qn = norm(query);
        let candidates: Vec<usize> = if lesions.is_empty() {
            (0..self.chunks.len()).collect()
        } else {
            let set: BTreeSet<usize> = lesions
                .iter()
                .flat_map(|l| self.partitions[l].iter().copied())
                .collect();
            set.into_iter().collect()
        };
        let mut hits: Vec<SearchHit> = candidates
            .into_iter()
            .map(|i| {
                let denom = qn * self.norms[i];
                let score = if denom == 0.0 {
                    0.0
                } else {
                    let dot: f64 = query
                        .iter()
                        .zip(&self.vectors[i])
                        .map(|(a, b)| f64::from(*a) * f64::from(*b))
                        .sum();
                    // Adding 0.0 folds -0.0 into 0.0 so equal scores compare equal.
                    (dot / denom).clamp(-1.0, 1.0) + 0.0
                };
                SearchHit {
                    chunk_id: self.chunks[i].chunk_id.clone(),
                    score,
                }
            })
            .collect();
        let k = k.min(hits.len());
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, rank);
            hits.truncate(k);
        }
        hits.sort_by(rank);
        Ok(hits)
    }

    pub fn to_json(&self) -> Result<Vec<u8>, KstoreError> {
        let file = IndexFile {
            format: FORMAT.into(),
            version: VERSION,
            embedder: self.descriptor.clone(),
            dimension: self.descriptor.dimension,
            chunks: self.chunks.clone(),
            vectors: self
                .vectors
                .iter()
                .map(|v| {
                    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
                    B64.encode(bytes)
                })
                .collect(),
        };
        let mut out = serde_json::to_vec_pretty(&file)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, KstoreError> {
        let file: IndexFile = serde_json::from_slice(bytes)?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(KstoreError::Format(format!(
                "unsupported index container {} v{}",
                file.format, file.version
            )));
        }
        if file.dimension != file.embedder.dimension || file.chunks.len() != file.vectors.len() {
            return Err(KstoreError::Format("inconsistent index header".into()));
        }
        let mut builder = IndexBuilder::new(file.embedder);
        for (chunk, encoded) in file.chunks.into_iter().zip(file.vectors) {
            let bytes = B64
                .decode(encoded)
                .map_err(|e| KstoreError::Format(format!("vector for {}: {e}", chunk.chunk_id)))?;
            if bytes.len() % 4 != 0 {
                return Err(KstoreError::Format(format!("truncated vector for {}", chunk.chunk_id)));
            }
            let vector = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            builder.add(chunk, vector)?;
        }
        Ok(builder.seal())
    }

    pub fn save(&self, path: &Path) -> Result<(), KstoreError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KstoreError> {
        Self::from_json(&fs::read(path)?)
    }

    /// Content hash of the serialized index.
    pub fn content_id(&self) -> Result<String, KstoreError> {
        Ok(hex::encode(Sha256::digest(self.to_json()?)))
    }
}

/// Chunks every corpus document and embeds the chunks on up to
/// `parallelism` threads. Chunks with no embeddable tokens are skipped.
pub fn build_index(
    corpus: &Corpus,
    embedder: &dyn Embedder,
    config: ChunkConfig,
    parallelism: usize,
) -> Result<VectorIndex, KstoreError> {
    config.validate()?;
    let mut chunks = Vec::new();
    for (lesion, docs) in &corpus.documents {
        for doc in docs {
            match chunk_document(doc, *lesion, config) {
                Ok(c) => chunks.extend(c),
                Err(KstoreError::EmptyDocument(loc)) => log::warn!("skipping empty document {loc}"),
                Err(e) => return Err(e),
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| KstoreError::Format(e.to_string()))?;
    let vectors: Vec<Result<Vec<f32>, KstoreError>> =
        pool.install(|| chunks.par_iter().map(|c| embedder.embed(&c.text)).collect());
    let mut builder = IndexBuilder::new(embedder.descriptor());
    for (chunk, vector) in chunks.into_iter().zip(vectors) {
        match vector {
            Ok(v) => builder.add(chunk, v)?,
            Err(KstoreError::EmptyText) => log::warn!("chunk {} has no tokens; skipped", chunk.chunk_id),
            Err(e) => return Err(e),
        }
    }
    if builder.is_empty() {
        return Err(KstoreError::EmptyIndex);
    }
    Ok(builder.seal())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{RawDocument, SourceKind};
    use crate::kstore::LocalHashEmbedder;
    use proptest::prelude::*;

    fn chunk(id: &str, lesion: Lesion, text: &str) -> KnowledgeChunk {
        KnowledgeChunk {
            chunk_id: id.into(),
            lesion,
            source: SourceKind::Fixture,
            document: format!("fixture:{id}"),
            text: text.into(),
            token_span: (0, text.split_whitespace().count()),
        }
    }

    fn three_chunk_index() -> VectorIndex {
        let e = LocalHashEmbedder::new();
        let mut b = IndexBuilder::new(e.descriptor());
        for (id, lesion, text) in [
            ("c", Lesion::Atelectasis, "lung collapse volume loss"),
            ("a", Lesion::Consolidation, "airspace opacity air bronchogram pneumonia"),
            ("b", Lesion::Atelectasis, "collapse of the lung with airway obstruction"),
        ] {
            b.add(chunk(id, lesion, text), e.embed(text).unwrap()).unwrap();
        }
        b.seal()
    }

    /// Exhaustive ranking: repeatedly pick the best remaining candidate.
    fn brute_force(index: &VectorIndex, q: &[f32], k: usize, lesions: &[Lesion]) -> Vec<SearchHit> {
        let mut pool: Vec<SearchHit> = Vec::new();
        for (i, c) in index.chunks().iter().enumerate() {
            if !lesions.is_empty() && !lesions.contains(&c.lesion) {
                continue;
            }
            let v = index.vector(i);
            let mut dot = 0.0;
            let mut nq = 0.0;
            let mut nv = 0.0;
            for j in 0..q.len() {
                dot += f64::from(q[j]) * f64::from(v[j]);
                nq += f64::from(q[j]) * f64::from(q[j]);
                nv += f64::from(v[j]) * f64::from(v[j]);
            }
            let denom = nq.sqrt() * nv.sqrt();
            let score = if denom == 0.0 {
                0.0
            } else {
                (dot / denom).clamp(-1.0, 1.0)
            };
            pool.push(SearchHit {
                chunk_id: c.chunk_id.clone(),
                score,
            });
        }
        let mut out = Vec::new();
        while out.len() < k && !pool.is_empty() {
            let mut best = 0;
            for i in 1..pool.len() {
                let better = pool[i].score > pool[best].score
                    || (pool[i].score == pool[best].score && pool[i].chunk_id < pool[best].chunk_id);
                if better {
                    best = i;
                }
            }
            out.push(pool.remove(best));
        }
        out
    }

    #[test]
    fn self_query_ranks_first() {
        let idx = three_chunk_index();
        let e = LocalHashEmbedder::new();
        let hits = idx
            .search(&e, "collapse of the lung with airway obstruction", 3, None)
            .unwrap();
        assert_eq!(hits[0].chunk_id, "b");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matches_brute_force_on_three_chunks() {
        let idx = three_chunk_index();
        let e = LocalHashEmbedder::new();
        let q = e.embed("lung collapse").unwrap();
        for k in 1..=3 {
            assert_eq!(idx.search_vector(&q, k, &[]).unwrap(), brute_force(&idx, &q, k, &[]));
        }
        let hits = idx.search(&e, "lung collapse", 10, None).unwrap();
        assert_eq!(hits.len(), 3);
        assert!(hits.windows(2).all(|w| rank(&w[0], &w[1]) != Ordering::Greater));
    }

    #[test]
    fn partition_and_error_cases() {
        let idx = three_chunk_index();
        let e = LocalHashEmbedder::new();
        let hits = idx.search(&e, "lung", 5, Some(Lesion::Atelectasis)).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.chunk_id.as_str()).collect();
        assert!(ids.len() == 2 && ids.contains(&"b") && ids.contains(&"c"));
        assert!(matches!(
            idx.search(&e, "lung", 5, Some(Lesion::PleuralEffusion)),
            Err(KstoreError::UnknownPartition(Lesion::PleuralEffusion))
        ));
        assert!(matches!(idx.search(&e, "lung", 0, None), Err(KstoreError::InvalidK)));
        let empty = IndexBuilder::new(e.descriptor()).seal();
        assert!(matches!(
            empty.search(&e, "lung", 1, None),
            Err(KstoreError::EmptyIndex)
        ));
    }

    #[test]
    fn ties_break_by_chunk_id() {
        let e = LocalHashEmbedder::new();
        let mut b = IndexBuilder::new(e.descriptor());
        for id in ["z", "m", "a"] {
            b.add(
                chunk(id, Lesion::Atelectasis, "same text"),
                e.embed("same text").unwrap(),
            )
            .unwrap();
        }
        let idx = b.seal();
        let hits = idx.search(&e, "same text", 2, None).unwrap();
        assert_eq!(hits.iter().map(|h| h.chunk_id.as_str()).collect::<Vec<_>>(), ["a", "m"]);
    }

    #[test]
    fn builder_rejects_bad_entries() {
        let e = LocalHashEmbedder::new();
        let mut b = IndexBuilder::new(e.descriptor());
        let v = e.embed("x").unwrap();
        b.add(chunk("a", Lesion::Atelectasis, "x"), v.clone()).unwrap();
        assert!(matches!(
            b.add(chunk("a", Lesion::Atelectasis, "x"), v.clone()),
            Err(KstoreError::DuplicateChunk(_))
        ));
        assert!(matches!(
            b.add(chunk("b", Lesion::Atelectasis, "x"), vec![0.0; 3]),
            Err(KstoreError::DimensionMismatch { .. })
        ));
        let mut bad = v;
        bad[0] = f32::NAN;
        assert!(matches!(
            b.add(chunk("c", Lesion::Atelectasis, "x"), bad),
            Err(KstoreError::NonFinite(_))
        ));
    }

    #[test]
    fn serialization_is_bit_exact() {
        let idx = three_chunk_index();
        let bytes = idx.to_json().unwrap();
        let back = VectorIndex::from_json(&bytes).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.to_json().unwrap(), bytes);
        for i in 0..idx.len() {
            let a: Vec<u32> = idx.vector(i).iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = back.vector(i).iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn build_from_corpus_is_deterministic() {
        let mut corpus = Corpus::default();
        for lesion in [Lesion::Atelectasis, Lesion::PleuralEffusion] {
            corpus.documents.insert(
                lesion,
                vec![RawDocument {
                    source: SourceKind::Fixture,
                    term: lesion.display_name().into(),
                    title: "doc".into(),
                    locator: format!("fixture:{}/doc.txt", lesion.key()),
                    body: (0..40)
                        .map(|i| format!("{}{i}", lesion.key()))
                        .collect::<Vec<_>>()
                        .join(" "),
                    retrieved_at: None,
                }],
            );
        }
        let e = LocalHashEmbedder::new();
        let cfg = ChunkConfig { size: 16, overlap: 4 };
        let a = build_index(&corpus, &e, cfg, 1).unwrap();
        let b = build_index(&corpus, &e, cfg, 4).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.len(), 2 * 4);
        assert_eq!(
            a.lesions().collect::<Vec<_>>(),
            [Lesion::Atelectasis, Lesion::PleuralEffusion]
        );
    }

    fn random_index(vectors: &[Vec<f32>], lesion_of: &[u8]) -> VectorIndex {
        let descriptor = EmbedderDescriptor {
            kind: "test".into(),
            model: "raw".into(),
            dimension: 4,
        };
        let mut b = IndexBuilder::new(descriptor);
        for (i, v) in vectors.iter().enumerate() {
            let lesion = Lesion::ALL[usize::from(lesion_of[i % lesion_of.len()]) % 2];
            b.add(chunk(&format!("c{i:03}"), lesion, "t"), v.clone()).unwrap();
        }
        b.seal()
    }

    proptest! {
        #[test]
        fn exact_and_prefix_closed(
            vectors in prop::collection::vec(prop::collection::vec(-3i8..=3, 4), 1..30),
            lesion_of in prop::collection::vec(0u8..2, 1..30),
            q in prop::collection::vec(-3i8..=3, 4),
            k in 1usize..35,
        ) {
            // Small integer grids make exact score ties common.
            let vectors: Vec<Vec<f32>> = vectors.iter().map(|v| v.iter().map(|x| f32::from(*x)).collect()).collect();
            let q: Vec<f32> = q.iter().map(|x| f32::from(*x)).collect();
            let idx = random_index(&vectors, &lesion_of);
            let full = idx.search_vector(&q, k, &[]).unwrap();
            prop_assert_eq!(&full, &brute_force(&idx, &q, k, &[]));
            let next = idx.search_vector(&q, k + 1, &[]).unwrap();
            prop_assert_eq!(&next[..full.len()], &full[..]);
            prop_assert!(full.iter().all(|h| (-1.0..=1.0).contains(&h.score)));
            for lesion in idx.lesions().collect::<Vec<_>>() {
                prop_assert_eq!(idx.search_vector(&q, k, &[lesion]).unwrap(), brute_force(&idx, &q, k, &[lesion]));
            }
        }
    }
}
