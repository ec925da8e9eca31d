//! Chunking, embedding and exact cosine retrieval over the lesion corpus.

mod chunk;
mod embed;
mod index;

use thiserror::Error;

use crate::dataset::Lesion;

pub use chunk::{chunk_document, ChunkConfig, KnowledgeChunk};
pub use embed::{
    token_bucket, tokenize, Embedder, EmbedderDescriptor, LocalHashEmbedder, RemoteEmbedder, LOCAL_DIMENSION,
};
pub use index::{build_index, IndexBuilder, SearchHit, VectorIndex};

#[derive(Debug, Error)]
pub enum KstoreError {
    #[error("document {0} has no tokens")]
    EmptyDocument(String),
    #[error("invalid chunking: size {size}, overlap {overlap} (need 0 <= overlap < size)")]
    InvalidChunking { size: usize, overlap: usize },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding backend failed ({}): {message}", if *retryable { "retryable" } else { "fatal" })]
    Embedding { retryable: bool, message: String },
    #[error("vector dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite component in vector for {0}")]
    NonFinite(String),
    #[error("duplicate chunk id {0}")]
    DuplicateChunk(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index has no partition for lesion `{0}`")]
    UnknownPartition(Lesion),
    #[error("index built with {index:?} but queried with {embedder:?}")]
    EmbedderMismatch {
        index: EmbedderDescriptor,
        embedder: EmbedderDescriptor,
    },
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
