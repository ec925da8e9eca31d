//! Context-aware clinical tabular data augmentation.
//!
//! The pipeline runs in three phases: documents about each lesion are
//! ingested and indexed ([`ingest`], [`kstore`]); seven expert questions per
//! lesion are answered by retrieval-augmented prompting to form the augmented
//! clinical knowledge ([`augment::build_ack`]); new features are discovered
//! from that knowledge and per-patient values generated for them
//! ([`augment::discover_features`], [`augment::generate_values`]).

pub mod augment;
pub mod dataset;
pub mod ingest;
pub mod kstore;
pub mod llm;
pub mod prompts;
pub mod retry;
