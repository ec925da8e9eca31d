use std::fs;

use dallm_core::ingest::{
    build_corpus, FixtureSource, RadiopaediaSource, SourceKind, SourceRegistry, SourceTemplate, WebConfig,
    WikipediaSource,
};

use super::CORPUS;
use crate::context::Context;
use crate::error::CliError;

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let source = &ctx.settings.config.source;
    let mut m = ctx.manifest("ingest");
    let mut registry = SourceRegistry::new();
    let mut templates = Vec::new();
    for kind in &source.sources {
        if registry.get(*kind).is_none() {
            match kind {
                SourceKind::Fixture => {
                    let dir = ctx.settings.corpus_dir.clone().expect("validated");
                    ctx.config_input(&mut m, "corpus_dir", &dir)?;
                    registry.register(Box::new(FixtureSource::new(dir)));
                }
                SourceKind::Wikipedia => registry.register(Box::new(WikipediaSource::new(&WebConfig::default())?)),
                SourceKind::Radiopaedia => registry.register(Box::new(RadiopaediaSource::new(&WebConfig::default())?)),
            }
        }
        templates.push(SourceTemplate {
            source: *kind,
            scope: source.scope,
        });
    }
    let corpus = build_corpus(&source.lesions, &templates, &registry, ctx.settings.workers())?;

    let dir = ctx.out(CORPUS);
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    corpus.save(&dir)?;
    ctx.record_output(&mut m, CORPUS)?;
    let counts: std::collections::BTreeMap<String, usize> = corpus
        .documents
        .iter()
        .map(|(l, d)| (l.key().to_owned(), d.len()))
        .collect();
    log::info!("ingested {} documents", corpus.total_documents());
    m.stat("documents", counts);
    m.warnings.extend(corpus.warnings);
    ctx.finish(&m)
}
