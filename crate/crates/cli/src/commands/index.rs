use dallm_core::dataset::Lesion;
use dallm_core::ingest::Corpus;
use dallm_core::kstore::build_index;

use super::{CORPUS, INDEX};
use crate::context::Context;
use crate::error::CliError;

pub fn build(ctx: &Context) -> Result<(), CliError> {
    let mut m = ctx.manifest("index");
    let corpus = Corpus::load(&ctx.artifact_input(&mut m, CORPUS, "ingest")?)?;
    let embedder = ctx.embedder()?;
    let chunking = ctx.settings.config.chunking;
    let index = build_index(&corpus, embedder.as_ref(), chunking, ctx.settings.workers())?;
    ctx.write_output(&mut m, INDEX, &index.to_json()?)?;
    m.stat("chunks", index.len());
    m.stat("chunking", chunking);
    m.stat("embedder", index.descriptor());
    m.stat("index_id", index.content_id()?);
    ctx.finish(&m)
}

/// Prints the top-k chunks for `text`, one tab-separated line each.
pub fn query(ctx: &Context, text: &str, k: usize, lesion: Option<Lesion>) -> Result<(), CliError> {
    let mut scratch = ctx.manifest("query");
    let embedder = ctx.embedder()?;
    let index = ctx.index(&mut scratch, embedder.as_ref())?;
    let hits = index.search(embedder.as_ref(), text, k, lesion)?;
    for (rank, hit) in hits.iter().enumerate() {
        let chunk = index.chunk(&hit.chunk_id).expect("hit from this index");
        let snippet: String = chunk.text.split_whitespace().take(12).collect::<Vec<_>>().join(" ");
        println!("{}\t{}\t{:.6}\t{}", rank + 1, hit.chunk_id, hit.score, snippet);
    }
    Ok(())
}
