use dallm_core::augment::{build_ack, AckConfig};

use super::ACK;
use crate::context::Context;
use crate::error::CliError;

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.settings.config;
    let mut m = ctx.manifest("ack");
    let embedder = ctx.embedder()?;
    let index = ctx.index(&mut m, embedder.as_ref())?;
    let templates = ctx.templates(&mut m)?;
    let client = ctx.client(&mut m)?;
    let config = AckConfig {
        k: c.retrieval.k,
        generation: ctx.generation(),
        workers: ctx.settings.workers(),
    };
    let ack = build_ack(
        &index,
        embedder.as_ref(),
        &c.source.lesions,
        &templates,
        &client,
        &config,
    )?;
    ctx.write_output(&mut m, ACK, &ack.to_json()?)?;
    m.fingerprints = ack.all().into_iter().map(|e| e.fingerprint).collect();
    m.stat("entries", ack.len());
    m.stat("k", c.retrieval.k);
    ctx.finish(&m)
}
