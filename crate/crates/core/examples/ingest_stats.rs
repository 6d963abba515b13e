//! Parse a CoNLL-U file, attach outlet metadata and print token counts.
//!
//!     cargo run --example ingest_stats

use sufa::corpus::corpus_stats;
use sufa::lexicon::default_lexicons;
use sufa::pipeline;

fn main() -> sufa::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let conllu = sufa::read_to_string(format!("{dir}/three_docs.conllu"))?;
    let meta = sufa::read_to_string(format!("{dir}/three_docs.meta.json"))?;
    let (corpus, coref) = pipeline::ingest(&conllu, &meta, &default_lexicons(), &[], 2)?;

    print!("{}", corpus_stats(&corpus).to_markdown());
    println!(
        "\n{} documents; {} keyword and {} pronoun mentions tagged",
        corpus.documents.len(),
        coref.keyword_tags,
        coref.pronoun_tags
    );
    Ok(())
}
