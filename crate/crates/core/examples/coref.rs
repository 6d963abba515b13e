//! Rule-based pronoun linking, then an imported chain that overrides it.
//!
//!     cargo run --example coref

use sufa::corpus::{attach_metadata, parse_conllu, parse_metadata};
use sufa::coref::{import_chains, parse_chains, tag_corefs};
use sufa::lexicon::default_lexicons;

fn main() -> sufa::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let sentences = parse_conllu(&sufa::read_to_string(format!("{dir}/three_docs.conllu"))?)?;
    let meta = parse_metadata(&sufa::read_to_string(format!("{dir}/three_docs.meta.json"))?)?;
    let corpus = attach_metadata(sentences, &meta)?;
    let doc = corpus.document("cnn-1").expect("fixture has cnn-1");

    let tagged = tag_corefs(doc, &default_lexicons(), 2);
    println!("{} keyword tags, {} pronoun tags", tagged.keyword_tags, tagged.pronoun_tags);
    for s in &tagged.document.sentences {
        for t in s.tokens.iter().filter(|t| t.upos == "PRON") {
            println!("  {} {:>8} -> {}", s.sent_id, t.form, t.entity_tag().unwrap_or("-"));
        }
    }

    // An external resolver disagrees about "He".
    let chains = parse_chains(r#"[{"entity":"victims","mentions":[{"doc_id":"cnn-1","sent_id":"cnn-1-s3","token":1}]}]"#)?;
    let imported = import_chains(&tagged.document, &chains)?;
    for c in &imported.conflicts {
        println!("conflict at {}/{}: {} replaced by {}", c.mention.sent_id, c.mention.token, c.previous, c.imported);
    }
    Ok(())
}
