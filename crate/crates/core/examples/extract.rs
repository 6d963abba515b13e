//! Framing components of the gold-parsed sentence
//! "An 18-year-old gunman on Tuesday fatally shot 19 children and two adults."
//!
//!     cargo run --example extract

use sufa::corpus::{parse_conllu, Leaning};
use sufa::extraction::{extract_components, match_mentions, DocMeta};
use sufa::lexicon::default_lexicons;

fn main() -> sufa::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/gunman.conllu");
    let sentence = &parse_conllu(&sufa::read_to_string(path)?)?[0];
    let meta = DocMeta { doc_id: "nyt-1", outlet: "NYT", leaning: Leaning::LeftCenter };

    for lex in default_lexicons() {
        let mentions = match_mentions(sentence, &lex);
        for c in extract_components(sentence, &mentions, &lex, meta) {
            println!("{:<8} {:<7} {:<6} {:<10} {:?}", c.entity, c.anchor, c.modifier, c.relation, c.direction);
        }
    }
    Ok(())
}
