//! Nearest-neighbour keyword candidates for an entity lexicon.
//!
//!     cargo run --example suggest

use std::fs::File;
use std::io::BufReader;

use sufa::embedding::load_vectors;
use sufa::lexicon::{default_lexicons, find, suggest_keywords};
use sufa::pipeline;

fn main() -> sufa::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let lexicons = default_lexicons();
    let conllu = sufa::read_to_string(format!("{dir}/three_docs.conllu"))?;
    let meta = sufa::read_to_string(format!("{dir}/three_docs.meta.json"))?;
    let (corpus, _) = pipeline::ingest(&conllu, &meta, &lexicons, &[], 2)?;

    let path = format!("{dir}/toy_vectors.txt");
    let file = File::open(&path).map_err(|e| sufa::Error::io(&path, e))?;
    let store = load_vectors(BufReader::new(file), &path)?.store;

    for entity in ["shooter", "victims", "event"] {
        let ranked = suggest_keywords(&corpus, find(&lexicons, entity)?, &store, 5)?;
        let words: Vec<String> = ranked.iter().map(|s| format!("{} ({:.2})", s.word, s.similarity)).collect();
        println!("{entity}: {}", words.join(", "));
    }
    Ok(())
}
