//! Frequency tables per outlet and the left/right contrast report.
//!
//!     cargo run --example tables

use sufa::aggregate::{aggregate, contrast_markdown, contrast_report, render_table, TableFormat};
use sufa::lexicon::default_lexicons;
use sufa::pipeline;

fn main() -> sufa::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let lexicons = default_lexicons();
    for stem in ["three_docs", "contrast"] {
        let conllu = sufa::read_to_string(format!("{dir}/{stem}.conllu"))?;
        let meta = sufa::read_to_string(format!("{dir}/{stem}.meta.json"))?;
        let (corpus, _) = pipeline::ingest(&conllu, &meta, &lexicons, &[], 2)?;
        let table = aggregate(&pipeline::extract(&corpus, &lexicons));

        println!("## {stem}: shooter\n");
        match render_table(&table, "shooter", TableFormat::Markdown) {
            Ok(md) => println!("{md}"),
            Err(e) => println!("({e})\n"),
        }
        println!("## {stem}: victims, left against right\n");
        println!("{}", contrast_markdown(&contrast_report(&table, "victims")?));
    }
    Ok(())
}
