//! Group modifier/relation pairs into named frames and export a codebook.
//!
//!     cargo run --example coding_session

use sufa::aggregate::aggregate;
use sufa::coding::{export_codebook, open_session, CodebookFormat, SessionStore};
use sufa::extraction::from_jsonl;

fn main() -> sufa::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/golden/three_docs.components.jsonl");
    let components = from_jsonl(&sufa::read_to_string(path)?)?;

    let dir = std::env::temp_dir().join(format!("sufa-example-{}", std::process::id()));
    let store = SessionStore::new(&dir)?;
    store.save(&open_session(&components, "shooter", "demo")?)?;

    // Every edit goes through the store, so concurrent writers are serialized.
    store.update("demo", |s| s.assign("old", "amod", "age"))?;
    store.update("demo", |s| s.assign("teenage", "amod", "age"))?;
    store.update("demo", |s| s.assign("Ramos", "appos", "name"))?;
    store.update("demo", |s| s.assign("Salvador", "compound", "identity"))?;
    store.update("demo", |s| s.merge_groups("name", "identity", "identity"))?;
    let (session, _) = store.update("demo", |s| s.set_note("age", "Youth of the attacker."))?;

    print!("{}", export_codebook(&session, &aggregate(&components), CodebookFormat::Markdown));
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
