//! Start the JSON API on an ephemeral port and query it once.
//!
//!     cargo run --example serve

use sufa::coding::SessionStore;
use sufa::lexicon::default_lexicons;
use sufa::pipeline;
use sufa::server::{spawn, ServerConfig};

fn main() -> sufa::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let lexicons = default_lexicons();
    let conllu = sufa::read_to_string(format!("{dir}/three_docs.conllu"))?;
    let meta = sufa::read_to_string(format!("{dir}/three_docs.meta.json"))?;
    let (corpus, _) = pipeline::ingest(&conllu, &meta, &lexicons, &[], 2)?;

    let sessions = std::env::temp_dir().join(format!("sufa-serve-{}", std::process::id()));
    let config = ServerConfig {
        corpus,
        lexicons,
        sessions: SessionStore::new(&sessions)?,
        vectors: None,
        ui: None,
    };
    let server = spawn(config, "127.0.0.1:0")?;
    println!("listening on http://{}", server.addr);

    for path in ["/health", "/tables/shooter?format=md", "/components?entity=victims&per_page=2"] {
        let body = ureq::get(&server.url(path))
            .call()
            .and_then(|mut r| r.body_mut().read_to_string())
            .unwrap_or_else(|e| format!("request failed: {e}"));
        println!("GET {path}\n{body}\n");
    }
    drop(server);
    std::fs::remove_dir_all(&sessions).ok();
    Ok(())
}
