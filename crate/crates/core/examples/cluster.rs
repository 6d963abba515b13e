//! k-means over modifier embeddings, with a silhouette sweep to pick k.
//!
//!     cargo run --example cluster

use std::fs::File;
use std::io::BufReader;

use sufa::clustering::{cluster_components, modifier_matrix, silhouette_sweep, KMeansParams};
use sufa::embedding::load_vectors;
use sufa::extraction::from_jsonl;

fn main() -> sufa::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let components = from_jsonl(&sufa::read_to_string(format!("{dir}/golden/three_docs.components.jsonl"))?)?;
    let path = format!("{dir}/toy_vectors.txt");
    let file = File::open(&path).map_err(|e| sufa::Error::io(&path, e))?;
    let store = load_vectors(BufReader::new(file), &path)?.store;

    let matrix = modifier_matrix(&components, &store, "shooter", None)?;
    for (k, s) in silhouette_sweep(&matrix.words, &matrix.rows, 0)? {
        println!("k={k}: silhouette {s:.3}");
    }

    let report = cluster_components(&components, &store, "shooter", None, KMeansParams::new(3, 0))?;
    for g in &report.groups {
        let words: Vec<&str> = g.modifiers.iter().map(|m| m.word.as_str()).collect();
        println!("{} ({:.0}% of inertia): {}", g.label, g.inertia_share * 100.0, words.join(", "));
    }
    println!("not embedded: {:?}", report.oov);
    Ok(())
}
