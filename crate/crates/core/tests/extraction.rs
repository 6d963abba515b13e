mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use proptest::prelude::*;
use sufa::corpus::{attach_metadata, parse_conllu, parse_metadata};
use sufa::extraction::{extract_components, extract_corpus, match_mentions, to_jsonl, DocMeta, Direction};
use sufa::lexicon::{default_lexicons, find, load_lexicons};
use sufa::pipeline;

use common::*;

fn triples(sentence: &sufa::corpus::Sentence, entity: &str) -> BTreeSet<(String, String, String, Direction)> {
    let lexicons = default_lexicons();
    let lex = find(&lexicons, entity).unwrap();
    let meta = DocMeta {
        doc_id: "nyt",
        outlet: "NYT",
        leaning: sufa::corpus::Leaning::LeftCenter,
    };
    extract_components(sentence, &match_mentions(sentence, lex), lex, meta)
        .into_iter()
        .map(|c| (c.anchor, c.modifier, c.relation, c.direction))
        .collect()
}

fn set(items: &[(&str, &str, &str, Direction)]) -> BTreeSet<(String, String, String, Direction)> {
    items
        .iter()
        .map(|(a, m, r, d)| (a.to_string(), m.to_string(), r.to_string(), *d))
        .collect()
}

#[test]
fn gold_sentence_components() {
    let sentences = parse_conllu(&read_fixture("gunman.conllu")).unwrap();
    let s = &sentences[0];
    assert_eq!(s.tokens.len(), 13);
    assert_eq!(s.root().unwrap().form, "shot");
    use Direction::*;
    assert_eq!(
        triples(s, "shooter"),
        set(&[("gunman", "old", "amod", ModifierIsChild), ("gunman", "shoot", "nsubj", ModifierIsHead)])
    );
    assert_eq!(
        triples(s, "victims"),
        set(&[
            ("child", "19", "nummod", ModifierIsChild),
            ("child", "shoot", "dobj", ModifierIsHead),
            ("adult", "two", "nummod", ModifierIsChild),
        ])
    );
    assert!(triples(s, "event").is_empty());
    // "fatally" hangs off the verb, two hops from the gunman.
    assert!(!triples(s, "shooter").iter().any(|t| t.1 == "fatally"));
}

#[test]
fn warlord_barre() {
    let s = &parse_conllu(&read_fixture("barre.conllu")).unwrap()[0];
    let lex = load_lexicons(r#"{"entities":[{"entity":"barre","keywords":["barre"],"relations":["compound","amod"]}]}"#)
        .unwrap()
        .lexicons;
    let meta = DocMeta {
        doc_id: "d",
        outlet: "X",
        leaning: sufa::corpus::Leaning::Left,
    };
    let comps = extract_components(s, &match_mentions(s, &lex[0]), &lex[0], meta);
    assert_eq!(comps.len(), 1);
    assert_eq!((comps[0].anchor.as_str(), comps[0].modifier.as_str(), comps[0].relation.as_str()), ("Barre", "warlord", "compound"));
}

#[test]
fn fixtures_match_oracle_and_golden() {
    let lexicons = default_lexicons();
    for stem in ["three_docs", "contrast"] {
        let corpus = fixture_corpus(stem);
        assert!(corpus.token_count() <= 1000);
        let started = Instant::now();
        let got = extract_corpus(&corpus, &lexicons);
        assert!(started.elapsed().as_secs_f64() < 1.0);
        assert_eq!(got, oracle(&corpus, &lexicons), "{stem}");
    }
    let got = extract_corpus(&fixture_corpus("three_docs"), &lexicons);
    assert_eq!(to_jsonl(&got), read_fixture("golden/three_docs.components.jsonl"));
}

#[test]
fn provenance_dereferences() {
    let corpus = fixture_corpus("three_docs");
    for c in extract_corpus(&corpus, &default_lexicons()) {
        let s = corpus.document(&c.doc_id).unwrap().sentence(&c.sent_id).unwrap();
        assert_eq!(s.token(c.anchor_token).unwrap().lemma, c.anchor);
        assert_eq!(s.token(c.modifier_token).unwrap().lemma, c.modifier);
        assert_ne!(c.anchor_token, c.modifier_token);
    }
}

#[test]
fn empty_corpus_gives_nothing() {
    let corpus = attach_metadata(Vec::new(), &[]).unwrap();
    assert!(extract_corpus(&corpus, &default_lexicons()).is_empty());
}

fn random_corpus(seed: u64) -> sufa::corpus::Corpus {
    let (text, meta) = random_conllu(seed, 4, 6, 14);
    attach_metadata(parse_conllu(&text).unwrap(), &parse_metadata(&meta).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_corpora_match_oracle(seed in any::<u64>()) {
        let lexicons = default_lexicons();
        let (corpus, _) = pipeline::resolve_corpus(&random_corpus(seed), &lexicons, &[], 2).unwrap();
        prop_assert_eq!(extract_corpus(&corpus, &lexicons), oracle(&corpus, &lexicons));
        prop_assert_eq!(pipeline::extract(&corpus, &lexicons), oracle(&corpus, &lexicons));
    }

    #[test]
    fn whitelist_monotone(seed in any::<u64>(), drop in 0usize..8) {
        let corpus = random_corpus(seed);
        let full = default_lexicons();
        let mut small = full.clone();
        for lex in &mut small {
            if let Some(r) = lex.relations.iter().nth(drop % lex.relations.len()).cloned() {
                lex.relations.remove(&r);
            }
        }
        let big: BTreeSet<_> = extract_corpus(&corpus, &full).into_iter().collect();
        let little: BTreeSet<_> = extract_corpus(&corpus, &small).into_iter().collect();
        prop_assert!(little.is_subset(&big));
    }
}
