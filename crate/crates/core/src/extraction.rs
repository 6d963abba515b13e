//! Framing-component extraction.
//!
//! A framing component pairs a mention of an entity (the *anchor*) with a
//! word directly attached to it in the dependency tree (the *modifier*),
//! provided the connecting relation is on the entity's whitelist. The
//! modifier may sit below the anchor ("old" in "18-year-old gunman", amod)
//! or above it ("shot" governing "gunman", nsubj).

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Leaning, Sentence};
use crate::lexicon::{normalize_relation, EntityLexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "modifier-is-child")]
    ModifierIsChild,
    #[serde(rename = "modifier-is-head")]
    ModifierIsHead,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::ModifierIsChild => "modifier-is-child",
            Direction::ModifierIsHead => "modifier-is-head",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FramingComponent {
    pub entity: String,
    pub anchor: String,
    pub modifier: String,
    pub relation: String,
    pub direction: Direction,
    pub doc_id: String,
    pub sent_id: String,
    pub outlet: String,
    pub leaning: Leaning,
    pub anchor_token: usize,
    pub modifier_token: usize,
}

/// Provenance stamped onto every component of a document.
#[derive(Debug, Clone, Copy)]
pub struct DocMeta<'a> {
    pub doc_id: &'a str,
    pub outlet: &'a str,
    pub leaning: Leaning,
}

impl<'a> From<&'a Document> for DocMeta<'a> {
    fn from(d: &'a Document) -> Self {
        DocMeta {
            doc_id: &d.doc_id,
            outlet: &d.outlet,
            leaning: d.leaning,
        }
    }
}

/// Ids of tokens matching the lexicon by keyword or by entity tag, ascending.
pub fn match_mentions(sentence: &Sentence, lexicon: &EntityLexicon) -> Vec<usize> {
    sentence
        .tokens
        .iter()
        .filter(|t| lexicon.matches(t))
        .map(|t| t.id)
        .collect()
}

/// Components for one sentence and one entity, ordered by (anchor token,
/// modifier token).
///
/// When both ends of an edge are mentions, the edge is emitted once, with
/// the head as anchor.
pub fn extract_components(
    sentence: &Sentence,
    mentions: &[usize],
    lexicon: &EntityLexicon,
    meta: DocMeta<'_>,
) -> Vec<FramingComponent> {
    let mentioned: BTreeSet<usize> = mentions.iter().copied().collect();
    let mut out = Vec::new();
    for &m in &mentioned {
        let Some(anchor) = sentence.token(m) else {
            continue;
        };
        let mut emit = |modifier_id: usize, relation: String, direction| {
            let modifier = sentence.token(modifier_id).expect("validated tree");
            out.push(FramingComponent {
                entity: lexicon.entity.clone(),
                anchor: anchor.lemma.clone(),
                modifier: modifier.lemma.clone(),
                relation,
                direction,
                doc_id: meta.doc_id.to_string(),
                sent_id: sentence.sent_id.clone(),
                outlet: meta.outlet.to_string(),
                leaning: meta.leaning,
                anchor_token: m,
                modifier_token: modifier_id,
            });
        };
        for child in sentence.children(m) {
            if lexicon.allows(&child.deprel) {
                emit(child.id, normalize_relation(&child.deprel), Direction::ModifierIsChild);
            }
        }
        if anchor.head != 0 && !mentioned.contains(&anchor.head) && lexicon.allows(&anchor.deprel) {
            emit(anchor.head, normalize_relation(&anchor.deprel), Direction::ModifierIsHead);
        }
    }
    out.sort_by_key(|c| (c.anchor_token, c.modifier_token));
    out
}

/// All components of one document: sentences in order, and within a
/// sentence by (anchor token, modifier token, lexicon order).
pub fn extract_document(doc: &Document, lexicons: &[EntityLexicon]) -> Vec<FramingComponent> {
    let meta = DocMeta::from(doc);
    let mut out = Vec::new();
    for sentence in &doc.sentences {
        let mut per_sentence: Vec<(usize, FramingComponent)> = Vec::new();
        for (li, lex) in lexicons.iter().enumerate() {
            let mentions = match_mentions(sentence, lex);
            per_sentence.extend(
                extract_components(sentence, &mentions, lex, meta)
                    .into_iter()
                    .map(|c| (li, c)),
            );
        }
        per_sentence.sort_by_key(|(li, c)| (c.anchor_token, c.modifier_token, *li));
        out.extend(per_sentence.into_iter().map(|(_, c)| c));
    }
    out
}

/// Extracts the whole corpus in document order.
pub fn extract_corpus(corpus: &Corpus, lexicons: &[EntityLexicon]) -> Vec<FramingComponent> {
    corpus
        .documents
        .iter()
        .flat_map(|d| extract_document(d, lexicons))
        .collect()
}

/// Same result as [`extract_corpus`], computed one document per task.
pub fn extract_corpus_parallel(corpus: &Corpus, lexicons: &[EntityLexicon]) -> Vec<FramingComponent> {
    corpus
        .documents
        .par_iter()
        .map(|d| extract_document(d, lexicons))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// One component per line.
pub fn to_jsonl(components: &[FramingComponent]) -> String {
    let mut out = String::new();
    for c in components {
        out.push_str(&serde_json::to_string(c).expect("component serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<FramingComponent>, crate::Error> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| crate::Error::Input(format!("components line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn to_csv(components: &[FramingComponent]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if components.is_empty() {
        w.write_record(CSV_HEADER).expect("in-memory write");
    }
    for c in components {
        w.serialize(c).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn from_csv(text: &str) -> Result<Vec<FramingComponent>, crate::Error> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| crate::Error::Input(format!("components csv: {e}")))
}

const CSV_HEADER: [&str; 11] = [
    "entity",
    "anchor",
    "modifier",
    "relation",
    "direction",
    "doc_id",
    "sent_id",
    "outlet",
    "leaning",
    "anchor_token",
    "modifier_token",
];
