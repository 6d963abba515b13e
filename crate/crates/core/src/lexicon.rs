//! Per-entity keyword lists and dependency-relation whitelists.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Sentence, Token};
use crate::embedding::{cosine, VectorStore};

/// The shipped shooter/victims/event lexicons.
pub const DEFAULT_CONFIG: &str = include_str!("../fixtures/default_lexicons.json");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("lexicon config: {0}")]
    Config(String),
    #[error("lexicon entry with an empty entity name")]
    EmptyEntity,
    #[error("entity {0} has no keywords")]
    EmptyKeywordSet(String),
    #[error("entity {0} has no relations")]
    EmptyRelationSet(String),
    #[error("entity {0} is defined twice")]
    DuplicateEntity(String),
    #[error("no lexicon for entity {0}")]
    UnknownEntity(String),
    #[error("none of the keywords of {0} has a vector")]
    NoVectorsForEntity(String),
}

/// Non-fatal findings while loading a config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LexiconWarning {
    #[error("{entity}: {relation:?} is not a known dependency label")]
    UnknownRelation { entity: String, relation: String },
    /// A legacy spelling was rewritten (e.g. `relc` to `relcl`).
    #[error("{entity}: relation {from:?} read as {to:?}")]
    RelationAlias { entity: String, from: String, to: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordMatch {
    Lemma,
    Form,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityLexicon {
    pub entity: String,
    pub keywords: BTreeSet<String>,
    pub relations: BTreeSet<String>,
    #[serde(default)]
    pub keyword_match: KeywordMatch,
}

impl EntityLexicon {
    /// Whether the token's lemma or form (per `keyword_match`) is a keyword.
    pub fn is_keyword(&self, token: &Token) -> bool {
        let lemma = || self.keywords.contains(&token.lemma_key());
        let form = || self.keywords.contains(&token.form_key());
        match self.keyword_match {
            KeywordMatch::Lemma => lemma(),
            KeywordMatch::Form => form(),
            KeywordMatch::Both => lemma() || form(),
        }
    }

    /// Keyword hit or a coreference tag naming this entity.
    pub fn matches(&self, token: &Token) -> bool {
        self.is_keyword(token) || token.entity_tag() == Some(self.entity.as_str())
    }

    pub fn allows(&self, deprel: &str) -> bool {
        self.relations.contains(&normalize_relation(deprel))
    }
}

/// Lowercases a relation label and applies the legacy alias map.
pub fn normalize_relation(rel: &str) -> String {
    let rel = rel.trim().to_lowercase();
    match rel.as_str() {
        "relc" => "relcl".to_string(),
        _ => rel,
    }
}

/// UD v2 relations plus the ClearNLP-style labels older English parsers emit.
const KNOWN_RELATIONS: &[&str] = &[
    // universal dependencies v2
    "acl", "acl:relcl", "advcl", "advmod", "amod", "appos", "aux", "aux:pass", "case", "cc",
    "cc:preconj", "ccomp", "clf", "compound", "compound:prt", "conj", "cop", "csubj",
    "csubj:pass", "dep", "det", "det:poss", "det:predet", "discourse", "dislocated", "expl",
    "fixed", "flat", "flat:name", "goeswith", "iobj", "list", "mark", "nmod", "nmod:poss",
    "nmod:tmod", "nmod:npmod", "nsubj", "nsubj:pass", "nummod", "obj", "obl", "obl:tmod",
    "obl:npmod", "orphan", "parataxis", "punct", "reparandum", "root", "vocative", "xcomp",
    // legacy / ClearNLP
    "acomp", "agent", "attr", "auxpass", "csubjpass", "dative", "dobj", "intj", "meta", "neg",
    "nn", "npadvmod", "nsubjpass", "oprd", "pcomp", "pobj", "poss", "preconj", "predet", "prep",
    "prt", "quantmod", "relcl", "punc",
];

pub fn is_known_relation(rel: &str) -> bool {
    KNOWN_RELATIONS.contains(&rel)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConfigFile {
    entities: Vec<ConfigEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub entity: String,
    pub keywords: Vec<String>,
    pub relations: Vec<String>,
    #[serde(default)]
    pub keyword_match: KeywordMatch,
}

impl From<&EntityLexicon> for ConfigEntry {
    fn from(l: &EntityLexicon) -> Self {
        ConfigEntry {
            entity: l.entity.clone(),
            keywords: l.keywords.iter().cloned().collect(),
            relations: l.relations.iter().cloned().collect(),
            keyword_match: l.keyword_match,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedLexicons {
    pub lexicons: Vec<EntityLexicon>,
    pub warnings: Vec<LexiconWarning>,
}

/// Validates one config entry into a lexicon.
pub fn build_lexicon(
    entry: ConfigEntry,
    warnings: &mut Vec<LexiconWarning>,
) -> Result<EntityLexicon, LexiconError> {
    let entity = entry.entity.trim().to_lowercase();
    if entity.is_empty() {
        return Err(LexiconError::EmptyEntity);
    }
    let keywords: BTreeSet<String> = entry
        .keywords
        .iter()
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .collect();
    if keywords.is_empty() {
        return Err(LexiconError::EmptyKeywordSet(entity));
    }
    let mut relations = BTreeSet::new();
    for raw in &entry.relations {
        let lower = raw.trim().to_lowercase();
        if lower.is_empty() {
            continue;
        }
        let rel = normalize_relation(&lower);
        if rel != lower {
            warnings.push(LexiconWarning::RelationAlias {
                entity: entity.clone(),
                from: lower,
                to: rel.clone(),
            });
        }
        if !is_known_relation(&rel) {
            log::warn!("entity {entity}: relation {rel:?} is not a known dependency label");
            warnings.push(LexiconWarning::UnknownRelation {
                entity: entity.clone(),
                relation: rel.clone(),
            });
        }
        relations.insert(rel);
    }
    if relations.is_empty() {
        return Err(LexiconError::EmptyRelationSet(entity));
    }
    Ok(EntityLexicon {
        entity,
        keywords,
        relations,
        keyword_match: entry.keyword_match,
    })
}

/// Parses and validates a lexicon config. Entities absent from the config
/// are simply absent; nothing is filled in from the defaults.
pub fn load_lexicons(config: &str) -> Result<LoadedLexicons, LexiconError> {
    let file: ConfigFile =
        serde_json::from_str(config).map_err(|e| LexiconError::Config(e.to_string()))?;
    let mut warnings = Vec::new();
    let mut lexicons: Vec<EntityLexicon> = Vec::new();
    for entry in file.entities {
        let lex = build_lexicon(entry, &mut warnings)?;
        if lexicons.iter().any(|l| l.entity == lex.entity) {
            return Err(LexiconError::DuplicateEntity(lex.entity));
        }
        lexicons.push(lex);
    }
    Ok(LoadedLexicons { lexicons, warnings })
}

pub fn default_lexicons() -> Vec<EntityLexicon> {
    load_lexicons(DEFAULT_CONFIG)
        .expect("shipped lexicon config is valid")
        .lexicons
}

/// Serializes lexicons back into the config format.
pub fn to_config(lexicons: &[EntityLexicon]) -> serde_json::Value {
    let file = ConfigFile {
        entities: lexicons.iter().map(ConfigEntry::from).collect(),
    };
    serde_json::to_value(file).expect("config serializes")
}

pub fn find<'a>(lexicons: &'a [EntityLexicon], entity: &str) -> Result<&'a EntityLexicon, LexiconError> {
    lexicons
        .iter()
        .find(|l| l.entity == entity)
        .ok_or_else(|| LexiconError::UnknownEntity(entity.to_string()))
}

/// Words listed as keywords by more than one lexicon, with the lexicon that
/// wins (the first listed).
pub fn ambiguous_keywords(lexicons: &[EntityLexicon]) -> BTreeMap<String, String> {
    let mut owner: HashMap<&str, &str> = HashMap::new();
    let mut ambiguous = BTreeMap::new();
    for lex in lexicons {
        for kw in &lex.keywords {
            match owner.get(kw.as_str()) {
                Some(first) => {
                    ambiguous.insert(kw.clone(), first.to_string());
                }
                None => {
                    owner.insert(kw, &lex.entity);
                }
            }
        }
    }
    ambiguous
}

/// A keyword candidate with its best cosine similarity to an existing keyword.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub word: String,
    pub similarity: f64,
}

/// Ranks corpus nouns by their maximum cosine similarity to any existing
/// keyword of the lexicon. Existing keywords are never suggested; ties are
/// broken lexicographically.
pub fn suggest_keywords(
    corpus: &Corpus,
    lexicon: &EntityLexicon,
    store: &VectorStore,
    n: usize,
) -> Result<Vec<Suggestion>, LexiconError> {
    let anchors: Vec<&[f64]> = lexicon
        .keywords
        .iter()
        .filter_map(|k| store.get(k))
        .collect();
    if anchors.is_empty() {
        return Err(LexiconError::NoVectorsForEntity(lexicon.entity.clone()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let vocabulary: BTreeSet<String> = corpus
        .documents
        .iter()
        .flat_map(|d| &d.sentences)
        .flat_map(|s| &s.tokens)
        .filter(|t| t.upos == "NOUN" || t.upos == "PROPN")
        .map(Token::lemma_key)
        .filter(|w| !lexicon.keywords.contains(w))
        .collect();

    let mut ranked: Vec<Suggestion> = vocabulary
        .into_iter()
        .filter_map(|word| {
            let v = store.get(&word)?;
            let best = anchors
                .iter()
                .filter_map(|a| cosine(v, a).ok())
                .fold(f64::NEG_INFINITY, f64::max);
            best.is_finite().then_some(Suggestion { word, similarity: best })
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.word.cmp(&b.word))
    });
    ranked.truncate(n);
    Ok(ranked)
}

/// Counts dependency labels on every tree edge touching a token the
/// lexicon matches (keyword or entity tag). The whitelist is not applied:
/// this is the raw material for deciding what the whitelist should be.
pub fn relation_inventory(corpus: &Corpus, lexicon: &EntityLexicon) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for sentence in corpus.documents.iter().flat_map(|d| &d.sentences) {
        sentence_inventory(sentence, lexicon, &mut counts);
    }
    counts
}

fn sentence_inventory(sentence: &Sentence, lexicon: &EntityLexicon, counts: &mut BTreeMap<String, usize>) {
    let matched: Vec<bool> = sentence.tokens.iter().map(|t| lexicon.matches(t)).collect();
    for tok in &sentence.tokens {
        if tok.head == 0 {
            continue;
        }
        if matched[tok.id - 1] || matched[tok.head - 1] {
            *counts.entry(tok.deprel.to_lowercase()).or_default() += 1;
        }
    }
}
