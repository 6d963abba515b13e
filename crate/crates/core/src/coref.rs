//! Coreference tagging: credit pronouns and aliases to the entity they refer to.
//!
//! Tags are written to the misc column as `Entity=<name>`. Forms are never
//! rewritten, so a "gunman" tagged as the shooter still reads "gunman".

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document, ENTITY_KEY};
use crate::lexicon::{ambiguous_keywords, EntityLexicon};

/// Default antecedent window, in sentences.
pub const DEFAULT_WINDOW: usize = 2;

/// Third-person pronoun lemmas eligible for antecedent linking.
pub const PRONOUNS: &[&str] = &["he", "him", "his", "she", "her", "they", "them", "their"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorefError {
    #[error("no token {token} in sentence {sent_id} of document {doc_id}")]
    BadCoordinate {
        doc_id: String,
        sent_id: String,
        token: usize,
    },
    #[error("chain for entity {0} has no mentions")]
    EmptyChain(String),
    #[error("chains file: {0}")]
    Chains(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub doc_id: String,
    pub sent_id: String,
    pub token: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionChain {
    pub entity: String,
    pub mentions: Vec<Mention>,
}

pub fn parse_chains(json: &str) -> Result<Vec<MentionChain>, CorefError> {
    let chains: Vec<MentionChain> =
        serde_json::from_str(json).map_err(|e| CorefError::Chains(e.to_string()))?;
    if let Some(c) = chains.iter().find(|c| c.mentions.is_empty()) {
        return Err(CorefError::EmptyChain(c.entity.clone()));
    }
    Ok(chains)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagOutcome {
    pub document: Document,
    /// Keywords listed by more than one lexicon; the first lexicon won.
    pub ambiguous: Vec<String>,
    pub keyword_tags: usize,
    pub pronoun_tags: usize,
}

/// Tags keyword tokens with their entity, then links each untagged
/// third-person pronoun to the nearest preceding tagged token no more than
/// `window` sentences back. Existing tags are left alone, which makes the
/// operation idempotent and lets imported chains take precedence.
pub fn tag_corefs(document: &Document, lexicons: &[EntityLexicon], window: usize) -> TagOutcome {
    let ambiguous: Vec<String> = ambiguous_keywords(lexicons).into_keys().collect();
    for word in &ambiguous {
        log::warn!("keyword {word:?} appears in several lexicons; the first one listed wins");
    }
    let mut doc = document.clone();
    let mut keyword_tags = 0;
    let mut pronoun_tags = 0;

    for sentence in &mut doc.sentences {
        for tok in &mut sentence.tokens {
            if tok.entity_tag().is_some() {
                continue;
            }
            if let Some(lex) = lexicons.iter().find(|l| l.is_keyword(tok)) {
                tok.misc.insert(ENTITY_KEY, lex.entity.clone());
                keyword_tags += 1;
            }
        }
    }

    for si in 0..doc.sentences.len() {
        for ti in 0..doc.sentences[si].tokens.len() {
            let tok = &doc.sentences[si].tokens[ti];
            if tok.entity_tag().is_some() || !PRONOUNS.contains(&tok.lemma_key().as_str()) {
                continue;
            }
            if let Some(entity) = antecedent(&doc, si, ti, window) {
                doc.sentences[si].tokens[ti].misc.insert(ENTITY_KEY, entity);
                pronoun_tags += 1;
            }
        }
    }

    TagOutcome {
        document: doc,
        ambiguous,
        keyword_tags,
        pronoun_tags,
    }
}

/// Entity of the nearest tagged token before (si, ti), searching back at
/// most `window` sentences.
pub fn antecedent(doc: &Document, si: usize, ti: usize, window: usize) -> Option<String> {
    let first = si.saturating_sub(window);
    (first..=si).rev().find_map(|s| {
        let tokens = &doc.sentences[s].tokens;
        let end = if s == si { ti } else { tokens.len() };
        tokens[..end]
            .iter()
            .rev()
            .find_map(|t| t.entity_tag().map(str::to_string))
    })
}

/// A token whose rule-based tag was overridden by an imported chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TagConflict {
    pub mention: Mention,
    pub previous: String,
    pub imported: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportOutcome {
    pub document: Document,
    pub conflicts: Vec<TagConflict>,
}

/// Applies externally produced chains to one document. Mentions that
/// belong to other documents are ignored; imported tags replace existing ones.
pub fn import_chains(document: &Document, chains: &[MentionChain]) -> Result<ImportOutcome, CorefError> {
    let mut doc = document.clone();
    let mut conflicts = Vec::new();
    for chain in chains {
        if chain.mentions.is_empty() {
            return Err(CorefError::EmptyChain(chain.entity.clone()));
        }
        for m in chain.mentions.iter().filter(|m| m.doc_id == doc.doc_id) {
            let bad = || CorefError::BadCoordinate {
                doc_id: m.doc_id.clone(),
                sent_id: m.sent_id.clone(),
                token: m.token,
            };
            let sentence = doc
                .sentences
                .iter_mut()
                .find(|s| s.sent_id == m.sent_id)
                .ok_or_else(bad)?;
            let tok = m
                .token
                .checked_sub(1)
                .and_then(|i| sentence.tokens.get_mut(i))
                .ok_or_else(bad)?;
            if let Some(prev) = tok.misc.insert(ENTITY_KEY, chain.entity.clone()) {
                if prev != chain.entity {
                    log::warn!(
                        "{}/{}/{}: imported tag {} replaces {}",
                        m.doc_id, m.sent_id, m.token, chain.entity, prev
                    );
                    conflicts.push(TagConflict {
                        mention: m.clone(),
                        previous: prev,
                        imported: chain.entity.clone(),
                    });
                }
            }
        }
    }
    Ok(ImportOutcome { document: doc, conflicts })
}

/// Checks that every chain mention points at a document of the corpus.
pub fn check_chain_documents(corpus: &Corpus, chains: &[MentionChain]) -> Result<(), CorefError> {
    for m in chains.iter().flat_map(|c| &c.mentions) {
        if corpus.document(&m.doc_id).is_none() {
            return Err(CorefError::BadCoordinate {
                doc_id: m.doc_id.clone(),
                sent_id: m.sent_id.clone(),
                token: m.token,
            });
        }
    }
    Ok(())
}

/// Count of tagged tokens per entity, for reporting.
pub fn tag_counts(doc: &Document) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in doc.sentences.iter().flat_map(|s| &s.tokens) {
        if let Some(e) = t.entity_tag() {
            *counts.entry(e.to_string()).or_default() += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{attach_metadata, parse_conllu, MetadataRecord};
    use crate::lexicon::default_lexicons;

    const RAMOS: &str = "# newdoc id = d1\n# sent_id = s1\n\
1\tSalvador\tSalvador\tPROPN\t_\t_\t2\tcompound\t_\t_\n\
2\tRamos\tRamos\tPROPN\t_\t_\t3\tnsubj\t_\t_\n\
3\tarrived\tarrive\tVERB\t_\t_\t0\troot\t_\t_\n\n\
# sent_id = s2\n\
1\tHe\the\tPRON\t_\t_\t2\tnsubj\t_\t_\n\
2\topened\topen\tVERB\t_\t_\t0\troot\t_\t_\n\
3\tfire\tfire\tNOUN\t_\t_\t2\tdobj\t_\t_\n\n";

    fn doc(text: &str) -> Document {
        let meta = [MetadataRecord {
            doc_id: "d1".into(),
            outlet: "CNN".into(),
            leaning: "left".into(),
            published: None,
        }];
        attach_metadata(parse_conllu(text).unwrap(), &meta)
            .unwrap()
            .documents
            .remove(0)
    }

    #[test]
    fn pronoun_links_to_alias() {
        let out = tag_corefs(&doc(RAMOS), &default_lexicons(), DEFAULT_WINDOW);
        let he = &out.document.sentences[1].tokens[0];
        assert_eq!(he.entity_tag(), Some("shooter"));
        assert_eq!(he.form, "He");
        assert_eq!(out.keyword_tags, 2);
        assert_eq!(out.pronoun_tags, 1);
    }

    #[test]
    fn window_bounds_the_search() {
        let out = tag_corefs(&doc(RAMOS), &default_lexicons(), 0);
        assert_eq!(out.document.sentences[1].tokens[0].entity_tag(), None);
    }

    #[test]
    fn no_keywords_no_pronoun_tags() {
        let text = "# newdoc id = d1\n1\tHe\the\tPRON\t_\t_\t2\tnsubj\t_\t_\n2\tleft\tleave\tVERB\t_\t_\t0\troot\t_\t_\n";
        let out = tag_corefs(&doc(text), &default_lexicons(), DEFAULT_WINDOW);
        assert_eq!(out.pronoun_tags, 0);
        assert!(tag_counts(&out.document).is_empty());
    }

    #[test]
    fn gunman_is_tagged_not_replaced() {
        let text = "# newdoc id = d1\n1\tgunman\tgunman\tNOUN\t_\t_\t0\troot\t_\t_\n";
        let out = tag_corefs(&doc(text), &default_lexicons(), DEFAULT_WINDOW);
        let t = &out.document.sentences[0].tokens[0];
        assert_eq!((t.form.as_str(), t.entity_tag()), ("gunman", Some("shooter")));
    }

    #[test]
    fn imported_chain_wins() {
        let tagged = tag_corefs(&doc(RAMOS), &default_lexicons(), DEFAULT_WINDOW).document;
        let chains = vec![MentionChain {
            entity: "police".into(),
            mentions: vec![Mention {
                doc_id: "d1".into(),
                sent_id: "s2".into(),
                token: 1,
            }],
        }];
        let out = import_chains(&tagged, &chains).unwrap();
        assert_eq!(out.document.sentences[1].tokens[0].entity_tag(), Some("police"));
        assert_eq!(out.conflicts.len(), 1);
        assert_eq!(out.conflicts[0].previous, "shooter");
        assert_eq!(import_chains(&tagged, &[]).unwrap().document, tagged);
    }

    #[test]
    fn bad_coordinate() {
        let chains = vec![MentionChain {
            entity: "shooter".into(),
            mentions: vec![Mention {
                doc_id: "d1".into(),
                sent_id: "s2".into(),
                token: 9,
            }],
        }];
        assert_eq!(
            import_chains(&doc(RAMOS), &chains).unwrap_err(),
            CorefError::BadCoordinate {
                doc_id: "d1".into(),
                sent_id: "s2".into(),
                token: 9
            }
        );
    }
}
