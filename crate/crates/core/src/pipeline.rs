//! Whole-corpus stages with per-document parallelism.
//!
//! Every stage maps documents independently and collects results in input
//! order, so output is identical for any thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::coref::{check_chain_documents, import_chains, tag_corefs, MentionChain, TagConflict};
use crate::corpus::{attach_metadata, parse_conllu, parse_metadata, Corpus, Document};
use crate::extraction::FramingComponent;
use crate::lexicon::EntityLexicon;
use crate::{Error, Result};

/// Runs `f` on a pool of `jobs` threads (0 means one per core).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorefSummary {
    pub keyword_tags: usize,
    pub pronoun_tags: usize,
    pub ambiguous_keywords: Vec<String>,
    pub conflicts: Vec<TagConflict>,
}

/// Rule-based tagging per document, then imported chains on top.
pub fn resolve_corpus(
    corpus: &Corpus,
    lexicons: &[EntityLexicon],
    chains: &[MentionChain],
    window: usize,
) -> Result<(Corpus, CorefSummary)> {
    check_chain_documents(corpus, chains)?;
    let resolved: Vec<Result<(Document, usize, usize, Vec<TagConflict>)>> = corpus
        .documents
        .par_iter()
        .map(|doc| {
            let tagged = tag_corefs(doc, lexicons, window);
            let imported = import_chains(&tagged.document, chains)?;
            Ok((imported.document, tagged.keyword_tags, tagged.pronoun_tags, imported.conflicts))
        })
        .collect();
    let mut summary = CorefSummary {
        ambiguous_keywords: crate::lexicon::ambiguous_keywords(lexicons).into_keys().collect(),
        ..Default::default()
    };
    let mut documents = Vec::with_capacity(resolved.len());
    for r in resolved {
        let (doc, kw, pr, conflicts) = r?;
        summary.keyword_tags += kw;
        summary.pronoun_tags += pr;
        summary.conflicts.extend(conflicts);
        documents.push(doc);
    }
    Ok((Corpus::new(documents)?, summary))
}

/// Parse, attach metadata and resolve coreference.
pub fn ingest(
    conllu: &str,
    metadata: &str,
    lexicons: &[EntityLexicon],
    chains: &[MentionChain],
    window: usize,
) -> Result<(Corpus, CorefSummary)> {
    let sentences = parse_conllu(conllu)?;
    let corpus = attach_metadata(sentences, &parse_metadata(metadata)?)?;
    resolve_corpus(&corpus, lexicons, chains, window)
}

/// Extraction in document order, one task per document.
pub fn extract(corpus: &Corpus, lexicons: &[EntityLexicon]) -> Vec<FramingComponent> {
    crate::extraction::extract_corpus_parallel(corpus, lexicons)
}

/// Everything a component dump says about itself, for reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtractSummary {
    pub components: usize,
    pub per_entity: std::collections::BTreeMap<String, usize>,
}

pub fn summarize(components: &[FramingComponent]) -> ExtractSummary {
    let mut per_entity = std::collections::BTreeMap::new();
    for c in components {
        *per_entity.entry(c.entity.clone()).or_default() += 1;
    }
    ExtractSummary {
        components: components.len(),
        per_entity,
    }
}
