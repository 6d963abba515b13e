//! Parsed-corpus model: CoNLL-U sentences grouped into outlet-labelled documents.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("sentence {sent_id}, line {line}: malformed token line ({reason})")]
    MalformedLine {
        sent_id: String,
        line: usize,
        reason: String,
    },
    #[error("sentence {sent_id}, line {line}: head {head} out of range for {len} tokens")]
    HeadOutOfRange {
        sent_id: String,
        line: usize,
        head: usize,
        len: usize,
    },
    #[error("sentence {sent_id}, line {line}: head links do not form a tree")]
    CyclicTree { sent_id: String, line: usize },
    #[error("sentence {sent_id}, line {line}: more than one root token")]
    MultipleRoots { sent_id: String, line: usize },
    #[error("sentence {sent_id} precedes any `# newdoc id` boundary")]
    NoDocumentBoundary { sent_id: String },
    #[error("no metadata record for document {0}")]
    MissingMetadata(String),
    #[error("unknown leaning label {0:?} (expected left, left-center, right-center or right)")]
    UnknownLeaning(String),
    #[error("document {0} has an empty outlet")]
    EmptyOutlet(String),
    #[error("document {doc_id}: invalid publication date {date:?}")]
    InvalidDate { doc_id: String, date: String },
    #[error("duplicate document id {0}")]
    DuplicateDocId(String),
    #[error("metadata sidecar: {0}")]
    Sidecar(String),
}

/// The `misc` column as key/value pairs in file order. Bare flags are
/// stored with an empty value and written back without `=`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Misc(Vec<(String, String)>);

impl Misc {
    pub fn parse(field: &str) -> Misc {
        let mut misc = Misc::default();
        if field != "_" {
            for item in field.split('|').filter(|s| !s.is_empty()) {
                let (k, v) = item.split_once('=').unwrap_or((item, ""));
                misc.insert(k, v);
            }
        }
        misc
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Replaces in place when the key exists, appends otherwise.
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) -> Option<String> {
        let (key, value) = (key.into(), value.into());
        match self.0.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => Some(std::mem::replace(v, value)),
            None => {
                self.0.push((key, value));
                None
            }
        }
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        let i = self.0.iter().position(|(k, _)| k == key)?;
        Some(self.0.remove(i).1)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Misc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("_");
        }
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            if v.is_empty() {
                f.write_str(k)?;
            } else {
                write!(f, "{k}={v}")?;
            }
        }
        Ok(())
    }
}

/// One syntactic word of a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    #[serde(default = "underscore")]
    pub xpos: String,
    #[serde(default = "underscore")]
    pub feats: String,
    /// 0 marks the root.
    pub head: usize,
    pub deprel: String,
    #[serde(default = "underscore")]
    pub deps: String,
    #[serde(default, skip_serializing_if = "Misc::is_empty")]
    pub misc: Misc,
}

fn underscore() -> String {
    "_".to_string()
}

impl Token {
    /// Lowercased lemma, the key every lexicon lookup uses.
    pub fn lemma_key(&self) -> String {
        self.lemma.to_lowercase()
    }

    pub fn form_key(&self) -> String {
        self.form.to_lowercase()
    }

    pub fn entity_tag(&self) -> Option<&str> {
        self.misc.get(ENTITY_KEY)
    }
}

/// Misc-column key carrying coreference tags.
pub const ENTITY_KEY: &str = "Entity";

/// A multiword-token range line (`3-4`), kept only for serialization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiwordToken {
    pub first: usize,
    pub last: usize,
    pub line: String,
}

/// An empty node line (`3.1`), kept only for serialization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmptyNode {
    pub after: usize,
    pub line: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sent_id: String,
    pub text: String,
    pub tokens: Vec<Token>,
    /// Set on the first sentence of a document (`# newdoc id = ...`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newdoc: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comments: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub multiword: Vec<MultiwordToken>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub empty_nodes: Vec<EmptyNode>,
}

impl Sentence {
    /// Token by 1-based id.
    pub fn token(&self, id: usize) -> Option<&Token> {
        id.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    pub fn root(&self) -> Option<&Token> {
        self.tokens.iter().find(|t| t.head == 0)
    }

    /// Dependents of `id`, in token order.
    pub fn children(&self, id: usize) -> impl Iterator<Item = &Token> + '_ {
        self.tokens.iter().filter(move |t| t.head == id)
    }

    /// Checks the tree invariants. `lines` maps token index to source line
    /// numbers for error reporting; pass `None` for in-memory sentences.
    pub fn validate(&self, lines: Option<&[usize]>) -> Result<(), CorpusError> {
        let line_of = |idx: usize| lines.and_then(|l| l.get(idx).copied()).unwrap_or(0);
        let n = self.tokens.len();
        let malformed = |idx: usize, reason: String| CorpusError::MalformedLine {
            sent_id: self.sent_id.clone(),
            line: line_of(idx),
            reason,
        };
        if n == 0 {
            return Err(malformed(0, "sentence has no tokens".into()));
        }
        let mut root = None;
        for (idx, tok) in self.tokens.iter().enumerate() {
            if tok.id != idx + 1 {
                return Err(malformed(idx, format!("expected token id {}, found {}", idx + 1, tok.id)));
            }
            if tok.deprel.is_empty() || tok.deprel == "_" {
                return Err(malformed(idx, "empty deprel".into()));
            }
            if tok.head > n {
                return Err(CorpusError::HeadOutOfRange {
                    sent_id: self.sent_id.clone(),
                    line: line_of(idx),
                    head: tok.head,
                    len: n,
                });
            }
            if tok.head == tok.id {
                return Err(CorpusError::CyclicTree {
                    sent_id: self.sent_id.clone(),
                    line: line_of(idx),
                });
            }
            if tok.head == 0 {
                if root.is_some() {
                    return Err(CorpusError::MultipleRoots {
                        sent_id: self.sent_id.clone(),
                        line: line_of(idx),
                    });
                }
                root = Some(tok.id);
            }
        }
        let Some(root) = root else {
            return Err(CorpusError::CyclicTree {
                sent_id: self.sent_id.clone(),
                line: line_of(0),
            });
        };

        let mut children = vec![Vec::new(); n + 1];
        for tok in &self.tokens {
            children[tok.head].push(tok.id);
        }
        let mut visited = vec![false; n + 1];
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut visited[id], true) {
                continue;
            }
            stack.extend(children[id].iter().copied());
        }
        if let Some(idx) = (1..=n).find(|&id| !visited[id]) {
            return Err(CorpusError::CyclicTree {
                sent_id: self.sent_id.clone(),
                line: line_of(idx - 1),
            });
        }
        Ok(())
    }

    /// Serializes the sentence as a CoNLL-U block, blank line included.
    pub fn to_conllu(&self) -> String {
        let mut out = String::new();
        if let Some(doc) = &self.newdoc {
            out.push_str(&format!("# newdoc id = {doc}\n"));
        }
        out.push_str(&format!("# sent_id = {}\n", self.sent_id));
        out.push_str(&format!("# text = {}\n", self.text));
        for c in &self.comments {
            out.push_str(&format!("# {c}\n"));
        }
        let push_empty = |out: &mut String, after: usize| {
            for e in self.empty_nodes.iter().filter(|e| e.after == after) {
                out.push_str(&e.line);
                out.push('\n');
            }
        };
        push_empty(&mut out, 0);
        for tok in &self.tokens {
            for mwt in self.multiword.iter().filter(|m| m.first == tok.id) {
                out.push_str(&mwt.line);
                out.push('\n');
            }
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                tok.id,
                tok.form,
                tok.lemma,
                tok.upos,
                tok.xpos,
                tok.feats,
                tok.head,
                tok.deprel,
                tok.deps,
                tok.misc
            ));
            push_empty(&mut out, tok.id);
        }
        out.push('\n');
        out
    }
}

/// Serializes sentences as a CoNLL-U stream with LF line endings.
pub fn write_conllu(sentences: &[Sentence]) -> String {
    sentences.iter().map(Sentence::to_conllu).collect()
}

#[derive(Default)]
struct Pending {
    start_line: usize,
    sent_id: Option<String>,
    text: Option<String>,
    newdoc: Option<String>,
    comments: Vec<String>,
    tokens: Vec<Token>,
    token_lines: Vec<usize>,
    multiword: Vec<MultiwordToken>,
    empty_nodes: Vec<EmptyNode>,
}

impl Pending {
    fn is_empty(&self) -> bool {
        self.tokens.is_empty()
            && self.sent_id.is_none()
            && self.newdoc.is_none()
            && self.comments.is_empty()
            && self.text.is_none()
    }
}

/// Parses a CoNLL-U stream into validated sentences.
///
/// Sentences without a `# sent_id` comment get a running `s<N>` id.
pub fn parse_conllu(text: &str) -> Result<Vec<Sentence>, CorpusError> {
    let mut sentences = Vec::new();
    let mut pending = Pending::default();

    for (idx, raw) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !pending.is_empty() {
                let done = std::mem::take(&mut pending);
                sentences.push(finish(done, sentences.len() + 1)?);
            }
            continue;
        }
        if pending.is_empty() {
            pending.start_line = lineno;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment_value(comment, "sent_id") {
                pending.sent_id = Some(v.to_string());
            } else if let Some(v) = comment_value(comment, "text") {
                pending.text = Some(v.to_string());
            } else if let Some(v) = comment_value(comment, "newdoc id") {
                pending.newdoc = Some(v.to_string());
            } else {
                pending.comments.push(comment.to_string());
            }
            continue;
        }

        let sent_label = || {
            pending
                .sent_id
                .clone()
                .unwrap_or_else(|| format!("s{}", sentences.len() + 1))
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(CorpusError::MalformedLine {
                sent_id: sent_label(),
                line: lineno,
                reason: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if let Some((a, b)) = id.split_once('-') {
            let (Ok(first), Ok(last)) = (a.parse(), b.parse()) else {
                return Err(CorpusError::MalformedLine {
                    sent_id: sent_label(),
                    line: lineno,
                    reason: format!("bad multiword range {id:?}"),
                });
            };
            pending.multiword.push(MultiwordToken {
                first,
                last,
                line: line.to_string(),
            });
            continue;
        }
        if let Some((a, _)) = id.split_once('.') {
            let Ok(after) = a.parse() else {
                return Err(CorpusError::MalformedLine {
                    sent_id: sent_label(),
                    line: lineno,
                    reason: format!("bad empty node id {id:?}"),
                });
            };
            pending.empty_nodes.push(EmptyNode {
                after,
                line: line.to_string(),
            });
            continue;
        }

        let parse_num = |field: &str, what: &str| -> Result<usize, CorpusError> {
            field.parse().map_err(|_| CorpusError::MalformedLine {
                sent_id: sent_label(),
                line: lineno,
                reason: format!("{what} {field:?} is not an integer"),
            })
        };
        let id = parse_num(cols[0], "token id")?;
        let head = parse_num(cols[6], "head")?;
        if id == 0 {
            return Err(CorpusError::MalformedLine {
                sent_id: sent_label(),
                line: lineno,
                reason: "token id must be >= 1".into(),
            });
        }
        let lemma = if cols[2] == "_" && cols[1] != "_" {
            cols[1].to_lowercase()
        } else {
            cols[2].to_string()
        };
        pending.tokens.push(Token {
            id,
            form: cols[1].to_string(),
            lemma,
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            feats: cols[5].to_string(),
            head,
            deprel: cols[7].to_string(),
            deps: cols[8].to_string(),
            misc: Misc::parse(cols[9]),
        });
        pending.token_lines.push(lineno);
    }
    if !pending.is_empty() {
        sentences.push(finish(pending, sentences.len() + 1)?);
    }
    Ok(sentences)
}

fn comment_value<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let rest = comment.strip_prefix(key)?.trim_start();
    Some(rest.strip_prefix('=')?.trim())
}

fn finish(p: Pending, index: usize) -> Result<Sentence, CorpusError> {
    let sent_id = p.sent_id.unwrap_or_else(|| format!("s{index}"));
    let text = p.text.unwrap_or_else(|| {
        p.tokens
            .iter()
            .map(|t| t.form.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    });
    let sentence = Sentence {
        sent_id,
        text,
        tokens: p.tokens,
        newdoc: p.newdoc,
        comments: p.comments,
        multiword: p.multiword,
        empty_nodes: p.empty_nodes,
    };
    let lines = if p.token_lines.is_empty() {
        vec![p.start_line]
    } else {
        p.token_lines
    };
    sentence.validate(Some(&lines))?;
    Ok(sentence)
}

/// Political leaning of an outlet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Leaning {
    Left,
    LeftCenter,
    RightCenter,
    Right,
}

/// The two sides contrasted in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Leaning {
    pub const ALL: [Leaning; 4] = [
        Leaning::Left,
        Leaning::LeftCenter,
        Leaning::RightCenter,
        Leaning::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Leaning::Left => "left",
            Leaning::LeftCenter => "left-center",
            Leaning::RightCenter => "right-center",
            Leaning::Right => "right",
        }
    }

    /// Capitalized row label used in rendered tables.
    pub fn title(self) -> &'static str {
        match self {
            Leaning::Left => "Left",
            Leaning::LeftCenter => "Left-center",
            Leaning::RightCenter => "Right-center",
            Leaning::Right => "Right",
        }
    }

    pub fn side(self) -> Side {
        match self {
            Leaning::Left | Leaning::LeftCenter => Side::Left,
            Leaning::RightCenter | Leaning::Right => Side::Right,
        }
    }
}

impl fmt::Display for Leaning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Leaning {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Leaning::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| CorpusError::UnknownLeaning(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub outlet: String,
    pub leaning: Leaning,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<String>,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    pub fn sentence(&self, sent_id: &str) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.sent_id == sent_id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate document ids.
    pub fn new(documents: Vec<Document>) -> Result<Corpus, CorpusError> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(CorpusError::DuplicateDocId(doc.doc_id.clone()));
            }
        }
        Ok(Corpus { documents })
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    /// Reads a JSON corpus snapshot, re-checking every invariant.
    pub fn from_json(text: &str) -> Result<Corpus, crate::Error> {
        let corpus: Corpus = serde_json::from_str(text)?;
        for doc in &corpus.documents {
            if doc.outlet.trim().is_empty() {
                return Err(CorpusError::EmptyOutlet(doc.doc_id.clone()).into());
            }
            for s in &doc.sentences {
                s.validate(None)?;
            }
        }
        Ok(Corpus::new(corpus.documents)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("corpus serializes")
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(Document::token_count).sum()
    }
}

/// One entry of the metadata sidecar, leaning still unvalidated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub doc_id: String,
    pub outlet: String,
    pub leaning: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<String>,
}

pub fn parse_metadata(json: &str) -> Result<Vec<MetadataRecord>, CorpusError> {
    serde_json::from_str(json).map_err(|e| CorpusError::Sidecar(e.to_string()))
}

/// Groups sentences into documents at `# newdoc id` boundaries and stamps
/// each with its sidecar metadata. Document order follows the input.
pub fn attach_metadata(
    sentences: Vec<Sentence>,
    sidecar: &[MetadataRecord],
) -> Result<Corpus, CorpusError> {
    let mut by_id: BTreeMap<&str, &MetadataRecord> = BTreeMap::new();
    for rec in sidecar {
        if by_id.insert(rec.doc_id.as_str(), rec).is_some() {
            return Err(CorpusError::DuplicateDocId(rec.doc_id.clone()));
        }
    }

    let mut documents: Vec<Document> = Vec::new();
    for sentence in sentences {
        if let Some(doc_id) = sentence.newdoc.clone() {
            let rec = by_id
                .get(doc_id.as_str())
                .ok_or_else(|| CorpusError::MissingMetadata(doc_id.clone()))?;
            let leaning: Leaning = rec.leaning.parse()?;
            if rec.outlet.trim().is_empty() {
                return Err(CorpusError::EmptyOutlet(doc_id));
            }
            if let Some(date) = &rec.published {
                if chrono::NaiveDate::parse_from_str(date, "%Y-%m-%d").is_err() {
                    return Err(CorpusError::InvalidDate {
                        doc_id,
                        date: date.clone(),
                    });
                }
            }
            documents.push(Document {
                doc_id,
                outlet: rec.outlet.clone(),
                leaning,
                published: rec.published.clone(),
                sentences: Vec::new(),
            });
        }
        match documents.last_mut() {
            Some(doc) => doc.sentences.push(sentence),
            None => {
                return Err(CorpusError::NoDocumentBoundary {
                    sent_id: sentence.sent_id,
                })
            }
        }
    }
    Corpus::new(documents)
}

/// Token counts per outlet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub sentences: usize,
    pub outlets: BTreeMap<String, usize>,
    pub total: usize,
}

/// Counts every syntactic-word token line, punctuation included. Multiword
/// ranges and empty nodes are not counted.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for doc in &corpus.documents {
        let n = doc.token_count();
        *stats.outlets.entry(doc.outlet.clone()).or_default() += n;
        stats.documents += 1;
        stats.sentences += doc.sentences.len();
    }
    stats.total = stats.outlets.values().sum();
    stats
}

impl CorpusStats {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Outlet | Tokens |\n|---|---|\n");
        for (outlet, n) in &self.outlets {
            out.push_str(&format!("| {outlet} | {n} |\n"));
        }
        out.push_str(&format!("| **Total** | {} |\n", self.total));
        out
    }
}
