//! Human coding sessions: inductive grouping of modifiers into named frames.
//!
//! A session is opened against one component dump for one entity. Every
//! (modifier, relation) pair of the entity is either unassigned or a member
//! of at least one group; a pair may belong to several groups at once.
//! Each successful mutation appends exactly one history entry.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggregate::FrequencyTable;
use crate::extraction::{to_jsonl, FramingComponent};

#[derive(Debug, Error)]
pub enum CodingError {
    #[error("entity {0} has no components")]
    NoComponents(String),
    #[error("pair ({modifier}, {relation}) was never extracted for this entity")]
    UnknownPair { modifier: String, relation: String },
    #[error("no group labelled {0:?}")]
    UnknownGroup(String),
    #[error("cannot merge group {0:?} with itself")]
    SelfMerge(String),
    #[error("a group labelled {0:?} already exists")]
    DuplicateLabel(String),
    #[error("group labels must be non-empty")]
    EmptyLabel,
    #[error("({modifier}, {relation}) is not a member of {label:?}")]
    NotAMember {
        modifier: String,
        relation: String,
        label: String,
    },
    #[error("invalid session id {0:?}")]
    InvalidSessionId(String),
    #[error("session {0} not found")]
    NotFound(String),
    #[error("codebook: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub modifier: String,
    pub relation: String,
}

impl Pair {
    pub fn new(modifier: impl Into<String>, relation: impl Into<String>) -> Pair {
        Pair {
            modifier: modifier.into(),
            relation: relation.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGroup {
    pub label: String,
    pub entity: String,
    pub members: BTreeSet<Pair>,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub timestamp: String,
    pub action: String,
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingSession {
    pub session_id: String,
    pub entity: String,
    pub groups: Vec<FrameGroup>,
    pub unassigned: BTreeSet<Pair>,
    /// Every pair extracted for the entity when the session was opened.
    pub pairs: BTreeSet<Pair>,
    pub history: Vec<HistoryEntry>,
    pub source_fingerprint: String,
    #[serde(default)]
    pub stale: bool,
}

/// SHA-256 over the JSON-lines dump of the components.
pub fn fingerprint(components: &[FramingComponent]) -> String {
    hex::encode(Sha256::digest(to_jsonl(components).as_bytes()))
}

/// Raised when a session is reopened against a different component dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FingerprintMismatch {
    pub expected: String,
    pub found: String,
}

pub fn open_session(
    components: &[FramingComponent],
    entity: &str,
    session_id: &str,
) -> Result<CodingSession, CodingError> {
    validate_session_id(session_id)?;
    let pairs: BTreeSet<Pair> = components
        .iter()
        .filter(|c| c.entity == entity)
        .map(|c| Pair::new(&c.modifier, &c.relation))
        .collect();
    if pairs.is_empty() {
        return Err(CodingError::NoComponents(entity.to_string()));
    }
    Ok(CodingSession {
        session_id: session_id.to_string(),
        entity: entity.to_string(),
        groups: Vec::new(),
        unassigned: pairs.clone(),
        pairs,
        history: Vec::new(),
        source_fingerprint: fingerprint(components),
        stale: false,
    })
}

impl CodingSession {
    /// Compares the session against the current dump and marks it stale on
    /// mismatch. The recorded fingerprint never changes.
    pub fn reopen(&mut self, components: &[FramingComponent]) -> Option<FingerprintMismatch> {
        let found = fingerprint(components);
        if found == self.source_fingerprint {
            return None;
        }
        log::warn!("session {} was opened against a different component dump", self.session_id);
        self.stale = true;
        Some(FingerprintMismatch {
            expected: self.source_fingerprint.clone(),
            found,
        })
    }

    pub fn group(&self, label: &str) -> Option<&FrameGroup> {
        self.groups.iter().find(|g| g.label == label)
    }

    fn group_index(&self, label: &str) -> Result<usize, CodingError> {
        self.groups
            .iter()
            .position(|g| g.label == label)
            .ok_or_else(|| CodingError::UnknownGroup(label.to_string()))
    }

    fn record(&mut self, action: &str, payload: serde_json::Value) {
        self.history.push(HistoryEntry {
            timestamp: chrono::Utc::now().to_rfc3339(),
            action: action.to_string(),
            payload,
        });
    }

    /// Adds the pair to `label`, creating the group if needed. Membership in
    /// other groups is untouched.
    pub fn assign(&mut self, modifier: &str, relation: &str, label: &str) -> Result<(), CodingError> {
        let pair = Pair::new(modifier, relation);
        if !self.pairs.contains(&pair) {
            return Err(CodingError::UnknownPair {
                modifier: modifier.to_string(),
                relation: relation.to_string(),
            });
        }
        if label.trim().is_empty() {
            return Err(CodingError::EmptyLabel);
        }
        let idx = match self.group_index(label) {
            Ok(i) => i,
            Err(_) => {
                self.groups.push(FrameGroup {
                    label: label.to_string(),
                    entity: self.entity.clone(),
                    members: BTreeSet::new(),
                    note: String::new(),
                });
                self.groups.len() - 1
            }
        };
        self.groups[idx].members.insert(pair.clone());
        self.unassigned.remove(&pair);
        self.record(
            "assign",
            serde_json::json!({"modifier": modifier, "relation": relation, "label": label}),
        );
        Ok(())
    }

    /// Removes the pair from `label`; it returns to `unassigned` only when no
    /// other group still holds it.
    pub fn unassign(&mut self, modifier: &str, relation: &str, label: &str) -> Result<(), CodingError> {
        let idx = self.group_index(label)?;
        let pair = Pair::new(modifier, relation);
        if !self.groups[idx].members.remove(&pair) {
            return Err(CodingError::NotAMember {
                modifier: modifier.to_string(),
                relation: relation.to_string(),
                label: label.to_string(),
            });
        }
        if !self.groups.iter().any(|g| g.members.contains(&pair)) {
            self.unassigned.insert(pair);
        }
        self.record(
            "unassign",
            serde_json::json!({"modifier": modifier, "relation": relation, "label": label}),
        );
        Ok(())
    }

    /// Replaces groups `a` and `b` by one group holding the union of their
    /// members, placed where `a` was. Notes are concatenated.
    pub fn merge_groups(&mut self, a: &str, b: &str, new_label: &str) -> Result<(), CodingError> {
        if a == b {
            return Err(CodingError::SelfMerge(a.to_string()));
        }
        if new_label.trim().is_empty() {
            return Err(CodingError::EmptyLabel);
        }
        let ia = self.group_index(a)?;
        let ib = self.group_index(b)?;
        if new_label != a && new_label != b && self.group(new_label).is_some() {
            return Err(CodingError::DuplicateLabel(new_label.to_string()));
        }
        let gb = self.groups[ib].clone();
        let ga = &mut self.groups[ia];
        ga.members.extend(gb.members);
        ga.note = [ga.note.as_str(), gb.note.as_str()]
            .into_iter()
            .filter(|n| !n.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n");
        ga.label = new_label.to_string();
        self.groups.remove(ib);
        self.record("merge", serde_json::json!({"a": a, "b": b, "new_label": new_label}));
        Ok(())
    }

    pub fn set_note(&mut self, label: &str, note: &str) -> Result<(), CodingError> {
        let idx = self.group_index(label)?;
        self.groups[idx].note = note.to_string();
        self.record("note", serde_json::json!({"label": label, "note": note}));
        Ok(())
    }

    /// unassigned ∪ all group members equals the extracted pair set, and no
    /// pair is both unassigned and grouped.
    pub fn coverage_holds(&self) -> bool {
        let grouped: BTreeSet<&Pair> = self.groups.iter().flat_map(|g| &g.members).collect();
        let covered: BTreeSet<&Pair> = grouped.iter().copied().chain(&self.unassigned).collect();
        covered == self.pairs.iter().collect() && grouped.iter().all(|p| !self.unassigned.contains(*p))
    }
}

fn validate_session_id(id: &str) -> Result<(), CodingError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(CodingError::InvalidSessionId(id.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodebookFormat {
    Json,
    Markdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CodebookMember {
    modifier: String,
    relation: String,
    count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CodebookGroup {
    label: String,
    note: String,
    members: Vec<CodebookMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Codebook {
    session_id: String,
    entity: String,
    source_fingerprint: String,
    stale: bool,
    groups: Vec<CodebookGroup>,
    unassigned: Vec<CodebookMember>,
    history_summary: BTreeMap<String, usize>,
    history: Vec<HistoryEntry>,
}

/// Occurrences of (modifier, relation) for the entity, summed over outlets.
fn pair_counts(table: &FrequencyTable, entity: &str) -> BTreeMap<Pair, usize> {
    table.marginal(|k| (k.entity.clone(), Pair::new(&k.modifier, &k.relation)))
        .into_iter()
        .filter(|((e, _), _)| e == entity)
        .map(|((_, p), n)| (p, n))
        .collect()
}

/// Renders the session as a codebook, joining member counts from `table`.
pub fn export_codebook(session: &CodingSession, table: &FrequencyTable, format: CodebookFormat) -> String {
    let counts = pair_counts(table, &session.entity);
    let member = |p: &Pair| CodebookMember {
        modifier: p.modifier.clone(),
        relation: p.relation.clone(),
        count: counts.get(p).copied().unwrap_or(0),
    };
    let mut summary = BTreeMap::new();
    for h in &session.history {
        *summary.entry(h.action.clone()).or_default() += 1;
    }
    let book = Codebook {
        session_id: session.session_id.clone(),
        entity: session.entity.clone(),
        source_fingerprint: session.source_fingerprint.clone(),
        stale: session.stale,
        groups: session
            .groups
            .iter()
            .map(|g| CodebookGroup {
                label: g.label.clone(),
                note: g.note.clone(),
                members: g.members.iter().map(member).collect(),
            })
            .collect(),
        unassigned: session.unassigned.iter().map(member).collect(),
        history_summary: summary,
        history: session.history.clone(),
    };
    match format {
        CodebookFormat::Json => {
            let mut s = serde_json::to_string_pretty(&book).expect("codebook serializes");
            s.push('\n');
            s
        }
        CodebookFormat::Markdown => {
            let mut out = format!(
                "# Codebook: {} (session {})\n\n{} groups, {} unassigned pairs, {} recorded actions\n",
                book.entity,
                book.session_id,
                book.groups.len(),
                book.unassigned.len(),
                session.history.len()
            );
            for g in &book.groups {
                out.push_str(&format!("\n## {}\n\n", g.label));
                if !g.note.is_empty() {
                    out.push_str(&g.note);
                    out.push_str("\n\n");
                }
                for m in &g.members {
                    out.push_str(&format!("- {} ({}, {})\n", m.modifier, m.relation, m.count));
                }
            }
            out
        }
    }
}

/// Rebuilds a session from a JSON codebook.
pub fn import_codebook(json: &str) -> Result<CodingSession, CodingError> {
    let book: Codebook = serde_json::from_str(json).map_err(|e| CodingError::Format(e.to_string()))?;
    validate_session_id(&book.session_id)?;
    let to_pair = |m: &CodebookMember| Pair::new(&m.modifier, &m.relation);
    let groups: Vec<FrameGroup> = book
        .groups
        .iter()
        .map(|g| FrameGroup {
            label: g.label.clone(),
            entity: book.entity.clone(),
            members: g.members.iter().map(to_pair).collect(),
            note: g.note.clone(),
        })
        .collect();
    let unassigned: BTreeSet<Pair> = book.unassigned.iter().map(to_pair).collect();
    let pairs = groups
        .iter()
        .flat_map(|g| g.members.iter().cloned())
        .chain(unassigned.iter().cloned())
        .collect();
    Ok(CodingSession {
        session_id: book.session_id,
        entity: book.entity,
        groups,
        unassigned,
        pairs,
        history: book.history,
        source_fingerprint: book.source_fingerprint,
        stale: book.stale,
    })
}

/// Sessions persisted as one JSON file each under a directory.
///
/// Writers take an exclusive lock on `<id>.lock` and replace `<id>.json`
/// by write-then-rename, so readers never see a partial file.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Result<SessionStore, CodingError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(SessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf, CodingError> {
        validate_session_id(id)?;
        Ok(self.dir.join(format!("{id}.json")))
    }

    fn lock(&self, id: &str) -> Result<File, CodingError> {
        validate_session_id(id)?;
        let f = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(self.dir.join(format!("{id}.lock")))?;
        f.lock()?;
        Ok(f)
    }

    pub fn exists(&self, id: &str) -> bool {
        self.path(id).map(|p| p.exists()).unwrap_or(false)
    }

    pub fn load(&self, id: &str) -> Result<CodingSession, CodingError> {
        let path = self.path(id)?;
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CodingError::NotFound(id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        serde_json::from_str(&text).map_err(|e| CodingError::Format(e.to_string()))
    }

    pub fn save(&self, session: &CodingSession) -> Result<(), CodingError> {
        let _guard = self.lock(&session.session_id)?;
        self.write(session)
    }

    fn write(&self, session: &CodingSession) -> Result<(), CodingError> {
        let path = self.path(&session.session_id)?;
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(serde_json::to_string_pretty(session).expect("session serializes").as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Load, mutate and save under the session's write lock.
    pub fn update<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut CodingSession) -> Result<T, CodingError>,
    ) -> Result<(CodingSession, T), CodingError> {
        let _guard = self.lock(id)?;
        let mut session = self.load(id)?;
        let out = f(&mut session)?;
        self.write(&session)?;
        Ok((session, out))
    }
}
