//! Frequency tables of framing components and left/right contrasts.

use std::cmp::Reverse;
use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Leaning, Side};
use crate::extraction::FramingComponent;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggregateError {
    #[error("entity {0} does not occur in the table")]
    UnknownEntity(String),
    #[error("unknown table format {0:?} (expected md, csv or json)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TableKey {
    pub entity: String,
    pub outlet: String,
    pub leaning: Leaning,
    pub relation: String,
    pub modifier: String,
}

impl From<&FramingComponent> for TableKey {
    fn from(c: &FramingComponent) -> Self {
        TableKey {
            entity: c.entity.clone(),
            outlet: c.outlet.clone(),
            leaning: c.leaning,
            relation: c.relation.clone(),
            modifier: c.modifier.clone(),
        }
    }
}

/// Occurrence counts keyed by (entity, outlet, leaning, relation, modifier).
/// Every stored count is at least 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    entries: BTreeMap<TableKey, usize>,
}

/// Counts every component occurrence.
pub fn aggregate(components: &[FramingComponent]) -> FrequencyTable {
    let mut table = FrequencyTable::default();
    for c in components {
        table.add(TableKey::from(c), 1);
    }
    table
}

impl FrequencyTable {
    pub fn add(&mut self, key: TableKey, count: usize) {
        if count > 0 {
            *self.entries.entry(key).or_default() += count;
        }
    }

    /// Merges another table into this one; counting is associative, so
    /// partial tables can be built in parallel and folded together.
    pub fn merge(&mut self, other: FrequencyTable) {
        for (k, n) in other.entries {
            self.add(k, n);
        }
    }

    pub fn entries(&self) -> &BTreeMap<TableKey, usize> {
        &self.entries
    }

    pub fn get(&self, key: &TableKey) -> usize {
        self.entries.get(key).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> usize {
        self.entries.values().sum()
    }

    /// Sums counts grouped by an arbitrary projection of the key.
    pub fn marginal<K: Ord>(&self, project: impl Fn(&TableKey) -> K) -> BTreeMap<K, usize> {
        let mut out = BTreeMap::new();
        for (k, n) in &self.entries {
            *out.entry(project(k)).or_default() += n;
        }
        out
    }

    pub fn entities(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.entries.keys().map(|k| k.entity.as_str()).collect();
        v.dedup();
        v
    }

    pub fn has_entity(&self, entity: &str) -> bool {
        self.entries.keys().any(|k| k.entity == entity)
    }

    fn check_entity(&self, entity: &str) -> Result<(), AggregateError> {
        if self.is_empty() || self.has_entity(entity) {
            Ok(())
        } else {
            Err(AggregateError::UnknownEntity(entity.to_string()))
        }
    }

    fn rows_for<'a>(&'a self, entity: &'a str) -> impl Iterator<Item = (&'a TableKey, usize)> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k.entity == entity)
            .map(|(k, n)| (k, *n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for TableFormat {
    type Err = AggregateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            other => Err(AggregateError::UnknownFormat(other.to_string())),
        }
    }
}

/// One table row: an outlet with its relation groups, each holding
/// (modifier, count) pairs by descending count then modifier.
type OutletRow<'a> = ((Leaning, &'a str), BTreeMap<&'a str, Vec<(&'a str, usize)>>);

fn outlet_rows<'a>(ft: &'a FrequencyTable, entity: &'a str) -> Vec<OutletRow<'a>> {
    let mut rows: BTreeMap<(Leaning, &str), BTreeMap<&str, Vec<(&str, usize)>>> = BTreeMap::new();
    for (k, n) in ft.rows_for(entity) {
        rows.entry((k.leaning, k.outlet.as_str()))
            .or_default()
            .entry(k.relation.as_str())
            .or_default()
            .push((k.modifier.as_str(), n));
    }
    for groups in rows.values_mut() {
        for mods in groups.values_mut() {
            mods.sort_by_key(|&(m, n)| (Reverse(n), m));
        }
    }
    rows.into_iter().collect()
}

/// Renders the table for one entity.
///
/// Markdown rows read `| Left | CNN | amod: active (3), old (21); compound: mass (1) |`:
/// relations alphabetical, modifiers by descending count.
pub fn render_table(ft: &FrequencyTable, entity: &str, format: TableFormat) -> Result<String, AggregateError> {
    ft.check_entity(entity)?;
    Ok(match format {
        TableFormat::Markdown => {
            let mut out = String::from("| Leaning | Outlet | Framing components |\n|---|---|---|\n");
            for ((leaning, outlet), groups) in outlet_rows(ft, entity) {
                let cell = groups
                    .iter()
                    .map(|(rel, mods)| {
                        let items: Vec<String> = mods.iter().map(|(m, n)| format!("{m} ({n})")).collect();
                        format!("{rel}: {}", items.join(", "))
                    })
                    .collect::<Vec<_>>()
                    .join("; ");
                out.push_str(&format!("| {} | {outlet} | {cell} |\n", leaning.title()));
            }
            out
        }
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["entity", "outlet", "leaning", "relation", "modifier", "count"])
                .expect("in-memory write");
            for ((leaning, outlet), groups) in outlet_rows(ft, entity) {
                for (rel, mods) in groups {
                    for (m, n) in mods {
                        w.write_record([entity, outlet, leaning.as_str(), rel, m, &n.to_string()])
                            .expect("in-memory write");
                    }
                }
            }
            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
        }
        TableFormat::Json => {
            let mut s = serde_json::to_string_pretty(&table_json(ft, entity)?).expect("serializes");
            s.push('\n');
            s
        }
    })
}

/// Nested entity → outlet → relation → {modifier: count}.
pub fn table_json(ft: &FrequencyTable, entity: &str) -> Result<serde_json::Value, AggregateError> {
    ft.check_entity(entity)?;
    let mut nested: BTreeMap<&str, BTreeMap<&str, BTreeMap<&str, usize>>> = BTreeMap::new();
    for (k, n) in ft.rows_for(entity) {
        *nested
            .entry(k.outlet.as_str())
            .or_default()
            .entry(k.relation.as_str())
            .or_default()
            .entry(k.modifier.as_str())
            .or_default() += n;
    }
    let mut root = serde_json::Map::new();
    root.insert(entity.to_string(), serde_json::to_value(nested).expect("serializes"));
    Ok(serde_json::Value::Object(root))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastRow {
    pub modifier: String,
    pub relation: String,
    pub left: usize,
    pub right: usize,
    /// left minus right
    pub delta: i64,
}

/// Left-leaning (left + left-center) against right-leaning (right +
/// right-center) counts per (modifier, relation), largest |delta| first.
pub fn contrast_report(ft: &FrequencyTable, entity: &str) -> Result<Vec<ContrastRow>, AggregateError> {
    ft.check_entity(entity)?;
    let mut sides: BTreeMap<(&str, &str), (usize, usize)> = BTreeMap::new();
    for (k, n) in ft.rows_for(entity) {
        let e = sides.entry((k.modifier.as_str(), k.relation.as_str())).or_default();
        match k.leaning.side() {
            Side::Left => e.0 += n,
            Side::Right => e.1 += n,
        }
    }
    let mut rows: Vec<ContrastRow> = sides
        .into_iter()
        .map(|((m, r), (left, right))| ContrastRow {
            modifier: m.to_string(),
            relation: r.to_string(),
            left,
            right,
            delta: left as i64 - right as i64,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.delta
            .unsigned_abs()
            .cmp(&a.delta.unsigned_abs())
            .then_with(|| a.modifier.cmp(&b.modifier))
            .then_with(|| a.relation.cmp(&b.relation))
    });
    Ok(rows)
}

pub fn contrast_markdown(rows: &[ContrastRow]) -> String {
    let mut out = String::from("| Modifier | Relation | Left | Right | Delta |\n|---|---|---|---|---|\n");
    for r in rows {
        let delta = if r.delta > 0 {
            format!("+{}", r.delta)
        } else {
            r.delta.to_string()
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {delta} |\n",
            r.modifier, r.relation, r.left, r.right
        ));
    }
    out
}
