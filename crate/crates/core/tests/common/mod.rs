//! Shared fixtures, oracles and property bodies for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::mpsc;

use proptest::test_runner::TestCaseError;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sufa::aggregate::{aggregate, contrast_report, render_table, TableFormat};
use sufa::coding::{open_session, CodingSession};
use sufa::clustering::{kmeans, KMeansParams};
use sufa::coref::tag_corefs;
use sufa::corpus::{Corpus, Leaning, Misc, Side, Token};
use sufa::extraction::{Direction, FramingComponent};
use sufa::lexicon::{default_lexicons, EntityLexicon, KeywordMatch};
use sufa::pipeline;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Ingests `<stem>.conllu` with `<stem>.meta.json` using the shipped lexicons.
pub fn fixture_corpus(stem: &str) -> Corpus {
    let (corpus, _) = pipeline::ingest(
        &read_fixture(&format!("{stem}.conllu")),
        &read_fixture(&format!("{stem}.meta.json")),
        &default_lexicons(),
        &[],
        2,
    )
    .unwrap();
    corpus
}

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    pub fn range(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        lo + self.below(hi_inclusive - lo + 1)
    }

    pub fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[self.below(xs.len())]
    }

    pub fn chance(&mut self, percent: usize) -> bool {
        self.below(100) < percent
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

pub const OUTLETS: [(&str, &str); 4] = [("CNN", "left"), ("NYT", "left-center"), ("WSJ", "right-center"), ("Fox", "right")];

/// (form, lemma, upos)
const VOCAB: &[(&str, &str, &str)] = &[
    ("gunman", "gunman", "NOUN"),
    ("Gunman", "gunman", "NOUN"),
    ("man", "man", "NOUN"),
    ("Ramos", "Ramos", "PROPN"),
    ("suspect", "suspect", "NOUN"),
    ("he", "he", "PRON"),
    ("He", "he", "PRON"),
    ("his", "his", "PRON"),
    ("they", "they", "PRON"),
    ("their", "their", "PRON"),
    ("them", "them", "PRON"),
    ("children", "child", "NOUN"),
    ("victims", "victim", "NOUN"),
    ("teacher", "teacher", "NOUN"),
    ("shooting", "shooting", "NOUN"),
    ("massacre", "massacre", "NOUN"),
    ("old", "old", "ADJ"),
    ("young", "young", "ADJ"),
    ("deadly", "deadly", "ADJ"),
    ("shot", "shoot", "VERB"),
    ("killed", "kill", "VERB"),
    ("the", "the", "DET"),
    ("police", "police", "NOUN"),
    ("school", "school", "NOUN"),
    ("was", "be", "AUX"),
    ("19", "19", "NUM"),
    ("two", "two", "NUM"),
    ("fatally", "fatally", "ADV"),
    ("Uvalde", "_", "PROPN"),
    (",", ",", "PUNCT"),
];

const DEPRELS: &[&str] = &[
    "amod", "nsubj", "dobj", "nsubjpass", "compound", "det", "relcl", "acl", "appos", "nummod", "poss",
    "advmod", "cc", "conj", "punct", "prep", "pobj",
];

/// A random but valid CoNLL-U corpus with its metadata sidecar.
pub fn random_conllu(seed: u64, max_docs: usize, max_sentences: usize, max_tokens: usize) -> (String, String) {
    let mut rng = Rng::new(seed);
    let mut text = String::new();
    let mut meta = Vec::new();
    for d in 0..rng.range(1, max_docs) {
        let doc_id = format!("d{d}");
        let (outlet, leaning) = *rng.pick(&OUTLETS);
        meta.push(serde_json::json!({"doc_id": doc_id, "outlet": outlet, "leaning": leaning}));
        for s in 0..rng.range(1, max_sentences) {
            if s == 0 {
                text.push_str(&format!("# newdoc id = {doc_id}\n"));
            }
            let n = rng.range(1, max_tokens);
            let words: Vec<(&str, &str, &str)> = (0..n).map(|_| *rng.pick(VOCAB)).collect();
            // Random tree: attach each node in a shuffled order to an earlier one.
            let mut order: Vec<usize> = (1..=n).collect();
            for i in (1..n).rev() {
                order.swap(i, rng.below(i + 1));
            }
            let mut head = vec![0usize; n + 1];
            for k in 1..n {
                head[order[k]] = order[rng.below(k)];
            }
            text.push_str(&format!("# sent_id = {doc_id}-s{s}\n"));
            let surface: Vec<&str> = words.iter().map(|w| w.0).collect();
            text.push_str(&format!("# text = {}\n", surface.join(" ")));
            let mwt_at = (n >= 2 && rng.chance(15)).then(|| rng.range(1, n - 1));
            let empty_after = rng.chance(10).then(|| rng.range(1, n));
            for id in 1..=n {
                if mwt_at == Some(id) {
                    text.push_str(&format!("{id}-{}\t{}{}\t_\t_\t_\t_\t_\t_\t_\t_\n", id + 1, surface[id - 1], surface[id]));
                }
                let (form, lemma, upos) = words[id - 1];
                let deprel = if head[id] == 0 { "root" } else { *rng.pick(DEPRELS) };
                let mut misc = Vec::new();
                if rng.chance(5) {
                    misc.push(format!("Entity={}", rng.pick(&["shooter", "victims", "event"])));
                }
                if rng.chance(20) {
                    misc.push("SpaceAfter=No".to_string());
                }
                let misc = if misc.is_empty() { "_".to_string() } else { misc.join("|") };
                text.push_str(&format!("{id}\t{form}\t{lemma}\t{upos}\t_\t_\t{}\t{deprel}\t_\t{misc}\n", head[id]));
                if empty_after == Some(id) {
                    text.push_str(&format!("{id}.1\tghost\tghost\tX\t_\t_\t_\t_\t{id}:dep\t_\n"));
                }
            }
            text.push('\n');
        }
    }
    (text, serde_json::to_string(&meta).unwrap())
}

fn oracle_is_mention(t: &Token, lex: &EntityLexicon) -> bool {
    let lemma = lex.keywords.contains(&t.lemma.to_lowercase());
    let form = lex.keywords.contains(&t.form.to_lowercase());
    let keyword = match lex.keyword_match {
        KeywordMatch::Lemma => lemma,
        KeywordMatch::Form => form,
        KeywordMatch::Both => lemma || form,
    };
    keyword || t.misc.get("Entity") == Some(lex.entity.as_str())
}

/// Edge-centric brute force: every tree edge, every lexicon, keep the edge
/// when its label is whitelisted and an endpoint is a mention (the head is
/// the anchor when both are).
pub fn oracle(corpus: &Corpus, lexicons: &[EntityLexicon]) -> Vec<FramingComponent> {
    let mut out = Vec::new();
    for doc in &corpus.documents {
        for s in &doc.sentences {
            let mut rows: Vec<(usize, usize, usize, FramingComponent)> = Vec::new();
            for (li, lex) in lexicons.iter().enumerate() {
                for child in &s.tokens {
                    if child.head == 0 {
                        continue;
                    }
                    let head = &s.tokens[child.head - 1];
                    let rel = child.deprel.to_lowercase();
                    let rel = if rel == "relc" { "relcl".to_string() } else { rel };
                    if !lex.relations.contains(&rel) {
                        continue;
                    }
                    let (anchor, modifier, direction) = if oracle_is_mention(head, lex) {
                        (head, child, Direction::ModifierIsChild)
                    } else if oracle_is_mention(child, lex) {
                        (child, head, Direction::ModifierIsHead)
                    } else {
                        continue;
                    };
                    rows.push((
                        anchor.id,
                        modifier.id,
                        li,
                        FramingComponent {
                            entity: lex.entity.clone(),
                            anchor: anchor.lemma.clone(),
                            modifier: modifier.lemma.clone(),
                            relation: rel,
                            direction,
                            doc_id: doc.doc_id.clone(),
                            sent_id: s.sent_id.clone(),
                            outlet: doc.outlet.clone(),
                            leaning: doc.leaning,
                            anchor_token: anchor.id,
                            modifier_token: modifier.id,
                        },
                    ));
                }
            }
            rows.sort_by_key(|r| (r.0, r.1, r.2));
            out.extend(rows.into_iter().map(|r| r.3));
        }
    }
    out
}

/// Counts token lines per outlet by scanning the raw text.
pub fn count_token_lines(conllu: &str, meta: &str) -> BTreeMap<String, usize> {
    let meta: Vec<serde_json::Value> = serde_json::from_str(meta).unwrap();
    let outlet_of: BTreeMap<String, String> = meta
        .iter()
        .map(|m| (m["doc_id"].as_str().unwrap().to_string(), m["outlet"].as_str().unwrap().to_string()))
        .collect();
    let mut counts = BTreeMap::new();
    let mut current = None;
    for line in conllu.lines() {
        if let Some(id) = line.strip_prefix("# newdoc id = ") {
            current = Some(outlet_of[id.trim()].clone());
            continue;
        }
        let first = line.split('\t').next().unwrap_or("");
        if !first.is_empty() && first.chars().all(|c| c.is_ascii_digit()) {
            *counts.entry(current.clone().unwrap()).or_insert(0) += 1;
        }
    }
    counts
}

// ---- aggregation ----------------------------------------------------------

const MODIFIERS: &[&str] = &["old", "young", "shoot", "kill", "19", "two", "Salvador", "mass", "deadly", "be"];
const RELATIONS: &[&str] = &["amod", "nsubj", "dobj", "nummod", "compound", "relcl"];
const ENTITIES: &[&str] = &["shooter", "victims", "event"];

pub fn random_components(seed: u64, max_len: usize) -> Vec<FramingComponent> {
    let mut rng = Rng::new(seed);
    let n = rng.range(0, max_len);
    (0..n)
        .map(|i| {
            let (outlet, leaning) = *rng.pick(&OUTLETS);
            FramingComponent {
                entity: rng.pick(ENTITIES).to_string(),
                anchor: "x".into(),
                modifier: rng.pick(MODIFIERS).to_string(),
                relation: rng.pick(RELATIONS).to_string(),
                direction: if rng.chance(50) { Direction::ModifierIsChild } else { Direction::ModifierIsHead },
                doc_id: format!("d{}", rng.below(5)),
                sent_id: format!("s{i}"),
                outlet: outlet.to_string(),
                leaning: leaning.parse().unwrap(),
                anchor_token: 1,
                modifier_token: 2,
            }
        })
        .collect()
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg.into()))
    }
}

/// Parses the markdown table back into (leaning title, outlet, relation, modifier) → count.
pub fn reparse_markdown(md: &str) -> BTreeMap<(String, String, String, String), usize> {
    let row = regex::Regex::new(r"^\| (Left|Left-center|Right-center|Right) \| ([^|]+) \| (.*) \|$").unwrap();
    let item = regex::Regex::new(r"^(.+) \((\d+)\)$").unwrap();
    let mut out = BTreeMap::new();
    for line in md.lines().skip(2) {
        let caps = row.captures(line).unwrap_or_else(|| panic!("unparseable row {line:?}"));
        for group in caps[3].split("; ") {
            let (rel, mods) = group.split_once(": ").unwrap();
            for m in mods.split(", ") {
                let c = item.captures(m).unwrap();
                out.insert(
                    (caps[1].to_string(), caps[2].to_string(), rel.to_string(), c[1].to_string()),
                    c[2].parse().unwrap(),
                );
            }
        }
    }
    out
}

/// Conservation, marginal consistency and exact render round-trips.
pub fn check_aggregation(components: &[FramingComponent]) -> Result<(), TestCaseError> {
    let table = aggregate(components);
    ensure(table.total() == components.len(), "sum of counts != list length")?;

    let mut by_entity_outlet: BTreeMap<(String, String), usize> = BTreeMap::new();
    for c in components {
        *by_entity_outlet.entry((c.entity.clone(), c.outlet.clone())).or_default() += 1;
    }
    let marginal = table.marginal(|k| (k.entity.clone(), k.outlet.clone()));
    ensure(marginal == by_entity_outlet, "entity x outlet marginal mismatch")?;
    let by_entity = table.marginal(|k| k.entity.clone());
    ensure(by_entity.values().sum::<usize>() == components.len(), "entity marginal does not sum")?;

    for entity in ENTITIES {
        if !table.is_empty() && !table.has_entity(entity) {
            continue;
        }
        let md = render_table(&table, entity, TableFormat::Markdown).unwrap();
        let reparsed = reparse_markdown(&md);
        let expected: BTreeMap<(String, String, String, String), usize> = table
            .entries()
            .iter()
            .filter(|(k, _)| k.entity == *entity)
            .map(|(k, n)| ((k.leaning.title().to_string(), k.outlet.clone(), k.relation.clone(), k.modifier.clone()), *n))
            .collect();
        ensure(reparsed == expected, format!("markdown round trip differs for {entity}"))?;

        let csv_text = render_table(&table, entity, TableFormat::Csv).unwrap();
        let mut from_csv = BTreeMap::new();
        for rec in csv::Reader::from_reader(csv_text.as_bytes()).records() {
            let r = rec.unwrap();
            let leaning: Leaning = r[2].parse().unwrap();
            from_csv.insert(
                (leaning.title().to_string(), r[1].to_string(), r[3].to_string(), r[4].to_string()),
                r[5].parse::<usize>().unwrap(),
            );
            ensure(&r[0] == *entity, "csv entity column")?;
        }
        ensure(from_csv == expected, format!("csv round trip differs for {entity}"))?;

        let json: serde_json::Value = serde_json::from_str(&render_table(&table, entity, TableFormat::Json).unwrap()).unwrap();
        let mut json_total = 0;
        if let Some(outlets) = json.get(*entity).and_then(|v| v.as_object()) {
            for rels in outlets.values() {
                for mods in rels.as_object().unwrap().values() {
                    for n in mods.as_object().unwrap().values() {
                        json_total += n.as_u64().unwrap() as usize;
                    }
                }
            }
        }
        ensure(json_total == expected.values().sum::<usize>(), "json total differs")?;

        let rows = contrast_report(&table, entity).unwrap();
        let pair_totals = table.marginal(|k| (k.entity.clone(), k.modifier.clone(), k.relation.clone()));
        for r in &rows {
            let total = pair_totals[&(entity.to_string(), r.modifier.clone(), r.relation.clone())];
            ensure(r.left + r.right == total, "contrast left + right != total")?;
            ensure(r.delta == r.left as i64 - r.right as i64, "delta")?;
        }
        let mut left = 0;
        for c in components.iter().filter(|c| c.entity == *entity) {
            if c.leaning.side() == Side::Left {
                left += 1;
            }
        }
        ensure(rows.iter().map(|r| r.left).sum::<usize>() == left, "left side total")?;
    }
    Ok(())
}

// ---- coref ----------------------------------------------------------------

fn without_misc(corpus: &Corpus) -> Corpus {
    let mut c = corpus.clone();
    for t in c.documents.iter_mut().flat_map(|d| d.sentences.iter_mut()).flat_map(|s| s.tokens.iter_mut()) {
        t.misc = Misc::default();
    }
    c
}

/// Tagging touches only misc, never drops an existing misc entry, and is idempotent.
pub fn check_coref(seed: u64) -> Result<(), TestCaseError> {
    let (text, meta) = random_conllu(seed, 3, 5, 10);
    let corpus = sufa::corpus::attach_metadata(
        sufa::corpus::parse_conllu(&text).unwrap(),
        &sufa::corpus::parse_metadata(&meta).unwrap(),
    )
    .unwrap();
    let lexicons = default_lexicons();
    for doc in &corpus.documents {
        let once = tag_corefs(doc, &lexicons, 2).document;
        let twice = tag_corefs(&once, &lexicons, 2).document;
        ensure(once == twice, format!("not idempotent on {}", doc.doc_id))?;
        let a = without_misc(&Corpus { documents: vec![doc.clone()] });
        let b = without_misc(&Corpus { documents: vec![once.clone()] });
        ensure(a == b, "a field other than misc changed")?;
        for (s0, s1) in doc.sentences.iter().zip(&once.sentences) {
            for (t0, t1) in s0.tokens.iter().zip(&s1.tokens) {
                let before = t0.misc.to_string();
                for item in before.split('|').filter(|i| *i != "_") {
                    let (k, v) = item.split_once('=').unwrap_or((item, ""));
                    ensure(t1.misc.get(k) == Some(v), "existing misc entry lost")?;
                }
            }
        }
    }
    Ok(())
}

// ---- coding ---------------------------------------------------------------

const LABELS: &[&str] = &["age", "violence", "identity", "scale", "grief", "blame"];

/// Applies `n` valid random mutations, checking coverage after each.
pub fn check_coding(seed: u64, n: usize) -> Result<CodingSession, TestCaseError> {
    let mut rng = Rng::new(seed);
    let mut comps = random_components(seed ^ 0x5eed, 60);
    // Guarantee the entity exists.
    comps.extend(random_components(seed, 5).into_iter().map(|mut c| {
        c.entity = "shooter".into();
        c
    }));
    comps.push(FramingComponent {
        entity: "shooter".into(),
        ..random_components(7, 60).into_iter().next().unwrap_or_else(|| random_components(8, 60).remove(0))
    });
    let mut session = open_session(&comps, "shooter", "prop").unwrap();
    let pairs: Vec<_> = session.pairs.iter().cloned().collect();
    let mut fresh = 0;
    for step in 0..n {
        let choice = rng.below(10);
        let memberships: Vec<(String, sufa::coding::Pair)> = session
            .groups
            .iter()
            .flat_map(|g| g.members.iter().map(move |p| (g.label.clone(), p.clone())))
            .collect();
        if choice < 2 && !memberships.is_empty() {
            let (label, p) = rng.pick(&memberships).clone();
            session.unassign(&p.modifier, &p.relation, &label).map_err(|e| TestCaseError::fail(e.to_string()))?;
        } else if choice < 3 && session.groups.len() >= 2 {
            let i = rng.below(session.groups.len());
            let mut j = rng.below(session.groups.len() - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = (session.groups[i].label.clone(), session.groups[j].label.clone());
            fresh += 1;
            session
                .merge_groups(&a, &b, &format!("merged-{fresh}"))
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
        } else {
            let p = rng.pick(&pairs).clone();
            let label = rng.pick(LABELS);
            session.assign(&p.modifier, &p.relation, label).map_err(|e| TestCaseError::fail(e.to_string()))?;
        }
        ensure(session.coverage_holds(), format!("coverage broken after step {step}"))?;
        ensure(session.history.len() == step + 1, "history length != operations applied")?;
    }
    Ok(session)
}

// ---- k-means --------------------------------------------------------------

pub fn sse(rows: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let d = rows[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = rows.iter().zip(labels).filter(|(_, l)| **l == c).map(|(r, _)| r).collect();
        if members.is_empty() {
            continue;
        }
        let mean: Vec<f64> = (0..d).map(|j| members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64).collect();
        total += members.iter().map(|r| r.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sum::<f64>();
    }
    total
}

/// Best 2-partition by exhaustive search; point 0 is fixed in part 0.
pub fn best_two_partition(rows: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = rows.len();
    let mut best = (Vec::new(), f64::INFINITY);
    for mask in 1u32..(1 << (n - 1)) {
        let labels: Vec<usize> = (0..n).map(|i| if i > 0 && mask >> (i - 1) & 1 == 1 { 1 } else { 0 }).collect();
        let cost = sse(rows, &labels, 2);
        if cost < best.1 {
            best = (labels, cost);
        }
    }
    best
}

/// Same partition up to relabelling.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut map = BTreeMap::new();
    let mut used = BTreeSet::new();
    for (x, y) in a.iter().zip(b) {
        match map.get(x) {
            Some(v) if v != y => return false,
            Some(_) => {}
            None => {
                if !used.insert(*y) {
                    return false;
                }
                map.insert(*x, *y);
            }
        }
    }
    true
}

/// Two tight blobs of 2..=8 points in the plane, at least one per blob.
pub fn planted_blobs(seed: u64) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rng = Rng::new(seed);
    let n = rng.range(2, 8);
    let in_a = rng.range(1, n - 1);
    let (cx, cy) = (rng.unit() * 20.0 + 10.0, rng.unit() * 20.0 - 10.0);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let (bx, by) = if i < in_a { (0.0, 0.0) } else { (cx, cy) };
            vec![bx + rng.unit() - 0.5, by + rng.unit() - 0.5]
        })
        .collect();
    let words = (0..n).map(|i| format!("p{i}")).collect();
    (words, rows)
}

pub fn check_planted(seed: u64) -> Result<(), TestCaseError> {
    let (words, rows) = planted_blobs(seed);
    let result = kmeans(&words, &rows, KMeansParams::new(2, seed)).unwrap();
    let labels: Vec<usize> = words.iter().map(|w| result.assignments[w]).collect();
    let (best, cost) = best_two_partition(&rows);
    ensure(same_partition(&labels, &best), format!("partition differs from optimum (seed {seed})"))?;
    ensure((result.inertia - cost).abs() <= 1e-9 * (1.0 + cost), "inertia differs from optimum")?;
    check_monotone(&result.inertia_trace)
}

pub fn check_monotone(trace: &[f64]) -> Result<(), TestCaseError> {
    for w in trace.windows(2) {
        ensure(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), format!("inertia rose from {} to {}", w[0], w[1]))?;
    }
    Ok(())
}

/// Random points (with duplicates) in 1..=4 dimensions for any valid k.
pub fn check_lloyd_monotone(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = Rng::new(seed);
    let n = rng.range(1, 40);
    let d = rng.range(1, 4);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| (rng.below(7) as f64) + rng.unit() * if rng.chance(50) { 1.0 } else { 0.0 }).collect())
        .collect();
    let words: Vec<String> = (0..n).map(|i| format!("w{i:02}")).collect();
    let distinct = rows
        .iter()
        .map(|r| r.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        .collect::<BTreeSet<_>>()
        .len();
    let k = rng.range(1, distinct);
    let result = kmeans(&words, &rows, KMeansParams::new(k, seed)).unwrap();
    ensure(result.centroids.len() == k, "centroid count")?;
    ensure(result.assignments.values().all(|&l| l < k), "label out of range")?;
    check_monotone(&result.inertia_trace)
}

// ---- HTTP -----------------------------------------------------------------

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

/// (status, body) for a request with an optional JSON body.
pub fn http(method: &str, url: &str, body: Option<serde_json::Value>) -> (u16, String) {
    let agent = agent();
    let resp = match (method, body) {
        ("GET", _) => agent.get(url).call(),
        ("POST", Some(b)) => agent.post(url).send_json(&b),
        ("POST", None) => agent.post(url).send_empty(),
        ("PUT", Some(b)) => agent.put(url).send_json(&b),
        ("PATCH", Some(b)) => agent.patch(url).send_json(&b),
        (m, _) => panic!("unsupported {m}"),
    };
    let mut resp = resp.unwrap_or_else(|e| panic!("{method} {url}: {e}"));
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_to_string().unwrap())
}

pub fn json_of(body: &str) -> serde_json::Value {
    serde_json::from_str(body).unwrap_or_else(|e| panic!("not JSON ({e}): {body}"))
}

/// One-shot HTTP server answering each request with `status` and `body`.
/// Request bodies are sent back through the channel.
pub fn mock_embedding_server(status: u16, body: String, requests: usize) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/embed", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for stream in listener.incoming().take(requests) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let _ = tx.send(String::from_utf8(buf).unwrap());
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, rx)
}

pub fn sufa() -> std::process::Command {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_sufa"));
    cmd.env_remove("SUFA_ENDPOINT").env_remove("SUFA_SESSIONS");
    cmd
}

/// Runs the binary, returning (exit code, stdout, stderr).
pub fn run_sufa(args: &[&str]) -> (i32, String, String) {
    let out = sufa().args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

/// Runs ingest, extract, table, contrast and a seeded cluster over a large
/// random corpus twice with `--jobs 1` and twice with `--jobs 8`; every
/// output file and stream must match byte for byte. Returns the component count.
pub fn check_cli_determinism(seed: u64) -> Result<usize, String> {
    let dir = tempfile::tempdir().unwrap();
    let (conllu, meta) = random_conllu(seed, 120, 8, 25);
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    std::fs::write(p("in.conllu"), conllu).unwrap();
    std::fs::write(p("in.meta.json"), meta).unwrap();
    let (input, sidecar) = (p("in.conllu"), p("in.meta.json"));
    let vectors = fixture("toy_vectors.txt");
    let vectors = vectors.to_str().unwrap();
    let mut runs: Vec<(String, Vec<u8>)> = Vec::new();
    for (i, jobs) in ["1", "1", "8", "8"].into_iter().enumerate() {
        let snap = p(&format!("corpus{i}.json"));
        let comps = p(&format!("components{i}.jsonl"));
        let steps: [Vec<&str>; 5] = [
            vec!["ingest", &input, "--meta", &sidecar, "--out", &snap, "--jobs", jobs],
            vec!["extract", &snap, "--out", &comps, "--jobs", jobs],
            vec!["table", &comps, "--entity", "victims", "--format", "csv"],
            vec!["contrast", &comps, "--entity", "victims", "--format", "json"],
            vec!["cluster", &comps, "--entity", "victims", "--vectors", vectors, "-k", "2", "--seed", "7", "--sweep"],
        ];
        let mut transcript = Vec::new();
        for args in &steps {
            let out = sufa().args(args).output().unwrap();
            let code = out.status.code().unwrap_or(-1);
            if i < 2 && args[0] != "cluster" && code != 0 {
                return Err(format!("{} exited {code}: {}", args[0], String::from_utf8_lossy(&out.stderr)));
            }
            transcript.extend(format!("{} {code}\n", args[0]).into_bytes());
            transcript.extend(out.stdout);
            transcript.extend(out.stderr);
        }
        transcript.extend(std::fs::read(&snap).unwrap());
        transcript.extend(std::fs::read(&comps).unwrap());
        runs.push((jobs.to_string(), transcript));
    }
    for (jobs, run) in &runs[1..] {
        if *run != runs[0].1 {
            return Err(format!("a run with --jobs {jobs} differs from the first --jobs 1 run"));
        }
    }
    let comps = std::fs::read_to_string(p("components0.jsonl")).unwrap();
    Ok(comps.lines().count())
}
