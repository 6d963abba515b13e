//! Deterministic k-means over modifier embeddings.
//!
//! Points are sorted by word before seeding, so the partition depends only
//! on the (word, vector) set and the seed, never on input order. Seeding is
//! k-means++ driven by a ChaCha8 stream.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{embed_words, norm, VectorStore};
use crate::extraction::FramingComponent;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("k = {k} exceeds the {distinct} distinct points")]
    KTooLarge { k: usize, distinct: usize },
    #[error("all points are identical; cannot form {0} clusters")]
    DegenerateInput(usize),
    #[error("no points to cluster")]
    EmptyInput,
    #[error("{0}")]
    InvalidParameter(String),
    #[error("word {0:?} appears twice")]
    DuplicateWord(String),
    #[error("silhouette needs at least two non-empty clusters")]
    SingleCluster,
    #[error("silhouette needs at least two points")]
    TooFewPoints,
    #[error("entity {0} has no components")]
    UnknownEntity(String),
    #[error("none of the {} modifiers has a vector", oov.len())]
    NoEmbeddableModifiers { oov: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Inertia after every assignment step, starting with the seeding.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn distinct_count(rows: &[&[f64]]) -> usize {
    rows.iter()
        .map(|r| r.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        .collect::<BTreeSet<_>>()
        .len()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding: first centre uniform, the rest drawn with
/// probability proportional to squared distance from the chosen set.
fn seed_centroids(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let first = ((unit(rng) * n as f64) as usize).min(n - 1);
    let mut centroids = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let target = unit(rng) * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("a point away from every chosen centre exists");
        centroids.push(points[pick].to_vec());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points[pick]));
        }
    }
    centroids
}

fn assign(points: &[&[f64]], centroids: &mut [Vec<f64>], labels: &mut [usize]) -> f64 {
    for (i, p) in points.iter().enumerate() {
        labels[i] = nearest(p, centroids).0;
    }
    // empty clusters take the point farthest from its own centroid
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            break;
        };
        let far = (0..points.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(points[a], &centroids[labels[a]]);
                let db = sq_dist(points[b], &centroids[labels[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("more points than clusters");
        labels[far] = empty;
        centroids[empty] = points[far].to_vec();
    }
    points
        .iter()
        .zip(labels.iter())
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

fn means(points: &[&[f64]], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c as f64;
        }
    }
    sums
}

/// Lloyd's algorithm from k-means++ seeds. Stops when no centroid moves by
/// `tol` or more, or after `max_iter` updates.
pub fn kmeans<S: AsRef<str>>(words: &[S], rows: &[Vec<f64>], params: KMeansParams) -> Result<ClusterResult, ClusterError> {
    let KMeansParams { k, seed, max_iter, tol } = params;
    if k == 0 {
        return Err(ClusterError::InvalidK);
    }
    if max_iter == 0 {
        return Err(ClusterError::InvalidParameter("max_iter must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(ClusterError::InvalidParameter("tol must be positive".into()));
    }
    if words.len() != rows.len() {
        return Err(ClusterError::InvalidParameter(format!(
            "{} words for {} vectors",
            words.len(),
            rows.len()
        )));
    }
    if rows.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(ClusterError::InvalidParameter("vectors differ in length".into()));
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| words[a].as_ref().cmp(words[b].as_ref()));
    if let Some(w) = order.windows(2).find(|w| words[w[0]].as_ref() == words[w[1]].as_ref()) {
        return Err(ClusterError::DuplicateWord(words[w[0]].as_ref().to_string()));
    }
    let points: Vec<&[f64]> = order.iter().map(|&i| rows[i].as_slice()).collect();
    let distinct = distinct_count(&points);
    if distinct == 1 && k > 1 {
        return Err(ClusterError::DegenerateInput(k));
    }
    if k > distinct {
        return Err(ClusterError::KTooLarge { k, distinct });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(&points, k, &mut rng);
    let mut labels = vec![0usize; points.len()];
    let mut trace = vec![assign(&points, &mut centroids, &mut labels)];
    let mut iterations = 0;
    while iterations < max_iter {
        let updated = means(&points, &labels, k, dim);
        let shift = updated
            .iter()
            .zip(&centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        iterations += 1;
        trace.push(assign(&points, &mut centroids, &mut labels));
        if shift < tol {
            break;
        }
    }

    let assignments = order
        .iter()
        .zip(&labels)
        .map(|(&i, &l)| (words[i].as_ref().to_string(), l))
        .collect();
    Ok(ClusterResult {
        k,
        assignments,
        centroids,
        inertia: *trace.last().expect("non-empty trace"),
        iterations,
        seed,
        inertia_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Silhouette {
    pub mean: f64,
    pub values: Vec<f64>,
}

/// Mean silhouette with Euclidean distance. Points alone in their cluster
/// score 0, and so does any point with a = b = 0.
pub fn silhouette(rows: &[Vec<f64>], labels: &[usize]) -> Result<Silhouette, ClusterError> {
    if rows.len() < 2 {
        return Err(ClusterError::TooFewPoints);
    }
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    if clusters.len() < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let dist = |i: usize, j: usize| sq_dist(&rows[i], &rows[j]).sqrt();
    let values: Vec<f64> = (0..rows.len())
        .map(|i| {
            let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
            for j in (0..rows.len()).filter(|&j| j != i) {
                let e = sums.entry(labels[j]).or_default();
                e.0 += dist(i, j);
                e.1 += 1;
            }
            let Some(&(own, own_n)) = sums.get(&labels[i]) else {
                return 0.0;
            };
            let a = own / own_n as f64;
            let b = sums
                .iter()
                .filter(|(&l, _)| l != labels[i])
                .map(|(_, &(s, n))| s / n as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(Silhouette { mean, values })
}

/// Silhouette for each k in 2..=min(10, n - 1).
pub fn silhouette_sweep<S: AsRef<str>>(
    words: &[S],
    rows: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<(usize, f64)>, ClusterError> {
    let upper = 10.min(rows.len().saturating_sub(1));
    let mut out = Vec::new();
    for k in 2..=upper {
        let result = match kmeans(words, rows, KMeansParams::new(k, seed)) {
            Ok(r) => r,
            Err(ClusterError::KTooLarge { .. }) | Err(ClusterError::DegenerateInput(_)) => break,
            Err(e) => return Err(e),
        };
        let labels: Vec<usize> = words.iter().map(|w| result.assignments[w.as_ref()]).collect();
        out.push((k, silhouette(rows, &labels)?.mean));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberCount {
    pub word: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameGroupReport {
    pub label: String,
    pub modifiers: Vec<MemberCount>,
    pub inertia_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub entity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    pub k: usize,
    pub seed: u64,
    pub groups: Vec<FrameGroupReport>,
    pub oov: Vec<String>,
    pub silhouette: Option<f64>,
    pub inertia: f64,
    pub iterations: usize,
}

/// Distinct lowercased modifiers of one entity with their occurrence
/// counts and length-normalized vectors. Words without a usable vector are
/// listed in `oov`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifierMatrix {
    pub words: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub counts: BTreeMap<String, usize>,
    pub oov: Vec<String>,
}

pub fn modifier_matrix(
    components: &[FramingComponent],
    store: &VectorStore,
    entity: &str,
    relation: Option<&str>,
) -> Result<ModifierMatrix, ClusterError> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for c in components
        .iter()
        .filter(|c| c.entity == entity && relation.is_none_or(|r| c.relation == r))
    {
        *counts.entry(c.modifier.to_lowercase()).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(ClusterError::UnknownEntity(entity.to_string()));
    }
    let words: Vec<&String> = counts.keys().collect();
    let embedded = embed_words(store, &words);
    let mut oov = embedded.oov;
    let mut kept_words = Vec::new();
    let mut rows = Vec::new();
    for (w, v) in embedded.words.into_iter().zip(embedded.rows) {
        let n = norm(&v);
        if n == 0.0 {
            oov.push(w);
            continue;
        }
        rows.push(v.iter().map(|x| x / n).collect::<Vec<_>>());
        kept_words.push(w);
    }
    oov.sort();
    if rows.is_empty() {
        return Err(ClusterError::NoEmbeddableModifiers { oov });
    }
    Ok(ModifierMatrix {
        words: kept_words,
        rows,
        counts,
        oov,
    })
}

/// Clusters the distinct modifiers of one entity (optionally restricted to
/// one relation) on length-normalized vectors. Groups come back largest
/// first by total occurrence count and are labelled `cluster-0`, `cluster-1`, ...
pub fn cluster_components(
    components: &[FramingComponent],
    store: &VectorStore,
    entity: &str,
    relation: Option<&str>,
    params: KMeansParams,
) -> Result<ClusterReport, ClusterError> {
    let ModifierMatrix {
        words: kept_words,
        rows,
        counts,
        oov,
    } = modifier_matrix(components, store, entity, relation)?;

    let result = kmeans(&kept_words, &rows, params)?;
    let mut members: Vec<Vec<MemberCount>> = vec![Vec::new(); result.k];
    let mut cluster_inertia = vec![0.0; result.k];
    for (w, row) in kept_words.iter().zip(&rows) {
        let l = result.assignments[w.as_str()];
        members[l].push(MemberCount {
            word: w.clone(),
            count: counts[w.as_str()],
        });
        cluster_inertia[l] += sq_dist(row, &result.centroids[l]);
    }
    let total_inertia: f64 = cluster_inertia.iter().sum();
    let mut groups: Vec<(usize, Vec<MemberCount>, f64)> = members
        .into_iter()
        .zip(cluster_inertia)
        .map(|(mut m, inertia)| {
            m.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.word.cmp(&b.word)));
            let total = m.iter().map(|x| x.count).sum();
            let share = if total_inertia > 0.0 { inertia / total_inertia } else { 0.0 };
            (total, m, share)
        })
        .collect();
    groups.sort_by(|a, b| {
        Reverse(a.0)
            .cmp(&Reverse(b.0))
            .then_with(|| a.1[0].word.cmp(&b.1[0].word))
    });

    let labels: Vec<usize> = kept_words.iter().map(|w| result.assignments[w.as_str()]).collect();
    let silhouette = if result.k >= 2 {
        silhouette(&rows, &labels).ok().map(|s| s.mean)
    } else {
        None
    };

    Ok(ClusterReport {
        entity: entity.to_string(),
        relation: relation.map(str::to_string),
        k: result.k,
        seed: result.seed,
        groups: groups
            .into_iter()
            .enumerate()
            .map(|(i, (_, modifiers, inertia_share))| FrameGroupReport {
                label: format!("cluster-{i}"),
                modifiers,
                inertia_share,
            })
            .collect(),
        oov,
        silhouette,
        inertia: result.inertia,
        iterations: result.iterations,
    })
}
