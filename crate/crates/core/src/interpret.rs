//! Pole interpretation: neighbor retrieval, per-pole k-means with silhouette
//! selection, coherence/alignment scoring and snippet retrieval.

use std::collections::HashSet;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composer::Pcv;
use crate::corpus::EmbeddingStore;
use crate::error::{Result, SsdError};

pub const DEFAULT_NEIGHBORS: usize = 100;
pub const DEFAULT_K_RANGE: (usize, usize) = (2, 5);
pub const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pole {
    Positive,
    Negative,
}

impl Pole {
    pub fn sign(self) -> f64 {
        match self {
            Pole::Positive => 1.0,
            Pole::Negative => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Pole::Positive => "+",
            Pole::Negative => "-",
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        (dot(a, b) / d).clamp(-1.0, 1.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub word: String,
    pub index: usize,
    pub cosine: f64,
}

/// Restricts which vocabulary entries may be returned as neighbors.
#[derive(Debug, Clone, Default)]
pub struct NeighborFilter {
    pub exclude: HashSet<String>,
    pub restrict_to: Option<HashSet<String>>,
}

impl NeighborFilter {
    fn admits(&self, word: &str) -> bool {
        !self.exclude.contains(word) && self.restrict_to.as_ref().is_none_or(|r| r.contains(word))
    }
}

/// The `n` vocabulary words closest in cosine to `sign · gradient`.
/// Ties resolve by vocabulary order; zero vectors are never returned.
pub fn pole_neighbors(
    gradient: &[f64],
    store: &EmbeddingStore,
    pole: Pole,
    n: usize,
    filter: &NeighborFilter,
) -> Result<Vec<Neighbor>> {
    if gradient.len() != store.dim() {
        return Err(SsdError::DimensionMismatch {
            expected: store.dim(),
            got: gradient.len(),
        });
    }
    let g_norm = norm(gradient);
    if g_norm == 0.0 {
        return Err(SsdError::Degenerate("gradient is zero".into()));
    }
    let s = pole.sign() / g_norm;
    let mut scored: Vec<(usize, f64)> = (0..store.len())
        .filter(|&i| store.norm(i) > 0.0 && filter.admits(store.word(i)))
        .map(|i| (i, s * dot(store.vector(i), gradient) / store.norm(i)))
        .collect();
    if n > scored.len() {
        warn!("requested {n} neighbors but only {} candidates exist", scored.len());
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(n);
    Ok(scored
        .into_iter()
        .map(|(index, cosine)| Neighbor {
            word: store.word(index).to_string(),
            index,
            cosine: cosine.clamp(-1.0, 1.0),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seed(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let m = points.len();
    let mut centroids = vec![points[rng.random_range(0..m)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // guard against rounding landing on an already chosen point
            if d2[chosen] == 0.0 {
                chosen = d2
                    .iter()
                    .enumerate()
                    .rev()
                    .find(|(_, &w)| w > 0.0)
                    .map_or(chosen, |(i, _)| i);
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeansResult {
    let m = points.len();
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignments = vec![usize::MAX; m];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        // update; an emptied cluster is re-seeded at the point farthest from its centroid
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..m)
                    .filter(|&i| counts[assignments[i]] > 1)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centroids[assignments[a]]);
                        let db = sq_dist(&points[b], &centroids[assignments[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                let old = assignments[far];
                counts[old] -= 1;
                for (s, v) in sums[old].iter_mut().zip(&points[far]) {
                    *s -= v;
                }
                assignments[far] = c;
                counts[c] = 1;
                sums[c] = points[far].clone();
                changed = true;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s / n).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let wcss = points
        .iter()
        .zip(&assignments)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    KMeansResult {
        assignments,
        centroids,
        wcss,
    }
}

/// Lloyd's k-means with k-means++ seeding; the best of
/// [`KMEANS_RESTARTS`] runs by within-cluster sum of squares is kept.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 || k > points.len() {
        return Err(SsdError::Config(format!(
            "k-means needs 1 <= k <= {} points, got k={k}",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..KMEANS_RESTARTS {
        let init = plus_plus_seed(points, k, &mut rng);
        let run = lloyd(points, init);
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean silhouette with Euclidean distances. Singleton clusters score 0.
pub fn silhouette_mean(points: &[Vec<f64>], assignments: &[usize]) -> Result<f64> {
    if points.len() != assignments.len() {
        return Err(SsdError::DimensionMismatch {
            expected: points.len(),
            got: assignments.len(),
        });
    }
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    let labels: Vec<usize> = (0..k).filter(|&c| sizes[c] > 0).collect();
    if labels.len() < 2 {
        return Err(SsdError::Degenerate("silhouette needs at least two clusters".into()));
    }
    let m = points.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..m {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..m {
            if i != j {
                sums[assignments[j]] += sq_dist(&points[i], &points[j]).sqrt();
            }
        }
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = labels
            .iter()
            .filter(|&&c| c != own)
            .map(|&c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / m as f64)
}

/// Mean pairwise cosine over distinct member pairs; 1 for a single member.
pub fn cluster_coherence(members: &[&[f64]]) -> f64 {
    if members.len() < 2 {
        return 1.0;
    }
    let units: Vec<Vec<f64>> = members.iter().map(|v| unit(v)).collect();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            sum += dot(&units[i], &units[j]);
            pairs += 1;
        }
    }
    (sum / pairs as f64).clamp(-1.0, 1.0)
}

/// Cosine between a cluster centroid and the gradient signed for its pole.
pub fn cluster_alignment(centroid: &[f64], gradient: &[f64], pole: Pole) -> Result<f64> {
    if norm(centroid) == 0.0 {
        return Err(SsdError::Degenerate("cluster centroid is zero".into()));
    }
    Ok(pole.sign() * cosine(centroid, gradient))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoleCluster {
    pub pole: Pole,
    /// Ordered by cosine to the signed gradient, highest first.
    pub member_words: Vec<String>,
    pub centroid: Vec<f64>,
    pub coherence: f64,
    pub alignment: f64,
    pub size: usize,
}

impl PoleCluster {
    pub fn score(&self) -> f64 {
        0.5 * (self.coherence + self.alignment)
    }
}

/// Clusters of one pole and the silhouette that chose their number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoleClustering {
    pub pole: Pole,
    pub k: usize,
    /// `None` when the single-cluster fallback was used.
    pub silhouette: Option<f64>,
    pub clusters: Vec<PoleCluster>,
}

/// Index of the maximal score, the earliest one on ties.
pub fn first_argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Clusters one pole's neighbors, choosing k in `k_range` by silhouette.
pub fn cluster_pole(
    neighbors: &[Neighbor],
    store: &EmbeddingStore,
    gradient: &[f64],
    pole: Pole,
    k_range: (usize, usize),
    seed: u64,
) -> Result<PoleClustering> {
    if neighbors.is_empty() {
        return Err(SsdError::Degenerate("no neighbors to cluster".into()));
    }
    let (k_min, k_max) = k_range;
    if k_min == 0 || k_min > k_max {
        return Err(SsdError::Config(format!("invalid cluster range [{k_min}, {k_max}]")));
    }
    let points: Vec<Vec<f64>> = neighbors.iter().map(|n| unit(store.vector(n.index))).collect();
    let m = points.len();

    let (k, silhouette, assignments) = if m < k_min.max(2) || k_max < 2 {
        if m < k_min {
            warn!(
                "{} {} pole neighbors < k_min {k_min}; using one cluster",
                m,
                pole.symbol()
            );
        }
        (1, None, vec![0; m])
    } else {
        let ks: Vec<usize> = (k_min.max(2)..=k_max.min(m)).collect();
        let mut runs = Vec::with_capacity(ks.len());
        let mut scores = Vec::with_capacity(ks.len());
        for &k in &ks {
            let run = kmeans(&points, k, seed)?;
            scores.push(silhouette_mean(&points, &run.assignments).unwrap_or(0.0));
            runs.push(run);
        }
        let best = first_argmax(&scores).unwrap_or(0);
        (ks[best], Some(scores[best]), runs.swap_remove(best).assignments)
    };

    let mut clusters = Vec::with_capacity(k);
    for c in 0..k {
        let idx: Vec<usize> = (0..m).filter(|&i| assignments[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        let dim = store.dim();
        let mut mean = vec![0.0; dim];
        for &i in &idx {
            for (acc, v) in mean.iter_mut().zip(&points[i]) {
                *acc += v;
            }
        }
        let centroid = unit(&mean);
        let members: Vec<&[f64]> = idx.iter().map(|&i| points[i].as_slice()).collect();
        clusters.push(PoleCluster {
            pole,
            member_words: idx.iter().map(|&i| neighbors[i].word.clone()).collect(),
            coherence: cluster_coherence(&members),
            alignment: cluster_alignment(&centroid, gradient, pole)?,
            centroid,
            size: idx.len(),
        });
    }
    // larger clusters first; members keep neighbor rank order
    clusters.sort_by_key(|c| std::cmp::Reverse(c.size));
    Ok(PoleClustering {
        pole,
        k,
        silhouette,
        clusters,
    })
}

/// Size-weighted mean of `½(coherence + alignment)` over clusters.
pub fn interpretability_score(clusters: &[PoleCluster]) -> f64 {
    let total: usize = clusters.iter().map(|c| c.size).sum();
    if total == 0 {
        return 0.0;
    }
    clusters.iter().map(|c| c.size as f64 * c.score()).sum::<f64>() / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snippet {
    pub author_id: String,
    pub cosine: f64,
}

/// Authors whose PCVs are most cosine-aligned with `centroid`.
pub fn snippets_for_cluster(centroid: &[f64], pcvs: &[Pcv], top_m: usize) -> Vec<Snippet> {
    let mut scored: Vec<(usize, f64)> = pcvs
        .iter()
        .enumerate()
        .map(|(i, p)| (i, cosine(&p.vector, centroid)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
        .into_iter()
        .take(top_m)
        .map(|(i, c)| Snippet {
            author_id: pcvs[i].author_id.clone(),
            cosine: c,
        })
        .collect()
}

/// Settings shared by every interpretation run.
#[derive(Debug, Clone)]
pub struct InterpretSettings {
    pub neighbors_per_pole: usize,
    pub k_range: (usize, usize),
    pub seed: u64,
    pub filter: NeighborFilter,
}

impl Default for InterpretSettings {
    fn default() -> Self {
        InterpretSettings {
            neighbors_per_pole: DEFAULT_NEIGHBORS,
            k_range: DEFAULT_K_RANGE,
            seed: 0,
            filter: NeighborFilter::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpretabilityReport {
    pub poles: Vec<PoleClustering>,
    pub score: f64,
    pub neighbors_per_pole: usize,
}

impl InterpretabilityReport {
    pub fn clusters(&self) -> impl Iterator<Item = &PoleCluster> {
        self.poles.iter().flat_map(|p| p.clusters.iter())
    }

    /// Unweighted mean coherence over all clusters.
    pub fn mean_coherence(&self) -> f64 {
        let (sum, n) = self
            .clusters()
            .fold((0.0, 0usize), |(s, n), c| (s + c.coherence, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Retrieves and clusters both poles of `gradient`.
pub fn interpret(
    gradient: &[f64],
    store: &EmbeddingStore,
    settings: &InterpretSettings,
) -> Result<InterpretabilityReport> {
    let run = |pole| -> Result<PoleClustering> {
        let nb = pole_neighbors(gradient, store, pole, settings.neighbors_per_pole, &settings.filter)?;
        cluster_pole(&nb, store, gradient, pole, settings.k_range, settings.seed)
    };
    let (pos, neg) = rayon::join(|| run(Pole::Positive), || run(Pole::Negative));
    let poles = vec![pos?, neg?];
    let all: Vec<PoleCluster> = poles.iter().flat_map(|p| p.clusters.iter().cloned()).collect();
    Ok(InterpretabilityReport {
        score: interpretability_score(&all),
        poles,
        neighbors_per_pole: settings.neighbors_per_pole,
    })
}
