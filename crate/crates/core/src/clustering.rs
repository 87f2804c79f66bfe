//! Partition summaries of a posterior sample: similarity matrix, variation of
//! information, point estimate and credible ball.
//!
//! All logarithms are natural.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::sampler::DrawSet;

/// Bounds closer than this are treated as ties.
const TIE_TOL: f64 = 1e-12;

/// Cluster labels in canonical form: labels appear in order 0, 1, 2, ...
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<u32>,
    n_clusters: usize,
}

impl Partition {
    pub fn new<T: Copy + Eq + std::hash::Hash>(labels: &[T]) -> Self {
        let mut map = HashMap::new();
        let labels: Vec<u32> = labels
            .iter()
            .map(|l| {
                let next = map.len() as u32;
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self {
            labels,
            n_clusters: map.len(),
        }
    }

    pub fn together(n: usize) -> Self {
        Self::new(&vec![0u32; n])
    }

    pub fn singletons(n: usize) -> Self {
        Self::new(&(0..n as u32).collect::<Vec<_>>())
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters];
        for &l in &self.labels {
            s[l as usize] += 1;
        }
        s
    }

    /// Item indices per block, blocks in label order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut b = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            b[l as usize].push(i);
        }
        b
    }
}

#[derive(Serialize, Deserialize)]
struct PartitionRepr {
    labels: Vec<u32>,
    n_clusters: usize,
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PartitionRepr {
            labels: self.labels.clone(),
            n_clusters: self.n_clusters,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PartitionRepr::deserialize(d)?;
        let p = Partition::new(&r.labels);
        if p.n_clusters != r.n_clusters {
            return Err(serde::de::Error::custom(format!(
                "n_clusters is {} but labels have {} blocks",
                r.n_clusters, p.n_clusters
            )));
        }
        Ok(p)
    }
}

pub fn n_clusters(p: &Partition) -> usize {
    p.n_clusters()
}

/// Canonical partitions of every retained draw, in draw order.
pub fn partitions(draws: &DrawSet) -> Vec<Partition> {
    draws.draws.iter().map(|d| Partition::new(&d.allocations)).collect()
}

/// Posterior similarity matrix, stored densely in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Psm {
    n: usize,
    values: Vec<f64>,
}

impl Psm {
    /// Fraction of partitions placing each pair of items together.
    pub fn from_partitions(parts: &[Partition], exec: Exec) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyDraws)?;
        let n = first.len();
        if let Some(p) = parts.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: p.len(),
            });
        }
        // integer co-clustering counts per row; each row is independent
        let blocks: Vec<Vec<Vec<usize>>> = exec.map(parts.len(), |t| parts[t].blocks());
        let mut counts = vec![0u32; n * n];
        exec.fill_chunks(&mut counts, n, |start, row| {
            let i = start / n;
            for (p, b) in parts.iter().zip(&blocks) {
                for &j in &b[p.labels[i] as usize] {
                    row[j] += 1;
                }
            }
        });
        let t = parts.len() as f64;
        let values = counts
            .into_iter()
            .map(|c| if c as usize == parts.len() { 1.0 } else { c as f64 / t })
            .collect();
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

pub fn psm(draws: &DrawSet) -> Result<Psm> {
    Psm::from_partitions(&partitions(draws), Exec::default())
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: a, found: b })
    }
}

fn xlogx_sum(counts: impl Iterator<Item = usize>) -> f64 {
    counts.map(|c| c as f64 * (c as f64).ln()).sum()
}

/// Variation of information `H(p1) + H(p2) − 2 I(p1, p2)`.
pub fn vi(p1: &Partition, p2: &Partition) -> Result<f64> {
    check_len(p1.len(), p2.len())?;
    let n = p1.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut pairs: Vec<(u32, u32)> = p1.labels.iter().copied().zip(p2.labels.iter().copied()).collect();
    pairs.sort_unstable();
    let mut joint = Vec::new();
    let mut run = 1;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            joint.push(run);
            run = 1;
        }
    }
    joint.push(run);
    let h = xlogx_sum(p1.sizes().into_iter()) + xlogx_sum(p2.sizes().into_iter());
    let v = (h - 2.0 * xlogx_sum(joint.into_iter())) / n as f64;
    Ok(v.max(0.0))
}

/// Lower bound on the posterior expected VI of `candidate`:
/// `(1/n) Σ_i [ln |c_i| + ln Σ_j p_ij − 2 ln Σ_{j ∈ c_i} p_ij]`.
pub fn expected_vi_bound(candidate: &Partition, psm: &Psm) -> Result<f64> {
    check_len(psm.n(), candidate.len())?;
    let blocks = candidate.blocks();
    let mut total = 0.0;
    for i in 0..psm.n() {
        let row = psm.row(i);
        let block = &blocks[candidate.labels[i] as usize];
        let within: f64 = block.iter().map(|&j| row[j]).sum();
        let all: f64 = row.iter().sum();
        total += (block.len() as f64).ln() + all.ln() - 2.0 * within.ln();
    }
    Ok(total / psm.n() as f64)
}

/// Point estimate with its bound, and where it was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPartition {
    pub partition: Partition,
    pub expected_vi_bound: f64,
    /// `"sample"` or `"linkage"`.
    pub source: String,
}

fn better(bound: f64, k: usize, best_bound: f64, best_k: usize) -> bool {
    bound < best_bound - TIE_TOL || (bound <= best_bound + TIE_TOL && k < best_k)
}

/// Minimizes [`expected_vi_bound`] over the distinct sampled partitions and
/// every cut of the average-linkage tree built on `1 − PSM`.
pub fn optimal_partition(parts: &[Partition], psm: &Psm, exec: Exec) -> Result<OptimalPartition> {
    if parts.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let mut seen = HashSet::new();
    let unique: Vec<&Partition> = parts.iter().filter(|p| seen.insert(*p)).collect();
    let bounds = exec.map(unique.len(), |k| expected_vi_bound(unique[k], psm));
    let mut best: Option<(f64, &Partition)> = None;
    for (p, b) in unique.iter().zip(bounds) {
        let b = b?;
        if best.is_none_or(|(bb, bp)| better(b, p.n_clusters(), bb, bp.n_clusters())) {
            best = Some((b, p));
        }
    }
    let (mut best_bound, best_part) = best.expect("at least one partition");
    let mut result = OptimalPartition {
        partition: best_part.clone(),
        expected_vi_bound: best_bound,
        source: "sample".into(),
    };
    if let Some(cut) = best_linkage_cut(psm) {
        let b = expected_vi_bound(&cut, psm)?;
        if better(b, cut.n_clusters(), best_bound, result.partition.n_clusters()) {
            best_bound = b;
            result = OptimalPartition {
                partition: cut,
                expected_vi_bound: best_bound,
                source: "linkage".into(),
            };
        }
    }
    Ok(result)
}

/// Walks the average-linkage merges from singletons to one block, tracking the
/// bound incrementally, and returns the best cut (fewest blocks on ties).
fn best_linkage_cut(psm: &Psm) -> Option<Partition> {
    let n = psm.n();
    if n < 2 {
        return None;
    }
    let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            condensed.push((1.0 - psm.get(i, j)).max(0.0));
        }
    }
    let dendrogram = kodama::linkage(&mut condensed, n, kodama::Method::Average);

    let row_log: Vec<f64> = (0..n).map(|i| psm.row(i).iter().sum::<f64>().ln()).collect();
    let mut within: Vec<f64> = (0..n).map(|i| psm.get(i, i)).collect();
    let mut size = vec![1usize; n];
    let term = |i: usize, size: &[usize], within: &[f64]| (size[i] as f64).ln() + row_log[i] - 2.0 * within[i].ln();
    let mut terms: Vec<f64> = (0..n).map(|i| term(i, &size, &within)).collect();
    let mut total: f64 = terms.iter().sum();

    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    members.reserve(n);
    let mut best = (total, n, 0usize);
    for (step_idx, step) in dendrogram.steps().iter().enumerate() {
        let a = std::mem::take(&mut members[step.cluster1]);
        let b = std::mem::take(&mut members[step.cluster2]);
        let merged_size = a.len() + b.len();
        for &i in &a {
            within[i] += b.iter().map(|&j| psm.get(i, j)).sum::<f64>();
        }
        for &j in &b {
            within[j] += a.iter().map(|&i| psm.get(j, i)).sum::<f64>();
        }
        let mut merged = a;
        merged.extend(b);
        for &i in &merged {
            size[i] = merged_size;
            let t = term(i, &size, &within);
            total += t - terms[i];
            terms[i] = t;
        }
        members.push(merged);
        let k = n - step_idx - 1;
        if better(total, k, best.0, best.1) {
            best = (total, k, step_idx + 1);
        }
    }

    // replay the first `best.2` merges to materialize the cut
    let mut labels: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for step in &dendrogram.steps()[..best.2] {
        let mut merged = std::mem::take(&mut members[step.cluster1]);
        merged.extend(std::mem::take(&mut members[step.cluster2]));
        let id = members.len();
        for &i in &merged {
            labels[i] = id;
        }
        members.push(merged);
    }
    Some(Partition::new(&labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleBall {
    pub center: Partition,
    pub radius: f64,
    pub level: f64,
    pub vertical_lower: Partition,
    pub vertical_upper: Partition,
    pub horizontal: Partition,
}

/// Smallest VI ball around `center` holding at least `level` of the sampled
/// partitions, with its extreme members.
pub fn credible_ball(parts: &[Partition], center: &Partition, level: f64, exec: Exec) -> Result<CredibleBall> {
    if parts.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let dist = exec
        .map(parts.len(), |t| vi(&parts[t], center))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    let t = parts.len();
    let need = ((level * t as f64 - 1e-9).ceil() as usize).clamp(1, t);
    let radius = sorted[need - 1];

    let inside: Vec<usize> = (0..t).filter(|&i| dist[i] <= radius).collect();
    let k_max = inside.iter().map(|&i| parts[i].n_clusters()).max().unwrap_or(0);
    let k_min = inside.iter().map(|&i| parts[i].n_clusters()).min().unwrap_or(0);
    // farthest member of `pool`; earliest draw wins among equals
    let farthest = |pool: &mut dyn Iterator<Item = usize>| -> usize {
        let mut best: Option<usize> = None;
        for i in pool {
            if best.is_none_or(|b| dist[i] > dist[b]) {
                best = Some(i);
            }
        }
        best.expect("ball contains at least one partition")
    };
    let lower = farthest(&mut inside.iter().copied().filter(|&i| parts[i].n_clusters() == k_max));
    let upper = farthest(&mut inside.iter().copied().filter(|&i| parts[i].n_clusters() == k_min));
    let mut horizontal: Option<usize> = None;
    for &i in &inside {
        let replace = match horizontal {
            None => true,
            Some(b) => dist[i] > dist[b] || (dist[i] == dist[b] && parts[i].n_clusters() < parts[b].n_clusters()),
        };
        if replace {
            horizontal = Some(i);
        }
    }
    Ok(CredibleBall {
        center: center.clone(),
        radius,
        level,
        vertical_lower: parts[lower].clone(),
        vertical_upper: parts[upper].clone(),
        horizontal: parts[horizontal.expect("non-empty ball")].clone(),
    })
}

/// Cross-tabulation of estimated blocks (rows) against reference labels
/// (columns), both ordered by decreasing size then first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub rows: Vec<u32>,
    pub columns: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

pub fn confusion_matrix<S: AsRef<str>>(p: &Partition, reference: &[S]) -> Result<ConfusionMatrix> {
    check_len(p.len(), reference.len())?;
    let refp = Partition::new(&reference.iter().map(|s| s.as_ref()).collect::<Vec<_>>());
    let mut col_names = vec![String::new(); refp.n_clusters()];
    for (i, &l) in refp.labels.iter().enumerate() {
        if col_names[l as usize].is_empty() {
            col_names[l as usize] = reference[i].as_ref().to_string();
        }
    }
    let by_size = |sizes: Vec<usize>| {
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
        order
    };
    let row_order = by_size(p.sizes());
    let col_order = by_size(refp.sizes());
    let mut row_pos = vec![0; row_order.len()];
    for (pos, &r) in row_order.iter().enumerate() {
        row_pos[r] = pos;
    }
    let mut col_pos = vec![0; col_order.len()];
    for (pos, &c) in col_order.iter().enumerate() {
        col_pos[c] = pos;
    }
    let mut counts = vec![vec![0; col_order.len()]; row_order.len()];
    for (a, b) in p.labels.iter().zip(&refp.labels) {
        counts[row_pos[*a as usize]][col_pos[*b as usize]] += 1;
    }
    Ok(ConfusionMatrix {
        rows: row_order.iter().map(|&r| r as u32).collect(),
        columns: col_order.iter().map(|&c| col_names[c].clone()).collect(),
        counts,
    })
}
