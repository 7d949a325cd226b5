//! Ward agglomerative clustering and flat cuts.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::format::num;
use crate::linalg::SquareMatrix;
use crate::{Error, Result};

/// Squared Euclidean distances between all pairs of rows.
pub fn pairwise_sq_distances(features: &[Vec<f64>]) -> Result<SquareMatrix> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Size("no feature vectors".into()));
    }
    let dim = features[0].len();
    if let Some((i, f)) = features.iter().enumerate().find(|(_, f)| f.len() != dim) {
        return Err(Error::Size(format!(
            "feature vector {i} has dimension {}, expected {dim}",
            f.len()
        )));
    }
    let mut d = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = features[i]
                .iter()
                .zip(&features[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            d.set(i, j, s);
            d.set(j, i, s);
        }
    }
    Ok(d)
}

/// Rescales every column to zero mean and unit variance. Constant columns
/// become all zeros.
pub fn standardize_columns(rows: &mut [Vec<f64>]) {
    let Some(dim) = rows.first().map(Vec::len) else {
        return;
    };
    let n = rows.len() as f64;
    for c in 0..dim {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for r in rows.iter_mut() {
            r[c] = if sd > 0.0 { (r[c] - mean) / sd } else { 0.0 };
        }
    }
}

/// One agglomeration step. `left < right` are node ids: leaves are
/// `0..n`, the node created by merge `i` is `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
    /// Meter id of each leaf index.
    pub leaf_order: Vec<String>,
}

impl Dendrogram {
    /// CSV `merge_index,left,right,height,size`, where `merge_index` is the
    /// id of the node the merge creates.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("merge_index,left,right,height,size\n");
        for (i, m) in self.merges.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.n_leaves + i,
                m.left,
                m.right,
                num(m.height),
                m.size
            ));
        }
        out
    }
}

/// Ward linkage over the rows of `features`.
///
/// Works on squared distances with the Lance–Williams recurrence
///
/// ```text
/// d(i∪j, k)² = ((nᵢ+nₖ) d(i,k)² + (nⱼ+nₖ) d(j,k)² − nₖ d(i,j)²) / (nᵢ+nⱼ+nₖ)
/// ```
///
/// and records `height = d(i,j)`, so two singletons merge at their Euclidean
/// distance. Each step merges the globally closest pair; equal distances go
/// to the lexicographically smallest `(left, right)` node-id pair.
pub fn ward_linkage(leaf_ids: Vec<String>, features: &[Vec<f64>]) -> Result<Dendrogram> {
    let n = features.len();
    if n < 2 {
        return Err(Error::Size(format!(
            "Ward linkage needs at least 2 points, got {n}"
        )));
    }
    if leaf_ids.len() != n {
        return Err(Error::Size(format!(
            "{} leaf ids for {n} points",
            leaf_ids.len()
        )));
    }
    if let Some(i) = features
        .iter()
        .position(|f| f.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::Numeric(format!(
            "feature vector of {} has a non-finite entry",
            leaf_ids[i]
        )));
    }
    let mut dist = pairwise_sq_distances(features)?;

    // Slot s holds cluster `node[s]`; merged clusters reuse the lower slot.
    let mut node: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for (pos, &si) in active.iter().enumerate() {
            for &sj in &active[pos + 1..] {
                let d = dist.get(si, sj);
                let ids = (node[si].min(node[sj]), node[si].max(node[sj]));
                let better = match best {
                    None => true,
                    Some((bd, bids, _, _)) => d < bd || (d == bd && ids < bids),
                };
                if better {
                    best = Some((d, ids, si, sj));
                }
            }
        }
        let (d_ij, (left, right), si, sj) = best.expect("at least two active clusters");
        let (keep, drop) = (si.min(sj), si.max(sj));
        let (ni, nj) = (size[si] as f64, size[sj] as f64);

        for &sk in &active {
            if sk == si || sk == sj {
                continue;
            }
            let nk = size[sk] as f64;
            let updated = ((ni + nk) * dist.get(si, sk) + (nj + nk) * dist.get(sj, sk) - nk * d_ij)
                / (ni + nj + nk);
            dist.set(keep, sk, updated);
            dist.set(sk, keep, updated);
        }

        let merged_size = size[si] + size[sj];
        merges.push(Merge {
            left,
            right,
            height: d_ij.max(0.0).sqrt(),
            size: merged_size,
        });
        size[keep] = merged_size;
        node[keep] = n + step;
        active.retain(|&s| s != drop);
    }

    Ok(Dendrogram {
        n_leaves: n,
        merges,
        leaf_order: leaf_ids,
    })
}

/// A cluster, displayed as a spreadsheet-style letter: `A`, `B`, …, `Z`,
/// `AA`, `AB`, …
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ClusterLabel(pub usize);

impl fmt::Display for ClusterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut n = self.0 + 1;
        let mut letters = Vec::new();
        while n > 0 {
            n -= 1;
            letters.push(b'A' + (n % 26) as u8);
            n /= 26;
        }
        letters.reverse();
        f.write_str(std::str::from_utf8(&letters).unwrap())
    }
}

impl FromStr for ClusterLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(Error::Parameter(format!("invalid cluster label {s:?}")));
        }
        let mut n = 0usize;
        for b in s.bytes() {
            n = n * 26 + (b - b'A') as usize + 1;
        }
        Ok(ClusterLabel(n - 1))
    }
}

impl From<ClusterLabel> for String {
    fn from(l: ClusterLabel) -> String {
        l.to_string()
    }
}

impl TryFrom<String> for ClusterLabel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Meter → cluster map for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: IndexMap<String, ClusterLabel>,
    pub k: usize,
    pub period_id: String,
}

impl ClusterAssignment {
    pub fn new(labels: IndexMap<String, ClusterLabel>, period_id: impl Into<String>) -> Self {
        let k = labels.values().collect::<BTreeSet<_>>().len();
        Self {
            labels,
            k,
            period_id: period_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, meter_id: &str) -> Option<ClusterLabel> {
        self.labels.get(meter_id).copied()
    }

    /// Labels in use, ascending.
    pub fn used_labels(&self) -> Vec<ClusterLabel> {
        self.labels
            .values()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<(ClusterLabel, usize)> {
        let mut counts: HashMap<ClusterLabel, usize> = HashMap::new();
        for l in self.labels.values() {
            *counts.entry(*l).or_default() += 1;
        }
        self.used_labels()
            .into_iter()
            .map(|l| (l, counts[&l]))
            .collect()
    }

    /// CSV `meter_id,cluster`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("meter_id,cluster\n");
        for (m, l) in &self.labels {
            out.push_str(&format!("{m},{l}\n"));
        }
        out
    }

    pub fn from_csv(text: &str, period_id: impl Into<String>) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: "<assignment>".into(),
            line: line as u64,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "meter_id,cluster" => {}
            _ => return Err(parse_err(1, "expected header meter_id,cluster".into())),
        }
        let mut labels = IndexMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (m, l) = line
                .split_once(',')
                .ok_or_else(|| parse_err(i + 1, "expected two fields".into()))?;
            let label: ClusterLabel = l
                .parse()
                .map_err(|_| parse_err(i + 1, format!("invalid cluster label {l:?}")))?;
            if labels.insert(m.trim().to_string(), label).is_some() {
                return Err(parse_err(i + 1, format!("meter {m} listed twice")));
            }
        }
        Ok(Self::new(labels, period_id))
    }
}

/// Undoes the last `k − 1` merges and labels the resulting components in
/// order of their smallest leaf index.
pub fn cut(dendrogram: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let n = dendrogram.n_leaves;
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "cannot cut {n} meters into {k} clusters"
        )));
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    for (i, m) in dendrogram.merges.iter().take(n - k).enumerate() {
        parent[m.left] = n + i;
        parent[m.right] = n + i;
    }
    let root = |mut x: usize| {
        while parent[x] != x {
            x = parent[x];
        }
        x
    };

    let mut label_of_root: HashMap<usize, ClusterLabel> = HashMap::new();
    let mut labels = IndexMap::with_capacity(n);
    for (leaf, meter) in dendrogram.leaf_order.iter().enumerate() {
        let r = root(leaf);
        let next = ClusterLabel(label_of_root.len());
        let label = *label_of_root.entry(r).or_insert(next);
        labels.insert(meter.clone(), label);
    }
    Ok(ClusterAssignment {
        labels,
        k,
        period_id: String::new(),
    })
}
