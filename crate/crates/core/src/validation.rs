//! Cluster quality reports.
//!
//! Two physical constraints make the checks possible without ground-truth
//! phase labels: meters on one transformer share a phase, and a meter never
//! changes phase between months.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::clustering::{ClusterAssignment, ClusterLabel};
use crate::format::round_sig;
use crate::ingestion::Topology;
use crate::{Error, Result};

/// Largest label count aligned by exhaustive permutation search (8! = 40320).
pub const MAX_ALIGN_LABELS: usize = 8;

/// Transformer × cluster contingency table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurityReport {
    pub period_id: String,
    pub transformers: Vec<String>,
    pub clusters: Vec<ClusterLabel>,
    /// `counts[t][c]`: meters of `transformers[t]` in `clusters[c]`.
    pub counts: Vec<Vec<usize>>,
    pub cluster_totals: Vec<usize>,
    pub total_meters: usize,
    pub impure_transformers: Vec<String>,
    /// Sum of per-transformer majority counts over total meters.
    pub purity: f64,
}

pub fn transformer_purity(
    assignment: &ClusterAssignment,
    topology: &Topology,
) -> Result<PurityReport> {
    let clusters = assignment.used_labels();
    let col: BTreeMap<ClusterLabel, usize> =
        clusters.iter().enumerate().map(|(i, l)| (*l, i)).collect();

    let mut rows: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (meter, label) in &assignment.labels {
        let transformer = topology.transformer_of(meter).ok_or_else(|| {
            Error::Topology(format!("meter {meter} has no transformer in the topology"))
        })?;
        rows.entry(transformer)
            .or_insert_with(|| vec![0; clusters.len()])[col[label]] += 1;
    }

    let total_meters = assignment.len();
    let majority: usize = rows
        .values()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum();
    let impure_transformers = rows
        .iter()
        .filter(|(_, r)| r.iter().filter(|&&c| c > 0).count() > 1)
        .map(|(t, _)| t.to_string())
        .collect();
    let cluster_totals = (0..clusters.len())
        .map(|c| rows.values().map(|r| r[c]).sum())
        .collect();

    Ok(PurityReport {
        period_id: assignment.period_id.clone(),
        transformers: rows.keys().map(|t| t.to_string()).collect(),
        clusters,
        counts: rows.into_values().collect(),
        cluster_totals,
        total_meters,
        impure_transformers,
        purity: if total_meters == 0 {
            1.0
        } else {
            majority as f64 / total_meters as f64
        },
    })
}

impl PurityReport {
    pub fn is_pure(&self) -> bool {
        self.impure_transformers.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["purity"] = round_sig(self.purity).into();
        serde_json::to_string_pretty(&v).expect("value serializes") + "\n"
    }

    /// Aligned text table with a trailing totals row.
    pub fn to_text(&self) -> String {
        let header: Vec<String> = std::iter::once("Transformer".to_string())
            .chain(self.clusters.iter().map(ClusterLabel::to_string))
            .collect();
        let mut body: Vec<Vec<String>> = self
            .transformers
            .iter()
            .zip(&self.counts)
            .map(|(t, r)| {
                std::iter::once(t.clone())
                    .chain(r.iter().map(|&c| blank_zero(c)))
                    .collect()
            })
            .collect();
        body.push(
            std::iter::once("Total".to_string())
                .chain(self.cluster_totals.iter().map(usize::to_string))
                .collect(),
        );
        let mut out = format!("Transformer purity, period {}\n", self.period_id);
        out.push_str(&render_table(&header, &body, Some(body.len() - 1)));
        out.push_str(&format!(
            "purity = {}/{} = {}\n",
            self.majority_count(),
            self.total_meters,
            crate::format::num(self.purity)
        ));
        if self.impure_transformers.is_empty() {
            out.push_str("impure transformers: none\n");
        } else {
            out.push_str(&format!(
                "impure transformers: {}\n",
                self.impure_transformers.join(", ")
            ));
        }
        out
    }

    pub fn majority_count(&self) -> usize {
        self.counts
            .iter()
            .map(|r| r.iter().copied().max().unwrap_or(0))
            .sum()
    }
}

/// Mapping from period-2 labels onto period-1 labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelAlignment {
    /// `(period-2 label, period-1 label)` pairs, ascending by period-2 label.
    pub mapping: Vec<(ClusterLabel, ClusterLabel)>,
    /// Meters landing on the diagonal under this mapping.
    pub agreement: usize,
}

impl LabelAlignment {
    pub fn apply(&self, label: ClusterLabel) -> ClusterLabel {
        self.mapping
            .iter()
            .find(|(from, _)| *from == label)
            .map(|(_, to)| *to)
            .unwrap_or(label)
    }
}

/// Finds the relabeling of `b` that agrees with `a` on the most common meters.
///
/// Every permutation of the label universe is tried in lexicographic order;
/// the first one reaching the maximum agreement wins.
pub fn align_labels(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<LabelAlignment> {
    let common: Vec<(ClusterLabel, ClusterLabel)> = a
        .labels
        .iter()
        .filter_map(|(m, la)| b.get(m).map(|lb| (*la, lb)))
        .collect();
    if common.is_empty() {
        return Err(Error::Alignment(format!(
            "assignments {:?} and {:?} share no meters",
            a.period_id, b.period_id
        )));
    }
    let universe = a
        .labels
        .values()
        .chain(b.labels.values())
        .map(|l| l.0 + 1)
        .max()
        .unwrap_or(0)
        .max(a.k)
        .max(b.k);
    if universe > MAX_ALIGN_LABELS {
        return Err(Error::Alignment(format!(
            "{universe} labels exceed the exhaustive-alignment limit of {MAX_ALIGN_LABELS}"
        )));
    }

    let mut table = vec![vec![0usize; universe]; universe];
    for (la, lb) in &common {
        table[lb.0][la.0] += 1;
    }

    let mut perm: Vec<usize> = (0..universe).collect();
    let mut best = (agreement(&table, &perm), perm.clone());
    while next_permutation(&mut perm) {
        let score = agreement(&table, &perm);
        if score > best.0 {
            best = (score, perm.clone());
        }
    }
    Ok(LabelAlignment {
        mapping: best
            .1
            .iter()
            .enumerate()
            .map(|(from, &to)| (ClusterLabel(from), ClusterLabel(to)))
            .collect(),
        agreement: best.0,
    })
}

fn agreement(table: &[Vec<usize>], perm: &[usize]) -> usize {
    perm.iter().enumerate().map(|(b, &a)| table[b][a]).sum()
}

/// Advances to the next lexicographic permutation; false after the last.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnstableMeter {
    pub meter_id: String,
    pub first: ClusterLabel,
    /// Period-2 label after alignment.
    pub second: ClusterLabel,
}

/// Cross tabulation of two periods' clusterings after label alignment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub first_period: String,
    pub second_period: String,
    pub labels: Vec<ClusterLabel>,
    /// `cross_tab[i][j]`: meters with period-1 label `labels[i]` and aligned
    /// period-2 label `labels[j]`.
    pub cross_tab: Vec<Vec<usize>>,
    pub alignment: LabelAlignment,
    pub common_meters: usize,
    pub stable_fraction: f64,
    pub unstable_meters: Vec<UnstableMeter>,
    pub only_in_first: Vec<String>,
    pub only_in_second: Vec<String>,
}

pub fn stability(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<StabilityReport> {
    let alignment = align_labels(a, b)?;
    let universe = alignment.mapping.len();
    let mut cross_tab = vec![vec![0usize; universe]; universe];
    let mut unstable_meters = Vec::new();
    let mut only_in_first = Vec::new();
    for (meter, &la) in &a.labels {
        let Some(lb) = b.get(meter) else {
            only_in_first.push(meter.clone());
            continue;
        };
        let aligned = alignment.apply(lb);
        cross_tab[la.0][aligned.0] += 1;
        if aligned != la {
            unstable_meters.push(UnstableMeter {
                meter_id: meter.clone(),
                first: la,
                second: aligned,
            });
        }
    }
    let only_in_second = b
        .labels
        .keys()
        .filter(|m| !a.labels.contains_key(*m))
        .cloned()
        .collect();
    let common_meters: usize = cross_tab.iter().flatten().sum();
    let diagonal: usize = (0..universe).map(|i| cross_tab[i][i]).sum();

    Ok(StabilityReport {
        first_period: a.period_id.clone(),
        second_period: b.period_id.clone(),
        labels: (0..universe).map(ClusterLabel).collect(),
        cross_tab,
        alignment,
        common_meters,
        stable_fraction: diagonal as f64 / common_meters as f64,
        unstable_meters,
        only_in_first,
        only_in_second,
    })
}

impl StabilityReport {
    pub fn diagonal(&self) -> Vec<usize> {
        (0..self.labels.len())
            .map(|i| self.cross_tab[i][i])
            .collect()
    }

    pub fn is_diagonal(&self) -> bool {
        self.unstable_meters.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["stable_fraction"] = round_sig(self.stable_fraction).into();
        serde_json::to_string_pretty(&v).expect("value serializes") + "\n"
    }

    /// Period-1 labels down the side, aligned period-2 labels across, with
    /// row and column totals.
    pub fn to_text(&self) -> String {
        let k = self.labels.len();
        let header: Vec<String> = std::iter::once(self.first_period.clone())
            .chain(self.labels.iter().map(ClusterLabel::to_string))
            .chain(std::iter::once("Total".to_string()))
            .collect();
        let mut body: Vec<Vec<String>> = self
            .labels
            .iter()
            .zip(&self.cross_tab)
            .map(|(l, row)| {
                std::iter::once(l.to_string())
                    .chain(row.iter().map(|&c| blank_zero(c)))
                    .chain(std::iter::once(row.iter().sum::<usize>().to_string()))
                    .collect()
            })
            .collect();
        body.push(
            std::iter::once("Total".to_string())
                .chain((0..k).map(|j| {
                    self.cross_tab
                        .iter()
                        .map(|r| r[j])
                        .sum::<usize>()
                        .to_string()
                }))
                .chain(std::iter::once(self.common_meters.to_string()))
                .collect(),
        );

        let mut out = format!(
            "Stability, {} (rows) vs {} (columns, aligned)\n",
            self.first_period, self.second_period
        );
        out.push_str(&render_table(&header, &body, Some(body.len() - 1)));
        let mapping: Vec<String> = self
            .alignment
            .mapping
            .iter()
            .map(|(from, to)| format!("{from}->{to}"))
            .collect();
        out.push_str(&format!(
            "alignment ({}): {}\n",
            self.second_period,
            mapping.join(" ")
        ));
        out.push_str(&format!(
            "stable fraction = {}/{} = {}\n",
            self.diagonal().iter().sum::<usize>(),
            self.common_meters,
            crate::format::num(self.stable_fraction)
        ));
        if self.unstable_meters.is_empty() {
            out.push_str("unstable meters: none\n");
        } else {
            for u in &self.unstable_meters {
                out.push_str(&format!(
                    "unstable: {} {}->{}\n",
                    u.meter_id, u.first, u.second
                ));
            }
        }
        if !self.only_in_first.is_empty() {
            out.push_str(&format!(
                "only in {}: {}\n",
                self.first_period,
                self.only_in_first.join(", ")
            ));
        }
        if !self.only_in_second.is_empty() {
            out.push_str(&format!(
                "only in {}: {}\n",
                self.second_period,
                self.only_in_second.join(", ")
            ));
        }
        out
    }
}

fn blank_zero(c: usize) -> String {
    if c == 0 {
        String::new()
    } else {
        c.to_string()
    }
}

fn render_table(header: &[String], body: &[Vec<String>], rule_before: Option<usize>) -> String {
    let cols = header.len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            std::iter::once(header)
                .chain(body.iter().map(Vec::as_slice))
                .map(|r| r[c].len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |row: &[String]| -> String {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                if c == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        cells.join("  ").trim_end().to_string() + "\n"
    };
    let rule = widths.iter().sum::<usize>() + 2 * (cols - 1);
    let mut out = line(header);
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for (i, row) in body.iter().enumerate() {
        if Some(i) == rule_before {
            out.push_str(&"-".repeat(rule));
            out.push('\n');
        }
        out.push_str(&line(row));
    }
    out
}

/// Fraction of meters whose cluster matches `truth` after optimal relabeling.
pub fn agreement_with_truth(
    assignment: &ClusterAssignment,
    truth: &ClusterAssignment,
) -> Result<f64> {
    let alignment = align_labels(truth, assignment)?;
    let common = assignment
        .labels
        .keys()
        .filter(|m| truth.labels.contains_key(*m))
        .count();
    Ok(alignment.agreement as f64 / common as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::MeterLink;
    use indexmap::IndexMap;

    fn assignment(period: &str, labels: &[(&str, usize)]) -> ClusterAssignment {
        ClusterAssignment::new(
            labels
                .iter()
                .map(|(m, l)| (m.to_string(), ClusterLabel(*l)))
                .collect::<IndexMap<_, _>>(),
            period,
        )
    }

    fn topology(links: &[(&str, &str)]) -> Topology {
        Topology::from_links(links.iter().map(|(m, t)| {
            (
                m.to_string(),
                MeterLink {
                    transformer_id: t.to_string(),
                    feeder_id: "F".into(),
                },
            )
        }))
        .unwrap()
    }

    #[test]
    fn singleton_transformers_are_pure() {
        let a = assignment("p", &[("m1", 0), ("m2", 1), ("m3", 2), ("m4", 0)]);
        let t = topology(&[("m1", "t1"), ("m2", "t2"), ("m3", "t3"), ("m4", "t4")]);
        let r = transformer_purity(&a, &t).unwrap();
        assert_eq!(r.purity, 1.0);
        assert!(r.is_pure());
    }

    #[test]
    fn missing_transformer_is_topology_error() {
        let a = assignment("p", &[("m1", 0), ("ghost", 1)]);
        let t = topology(&[("m1", "t1")]);
        assert!(matches!(
            transformer_purity(&a, &t),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn purity_counts_majorities() {
        let a = assignment("p", &[("m1", 0), ("m2", 0), ("m3", 1), ("m4", 1)]);
        let t = topology(&[("m1", "t1"), ("m2", "t1"), ("m3", "t1"), ("m4", "t2")]);
        let r = transformer_purity(&a, &t).unwrap();
        assert_eq!(r.counts, vec![vec![2, 1], vec![0, 1]]);
        assert_eq!(r.cluster_totals, vec![2, 2]);
        assert_eq!(r.impure_transformers, ["t1"]);
        assert_eq!(r.purity, 0.75);
        let text = r.to_text();
        assert!(text.contains("purity = 3/4 = 0.75"), "{text}");
    }

    #[test]
    fn rotated_labels_are_undone() {
        let a = assignment("1", &[("a", 0), ("b", 1), ("c", 2), ("d", 0)]);
        // A→B, B→C, C→A
        let b = assignment("2", &[("a", 1), ("b", 2), ("c", 0), ("d", 1)]);
        let al = align_labels(&a, &b).unwrap();
        assert_eq!(al.agreement, 4);
        assert_eq!(al.apply(ClusterLabel(1)), ClusterLabel(0));
        assert_eq!(al.apply(ClusterLabel(2)), ClusterLabel(1));
        assert_eq!(al.apply(ClusterLabel(0)), ClusterLabel(2));
    }

    #[test]
    fn identical_assignment_aligns_to_identity() {
        let a = assignment("1", &[("a", 0), ("b", 1), ("c", 2)]);
        let al = align_labels(&a, &a).unwrap();
        assert!(al.mapping.iter().all(|(f, t)| f == t));
    }

    #[test]
    fn alignment_needs_common_meters() {
        let a = assignment("1", &[("a", 0)]);
        let b = assignment("2", &[("z", 0)]);
        assert!(align_labels(&a, &b).is_err());
    }

    #[test]
    fn ties_pick_lexicographically_smallest_permutation() {
        // Identity and swap both agree on one meter.
        let a = assignment("1", &[("a", 0), ("b", 0)]);
        let b = assignment("2", &[("a", 0), ("b", 1)]);
        let al = align_labels(&a, &b).unwrap();
        assert_eq!(al.agreement, 1);
        assert_eq!(al.mapping[0], (ClusterLabel(0), ClusterLabel(0)));
    }

    #[test]
    fn exhaustive_search_beats_every_permutation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(30);
        for _ in 0..20 {
            let la: Vec<(String, usize)> = (0..30)
                .map(|i| (format!("m{i}"), rng.random_range(0..3)))
                .collect();
            let lb: Vec<(String, usize)> = (0..30)
                .map(|i| (format!("m{i}"), rng.random_range(0..3)))
                .collect();
            let a = assignment(
                "1",
                &la.iter().map(|(m, l)| (m.as_str(), *l)).collect::<Vec<_>>(),
            );
            let b = assignment(
                "2",
                &lb.iter().map(|(m, l)| (m.as_str(), *l)).collect::<Vec<_>>(),
            );
            let best = align_labels(&a, &b).unwrap();
            let mut perm = vec![0, 1, 2];
            loop {
                let score = la
                    .iter()
                    .zip(&lb)
                    .filter(|((_, x), (_, y))| perm[*y] == *x)
                    .count();
                assert!(best.agreement >= score);
                if !next_permutation(&mut perm) {
                    break;
                }
            }
        }
    }

    #[test]
    fn next_permutation_enumerates_all() {
        let mut p = vec![0, 1, 2, 3];
        let mut count = 1;
        let mut prev = p.clone();
        while next_permutation(&mut p) {
            assert!(p > prev);
            prev = p.clone();
            count += 1;
        }
        assert_eq!(count, 24);
    }

    #[test]
    fn single_flip_is_reported() {
        let labels: Vec<(String, usize)> = (0..10).map(|i| (format!("m{i}"), i % 3)).collect();
        let refs: Vec<(&str, usize)> = labels.iter().map(|(m, l)| (m.as_str(), *l)).collect();
        let a = assignment("june", &refs);
        let mut flipped = refs.clone();
        flipped[4].1 = (flipped[4].1 + 1) % 3;
        let b = assignment("july", &flipped);
        let r = stability(&a, &b).unwrap();
        assert_eq!(r.stable_fraction, 0.9);
        assert_eq!(r.unstable_meters.len(), 1);
        assert_eq!(r.unstable_meters[0].meter_id, "m4");
    }

    #[test]
    fn meters_in_one_period_are_listed_separately() {
        let a = assignment("1", &[("a", 0), ("b", 1), ("x", 0)]);
        let b = assignment("2", &[("a", 1), ("b", 0), ("y", 1)]);
        let r = stability(&a, &b).unwrap();
        assert_eq!(r.common_meters, 2);
        assert_eq!(r.stable_fraction, 1.0);
        assert_eq!(r.only_in_first, ["x"]);
        assert_eq!(r.only_in_second, ["y"]);
    }

    #[test]
    fn too_many_labels_rejected() {
        let labels: Vec<(String, usize)> = (0..9).map(|i| (format!("m{i}"), i)).collect();
        let refs: Vec<(&str, usize)> = labels.iter().map(|(m, l)| (m.as_str(), *l)).collect();
        let a = assignment("1", &refs);
        assert!(matches!(align_labels(&a, &a), Err(Error::Alignment(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn labels(n: usize) -> impl Strategy<Value = Vec<usize>> {
            prop::collection::vec(0usize..4, n)
        }

        fn make(period: &str, ls: &[usize]) -> ClusterAssignment {
            let v: Vec<(String, usize)> = ls
                .iter()
                .enumerate()
                .map(|(i, l)| (format!("m{i}"), *l))
                .collect();
            assignment(
                period,
                &v.iter().map(|(m, l)| (m.as_str(), *l)).collect::<Vec<_>>(),
            )
        }

        proptest! {
            #[test]
            fn self_stability_is_one(ls in labels(25)) {
                let a = make("1", &ls);
                let r = stability(&a, &a).unwrap();
                prop_assert_eq!(r.stable_fraction, 1.0);
                prop_assert!(r.is_diagonal());
            }

            #[test]
            fn fraction_symmetric(la in labels(25), lb in labels(25)) {
                let (a, b) = (make("1", &la), make("2", &lb));
                let ab = stability(&a, &b).unwrap();
                let ba = stability(&b, &a).unwrap();
                prop_assert_eq!(ab.stable_fraction, ba.stable_fraction);
                prop_assert_eq!(ab.common_meters, 25);
                prop_assert_eq!(ab.cross_tab.iter().flatten().sum::<usize>(), 25);
                prop_assert_eq!(ab.stable_fraction == 1.0, ab.is_diagonal());
            }

            #[test]
            fn alignment_no_worse_than_identity(la in labels(25), lb in labels(25)) {
                let (a, b) = (make("1", &la), make("2", &lb));
                let identity = la.iter().zip(&lb).filter(|(x, y)| x == y).count();
                prop_assert!(align_labels(&a, &b).unwrap().agreement >= identity);
            }

            #[test]
            fn purity_totals_reconcile(ls in labels(30), ts in prop::collection::vec(0usize..6, 30)) {
                let a = make("1", &ls);
                let links: Vec<(String, String)> =
                    ts.iter().enumerate().map(|(i, t)| (format!("m{i}"), format!("t{t}"))).collect();
                let topo = topology(&links.iter().map(|(m, t)| (m.as_str(), t.as_str())).collect::<Vec<_>>());
                let r = transformer_purity(&a, &topo).unwrap();
                prop_assert_eq!(r.counts.iter().flatten().sum::<usize>(), 30);
                let sizes: Vec<usize> = a.cluster_sizes().into_iter().map(|(_, s)| s).collect();
                prop_assert_eq!(&r.cluster_totals, &sizes);
                for (t, row) in r.transformers.iter().zip(&r.counts) {
                    let expected = ts.iter().filter(|x| format!("t{x}") == *t).count();
                    prop_assert_eq!(row.iter().sum::<usize>(), expected);
                }
                prop_assert_eq!(r.purity == 1.0, r.impure_transformers.is_empty());
            }
        }
    }
}
