//! Classical (Torgerson) multidimensional scaling into the plane.

use indexmap::IndexMap;

use crate::clustering::ClusterAssignment;
use crate::format::num;
use crate::linalg::{symmetric_eigen, SquareMatrix};
use crate::{Error, Result};

/// Eigenvalues at or below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    pub coords: IndexMap<String, (f64, f64)>,
    /// `√(Σ (d − d̂)² / Σ d²)` over meter pairs.
    pub stress: f64,
    /// The two leading eigenvalues of the double-centered matrix.
    pub eigenvalues: [f64; 2],
    /// Number of axes backed by a positive eigenvalue (0, 1 or 2).
    pub rank: usize,
}

impl Embedding2D {
    /// Euclidean distances between the embedded points.
    pub fn recovered_distances(&self) -> SquareMatrix {
        let pts: Vec<(f64, f64)> = self.coords.values().copied().collect();
        SquareMatrix::from_fn(pts.len(), |i, j| {
            let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
            (dx * dx + dy * dy).sqrt()
        })
    }

    /// CSV `meter_id,x,y,cluster`; the cluster column is empty for meters the
    /// assignment does not cover.
    pub fn to_csv(&self, assignment: Option<&ClusterAssignment>) -> String {
        let mut out = String::from("meter_id,x,y,cluster\n");
        for (m, (x, y)) in &self.coords {
            let cluster = assignment
                .and_then(|a| a.get(m))
                .map(|l| l.to_string())
                .unwrap_or_default();
            out.push_str(&format!("{m},{},{},{cluster}\n", num(*x), num(*y)));
        }
        out
    }
}

fn validate(distances: &SquareMatrix) -> Result<()> {
    let n = distances.dim();
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let d = distances.get(i, j);
            if !d.is_finite() {
                return Err(Error::Matrix(format!("entry ({i},{j}) is not finite")));
            }
            if d < 0.0 {
                return Err(Error::Matrix(format!("entry ({i},{j}) is negative: {d}")));
            }
            scale = scale.max(d);
        }
    }
    let tol = 1e-9 * scale.max(1.0);
    if let Some(i) = (0..n).find(|&i| distances.get(i, i) > tol) {
        return Err(Error::Matrix(format!(
            "diagonal entry {i} is {}, expected 0",
            distances.get(i, i)
        )));
    }
    let asym = distances.max_abs_asymmetry();
    if asym > tol {
        return Err(Error::Matrix(format!(
            "distance matrix is not symmetric (max deviation {asym})"
        )));
    }
    Ok(())
}

/// Embeds points given their pairwise (unsquared) distances.
///
/// Double-centers the squared distances, `B = −½ J D² J`, and scales the two
/// leading eigenvectors by the square roots of their eigenvalues. Each axis is
/// oriented so that its largest-magnitude coordinate is positive. Axes
/// without a positive eigenvalue are filled with zeros and `rank` records how
/// many axes are real.
pub fn classical_mds(distances: &SquareMatrix, meter_ids: &[String]) -> Result<Embedding2D> {
    let n = distances.dim();
    if meter_ids.len() != n {
        return Err(Error::Size(format!(
            "{} meter ids for a {n}×{n} distance matrix",
            meter_ids.len()
        )));
    }
    validate(distances)?;

    let sq = SquareMatrix::from_fn(n, |i, j| {
        let d = 0.5 * (distances.get(i, j) + distances.get(j, i));
        d * d
    });
    let row_mean: Vec<f64> = (0..n)
        .map(|i| sq.row(i).iter().sum::<f64>() / n as f64)
        .collect();
    let grand_mean = row_mean.iter().sum::<f64>() / n.max(1) as f64;
    let centered = SquareMatrix::from_fn(n, |i, j| {
        -0.5 * (sq.get(i, j) - row_mean[i] - row_mean[j] + grand_mean)
    });

    let eig = symmetric_eigen(&centered)?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut eigenvalues = [0.0; 2];
    let mut rank = 0;
    for (k, slot) in eigenvalues.iter_mut().enumerate() {
        let lambda = eig.values.get(k).copied().unwrap_or(0.0);
        *slot = lambda;
        if lambda > 0.0 && lambda > RANK_TOLERANCE * top {
            let s = lambda.sqrt();
            let mut axis: Vec<f64> = eig.vectors[k].iter().map(|v| v * s).collect();
            orient(&mut axis);
            axes.push(axis);
            rank += 1;
        } else {
            axes.push(vec![0.0; n]);
        }
    }
    if rank < 2 && n > 2 {
        log::warn!("distance matrix has rank {rank} in two dimensions; padding with zeros");
    }

    let coords: IndexMap<String, (f64, f64)> = meter_ids
        .iter()
        .enumerate()
        .map(|(i, m)| (m.clone(), (axes[0][i] + 0.0, axes[1][i] + 0.0)))
        .collect();
    let mut embedding = Embedding2D {
        coords,
        stress: 0.0,
        eigenvalues,
        rank,
    };
    embedding.stress = stress(distances, &embedding.recovered_distances());
    Ok(embedding)
}

/// Magnitudes within this relative distance of the largest count as tied;
/// the first tied coordinate decides the sign.
const ORIENT_TIE: f64 = 1e-9;

fn orient(axis: &mut [f64]) {
    let largest = axis.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pivot = axis
        .iter()
        .copied()
        .find(|v| v.abs() >= largest * (1.0 - ORIENT_TIE))
        .unwrap_or(0.0);
    if pivot < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
}

fn stress(original: &SquareMatrix, recovered: &SquareMatrix) -> f64 {
    let n = original.dim();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = original.get(i, j);
            num += (d - recovered.get(i, j)).powi(2);
            den += d * d;
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Euclidean (unsquared) distances between feature rows.
pub fn euclidean_distances(features: &[Vec<f64>]) -> Result<SquareMatrix> {
    Ok(crate::clustering::pairwise_sq_distances(features)?.map(f64::sqrt))
}

/// Reads a square distance CSV: header `meter_id,<id>,<id>,…`, then one row
/// per meter in the same order.
pub fn distances_from_csv(text: &str) -> Result<(Vec<String>, SquareMatrix)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: "<distances>".into(),
        line: line as u64,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty distance file".into()))?;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    if cols.first().map(String::as_str) != Some("meter_id") {
        return Err(parse_err(1, "expected header meter_id,<ids…>".into()));
    }
    let ids = cols[1..].to_vec();
    let mut rows = Vec::with_capacity(ids.len());
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(parse_err(
                i + 1,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        if fields[0] != ids.get(rows.len()).map(String::as_str).unwrap_or("") {
            return Err(parse_err(
                i + 1,
                format!("row {:?} out of header order", fields[0]),
            ));
        }
        rows.push(
            fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| parse_err(i + 1, format!("invalid number {f:?}")))
                })
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    if rows.len() != ids.len() {
        return Err(Error::Matrix(format!(
            "{} rows for {} columns",
            rows.len(),
            ids.len()
        )));
    }
    Ok((ids, SquareMatrix::from_rows(&rows)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    fn planar_distances(pts: &[(f64, f64)]) -> SquareMatrix {
        SquareMatrix::from_fn(pts.len(), |i, j| {
            ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt()
        })
    }

    #[test]
    fn right_triangle_recovered() {
        let d = planar_distances(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let e = classical_mds(&d, &ids(3)).unwrap();
        let r = e.recovered_distances();
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.get(i, j) - d.get(i, j)).abs() < 1e-9);
            }
        }
        assert!(e.stress < 1e-9);
        assert_eq!(e.rank, 2);
    }

    #[test]
    fn zero_matrix_collapses_to_origin() {
        let e = classical_mds(&SquareMatrix::zeros(4), &ids(4)).unwrap();
        assert!(e.coords.values().all(|&(x, y)| x == 0.0 && y == 0.0));
        assert_eq!(e.stress, 0.0);
        assert_eq!(e.rank, 0);
    }

    #[test]
    fn collinear_points_use_one_axis() {
        let d = planar_distances(&[(0.0, 0.0), (1.0, 0.0), (3.0, 0.0), (7.0, 0.0)]);
        let e = classical_mds(&d, &ids(4)).unwrap();
        assert_eq!(e.rank, 1);
        assert!(e.coords.values().all(|&(_, y)| y == 0.0));
        assert!(e.stress < 1e-9);
    }

    #[test]
    fn orientation_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<(f64, f64)> = (0..15)
            .map(|_| (rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)))
            .collect();
        let e = classical_mds(&planar_distances(&pts), &ids(15)).unwrap();
        for axis in 0..2 {
            let vals: Vec<f64> = e
                .coords
                .values()
                .map(|&(x, y)| if axis == 0 { x } else { y })
                .collect();
            let pivot = vals
                .iter()
                .copied()
                .fold(0.0f64, |p, v| if v.abs() > p.abs() { v } else { p });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn invalid_matrices_rejected() {
        let asym = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        assert!(matches!(
            classical_mds(&asym, &ids(2)),
            Err(Error::Matrix(_))
        ));
        let neg = SquareMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            classical_mds(&neg, &ids(2)),
            Err(Error::Matrix(_))
        ));
        let diag = SquareMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            classical_mds(&diag, &ids(2)),
            Err(Error::Matrix(_))
        ));
    }

    #[test]
    fn eigenpairs_match_nalgebra_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let n = 40;
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0)))
            .collect();
        let d = planar_distances(&pts);
        let e = classical_mds(&d, &ids(n)).unwrap();

        let sq = nalgebra::DMatrix::from_fn(n, n, |i, j| d.get(i, j).powi(2));
        let j = nalgebra::DMatrix::identity(n, n)
            - nalgebra::DMatrix::from_element(n, n, 1.0 / n as f64);
        let b = -0.5 * &j * sq * &j;
        let oracle = nalgebra::SymmetricEigen::new(b);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &c| oracle.eigenvalues[c].total_cmp(&oracle.eigenvalues[a]));
        for (k, &idx) in order.iter().take(2).enumerate() {
            let lambda = oracle.eigenvalues[idx];
            assert!((e.eigenvalues[k] - lambda).abs() < 1e-8 * lambda.abs().max(1.0));
            let v = oracle.eigenvectors.column(idx);
            let ours: Vec<f64> = e
                .coords
                .values()
                .map(|&(x, y)| if k == 0 { x } else { y } / lambda.sqrt())
                .collect();
            let dot: f64 = ours.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            let sign = dot.signum();
            for (a, b) in ours.iter().zip(v.iter()) {
                assert!((a - sign * b).abs() < 1e-8);
            }
        }
        let r = e.recovered_distances();
        for i in 0..n {
            for j in 0..n {
                assert!((r.get(i, j) - d.get(i, j)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn distance_csv_parsing() {
        let text = "meter_id,a,b\na,0,2.5\nb,2.5,0\n";
        let (ids, m) = distances_from_csv(text).unwrap();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(m.get(0, 1), 2.5);
        assert!(distances_from_csv("meter_id,a,b\nb,0,1\na,1,0\n").is_err());
        assert!(distances_from_csv("meter_id,a,b\na,0,1\n").is_err());
    }

    #[test]
    fn csv_carries_cluster_labels() {
        let d = planar_distances(&[(0.0, 0.0), (2.0, 0.0)]);
        let e = classical_mds(&d, &ids(2)).unwrap();
        let csv = e.to_csv(None);
        assert_eq!(csv, "meter_id,x,y,cluster\nm0,1,0,\nm1,-1,0,\n");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn planar(max_n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
            prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..max_n)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn planar_sets_reproduced(pts in planar(60)) {
                let d = planar_distances(&pts);
                let e = classical_mds(&d, &ids(pts.len())).unwrap();
                prop_assert!(e.stress < 1e-6);
                let r = e.recovered_distances();
                let max_d = (0..pts.len()).flat_map(|i| d.row(i).to_vec()).fold(0.0, f64::max);
                for i in 0..pts.len() {
                    for j in 0..pts.len() {
                        prop_assert!((r.get(i, j) - d.get(i, j)).abs() < 1e-6);
                        prop_assert!(r.get(i, j) <= max_d + 1e-9);
                    }
                }
            }

            #[test]
            fn reordering_permutes_coordinates(pts in planar(30), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                let n = pts.len();
                let names = ids(n);
                let base = classical_mds(&planar_distances(&pts), &names).unwrap();
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                let shuffled: Vec<(f64, f64)> = order.iter().map(|&i| pts[i]).collect();
                let shuffled_ids: Vec<String> = order.iter().map(|&i| names[i].clone()).collect();
                let other = classical_mds(&planar_distances(&shuffled), &shuffled_ids).unwrap();
                // Only compare when the spectrum is well separated; degenerate
                // eigenvalues leave the in-plane rotation undetermined.
                let gap = (base.eigenvalues[0] - base.eigenvalues[1]).abs();
                prop_assume!(gap > 1e-3 * base.eigenvalues[0] && base.eigenvalues[1] > 1e-6);
                for (m, &(x, y)) in &base.coords {
                    let (x2, y2) = other.coords[m];
                    prop_assert!((x - x2).abs() < 1e-6 && (y - y2).abs() < 1e-6);
                }
            }
        }
    }
}
