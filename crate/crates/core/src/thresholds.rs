//! Permutation calibration of the cluster-forming pair `(z, k_M)`.
//!
//! Row 0 of a permutation matrix is the observed statistic. Both searches are
//! per-row union-find sweeps in descending z order followed by an order
//! statistic at index `⌈N(1−α)⌉` of the ascending per-row values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Adjacency, UnionFind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("mask is empty")]
    EmptyMask,
    #[error("need at least 2 permutations, got {0}")]
    TooFewPermutations(usize),
    #[error("row {row} has {got} values, expected {expected}")]
    RowLength { row: usize, expected: usize, got: usize },
    #[error("non-finite value at row {row}, voxel {col}")]
    NonFinite { row: usize, col: usize },
    #[error("adjacency has {got} voxels but rows have {expected}")]
    AdjacencyMismatch { expected: usize, got: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("z threshold must not be NaN")]
    NanThreshold,
}

/// Source of permutation rows. Implementations may generate rows on demand.
pub trait PermutationSource: Sync {
    fn permutations(&self) -> usize;
    fn voxels(&self) -> usize;
    /// Writes row `j` into `buf` (cleared first).
    fn row_into(&self, j: usize, buf: &mut Vec<f32>);
}

/// `N` rows of `m` z-scores in a fixed voxel order.
#[derive(Clone, Debug, PartialEq)]
pub struct PermutationMatrix {
    m: usize,
    n: usize,
    data: Vec<f32>,
}

impl PermutationMatrix {
    pub fn new(rows: Vec<Vec<f32>>) -> Result<Self, ThresholdError> {
        let m = rows.first().map_or(0, |r| r.len());
        let n = rows.len();
        let mut data = Vec::with_capacity(n * m);
        for (j, r) in rows.into_iter().enumerate() {
            if r.len() != m {
                return Err(ThresholdError::RowLength { row: j, expected: m, got: r.len() });
            }
            data.extend(r);
        }
        Self::from_flat(n, m, data)
    }

    pub fn from_flat(n: usize, m: usize, data: Vec<f32>) -> Result<Self, ThresholdError> {
        if n < 2 {
            return Err(ThresholdError::TooFewPermutations(n));
        }
        if m == 0 {
            return Err(ThresholdError::EmptyMask);
        }
        assert_eq!(data.len(), n * m, "flat data must hold n*m values");
        if let Some(p) = data.iter().position(|x| !x.is_finite()) {
            return Err(ThresholdError::NonFinite { row: p / m, col: p % m });
        }
        Ok(PermutationMatrix { m, n, data })
    }

    pub fn row(&self, j: usize) -> &[f32] {
        &self.data[j * self.m..(j + 1) * self.m]
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// Keeps the listed columns, in the given order.
    pub fn restrict(&self, cols: &[usize]) -> Result<Self, ThresholdError> {
        let mut data = Vec::with_capacity(self.n * cols.len());
        for j in 0..self.n {
            let r = self.row(j);
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Self::from_flat(self.n, cols.len(), data)
    }
}

impl PermutationSource for PermutationMatrix {
    fn permutations(&self) -> usize {
        self.n
    }

    fn voxels(&self) -> usize {
        self.m
    }

    fn row_into(&self, j: usize, buf: &mut Vec<f32>) {
        buf.clear();
        buf.extend_from_slice(self.row(j));
    }
}

/// Rows produced by a closure, so the `N × m` matrix never has to exist.
pub struct GeneratedRows<F> {
    pub n: usize,
    pub m: usize,
    pub generate: F,
}

impl<F: Fn(usize, &mut Vec<f32>) + Sync> PermutationSource for GeneratedRows<F> {
    fn permutations(&self) -> usize {
        self.n
    }

    fn voxels(&self) -> usize {
        self.m
    }

    fn row_into(&self, j: usize, buf: &mut Vec<f32>) {
        buf.clear();
        (self.generate)(j, buf);
        assert_eq!(buf.len(), self.m, "generated row has wrong length");
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// `k_M` given, find `Z_α`.
    FixK { k: usize },
    /// `z` given, find `K_α`.
    FixZ { z: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub alpha: f64,
    pub mode: CalibrationMode,
    /// 1-based index into the ascending per-permutation statistics.
    pub index: usize,
    /// `Z_α` (fix-k) or `K_α` (fix-z). `-inf` when even the full mask stays at or below `k_M`.
    pub value: f64,
    pub per_permutation: Vec<f64>,
    /// Permutations whose rows never exceed `k_M` (fix-k only).
    pub exhausted: Vec<usize>,
}

impl Calibration {
    pub fn z(&self) -> Option<f64> {
        matches!(self.mode, CalibrationMode::FixK { .. }).then_some(self.value)
    }

    pub fn k(&self) -> Option<usize> {
        matches!(self.mode, CalibrationMode::FixZ { .. }).then_some(self.value as usize)
    }
}

/// `⌈N(1−α)⌉` clamped to `1..=N`. A small tolerance keeps `N(1−α)` that is
/// an integer in exact arithmetic from rounding up a step.
pub fn quantile_index(n: usize, alpha: f64) -> usize {
    let x = n as f64 * (1.0 - alpha);
    ((x - 1e-9).ceil() as i64).clamp(1, n as i64) as usize
}

fn order_statistic(mut stats: Vec<f64>, alpha: f64) -> (usize, f64, Vec<f64>) {
    let idx = quantile_index(stats.len(), alpha);
    let per = stats.clone();
    stats.sort_by(|a, b| a.partial_cmp(b).expect("statistics are not NaN"));
    (idx, stats[idx - 1], per)
}

fn check(src: &dyn PermutationSource, adj: &Adjacency, alpha: f64) -> Result<(), ThresholdError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ThresholdError::BadAlpha(alpha));
    }
    if src.voxels() == 0 {
        return Err(ThresholdError::EmptyMask);
    }
    if src.permutations() < 2 {
        return Err(ThresholdError::TooFewPermutations(src.permutations()));
    }
    if adj.len() != src.voxels() {
        return Err(ThresholdError::AdjacencyMismatch { expected: src.voxels(), got: adj.len() });
    }
    Ok(())
}

/// Voxel order by descending value, ties by index.
fn descending(row: &[f32]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..row.len() as u32).collect();
    order.sort_by(|&a, &b| row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b)));
    order
}

/// Smallest candidate `z` with `χ({v : row[v] > z}) ≤ k`; `None` if the whole mask stays at or below `k`.
pub fn row_z_threshold(row: &[f32], adj: &Adjacency, k: usize) -> Option<f32> {
    let order = descending(row);
    let mut uf = UnionFind::new(row.len());
    let mut active = vec![false; row.len()];
    let mut biggest = 0;
    let mut i = 0;
    while i < order.len() {
        let g = row[order[i] as usize];
        // insert the whole tie group before reading the size
        while i < order.len() && row[order[i] as usize] == g {
            let v = order[i] as usize;
            active[v] = true;
            let mut r = uf.find(v);
            for &u in adj.neighbors(v) {
                if active[u as usize] {
                    r = uf.union(r, u as usize);
                }
            }
            biggest = biggest.max(uf.set_size(r));
            i += 1;
        }
        if biggest > k {
            return Some(g);
        }
    }
    None
}

/// `χ({v : row[v] > z})`.
pub fn row_max_cluster(row: &[f32], adj: &Adjacency, z: f64) -> usize {
    let mut uf = UnionFind::new(row.len());
    let mut best = 0;
    for v in 0..row.len() {
        if f64::from(row[v]) <= z {
            continue;
        }
        let mut r = uf.find(v);
        for &u in adj.neighbors(v) {
            let u = u as usize;
            if u < v && f64::from(row[u]) > z {
                r = uf.union(r, u);
            }
        }
        best = best.max(uf.set_size(r));
    }
    best
}

/// The z-threshold matching a cluster-extent threshold `k_M`.
pub fn find_z_for_k(src: &dyn PermutationSource, adj: &Adjacency, k: usize, alpha: f64) -> Result<Calibration, ThresholdError> {
    check(src, adj, alpha)?;
    let per: Vec<Option<f32>> = (0..src.permutations())
        .into_par_iter()
        .map_init(Vec::new, |buf, j| {
            src.row_into(j, buf);
            row_z_threshold(buf, adj, k)
        })
        .collect();
    let exhausted: Vec<usize> = per.iter().enumerate().filter(|(_, z)| z.is_none()).map(|(j, _)| j).collect();
    let stats: Vec<f64> = per.into_iter().map(|z| z.map_or(f64::NEG_INFINITY, f64::from)).collect();
    let (index, value, per_permutation) = order_statistic(stats, alpha);
    Ok(Calibration { alpha, mode: CalibrationMode::FixK { k }, index, value, per_permutation, exhausted })
}

/// The cluster-extent threshold for a z-threshold.
pub fn find_k_for_z(src: &dyn PermutationSource, adj: &Adjacency, z: f64, alpha: f64) -> Result<Calibration, ThresholdError> {
    if z.is_nan() {
        return Err(ThresholdError::NanThreshold);
    }
    check(src, adj, alpha)?;
    let stats: Vec<f64> = (0..src.permutations())
        .into_par_iter()
        .map_init(Vec::new, |buf, j| {
            src.row_into(j, buf);
            row_max_cluster(buf, adj, z) as f64
        })
        .collect();
    let (index, value, per_permutation) = order_statistic(stats, alpha);
    Ok(Calibration { alpha, mode: CalibrationMode::FixZ { z }, index, value, per_permutation, exhausted: Vec::new() })
}

/// `K_α` recomputed on the sub-mask `keep`. An empty sub-mask gives 0.
pub fn find_k_on_submask(perms: &PermutationMatrix, adj: &Adjacency, keep: &[bool], z: f64, alpha: f64) -> Result<usize, ThresholdError> {
    let cols: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    if cols.is_empty() {
        return Ok(0);
    }
    let (sub_adj, _) = adj.restrict(keep);
    let sub = perms.restrict(&cols)?;
    Ok(find_k_for_z(&sub, &sub_adj, z, alpha)?.k().expect("fix-z calibration"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(m: usize) -> Adjacency {
        let lists: Vec<Vec<u32>> = (0..m)
            .map(|i| {
                let mut l = Vec::new();
                if i > 0 {
                    l.push(i as u32 - 1);
                }
                if i + 1 < m {
                    l.push(i as u32 + 1);
                }
                l
            })
            .collect();
        Adjacency::from_lists(&lists)
    }

    /// Naive flood fill over the explicit neighbor lists.
    fn flood_max(row: &[f32], adj: &Adjacency, z: f64) -> usize {
        let m = row.len();
        let mut seen = vec![false; m];
        let mut best = 0;
        for s in 0..m {
            if seen[s] || f64::from(row[s]) <= z {
                continue;
            }
            let mut stack = vec![s];
            seen[s] = true;
            let mut size = 0;
            while let Some(v) = stack.pop() {
                size += 1;
                for &u in adj.neighbors(v) {
                    let u = u as usize;
                    if !seen[u] && f64::from(row[u]) > z {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            best = best.max(size);
        }
        best
    }

    /// Scan every candidate threshold from the lowest up.
    fn brute_z(row: &[f32], adj: &Adjacency, k: usize) -> f64 {
        let mut cands: Vec<f64> = row.iter().map(|&x| f64::from(x)).collect();
        cands.push(f64::NEG_INFINITY);
        cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cands.into_iter().find(|&z| flood_max(row, adj, z) <= k).unwrap()
    }

    fn brute_quantile(mut xs: Vec<f64>, alpha: f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len();
        // smallest index i (1-based) with i >= n(1-alpha), by exact integer search on alpha as a fraction of 1000
        let a = (alpha * 1000.0).round() as usize;
        let i = (1..=n).find(|&i| i * 1000 >= n * (1000 - a)).unwrap();
        xs[i - 1]
    }

    fn hand_rows() -> PermutationMatrix {
        PermutationMatrix::new(vec![
            vec![0.5, 2.0, 2.5, 0.1, 1.5, 1.8],
            vec![3.0, 0.2, 0.3, 2.2, 2.1, 0.0],
            vec![1.0, 1.1, 1.2, 1.3, 1.4, 1.5],
            vec![0.0, 0.0, 4.0, 0.0, 0.0, 4.0],
        ])
        .unwrap()
    }

    #[test]
    fn hand_built_path() {
        let p = hand_rows();
        let adj = path(6);
        let c = find_z_for_k(&p, &adj, 1, 0.25).unwrap();
        // per-row thresholds: first insertion that makes a pair
        let f = |x: f32| f64::from(x);
        assert_eq!(c.per_permutation, vec![2.0, f(2.1), f(1.4), 0.0]);
        assert!(c.exhausted.is_empty());
        assert_eq!(c.index, 3);
        assert_eq!(c.z(), Some(2.0_f32 as f64));
        let k = find_k_for_z(&p, &adj, 1.45, 0.25).unwrap();
        assert_eq!(k.per_permutation, vec![2.0, 2.0, 1.0, 1.0]);
        assert_eq!(k.k(), Some(2));
    }

    #[test]
    fn trivial_cases() {
        let p = hand_rows();
        let adj = path(6);
        assert_eq!(find_k_for_z(&p, &adj, 10.0, 0.05).unwrap().k(), Some(0));
        let all = find_z_for_k(&p, &adj, 6, 0.5).unwrap();
        assert_eq!(all.exhausted, vec![0, 1, 2, 3]);
        assert_eq!(all.value, f64::NEG_INFINITY);
        let dup = PermutationMatrix::new(vec![p.row(0).to_vec(); 5]).unwrap();
        let c = find_z_for_k(&dup, &adj, 1, 0.2).unwrap();
        assert_eq!(c.value, f64::from(row_z_threshold(p.row(0), &adj, 1).unwrap()));
        assert!(matches!(find_z_for_k(&p, &adj, 1, 1.0), Err(ThresholdError::BadAlpha(_))));
        assert!(matches!(find_z_for_k(&p, &path(5), 1, 0.1), Err(ThresholdError::AdjacencyMismatch { .. })));
        assert!(PermutationMatrix::new(vec![vec![1.0]]).is_err());
        assert!(matches!(PermutationMatrix::new(vec![vec![1.0], vec![f32::NAN]]), Err(ThresholdError::NonFinite { row: 1, col: 0 })));
    }

    #[test]
    fn quantile_index_convention() {
        assert_eq!(quantile_index(20, 0.05), 19);
        assert_eq!(quantile_index(100, 0.05), 95);
        assert_eq!(quantile_index(4, 0.25), 3);
        assert_eq!(quantile_index(3, 0.999), 1);
        assert_eq!(quantile_index(10, 0.01), 10);
    }

    #[test]
    fn generated_rows_match_matrix() {
        let p = hand_rows();
        let g = GeneratedRows { n: 4, m: 6, generate: |j: usize, buf: &mut Vec<f32>| buf.extend_from_slice(p.row(j)) };
        let adj = path(6);
        assert_eq!(find_z_for_k(&g, &adj, 2, 0.3).unwrap(), find_z_for_k(&p, &adj, 2, 0.3).unwrap());
    }

    fn instance() -> impl Strategy<Value = (PermutationMatrix, Adjacency)> {
        (2usize..=16, 1usize..=30).prop_flat_map(|(n, m)| {
            let rows = proptest::collection::vec(proptest::collection::vec((-8i32..8).prop_map(|x| x as f32 * 0.5), m), n);
            let edges = proptest::collection::vec((0..m, 0..m), 0..2 * m);
            (rows, edges).prop_map(move |(rows, edges)| {
                let mut lists = vec![Vec::new(); m];
                for (a, b) in edges {
                    if a != b && !lists[a].contains(&(b as u32)) {
                        lists[a].push(b as u32);
                        lists[b].push(a as u32);
                    }
                }
                (PermutationMatrix::new(rows).unwrap(), Adjacency::from_lists(&lists))
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn find_z_matches_oracle((p, adj) in instance(), k in 0usize..5, a in 1usize..50) {
            let alpha = a as f64 / 100.0;
            let c = find_z_for_k(&p, &adj, k, alpha).unwrap();
            let per: Vec<f64> = (0..p.permutations()).map(|j| brute_z(p.row(j), &adj, k)).collect();
            prop_assert_eq!(&c.per_permutation, &per);
            prop_assert_eq!(c.value, brute_quantile(per, alpha));
        }

        #[test]
        fn find_k_matches_oracle((p, adj) in instance(), zi in -10i32..10, a in 1usize..50) {
            let alpha = a as f64 / 100.0;
            let z = zi as f64 * 0.5;
            let c = find_k_for_z(&p, &adj, z, alpha).unwrap();
            let per: Vec<f64> = (0..p.permutations()).map(|j| flood_max(p.row(j), &adj, z) as f64).collect();
            prop_assert_eq!(&c.per_permutation, &per);
            prop_assert_eq!(c.value, brute_quantile(per, alpha));
        }

        #[test]
        fn k_zero_is_max_quantile((p, adj) in instance(), a in 1usize..50) {
            let alpha = a as f64 / 100.0;
            let c = find_z_for_k(&p, &adj, 0, alpha).unwrap();
            let maxima: Vec<f64> = (0..p.permutations()).map(|j| p.row(j).iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x as f64))).collect();
            prop_assert_eq!(c.value, brute_quantile(maxima, alpha));
        }

        #[test]
        fn round_trip((p, adj) in instance(), k in 0usize..5) {
            let z = find_z_for_k(&p, &adj, k, 0.1).unwrap().value;
            let kk = find_k_for_z(&p, &adj, z, 0.1).unwrap().k().unwrap();
            prop_assert!(kk <= k);
        }

        #[test]
        fn mask_monotone((p, adj) in instance(), keep in proptest::collection::vec(any::<bool>(), 30), zi in -6i32..6) {
            let m = p.voxels();
            let outer: Vec<bool> = (0..m).map(|i| keep[i] || i % 3 == 0).collect();
            let inner: Vec<bool> = (0..m).map(|i| keep[i] && outer[i]).collect();
            let z = zi as f64 * 0.5;
            let k_in = find_k_on_submask(&p, &adj, &inner, z, 0.1).unwrap();
            let k_out = find_k_on_submask(&p, &adj, &outer, z, 0.1).unwrap();
            let k_all = find_k_for_z(&p, &adj, z, 0.1).unwrap().k().unwrap();
            prop_assert!(k_in <= k_out && k_out <= k_all);
        }
    }
}
