//! Extremal cover sizes and the rational thresholds `r_k`, `r̃_k` built on them.
//!
//! `f(d, k)` is the smallest possible cover of a `k`-voxel set in `Z^d`. It is
//! computed by the box recursion: the largest near-cube `b ≤ k` with sides
//! `q` and `q + 1`, plus a `(d-1)`-dimensional layer for the remaining voxels.
//! Everything here is integer or exact rational; no logarithms.

use num_rational::Ratio;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::lattice::VoxelSet;

pub type Rational = Ratio<i128>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtremalError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("box counts need k >= 1")]
    ZeroK,
    #[error("cluster size must be at least 1")]
    EmptyCluster,
}

/// Near-cube parameters for `(d, k)`, `k ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoxCounts {
    pub d: usize,
    pub k: u64,
    /// `⌊k^{1/d}⌋`
    pub q: u64,
    pub l: usize,
    pub b: u64,
    pub b_plus: u64,
}

fn checked_pow(base: u64, exp: usize) -> Option<u64> {
    let mut acc = 1u64;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// `⌊k^{1/d}⌋` by integer search.
pub fn int_root(k: u64, d: usize) -> u64 {
    if d == 1 || k < 2 {
        return k;
    }
    let mut q = (k as f64).powf(1.0 / d as f64).floor() as u64;
    while q > 0 && checked_pow(q, d).is_none_or(|p| p > k) {
        q -= 1;
    }
    while checked_pow(q + 1, d).is_some_and(|p| p <= k) {
        q += 1;
    }
    q
}

fn mixed(q: u64, d: usize, l: usize) -> Option<u64> {
    checked_pow(q, d - l)?.checked_mul(checked_pow(q + 1, l)?)
}

pub fn box_counts(d: usize, k: u64) -> Result<BoxCounts, ExtremalError> {
    if d == 0 {
        return Err(ExtremalError::ZeroDimension);
    }
    if k == 0 {
        return Err(ExtremalError::ZeroK);
    }
    let q = int_root(k, d);
    let mut l = 0;
    while l + 1 < d && mixed(q, d, l + 1).is_some_and(|p| p <= k) {
        l += 1;
    }
    let b = mixed(q, d, l).expect("b <= k");
    let b_plus = mixed(q + 1, d, l).expect("cover of a box below k fits in u64");
    Ok(BoxCounts { d, k, q, l, b, b_plus })
}

/// Minimal cover size over all `k`-voxel sets in `Z^d`.
pub fn f(d: usize, k: u64) -> u64 {
    assert!(d >= 1, "dimension must be at least 1");
    if k == 0 {
        return 0;
    }
    if d == 1 {
        return k + 1;
    }
    let bc = box_counts(d, k).expect("d, k >= 1");
    bc.b_plus + f(d - 1, k - bc.b)
}

/// A `k`-voxel set in `Z^d` whose cover has exactly `f(d, k)` voxels.
pub fn extremal_set(d: usize, k: u64) -> VoxelSet {
    VoxelSet::from_coords(d, build_extremal(d, k)).expect("consistent dimension")
}

fn build_extremal(d: usize, k: u64) -> Vec<Vec<i32>> {
    if k == 0 {
        return Vec::new();
    }
    if d == 1 {
        return (0..k as i32).map(|x| vec![x]).collect();
    }
    let bc = box_counts(d, k).expect("k >= 1");
    let q = bc.q as i32;
    let ext: Vec<i32> = (0..d).map(|a| if a < bc.l { q + 1 } else { q }).collect();
    let mut out = Vec::with_capacity(k as usize);
    let mut cur = vec![0i32; d];
    for _ in 0..bc.b {
        out.push(cur.clone());
        for a in (0..d).rev() {
            cur[a] += 1;
            if cur[a] < ext[a] {
                break;
            }
            cur[a] = 0;
        }
    }
    // The remainder is a nested (d-1)-dimensional extremal set laid on the
    // face just past axis l, which has extent q.
    for mut w in build_extremal(d - 1, k - bc.b) {
        w.insert(bc.l, q);
        out.push(w);
    }
    out
}

/// Cached `f`, `r_k` and `r̃_k` for one dimension, `k = 0..=k_max`.
#[derive(Clone, Debug)]
pub struct RkTable {
    d: usize,
    f: Vec<u64>,
    r: Vec<Rational>,
    r_tilde: Vec<Rational>,
}

impl RkTable {
    pub fn new(d: usize, k_max: u64) -> Result<Self, ExtremalError> {
        if d == 0 {
            return Err(ExtremalError::ZeroDimension);
        }
        let n = k_max as usize + 1;
        let mut fs = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        let mut rt = Vec::with_capacity(n);
        fs.push(0);
        r.push(Rational::one());
        rt.push(Rational::one());
        for k in 1..=k_max {
            let fk = f(d, k);
            fs.push(fk);
            let cand = Rational::new((fk - k) as i128, fk as i128);
            let prev = *r.last().unwrap();
            r.push(if cand < prev { cand } else { prev });
            let bc = box_counts(d, k)?;
            rt.push(Rational::new((bc.b_plus - bc.b) as i128, bc.b_plus as i128));
        }
        Ok(RkTable { d, f: fs, r, r_tilde: rt })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k_max(&self) -> u64 {
        self.f.len() as u64 - 1
    }

    pub fn f(&self, k: u64) -> u64 {
        self.f[k as usize]
    }

    /// `r_k`; `r_0 = 1`.
    pub fn r(&self, k: u64) -> Rational {
        self.r[k as usize]
    }

    /// `r̃_k` for `k ≥ 1`; index 0 holds 1 by convention.
    pub fn r_tilde(&self, k: u64) -> Rational {
        self.r_tilde[k as usize]
    }

    /// The `r_k` used for clusters larger than the table: the tail minimum
    /// is at most the last entry, so callers needing exact values must size
    /// the table to the largest cluster.
    pub fn covers(&self, k: u64) -> bool {
        k <= self.k_max()
    }
}

pub fn r_k(d: usize, k: u64) -> Rational {
    RkTable::new(d, k).expect("d >= 1").r(k)
}

pub fn r_tilde(d: usize, k: u64) -> Result<Rational, ExtremalError> {
    let bc = box_counts(d, k)?;
    Ok(Rational::new((bc.b_plus - bc.b) as i128, bc.b_plus as i128))
}

/// Exact ceiling of a rational.
pub fn ceil(x: Rational) -> i128 {
    x.ceil().to_integer()
}

/// Largest TDP the pruned lower bound can give a cluster of `size` voxels at
/// extent threshold `k_m`.
pub fn max_tdp_shortcut(table: &RkTable, k_m: u64, size: u64) -> Result<Rational, ExtremalError> {
    if size == 0 {
        return Err(ExtremalError::EmptyCluster);
    }
    let rk = table.r(k_m);
    let rc = table.r(size);
    let c = size as i128;
    let base = ceil((rk - rc) / (Rational::one() - rc) * Rational::from_integer(c));
    let ind = i128::from(size > k_m);
    Ok(Rational::new(base.max(ind).max(0), c))
}

/// Smallest cluster size `n` with `r_n ≤ (r_{k_m} − γ)/(1 − γ)` (or `<` when
/// `strict`), searched up to `limit`. `None` when no size up to the limit
/// qualifies. Several `n` can hit the target exactly, so the two readings differ.
pub fn min_cluster_size_for_tdp(d: usize, k_m: u64, gamma: Rational, limit: u64, strict: bool) -> Option<u64> {
    if gamma >= Rational::one() || gamma < Rational::zero() {
        return None;
    }
    let rk = r_k(d, k_m);
    let target = (rk - gamma) / (Rational::one() - gamma);
    let mut best = Rational::one();
    for n in 1..=limit {
        let fk = f(d, n);
        let cand = Rational::new((fk - n) as i128, fk as i128);
        if cand < best {
            best = cand;
        }
        if best < target || (!strict && best == target) {
            return Some(n);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::cover;

    fn q(a: i128, b: i128) -> Rational {
        Rational::new(a, b)
    }

    #[test]
    fn box_count_examples() {
        let b = box_counts(2, 10).unwrap();
        assert_eq!((b.q, b.l, b.b, b.b_plus), (3, 0, 9, 16));
        let b = box_counts(3, 64).unwrap();
        assert_eq!((b.l, b.b, b.b_plus), (0, 64, 125));
        let b = box_counts(3, 12).unwrap();
        assert_eq!((b.q, b.l, b.b, b.b_plus), (2, 1, 12, 36));
        assert!(box_counts(2, 0).is_err());
        // q = 1 means the log formula would divide by log 2 - log 1; the search is unaffected.
        let b = box_counts(3, 7).unwrap();
        assert_eq!((b.q, b.l, b.b), (1, 2, 4));
    }

    #[test]
    fn box_count_bracket() {
        for d in 1..=4 {
            for k in 1..2000u64 {
                let b = box_counts(d, k).unwrap();
                assert!(b.b <= k && b.b_plus > b.b);
                // k < b (q+1)/q, i.e. k q < b (q+1)
                assert!((k as u128) * (b.q as u128) < (b.b as u128) * (b.q as u128 + 1), "d={d} k={k}");
            }
        }
    }

    #[test]
    fn int_root_exact() {
        for d in 1..=4 {
            for k in 0..5000u64 {
                let q = int_root(k, d);
                assert!(q.pow(d as u32) <= k && (q + 1).pow(d as u32) > k);
            }
        }
    }

    #[test]
    fn f_examples() {
        assert_eq!(f(1, 5), 6);
        assert_eq!(f(2, 10), 18);
        assert_eq!(f(3, 14), 42);
        assert_eq!(f(3, 0), 0);
    }

    #[test]
    fn r_examples() {
        assert_eq!(r_k(2, 10), q(7, 16));
        assert_eq!(r_k(3, 14), q(2, 3));
        assert_eq!(r_k(2, 0), Rational::one());
        // In one dimension (f - j)/f = 1/(j + 1) keeps falling, so r_k = 1/(k + 1).
        for k in 1..20 {
            assert_eq!(r_k(1, k), q(1, k as i128 + 1));
        }
        assert_eq!(r_tilde(3, 64).unwrap(), q(61, 125));
        assert_eq!(r_tilde(3, 14).unwrap(), q(2, 3));
        assert_eq!(r_tilde(2, 10).unwrap(), q(7, 16));
    }

    #[test]
    fn table_monotone_and_in_range() {
        for d in 2..=4 {
            let t = RkTable::new(d, 400).unwrap();
            for k in 1..=400 {
                assert!(t.r(k) <= t.r(k - 1));
                assert!(t.r(k) > Rational::zero() && t.r(k) <= Rational::one());
                assert!(t.r_tilde(k) > Rational::zero() && t.r_tilde(k) < Rational::one());
            }
        }
    }

    #[test]
    fn superadditive_spot_check() {
        for d in 1..=3 {
            for k in 0..=20u64 {
                for l in 0..=(20 - k) {
                    assert!(f(d, k + l) <= f(d, k) + f(d, l), "d={d} k={k} l={l}");
                }
            }
        }
    }

    #[test]
    fn extremal_witness() {
        for d in 1..=3 {
            for k in 0..=30u64 {
                let s = extremal_set(d, k);
                assert_eq!(s.len() as u64, k);
                assert_eq!(cover(&s).unwrap().len() as u64, f(d, k), "d={d} k={k}");
                if k > 0 {
                    assert!(extremal_set(d, k - 1).is_subset(&s), "nesting d={d} k={k}");
                }
            }
        }
    }

    #[test]
    fn min_size_for_half_tdp() {
        assert_eq!(min_cluster_size_for_tdp(3, 14, q(1, 2), 10_000, true), Some(339));
        // r_336 = 168/504 is exactly 1/3, and the cap there is exactly 1/2.
        assert_eq!(min_cluster_size_for_tdp(3, 14, q(1, 2), 10_000, false), Some(336));
        let t = RkTable::new(3, 400).unwrap();
        assert_eq!(t.r(336), q(1, 3));
        assert_eq!(max_tdp_shortcut(&t, 14, 336).unwrap(), q(1, 2));
    }

    #[test]
    fn max_tdp_cap() {
        let t = RkTable::new(3, 500).unwrap();
        // k_M = 0: every size can reach TDP 1.
        for c in 1..50 {
            assert_eq!(max_tdp_shortcut(&t, 0, c).unwrap(), Rational::one());
        }
        // Sizes at or below k_M can never be positive.
        for c in 1..=14 {
            assert_eq!(max_tdp_shortcut(&t, 14, c).unwrap(), Rational::zero());
        }
        assert!(max_tdp_shortcut(&t, 14, 15).unwrap() > Rational::zero());
        assert!(max_tdp_shortcut(&t, 14, 0).is_err());
        for c in 15..500 {
            assert!(max_tdp_shortcut(&t, 14, c).unwrap() <= t.r(14) + q(1, c as i128));
        }
    }
}
