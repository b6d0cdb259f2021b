//! Bounds on the k-separator size `s_k(V) = min{|R| : χ(V \ R) ≤ k}`.
//!
//! The plain bound is `r_k |V⁺| − |V⁺ \ V|`; the pruned bound maximizes it over
//! the pruning sequence `V^(i)`. [`s_exact`] is a branch and bound solver for
//! small sets, used as an oracle and for tiny clusters in production.

use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::extremal::{ceil, Rational, RkTable};
use crate::lattice::{chi, cover, interior, Adjacency, LatticeError, VoxelSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoundsError {
    #[error("set of {size} voxels exceeds the exact solver cap of {cap}")]
    SizeCap { size: usize, cap: usize },
    #[error("r_k table covers k <= {k_max}, but k = {k} was requested")]
    TableTooSmall { k: u64, k_max: u64 },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Exact,
    Lower,
    HeuristicUpper,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeparatorBound {
    pub value: usize,
    pub kind: BoundKind,
    /// The separator itself, for exact and heuristic values.
    pub witness: Option<VoxelSet>,
}

/// True when `r ⊆ v` and every component of `v \ r` has at most `k` voxels.
pub fn is_separator(v: &VoxelSet, r: &VoxelSet, k: usize) -> bool {
    r.is_subset(v) && v.difference(r).is_ok_and(|rest| chi(&rest) <= k)
}

fn check_table(table: &RkTable, k: u64) -> Result<(), BoundsError> {
    if table.covers(k) {
        Ok(())
    } else {
        Err(BoundsError::TableTooSmall { k, k_max: table.k_max() })
    }
}

/// `r_k |V⁺| − |V⁺ \ V|`, possibly negative.
pub fn s_lower_plain(v: &VoxelSet, k: u64, table: &RkTable) -> Result<Rational, BoundsError> {
    check_table(table, k)?;
    let c = cover(v)?.len() as i128;
    Ok(table.r(k) * Rational::from_integer(c) - Rational::from_integer(c - v.len() as i128))
}

/// Plain bound values along the pruning sequence, `i = 0, 1, …` until `V^(i)` is empty.
pub fn pruning_profile(v: &VoxelSet, k: u64, table: &RkTable) -> Result<Vec<Rational>, BoundsError> {
    check_table(table, k)?;
    let mut out = Vec::new();
    let mut core = v.clone();
    let mut i = 0;
    while !core.is_empty() {
        let mut pruned = core.clone();
        for _ in 0..i {
            pruned = cover(&pruned)?;
        }
        out.push(s_lower_plain(&pruned, k, table)?);
        core = interior(&core);
        i += 1;
    }
    Ok(out)
}

/// `ŝ_k(V) = 1{χ_V > k} ∨ max_i ⌈s̲_k(V^(i))⌉`, clamped at zero.
pub fn s_lower_pruned(v: &VoxelSet, k: u64, table: &RkTable) -> Result<SeparatorBound, BoundsError> {
    let profile = pruning_profile(v, k, table)?;
    let best = profile.into_iter().map(ceil).max().unwrap_or(0);
    let ind = i128::from(chi(v) as u64 > k);
    Ok(SeparatorBound { value: best.max(ind).max(0) as usize, kind: BoundKind::Lower, witness: None })
}

pub const DEFAULT_EXACT_CAP: usize = 22;

/// Exact `s_k(V)` with a witness. Fails when `|V| > cap` (the cap cannot exceed 64).
pub fn s_exact(v: &VoxelSet, k: usize, cap: usize) -> Result<SeparatorBound, BoundsError> {
    let cap = cap.min(64);
    if v.len() > cap {
        return Err(BoundsError::SizeCap { size: v.len(), cap });
    }
    let removed = ExactSolver::new(v, k).solve();
    let witness = v.select(|i| removed >> i & 1 == 1);
    Ok(SeparatorBound { value: witness.len(), kind: BoundKind::Exact, witness: Some(witness) })
}

struct ExactSolver {
    n: usize,
    k: usize,
    adj: Vec<u64>,
}

impl ExactSolver {
    fn new(v: &VoxelSet, k: usize) -> Self {
        let g = Adjacency::build(v);
        let adj = (0..v.len()).map(|i| g.neighbors(i).iter().fold(0u64, |m, &j| m | 1 << j)).collect();
        ExactSolver { n: v.len(), k, adj }
    }

    fn all(&self) -> u64 {
        if self.n == 64 {
            u64::MAX
        } else {
            (1u64 << self.n) - 1
        }
    }

    fn component(&self, alive: u64, seed: usize) -> u64 {
        let mut comp = 1u64 << seed;
        let mut frontier = comp;
        while frontier != 0 {
            let mut next = 0u64;
            let mut f = frontier;
            while f != 0 {
                let i = f.trailing_zeros() as usize;
                f &= f - 1;
                next |= self.adj[i];
            }
            next &= alive & !comp;
            comp |= next;
            frontier = next;
        }
        comp
    }

    /// A connected set of `k + 1` alive voxels, grown to contain as many
    /// `prefer` voxels as possible; `None` when every component is small.
    fn violating_set(&self, alive: u64, prefer: u64) -> Option<u64> {
        let mut rest = alive;
        while rest != 0 {
            let seed = rest.trailing_zeros() as usize;
            let comp = self.component(alive, seed);
            rest &= !comp;
            if comp.count_ones() as usize > self.k {
                let start = if comp & prefer != 0 { comp & prefer } else { comp };
                let mut s = 1u64 << start.trailing_zeros();
                while (s.count_ones() as usize) <= self.k {
                    let mut reach = 0u64;
                    let mut f = s;
                    while f != 0 {
                        let i = f.trailing_zeros() as usize;
                        f &= f - 1;
                        reach |= self.adj[i];
                    }
                    reach &= comp & !s;
                    let pick = if reach & prefer != 0 { reach & prefer } else { reach };
                    s |= 1u64 << pick.trailing_zeros();
                }
                return Some(s);
            }
        }
        None
    }

    /// Disjoint violating sets each need a removal; `None` if one of them is
    /// made only of voxels that may not be removed.
    fn packing_bound(&self, alive: u64, forbidden: u64) -> Option<usize> {
        let mut rest = alive;
        let mut count = 0;
        while let Some(s) = self.violating_set(rest, 0) {
            if s & !forbidden == 0 {
                return None;
            }
            count += 1;
            rest &= !s;
        }
        Some(count)
    }

    fn solve(&self) -> u64 {
        let all = self.all();
        let start = self.packing_bound(all, 0).unwrap_or(0);
        for budget in start..=self.n {
            if let Some(r) = self.search(all, 0, budget) {
                return r;
            }
        }
        unreachable!("removing every voxel always separates")
    }

    fn search(&self, alive: u64, forbidden: u64, budget: usize) -> Option<u64> {
        let s = match self.violating_set(alive, forbidden) {
            None => return Some(0),
            Some(s) => s,
        };
        if budget == 0 {
            return None;
        }
        match self.packing_bound(alive, forbidden) {
            Some(lb) if lb <= budget => {}
            _ => return None,
        }
        // Branch on the first removed member of `s` in index order; members
        // before it are kept for the rest of this subtree.
        let mut kept = forbidden;
        let mut cand = s & !forbidden;
        while cand != 0 {
            let x = cand.trailing_zeros() as usize;
            cand &= cand - 1;
            if let Some(r) = self.search(alive & !(1 << x), kept, budget - 1) {
                return Some(r | 1 << x);
            }
            kept |= 1 << x;
        }
        None
    }
}

/// Enumerates removal sets by increasing size with a naive flood fill.
#[cfg(test)]
pub(crate) fn brute_force_s(v: &VoxelSet, k: usize) -> usize {
    let n = v.len();
    let pts: Vec<&[i32]> = v.iter().collect();
    let near = |a: &[i32], b: &[i32]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1);
    for size in 0..=n {
        let mut found = false;
        for_each_subset(n, size, &mut |mask: u64| {
            if found {
                return;
            }
            // naive flood fill on the kept voxels
            let kept: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 0).collect();
            let mut seen = vec![false; n];
            let mut worst = 0;
            for &s in &kept {
                if seen[s] {
                    continue;
                }
                seen[s] = true;
                let mut stack = vec![s];
                let mut sz = 0;
                while let Some(a) = stack.pop() {
                    sz += 1;
                    for &b in &kept {
                        if !seen[b] && near(pts[a], pts[b]) {
                            seen[b] = true;
                            stack.push(b);
                        }
                    }
                }
                worst = worst.max(sz);
            }
            if worst <= k {
                found = true;
            }
        });
        if found {
            return size;
        }
    }
    n
}

#[cfg(test)]
pub(crate) fn for_each_subset(n: usize, size: usize, f: &mut dyn FnMut(u64)) {
    fn rec(start: usize, n: usize, left: usize, mask: u64, f: &mut dyn FnMut(u64)) {
        if left == 0 {
            f(mask);
            return;
        }
        for i in start..=n - left {
            rec(i + 1, n, left - 1, mask | 1 << i, f);
        }
    }
    rec(0, n, size, 0, f)
}

impl SeparatorBound {
    pub fn zero(kind: BoundKind, dim: usize) -> Self {
        SeparatorBound { value: 0, kind, witness: Some(VoxelSet::empty(dim).expect("dim >= 1")) }
    }

    pub fn as_rational(&self) -> Rational {
        Rational::from_integer(self.value as i128)
    }

    pub fn is_zero(&self) -> bool {
        self.as_rational().is_zero()
    }
}
