//! Tilings of a cover `V⁺` and their target `t_k`.
//!
//! A tiling assigns every voxel of `V⁺` to a tile. For a tile `T`, `T⁻` is its
//! interior (members whose positive neighbors all lie in `T`) and `T⁰ = T \ T⁻`.
//! The target is `Σ |T⁰ ∩ V| + Σ (|T⁻ ∩ V| − k)₊`. Single-voxel moves update
//! the per-tile counts in `O(2^d)` lookups.

use thiserror::Error;

use crate::bounds::{is_separator, BoundKind, SeparatorBound};
use crate::lattice::{component_labels, connected_components, cover, positive_offsets, Adjacency, LatticeError, VoxelIndex, VoxelSet};

pub(crate) const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TilingError {
    #[error("separator is not a subset of the voxel set")]
    NotSubset,
    #[error("removing the separator leaves a component of {found} voxels, above k = {k}")]
    NotASeparator { found: usize, k: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Static geometry of `V⁺`: which cover voxels are in `V`, positive and
/// negative neighbor tables, and the 26-neighbor graph.
#[derive(Clone, Debug)]
pub struct CoverGeometry {
    base: VoxelSet,
    cover: VoxelSet,
    in_base: Vec<bool>,
    /// `2^d - 1` positive neighbors per cover voxel (NONE if outside `V⁺`).
    pos: Vec<u32>,
    /// `2^d` negative neighbors per cover voxel, the voxel itself first.
    neg: Vec<u32>,
    stride_pos: usize,
    stride_neg: usize,
    adj: Adjacency,
}

impl CoverGeometry {
    pub fn new(base: &VoxelSet) -> Result<Self, LatticeError> {
        let cov = cover(base)?;
        let d = base.dim();
        let idx = VoxelIndex::new(&cov);
        let offs = positive_offsets(d);
        let mut scratch = Vec::with_capacity(d);
        let mut in_base = vec![false; cov.len()];
        for v in base.iter() {
            in_base[idx.find(v).expect("V is inside its cover")] = true;
        }
        let stride_pos = offs.len() - 1;
        let stride_neg = offs.len();
        let mut pos = Vec::with_capacity(cov.len() * stride_pos);
        let mut neg = Vec::with_capacity(cov.len() * stride_neg);
        let negoffs: Vec<Vec<i32>> = offs.iter().map(|o| o.iter().map(|&x| -x).collect()).collect();
        for v in cov.iter() {
            for o in &offs[1..] {
                pos.push(idx.find_offset(v, o, &mut scratch).map_or(NONE, |i| i as u32));
            }
            for o in &negoffs {
                neg.push(idx.find_offset(v, o, &mut scratch).map_or(NONE, |i| i as u32));
            }
        }
        let adj = Adjacency::build_with(&cov, &idx);
        Ok(CoverGeometry { base: base.clone(), cover: cov, in_base, pos, neg, stride_pos, stride_neg, adj })
    }

    pub fn base(&self) -> &VoxelSet {
        &self.base
    }

    pub fn cover(&self) -> &VoxelSet {
        &self.cover
    }

    pub fn len(&self) -> usize {
        self.cover.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cover.is_empty()
    }

    pub fn in_base(&self, i: usize) -> bool {
        self.in_base[i]
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adj
    }

    #[inline]
    fn pos(&self, i: usize) -> &[u32] {
        &self.pos[i * self.stride_pos..(i + 1) * self.stride_pos]
    }

    #[inline]
    fn neg(&self, i: usize) -> &[u32] {
        &self.neg[i * self.stride_neg..(i + 1) * self.stride_neg]
    }
}

/// A partition of `V⁺` into tiles with cached counts.
#[derive(Clone, Debug)]
pub struct Tiling {
    geo: std::sync::Arc<CoverGeometry>,
    tile: Vec<u32>,
    interior: Vec<bool>,
    size: Vec<u32>,
    shave_v: Vec<u32>,
    int_v: Vec<u32>,
    free_ids: Vec<u32>,
    touched: Vec<u32>,
}

impl Tiling {
    /// Builds a tiling from a label per cover voxel (labels are arbitrary u32s).
    pub fn from_labels(geo: std::sync::Arc<CoverGeometry>, labels: &[u32]) -> Self {
        assert_eq!(labels.len(), geo.len());
        // compact labels to 0..n
        let mut map = std::collections::HashMap::new();
        let tile: Vec<u32> = labels
            .iter()
            .map(|l| {
                let next = map.len() as u32;
                *map.entry(*l).or_insert(next)
            })
            .collect();
        let n = map.len();
        let mut t = Tiling {
            interior: vec![false; geo.len()],
            size: vec![0; n],
            shave_v: vec![0; n],
            int_v: vec![0; n],
            free_ids: Vec::new(),
            touched: Vec::new(),
            tile,
            geo,
        };
        t.recount();
        t
    }

    /// One tile per cover voxel.
    pub fn singletons(geo: std::sync::Arc<CoverGeometry>) -> Self {
        let labels: Vec<u32> = (0..geo.len() as u32).collect();
        Self::from_labels(geo, &labels)
    }

    fn recount(&mut self) {
        self.size.iter_mut().for_each(|x| *x = 0);
        self.shave_v.iter_mut().for_each(|x| *x = 0);
        self.int_v.iter_mut().for_each(|x| *x = 0);
        for i in 0..self.geo.len() {
            let t = self.tile[i] as usize;
            self.size[t] += 1;
            self.interior[i] = self.compute_interior(i);
            if self.geo.in_base[i] {
                if self.interior[i] {
                    self.int_v[t] += 1;
                } else {
                    self.shave_v[t] += 1;
                }
            }
        }
        self.free_ids = (0..self.size.len() as u32).filter(|&t| self.size[t as usize] == 0).collect();
    }

    #[inline]
    fn compute_interior(&self, i: usize) -> bool {
        let t = self.tile[i];
        self.geo.pos(i).iter().all(|&j| j != NONE && self.tile[j as usize] == t)
    }

    pub fn geometry(&self) -> &std::sync::Arc<CoverGeometry> {
        &self.geo
    }

    pub fn tile_of(&self, i: usize) -> u32 {
        self.tile[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.tile
    }

    pub fn tile_count(&self) -> usize {
        self.size.iter().filter(|&&s| s > 0).count()
    }

    /// `|T⁻ ∩ V|` of tile `t`.
    pub fn interior_in_base(&self, t: u32) -> usize {
        self.int_v[t as usize] as usize
    }

    #[inline]
    fn contrib(&self, t: usize, k: usize) -> i64 {
        self.shave_v[t] as i64 + (self.int_v[t] as i64 - k as i64).max(0)
    }

    /// `t_k` from the cached counts.
    pub fn t_target(&self, k: usize) -> usize {
        (0..self.size.len()).filter(|&t| self.size[t] > 0).map(|t| self.contrib(t, k)).sum::<i64>() as usize
    }

    /// `t_k` recomputed from the labels alone.
    pub fn t_target_full(&self, k: usize) -> usize {
        let mut fresh = self.clone();
        fresh.recount();
        fresh.t_target(k)
    }

    /// The tiles as voxel sets, in order of first cover voxel.
    pub fn tiles(&self) -> Vec<VoxelSet> {
        let mut order: Vec<u32> = Vec::new();
        let mut slot = vec![NONE; self.size.len()];
        let mut pts: Vec<Vec<i32>> = Vec::new();
        for i in 0..self.geo.len() {
            let t = self.tile[i] as usize;
            if slot[t] == NONE {
                slot[t] = order.len() as u32;
                order.push(t as u32);
                pts.push(Vec::new());
            }
            pts[slot[t] as usize].extend_from_slice(self.geo.cover.get(i));
        }
        let d = self.geo.cover.dim();
        pts.into_iter().map(|p| VoxelSet::from_flat(d, p).expect("valid")).collect()
    }

    /// Allocates an empty tile id.
    pub fn new_tile(&mut self) -> u32 {
        if let Some(id) = self.free_ids.pop() {
            return id;
        }
        self.size.push(0);
        self.shave_v.push(0);
        self.int_v.push(0);
        self.size.len() as u32 - 1
    }

    /// Moves cover voxel `u` into tile `to` and returns the change in `t_k`.
    /// A tile left empty returns its id to the free list.
    pub fn move_voxel(&mut self, u: usize, to: u32, k: usize) -> i64 {
        let from = self.tile[u];
        if from == to {
            return 0;
        }
        if self.size[to as usize] == 0 {
            if let Some(p) = self.free_ids.iter().rposition(|&x| x == to) {
                self.free_ids.swap_remove(p);
            }
        }
        let geo = self.geo.clone();
        let neg = geo.neg(u);
        // Tiles whose counts can change: `from`, `to`, and the tiles of the negative neighbors.
        let mut touched = std::mem::take(&mut self.touched);
        touched.clear();
        touched.push(from);
        touched.push(to);
        for &w in neg {
            if w != NONE {
                let t = self.tile[w as usize];
                if !touched.contains(&t) {
                    touched.push(t);
                }
            }
        }
        let before: i64 = touched.iter().map(|&t| self.contrib(t as usize, k)).sum();
        for &w in neg {
            if w == NONE {
                continue;
            }
            let w = w as usize;
            if geo.in_base[w] {
                let t = self.tile[w] as usize;
                if self.interior[w] {
                    self.int_v[t] -= 1;
                } else {
                    self.shave_v[t] -= 1;
                }
            }
        }
        self.tile[u] = to;
        self.size[from as usize] -= 1;
        self.size[to as usize] += 1;
        for &w in neg {
            if w == NONE {
                continue;
            }
            let w = w as usize;
            self.interior[w] = self.compute_interior(w);
            if geo.in_base[w] {
                let t = self.tile[w] as usize;
                if self.interior[w] {
                    self.int_v[t] += 1;
                } else {
                    self.shave_v[t] += 1;
                }
            }
        }
        let after: i64 = touched.iter().map(|&t| self.contrib(t as usize, k)).sum();
        self.touched = touched;
        if self.size[from as usize] == 0 {
            self.free_ids.push(from);
        }
        after - before
    }
}

/// The separator built from a tiling: all shave voxels in `V` plus, for each
/// tile whose interior in `V` exceeds `k`, its excess interior voxels.
pub fn tiling_to_separator(tiling: &Tiling, k: usize) -> SeparatorBound {
    let geo = tiling.geometry();
    let mut excess: Vec<i64> = tiling.int_v.iter().map(|&c| c as i64 - k as i64).collect();
    let mut take = vec![false; geo.len()];
    // Iterate backwards so the excess taken is the highest-indexed interior voxels.
    for i in (0..geo.len()).rev() {
        if !geo.in_base[i] {
            continue;
        }
        let t = tiling.tile[i] as usize;
        if !tiling.interior[i] {
            take[i] = true;
        } else if excess[t] > 0 {
            take[i] = true;
            excess[t] -= 1;
        }
    }
    let witness = geo.cover.select(|i| take[i]);
    SeparatorBound { value: witness.len(), kind: BoundKind::HeuristicUpper, witness: Some(witness) }
}

/// The tiling built from a separator: `C⁺` for every component `C` of
/// `V \ R`, plus the components of what remains of `V⁺`.
pub fn separator_to_tiling(geo: std::sync::Arc<CoverGeometry>, r: &VoxelSet, k: usize) -> Result<Tiling, TilingError> {
    let v = geo.base();
    if !r.is_subset(v) {
        return Err(TilingError::NotSubset);
    }
    let rest = v.difference(r)?;
    let comps = connected_components(&rest);
    if let Some(big) = comps.clusters.first().filter(|c| c.len() > k) {
        return Err(TilingError::NotASeparator { found: big.len(), k });
    }
    let idx = VoxelIndex::new(geo.cover());
    let mut label = vec![NONE; geo.len()];
    for (ci, c) in comps.clusters.iter().enumerate() {
        for x in cover(c)?.iter() {
            let i = idx.find(x).expect("cover of a subset lies in V⁺");
            debug_assert_eq!(label[i], NONE, "covers of disconnected sets are disjoint");
            label[i] = ci as u32;
        }
    }
    let unassigned: Vec<bool> = label.iter().map(|&l| l == NONE).collect();
    let (lab, _) = component_labels(geo.adjacency(), Some(&unassigned));
    let base = comps.len() as u32;
    for i in 0..geo.len() {
        if unassigned[i] {
            label[i] = base + lab[i];
        }
    }
    Ok(Tiling::from_labels(geo, &label))
}

/// Checks a heuristic result before it is trusted.
pub fn verified(v: &VoxelSet, b: &SeparatorBound, k: usize) -> bool {
    b.witness.as_ref().is_some_and(|w| w.len() == b.value && is_separator(v, w, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::fixtures::{rows_to_set, tiling_set, TILING_SEPARATOR};
    use crate::lattice::{chi, interior};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn naive_t(tiling: &Tiling, k: usize) -> usize {
        let base = tiling.geometry().base().clone();
        tiling
            .tiles()
            .iter()
            .map(|t| {
                let int = interior(t);
                let shave = t.difference(&int).unwrap();
                let s = shave.intersection(&base).unwrap().len();
                let i = int.intersection(&base).unwrap().len();
                s + i.saturating_sub(k)
            })
            .sum()
    }

    #[test]
    fn single_tile_target() {
        let v = VoxelSet::full_box(&[3, 3]).unwrap();
        let geo = Arc::new(CoverGeometry::new(&v).unwrap());
        let t = Tiling::from_labels(geo.clone(), &vec![0; geo.len()]);
        // interior of the 4x4 cover intersected with V is the full 3x3 box
        assert_eq!(t.t_target(9), 0);
        assert_eq!(t.t_target(4), 5);
        let s = Tiling::singletons(geo);
        assert_eq!(s.t_target(0), 9);
        let r = tiling_to_separator(&s, 0);
        assert_eq!(r.witness.unwrap(), v);
    }

    #[test]
    fn worked_example_separator_tiling() {
        let v = tiling_set();
        let r = rows_to_set(TILING_SEPARATOR);
        assert_eq!(r.len(), 24);
        assert!(is_separator(&v, &r, 10));
        let geo = Arc::new(CoverGeometry::new(&v).unwrap());
        let t = separator_to_tiling(geo, &r, 10).unwrap();
        assert_eq!(t.t_target(10), 24);
        let back = tiling_to_separator(&t, 10);
        assert_eq!(back.value, 24);
        assert!(verified(&v, &back, 10));
    }

    #[test]
    fn rejects_bad_separator() {
        let v = VoxelSet::full_box(&[3, 3]).unwrap();
        let geo = Arc::new(CoverGeometry::new(&v).unwrap());
        let empty = VoxelSet::empty(2).unwrap();
        assert!(matches!(separator_to_tiling(geo.clone(), &empty, 4), Err(TilingError::NotASeparator { .. })));
        let outside = VoxelSet::from_coords(2, [[7, 7]]).unwrap();
        assert!(matches!(separator_to_tiling(geo.clone(), &outside, 4), Err(TilingError::NotSubset)));
        let t = separator_to_tiling(geo, &empty, 9).unwrap();
        assert_eq!(t.t_target(9), 0);
    }

    fn arb_set(side: i32, max: usize) -> impl Strategy<Value = VoxelSet> {
        proptest::collection::vec(proptest::collection::vec(0..side, 2), 1..max).prop_map(|pts| VoxelSet::from_coords(2, pts).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn incremental_matches_full(v in arb_set(6, 30), k in 0usize..5, seed in any::<u64>()) {
            let geo = Arc::new(CoverGeometry::new(&v).unwrap());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<u32> = (0..geo.len()).map(|_| rng.random_range(0..4)).collect();
            let mut t = Tiling::from_labels(geo.clone(), &labels);
            let mut cur = t.t_target(k) as i64;
            prop_assert_eq!(cur as usize, naive_t(&t, k));
            for _ in 0..200 {
                let u = rng.random_range(0..geo.len());
                let to = if rng.random_bool(0.2) { t.new_tile() } else { t.tile_of(rng.random_range(0..geo.len())) };
                cur += t.move_voxel(u, to, k);
                prop_assert_eq!(cur as usize, t.t_target(k));
            }
            prop_assert_eq!(cur as usize, t.t_target_full(k));
            prop_assert_eq!(cur as usize, naive_t(&t, k));
            let r = tiling_to_separator(&t, k);
            prop_assert_eq!(r.value, cur as usize);
            prop_assert!(verified(&v, &r, k));
        }

        #[test]
        fn separator_round_trip(v in arb_set(5, 20), k in 1usize..4, keep in proptest::collection::vec(any::<bool>(), 25)) {
            // Any R that leaves small components: drop voxels until chi <= k.
            let mut r = v.select(|i| !keep[i % keep.len()]);
            while chi(&v.difference(&r).unwrap()) > k {
                let rest = v.difference(&r).unwrap();
                r = r.union(&VoxelSet::from_coords(2, [rest.get(0)]).unwrap()).unwrap();
            }
            let geo = Arc::new(CoverGeometry::new(&v).unwrap());
            let t = separator_to_tiling(geo, &r, k).unwrap();
            prop_assert!(t.t_target(k) <= r.len());
            let back = tiling_to_separator(&t, k);
            prop_assert!(back.value <= r.len());
            prop_assert!(verified(&v, &back, k));
        }
    }
}
