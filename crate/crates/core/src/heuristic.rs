//! Heuristic upper bounds on `s_k(V)`.
//!
//! Phase 1 greedily packs clusters of at most `k` voxels. Phase 2 clears a
//! neighbourhood of clusters and refills it. Annealing then works on the
//! tiling built from the best separator. Every result carries a witness that
//! is checked before it is returned.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{is_separator, s_lower_pruned, BoundKind, BoundsError, SeparatorBound};
use crate::extremal::RkTable;
use crate::lattice::{connected_components, Adjacency, LatticeError, VoxelSet};
use crate::tiling::{separator_to_tiling, tiling_to_separator, CoverGeometry, Tiling, NONE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phase1Params {
    /// Independent restarts.
    pub runs: usize,
    /// Candidate calls per inserted cluster.
    pub candidates: usize,
    /// Largest shortfall below `k` tried for a candidate size.
    pub missing: usize,
    /// Step between tried sizes.
    pub step: usize,
}

impl Default for Phase1Params {
    fn default() -> Self {
        Phase1Params { runs: 1000, candidates: 5, missing: 10, step: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phase2Params {
    /// Number of neighbourhoods to rebuild.
    pub big_runs: usize,
    /// Refills without strict improvement before moving on.
    pub stall: usize,
    /// Clusters per neighbourhood.
    pub neighbours: usize,
}

impl Default for Phase2Params {
    fn default() -> Self {
        Phase2Params { big_runs: 1000, stall: 3, neighbours: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealParams {
    /// Temperature exponent scale.
    pub tp: f64,
    /// Moves without a new best before stopping.
    pub iter: u64,
    /// Hard cap on moves.
    pub max_moves: u64,
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams { tp: 2.0, iter: 200_000, max_moves: 20_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct HeuristicParams {
    pub phase1: Phase1Params,
    pub phase2: Phase2Params,
    pub anneal: AnnealParams,
    /// Wall-clock budget per call. `None` keeps results reproducible.
    pub time_limit_ms: Option<u64>,
}

impl HeuristicParams {
    /// Small budgets for bulk use (simulations, many clusters).
    pub fn quick() -> Self {
        HeuristicParams {
            phase1: Phase1Params { runs: 12, candidates: 3, missing: 6, step: 2 },
            phase2: Phase2Params { big_runs: 60, stall: 3, neighbours: 4 },
            anneal: AnnealParams { tp: 2.0, iter: 20_000, max_moves: 400_000 },
            time_limit_ms: None,
        }
    }

    /// Default iteration caps bounded by a wall-clock limit.
    pub fn timed(ms: u64) -> Self {
        HeuristicParams {
            phase2: Phase2Params { big_runs: usize::MAX, ..Phase2Params::default() },
            anneal: AnnealParams { max_moves: u64::MAX, ..AnnealParams::default() },
            time_limit_ms: Some(ms),
            ..HeuristicParams::default()
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Deadline(Option<Instant>);

impl Deadline {
    fn after(start: Instant, d: Option<Duration>) -> Self {
        Deadline(d.map(|d| start + d))
    }

    fn passed(&self) -> bool {
        self.0.is_some_and(|t| Instant::now() >= t)
    }
}

/// Cluster packing over the 26-neighbour graph of `V`.
#[derive(Clone, Debug)]
struct Clustering {
    label: Vec<u32>,
    /// Number of neighbours that belong to some cluster.
    touch: Vec<u32>,
    members: Vec<Vec<u32>>,
    free_ids: Vec<u32>,
    clustered: usize,
}

impl Clustering {
    fn new(n: usize) -> Self {
        Clustering { label: vec![NONE; n], touch: vec![0; n], members: Vec::new(), free_ids: Vec::new(), clustered: 0 }
    }

    #[inline]
    fn is_free(&self, v: usize) -> bool {
        self.label[v] == NONE && self.touch[v] == 0
    }

    fn separator_size(&self) -> usize {
        self.label.len() - self.clustered
    }

    fn insert(&mut self, adj: &Adjacency, members: &[u32]) -> u32 {
        let id = self.free_ids.pop().unwrap_or_else(|| {
            self.members.push(Vec::new());
            self.members.len() as u32 - 1
        });
        for &m in members {
            self.add_to(adj, id, m as usize);
        }
        id
    }

    fn add_to(&mut self, adj: &Adjacency, id: u32, v: usize) {
        debug_assert_eq!(self.label[v], NONE);
        self.label[v] = id;
        self.members[id as usize].push(v as u32);
        self.clustered += 1;
        for &u in adj.neighbors(v) {
            self.touch[u as usize] += 1;
        }
    }

    fn remove(&mut self, adj: &Adjacency, id: u32) {
        let members = std::mem::take(&mut self.members[id as usize]);
        for &m in &members {
            self.label[m as usize] = NONE;
            for &u in adj.neighbors(m as usize) {
                self.touch[u as usize] -= 1;
            }
        }
        self.clustered -= members.len();
        self.free_ids.push(id);
    }

    fn separator_mask(&self) -> Vec<bool> {
        self.label.iter().map(|&l| l == NONE).collect()
    }
}

/// Scratch space for growing one candidate cluster.
struct Grower {
    epoch: u32,
    in_c: Vec<u32>,
    in_b: Vec<u32>,
    score: Vec<u32>,
    compact: Vec<u32>,
    fpos: Vec<u32>,
    frontier: Vec<u32>,
    members: Vec<u32>,
}

impl Grower {
    fn new(n: usize) -> Self {
        Grower {
            epoch: 0,
            in_c: vec![0; n],
            in_b: vec![0; n],
            score: vec![0; n],
            compact: vec![0; n],
            fpos: vec![0; n],
            frontier: Vec::new(),
            members: Vec::new(),
        }
    }

    fn add(&mut self, adj: &Adjacency, cl: &Clustering, w: usize) {
        let e = self.epoch;
        self.in_c[w] = e;
        self.members.push(w as u32);
        if self.in_b[w] == e {
            self.in_b[w] = 0;
            let p = self.fpos[w] as usize;
            self.frontier.swap_remove(p);
            if p < self.frontier.len() {
                self.fpos[self.frontier[p] as usize] = p as u32;
            }
        }
        for &u in adj.neighbors(w) {
            let u = u as usize;
            if !cl.is_free(u) || self.in_c[u] == e {
                continue;
            }
            if self.in_b[u] != e {
                self.in_b[u] = e;
                self.fpos[u] = self.frontier.len() as u32;
                self.frontier.push(u as u32);
                let mut s = 0;
                for &x in adj.neighbors(u) {
                    let x = x as usize;
                    if self.in_b[x] == e {
                        self.score[x] -= 1;
                    } else if self.in_c[x] != e && cl.is_free(x) {
                        s += 1;
                    }
                }
                self.score[u] = s;
                self.compact[u] = 0;
            }
            self.compact[u] += 1;
        }
    }

    /// Grows a cluster of at most `l` free voxels from `start`. Each step adds
    /// the frontier voxel that creates the fewest new separator voxels, then
    /// the one with most neighbours in the cluster. Returns the number of
    /// separator voxels the cluster adds.
    fn grow(&mut self, adj: &Adjacency, cl: &Clustering, start: usize, l: usize) -> usize {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.in_c.iter_mut().for_each(|x| *x = 0);
            self.in_b.iter_mut().for_each(|x| *x = 0);
            self.epoch = 1;
        }
        self.members.clear();
        self.frontier.clear();
        self.add(adj, cl, start);
        while self.members.len() < l && !self.frontier.is_empty() {
            let mut best = self.frontier[0] as usize;
            for &f in &self.frontier[1..] {
                let f = f as usize;
                let key = (self.score[f], std::cmp::Reverse(self.compact[f]), f);
                if key < (self.score[best], std::cmp::Reverse(self.compact[best]), best) {
                    best = f;
                }
            }
            self.add(adj, cl, best);
        }
        self.frontier.len()
    }
}

struct Packer<'a> {
    adj: &'a Adjacency,
    k: usize,
    p1: Phase1Params,
    grower: Grower,
}

impl<'a> Packer<'a> {
    fn new(adj: &'a Adjacency, k: usize, p1: &Phase1Params) -> Self {
        Packer { adj, k, p1: p1.clone(), grower: Grower::new(adj.len()) }
    }

    fn free_degree(&self, cl: &Clustering, v: usize) -> usize {
        self.adj.neighbors(v).iter().filter(|&&u| cl.is_free(u as usize)).count()
    }

    /// Inserts clusters until no voxel of `pool` is free. Returns the ids created.
    fn fill(&mut self, cl: &mut Clustering, pool: &mut Vec<u32>, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let mut created = Vec::new();
        let k = self.k;
        let sizes: Vec<usize> = {
            let lo = k.saturating_sub(self.p1.missing).max(1);
            let step = self.p1.step.max(1);
            let mut s = Vec::new();
            let mut l = k;
            while l >= lo {
                s.push(l);
                if l < lo + step {
                    break;
                }
                l -= step;
            }
            s
        };
        loop {
            pool.retain(|&v| cl.is_free(v as usize));
            if pool.is_empty() {
                break;
            }
            let extreme = pool.iter().map(|&v| (self.free_degree(cl, v as usize), v)).min().map(|(_, v)| v as usize).expect("pool is non-empty");
            // best = (added separator, cluster size, members)
            let mut best: Option<(usize, usize, Vec<u32>)> = None;
            for call in 0..self.p1.candidates.max(1) {
                for &l in &sizes {
                    let start = if call == 0 { extreme } else { pool[rng.random_range(0..pool.len())] as usize };
                    let added = self.grower.grow(self.adj, cl, start, l);
                    let size = self.grower.members.len();
                    let better = match &best {
                        None => true,
                        // added/size < b_added/b_size, ties to the larger cluster
                        Some((ba, bs, _)) => {
                            let (lhs, rhs) = (added * bs, ba * size);
                            lhs < rhs || (lhs == rhs && size > *bs)
                        }
                    };
                    if better {
                        best = Some((added, size, self.grower.members.clone()));
                    }
                }
            }
            let (_, _, members) = best.expect("at least one candidate");
            created.push(cl.insert(self.adj, &members));
        }
        created
    }

    /// Moves separator voxels into the only adjacent cluster when it has room.
    fn trim(&self, cl: &mut Clustering, voxels: &[u32], may_join: impl Fn(u32) -> bool) {
        loop {
            let mut changed = false;
            for &x in voxels {
                let x = x as usize;
                if cl.label[x] != NONE {
                    continue;
                }
                let mut only = NONE;
                let mut multiple = false;
                for &u in self.adj.neighbors(x) {
                    let l = cl.label[u as usize];
                    if l == NONE || l == only {
                        continue;
                    }
                    if only == NONE {
                        only = l;
                    } else {
                        multiple = true;
                        break;
                    }
                }
                if multiple {
                    continue;
                }
                if only == NONE {
                    if self.k >= 1 {
                        cl.insert(self.adj, &[x as u32]);
                        changed = true;
                    }
                } else if cl.members[only as usize].len() < self.k && may_join(only) {
                    cl.add_to(self.adj, only, x);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
}

/// Clusters adjacent to `id` through a shared separator voxel.
fn adjacent_clusters(adj: &Adjacency, cl: &Clustering, id: u32) -> Vec<u32> {
    let mut out = Vec::new();
    for &m in &cl.members[id as usize] {
        for &b in adj.neighbors(m as usize) {
            if cl.label[b as usize] != NONE {
                continue;
            }
            for &u in adj.neighbors(b as usize) {
                let l = cl.label[u as usize];
                if l != NONE && l != id && !out.contains(&l) {
                    out.push(l);
                }
            }
        }
    }
    out
}

fn mask_to_set(v: &VoxelSet, mask: &[bool]) -> VoxelSet {
    v.select(|i| mask[i])
}

fn finish(v: &VoxelSet, mask: &[bool], k: usize) -> SeparatorBound {
    let w = mask_to_set(v, mask);
    debug_assert!(is_separator(v, &w, k));
    SeparatorBound { value: w.len(), kind: BoundKind::HeuristicUpper, witness: Some(w) }
}

/// Phases 1 and 2 of the cluster-packing heuristic on `V`. Stops early once
/// the separator size reaches `stop_at`.
pub fn two_phase_heuristic(v: &VoxelSet, k: usize, params: &HeuristicParams, seed: u64, stop_at: Option<usize>) -> SeparatorBound {
    let start = Instant::now();
    let limit = params.time_limit_ms.map(Duration::from_millis);
    two_phase_inner(v, k, params, seed, stop_at, start, limit.map(|l| l.mul_f64(0.75)))
}

fn two_phase_inner(
    v: &VoxelSet,
    k: usize,
    params: &HeuristicParams,
    seed: u64,
    stop_at: Option<usize>,
    start: Instant,
    limit: Option<Duration>,
) -> SeparatorBound {
    let n = v.len();
    if k == 0 || n == 0 {
        return SeparatorBound { value: n, kind: BoundKind::HeuristicUpper, witness: Some(v.clone()) };
    }
    if connected_components(v).clusters.first().is_none_or(|c| c.len() <= k) {
        return SeparatorBound::zero(BoundKind::HeuristicUpper, v.dim());
    }
    let phase1_end = Deadline::after(start, limit.map(|l| l.mul_f64(0.5)));
    let phase2_end = Deadline::after(start, limit);
    let target = stop_at.unwrap_or(0);
    let adj = Adjacency::build(v);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut packer = Packer::new(&adj, k, &params.phase1);
    let all: Vec<u32> = (0..n as u32).collect();

    let mut best: Option<Clustering> = None;
    for run in 0..params.phase1.runs.max(1) {
        if run > 0 && phase1_end.passed() {
            break;
        }
        let mut cl = Clustering::new(n);
        let mut pool = all.clone();
        packer.fill(&mut cl, &mut pool, &mut rng);
        packer.trim(&mut cl, &all, |_| true);
        if best.as_ref().is_none_or(|b| cl.separator_size() < b.separator_size()) {
            best = Some(cl);
        }
        if best.as_ref().unwrap().separator_size() <= target {
            break;
        }
    }
    let mut cl = best.expect("at least one run");

    let p2 = &params.phase2;
    let mut big = 0;
    while big < p2.big_runs && cl.separator_size() > target && !phase2_end.passed() {
        big += 1;
        let live: Vec<u32> = (0..cl.members.len() as u32).filter(|&i| !cl.members[i as usize].is_empty()).collect();
        if live.is_empty() {
            break;
        }
        let c0 = live[rng.random_range(0..live.len())];
        let mut group = adjacent_clusters(&adj, &cl, c0);
        group.shuffle(&mut rng);
        group.truncate(p2.neighbours.saturating_sub(1));
        group.push(c0);
        let in_group = |l: u32, g: &[u32]| g.contains(&l);
        // G: the group's voxels plus separator voxels touching only the group.
        let mut region: Vec<u32> = Vec::new();
        let mut mark = vec![false; n];
        for &id in &group {
            for &m in &cl.members[id as usize] {
                if !mark[m as usize] {
                    mark[m as usize] = true;
                    region.push(m);
                }
                for &b in adj.neighbors(m as usize) {
                    let b = b as usize;
                    if mark[b] || cl.label[b] != NONE {
                        continue;
                    }
                    let only_group = adj.neighbors(b).iter().all(|&u| {
                        let l = cl.label[u as usize];
                        l == NONE || in_group(l, &group)
                    });
                    if only_group {
                        mark[b] = true;
                        region.push(b as u32);
                    }
                }
            }
        }
        let mut ids = group;
        let mut stall = 0;
        while stall < p2.stall.max(1) && !phase2_end.passed() {
            let before = cl.separator_size();
            let saved = cl.clone();
            for &id in &ids {
                cl.remove(&adj, id);
            }
            let mut pool = region.clone();
            let created = packer.fill(&mut cl, &mut pool, &mut rng);
            packer.trim(&mut cl, &region, |id| created.contains(&id));
            let after = cl.separator_size();
            if after <= before {
                ids = created;
                if after < before {
                    stall = 0;
                } else {
                    stall += 1;
                }
            } else {
                cl = saved;
                stall += 1;
            }
            if cl.separator_size() <= target {
                break;
            }
        }
    }
    finish(v, &cl.separator_mask(), k)
}

/// Simulated annealing over tilings of `V⁺`, started from the tiling built
/// from `start`. Returns the best separator seen, never worse than `start`.
pub fn anneal(
    v: &VoxelSet,
    k: usize,
    start: &VoxelSet,
    params: &AnnealParams,
    seed: u64,
    deadline: Option<Instant>,
    stop_at: Option<usize>,
) -> Result<SeparatorBound, HeuristicError> {
    let geo = Arc::new(CoverGeometry::new(v)?);
    let mut tiling = separator_to_tiling(geo.clone(), start, k).map_err(|e| HeuristicError::Tiling(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adj = geo.adjacency();
    let p = geo.len();
    let mut t = tiling.t_target(k) as i64;
    let mut best_t = t;
    let mut best_labels = tiling.labels().to_vec();
    let target = stop_at.unwrap_or(0) as i64;
    let mut since_best: u64 = 0;
    let mut i: u64 = 0;
    while since_best < params.iter && i < params.max_moves && best_t > target {
        i += 1;
        if i & 0xFFF == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let u = rng.random_range(0..p);
        let nb = adj.neighbors(u);
        if nb.is_empty() {
            since_best += 1;
            continue;
        }
        let w = nb[rng.random_range(0..nb.len())] as usize;
        let old = tiling.tile_of(u);
        let tw = tiling.tile_of(w);
        let to = if old == tw && tiling.interior_in_base(tw) > k { tiling.new_tile() } else { tw };
        let delta = tiling.move_voxel(u, to, k);
        let accept = delta <= 0 || rng.random::<f64>() < (i as f64).powf(-(delta as f64) / params.tp);
        if accept {
            t += delta;
        } else {
            tiling.move_voxel(u, old, k);
        }
        if t < best_t {
            best_t = t;
            best_labels.copy_from_slice(tiling.labels());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if i & 0xFFFF == 0 {
            let full = tiling.t_target_full(k) as i64;
            assert_eq!(full, t, "incremental tiling target drifted");
        }
    }
    let best = Tiling::from_labels(geo, &best_labels);
    let sep = tiling_to_separator(&best, k);
    debug_assert_eq!(sep.value as i64, best_t);
    Ok(sep)
}

#[derive(Debug, thiserror::Error)]
pub enum HeuristicError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("tiling: {0}")]
    Tiling(String),
    #[error("heuristic produced an invalid separator")]
    Invalid,
}

fn mix(seed: u64, i: u64) -> u64 {
    let mut z = seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Full pipeline: per connected component, two-phase packing then annealing,
/// stopping early on a component once it meets its pruned lower bound
/// (when `table` is given). The union of component separators is verified.
pub fn heuristic_separator(
    v: &VoxelSet,
    k: usize,
    params: &HeuristicParams,
    seed: u64,
    table: Option<&RkTable>,
) -> Result<SeparatorBound, HeuristicError> {
    let comps = connected_components(v);
    let big: Vec<&VoxelSet> = comps.clusters.iter().filter(|c| c.len() > k).collect();
    let total: usize = big.iter().map(|c| c.len()).sum();
    let mut flat: Vec<i32> = Vec::new();
    for (ci, c) in big.iter().enumerate() {
        let start = Instant::now();
        let budget = params.time_limit_ms.map(|ms| Duration::from_millis(ms).mul_f64(c.len() as f64 / total as f64));
        let stop_at = match table {
            Some(t) if (k as u64) <= t.k_max() => Some(s_lower_pruned(c, k as u64, t)?.value),
            _ => None,
        };
        let s = mix(seed, ci as u64);
        let pack = two_phase_inner(c, k, params, s, stop_at, start, budget.map(|b| b.mul_f64(0.6)));
        let mut best = pack;
        if k > 0 && stop_at.is_none_or(|lb| best.value > lb) {
            let deadline = budget.map(|b| start + b);
            let w = best.witness.as_ref().expect("heuristic results carry a witness");
            let sa = anneal(c, k, w, &params.anneal, mix(s, 0xA11E), deadline, stop_at)?;
            if sa.value < best.value {
                best = sa;
            }
        }
        flat.extend_from_slice(best.witness.as_ref().expect("witness").as_flat());
    }
    let w = VoxelSet::from_flat(v.dim(), flat)?;
    if !is_separator(v, &w, k) {
        return Err(HeuristicError::Invalid);
    }
    Ok(SeparatorBound { value: w.len(), kind: BoundKind::HeuristicUpper, witness: Some(w) })
}

/// A box of `(n+1)c_i − 1` voxels per axis with `k = n^d`, whose optimal
/// separator is the grid of hyperplanes at every `(n+1)`-th coordinate.
#[derive(Clone, Debug)]
pub struct HyperrectInstance {
    pub n: usize,
    pub c: Vec<usize>,
    pub set: VoxelSet,
    pub k: usize,
    pub optimum: usize,
}

impl HyperrectInstance {
    pub fn new(n: usize, c: &[usize]) -> Result<Self, LatticeError> {
        assert!(n >= 1 && c.iter().all(|&x| x >= 1), "n and c_i must be positive");
        let extents: Vec<usize> = c.iter().map(|&ci| (n + 1) * ci - 1).collect();
        let set = VoxelSet::full_box(&extents)?;
        let d = c.len() as u32;
        let k = n.pow(d);
        let optimum = set.len() - k * c.iter().product::<usize>();
        Ok(HyperrectInstance { n, c: c.to_vec(), set, k, optimum })
    }

    /// The separating grid.
    pub fn witness(&self) -> VoxelSet {
        let m = (self.n + 1) as i32;
        let d = self.set.dim();
        let mut flat = Vec::with_capacity(self.optimum * d);
        for x in self.set.iter() {
            if x.iter().any(|&xi| (xi + 1) % m == 0) {
                flat.extend_from_slice(x);
            }
        }
        VoxelSet::from_flat(d, flat).expect("subset of a valid set")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{brute_force_s, s_exact};
    use crate::lattice::fixtures::tiling_set;
    use proptest::prelude::*;

    fn quick() -> HeuristicParams {
        HeuristicParams::quick()
    }

    #[test]
    fn trivial_inputs() {
        let v = VoxelSet::full_box(&[3, 3]).unwrap();
        let p = quick();
        assert_eq!(two_phase_heuristic(&v, 0, &p, 1, None).value, 9);
        assert_eq!(two_phase_heuristic(&v, 9, &p, 1, None).value, 0);
        let empty = VoxelSet::empty(2).unwrap();
        assert_eq!(heuristic_separator(&empty, 3, &p, 1, None).unwrap().value, 0);
    }

    #[test]
    fn path_is_solved_exactly() {
        let v = VoxelSet::from_coords(1, (0..10).map(|i| [i])).unwrap();
        let h = heuristic_separator(&v, 2, &quick(), 7, None).unwrap();
        assert_eq!(h.value, 3);
    }

    #[test]
    fn worked_example_heuristic() {
        let v = tiling_set();
        let table = RkTable::new(2, 10).unwrap();
        let h = heuristic_separator(&v, 10, &HeuristicParams::quick(), 3, Some(&table)).unwrap();
        assert!(is_separator(&v, h.witness.as_ref().unwrap(), 10));
        // the drawn separator has 24 voxels and the pruned bound is 19
        assert!(h.value >= 19 && h.value <= 24, "got {}", h.value);
    }

    #[test]
    fn hyperrect_witness() {
        for (n, c) in [(1, vec![2, 3]), (2, vec![1, 1]), (3, vec![2, 1, 1])] {
            let h = HyperrectInstance::new(n, &c).unwrap();
            let w = h.witness();
            assert_eq!(w.len(), h.optimum);
            assert!(is_separator(&h.set, &w, h.k));
        }
    }

    #[test]
    fn hyperrect_found_small() {
        let h = HyperrectInstance::new(2, &[2, 2]).unwrap();
        let table = RkTable::new(2, h.k as u64).unwrap();
        let r = heuristic_separator(&h.set, h.k, &HeuristicParams::quick(), 5, Some(&table)).unwrap();
        assert_eq!(r.value, h.optimum);
    }

    #[test]
    fn anneal_never_worse_than_start() {
        let v = tiling_set();
        let start = two_phase_heuristic(&v, 10, &quick(), 9, None);
        let sa = anneal(&v, 10, start.witness.as_ref().unwrap(), &AnnealParams { iter: 5000, ..Default::default() }, 9, None, None).unwrap();
        assert!(sa.value <= start.value);
        assert!(is_separator(&v, sa.witness.as_ref().unwrap(), 10));
    }

    #[test]
    fn seeded_runs_repeat() {
        let v = tiling_set();
        let a = heuristic_separator(&v, 6, &quick(), 42, None).unwrap();
        let b = heuristic_separator(&v, 6, &quick(), 42, None).unwrap();
        assert_eq!(a.witness, b.witness);
    }

    fn arb_set(d: usize, side: i32, max: usize) -> impl Strategy<Value = VoxelSet> {
        proptest::collection::vec(proptest::collection::vec(0..side, d), 1..max).prop_map(move |pts| VoxelSet::from_coords(d, pts).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn heuristic_is_valid_upper_bound(v in arb_set(2, 5, 16), k in 1usize..4, seed in any::<u64>()) {
            let h = heuristic_separator(&v, k, &quick(), seed, None).unwrap();
            prop_assert!(is_separator(&v, h.witness.as_ref().unwrap(), k));
            prop_assert!(h.value >= brute_force_s(&v, k));
            let e = s_exact(&v, k, 22).unwrap();
            prop_assert!(h.value >= e.value);
        }
    }
}
