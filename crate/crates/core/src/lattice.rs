//! Voxel lattice geometry on `Z^d` with 26-connectivity (the `3^d - 1`
//! neighborhood in general dimension).
//!
//! A [`VoxelSet`] stores its members flattened and sorted lexicographically,
//! so set algebra is a merge and membership is a binary search. Graph
//! algorithms work on [`Adjacency`], a CSR neighbor table built once per set.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate overflow while shifting voxel {coord:?}")]
    CoordinateOverflow { coord: Vec<i32> },
}

/// Reflexive neighbor predicate: every coordinate differs by at most one.
pub fn are_neighbors(v: &[i32], w: &[i32]) -> Result<bool, LatticeError> {
    if v.len() != w.len() {
        return Err(LatticeError::DimensionMismatch { expected: v.len(), got: w.len() });
    }
    Ok(v.iter().zip(w).all(|(&a, &b)| (a as i64 - b as i64).abs() <= 1))
}

/// All offsets in `{-1,0,1}^d` except the origin, in lexicographic order.
pub fn neighbor_offsets(dim: usize) -> Vec<Vec<i32>> {
    let mut out = Vec::with_capacity(3usize.pow(dim as u32) - 1);
    let mut cur = vec![-1i32; dim];
    loop {
        if cur.iter().any(|&c| c != 0) {
            out.push(cur.clone());
        }
        let mut i = dim;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < 1 {
                cur[i] += 1;
                break;
            }
            cur[i] = -1;
        }
    }
}

/// All offsets in `{0,1}^d`, origin first.
pub fn positive_offsets(dim: usize) -> Vec<Vec<i32>> {
    (0..1usize << dim).map(|mask| (0..dim).map(|j| ((mask >> (dim - 1 - j)) & 1) as i32).collect()).collect()
}

/// A finite subset of `Z^d`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VoxelSet {
    dim: usize,
    data: Vec<i32>,
}

impl fmt::Debug for VoxelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VoxelSet").field("dim", &self.dim).field("voxels", &self.iter().collect::<Vec<_>>()).finish()
    }
}

fn cmp_rows(a: &[i32], b: &[i32]) -> Ordering {
    a.cmp(b)
}

impl VoxelSet {
    pub fn empty(dim: usize) -> Result<Self, LatticeError> {
        if dim == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        Ok(VoxelSet { dim, data: Vec::new() })
    }

    /// Builds a set from coordinates; duplicates are dropped.
    pub fn from_coords<I, C>(dim: usize, coords: I) -> Result<Self, LatticeError>
    where
        I: IntoIterator<Item = C>,
        C: AsRef<[i32]>,
    {
        if dim == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        let mut data = Vec::new();
        for c in coords {
            let c = c.as_ref();
            if c.len() != dim {
                return Err(LatticeError::DimensionMismatch { expected: dim, got: c.len() });
            }
            data.extend_from_slice(c);
        }
        Self::from_flat(dim, data)
    }

    /// Builds a set from a flat row-major coordinate buffer.
    pub fn from_flat(dim: usize, data: Vec<i32>) -> Result<Self, LatticeError> {
        if dim == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        if data.len() % dim != 0 {
            return Err(LatticeError::DimensionMismatch { expected: dim, got: data.len() % dim });
        }
        let sorted = data.chunks_exact(dim).zip(data.chunks_exact(dim).skip(1)).all(|(a, b)| a < b);
        if sorted {
            return Ok(VoxelSet { dim, data });
        }
        let n = data.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by(|&i, &j| cmp_rows(&data[i * dim..(i + 1) * dim], &data[j * dim..(j + 1) * dim]));
        let mut out = Vec::with_capacity(data.len());
        for (pos, &i) in order.iter().enumerate() {
            let row = &data[i * dim..(i + 1) * dim];
            if pos > 0 && out[out.len() - dim..] == *row {
                continue;
            }
            out.extend_from_slice(row);
        }
        Ok(VoxelSet { dim, data: out })
    }

    /// Caller guarantees rows are strictly increasing.
    pub(crate) fn from_sorted_unchecked(dim: usize, data: Vec<i32>) -> Self {
        debug_assert!(data.chunks_exact(dim).zip(data.chunks_exact(dim).skip(1)).all(|(a, b)| a < b));
        VoxelSet { dim, data }
    }

    /// Every voxel of the box `[0, extents)`.
    pub fn full_box(extents: &[usize]) -> Result<Self, LatticeError> {
        let dim = extents.len();
        if dim == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        let total: usize = extents.iter().product();
        let mut data = Vec::with_capacity(total * dim);
        let mut cur = vec![0i32; dim];
        for _ in 0..total {
            data.extend_from_slice(&cur);
            for i in (0..dim).rev() {
                cur[i] += 1;
                if (cur[i] as usize) < extents[i] {
                    break;
                }
                cur[i] = 0;
            }
        }
        Ok(VoxelSet { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[i32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, i32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[i32] {
        &self.data
    }

    /// Position of `c` in the sorted order.
    pub fn index_of(&self, c: &[i32]) -> Option<usize> {
        if c.len() != self.dim {
            return None;
        }
        let (mut lo, mut hi) = (0usize, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match cmp_rows(self.get(mid), c) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    pub fn contains(&self, c: &[i32]) -> bool {
        self.index_of(c).is_some()
    }

    fn check_dim(&self, other: &VoxelSet) -> Result<(), LatticeError> {
        if self.dim != other.dim {
            return Err(LatticeError::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Ok(())
    }

    fn merge(&self, other: &VoxelSet, keep_left: bool, keep_both: bool, keep_right: bool) -> Result<VoxelSet, LatticeError> {
        self.check_dim(other)?;
        let d = self.dim;
        let (mut i, mut j) = (0, 0);
        let (n, m) = (self.len(), other.len());
        let mut out = Vec::new();
        while i < n || j < m {
            let ord = if i == n {
                Ordering::Greater
            } else if j == m {
                Ordering::Less
            } else {
                cmp_rows(self.get(i), other.get(j))
            };
            match ord {
                Ordering::Less => {
                    if keep_left {
                        out.extend_from_slice(self.get(i));
                    }
                    i += 1;
                }
                Ordering::Greater => {
                    if keep_right {
                        out.extend_from_slice(other.get(j));
                    }
                    j += 1;
                }
                Ordering::Equal => {
                    if keep_both {
                        out.extend_from_slice(self.get(i));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(VoxelSet::from_sorted_unchecked(d, out))
    }

    pub fn union(&self, other: &VoxelSet) -> Result<VoxelSet, LatticeError> {
        self.merge(other, true, true, true)
    }

    pub fn intersection(&self, other: &VoxelSet) -> Result<VoxelSet, LatticeError> {
        self.merge(other, false, true, false)
    }

    pub fn difference(&self, other: &VoxelSet) -> Result<VoxelSet, LatticeError> {
        self.merge(other, true, false, false)
    }

    pub fn is_subset(&self, other: &VoxelSet) -> bool {
        self.dim == other.dim && self.iter().all(|v| other.contains(v))
    }

    /// Members selected by a predicate on their index; order is preserved.
    pub fn select(&self, mut keep: impl FnMut(usize) -> bool) -> VoxelSet {
        let mut out = Vec::new();
        for i in 0..self.len() {
            if keep(i) {
                out.extend_from_slice(self.get(i));
            }
        }
        VoxelSet::from_sorted_unchecked(self.dim, out)
    }

    /// Inclusive per-axis bounds, or `None` for the empty set.
    pub fn bounding_box(&self) -> Option<(Vec<i32>, Vec<i32>)> {
        if self.is_empty() {
            return None;
        }
        let mut lo = self.get(0).to_vec();
        let mut hi = lo.clone();
        for v in self.iter() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Some((lo, hi))
    }
}

/// How [`VoxelIndex`] resolves coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexMode {
    /// Pick dense when the bounding box is small relative to the set.
    Auto,
    Dense,
    Sparse,
}

/// Coordinate to position lookup for one [`VoxelSet`].
pub struct VoxelIndex<'a> {
    set: &'a VoxelSet,
    dense: Option<DenseTable>,
}

struct DenseTable {
    lo: Vec<i64>,
    ext: Vec<i64>,
    table: Vec<u32>,
}

const DENSE_MAX_CELLS: u64 = 1 << 26;

impl<'a> VoxelIndex<'a> {
    pub fn new(set: &'a VoxelSet) -> Self {
        Self::with_mode(set, IndexMode::Auto)
    }

    pub fn with_mode(set: &'a VoxelSet, mode: IndexMode) -> Self {
        let dense = match (mode, set.bounding_box()) {
            (IndexMode::Sparse, _) | (_, None) => None,
            (mode, Some((lo, hi))) => {
                let ext: Vec<i64> = lo.iter().zip(&hi).map(|(&l, &h)| h as i64 - l as i64 + 1).collect();
                let cells = ext.iter().try_fold(1u64, |acc, &e| acc.checked_mul(e as u64));
                let limit = (8 * set.len() as u64).clamp(1 << 16, DENSE_MAX_CELLS);
                match cells {
                    Some(c) if mode == IndexMode::Dense || c <= limit => {
                        let lo: Vec<i64> = lo.iter().map(|&x| x as i64).collect();
                        let mut table = vec![u32::MAX; c as usize];
                        for (i, v) in set.iter().enumerate() {
                            table[linear(&lo, &ext, v).unwrap()] = i as u32;
                        }
                        Some(DenseTable { lo, ext, table })
                    }
                    _ => None,
                }
            }
        };
        VoxelIndex { set, dense }
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn find(&self, c: &[i32]) -> Option<usize> {
        match &self.dense {
            Some(t) => {
                let li = linear(&t.lo, &t.ext, c)?;
                let i = t.table[li];
                (i != u32::MAX).then_some(i as usize)
            }
            None => self.set.index_of(c),
        }
    }

    /// Lookup of `v + off`; out-of-range sums are simply absent.
    pub fn find_offset(&self, v: &[i32], off: &[i32], scratch: &mut Vec<i32>) -> Option<usize> {
        scratch.clear();
        for (&a, &b) in v.iter().zip(off) {
            scratch.push(a.checked_add(b)?);
        }
        self.find(scratch)
    }
}

fn linear(lo: &[i64], ext: &[i64], c: &[i32]) -> Option<usize> {
    let mut idx = 0i64;
    for k in 0..lo.len() {
        let x = c[k] as i64 - lo[k];
        if x < 0 || x >= ext[k] {
            return None;
        }
        idx = idx * ext[k] + x;
    }
    Some(idx as usize)
}

/// Shifted copy of every member by every offset in `offsets`.
fn minkowski(v: &VoxelSet, offsets: &[Vec<i32>]) -> Result<VoxelSet, LatticeError> {
    let d = v.dim();
    let mut data = Vec::with_capacity(v.len() * offsets.len() * d);
    for x in v.iter() {
        for off in offsets {
            for k in 0..d {
                let s = x[k].checked_add(off[k]).ok_or_else(|| LatticeError::CoordinateOverflow { coord: x.to_vec() })?;
                data.push(s);
            }
        }
    }
    VoxelSet::from_flat(d, data)
}

/// `V⁺`: every member together with its positive neighbors.
pub fn cover(v: &VoxelSet) -> Result<VoxelSet, LatticeError> {
    minkowski(v, &positive_offsets(v.dim()))
}

/// `V⁻`: members whose positive neighbors all lie in `V`.
pub fn interior(v: &VoxelSet) -> VoxelSet {
    let idx = VoxelIndex::new(v);
    let offs = positive_offsets(v.dim());
    let mut scratch = Vec::with_capacity(v.dim());
    v.select(|i| {
        let x = v.get(i);
        offs[1..].iter().all(|o| idx.find_offset(x, o, &mut scratch).is_some())
    })
}

/// `V⁰ = V \ V⁻`.
pub fn shave(v: &VoxelSet) -> VoxelSet {
    v.difference(&interior(v)).expect("same dimension")
}

/// `V^(i)`: `i` interior steps followed by `i` cover steps.
pub fn prune(v: &VoxelSet, i: usize) -> Result<VoxelSet, LatticeError> {
    let mut cur = v.clone();
    for _ in 0..i {
        if cur.is_empty() {
            return Ok(cur);
        }
        cur = interior(&cur);
    }
    for _ in 0..i {
        cur = cover(&cur)?;
    }
    Ok(cur)
}

/// CSR neighbor table over the members of a set (self loops excluded).
#[derive(Clone, Debug)]
pub struct Adjacency {
    starts: Vec<u32>,
    targets: Vec<u32>,
}

impl Adjacency {
    pub fn build(v: &VoxelSet) -> Self {
        Self::build_with(v, &VoxelIndex::new(v))
    }

    pub fn build_with(v: &VoxelSet, idx: &VoxelIndex<'_>) -> Self {
        let offs = neighbor_offsets(v.dim());
        let mut starts = Vec::with_capacity(v.len() + 1);
        let mut targets = Vec::new();
        let mut scratch = Vec::with_capacity(v.dim());
        starts.push(0);
        for x in v.iter() {
            for o in &offs {
                if let Some(j) = idx.find_offset(x, o, &mut scratch) {
                    targets.push(j as u32);
                }
            }
            starts.push(targets.len() as u32);
        }
        Adjacency { starts, targets }
    }

    /// Builds from explicit neighbor lists (e.g. a mask graph loaded from disk).
    pub fn from_lists(lists: &[Vec<u32>]) -> Self {
        let mut starts = Vec::with_capacity(lists.len() + 1);
        let mut targets = Vec::new();
        starts.push(0);
        for l in lists {
            targets.extend_from_slice(l);
            starts.push(targets.len() as u32);
        }
        Adjacency { starts, targets }
    }

    pub fn len(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.starts[i] as usize..self.starts[i + 1] as usize]
    }

    /// Restriction to the vertices with `keep[i]`, reindexed in order.
    pub fn restrict(&self, keep: &[bool]) -> (Adjacency, Vec<usize>) {
        let mut newid = vec![u32::MAX; self.len()];
        let mut old = Vec::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                newid[i] = old.len() as u32;
                old.push(i);
            }
        }
        let lists: Vec<Vec<u32>> =
            old.iter().map(|&i| self.neighbors(i).iter().map(|&j| newid[j as usize]).filter(|&j| j != u32::MAX).collect()).collect();
        (Adjacency::from_lists(&lists), old)
    }
}

/// Disjoint-set forest with union by size and path compression.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
        }
        while self.parent[x] as usize != root {
            let next = self.parent[x] as usize;
            self.parent[x] = root as u32;
            x = next;
        }
        root
    }

    /// Merges the sets of `a` and `b` and returns the new root.
    pub fn union(&mut self, a: usize, b: usize) -> usize {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        ra
    }

    /// Size of the set rooted at `root`.
    pub fn root_size(&self, root: usize) -> usize {
        self.size[root] as usize
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r] as usize
    }
}

/// Component label per vertex (labels dense from 0) and component sizes.
pub fn component_labels(adj: &Adjacency, active: Option<&[bool]>) -> (Vec<u32>, Vec<usize>) {
    let n = adj.len();
    let on = |i: usize| active.is_none_or(|a| a[i]);
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        if !on(i) {
            continue;
        }
        for &j in adj.neighbors(i) {
            let j = j as usize;
            if j < i && on(j) {
                uf.union(i, j);
            }
        }
    }
    let mut label = vec![u32::MAX; n];
    let mut root_label = vec![u32::MAX; n];
    let mut sizes = Vec::new();
    for (i, slot) in label.iter_mut().enumerate() {
        if !on(i) {
            continue;
        }
        let r = uf.find(i);
        if root_label[r] == u32::MAX {
            root_label[r] = sizes.len() as u32;
            sizes.push(0);
        }
        *slot = root_label[r];
        sizes[root_label[r] as usize] += 1;
    }
    (label, sizes)
}

/// Largest component size among active vertices; 0 when none are active.
pub fn chi_graph(adj: &Adjacency, active: Option<&[bool]>) -> usize {
    component_labels(adj, active).1.into_iter().max().unwrap_or(0)
}

/// Maximal connected subsets, ordered by size descending and then by
/// lexicographically smallest member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterDecomposition {
    pub clusters: Vec<VoxelSet>,
}

impl ClusterDecomposition {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(VoxelSet::len).collect()
    }
}

pub fn connected_components(v: &VoxelSet) -> ClusterDecomposition {
    let adj = Adjacency::build(v);
    let (label, sizes) = component_labels(&adj, None);
    let mut parts: Vec<Vec<i32>> = sizes.iter().map(|&s| Vec::with_capacity(s * v.dim())).collect();
    for (i, &l) in label.iter().enumerate() {
        parts[l as usize].extend_from_slice(v.get(i));
    }
    // Labels are assigned in order of first member, so label order already
    // breaks ties by smallest member; a stable sort by size keeps it.
    let mut clusters: Vec<VoxelSet> = parts.into_iter().map(|p| VoxelSet::from_sorted_unchecked(v.dim(), p)).collect();
    clusters.sort_by_key(|c| std::cmp::Reverse(c.len()));
    ClusterDecomposition { clusters }
}

/// Largest cluster size, `χ_V`.
pub fn chi(v: &VoxelSet) -> usize {
    if v.is_empty() {
        return 0;
    }
    chi_graph(&Adjacency::build(v), None)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::VoxelSet;

    /// Rows of the worked 2D example, as (row, columns). Columns are mirrored
    /// (`a = -column`) so that positive neighbors point to `+a` and `+row`.
    pub const TILING_ROWS: &[(i32, &[i32])] = &[
        (1, &[4]),
        (2, &[3, 4]),
        (3, &[3, 4]),
        (4, &[3, 4, 5, 8, 10, 11, 12, 13]),
        (5, &[2, 3, 4, 5, 6, 8, 9, 10, 11, 12]),
        (6, &[2, 3, 4, 5, 6, 7, 8, 9, 10]),
        (7, &[2, 3, 4, 5, 6, 7, 8, 9, 10]),
        (8, &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13]),
        (9, &[3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14]),
        (10, &[3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13]),
        (11, &[3, 4, 5, 12]),
        (12, &[3, 4, 5]),
    ];

    /// The separator drawn in the worked example.
    pub const TILING_SEPARATOR: &[(i32, &[i32])] =
        &[(5, &[2, 3, 4]), (6, &[4, 5, 6, 7, 8, 9, 10]), (7, &[6, 10]), (8, &[1, 6, 10]), (9, &[3, 4, 5, 6, 7, 10]), (10, &[7, 10, 11])];

    pub fn rows_to_set(rows: &[(i32, &[i32])]) -> VoxelSet {
        let coords = rows.iter().flat_map(|&(y, xs)| xs.iter().map(move |&x| [-x, y]));
        VoxelSet::from_coords(2, coords).unwrap()
    }

    pub fn tiling_set() -> VoxelSet {
        rows_to_set(TILING_ROWS)
    }
}
