//! Test-side oracles. Deliberately naive: point lists, hash sets and flood fills,
//! sharing no code with the library beyond `VoxelSet` construction.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use clustertdp::lattice::VoxelSet;
use rand::Rng;

pub type Pt = Vec<i32>;

pub fn neighbours(a: &[i32], b: &[i32]) -> bool {
    a != b && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1)
}

pub fn to_pts(v: &VoxelSet) -> Vec<Pt> {
    v.iter().map(|c| c.to_vec()).collect()
}

pub fn to_set(d: usize, pts: &[Pt]) -> VoxelSet {
    VoxelSet::from_coords(d, pts.iter().map(|p| p.as_slice())).unwrap()
}

/// Components as index lists, by breadth-first search over all pairs.
pub fn components(pts: &[Pt]) -> Vec<Vec<usize>> {
    let n = pts.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for w in 0..n {
                if !seen[w] && neighbours(&pts[u], &pts[w]) {
                    seen[w] = true;
                    comp.push(w);
                    q.push_back(w);
                }
            }
        }
        out.push(comp);
    }
    out
}

pub fn chi(pts: &[Pt]) -> usize {
    components(pts).iter().map(Vec::len).max().unwrap_or(0)
}

fn unit_offsets(d: usize) -> Vec<Pt> {
    (0..1u32 << d).map(|m| (0..d).map(|i| (m >> i & 1) as i32).collect()).collect()
}

pub fn cover(pts: &[Pt]) -> HashSet<Pt> {
    let d = pts.first().map_or(0, Vec::len);
    let offs = unit_offsets(d);
    pts.iter().flat_map(|p| offs.iter().map(move |o| p.iter().zip(o).map(|(a, b)| a + b).collect())).collect()
}

pub fn interior(pts: &[Pt]) -> HashSet<Pt> {
    let d = pts.first().map_or(0, Vec::len);
    let offs = unit_offsets(d);
    let set: HashSet<&Pt> = pts.iter().collect();
    pts.iter().filter(|p| offs.iter().all(|o| set.contains(&p.iter().zip(o).map(|(a, b)| a + b).collect::<Pt>()))).cloned().collect()
}

pub fn sorted(s: HashSet<Pt>) -> Vec<Pt> {
    let mut v: Vec<Pt> = s.into_iter().collect();
    v.sort();
    v
}

/// `i` interiors followed by `i` covers.
pub fn prune(pts: &[Pt], i: usize) -> Vec<Pt> {
    let mut cur = pts.to_vec();
    for _ in 0..i {
        cur = sorted(interior(&cur));
    }
    for _ in 0..i {
        cur = sorted(cover(&cur));
    }
    cur
}

pub fn random_pts<R: Rng>(rng: &mut R, d: usize, side: i32, max: usize) -> Vec<Pt> {
    let n = rng.random_range(1..=max);
    let mut s = HashSet::new();
    for _ in 0..n {
        s.insert((0..d).map(|_| rng.random_range(0..side)).collect::<Pt>());
    }
    sorted(s)
}

/// A random lattice animal: grows by attaching neighbours, so sets are mostly connected.
pub fn random_blob<R: Rng>(rng: &mut R, d: usize, size: usize) -> Vec<Pt> {
    let mut s: Vec<Pt> = vec![vec![0; d]];
    let mut have: HashSet<Pt> = s.iter().cloned().collect();
    while s.len() < size {
        let base = s[rng.random_range(0..s.len())].clone();
        let step: Pt = base.iter().map(|x| x + rng.random_range(-1..=1)).collect();
        if have.insert(step.clone()) {
            s.push(step);
        }
    }
    s.sort();
    s
}

/// Minimum k-separator by enumerating subsets in order of size.
pub fn brute_separator(pts: &[Pt], k: usize) -> usize {
    let n = pts.len();
    assert!(n <= 20);
    let mut best = n;
    for mask in 0u32..1 << n {
        let removed = mask.count_ones() as usize;
        if removed >= best {
            continue;
        }
        let rest: Vec<Pt> = (0..n).filter(|&i| mask >> i & 1 == 0).map(|i| pts[i].clone()).collect();
        if chi(&rest) <= k {
            best = removed;
        }
    }
    best
}
