//! TDP bounds for supra-threshold clusters and arbitrary regions.
//!
//! For a region `V` and supra-threshold set `Z`, the certified lower bound is
//! `Σ ŝ_k(C_i)` over the components `C_i` of `V ∩ Z`. The heuristic estimate
//! replaces `ŝ` by an upper value of `s_k`, and the upper bound uses `s` with
//! `k` recalibrated on `M \ Z`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{s_exact, s_lower_pruned, BoundsError, DEFAULT_EXACT_CAP};
use crate::extremal::{ExtremalError, Rational, RkTable};
use crate::heuristic::{heuristic_separator, HeuristicError, HeuristicParams};
use crate::io::{ravel, FormatError, RegionSpec};
use crate::lattice::{connected_components, Adjacency, LatticeError, VoxelSet};
use crate::thresholds::{find_k_for_z, find_k_on_submask, find_z_for_k, PermutationMatrix, PermutationSource, ThresholdError};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("non-finite z-score at mask voxel {0}")]
    NonFinite(usize),
    #[error("permutation matrix has {got} voxels, mask has {expected}")]
    PermutationWidth { expected: usize, got: usize },
    #[error("region {name:?}: {reason}")]
    Region { name: String, reason: String },
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Extremal(#[from] ExtremalError),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Dense z-scores on a grid with an analysis mask `M` and brain `B ⊇ M`.
#[derive(Clone, Debug)]
pub struct ZVolume {
    dims: Vec<usize>,
    values: Vec<f32>,
    mask: VoxelSet,
    mask_flat: Vec<usize>,
    brain: VoxelSet,
}

impl ZVolume {
    /// `mask` defaults to the whole grid; the brain is taken equal to the mask.
    pub fn new(dims: Vec<usize>, values: Vec<f32>, mask: Option<&[bool]>) -> Result<Self, InferenceError> {
        let n: usize = dims.iter().product();
        if dims.is_empty() || values.len() != n {
            return Err(InferenceError::Dimensions(format!("{} values for extents {:?}", values.len(), dims)));
        }
        if let Some(m) = mask {
            if m.len() != n {
                return Err(InferenceError::Dimensions(format!("mask has {} voxels, z-map has {n}", m.len())));
            }
        }
        let keep = |i: usize| mask.is_none_or(|m| m[i]);
        let mask_flat: Vec<usize> = (0..n).filter(|&i| keep(i)).collect();
        if let Some(i) = mask_flat.iter().position(|&i| !values[i].is_finite()) {
            return Err(InferenceError::NonFinite(i));
        }
        let mask_set = crate::io::grid_voxels(&dims, keep);
        Ok(ZVolume { brain: mask_set.clone(), mask: mask_set, mask_flat, dims, values })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn mask(&self) -> &VoxelSet {
        &self.mask
    }

    pub fn brain(&self) -> &VoxelSet {
        &self.brain
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn value(&self, c: &[i32]) -> Option<f32> {
        ravel(&self.dims, c).map(|i| self.values[i])
    }

    /// Values of the mask voxels, in mask order (the column order of permutation rows).
    pub fn mask_values(&self) -> Vec<f32> {
        self.mask_flat.iter().map(|&i| self.values[i]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    #[default]
    OneSided,
    /// Threshold `|z|`.
    TwoSidedAbsolute,
    /// Two one-sided analyses at `α/2`.
    TwoSidedSplit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Positive,
    Negative,
    Absolute,
}

impl Direction {
    #[inline]
    pub fn apply(self, z: f32) -> f32 {
        match self {
            Direction::Positive => z,
            Direction::Negative => -z,
            Direction::Absolute => z.abs(),
        }
    }
}

/// `{v ∈ M : z_v > z}`, with `|z_v|` for the two-sided variants.
pub fn supra_threshold(zvol: &ZVolume, z: f64, side: Sidedness) -> VoxelSet {
    let dir = match side {
        Sidedness::OneSided => Direction::Positive,
        _ => Direction::Absolute,
    };
    supra_threshold_directed(zvol, z, dir)
}

pub fn supra_threshold_directed(zvol: &ZVolume, z: f64, dir: Direction) -> VoxelSet {
    let vals = zvol.mask_values();
    zvol.mask.select(|i| f64::from(dir.apply(vals[i])) > z)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdSpec {
    FixedZ(f64),
    FixedK(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    LowerBoundOnly,
    Heuristic,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub sidedness: Sidedness,
    pub threshold: ThresholdSpec,
    pub solver: Solver,
    /// Also compute the upper bound (needs a recalibration on `M \ Z`).
    pub upper: bool,
    pub heuristic: HeuristicParams,
    /// Components up to this size are solved exactly.
    pub exact_cap: usize,
    pub seed: u64,
}

impl AnalysisConfig {
    pub fn new(alpha: f64, threshold: ThresholdSpec) -> Self {
        AnalysisConfig {
            alpha,
            sidedness: Sidedness::OneSided,
            threshold,
            solver: Solver::Both,
            upper: true,
            heuristic: HeuristicParams::quick(),
            exact_cap: DEFAULT_EXACT_CAP,
            seed: 0,
        }
    }
}

fn tdp_ratio(count: usize, size: usize) -> Rational {
    if size == 0 {
        Rational::from_integer(0)
    } else {
        Rational::new(count as i128, size as i128)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdpEstimate {
    pub count: usize,
    pub tdp: Rational,
    /// The count is the exact `s_k` (only meaningful for heuristic estimates).
    pub certified: bool,
}

/// Certified lower bound `a̲(V) = Σ ŝ_k(C_i)` over components of `V ∩ Z`.
pub fn tdp_lower(region: &VoxelSet, z_set: &VoxelSet, k: usize, table: &RkTable) -> Result<TdpEstimate, InferenceError> {
    let inter = region.intersection(z_set)?;
    let mut count = 0;
    for c in connected_components(&inter).clusters {
        count += s_lower_pruned(&c, k as u64, table)?.value;
    }
    Ok(TdpEstimate { count, tdp: tdp_ratio(count, region.len()), certified: true })
}

/// Heuristic or exact `s_k` of a connected component.
pub fn component_separator(
    c: &VoxelSet,
    k: usize,
    params: &HeuristicParams,
    exact_cap: usize,
    seed: u64,
    table: &RkTable,
) -> Result<(usize, bool), InferenceError> {
    if c.len() <= k {
        return Ok((0, true));
    }
    if k == 0 {
        return Ok((c.len(), true));
    }
    if c.len() <= exact_cap {
        return Ok((s_exact(c, k, exact_cap)?.value, true));
    }
    let lb = s_lower_pruned(c, k as u64, table)?.value;
    let h = heuristic_separator(c, k, params, seed, Some(table))?;
    Ok((h.value, h.value == lb))
}

pub(crate) fn mix(seed: u64, i: u64) -> u64 {
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `ǎ(V)` with a heuristic `s_k` per component of `V ∩ Z`. Certified when
/// every component was solved exactly or met its lower bound.
pub fn tdp_heuristic(
    region: &VoxelSet,
    z_set: &VoxelSet,
    k: usize,
    params: &HeuristicParams,
    exact_cap: usize,
    seed: u64,
    table: &RkTable,
) -> Result<TdpEstimate, InferenceError> {
    let inter = region.intersection(z_set)?;
    let mut count = 0;
    let mut certified = true;
    for (i, c) in connected_components(&inter).clusters.iter().enumerate() {
        let (v, cert) = component_separator(c, k, params, exact_cap, mix(seed, i as u64), table)?;
        count += v;
        certified &= cert;
    }
    Ok(TdpEstimate { count, tdp: tdp_ratio(count, region.len()), certified })
}

/// `k` recalibrated on `M \ Z`.
pub fn upper_k(mask: &VoxelSet, z_set: &VoxelSet, perms: &PermutationMatrix, z: f64, alpha: f64) -> Result<usize, InferenceError> {
    if perms.voxels() != mask.len() {
        return Err(InferenceError::PermutationWidth { expected: mask.len(), got: perms.voxels() });
    }
    let keep: Vec<bool> = mask.iter().map(|v| !z_set.contains(v)).collect();
    Ok(find_k_on_submask(perms, &Adjacency::build(mask), &keep, z, alpha)?)
}

/// `ā(V) = s_{k'}(V ∩ Z)` with `k' = k_{M\Z}`, evaluated with separator witnesses.
#[allow(clippy::too_many_arguments)]
pub fn tdp_upper(
    region: &VoxelSet,
    z_set: &VoxelSet,
    mask: &VoxelSet,
    perms: &PermutationMatrix,
    z: f64,
    alpha: f64,
    params: &HeuristicParams,
    seed: u64,
) -> Result<TdpEstimate, InferenceError> {
    let k = upper_k(mask, z_set, perms, z, alpha)?;
    let table = RkTable::new(mask.dim(), k.max(1) as u64)?;
    tdp_heuristic(region, z_set, k, params, DEFAULT_EXACT_CAP, seed, &table)
}

/// Integer labels on the z-map grid.
#[derive(Clone, Debug)]
pub struct AtlasVolume {
    pub dims: Vec<usize>,
    pub labels: Vec<u16>,
    pub names: BTreeMap<u16, String>,
}

impl AtlasVolume {
    pub fn region(&self, label: u16) -> VoxelSet {
        crate::io::grid_voxels(&self.dims, |i| self.labels[i] == label)
    }

    /// Every non-zero label present, in label order.
    pub fn regions(&self) -> Vec<NamedRegion> {
        let present: std::collections::BTreeSet<u16> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        present
            .into_iter()
            .map(|l| NamedRegion { name: self.names.get(&l).cloned().unwrap_or_else(|| format!("label_{l}")), voxels: self.region(l) })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedRegion {
    pub name: String,
    pub voxels: VoxelSet,
}

/// Turns region specs into voxel sets. Without specs, every atlas label is a region.
pub fn build_regions(specs: Option<&[RegionSpec]>, atlas: Option<&AtlasVolume>, dim: usize) -> Result<Vec<NamedRegion>, InferenceError> {
    let Some(specs) = specs else {
        return Ok(atlas.map(|a| a.regions()).unwrap_or_default());
    };
    specs
        .iter()
        .map(|s| match s {
            RegionSpec::Voxels { name, voxels } => {
                if let Some(bad) = voxels.iter().find(|v| v.len() != dim) {
                    return Err(InferenceError::Region { name: name.clone(), reason: format!("voxel {bad:?} is not {dim}-dimensional") });
                }
                let voxels = VoxelSet::from_coords(dim, voxels.iter().map(|v| v.as_slice()))?;
                Ok(NamedRegion { name: name.clone(), voxels })
            }
            RegionSpec::AtlasLabel { name, atlas_label } => {
                let a = atlas.ok_or_else(|| InferenceError::Region { name: name.clone(), reason: "atlas label given but no atlas".into() })?;
                Ok(NamedRegion { name: name.clone(), voxels: a.region(*atlas_label) })
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub name: String,
    pub size: usize,
    pub overlap: usize,
    pub lb: usize,
    pub tdp_lb: f64,
    pub heuristic: Option<usize>,
    pub tdp_heuristic: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub id: usize,
    pub size: usize,
    pub lb: usize,
    pub tdp_lb: f64,
    pub heuristic: Option<usize>,
    pub tdp_heuristic: Option<f64>,
    pub certified: Option<bool>,
    pub upper: Option<usize>,
    pub tdp_upper: Option<f64>,
    pub peak: Vec<i32>,
    pub z_max: f64,
    pub regions: Vec<RegionRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalsRow {
    pub size: usize,
    pub lb: usize,
    pub tdp_lb: f64,
    pub heuristic: Option<usize>,
    pub tdp_heuristic: Option<f64>,
    pub upper: Option<usize>,
    pub tdp_upper: Option<f64>,
    pub regions: Vec<RegionRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub direction: Direction,
    pub alpha: f64,
    pub z_threshold: f64,
    pub k_m: usize,
    pub k_upper: Option<usize>,
    /// Permutations that never exceeded `k_M` during calibration.
    pub exhausted_permutations: usize,
    pub supra_threshold_voxels: usize,
    pub supra_threshold_clusters: usize,
    pub clusters: Vec<ClusterRow>,
    pub totals: TotalsRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub dims: Vec<usize>,
    pub sidedness: Sidedness,
    pub directions: Vec<DirectionReport>,
}

fn f(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

struct Evaluator<'a> {
    k: usize,
    table: &'a RkTable,
    config: &'a AnalysisConfig,
    heuristic: bool,
}

impl Evaluator<'_> {
    fn region_row(&self, name: &str, region_size: usize, part: &VoxelSet, z_set: &VoxelSet, seed: u64) -> Result<RegionRow, InferenceError> {
        let lb = tdp_lower(part, z_set, self.k, self.table)?.count;
        let heuristic = if self.heuristic {
            Some(tdp_heuristic(part, z_set, self.k, &self.config.heuristic, self.config.exact_cap, seed, self.table)?.count)
        } else {
            None
        };
        let overlap = part.intersection(z_set)?.len();
        Ok(RegionRow {
            name: name.to_string(),
            size: region_size,
            overlap,
            lb,
            tdp_lb: f(tdp_ratio(lb, region_size)),
            heuristic,
            tdp_heuristic: heuristic.map(|h| f(tdp_ratio(h, region_size))),
        })
    }
}

/// Calibrates, clusters, and bounds TDP for every significant cluster and every region.
pub fn analyze(zvol: &ZVolume, config: &AnalysisConfig, perms: &PermutationMatrix, regions: &[NamedRegion]) -> Result<ClusterReport, InferenceError> {
    if perms.voxels() != zvol.mask.len() {
        return Err(InferenceError::PermutationWidth { expected: zvol.mask.len(), got: perms.voxels() });
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(ThresholdError::BadAlpha(config.alpha).into());
    }
    let dirs: Vec<(Direction, f64)> = match config.sidedness {
        Sidedness::OneSided => vec![(Direction::Positive, config.alpha)],
        Sidedness::TwoSidedAbsolute => vec![(Direction::Absolute, config.alpha)],
        Sidedness::TwoSidedSplit => vec![(Direction::Positive, config.alpha / 2.0), (Direction::Negative, config.alpha / 2.0)],
    };
    let mask_adj = Adjacency::build(&zvol.mask);
    let regions: Vec<NamedRegion> = regions
        .iter()
        .map(|r| Ok(NamedRegion { name: r.name.clone(), voxels: r.voxels.intersection(&zvol.mask)? }))
        .collect::<Result<_, InferenceError>>()?;
    let mut out = Vec::new();
    for (di, &(dir, alpha)) in dirs.iter().enumerate() {
        let rows = match dir {
            Direction::Positive => perms.clone(),
            _ => PermutationMatrix::from_flat(perms.permutations(), perms.voxels(), perms.as_flat().iter().map(|&x| dir.apply(x)).collect())?,
        };
        let (z, k, exhausted) = match config.threshold {
            ThresholdSpec::FixedK(k) => {
                let c = find_z_for_k(&rows, &mask_adj, k, alpha)?;
                (c.value, k, c.exhausted.len())
            }
            ThresholdSpec::FixedZ(z) => (z, find_k_for_z(&rows, &mask_adj, z, alpha)?.k().expect("fix-z"), 0),
        };
        let z_set = supra_threshold_directed(zvol, z, dir);
        let k_upper = if config.upper { Some(upper_k(&zvol.mask, &z_set, &rows, z, alpha)?) } else { None };
        let table = RkTable::new(zvol.dim(), k.max(k_upper.unwrap_or(0)).max(1) as u64)?;
        let heuristic = config.solver != Solver::LowerBoundOnly;
        let ev = Evaluator { k, table: &table, config, heuristic };
        let comps = connected_components(&z_set);
        let n_supra = comps.len();
        let dir_seed = mix(config.seed, di as u64);
        let significant: Vec<&VoxelSet> = comps.clusters.iter().filter(|c| c.len() > k).collect();
        let clusters: Vec<ClusterRow> = significant
            .par_iter()
            .enumerate()
            .map(|(ci, c)| -> Result<ClusterRow, InferenceError> {
                let seed = mix(dir_seed, ci as u64 + 1);
                let lb = tdp_lower(c, &z_set, k, &table)?.count;
                let (h, certified) = if heuristic {
                    let e = tdp_heuristic(c, &z_set, k, &config.heuristic, config.exact_cap, seed, &table)?;
                    (Some(e.count), Some(e.certified))
                } else {
                    (None, None)
                };
                let upper = match k_upper {
                    Some(ku) => Some(tdp_heuristic(c, &z_set, ku, &config.heuristic, config.exact_cap, mix(seed, 0x5550), &table)?.count),
                    None => None,
                };
                let vals: Vec<(f32, usize)> = c.iter().enumerate().map(|(i, v)| (dir.apply(zvol.value(v).unwrap()), i)).collect();
                // highest value, first voxel on ties
                let peak_i = vals.iter().fold(0, |b, &(x, i)| if x > vals[b].0 { i } else { b });
                let peak = c.get(peak_i).to_vec();
                let mut rrows = Vec::new();
                for (ri, r) in regions.iter().enumerate() {
                    let part = r.voxels.intersection(c)?;
                    if part.is_empty() {
                        continue;
                    }
                    rrows.push(ev.region_row(&r.name, r.voxels.len(), &part, &z_set, mix(seed, 0x1000 + ri as u64))?);
                }
                rrows.sort_by_key(|r| std::cmp::Reverse(r.overlap));
                Ok(ClusterRow {
                    id: ci + 1,
                    size: c.len(),
                    lb,
                    tdp_lb: f(tdp_ratio(lb, c.len())),
                    heuristic: h,
                    tdp_heuristic: h.map(|h| f(tdp_ratio(h, c.len()))),
                    certified,
                    upper,
                    tdp_upper: upper.map(|u| f(tdp_ratio(u, c.len()))),
                    z_max: f64::from(zvol.value(&peak).unwrap()),
                    peak,
                    regions: rrows,
                })
            })
            .collect::<Result<_, _>>()?;
        let size: usize = clusters.iter().map(|c| c.size).sum();
        let lb: usize = clusters.iter().map(|c| c.lb).sum();
        let sum_opt = |g: &dyn Fn(&ClusterRow) -> Option<usize>| clusters.iter().map(g).sum::<Option<usize>>();
        let h_total = if heuristic { sum_opt(&|c| c.heuristic) } else { None };
        let u_total = if k_upper.is_some() { sum_opt(&|c| c.upper) } else { None };
        let mut region_totals = regions
            .par_iter()
            .enumerate()
            .filter(|(_, r)| !r.voxels.is_empty())
            .map(|(ri, r)| ev.region_row(&r.name, r.voxels.len(), &r.voxels, &z_set, mix(dir_seed, 0x2000 + ri as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        region_totals.retain(|r| r.overlap > 0);
        region_totals.sort_by_key(|r| std::cmp::Reverse(r.overlap));
        let totals = TotalsRow {
            size,
            lb,
            tdp_lb: f(tdp_ratio(lb, size)),
            heuristic: h_total,
            tdp_heuristic: h_total.map(|h| f(tdp_ratio(h, size))),
            upper: u_total,
            tdp_upper: u_total.map(|u| f(tdp_ratio(u, size))),
            regions: region_totals,
        };
        out.push(DirectionReport {
            direction: dir,
            alpha,
            z_threshold: z,
            k_m: k,
            k_upper,
            exhausted_permutations: exhausted,
            supra_threshold_voxels: z_set.len(),
            supra_threshold_clusters: n_supra,
            clusters,
            totals,
        });
    }
    Ok(ClusterReport { dims: zvol.dims.clone(), sidedness: config.sidedness, directions: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::brute_force_s;
    use crate::lattice::chi;
    use proptest::prelude::*;

    fn grid(dims: &[usize], hot: &[(usize, f32)]) -> ZVolume {
        let n: usize = dims.iter().product();
        let mut v = vec![0.0f32; n];
        for &(i, x) in hot {
            v[i] = x;
        }
        ZVolume::new(dims.to_vec(), v, None).unwrap()
    }

    #[test]
    fn supra_threshold_cases() {
        let z = grid(&[3, 3], &[(0, 2.0), (3, 2.5), (6, 3.0), (7, 2.2), (8, 0.5)]);
        let l = supra_threshold(&z, 1.0, Sidedness::OneSided);
        assert_eq!(l, VoxelSet::from_coords(2, [[0, 0], [1, 0], [2, 0], [2, 1]]).unwrap());
        assert!(supra_threshold(&z, f64::INFINITY, Sidedness::OneSided).is_empty());
        assert_eq!(supra_threshold(&z, f64::NEG_INFINITY, Sidedness::OneSided), *z.mask());
        // strict inequality
        assert_eq!(supra_threshold(&z, 2.5, Sidedness::OneSided).len(), 1);
        let neg = grid(&[3, 3], &[(4, -3.0)]);
        assert_eq!(supra_threshold(&neg, 2.0, Sidedness::TwoSidedAbsolute).len(), 1);
        assert!(supra_threshold(&neg, 2.0, Sidedness::OneSided).is_empty());
    }

    #[test]
    fn masked_volume() {
        let mask = [true, false, true, true];
        let z = ZVolume::new(vec![2, 2], vec![1.0, f32::NAN, 2.0, 3.0], Some(&mask)).unwrap();
        assert_eq!(z.mask().len(), 3);
        assert_eq!(z.mask_values(), vec![1.0, 2.0, 3.0]);
        assert!(ZVolume::new(vec![2, 2], vec![1.0, f32::NAN, 2.0, 3.0], None).is_err());
        assert!(ZVolume::new(vec![2, 3], vec![0.0; 4], None).is_err());
    }

    #[test]
    fn lower_bound_basics() {
        let table = RkTable::new(2, 10).unwrap();
        let z_set = VoxelSet::full_box(&[4, 4]).unwrap();
        let far = VoxelSet::from_coords(2, [[10, 10]]).unwrap();
        let e = tdp_lower(&far, &z_set, 3, &table).unwrap();
        assert_eq!((e.count, e.tdp), (0, Rational::from_integer(0)));
        let empty = VoxelSet::empty(2).unwrap();
        assert_eq!(tdp_lower(&empty, &z_set, 3, &table).unwrap().count, 0);
        assert!(tdp_lower(&z_set, &z_set, 3, &table).unwrap().count >= 1);
        assert_eq!(tdp_lower(&z_set, &z_set, 0, &table).unwrap().count, 16);
    }

    #[test]
    fn heuristic_certified_paths() {
        let table = RkTable::new(2, 10).unwrap();
        let small = VoxelSet::full_box(&[4, 4]).unwrap();
        let e = tdp_heuristic(&small, &small, 3, &HeuristicParams::quick(), 22, 1, &table).unwrap();
        assert!(e.certified);
        assert_eq!(e.count, brute_force_s(&small, 3));
        let h = crate::heuristic::HyperrectInstance::new(2, &[3, 3]).unwrap();
        let e = tdp_heuristic(&h.set, &h.set, h.k, &HeuristicParams::quick(), 22, 1, &table).unwrap();
        assert_eq!(e.count, h.optimum);
        assert!(e.certified);
    }

    /// Tiny one-sided analysis with hand-built permutations.
    fn toy() -> (ZVolume, PermutationMatrix) {
        let dims = [16usize, 16];
        let mut v = vec![0.0f32; 256];
        // a 3x3 block (9 voxels) and a 2-voxel blob
        for y in 2..5 {
            for x in 2..5 {
                v[y * 16 + x] = 4.0 + (x + y) as f32 * 0.1;
            }
        }
        v[10 * 16 + 12] = 3.5;
        v[10 * 16 + 13] = 3.2;
        let z = ZVolume::new(dims.to_vec(), v.clone(), None).unwrap();
        let mut rows = vec![v];
        for j in 1..10 {
            let mut r = vec![0.0f32; 256];
            for o in 0..3 {
                r[j * 20 + o] = 3.0 + j as f32 * 0.05;
            }
            rows.push(r);
        }
        (z, PermutationMatrix::new(rows).unwrap())
    }

    #[test]
    fn toy_analysis() {
        let (z, p) = toy();
        let mut cfg = AnalysisConfig::new(0.1, ThresholdSpec::FixedK(2));
        cfg.seed = 3;
        let region = NamedRegion { name: "left".into(), voxels: VoxelSet::full_box(&[16, 8]).unwrap() };
        let rep = analyze(&z, &cfg, &p, std::slice::from_ref(&region)).unwrap();
        let d = &rep.directions[0];
        assert_eq!(d.k_m, 2);
        // null rows put 3-voxel blobs at 3.05..3.45; the 9th of 10 order statistics is 3.45
        assert!((d.z_threshold - 3.45).abs() < 1e-6);
        assert_eq!(d.supra_threshold_clusters, 2);
        assert_eq!(d.clusters.len(), 1, "the 2-voxel blob is not above k_M");
        let c = &d.clusters[0];
        assert_eq!(c.size, 9);
        let table = RkTable::new(2, 2).unwrap();
        let block = VoxelSet::full_box(&[3, 3]).unwrap();
        assert_eq!(c.lb, s_lower_pruned(&block, 2, &table).unwrap().value);
        assert_eq!(c.heuristic, Some(brute_force_s(&block, 2)));
        assert_eq!(c.peak, vec![4, 4]);
        assert!((c.z_max - 4.8).abs() < 1e-6);
        assert!(c.lb > 0);
        assert!(c.upper.unwrap() >= c.heuristic.unwrap());
        assert_eq!(c.regions.len(), 1);
        assert_eq!(c.regions[0].overlap, 9);
    }

    #[test]
    fn noise_gives_empty_report() {
        let z = grid(&[8, 8], &[]);
        let rows = vec![vec![0.0f32; 64], vec![0.5; 64], vec![0.1; 64]];
        let p = PermutationMatrix::new(rows).unwrap();
        let rep = analyze(&z, &AnalysisConfig::new(0.05, ThresholdSpec::FixedZ(3.0)), &p, &[]).unwrap();
        let d = &rep.directions[0];
        assert!(d.clusters.is_empty());
        assert_eq!(d.totals.size, 0);
        assert_eq!(d.totals.lb, 0);
    }

    #[test]
    fn cluster_at_k_is_excluded() {
        let z = grid(&[6, 6], &[(0, 5.0), (1, 5.0)]);
        let p = PermutationMatrix::new(vec![vec![0.0; 36]; 3]).unwrap();
        let rep = analyze(&z, &AnalysisConfig::new(0.05, ThresholdSpec::FixedZ(1.0)), &p, &[]).unwrap();
        assert_eq!(rep.directions[0].k_m, 0);
        assert_eq!(rep.directions[0].clusters.len(), 1);
        // same cluster with k_M = 2: not significant
        let p2 = PermutationMatrix::new(vec![vec![0.0; 36], {
            let mut r = vec![0.0; 36];
            r[20] = 3.0;
            r[21] = 3.0;
            r
        }])
        .unwrap();
        let rep = analyze(&z, &AnalysisConfig::new(0.4, ThresholdSpec::FixedZ(1.0)), &p2, &[]).unwrap();
        assert_eq!(rep.directions[0].k_m, 2);
        assert!(rep.directions[0].clusters.is_empty());
    }

    #[test]
    fn split_sidedness_reports_both_directions() {
        let z = grid(&[8, 8], &[(0, 5.0), (1, 5.0), (2, 5.0), (40, -5.0), (41, -5.0), (42, -5.0)]);
        let p = PermutationMatrix::new(vec![vec![0.0; 64]; 4]).unwrap();
        let mut cfg = AnalysisConfig::new(0.1, ThresholdSpec::FixedZ(2.0));
        cfg.sidedness = Sidedness::TwoSidedSplit;
        let rep = analyze(&z, &cfg, &p, &[]).unwrap();
        assert_eq!(rep.directions.len(), 2);
        assert_eq!(rep.directions[0].direction, Direction::Positive);
        assert_eq!(rep.directions[1].clusters[0].z_max, -5.0);
        assert!((rep.directions[1].alpha - 0.05).abs() < 1e-12);
    }

    fn arb_instance() -> impl Strategy<Value = (VoxelSet, VoxelSet)> {
        let pts = proptest::collection::vec(proptest::collection::vec(0i32..6, 2), 1..30);
        (pts.clone(), pts).prop_map(|(a, b)| (VoxelSet::from_coords(2, a).unwrap(), VoxelSet::from_coords(2, b).unwrap()))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn voxelwise_case((region, z_set) in arb_instance()) {
            let table = RkTable::new(2, 1).unwrap();
            let expect = region.intersection(&z_set).unwrap().len();
            prop_assert_eq!(tdp_lower(&region, &z_set, 0, &table).unwrap().count, expect);
            let h = tdp_heuristic(&region, &z_set, 0, &HeuristicParams::quick(), 22, 0, &table).unwrap();
            prop_assert_eq!(h.count, expect);
        }

        #[test]
        fn additivity_and_positivity((region, z_set) in arb_instance(), k in 1usize..5) {
            let table = RkTable::new(2, 5).unwrap();
            let inter = region.intersection(&z_set).unwrap();
            let total = tdp_lower(&region, &z_set, k, &table).unwrap().count;
            let parts: usize = connected_components(&inter).clusters.iter()
                .map(|c| tdp_lower(c, &z_set, k, &table).unwrap().count).sum();
            prop_assert_eq!(total, parts);
            for c in connected_components(&z_set).clusters {
                let lb = tdp_lower(&c, &z_set, k, &table).unwrap().count;
                prop_assert_eq!(lb > 0, c.len() > k);
            }
            let h = tdp_heuristic(&region, &z_set, k, &HeuristicParams::quick(), 22, 1, &table).unwrap();
            prop_assert!(h.count >= total);
            prop_assert!(chi(&inter) <= k || h.count > 0);
        }
    }
}
