//! Smoothed Gaussian 2D fields with known signal, for checking error control.
//!
//! Each subject image is white noise blurred with a truncated Gaussian kernel,
//! rescaled to unit variance per pixel, plus `amplitude` on the signal mask.
//! A one-sample t statistic over subjects is mapped to z by tail matching.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal, StudentsT};

use crate::extremal::RkTable;
use crate::heuristic::HeuristicParams;
use crate::inference::{component_separator, mix, tdp_lower, InferenceError, ZVolume};
use crate::lattice::{chi, connected_components, VoxelSet};
use crate::thresholds::quantile_index;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Focal,
    Distributed,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Focal => "focal",
            Layout::Distributed => "distributed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub dims: [usize; 2],
    /// Smoothing kernel full width at half maximum, in pixels.
    pub fwhm: f64,
    pub n: usize,
    pub amplitude: f64,
    pub layout: Layout,
    pub signal_pixels: usize,
    pub reps: usize,
    /// Independent null fields used to calibrate `k_M`.
    pub null_reps: usize,
    pub alpha: f64,
    /// Threshold rule `z = z_coef · √n`.
    pub z_coef: f64,
    pub seed: u64,
    pub heuristic: HeuristicParams,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            dims: [64, 64],
            fwhm: 4.0,
            n: 20,
            amplitude: 0.1,
            layout: Layout::Focal,
            signal_pixels: 716,
            reps: 500,
            null_reps: 500,
            alpha: 0.05,
            z_coef: 0.348,
            seed: 1,
            heuristic: HeuristicParams::quick(),
        }
    }
}

impl FieldConfig {
    pub fn sigma(&self) -> f64 {
        self.fwhm / (8.0 * std::f64::consts::LN_2).sqrt()
    }

    pub fn z_threshold(&self) -> f64 {
        self.z_coef * (self.n as f64).sqrt()
    }
}

/// Gaussian weights for offsets `-r..=r`, `r = ⌈4σ⌉`.
pub fn kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-r..=r).map(|j| (-(j * j) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// 1D zero-padded convolution along one axis of a row-major 2D array.
fn blur_axis(src: &[f64], dst: &mut [f64], dims: [usize; 2], axis: usize, w: &[f64]) {
    let r = (w.len() / 2) as i64;
    let (h, wd) = (dims[0] as i64, dims[1] as i64);
    for y in 0..h {
        for x in 0..wd {
            let mut acc = 0.0;
            for (j, &wj) in w.iter().enumerate() {
                let o = j as i64 - r;
                let (yy, xx) = if axis == 0 { (y + o, x) } else { (y, x + o) };
                if yy >= 0 && yy < h && xx >= 0 && xx < wd {
                    acc += wj * src[(yy * wd + xx) as usize];
                }
            }
            dst[(y * wd + x) as usize] = acc;
        }
    }
}

/// Per-axis sums of squared in-range weights, whose product is the variance
/// of blurred unit white noise at each pixel.
fn axis_variance(len: usize, w: &[f64]) -> Vec<f64> {
    let r = (w.len() / 2) as i64;
    (0..len as i64).map(|x| w.iter().enumerate().filter(|(j, _)| (0..len as i64).contains(&(x + *j as i64 - r))).map(|(_, &v)| v * v).sum()).collect()
}

/// Smoother with precomputed kernel and per-pixel rescaling.
pub struct Smoother {
    dims: [usize; 2],
    w: Vec<f64>,
    scale: Vec<f64>,
    tmp: Vec<f64>,
}

impl Smoother {
    pub fn new(dims: [usize; 2], sigma: f64) -> Self {
        let w = kernel(sigma);
        let vy = axis_variance(dims[0], &w);
        let vx = axis_variance(dims[1], &w);
        let mut scale = Vec::with_capacity(dims[0] * dims[1]);
        for a in &vy {
            for b in &vx {
                scale.push(1.0 / (a * b).sqrt());
            }
        }
        Smoother { dims, w, scale, tmp: vec![0.0; dims[0] * dims[1]] }
    }

    /// Blurs `field` in place to unit marginal variance.
    pub fn apply(&mut self, field: &mut [f64]) {
        blur_axis(field, &mut self.tmp, self.dims, 1, &self.w);
        blur_axis(&self.tmp, field, self.dims, 0, &self.w);
        for (f, s) in field.iter_mut().zip(&self.scale) {
            *f *= s;
        }
    }
}

/// The `count` pixels nearest `center` (ties by index).
fn disc(dims: [usize; 2], center: (f64, f64), count: usize) -> Vec<usize> {
    let mut px: Vec<(f64, usize)> = (0..dims[0] * dims[1])
        .map(|i| {
            let (y, x) = ((i / dims[1]) as f64, (i % dims[1]) as f64);
            ((y - center.0).powi(2) + (x - center.1).powi(2), i)
        })
        .collect();
    px.sort_by(|a, b| a.partial_cmp(b).unwrap());
    px.into_iter().take(count).map(|(_, i)| i).collect()
}

/// Signal mask: one central disc, or nine discs on a 3×3 grid whose sizes
/// differ by at most one pixel. Both have `signal_pixels` pixels.
pub fn signal_mask(config: &FieldConfig) -> Vec<bool> {
    let dims = config.dims;
    let mut m = vec![false; dims[0] * dims[1]];
    let total = config.signal_pixels.min(dims[0] * dims[1]);
    match config.layout {
        Layout::Focal => {
            let c = ((dims[0] as f64 - 1.0) / 2.0, (dims[1] as f64 - 1.0) / 2.0);
            for i in disc(dims, c, total) {
                m[i] = true;
            }
        }
        Layout::Distributed => {
            let (base, extra) = (total / 9, total % 9);
            let mut k = 0;
            for gy in 0..3 {
                for gx in 0..3 {
                    let c = ((gy as f64 + 0.5) * dims[0] as f64 / 3.0 - 0.5, (gx as f64 + 0.5) * dims[1] as f64 / 3.0 - 0.5);
                    let count = base + usize::from(k < extra);
                    for i in disc(dims, c, count) {
                        m[i] = true;
                    }
                    k += 1;
                }
            }
        }
    }
    m
}

/// Upper-tail matched t→z conversion.
pub struct TToZ {
    t: StudentsT,
    normal: Normal,
}

impl TToZ {
    pub fn new(df: f64) -> Self {
        TToZ { t: StudentsT::new(0.0, 1.0, df).expect("df > 0"), normal: Normal::new(0.0, 1.0).unwrap() }
    }

    pub fn convert(&self, t: f64) -> f64 {
        // work in the tail that keeps precision
        let z = if t >= 0.0 { -self.normal.inverse_cdf(self.t.sf(t)) } else { self.normal.inverse_cdf(self.t.cdf(t)) };
        z.clamp(-38.0, 38.0)
    }
}

fn field_with(config: &FieldConfig, seed: u64, signal: Option<&[bool]>) -> Vec<f32> {
    let npx = config.dims[0] * config.dims[1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sm = Smoother::new(config.dims, config.sigma());
    let mut sum = vec![0.0f64; npx];
    let mut sq = vec![0.0f64; npx];
    let mut img = vec![0.0f64; npx];
    for _ in 0..config.n {
        for x in img.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        sm.apply(&mut img);
        for i in 0..npx {
            let v = img[i] + signal.map_or(0.0, |s| if s[i] { config.amplitude } else { 0.0 });
            sum[i] += v;
            sq[i] += v * v;
        }
    }
    let n = config.n as f64;
    let conv = TToZ::new(n - 1.0);
    (0..npx)
        .map(|i| {
            let mean = sum[i] / n;
            let var = ((sq[i] - n * mean * mean) / (n - 1.0)).max(0.0);
            let t = if var > 0.0 { mean / (var / n).sqrt() } else { 0.0 };
            conv.convert(t) as f32
        })
        .collect()
}

const NULL_STREAM: u64 = 0x6e75_6c6c;

/// The z map of replication `rep`.
pub fn generate_field(config: &FieldConfig, rep: usize) -> ZVolume {
    assert!(config.n >= 2, "a one-sample t needs n >= 2");
    let sig = signal_mask(config);
    let v = field_with(config, mix(config.seed, rep as u64), Some(&sig));
    ZVolume::new(config.dims.to_vec(), v, None).expect("dims match")
}

/// A z map with no signal, from a stream independent of [`generate_field`].
pub fn generate_null_field(config: &FieldConfig, rep: usize) -> ZVolume {
    let v = field_with(config, mix(config.seed ^ NULL_STREAM, rep as u64), None);
    ZVolume::new(config.dims.to_vec(), v, None).expect("dims match")
}

fn supra(zvol: &ZVolume, z: f64) -> VoxelSet {
    crate::inference::supra_threshold(zvol, z, crate::inference::Sidedness::OneSided)
}

/// `(1−α)` quantile of the largest supra-threshold cluster over `null_reps` null fields.
pub fn calibrate_k_null(config: &FieldConfig, z: f64) -> usize {
    let mut maxima: Vec<usize> = (0..config.null_reps.max(1)).into_par_iter().map(|r| chi(&supra(&generate_null_field(config, r), z))).collect();
    maxima.sort_unstable();
    maxima[quantile_index(maxima.len(), config.alpha) - 1]
}

/// Exact two-sided Clopper–Pearson interval for `x` successes in `n` trials.
pub fn clopper_pearson(x: usize, n: usize, level: f64) -> (f64, f64) {
    let a = 1.0 - level;
    let lo = if x == 0 { 0.0 } else { Beta::new(x as f64, (n - x + 1) as f64).unwrap().inverse_cdf(a / 2.0) };
    let hi = if x == n { 1.0 } else { Beta::new((x + 1) as f64, (n - x) as f64).unwrap().inverse_cdf(1.0 - a / 2.0) };
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub cluster_sizes: Vec<usize>,
    pub lb: Vec<usize>,
    pub heuristic: Vec<usize>,
    pub truth: Vec<usize>,
    /// Some queried region had `a̲(V) > a_P(V)`.
    pub violation_lb: bool,
    pub violation_heuristic: bool,
    /// Significant clusters whose lower bound is zero.
    pub zero_lb_significant: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: FieldConfig,
    pub z: f64,
    pub k_m: usize,
    pub replications: Vec<ReplicationResult>,
    pub fwer_lb: f64,
    pub fwer_lb_ci: (f64, f64),
    pub fwer_heuristic: f64,
    pub fwer_heuristic_ci: (f64, f64),
    /// Mean TDP over all significant clusters of all replications.
    pub mean_tdp_lb: f64,
    pub mean_tdp_heuristic: f64,
    pub mean_gap: f64,
    /// Mean of (total significant size / signal size) in percent.
    pub mean_size_pct: f64,
    pub significant_clusters: usize,
    pub zero_lb_significant: usize,
}

/// Three fixed post-hoc regions: whole image, central square, left half.
pub fn fixed_regions(dims: [usize; 2]) -> Vec<VoxelSet> {
    let all = crate::io::grid_voxels(&dims, |_| true);
    let (h, w) = (dims[0] as i32, dims[1] as i32);
    let central = all.select(|i| {
        let v = all.get(i);
        (h / 4..h - h / 4).contains(&v[0]) && (w / 4..w - w / 4).contains(&v[1])
    });
    let left = all.select(|i| all.get(i)[1] < w / 2);
    vec![all, central, left]
}

/// Runs one replication against a known `k_M`.
pub fn run_replication(
    config: &FieldConfig,
    rep: usize,
    z: f64,
    k_m: usize,
    table: &RkTable,
    signal: &VoxelSet,
) -> Result<ReplicationResult, InferenceError> {
    let zvol = generate_field(config, rep);
    let z_set = supra(&zvol, z);
    let mut out = ReplicationResult {
        cluster_sizes: Vec::new(),
        lb: Vec::new(),
        heuristic: Vec::new(),
        truth: Vec::new(),
        violation_lb: false,
        violation_heuristic: false,
        zero_lb_significant: 0,
    };
    let seed = mix(config.seed ^ 0x5eed, rep as u64);
    for (ci, c) in connected_components(&z_set).clusters.iter().enumerate().filter(|(_, c)| c.len() > k_m) {
        let lb = tdp_lower(c, &z_set, k_m, table)?.count;
        let (h, _) = component_separator(c, k_m, &config.heuristic, crate::bounds::DEFAULT_EXACT_CAP, mix(seed, ci as u64), table)?;
        let truth = c.intersection(signal)?.len();
        out.violation_lb |= lb > truth;
        out.violation_heuristic |= h > truth;
        out.zero_lb_significant += usize::from(lb == 0);
        out.cluster_sizes.push(c.len());
        out.lb.push(lb);
        out.heuristic.push(h);
        out.truth.push(truth);
    }
    for (ri, r) in fixed_regions(config.dims).iter().enumerate() {
        let truth = r.intersection(signal)?.len();
        let lb = tdp_lower(r, &z_set, k_m, table)?.count;
        out.violation_lb |= lb > truth;
        if !out.violation_heuristic {
            let h = crate::inference::tdp_heuristic(
                r,
                &z_set,
                k_m,
                &config.heuristic,
                crate::bounds::DEFAULT_EXACT_CAP,
                mix(seed, 0x7700 + ri as u64),
                table,
            )?
            .count;
            out.violation_heuristic |= h > truth;
        }
    }
    Ok(out)
}

pub fn run_experiment(config: &FieldConfig) -> Result<SimResult, InferenceError> {
    let z = config.z_threshold();
    let k_m = calibrate_k_null(config, z);
    let table = RkTable::new(2, k_m.max(1) as u64)?;
    let sig = signal_mask(config);
    let signal = crate::io::grid_voxels(&config.dims, |i| sig[i]);
    let reps: Vec<ReplicationResult> =
        (0..config.reps).into_par_iter().map(|r| run_replication(config, r, z, k_m, &table, &signal)).collect::<Result<_, _>>()?;
    let n = reps.len().max(1);
    let v_lb = reps.iter().filter(|r| r.violation_lb).count();
    let v_h = reps.iter().filter(|r| r.violation_heuristic).count();
    let mut tl = 0.0;
    let mut th = 0.0;
    let mut count = 0usize;
    for r in &reps {
        for i in 0..r.cluster_sizes.len() {
            tl += r.lb[i] as f64 / r.cluster_sizes[i] as f64;
            th += r.heuristic[i] as f64 / r.cluster_sizes[i] as f64;
            count += 1;
        }
    }
    let sig_n = signal.len().max(1) as f64;
    let size_pct = reps.iter().map(|r| r.cluster_sizes.iter().sum::<usize>() as f64 / sig_n * 100.0).sum::<f64>() / n as f64;
    let mean = |x: f64| if count == 0 { 0.0 } else { x / count as f64 };
    Ok(SimResult {
        config: config.clone(),
        z,
        k_m,
        fwer_lb: v_lb as f64 / n as f64,
        fwer_lb_ci: clopper_pearson(v_lb, n, 0.95),
        fwer_heuristic: v_h as f64 / n as f64,
        fwer_heuristic_ci: clopper_pearson(v_h, n, 0.95),
        mean_tdp_lb: mean(tl),
        mean_tdp_heuristic: mean(th),
        mean_gap: mean(th - tl),
        mean_size_pct: size_pct,
        significant_clusters: count,
        zero_lb_significant: reps.iter().map(|r| r.zero_lb_significant).sum(),
        replications: reps,
    })
}

/// A grid of settings sharing one base configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationPlan {
    pub base: FieldConfig,
    pub n: Vec<usize>,
    pub layouts: Vec<Layout>,
    pub amplitudes: Vec<f64>,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        SimulationPlan { base: FieldConfig::default(), n: vec![20, 80], layouts: vec![Layout::Focal, Layout::Distributed], amplitudes: vec![0.1] }
    }
}

impl SimulationPlan {
    pub fn settings(&self) -> Vec<FieldConfig> {
        let mut out = Vec::new();
        for &layout in &self.layouts {
            for &amplitude in &self.amplitudes {
                for &n in &self.n {
                    out.push(FieldConfig { n, layout, amplitude, ..self.base.clone() });
                }
            }
        }
        out
    }
}

pub const SIM_TSV_HEADER: &str = "n\tlayout\tamplitude\tfwer\tfwer_ci_lo\tfwer_ci_hi\tmean_tdp_lb\tmean_tdp_heur\tmean_size_pct";

pub fn sim_tsv_row(r: &SimResult) -> String {
    format!(
        "{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}",
        r.config.n,
        r.config.layout.name(),
        r.config.amplitude,
        r.fwer_lb,
        r.fwer_lb_ci.0,
        r.fwer_lb_ci.1,
        r.mean_tdp_lb,
        r.mean_tdp_heuristic,
        r.mean_size_pct
    )
}
