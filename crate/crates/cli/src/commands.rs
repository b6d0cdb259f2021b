use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clustertdp::extremal::RkTable;
use clustertdp::heuristic::{heuristic_separator, HeuristicParams, HyperrectInstance};
use clustertdp::inference::{analyze, build_regions, AnalysisConfig, AtlasVolume, Sidedness, Solver, ThresholdSpec, ZVolume};
use clustertdp::io::{grid_voxels, read_pzmx, read_regions, read_vvol, Volume};
use clustertdp::lattice::Adjacency;
use clustertdp::report::{report_json, report_summary, report_tsv};
use clustertdp::simulation::{run_experiment, sim_tsv_row, SimulationPlan, SIM_TSV_HEADER};
use clustertdp::thresholds::{find_k_for_z, find_z_for_k, Calibration, PermutationSource};
use serde::Serialize;

use crate::manifest::{digest, manifest_path, RunManifest};
use crate::{data, AnalyzeArgs, BenchArgs, CalibrateArgs, Cli, CmdResult, Command, Failure, Format, RkTableArgs, SideArg, SimulateArgs, SolverArg};

struct Run<'a> {
    cli: &'a Cli,
    argv: &'a [String],
    start: Instant,
    inputs: Vec<PathBuf>,
}

impl Run<'_> {
    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    /// Writes `text` to `out` (plus manifest) or stdout.
    fn emit(&self, name: &str, out: Option<&Path>, text: &str, config: serde_json::Value) -> CmdResult {
        let Some(out) = out else {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).and_then(|_| so.flush()).map_err(data)?;
            return Ok(());
        };
        std::fs::write(out, text).with_context(|| format!("writing {}", out.display())).map_err(data)?;
        let inputs = self.inputs.iter().map(|p| digest(p)).collect::<Result<Vec<_>, _>>().map_err(data)?;
        let outputs = vec![digest(out).map_err(data)?];
        let m = RunManifest {
            subcommand: name.into(),
            argv: self.argv.to_vec(),
            config,
            seed: self.cli.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            inputs,
            outputs,
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
        };
        let mp = manifest_path(out);
        let mut body = serde_json::to_string_pretty(&m).map_err(|e| Failure::Internal(e.into()))?;
        body.push('\n');
        std::fs::write(&mp, body).with_context(|| format!("writing {}", mp.display())).map_err(data)?;
        Ok(())
    }
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn to_json_text<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

pub fn dispatch(cli: &Cli, argv: &[String]) -> CmdResult {
    let mut run = Run { cli, argv, start: Instant::now(), inputs: Vec::new() };
    match &cli.command {
        Command::RkTable(a) => rk_table(&mut run, a),
        Command::Calibrate(a) => calibrate(&mut run, a),
        Command::Analyze(a) => analyze_cmd(&mut run, a),
        Command::BenchSeparator(a) => bench(&mut run, a),
        Command::Simulate(a) => simulate(&mut run, a),
        Command::Replay(a) => replay(a),
    }
}

fn check_alpha(alpha: f64) -> CmdResult {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--alpha must be in (0, 1), got {alpha}")))
    }
}

#[derive(Serialize)]
struct RkRow {
    k: u64,
    f: u64,
    r: f64,
    r_exact: String,
    r_tilde: f64,
    r_tilde_exact: String,
}

fn rk_table(run: &mut Run, a: &RkTableArgs) -> CmdResult {
    if a.d == 0 {
        return Err(Failure::Usage("--d must be at least 1".into()));
    }
    let t = RkTable::new(a.d, a.kmax).map_err(data)?;
    let fl = |r: clustertdp::extremal::Rational| *r.numer() as f64 / *r.denom() as f64;
    let rows: Vec<RkRow> = (1..=a.kmax)
        .map(|k| RkRow {
            k,
            f: t.f(k),
            r: fl(t.r(k)),
            r_exact: t.r(k).to_string(),
            r_tilde: fl(t.r_tilde(k)),
            r_tilde_exact: t.r_tilde(k).to_string(),
        })
        .collect();
    let text = match run.cli.format {
        Format::Json => to_json_text(&rows),
        Format::Tsv => {
            let mut s = String::from("k\tf\tr\tr_exact\tr_tilde\tr_tilde_exact\n");
            for r in &rows {
                s.push_str(&format!("{}\t{}\t{:.3}\t{}\t{:.3}\t{}\n", r.k, r.f, r.r, r.r_exact, r.r_tilde, r.r_tilde_exact));
            }
            s
        }
    };
    run.emit("rk-table", a.out.out.as_deref(), &text, json(a))
}

fn read_mask(path: &Path) -> Result<(Vec<usize>, Vec<bool>), Failure> {
    let v = read_vvol(path).with_context(|| format!("mask {}", path.display())).map_err(data)?;
    let keep = v.nonzero().with_context(|| format!("mask {}", path.display())).map_err(data)?;
    Ok((v.extents, keep))
}

fn calibrate(run: &mut Run, a: &CalibrateArgs) -> CmdResult {
    check_alpha(a.alpha)?;
    run.input(&a.perms);
    run.input(&a.mask);
    let perms = read_pzmx(&a.perms).with_context(|| format!("permutations {}", a.perms.display())).map_err(data)?;
    let (extents, keep) = read_mask(&a.mask)?;
    let set = grid_voxels(&extents, |i| keep[i]);
    let adj = Adjacency::build(&set);
    let cal: Calibration = match (a.threshold.k, a.threshold.z) {
        (Some(k), _) => find_z_for_k(&perms, &adj, k, a.alpha),
        (None, Some(z)) => find_k_for_z(&perms, &adj, z, a.alpha),
        _ => unreachable!("clap requires one of --k/--z"),
    }
    .map_err(data)?;
    let text = match run.cli.format {
        Format::Json => to_json_text(&cal),
        Format::Tsv => {
            let mut s = String::from("key\tvalue\n");
            s.push_str(&format!("alpha\t{}\npermutations\t{}\nvoxels\t{}\nindex\t{}\n", cal.alpha, perms.permutations(), set.len(), cal.index));
            match (cal.z(), cal.k()) {
                (Some(z), _) => s.push_str(&format!("k\t{}\nz\t{}\n", a.threshold.k.unwrap_or(0), z)),
                (_, Some(k)) => s.push_str(&format!("z\t{}\nk\t{}\n", a.threshold.z.unwrap_or(0.0), k)),
                _ => {}
            }
            s.push_str(&format!("exhausted\t{}\n", cal.exhausted.len()));
            s
        }
    };
    run.emit("calibrate", a.out.out.as_deref(), &text, json(a))
}

fn analyze_cmd(run: &mut Run, a: &AnalyzeArgs) -> CmdResult {
    check_alpha(a.alpha)?;
    run.input(&a.zmap);
    let (dims, values) = read_vvol(&a.zmap).and_then(Volume::into_f32).with_context(|| format!("z-map {}", a.zmap.display())).map_err(data)?;
    let mask = match &a.mask {
        Some(p) => {
            run.input(p);
            let (ext, keep) = read_mask(p)?;
            if ext != dims {
                return Err(data(anyhow!("mask extents {ext:?} differ from z-map extents {dims:?}")));
            }
            Some(keep)
        }
        None => None,
    };
    let zvol = ZVolume::new(dims.clone(), values, mask.as_deref()).map_err(data)?;
    let atlas = match &a.atlas {
        Some(p) => {
            run.input(p);
            let v = read_vvol(p).with_context(|| format!("atlas {}", p.display())).map_err(data)?;
            if v.extents != dims {
                return Err(data(anyhow!("atlas extents {:?} differ from z-map extents {dims:?}", v.extents)));
            }
            let labels = v.labels().map_err(data)?;
            Some(AtlasVolume { dims: dims.clone(), labels, names: Default::default() })
        }
        None => None,
    };
    let specs = match &a.regions {
        Some(p) => {
            run.input(p);
            Some(read_regions(p).with_context(|| format!("regions {}", p.display())).map_err(data)?)
        }
        None => None,
    };
    let regions = build_regions(specs.as_deref(), atlas.as_ref(), dims.len()).map_err(data)?;
    run.input(&a.perms);
    let perms = read_pzmx(&a.perms).with_context(|| format!("permutations {}", a.perms.display())).map_err(data)?;

    let threshold = match (a.threshold.k, a.threshold.z) {
        (Some(k), _) => ThresholdSpec::FixedK(k),
        (None, Some(z)) => ThresholdSpec::FixedZ(z),
        _ => unreachable!("clap requires one of --k/--z"),
    };
    let mut config = AnalysisConfig::new(a.alpha, threshold);
    config.seed = run.cli.seed;
    config.upper = !a.no_upper;
    config.solver = match a.solver {
        SolverArg::Lower => Solver::LowerBoundOnly,
        SolverArg::Heuristic => Solver::Heuristic,
        SolverArg::Both => Solver::Both,
    };
    config.sidedness = match a.sidedness {
        SideArg::One => Sidedness::OneSided,
        SideArg::Abs => Sidedness::TwoSidedAbsolute,
        SideArg::Split => Sidedness::TwoSidedSplit,
    };
    if let Some(ms) = a.time_limit_ms {
        config.heuristic = HeuristicParams::timed(ms);
    }
    if let Some(r) = a.runs {
        config.heuristic.phase1.runs = r;
    }
    let rep = analyze(&zvol, &config, &perms, &regions).map_err(data)?;
    eprint!("{}", report_summary(&rep));
    let text = match run.cli.format {
        Format::Json => report_json(&rep),
        Format::Tsv => report_tsv(&rep),
    };
    run.emit("analyze", a.out.out.as_deref(), &text, serde_json::json!({ "args": json(a), "resolved": json(&config) }))
}

#[derive(Serialize)]
struct BenchRow {
    n: usize,
    c: Vec<usize>,
    optimal: usize,
    heuristic: usize,
    rel_error: f64,
}

/// Non-decreasing `c` vectors of length `d` with entries in `1..=cmax`.
fn sorted_tuples(d: usize, cmax: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for t in &out {
            let lo = t.last().copied().unwrap_or(1);
            for x in lo..=cmax {
                let mut u = t.clone();
                u.push(x);
                next.push(u);
            }
        }
        out = next;
    }
    out
}

fn bench(run: &mut Run, a: &BenchArgs) -> CmdResult {
    if a.d == 0 || a.nmax == 0 || a.cmax == 0 {
        return Err(Failure::Usage("--d, --nmax and --cmax must be positive".into()));
    }
    let params = HeuristicParams::timed(a.budget_ms);
    let mut cases = Vec::new();
    for n in 1..=a.nmax {
        for c in sorted_tuples(a.d, a.cmax) {
            cases.push((n, c));
        }
    }
    let mut rows = Vec::with_capacity(cases.len());
    for (i, (n, c)) in cases.into_iter().enumerate() {
        let inst = HyperrectInstance::new(n, &c).map_err(data)?;
        let table = RkTable::new(a.d, inst.k as u64).map_err(data)?;
        let seed = run.cli.seed.wrapping_add(i as u64);
        let h = heuristic_separator(&inst.set, inst.k, &params, seed, Some(&table)).map_err(|e| Failure::Internal(e.into()))?;
        let rel = (h.value as f64 - inst.optimum as f64) / inst.optimum.max(1) as f64;
        rows.push(BenchRow { n, c, optimal: inst.optimum, heuristic: h.value, rel_error: rel });
    }
    let exact = rows.iter().filter(|r| r.heuristic == r.optimal).count();
    let mut errs: Vec<f64> = rows.iter().map(|r| r.rel_error).collect();
    errs.sort_by(f64::total_cmp);
    let median = if errs.is_empty() { 0.0 } else { errs[errs.len() / 2] };
    eprintln!(
        "{} instances, {} optimal ({:.1}%), median relative error {:.4}",
        rows.len(),
        exact,
        100.0 * exact as f64 / rows.len().max(1) as f64,
        median
    );
    let text = match run.cli.format {
        Format::Json => to_json_text(&rows),
        Format::Tsv => {
            let mut s = String::from("n\tc\toptimal\theuristic\trel_error\n");
            for r in &rows {
                let c: Vec<String> = r.c.iter().map(|x| x.to_string()).collect();
                s.push_str(&format!("{}\t{}\t{}\t{}\t{:.4}\n", r.n, c.join("x"), r.optimal, r.heuristic, r.rel_error));
            }
            s
        }
    };
    run.emit("bench-separator", a.out.out.as_deref(), &text, json(a))
}

fn simulate(run: &mut Run, a: &SimulateArgs) -> CmdResult {
    let mut plan = match &a.config {
        Some(p) => {
            run.input(p);
            let text = std::fs::read_to_string(p).with_context(|| format!("config {}", p.display())).map_err(data)?;
            serde_json::from_str::<SimulationPlan>(&text).with_context(|| format!("config {}", p.display())).map_err(data)?
        }
        None => SimulationPlan::default(),
    };
    plan.base.seed = run.cli.seed;
    let mut results = Vec::new();
    for cfg in plan.settings() {
        eprintln!("simulating n={} layout={} amplitude={}", cfg.n, cfg.layout.name(), cfg.amplitude);
        results.push(run_experiment(&cfg).map_err(data)?);
    }
    let text = match run.cli.format {
        Format::Json => to_json_text(&results),
        Format::Tsv => {
            let mut s = format!("{SIM_TSV_HEADER}\n");
            for r in &results {
                s.push_str(&sim_tsv_row(r));
                s.push('\n');
            }
            s
        }
    };
    run.emit("simulate", a.out.out.as_deref(), &text, json(&plan))
}

fn replay(a: &crate::ReplayArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.manifest).with_context(|| format!("manifest {}", a.manifest.display())).map_err(data)?;
    let m: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("manifest {}", a.manifest.display())).map_err(data)?;
    let mut argv: Vec<String> = m
        .get("argv")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .ok_or_else(|| data(anyhow!("manifest {} has no argv list", a.manifest.display())))?;
    if argv.iter().any(|s| s == "replay") {
        return Err(data(anyhow!("manifest records a replay")));
    }
    if let Some(out) = &a.out {
        match argv.iter().position(|s| s == "--out") {
            Some(i) if i + 1 < argv.len() => argv[i + 1] = out.display().to_string(),
            _ => {
                argv.push("--out".into());
                argv.push(out.display().to_string());
            }
        }
    }
    match crate::run(argv) {
        0 => Ok(()),
        1 => Err(Failure::Usage("recorded arguments no longer parse".into())),
        2 => Err(data(anyhow!("replay failed"))),
        _ => Err(Failure::Internal(anyhow!("replay failed"))),
    }
}
