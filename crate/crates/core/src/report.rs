//! TSV and JSON rendering of a [`ClusterReport`].
//!
//! One TSV row per (cluster, overlapping region) pair. Cluster columns are
//! filled on the first row of each cluster only, then a `Total` block follows.
//! Numbers use `.` decimals and three places; missing values print as `NA`.

use std::fmt::Write;

use crate::inference::{ClusterReport, Direction, RegionRow, Sidedness};

fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

fn opt3(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt3)
}

fn coord_names(d: usize) -> Vec<String> {
    match d {
        1..=3 => ["x", "y", "z"][..d].iter().map(|s| s.to_string()).collect(),
        _ => (1..=d).map(|i| format!("x{i}")).collect(),
    }
}

pub fn tsv_header(d: usize) -> String {
    let mut cols: Vec<String> =
        ["ID", "size", "TDP", "LB", "UB", "Region", "region_size", "overlap", "region_TDP", "region_LB"].iter().map(|s| s.to_string()).collect();
    cols.extend(coord_names(d));
    cols.push("Z_max".into());
    cols.join("\t")
}

fn region_cells(r: Option<&RegionRow>) -> [String; 5] {
    match r {
        Some(r) => [r.name.clone(), r.size.to_string(), r.overlap.to_string(), opt3(r.tdp_heuristic), fmt3(r.tdp_lb)],
        None => Default::default(),
    }
}

pub fn report_tsv(rep: &ClusterReport) -> String {
    let d = rep.dims.len();
    let mut out = String::new();
    out.push_str(&tsv_header(d));
    out.push('\n');
    let split = rep.sidedness == Sidedness::TwoSidedSplit;
    let blank_coords = vec![String::new(); d + 1];
    let mut line = |cells: Vec<String>| {
        out.push_str(&cells.join("\t"));
        out.push('\n');
    };
    for dr in &rep.directions {
        let tag = match (split, dr.direction) {
            (true, Direction::Negative) => "-",
            (true, _) => "+",
            _ => "",
        };
        for c in &dr.clusters {
            let n = c.regions.len().max(1);
            for i in 0..n {
                let mut cells: Vec<String> = if i == 0 {
                    vec![format!("{tag}{}", c.id), c.size.to_string(), opt3(c.tdp_heuristic), fmt3(c.tdp_lb), opt3(c.tdp_upper)]
                } else {
                    vec![String::new(); 5]
                };
                cells.extend(region_cells(c.regions.get(i)));
                if i == 0 {
                    cells.extend(c.peak.iter().map(|x| x.to_string()));
                    cells.push(fmt3(c.z_max));
                } else {
                    cells.extend(blank_coords.iter().cloned());
                }
                line(cells);
            }
        }
        let t = &dr.totals;
        let n = t.regions.len().max(1);
        for i in 0..n {
            let mut cells: Vec<String> = if i == 0 {
                vec![format!("Total{tag}"), t.size.to_string(), opt3(t.tdp_heuristic), fmt3(t.tdp_lb), opt3(t.tdp_upper)]
            } else {
                vec![String::new(); 5]
            };
            cells.extend(region_cells(t.regions.get(i)));
            cells.extend(blank_coords.iter().cloned());
            line(cells);
        }
    }
    out
}

pub fn report_json(rep: &ClusterReport) -> String {
    let mut s = serde_json::to_string_pretty(rep).expect("report serializes");
    s.push('\n');
    s
}

/// Short human summary of thresholds, one line per direction.
pub fn report_summary(rep: &ClusterReport) -> String {
    let mut s = String::new();
    for d in &rep.directions {
        let _ = writeln!(
            s,
            "{:?}: z > {:.3}, k_M = {}, {} supra-threshold voxels in {} clusters, {} significant",
            d.direction,
            d.z_threshold,
            d.k_m,
            d.supra_threshold_voxels,
            d.supra_threshold_clusters,
            d.clusters.len()
        );
    }
    s
}
