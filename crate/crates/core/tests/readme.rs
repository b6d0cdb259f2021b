//! Keep the README in step with the code.

const README: &str = include_str!("../../../README.md");

#[test]
fn documents_every_subcommand() {
    for cmd in ["rk-table", "calibrate", "analyze", "bench-separator", "simulate", "replay"] {
        assert!(README.contains(cmd), "README does not mention {cmd}");
    }
}

#[test]
fn tsv_header_matches() {
    let cols = clustertdp::report::tsv_header(3).replace('\t', " ");
    assert!(README.contains(&cols), "README column list is stale: {cols}");
}
