use std::path::Path;

use swglass::campaign::{build_graph, ExperimentConfig, GraphSummary};

fn shipped() -> Vec<(String, ExperimentConfig)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut out: Vec<(String, ExperimentConfig)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| {
            let c = ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (p.file_name().unwrap().to_string_lossy().into_owned(), c)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn every_shipped_config_loads_and_builds_its_graphs() {
    let configs = shipped();
    assert!(configs.len() >= 6, "{:?}", configs.iter().map(|c| &c.0).collect::<Vec<_>>());
    for (name, c) in &configs {
        assert!(c.temperatures.grid().unwrap().temps().len() >= 5, "{name}");
        for &l in &c.sizes {
            let s = GraphSummary::of(&build_graph(c, l).unwrap());
            assert_eq!(s.shortfall, 0, "{name} L={l}");
        }
    }
}

#[test]
fn full_campaign_parameters() {
    let configs = shipped();
    let get = |n: &str| &configs.iter().find(|c| c.0 == n).unwrap().1;

    let c = get("full_angle_constrained.toml");
    let g = build_graph(c, 16).unwrap();
    assert_eq!(GraphSummary::of(&g).n_sw, 1020);
    assert_eq!(build_graph(c, 30).unwrap().num_active(), 7200);
    let t = c.temperatures.grid().unwrap();
    assert_eq!(t.temps().len(), 30);
    assert!((t.temps()[0] - 1.5).abs() < 1e-12 && (t.temps()[29] - 2.3).abs() < 1e-12);

    let c = get("full_unconstrained.toml");
    let n: Vec<usize> = c.sizes.iter().map(|&l| build_graph(c, l).unwrap().num_active()).collect();
    assert_eq!(n, vec![1152, 1568, 2048, 2592]);

    let c = get("full_square.toml");
    let g = build_graph(c, 30).unwrap();
    let s = GraphSummary::of(&g);
    assert_eq!(s.n_sw, 225);
    assert_eq!(s.sw_per_layer.len(), 4);
    assert!(c.analysis.free_nu);
    assert_eq!(c.analysis.window, 2.5);
}
