mod common;

use common::{planted_config, tree_bytes};
use marketstates::pipeline::{self, load_summary, NodeLabels, PipelineConfig};
use marketstates::synth::{cyclic_block_regimes, generate_panel};
use marketstates::Error;

const ALL: [&str; 7] = ["ingest", "returns", "correlate", "network", "kernel", "cluster", "report"];

#[test]
fn fresh_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_config(dir.path(), 21);
    let outcome = pipeline::run(&cfg, None).unwrap();
    assert_eq!(outcome.executed, ALL);
    let out = &cfg.out;
    for f in [
        "manifest.json",
        "epochs.csv",
        "ingest/panel.csv",
        "ingest/validation.json",
        "returns/normalized.csv",
        "correlations/epoch_0.csv",
        "correlations/power_mapped/epoch_102.csv",
        "correlations/epoch_stats.csv",
        "graphs/epoch_5.json",
        "graphs/epoch_5.dot",
        "kernel/kernel_matrix.csv",
        "kernel/distance_matrix.csv",
        "states/assignments.csv",
        "states/eigenvalues.csv",
        "states/state_3_medoid_matrix.csv",
        "report/summary.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let assignments = std::fs::read_to_string(out.join("states/assignments.csv")).unwrap();
    assert!(assignments.starts_with("epoch_index,start_date,end_date,state\n0,"));
    assert_eq!(assignments.lines().count(), 104);
    let kernel = std::fs::read_to_string(out.join("kernel/kernel_matrix.csv")).unwrap();
    assert!(kernel.lines().next().unwrap().starts_with("0,1,2,"));
    assert_eq!(load_summary(out).unwrap(), outcome.summary);
    assert_eq!(outcome.summary.epochs.len(), 103);
}

#[test]
fn deleting_states_recomputes_only_clustering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_config(dir.path(), 22);
    pipeline::run(&cfg, None).unwrap();
    let before = tree_bytes(&cfg.out);
    std::fs::remove_dir_all(cfg.out.join("states")).unwrap();
    let outcome = pipeline::run(&cfg, Some(2)).unwrap();
    assert_eq!(outcome.executed, ["cluster"]);
    assert_eq!(tree_bytes(&cfg.out), before);
}

#[test]
fn deleting_kernel_recomputes_identical_bytes_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_config(dir.path(), 23);
    pipeline::run(&cfg, None).unwrap();
    let before = tree_bytes(&cfg.out);
    std::fs::remove_dir_all(cfg.out.join("kernel")).unwrap();
    let outcome = pipeline::run(&cfg, None).unwrap();
    assert_eq!(outcome.executed, ["kernel"]);
    assert_eq!(tree_bytes(&cfg.out), before);
}

#[test]
fn parameter_change_reruns_dependants_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = planted_config(dir.path(), 24);
    pipeline::run(&cfg, None).unwrap();
    cfg.k = Some(3);
    let outcome = pipeline::run(&cfg, None).unwrap();
    assert_eq!(outcome.executed, ["cluster", "report"]);
    assert_eq!(outcome.summary.k, 3);
    assert_eq!(outcome.summary.k_source, "override");
    assert_eq!(outcome.summary.eigengap_k, Some(4));
    assert_eq!(outcome.summary.state_sizes.iter().sum::<usize>(), 103);

    cfg.alpha = 0.05;
    let outcome = pipeline::run(&cfg, None).unwrap();
    assert_eq!(outcome.executed, ["network", "kernel", "cluster", "report"]);
    assert_eq!(outcome.skipped, ["ingest", "returns", "correlate"]);
}

#[test]
fn changed_input_reruns_everything() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_config(dir.path(), 25);
    pipeline::run(&cfg, None).unwrap();
    let specs = cyclic_block_regimes(40, 4, 103, 0.7, 0.1).unwrap();
    let other = generate_panel(&specs, 40, 20, 103, 99).unwrap();
    marketstates::ingest::write_csv(&other, cfg.input.as_ref().unwrap()).unwrap();
    let outcome = pipeline::run(&cfg, None).unwrap();
    assert_eq!(outcome.executed, ALL);
}

#[test]
fn uniform_labels_ablation_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = planted_config(dir.path(), 26);
    cfg.node_labels = NodeLabels::Uniform;
    cfg.k = Some(4);
    let s = pipeline::run(&cfg, None).unwrap().summary;
    assert_eq!(s.k, 4);
    let graph = std::fs::read_to_string(cfg.out.join("graphs/epoch_0.json")).unwrap();
    assert!(graph.contains(r#""label": "*""#), "{}", &graph[..200]);
}

#[test]
fn too_short_panel_fails_in_returns_stage() {
    let dir = tempfile::tempdir().unwrap();
    let specs = cyclic_block_regimes(8, 2, 1, 0.5, 0.1).unwrap();
    let panel = generate_panel(&specs, 8, 20, 1, 0).unwrap();
    let (p, _) = pipeline::write_synthetic(dir.path(), &panel, &[0]).unwrap();
    let cfg = PipelineConfig {
        input: Some(p),
        out: dir.path().join("out"),
        ..Default::default()
    };
    let err = pipeline::run(&cfg, None).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "returns", .. }), "{err}");
}

#[test]
fn config_file_paths_resolve_relative_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("data")).unwrap();
    let cfg_path = dir.path().join("data/run.toml");
    std::fs::write(
        &cfg_path,
        "input = \"panel.csv\"\nout = \"../results\"\nepoch_length = 10\nk = 2\naffinity = \"kernel\"\nnull_test = \"student_t\"\n",
    )
    .unwrap();
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.input.as_deref(), Some(dir.path().join("data/panel.csv").as_path()));
    assert_eq!(cfg.out, dir.path().join("data/../results"));
    assert_eq!((cfg.epoch_length, cfg.k, cfg.top_k), (10, Some(2), 40));

    std::fs::write(&cfg_path, "input = \"p.csv\"\nepoch_lenght = 10\n").unwrap();
    assert!(PipelineConfig::load(&cfg_path).is_err());
}
