use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ipgdn::eval::pca_2d;
use ipgdn::graphio::{synth_factor_graph, FactorGraphSpec, Graph, Splits, EDGES_FILE};
use ipgdn::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

const FAST_CONFIG: &str = r#"{"M": 2, "delta_f": 4, "T": 3, "epochs": 60, "patience": 60, "dropout": 0.0, "lr": 0.05}"#;

fn ipgdn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipgdn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn schema_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas").join(name)
}

fn assert_schema(name: &str, instance: &Value) {
    let schema: Value = serde_json::from_str(&fs::read_to_string(schema_path(name)).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{instance:#}");
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two 8-cliques joined by one edge. Features carry a weak class signal plus
/// noise; two nodes per class train, two validate, the rest test.
fn two_cliques() -> Graph {
    let n = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut edges = Vec::new();
    for block in [0..8, 8..16] {
        for u in block.clone() {
            for v in block.clone().filter(|&v| v > u) {
                edges.push((u, v));
            }
        }
    }
    edges.push((7, 8));
    let mut data = Vec::new();
    for v in 0..n {
        let class = usize::from(v >= 8);
        data.push(if class == 0 { 1.0 } else { 0.0 });
        data.push(if class == 1 { 1.0 } else { 0.0 });
        data.extend((0..3).map(|_| rng.random_range(-0.3..0.3)));
    }
    let features = Matrix::from_vec(n, 5, data).unwrap();
    let labels = (0..n).map(|v| Some(usize::from(v >= 8))).collect();
    let splits = Splits {
        train: vec![0, 1, 8, 9],
        val: vec![2, 3, 10, 11],
        test: vec![4, 5, 6, 7, 12, 13, 14, 15],
    };
    Graph::new(features, &edges, labels, 2, splits).unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(graph: &Graph) -> Self {
        let dir = tempfile::tempdir().unwrap();
        graph.save(&dir.path().join("data")).unwrap();
        fs::write(dir.path().join("config.json"), FAST_CONFIG).unwrap();
        Fixture { dir }
    }

    fn cliques() -> Self {
        Fixture::new(&two_cliques())
    }

    fn factors() -> Self {
        let spec = FactorGraphSpec::new(160, 3, 4, 0.1, 0.01, 21);
        Fixture::new(&synth_factor_graph(&spec).unwrap().0)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn data(&self) -> PathBuf {
        self.path("data")
    }

    fn train(&self, out: &str) -> Value {
        let out = self.path(out);
        stdout_json(&ipgdn(&[
            "train",
            "--data-dir",
            s(&self.data()),
            "--config",
            s(&self.path("config.json")),
            "--out",
            s(&out),
        ]))
    }

    fn checkpoint(&self, out: &str) -> PathBuf {
        self.path(out).join("checkpoint.bin")
    }
}

#[test]
fn train_writes_checkpoint_trace_and_manifest() {
    let fx = Fixture::factors();
    let summary = fx.train("run");
    assert_schema("train-summary.schema.json", &summary);
    assert!(fx.checkpoint("run").is_file());

    let trace = read_json(&fx.path("run/trace.json"));
    assert_schema("trace.schema.json", &trace);
    let epochs = trace["epochs"].as_array().unwrap();
    assert!(!epochs.is_empty() && epochs.len() <= 60);
    assert_eq!(summary["epochs_run"].as_u64().unwrap() as usize, epochs.len());
    assert!(trace["manifest"].get("phases").is_none(), "trace must not carry timings");

    let manifest = read_json(&fx.path("run/manifest.json"));
    assert_schema("manifest.schema.json", &manifest);
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["M"], 2);
    assert!(!manifest["phases"].as_array().unwrap().is_empty());
}

#[test]
fn train_with_several_seeds_reports_mean_and_std() {
    let fx = Fixture::cliques();
    let out = fx.path("multi");
    let summary = stdout_json(&ipgdn(&[
        "train",
        "--data-dir",
        s(&fx.data()),
        "--config",
        s(&fx.path("config.json")),
        "--out",
        s(&out),
        "--seed",
        "3",
        "--seeds",
        "2",
    ]));
    assert_schema("train-seeds.schema.json", &summary);
    let seeds: Vec<u64> = summary["runs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, [3, 4]);
    assert!(out.join("seed-3/trace.json").is_file());
    assert!(out.join("seed-4/checkpoint.bin").is_file());
}

#[test]
fn missing_edges_file_is_reported() {
    let fx = Fixture::cliques();
    fs::remove_file(fx.data().join(EDGES_FILE)).unwrap();
    let out = ipgdn(&["train", "--data-dir", s(&fx.data()), "--out", s(&fx.path("run"))]);
    assert_ne!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(EDGES_FILE), "{stderr}");
    assert!(!fx.path("run").exists());
}

#[test]
fn unknown_config_key_exits_with_validation_code() {
    let fx = Fixture::cliques();
    fs::write(fx.path("config.json"), r#"{"lamda": 1e-5}"#).unwrap();
    let out = ipgdn(&[
        "train",
        "--data-dir",
        s(&fx.data()),
        "--config",
        s(&fx.path("config.json")),
        "--out",
        s(&fx.path("run")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));
}

#[test]
fn diverging_training_exits_with_runtime_code() {
    let fx = Fixture::cliques();
    fs::write(fx.path("config.json"), r#"{"M": 2, "delta_f": 4, "T": 2, "lr": 1e300, "epochs": 20}"#).unwrap();
    let out = ipgdn(&[
        "train",
        "--data-dir",
        s(&fx.data()),
        "--config",
        s(&fx.path("config.json")),
        "--out",
        s(&fx.path("run")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_prints_exactly_accuracy_and_macro_f1() {
    let fx = Fixture::cliques();
    fx.train("run");
    let ck = fx.checkpoint("run");
    let metrics = stdout_json(&ipgdn(&["eval", "--data-dir", s(&fx.data()), "--checkpoint", s(&ck)]));
    assert_schema("eval.schema.json", &metrics);
    let keys: BTreeSet<&str> = metrics.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, BTreeSet::from(["acc", "macro_f1"]));
    assert_eq!(metrics["acc"], 1.0);
    assert_eq!(metrics["macro_f1"], 1.0);
}

#[test]
fn eval_rejects_checkpoint_for_other_dataset() {
    let cliques = Fixture::cliques();
    cliques.train("run");
    let factors = Fixture::factors();
    let out = ipgdn(&[
        "eval",
        "--data-dir",
        s(&factors.data()),
        "--checkpoint",
        s(&cliques.checkpoint("run")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("features"));
}

#[test]
fn cluster_separates_cliques_and_is_reproducible() {
    let fx = Fixture::cliques();
    fx.train("run");
    let (data, ck) = (fx.data(), fx.checkpoint("run"));
    let args = ["cluster", "--data-dir", s(&data), "--checkpoint", s(&ck), "--restarts", "5", "--seed", "7"];
    let first = ipgdn(&args);
    let report = stdout_json(&first);
    assert_schema("cluster.schema.json", &report);
    assert_eq!(report["k"], 2);
    assert_eq!(report["nodes"], 16);
    assert!(report["best"]["nmi"].as_f64().unwrap() > 0.999, "{report:#}");
    assert_eq!(first.stdout, ipgdn(&args).stdout);
}

fn parse_tsv(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn embed_writes_one_row_per_node() {
    let fx = Fixture::cliques();
    fx.train("run");
    let out = fx.path("embed");
    let report = stdout_json(&ipgdn(&[
        "embed",
        "--data-dir",
        s(&fx.data()),
        "--checkpoint",
        s(&fx.checkpoint("run")),
        "--out",
        s(&out),
    ]));
    assert_schema("export.schema.json", &report);
    let rows = parse_tsv(&fs::read_to_string(out.join("embeddings.tsv")).unwrap());
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.len() == 8), "f_L = M · delta_f = 8");
    assert_eq!((report["rows"].as_u64(), report["cols"].as_u64()), (Some(16), Some(8)));
    assert_schema("manifest.schema.json", &read_json(&out.join("embeddings.manifest.json")));
}

#[test]
fn plot_matches_pca_of_exported_embeddings() {
    let fx = Fixture::cliques();
    fx.train("run");
    let (data, ck) = (fx.data(), fx.checkpoint("run"));
    let common = ["--data-dir", s(&data), "--checkpoint", s(&ck)];
    let embed_dir = fx.path("embed");
    let plot_dir = fx.path("plot");
    stdout_json(&ipgdn(&[&["embed"], &common[..], &["--out", s(&embed_dir)]].concat()));
    let report = stdout_json(&ipgdn(&[&["plot"], &common[..], &["--out", s(&plot_dir)]].concat()));
    assert_schema("export.schema.json", &report);

    let rows = parse_tsv(&fs::read_to_string(embed_dir.join("embeddings.tsv")).unwrap());
    let expected = pca_2d(&Matrix::from_rows(&rows).unwrap()).unwrap();

    let text = fs::read_to_string(plot_dir.join("scatter.svg")).unwrap();
    let doc = roxmltree::Document::parse(&text).expect("well-formed SVG");
    let points: Vec<_> = doc
        .descendants()
        .filter(|n| n.has_tag_name("circle") && n.attribute("class") == Some("point"))
        .collect();
    assert_eq!(points.len(), 16);
    for p in &points {
        let node: usize = p.attribute("data-node").unwrap().parse().unwrap();
        let x: f64 = p.attribute("data-x").unwrap().parse().unwrap();
        let y: f64 = p.attribute("data-y").unwrap().parse().unwrap();
        assert!((x - expected.get(node, 0)).abs() < 1e-9);
        assert!((y - expected.get(node, 1)).abs() < 1e-9);
    }
    let legend = doc.descendants().find(|n| n.attribute("id") == Some("legend"));
    assert!(legend.is_some(), "legend group");
    assert_schema("manifest.schema.json", &read_json(&plot_dir.join("scatter.manifest.json")));
}

fn sweep(fx: &Fixture, values: &str, out: &str) -> Output {
    ipgdn(&[
        "sweep",
        "--data-dir",
        s(&fx.data()),
        "--config",
        s(&fx.path("config.json")),
        "--out",
        s(&fx.path(out)),
        "--param",
        "lambda",
        "--values",
        values,
    ])
}

#[test]
fn sweep_records_one_entry_per_value() {
    let fx = Fixture::factors();
    let report = stdout_json(&sweep(&fx, "0,5e-6", "sweep"));
    assert_schema("sweep.schema.json", &report);
    let entries = report["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0]["value"], 0.0);
    assert_eq!(entries[1]["value"], 5e-6);
    for e in entries {
        for key in ["val_acc", "test_acc", "hsic_final"] {
            assert!(e[key].as_f64().unwrap().is_finite(), "{key}");
        }
    }
    let on_disk = read_json(&fx.path("sweep/sweep.json"));
    assert_eq!(on_disk, report);
    assert_schema("manifest.schema.json", &read_json(&fx.path("sweep/manifest.json")));
}

#[test]
fn sweep_needs_two_values() {
    let fx = Fixture::cliques();
    let out = sweep(&fx, "5e-6", "sweep");
    assert_eq!(out.status.code(), Some(2));
    assert!(!fx.path("sweep").exists());
}

#[test]
fn default_config_satisfies_schema() {
    let cfg = serde_json::to_value(ipgdn::model::ModelConfig::default()).unwrap();
    assert_schema("config.schema.json", &cfg);
}

#[test]
fn very_large_lambda_degrades_accuracy() {
    let spec = FactorGraphSpec::new(600, 3, 4, 0.03, 0.002, 100);
    let fx = Fixture::new(&synth_factor_graph(&spec).unwrap().0);
    fs::write(fx.path("config.json"), r#"{"M": 3, "epochs": 200, "patience": 100}"#).unwrap();
    let report = stdout_json(&sweep(&fx, "5e-6,1e4", "sweep"));
    let acc: Vec<f64> = report["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["test_acc"].as_f64().unwrap())
        .collect();
    let hsic: Vec<f64> = report["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["hsic_final"].as_f64().unwrap())
        .collect();
    assert!(acc[1] < acc[0] - 0.05, "{acc:?}");
    assert!(hsic[1] < hsic[0], "{hsic:?}");
}
