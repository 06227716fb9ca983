//! The subcommands, callable without going through argument parsing.

use std::fs;
use std::path::{Path, PathBuf};

use ipgdn::eval::{
    best_run, classification_metrics, clustering_metrics, kmeans_runs, mean_std, pca_2d, ClassificationMetrics,
    ClusteringMetrics,
};
use ipgdn::graphio::{load_graph, Graph};
use ipgdn::hsic::independence_loss_value;
use ipgdn::model::checkpoint::Checkpoint;
use ipgdn::model::{train, EpochRecord, GraphContext, IpgdnModel, ModelConfig};
use ipgdn::tensor::Matrix;
use ipgdn::Error;
use serde::{Deserialize, Serialize};

use crate::manifest::{DatasetFingerprint, RunManifest};
use crate::{svg, ClusterArgs, CliError, CliResult, EvalArgs, ExportArgs, SweepArgs, TrainArgs};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRACE_FILE: &str = "trace.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.tsv";
pub const SCATTER_FILE: &str = "scatter.svg";
pub const SWEEP_FILE: &str = "sweep.json";

/// Contents of `trace.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub manifest: RunManifest,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub epochs: Vec<EpochRecord>,
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Test-split metrics; null when the split is empty.
    pub test_acc: Option<f64>,
    pub macro_f1: Option<f64>,
    /// Independence penalty of the restored model in eval mode.
    pub hsic_final: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        MeanStd { mean, std }
    }
}

/// Aggregate over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedsSummary {
    pub runs: Vec<TrainSummary>,
    pub best_val_acc: MeanStd,
    pub test_acc: Option<MeanStd>,
    pub macro_f1: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrainOutput {
    Single(TrainSummary),
    Seeds(SeedsSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutput {
    pub k: usize,
    pub restarts: usize,
    pub seed: u64,
    pub nodes: usize,
    /// Average over all restarts.
    pub mean: ClusteringMetrics,
    /// The restart with the lowest inertia.
    pub best: ClusteringMetrics,
    pub best_inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportOutput {
    pub path: PathBuf,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub value: f64,
    pub val_acc: f64,
    pub test_acc: Option<f64>,
    pub hsic_final: f64,
}

/// Contents of `sweep.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub param: String,
    pub seeds: Vec<u64>,
    pub manifest: RunManifest,
    pub entries: Vec<SweepEntry>,
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    text.into_bytes()
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<ModelConfig> {
    let mut cfg = match path {
        Some(p) => ModelConfig::load(p)?,
        None => ModelConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn seed_list(first: u64, count: usize) -> CliResult<Vec<u64>> {
    if count == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    Ok((0..count as u64).map(|i| first.wrapping_add(i)).collect())
}

struct Evaluated {
    test: Option<ClassificationMetrics>,
    hsic_final: f64,
}

fn evaluate(graph: &Graph, model: &IpgdnModel, cfg: &ModelConfig) -> CliResult<Evaluated> {
    let ctx = GraphContext::new(graph, model.kind());
    let (logits, representation) = model.predict(&ctx, cfg)?;
    let pred = logits.argmax_rows();
    let test = &graph.splits().test;
    let test = if test.is_empty() {
        None
    } else {
        Some(classification_metrics(&pred, graph.labels(), test, model.num_classes())?)
    };
    let hsic_final = independence_loss_value(&representation, model.channels(), &ctx.hsic_nodes(cfg.hsic_scope))?;
    Ok(Evaluated { test, hsic_final })
}

/// Trains once and writes checkpoint, trace and manifest under `out`.
fn train_into(graph: &Graph, cfg: &ModelConfig, mut manifest: RunManifest, out: &Path) -> CliResult<TrainSummary> {
    create_dir(out)?;
    manifest.config = cfg.clone();
    manifest.seed = cfg.seed;
    let (model, trace) = manifest.time("train", || train(graph, cfg))?;
    let evaluated = manifest.time("evaluate", || evaluate(graph, &model, cfg))?;
    eprintln!(
        "seed {}: {} epochs, best epoch {} (val acc {:.4})",
        cfg.seed,
        trace.len(),
        trace.best_epoch,
        trace.best_val_acc
    );

    let reproducible = manifest.reproducible();
    let trace_file = TraceFile {
        manifest: reproducible.clone(),
        best_epoch: trace.best_epoch,
        best_val_acc: trace.best_val_acc,
        epochs: trace.epochs.clone(),
    };
    let mut checkpoint = Checkpoint::new(cfg.clone(), model);
    checkpoint
        .metadata
        .insert("dataset_sha256".into(), reproducible.dataset.sha256.clone());
    checkpoint.metadata.insert(
        "manifest".into(),
        serde_json::to_string(&reproducible).expect("manifest serializes"),
    );
    manifest.time("save", || -> CliResult<()> {
        write_file(&out.join(CHECKPOINT_FILE), &checkpoint.to_bytes())?;
        write_file(&out.join(TRACE_FILE), &to_json(&trace_file))
    })?;
    write_file(&out.join(MANIFEST_FILE), &to_json(&manifest))?;

    Ok(TrainSummary {
        seed: cfg.seed,
        epochs_run: trace.len(),
        best_epoch: trace.best_epoch,
        best_val_acc: trace.best_val_acc,
        test_acc: evaluated.test.map(|m| m.acc),
        macro_f1: evaluated.test.map(|m| m.macro_f1),
        hsic_final: evaluated.hsic_final,
    })
}

fn load_dataset(data_dir: &Path, manifest: &mut RunManifest) -> CliResult<Graph> {
    let graph = manifest.time("load", || load_graph(data_dir))?;
    Ok(graph)
}

fn mean_std_opt(values: &[Option<f64>]) -> Option<MeanStd> {
    values.iter().copied().collect::<Option<Vec<f64>>>().map(|v| MeanStd::of(&v))
}

/// `train`: one run into `--out`, or with `--seeds N` one run per seed
/// into `--out/seed-<s>`.
pub fn cmd_train(args: &TrainArgs) -> CliResult<TrainOutput> {
    let cfg = load_config(args.config.as_deref(), args.seed)?;
    let seeds = seed_list(cfg.seed, args.seeds)?;
    let dataset = DatasetFingerprint::of_dir(&args.data_dir)?;
    let mut manifest = RunManifest::new("train", &cfg, dataset);
    let graph = load_dataset(&args.data_dir, &mut manifest)?;
    if seeds.len() == 1 {
        return Ok(TrainOutput::Single(train_into(&graph, &cfg, manifest, &args.out)?));
    }
    let mut runs = Vec::new();
    for &seed in &seeds {
        let cfg = ModelConfig { seed, ..cfg.clone() };
        let dir = args.out.join(format!("seed-{seed}"));
        runs.push(train_into(&graph, &cfg, manifest.clone(), &dir)?);
    }
    let vals: Vec<f64> = runs.iter().map(|r| r.best_val_acc).collect();
    let tests: Vec<Option<f64>> = runs.iter().map(|r| r.test_acc).collect();
    let f1s: Vec<Option<f64>> = runs.iter().map(|r| r.macro_f1).collect();
    Ok(TrainOutput::Seeds(SeedsSummary {
        best_val_acc: MeanStd::of(&vals),
        test_acc: mean_std_opt(&tests),
        macro_f1: mean_std_opt(&f1s),
        runs,
    }))
}

/// Loads a dataset and a checkpoint and checks that their dimensions agree.
pub fn load_pair(data_dir: &Path, checkpoint: &Path) -> CliResult<(Graph, Checkpoint)> {
    let graph = load_graph(data_dir)?;
    let ck = Checkpoint::load(checkpoint)?;
    if ck.model.num_features() != graph.num_features() {
        return Err(Error::Validation(format!(
            "checkpoint expects {} features but the dataset has {}",
            ck.model.num_features(),
            graph.num_features()
        ))
        .into());
    }
    if ck.model.num_classes() != graph.num_classes() {
        return Err(Error::Validation(format!(
            "checkpoint predicts {} classes but the dataset has {}",
            ck.model.num_classes(),
            graph.num_classes()
        ))
        .into());
    }
    Ok((graph, ck))
}

fn representation(graph: &Graph, ck: &Checkpoint) -> CliResult<(Matrix, Matrix)> {
    let ctx = GraphContext::new(graph, ck.model.kind());
    Ok(ck.model.predict(&ctx, &ck.config)?)
}

/// `eval`: accuracy and macro F1 over the test split.
pub fn cmd_eval(args: &EvalArgs) -> CliResult<ClassificationMetrics> {
    let (graph, ck) = load_pair(&args.data_dir, &args.checkpoint)?;
    let (logits, _) = representation(&graph, &ck)?;
    let pred = logits.argmax_rows();
    Ok(classification_metrics(
        &pred,
        graph.labels(),
        &graph.splits().test,
        ck.model.num_classes(),
    )?)
}

/// `cluster`: k-means over the final representation of every labeled node.
pub fn cmd_cluster(args: &ClusterArgs) -> CliResult<ClusterOutput> {
    let (graph, ck) = load_pair(&args.data_dir, &args.checkpoint)?;
    let (_, rep) = representation(&graph, &ck)?;
    let nodes = graph.labeled_nodes();
    let truth: Vec<usize> = nodes.iter().map(|&v| graph.label(v).expect("labeled")).collect();
    let k = args.k.unwrap_or(graph.num_classes());
    let runs = kmeans_runs(&rep.select_rows(&nodes), k, args.seed, args.restarts)?;
    let reports = runs
        .iter()
        .map(|r| clustering_metrics(&r.assignments, &truth))
        .collect::<Result<Vec<_>, _>>()?;
    let best = best_run(&runs);
    Ok(ClusterOutput {
        k,
        restarts: args.restarts,
        seed: args.seed,
        nodes: nodes.len(),
        mean: ClusteringMetrics::mean(&reports).expect("at least one restart"),
        best: clustering_metrics(&best.assignments, &truth)?,
        best_inertia: best.inertia,
    })
}

fn export_manifest(command: &str, args: &ExportArgs, ck: &Checkpoint) -> CliResult<RunManifest> {
    Ok(RunManifest::new(command, &ck.config, DatasetFingerprint::of_dir(&args.data_dir)?))
}

/// Formats a matrix as tab-separated rows with round-trip float text.
pub fn to_tsv(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 12);
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// `embed`: writes `embeddings.tsv`, one row per node.
pub fn cmd_embed(args: &ExportArgs) -> CliResult<ExportOutput> {
    let (graph, ck) = load_pair(&args.data_dir, &args.checkpoint)?;
    let manifest = export_manifest("embed", args, &ck)?;
    let (_, rep) = representation(&graph, &ck)?;
    create_dir(&args.out)?;
    let path = args.out.join(EMBEDDINGS_FILE);
    write_file(&path, to_tsv(&rep).as_bytes())?;
    write_file(&args.out.join("embeddings.manifest.json"), &to_json(&manifest))?;
    Ok(ExportOutput {
        path,
        rows: rep.rows(),
        cols: rep.cols(),
    })
}

/// `plot`: writes `scatter.svg`, the 2-D PCA projection of the embeddings
/// colored by class.
pub fn cmd_plot(args: &ExportArgs) -> CliResult<ExportOutput> {
    let (graph, ck) = load_pair(&args.data_dir, &args.checkpoint)?;
    let manifest = export_manifest("plot", args, &ck)?;
    let (_, rep) = representation(&graph, &ck)?;
    let points = pca_2d(&rep)?;
    let title = format!("PCA of {} embeddings, dataset {}", ck.model.kind(), &manifest.dataset.sha256[..12]);
    let doc = svg::scatter(&points, graph.labels(), graph.num_classes(), &title);
    create_dir(&args.out)?;
    let path = args.out.join(SCATTER_FILE);
    write_file(&path, doc.as_bytes())?;
    write_file(&args.out.join("scatter.manifest.json"), &to_json(&manifest))?;
    Ok(ExportOutput {
        path,
        rows: points.rows(),
        cols: points.cols(),
    })
}

/// `sweep`: trains one model per value (all sharing the seed list) and
/// writes `sweep.json`. Per-value metrics are means over seeds.
pub fn cmd_sweep(args: &SweepArgs) -> CliResult<SweepOutput> {
    if args.values.len() < 2 {
        return Err(CliError::Usage("--values needs at least two values".into()));
    }
    let base = load_config(args.config.as_deref(), args.seed)?;
    let mut configs = Vec::new();
    for &v in &args.values {
        let mut cfg = base.clone();
        cfg.set_by_name(&args.param, v)?;
        configs.push(cfg);
    }
    let seeds = seed_list(base.seed, args.seeds)?;
    let dataset = DatasetFingerprint::of_dir(&args.data_dir)?;
    let mut manifest = RunManifest::new("sweep", &base, dataset);
    let graph = load_dataset(&args.data_dir, &mut manifest)?;

    let mut entries = Vec::new();
    for (&value, cfg) in args.values.iter().zip(&configs) {
        let mut vals = Vec::new();
        let mut tests = Vec::new();
        let mut hsics = Vec::new();
        for &seed in &seeds {
            let cfg = ModelConfig { seed, ..cfg.clone() };
            let (model, trace) = manifest.time(&format!("train {}={value} seed {seed}", args.param), || {
                train(&graph, &cfg)
            })?;
            let evaluated = evaluate(&graph, &model, &cfg)?;
            eprintln!(
                "{}={value} seed {seed}: best val acc {:.4}, hsic {:.6}",
                args.param, trace.best_val_acc, evaluated.hsic_final
            );
            vals.push(trace.best_val_acc);
            tests.push(evaluated.test.map(|m| m.acc));
            hsics.push(evaluated.hsic_final);
        }
        entries.push(SweepEntry {
            value,
            val_acc: MeanStd::of(&vals).mean,
            test_acc: mean_std_opt(&tests).map(|m| m.mean),
            hsic_final: MeanStd::of(&hsics).mean,
        });
    }

    let output = SweepOutput {
        param: args.param.clone(),
        seeds,
        manifest: manifest.reproducible(),
        entries,
    };
    create_dir(&args.out)?;
    write_file(&args.out.join(SWEEP_FILE), &to_json(&output))?;
    write_file(&args.out.join(MANIFEST_FILE), &to_json(&manifest))?;
    Ok(output)
}
