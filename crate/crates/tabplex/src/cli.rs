//! Command-line surface. The pipeline runs as separate commands with file
//! handoffs inside a run directory (`--out`):
//!
//! ```text
//! ingest            data.csv + schema.json      -> dataset.json
//! build-graph       dataset.json + relations    -> layer_*.edges + graph.json
//! train             dataset.json + graph        -> checkpoint.json + history.jsonl
//! predict           checkpoint + graph          -> predictions.csv
//! export-embeddings checkpoint + graph          -> embeddings.csv
//! evaluate          checkpoint + graph          -> metrics.txt
//! tune              dataset.json + graph        -> best_config.json + trials.jsonl
//! ```

use crate::error::{Error, Result};
use crate::eval::{auc, concat_and_fit_downstream, export_embeddings, mse, EmbeddingMatrix};
use crate::graph::{build_graph, load_graph, save_graph, ExtractOptions, RelationsFile};
use crate::manifest::{fingerprint, RunManifest};
use crate::model::{ModelState, Task};
use crate::params::{AggKind, Checkpoint};
use crate::schema::SchemaFile;
use crate::table::{load_table, prepare, Dataset, FeatureMatrix};
use crate::train::{random_search, train, SearchSpace, TrainConfig};
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Parser)]
#[command(
    name = "tabplex",
    version,
    about = "Multiplex relation graphs over tabular data: ingest, build-graph, train, predict, evaluate, tune"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Args)]
pub struct OutArg {
    /// Run directory for artifacts and the stage manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
pub enum Command {
    /// Load a delimited file under a schema, impute and normalize features,
    /// assign category ids, and write the prepared dataset.
    Ingest {
        /// Delimited input file (header row required).
        #[arg(long)]
        data: PathBuf,
        /// Schema JSON describing each column's kind.
        #[arg(long)]
        schema: PathBuf,
        #[command(flatten)]
        out: OutArg,
        /// Fraction of rows reserved for validation.
        #[arg(long, default_value_t = 0.15)]
        valid_ratio: f64,
        /// Force temporal (true) or random (false) validation split;
        /// defaults to temporal when a timestamp column exists.
        #[arg(long)]
        temporal: Option<bool>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extract relations and assemble the multiplex graph.
    BuildGraph {
        /// Relations JSON listing the edge-inducing rules in layer order.
        #[arg(long)]
        relations: PathBuf,
        #[command(flatten)]
        out: OutArg,
        /// In-degree cap per node per layer.
        #[arg(long, default_value_t = 50)]
        cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train on the prepared dataset and graph; keeps the best-validation
    /// checkpoint and writes the epoch history.
    Train {
        #[command(flatten)]
        out: OutArg,
        /// Training configuration JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Prediction task.
        #[arg(long)]
        task: Option<Task>,
        /// Aggregation kind inside each relation layer.
        #[arg(long)]
        agg: Option<AggKind>,
        /// Comma-separated subset of graph layers to train on.
        #[arg(long, value_delimiter = ',')]
        relations: Option<Vec<String>>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score every row with a trained checkpoint.
    Predict {
        #[command(flatten)]
        out: OutArg,
    },
    /// Export per-row embeddings from a trained checkpoint.
    ExportEmbeddings {
        #[command(flatten)]
        out: OutArg,
    },
    /// Recompute metrics from the checkpoint and run the downstream
    /// concatenation comparison.
    Evaluate {
        #[command(flatten)]
        out: OutArg,
    },
    /// Random hyperparameter search; writes the best configuration found.
    Tune {
        #[command(flatten)]
        out: OutArg,
        /// Base training configuration JSON (task, epochs, patience).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        agg: Option<AggKind>,
        /// Maximum number of trials.
        #[arg(long, default_value_t = 20)]
        budget: usize,
        /// Wall-clock limit in seconds.
        #[arg(long)]
        time_limit: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

impl clap::ValueEnum for Task {
    fn value_variants<'a>() -> &'a [Self] {
        &[Task::Classification, Task::Regression]
    }
    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(match self {
            Task::Classification => clap::builder::PossibleValue::new("classification"),
            Task::Regression => clap::builder::PossibleValue::new("regression"),
        })
    }
}

impl clap::ValueEnum for AggKind {
    fn value_variants<'a>() -> &'a [Self] {
        &[AggKind::Attention, AggKind::Mean, AggKind::Sum]
    }
    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(match self {
            AggKind::Attention => clap::builder::PossibleValue::new("attention"),
            AggKind::Mean => clap::builder::PossibleValue::new("mean"),
            AggKind::Sum => clap::builder::PossibleValue::new("sum"),
        })
    }
}

fn default_config() -> TrainConfig {
    TrainConfig {
        task: Task::Classification,
        lr: 1e-3,
        dropout: 0.1,
        hidden_dim: 64,
        weight_decay: 0.0,
        attention_head: 2,
        layer_size: 2,
        epochs: 100,
        patience: 10,
        seed: 0,
        agg: AggKind::Attention,
        n_hops: 1,
        batch_size: None,
    }
}

fn load_config(
    path: &Option<PathBuf>,
    task: Option<Task>,
    agg: Option<AggKind>,
    seed: Option<u64>,
) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                Error::Validation(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?
        }
        None => default_config(),
    };
    if let Some(t) = task {
        cfg.task = t;
    }
    if let Some(a) = agg {
        cfg.agg = a;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset_path(out: &Path) -> PathBuf {
    out.join("dataset.json")
}

fn checkpoint_path(out: &Path) -> PathBuf {
    out.join("checkpoint.json")
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Validation(format!(
            "missing artifact: {what} at {}",
            path.display()
        )));
    }
    Ok(())
}

fn load_dataset(out: &Path) -> Result<Dataset> {
    let path = dataset_path(out);
    require(&path, "dataset.json (run `ingest` first)")?;
    let text = std::fs::read_to_string(&path)?;
    Ok(serde_json::from_str(&text)?)
}

fn load_run_graph(out: &Path) -> Result<crate::graph::MultiplexGraph> {
    require(&out.join("graph.json"), "graph.json (run `build-graph` first)")?;
    load_graph(out)
}

fn load_model(out: &Path) -> Result<(Checkpoint, ModelState)> {
    let path = checkpoint_path(out);
    require(&path, "checkpoint.json (run `train` first)")?;
    let ckpt = Checkpoint::load(&path)?;
    let task: Task = serde_json::from_value(
        ckpt.config
            .get("task")
            .cloned()
            .unwrap_or_else(|| serde_json::json!("classification")),
    )?;
    let state = ModelState {
        params: ckpt.to_params(),
        beta: Some(ckpt.beta.clone()),
        task,
    };
    Ok((ckpt, state))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            data,
            schema,
            out,
            valid_ratio,
            temporal,
            seed,
        } => {
            require(&data, "input data file")?;
            require(&schema, "schema file")?;
            let schema_file = SchemaFile::load(&schema)?;
            let table = load_table(&data, &schema_file)?;
            let ds = prepare(table, valid_ratio, temporal, seed)?;
            std::fs::create_dir_all(&out.out)?;
            std::fs::write(dataset_path(&out.out), serde_json::to_string(&ds)?)?;
            let mut manifest = RunManifest::load_or_default(&out.out);
            manifest.record(
                "ingest",
                BTreeMap::from([
                    ("data".into(), data.display().to_string()),
                    ("schema".into(), schema.display().to_string()),
                ]),
                fingerprint(&serde_json::json!({
                    "valid_ratio": valid_ratio,
                    "temporal": temporal,
                    "seed": seed,
                })),
                vec!["dataset.json".into()],
            );
            manifest.save(&out.out)?;
            println!(
                "ingested {} rows ({} train / {} valid) into {}",
                ds.table.n_rows,
                ds.splits.train.len(),
                ds.splits.valid.len(),
                out.out.display()
            );
            Ok(())
        }
        Command::BuildGraph {
            relations,
            out,
            cap,
            seed,
        } => {
            require(&relations, "relations file")?;
            let ds = load_dataset(&out.out)?;
            let rels = RelationsFile::load(&relations)?;
            let opts = ExtractOptions {
                seed,
                sample_cap: cap,
                ..ExtractOptions::default()
            };
            let graph = build_graph(&ds, &rels, cap, &opts)?;
            save_graph(&graph, &out.out)?;
            let mut manifest = RunManifest::load_or_default(&out.out);
            manifest.record(
                "build-graph",
                BTreeMap::from([("relations".into(), relations.display().to_string())]),
                fingerprint(&serde_json::json!({"cap": cap, "seed": seed})),
                graph
                    .layers
                    .iter()
                    .enumerate()
                    .map(|(r, l)| format!("layer {r}: {}", l.name))
                    .collect(),
            );
            manifest.save(&out.out)?;
            for (r, layer) in graph.layers.iter().enumerate() {
                println!("layer {r} {:?}: {} edges", layer.name, layer.n_edges());
            }
            Ok(())
        }
        Command::Train {
            out,
            config,
            task,
            agg,
            relations,
            seed,
        } => {
            let cfg = load_config(&config, task, agg, seed)?;
            let ds = load_dataset(&out.out)?;
            let mut graph = load_run_graph(&out.out)?;
            if let Some(names) = &relations {
                graph = graph.select_layers(names)?;
            }
            let fm = FeatureMatrix::from_dataset(&ds);
            let dims = cfg.dims_for(&fm, graph.n_relations());
            let result = train(&graph, &fm, &ds.table.target.values, &ds.splits, dims, &cfg)?;

            let mut history = std::io::BufWriter::new(std::fs::File::create(
                out.out.join("history.jsonl"),
            )?);
            for record in &result.history {
                writeln!(history, "{}", serde_json::to_string(record)?)?;
            }
            drop(history);

            let ckpt = Checkpoint {
                dims: result.state.params.dims.clone(),
                params: result.state.params.data.clone(),
                beta: result.state.beta.clone().unwrap_or_default(),
                layer_names: graph.layers.iter().map(|l| l.name.clone()).collect(),
                vocab: ds.vocab.clone(),
                stats: ds.stats.clone(),
                config: serde_json::to_value(&cfg)?,
            };
            ckpt.save(&checkpoint_path(&out.out))?;

            let mut manifest = RunManifest::load_or_default(&out.out);
            manifest.record(
                "train",
                BTreeMap::from([("graph_layers".into(), format!("{}", graph.n_relations()))]),
                fingerprint(&cfg),
                vec!["checkpoint.json".into(), "history.jsonl".into()],
            );
            manifest.save(&out.out)?;
            println!(
                "best epoch {} with validation metric {:.6}",
                result.best_epoch, result.best_metric
            );
            Ok(())
        }
        Command::Predict { out } => {
            let ds = load_dataset(&out.out)?;
            let (ckpt, state) = load_model(&out.out)?;
            let graph = load_run_graph(&out.out)?.select_layers(&ckpt.layer_names)?;
            let fm = FeatureMatrix::from_dataset(&ds);
            let trace = state.predict(&graph, &fm)?;
            let path = out.out.join("predictions.csv");
            let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
            writeln!(f, "row_id,score")?;
            for (row, score) in trace.yhat.iter().enumerate() {
                writeln!(f, "{row},{score}")?;
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::ExportEmbeddings { out } => {
            let ds = load_dataset(&out.out)?;
            let (ckpt, state) = load_model(&out.out)?;
            let graph = load_run_graph(&out.out)?.select_layers(&ckpt.layer_names)?;
            let fm = FeatureMatrix::from_dataset(&ds);
            let trace = state.predict(&graph, &fm)?;
            let em = EmbeddingMatrix {
                row_ids: (0..ds.table.n_rows as u32).collect(),
                vectors: trace.z.clone(),
                beta: state.beta.clone().unwrap_or_default(),
                fingerprint: fingerprint(&ckpt.config),
            };
            let path = out.out.join("embeddings.csv");
            export_embeddings(&em, &path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Evaluate { out } => {
            let ds = load_dataset(&out.out)?;
            let (ckpt, state) = load_model(&out.out)?;
            let graph = load_run_graph(&out.out)?.select_layers(&ckpt.layer_names)?;
            let fm = FeatureMatrix::from_dataset(&ds);
            let trace = state.predict(&graph, &fm)?;
            let y = &ds.table.target.values;
            let metric = |ids: &[u32]| -> Result<f64> {
                let scores: Vec<f64> = ids.iter().map(|&i| trace.yhat[i as usize]).collect();
                let labels: Vec<f64> = ids.iter().map(|&i| y[i as usize]).collect();
                match state.task {
                    Task::Classification => auc(&scores, &labels),
                    Task::Regression => mse(&scores, &labels),
                }
            };
            let metric_name = match state.task {
                Task::Classification => "auc",
                Task::Regression => "mse",
            };
            let train_metric = metric(&ds.splits.train)?;
            let valid_metric = metric(&ds.splits.valid)?;
            let downstream = concat_and_fit_downstream(
                &ds,
                &trace.z,
                state.task,
                &ds.splits.train,
                &ds.splits.valid,
            )?;
            let path = out.out.join("metrics.txt");
            let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
            writeln!(f, "task: {:?}", state.task)?;
            writeln!(f, "train_{metric_name}: {train_metric}")?;
            writeln!(f, "valid_{metric_name}: {valid_metric}")?;
            for (name, b) in ckpt.layer_names.iter().zip(&ckpt.beta) {
                writeln!(f, "beta.{name}: {b}")?;
            }
            writeln!(f, "downstream_original_{metric_name}: {}", downstream.original)?;
            writeln!(f, "downstream_augmented_{metric_name}: {}", downstream.augmented)?;
            writeln!(f, "downstream_improvement_pct: {}", downstream.improvement_pct)?;
            drop(f);
            println!("{}", std::fs::read_to_string(&path)?);
            Ok(())
        }
        Command::Tune {
            out,
            config,
            task,
            agg,
            budget,
            time_limit,
            seed,
        } => {
            let base = load_config(&config, task, agg, seed)?;
            let ds = load_dataset(&out.out)?;
            let graph = load_run_graph(&out.out)?;
            let fm = FeatureMatrix::from_dataset(&ds);
            let space = SearchSpace::default();
            let (best, metric, trials) = random_search(
                &graph,
                &fm,
                &ds.table.target.values,
                &ds.splits,
                &base,
                &space,
                budget,
                time_limit.map(Duration::from_secs),
            )?;
            best.validate()?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(
                out.out.join("trials.jsonl"),
            )?);
            for t in &trials {
                writeln!(f, "{}", serde_json::to_string(t)?)?;
            }
            drop(f);
            std::fs::write(
                out.out.join("best_config.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "config": best,
                    "valid_metric": metric,
                }))?,
            )?;
            println!("best of {} trials: {:.6}", trials.len(), metric);
            Ok(())
        }
    }
}

/// Exit status mapping: 0 success, 1 runtime failure, 3 validation failure
/// (flag/file problems). clap itself exits 2 on unknown commands or flags.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        3
    } else {
        1
    }
}
