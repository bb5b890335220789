//! `ned`: train and evaluate entity-consistency models from the command
//! line. Subcommands cover dataset building, training, evaluation, gradient
//! checking, distance-threshold fitting and report rendering.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use ned_core::autodiff::grad_check;
use ned_core::dataset::{
    load_records, save_records, split_records, AliasIndex, DisambRecord, BuildReport,
    SplitManifest, SplitSizes, SplitSpec,
};
use ned_core::embedding::EmbeddingStore;
use ned_core::kg::{GraphStore, KnowledgeGraph};
use ned_core::models::{
    load_checkpoint, save_checkpoint, Arch, Model, ModelConfig, PreparedExample,
};
use ned_core::text::MentionMask;
use ned_core::train::{
    evaluate, evaluate_distance, fit_and_evaluate_distance, multi_run, train, write_log,
    EvalReport, Metrics, TrainConfig,
};

#[derive(Parser)]
#[command(name = "ned", version, about = "entity-consistency models over knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Values every data-facing subcommand shares. Each flag can also come from
/// a flat JSON config file; explicit flags win.
#[derive(Args, Debug, Default, Clone)]
struct CommonOpts {
    /// flat JSON config file mirroring these flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// architecture tag (e.g. rnn-triplets, gcn-attention)
    #[arg(long)]
    arch: Option<String>,
    /// word-embedding text file (token followed by floats)
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// dataset records JSONL
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// graph store JSONL
    #[arg(long)]
    graphs: Option<PathBuf>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// optimizer step size
    #[arg(long)]
    step: Option<f64>,
    /// hop cut applied to candidate graphs
    #[arg(long)]
    hops: Option<usize>,
    /// number of independently seeded runs
    #[arg(long)]
    runs: Option<usize>,
    /// use desk-scale layer sizes instead of the published ones
    #[arg(long)]
    toy: bool,
    /// machine-readable JSON output
    #[arg(long, global = true)]
    json: bool,
    /// split manifest from build-dataset; without it a seeded 80/10/10
    /// record split is used
    #[arg(long)]
    split: Option<PathBuf>,
}

/// The config-file counterpart of [`CommonOpts`].
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileOpts {
    arch: Option<String>,
    embeddings: Option<PathBuf>,
    dataset: Option<PathBuf>,
    graphs: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    step: Option<f64>,
    hops: Option<usize>,
    runs: Option<usize>,
    toy: Option<bool>,
    split: Option<PathBuf>,
}

impl CommonOpts {
    /// Fill unset flags from the config file, if one was given.
    fn merged(mut self) -> Result<Self> {
        let Some(path) = &self.config else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let file: FileOpts = serde_json::from_str(&text)
            .with_context(|| format!("config file {} is not a flat JSON object", path.display()))?;
        self.arch = self.arch.or(file.arch);
        self.embeddings = self.embeddings.or(file.embeddings);
        self.dataset = self.dataset.or(file.dataset);
        self.graphs = self.graphs.or(file.graphs);
        self.out = self.out.or(file.out);
        self.seed = self.seed.or(file.seed);
        self.epochs = self.epochs.or(file.epochs);
        self.batch_size = self.batch_size.or(file.batch_size);
        self.step = self.step.or(file.step);
        self.hops = self.hops.or(file.hops);
        self.runs = self.runs.or(file.runs);
        self.toy = self.toy || file.toy.unwrap_or(false);
        self.split = self.split.or(file.split);
        Ok(self)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn hops(&self) -> usize {
        self.hops.unwrap_or(2)
    }

    fn arch(&self) -> Result<Arch, UsageError> {
        let tag = self
            .arch
            .as_deref()
            .ok_or_else(|| UsageError("--arch is required".into()))?;
        Arch::from_str(tag).map_err(UsageError)
    }

    fn require(&self, field: &Option<PathBuf>, flag: &str) -> Result<PathBuf, UsageError> {
        field
            .clone()
            .ok_or_else(|| UsageError(format!("--{flag} is required")))
    }
}

/// An error in how the tool was invoked, as opposed to a runtime failure.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for UsageError {}

#[derive(Subcommand)]
enum Command {
    /// Validate records against the graph store and write split manifests
    /// plus a build report
    BuildDataset {
        /// input records JSONL (before validation)
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        train_ratio: f64,
        #[arg(long, default_value_t = 0.1)]
        dev_ratio: f64,
        #[arg(long, default_value_t = 0.1)]
        test_ratio: f64,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train one architecture; with --runs > 1, train repeatedly and write
    /// an aggregate report
    Train {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Evaluate a checkpoint on one split part
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// which split part to score: train, dev or test
        #[arg(long, default_value = "test")]
        part: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Finite-difference gradient check of one architecture on a toy input
    Gradcheck {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Fit the vector-distance decision threshold on the training split
    ThresholdFit {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Render saved evaluation reports as a text table
    Report {
        /// EvalReport JSON files, one per model
        files: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildDataset {
            records,
            train_ratio,
            dev_ratio,
            test_ratio,
            common,
        } => run_merged(common, |c| {
            cmd_build_dataset(records.clone(), (train_ratio, dev_ratio, test_ratio), c)
        }),
        Command::Train { common } => run_merged(common, cmd_train),
        Command::Eval {
            checkpoint,
            part,
            common,
        } => run_merged(common, |c| cmd_eval(&checkpoint, &part, c)),
        Command::Gradcheck { common } => run_merged(common, cmd_gradcheck),
        Command::ThresholdFit { common } => run_merged(common, cmd_threshold_fit),
        Command::Report { files, json } => cmd_report(&files, json),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run_merged(
    common: CommonOpts,
    f: impl FnOnce(&CommonOpts) -> Result<ExitCode>,
) -> Result<ExitCode> {
    let merged = common.merged()?;
    f(&merged)
}

/// Dimension of the first parseable embedding row.
fn sniff_dimension(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read embeddings {}", path.display()))?;
    for line in text.lines() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() >= 2 && fields[1..].iter().all(|f| f.parse::<f64>().is_ok()) {
            return Ok(fields.len() - 1);
        }
    }
    bail!("no parseable embedding rows in {}", path.display());
}

fn load_embeddings(path: &Path) -> Result<EmbeddingStore<f64>> {
    let dim = sniff_dimension(path)?;
    let (store, report) = EmbeddingStore::load(path, dim)
        .with_context(|| format!("cannot load embeddings {}", path.display()))?;
    if report.malformed > 0 {
        eprintln!("embeddings: skipped {} malformed rows", report.malformed);
    }
    Ok(store)
}

/// Published or desk-scale dimensions, with the embedding width taken from
/// the loaded vectors.
fn make_config(arch: Arch, embedding_dim: usize, toy: bool) -> ModelConfig {
    let mut config = if toy {
        ModelConfig::toy(arch)
    } else {
        ModelConfig::standard(arch)
    };
    config.embedding_dim = embedding_dim;
    if matches!(
        arch,
        Arch::VectorDistance | Arch::FeedforwardAverages | Arch::Centroid | Arch::LinearAttention
    ) {
        config.y_graph_dim = embedding_dim;
    }
    config
}

struct SplitData {
    train: Vec<PreparedExample<f64>>,
    dev: Vec<PreparedExample<f64>>,
    test: Vec<PreparedExample<f64>>,
}

/// Load everything a training or evaluation run needs and expand the splits.
fn load_split_data(common: &CommonOpts, config: &ModelConfig) -> Result<SplitData> {
    let dataset = common.require(&common.dataset, "dataset")?;
    let graphs_path = common.require(&common.graphs, "graphs")?;
    let embeddings_path = common.require(&common.embeddings, "embeddings")?;
    let embeddings = load_embeddings(&embeddings_path)?;
    if embeddings.dimension() != config.embedding_dim {
        bail!(
            "embedding dimension {} does not match model dimension {}",
            embeddings.dimension(),
            config.embedding_dim
        );
    }
    let graphs = GraphStore::load(&graphs_path)
        .with_context(|| format!("cannot load graph store {}", graphs_path.display()))?;
    if graphs.skipped_lines > 0 {
        eprintln!("graph store: skipped {} malformed lines", graphs.skipped_lines);
    }
    let (records, skipped) = load_records(&dataset)?;
    if skipped > 0 {
        eprintln!("dataset: skipped {skipped} invalid lines");
    }
    if records.is_empty() {
        bail!("dataset {} has no valid records", dataset.display());
    }
    let manifest = match &common.split {
        Some(path) => SplitManifest::load(path)?,
        None => split_records(
            records.len(),
            &SplitSpec {
                sizes: SplitSizes::Ratios { train: 0.8, dev: 0.1, test: 0.1 },
                seed: common.seed(),
            },
        )?,
    };
    let hops = common.hops();
    let expand = |indices: &[usize]| -> Result<Vec<PreparedExample<f64>>> {
        let mut out = Vec::with_capacity(2 * indices.len());
        for &i in indices {
            let rec = records
                .get(i)
                .with_context(|| format!("split manifest points past record {i}"))?;
            let (pos, neg) =
                ned_core::dataset::expand_to_examples(rec, &graphs, &embeddings, config, hops)
                    .with_context(|| format!("record {i} ({:?}) does not expand", rec.entity))?;
            out.push(pos);
            out.push(neg);
        }
        Ok(out)
    };
    Ok(SplitData {
        train: expand(&manifest.train)?,
        dev: expand(&manifest.dev)?,
        test: expand(&manifest.test)?,
    })
}

fn print_metrics(label: &str, m: &Metrics) {
    println!(
        "{label}: precision {:.1} recall {:.1} F1 {:.1} accuracy {:.1}",
        m.precision, m.recall, m.f1, m.accuracy
    );
}

fn cmd_build_dataset(
    records_path: Option<PathBuf>,
    ratios: (f64, f64, f64),
    common: &CommonOpts,
) -> Result<ExitCode> {
    let records_path = records_path
        .or_else(|| common.dataset.clone())
        .ok_or_else(|| UsageError("--records (or --dataset) is required".into()))?;
    let graphs_path = common.require(&common.graphs, "graphs")?;
    let embeddings_path = common.require(&common.embeddings, "embeddings")?;
    let out_dir = common.require(&common.out, "out")?;
    std::fs::create_dir_all(&out_dir)?;

    let embeddings = load_embeddings(&embeddings_path)?;
    let graphs = GraphStore::load(&graphs_path)?;
    let (records, invalid) = load_records(&records_path)?;

    let mut report = BuildReport {
        records_read: records.len() + invalid,
        invalid_lines: invalid,
        ..BuildReport::default()
    };
    // arch only determines the triplet layout, which build validation does
    // not depend on
    let config = make_config(Arch::RnnTriplets, embeddings.dimension(), true);
    let kept: Vec<DisambRecord> = ned_core::dataset::filter_expandable(
        &records,
        &graphs,
        &embeddings,
        &config,
        common.hops(),
        &mut report,
    );
    if kept.is_empty() {
        bail!("no records survived validation");
    }

    let (train, dev, test) = ratios;
    let manifest = split_records(
        kept.len(),
        &SplitSpec {
            sizes: SplitSizes::Ratios { train, dev, test },
            seed: common.seed(),
        },
    )?;

    save_records(&kept, out_dir.join("records.jsonl"))?;
    manifest.save(out_dir.join("split.json"))?;
    report.save(out_dir.join("report.json"))?;
    AliasIndex::from_store(&graphs).save(out_dir.join("aliases.jsonl"))?;

    if common.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!(
            "kept {} of {} records ({} invalid lines, {} mention misses, {} missing graphs, {} empty graphs)",
            report.kept,
            report.records_read,
            report.invalid_lines,
            report.dropped_mention_not_found,
            report.dropped_missing_graph,
            report.dropped_no_triplets
        );
        println!(
            "split: {} train / {} dev / {} test records -> {}",
            manifest.train.len(),
            manifest.dev.len(),
            manifest.test.len(),
            out_dir.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(common: &CommonOpts) -> Result<ExitCode> {
    let arch = common.arch()?;
    let out_dir = common.require(&common.out, "out")?;
    std::fs::create_dir_all(&out_dir)?;
    let embeddings_path = common.require(&common.embeddings, "embeddings")?;
    let dim = sniff_dimension(&embeddings_path)?;
    let config = make_config(arch, dim, common.toy);
    let data = load_split_data(common, &config)?;

    let mut train_config = TrainConfig::new(config, common.epochs.unwrap_or(50), common.seed());
    if let Some(b) = common.batch_size {
        train_config.batch_size = b;
    }
    if let Some(s) = common.step {
        train_config.step_size = s;
    }

    let runs = common.runs.unwrap_or(1);
    if runs > 1 {
        let report = multi_run(&train_config, &data.train, &data.dev, &data.test, runs)?;
        let path = out_dir.join("report.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&report)?)?;
        if common.json {
            println!("{}", serde_json::to_string_pretty(&report)?);
        } else {
            println!("{}", render_report_table(&[report]));
            println!("report written to {}", path.display());
        }
        return Ok(ExitCode::SUCCESS);
    }

    if arch == Arch::VectorDistance {
        let (threshold, dev) = fit_and_evaluate_distance(&data.train, &data.dev)?;
        let test = evaluate_distance(threshold, &data.test)?;
        let mut config = train_config.model.clone();
        config.distance_threshold = Some(threshold);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model: Model<f64> = Model::new(config, &mut rng);
        save_checkpoint(&model, &out_dir.join("checkpoint.json"))?;
        if common.json {
            println!(
                "{}",
                serde_json::json!({ "threshold": threshold, "dev": dev, "test": test })
            );
        } else {
            println!("fitted threshold {threshold:.6}");
            print_metrics("dev", &dev);
            print_metrics("test", &test);
        }
        return Ok(ExitCode::SUCCESS);
    }

    let outcome = train(&train_config, &data.train, &data.dev)?;
    let dev = evaluate(&outcome.model, &data.dev)?;
    let test = evaluate(&outcome.model, &data.test)?;
    save_checkpoint(&outcome.model, &out_dir.join("checkpoint.json"))?;
    write_log(&outcome.log, &out_dir.join("train_log.jsonl"))?;
    if common.json {
        println!(
            "{}",
            serde_json::json!({
                "arch": arch.tag(),
                "epochs_run": outcome.log.len(),
                "best_epoch": outcome.best_epoch,
                "dev": dev,
                "test": test,
            })
        );
    } else {
        println!(
            "{arch}: trained {} epochs, best dev F1 {:.1} at epoch {}",
            outcome.log.len(),
            outcome.best_dev_f1,
            outcome.best_epoch
        );
        print_metrics("dev", &dev);
        print_metrics("test", &test);
        println!("checkpoint written to {}", out_dir.join("checkpoint.json").display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(checkpoint: &Path, part: &str, common: &CommonOpts) -> Result<ExitCode> {
    let model: Model<f64> = load_checkpoint(checkpoint)
        .with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    let data = load_split_data(common, &model.config)?;
    let examples = match part {
        "train" => &data.train,
        "dev" => &data.dev,
        "test" => &data.test,
        other => return Err(UsageError(format!("unknown split part {other:?}")).into()),
    };
    let metrics = if model.config.arch == Arch::VectorDistance {
        let threshold = model
            .config
            .distance_threshold
            .context("checkpoint has no fitted distance threshold")?;
        evaluate_distance(threshold, examples)?
    } else {
        evaluate(&model, examples)?
    };
    if common.json {
        println!("{}", serde_json::to_string_pretty(&metrics)?);
    } else {
        print_metrics(part, &metrics);
    }
    Ok(ExitCode::SUCCESS)
}

/// The fixed toy input used for gradient checking: a 5-token sentence and a
/// 3-edge graph over a dense random vocabulary.
fn gradcheck_example(arch: Arch, seed: u64) -> (ModelConfig, PreparedExample<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = EmbeddingStore::new(8, true);
    for w in ["w0", "w1", "w2", "w3", "w4", "w5", "w6", "r0", "r1", "r2"] {
        let v: Vec<f64> = (0..8)
            .map(|_| rand::Rng::random_range(&mut rng, -0.8..0.8))
            .collect();
        store.insert(w, v);
    }
    let mut g = KnowledgeGraph::new("w1", "w1");
    g.add_node("w2", "w2");
    g.add_node("w3", "w3");
    g.add_edge("w1", "r0", "w2").unwrap();
    g.add_edge("w1", "r1", "w3").unwrap();
    g.add_edge("w2", "r2", "w3").unwrap();
    let tokens: Vec<String> = ["w0", "w1", "w4", "w5", "w6"].map(String::from).to_vec();
    let mask = MentionMask {
        weights: vec![0, 1, 0, 0, 0],
    };
    let config = ModelConfig::toy(arch);
    let ex = PreparedExample::build(&tokens, mask, &g, &store, &config, true).unwrap();
    (config, ex)
}

fn cmd_gradcheck(common: &CommonOpts) -> Result<ExitCode> {
    let arch = common.arch()?;
    if !arch.is_trainable() {
        println!("{arch}: no trainable parameters, nothing to check");
        return Ok(ExitCode::SUCCESS);
    }
    let (config, ex) = gradcheck_example(arch, common.seed());
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed().wrapping_add(1));
    let model: Model<f64> = Model::new(config, &mut rng);
    let report = grad_check(
        &model.params,
        |tape| {
            model.forward(tape, &ex, None).map_err(|e| match e {
                ned_core::models::ModelError::Tensor(t) => t,
                other => panic!("forward failed: {other}"),
            })
        },
        1e-3,
    )?;
    if common.json {
        println!(
            "{}",
            serde_json::json!({
                "arch": arch.tag(),
                "pass": report.pass,
                "max_rel": report.max_rel,
                "params": report
                    .per_param
                    .iter()
                    .map(|p| serde_json::json!({
                        "name": p.name,
                        "pass": p.pass,
                        "max_rel": p.max_rel,
                        "checked": p.checked,
                        "skipped": p.skipped,
                    }))
                    .collect::<Vec<_>>(),
            })
        );
    } else {
        for p in &report.per_param {
            println!(
                "{}: {} (max rel {:.2e}, {} checked, {} skipped)",
                p.name,
                if p.pass { "pass" } else { "FAIL" },
                p.max_rel,
                p.checked,
                p.skipped
            );
        }
        println!(
            "{arch}: {} (max rel {:.2e})",
            if report.pass { "pass" } else { "FAIL" },
            report.max_rel
        );
    }
    if report.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        bail!("gradient check failed for {arch}");
    }
}

fn cmd_threshold_fit(common: &CommonOpts) -> Result<ExitCode> {
    let embeddings_path = common.require(&common.embeddings, "embeddings")?;
    let dim = sniff_dimension(&embeddings_path)?;
    let config = make_config(Arch::VectorDistance, dim, true);
    let data = load_split_data(common, &config)?;
    let (threshold, dev) = fit_and_evaluate_distance(&data.train, &data.dev)?;
    let train = evaluate_distance(threshold, &data.train)?;
    let test = evaluate_distance(threshold, &data.test)?;
    if let Some(out_dir) = &common.out {
        std::fs::create_dir_all(out_dir)?;
        let mut config = config;
        config.distance_threshold = Some(threshold);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model: Model<f64> = Model::new(config, &mut rng);
        save_checkpoint(&model, &out_dir.join("checkpoint.json"))?;
    }
    if common.json {
        println!(
            "{}",
            serde_json::json!({ "threshold": threshold, "train": train, "dev": dev, "test": test })
        );
    } else {
        println!("fitted threshold {threshold:.6}");
        print_metrics("train", &train);
        print_metrics("dev", &dev);
        print_metrics("test", &test);
    }
    Ok(ExitCode::SUCCESS)
}

fn render_report_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>6} {:>6} {:>6} {:>8} {:>8}\n",
        "model", "prec", "rec", "F1", "spread", "error"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<24} {:>6.1} {:>6.1} {:>6.1} {:>8.1} {:>8.1}\n",
            r.arch.tag(),
            r.test.precision,
            r.test.recall,
            r.test.f1,
            r.spread_f1,
            r.error_estimate
        ));
    }
    out
}

fn cmd_report(files: &[PathBuf], json: bool) -> Result<ExitCode> {
    if files.is_empty() {
        return Err(UsageError("report needs at least one EvalReport JSON file".into()).into());
    }
    let mut reports = Vec::with_capacity(files.len());
    for path in files {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read report {}", path.display()))?;
        let report: EvalReport = serde_json::from_str(&text)
            .with_context(|| format!("{} is not an EvalReport", path.display()))?;
        reports.push(report);
    }
    reports.sort_by(|a, b| a.test.f1.partial_cmp(&b.test.f1).unwrap().reverse());
    if json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        print!("{}", render_report_table(&reports));
    }
    Ok(ExitCode::SUCCESS)
}
