use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tabsearch::config::PipelineConfig;
use tabsearch::eval::{evaluate, paired_t_test, EvalOptions, RunFile};
use tabsearch::pipeline::{self, Workspace, REPORT_FILE};
use tabsearch::{Error, Result};

/// Dataset search with generated schema labels.
///
/// Each subcommand reads and writes plain files in the artifact directory
/// given by --work. Hyperparameters come from --config, then --set, then the
/// dedicated flags.
#[derive(Parser)]
#[command(name = "tabsearch", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Artifact directory.
    #[arg(long, global = true, default_value = "work")]
    work: PathBuf,
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a configuration key, e.g. `--set k=20`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Corpus root: one directory per dataset with data.csv and meta.json.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Word vector file, text format, optionally gzipped.
    #[arg(long, global = true)]
    vectors: Option<PathBuf>,
    /// Query file: `task_id<TAB>query` per line.
    #[arg(long, global = true)]
    queries: Option<PathBuf>,
    /// Task descriptions: `task_id<TAB>description` per line.
    #[arg(long, global = true)]
    descriptions: Option<PathBuf>,
    /// Relevance judgments in TREC qrels format.
    #[arg(long, global = true)]
    qrels: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Load the corpus directory into corpus.json.
    Ingest {
        #[arg(long)]
        max_rows: Option<usize>,
    },
    /// Build the label vocabulary, preference matrix and SPPMI matrix.
    Cooccur {
        #[arg(long)]
        k_neg: Option<u32>,
        #[arg(long)]
        min_label_freq: Option<usize>,
    },
    /// Factorize the preference and SPPMI matrices jointly.
    TrainCofactor {
        /// Latent dimension.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        max_sweeps: Option<usize>,
    },
    /// Train the random-forest label generator.
    TrainGenerator {
        #[arg(long)]
        trees: Option<usize>,
        /// own-label or sibling-mean.
        #[arg(long)]
        embedding_source: Option<String>,
    },
    /// Generate labels for every column.
    Generate {
        #[arg(long)]
        top_m: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Build the text, data and combined field indexes.
    Index,
    /// Rank datasets for one query and print TREC run lines.
    Search {
        query: String,
        /// Number of results.
        #[arg(short, default_value_t = 10)]
        k: usize,
        /// Ranker settings written by `tune`.
        #[arg(long)]
        ranker: Option<PathBuf>,
    },
    /// Tune field weights by coordinate ascent; writes ranker.conf.
    Tune {
        /// Metric to maximize, e.g. ndcg@10 or p@5.
        #[arg(long)]
        metric: Option<String>,
    },
    /// Rank every query of the task set; writes runs/<tag>.run.
    Run {
        #[arg(long)]
        ranker: Option<PathBuf>,
        #[arg(long, default_value = "SLMR_run")]
        tag: String,
    },
    /// Run the eight pooling baselines and write the pooled pairs.
    Pool {
        #[arg(long, default_value_t = 100)]
        depth: usize,
    },
    /// Score run files against qrels; prints and writes report.tsv.
    Evaluate {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Run tag to compare the others against with a paired t-test.
        #[arg(long)]
        baseline: Option<String>,
        /// Cutoff of the NDCG used by the t-test.
        #[arg(long, default_value_t = 5)]
        test_cutoff: usize,
    },
    /// Export the five semantic features of every judged pair.
    Features,
}

fn config(g: &Global, stage: &[(&str, Option<String>)]) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_overrides(&g.overrides)?;
    let paths = [
        ("corpus", &g.corpus),
        ("vectors", &g.vectors),
        ("queries", &g.queries),
        ("descriptions", &g.descriptions),
        ("qrels", &g.qrels),
    ];
    for (key, value) in paths {
        if let Some(p) = value {
            cfg.set(key, &p.to_string_lossy())?;
        }
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    for (key, value) in stage {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn some<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

fn execute(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let ws = Workspace::new(&g.work)?;
    match &cli.command {
        Command::Ingest { max_rows } => {
            let cfg = config(g, &[("max_rows", some(max_rows))])?;
            let corpus = ws.ingest(&cfg)?;
            for w in &corpus.warnings {
                eprintln!("warning: {w}");
            }
            println!("ingested {} datasets", corpus.len());
        }
        Command::Cooccur { k_neg, min_label_freq } => {
            let cfg = config(g, &[("k_neg", some(k_neg)), ("min_label_freq", some(min_label_freq))])?;
            let (vocab, pref, sppmi) = ws.cooccur(&cfg)?;
            println!(
                "{} labels, {} dataset-label pairs, {} nonzero SPPMI cells",
                vocab.len(),
                pref.nnz(),
                sppmi.matrix.nnz()
            );
        }
        Command::TrainCofactor { k, max_sweeps } => {
            let cfg = config(g, &[("k", some(k)), ("max_sweeps", some(max_sweeps))])?;
            let t = ws.train_cofactor(&cfg)?;
            println!(
                "{} sweeps, objective {:.6}, converged {}",
                t.trace.len().saturating_sub(1),
                t.trace.last().copied().unwrap_or(f64::NAN),
                t.converged
            );
        }
        Command::TrainGenerator { trees, embedding_source } => {
            let cfg = config(g, &[("trees", some(trees)), ("embedding_source", embedding_source.clone())])?;
            let generator = ws.train_generator(&cfg)?;
            println!("trained {} trees", generator.forest.trees().len());
        }
        Command::Generate { top_m, threshold } => {
            let cfg = config(g, &[("top_m", some(top_m)), ("threshold", some(threshold))])?;
            let corpus = ws.generate(&cfg)?;
            let n: usize = corpus.datasets.iter().flat_map(|d| &d.generated_labels).map(Vec::len).sum();
            println!("generated {n} labels");
        }
        Command::Index => {
            for p in ws.index()? {
                println!("wrote {}", p.display());
            }
        }
        Command::Search { query, k, ranker } => {
            let cfg = config(g, &[])?;
            let rc = ws.ranker_config(&cfg, ranker.as_deref())?;
            let store = pipeline::load_store(&cfg)?;
            let list = ws.search(&cfg, &rc, store.as_ref(), query, *k)?;
            for (i, (id, score)) in list.entries.iter().enumerate() {
                println!("query Q0 {id} {} {score:.8} search", i + 1);
            }
        }
        Command::Tune { metric } => {
            let cfg = config(g, &[("tune_metric", metric.clone())])?;
            let store = pipeline::load_store(&cfg)?;
            let tasks = pipeline::load_tasks(&cfg)?;
            let qrels = pipeline::load_qrels(&cfg)?;
            let t = ws.tune(&cfg, &tasks, &qrels, store.as_ref())?;
            println!(
                "{}: {:.4} -> {:.4} after {} cycles",
                cfg.tune_metric, t.start_score, t.score, t.cycles
            );
        }
        Command::Run { ranker, tag } => {
            let cfg = config(g, &[])?;
            let rc = ws.ranker_config(&cfg, ranker.as_deref())?;
            let store = pipeline::load_store(&cfg)?;
            let tasks = pipeline::load_tasks(&cfg)?;
            let (path, run) = ws.run(&cfg, &rc, store.as_ref(), &tasks, tag)?;
            println!("wrote {} ({} queries)", path.display(), run.len());
        }
        Command::Pool { depth } => {
            let cfg = config(g, &[])?;
            let tasks = pipeline::load_tasks(&cfg)?;
            let pool = ws.pool(&tasks, *depth)?;
            println!("pooled {} task-dataset pairs", pool.len());
        }
        Command::Evaluate { runs, baseline, test_cutoff } => {
            let cfg = config(g, &[])?;
            let qrels = pipeline::load_qrels(&cfg)?;
            let runs = runs.iter().map(|p| RunFile::load(p)).collect::<Result<Vec<_>>>()?;
            let opts = EvalOptions::default();
            let report = pipeline::evaluate_runs(&runs, &qrels, &opts)?;
            fs::write(ws.path(REPORT_FILE), &report).map_err(|e| Error::Config(e.to_string()))?;
            print!("{report}");
            if let Some(tag) = baseline {
                let opts = EvalOptions {
                    cutoffs: vec![*test_cutoff],
                    ..opts
                };
                let base = runs
                    .iter()
                    .find(|r| &r.tag == tag)
                    .ok_or_else(|| Error::Config(format!("no run tagged {tag}")))?;
                let b = evaluate(base, &qrels, &opts)?.ndcg_series(*test_cutoff);
                for r in runs.iter().filter(|r| &r.tag != tag) {
                    let a = evaluate(r, &qrels, &opts)?.ndcg_series(*test_cutoff);
                    let (t, p) = paired_t_test(&a, &b)?;
                    println!("{}\tvs\t{tag}\tt={t:.4}\tp={p:.4}", r.tag);
                }
            }
        }
        Command::Features => {
            let cfg = config(g, &[])?;
            let store = pipeline::load_store(&cfg)?
                .ok_or_else(|| Error::Config("features need --vectors".into()))?;
            let tasks = pipeline::load_tasks(&cfg)?;
            let qrels = pipeline::load_qrels(&cfg)?;
            let rows = ws.features(&cfg, &store, &tasks, &qrels)?;
            println!("wrote {} feature rows", rows.lines().count());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
