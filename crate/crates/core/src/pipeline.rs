//! The two-stage pipeline: label generation, then ranking and evaluation.
//!
//! [`Workspace`] runs each stage against plain files in an artifact
//! directory, one method per command-line subcommand. [`train_label_stage`]
//! and [`run_experiment`] run the same stages in memory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use crate::cofactor::{self, FactorModel, Training};
use crate::config::PipelineConfig;
use crate::cooccur::{
    build_sppmi, build_vocab_and_preference_with, cooccurrence_counts, LabelVocab, PreferenceMatrix,
    SparseMatrix, SppmiMatrix,
};
use crate::corpus::{load_corpus_with, Corpus, LoadOptions, TaskSet};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::eval::{evaluate, paired_t_test, pool_results, pool_to_tsv, report_tsv, EvalOptions, MetricTable, Qrels, RunFile};
use crate::index::{bm25_grid, build_index, Field, FieldIndex, Scorer};
use crate::labelgen::{apply_generated_labels_tsv, build_training_set, generated_labels_tsv, train_generator, LabelGenerator};
use crate::ranking::{
    grid_search_scorer, label_document, single_field_run, tune_weights, MixField, RankedList, Ranker, RankerConfig,
    TuneResult,
};

pub const CORPUS_FILE: &str = "corpus.json";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const PREFERENCE_FILE: &str = "preference.txt";
pub const COUNTS_FILE: &str = "cooccur.txt";
pub const SPPMI_FILE: &str = "sppmi.txt";
pub const COFACTOR_FILE: &str = "cofactor.txt";
pub const TRACE_FILE: &str = "objective.tsv";
pub const GENERATOR_FILE: &str = "generator.json";
pub const GENERATED_FILE: &str = "generated.tsv";
pub const RANKER_FILE: &str = "ranker.conf";
pub const POOL_FILE: &str = "pool.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const REPORT_FILE: &str = "report.tsv";
pub const RUNS_DIR: &str = "runs";

/// Fields with a persisted index.
pub const INDEXED_FIELDS: [Field; 3] = [Field::Text, Field::Data, Field::All];

pub fn index_file(field: Field) -> String {
    format!("index-{}.txt", field.name())
}

/// Output of the first stage.
#[derive(Debug, Clone)]
pub struct LabelStage {
    pub vocab: LabelVocab,
    pub preference: PreferenceMatrix,
    pub counts: SparseMatrix,
    pub sppmi: SppmiMatrix,
    pub training: Training,
    pub generator: LabelGenerator,
}

pub fn build_cooccurrence(corpus: &Corpus, cfg: &PipelineConfig) -> Result<(LabelVocab, PreferenceMatrix, SparseMatrix, SppmiMatrix)> {
    let (vocab, preference) = build_vocab_and_preference_with(corpus, cfg.min_label_freq)?;
    let counts = cooccurrence_counts(corpus, &vocab);
    let sppmi = build_sppmi(&counts, cfg.k_neg)?;
    Ok((vocab, preference, counts, sppmi))
}

pub fn train_generator_on(
    corpus: &Corpus,
    model: &FactorModel,
    vocab: &LabelVocab,
    cfg: &PipelineConfig,
) -> Result<LabelGenerator> {
    let set = build_training_set(corpus, model, vocab, cfg.embedding_source);
    train_generator(&set, vocab.len(), cfg.trees, cfg.seed, cfg.embedding_source)
}

/// Co-occurrence statistics, factorization and generator training.
pub fn train_label_stage(corpus: &Corpus, cfg: &PipelineConfig) -> Result<LabelStage> {
    cfg.validate()?;
    let (vocab, preference, counts, sppmi) = build_cooccurrence(corpus, cfg)?;
    info!("vocabulary: {} labels over {} datasets", vocab.len(), corpus.len());
    let training = cofactor::train(&preference, &sppmi, &cfg.cofactor_config())?;
    info!(
        "factorization: {} sweeps, objective {:.6}",
        training.trace.len().saturating_sub(1),
        training.trace.last().copied().unwrap_or(f64::NAN)
    );
    let generator = train_generator_on(corpus, &training.model, &vocab, cfg)?;
    Ok(LabelStage {
        vocab,
        preference,
        counts,
        sppmi,
        training,
        generator,
    })
}

impl LabelStage {
    pub fn annotate(&self, corpus: &mut Corpus, cfg: &PipelineConfig) -> Result<()> {
        self.generator
            .annotate(corpus, &self.training.model, &self.vocab, cfg.top_m, cfg.threshold)
    }
}

/// One evaluated ranking method.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: String,
    pub fields: String,
    /// Chosen scorer parameters and field weights.
    pub detail: String,
    pub run: RunFile,
    pub metrics: MetricTable,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub results: Vec<MethodResult>,
}

impl Experiment {
    pub fn get(&self, method: &str, fields: &str) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method && r.fields == fields)
    }

    pub fn report(&self) -> String {
        let rows: Vec<_> = self
            .results
            .iter()
            .map(|r| (r.method.as_str(), r.fields.as_str(), &r.metrics))
            .collect();
        report_tsv(&rows)
    }

    /// Paired t-test of every method against `baseline` on NDCG@k:
    /// `method fields t p significant` lines at level `alpha`.
    pub fn significance(&self, baseline: (&str, &str), k: usize, alpha: f64) -> Result<String> {
        let base = self
            .get(baseline.0, baseline.1)
            .ok_or_else(|| Error::Config(format!("no method {} {}", baseline.0, baseline.1)))?;
        let b = base.metrics.ndcg_series(k);
        let mut out = String::from("method\tfields\tt\tp\tsignificant\n");
        for r in &self.results {
            if std::ptr::eq(r, base) {
                continue;
            }
            let (t, p) = paired_t_test(&r.metrics.ndcg_series(k), &b)?;
            out.push_str(&format!("{}\t{}\t{t:.4}\t{p:.4}\t{}\n", r.method, r.fields, p < alpha));
        }
        Ok(out)
    }
}

fn single_field_method(
    index: &FieldIndex,
    fields: &str,
    tasks: &TaskSet,
    qrels: &Qrels,
    cfg: &PipelineConfig,
) -> Result<(Scorer, MethodResult)> {
    let depth = cfg.ranker.depth;
    let (scorer, _) = grid_search_scorer(index, &bm25_grid(), tasks, qrels, cfg.tune_metric, depth)?;
    let run = single_field_run(index, scorer, tasks, depth, &format!("SDR_{fields}"))?;
    let metrics = evaluate(&run, qrels, &EvalOptions::default())?;
    Ok((
        scorer,
        MethodResult {
            method: "SDR".into(),
            fields: fields.into(),
            detail: scorer.to_string(),
            run,
            metrics,
        },
    ))
}

fn mixed_method(
    ranker: &Ranker<'_>,
    method: &str,
    template: RankerConfig,
    tasks: &TaskSet,
    qrels: &Qrels,
    cfg: &PipelineConfig,
) -> Result<(TuneResult, MethodResult)> {
    let tuned = tune_weights(ranker, tasks, qrels, &template, cfg.tune_metric)?;
    let fields = tuned.config.fields_tag();
    let run = ranker.run_all(tasks, &tuned.config, &format!("{method}_{fields}"))?;
    let metrics = evaluate(&run, qrels, &EvalOptions::default())?;
    let detail = MixField::ALL
        .iter()
        .filter(|&&f| tuned.config.is_enabled(f))
        .map(|&f| format!("w_{}={}", f.name(), tuned.config.weight(f)))
        .collect::<Vec<_>>()
        .join(",");
    let result = MethodResult {
        method: method.into(),
        fields,
        detail,
        run,
        metrics,
    };
    Ok((tuned, result))
}

/// Starting point for tuning: the configured ranker settings with the given
/// fields enabled at their configured weights.
pub fn tuning_template(cfg: &PipelineConfig, fields: &[MixField]) -> RankerConfig {
    let mut t = cfg.ranker.clone();
    t.enabled = [false; 3];
    for &f in fields {
        t.enabled[f as usize] = true;
    }
    t
}

/// Single-field baselines, the multifield mixture and the label-mixed
/// ranker, each tuned on the given judgments and evaluated.
///
/// `corpus` must already carry generated labels.
pub fn run_experiment(
    corpus: &Corpus,
    store: &EmbeddingStore,
    tasks: &TaskSet,
    qrels: &Qrels,
    cfg: &PipelineConfig,
) -> Result<Experiment> {
    let text = build_index(&corpus.datasets, Field::Text);
    let data = build_index(&corpus.datasets, Field::Data);
    let all = build_index(&corpus.datasets, Field::All);
    let (text_scorer, sdr_text) = single_field_method(&text, "T+D", tasks, qrels, cfg)?;
    let (data_scorer, sdr_data) = single_field_method(&data, "DT", tasks, qrels, cfg)?;
    let (_, sdr_all) = single_field_method(&all, "T+D+DT", tasks, qrels, cfg)?;

    let ranker = Ranker::new(corpus, Some(store), cfg.include_original_labels_in_wmd);
    let mut base = cfg.clone();
    base.ranker.text_scorer = text_scorer;
    base.ranker.data_scorer = data_scorer;
    let mut results = vec![sdr_text, sdr_data, sdr_all];
    for (method, fields) in [
        ("MDR", vec![MixField::Text, MixField::Data]),
        ("SLMR", vec![MixField::Text, MixField::Labels]),
        ("SLMR", vec![MixField::Text, MixField::Data, MixField::Labels]),
    ] {
        let (_, r) = mixed_method(&ranker, method, tuning_template(&base, &fields), tasks, qrels, &base)?;
        results.push(r);
    }
    Ok(Experiment { results })
}

/// Artifact directory shared by the stage commands.
#[derive(Debug, Clone)]
pub struct Workspace {
    dir: PathBuf,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Workspace { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn read(&self, name: &str, producer: &'static str) -> Result<String> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::MissingArtifact(path, producer));
        }
        fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Load the raw corpus directory and store it as JSON.
    pub fn ingest(&self, cfg: &PipelineConfig) -> Result<Corpus> {
        let root = cfg.require(&cfg.corpus, "corpus")?;
        let corpus = load_corpus_with(root, LoadOptions { max_rows: cfg.max_rows })?;
        self.write(CORPUS_FILE, &serde_json::to_string(&corpus)?)?;
        Ok(corpus)
    }

    pub fn corpus(&self) -> Result<Corpus> {
        Ok(serde_json::from_str(&self.read(CORPUS_FILE, "ingest")?)?)
    }

    pub fn cooccur(&self, cfg: &PipelineConfig) -> Result<(LabelVocab, PreferenceMatrix, SppmiMatrix)> {
        let corpus = self.corpus()?;
        let (vocab, pref, counts, sppmi) = build_cooccurrence(&corpus, cfg)?;
        self.write(VOCAB_FILE, &vocab.to_tsv())?;
        self.write(PREFERENCE_FILE, &pref.to_sparse().to_triplets())?;
        self.write(COUNTS_FILE, &counts.to_triplets())?;
        self.write(SPPMI_FILE, &sppmi.matrix.to_triplets())?;
        Ok((vocab, pref, sppmi))
    }

    pub fn vocab(&self) -> Result<LabelVocab> {
        LabelVocab::from_tsv(&self.read(VOCAB_FILE, "cooccur")?)
    }

    pub fn train_cofactor(&self, cfg: &PipelineConfig) -> Result<Training> {
        cfg.validate()?;
        let pref = PreferenceMatrix::from_sparse(&SparseMatrix::from_triplets(&self.read(PREFERENCE_FILE, "cooccur")?)?)?;
        let sppmi = SppmiMatrix {
            matrix: SparseMatrix::from_triplets(&self.read(SPPMI_FILE, "cooccur")?)?,
            k_neg: cfg.k_neg,
        };
        let training = cofactor::train(&pref, &sppmi, &cfg.cofactor_config())?;
        self.write(COFACTOR_FILE, &training.model.to_text())?;
        let trace: String = training
            .trace
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{i}\t{v:?}\n"))
            .collect();
        self.write(TRACE_FILE, &trace)?;
        Ok(training)
    }

    pub fn factor_model(&self) -> Result<FactorModel> {
        FactorModel::from_text(&self.read(COFACTOR_FILE, "train-cofactor")?)
    }

    pub fn train_generator(&self, cfg: &PipelineConfig) -> Result<LabelGenerator> {
        cfg.validate()?;
        let corpus = self.corpus()?;
        let vocab = self.vocab()?;
        let model = self.factor_model()?;
        let generator = train_generator_on(&corpus, &model, &vocab, cfg)?;
        self.write(GENERATOR_FILE, &generator.to_json()?)?;
        Ok(generator)
    }

    /// Generate labels for every column and write them as TSV.
    pub fn generate(&self, cfg: &PipelineConfig) -> Result<Corpus> {
        cfg.validate()?;
        let mut corpus = self.corpus()?;
        let vocab = self.vocab()?;
        let model = self.factor_model()?;
        let generator = LabelGenerator::from_json(&self.read(GENERATOR_FILE, "train-generator")?)?;
        generator.annotate(&mut corpus, &model, &vocab, cfg.top_m, cfg.threshold)?;
        self.write(GENERATED_FILE, &generated_labels_tsv(&corpus))?;
        Ok(corpus)
    }

    /// The corpus with its generated labels attached.
    pub fn annotated_corpus(&self) -> Result<Corpus> {
        let mut corpus = self.corpus()?;
        apply_generated_labels_tsv(&mut corpus, &self.read(GENERATED_FILE, "generate")?)?;
        Ok(corpus)
    }

    pub fn index(&self) -> Result<Vec<PathBuf>> {
        let corpus = self.corpus()?;
        INDEXED_FIELDS
            .iter()
            .map(|&f| self.write(&index_file(f), &build_index(&corpus.datasets, f).to_text()))
            .collect()
    }

    pub fn field_index(&self, field: Field) -> Result<FieldIndex> {
        FieldIndex::from_text(&self.read(&index_file(field), "index")?)
    }

    /// Assemble a ranker from the persisted indexes and generated labels.
    /// Generated labels are only required when the label field is enabled.
    pub fn ranker<'a>(&self, cfg: &PipelineConfig, ranker_cfg: &RankerConfig, store: Option<&'a EmbeddingStore>) -> Result<Ranker<'a>> {
        let text = self.field_index(Field::Text)?;
        let data = self.field_index(Field::Data)?;
        let ids = text.ids().to_vec();
        let label_docs = if ranker_cfg.is_enabled(MixField::Labels) {
            let corpus = self.annotated_corpus()?;
            corpus
                .datasets
                .iter()
                .map(|d| label_document(d, cfg.include_original_labels_in_wmd))
                .collect()
        } else {
            vec![Vec::new(); ids.len()]
        };
        Ok(Ranker::from_parts(ids, Some(text), Some(data), label_docs, store))
    }

    /// The ranker settings in effect: the tuned file if present, else the
    /// pipeline configuration.
    pub fn ranker_config(&self, cfg: &PipelineConfig, path: Option<&Path>) -> Result<RankerConfig> {
        match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                RankerConfig::from_kv(&text)
            }
            None => Ok(cfg.ranker.clone()),
        }
    }

    pub fn search(
        &self,
        cfg: &PipelineConfig,
        ranker_cfg: &RankerConfig,
        store: Option<&EmbeddingStore>,
        query: &str,
        k: usize,
    ) -> Result<RankedList> {
        let ranker = self.ranker(cfg, ranker_cfg, store)?;
        let mut limited = ranker_cfg.clone();
        limited.depth = k;
        ranker.rank("query", query, &limited)
    }

    /// Tune the enabled field weights of the configured ranker and write the
    /// result to `ranker.conf`.
    pub fn tune(&self, cfg: &PipelineConfig, tasks: &TaskSet, qrels: &Qrels, store: Option<&EmbeddingStore>) -> Result<TuneResult> {
        let ranker = self.ranker(cfg, &cfg.ranker, store)?;
        let result = tune_weights(&ranker, tasks, qrels, &cfg.ranker, cfg.tune_metric)?;
        self.write(RANKER_FILE, &result.config.to_kv())?;
        Ok(result)
    }

    /// Rank a whole task set and write `runs/<tag>.run`.
    pub fn run(
        &self,
        cfg: &PipelineConfig,
        ranker_cfg: &RankerConfig,
        store: Option<&EmbeddingStore>,
        tasks: &TaskSet,
        tag: &str,
    ) -> Result<(PathBuf, RunFile)> {
        let ranker = self.ranker(cfg, ranker_cfg, store)?;
        let run = ranker.run_all(tasks, ranker_cfg, tag)?;
        let path = self.write(&format!("{RUNS_DIR}/{tag}.run"), &run.to_trec())?;
        Ok((path, run))
    }

    /// The eight pooling baselines, four scorers over two representations,
    /// and the pooled `(task, dataset)` pairs.
    pub fn pool(&self, tasks: &TaskSet, depth: usize) -> Result<BTreeSet<(String, String)>> {
        let scorers = [
            ("bm25", Scorer::default()),
            ("tfidf", Scorer::TfIdf),
            ("lmjm", Scorer::LmJm { lambda: 0.1 }),
            ("lmdir", Scorer::LmDirichlet { mu: 2000.0 }),
        ];
        let mut runs = Vec::new();
        for field in [Field::Text, Field::All] {
            let index = self.field_index(field)?;
            for (name, scorer) in scorers {
                let tag = format!("pool-{name}-{}", field.name());
                let run = single_field_run(&index, scorer, tasks, depth, &tag)?;
                self.write(&format!("{RUNS_DIR}/{tag}.run"), &run.to_trec())?;
                runs.push(run);
            }
        }
        let pool = pool_results(&runs, depth);
        self.write(POOL_FILE, &pool_to_tsv(&pool))?;
        Ok(pool)
    }

    /// Semantic features for every judged pair.
    pub fn features(&self, cfg: &PipelineConfig, store: &EmbeddingStore, tasks: &TaskSet, qrels: &Qrels) -> Result<String> {
        let corpus = self.annotated_corpus()?;
        let ranker = Ranker::new(&corpus, Some(store), cfg.include_original_labels_in_wmd);
        let rows = ranker.feature_rows(&corpus, tasks, qrels, cfg.include_original_labels_in_wmd)?;
        self.write(FEATURES_FILE, &rows)?;
        Ok(rows)
    }
}

/// Evaluate run files into a metric report. The run tag `METHOD_FIELDS`
/// supplies the first two columns.
pub fn evaluate_runs(runs: &[RunFile], qrels: &Qrels, opts: &EvalOptions) -> Result<String> {
    let tables = runs
        .iter()
        .map(|r| evaluate(r, qrels, opts))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<(String, String)> = runs
        .iter()
        .map(|r| match r.tag.split_once('_') {
            Some((m, f)) => (m.to_string(), f.to_string()),
            None => (r.tag.clone(), String::new()),
        })
        .collect();
    let rows: Vec<_> = names
        .iter()
        .zip(&tables)
        .map(|((m, f), t)| (m.as_str(), f.as_str(), t))
        .collect();
    Ok(report_tsv(&rows))
}

pub fn load_store(cfg: &PipelineConfig) -> Result<Option<EmbeddingStore>> {
    cfg.vectors.as_deref().map(EmbeddingStore::load).transpose()
}

pub fn load_tasks(cfg: &PipelineConfig) -> Result<TaskSet> {
    TaskSet::load(cfg.require(&cfg.queries, "queries")?, cfg.descriptions.as_deref())
}

pub fn load_qrels(cfg: &PipelineConfig) -> Result<Qrels> {
    Qrels::load(cfg.require(&cfg.qrels, "qrels")?)
}
