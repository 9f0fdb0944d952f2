//! Grid orchestration: corpus × endpoints × methods, staged and resumable.
//!
//! Every stage reads its inputs from the run directory
//! (`output_dir/run_id`) and the config, and writes its own artifacts:
//!
//! | stage    | writes |
//! |----------|--------|
//! | segment  | `segments.json`, `run_manifest.json` |
//! | select   | `selections.json` |
//! | generate | `summaries.jsonl`, `run_log.jsonl`, `holes.json` |
//! | evaluate | `results.jsonl` |
//! | analyze  | `significance.csv`, `levene.csv`, `bootstrap_audit/` |
//! | report   | `summary_table.csv`, `heatmap.csv` |
//!
//! Baseline summaries are generated once and scored against the abstract
//! and every active key-sentence reference.

pub mod config;
pub mod store;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{parse_override, RunConfig};
pub use store::ResultsStore;

use crate::corpus::{load_corpus, segment_doc, AbstractDoc, CorpusError, SentenceSplit};
use crate::embeddings::{EmbeddingBackend, EmbeddingError};
use crate::inference::{
    generate_with_log, mock_generate, InferenceError, LlmEndpoint, SummaryRecord,
};
use crate::metrics::{evaluate_summary, MetricError, MetricName, MetricRow, ReferenceType};
use crate::prompting::{
    build_prompt, select_for_paper, PromptError, PromptMethod, SentenceSelection,
};
use crate::seed::sha256_hex;
use crate::stats::{descriptive_stats, run_significance_full, Stars, StatsError, TestOutcome};
use store::*;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{} is missing; run the {stage} stage first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("corpus {} has no abstracts", .0.display())]
    EmptyCorpus(PathBuf),
    #[error("summary refers to unknown paper {0:?}")]
    UnknownPaper(String),
    #[error("store is inconsistent: {0}")]
    Inconsistent(String),
    #[error("nothing to report: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// A generation that failed; the grid keeps a hole at its key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub paper_id: String,
    pub llm_id: String,
    pub method: PromptMethod,
    pub error_kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestPaper {
    id: String,
    title: String,
    sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunManifest {
    run_id: String,
    tool_version: String,
    global_seed: u64,
    mock_mode: bool,
    methods: Vec<PromptMethod>,
    endpoints: Vec<String>,
    key_references: Vec<ReferenceType>,
    baseline_generation: String,
    papers: Vec<ManifestPaper>,
    config: RunConfig,
}

#[derive(Debug, Clone, Serialize)]
struct SegmentRecord<'a> {
    paper_id: &'a str,
    title: &'a str,
    sentences: &'a [crate::corpus::Sentence],
}

/// One `heatmap.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub method: PromptMethod,
    pub metric: MetricName,
    pub reference_type: ReferenceType,
    pub median_delta: f64,
    pub stars: Stars,
    pub significant_combined: bool,
    pub p_holm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerateReport {
    pub generated: usize,
    pub reused: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AnalyzeReport {
    pub cells: usize,
    pub significant: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReportSummary {
    pub table_rows: usize,
    pub heatmap_cells: usize,
}

/// A validated config bound to its run directory.
pub struct Pipeline {
    config: RunConfig,
    run_dir: PathBuf,
    run_id: String,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, ExperimentError> {
        config.validate()?;
        let run_id = config.run_id();
        let run_dir = config.run_dir();
        fs::create_dir_all(&run_dir).map_err(store::io_err(&run_dir))?;
        Ok(Pipeline {
            config,
            run_dir,
            run_id,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    fn require(&self, name: &str, stage: &'static str) -> Result<PathBuf, ExperimentError> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(ExperimentError::MissingArtifact { path: p, stage })
        }
    }

    /// Loads the corpus; an empty corpus aborts the run.
    pub fn corpus(&self) -> Result<Vec<AbstractDoc>, ExperimentError> {
        let docs = load_corpus(&self.config.corpus_dir)?;
        if docs.is_empty() {
            return Err(ExperimentError::EmptyCorpus(self.config.corpus_dir.clone()));
        }
        Ok(docs)
    }

    fn splits(docs: &[AbstractDoc]) -> Result<Vec<SentenceSplit>, ExperimentError> {
        docs.iter()
            .map(|d| segment_doc(d).map_err(ExperimentError::from))
            .collect()
    }

    fn write_manifest(&self, docs: &[AbstractDoc]) -> Result<(), ExperimentError> {
        let manifest = RunManifest {
            run_id: self.run_id.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            global_seed: self.config.global_seed,
            mock_mode: self.config.mock_mode,
            methods: self.config.effective_methods(),
            endpoints: self
                .config
                .effective_endpoints()
                .into_iter()
                .map(|e| e.llm_id)
                .collect(),
            key_references: self
                .config
                .active_key_refs()
                .into_iter()
                .map(ReferenceType::KeySentences)
                .collect(),
            baseline_generation: "once per (paper, llm); reused for every reference".into(),
            papers: docs
                .iter()
                .map(|d| ManifestPaper {
                    id: d.id.clone(),
                    title: d.title.clone(),
                    sha256: sha256_hex(&d.text),
                })
                .collect(),
            config: self.config.clone(),
        };
        write_json(&self.path(MANIFEST_FILE), &manifest)
    }

    /// Segments every abstract; returns the number of papers and sentences.
    pub fn segment(&self) -> Result<(usize, usize), ExperimentError> {
        let docs = self.corpus()?;
        let splits = Self::splits(&docs)?;
        let records: Vec<SegmentRecord> = docs
            .iter()
            .zip(&splits)
            .map(|(d, s)| SegmentRecord {
                paper_id: &d.id,
                title: &d.title,
                sentences: &s.sentences,
            })
            .collect();
        write_json(&self.path(SEGMENTS_FILE), &records)?;
        self.write_manifest(&docs)?;
        Ok((docs.len(), splits.iter().map(SentenceSplit::len).sum()))
    }

    /// Key (and, where RA methods need them, random) sentences for every
    /// paper at each K in `ks` (default: the config's `k_values`). Merges
    /// into an existing `selections.json`.
    pub fn select(&self, ks: Option<&[usize]>) -> Result<Vec<SentenceSelection>, ExperimentError> {
        let ks: Vec<usize> = ks
            .map(<[usize]>::to_vec)
            .unwrap_or_else(|| self.config.k_values.clone());
        for &k in &ks {
            if crate::prompting::KeyCount::new(k).is_none() {
                return Err(ExperimentError::Config(format!("k = {k} is not 1 or 2")));
            }
        }
        let docs = self.corpus()?;
        let splits = Self::splits(&docs)?;
        let embedder = EmbeddingBackend::new(self.config.backends.sentence.clone())?;
        let methods = self.config.effective_methods();
        let mut fresh = Vec::new();
        for split in &splits {
            for &k in &ks {
                let with_random = methods
                    .iter()
                    .any(|m| matches!(m, PromptMethod::Ra(mk) if mk.get() == k));
                fresh.push(select_for_paper(
                    split,
                    k,
                    &embedder,
                    self.config.global_seed,
                    with_random,
                )?);
            }
        }
        let path = self.path(SELECTIONS_FILE);
        let mut merged: BTreeMap<(String, usize), SentenceSelection> = BTreeMap::new();
        if path.is_file() {
            for s in read_json::<Vec<SentenceSelection>>(&path)? {
                merged.insert((s.source_id.clone(), s.k), s);
            }
        }
        for s in &fresh {
            merged.insert((s.source_id.clone(), s.k), s.clone());
        }
        let all: Vec<SentenceSelection> = merged.into_values().collect();
        write_json(&path, &all)?;
        Ok(fresh)
    }

    fn load_selections(&self, needed: bool) -> Result<Vec<SentenceSelection>, ExperimentError> {
        if !needed {
            let p = self.path(SELECTIONS_FILE);
            return if p.is_file() {
                read_json(&p)
            } else {
                Ok(Vec::new())
            };
        }
        read_json(&self.require(SELECTIONS_FILE, "select")?)
    }

    fn load_summaries(&self) -> Result<Vec<SummaryRecord>, ExperimentError> {
        let p = self.path(SUMMARIES_FILE);
        if p.is_file() {
            read_jsonl(&p)
        } else {
            Ok(Vec::new())
        }
    }

    /// Generates every missing (paper, llm, method) summary. Existing
    /// records are kept, so an interrupted run resumes where it stopped.
    pub fn generate(&self) -> Result<GenerateReport, ExperimentError> {
        let docs = self.corpus()?;
        let methods = self.config.effective_methods();
        let endpoints = self.config.effective_endpoints();
        let selections = self.load_selections(methods.iter().any(|m| m.needs_selection()))?;
        let sel_map: HashMap<(&str, usize), &SentenceSelection> = selections
            .iter()
            .map(|s| ((s.source_id.as_str(), s.k), s))
            .collect();

        let existing = self.load_summaries()?;
        let done: HashSet<(String, String, PromptMethod)> =
            existing.iter().map(SummaryRecord::key).collect();

        let mut tasks = Vec::new();
        for doc in &docs {
            for ep in &endpoints {
                for &method in &methods {
                    if done.contains(&(doc.id.clone(), ep.llm_id.clone(), method)) {
                        continue;
                    }
                    let selection =
                        match method.k() {
                            Some(k) => Some(*sel_map.get(&(doc.id.as_str(), k.get())).ok_or_else(
                                || ExperimentError::MissingArtifact {
                                    path: self.path(SELECTIONS_FILE),
                                    stage: "select",
                                },
                            )?),
                            None => None,
                        };
                    tasks.push((build_prompt(method, doc, selection)?, ep));
                }
            }
        }

        let reused = done.len();
        let summaries_out = Mutex::new(JsonlAppender::open(&self.path(SUMMARIES_FILE))?);
        let log_out = Mutex::new(JsonlAppender::open(&self.path(RUN_LOG_FILE))?);
        let holes = Mutex::new(Vec::new());
        let write_error = Mutex::new(None);
        let next = AtomicUsize::new(0);
        let workers = self.config.concurrency.min(tasks.len()).max(1);
        let mock = self.config.mock_mode;
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some((prompt, ep)) = tasks.get(i) else {
                        break;
                    };
                    let result = if mock {
                        Ok(mock_generate(
                            prompt,
                            ep.mock_sentences.unwrap_or(3),
                            &ep.llm_id,
                        ))
                    } else {
                        run_endpoint(ep, prompt, &log_out)
                    };
                    match result {
                        Ok(rec) => {
                            if let Err(e) = summaries_out.lock().unwrap().append(&rec) {
                                write_error.lock().unwrap().get_or_insert(e);
                                break;
                            }
                        }
                        Err(e) => {
                            log::error!(
                                "{} / {} / {}: {e}",
                                prompt.source_id,
                                ep.llm_id,
                                prompt.method
                            );
                            holes.lock().unwrap().push(Hole {
                                paper_id: prompt.source_id.clone(),
                                llm_id: ep.llm_id.clone(),
                                method: prompt.method,
                                error_kind: e.kind().to_string(),
                                message: e.to_string(),
                            });
                        }
                    }
                });
            }
        });
        if let Some(e) = write_error.into_inner().unwrap() {
            return Err(e);
        }
        drop(summaries_out);

        // Canonical order so the file does not depend on completion order.
        let mut all = self.load_summaries()?;
        all.sort_by(|a, b| summary_order(a).cmp(&summary_order(b)));
        all.dedup_by(|a, b| a.key() == b.key());
        write_jsonl(&self.path(SUMMARIES_FILE), &all)?;

        let mut holes = holes.into_inner().unwrap();
        holes.sort_by(|a, b| {
            (&a.paper_id, &a.llm_id, a.method).cmp(&(&b.paper_id, &b.llm_id, b.method))
        });
        let holes_path = self.path(HOLES_FILE);
        if holes.is_empty() {
            if holes_path.exists() {
                fs::remove_file(&holes_path).map_err(store::io_err(&holes_path))?;
            }
        } else {
            write_json(&holes_path, &holes)?;
        }
        Ok(GenerateReport {
            generated: tasks.len() - holes.len(),
            reused,
            failed: holes.len(),
        })
    }

    /// Scores every stored summary; rewrites `results.jsonl` in key order.
    pub fn evaluate(&self) -> Result<Vec<MetricRow>, ExperimentError> {
        let docs = self.corpus()?;
        let by_id: HashMap<&str, &AbstractDoc> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
        let summaries: Vec<SummaryRecord> = read_jsonl(&self.require(SUMMARIES_FILE, "generate")?)?;
        let key_refs = self.config.active_key_refs();
        let selections = self.load_selections(!key_refs.is_empty())?;
        let sentences = EmbeddingBackend::new(self.config.backends.sentence.clone())?;
        let tokens = EmbeddingBackend::new(self.config.backends.token.clone())?;
        let settings = self.config.metrics;
        let per_summary: Vec<Vec<MetricRow>> = summaries
            .par_iter()
            .map(|rec| {
                let doc = by_id
                    .get(rec.paper_id.as_str())
                    .ok_or_else(|| ExperimentError::UnknownPaper(rec.paper_id.clone()))?;
                let sels: Vec<&SentenceSelection> = selections
                    .iter()
                    .filter(|s| s.source_id == rec.paper_id)
                    .collect();
                Ok(evaluate_summary(
                    rec,
                    doc,
                    &sels,
                    &key_refs,
                    &sentences,
                    &tokens,
                    &settings,
                    &self.run_id,
                )?)
            })
            .collect::<Result<_, ExperimentError>>()?;
        let mut rows: Vec<MetricRow> = per_summary.into_iter().flatten().collect();
        rows.sort_by(|a, b| a.key().cmp(&b.key()));
        let store = ResultsStore {
            run_id: self.run_id.clone(),
            summaries,
            rows,
            ..Default::default()
        };
        store.validate(&key_refs)?;
        write_jsonl(&self.path(RESULTS_FILE), &store.rows)?;
        Ok(store.rows)
    }

    fn load_rows(&self) -> Result<Vec<MetricRow>, ExperimentError> {
        let rows: Vec<MetricRow> = read_jsonl(&self.require(RESULTS_FILE, "evaluate")?)?;
        if rows.is_empty() {
            return Err(ExperimentError::Empty("results.jsonl has no rows"));
        }
        Ok(rows)
    }

    /// Paired tests for every comparison cell.
    pub fn analyze(&self) -> Result<Vec<TestOutcome>, ExperimentError> {
        let rows = self.load_rows()?;
        let run = run_significance_full(
            &rows,
            &self.config.significance(),
            self.config.analysis.bootstrap_audit,
        )?;
        write_significance(&self.path(SIGNIFICANCE_FILE), &run.outcomes)?;
        write_csv(&self.path(LEVENE_FILE), &run.levene)?;
        if !run.audits.is_empty() {
            let dir = self.path(AUDIT_DIR);
            fs::create_dir_all(&dir).map_err(store::io_err(&dir))?;
            for a in &run.audits {
                write_json(&dir.join(format!("{}.json", a.cell)), a)?;
            }
        }
        Ok(run.outcomes)
    }

    /// Descriptive table and heatmap data.
    pub fn report(&self) -> Result<ReportSummary, ExperimentError> {
        let rows = self.load_rows()?;
        let table = descriptive_stats(&rows);
        write_csv(&self.path(SUMMARY_TABLE_FILE), &table)?;
        let outcomes = read_significance(&self.require(SIGNIFICANCE_FILE, "analyze")?)?;
        let heatmap = heatmap_rows(&outcomes);
        write_csv(&self.path(HEATMAP_FILE), &heatmap)?;
        Ok(ReportSummary {
            table_rows: table.len(),
            heatmap_cells: heatmap.len(),
        })
    }

    /// All stages in order.
    pub fn run_all(&self) -> Result<ResultsStore, ExperimentError> {
        self.segment()?;
        self.select(None)?;
        let g = self.generate()?;
        if g.failed > 0 {
            log::warn!("{} generations failed; see {HOLES_FILE}", g.failed);
        }
        self.evaluate()?;
        self.analyze()?;
        self.report()?;
        ResultsStore::load(&self.run_dir, &self.run_id)
    }
}

fn summary_order(s: &SummaryRecord) -> (&str, &str, PromptMethod) {
    (&s.paper_id, &s.llm_id, s.method)
}

fn run_endpoint(
    ep: &LlmEndpoint,
    prompt: &crate::prompting::PromptSpec,
    log_out: &Mutex<JsonlAppender>,
) -> Result<SummaryRecord, InferenceError> {
    generate_with_log(ep, prompt, &mut |entry| {
        if let Err(e) = log_out.lock().unwrap().append(&entry) {
            log::error!("run log: {e}");
        }
    })
}

pub fn heatmap_rows(outcomes: &[TestOutcome]) -> Vec<HeatmapRow> {
    outcomes
        .iter()
        .map(|o| HeatmapRow {
            method: o.method,
            metric: o.metric,
            reference_type: o.reference_type,
            median_delta: o.median_delta,
            stars: o.stars,
            significant_combined: o.significant_combined,
            p_holm: o.p_holm,
        })
        .collect()
}

/// Validates `config`, then runs every stage.
pub fn run_experiment(config: RunConfig) -> Result<ResultsStore, ExperimentError> {
    Pipeline::new(config)?.run_all()
}
