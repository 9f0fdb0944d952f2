//! On-disk artifacts of a run and their consistency checks.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::inference::SummaryRecord;
use crate::metrics::{MetricName, MetricRow, ReferenceType};
use crate::prompting::{KeyCount, PromptMethod, SentenceSelection};
use crate::stats::{BcaInterval, Stars, TestOutcome};

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const SEGMENTS_FILE: &str = "segments.json";
pub const SELECTIONS_FILE: &str = "selections.json";
pub const SUMMARIES_FILE: &str = "summaries.jsonl";
pub const RUN_LOG_FILE: &str = "run_log.jsonl";
pub const HOLES_FILE: &str = "holes.json";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const SIGNIFICANCE_FILE: &str = "significance.csv";
pub const LEVENE_FILE: &str = "levene.csv";
pub const SUMMARY_TABLE_FILE: &str = "summary_table.csv";
pub const HEATMAP_FILE: &str = "heatmap.csv";
pub const AUDIT_DIR: &str = "bootstrap_audit";

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl ToString) -> ExperimentError {
    ExperimentError::Parse {
        path: path.to_path_buf(),
        line,
        message: msg.to_string(),
    }
}

/// Writes pretty JSON atomically (temp file then rename).
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path, 0, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e))
}

/// Reads JSON lines; blank lines are skipped. A truncated final line (from
/// an interrupted append) is dropped with a warning.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ExperimentError> {
    let file = File::open(path).map_err(io_err(path))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err(path))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(e) if Some(i) == last && e.is_eof() => {
                log::warn!("{}: dropping truncated last line", path.display());
            }
            Err(e) => return Err(parse_err(path, i + 1, e)),
        }
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ExperimentError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|e| parse_err(path, 0, e))?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Appends JSON lines, flushing after each one. Opening cuts off a partial
/// last line left by an interrupted writer so new records start cleanly.
pub struct JsonlAppender {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlAppender {
    pub fn open(path: &Path) -> Result<Self, ExperimentError> {
        if let Ok(existing) = fs::read(path) {
            if existing.last().is_some_and(|&b| b != b'\n') {
                let keep = existing
                    .iter()
                    .rposition(|&b| b == b'\n')
                    .map_or(0, |i| i + 1);
                log::warn!("{}: dropping partial last line", path.display());
                let f = OpenOptions::new()
                    .write(true)
                    .open(path)
                    .map_err(io_err(path))?;
                f.set_len(keep as u64).map_err(io_err(path))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(JsonlAppender {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn append<T: Serialize>(&mut self, item: &T) -> Result<(), ExperimentError> {
        serde_json::to_writer(&mut self.out, item).map_err(|e| parse_err(&self.path, 0, e))?;
        self.out.write_all(b"\n").map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))
    }
}

/// One `significance.csv` row: a [`TestOutcome`] with the interval flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRecord {
    pub method: PromptMethod,
    pub metric: MetricName,
    pub reference_type: ReferenceType,
    pub n: usize,
    pub median_delta: f64,
    pub wilcoxon_stat: f64,
    pub wilcoxon_exact: bool,
    pub p_raw: f64,
    pub p_holm: f64,
    pub bca_lower: f64,
    pub bca_upper: f64,
    pub bca_level: f64,
    pub bca_replicates: usize,
    pub bca_seed: u64,
    pub bca_z0: f64,
    pub bca_accel: f64,
    pub bca_degenerate: bool,
    pub significant_wilcoxon: bool,
    pub significant_bca: bool,
    pub significant_combined: bool,
    pub stars: Stars,
    pub shapiro_w: Option<f64>,
    pub shapiro_p: Option<f64>,
    pub note: Option<String>,
}

impl From<&TestOutcome> for SignificanceRecord {
    fn from(o: &TestOutcome) -> Self {
        SignificanceRecord {
            method: o.method,
            metric: o.metric,
            reference_type: o.reference_type,
            n: o.n,
            median_delta: o.median_delta,
            wilcoxon_stat: o.wilcoxon_stat,
            wilcoxon_exact: o.wilcoxon_exact,
            p_raw: o.p_raw,
            p_holm: o.p_holm,
            bca_lower: o.bca.lower,
            bca_upper: o.bca.upper,
            bca_level: o.bca.level,
            bca_replicates: o.bca.b_replicates,
            bca_seed: o.bca.seed,
            bca_z0: o.bca.z0,
            bca_accel: o.bca.accel,
            bca_degenerate: o.bca.degenerate,
            significant_wilcoxon: o.significant_wilcoxon,
            significant_bca: o.significant_bca,
            significant_combined: o.significant_combined,
            stars: o.stars,
            shapiro_w: o.shapiro_w,
            shapiro_p: o.shapiro_p,
            note: o.note.clone(),
        }
    }
}

impl From<SignificanceRecord> for TestOutcome {
    fn from(r: SignificanceRecord) -> Self {
        TestOutcome {
            method: r.method,
            metric: r.metric,
            reference_type: r.reference_type,
            n: r.n,
            median_delta: r.median_delta,
            wilcoxon_stat: r.wilcoxon_stat,
            wilcoxon_exact: r.wilcoxon_exact,
            p_raw: r.p_raw,
            p_holm: r.p_holm,
            bca: BcaInterval {
                lower: r.bca_lower,
                upper: r.bca_upper,
                level: r.bca_level,
                b_replicates: r.bca_replicates,
                seed: r.bca_seed,
                z0: r.bca_z0,
                accel: r.bca_accel,
                degenerate: r.bca_degenerate,
            },
            significant_wilcoxon: r.significant_wilcoxon,
            significant_bca: r.significant_bca,
            significant_combined: r.significant_combined,
            stars: r.stars,
            shapiro_w: r.shapiro_w,
            shapiro_p: r.shapiro_p,
            note: r.note,
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| parse_err(path, 0, e))?;
    }
    let bytes = w.into_inner().map_err(|e| parse_err(path, 0, e))?;
    write_atomic(path, &bytes)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| parse_err(path, 0, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| rec.map_err(|e| parse_err(path, i + 2, e)))
        .collect()
}

pub fn write_significance(path: &Path, outcomes: &[TestOutcome]) -> Result<(), ExperimentError> {
    let records: Vec<SignificanceRecord> = outcomes.iter().map(SignificanceRecord::from).collect();
    write_csv(path, &records)
}

pub fn read_significance(path: &Path) -> Result<Vec<TestOutcome>, ExperimentError> {
    Ok(read_csv::<SignificanceRecord>(path)?
        .into_iter()
        .map(TestOutcome::from)
        .collect())
}

/// Everything a run has produced so far.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsStore {
    pub run_id: String,
    pub summaries: Vec<SummaryRecord>,
    pub rows: Vec<MetricRow>,
    pub selections: Vec<SentenceSelection>,
    pub outcomes: Vec<TestOutcome>,
}

impl ResultsStore {
    /// Loads whichever artifacts exist in `run_dir`.
    pub fn load(run_dir: &Path, run_id: &str) -> Result<Self, ExperimentError> {
        let opt = |name: &str| {
            let p = run_dir.join(name);
            p.is_file().then_some(p)
        };
        Ok(ResultsStore {
            run_id: run_id.to_string(),
            summaries: opt(SUMMARIES_FILE)
                .map(|p| read_jsonl(&p))
                .transpose()?
                .unwrap_or_default(),
            rows: opt(RESULTS_FILE)
                .map(|p| read_jsonl(&p))
                .transpose()?
                .unwrap_or_default(),
            selections: opt(SELECTIONS_FILE)
                .map(|p| read_json(&p))
                .transpose()?
                .unwrap_or_default(),
            outcomes: opt(SIGNIFICANCE_FILE)
                .map(|p| read_significance(&p))
                .transpose()?
                .unwrap_or_default(),
        })
    }

    /// Expected row count for the stored summaries: six per summary against
    /// the abstract plus six per summary qualifying for each active key
    /// reference (baseline at every K, CR and RA at their own K).
    pub fn expected_rows(&self, key_refs: &[KeyCount]) -> usize {
        let mut total = 0;
        for s in &self.summaries {
            total += 6;
            for &k in key_refs {
                let qualifies = match s.method {
                    PromptMethod::Baseline => true,
                    PromptMethod::Cr(mk) | PromptMethod::Ra(mk) => mk == k,
                    _ => false,
                };
                if qualifies {
                    total += 6;
                }
            }
        }
        total
    }

    /// Checks row uniqueness, row-to-summary references, score ranges and
    /// the count arithmetic.
    pub fn validate(&self, key_refs: &[KeyCount]) -> Result<(), ExperimentError> {
        let fail = |m: String| Err(ExperimentError::Inconsistent(m));
        let mut summary_keys = HashSet::new();
        for s in &self.summaries {
            if !summary_keys.insert(s.key()) {
                return fail(format!(
                    "duplicate summary {} / {} / {}",
                    s.paper_id, s.llm_id, s.method
                ));
            }
        }
        let mut seen = HashSet::new();
        for r in &self.rows {
            if !seen.insert(r.key()) {
                return fail(format!(
                    "duplicate row {} / {} / {} / {} / {}",
                    r.paper_id, r.llm_id, r.method, r.reference_type, r.metric
                ));
            }
            if !summary_keys.contains(&(r.paper_id.clone(), r.llm_id.clone(), r.method)) {
                return fail(format!(
                    "row for {} / {} / {} has no summary",
                    r.paper_id, r.llm_id, r.method
                ));
            }
            if !r.in_range() {
                return fail(format!("{} score {} out of range", r.metric, r.score));
            }
        }
        let expected = self.expected_rows(key_refs);
        if self.rows.len() != expected {
            return fail(format!(
                "{} metric rows for {} summaries, expected {expected}",
                self.rows.len(),
                self.summaries.len()
            ));
        }
        Ok(())
    }

    /// Row counts per (method, reference) cell.
    pub fn cell_counts(&self) -> BTreeMap<(ReferenceType, PromptMethod), usize> {
        let mut m = BTreeMap::new();
        for r in &self.rows {
            *m.entry((r.reference_type, r.method)).or_insert(0) += 1;
        }
        m
    }
}
