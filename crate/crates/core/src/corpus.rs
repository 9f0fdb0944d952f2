//! Abstract corpus loading, sentence segmentation and word/token accounting.
//!
//! A corpus is a directory of UTF-8 text files, one per abstract. Without a
//! manifest every `<id>.txt` file is read as a title line, a blank line and
//! the abstract body. With a `manifest.json` the listed files are read whole
//! as bodies and titles come from the manifest.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Raw abbreviation table; see `data/abbreviations.txt` for the format.
pub const ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus directory {0} does not exist or is not a directory")]
    MissingDir(PathBuf),
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: abstract body is empty")]
    EmptyBody { path: PathBuf },
    #[error("{path}: duplicate abstract id {id:?}")]
    DuplicateId { id: String, path: PathBuf },
    #[error("{path}: id {id:?} is not filesystem-safe (use letters, digits, '.', '_' or '-')")]
    InvalidId { id: String, path: PathBuf },
    #[error("{path}: malformed manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("cannot segment empty text")]
    EmptyText,
}

/// One source abstract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractDoc {
    pub id: String,
    pub title: String,
    pub text: String,
    pub word_count: usize,
}

impl AbstractDoc {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let word_count = count_words(&text);
        AbstractDoc {
            id: id.into(),
            title: title.into(),
            text,
            word_count,
        }
    }

    pub fn estimated_tokens(&self) -> usize {
        estimate_tokens(self.word_count)
    }
}

/// A sentence with character offsets into its source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// Inclusive start, in chars.
    pub start: usize,
    /// Exclusive end, in chars.
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSplit {
    pub source_id: String,
    pub sentences: Vec<Sentence>,
}

impl SentenceSplit {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn texts(&self) -> Vec<String> {
        self.sentences.iter().map(|s| s.text.clone()).collect()
    }

    /// Joins the sentences at `indices` (in the order given) with single spaces.
    pub fn join(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .map(|&i| self.sentences[i].text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Number of maximal non-whitespace runs.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Token estimate under the 1 token ≈ 0.75 words rule: `ceil(words / 0.75)`.
pub fn estimate_tokens(word_count: usize) -> usize {
    // words / 0.75 == 4 * words / 3, kept in integers to avoid float ceil drift.
    (4 * word_count).div_ceil(3)
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    title: String,
    file: String,
}

/// Loads every abstract in `dir`, sorted by id.
pub fn load_corpus(dir: &Path) -> Result<Vec<AbstractDoc>, CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::MissingDir(dir.to_path_buf()));
    }
    let manifest = dir.join(MANIFEST_FILE);
    let docs = if manifest.is_file() {
        load_with_manifest(dir, &manifest)?
    } else {
        load_text_files(dir)?
    };
    if docs.is_empty() {
        log::warn!("corpus directory {} contains no abstracts", dir.display());
    }
    Ok(docs)
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Unreadable {
        path: path.to_path_buf(),
        source,
    })
}

fn load_text_files(dir: &Path) -> Result<Vec<AbstractDoc>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Unreadable {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Unreadable {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            paths.push(path);
        }
    }
    paths.sort();

    let mut docs = BTreeMap::new();
    for path in paths {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let raw = read(&path)?;
        let (title, body) = split_title(&raw);
        insert_doc(&mut docs, AbstractDoc::new(id, title, body), &path)?;
    }
    Ok(docs.into_values().collect())
}

fn load_with_manifest(dir: &Path, manifest: &Path) -> Result<Vec<AbstractDoc>, CorpusError> {
    let entries: Vec<ManifestEntry> =
        serde_json::from_str(&read(manifest)?).map_err(|source| CorpusError::Manifest {
            path: manifest.to_path_buf(),
            source,
        })?;
    let mut docs = BTreeMap::new();
    for entry in entries {
        let path = dir.join(&entry.file);
        let body = read(&path)?;
        insert_doc(
            &mut docs,
            AbstractDoc::new(entry.id, entry.title.trim(), body.trim()),
            &path,
        )?;
    }
    Ok(docs.into_values().collect())
}

fn insert_doc(
    docs: &mut BTreeMap<String, AbstractDoc>,
    doc: AbstractDoc,
    path: &Path,
) -> Result<(), CorpusError> {
    if !is_safe_id(&doc.id) {
        return Err(CorpusError::InvalidId {
            id: doc.id,
            path: path.to_path_buf(),
        });
    }
    if doc.text.trim().is_empty() {
        return Err(CorpusError::EmptyBody {
            path: path.to_path_buf(),
        });
    }
    if docs.contains_key(&doc.id) {
        return Err(CorpusError::DuplicateId {
            id: doc.id,
            path: path.to_path_buf(),
        });
    }
    docs.insert(doc.id.clone(), doc);
    Ok(())
}

fn is_safe_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

/// Line 1 is the title; everything after it (normally a blank line, then the
/// body) is the body, trimmed.
fn split_title(raw: &str) -> (String, String) {
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(raw);
    match raw.split_once('\n') {
        Some((title, rest)) => (title.trim().to_string(), rest.trim().to_string()),
        None => (raw.trim().to_string(), String::new()),
    }
}

fn abbreviations() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        ABBREVIATIONS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect()
    })
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

/// Splits `text` into sentences.
///
/// A boundary follows `.`, `!` or `?` (plus any trailing terminators or
/// closing quotes/brackets) when the next non-whitespace character is an
/// uppercase letter or a digit, optionally behind an opening quote or
/// bracket. A period never splits when the word it ends is a listed
/// abbreviation, or a single-capital initial ("S.") that is not itself the
/// whole sentence so far. Decimals such as "3.5" never split because no
/// whitespace follows the period.
pub fn segment_sentences(text: &str) -> Result<SentenceSplit, CorpusError> {
    let chars: Vec<char> = text.chars().collect();
    let Some(first) = chars.iter().position(|c| !c.is_whitespace()) else {
        return Err(CorpusError::EmptyText);
    };
    let slice = |a: usize, b: usize| chars[a..b].iter().collect::<String>();

    let mut sentences = Vec::new();
    let mut start = first;
    let mut i = first;
    while i < chars.len() {
        if !is_terminator(chars[i]) {
            i += 1;
            continue;
        }
        let mut end = i + 1;
        while end < chars.len() && (is_terminator(chars[end]) || is_closer(chars[end])) {
            end += 1;
        }
        if end >= chars.len() || !chars[end].is_whitespace() {
            i = end.max(i + 1);
            continue;
        }
        let mut next = end;
        while next < chars.len() && chars[next].is_whitespace() {
            next += 1;
        }
        let mut probe = next;
        if probe < chars.len() && is_opener(chars[probe]) {
            probe += 1;
        }
        let starts_sentence =
            probe < chars.len() && (chars[probe].is_uppercase() || chars[probe].is_ascii_digit());
        if starts_sentence && !(chars[i] == '.' && suppresses_split(&chars, start, i)) {
            sentences.push(Sentence {
                start,
                end,
                text: slice(start, end),
            });
            start = next;
        }
        i = next;
    }
    let last = chars
        .iter()
        .rposition(|c| !c.is_whitespace())
        .map_or(start, |p| p + 1);
    if start < last {
        sentences.push(Sentence {
            start,
            end: last,
            text: slice(start, last),
        });
    }
    Ok(SentenceSplit {
        source_id: String::new(),
        sentences,
    })
}

/// Segments a loaded document, tagging the split with its id.
pub fn segment_doc(doc: &AbstractDoc) -> Result<SentenceSplit, CorpusError> {
    let mut split = segment_sentences(&doc.text)?;
    split.source_id = doc.id.clone();
    Ok(split)
}

/// Whether the period at `dot` closes an abbreviation or an initial.
fn suppresses_split(chars: &[char], sentence_start: usize, dot: usize) -> bool {
    let mut word_start = dot;
    while word_start > sentence_start && !chars[word_start - 1].is_whitespace() {
        word_start -= 1;
    }
    let mut trimmed = word_start;
    while trimmed < dot && is_opener(chars[trimmed]) {
        trimmed += 1;
    }
    let word: String = chars[trimmed..=dot].iter().collect();
    if abbreviations().contains(&word.to_lowercase()) {
        return true;
    }
    let is_initial = dot - trimmed == 1 && chars[trimmed].is_uppercase();
    is_initial && word_start != sentence_start
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(text: &str) -> Vec<String> {
        segment_sentences(text).unwrap().texts()
    }

    #[test]
    fn three_terminators() {
        assert_eq!(texts("A. B? C!"), vec!["A.", "B?", "C!"]);
    }

    #[test]
    fn no_terminator_is_one_sentence() {
        assert_eq!(
            texts("Single sentence without terminator"),
            vec!["Single sentence without terminator"]
        );
    }

    #[test]
    fn species_initial_does_not_split() {
        assert_eq!(
            texts("We used S. cerevisiae. It grew."),
            vec!["We used S. cerevisiae.", "It grew."]
        );
    }

    #[test]
    fn initial_before_surname_does_not_split() {
        assert_eq!(
            texts("Work by J. Smith showed this. Then more."),
            vec!["Work by J. Smith showed this.", "Then more."]
        );
    }

    #[test]
    fn abbreviations_and_decimals() {
        assert_eq!(
            texts("Growth rose 3.5 fold (Fig. 2). Smith et al. Reported it, e.g. Here. Done."),
            vec![
                "Growth rose 3.5 fold (Fig. 2).",
                "Smith et al. Reported it, e.g. Here.",
                "Done."
            ]
        );
    }

    #[test]
    fn digits_start_sentences_and_quotes_close_them() {
        assert_eq!(
            texts("He said \"stop.\" 42 cells died. (Then) it ended."),
            vec!["He said \"stop.\"", "42 cells died.", "(Then) it ended."]
        );
        assert_eq!(
            texts("It ended. (then) more."),
            vec!["It ended. (then) more."]
        );
    }

    #[test]
    fn offsets_are_char_based() {
        let text = "Über alles. Ça va.";
        let split = segment_sentences(text).unwrap();
        let chars: Vec<char> = text.chars().collect();
        for s in &split.sentences {
            assert_eq!(chars[s.start..s.end].iter().collect::<String>(), s.text);
        }
        assert_eq!(split.sentences[1].start, 12);
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(matches!(segment_sentences(""), Err(CorpusError::EmptyText)));
        assert!(matches!(
            segment_sentences(" \n\t"),
            Err(CorpusError::EmptyText)
        ));
    }

    #[test]
    fn token_estimates() {
        assert_eq!(estimate_tokens(228), 304);
        assert_eq!(estimate_tokens(0), 0);
        assert_eq!(estimate_tokens(3), 4);
        assert_eq!(estimate_tokens(1), 2);
    }

    #[test]
    fn word_count_counts_runs() {
        assert_eq!(count_words("  a  b\tc\n"), 3);
        assert_eq!(count_words("well-known x"), 2);
    }

    #[test]
    fn title_split() {
        let (t, b) = split_title("Title here\n\nBody one.\nBody two.\n");
        assert_eq!(t, "Title here");
        assert_eq!(b, "Body one.\nBody two.");
    }
}
