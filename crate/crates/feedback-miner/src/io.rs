//! JSONL corpora, vocabulary files, prediction inputs and tuning history.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use feedback_miner_core::corpus::CorpusError;
use feedback_miner_core::hyperopt::Trial;
use feedback_miner_core::tokenizer::TokenizerError;
use feedback_miner_core::{Corpus, Label, UserComment, Vocabulary};
use serde::Deserialize;

/// Language tag used when neither the caller nor the file names one.
pub const UNDETERMINED_LANGUAGE: &str = "und";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn summarize(errors: &[LineError]) -> String {
    const SHOWN: usize = 10;
    let mut s = errors
        .iter()
        .take(SHOWN)
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ");
    if errors.len() > SHOWN {
        s.push_str(&format!("; and {} more", errors.len() - SHOWN));
    }
    s
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {} malformed line(s): {}", errors.len(), summarize(errors))]
    Schema {
        path: PathBuf,
        errors: Vec<LineError>,
    },
    #[error("{path}: {source}")]
    Corpus {
        path: PathBuf,
        #[source]
        source: CorpusError,
    },
    #[error("{path}: {source}")]
    Vocab {
        path: PathBuf,
        #[source]
        source: TokenizerError,
    },
}

impl DataError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Line-level diagnostics, when the error carries any.
    pub fn line_errors(&self) -> &[LineError] {
        match self {
            DataError::Schema { errors, .. } => errors,
            _ => &[],
        }
    }
}

#[derive(Deserialize)]
struct CommentRecord {
    id: String,
    text: String,
    label: String,
    #[serde(default)]
    language: Option<String>,
}

fn parse_record(line: &str, default_language: Option<&str>) -> Result<UserComment, String> {
    let r: CommentRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let gold: Label = r.label.parse().map_err(|e: CorpusError| e.to_string())?;
    if r.text.trim().is_empty() {
        return Err(format!("comment {:?} has empty text", r.id));
    }
    let language = r
        .language
        .or_else(|| default_language.map(str::to_owned))
        .unwrap_or_else(|| UNDETERMINED_LANGUAGE.to_owned());
    Ok(UserComment::new(r.id, r.text, language, gold))
}

/// Parse a corpus from JSONL. Every malformed line is collected before
/// failing, so one pass reports all of them. Blank lines are skipped.
///
/// Records without a `language` key take `language`; when that is `None` the
/// corpus language comes from the first record.
pub fn parse_corpus(
    name: &str,
    language: Option<&str>,
    reader: impl Read,
    path: &Path,
) -> Result<Corpus, DataError> {
    let mut comments = Vec::new();
    let mut errors = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        match parse_record(&line, language) {
            Ok(c) => {
                if let Some(first) = seen.insert(c.id.clone(), n) {
                    errors.push(LineError {
                        line: n,
                        message: format!("duplicate id {:?} (first seen on line {first})", c.id),
                    });
                } else {
                    comments.push(c);
                }
            }
            Err(message) => errors.push(LineError { line: n, message }),
        }
    }
    if !errors.is_empty() {
        return Err(DataError::Schema {
            path: path.to_path_buf(),
            errors,
        });
    }
    let language = language
        .map(str::to_owned)
        .or_else(|| comments.first().map(|c| c.language.clone()))
        .unwrap_or_else(|| UNDETERMINED_LANGUAGE.to_owned());
    Corpus::new(name, language, comments).map_err(|source| DataError::Corpus {
        path: path.to_path_buf(),
        source,
    })
}

pub fn corpus_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into())
}

pub fn load_corpus(path: &Path, language: Option<&str>) -> Result<Corpus, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    parse_corpus(&corpus_name(path), language, file, path)
}

/// One token per line; the line index is the token id.
pub fn load_vocab(path: &Path) -> Result<Vocabulary, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_vocab(&text).map_err(|source| DataError::Vocab {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_vocab(text: &str) -> Result<Vocabulary, TokenizerError> {
    Vocabulary::from_tokens(text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)))
}

pub fn vocab_to_string(vocab: &Vocabulary) -> String {
    let mut s = String::new();
    for t in vocab.tokens() {
        s.push_str(t);
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct PredictInput {
    pub id: String,
    pub text: String,
}

/// Well-formed records with their line numbers, and the malformed lines.
pub type PredictLines = (Vec<(usize, PredictInput)>, Vec<LineError>);

/// Parse prediction input lines; bad lines are returned separately so the
/// caller can keep going.
pub fn parse_predict_input(reader: impl Read, path: &Path) -> Result<PredictLines, DataError> {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PredictInput>(&line) {
            Ok(r) => ok.push((i + 1, r)),
            Err(e) => bad.push(LineError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok((ok, bad))
}

/// Read a tuning history. A missing file is an empty history.
pub fn read_history(path: &Path) -> Result<Vec<Trial>, DataError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(DataError::io(path, e)),
    };
    let mut trials = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Trial>(line) {
            Ok(t) if t.lr > 0.0 && t.lr.is_finite() => trials.push(t),
            Ok(t) => errors.push(LineError {
                line: i + 1,
                message: format!("learning rate {} is not positive", t.lr),
            }),
            Err(e) => errors.push(LineError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    if errors.is_empty() {
        Ok(trials)
    } else {
        Err(DataError::Schema {
            path: path.to_path_buf(),
            errors,
        })
    }
}

pub fn append_history(path: &Path, trial: &Trial) -> Result<(), DataError> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| DataError::io(path, e))?;
    let line = serde_json::to_string(trial).expect("trial serializes");
    writeln!(f, "{line}").map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Corpus, DataError> {
        parse_corpus("t", Some("en"), text.as_bytes(), Path::new("t.jsonl"))
    }

    #[test]
    fn loads_the_irrelevant_example() {
        let c =
            parse(r#"{"id":"r1","text":"I really love the app","label":"irrelevant"}"#).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.comments()[0].gold, Label::Irrelevant);
        assert_eq!(c.comments()[0].language, "en");
    }

    #[test]
    fn empty_input_is_an_empty_corpus() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("\n\n").unwrap().is_empty());
    }

    #[test]
    fn every_bad_line_is_reported() {
        let text = concat!(
            r#"{"id":"a","text":"ok","label":"irrelevant"}"#,
            "\n",
            r#"{"id":"b","text":"nice","label":"praise"}"#,
            "\n",
            "not json\n",
            r#"{"id":"c","text":"  ","label":"feature_request"}"#,
            "\n",
            r#"{"id":"a","text":"again","label":"problem_report"}"#,
            "\n",
        );
        let err = parse(text).unwrap_err();
        let lines: Vec<usize> = err.line_errors().iter().map(|e| e.line).collect();
        assert_eq!(lines, [2, 3, 4, 5]);
        assert!(err.to_string().contains("praise"));
    }

    #[test]
    fn language_mismatch_is_a_corpus_error() {
        let err =
            parse(r#"{"id":"a","text":"ciao","label":"irrelevant","language":"it"}"#).unwrap_err();
        assert!(matches!(err, DataError::Corpus { .. }));
        let c = parse_corpus(
            "t",
            None,
            r#"{"id":"a","text":"ciao","label":"irrelevant","language":"it"}"#.as_bytes(),
            Path::new("t"),
        )
        .unwrap();
        assert_eq!(c.language(), "it");
    }

    #[test]
    fn vocab_round_trip() {
        let v = parse_vocab("[PAD]\n[UNK]\n[CLS]\n[SEP]\nhello\n##s\n").unwrap();
        assert_eq!(v.id("hello"), Some(4));
        assert_eq!(parse_vocab(&vocab_to_string(&v)).unwrap(), v);
        assert!(parse_vocab("[PAD]\n[UNK]\n[CLS]\n[SEP]\nx\nx\n").is_err());
    }

    #[test]
    fn history_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        assert!(read_history(&path).unwrap().is_empty());
        let t = Trial::new(1e-5, vec![0.5, 0.7], 3);
        append_history(&path, &t).unwrap();
        append_history(&path, &t).unwrap();
        assert_eq!(read_history(&path).unwrap(), vec![t.clone(), t]);
        fs::write(&path, "{\"lr\": 1e-5}\n").unwrap();
        assert!(matches!(read_history(&path), Err(DataError::Schema { .. })));
    }
}
