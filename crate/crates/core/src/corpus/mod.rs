//! Report ingestion: tokenization, line-delimited JSON corpora,
//! vocabularies, embedding files and seeded dataset splits.

mod embeddings;
mod vocab;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use embeddings::{load_embeddings, EmbeddingTable};
pub use vocab::{fingerprint, Vocab, BOS, EOS, PAD, UNK};

use crate::error::{Error, Result};

/// Lowercases, splits on whitespace and emits every non-alphanumeric
/// character as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if ch.is_alphanumeric() {
            current.push(ch);
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_string());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// One findings/impression pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub findings: Vec<String>,
    pub impression: Vec<String>,
    pub raw_findings: String,
    pub raw_impression: String,
}

impl Report {
    pub fn new(id: impl Into<String>, findings: &str, impression: &str) -> Self {
        Report {
            id: id.into(),
            findings: tokenize(findings),
            impression: tokenize(impression),
            raw_findings: findings.to_string(),
            raw_impression: impression.to_string(),
        }
    }

    /// Truncates both token sequences; returns true (and warns) if anything was cut.
    pub fn truncate(&mut self, max_findings: usize, max_impression: usize) -> bool {
        let cut = self.findings.len() > max_findings || self.impression.len() > max_impression;
        if cut {
            warn!(
                "report {}: truncating findings {}→{} / impression {}→{} tokens",
                self.id,
                self.findings.len(),
                self.findings.len().min(max_findings),
                self.impression.len(),
                self.impression.len().min(max_impression)
            );
            self.findings.truncate(max_findings);
            self.impression.truncate(max_impression);
        }
        cut
    }
}

fn string_field(
    obj: &serde_json::Map<String, serde_json::Value>,
    field: &'static str,
    path: &Path,
    line: usize,
) -> Result<String> {
    match obj.get(field) {
        None | Some(serde_json::Value::Null) => Err(Error::MissingField { field, line }),
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(Error::Format {
            path: path.to_path_buf(),
            line,
            msg: format!("field {field} must be a string, got {other}"),
        }),
    }
}

/// Reads a `.jsonl` corpus with string fields `id`, `findings`, `impression`.
/// Blank lines are skipped; line numbers are 1-based.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Report>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reports = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: line_no,
            msg: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            line: line_no,
            msg: "expected a JSON object".into(),
        })?;
        let id = string_field(obj, "id", path, line_no)?;
        let findings = string_field(obj, "findings", path, line_no)?;
        let impression = string_field(obj, "impression", path, line_no)?;
        reports.push(Report::new(id, &findings, &impression));
    }
    Ok(reports)
}

#[derive(Serialize)]
struct CorpusLine<'a> {
    id: &'a str,
    findings: &'a str,
    impression: &'a str,
}

/// Serializes reports back to the corpus format using their raw text.
pub fn write_corpus(path: impl AsRef<Path>, reports: &[Report]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in reports {
        let line = CorpusLine {
            id: &r.id,
            findings: &r.raw_findings,
            impression: &r.raw_impression,
        };
        out.push_str(&serde_json::to_string(&line).expect("strings serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Vocabulary over the findings and impressions of `reports`.
pub fn corpus_vocab(reports: &[Report], min_freq: usize, max_size: Option<usize>) -> Result<Vocab> {
    Vocab::build(
        reports.iter().flat_map(|r| [&r.findings, &r.impression]),
        min_freq,
        max_size,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.dev, self.test];
        if all.iter().any(|r| !(0.0..=1.0).contains(r)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!(
                "split ratios must be in [0,1] and sum to 1, got {all:?}"
            )));
        }
        Ok(())
    }
}

/// Seeded shuffle, then dev and test take `floor(r·N)` items each and
/// train keeps the remainder.
pub fn split<T>(mut items: Vec<T>, ratios: SplitRatios, seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    ratios.validate()?;
    let n = items.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let size = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let (n_dev, n_test) = (size(ratios.dev), size(ratios.test));
    let n_train = n - n_dev - n_test;
    let test = items.split_off(n_train + n_dev);
    let dev = items.split_off(n_train);
    Ok((items, dev, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("Bilateral pleural effusion."),
            toks(&["bilateral", "pleural", "effusion", "."])
        );
        assert_eq!(
            tokenize("  T2-weighted, 3.5cm "),
            toks(&["t2", "-", "weighted", ",", "3", ".", "5cm"])
        );
    }

    proptest! {
        #[test]
        fn tokenize_idempotent(text in "\\PC{0,60}") {
            let once = tokenize(&text);
            let again = tokenize(&once.join(" "));
            prop_assert_eq!(&once, &again);
            for t in &once {
                prop_assert!(!t.is_empty() && !t.chars().any(char::is_whitespace));
            }
        }

        #[test]
        fn split_is_a_partition(n in 0usize..60, seed in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let (a, b, c) = split(items, SplitRatios::default(), seed).unwrap();
            let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn split_sizes() {
        let (a, b, c) = split((0..10).collect::<Vec<_>>(), SplitRatios::default(), 1).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        let (a, b, c) = split((0..3).collect::<Vec<_>>(), SplitRatios::default(), 1).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (3, 0, 0));
        let first = split((0..50).collect::<Vec<_>>(), SplitRatios::default(), 9).unwrap();
        let second = split((0..50).collect::<Vec<_>>(), SplitRatios::default(), 9).unwrap();
        assert_eq!(first, second);
        let bad = SplitRatios {
            train: 0.8,
            dev: 0.1,
            test: 0.2,
        };
        assert!(split(vec![1, 2], bad, 0).is_err());
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn read_corpus_cases() {
        assert!(read_corpus(write_tmp("").path()).unwrap().is_empty());

        let f = write_tmp(r#"{"id":"r1","findings":"Small left effusion.","impression":"Effusion."}"#);
        let reports = read_corpus(f.path()).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].findings, toks(&["small", "left", "effusion", "."]));
        assert_eq!(reports[0].impression, toks(&["effusion", "."]));

        let f =
            write_tmp("{\"id\":\"a\",\"findings\":\"x\",\"impression\":\"y\"}\n{\"id\":\"b\",\"findings\":\"x\"}\n");
        let err = read_corpus(f.path()).unwrap_err();
        assert_eq!(err.to_string(), "missing field: impression @ line 2");

        let f = write_tmp("{not json}\n");
        assert!(matches!(read_corpus(f.path()), Err(Error::Format { line: 1, .. })));
    }

    #[test]
    fn corpus_round_trip() {
        let reports = vec![Report::new("a", "No pneumothorax.", "Normal.")];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_corpus(f.path(), &reports).unwrap();
        assert_eq!(read_corpus(f.path()).unwrap(), reports);
    }

    #[test]
    fn truncation() {
        let mut r = Report::new("a", "one two three four", "five six");
        assert!(!r.truncate(10, 10));
        assert!(r.truncate(2, 1));
        assert_eq!(r.findings, toks(&["one", "two"]));
        assert_eq!(r.impression, toks(&["five"]));
    }
}
