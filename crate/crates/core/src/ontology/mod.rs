//! Ontology lexicon, term extraction over findings, copy-tag alignment and
//! threshold selection of salient terms.

mod trie;

use std::collections::HashSet;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

pub use trie::TokenTrie;

use crate::corpus::{tokenize, Report};
use crate::error::{Error, Result};

/// Flat set of (possibly multiword) ontology terms.
#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    terms: Vec<Vec<String>>,
    trie: TokenTrie,
}

impl Lexicon {
    /// Builds a lexicon from raw term strings, normalizing each with the
    /// corpus tokenizer and dropping empties and duplicates.
    pub fn from_terms<I, S>(raw: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lex = Lexicon {
            terms: Vec::new(),
            trie: TokenTrie::new(),
        };
        for term in raw {
            let tokens = tokenize(term.as_ref());
            if tokens.is_empty() {
                continue;
            }
            if lex.trie.insert(&tokens, lex.terms.len()) {
                lex.terms.push(tokens);
            }
        }
        lex
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Vec<String>] {
        &self.terms
    }

    pub fn contains(&self, tokens: &[String]) -> bool {
        self.trie.contains(tokens)
    }

    pub(crate) fn trie(&self) -> &TokenTrie {
        &self.trie
    }
}

/// Reads a plain-text lexicon: one term per line, `#` comments and blank
/// lines ignored.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lex = Lexicon::from_terms(
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#')),
    );
    if lex.is_empty() {
        warn!("lexicon {} contains no terms", path.display());
    }
    Ok(lex)
}

/// A lexicon term found in a findings token sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologySpan {
    pub start: usize,
    pub len: usize,
    pub term: Vec<String>,
}

impl OntologySpan {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Greedy left-to-right longest-match extraction of lexicon terms.
pub fn match_ontology(tokens: &[String], lexicon: &Lexicon) -> Vec<OntologySpan> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        match lexicon.trie().longest_prefix(&tokens[i..]) {
            Some((len, term)) => {
                spans.push(OntologySpan {
                    start: i,
                    len,
                    term: lexicon.terms[term].clone(),
                });
                i += len;
            }
            None => i += 1,
        }
    }
    spans
}

/// A report with one binary copy tag per findings token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedReport {
    pub report: Report,
    pub tags: Vec<u8>,
}

impl TaggedReport {
    pub fn positives(&self) -> usize {
        self.tags.iter().filter(|t| **t == 1).count()
    }
}

/// Tags a findings token 1 iff it lies inside an ontology match and the
/// same surface token occurs anywhere in the impression.
pub fn align_tags(report: &Report, lexicon: &Lexicon) -> TaggedReport {
    let impression: HashSet<&str> = report.impression.iter().map(String::as_str).collect();
    let mut tags = vec![0u8; report.findings.len()];
    for span in match_ontology(&report.findings, lexicon) {
        for i in span.range() {
            if impression.contains(report.findings[i].as_str()) {
                tags[i] = 1;
            }
        }
    }
    TaggedReport {
        report: report.clone(),
        tags,
    }
}

/// Writes one JSON object per tagged report.
pub fn write_tagged(path: impl AsRef<Path>, data: &[TaggedReport]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for t in data {
        out.push_str(&serde_json::to_string(t).expect("tagged report serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_tagged(path: impl AsRef<Path>) -> Result<Vec<TaggedReport>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let format = |msg: String| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let t: TaggedReport = serde_json::from_str(line).map_err(|e| format(e.to_string()))?;
        if t.tags.len() != t.report.findings.len() || t.tags.iter().any(|&x| x > 1) {
            return Err(format(format!("report {}: tags do not match findings", t.report.id)));
        }
        out.push(t);
    }
    Ok(out)
}

/// Probability of a span: the minimum over its member tokens.
pub fn span_probability(span: &OntologySpan, probs: &[f64]) -> f64 {
    probs[span.range()].iter().copied().fold(f64::INFINITY, f64::min)
}

/// Keeps the spans whose probability reaches `epsilon`, in findings order.
pub fn selection_filter(spans: &[OntologySpan], probs: &[f64], epsilon: f64) -> Result<Vec<OntologySpan>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::contract(format!("copying threshold {epsilon} outside [0, 1]")));
    }
    if let Some(s) = spans.iter().find(|s| s.start + s.len > probs.len()) {
        return Err(Error::contract(format!(
            "span {}..{} exceeds {} token probabilities",
            s.start,
            s.start + s.len,
            probs.len()
        )));
    }
    Ok(spans
        .iter()
        .filter(|s| span_probability(s, probs) >= epsilon)
        .cloned()
        .collect())
}

/// Words of the selected terms concatenated in order.
pub fn selected_words(selected: &[OntologySpan]) -> Vec<String> {
    selected.iter().flat_map(|s| s.term.iter().cloned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn span(start: usize, term: &str) -> OntologySpan {
        let term = t(term);
        OntologySpan {
            start,
            len: term.len(),
            term,
        }
    }

    #[test]
    fn load_lexicon_normalizes() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "# exported terms\nbilateral\npleural effusion\n\nPleural Effusion\nbilateral"
        )
        .unwrap();
        let lex = load_lexicon(f.path()).unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.terms()[1], t("pleural effusion"));
        assert!(load_lexicon("/nonexistent/lexicon.txt").is_err());

        let empty = tempfile::NamedTempFile::new().unwrap();
        assert!(load_lexicon(empty.path()).unwrap().is_empty());
    }

    #[test]
    fn greedy_longest_match() {
        let lex = Lexicon::from_terms(["pleural effusion", "effusion", "bilateral"]);
        let spans = match_ontology(&t("bilateral pleural effusion"), &lex);
        assert_eq!(spans, vec![span(0, "bilateral"), span(1, "pleural effusion")]);
        assert!(match_ontology(&t("bilateral"), &Lexicon::default()).is_empty());
        assert!(match_ontology(&t("heart size normal"), &lex).is_empty());
    }

    #[test]
    fn align_tags_both_criteria() {
        let lex = Lexicon::from_terms(["bilateral", "pleural effusion"]);
        let r = Report::new(
            "r",
            "large bilateral pleural effusion noted",
            "bilateral pleural effusion",
        );
        assert_eq!(align_tags(&r, &lex).tags, vec![0, 1, 1, 1, 0]);

        let r = Report::new("r", "large bilateral pleural effusion noted", "");
        assert_eq!(align_tags(&r, &lex).tags, vec![0; 5]);

        let r = Report::new("r", "heart size normal", "heart size normal");
        assert_eq!(align_tags(&r, &lex).tags, vec![0; 3]);
    }

    #[test]
    fn selection_threshold() {
        let spans = vec![span(0, "bilateral"), span(1, "pleural effusion")];
        let probs = [0.9, 0.4, 0.7];
        assert_eq!(
            selection_filter(&spans, &probs, 0.5).unwrap(),
            vec![span(0, "bilateral")]
        );
        assert_eq!(selection_filter(&spans, &probs, 0.0).unwrap(), spans);
        assert!(selection_filter(&spans, &probs, 1.0).unwrap().is_empty());
        assert!(selection_filter(&spans, &probs, 1.5).is_err());
        assert!(selection_filter(&spans, &probs, -0.1).is_err());
        assert_eq!(span_probability(&spans[1], &probs), 0.4);
    }

    #[test]
    fn tagged_round_trip() {
        let lex = Lexicon::from_terms(["effusion"]);
        let data = vec![align_tags(&Report::new("a", "small effusion", "effusion"), &lex)];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_tagged(f.path(), &data).unwrap();
        assert_eq!(read_tagged(f.path()).unwrap(), data);
        std::fs::write(f.path(), "{\"report\":{\"id\":\"a\",\"findings\":[\"x\"],\"impression\":[],\"raw_findings\":\"x\",\"raw_impression\":\"\"},\"tags\":[1,0]}\n").unwrap();
        assert!(read_tagged(f.path()).unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn duplicate_occurrences_kept() {
        let lex = Lexicon::from_terms(["effusion"]);
        let tokens = t("effusion left and effusion right");
        let spans = match_ontology(&tokens, &lex);
        let sel = selection_filter(&spans, &[1.0; 5], 0.5).unwrap();
        assert_eq!(selected_words(&sel), t("effusion effusion"));
    }
}
