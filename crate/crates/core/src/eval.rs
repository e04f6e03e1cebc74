//! ROUGE-1/2/L scoring, corpus aggregation, paired significance testing
//! and report emission.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::tokenize;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_overlap(overlap: usize, cand_total: usize, ref_total: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(overlap, cand_total);
        let recall = ratio(overlap, ref_total);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore { precision, recall, f1 }
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    counts
}

/// N-gram overlap with clipped counts. `n = 0` scores zero.
pub fn rouge_n<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> RougeScore {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_overlap(overlap, cand.values().sum(), refs.values().sum())
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x.as_ref() == y.as_ref() {
                diag + 1
            } else {
                up.max(row[j])
            };
            diag = up;
        }
    }
    row[b.len()]
}

/// LCS-based F-measure with β = 1.
pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> RougeScore {
    RougeScore::from_overlap(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// One generated impression alongside its reference, as written by `summarize`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub id: String,
    pub generated: String,
    pub reference: String,
}

pub fn read_generations(path: impl AsRef<Path>) -> Result<Vec<Generation>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let g: Generation = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(g);
    }
    Ok(out)
}

pub fn write_generations(path: impl AsRef<Path>, gens: &[Generation]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for g in gens {
        text.push_str(&serde_json::to_string(g).expect("generation serializes"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
}

impl ExampleScore {
    pub fn f1(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Rouge1 => self.rouge1.f1,
            Metric::Rouge2 => self.rouge2.f1,
            Metric::RougeL => self.rouge_l.f1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Rouge1,
    Rouge2,
    RougeL,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Rouge1, Metric::Rouge2, Metric::RougeL];

    pub fn key(self) -> &'static str {
        match self {
            Metric::Rouge1 => "rg1",
            Metric::Rouge2 => "rg2",
            Metric::RougeL => "rgl",
        }
    }
}

/// Per-example scores plus the arithmetic mean F1 of each metric.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusScores {
    pub examples: Vec<ExampleScore>,
    pub mean_rouge1: f64,
    pub mean_rouge2: f64,
    pub mean_rouge_l: f64,
}

impl CorpusScores {
    pub fn mean(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Rouge1 => self.mean_rouge1,
            Metric::Rouge2 => self.mean_rouge2,
            Metric::RougeL => self.mean_rouge_l,
        }
    }

    pub fn f1_vector(&self, metric: Metric) -> Vec<f64> {
        self.examples.iter().map(|e| e.f1(metric)).collect()
    }
}

/// Pairwise summation in index order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

pub fn score_example<S: AsRef<str>>(id: &str, candidate: &[S], reference: &[S]) -> ExampleScore {
    ExampleScore {
        id: id.to_string(),
        rouge1: rouge_n(candidate, reference, 1),
        rouge2: rouge_n(candidate, reference, 2),
        rouge_l: rouge_l(candidate, reference),
    }
}

/// Scores `(id, candidate, reference)` triples.
pub fn evaluate_corpus<S: AsRef<str>>(pairs: &[(String, Vec<S>, Vec<S>)]) -> Result<CorpusScores> {
    if pairs.is_empty() {
        return Err(Error::contract("cannot evaluate an empty set of pairs"));
    }
    let examples: Vec<ExampleScore> = pairs.iter().map(|(id, c, r)| score_example(id, c, r)).collect();
    Ok(corpus_from_examples(examples))
}

fn corpus_from_examples(examples: Vec<ExampleScore>) -> CorpusScores {
    let m = |metric| mean(&examples.iter().map(|e| e.f1(metric)).collect::<Vec<_>>());
    CorpusScores {
        mean_rouge1: m(Metric::Rouge1),
        mean_rouge2: m(Metric::Rouge2),
        mean_rouge_l: m(Metric::RougeL),
        examples,
    }
}

/// Tokenizes generation records and scores them.
pub fn evaluate_generations(gens: &[Generation]) -> Result<CorpusScores> {
    let pairs: Vec<(String, Vec<String>, Vec<String>)> = gens
        .iter()
        .map(|g| (g.id.clone(), tokenize(&g.generated), tokenize(&g.reference)))
        .collect();
    evaluate_corpus(&pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemComparison {
    pub scores_a: Vec<f64>,
    pub scores_b: Vec<f64>,
    pub mean_diff: f64,
    pub t: f64,
    pub p_value: f64,
    pub df: usize,
    /// Set when all differences are equal and nonzero, so the standard
    /// error vanishes.
    pub degenerate: bool,
}

/// Two-sided paired t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<SystemComparison> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "paired t-test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::contract("paired t-test needs at least two pairs"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite score in paired t-test".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_diff = mean(&d);
    let sq: Vec<f64> = d.iter().map(|x| (x - mean_diff).powi(2)).collect();
    let sd = (pairwise_sum(&sq) / (n - 1) as f64).sqrt();
    let df = n - 1;

    let (t, p_value, degenerate) = if d.iter().all(|&x| x == 0.0) {
        (0.0, 1.0, false)
    } else if sd == 0.0 {
        (mean_diff.signum() * f64::INFINITY, 0.0, true)
    } else {
        let t = mean_diff / (sd / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
        let p = (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0);
        (t, p, false)
    };
    Ok(SystemComparison {
        scores_a: a.to_vec(),
        scores_b: b.to_vec(),
        mean_diff,
        t,
        p_value,
        df,
        degenerate,
    })
}

/// Compares two scored systems metric by metric. Both must cover the same
/// ids; mismatches are listed in the error.
pub fn compare_systems(a: &CorpusScores, b: &CorpusScores) -> Result<Vec<(Metric, SystemComparison)>> {
    let index_b: HashMap<&str, &ExampleScore> = b.examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let ids_a: std::collections::HashSet<&str> = a.examples.iter().map(|e| e.id.as_str()).collect();
    let mut only_a: Vec<&str> = ids_a.iter().copied().filter(|id| !index_b.contains_key(id)).collect();
    let mut only_b: Vec<&str> = index_b.keys().copied().filter(|id| !ids_a.contains(id)).collect();
    if !only_a.is_empty() || !only_b.is_empty() || a.examples.len() != b.examples.len() {
        only_a.sort_unstable();
        only_b.sort_unstable();
        return Err(Error::contract(format!(
            "example ids differ between systems; missing from second: [{}]; missing from first: [{}]",
            only_a.join(", "),
            only_b.join(", ")
        )));
    }
    Metric::ALL
        .iter()
        .map(|&m| {
            let xs = a.f1_vector(m);
            let ys: Vec<f64> = a.examples.iter().map(|e| index_b[e.id.as_str()].f1(m)).collect();
            Ok((m, paired_t_test(&xs, &ys)?))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format '{other}'"))),
        }
    }
}

#[derive(Serialize)]
struct JsonRow<'a> {
    id: &'a str,
    rg1: f64,
    rg2: f64,
    rgl: f64,
}

#[derive(Serialize)]
struct JsonComparison {
    mean_diff: f64,
    t: f64,
    p: f64,
    df: usize,
    degenerate: bool,
}

type StatFn = fn(&SystemComparison) -> String;

/// Writes per-example F1 rows followed by summary rows (`summary:mean`
/// and, when comparisons are given, `summary:mean_diff`, `summary:t`,
/// `summary:p`, `summary:df`).
pub fn emit_report(
    scores: &CorpusScores,
    comparisons: &[(Metric, SystemComparison)],
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        ReportFormat::Csv => csv_report(scores, comparisons)?,
        ReportFormat::Json => json_report(scores, comparisons).into_bytes(),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn comparison_for(comparisons: &[(Metric, SystemComparison)], m: Metric) -> Option<&SystemComparison> {
    comparisons.iter().find(|(k, _)| *k == m).map(|(_, c)| c)
}

fn csv_report(scores: &CorpusScores, comparisons: &[(Metric, SystemComparison)]) -> Result<Vec<u8>> {
    let csv_err = |e: csv::Error| Error::contract(format!("csv encoding failed: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "rg1", "rg2", "rgl"]).map_err(csv_err)?;
    for e in &scores.examples {
        w.write_record([
            e.id.clone(),
            e.rouge1.f1.to_string(),
            e.rouge2.f1.to_string(),
            e.rouge_l.f1.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let row = |label: &str, f: &dyn Fn(Metric) -> String| -> Vec<String> {
        std::iter::once(label.to_string())
            .chain(Metric::ALL.iter().map(|&m| f(m)))
            .collect()
    };
    w.write_record(row("summary:mean", &|m| scores.mean(m).to_string()))
        .map_err(csv_err)?;
    if !comparisons.is_empty() {
        let stat = |pick: fn(&SystemComparison) -> String| {
            move |m: Metric| comparison_for(comparisons, m).map(pick).unwrap_or_default()
        };
        let rows: [(&str, StatFn); 4] = [
            ("summary:mean_diff", |c| c.mean_diff.to_string()),
            ("summary:t", |c| c.t.to_string()),
            ("summary:p", |c| c.p_value.to_string()),
            ("summary:df", |c| c.df.to_string()),
        ];
        for (label, pick) in rows {
            w.write_record(row(label, &stat(pick))).map_err(csv_err)?;
        }
    }
    w.into_inner()
        .map_err(|e| Error::contract(format!("csv flush failed: {e}")))
}

fn json_report(scores: &CorpusScores, comparisons: &[(Metric, SystemComparison)]) -> String {
    let rows: Vec<JsonRow> = scores
        .examples
        .iter()
        .map(|e| JsonRow {
            id: &e.id,
            rg1: e.rouge1.f1,
            rg2: e.rouge2.f1,
            rgl: e.rouge_l.f1,
        })
        .collect();
    let mut means = serde_json::Map::new();
    let mut comps = serde_json::Map::new();
    for m in Metric::ALL {
        means.insert(m.key().into(), serde_json::json!(scores.mean(m)));
        if let Some(c) = comparison_for(comparisons, m) {
            let jc = JsonComparison {
                mean_diff: c.mean_diff,
                t: c.t,
                p: c.p_value,
                df: c.df,
                degenerate: c.degenerate,
            };
            comps.insert(m.key().into(), serde_json::to_value(jc).expect("serializable"));
        }
    }
    let mut summary = serde_json::Map::new();
    summary.insert("mean".into(), means.into());
    if !comps.is_empty() {
        summary.insert("comparison".into(), comps.into());
    }
    let doc = serde_json::json!({ "examples": rows, "summary": summary });
    serde_json::to_string_pretty(&doc).expect("serializable")
}
