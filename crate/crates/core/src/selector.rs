//! Content selector: a stacked bidirectional LSTM tagger that estimates,
//! for every findings token, the probability that it is copied into the
//! impression.

use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EmbeddingTable, Report, Vocab};
use crate::embedding::{EmbeddingProvider, StaticEmbedding};
use crate::error::{Error, Result};
use crate::ontology::{match_ontology, selection_filter, Lexicon, OntologySpan, TaggedReport};
use crate::tensor::{BiLstm, Graph, ParamId, ParamSet, Tensor, Var};
use crate::training::{batches, Optimizer};

pub const NUM_LAYERS: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct SelectorConfig {
    pub embedding_dim: usize,
    /// Hidden units per direction.
    pub hidden_size: usize,
    pub dropout: f64,
    pub init_scale: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            embedding_dim: 100,
            hidden_size: 256,
            dropout: 0.2,
            init_scale: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
struct Layout {
    embedding: StaticEmbedding,
    encoder: BiLstm,
    proj_w: ParamId,
    proj_b: ParamId,
}

impl Layout {
    fn lookup(params: &ParamSet) -> Result<Self> {
        let get = |n: &str| {
            params
                .id(n)
                .ok_or_else(|| Error::contract(format!("missing parameter {n}")))
        };
        let layout = Layout {
            embedding: StaticEmbedding::lookup(params, "embedding")?,
            encoder: BiLstm::lookup(params, "encoder", NUM_LAYERS)?,
            proj_w: get("proj.w")?,
            proj_b: get("proj.b")?,
        };
        let width = layout.encoder.output_size();
        if params.get(layout.proj_w).shape() != [2, width] || params.get(layout.proj_b).shape() != [2] {
            return Err(Error::shape(
                "selector projection",
                params.get(layout.proj_w).shape(),
                &[2, width],
            ));
        }
        if layout.encoder.layers[0].0.input_size != layout.embedding.dim {
            return Err(Error::shape(
                "selector encoder input",
                &[layout.encoder.layers[0].0.input_size],
                &[layout.embedding.dim],
            ));
        }
        Ok(layout)
    }
}

/// A trained or freshly initialized tagger together with its vocabulary.
#[derive(Clone, Debug)]
pub struct Selector {
    pub config: SelectorConfig,
    pub vocab: Vocab,
    pub params: ParamSet,
    layout: Layout,
}

/// Per-token probability of the "copied" class.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    pub tokens: Vec<String>,
    pub probs: Vec<f64>,
}

impl Selector {
    /// Random initialization; `embeddings` overrides the random table when given.
    pub fn new(config: SelectorConfig, vocab: Vocab, embeddings: Option<EmbeddingTable>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = match embeddings {
            Some(t) => {
                if t.rows() != vocab.len() || t.dim() != config.embedding_dim {
                    return Err(Error::shape(
                        "selector embeddings",
                        t.matrix.shape(),
                        &[vocab.len(), config.embedding_dim],
                    ));
                }
                t
            }
            None => EmbeddingTable::random(vocab.len(), config.embedding_dim, true, &mut rng),
        };
        let mut params = ParamSet::new();
        StaticEmbedding::register(&mut params, "embedding", table)?;
        BiLstm::register(
            &mut params,
            "encoder",
            config.embedding_dim,
            config.hidden_size,
            NUM_LAYERS,
            config.init_scale,
            &mut rng,
        )?;
        params.add(
            "proj.w",
            Tensor::uniform(&[2, 2 * config.hidden_size], config.init_scale, &mut rng),
        )?;
        params.add("proj.b", Tensor::zeros(&[2]))?;
        Self::from_params(config, vocab, params)
    }

    /// Attaches to an existing parameter set (e.g. from a checkpoint),
    /// validating every shape.
    pub fn from_params(config: SelectorConfig, vocab: Vocab, params: ParamSet) -> Result<Self> {
        let layout = Layout::lookup(&params)?;
        if layout.embedding.vocab_size != vocab.len() {
            return Err(Error::shape(
                "selector vocabulary",
                &[layout.embedding.vocab_size],
                &[vocab.len()],
            ));
        }
        if layout.encoder.hidden_per_direction() != config.hidden_size || layout.embedding.dim != config.embedding_dim {
            return Err(Error::contract("selector parameters disagree with configuration"));
        }
        Ok(Selector {
            config,
            vocab,
            params,
            layout,
        })
    }

    /// Records the tagger on `g`; returns a 2-class distribution per token.
    pub fn forward(&self, g: &mut Graph, tokens: &[String]) -> Result<Vec<Var>> {
        if tokens.is_empty() {
            return Err(Error::contract("selector input must contain at least one token"));
        }
        let ids = self.vocab.ids(tokens);
        let embedded = self.layout.embedding.embed(g, &ids)?;
        let embedded: Vec<Var> = embedded
            .into_iter()
            .map(|e| g.dropout(e, self.config.dropout))
            .collect();
        let states = self.layout.encoder.forward(g, &embedded, self.config.dropout)?;
        let (w, b) = (g.param(self.layout.proj_w), g.param(self.layout.proj_b));
        states
            .into_iter()
            .map(|h| {
                let h = g.dropout(h, self.config.dropout);
                let logits = g.linear(w, h, b)?;
                g.softmax(logits)
            })
            .collect()
    }

    /// Mean per-token cross entropy against gold tags.
    pub fn loss(&self, g: &mut Graph, example: &TaggedReport) -> Result<Var> {
        let dists = self.forward(g, &example.report.findings)?;
        let terms = dists
            .iter()
            .zip(&example.tags)
            .map(|(&d, &tag)| g.cross_entropy(d, usize::from(tag)))
            .collect::<Result<Vec<_>>>()?;
        g.mean(&terms)
    }

    /// Eval-mode probabilities for a token sequence.
    pub fn predict(&self, tokens: &[String]) -> Result<SelectionResult> {
        let mut g = Graph::with_params(&self.params);
        let dists = self.forward(&mut g, tokens)?;
        Ok(SelectionResult {
            tokens: tokens.to_vec(),
            probs: dists.iter().map(|&d| g.value(d).data()[1]).collect(),
        })
    }
}

/// Eval-mode tagging of a token sequence.
pub fn selector_forward(tokens: &[String], selector: &Selector) -> Result<SelectionResult> {
    selector.predict(tokens)
}

/// The set of salient ontology terms for a report: tag probabilities,
/// lexicon matching, then threshold filtering.
pub fn predict_salient(
    report: &Report,
    selector: &Selector,
    lexicon: &Lexicon,
    epsilon: f64,
) -> Result<Vec<OntologySpan>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::contract(format!("copying threshold {epsilon} outside [0, 1]")));
    }
    let spans = match_ontology(&report.findings, lexicon);
    if spans.is_empty() {
        return Ok(Vec::new());
    }
    let result = selector.predict(&report.findings)?;
    selection_filter(&spans, &result.probs, epsilon)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TagMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl TagMetrics {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        TagMetrics { precision, recall, f1 }
    }
}

/// Token-level precision/recall/F1 of class 1 at a 0.5 decision threshold.
pub fn evaluate_tags(selector: &Selector, data: &[TaggedReport]) -> Result<TagMetrics> {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for ex in data.iter().filter(|e| !e.report.findings.is_empty()) {
        let probs = selector.predict(&ex.report.findings)?.probs;
        for (p, &gold) in probs.iter().zip(&ex.tags) {
            match (*p >= 0.5, gold == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    Ok(TagMetrics::from_counts(tp, fp, fn_))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectorTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without dev-F1 improvement before stopping; 0 disables.
    pub patience: usize,
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for SelectorTrainConfig {
    fn default() -> Self {
        SelectorTrainConfig {
            learning_rate: 2e-5,
            epochs: 50,
            batch_size: 8,
            patience: 5,
            grad_clip: Some(5.0),
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectorEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: TagMetrics,
}

/// Minimizes per-token cross entropy with Adam; keeps the parameters with
/// the best dev F1. `dev` falls back to `train` when empty.
pub fn train_selector(
    mut selector: Selector,
    train: &[TaggedReport],
    dev: &[TaggedReport],
    config: &SelectorTrainConfig,
) -> Result<(Selector, Vec<SelectorEpoch>)> {
    let train: Vec<&TaggedReport> = train.iter().filter(|t| !t.report.findings.is_empty()).collect();
    if train.is_empty() {
        return Err(Error::contract("selector training set is empty"));
    }
    if train.iter().all(|t| t.positives() == 0) {
        warn!("no positive tags in selector training data; the tagger will learn a constant");
    }
    let dev = if dev.is_empty() {
        train.iter().map(|t| (*t).clone()).collect()
    } else {
        dev.to_vec()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Optimizer::new(&selector.params, config.learning_rate, config.grad_clip);
    let mut history = Vec::new();
    let mut best: Option<(f64, ParamSet)> = None;
    let mut stale = 0;
    let mut batch_seed = config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);

    for epoch in 1..=config.epochs {
        let mut total = 0.0;
        let order = batches(train.len(), config.batch_size, &mut rng);
        for batch in &order {
            batch_seed = batch_seed.wrapping_add(1);
            let grads = {
                let mut g = Graph::with_params(&selector.params).training(batch_seed);
                let losses = batch
                    .iter()
                    .map(|&i| selector.loss(&mut g, train[i]))
                    .collect::<Result<Vec<_>>>()?;
                let loss = g.mean(&losses)?;
                total += g.value(loss).item() * batch.len() as f64;
                g.backward(loss)?.into_params().expect("bound graph")
            };
            opt.step(&mut selector.params, grads)?;
        }
        let dev_metrics = evaluate_tags(&selector, &dev)?;
        let record = SelectorEpoch {
            epoch,
            train_loss: total / train.len() as f64,
            dev: dev_metrics,
        };
        info!(
            "selector epoch {epoch}: loss {:.5} dev P {:.4} R {:.4} F1 {:.4}",
            record.train_loss, dev_metrics.precision, dev_metrics.recall, dev_metrics.f1
        );
        history.push(record);

        if best.as_ref().is_none_or(|(f, _)| dev_metrics.f1 > *f) {
            best = Some((dev_metrics.f1, selector.params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                info!("selector early stop after epoch {epoch}");
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        selector.params = params;
    }
    Ok((selector, history))
}

/// `token<TAB>gold<TAB>p` lines, one blank line between reports.
pub fn tag_prediction_tsv(selector: &Selector, data: &[TaggedReport]) -> Result<String> {
    let mut out = String::new();
    for ex in data.iter().filter(|e| !e.report.findings.is_empty()) {
        let result = selector.predict(&ex.report.findings)?;
        for ((tok, gold), p) in result.tokens.iter().zip(&ex.tags).zip(&result.probs) {
            writeln!(out, "{tok}\t{gold}\t{p:.6}").expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_tag_predictions(path: impl AsRef<Path>, selector: &Selector, data: &[TaggedReport]) -> Result<()> {
    let path = path.as_ref();
    let text = tag_prediction_tsv(selector, data)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::align_tags;
    use crate::tensor::gradcheck::check_params;

    fn tiny(seed: u64) -> Selector {
        let tokens: Vec<Vec<String>> = vec!["no acute pleural effusion .".split(' ').map(String::from).collect()];
        let vocab = Vocab::build(&tokens, 1, None).unwrap();
        let config = SelectorConfig {
            embedding_dim: 5,
            hidden_size: 3,
            dropout: 0.2,
            init_scale: 0.5,
        };
        Selector::new(config, vocab, None, seed).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn probabilities_are_distributions() {
        let s = tiny(1);
        let mut g = Graph::with_params(&s.params);
        let dists = s.forward(&mut g, &toks("pleural effusion unknownword .")).unwrap();
        assert_eq!(dists.len(), 4);
        for d in dists {
            let v = g.value(d).data();
            assert!((v[0] + v[1] - 1.0).abs() < 1e-12);
            assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
        }
        assert!(s.predict(&[]).is_err());
    }

    #[test]
    fn zero_projection_gives_half() {
        let mut s = tiny(2);
        let w = s.params.id("proj.w").unwrap();
        *s.params.get_mut(w) = Tensor::zeros(&[2, 6]);
        let r = s.predict(&toks("no acute effusion")).unwrap();
        assert_eq!(r.probs, vec![0.5; 3]);
    }

    #[test]
    fn eval_mode_is_deterministic_and_length_equivariant() {
        let s = tiny(3);
        for n in [1, 2, 7, 40] {
            let tokens: Vec<String> = (0..n)
                .map(|i| if i % 2 == 0 { "effusion" } else { "no" }.to_string())
                .collect();
            let a = s.predict(&tokens).unwrap();
            let b = s.predict(&tokens).unwrap();
            assert_eq!(a.probs.len(), n);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let s = tiny(4);
        let lex = Lexicon::from_terms(["pleural effusion", "acute"]);
        let ex = align_tags(&Report::new("r", "no acute pleural effusion", "acute effusion"), &lex);
        let mut g = Graph::with_params(&s.params);
        let loss = s.loss(&mut g, &ex).unwrap();
        let grads = g.backward(loss).unwrap().into_params().unwrap();
        let report = check_params(
            &s.params,
            &grads,
            |p| {
                let mut g = Graph::with_params(p);
                let l = s.loss(&mut g, &ex)?;
                Ok(g.value(l).item())
            },
            1e-5,
            usize::MAX,
        )
        .unwrap();
        assert_eq!(report.params.len(), s.params.len());
        assert!(report.max_rel_err() < 1e-4, "{:?}", report.worst());
    }

    #[test]
    fn predict_salient_boundaries() {
        let s = tiny(5);
        let lex = Lexicon::from_terms(["pleural effusion", "acute"]);
        let none = Report::new("r", "heart normal", "");
        assert!(predict_salient(&none, &s, &lex, 0.0).unwrap().is_empty());
        let r = Report::new("r", "no acute pleural effusion", "");
        let all = predict_salient(&r, &s, &lex, 0.0).unwrap();
        assert_eq!(all, match_ontology(&r.findings, &lex));
        assert!(predict_salient(&r, &s, &lex, 2.0).is_err());
    }

    #[test]
    fn tsv_layout() {
        let s = tiny(6);
        let lex = Lexicon::from_terms(["effusion"]);
        let ex = align_tags(&Report::new("r", "no effusion", "effusion"), &lex);
        let tsv = tag_prediction_tsv(&s, &[ex]).unwrap();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("effusion\t1\t"));
    }
}
