use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{generate, Mode, Source, Summarizer};
use crate::corpus::Report;
use crate::error::{Error, Result};
use crate::eval::{pairwise_sum, rouge_n};
use crate::ontology::{match_ontology, selected_words, Lexicon};
use crate::selector::{predict_salient, Selector};
use crate::tensor::Graph;
use crate::training::{batches, Optimizer};

/// A report prepared for the summarizer.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub source: Source,
    pub targets: Vec<usize>,
    pub reference: Vec<String>,
}

/// The ontology words a mode feeds to the gate. Filtered mode requires a
/// selector; the other modes must not be given one.
pub fn ontology_input(
    report: &Report,
    mode: Mode,
    selector: Option<&Selector>,
    lexicon: &Lexicon,
    epsilon: f64,
) -> Result<Vec<String>> {
    match (mode, selector) {
        (Mode::Filtered, Some(sel)) => Ok(selected_words(&predict_salient(report, sel, lexicon, epsilon)?)),
        (Mode::Filtered, None) => Err(Error::contract("filtered mode requires a trained content selector")),
        (_, Some(_)) => Err(Error::contract(format!("{mode} mode does not take a content selector"))),
        (Mode::AllOntology, None) => Ok(selected_words(&match_ontology(&report.findings, lexicon))),
        (Mode::Plain, None) => Ok(Vec::new()),
    }
}

impl Summarizer {
    /// Builds examples for every report with non-empty findings.
    pub fn prepare(
        &self,
        reports: &[Report],
        selector: Option<&Selector>,
        lexicon: &Lexicon,
        epsilon: f64,
    ) -> Result<Vec<Example>> {
        let mut out = Vec::with_capacity(reports.len());
        for r in reports {
            if r.findings.is_empty() {
                warn!("report {} has empty findings; skipped", r.id);
                continue;
            }
            let onto = ontology_input(r, self.mode(), selector, lexicon, epsilon)?;
            let source = self.source(&r.findings, &onto);
            out.push(Example {
                id: r.id.clone(),
                targets: source.target_ids(&self.vocab, &r.impression),
                reference: r.impression.clone(),
                source,
            });
        }
        Ok(out)
    }

    /// Mean per-example ROUGE-1 F1 of greedy decodes.
    pub fn rouge1(&self, examples: &[Example], max_len: usize) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::contract("no examples to score"));
        }
        let scores = examples
            .iter()
            .map(|ex| Ok(rouge_n(&generate(self, &ex.source, 1, max_len)?, &ex.reference, 1).f1))
            .collect::<Result<Vec<_>>>()?;
        Ok(pairwise_sum(&scores) / scores.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummarizerTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without dev improvement before stopping; 0 disables.
    pub patience: usize,
    pub grad_clip: Option<f64>,
    pub seed: u64,
    /// Copying threshold used to build the filtered ontology input.
    pub epsilon: f64,
    /// Decoding cap for dev evaluation.
    pub max_len: usize,
}

impl Default for SummarizerTrainConfig {
    fn default() -> Self {
        SummarizerTrainConfig {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 8,
            patience: 0,
            grad_clip: Some(5.0),
            seed: 42,
            epsilon: 0.5,
            max_len: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummarizerEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_rouge1: f64,
}

/// Teacher-forced NLL training with Adam. Keeps the parameters with the
/// best dev ROUGE-1 (greedy decoding); `dev` falls back to `train` when
/// empty. Stops early once dev ROUGE-1 reaches 1.
pub fn train_summarizer(
    mut model: Summarizer,
    train: &[Report],
    dev: &[Report],
    selector: Option<&Selector>,
    lexicon: &Lexicon,
    config: &SummarizerTrainConfig,
) -> Result<(Summarizer, Vec<SummarizerEpoch>)> {
    let train = model.prepare(train, selector, lexicon, config.epsilon)?;
    if train.is_empty() {
        return Err(Error::contract("summarizer training set is empty"));
    }
    let dev = if dev.is_empty() {
        train.clone()
    } else {
        model.prepare(dev, selector, lexicon, config.epsilon)?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Optimizer::new(&model.params, config.learning_rate, config.grad_clip);
    let mut history = Vec::new();
    let mut best: Option<(f64, crate::tensor::ParamSet)> = None;
    let mut stale = 0;
    let mut batch_seed = config.seed.wrapping_mul(0xbf58_476d_1ce4_e5b9);

    for epoch in 1..=config.epochs {
        let mut total = 0.0;
        for batch in batches(train.len(), config.batch_size, &mut rng) {
            batch_seed = batch_seed.wrapping_add(1);
            let grads = {
                let mut g = Graph::with_params(&model.params).training(batch_seed);
                let losses = batch
                    .iter()
                    .map(|&i| model.nll(&mut g, &train[i].source, &train[i].targets))
                    .collect::<Result<Vec<_>>>()?;
                let loss = g.mean(&losses)?;
                total += g.value(loss).item() * batch.len() as f64;
                g.backward(loss)?.into_params().expect("bound graph")
            };
            opt.step(&mut model.params, grads)?;
        }
        let dev_rouge1 = model.rouge1(&dev, config.max_len)?;
        let record = SummarizerEpoch {
            epoch,
            train_loss: total / train.len() as f64,
            dev_rouge1,
        };
        info!(
            "summarizer ({}) epoch {epoch}: loss {:.5} dev ROUGE-1 {:.4}",
            model.mode(),
            record.train_loss,
            dev_rouge1
        );
        history.push(record);

        if best.as_ref().is_none_or(|(r, _)| dev_rouge1 > *r) {
            best = Some((dev_rouge1, model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        if dev_rouge1 >= 1.0 {
            info!("dev ROUGE-1 saturated after epoch {epoch}");
            break;
        }
        if config.patience > 0 && stale >= config.patience {
            info!("summarizer early stop after epoch {epoch}");
            break;
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, history))
}
