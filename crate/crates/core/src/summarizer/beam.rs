use std::cmp::Ordering;

use super::{DecoderState, Source, Summarizer};
use crate::corpus::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::tensor::Graph;

/// A partial or finished decoding.
#[derive(Clone, Debug)]
pub struct Hypothesis {
    /// Extended-vocabulary ids; ends in EOS when finished.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// Accumulated log-probability after each token.
    pub history: Vec<f64>,
    pub finished: bool,
    pub state: DecoderState,
}

impl Hypothesis {
    /// Length-normalized log-probability.
    pub fn score(&self) -> f64 {
        normalized(self.log_prob, self.tokens.len())
    }
}

fn normalized(log_prob: f64, len: usize) -> f64 {
    if len == 0 {
        log_prob
    } else {
        log_prob / len as f64
    }
}

fn allowed(id: usize) -> bool {
    id != PAD && id != BOS
}

/// Beam search over the extended vocabulary. Returns every surviving
/// hypothesis, best first.
pub fn beam_search(model: &Summarizer, source: &Source, beam_size: usize, max_len: usize) -> Result<Vec<Hypothesis>> {
    if beam_size == 0 {
        return Err(Error::contract("beam size must be at least 1"));
    }
    let mut g = Graph::with_params(&model.params);
    let enc = model.encode(&mut g, source)?;
    let init = model.initial_state(&mut g, &enc)?;
    let mut alive = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        history: Vec::new(),
        finished: false,
        state: init,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        // (score, beam, token, log_prob, state)
        let mut cands: Vec<(f64, usize, usize, f64, DecoderState)> = Vec::new();
        for (bi, hyp) in alive.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let step = model.decode_step(&mut g, hyp.state, prev, &enc, source)?;
            let dist = g.value(step.dist).data();
            let mut ranked: Vec<usize> = (0..dist.len()).filter(|&i| allowed(i)).collect();
            ranked.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
            for &tok in ranked.iter().take(beam_size) {
                let lp = hyp.log_prob + dist[tok].ln();
                cands.push((normalized(lp, hyp.tokens.len() + 1), bi, tok, lp, step.state));
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next = Vec::with_capacity(beam_size);
        for (_, bi, tok, lp, state) in cands.into_iter().take(beam_size) {
            let parent = &alive[bi];
            let mut tokens = parent.tokens.clone();
            tokens.push(tok);
            let mut history = parent.history.clone();
            history.push(lp);
            let hyp = Hypothesis {
                tokens,
                log_prob: lp,
                history,
                finished: tok == EOS,
                state,
            };
            if hyp.finished {
                finished.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        alive = next;
        if alive.is_empty() || finished.len() >= beam_size {
            break;
        }
    }
    let mut all: Vec<Hypothesis> = finished.into_iter().chain(alive).collect();
    all.sort_by(|a, b| b.score().partial_cmp(&a.score()).unwrap_or(Ordering::Equal));
    Ok(all)
}

fn surface(model: &Summarizer, source: &Source, ids: &[usize]) -> Vec<String> {
    ids.iter()
        .take_while(|&&t| t != EOS)
        .map(|&t| source.surface(&model.vocab, t).to_string())
        .collect()
}

/// Generates an impression for a prepared source. `beam_size = 1` is greedy.
pub fn generate(model: &Summarizer, source: &Source, beam_size: usize, max_len: usize) -> Result<Vec<String>> {
    if max_len == 0 {
        return Ok(Vec::new());
    }
    let best = beam_search(model, source, beam_size, max_len)?;
    Ok(best
        .first()
        .map(|h| surface(model, source, &h.tokens))
        .unwrap_or_default())
}

/// Reference decoder: the argmax token at every step, no search.
pub fn greedy_rollout(model: &Summarizer, source: &Source, max_len: usize) -> Result<Vec<String>> {
    if max_len == 0 {
        return Ok(Vec::new());
    }
    let mut g = Graph::with_params(&model.params);
    let enc = model.encode(&mut g, source)?;
    let mut state = model.initial_state(&mut g, &enc)?;
    let mut prev = BOS;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let step = model.decode_step(&mut g, state, prev, &enc, source)?;
        let dist = g.value(step.dist).data();
        let mut best = None;
        for (i, &p) in dist.iter().enumerate().filter(|(i, _)| allowed(*i)) {
            if best.is_none_or(|(_, q)| p > q) {
                best = Some((i, p));
            }
        }
        let (tok, _) = best.expect("non-empty distribution");
        out.push(tok);
        if tok == EOS {
            break;
        }
        state = step.state;
        prev = tok;
    }
    Ok(surface(model, source, &out))
}
