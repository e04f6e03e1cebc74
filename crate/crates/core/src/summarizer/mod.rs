//! Ontology-aware sequence-to-sequence summarizer: a findings encoder, an
//! ontology encoder whose final state gates every findings representation,
//! and an attention decoder that mixes generating from the vocabulary with
//! copying source tokens.

mod beam;
mod train;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use beam::{beam_search, generate, greedy_rollout, Hypothesis};
pub use train::{ontology_input, train_summarizer, Example, SummarizerEpoch, SummarizerTrainConfig};

use crate::corpus::{EmbeddingTable, Vocab, BOS, EOS, UNK};
use crate::embedding::{EmbeddingProvider, StaticEmbedding};
use crate::error::{Error, Result};
use crate::tensor::{lstm_step, run_lstm, BiLstm, Graph, LstmParams, ParamId, ParamSet, Tensor, Var};

pub const ENCODER_LAYERS: usize = 2;

/// Which ontology input feeds the gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Terms kept by the content selector.
    Filtered,
    /// Every lexicon term found in the findings.
    AllOntology,
    /// No gate and no ontology encoder: a plain pointer-generator.
    Plain,
}

impl Mode {
    pub fn uses_ontology(self) -> bool {
        self != Mode::Plain
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Filtered => "filtered",
            Mode::AllOntology => "all-ontology",
            Mode::Plain => "plain",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filtered" => Ok(Mode::Filtered),
            "all-ontology" => Ok(Mode::AllOntology),
            "plain" => Ok(Mode::Plain),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected filtered, all-ontology or plain)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummarizerConfig {
    pub embedding_dim: usize,
    /// Findings encoder width, both directions together; must be even.
    pub encoder_hidden: usize,
    pub ontology_hidden: usize,
    pub decoder_hidden: usize,
    pub dropout: f64,
    pub init_scale: f64,
    pub mode: Mode,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        SummarizerConfig {
            embedding_dim: 100,
            encoder_hidden: 200,
            ontology_hidden: 100,
            decoder_hidden: 100,
            dropout: 0.2,
            init_scale: 0.1,
            mode: Mode::Filtered,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Gate {
    encoder: LstmParams,
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct Layout {
    embedding: StaticEmbedding,
    encoder: BiLstm,
    gate: Option<Gate>,
    bridge_h: (ParamId, ParamId),
    bridge_c: (ParamId, ParamId),
    decoder: LstmParams,
    attn_v: ParamId,
    out: (ParamId, ParamId),
    copy: (ParamId, ParamId),
}

fn expect_shape(params: &ParamSet, id: ParamId, shape: &[usize]) -> Result<()> {
    let found = params.get(id).shape();
    if found != shape {
        return Err(Error::contract(format!(
            "parameter {} has shape {found:?}, expected {shape:?}",
            params.name(id)
        )));
    }
    Ok(())
}

impl Layout {
    fn lookup(params: &ParamSet, config: &SummarizerConfig, vocab_len: usize) -> Result<Self> {
        let get = |n: &str| {
            params
                .id(n)
                .ok_or_else(|| Error::contract(format!("missing parameter {n}")))
        };
        let embedding = StaticEmbedding::lookup(params, "embedding")?;
        let encoder = BiLstm::lookup(params, "encoder", ENCODER_LAYERS)?;
        let decoder = LstmParams::lookup(params, "decoder")?;
        let (e, hf, hd, ho) = (
            config.embedding_dim,
            config.encoder_hidden,
            config.decoder_hidden,
            config.ontology_hidden,
        );
        expect_shape(params, embedding.table, &[vocab_len, e])?;
        if encoder.output_size() != hf || encoder.layers[0].0.input_size != e {
            return Err(Error::contract("findings encoder disagrees with configuration"));
        }
        if decoder.hidden_size != hd || decoder.input_size != e {
            return Err(Error::contract("decoder disagrees with configuration"));
        }
        let gate = if config.mode.uses_ontology() {
            let onto = LstmParams::lookup(params, "ontology")?;
            if onto.hidden_size != ho || onto.input_size != e {
                return Err(Error::contract("ontology encoder disagrees with configuration"));
            }
            let gate = Gate {
                encoder: onto,
                w: get("gate.w")?,
                b: get("gate.b")?,
            };
            expect_shape(params, gate.w, &[hf, hf + ho])?;
            expect_shape(params, gate.b, &[hf])?;
            Some(gate)
        } else {
            None
        };
        let layout = Layout {
            embedding,
            encoder,
            gate,
            bridge_h: (get("bridge.h.w")?, get("bridge.h.b")?),
            bridge_c: (get("bridge.c.w")?, get("bridge.c.b")?),
            decoder,
            attn_v: get("attention.v")?,
            out: (get("output.w")?, get("output.b")?),
            copy: (get("copy.w")?, get("copy.b")?),
        };
        for (w, b) in [layout.bridge_h, layout.bridge_c] {
            expect_shape(params, w, &[hd, hf])?;
            expect_shape(params, b, &[hd])?;
        }
        expect_shape(params, layout.attn_v, &[hf, hd])?;
        expect_shape(params, layout.out.0, &[vocab_len, hd + hf])?;
        expect_shape(params, layout.out.1, &[vocab_len])?;
        expect_shape(params, layout.copy.0, &[hf + hd + e])?;
        expect_shape(params, layout.copy.1, &[])?;
        Ok(layout)
    }
}

/// Findings tokens mapped onto the base and extended vocabularies, plus the
/// ontology words that drive the gate.
#[derive(Clone, Debug, PartialEq)]
pub struct Source {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
    pub ext_ids: Vec<usize>,
    /// Out-of-vocabulary source tokens; extended id `|V| + k` is `oov[k]`.
    pub oov: Vec<String>,
    pub ontology: Vec<String>,
    pub ontology_ids: Vec<usize>,
    vocab_len: usize,
}

impl Source {
    pub fn new(vocab: &Vocab, findings: &[String], ontology: &[String]) -> Self {
        let mut oov: Vec<String> = Vec::new();
        let mut oov_index: HashMap<&str, usize> = HashMap::new();
        let mut ext_ids = Vec::with_capacity(findings.len());
        for tok in findings {
            match vocab.get(tok) {
                Some(id) => ext_ids.push(id),
                None => {
                    let k = *oov_index.entry(tok.as_str()).or_insert_with(|| {
                        oov.push(tok.clone());
                        oov.len() - 1
                    });
                    ext_ids.push(vocab.len() + k);
                }
            }
        }
        Source {
            tokens: findings.to_vec(),
            ids: vocab.ids(findings),
            ext_ids,
            oov,
            ontology: ontology.to_vec(),
            ontology_ids: vocab.ids(ontology),
            vocab_len: vocab.len(),
        }
    }

    pub fn ext_len(&self) -> usize {
        self.vocab_len + self.oov.len()
    }

    /// Gold extended ids for an impression, terminated by EOS. Tokens that
    /// are neither in the vocabulary nor copyable become UNK.
    pub fn target_ids(&self, vocab: &Vocab, impression: &[String]) -> Vec<usize> {
        impression
            .iter()
            .map(|t| {
                vocab
                    .get(t)
                    .or_else(|| self.oov.iter().position(|o| o == t).map(|k| self.vocab_len + k))
                    .unwrap_or(UNK)
            })
            .chain(std::iter::once(EOS))
            .collect()
    }

    /// Surface form of an extended id.
    pub fn surface<'a>(&'a self, vocab: &'a Vocab, ext_id: usize) -> &'a str {
        if ext_id < self.vocab_len {
            vocab.token(ext_id).unwrap_or("<unk>")
        } else {
            &self.oov[ext_id - self.vocab_len]
        }
    }
}

/// Encoder outputs recorded on a graph.
#[derive(Clone, Debug)]
pub struct EncodedFindings {
    pub h: Vec<Var>,
    pub h_prime: Vec<Var>,
    /// Final ontology-encoder state; `None` in plain mode.
    pub ontology_vector: Option<Var>,
    pub gates: Vec<Var>,
    /// `h'` stacked into an `n×Hf` matrix for attention.
    pub memory: Var,
}

/// Decoder recurrent state `(s, c)`.
pub type DecoderState = (Var, Var);

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub state: DecoderState,
    pub attention: Var,
    pub context: Var,
    pub p_gen: Var,
    /// Distribution over the extended vocabulary.
    pub dist: Var,
}

#[derive(Clone, Debug)]
pub struct Summarizer {
    pub config: SummarizerConfig,
    pub vocab: Vocab,
    pub params: ParamSet,
    layout: Layout,
}

impl Summarizer {
    pub fn new(config: SummarizerConfig, vocab: Vocab, embeddings: Option<EmbeddingTable>, seed: u64) -> Result<Self> {
        if !config.encoder_hidden.is_multiple_of(2) || config.encoder_hidden == 0 {
            return Err(Error::Config(format!(
                "encoder hidden size {} must be a positive even number",
                config.encoder_hidden
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, e, hf, ho, hd) = (
            vocab.len(),
            config.embedding_dim,
            config.encoder_hidden,
            config.ontology_hidden,
            config.decoder_hidden,
        );
        let s = config.init_scale;
        let table = match embeddings {
            Some(t) if t.rows() != v || t.dim() != e => {
                return Err(Error::shape("summarizer embeddings", t.matrix.shape(), &[v, e]))
            }
            Some(t) => t,
            None => EmbeddingTable::random(v, e, true, &mut rng),
        };
        let mut params = ParamSet::new();
        StaticEmbedding::register(&mut params, "embedding", table)?;
        BiLstm::register(&mut params, "encoder", e, hf / 2, ENCODER_LAYERS, s, &mut rng)?;
        if config.mode.uses_ontology() {
            LstmParams::register(&mut params, "ontology", e, ho, s, &mut rng)?;
            params.add("gate.w", Tensor::uniform(&[hf, hf + ho], s, &mut rng))?;
            params.add("gate.b", Tensor::zeros(&[hf]))?;
        }
        for name in ["bridge.h", "bridge.c"] {
            params.add(format!("{name}.w"), Tensor::uniform(&[hd, hf], s, &mut rng))?;
            params.add(format!("{name}.b"), Tensor::zeros(&[hd]))?;
        }
        LstmParams::register(&mut params, "decoder", e, hd, s, &mut rng)?;
        params.add("attention.v", Tensor::uniform(&[hf, hd], s, &mut rng))?;
        params.add("output.w", Tensor::uniform(&[v, hd + hf], s, &mut rng))?;
        params.add("output.b", Tensor::zeros(&[v]))?;
        params.add("copy.w", Tensor::uniform(&[hf + hd + e], s, &mut rng))?;
        params.add("copy.b", Tensor::scalar(0.0))?;
        Self::from_params(config, vocab, params)
    }

    /// Attaches to existing parameters, validating every shape against the
    /// configuration.
    pub fn from_params(config: SummarizerConfig, vocab: Vocab, params: ParamSet) -> Result<Self> {
        let layout = Layout::lookup(&params, &config, vocab.len())?;
        Ok(Summarizer {
            config,
            vocab,
            params,
            layout,
        })
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn source(&self, findings: &[String], ontology: &[String]) -> Source {
        Source::new(&self.vocab, findings, ontology)
    }

    fn embed(&self, g: &mut Graph, ids: &[usize]) -> Result<Vec<Var>> {
        let xs = self.layout.embedding.embed(g, ids)?;
        Ok(xs.into_iter().map(|x| g.dropout(x, self.config.dropout)).collect())
    }

    /// Per-token biLSTM states, forward and backward halves concatenated.
    pub fn encode_findings(&self, g: &mut Graph, ids: &[usize]) -> Result<Vec<Var>> {
        if ids.is_empty() {
            return Err(Error::contract("findings must contain at least one token"));
        }
        let xs = self.embed(g, ids)?;
        self.layout.encoder.forward(g, &xs, self.config.dropout)
    }

    /// Runs the ontology encoder over the selected words. Returns all states
    /// and the final one; an empty input yields the zero vector.
    pub fn encode_ontology(&self, g: &mut Graph, ids: &[usize]) -> Result<(Vec<Var>, Var)> {
        let gate = self
            .layout
            .gate
            .ok_or_else(|| Error::contract("plain mode has no ontology encoder"))?;
        if ids.is_empty() {
            return Ok((Vec::new(), g.constant(Tensor::zeros(&[gate.encoder.hidden_size]))));
        }
        let xs = self.embed(g, ids)?;
        let (states, (last, _)) = run_lstm(g, &xs, &gate.encoder, false)?;
        Ok((states, last))
    }

    /// `F_i = σ(W_h [h_i; h^o] + b)`, `h'_i = h_i ⊙ F_i`.
    pub fn filter_gate(&self, g: &mut Graph, h: &[Var], ontology_vector: Var) -> Result<(Vec<Var>, Vec<Var>)> {
        let gate = self
            .layout
            .gate
            .ok_or_else(|| Error::contract("plain mode has no filtering gate"))?;
        let (w, b) = (g.param(gate.w), g.param(gate.b));
        let mut gated = Vec::with_capacity(h.len());
        let mut gates = Vec::with_capacity(h.len());
        for &hi in h {
            let joint = g.concat(&[hi, ontology_vector])?;
            let pre = g.linear(w, joint, b)?;
            let f = g.sigmoid(pre);
            gated.push(g.mul(hi, f)?);
            gates.push(f);
        }
        Ok((gated, gates))
    }

    /// Encodes a source. In plain mode `h'` is `h` itself.
    pub fn encode(&self, g: &mut Graph, source: &Source) -> Result<EncodedFindings> {
        let h = self.encode_findings(g, &source.ids)?;
        let (h_prime, gates, ontology_vector) = if self.mode().uses_ontology() {
            let (_, ho) = self.encode_ontology(g, &source.ontology_ids)?;
            let (hp, f) = self.filter_gate(g, &h, ho)?;
            (hp, f, Some(ho))
        } else {
            (h.clone(), Vec::new(), None)
        };
        Self::assemble(g, h, h_prime, gates, ontology_vector)
    }

    fn assemble(
        g: &mut Graph,
        h: Vec<Var>,
        h_prime: Vec<Var>,
        gates: Vec<Var>,
        ontology_vector: Option<Var>,
    ) -> Result<EncodedFindings> {
        let memory = g.stack(&h_prime)?;
        Ok(EncodedFindings {
            h,
            h_prime,
            ontology_vector,
            gates,
            memory,
        })
    }

    /// Encoder built directly from findings states, bypassing the gate.
    pub fn encode_ungated(&self, g: &mut Graph, source: &Source) -> Result<EncodedFindings> {
        let h = self.encode_findings(g, &source.ids)?;
        Self::assemble(g, h.clone(), h, Vec::new(), None)
    }

    /// Decoder start state from the final forward and backward encoder states.
    pub fn initial_state(&self, g: &mut Graph, enc: &EncodedFindings) -> Result<DecoderState> {
        let half = self.config.encoder_hidden / 2;
        let last = *enc.h_prime.last().expect("non-empty encoding");
        let fw = g.slice(last, 0, half)?;
        let bw = g.slice(enc.h_prime[0], half, half)?;
        let joint = g.concat(&[fw, bw])?;
        let (wh, bh) = (g.param(self.layout.bridge_h.0), g.param(self.layout.bridge_h.1));
        let (wc, bc) = (g.param(self.layout.bridge_c.0), g.param(self.layout.bridge_c.1));
        let s = g.linear(wh, joint, bh)?;
        let s = g.tanh(s);
        let c = g.linear(wc, joint, bc)?;
        Ok((s, c))
    }

    /// One decoder step from the previous extended-vocabulary token.
    pub fn decode_step(
        &self,
        g: &mut Graph,
        prev: DecoderState,
        y_prev: usize,
        enc: &EncodedFindings,
        source: &Source,
    ) -> Result<StepOutput> {
        let input = if y_prev < self.vocab.len() { y_prev } else { UNK };
        let emb = self.embed(g, &[input])?[0];
        let (s, c) = lstm_step(g, emb, prev.0, prev.1, &self.layout.decoder)?;

        let v = g.param(self.layout.attn_v);
        let u = g.matvec(v, s)?;
        let scores = g.matvec(enc.memory, u)?;
        let attention = g.softmax(scores)?;
        let context = g.vecmat(attention, enc.memory)?;

        let (ow, ob) = (g.param(self.layout.out.0), g.param(self.layout.out.1));
        let sc = g.concat(&[s, context])?;
        let logits = g.linear(ow, sc, ob)?;
        let p_vocab = g.softmax(logits)?;

        let (cw, cb) = (g.param(self.layout.copy.0), g.param(self.layout.copy.1));
        let switch_in = g.concat(&[context, s, emb])?;
        let z = g.dot(cw, switch_in)?;
        let z = g.add(z, cb)?;
        let p_gen = g.sigmoid(z);

        let mut generated = g.scale_by(p_vocab, p_gen)?;
        if !source.oov.is_empty() {
            let pad = g.constant(Tensor::zeros(&[source.oov.len()]));
            generated = g.concat(&[generated, pad])?;
        }
        let p_copy = g.one_minus(p_gen);
        let copied = g.scale_by(attention, p_copy)?;
        let copied = g.scatter_add(copied, &source.ext_ids, source.ext_len())?;
        let dist = g.add(generated, copied)?;
        Ok(StepOutput {
            state: (s, c),
            attention,
            context,
            p_gen,
            dist,
        })
    }

    /// Teacher-forced mean negative log-likelihood of `targets` (extended
    /// ids ending in EOS).
    pub fn nll(&self, g: &mut Graph, source: &Source, targets: &[usize]) -> Result<Var> {
        if targets.is_empty() {
            return Err(Error::contract("empty target sequence"));
        }
        let enc = self.encode(g, source)?;
        let mut state = self.initial_state(g, &enc)?;
        let mut prev = BOS;
        let mut terms = Vec::with_capacity(targets.len());
        for &y in targets {
            let step = self.decode_step(g, state, prev, &enc, source)?;
            terms.push(g.cross_entropy(step.dist, y)?);
            state = step.state;
            prev = y;
        }
        g.mean(&terms)
    }
}
