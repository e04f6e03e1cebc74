//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "ONTOSUM\0"
//! version  u32
//! kind     str
//! meta     u32 count, then (key str, value str) pairs
//! vocab    u32 count, then token strs
//! tensors  u32 count, then per tensor:
//!          name str, trainable u8, rank u32, dims u64 × rank,
//!          values u64, f64 × values
//! ```
//!
//! where `str` is a u32 byte length followed by UTF-8.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::selector::{Selector, SelectorConfig};
use crate::summarizer::{Mode, Summarizer, SummarizerConfig};
use crate::tensor::{ParamSet, Tensor};

pub const MAGIC: &[u8; 8] = b"ONTOSUM\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Selector,
    Summarizer,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Selector => "selector",
            ModelKind::Summarizer => "summarizer",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selector" => Ok(ModelKind::Selector),
            "summarizer" => Ok(ModelKind::Summarizer),
            other => Err(Error::contract(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub metadata: BTreeMap<String, String>,
    pub vocab: Vocab,
    pub params: ParamSet,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_len(out: &mut Vec<u8>, n: usize) {
    put_u32(out, u32::try_from(n).expect("checkpoint section too large"));
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_len(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(Error::Truncated(what))?;
        let bytes = &self.buf[self.pos..end];
        self.pos = end;
        Ok(bytes)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &'static str) -> Result<usize> {
        Ok(self.u32(what)? as usize)
    }

    fn string(&mut self, what: &'static str) -> Result<String> {
        let n = self.len(what)?;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::contract(format!("invalid UTF-8 in checkpoint {what}")))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_str(&mut out, &self.kind.to_string());
        put_len(&mut out, self.metadata.len());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_len(&mut out, self.vocab.len());
        for t in self.vocab.tokens() {
            put_str(&mut out, t);
        }
        put_len(&mut out, self.params.len());
        for id in self.params.ids() {
            let t = self.params.get(id);
            put_str(&mut out, self.params.name(id));
            out.push(u8::from(self.params.is_trainable(id)));
            put_len(&mut out, t.shape().len());
            for &d in t.shape() {
                put_u64(&mut out, d as u64);
            }
            put_u64(&mut out, t.len() as u64);
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
            return Err(Error::UnrecognizedCheckpoint);
        }
        let mut r = Reader { buf, pos: MAGIC.len() };
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: VERSION,
            });
        }
        let kind: ModelKind = r.string("model kind")?.parse()?;
        let mut metadata = BTreeMap::new();
        for _ in 0..r.len("metadata count")? {
            let k = r.string("metadata key")?;
            let v = r.string("metadata value")?;
            metadata.insert(k, v);
        }
        let n_vocab = r.len("vocabulary size")?;
        let tokens = (0..n_vocab)
            .map(|_| r.string("vocabulary token"))
            .collect::<Result<Vec<_>>>()?;
        let vocab = Vocab::from_tokens(tokens)?;
        let mut params = ParamSet::new();
        for _ in 0..r.len("tensor count")? {
            let name = r.string("tensor name")?;
            let trainable = r.u8("tensor flags")? != 0;
            let rank = r.len("tensor rank")?;
            let shape = (0..rank)
                .map(|_| r.u64("tensor shape").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count = r.u64("tensor length")? as usize;
            let declared = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            if declared != Some(count) {
                return Err(Error::TensorShape {
                    name,
                    shape,
                    len: count,
                });
            }
            let bytes = r.take(
                count.checked_mul(8).ok_or(Error::Truncated("tensor payload"))?,
                "tensor payload",
            )?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(shape, data)?;
            if trainable {
                params.add(name, t)?;
            } else {
                params.add_frozen(name, t)?;
            }
        }
        if r.pos != buf.len() {
            return Err(Error::contract(format!(
                "{} trailing bytes after checkpoint payload",
                buf.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            kind,
            metadata,
            vocab,
            params,
        })
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::contract(format!("checkpoint metadata lacks '{key}'")))
    }

    fn meta_parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| Error::contract(format!("checkpoint metadata '{key}' has invalid value '{raw}'")))
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::contract(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Packs a selector; `extra` carries training metadata.
    pub fn from_selector(sel: &Selector, extra: BTreeMap<String, String>) -> Self {
        let mut metadata = extra;
        let c = &sel.config;
        for (k, v) in [
            ("model.embedding_dim", c.embedding_dim.to_string()),
            ("model.hidden_size", c.hidden_size.to_string()),
            ("model.dropout", c.dropout.to_string()),
            ("model.init_scale", c.init_scale.to_string()),
        ] {
            metadata.insert(k.into(), v);
        }
        Checkpoint {
            kind: ModelKind::Selector,
            metadata,
            vocab: sel.vocab.clone(),
            params: sel.params.clone(),
        }
    }

    pub fn to_selector(&self) -> Result<Selector> {
        self.expect_kind(ModelKind::Selector)?;
        let config = SelectorConfig {
            embedding_dim: self.meta_parse("model.embedding_dim")?,
            hidden_size: self.meta_parse("model.hidden_size")?,
            dropout: self.meta_parse("model.dropout")?,
            init_scale: self.meta_parse("model.init_scale")?,
        };
        Selector::from_params(config, self.vocab.clone(), self.params.clone())
    }

    pub fn from_summarizer(m: &Summarizer, extra: BTreeMap<String, String>) -> Self {
        let mut metadata = extra;
        let c = &m.config;
        for (k, v) in [
            ("model.embedding_dim", c.embedding_dim.to_string()),
            ("model.encoder_hidden", c.encoder_hidden.to_string()),
            ("model.ontology_hidden", c.ontology_hidden.to_string()),
            ("model.decoder_hidden", c.decoder_hidden.to_string()),
            ("model.dropout", c.dropout.to_string()),
            ("model.init_scale", c.init_scale.to_string()),
            ("model.mode", c.mode.to_string()),
        ] {
            metadata.insert(k.into(), v);
        }
        Checkpoint {
            kind: ModelKind::Summarizer,
            metadata,
            vocab: m.vocab.clone(),
            params: m.params.clone(),
        }
    }

    pub fn to_summarizer(&self) -> Result<Summarizer> {
        self.expect_kind(ModelKind::Summarizer)?;
        let config = SummarizerConfig {
            embedding_dim: self.meta_parse("model.embedding_dim")?,
            encoder_hidden: self.meta_parse("model.encoder_hidden")?,
            ontology_hidden: self.meta_parse("model.ontology_hidden")?,
            decoder_hidden: self.meta_parse("model.decoder_hidden")?,
            dropout: self.meta_parse("model.dropout")?,
            init_scale: self.meta_parse("model.init_scale")?,
            mode: self.meta("model.mode")?.parse::<Mode>()?,
        };
        Summarizer::from_params(config, self.vocab.clone(), self.params.clone())
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParamSet::new();
        params
            .add(
                "w",
                Tensor::new(vec![2, 3], vec![0.1, -2.5, f64::MIN_POSITIVE, 1e300, -0.0, 3.0]).unwrap(),
            )
            .unwrap();
        params.add_frozen("emb", Tensor::vector(vec![1.0, 2.0])).unwrap();
        params.add("s", Tensor::scalar(0.25)).unwrap();
        let mut metadata = BTreeMap::new();
        metadata.insert("epoch".into(), "7".into());
        metadata.insert("note".into(), "ünïcode = ok".into());
        let vocab = Vocab::build(&[vec!["effusion".to_string(), "ß".to_string()]], 1, None).unwrap();
        Checkpoint {
            kind: ModelKind::Summarizer,
            metadata,
            vocab,
            params,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.kind, c.kind);
        assert_eq!(back.metadata, c.metadata);
        assert_eq!(back.vocab.tokens(), c.vocab.tokens());
        assert_eq!(back.params.len(), c.params.len());
        for (a, b) in c.params.ids().zip(back.params.ids()) {
            assert_eq!(c.params.name(a), back.params.name(b));
            assert_eq!(c.params.is_trainable(a), back.params.is_trainable(b));
            let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(c.params.get(a).shape(), back.params.get(b).shape());
            assert_eq!(bits(c.params.get(a)), bits(back.params.get(b)));
        }
        assert_eq!(back.to_bytes(), c.to_bytes());
    }

    #[test]
    fn corruption_is_reported_distinctly() {
        let bytes = sample().to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(
            Checkpoint::from_bytes(&bad).unwrap_err().to_string(),
            "unrecognized checkpoint format"
        );

        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(Error::CheckpointVersion { found: 9, expected: 1 })
        ));

        for cut in [10, 30, bytes.len() - 3] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(Error::Truncated(_))
            ));
        }

        // first tensor "w": grow the declared leading dimension from 2 to 4
        let name_at = bytes.windows(5).position(|w| w == b"\x01\x00\x00\x00w").unwrap();
        let dim0 = name_at + 5 + 1 + 4;
        let mut bad = bytes.clone();
        bad[dim0] = 4;
        let err = Checkpoint::from_bytes(&bad).unwrap_err();
        assert!(
            matches!(err, Error::TensorShape { ref name, .. } if name == "w"),
            "{err}"
        );
        assert!(err.to_string().contains("'w'"));

        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }

    #[test]
    fn file_round_trip_and_kind_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let c = sample();
        save_checkpoint(&path, &c).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.to_bytes(), c.to_bytes());
        assert!(back.to_selector().is_err());
        assert!(load_checkpoint(dir.path().join("missing")).is_err());
    }
}
