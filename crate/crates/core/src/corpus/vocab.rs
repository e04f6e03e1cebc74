use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// 64-bit FNV-1a digest rendered as hex; stable across platforms and releases.
pub fn fingerprint(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tokens(RESERVED.iter().map(|s| s.to_string()).collect()).expect("reserved tokens are valid")
    }
}

impl Vocab {
    /// Counts tokens across `sequences` and keeps those seen at least
    /// `min_freq` times, most frequent first (ties lexicographic), capped at
    /// `max_size` entries beyond the reserved ones.
    pub fn build<'a, I, S>(sequences: I, min_freq: usize, max_size: Option<usize>) -> Result<Self>
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        if min_freq == 0 {
            return Err(Error::contract("min_freq must be at least 1"));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seq in sequences {
            for tok in seq.as_ref() {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq && !RESERVED.contains(t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        if let Some(max) = max_size {
            ranked.truncate(max);
        }
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Restores a vocabulary from its index→token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::contract("vocabulary must start with the 4 reserved tokens"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::contract(format!("duplicate vocabulary token '{t}'")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn hash(&self) -> String {
        fingerprint(self.tokens.join("\n").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(texts: &[&str]) -> Vec<Vec<String>> {
        texts
            .iter()
            .map(|t| t.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn empty_corpus_has_reserved_only() {
        let v = Vocab::build(&Vec::<Vec<String>>::new(), 1, None).unwrap();
        assert_eq!(v.tokens(), RESERVED);
    }

    #[test]
    fn frequency_order_and_min_freq() {
        let data = seqs(&["a a b"]);
        let v = Vocab::build(&data, 1, None).unwrap();
        assert_eq!(v.tokens()[4..], ["a", "b"]);
        let v = Vocab::build(&data, 2, None).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("b"), UNK);
        assert!(Vocab::build(&data, 0, None).is_err());
    }

    #[test]
    fn ties_lexicographic_and_cap() {
        let data = seqs(&["c b a", "d"]);
        let v = Vocab::build(&data, 1, Some(2)).unwrap();
        assert_eq!(v.tokens()[4..], ["a", "b"]);
    }

    #[test]
    fn round_trip_indices() {
        let data = seqs(&["x y z y", "z z w"]);
        let v = Vocab::build(&data, 1, None).unwrap();
        for i in 4..v.len() {
            assert_eq!(v.id(v.token(i).unwrap()), i);
        }
        let restored = Vocab::from_tokens(v.tokens().to_vec()).unwrap();
        assert_eq!(restored, v);
        assert_eq!(restored.hash(), v.hash());
    }
}
