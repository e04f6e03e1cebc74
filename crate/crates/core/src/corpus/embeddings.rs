use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::info;
use rand::Rng;

use super::Vocab;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Rows for tokens without a pretrained vector are drawn from this range.
pub const INIT_RANGE: f64 = 0.1;

/// A `|V|×D` embedding matrix aligned with a vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    pub trainable: bool,
    /// Fraction of vocabulary rows copied from a pretrained file.
    pub coverage: f64,
}

impl EmbeddingTable {
    pub fn random<R: Rng + ?Sized>(vocab_len: usize, dim: usize, trainable: bool, rng: &mut R) -> Self {
        EmbeddingTable {
            matrix: Tensor::uniform(&[vocab_len, dim], INIT_RANGE, rng),
            trainable,
            coverage: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn rows(&self) -> usize {
        self.matrix.shape()[0]
    }
}

/// Loads text-format vectors (`token v1 .. vD` per line). `dim`, when
/// given, fixes D; otherwise the first line decides it.
pub fn load_embeddings<R: Rng + ?Sized>(
    path: impl AsRef<Path>,
    vocab: &Vocab,
    dim: Option<usize>,
    trainable: bool,
    rng: &mut R,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let format_err = |line: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut found: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut dim = dim;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| format_err(line_no, format!("unreadable float '{p}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(format_err(
                    line_no,
                    format!("expected {d} values, found {}", values.len()),
                ))
            }
            _ => {}
        }
        if values.is_empty() {
            return Err(format_err(line_no, "vector has no values".into()));
        }
        if let Some(idx) = vocab.get(token) {
            found.push((idx, values));
        }
    }
    let dim = dim.ok_or_else(|| format_err(0, "empty embedding file and no dimension configured".into()))?;

    let mut table = EmbeddingTable::random(vocab.len(), dim, trainable, rng);
    let mut covered = vec![false; vocab.len()];
    let data = table.matrix.data_mut();
    for (idx, values) in found {
        data[idx * dim..(idx + 1) * dim].copy_from_slice(&values);
        covered[idx] = true;
    }
    let hits = covered.iter().filter(|c| **c).count();
    table.coverage = if vocab.is_empty() {
        0.0
    } else {
        hits as f64 / vocab.len() as f64
    };
    info!(
        "loaded {dim}-d embeddings from {}: {hits}/{} vocabulary rows covered ({:.1}%)",
        path.display(),
        vocab.len(),
        100.0 * table.coverage
    );
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn vocab(extra: &[&str]) -> Vocab {
        let mut toks: Vec<String> = Vocab::default().tokens().to_vec();
        toks.extend(extra.iter().map(|s| s.to_string()));
        Vocab::from_tokens(toks).unwrap()
    }

    #[test]
    fn no_coverage_is_random_init() {
        let v = vocab(&["lung"]);
        let f = file("heart 0.5 0.5 0.5\n");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = load_embeddings(f.path(), &v, None, true, &mut rng).unwrap();
        assert_eq!(t.coverage, 0.0);
        assert_eq!(t.matrix.shape(), [5, 3]);
        assert!(t.matrix.data().iter().all(|x| x.abs() <= INIT_RANGE));
        assert!(t.trainable);
    }

    #[test]
    fn exact_copy() {
        let toks = ["<pad>", "<unk>", "<s>", "</s>"];
        let v = vocab(&[]);
        let body: String = toks
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{t} {i} {}.5 -1\n", i))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = load_embeddings(file(&body).path(), &v, None, false, &mut rng).unwrap();
        assert_eq!(t.coverage, 1.0);
        assert_eq!(&t.matrix.data()[3..6], &[1.0, 1.5, -1.0]);
        assert!(!t.trainable);
    }

    #[test]
    fn inconsistent_dimension_names_line() {
        let v = vocab(&["a", "b"]);
        let f = file("a 1 2 3 4\nb 1 2 3\n");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = load_embeddings(f.path(), &v, None, true, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");

        let f = file("a 1 x 3\n");
        let err = load_embeddings(f.path(), &v, None, true, &mut rng).unwrap_err();
        assert!(err.to_string().contains("line 1"));

        let f = file("a 1 2\n");
        assert!(load_embeddings(f.path(), &v, Some(3), true, &mut rng).is_err());
    }
}
