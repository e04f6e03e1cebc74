//! Token embedding providers shared by the selector and the summarizer.

use crate::corpus::EmbeddingTable;
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamSet, Var};

/// Maps token ids to vectors on a graph. Static lookup tables are the
/// only implementation today; a contextual encoder can slot in behind the
/// same interface.
pub trait EmbeddingProvider {
    fn dim(&self) -> usize;

    fn embed(&self, g: &mut Graph, ids: &[usize]) -> Result<Vec<Var>>;
}

/// Row lookup into a `|V|×D` parameter matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StaticEmbedding {
    pub table: ParamId,
    pub dim: usize,
    pub vocab_size: usize,
}

impl StaticEmbedding {
    pub fn register(params: &mut ParamSet, name: &str, table: EmbeddingTable) -> Result<Self> {
        let (vocab_size, dim) = (table.rows(), table.dim());
        let id = if table.trainable {
            params.add(name, table.matrix)?
        } else {
            params.add_frozen(name, table.matrix)?
        };
        Ok(StaticEmbedding {
            table: id,
            dim,
            vocab_size,
        })
    }

    pub fn lookup(params: &ParamSet, name: &str) -> Result<Self> {
        let table = params
            .id(name)
            .ok_or_else(|| Error::contract(format!("missing parameter {name}")))?;
        let shape = params.get(table).shape();
        if shape.len() != 2 {
            return Err(Error::shape("embedding table", shape, &[]));
        }
        Ok(StaticEmbedding {
            table,
            dim: shape[1],
            vocab_size: shape[0],
        })
    }
}

impl EmbeddingProvider for StaticEmbedding {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, g: &mut Graph, ids: &[usize]) -> Result<Vec<Var>> {
        ids.iter().map(|&i| g.param_row(self.table, i)).collect()
    }
}
