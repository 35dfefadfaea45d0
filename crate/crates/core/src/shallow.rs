//! Surface encoder: stacks the argument's word vectors, summarizes each
//! embedding dimension with average/max/min pooling, and squashes the
//! concatenated two-argument summary onto the unit sphere.

use crate::corpus::DiscourseInstance;
use crate::embeddings::EmbeddingTable;
use crate::linalg::{tanh_normalize, Matrix};

/// One pooled argument. `summary` is laid out `[avg; max; min]`, each block
/// `d1` wide — this ordering is a serialization commitment, not a styling
/// choice. `max_source`/`min_source` record, per dimension, the token
/// position that supplied the extremum (lowest position wins ties), which
/// the backward pass uses to route gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledArgument {
    /// Vocabulary index per token, unknowns already mapped.
    pub token_indices: Vec<usize>,
    /// `[avg; max; min]`, length `3 * d1`.
    pub summary: Vec<f64>,
    pub max_source: Vec<usize>,
    pub min_source: Vec<usize>,
}

/// Resolves each token to a vocabulary index and stacks the corresponding
/// vectors, one token per row.
pub fn embed_argument(tokens: &[String], table: &EmbeddingTable) -> (Vec<usize>, Matrix) {
    assert!(!tokens.is_empty(), "cannot embed an empty argument");
    let indices: Vec<usize> = tokens.iter().map(|t| table.index_or_unknown(t)).collect();
    let mut x = Matrix::zeros(tokens.len(), table.dim());
    for (row, &idx) in indices.iter().enumerate() {
        x.row_mut(row).copy_from_slice(table.vector(idx));
    }
    (indices, x)
}

pub fn pool_argument(tokens: &[String], table: &EmbeddingTable) -> PooledArgument {
    let (token_indices, x) = embed_argument(tokens, table);
    let n = x.rows();
    let d = x.cols();
    let mut summary = vec![0.0; 3 * d];
    let mut max_source = vec![0usize; d];
    let mut min_source = vec![0usize; d];
    for j in 0..d {
        let mut sum = x[(0, j)];
        let mut max_v = x[(0, j)];
        let mut min_v = x[(0, j)];
        for i in 1..n {
            let v = x[(i, j)];
            sum += v;
            // strict comparisons keep the earliest token on ties
            if v > max_v {
                max_v = v;
                max_source[j] = i;
            }
            if v < min_v {
                min_v = v;
                min_source[j] = i;
            }
        }
        summary[j] = sum / n as f64;
        summary[d + j] = max_v;
        summary[2 * d + j] = min_v;
    }
    PooledArgument { token_indices, summary, max_source, min_source }
}

/// The full surface representation of a discourse.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscourseEncoding {
    pub arg1: PooledArgument,
    pub arg2: PooledArgument,
    /// `[summary(Arg1); summary(Arg2)]`, length `6 * d1`, pre-squash.
    pub concat: Vec<f64>,
    /// Unit-norm squashed representation (all zeros when `concat` is zero).
    pub p: Vec<f64>,
}

pub fn encode_discourse(instance: &DiscourseInstance, table: &EmbeddingTable) -> DiscourseEncoding {
    let arg1 = pool_argument(&instance.arg1, table);
    let arg2 = pool_argument(&instance.arg2, table);
    let mut concat = Vec::with_capacity(arg1.summary.len() + arg2.summary.len());
    concat.extend_from_slice(&arg1.summary);
    concat.extend_from_slice(&arg2.summary);
    let p = tanh_normalize(&concat);
    DiscourseEncoding { arg1, arg2, concat, p }
}
