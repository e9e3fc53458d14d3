//! Token-level building blocks shared by the transformer head and its tests.

use crate::error::{Error, Result};
use crate::numerics::{Element, Graph, Tensor};

/// Scaled dot-product attention over `d x n` matrices whose columns are
/// tokens: every output token is a convex combination of the value tokens,
/// weighted by softmax(K^T Q / sqrt(d)) per query.
pub fn attention<E: Element>(g: &mut Graph<E>, q: Tensor, k: Tensor, v: Tensor) -> Result<Tensor> {
    let (qs, ks, vs) = (
        g.shape(q).to_vec(),
        g.shape(k).to_vec(),
        g.shape(v).to_vec(),
    );
    if qs.len() != 2 || qs != ks || qs != vs {
        return Err(Error::Shape(format!(
            "attention expects matching d x n matrices, got q {qs:?}, k {ks:?}, v {vs:?}"
        )));
    }
    let d = qs[0];
    // scores[i, j] = q_i · k_j / sqrt(d); softmax over keys j (last axis).
    let qt = g.transpose(q)?;
    let raw = g.matmul(qt, k)?;
    let scaled = g.scale(raw, E::from_f64(1.0 / (d as f64).sqrt()))?;
    let weights = g.softmax(scaled)?;
    let wt = g.transpose(weights)?;
    g.matmul(v, wt)
}

/// Concatenate two equally-shaped `d x L` token matrices into `d x 2L`: the
/// first L tokens come from x, the last L from y.
pub fn tokenize_pair<E: Element>(g: &mut Graph<E>, tx: Tensor, ty: Tensor) -> Result<Tensor> {
    let (xs, ys) = (g.shape(tx).to_vec(), g.shape(ty).to_vec());
    if xs.len() != 2 || xs != ys {
        return Err(Error::Shape(format!(
            "tokenize_pair expects matching d x L matrices, got {xs:?} vs {ys:?}"
        )));
    }
    g.concat_many(&[tx, ty], 1)
}
