//! Multi-head scaled dot-product attention composed from tape primitives.

use super::tape::{Graph, NodeId};
use super::NumericsError;

/// Projection parameters for one attention layer, already inserted as
/// graph leaves. Weights are `[D, D]` (output rows), biases `[D]`.
#[derive(Clone, Copy)]
pub struct AttentionParams {
    pub wq: NodeId,
    pub bq: NodeId,
    pub wk: NodeId,
    pub bk: NodeId,
    pub wv: NodeId,
    pub bv: NodeId,
    pub wo: NodeId,
    pub bo: NodeId,
}

/// Attention over batched sequences `[B, S, D]`. No causal masking.
///
/// Each sequence in the batch attends independently; projections are shared.
pub fn multi_head_attention_batched(
    g: &mut Graph,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    heads: usize,
    params: &AttentionParams,
) -> Result<NodeId, NumericsError> {
    let s = g.shape(q).to_vec();
    if s.len() != 3 {
        return Err(NumericsError::Dimension {
            context: "multi_head_attention",
            detail: format!("expected [B, S, D], got {:?}", s),
        });
    }
    let d = s[2];
    if heads == 0 || d % heads != 0 {
        return Err(NumericsError::Config(format!(
            "attention width {} not divisible by {} heads",
            d, heads
        )));
    }
    let dh = d / heads;

    let qp = linear_batched(g, q, params.wq, params.bq)?;
    let kp = linear_batched(g, k, params.wk, params.bk)?;
    let vp = linear_batched(g, v, params.wv, params.bv)?;

    let qh = g.split_heads(qp, heads)?;
    let kh = g.split_heads(kp, heads)?;
    let vh = g.split_heads(vp, heads)?;

    let scores = g.batch_matmul(qh, kh, false, true)?;
    let scaled = g.scale(scores, 1.0 / (dh as f64).sqrt());
    let attn = g.softmax(scaled, 2)?;
    let ctx = g.batch_matmul(attn, vh, false, false)?;
    let merged = g.merge_heads(ctx, heads)?;
    linear_batched(g, merged, params.wo, params.bo)
}

/// Attention over a single sequence `[S, D]`.
pub fn multi_head_attention(
    g: &mut Graph,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    heads: usize,
    params: &AttentionParams,
) -> Result<NodeId, NumericsError> {
    let s = g.shape(q).to_vec();
    if s.len() != 2 {
        return Err(NumericsError::Dimension {
            context: "multi_head_attention",
            detail: format!("expected [S, D], got {:?}", s),
        });
    }
    let q3 = g.reshape(q, vec![1, s[0], s[1]])?;
    let k3 = {
        let ks = g.shape(k).to_vec();
        g.reshape(k, vec![1, ks[0], ks[1]])?
    };
    let v3 = {
        let vs = g.shape(v).to_vec();
        g.reshape(v, vec![1, vs[0], vs[1]])?
    };
    let out = multi_head_attention_batched(g, q3, k3, v3, heads, params)?;
    let os = g.shape(out).to_vec();
    g.reshape(out, vec![os[1], os[2]])
}

/// x `[B, S, F]` times weight `[F_out, F]` (transposed) plus bias, applied
/// position-wise.
pub fn linear_batched(g: &mut Graph, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
    let s = g.shape(x).to_vec();
    let f = *s.last().unwrap();
    let rows: usize = s[..s.len() - 1].iter().product();
    let flat = g.reshape(x, vec![rows, f])?;
    let y = g.matmul(flat, w, false, true)?;
    let y = g.add_bias(y, b)?;
    let f_out = g.shape(w)[0];
    let mut out_shape = s;
    *out_shape.last_mut().unwrap() = f_out;
    g.reshape(y, out_shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use approx::assert_abs_diff_eq;

    fn identity_params(g: &mut Graph, d: usize) -> AttentionParams {
        let eye = |g: &mut Graph| {
            let mut data = vec![0.0; d * d];
            for i in 0..d {
                data[i * d + i] = 1.0;
            }
            g.leaf(Tensor::new(vec![d, d], data).unwrap(), false)
        };
        let zb = |g: &mut Graph| g.leaf(Tensor::zeros(&[d]), false);
        AttentionParams {
            wq: eye(g),
            bq: zb(g),
            wk: eye(g),
            bk: zb(g),
            wv: eye(g),
            bv: zb(g),
            wo: eye(g),
            bo: zb(g),
        }
    }

    #[test]
    fn single_step_attention_returns_value() {
        // T=1: softmax over one score is 1.0, so output == v (identity projections).
        let mut g = Graph::new();
        let p = identity_params(&mut g, 4);
        let q = g.leaf(Tensor::new(vec![1, 4], vec![0.3, -1.0, 2.0, 0.7]).unwrap(), false);
        let v = g.leaf(Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap(), false);
        let out = multi_head_attention(&mut g, q, q, v, 2, &p).unwrap();
        for (a, b) in g.value(out).data().iter().zip(g.value(v).data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_hot_queries_recover_softmax_mixture() {
        // Identity projections, single head: rows of softmax(q kᵀ / sqrt(d)) weight v.
        let d = 2;
        let mut g = Graph::new();
        let p = identity_params(&mut g, d);
        let q = g.leaf(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), false);
        let v = g.leaf(Tensor::from_rows(&[vec![5.0, -1.0], vec![2.0, 3.0]]).unwrap(), false);
        let out = multi_head_attention(&mut g, q, q, v, 1, &p).unwrap();

        // Direct oracle: scores = q qᵀ / sqrt(2), row-softmax, times v.
        let scale = 1.0 / (d as f64).sqrt();
        let scores = [[1.0 * scale, 0.0], [0.0, 1.0 * scale]];
        let mut expect = [[0.0; 2]; 2];
        for r in 0..2 {
            let m = scores[r].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores[r].iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            let w: Vec<f64> = e.iter().map(|x| x / z).collect();
            for c in 0..2 {
                expect[r][c] = w[0] * g.value(v).data()[c] + w[1] * g.value(v).data()[2 + c];
            }
        }
        let got = g.value(out).data();
        for r in 0..2 {
            for c in 0..2 {
                assert_abs_diff_eq!(got[r * 2 + c], expect[r][c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indivisible_heads() {
        let mut g = Graph::new();
        let p = identity_params(&mut g, 4);
        let q = g.leaf(Tensor::zeros(&[3, 4]), false);
        assert!(multi_head_attention(&mut g, q, q, q, 3, &p).is_err());
    }
}
