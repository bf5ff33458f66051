//! Transformer blocks for the dual path.
//!
//! Pre-norm residual layout with sinusoidal positional encoding added at
//! block entry: y0 = x + PE; y1 = y0 + MHA(LN(y0)); y2 = y1 + FF(LN(y1)).
//! The intra stage runs this over `[N_C, C, F]` (attending within chunks),
//! the inter stage over `[C, N_C, F]` (attending across chunks).

use crate::numerics::{
    linear_batched, multi_head_attention_batched, AttentionParams, Graph, NodeId, NumericsError, Tensor,
};

use super::params::{Binding, ParamSet};

/// Register one block's parameters under `prefix`.
pub fn register_block_params(params: &mut ParamSet, prefix: &str, channels: usize, ff_dim: usize, seed: u64) {
    for w in ["wq", "wk", "wv", "wo"] {
        params.add(&format!("{prefix}.attn.{w}"), &[channels, channels], channels, seed);
    }
    for b in ["bq", "bk", "bv", "bo"] {
        params.add(&format!("{prefix}.attn.{b}"), &[channels], channels, seed);
    }
    params.add(&format!("{prefix}.ff.w1"), &[ff_dim, channels], channels, seed);
    params.add(&format!("{prefix}.ff.b1"), &[ff_dim], channels, seed);
    params.add(&format!("{prefix}.ff.w2"), &[channels, ff_dim], ff_dim, seed);
    params.add(&format!("{prefix}.ff.b2"), &[channels], ff_dim, seed);
}

fn attn_params(b: &Binding, prefix: &str) -> AttentionParams {
    AttentionParams {
        wq: b.id(&format!("{prefix}.attn.wq")),
        wk: b.id(&format!("{prefix}.attn.wk")),
        wv: b.id(&format!("{prefix}.attn.wv")),
        wo: b.id(&format!("{prefix}.attn.wo")),
        bq: b.id(&format!("{prefix}.attn.bq")),
        bk: b.id(&format!("{prefix}.attn.bk")),
        bv: b.id(&format!("{prefix}.attn.bv")),
        bo: b.id(&format!("{prefix}.attn.bo")),
    }
}

/// Sinusoidal positional encoding tiled over the batch: `[batch, len, dim]`.
fn positional_encoding(batch: usize, len: usize, dim: usize) -> Tensor {
    let mut row = vec![0.0f64; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            row[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    let mut data = Vec::with_capacity(batch * len * dim);
    for _ in 0..batch {
        data.extend_from_slice(&row);
    }
    Tensor::new(vec![batch, len, dim], data).expect("posenc shape")
}

/// One transformer block over batched sequences `[B, S, F]`.
pub fn transformer_block(
    g: &mut Graph,
    binding: &Binding,
    prefix: &str,
    x: NodeId,
    heads: usize,
) -> Result<NodeId, NumericsError> {
    let shape = g.shape(x).to_vec();
    let (b, s, f) = (shape[0], shape[1], shape[2]);
    let pe = g.leaf(positional_encoding(b, s, f), false);
    let y0 = g.add(x, pe)?;

    let ln1 = g.layer_norm(y0, 2)?;
    let att = multi_head_attention_batched(g, ln1, ln1, ln1, heads, &attn_params(binding, prefix))?;
    let y1 = g.add(y0, att)?;

    let ln2 = g.layer_norm(y1, 2)?;
    let h = linear_batched(g, ln2, binding.id(&format!("{prefix}.ff.w1")), binding.id(&format!("{prefix}.ff.b1")))?;
    let h = g.relu(h);
    let h = linear_batched(g, h, binding.id(&format!("{prefix}.ff.w2")), binding.id(&format!("{prefix}.ff.b2")))?;
    g.add(y1, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream_rng;
    use rand::Rng;

    fn block_setup(channels: usize, ff: usize) -> ParamSet {
        let mut p = ParamSet::new();
        register_block_params(&mut p, "blk", channels, ff, 3);
        p
    }

    #[test]
    fn shape_preserved() {
        let params = block_setup(8, 16);
        let mut g = Graph::new();
        let b = params.bind(&mut g);
        let mut rng = stream_rng(1, &["block"]);
        let data: Vec<f64> = (0..3 * 5 * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = g.leaf(Tensor::new(vec![3, 5, 8], data).unwrap(), false);
        let y = transformer_block(&mut g, &b, "blk", x, 2).unwrap();
        assert_eq!(g.shape(y), &[3, 5, 8]);
        assert!(g.value(y).is_finite());
    }

    #[test]
    fn batch_items_are_independent() {
        // Processing chunks in a different batch order permutes outputs the
        // same way: attention never crosses the batch axis.
        let params = block_setup(8, 16);
        let mut rng = stream_rng(2, &["perm"]);
        let a: Vec<f64> = (0..5 * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..5 * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let run = |first: &[f64], second: &[f64], params: &ParamSet| {
            let mut g = Graph::new();
            let b = params.bind(&mut g);
            let mut data = first.to_vec();
            data.extend_from_slice(second);
            let x = g.leaf(Tensor::new(vec![2, 5, 8], data).unwrap(), false);
            let y = transformer_block(&mut g, &b, "blk", x, 2).unwrap();
            g.value(y).data().to_vec()
        };
        let fwd = run(&a, &c, &params);
        let rev = run(&c, &a, &params);
        let half = 5 * 8;
        assert_eq!(&fwd[..half], &rev[half..]);
        assert_eq!(&fwd[half..], &rev[..half]);
    }

    #[test]
    fn zeroed_output_projections_leave_feedforward_path() {
        // With wo and the second FF weight zeroed the block reduces to
        // x + PE (both residual branches contribute zero).
        let mut params = block_setup(4, 8);
        for name in ["blk.attn.wo", "blk.attn.bo", "blk.ff.w2", "blk.ff.b2"] {
            let p = params.get_mut(name);
            for v in p.value.data_mut() {
                *v = 0.0;
            }
        }
        let mut g = Graph::new();
        let b = params.bind(&mut g);
        let x = g.leaf(Tensor::full(&[1, 3, 4], 0.5), false);
        let y = transformer_block(&mut g, &b, "blk", x, 2).unwrap();
        let pe = positional_encoding(1, 3, 4);
        for ((got, want_pe), want_x) in
            g.value(y).data().iter().zip(pe.data()).zip(g.value(x).data())
        {
            assert!((got - (want_pe + want_x)).abs() < 1e-12);
        }
    }
}
