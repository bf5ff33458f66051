//! Finite-difference verification of reverse-mode gradients.
//!
//! The checker rebuilds the forward computation from scratch for every
//! probe, so it stays independent of the tape's backward pass.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Graph, NodeId};
use super::tensor::Tensor;
use super::NumericsError;

/// Builds a scalar-valued computation over the given leaves.
pub type ScalarFn<'a> = dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId, NumericsError> + 'a;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error across all probed elements.
    pub max_rel_err: f64,
    /// (input index, element index) of the worst probe.
    pub worst: (usize, usize),
    pub probes: usize,
}

fn eval(f: &ScalarFn, inputs: &[Tensor]) -> Result<f64, NumericsError> {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let root = f(&mut g, &ids)?;
    let v = g.value(root);
    if v.shape() != [1] {
        return Err(NumericsError::Dimension {
            context: "grad_check",
            detail: format!("computation must be scalar-valued, got {:?}", v.shape()),
        });
    }
    v.assert_finite("grad_check forward")?;
    Ok(v.item())
}

fn analytic_grads(f: &ScalarFn, inputs: &[Tensor]) -> Result<Vec<Tensor>, NumericsError> {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let root = f(&mut g, &ids)?;
    let grads = g.backward(root)?;
    ids.iter()
        .zip(inputs)
        .map(|(&id, t)| {
            let gr = grads[id].clone().unwrap_or_else(|| Tensor::zeros(t.shape()));
            gr.assert_finite("grad_check backward")?;
            Ok(gr)
        })
        .collect()
}

/// Relative error with an absolute floor so near-zero gradients compare on
/// an absolute scale instead of blowing up the ratio.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Compare reverse-mode gradients against central differences
/// `(f(x+h) - f(x-h)) / 2h`, probing every element of every input.
pub fn grad_check(f: &ScalarFn, inputs: &[Tensor], h: f64) -> Result<GradCheckReport, NumericsError> {
    let probes: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |j| (i, j)))
        .collect();
    run_probes(f, inputs, h, &probes)
}

/// Like [`grad_check`], probing at most `per_tensor` randomly chosen
/// elements of each input. Deterministic for a fixed seed.
pub fn grad_check_sampled(
    f: &ScalarFn,
    inputs: &[Tensor],
    h: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport, NumericsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        let n = t.numel();
        if n <= per_tensor {
            probes.extend((0..n).map(|j| (i, j)));
        } else {
            probes.extend(sample(&mut rng, n, per_tensor).into_iter().map(|j| (i, j)));
        }
    }
    run_probes(f, inputs, h, &probes)
}

fn run_probes(
    f: &ScalarFn,
    inputs: &[Tensor],
    h: f64,
    probes: &[(usize, usize)],
) -> Result<GradCheckReport, NumericsError> {
    let analytic = analytic_grads(f, inputs)?;
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst: (0, 0), probes: probes.len() };
    for &(i, j) in probes {
        let orig = work[i].data()[j];
        work[i].data_mut()[j] = orig + h;
        let plus = eval(f, &work)?;
        work[i].data_mut()[j] = orig - h;
        let minus = eval(f, &work)?;
        work[i].data_mut()[j] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        if !numeric.is_finite() {
            return Err(NumericsError::NonFinite { op: "grad_check central difference" });
        }
        let e = rel_err(analytic[i].data()[j], numeric);
        if e > report.max_rel_err {
            report.max_rel_err = e;
            report.worst = (i, j);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::attention::{multi_head_attention, AttentionParams};
    use rand::Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn affine_grads_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = rand_tensor(&[3, 3], &mut rng);
        let x = rand_tensor(&[4, 3], &mut rng);
        let b = rand_tensor(&[3], &mut rng);
        let f = |g: &mut Graph, ids: &[NodeId]| {
            let y = g.matmul(ids[1], ids[0], false, true)?;
            let y = g.add_bias(y, ids[2])?;
            Ok(g.sum_all(y))
        };
        let rep = grad_check(&f, &[w, x, b], 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-6, "rel err {}", rep.max_rel_err);
    }

    #[test]
    fn relu_grads_away_from_kink() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // Probe away from 0: |x| > 1e-3 so the central difference never straddles the kink.
        let data: Vec<f64> = (0..12)
            .map(|_| {
                let v: f64 = rng.gen_range(0.01..1.0);
                if rng.gen_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect();
        let x = Tensor::from_vec(data);
        let f = |g: &mut Graph, ids: &[NodeId]| {
            let y = g.relu(ids[0]);
            let y2 = g.mul(y, y)?;
            Ok(g.sum_all(y2))
        };
        let rep = grad_check(&f, &[x], 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-6, "rel err {}", rep.max_rel_err);
    }

    #[test]
    fn conv_pair_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = rand_tensor(&[2, 10], &mut rng);
        let k = rand_tensor(&[3, 2, 4], &mut rng);
        let kt = rand_tensor(&[3, 1, 4], &mut rng);
        let f = |g: &mut Graph, ids: &[NodeId]| {
            let h = g.conv1d(ids[0], ids[1], 2)?;
            let y = g.conv_transpose1d(h, ids[2], 2, 10)?;
            let sq = g.mul(y, y)?;
            Ok(g.sum_all(sq))
        };
        let rep = grad_check(&f, &[x, k, kt], 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-5, "rel err {}", rep.max_rel_err);
    }

    #[test]
    fn softmax_layernorm_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = rand_tensor(&[3, 5], &mut rng);
        let f = |g: &mut Graph, ids: &[NodeId]| {
            let s = g.softmax(ids[0], 1)?;
            let l = g.layer_norm(s, 1)?;
            let w = g.sigmoid(l);
            Ok(g.mean_all(w))
        };
        let rep = grad_check(&f, &[x], 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-6, "rel err {}", rep.max_rel_err);
    }

    #[test]
    fn attention_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 4;
        let q = rand_tensor(&[3, d], &mut rng);
        let weights: Vec<Tensor> = (0..4).map(|_| rand_tensor(&[d, d], &mut rng)).collect();
        let biases: Vec<Tensor> = (0..4).map(|_| rand_tensor(&[d], &mut rng)).collect();
        let mut inputs = vec![q];
        inputs.extend(weights);
        inputs.extend(biases);
        let f = |g: &mut Graph, ids: &[NodeId]| {
            let p = AttentionParams {
                wq: ids[1],
                wk: ids[2],
                wv: ids[3],
                wo: ids[4],
                bq: ids[5],
                bk: ids[6],
                bv: ids[7],
                bo: ids[8],
            };
            let y = multi_head_attention(g, ids[0], ids[0], ids[0], 2, &p)?;
            let sq = g.mul(y, y)?;
            Ok(g.mean_all(sq))
        };
        let rep = grad_check(&f, &inputs, 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-4, "rel err {}", rep.max_rel_err);
    }

    #[test]
    fn chunk_overlap_add_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = rand_tensor(&[9, 2], &mut rng);
        let f = |g: &mut Graph, ids: &[NodeId]| {
            let c = g.chunk_frames(ids[0], 4, 2)?;
            let c2 = g.mul(c, c)?;
            let back = g.overlap_add_mean(c2, 2, 9)?;
            Ok(g.sum_all(back))
        };
        let rep = grad_check(&f, &[x], 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-6, "rel err {}", rep.max_rel_err);
    }
}
