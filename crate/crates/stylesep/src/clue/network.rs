//! Graph-level clue operations: encoding, pooling, projection, fusion.

use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::numerics::{Graph, NodeId, Tensor};

use super::{ClueBundle, ClueError, CLUE_DIM, PSEUDO_TEXT};

/// How the audio and text clue vectors combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// sigmoid gate g blends per dimension: g*c_A + (1-g)*c_T
    Gated,
    /// (c_A + c_T)/2, or c_T alone when the audio is the zero placeholder
    Average,
    /// [c_A ; c_T], doubling the conditioning width
    Concat,
}

/// How the framewise audio clue collapses to one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    Attention,
    Average,
}

/// Conditioning width after fusion.
pub fn fused_clue_dim(mode: FusionMode) -> usize {
    match mode {
        FusionMode::Concat => 2 * CLUE_DIM,
        _ => CLUE_DIM,
    }
}

/// Clue material after missing-modality resolution: audio `None` means the
/// zero-vector placeholder, text is always a concrete string.
#[derive(Debug, Clone)]
pub struct ResolvedClue {
    pub audio: Option<Waveform>,
    pub text: String,
    pub audio_is_placeholder: bool,
}

/// Apply the missing-modality fallbacks: absent audio becomes a zero
/// placeholder (injected before the gate), absent text becomes the
/// enrollment pseudo-text.
pub fn resolve_missing_modality(bundle: &ClueBundle) -> Result<ResolvedClue, ClueError> {
    match (&bundle.audio, &bundle.text) {
        (None, None) => Err(ClueError::BothModalitiesMissing),
        (audio, text) => Ok(ResolvedClue {
            audio_is_placeholder: audio.is_none(),
            audio: audio.clone(),
            text: text.clone().unwrap_or_else(|| PSEUDO_TEXT.to_string()),
        }),
    }
}

/// Run the audio clue through its own convolutional encoder (same
/// architecture as the mixture encoder, independent weights).
pub fn encode_audio_clue(
    g: &mut Graph,
    w: &Waveform,
    kernel: NodeId,
    stride: usize,
    apply_relu: bool,
) -> Result<NodeId, ClueError> {
    let k = g.shape(kernel)[2];
    if w.len() < k {
        return Err(ClueError::AudioTooShort { got: w.len(), need: k });
    }
    let x = g.leaf(Tensor::new(vec![1, w.len()], w.samples.clone())?, false);
    let h = g.conv1d(x, kernel, stride)?;
    Ok(if apply_relu { g.relu(h) } else { h })
}

/// Collapse framewise `[F, T]` to `[F]` with learned softmax weights over
/// time: score_t = u . A[:,t] + b, w = softmax(score), out = sum w_t A[:,t].
pub fn attention_pool(g: &mut Graph, a: NodeId, u: NodeId, b: NodeId) -> Result<NodeId, ClueError> {
    let shape = g.shape(a).to_vec();
    let (f, t) = (shape[0], shape[1]);
    let u_row = g.reshape(u, vec![1, f])?;
    let scores = g.matmul(u_row, a, false, false)?; // [1, T]
    let scores_col = g.reshape(scores, vec![t, 1])?;
    let scores_col = g.add_bias(scores_col, b)?;
    let weights = g.softmax(scores_col, 0)?; // [T, 1]
    let pooled = g.matmul(a, weights, false, false)?; // [F, 1]
    Ok(g.reshape(pooled, vec![f])?)
}

/// Uniform pooling over time (the ablation baseline for attention pooling).
pub fn average_pool(g: &mut Graph, a: NodeId) -> Result<NodeId, ClueError> {
    let shape = g.shape(a).to_vec();
    let (f, t) = (shape[0], shape[1]);
    let ones = g.leaf(Tensor::full(&[t, 1], 1.0 / t as f64), false);
    let pooled = g.matmul(a, ones, false, false)?;
    Ok(g.reshape(pooled, vec![f])?)
}

/// affine -> relu -> layer norm, mapping a pooled clue (audio `[F]` or text
/// `[768]`) to the shared `[256]` clue space.
pub fn project_clue(g: &mut Graph, v: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, ClueError> {
    let d_in = g.shape(v)[0];
    let row = g.reshape(v, vec![1, d_in])?;
    let y = g.matmul(row, w, false, true)?;
    let y = g.add_bias(y, b)?;
    let y = g.relu(y);
    let y = g.layer_norm(y, 1)?;
    let d_out = g.shape(w)[0];
    Ok(g.reshape(y, vec![d_out])?)
}

/// Sigmoid-gated fusion: g = sigmoid(W [c_A ; c_T] + b), out = g*c_A + (1-g)*c_T.
pub fn gated_fuse(
    g: &mut Graph,
    c_audio: NodeId,
    c_text: NodeId,
    w: NodeId,
    b: NodeId,
) -> Result<NodeId, ClueError> {
    let cat = g.concat_last(&[c_audio, c_text])?;
    let d = g.shape(cat)[0];
    let row = g.reshape(cat, vec![1, d])?;
    let z = g.matmul(row, w, false, true)?;
    let z = g.add_bias(z, b)?;
    let gate = g.sigmoid(z);
    let d_out = g.shape(gate)[1];
    let gate = g.reshape(gate, vec![d_out])?;
    let ga = g.mul(gate, c_audio)?;
    let inv = g.scale(gate, -1.0);
    let inv = g.add_const(inv, 1.0);
    let gt = g.mul(inv, c_text)?;
    Ok(g.add(ga, gt)?)
}

/// The two ablation fusions. `average` collapses to the text vector alone
/// when the audio side is the zero placeholder; `concat` widens the clue.
pub fn fuse_alternative(
    g: &mut Graph,
    mode: FusionMode,
    c_audio: NodeId,
    c_text: NodeId,
    audio_is_placeholder: bool,
) -> Result<NodeId, ClueError> {
    match mode {
        FusionMode::Average => {
            if audio_is_placeholder {
                Ok(c_text)
            } else {
                let s = g.add(c_audio, c_text)?;
                Ok(g.scale(s, 0.5))
            }
        }
        FusionMode::Concat => Ok(g.concat_last(&[c_audio, c_text])?),
        FusionMode::Gated => Err(ClueError::BothModalitiesMissing), // not an alternative; callers use gated_fuse
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn attention_pool_oracle_case() {
        // A = [[1,3],[2,4]], u = [1,0], b = 0: scores [1,3],
        // w = softmax = [0.1192, 0.8808], out ~= [2.7616, 3.7616]
        let mut g = Graph::new();
        let a = g.leaf(Tensor::from_rows(&[vec![1.0, 3.0], vec![2.0, 4.0]]).unwrap(), false);
        let u = g.leaf(Tensor::from_vec(vec![1.0, 0.0]), false);
        let b = g.leaf(Tensor::from_vec(vec![0.0]), false);
        let out = attention_pool(&mut g, a, u, b).unwrap();
        let d = g.value(out).data();
        assert_abs_diff_eq!(d[0], 2.7616, epsilon = 1e-4);
        assert_abs_diff_eq!(d[1], 3.7616, epsilon = 1e-4);
    }

    #[test]
    fn zero_scores_reduce_to_average_pooling() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::from_rows(&[vec![1.0, 3.0, 5.0], vec![2.0, 4.0, 9.0]]).unwrap(), false);
        let u = g.leaf(Tensor::zeros(&[2]), false);
        let b = g.leaf(Tensor::zeros(&[1]), false);
        let att = attention_pool(&mut g, a, u, b).unwrap();
        let avg = average_pool(&mut g, a).unwrap();
        for (x, y) in g.value(att).data().iter().zip(g.value(avg).data()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_frame_pool_returns_that_frame() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::new(vec![3, 1], vec![0.5, -1.0, 2.0]).unwrap(), false);
        let u = g.leaf(Tensor::from_vec(vec![0.3, 0.1, -0.2]), false);
        let b = g.leaf(Tensor::from_vec(vec![0.7]), false);
        let out = attention_pool(&mut g, a, u, b).unwrap();
        assert_eq!(g.value(out).data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn pooled_output_stays_in_column_convex_hull() {
        let mut rng = crate::seeding::stream_rng(5, &["hull"]);
        let data: Vec<f64> = (0..4 * 7).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t = Tensor::new(vec![4, 7], data).unwrap();
        let mut g = Graph::new();
        let a = g.leaf(t.clone(), false);
        let u = g.leaf(Tensor::from_vec((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()), false);
        let b = g.leaf(Tensor::from_vec(vec![rng.gen_range(-1.0..1.0)]), false);
        let out = attention_pool(&mut g, a, u, b).unwrap();
        for (fi, &v) in g.value(out).data().iter().enumerate() {
            let row = &t.data()[fi * 7..(fi + 1) * 7];
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(v >= lo - 1e-9 && v <= hi + 1e-9, "coordinate {} = {} outside [{}, {}]", fi, v, lo, hi);
        }
    }

    #[test]
    fn projection_normalizes_and_matches_width() {
        let mut rng = crate::seeding::stream_rng(6, &["proj"]);
        let mut g = Graph::new();
        let v = g.leaf(Tensor::from_vec((0..32).map(|_| rng.gen_range(-1.0..1.0)).collect()), false);
        let w = g.leaf(
            Tensor::new(vec![CLUE_DIM, 32], (0..CLUE_DIM * 32).map(|_| rng.gen_range(-0.2..0.2)).collect()).unwrap(),
            false,
        );
        let b = g.leaf(Tensor::zeros(&[CLUE_DIM]), false);
        let out = project_clue(&mut g, v, w, b).unwrap();
        assert_eq!(g.shape(out), &[CLUE_DIM]);
        let d = g.value(out).data();
        let mean: f64 = d.iter().sum::<f64>() / d.len() as f64;
        let var: f64 = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64;
        assert!(mean.abs() < 1e-8, "mean {}", mean);
        assert!((var - 1.0).abs() < 1e-3, "var {}", var);
    }

    #[test]
    fn zero_input_projection_is_finite() {
        let mut g = Graph::new();
        let v = g.leaf(Tensor::zeros(&[8]), false);
        let w = g.leaf(Tensor::full(&[CLUE_DIM, 8], 0.1), false);
        let mut bias = vec![0.0; CLUE_DIM];
        for (i, b) in bias.iter_mut().enumerate() {
            *b = if i % 2 == 0 { 0.5 } else { -0.5 };
        }
        let b = g.leaf(Tensor::from_vec(bias), false);
        let out = project_clue(&mut g, v, w, b).unwrap();
        assert!(g.value(out).is_finite());
    }

    #[test]
    fn zero_gate_params_average_the_modalities() {
        let mut g = Graph::new();
        let ca = g.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]), false);
        let ct = g.leaf(Tensor::from_vec(vec![5.0, 6.0, 7.0]), false);
        let w = g.leaf(Tensor::zeros(&[3, 6]), false);
        let b = g.leaf(Tensor::zeros(&[3]), false);
        let out = gated_fuse(&mut g, ca, ct, w, b).unwrap();
        assert_eq!(g.value(out).data(), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn saturated_gate_selects_audio() {
        let mut g = Graph::new();
        let ca = g.leaf(Tensor::from_vec(vec![1.0, -2.0]), false);
        let ct = g.leaf(Tensor::from_vec(vec![2.0, -1.0]), false);
        let w = g.leaf(Tensor::zeros(&[2, 4]), false);
        let b = g.leaf(Tensor::full(&[2], 20.0), false);
        let out = gated_fuse(&mut g, ca, ct, w, b).unwrap();
        for (got, want) in g.value(out).data().iter().zip(g.value(ca).data()) {
            assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn gated_fuse_matches_direct_formula() {
        let mut rng = crate::seeding::stream_rng(7, &["gate"]);
        let d = 5;
        let ca_v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ct_v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w_v: Vec<f64> = (0..d * 2 * d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let b_v: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();

        let mut g = Graph::new();
        let ca = g.leaf(Tensor::from_vec(ca_v.clone()), false);
        let ct = g.leaf(Tensor::from_vec(ct_v.clone()), false);
        let w = g.leaf(Tensor::new(vec![d, 2 * d], w_v.clone()).unwrap(), false);
        let b = g.leaf(Tensor::from_vec(b_v.clone()), false);
        let out = gated_fuse(&mut g, ca, ct, w, b).unwrap();

        // Straight-line recomputation of the documented formula.
        let mut cat = ca_v.clone();
        cat.extend_from_slice(&ct_v);
        for i in 0..d {
            let mut z = b_v[i];
            for (j, &c) in cat.iter().enumerate() {
                z += w_v[i * 2 * d + j] * c;
            }
            let gate = 1.0 / (1.0 + (-z).exp());
            let want = gate * ca_v[i] + (1.0 - gate) * ct_v[i];
            assert!((g.value(out).data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gated_fuse_of_identical_vectors_is_identity() {
        let mut rng = crate::seeding::stream_rng(8, &["gate-id"]);
        let d = 4;
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g = Graph::new();
        let c1 = g.leaf(Tensor::from_vec(v.clone()), false);
        let c2 = g.leaf(Tensor::from_vec(v.clone()), false);
        let w = g.leaf(
            Tensor::new(vec![d, 2 * d], (0..2 * d * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
            false,
        );
        let b = g.leaf(Tensor::from_vec((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()), false);
        let out = gated_fuse(&mut g, c1, c2, w, b).unwrap();
        for (got, want) in g.value(out).data().iter().zip(&v) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn average_with_placeholder_is_exactly_text() {
        let mut g = Graph::new();
        let ca = g.leaf(Tensor::zeros(&[3]), false);
        let ct = g.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]), false);
        let out = fuse_alternative(&mut g, FusionMode::Average, ca, ct, true).unwrap();
        assert_eq!(out, ct);
        let of_pair = fuse_alternative(&mut g, FusionMode::Average, ct, ct, false).unwrap();
        assert_eq!(g.value(of_pair).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn concat_doubles_width() {
        let mut g = Graph::new();
        let ca = g.leaf(Tensor::zeros(&[CLUE_DIM]), false);
        let ct = g.leaf(Tensor::zeros(&[CLUE_DIM]), false);
        let out = fuse_alternative(&mut g, FusionMode::Concat, ca, ct, false).unwrap();
        assert_eq!(g.shape(out), &[2 * CLUE_DIM]);
        assert_eq!(fused_clue_dim(FusionMode::Concat), 512);
    }

    #[test]
    fn missing_modality_resolution() {
        let audio = Waveform::new(vec![0.1; 100]);
        let r = resolve_missing_modality(&ClueBundle::audio_only(audio.clone())).unwrap();
        assert_eq!(r.text, PSEUDO_TEXT);
        assert!(!r.audio_is_placeholder);

        let r = resolve_missing_modality(&ClueBundle::text_only("The happy voice.")).unwrap();
        assert!(r.audio.is_none());
        assert!(r.audio_is_placeholder);

        assert!(matches!(
            resolve_missing_modality(&ClueBundle::default()),
            Err(ClueError::BothModalitiesMissing)
        ));
    }
}
