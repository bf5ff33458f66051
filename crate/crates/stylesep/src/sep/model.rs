//! The full extraction model: mixture encoder, clue-conditioned dual-path
//! masker, and mirrored decoder, plus the clue network that feeds it.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clue::{
    attention_pool, average_pool, encode_audio_clue, fuse_alternative, fused_clue_dim, gated_fuse,
    project_clue, resolve_missing_modality, ClueBundle, ClueError, FusionMode, PoolingMode, ResolvedClue,
    TextEncoderPort, CLUE_DIM, TEXT_DIM,
};
use crate::dsp::Waveform;
use crate::numerics::{linear_batched, GradCheckReport, Graph, NodeId, Tensor};

use super::block::{register_block_params, transformer_block};
use super::config::ModelConfig;
use super::params::{Binding, ParamSet};
use super::SepError;

#[derive(Clone)]
pub struct SepModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl SepModel {
    pub fn new(config: ModelConfig) -> Result<SepModel, SepError> {
        config.sep.validate()?;
        let mut params = ParamSet::new();
        let s = &config.sep;
        let seed = config.init_seed;
        let (f, k, ff) = (s.channels, s.kernel, s.ff_dim);

        params.add("mix_enc.kernel", &[f, 1, k], k, seed);
        params.add("clue_enc.kernel", &[f, 1, k], k, seed);
        params.add("dec.kernel", &[f, 1, k], f, seed);

        params.add("pool.u", &[f], f, seed);
        params.add("pool.b", &[1], f, seed);
        params.add("proj_audio.w", &[CLUE_DIM, f], f, seed);
        params.add("proj_audio.b", &[CLUE_DIM], f, seed);
        params.add("proj_text.w", &[CLUE_DIM, TEXT_DIM], TEXT_DIM, seed);
        params.add("proj_text.b", &[CLUE_DIM], TEXT_DIM, seed);
        if config.fusion == FusionMode::Gated {
            params.add("fuse_gate.w", &[CLUE_DIM, 2 * CLUE_DIM], 2 * CLUE_DIM, seed);
            params.add("fuse_gate.b", &[CLUE_DIM], 2 * CLUE_DIM, seed);
        }

        let cond = fused_clue_dim(config.fusion);
        for r in 0..s.repeats {
            params.add(&format!("dp{r}.inject.w"), &[f, cond], cond, seed);
            params.add(&format!("dp{r}.inject.b"), &[f], cond, seed);
            register_block_params(&mut params, &format!("dp{r}.intra"), f, ff, seed);
            register_block_params(&mut params, &format!("dp{r}.inter"), f, ff, seed);
        }
        params.add("mask_head.w", &[f, f], f, seed);
        params.add("mask_head.b", &[f], f, seed);

        Ok(SepModel { config, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.total_values()
    }

    pub fn bind(&self, g: &mut Graph) -> Binding {
        self.params.bind(g)
    }

    /// Encode the clue bundle to the fused conditioning vector.
    pub fn clue_vector(
        &self,
        g: &mut Graph,
        binding: &Binding,
        clue: &ResolvedClue,
        text_port: &dyn TextEncoderPort,
    ) -> Result<NodeId, ClueError> {
        let c_audio = match &clue.audio {
            Some(w) => {
                let framed = encode_audio_clue(
                    g,
                    w,
                    binding.id("clue_enc.kernel"),
                    self.config.sep.stride,
                    self.config.sep.encoder_relu,
                )?;
                let pooled = match self.config.pooling {
                    PoolingMode::Attention => {
                        attention_pool(g, framed, binding.id("pool.u"), binding.id("pool.b"))?
                    }
                    PoolingMode::Average => average_pool(g, framed)?,
                };
                project_clue(g, pooled, binding.id("proj_audio.w"), binding.id("proj_audio.b"))?
            }
            // Missing audio: zero placeholder enters where the projected
            // clue vector would, ahead of the fusion gate.
            None => g.leaf(Tensor::zeros(&[CLUE_DIM]), false),
        };

        let raw_text = text_port.encode(&clue.text)?;
        let text_leaf = g.leaf(raw_text, false); // frozen encoder: constant leaf
        let c_text = project_clue(g, text_leaf, binding.id("proj_text.w"), binding.id("proj_text.b"))?;

        match self.config.fusion {
            FusionMode::Gated => gated_fuse(g, c_audio, c_text, binding.id("fuse_gate.w"), binding.id("fuse_gate.b")),
            mode => fuse_alternative(g, mode, c_audio, c_text, clue.audio_is_placeholder),
        }
    }

    /// Full forward pass to the estimated target waveform node `[L']`.
    ///
    /// `L' = (T - 1) * stride + K <= L`, exact when `(L - K) % stride == 0`.
    pub fn extract_node(
        &self,
        g: &mut Graph,
        binding: &Binding,
        mixture: &Waveform,
        clue: &ResolvedClue,
        text_port: &dyn TextEncoderPort,
    ) -> Result<NodeId, SepError> {
        let s = &self.config.sep;
        let t = s
            .frames_for(mixture.len())
            .ok_or(SepError::InputTooShort { got: mixture.len(), need: s.kernel })?;
        let hop = s.chunk_hop();

        // encoder: [1, L] -> [F, T]
        let x = g.leaf(Tensor::new(vec![1, mixture.len()], mixture.samples.clone())?, false);
        let h = g.conv1d(x, binding.id("mix_enc.kernel"), s.stride)?;
        let h = if s.encoder_relu { g.relu(h) } else { h };

        // chunking: [T, F] -> [N_C, C, F]
        let h_tf = g.transpose(h)?;
        let mut r = g.chunk_frames(h_tf, s.chunk, hop)?;

        let clue_vec = self.clue_vector(g, binding, clue, text_port)?;

        for rep in 0..s.repeats {
            // clue injection: per-repeat affine F' -> F, replicated over (C, N_C)
            let cond_dim = g.shape(clue_vec)[0];
            let c_row = g.reshape(clue_vec, vec![1, cond_dim])?;
            let c_f = g.matmul(c_row, binding.id(&format!("dp{rep}.inject.w")), false, true)?;
            let c_f = g.add_bias(c_f, binding.id(&format!("dp{rep}.inject.b")))?;
            let c_f = g.reshape(c_f, vec![s.channels])?;
            r = g.add_bias(r, c_f)?;

            r = transformer_block(g, binding, &format!("dp{rep}.intra"), r, s.heads)?;
            let swapped = g.swap_axes01(r)?;
            let inter = transformer_block(g, binding, &format!("dp{rep}.inter"), swapped, s.heads)?;
            r = g.swap_axes01(inter)?;
        }

        // single-target mask head: [N_C, C, F] viewed as [N_C, C, 1, F]
        let head = linear_batched(g, r, binding.id("mask_head.w"), binding.id("mask_head.b"))?;
        let head_shape = g.shape(head).to_vec();
        let with_source_axis = g.reshape(head, vec![head_shape[0], head_shape[1], 1, head_shape[2]])?;
        debug_assert_eq!(g.shape(with_source_axis)[2], 1, "one mask for the one target source");
        let chunked_mask = g.reshape(with_source_axis, head_shape)?;

        // overlap-add then activation -> M [T, F], mask application, decode
        let mask_tf = g.overlap_add_mean(chunked_mask, hop, t)?;
        let mask = g.relu(mask_tf);
        let masked = g.mul(mask, h_tf)?;
        let masked_ft = g.transpose(masked)?;
        let out_len = (t - 1) * s.stride + s.kernel;
        let decoded = g.conv_transpose1d(masked_ft, binding.id("dec.kernel"), s.stride, out_len)?;
        Ok(g.reshape(decoded, vec![out_len])?)
    }

    /// Inference entry point: run the forward pass and return a waveform of
    /// exactly the input length (decoder tail padded with zeros when the
    /// input length is not stride-aligned).
    pub fn extract(
        &self,
        mixture: &Waveform,
        bundle: &ClueBundle,
        text_port: &dyn TextEncoderPort,
    ) -> Result<Waveform, SepError> {
        let clue = resolve_missing_modality(bundle)?;
        let mut g = Graph::new();
        let binding = self.bind(&mut g);
        let node = self.extract_node(&mut g, &binding, mixture, &clue, text_port)?;
        let v = g.value(node);
        v.assert_finite("extract")?;
        let mut samples = v.data().to_vec();
        samples.resize(mixture.len(), 0.0);
        Ok(Waveform::new(samples))
    }

    /// Finite-difference check of the real forward path.
    ///
    /// `build` constructs the scalar objective (forward pass plus loss) on a
    /// fresh graph; it is re-run for every probe with a perturbed parameter,
    /// so the comparison exercises exactly the code used in training. Probes
    /// sample up to `per_param` elements of each parameter.
    pub fn finite_difference_check<F>(
        &self,
        build: F,
        per_param: usize,
        h: f64,
        seed: u64,
    ) -> Result<GradCheckReport, SepError>
    where
        F: Fn(&SepModel, &mut Graph, &Binding) -> Result<NodeId, SepError>,
    {
        let mut g = Graph::new();
        let binding = self.bind(&mut g);
        let root = build(self, &mut g, &binding)?;
        if g.shape(root) != [1] {
            return Err(SepError::Numerics(crate::numerics::NumericsError::Dimension {
                context: "finite_difference_check",
                detail: format!("objective must be scalar, got {:?}", g.shape(root)),
            }));
        }
        let grads = g.backward(root)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut work = self.clone();
        let mut report = GradCheckReport { max_rel_err: 0.0, worst: (0, 0), probes: 0 };
        let names: Vec<String> = self.params.iter().map(|p| p.name.clone()).collect();
        for (pi, name) in names.iter().enumerate() {
            let n = self.params.get(name).value.numel();
            let elems: Vec<usize> = if n <= per_param {
                (0..n).collect()
            } else {
                sample(&mut rng, n, per_param).into_iter().collect()
            };
            let analytic = grads[binding.id(name)].clone();
            for j in elems {
                let orig = work.params.get(name).value.data()[j];
                let eval_at = |v: f64, work: &mut SepModel| -> Result<f64, SepError> {
                    work.params.get_mut(name).value.data_mut()[j] = v;
                    let mut g2 = Graph::new();
                    let b2 = work.bind(&mut g2);
                    let r2 = build(work, &mut g2, &b2)?;
                    Ok(g2.value(r2).item())
                };
                let plus = eval_at(orig + h, &mut work)?;
                let minus = eval_at(orig - h, &mut work)?;
                work.params.get_mut(name).value.data_mut()[j] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic.as_ref().map(|t| t.data()[j]).unwrap_or(0.0);
                let e = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
                report.probes += 1;
                if e > report.max_rel_err {
                    report.max_rel_err = e;
                    report.worst = (pi, j);
                }
            }
        }
        Ok(report)
    }
}
