//! Tensor-level chunking surface over the tape ops.

use crate::numerics::{Graph, NumericsError, Tensor};

use super::config::SepConfig;

/// Overlapping frames of an encoded representation, with the bookkeeping
/// needed to reconstruct it.
#[derive(Debug, Clone)]
pub struct ChunkedRep {
    /// `[N_C, C, F]`
    pub data: Tensor,
    pub original_t: usize,
    pub hop: usize,
}

/// Frame `h` (`[F, T]`) into overlapping chunks of size `chunk`.
pub fn chunk(h: &Tensor, chunk_size: usize, overlap: f64) -> Result<ChunkedRep, NumericsError> {
    if !(overlap > 0.0 && overlap < 1.0) {
        return Err(NumericsError::Config(format!("overlap {} outside (0, 1)", overlap)));
    }
    let hop = ((chunk_size as f64) * (1.0 - overlap)).round() as usize;
    if hop == 0 {
        return Err(NumericsError::Config("chunk hop rounds to zero".to_string()));
    }
    let mut g = Graph::new();
    let node = g.leaf(h.clone(), false);
    let tf = g.transpose(node)?;
    let t = h.shape()[1];
    let chunked = g.chunk_frames(tf, chunk_size, hop)?;
    Ok(ChunkedRep { data: g.value(chunked).clone(), original_t: t, hop })
}

/// Overlap-add back to `[F, T]`, dividing by per-position counts so that
/// identity data reconstructs exactly, then crop to the original length.
pub fn unchunk_overlap_add(r: &ChunkedRep) -> Result<Tensor, NumericsError> {
    let mut g = Graph::new();
    let node = g.leaf(r.data.clone(), false);
    let tf = g.overlap_add_mean(node, r.hop, r.original_t)?;
    let ft = g.transpose(tf)?;
    Ok(g.value(ft).clone())
}

/// Frame count the configuration produces for `t` encoder frames.
pub fn frame_count(cfg: &SepConfig, t: usize) -> usize {
    crate::numerics::tape_frame_count(t, cfg.chunk, cfg.chunk_hop())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream_rng;
    use rand::Rng;

    fn random_ft(f: usize, t: usize, seed: u64) -> Tensor {
        let mut rng = stream_rng(seed, &["chunk-test"]);
        Tensor::new(vec![f, t], (0..f * t).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn frame_layout_matches_index_law() {
        // T=8, C=4, hop 2: frames cover [0..3], [2..5], [4..7].
        let h = Tensor::new(vec![1, 8], (0..8).map(|v| v as f64).collect()).unwrap();
        let r = chunk(&h, 4, 0.5).unwrap();
        assert_eq!(r.data.shape(), &[3, 4, 1]);
        assert_eq!(r.data.data(), &[0.0, 1.0, 2.0, 3.0, 2.0, 3.0, 4.0, 5.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn short_input_pads_single_frame() {
        let h = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let r = chunk(&h, 4, 0.5).unwrap();
        assert_eq!(r.data.shape(), &[1, 4, 2]);
        let back = unchunk_overlap_add(&r).unwrap();
        assert_eq!(back.shape(), &[2, 3]);
        for (a, b) in back.data().iter().zip(h.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_identity_over_sweep() {
        for &(t, c) in &[(8usize, 4usize), (9, 4), (10, 4), (50, 10), (37, 12), (100, 16), (5, 8), (1, 4)] {
            let h = random_ft(3, t, (t * 31 + c) as u64);
            let r = chunk(&h, c, 0.5).unwrap();
            let back = unchunk_overlap_add(&r).unwrap();
            assert_eq!(back.shape(), h.shape());
            for (a, b) in back.data().iter().zip(h.data()) {
                assert!((a - b).abs() < 1e-12, "T={} C={}", t, c);
            }
        }
    }
}
