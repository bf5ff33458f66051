//! Scale-invariant signal-to-distortion ratio: measurement and loss.

use crate::numerics::{Graph, NodeId, Tensor};

use super::TrainError;

/// Guard added to the distortion energy; caps perfect reconstruction near
/// 10*log10(E/1e-12) instead of diverging.
pub const EPS_DENOM: f64 = 1e-12;
/// Minimum admissible reference energy.
pub const EPS_ENERGY: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// SI-SDR in dB: project the estimate onto the reference
/// (alpha = <est, ref>/||ref||^2) and compare signal to distortion energy.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64, TrainError> {
    if estimate.len() != reference.len() {
        return Err(TrainError::LengthMismatch { estimate: estimate.len(), reference: reference.len() });
    }
    let e_ref = dot(reference, reference);
    if e_ref <= EPS_ENERGY {
        return Err(TrainError::ZeroEnergyReference);
    }
    let alpha = dot(estimate, reference) / e_ref;
    let signal = alpha * alpha * e_ref;
    let distortion: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(&e, &r)| {
            let d = alpha * r - e;
            d * d
        })
        .sum();
    Ok(10.0 * (signal / (distortion + EPS_DENOM)).log10())
}

/// Differentiable `-si_sdr(est, ref)` as a graph node. The reference enters
/// as a constant; gradients flow only through the estimate.
pub fn si_sdr_loss_node(g: &mut Graph, estimate: NodeId, reference: &[f64]) -> Result<NodeId, TrainError> {
    let len = g.shape(estimate).iter().product::<usize>();
    if len != reference.len() {
        return Err(TrainError::LengthMismatch { estimate: len, reference: reference.len() });
    }
    let e_ref = dot(reference, reference);
    if e_ref <= EPS_ENERGY {
        return Err(TrainError::ZeroEnergyReference);
    }
    let est_flat = g.reshape(estimate, vec![len])?;
    let ref_leaf = g.leaf(Tensor::from_vec(reference.to_vec()), false);

    let prod = g.mul(est_flat, ref_leaf)?;
    let inner = g.sum_all(prod);
    let alpha = g.scale(inner, 1.0 / e_ref);
    let alpha_ref = g.mul_scalar(ref_leaf, alpha)?;

    let sq_signal = g.mul(alpha_ref, alpha_ref)?;
    let signal = g.sum_all(sq_signal);

    let err = g.sub(alpha_ref, est_flat)?;
    let sq_err = g.mul(err, err)?;
    let distortion = g.sum_all(sq_err);
    let distortion = g.add_const(distortion, EPS_DENOM);

    let ln_sig = g.ln(signal)?;
    let ln_dis = g.ln(distortion)?;
    let diff = g.sub(ln_sig, ln_dis)?;
    let sisdr_db = g.scale(diff, 10.0 / std::f64::consts::LN_10);
    Ok(g.scale(sisdr_db, -1.0))
}

/// Mean of per-item losses over an already-built batch of loss nodes.
pub fn batch_mean(g: &mut Graph, losses: &[NodeId]) -> Result<NodeId, TrainError> {
    let mut acc = losses[0];
    for &l in &losses[1..] {
        acc = g.add(acc, l)?;
    }
    Ok(g.scale(acc, 1.0 / losses.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_equal_energy_error_is_zero_db() {
        let v = si_sdr(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(v.abs() < 1e-9, "got {}", v);
    }

    #[test]
    fn hand_computed_case() {
        // alpha = 6/14, signal 18/7, distortion 3/7 -> 10 log10(6)
        let v = si_sdr(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((v - 10.0 * 6f64.log10()).abs() < 1e-9);
        assert!((v - 7.7815).abs() < 1e-4, "got {}", v);
    }

    #[test]
    fn scale_invariance() {
        let s = [0.4, -1.0, 2.5, 0.1];
        let e = [0.35, -0.8, 2.0, 0.4];
        let base = si_sdr(&e, &s).unwrap();
        for &beta in &[2.0, 0.5, -3.0, 1e4] {
            let scaled: Vec<f64> = e.iter().map(|v| v * beta).collect();
            let got = si_sdr(&scaled, &s).unwrap();
            assert!((got - base).abs() < 1e-9, "beta {}: {} vs {}", beta, got, base);
        }
    }

    #[test]
    fn joint_sign_flip_is_exact() {
        let s = [0.4, -1.0, 2.5];
        let e = [0.3, -0.9, 2.2];
        let flipped_s: Vec<f64> = s.iter().map(|v| -v).collect();
        let flipped_e: Vec<f64> = e.iter().map(|v| -v).collect();
        assert_eq!(si_sdr(&e, &s).unwrap(), si_sdr(&flipped_e, &flipped_s).unwrap());
    }

    #[test]
    fn orthogonal_tenth_energy_noise_is_ten_db() {
        // reference [1,0...], noise orthogonal with a tenth of the energy
        let n = 10usize;
        let mut s = vec![0.0; n];
        s[0] = 1.0;
        let mut e = s.clone();
        e[1] = (0.1f64).sqrt();
        let v = si_sdr(&e, &s).unwrap();
        assert!((v - 10.0).abs() < 1e-6, "got {}", v);
    }

    #[test]
    fn perfect_estimate_hits_guard_ceiling() {
        let s = [0.5, -0.25, 1.0];
        let v = si_sdr(&s, &s).unwrap();
        let energy: f64 = s.iter().map(|x| x * x).sum();
        let want = 10.0 * (energy / EPS_DENOM).log10();
        assert!((v - want).abs() < 1e-6);
        assert!(v > 110.0, "ceiling {}", v);
    }

    #[test]
    fn zero_reference_rejected() {
        assert!(matches!(si_sdr(&[1.0, 2.0], &[0.0, 0.0]), Err(TrainError::ZeroEnergyReference)));
    }

    #[test]
    fn loss_node_matches_measurement() {
        let s = [0.4, -1.0, 2.5, 0.1, 0.9];
        let e = [0.35, -0.8, 2.0, 0.4, 1.1];
        let mut g = Graph::new();
        let est = g.leaf(Tensor::from_vec(e.to_vec()), true);
        let loss = si_sdr_loss_node(&mut g, est, &s).unwrap();
        let measured = si_sdr(&e, &s).unwrap();
        assert!((g.value(loss).item() + measured).abs() < 1e-9);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        use crate::numerics::grad_check;
        let s = [0.4, -1.0, 2.5, 0.1, 0.9, -0.3];
        let e = Tensor::from_vec(vec![0.35, -0.8, 2.0, 0.4, 1.1, 0.0]);
        let f = |g: &mut Graph, ids: &[NodeId]| {
            si_sdr_loss_node(g, ids[0], &s).map_err(|_| crate::numerics::NumericsError::Config("loss".into()))
        };
        let rep = grad_check(&f, &[e], 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-5, "rel err {}", rep.max_rel_err);
    }

    #[test]
    fn batch_loss_is_arithmetic_mean() {
        let s1 = [1.0, 2.0, 3.0];
        let s2 = [0.5, -0.5, 1.5];
        let e1 = [1.0, 1.0, 1.0];
        let e2 = [0.4, -0.6, 1.2];
        let mut g = Graph::new();
        let n1 = g.leaf(Tensor::from_vec(e1.to_vec()), false);
        let n2 = g.leaf(Tensor::from_vec(e2.to_vec()), false);
        let l1 = si_sdr_loss_node(&mut g, n1, &s1).unwrap();
        let l2 = si_sdr_loss_node(&mut g, n2, &s2).unwrap();
        let mean = batch_mean(&mut g, &[l1, l2]).unwrap();
        let want = (-si_sdr(&e1, &s1).unwrap() - si_sdr(&e2, &s2).unwrap()) / 2.0;
        assert!((g.value(mean).item() - want).abs() < 1e-9);
    }
}
