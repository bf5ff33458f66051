//! Plateau learning-rate schedule.
//!
//! Before `plateau_start_epoch` the rate never moves. Afterwards it halves
//! whenever validation loss has gone `plateau_patience` consecutive epochs
//! without improving on the best seen value (improvement = a decrease
//! larger than `val_improve_tol`); each halving resets the stall counter.
//! A halving that would fall below `lr_floor` clamps there and signals stop.

use super::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrDecision {
    Keep(f64),
    Halved(f64),
    /// Clamped at the floor; training may stop.
    FloorReached(f64),
}

impl LrDecision {
    pub fn lr(&self) -> f64 {
        match *self {
            LrDecision::Keep(v) | LrDecision::Halved(v) | LrDecision::FloorReached(v) => v,
        }
    }

    pub fn stop(&self) -> bool {
        matches!(self, LrDecision::FloorReached(_))
    }
}

/// Decide the rate after finishing `epoch` (1-based). `val_history[e-1]` is
/// the validation loss of epoch `e`; entries beyond `epoch` are ignored.
/// The stall bookkeeping is replayed from the start of history, so the
/// function is pure and resume-safe.
pub fn lr_schedule(epoch: usize, val_history: &[f64], current_lr: f64, cfg: &TrainConfig) -> LrDecision {
    let considered = &val_history[..epoch.min(val_history.len())];
    let mut best = f64::INFINITY;
    let mut stall = 0usize;
    let mut halve_now = false;
    for (i, &v) in considered.iter().enumerate() {
        let e = i + 1;
        if v < best - cfg.val_improve_tol {
            best = v;
            stall = 0;
        } else {
            stall += 1;
        }
        if e > cfg.plateau_start_epoch && stall >= cfg.plateau_patience {
            stall = 0;
            if e == epoch {
                halve_now = true;
            }
        }
    }
    if !halve_now {
        return LrDecision::Keep(current_lr);
    }
    let halved = current_lr * 0.5;
    if halved < cfg.lr_floor {
        LrDecision::FloorReached(cfg.lr_floor)
    } else {
        LrDecision::Halved(halved)
    }
}
