//! The two-stage training loop.
//!
//! Stage 1: step-budgeted at a fixed rate, every item bi-modal, no dynamic
//! mixing. Stage 2: epoch-scheduled with the plateau rule, conditions drawn
//! text-audio : text-only : audio-only, dynamic mixing per sample.
//! Checkpoints (parameters + Adam moments + schedule state) are written
//! every epoch and at the best validation loss; resuming from any of them
//! reproduces the uninterrupted run exactly because all data randomness is
//! keyed by (seed, mixture id, epoch), not by consumed RNG state.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clue::TextEncoderPort;
use crate::dataset::templates::TemplateTable;
use crate::dataset::{CorpusIndex, MixtureSpec, Split};
use crate::numerics::Graph;
use crate::seeding::stream_rng;
use crate::sep::{save_checkpoint, OptimizerMoments, SepModel, TrainerState};

use super::adam::{clip_global_norm, Adam};
use super::batch::{build_batch, BatchItem};
use super::schedule::lr_schedule;
use super::sisdr::{si_sdr, si_sdr_loss_node};
use super::{TrainConfig, TrainError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: u8,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub clue_condition_counts: HashMap<String, usize>,
    pub steps: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub best_val_loss: f64,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    pub stopped_at_floor: bool,
}

/// Epoch key fed into the per-sample streams; stages must not share them.
fn stream_epoch(stage: u8, epoch: usize) -> usize {
    stage as usize * 1_000_000 + epoch
}

fn train_loss_over_batch(
    model: &mut SepModel,
    items: &[BatchItem],
    port: &dyn TextEncoderPort,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    let scale = 1.0 / items.len() as f64;
    for item in items {
        let mut g = Graph::new();
        let binding = model.bind(&mut g);
        let est = model.extract_node(&mut g, &binding, &item.mixture, &item.clue, port)?;
        let est_len: usize = g.shape(est).iter().product();
        debug_assert_eq!(est_len, item.reference.len(), "crop alignment");
        let loss = si_sdr_loss_node(&mut g, est, &item.reference.samples[..est_len])?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(TrainError::Numerics(crate::numerics::NumericsError::NonFinite { op: "training loss" }));
        }
        let grads = g.backward(loss)?;
        model.params.accumulate_grads(&binding, &grads, scale)?;
        total += value * scale;
    }
    Ok(total)
}

/// Mean `-si_sdr` over the dev split under the stage-1 condition (bi-modal,
/// no dynamic mixing, epoch-independent crops) so epochs stay comparable.
pub fn validation_loss(
    model: &SepModel,
    corpus: &CorpusIndex,
    dev: &[&MixtureSpec],
    port: &dyn TextEncoderPort,
    cfg: &TrainConfig,
    table: &TemplateTable,
) -> Result<f64, TrainError> {
    if dev.is_empty() {
        return Err(TrainError::Config("validation split is empty".to_string()));
    }
    let items = build_batch(corpus, dev, 1, 0, cfg, &model.config.sep, table)?;
    let mut total = 0.0;
    for item in &items {
        let est = model.extract(&item.mixture, &to_bundle(&item.clue), port)?;
        total -= si_sdr(&est.samples, &item.reference.samples)?;
    }
    Ok(total / items.len() as f64)
}

fn to_bundle(clue: &crate::clue::ResolvedClue) -> crate::clue::ClueBundle {
    crate::clue::ClueBundle {
        audio: if clue.audio_is_placeholder { None } else { clue.audio.clone() },
        text: Some(clue.text.clone()),
    }
}

fn append_metrics(path: &Path, log: &EpochLog) -> Result<(), TrainError> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })?;
    writeln!(f, "{}", serde_json::to_string(log).expect("log serializes"))
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })
}

/// Run one stage to completion, writing checkpoints and a JSONL metrics
/// log under `out_dir`. `resume` continues from a checkpoint's optimizer
/// moments and trainer state (epoch boundaries only).
pub fn train_stage(
    stage: u8,
    model: &mut SepModel,
    corpus: &CorpusIndex,
    specs: &[MixtureSpec],
    port: &dyn TextEncoderPort,
    cfg: &TrainConfig,
    out_dir: &Path,
    resume: Option<(OptimizerMoments, TrainerState)>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if !matches!(stage, 1 | 2) {
        return Err(TrainError::Config(format!("stage must be 1 or 2, got {}", stage)));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| TrainError::Io { path: out_dir.display().to_string(), source: e })?;

    let train: Vec<&MixtureSpec> = specs.iter().filter(|s| s.split == Split::Train).collect();
    let dev: Vec<&MixtureSpec> = specs.iter().filter(|s| s.split == Split::Dev).collect();
    if train.is_empty() {
        return Err(TrainError::Config("training split is empty".to_string()));
    }
    let table = TemplateTable::builtin();

    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_epochs = match stage {
        1 => cfg.stage1_steps.div_ceil(steps_per_epoch),
        _ => cfg.stage2_epochs,
    };

    let (mut adam, mut state) = match resume {
        Some((moments, st)) => {
            if st.stage != stage {
                return Err(TrainError::Config(format!(
                    "checkpoint is for stage {}, not stage {}",
                    st.stage, stage
                )));
            }
            (Adam::from_moments(moments, st.adam_step), st)
        }
        None => (
            Adam::new(&model.params),
            TrainerState {
                stage,
                epoch: 0,
                global_step: 0,
                adam_step: 0,
                lr: if stage == 1 { cfg.lr_stage1 } else { cfg.lr_stage2 },
                best_val_loss: None,
                val_history: Vec::new(),
                stall_count: 0,
            },
        ),
    };

    let metrics_path = out_dir.join(format!("metrics_stage{}.jsonl", stage));
    let last_path = out_dir.join(format!("stage{}_last.ckpt", stage));
    let best_path = out_dir.join(format!("stage{}_best.ckpt", stage));
    let mut logs = Vec::new();
    let mut stopped_at_floor = false;

    'epochs: for epoch in (state.epoch + 1)..=total_epochs {
        let se = stream_epoch(stage, epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, &["order", &stage.to_string(), &epoch.to_string()]));

        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        let mut condition_counts: HashMap<String, usize> = HashMap::new();
        for chunk in order.chunks(cfg.batch_size) {
            if stage == 1 && state.global_step >= cfg.stage1_steps {
                break;
            }
            let batch_specs: Vec<&MixtureSpec> = chunk.iter().map(|&i| train[i]).collect();
            let items = build_batch(corpus, &batch_specs, stage, se, cfg, &model.config.sep, &table)?;
            if items.is_empty() {
                continue;
            }
            for it in &items {
                *condition_counts.entry(it.condition.as_str().to_string()).or_insert(0) += 1;
            }
            model.params.zero_grads();
            let loss = train_loss_over_batch(model, &items, port)?;
            clip_global_norm(&mut model.params, cfg.grad_clip_norm);
            adam.step(&mut model.params, state.lr);
            state.global_step += 1;
            state.adam_step = adam.step_count;
            epoch_loss += loss;
            steps += 1;
        }
        if steps == 0 {
            break 'epochs;
        }
        epoch_loss /= steps as f64;

        let val_loss = validation_loss(model, corpus, &dev, port, cfg, &table)?;
        state.epoch = epoch;
        state.val_history.push(val_loss);

        let log = EpochLog {
            epoch,
            stage,
            lr: state.lr,
            train_loss: epoch_loss,
            val_loss,
            clue_condition_counts: condition_counts,
            steps,
        };
        log::info!(
            "stage {} epoch {}: lr {:.2e} train {:.3} val {:.3}",
            stage,
            epoch,
            state.lr,
            epoch_loss,
            val_loss
        );
        append_metrics(&metrics_path, &log)?;
        logs.push(log);

        let improved = state.best_val_loss.map_or(true, |b| val_loss < b);
        if improved {
            state.best_val_loss = Some(val_loss);
            save_checkpoint(&best_path, model, Some(&adam.moments()), Some(&state))?;
        }
        save_checkpoint(&last_path, model, Some(&adam.moments()), Some(&state))?;

        if stage == 2 {
            let decision = lr_schedule(epoch, &state.val_history, state.lr, cfg);
            state.lr = decision.lr();
            if decision.stop() {
                stopped_at_floor = true;
                log::info!("learning rate reached the floor; stopping stage 2");
                break 'epochs;
            }
        }
        if stage == 1 && state.global_step >= cfg.stage1_steps {
            break 'epochs;
        }
    }

    let final_path = out_dir.join(format!("stage{}.ckpt", stage));
    save_checkpoint(&final_path, model, Some(&adam.moments()), Some(&state))?;
    Ok(TrainOutcome {
        logs,
        best_val_loss: state.best_val_loss.unwrap_or(f64::INFINITY),
        final_checkpoint: final_path,
        best_checkpoint: best_path,
        stopped_at_floor,
    })
}
