//! Command-line entry point.
//!
//! One binary, subcommand per pipeline step. Every command is deterministic
//! given (config, seed) and writes a metadata file with the resolved
//! config, the fields overridden from defaults, and content hashes of its
//! file inputs.
//!
//! Exit codes: 0 ok, 2 config error, 3 data/validation error, 4 numeric
//! error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::clue::{ClueBundle, HashTextEncoder, SidecarTextEncoder, TextEncoderPort};
use crate::config::{content_hash, write_metadata, RunConfig, RunMetadata, TextEncoderMode};
use crate::dataset::{
    compute_stats, generate_specs, ingest_manifest, make_splits, synth_toy_corpus, synthesize_mixture,
    validate_specs, write_manifest, CorpusIndex, MixtureSpec, RealizedMixture, Split,
};
use crate::dsp::{read_wav, write_wav};
use crate::eval::{ablation_harness, clue_discrimination, evaluate, generate_discrimination_pairs};
use crate::numerics::{grad_check, Graph, NodeId, Tensor};
use crate::sep::{load_checkpoint, SepModel};
use crate::train::{train_stage, ClueCondition};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("config error: {0}")]
    Usage(String),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error(transparent)]
    Sep(#[from] crate::sep::SepError),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error("gradient check failed: max relative error {0}")]
    GradCheckFailed(f64),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Numerics(_) | CliError::GradCheckFailed(_) => EXIT_NUMERIC,
            CliError::Sep(crate::sep::SepError::Numerics(_)) => EXIT_NUMERIC,
            CliError::Train(crate::train::TrainError::Config(_)) => EXIT_CONFIG,
            CliError::Train(crate::train::TrainError::Numerics(_)) => EXIT_NUMERIC,
            CliError::Eval(crate::eval::EvalError::Config(_)) => EXIT_CONFIG,
            _ => EXIT_DATA,
        }
    }
}

#[derive(Parser)]
#[command(name = "stylesep", about = "Text- and audio-clue guided target speech extraction", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic labeled corpus (WAVs + manifest).
    SynthCorpus {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate mixture recipes, synthesize them, and write statistics.
    Mixgen {
        #[arg(long)]
        config: PathBuf,
        /// Skip writing mixture WAVs (recipes + stats only).
        #[arg(long)]
        recipes_only: bool,
    },
    /// Train one stage; stage 2 requires a stage-1 checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// Resume from an interrupted checkpoint of the same stage.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Initialize stage 2 from this stage-1 checkpoint
        /// (default: <run_dir>/stage1.ckpt).
        #[arg(long)]
        init_from: Option<PathBuf>,
    },
    /// Extract the clued speaker from a mixture WAV.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mixture: PathBuf,
        #[arg(long)]
        text: Option<String>,
        #[arg(long)]
        clue_audio: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Sidecar JSONL of precomputed text embeddings.
        #[arg(long)]
        text_sidecar: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split with stratified reporting.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Also run the clue-discrimination diagnostic with this many pairs
        /// per attribute.
        #[arg(long, default_value_t = 0)]
        discrimination_pairs: usize,
    },
    /// Train and compare the fusion/pooling ablation arms.
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Verify gradients of every operation and of the full forward pass.
    Gradcheck {
        /// Relative-error threshold for the composite model check.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

pub fn run() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e);
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {}", s);
                source = s.source();
            }
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::SynthCorpus { config } => cmd_synth_corpus(&config),
        Command::Mixgen { config, recipes_only } => cmd_mixgen(&config, recipes_only),
        Command::Train { config, stage, resume, init_from } => cmd_train(&config, stage, resume, init_from),
        Command::Extract { model, mixture, text, clue_audio, out, text_sidecar } => {
            cmd_extract(&model, &mixture, text, clue_audio, &out, text_sidecar)
        }
        Command::Eval { config, model, discrimination_pairs } => cmd_eval(&config, &model, discrimination_pairs),
        Command::Ablate { config } => cmd_ablate(&config),
        Command::Gradcheck { tolerance } => cmd_gradcheck(tolerance),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn text_port(cfg: &RunConfig) -> Result<Box<dyn TextEncoderPort>, CliError> {
    Ok(match cfg.text_encoder.mode {
        TextEncoderMode::Hash => Box::new(HashTextEncoder::new(cfg.model.text_encoder_seed)),
        TextEncoderMode::Sidecar => {
            let path = cfg.text_encoder.sidecar_path.as_ref().expect("validated");
            Box::new(SidecarTextEncoder::load(path).map_err(crate::sep::SepError::from)?)
        }
    })
}

fn load_corpus(cfg: &RunConfig) -> Result<CorpusIndex, CliError> {
    let manifest = cfg.paths.corpus_dir.join("manifest.jsonl");
    let report = ingest_manifest(&manifest)?;
    for (line, reason) in &report.rejected {
        log::warn!("manifest line {}: rejected ({})", line, reason);
    }
    if report.records.is_empty() {
        return Err(CliError::Usage(format!("no usable records in {}", manifest.display())));
    }
    Ok(CorpusIndex::new(cfg.paths.corpus_dir.clone(), report.records))
}

fn load_specs(cfg: &RunConfig) -> Result<Vec<MixtureSpec>, CliError> {
    let path = cfg.paths.mixtures_dir.join("mixtures.jsonl");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut specs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let spec: MixtureSpec = serde_json::from_str(line)
            .map_err(|e| CliError::Usage(format!("{} line {}: {}", path.display(), i + 1, e)))?;
        specs.push(spec);
    }
    Ok(specs)
}

fn cmd_synth_corpus(config: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let records = synth_toy_corpus(
        &cfg.paths.corpus_dir,
        cfg.dataset.n_speakers,
        cfg.dataset.utts_per_speaker,
        cfg.seed,
    )?;
    let manifest = cfg.paths.corpus_dir.join("manifest.jsonl");
    write_manifest(&manifest, &records)?;
    write_metadata(
        &cfg.paths.corpus_dir,
        &RunMetadata {
            command: "synth_corpus",
            resolved_config: &cfg,
            overrides: cfg.overrides(),
            input_hashes: BTreeMap::new(),
        },
    )
    .map_err(io_err(&cfg.paths.corpus_dir))?;
    println!(
        "corpus: {} utterances from {} speakers -> {}",
        records.len(),
        cfg.dataset.n_speakers,
        manifest.display()
    );
    Ok(())
}

fn cmd_mixgen(config: &Path, recipes_only: bool) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let corpus = load_corpus(&cfg)?;
    let mut specs = generate_specs(&corpus, &cfg.mixgen_config())?;
    make_splits(&mut specs, cfg.dataset.split_seed)?;
    if let Err(violations) = validate_specs(&corpus, &specs) {
        return Err(CliError::Usage(format!(
            "constraint audit failed for {} mixtures; first: {}",
            violations.len(),
            violations[0]
        )));
    }

    std::fs::create_dir_all(&cfg.paths.mixtures_dir).map_err(io_err(&cfg.paths.mixtures_dir))?;
    let mut realized: Vec<RealizedMixture> = Vec::with_capacity(specs.len());
    if recipes_only {
        for spec in &specs {
            realized.push(RealizedMixture {
                snr_lu: crate::dsp::snr_lu(spec.target_lufs, spec.interference_lufs),
                snr_energy_db: f64::NAN,
                target_gain: f64::NAN,
                interference_gain: f64::NAN,
                spec: spec.clone(),
            });
        }
    } else {
        let wav_dir = cfg.paths.mixtures_dir.join("wav");
        std::fs::create_dir_all(&wav_dir).map_err(io_err(&wav_dir))?;
        for spec in &specs {
            let synth = synthesize_mixture(&corpus, spec)?;
            write_wav(wav_dir.join(format!("{}_mix.wav", spec.mixture_id)), &synth.mixture)?;
            write_wav(wav_dir.join(format!("{}_target.wav", spec.mixture_id)), &synth.target_ref)?;
            realized.push(synth.realized);
        }
    }

    let meta_path = cfg.paths.mixtures_dir.join("mixtures.jsonl");
    let mut lines = String::new();
    for r in &realized {
        lines.push_str(&serde_json::to_string(&r.spec).expect("spec serializes"));
        lines.push('\n');
    }
    std::fs::write(&meta_path, lines).map_err(io_err(&meta_path))?;
    let realized_path = cfg.paths.mixtures_dir.join("mixtures_realized.jsonl");
    let mut lines = String::new();
    for r in &realized {
        lines.push_str(&serde_json::to_string(r).expect("realized serializes"));
        lines.push('\n');
    }
    std::fs::write(&realized_path, lines).map_err(io_err(&realized_path))?;

    let stats = compute_stats(&corpus, &specs);
    let stats_path = cfg.paths.mixtures_dir.join("stats.json");
    std::fs::write(&stats_path, serde_json::to_string_pretty(&stats).expect("stats serialize"))
        .map_err(io_err(&stats_path))?;

    let manifest = cfg.paths.corpus_dir.join("manifest.jsonl");
    let mut hashes = BTreeMap::new();
    hashes.insert("manifest.jsonl".to_string(), content_hash(&manifest).map_err(io_err(&manifest))?);
    write_metadata(
        &cfg.paths.mixtures_dir,
        &RunMetadata {
            command: "mixgen",
            resolved_config: &cfg,
            overrides: cfg.overrides(),
            input_hashes: hashes,
        },
    )
    .map_err(io_err(&cfg.paths.mixtures_dir))?;

    println!(
        "mixtures: {} generated; snr_lu mean {:+.3} dB std {:.3} dB; splits {:?}; constraint audit clean",
        stats.n_mixtures, stats.snr_lu_mean, stats.snr_lu_std, stats.split_counts
    );
    Ok(())
}

fn cmd_train(config: &Path, stage: u8, resume: Option<PathBuf>, init_from: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let corpus = load_corpus(&cfg)?;
    let specs = load_specs(&cfg)?;
    let port = text_port(&cfg)?;
    std::fs::create_dir_all(&cfg.paths.run_dir).map_err(io_err(&cfg.paths.run_dir))?;

    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    train_cfg.onset_max_frac = cfg.dataset.onset_max_frac;

    let (mut model, resume_state) = if let Some(ckpt) = &resume {
        let loaded = load_checkpoint(ckpt)?;
        let moments = loaded
            .moments
            .ok_or_else(|| CliError::Usage(format!("{} has no optimizer state to resume", ckpt.display())))?;
        let state = loaded
            .trainer
            .ok_or_else(|| CliError::Usage(format!("{} has no trainer state to resume", ckpt.display())))?;
        (loaded.model, Some((moments, state)))
    } else if stage == 2 {
        let source = init_from.unwrap_or_else(|| cfg.paths.run_dir.join("stage1.ckpt"));
        if !source.exists() {
            return Err(CliError::Usage(format!(
                "stage 2 requires a stage-1 checkpoint; {} not found (run --stage 1 first or pass --init-from)",
                source.display()
            )));
        }
        (load_checkpoint(&source)?.model, None)
    } else {
        (SepModel::new(cfg.model.clone())?, None)
    };

    let mut hashes = BTreeMap::new();
    let manifest = cfg.paths.corpus_dir.join("manifest.jsonl");
    hashes.insert("manifest.jsonl".to_string(), content_hash(&manifest).map_err(io_err(&manifest))?);
    let mixtures = cfg.paths.mixtures_dir.join("mixtures.jsonl");
    hashes.insert("mixtures.jsonl".to_string(), content_hash(&mixtures).map_err(io_err(&mixtures))?);

    let outcome = train_stage(
        stage,
        &mut model,
        &corpus,
        &specs,
        port.as_ref(),
        &train_cfg,
        &cfg.paths.run_dir,
        resume_state,
    )?;
    write_metadata(
        &cfg.paths.run_dir,
        &RunMetadata {
            command: if stage == 1 { "train_stage1" } else { "train_stage2" },
            resolved_config: &cfg,
            overrides: cfg.overrides(),
            input_hashes: hashes,
        },
    )
    .map_err(io_err(&cfg.paths.run_dir))?;
    println!(
        "stage {}: {} epochs, best val loss {:.3}, final checkpoint {}",
        stage,
        outcome.logs.len(),
        outcome.best_val_loss,
        outcome.final_checkpoint.display()
    );
    Ok(())
}

fn cmd_extract(
    model_path: &Path,
    mixture: &Path,
    text: Option<String>,
    clue_audio: Option<PathBuf>,
    out: &Path,
    text_sidecar: Option<PathBuf>,
) -> Result<(), CliError> {
    if text.is_none() && clue_audio.is_none() {
        return Err(CliError::Usage("provide --text and/or --clue-audio".to_string()));
    }
    let checkpoint = load_checkpoint(model_path)?;
    let port: Box<dyn TextEncoderPort> = match text_sidecar {
        Some(p) => Box::new(SidecarTextEncoder::load(&p).map_err(crate::sep::SepError::from)?),
        None => Box::new(HashTextEncoder::new(checkpoint.model.config.text_encoder_seed)),
    };
    let mix = read_wav(mixture)?;
    let audio = clue_audio.map(read_wav).transpose()?;
    let bundle = ClueBundle { audio, text };
    let est = checkpoint.model.extract(&mix, &bundle, port.as_ref())?;
    write_wav(out, &est)?;
    println!("wrote {} ({} samples)", out.display(), est.len());
    Ok(())
}

fn cmd_eval(config: &Path, model_path: &Path, discrimination_pairs: usize) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let corpus = load_corpus(&cfg)?;
    let specs = load_specs(&cfg)?;
    let port = text_port(&cfg)?;
    let checkpoint = load_checkpoint(model_path)?;

    let test: Vec<&MixtureSpec> = specs.iter().filter(|s| s.split == Split::Test).collect();
    if test.is_empty() {
        return Err(CliError::Usage("no test-split mixtures".to_string()));
    }
    let report = evaluate(&checkpoint.model, &corpus, &test, port.as_ref())?;

    let eval_dir = cfg.paths.run_dir.join("eval");
    std::fs::create_dir_all(&eval_dir).map_err(io_err(&eval_dir))?;
    let json_path = eval_dir.join("report.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report).expect("report serializes"))
        .map_err(io_err(&json_path))?;
    let txt = report.render_text();
    let txt_path = eval_dir.join("report.txt");
    std::fs::write(&txt_path, &txt).map_err(io_err(&txt_path))?;
    let records_path = eval_dir.join("records.jsonl");
    let mut lines = String::new();
    for r in &report.records {
        lines.push_str(&serde_json::to_string(r).expect("record serializes"));
        lines.push('\n');
    }
    std::fs::write(&records_path, lines).map_err(io_err(&records_path))?;
    print!("{}", txt);

    if discrimination_pairs > 0 {
        let mut pairs = Vec::new();
        for attr in crate::dataset::ALL_ATTRIBUTES {
            pairs.extend(generate_discrimination_pairs(
                &corpus,
                attr,
                ClueCondition::TextAudio,
                discrimination_pairs,
                cfg.seed,
            )?);
        }
        if pairs.is_empty() {
            log::warn!("no single-attribute pairs available for discrimination");
        } else {
            let acc = clue_discrimination(&checkpoint.model, &pairs, port.as_ref())?;
            println!("clue discrimination: {:.3} over {} pairs", acc, pairs.len());
        }
    }

    let mut hashes = BTreeMap::new();
    hashes.insert(
        "checkpoint".to_string(),
        content_hash(model_path).map_err(io_err(model_path))?,
    );
    let mixtures = cfg.paths.mixtures_dir.join("mixtures.jsonl");
    hashes.insert("mixtures.jsonl".to_string(), content_hash(&mixtures).map_err(io_err(&mixtures))?);
    write_metadata(
        &eval_dir,
        &RunMetadata {
            command: "eval",
            resolved_config: &cfg,
            overrides: cfg.overrides(),
            input_hashes: hashes,
        },
    )
    .map_err(io_err(&eval_dir))?;
    Ok(())
}

fn cmd_ablate(config: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let corpus = load_corpus(&cfg)?;
    let specs = load_specs(&cfg)?;
    let port = text_port(&cfg)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    train_cfg.onset_max_frac = cfg.dataset.onset_max_frac;

    let out_dir = cfg.paths.run_dir.join("ablation");
    let report = ablation_harness(
        &crate::eval::ablation::standard_arms(),
        &cfg.model,
        &corpus,
        &specs,
        &train_cfg,
        port.as_ref(),
        &out_dir,
    )?;
    std::fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let json_path = out_dir.join("ablation.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report).expect("report serializes"))
        .map_err(io_err(&json_path))?;
    print!("{}", report.render_text());
    write_metadata(
        &out_dir,
        &RunMetadata {
            command: "ablate",
            resolved_config: &cfg,
            overrides: cfg.overrides(),
            input_hashes: BTreeMap::new(),
        },
    )
    .map_err(io_err(&out_dir))?;
    Ok(())
}

fn cmd_gradcheck(tolerance: f64) -> Result<(), CliError> {
    use crate::seeding::stream_rng;
    use rand::Rng;

    let mut worst: f64 = 0.0;
    let mut rows: Vec<(String, f64)> = Vec::new();
    let mut rng = stream_rng(7, &["gradcheck-cli"]);
    let rand_tensor = |shape: &[usize], rng: &mut rand_chacha::ChaCha8Rng| {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape")
    };

    // Individual operations.
    let affine_in = vec![rand_tensor(&[3, 4], &mut rng), rand_tensor(&[5, 4], &mut rng), rand_tensor(&[5], &mut rng)];
    let checks: Vec<(&str, Vec<Tensor>, Box<dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId, crate::numerics::NumericsError>>)> = vec![
        (
            "affine",
            affine_in,
            Box::new(|g, ids| {
                let y = g.matmul(ids[0], ids[1], false, true)?;
                let y = g.add_bias(y, ids[2])?;
                Ok(g.sum_all(y))
            }),
        ),
        (
            "conv1d+transpose",
            vec![rand_tensor(&[2, 12], &mut rng), rand_tensor(&[3, 2, 4], &mut rng), rand_tensor(&[3, 1, 4], &mut rng)],
            Box::new(|g, ids| {
                let h = g.conv1d(ids[0], ids[1], 2)?;
                let y = g.conv_transpose1d(h, ids[2], 2, 12)?;
                let sq = g.mul(y, y)?;
                Ok(g.sum_all(sq))
            }),
        ),
        (
            "softmax+layer_norm+sigmoid",
            vec![rand_tensor(&[4, 6], &mut rng)],
            Box::new(|g, ids| {
                let s = g.softmax(ids[0], 1)?;
                let l = g.layer_norm(s, 1)?;
                let w = g.sigmoid(l);
                Ok(g.mean_all(w))
            }),
        ),
        (
            "relu (away from kink)",
            vec![Tensor::from_vec((0..10).map(|i| 0.02 + 0.1 * i as f64).collect())],
            Box::new(|g, ids| {
                let y = g.relu(ids[0]);
                let sq = g.mul(y, y)?;
                Ok(g.sum_all(sq))
            }),
        ),
        (
            "chunk+overlap_add",
            vec![rand_tensor(&[9, 3], &mut rng)],
            Box::new(|g, ids| {
                let c = g.chunk_frames(ids[0], 4, 2)?;
                let sq = g.mul(c, c)?;
                let back = g.overlap_add_mean(sq, 2, 9)?;
                Ok(g.sum_all(back))
            }),
        ),
        (
            "attention",
            {
                let mut v = vec![rand_tensor(&[3, 4], &mut rng)];
                for _ in 0..4 {
                    v.push(rand_tensor(&[4, 4], &mut rng));
                }
                for _ in 0..4 {
                    v.push(rand_tensor(&[4], &mut rng));
                }
                v
            },
            Box::new(|g, ids| {
                let p = crate::numerics::AttentionParams {
                    wq: ids[1],
                    wk: ids[2],
                    wv: ids[3],
                    wo: ids[4],
                    bq: ids[5],
                    bk: ids[6],
                    bv: ids[7],
                    bo: ids[8],
                };
                let y = crate::numerics::multi_head_attention(g, ids[0], ids[0], ids[0], 2, &p)?;
                let sq = g.mul(y, y)?;
                Ok(g.mean_all(sq))
            }),
        ),
    ];
    for (name, inputs, f) in checks {
        let rep = grad_check(&f, &inputs, 1e-5)?;
        rows.push((name.to_string(), rep.max_rel_err));
        worst = worst.max(rep.max_rel_err);
    }

    // Full model composition: extract -> si_sdr loss.
    {
        use crate::sep::{ModelConfig, SepConfig};
        let model = SepModel::new(ModelConfig {
            sep: SepConfig {
                channels: 16,
                kernel: 16,
                stride: 8,
                chunk: 10,
                heads: 2,
                ff_dim: 32,
                ..SepConfig::default()
            },
            ..ModelConfig::default()
        })?;
        let port = HashTextEncoder::new(0);
        let noise = |len: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            crate::dsp::Waveform::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect())
        };
        let mix = noise(240, &mut rng);
        let reference = noise(240, &mut rng);
        let clue = crate::clue::ResolvedClue {
            audio: Some(noise(120, &mut rng)),
            text: "The happy voice.".to_string(),
            audio_is_placeholder: false,
        };
        let rep = model
            .finite_difference_check(
                |m, g, b| {
                    let est = m.extract_node(g, b, &mix, &clue, &port)?;
                    crate::train::si_sdr_loss_node(g, est, &reference.samples)
                        .map_err(|e| crate::sep::SepError::Numerics(crate::numerics::NumericsError::Config(e.to_string())))
                },
                2,
                1e-5,
                13,
            )?;
        rows.push(("extract -> si_sdr loss".to_string(), rep.max_rel_err));
        worst = worst.max(rep.max_rel_err);
    }

    for (name, err) in &rows {
        println!("{:<28} max rel err {:.3e}", name, err);
    }
    if worst > tolerance {
        return Err(CliError::GradCheckFailed(worst));
    }
    println!("all gradient checks within {:.1e}", tolerance);
    Ok(())
}
