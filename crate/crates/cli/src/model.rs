//! moe-demo, train-toy and gradcheck.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use overlay_core::datamodel::Dimension;
use overlay_core::moe::{forward, synth_input, Checkpoint, ConflictSpec, ModelConfig, MoeParams, N_EXPERTS};
use overlay_core::numerics::{softmax, GradCheckConfig};
use overlay_core::rng::DEFAULT_SEED;
use overlay_core::training::{
    check_model_gradients, evaluate, gen_synthetic_dataset, train, DatasetOptions, Evaluation,
    LossWeights, StepRecord, TrainConfig,
};
use serde::Serialize;

use crate::data::{emit, Format};
use crate::failure::{Failure, Outcome};

/// Size overrides shared by the model commands.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Patches kept by the relevance scorer.
    #[arg(long)]
    pub k: Option<usize>,
    /// Feature width.
    #[arg(long)]
    pub d: Option<usize>,
    /// Backbone layer after which the expert layer sits.
    #[arg(long)]
    pub insert_layer: Option<usize>,
}

impl ModelArgs {
    fn apply(&self, mut config: ModelConfig, seed: u64) -> Result<ModelConfig, Failure> {
        if let Some(k) = self.k {
            config.k_select = k;
        }
        if let Some(d) = self.d {
            config.d = d;
        }
        if let Some(l) = self.insert_layer {
            config.insert_layer = l;
        }
        config.seed = seed;
        config.validate().map_err(|e| Failure::usage(e.to_string()))?;
        Ok(config)
    }

    fn any_set(&self) -> bool {
        self.k.is_some() || self.d.is_some() || self.insert_layer.is_some()
    }
}

fn names() -> [&'static str; N_EXPERTS] {
    Dimension::ALL.map(Dimension::as_str)
}

fn distribution(values: &[f64; N_EXPERTS]) -> String {
    names()
        .iter()
        .zip(values)
        .map(|(n, v)| format!("{n} {v:.3}"))
        .collect::<Vec<_>>()
        .join("  ")
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Dimension the overlay contradicts: none, temporal, action, object or
    /// spatial.
    #[arg(long, default_value = "object")]
    pub conflict: String,
    #[arg(long, default_value_t = 1.0)]
    pub intensity: f64,
    /// Trained checkpoint; a fresh initialization is used otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Serialize)]
struct DemoSummary {
    conflict: Option<Dimension>,
    intensity: f64,
    tokens: usize,
    /// Pooled conflict-classifier distribution over (T, A, O, S).
    classifier: [f64; N_EXPERTS],
    /// Token-mean of the per-token classifier distributions.
    token_classifier: [f64; N_EXPERTS],
    expert_shares: [f64; N_EXPERTS],
    min_consistency: f64,
    mean_consistency: f64,
    gate_only: bool,
}

pub fn moe_demo(args: &DemoArgs) -> Outcome {
    let conflict = ConflictSpec::parse(&args.conflict, args.intensity).map_err(|e| Failure::usage(e.to_string()))?;
    let (config, params) = match &args.checkpoint {
        Some(path) => {
            if args.model.any_set() {
                log::warn!("size flags are ignored when a checkpoint is given");
            }
            let ck = Checkpoint::load(path).map_err(|e| Failure { message: format!("{}: {e}", path.display()), ..e.into() })?;
            (ck.config, ck.params)
        }
        None => {
            let config = args.model.apply(ModelConfig::default(), args.seed)?;
            let params = MoeParams::init(&config)?;
            (config, params)
        }
    };
    let input = synth_input(&config, args.seed, &conflict)?;
    let out = forward(&config, &params, &input)?;
    let classifier: [f64; N_EXPERTS] = softmax(&out.pooled_video_logits)
        .map_err(|e| Failure::invalid(e.to_string()))?
        .as_slice()
        .try_into()
        .expect("four classes");
    let cs: Vec<f64> = out.trace.tokens.iter().map(|t| t.c).collect();
    let summary = DemoSummary {
        conflict: conflict.dimension,
        intensity: conflict.intensity,
        tokens: out.trace.len(),
        classifier,
        token_classifier: out.trace.mean_cls_probs(),
        expert_shares: out.trace.shares(),
        min_consistency: cs.iter().cloned().fold(f64::INFINITY, f64::min),
        mean_consistency: cs.iter().sum::<f64>() / cs.len() as f64,
        gate_only: out.trace.all_gate_only(),
    };
    let body = match args.format {
        Format::Json => serde_json::to_string_pretty(&summary).expect("finite summary") + "\n",
        Format::Table => {
            let label = summary.conflict.map_or("none", Dimension::as_str);
            format!(
                "conflict: {label} (intensity {:.2}), {} tokens\n\
                 classifier (pooled):       {}\n\
                 classifier (token mean):   {}\n\
                 expert shares:             {}\n\
                 consistency: min {:.4}, mean {:.4}\n\
                 gate-only routing: {}\n",
                summary.intensity,
                summary.tokens,
                distribution(&summary.classifier),
                distribution(&summary.token_classifier),
                distribution(&summary.expert_shares),
                summary.min_consistency,
                summary.mean_consistency,
                if summary.gate_only { "yes" } else { "no" },
            )
        }
    };
    emit(None, &body)
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory for checkpoint.json, history.jsonl and report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Optimizer steps.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 1.1)]
    pub lambda_cls: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_sft: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lambda_aux: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Conflict intensity of the synthetic examples.
    #[arg(long, default_value_t = 1.0)]
    pub intensity: f64,
    /// Training examples.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Held-out examples, drawn with seed + 1.
    #[arg(long, default_value_t = 200)]
    pub heldout: usize,
}

#[derive(Debug, Serialize)]
struct TrainReport {
    steps: usize,
    seed: u64,
    train_config: TrainConfig,
    final_step: Option<StepRecord>,
    train: Evaluation,
    heldout: Evaluation,
}

fn write(path: &Path, body: &str) -> Outcome {
    fs::write(path, body).map_err(|e| Failure::io(path, e))
}

pub fn train_toy(args: &TrainArgs) -> Outcome {
    let model = args.model.apply(ModelConfig::default(), args.seed)?;
    let defaults = TrainConfig::toy();
    let config = TrainConfig {
        lr: args.lr.unwrap_or(defaults.lr),
        seed: args.seed,
        max_steps: Some(args.steps),
        loss_weights: LossWeights {
            lambda_cls: args.lambda_cls,
            lambda_sft: args.lambda_sft,
            lambda_aux: args.lambda_aux,
        },
        ..defaults
    };
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let options = DatasetOptions { intensity: args.intensity, ..DatasetOptions::default() };
    let data = gen_synthetic_dataset(args.n, &model, args.seed, &options)?;
    let heldout = gen_synthetic_dataset(args.heldout, &model, args.seed.wrapping_add(1), &options)?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::io(&args.out, e))?;

    let init = MoeParams::init(&model)?;
    log::info!("training {} steps on {} examples", args.steps, data.len());
    let outcome = train(&config, &model, init, &data)?;

    let mut history = String::new();
    for r in &outcome.history {
        history.push_str(&serde_json::to_string(r).expect("finite losses"));
        history.push('\n');
    }
    let report = TrainReport {
        steps: args.steps,
        seed: args.seed,
        train_config: config,
        final_step: outcome.history.last().cloned(),
        train: evaluate(&model, &outcome.params, &data)?,
        heldout: evaluate(&model, &outcome.params, &heldout)?,
    };
    let ck = Checkpoint::new(model, outcome.params);
    write(&args.out.join("checkpoint.json"), &ck.to_json())?;
    write(&args.out.join("history.jsonl"), &history)?;
    write(
        &args.out.join("report.json"),
        &(serde_json::to_string_pretty(&report).expect("finite report") + "\n"),
    )?;
    let h = &report.heldout;
    println!(
        "held-out: classifier accuracy {:.3}, dominant-expert agreement {:.3}, answer accuracy {:.3}",
        h.classifier_accuracy, h.dominant_agreement, h.answer_accuracy
    );
    println!("held-out expert shares: {}", distribution(&h.expert_shares));
    Ok(())
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    /// Pass threshold on the worst mixed error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Offsets the analytic gradient of parameters with this prefix, to
    /// confirm the check fails.
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
}

pub fn gradcheck(args: &GradcheckArgs) -> Outcome {
    let model = args.model.apply(ModelConfig::tiny(), args.seed)?;
    let cfg = GradCheckConfig {
        step: args.h,
        tol_rel: args.tol,
        corrupt_prefix: args.corrupt.clone(),
        ..GradCheckConfig::default()
    };
    let run = check_model_gradients(&model, &LossWeights::default(), &cfg)?;
    println!(
        "d={} K={} depth={} tokens={} values={} h={:e}",
        model.d, model.k_select, model.backbone_depth, run.tokens, run.checked_values, args.h
    );
    let groups = run.report.by_group(2);
    let width = groups.iter().map(|(g, _)| g.len()).max().unwrap_or(0);
    for (group, worst) in &groups {
        let status = if *worst <= args.tol { "ok" } else { "FAIL" };
        println!("{group:<width$}  {worst:.3e}  {status}");
    }
    let verdict = if run.report.passed { "PASS" } else { "FAIL" };
    println!("worst mixed error {:.3e} (tolerance {:e}): {verdict}", run.report.max_error, args.tol);
    if run.report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> =
            groups.iter().filter(|(_, w)| *w > args.tol).map(|(g, _)| g.as_str()).collect();
        Err(Failure::invalid(format!("gradient check failed in {}", failed.join(", "))))
    }
}
