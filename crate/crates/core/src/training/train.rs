use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::TrainingExample;
use super::losses::{record_losses, LossParts, LossVars, LossWeights};
use super::optim::AdamW;
use super::{Result, TrainError};
use crate::moe::{build_graph, is_frozen, ModelConfig, MoeParams, RoutingTrace, N_EXPERTS};
use crate::numerics::{argmax, Matrix, Tape};
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Linear warmup length; the rate is constant afterwards.
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub batch_size: usize,
    /// Overrides the step count implied by `epochs`.
    pub max_steps: Option<usize>,
    pub loss_weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            epochs: 2,
            warmup_steps: 80,
            weight_decay: 0.01,
            seed: crate::rng::DEFAULT_SEED,
            batch_size: 8,
            max_steps: None,
            loss_weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    /// Settings for short runs on the synthetic data: 200 steps at a rate
    /// large enough to move a freshly initialized model.
    pub fn toy() -> Self {
        Self { lr: 1e-2, warmup_steps: 20, max_steps: Some(200), batch_size: 8, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(TrainError::Config("weight decay must be >= 0".into()));
        }
        self.loss_weights.validate()
    }

    pub fn total_steps(&self, n_examples: usize) -> usize {
        self.max_steps
            .unwrap_or_else(|| self.epochs * n_examples.div_ceil(self.batch_size))
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            self.lr * (step + 1) as f64 / self.warmup_steps as f64
        } else {
            self.lr
        }
    }
}

/// Batch-mean losses of one optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub l_lm: f64,
    pub l_cls: f64,
    pub l_sft: f64,
    pub l_aux: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MoeParams,
    pub history: Vec<StepRecord>,
}

/// Loss parts, total and gradients of the trainable weights for one example.
pub struct ExampleGrad {
    pub parts: LossParts,
    pub total: f64,
    pub grads: HashMap<String, Matrix>,
    pub trace: RoutingTrace,
}

/// Records the model and losses for one example on a fresh tape, with every
/// weight accepted by `trainable` as a parameter.
pub fn record_example(
    tape: &mut Tape,
    model: &ModelConfig,
    params: &MoeParams,
    example: &TrainingExample,
    weights: &LossWeights,
    trainable: impl Fn(&str) -> bool,
) -> Result<(LossVars, RoutingTrace)> {
    let w = params.to_tape(tape, trainable);
    let graph = build_graph(tape, model, &w, &example.input)?;
    let losses = record_losses(
        tape,
        &graph,
        example.answer.index(),
        &example.conflict_target,
        &example.pi,
        weights,
    )?;
    Ok((losses, graph.trace))
}

pub fn example_grad(
    model: &ModelConfig,
    params: &MoeParams,
    example: &TrainingExample,
    weights: &LossWeights,
) -> Result<ExampleGrad> {
    let mut tape = Tape::new();
    let (losses, trace) = record_example(&mut tape, model, params, example, weights, |n| !is_frozen(n))?;
    let grads = tape.backward(losses.total)?;
    let grads = tape
        .params()
        .iter()
        .filter_map(|(name, v)| grads.get(*v).map(|g| (name.clone(), g.clone())))
        .collect();
    Ok(ExampleGrad {
        parts: losses.parts(&tape),
        total: tape.value(losses.total).get(0, 0),
        grads,
        trace,
    })
}

/// Mini-batch AdamW over `dataset`. Examples are visited in a per-epoch
/// shuffled order drawn from the seed; gradients are summed in example
/// order and averaged over the batch.
pub fn train(
    config: &TrainConfig,
    model: &ModelConfig,
    init: MoeParams,
    dataset: &[TrainingExample],
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::Config("dataset is empty".into()));
    }
    init.check_shapes(model)?;
    let mut params = init;
    let mut opt = AdamW::new(&params, config.weight_decay);
    let steps = config.total_steps(dataset.len());
    let per_epoch = dataset.len().div_ceil(config.batch_size);
    let mut order: Vec<usize> = Vec::new();
    let mut history = Vec::with_capacity(steps);

    for step in 0..steps {
        let epoch = step / per_epoch;
        let offset = step % per_epoch;
        if offset == 0 {
            order = (0..dataset.len()).collect();
            order.shuffle(&mut substream(config.seed, Stream::Shuffle, epoch as u64));
        }
        let batch = &order[offset * config.batch_size..((offset + 1) * config.batch_size).min(dataset.len())];
        let scale = 1.0 / batch.len() as f64;

        let mut sum: HashMap<String, Matrix> = HashMap::new();
        let mut parts = LossParts::default();
        let mut total = 0.0;
        for &i in batch {
            let g = example_grad(model, &params, &dataset[i], &config.loss_weights)?;
            if !g.total.is_finite() {
                return Err(TrainError::NonFinite(format!("loss at step {step}")));
            }
            for (name, grad) in g.grads {
                match sum.get_mut(&name) {
                    Some(acc) => *acc = acc.add(&grad)?,
                    None => {
                        sum.insert(name, grad);
                    }
                }
            }
            parts.lm += g.parts.lm * scale;
            parts.cls += g.parts.cls * scale;
            parts.sft += g.parts.sft * scale;
            parts.aux += g.parts.aux * scale;
            total += g.total * scale;
        }
        let mean: HashMap<String, Matrix> = sum.into_iter().map(|(k, g)| (k, g.scale(scale))).collect();
        if mean.values().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFinite(format!("gradient at step {step}")));
        }
        let lr = config.lr_at(step);
        params = opt.step(&params, &mean, lr);
        history.push(StepRecord {
            step,
            lr,
            l_lm: parts.lm,
            l_cls: parts.cls,
            l_sft: parts.sft,
            l_aux: parts.aux,
            total,
        });
        log::debug!("step {step}: total {total:.5}");
    }
    Ok(TrainOutcome { params, history })
}

/// Held-out measurements of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub examples: usize,
    /// Pooled-classifier argmax equals the conflict dimension.
    pub classifier_accuracy: f64,
    /// The expert with the most tokens equals the conflict dimension.
    pub dominant_agreement: f64,
    /// Answer argmax equals the label.
    pub answer_accuracy: f64,
    /// Token shares aggregated over every example.
    pub expert_shares: [f64; N_EXPERTS],
    /// Smallest per-example load-balancing loss observed.
    pub min_loss_aux: f64,
}

pub fn evaluate(model: &ModelConfig, params: &MoeParams, examples: &[TrainingExample]) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(TrainError::Config("no examples to evaluate".into()));
    }
    let (mut cls_hits, mut dom_hits, mut ans_hits) = (0usize, 0usize, 0usize);
    let mut counts = [0usize; N_EXPERTS];
    let mut min_aux = f64::INFINITY;
    for ex in examples {
        let out = crate::moe::forward(model, params, &ex.input)?;
        let target = ex.conflict.index();
        cls_hits += usize::from(argmax(&out.pooled_video_logits) == target);
        dom_hits += usize::from(out.trace.dominant_expert() == target);
        ans_hits += usize::from(argmax(&out.option_logits) == ex.answer.index());
        for (c, n) in counts.iter_mut().zip(out.trace.counts) {
            *c += n;
        }
        min_aux = min_aux.min(super::losses::loss_aux(&out.trace)?);
    }
    let n = examples.len() as f64;
    let tokens = counts.iter().sum::<usize>().max(1) as f64;
    Ok(Evaluation {
        examples: examples.len(),
        classifier_accuracy: cls_hits as f64 / n,
        dominant_agreement: dom_hits as f64 / n,
        answer_accuracy: ans_hits as f64 / n,
        expert_shares: counts.map(|c| c as f64 / tokens),
        min_loss_aux: min_aux,
    })
}
