use serde::Serialize;

use super::dataset::{gen_synthetic_dataset, DatasetOptions};
use super::losses::LossWeights;
use super::train::record_example;
use super::Result;
use crate::moe::{is_frozen, ModelConfig, MoeParams};
use crate::numerics::{grad_check, GradCheckConfig, GradReport, Tape};

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckRun {
    pub tokens: usize,
    pub checked_values: usize,
    pub report: GradReport,
}

/// Finite-difference check of the total loss with respect to every
/// trainable weight of a freshly initialized model on one synthetic
/// example. Model and example are seeded from `model.seed`.
pub fn check_model_gradients(
    model: &ModelConfig,
    weights: &LossWeights,
    config: &GradCheckConfig,
) -> Result<GradCheckRun> {
    let params = MoeParams::init(model)?;
    let example = gen_synthetic_dataset(1, model, model.seed, &DatasetOptions::default())?
        .pop()
        .expect("one example");
    let mut tape = Tape::new();
    let (losses, trace) = record_example(&mut tape, model, &params, &example, weights, |n| !is_frozen(n))?;
    let report = grad_check(&mut tape, losses.total, config)?;
    Ok(GradCheckRun {
        tokens: trace.len(),
        checked_values: report.params.iter().map(|p| p.entries).sum(),
        report,
    })
}
