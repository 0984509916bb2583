use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::moe::{Graph, RoutingTrace, N_EXPERTS};
use crate::numerics::{cross_attention, kl_divergence, softmax, Matrix, NumericsError, Simplex, Tape, Var};

/// Coefficients of the auxiliary terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_cls: f64,
    pub lambda_sft: f64,
    pub lambda_aux: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_cls: 1.1, lambda_sft: 1.0, lambda_aux: 0.01 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_cls", self.lambda_cls),
            ("lambda_sft", self.lambda_sft),
            ("lambda_aux", self.lambda_aux),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(TrainError::Config(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// The four loss terms of one example (or a batch mean).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub lm: f64,
    pub cls: f64,
    pub sft: f64,
    pub aux: f64,
}

/// `L_lm + λ_cls·L_cls + λ_sft·L_sft + λ_aux·L_aux`.
pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> Result<f64> {
    for (name, v) in [("lm", parts.lm), ("cls", parts.cls), ("sft", parts.sft), ("aux", parts.aux)] {
        if !v.is_finite() {
            return Err(TrainError::NonFinite(format!("loss part {name} = {v}")));
        }
    }
    Ok(parts.lm + weights.lambda_cls * parts.cls + weights.lambda_sft * parts.sft + weights.lambda_aux * parts.aux)
}

/// `−ln softmax(logits)[answer]`.
pub fn loss_lm(option_logits: &[f64], answer: usize) -> Result<f64> {
    if answer >= option_logits.len() {
        return Err(TrainError::Config(format!("answer index {answer} out of range")));
    }
    if option_logits.iter().any(|z| !z.is_finite()) {
        return Err(NumericsError::NonFinite("option logits".into()).into());
    }
    let max = option_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + option_logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - option_logits[answer])
}

/// Single-head attention pooling of the unmasked rows of `hidden` under a
/// learned query. `video_mask[t]` is true for rows that take part.
pub fn attention_pool(hidden: &Matrix, video_mask: &[bool], query: &[f64]) -> Result<Vec<f64>> {
    if video_mask.len() != hidden.rows() {
        return Err(TrainError::Config(format!(
            "mask has {} entries for {} rows",
            video_mask.len(),
            hidden.rows()
        )));
    }
    let keep: Vec<usize> = (0..hidden.rows()).filter(|&t| video_mask[t]).collect();
    if keep.is_empty() {
        return Err(NumericsError::Empty("every token is masked".into()).into());
    }
    let rows = hidden.gather_rows(&keep)?;
    Ok(cross_attention(query, &rows, &rows)?.1)
}

/// `KL(target ‖ softmax(logits))`.
pub fn loss_cls(pooled_video_logits: &[f64], target: &Simplex) -> Result<f64> {
    let q = softmax(pooled_video_logits)?;
    Ok(kl_divergence(target, &q)?.value())
}

fn nonempty(trace: &RoutingTrace) -> Result<()> {
    if trace.is_empty() {
        return Err(TrainError::Config("routing trace has no tokens".into()));
    }
    Ok(())
}

/// `KL(π ‖ mean_t softmax(g_t))`.
pub fn loss_sft(trace: &RoutingTrace, pi: &Simplex) -> Result<f64> {
    nonempty(trace)?;
    let q = Simplex::normalized(&trace.mean_probs)?;
    Ok(kl_divergence(pi, &q)?.value())
}

/// `E · Σ_e f_e · p̄_e` with `f_e` the fraction of tokens routed to `e` and
/// `p̄_e` the mean routing probability. Equals 1 under perfect balance.
pub fn loss_aux(trace: &RoutingTrace) -> Result<f64> {
    nonempty(trace)?;
    let f = trace.shares();
    Ok(N_EXPERTS as f64 * f.iter().zip(trace.mean_probs).map(|(f, p)| f * p).sum::<f64>())
}

/// Loss nodes recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub lm: Var,
    pub cls: Var,
    pub sft: Var,
    pub aux: Var,
    pub total: Var,
}

impl LossVars {
    pub fn parts(&self, tape: &Tape) -> LossParts {
        let s = |v: Var| tape.value(v).get(0, 0);
        LossParts { lm: s(self.lm), cls: s(self.cls), sft: s(self.sft), aux: s(self.aux) }
    }
}

/// Records the four terms and their weighted sum for one example.
pub fn record_losses(
    tape: &mut Tape,
    graph: &Graph,
    answer: usize,
    conflict_target: &Simplex,
    pi: &Simplex,
    weights: &LossWeights,
) -> Result<LossVars> {
    let lm = tape.cross_entropy(graph.option_logits, answer)?;
    let cls_probs = tape.softmax_rows(graph.pooled_logits)?;
    let cls = tape.kl(conflict_target.as_slice(), cls_probs)?;
    let mean_probs = tape.mean_rows(graph.route_probs)?;
    let sft = tape.kl(pi.as_slice(), mean_probs)?;
    // routing fractions enter as constants
    let fractions = Matrix::column_vector(&graph.trace.shares())?;
    let fractions = tape.constant(fractions);
    let dot = tape.matmul(mean_probs, fractions)?;
    let aux = tape.scale(dot, N_EXPERTS as f64)?;
    let total = tape.weighted_sum(&[
        (1.0, lm),
        (weights.lambda_cls, cls),
        (weights.lambda_sft, sft),
        (weights.lambda_aux, aux),
    ])?;
    Ok(LossVars { lm, cls, sft, aux, total })
}
