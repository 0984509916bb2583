use serde::{Deserialize, Serialize};

use super::config::N_EXPERTS;
use crate::numerics::argmax;

/// Role of a token in the sequence entering the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenSlot {
    Visual { patch: usize },
    Ocr { patch: usize },
    Diff { patch: usize },
    Query { index: usize },
}

/// Routing of one token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRoute {
    /// Consistency score, 1 for tokens that are not visual/OCR patches.
    pub c: f64,
    /// Classifier weight `(1 − c) / 2`.
    pub cw: f64,
    pub gate_logits: [f64; N_EXPERTS],
    /// `softmax(Cls(h))`.
    pub cls_probs: [f64; N_EXPERTS],
    /// Combined routing logits `g`.
    pub logits: [f64; N_EXPERTS],
    /// `softmax(g)`.
    pub probs: [f64; N_EXPERTS],
    pub expert: usize,
}

impl TokenRoute {
    /// The classifier contributes nothing to this token's logits.
    pub fn is_gate_only(&self) -> bool {
        self.cw == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingTrace {
    pub tokens: Vec<TokenRoute>,
    /// Token roles, aligned with `tokens`; empty when the caller did not
    /// supply a layout.
    pub layout: Vec<TokenSlot>,
    /// Tokens routed to each expert.
    pub counts: [usize; N_EXPERTS],
    /// Token-mean of `softmax(g)`.
    pub mean_probs: [f64; N_EXPERTS],
}

impl RoutingTrace {
    pub fn new(tokens: Vec<TokenRoute>, layout: Vec<TokenSlot>) -> Self {
        let mut counts = [0; N_EXPERTS];
        let mut mean_probs = [0.0; N_EXPERTS];
        for t in &tokens {
            counts[t.expert] += 1;
            for (m, p) in mean_probs.iter_mut().zip(t.probs) {
                *m += p;
            }
        }
        if !tokens.is_empty() {
            let n = tokens.len() as f64;
            mean_probs.iter_mut().for_each(|m| *m /= n);
        }
        Self { tokens, layout, counts, mean_probs }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Fraction of tokens per expert.
    pub fn shares(&self) -> [f64; N_EXPERTS] {
        let n = self.tokens.len().max(1) as f64;
        self.counts.map(|c| c as f64 / n)
    }

    /// Expert with the most tokens, lowest index on ties.
    pub fn dominant_expert(&self) -> usize {
        argmax(&self.counts.map(|c| c as f64))
    }

    /// Token-mean of the classifier distribution.
    pub fn mean_cls_probs(&self) -> [f64; N_EXPERTS] {
        let mut out = [0.0; N_EXPERTS];
        for t in &self.tokens {
            for (o, p) in out.iter_mut().zip(t.cls_probs) {
                *o += p;
            }
        }
        let n = self.tokens.len().max(1) as f64;
        out.map(|x| x / n)
    }

    pub fn all_gate_only(&self) -> bool {
        self.tokens.iter().all(TokenRoute::is_gate_only)
    }
}
