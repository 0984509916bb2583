//! The model's building blocks on plain matrices. [`super::forward`]
//! records the same computation on a tape.

use super::config::N_EXPERTS;
use super::params::{Affine, Conditioner, Expert};
use super::trace::{RoutingTrace, TokenRoute};
use super::{MoeError, Result};
use crate::numerics::{argmax, cosine, cross_attention, silu, softmax, swiglu, Matrix, NumericsError, Simplex};

/// Attention weights of the scorer query over the visual patches.
pub fn relevance_scores(q_vis: &[f64], f_vis: &Matrix) -> Result<Simplex> {
    Ok(cross_attention(q_vis, f_vis, f_vis)?.0)
}

/// Indices of the `k` largest scores, ties toward the lower index, returned
/// in ascending order.
pub fn topk_select(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(MoeError::Config(format!("cannot select {k} of {} patches", scores.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut picked = order[..k].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

fn project(x: &[f64], w: &Matrix) -> Result<Vec<f64>> {
    Ok(Matrix::row_vector(x)?.matmul(w)?.into_data())
}

/// `patch + attend(patch·W_q, Q·W_k, Q·W_v)`.
pub fn condition_patch(patch: &[f64], query_tokens: &Matrix, cond: &Conditioner<Matrix>) -> Result<Vec<f64>> {
    if query_tokens.rows() == 0 {
        return Err(NumericsError::Empty("no query tokens to condition on".into()).into());
    }
    let q = project(patch, &cond.w_q)?;
    let k = query_tokens.matmul(&cond.w_k)?;
    let v = query_tokens.matmul(&cond.w_v)?;
    let (_, attended) = cross_attention(&q, &k, &v)?;
    Ok(patch.iter().zip(attended).map(|(p, a)| p + a).collect())
}

/// Visual token, OCR token and their difference for one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTriplet {
    pub f_vis_hat: Vec<f64>,
    pub f_ocr_hat: Vec<f64>,
    pub diff: Vec<f64>,
}

pub fn build_three_token(f_vis_hat: &[f64], f_ocr_hat: &[f64]) -> Result<PatchTriplet> {
    if f_vis_hat.len() != f_ocr_hat.len() {
        return Err(MoeError::Shape(format!(
            "visual token has length {}, OCR token {}",
            f_vis_hat.len(),
            f_ocr_hat.len()
        )));
    }
    Ok(PatchTriplet {
        f_vis_hat: f_vis_hat.to_vec(),
        f_ocr_hat: f_ocr_hat.to_vec(),
        diff: f_ocr_hat.iter().zip(f_vis_hat).map(|(o, v)| o - v).collect(),
    })
}

/// Applies `H ← H + silu(H·W + b)` for each layer in turn.
pub fn backbone_forward(tokens: &Matrix, layers: &[Affine<Matrix>]) -> Result<Matrix> {
    let mut h = tokens.clone();
    for layer in layers {
        let z = h.matmul(&layer.weight)?.add_row(&layer.bias)?.map(silu);
        h = h.add(&z)?;
    }
    Ok(h)
}

/// Cosine between a patch's visual and OCR hidden states; a zero vector
/// counts as fully consistent.
pub fn consistency(h_vis: &[f64], h_ocr: &[f64]) -> Result<f64> {
    match cosine(h_vis, h_ocr) {
        Ok(c) => Ok(c),
        Err(NumericsError::DegenerateVector) => Ok(1.0),
        Err(e) => Err(e.into()),
    }
}

/// `(1 − c) / 2`.
pub fn classifier_weight(c: f64) -> f64 {
    (1.0 - c) / 2.0
}

fn head(h: &[f64], a: &Affine<Matrix>) -> Result<[f64; N_EXPERTS]> {
    let out = Matrix::row_vector(h)?.matmul(&a.weight)?.add_row(&a.bias)?;
    out.data()
        .try_into()
        .map_err(|_| MoeError::Shape(format!("head produces {} outputs", out.len())))
}

/// Full routing record for one token.
pub fn route_token(h: &[f64], c: f64, gate: &Affine<Matrix>, cls: &Affine<Matrix>) -> Result<TokenRoute> {
    let gate_logits = head(h, gate)?;
    let cls_probs: [f64; N_EXPERTS] = softmax(&head(h, cls)?)?
        .as_slice()
        .try_into()
        .expect("four classes");
    let cw = classifier_weight(c);
    let logits = std::array::from_fn(|e| gate_logits[e] + cw * cls_probs[e]);
    let probs = softmax(&logits)?.as_slice().try_into().expect("four experts");
    Ok(TokenRoute {
        c,
        cw,
        gate_logits,
        cls_probs,
        logits,
        probs,
        expert: route_top1(&logits),
    })
}

/// `g = Gate(h) + (1 − c)/2 · softmax(Cls(h))`.
pub fn routing_logits(h: &[f64], c: f64, gate: &Affine<Matrix>, cls: &Affine<Matrix>) -> Result<[f64; N_EXPERTS]> {
    Ok(route_token(h, c, gate, cls)?.logits)
}

/// Highest-logit expert, lower index on ties.
pub fn route_top1(g: &[f64]) -> usize {
    argmax(g)
}

/// Routes every token to one expert and adds that expert's output to it.
pub fn moe_layer(
    h: &Matrix,
    c: &[f64],
    gate: &Affine<Matrix>,
    cls: &Affine<Matrix>,
    experts: &[Expert<Matrix>],
) -> Result<(Matrix, RoutingTrace)> {
    if c.len() != h.rows() {
        return Err(MoeError::Shape(format!("{} consistency scores for {} tokens", c.len(), h.rows())));
    }
    let mut out = h.clone();
    let mut tokens = Vec::with_capacity(h.rows());
    for (t, &ct) in c.iter().enumerate() {
        let route = route_token(h.row(t), ct, gate, cls)?;
        let x = &experts[route.expert];
        let delta = swiglu(h.row(t), &x.w_gate, &x.w_up, &x.w_down)?;
        out.row_mut(t).iter_mut().zip(delta).for_each(|(o, d)| *o += d);
        tokens.push(route);
    }
    Ok((out, RoutingTrace::new(tokens, Vec::new())))
}
