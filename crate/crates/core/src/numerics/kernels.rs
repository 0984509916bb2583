use serde::{Deserialize, Serialize};

use super::{Matrix, NumericsError, Result, Simplex};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x · σ(x)`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// `d/dx silu(x) = σ(x) (1 + x (1 − σ(x)))`.
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

pub fn softmax(v: &[f64]) -> Result<Simplex> {
    if v.is_empty() {
        return Err(NumericsError::Empty("softmax of empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(NumericsError::NonFinite("softmax input".into()));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(Simplex::from_raw(out))
}

/// Cosine similarity clamped to `[-1, 1]`, exactly 1 for identical inputs. A zero vector is reported as
/// [`NumericsError::DegenerateVector`]; callers choose the fallback.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(NumericsError::Shape(format!(
            "cosine of lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    cosine_or_none(u, v).ok_or(NumericsError::DegenerateVector)
}

/// Cosine of two equal-length slices, `None` for a zero vector. Identical
/// inputs give exactly 1.
pub(crate) fn cosine_or_none(u: &[f64], v: &[f64]) -> Option<f64> {
    let (dot, nu, nv) = dot_norms(u, v);
    if nu == 0.0 || nv == 0.0 {
        None
    } else if u == v {
        Some(1.0)
    } else {
        Some((dot / (nu * nv)).clamp(-1.0, 1.0))
    }
}

pub(crate) fn dot_norms(u: &[f64], v: &[f64]) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    (dot, uu.sqrt(), vv.sqrt())
}

/// Single-head scaled dot-product attention of one query over `keys`,
/// returning the attention weights and `weightsᵀ · values`.
pub fn cross_attention(query: &[f64], keys: &Matrix, values: &Matrix) -> Result<(Simplex, Vec<f64>)> {
    if keys.rows() != values.rows() {
        return Err(NumericsError::Shape(format!(
            "{} keys but {} values",
            keys.rows(),
            values.rows()
        )));
    }
    if query.len() != keys.cols() {
        return Err(NumericsError::Shape(format!(
            "query length {} against key width {}",
            query.len(),
            keys.cols()
        )));
    }
    if keys.rows() == 0 {
        return Err(NumericsError::Empty("attention over zero keys".into()));
    }
    let scale = 1.0 / (query.len() as f64).sqrt();
    let mut scores: Vec<f64> = (0..keys.rows())
        .map(|r| keys.row(r).iter().zip(query).map(|(k, q)| k * q).sum::<f64>() * scale)
        .collect();
    softmax_in_place(&mut scores);
    let mut out = vec![0.0; values.cols()];
    for (r, w) in scores.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(values.row(r)) {
            *o += w * v;
        }
    }
    Ok((Simplex::from_raw(scores), out))
}

/// SwiGLU feed-forward on a row vector with `(d_in × d_out)` weight layout:
/// `(silu(x·W_gate) ⊙ (x·W_up)) · W_down`.
pub fn swiglu(x: &[f64], w_gate: &Matrix, w_up: &Matrix, w_down: &Matrix) -> Result<Vec<f64>> {
    if w_gate.shape() != w_up.shape() || w_gate.rows() != x.len() || w_down.rows() != w_gate.cols() {
        return Err(NumericsError::Shape(format!(
            "swiglu x:{} gate:{:?} up:{:?} down:{:?}",
            x.len(),
            w_gate.shape(),
            w_up.shape(),
            w_down.shape()
        )));
    }
    let xr = Matrix::row_vector(x)?;
    let gate = xr.matmul(w_gate)?.map(silu);
    let up = xr.matmul(w_up)?;
    Ok(gate.hadamard(&up)?.matmul(w_down)?.into_data())
}

/// Result of a KL evaluation: support violations are flagged rather than
/// reported as an error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Divergence {
    Finite(f64),
    Infinite,
}

impl Divergence {
    pub fn value(self) -> f64 {
        match self {
            Divergence::Finite(v) => v,
            Divergence::Infinite => f64::INFINITY,
        }
    }
}

/// `KL(p ‖ q) = Σ p_i ln(p_i / q_i)` with `0 · ln(0/q) = 0`.
pub fn kl_divergence(p: &Simplex, q: &Simplex) -> Result<Divergence> {
    if p.len() != q.len() {
        return Err(NumericsError::Shape(format!("KL of lengths {} and {}", p.len(), q.len())));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.as_slice().iter().zip(q.as_slice()) {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Ok(Divergence::Infinite);
        }
        total += pi * (pi / qi).ln();
    }
    Ok(Divergence::Finite(total.max(0.0)))
}
