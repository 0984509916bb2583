//! Central-difference verification of tape gradients.

use serde::Serialize;

use super::{NumericsError, Result, Tape, Var};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Finite-difference step `h`.
    pub step: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Fault injection: parameters whose name starts with this prefix get
    /// their analytic gradient offset before comparison. Used to confirm the
    /// checker actually fails.
    pub corrupt_prefix: Option<String>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-5, tol_abs: 1e-6, tol_rel: 1e-4, corrupt_prefix: None }
    }
}

/// Worst mixed error found within one named parameter.
#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub worst_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub params: Vec<ParamCheck>,
    pub max_error: f64,
    pub tol_rel: f64,
    pub passed: bool,
}

impl GradReport {
    /// Worst error per group, where a group is the name up to the first
    /// `separator_depth` dots (e.g. depth 2 turns `experts.temporal.w_up`
    /// into `experts.temporal`).
    pub fn by_group(&self, separator_depth: usize) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for p in &self.params {
            let group: String =
                p.name.split('.').take(separator_depth).collect::<Vec<_>>().join(".");
            match out.iter_mut().find(|(g, _)| *g == group) {
                Some((_, worst)) => *worst = worst.max(p.worst_error),
                None => out.push((group, p.worst_error)),
            }
        }
        out
    }
}

/// Compares the analytic gradient of the scalar `output` against
/// `(f(θ+h) − f(θ−h)) / 2h` for every entry of every parameter leaf.
///
/// The mixed error is `|g_a − g_n| / max(tol_abs, |g_n|)`; the check passes
/// when every entry is at most `tol_rel`. The tape is replayed in place and
/// restored to its original leaf values before returning.
pub fn grad_check(tape: &mut Tape, output: Var, config: &GradCheckConfig) -> Result<GradReport> {
    if config.step <= 0.0 {
        return Err(NumericsError::InvalidArgument("finite-difference step must be > 0".into()));
    }
    if tape.value(output).shape() != (1, 1) {
        return Err(NumericsError::Shape("gradient check needs a scalar output".into()));
    }
    let grads = tape.backward(output)?;
    let params: Vec<(String, Var)> = tape.params().to_vec();
    let mut checks = Vec::with_capacity(params.len());

    for (name, var) in params {
        let original = tape.value(var).clone();
        let mut analytic = grads
            .get(var)
            .cloned()
            .unwrap_or_else(|| super::Matrix::zeros(original.rows(), original.cols()));
        if config.corrupt_prefix.as_deref().is_some_and(|p| name.starts_with(p)) {
            analytic.data_mut().iter_mut().for_each(|g| *g += 1e-2);
        }

        let mut check = ParamCheck {
            name: name.clone(),
            entries: original.len(),
            worst_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for idx in 0..original.len() {
            let eval_at = |tape: &mut Tape, delta: f64| -> Result<f64> {
                let mut probe = original.clone();
                probe.data_mut()[idx] += delta;
                tape.set_leaf(var, probe)?;
                tape.replay()?;
                Ok(tape.value(output).data()[0])
            };
            let plus = eval_at(tape, config.step)?;
            let minus = eval_at(tape, -config.step)?;
            let numeric = (plus - minus) / (2.0 * config.step);
            let a = analytic.data()[idx];
            let err = (a - numeric).abs() / config.tol_abs.max(numeric.abs());
            if !(err <= check.worst_error) {
                check.worst_error = err;
                check.worst_index = idx;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        tape.set_leaf(var, original)?;
        checks.push(check);
    }
    tape.replay()?;

    let max_error = checks.iter().map(|c| c.worst_error).fold(0.0, f64::max);
    Ok(GradReport {
        passed: max_error <= config.tol_rel && max_error.is_finite(),
        params: checks,
        max_error,
        tol_rel: config.tol_rel,
    })
}
