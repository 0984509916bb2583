use std::collections::HashMap;

use crate::moe::{is_bias, is_frozen, MoeParams};
use crate::numerics::Matrix;

/// Adam with decoupled weight decay. Frozen weights are skipped; biases are
/// not decayed.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Moment estimates in the parameters' visiting order.
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl AdamW {
    pub fn new(params: &MoeParams, weight_decay: f64) -> Self {
        let mut zeros = Vec::new();
        params.visit(|_, p| zeros.push(vec![0.0; p.len()]));
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// One update with learning rate `lr`. `grads` maps parameter names to
    /// gradients; trainable parameters without an entry get a zero gradient.
    pub fn step(&mut self, params: &MoeParams, grads: &HashMap<String, Matrix>, lr: f64) -> MoeParams {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let mut index = 0;
        params.map(|name, p| {
            let i = index;
            index += 1;
            if is_frozen(name) {
                return p.clone();
            }
            let g = grads.get(name).map(Matrix::data);
            let wd = if is_bias(name) { 0.0 } else { self.weight_decay };
            let data = p
                .data()
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    let gj = g.map_or(0.0, |g| g[j]);
                    let m = &mut self.m[i][j];
                    let v = &mut self.v[i][j];
                    *m = b1 * *m + (1.0 - b1) * gj;
                    *v = b2 * *v + (1.0 - b2) * gj * gj;
                    let step = (*m / c1) / ((*v / c2).sqrt() + eps);
                    x - lr * (step + wd * x)
                })
                .collect();
            Matrix::new(p.rows(), p.cols(), data).expect("finite update")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moe::ModelConfig;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_matches_hand_adam() {
        let params = MoeParams::init(&ModelConfig::tiny()).unwrap();
        let mut grads = HashMap::new();
        let g = Matrix::filled(1, 4, 0.5);
        grads.insert("gate.bias".to_string(), g);
        let mut opt = AdamW::new(&params, 0.01);
        let lr = 0.1;
        let next = opt.step(&params, &grads, lr);
        // m̂ = g, v̂ = g², so the step is g/(|g| + ε) ≈ 1 per entry
        let want = params.gate.bias.get(0, 0) - lr * (0.5 / (0.5 + 1e-8));
        assert_abs_diff_eq!(next.gate.bias.get(0, 0), want, epsilon = 1e-15);
        // no gradient: only decoupled decay moves a weight
        let x = params.gate.weight.get(0, 0);
        assert_abs_diff_eq!(next.gate.weight.get(0, 0), x - lr * 0.01 * x, epsilon = 1e-15);
        assert_eq!(next.backbone, params.backbone);
        assert_eq!(next.answer, params.answer);
    }

    #[test]
    fn quadratic_surrogate_second_step() {
        // f(x) = x²/2 on gate.bias[0]: g = x
        let params = MoeParams::init(&ModelConfig::tiny()).unwrap();
        let mut opt = AdamW::new(&params, 0.0);
        let mut p = params.clone();
        let (mut m, mut v, mut x) = (0.0, 0.0, p.gate.bias.get(0, 0));
        let lr = 0.05;
        for t in 1..=3 {
            let mut g = Matrix::zeros(1, 4);
            g.set(0, 0, p.gate.bias.get(0, 0));
            let grads = HashMap::from([("gate.bias".to_string(), g)]);
            p = opt.step(&p, &grads, lr);
            m = 0.9 * m + 0.1 * x;
            v = 0.999 * v + 0.001 * x * x;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            x -= lr * m_hat / (v_hat.sqrt() + 1e-8);
            assert_abs_diff_eq!(p.gate.bias.get(0, 0), x, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_lr_leaves_params() {
        let params = MoeParams::init(&ModelConfig::tiny()).unwrap();
        let mut opt = AdamW::new(&params, 0.01);
        let grads = HashMap::from([("gate.weight".to_string(), Matrix::filled(8, 4, 1.0))]);
        assert_eq!(opt.step(&params, &grads, 0.0), params);
    }
}
