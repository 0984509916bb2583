use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, N_EXPERTS};
use super::{MoeError, Result};
use crate::datamodel::Dimension;
use crate::numerics::{Matrix, Tape, Var};
use crate::rng::{stream, Stream};

/// `x·weight + bias` with `weight` stored `d_in × d_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine<T> {
    pub weight: T,
    pub bias: T,
}

/// Cross-attention from patches (queries) to question tokens (keys and
/// values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditioner<T> {
    pub w_q: T,
    pub w_k: T,
    pub w_v: T,
}

/// SwiGLU feed-forward block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expert<T> {
    pub w_gate: T,
    pub w_up: T,
    pub w_down: T,
}

/// Every model weight. `T` is [`Matrix`] for stored parameters and [`Var`]
/// while a forward pass is recorded on a tape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights<T> {
    /// Relevance scorer query, `1 × d`.
    pub q_vis: T,
    pub conditioner_vis: Conditioner<T>,
    pub conditioner_ocr: Conditioner<T>,
    pub backbone: Vec<Affine<T>>,
    pub gate: Affine<T>,
    pub cls: Affine<T>,
    /// In (T, A, O, S) order.
    pub experts: Vec<Expert<T>>,
    /// Query of the attention pool feeding the pooled classifier, `1 × d`.
    pub pool_query: T,
    pub answer: Affine<T>,
}

pub type MoeParams = Weights<Matrix>;

fn map_affine<T, U, F: FnMut(&str, &T) -> U>(f: &mut F, prefix: &str, a: &Affine<T>) -> Affine<U> {
    Affine {
        weight: f(&format!("{prefix}.weight"), &a.weight),
        bias: f(&format!("{prefix}.bias"), &a.bias),
    }
}

fn map_conditioner<T, U, F: FnMut(&str, &T) -> U>(
    f: &mut F,
    prefix: &str,
    c: &Conditioner<T>,
) -> Conditioner<U> {
    Conditioner {
        w_q: f(&format!("{prefix}.w_q"), &c.w_q),
        w_k: f(&format!("{prefix}.w_k"), &c.w_k),
        w_v: f(&format!("{prefix}.w_v"), &c.w_v),
    }
}

impl<T> Weights<T> {
    /// Applies `f` to every weight with its dotted name, in a fixed order.
    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> Weights<U> {
        let f = &mut f;
        Weights {
            q_vis: f("relevance.query", &self.q_vis),
            conditioner_vis: map_conditioner(f, "conditioner.vis", &self.conditioner_vis),
            conditioner_ocr: map_conditioner(f, "conditioner.ocr", &self.conditioner_ocr),
            backbone: self
                .backbone
                .iter()
                .enumerate()
                .map(|(i, a)| map_affine(f, &format!("backbone.{i}"), a))
                .collect(),
            gate: map_affine(f, "gate", &self.gate),
            cls: map_affine(f, "cls", &self.cls),
            experts: self
                .experts
                .iter()
                .enumerate()
                .map(|(e, x)| {
                    let p = format!("experts.{}", Dimension::ALL[e]);
                    Expert {
                        w_gate: f(&format!("{p}.w_gate"), &x.w_gate),
                        w_up: f(&format!("{p}.w_up"), &x.w_up),
                        w_down: f(&format!("{p}.w_down"), &x.w_down),
                    }
                })
                .collect(),
            pool_query: f("pool.query", &self.pool_query),
            answer: map_affine(f, "answer", &self.answer),
        }
    }

    pub fn visit(&self, mut f: impl FnMut(&str, &T)) {
        self.map(|name, t| f(name, t));
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(|name, _| out.push(name.to_string()));
        out
    }
}

/// Backbone and answer head stand in for a frozen language model and are
/// never updated.
pub fn is_frozen(name: &str) -> bool {
    name.starts_with("backbone.") || name.starts_with("answer.")
}

/// Biases are exempt from weight decay.
pub fn is_bias(name: &str) -> bool {
    name.ends_with(".bias")
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal) * std).collect();
    Matrix::new(rows, cols, data).expect("finite samples")
}

impl Weights<Matrix> {
    /// Seeded initialization from the init stream of `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, Stream::Init);
        let (d, h) = (config.d, config.expert_hidden);
        let inv = |n: usize| 1.0 / (n as f64).sqrt();
        let rng = &mut rng;
        let conditioner = |rng: &mut ChaCha8Rng| Conditioner {
            w_q: gaussian(rng, d, d, inv(d)),
            w_k: gaussian(rng, d, d, inv(d)),
            w_v: gaussian(rng, d, d, 0.5 * inv(d)),
        };
        let q_vis = gaussian(rng, 1, d, inv(d));
        // the OCR conditioner starts as a copy so that identical streams give
        // identical tokens until training separates them
        let conditioner_vis = conditioner(rng);
        let conditioner_ocr = conditioner_vis.clone();
        let backbone = (0..config.backbone_depth)
            .map(|_| Affine { weight: gaussian(rng, d, d, 0.5 * inv(d)), bias: Matrix::zeros(1, d) })
            .collect();
        let head = |rng: &mut ChaCha8Rng| Affine {
            weight: gaussian(rng, d, N_EXPERTS, inv(d)),
            bias: Matrix::zeros(1, N_EXPERTS),
        };
        let gate = head(rng);
        let cls = head(rng);
        let experts = (0..N_EXPERTS)
            .map(|_| Expert {
                w_gate: gaussian(rng, d, h, inv(d)),
                w_up: gaussian(rng, d, h, inv(d)),
                w_down: gaussian(rng, h, d, 0.5 * inv(h)),
            })
            .collect();
        let pool_query = gaussian(rng, 1, d, inv(d));
        let answer = head(rng);
        Ok(Self {
            q_vis,
            conditioner_vis,
            conditioner_ocr,
            backbone,
            gate,
            cls,
            experts,
            pool_query,
            answer,
        })
    }

    /// Checks every shape against `config`.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let (d, h, e) = (config.d, config.expert_hidden, N_EXPERTS);
        if self.backbone.len() != config.backbone_depth || self.experts.len() != e {
            return Err(MoeError::Shape(format!(
                "{} backbone layers and {} experts, expected {} and {e}",
                self.backbone.len(),
                self.experts.len(),
                config.backbone_depth
            )));
        }
        let mut bad = None;
        self.visit(|name, m| {
            let leaf = name.rsplit('.').next().unwrap_or(name);
            let want = match (name.split('.').next().unwrap_or(""), leaf) {
                ("relevance" | "pool", _) => (1, d),
                ("conditioner", _) => (d, d),
                ("backbone", "weight") => (d, d),
                ("backbone", _) => (1, d),
                ("experts", "w_down") => (h, d),
                ("experts", _) => (d, h),
                (_, "weight") => (d, e),
                _ => (1, e),
            };
            if m.shape() != want && bad.is_none() {
                bad = Some(format!("{name} has shape {:?}, expected {want:?}", m.shape()));
            }
        });
        bad.map_or(Ok(()), |m| Err(MoeError::Shape(m)))
    }

    /// Records the weights on a tape: trainable ones as named parameters,
    /// the rest as constants.
    pub fn to_tape(&self, tape: &mut Tape, trainable: impl Fn(&str) -> bool) -> Weights<Var> {
        self.map(|name, m| {
            if trainable(name) {
                tape.param(name, m.clone())
            } else {
                tape.constant(m.clone())
            }
        })
    }

    pub fn n_values(&self) -> usize {
        let mut n = 0;
        self.visit(|_, m| n += m.len());
        n
    }
}

const CHECKPOINT_FORMAT: &str = "overlay-moe-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Parameters with the configuration they were built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: MoeParams,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: MoeParams) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config,
            params,
        }
    }

    /// Deterministic JSON encoding.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("parameters are finite");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(MoeError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        c.config.validate()?;
        c.params.check_shapes(&c.config)?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
