//! Seeded stand-ins for the visual and OCR encoder outputs and the question
//! tokens.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{ModelConfig, N_EXPERTS};
use super::{MoeError, Result};
use crate::datamodel::Dimension;
use crate::numerics::Matrix;
use crate::rng::{stream, Stream};

/// Which dimension the overlay contradicts, and how strongly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictSpec {
    pub dimension: Option<Dimension>,
    pub intensity: f64,
}

impl ConflictSpec {
    pub fn none() -> Self {
        Self { dimension: None, intensity: 0.0 }
    }

    pub fn new(dimension: Dimension, intensity: f64) -> Self {
        Self { dimension: Some(dimension), intensity }
    }

    /// Parses `none`, `temporal`, `action`, `object` or `spatial`.
    pub fn parse(name: &str, intensity: f64) -> Result<Self> {
        let spec = match name {
            "none" => Self { dimension: None, intensity },
            other => Self {
                dimension: Some(Dimension::parse(other).ok_or_else(|| {
                    MoeError::Config(format!("unknown conflict dimension `{other}`"))
                })?),
                intensity,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(MoeError::Config(format!(
                "intensity {} is outside [0, 1]",
                self.intensity
            )));
        }
        Ok(())
    }
}

/// Encoder outputs and question tokens for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub f_vis: Matrix,
    pub f_ocr: Matrix,
    pub query_tokens: Matrix,
}

/// Unit direction for conflicts in dimension `e`: equal positive weight on
/// coordinates `j ≡ e (mod 4)`. Directions of different dimensions are
/// exactly orthogonal.
pub fn conflict_direction(d: usize, e: usize) -> Vec<f64> {
    let support = (0..d).filter(|j| j % N_EXPERTS == e).count();
    let w = if support == 0 { 0.0 } else { 1.0 / (support as f64).sqrt() };
    (0..d).map(|j| if j % N_EXPERTS == e { w } else { 0.0 }).collect()
}

fn noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()
}

/// Draws `(F_vis, F_ocr)`. Visual patches are standard normal plus an
/// optional answer signal; OCR patches equal the visual ones plus
/// `intensity` times a residual along the conflict dimension's direction.
pub(crate) fn draw_features(
    config: &ModelConfig,
    rng: &mut ChaCha8Rng,
    conflict: &ConflictSpec,
    answer_signal: Option<&[f64]>,
) -> Result<(Matrix, Matrix)> {
    conflict.validate()?;
    let (n, d) = (config.n_patches, config.d);
    let mut vis = noise(rng, n, d);
    if let Some(signal) = answer_signal {
        for row in vis.chunks_mut(d) {
            row.iter_mut().zip(signal).for_each(|(x, s)| *x += s);
        }
    }
    let f_vis = Matrix::new(n, d, vis)?;
    let Some(dim) = conflict.dimension.filter(|_| conflict.intensity > 0.0) else {
        return Ok((f_vis.clone(), f_vis));
    };
    if d < N_EXPERTS {
        return Err(MoeError::Config(format!("conflict features need d >= {N_EXPERTS}")));
    }
    let u = conflict_direction(d, dim.index());
    let scale = (d as f64).sqrt();
    let mut ocr = f_vis.clone();
    for i in 0..n {
        let sigma: f64 = rng.gen_range(0.75..1.25);
        let jitter = noise(rng, 1, d);
        for (j, x) in ocr.row_mut(i).iter_mut().enumerate() {
            *x += conflict.intensity * (sigma * scale * u[j] + 0.1 * jitter[j]);
        }
    }
    Ok((f_vis, ocr))
}

/// Seeded `(F_vis, F_ocr)`, each `n_patches × d`.
pub fn synth_features(config: &ModelConfig, seed: u64, conflict: &ConflictSpec) -> Result<(Matrix, Matrix)> {
    draw_features(config, &mut stream(seed, Stream::Features), conflict, None)
}

/// Question tokens: standard normal, plus a signal along the direction of
/// the dimension the question is about, when given.
pub(crate) fn draw_query_tokens(
    config: &ModelConfig,
    rng: &mut ChaCha8Rng,
    about: Option<Dimension>,
) -> Result<Matrix> {
    let (n, d) = (config.n_query, config.d);
    let mut data = noise(rng, n, d);
    if let Some(dim) = about.filter(|_| d >= N_EXPERTS) {
        let u = conflict_direction(d, dim.index());
        let scale = (d as f64).sqrt();
        for row in data.chunks_mut(d) {
            row.iter_mut().zip(&u).for_each(|(x, u)| *x += scale * u);
        }
    }
    Ok(Matrix::new(n, d, data)?)
}

/// A complete seeded input for demos: features from the features stream,
/// question tokens about the conflict dimension.
pub fn synth_input(config: &ModelConfig, seed: u64, conflict: &ConflictSpec) -> Result<ModelInput> {
    let mut rng = stream(seed, Stream::Features);
    let (f_vis, f_ocr) = draw_features(config, &mut rng, conflict, None)?;
    let query_tokens = draw_query_tokens(config, &mut rng, conflict.dimension)?;
    Ok(ModelInput { f_vis, f_ocr, query_tokens })
}
