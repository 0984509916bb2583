use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Result, TrainError};
use crate::datamodel::{Dimension, OptionLabel};
use crate::moe::{draw_features, draw_query_tokens, ConflictSpec, ModelConfig, ModelInput, N_EXPERTS};
use crate::numerics::Simplex;
use crate::rng::{stream, substream, Stream};

/// One synthetic training example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input: ModelInput,
    pub answer: OptionLabel,
    pub conflict: Dimension,
    /// Classifier supervision: one-hot on the conflict dimension.
    pub conflict_target: Simplex,
    /// Expert allocation target.
    pub pi: Simplex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetOptions {
    pub intensity: f64,
    /// Allocation mass on the conflict dimension; the rest is split evenly.
    pub dominant_mass: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self { intensity: 1.0, dominant_mass: 0.7 }
    }
}

/// Fixed direction carrying the answer in the visual stream, norm `√d / 2`.
fn answer_signal(d: usize, answer: OptionLabel) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0000 + answer.index() as u64);
    let raw: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let scale = 0.5 * (d as f64).sqrt() / norm;
    raw.into_iter().map(|x| x * scale).collect()
}

/// `n` examples with conflict dimensions balanced to within one and
/// shuffled. Each example's question tokens point at its conflict
/// dimension; the answer is drawn uniformly and written into the visual
/// stream.
pub fn gen_synthetic_dataset(
    n: usize,
    config: &ModelConfig,
    seed: u64,
    options: &DatasetOptions,
) -> Result<Vec<TrainingExample>> {
    if n == 0 {
        return Err(TrainError::Config("dataset size must be at least 1".into()));
    }
    config.validate()?;
    if !(0.0..=1.0).contains(&options.dominant_mass) {
        return Err(TrainError::Config(format!(
            "dominant mass {} is outside [0, 1]",
            options.dominant_mass
        )));
    }
    let mut dims: Vec<Dimension> = (0..n).map(|i| Dimension::ALL[i % N_EXPERTS]).collect();
    dims.shuffle(&mut stream(seed, Stream::Shuffle));

    let rest = (1.0 - options.dominant_mass) / (N_EXPERTS - 1) as f64;
    dims.into_iter()
        .enumerate()
        .map(|(i, dim)| {
            let mut rng = substream(seed, Stream::Dataset, i as u64);
            let answer = OptionLabel::ALL[rng.gen_range(0..4)];
            let signal = answer_signal(config.d, answer);
            let conflict = ConflictSpec::new(dim, options.intensity);
            let (f_vis, f_ocr) = draw_features(config, &mut rng, &conflict, Some(&signal))?;
            let query_tokens = draw_query_tokens(config, &mut rng, Some(dim))?;
            let mut pi = [rest; N_EXPERTS];
            pi[dim.index()] = options.dominant_mass;
            Ok(TrainingExample {
                input: ModelInput { f_vis, f_ocr, query_tokens },
                answer,
                conflict: dim,
                conflict_target: Simplex::one_hot(N_EXPERTS, dim.index()),
                pi: Simplex::new(pi.to_vec())?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_seeded() {
        let c = ModelConfig::tiny();
        let four = gen_synthetic_dataset(4, &c, 1, &DatasetOptions::default()).unwrap();
        let mut dims: Vec<_> = four.iter().map(|e| e.conflict).collect();
        dims.sort();
        assert_eq!(dims, Dimension::ALL.to_vec());

        let a = gen_synthetic_dataset(30, &c, 9, &DatasetOptions::default()).unwrap();
        assert_eq!(a, gen_synthetic_dataset(30, &c, 9, &DatasetOptions::default()).unwrap());
        assert_ne!(a, gen_synthetic_dataset(30, &c, 10, &DatasetOptions::default()).unwrap());
        let e = &a[0];
        assert_eq!(e.pi[e.conflict.index()], 0.7);
        assert!((e.pi[(e.conflict.index() + 1) % 4] - 0.1).abs() < 1e-15);
        assert!(gen_synthetic_dataset(0, &c, 9, &DatasetOptions::default()).is_err());
    }
}
