//! Seeded synthetic model responses with controlled answer rates.

use rand::Rng;

use super::schema::{BenchmarkSample, Condition, EvaluationRecord, OptionLabel};
use super::DataError;
use crate::numerics::Simplex;
use crate::rng::{stream, Stream};

/// Answer rates under one condition. `p_halluc` only applies to
/// contradictory samples; the remaining mass is spread uniformly over the
/// other options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionBehavior {
    pub p_correct: f64,
    pub p_halluc: f64,
}

impl ConditionBehavior {
    pub fn new(p_correct: f64, p_halluc: f64) -> Self {
        Self { p_correct, p_halluc }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorProfile {
    pub free: ConditionBehavior,
    pub congruent: ConditionBehavior,
    pub contradictory: ConditionBehavior,
    /// Also emit per-option probabilities.
    pub with_probs: bool,
}

impl BehaviorProfile {
    /// Same correctness rate everywhere, `p_halluc` on contradictory samples.
    pub fn uniform(p_correct: f64, p_halluc: f64) -> Self {
        Self {
            free: ConditionBehavior::new(p_correct, 0.0),
            congruent: ConditionBehavior::new(p_correct, 0.0),
            contradictory: ConditionBehavior::new(p_correct, p_halluc),
            with_probs: false,
        }
    }

    pub fn for_condition(&self, c: Condition) -> ConditionBehavior {
        match c {
            Condition::TextFree => self.free,
            Condition::TextCongruent => self.congruent,
            Condition::TextContradictory => self.contradictory,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        for c in Condition::ALL {
            let b = self.for_condition(c);
            for (name, p) in [("p_correct", b.p_correct), ("p_halluc", b.p_halluc)] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(DataError::Profile(format!("{c} {name} = {p} is outside [0, 1]")));
                }
            }
            if c != Condition::TextContradictory && b.p_halluc != 0.0 {
                return Err(DataError::Profile(format!(
                    "{c} has no hallucination option, p_halluc must be 0"
                )));
            }
            if b.p_correct + b.p_halluc > 1.0 + 1e-12 {
                return Err(DataError::Profile(format!(
                    "{c} probabilities sum to {} > 1",
                    b.p_correct + b.p_halluc
                )));
            }
        }
        Ok(())
    }
}

/// Draws one response per sample, in sample order, from the simulator
/// stream of `seed`.
pub fn synthesize_responses(
    samples: &[BenchmarkSample],
    profile: &BehaviorProfile,
    model_id: &str,
    seed: u64,
) -> Result<Vec<EvaluationRecord>, DataError> {
    profile.validate()?;
    let mut rng = stream(seed, Stream::Simulator);
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let b = profile.for_condition(s.condition);
        let halluc = s.hallucination_option.filter(|_| s.is_contradictory());
        let u: f64 = rng.gen();
        let prediction = if u < b.p_correct {
            s.ground_truth
        } else if let Some(o) = halluc.filter(|_| u < b.p_correct + b.p_halluc) {
            o
        } else {
            let residual: Vec<OptionLabel> = OptionLabel::ALL
                .into_iter()
                .filter(|l| *l != s.ground_truth && Some(*l) != halluc)
                .collect();
            residual[rng.gen_range(0..residual.len())]
        };
        let option_probs = profile.with_probs.then(|| {
            let peak = 0.4 + 0.5 * rng.gen::<f64>();
            let rest = (1.0 - peak) / 3.0;
            let mut p = [rest; 4];
            p[prediction.index()] = peak;
            Simplex::normalized(&p).expect("positive weights")
        });
        out.push(EvaluationRecord {
            sample_id: s.sample_id.clone(),
            model_id: model_id.to_string(),
            prediction,
            option_probs,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::tests::sample;
    use crate::datamodel::{join, record_to_line};

    fn corpus(n: usize, condition: Condition) -> Vec<BenchmarkSample> {
        (0..n).map(|i| sample(&format!("s{i}"), &format!("g{i}"), condition)).collect()
    }

    #[test]
    fn always_correct() {
        let samples = corpus(50, Condition::TextContradictory);
        let recs = synthesize_responses(&samples, &BehaviorProfile::uniform(1.0, 0.0), "m", 1).unwrap();
        assert!(recs.iter().all(|r| r.prediction == OptionLabel::A));
    }

    #[test]
    fn always_hallucinates() {
        let samples = corpus(50, Condition::TextContradictory);
        let recs = synthesize_responses(&samples, &BehaviorProfile::uniform(0.0, 1.0), "m", 1).unwrap();
        let ev = join(&samples, &recs, "m").unwrap().evaluated;
        assert!(ev.iter().all(|e| e.hallucinated && !e.correct));
    }

    #[test]
    fn empirical_rates_converge() {
        let samples = corpus(10_000, Condition::TextContradictory);
        let recs = synthesize_responses(&samples, &BehaviorProfile::uniform(0.7, 0.3), "m", 42).unwrap();
        let n = recs.len() as f64;
        let y = recs.iter().filter(|r| r.prediction == OptionLabel::A).count() as f64 / n;
        let o = recs.iter().filter(|r| r.prediction == OptionLabel::B).count() as f64 / n;
        assert!((y - 0.7).abs() <= 0.02, "p(y) = {y}");
        assert!((o - 0.3).abs() <= 0.02, "p(o) = {o}");

        let samples = corpus(10_000, Condition::TextFree);
        let recs = synthesize_responses(&samples, &BehaviorProfile::uniform(0.4, 0.0), "m", 42).unwrap();
        let residual = recs.iter().filter(|r| r.prediction == OptionLabel::D).count() as f64 / n;
        assert!((residual - 0.2).abs() <= 0.02, "residual share {residual}");
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let samples = corpus(200, Condition::TextContradictory);
        let mut profile = BehaviorProfile::uniform(0.5, 0.3);
        profile.with_probs = true;
        let render = |seed| {
            synthesize_responses(&samples, &profile, "m", seed)
                .unwrap()
                .iter()
                .map(record_to_line)
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(render(9), render(9));
        assert_ne!(render(9), render(10));
    }

    #[test]
    fn invalid_profiles_rejected() {
        let samples = corpus(1, Condition::TextFree);
        for p in [
            BehaviorProfile::uniform(1.2, 0.0),
            BehaviorProfile::uniform(0.8, 0.3),
            BehaviorProfile::uniform(0.5, -0.1),
        ] {
            assert!(synthesize_responses(&samples, &p, "m", 0).is_err());
        }
        let mut p = BehaviorProfile::uniform(0.5, 0.0);
        p.free.p_halluc = 0.2;
        assert!(p.validate().is_err());
    }
}
