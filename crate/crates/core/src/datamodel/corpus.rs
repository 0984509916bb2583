//! Seeded synthetic benchmark corpora for demos and tests.

use rand::seq::SliceRandom;
use rand::Rng;

use super::schema::{reference_attributes, BenchmarkSample, Condition, OptionLabel};
use crate::numerics::Simplex;
use crate::rng::{stream, Stream};

/// Shape of a synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub groups: usize,
    /// Probability that each condition variant of a group is emitted. A
    /// group always keeps at least one variant.
    pub keep_condition: f64,
    /// Draw the semantic conflict score uniformly from 1..=5; otherwise every
    /// contradictory sample gets this fixed score.
    pub fixed_scs: Option<u8>,
}

impl CorpusSpec {
    /// `groups` complete groups with uniformly drawn conflict scores.
    pub fn complete(groups: usize) -> Self {
        Self { groups, keep_condition: 1.0, fixed_scs: None }
    }
}

/// Generates groups of condition variants that share a question, options
/// and ground truth. Attributes come from the reference list, so dimension
/// and tier are consistent with it. Draws from the dataset stream of `seed`.
pub fn synth_corpus(spec: &CorpusSpec, seed: u64) -> Vec<BenchmarkSample> {
    let attrs = reference_attributes();
    let mut rng = stream(seed, Stream::Dataset);
    let mut out = Vec::with_capacity(spec.groups * 3);
    for g in 0..spec.groups {
        let (dimension, tier, attribute) = attrs[rng.gen_range(0..attrs.len())];
        let ground_truth = OptionLabel::ALL[rng.gen_range(0..4)];
        let others: Vec<OptionLabel> =
            OptionLabel::ALL.into_iter().filter(|l| *l != ground_truth).collect();
        let halluc = *others.choose(&mut rng).expect("three alternatives");
        let scs = spec.fixed_scs.unwrap_or_else(|| rng.gen_range(1..=5));
        let mut raw = [0.1; 4];
        raw[dimension.index()] = 0.7;

        let mut kept: Vec<Condition> =
            Condition::ALL.into_iter().filter(|_| rng.gen::<f64>() < spec.keep_condition).collect();
        if kept.is_empty() {
            kept.push(*Condition::ALL.choose(&mut rng).expect("three conditions"));
        }
        for condition in kept {
            let contra = condition == Condition::TextContradictory;
            out.push(BenchmarkSample {
                sample_id: format!("g{g:05}-{}", condition.as_str()),
                group_id: format!("g{g:05}"),
                dimension,
                attribute: attribute.to_string(),
                tier,
                condition,
                options: ["opt a", "opt b", "opt c", "opt d"].map(String::from),
                ground_truth,
                hallucination_option: contra.then_some(halluc),
                scs: contra.then_some(scs),
                allocation: Simplex::normalized(&raw).expect("positive allocation"),
                allocation_raw: raw,
            });
        }
    }
    out
}
