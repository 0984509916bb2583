use std::fmt;

use serde::{Deserialize, Serialize};

use crate::numerics::Simplex;

/// Question dimension. The declaration order (T, A, O, S) is the canonical
/// order of allocation vectors and of the experts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Temporal,
    Action,
    Object,
    Spatial,
}

impl Dimension {
    pub const ALL: [Dimension; 4] =
        [Dimension::Temporal, Dimension::Action, Dimension::Object, Dimension::Spatial];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Temporal => "temporal",
            Dimension::Action => "action",
            Dimension::Object => "object",
            Dimension::Spatial => "spatial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Overlay condition a video is shown under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    TextFree,
    TextCongruent,
    TextContradictory,
}

impl Condition {
    pub const ALL: [Condition; 3] =
        [Condition::TextFree, Condition::TextCongruent, Condition::TextContradictory];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::TextFree => "text_free",
            Condition::TextCongruent => "text_congruent",
            Condition::TextContradictory => "text_contradictory",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Multiple-choice option label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OptionLabel {
    A,
    B,
    C,
    D,
}

impl OptionLabel {
    pub const ALL: [OptionLabel; 4] = [OptionLabel::A, OptionLabel::B, OptionLabel::C, OptionLabel::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        ["A", "B", "C", "D"][self.index()]
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.as_str() == s)
    }
}

impl fmt::Display for OptionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cognitive tier, ordinal 1..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    Perceptual = 1,
    Semantic = 2,
    Reasoning = 3,
}

impl Tier {
    pub fn level(self) -> u8 {
        self as u8
    }

    pub fn from_level(level: i64) -> Option<Self> {
        match level {
            1 => Some(Tier::Perceptual),
            2 => Some(Tier::Semantic),
            3 => Some(Tier::Reasoning),
            _ => None,
        }
    }
}

/// One benchmark question under one overlay condition.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSample {
    pub sample_id: String,
    /// Links the condition variants of one video-question pair.
    pub group_id: String,
    pub dimension: Dimension,
    pub attribute: String,
    pub tier: Tier,
    pub condition: Condition,
    pub options: [String; 4],
    pub ground_truth: OptionLabel,
    /// Option asserted by the contradictory overlay; present iff the
    /// condition is [`Condition::TextContradictory`].
    pub hallucination_option: Option<OptionLabel>,
    /// Semantic conflict score 1..=5; present iff contradictory.
    pub scs: Option<u8>,
    /// Expert allocation over (T, A, O, S), renormalized to sum to one.
    pub allocation: Simplex,
    /// Allocation exactly as read, kept for audit and for re-serialization.
    pub allocation_raw: [f64; 4],
}

impl BenchmarkSample {
    pub fn is_contradictory(&self) -> bool {
        self.condition == Condition::TextContradictory
    }

    /// Sum of the allocation as annotated, before renormalization.
    pub fn allocation_raw_sum(&self) -> f64 {
        self.allocation_raw.iter().sum()
    }
}

/// A model's answer to one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub sample_id: String,
    pub model_id: String,
    pub prediction: OptionLabel,
    /// Per-option probabilities in A..D order, when the model exposes them.
    pub option_probs: Option<Simplex>,
}

/// A sample joined with one model response.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedSample {
    pub sample: BenchmarkSample,
    pub record: EvaluationRecord,
    /// `C_i`: the prediction equals the ground truth.
    pub correct: bool,
    /// `H_i`: contradictory condition and the prediction equals the
    /// overlay-asserted option.
    pub hallucinated: bool,
}

impl EvaluatedSample {
    pub fn new(sample: BenchmarkSample, record: EvaluationRecord) -> Self {
        let correct = record.prediction == sample.ground_truth;
        let hallucinated = sample.is_contradictory()
            && sample.hallucination_option == Some(record.prediction);
        Self { sample, record, correct, hallucinated }
    }

    pub fn condition(&self) -> Condition {
        self.sample.condition
    }

    /// Predicted probability of an option, if recorded.
    pub fn prob(&self, label: OptionLabel) -> Option<f64> {
        self.record.option_probs.as_ref().map(|p| p[label.index()])
    }
}

/// The condition variants of one group that have responses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConditionGroup {
    pub group_id: String,
    pub free: Option<EvaluatedSample>,
    pub congruent: Option<EvaluatedSample>,
    pub contradictory: Option<EvaluatedSample>,
}

impl ConditionGroup {
    pub fn get(&self, condition: Condition) -> Option<&EvaluatedSample> {
        match condition {
            Condition::TextFree => self.free.as_ref(),
            Condition::TextCongruent => self.congruent.as_ref(),
            Condition::TextContradictory => self.contradictory.as_ref(),
        }
    }

    pub(crate) fn slot(&mut self, condition: Condition) -> &mut Option<EvaluatedSample> {
        match condition {
            Condition::TextFree => &mut self.free,
            Condition::TextCongruent => &mut self.congruent,
            Condition::TextContradictory => &mut self.contradictory,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.free.is_some() && self.congruent.is_some() && self.contradictory.is_some()
    }
}

const ATTRIBUTES_TSV: &str = include_str!("../../data/attributes.tsv");

/// The 88 reference attribute labels as `(dimension, tier, attribute)`.
pub fn reference_attributes() -> Vec<(Dimension, Tier, &'static str)> {
    ATTRIBUTES_TSV
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| {
            let mut parts = l.split('\t');
            let dim = Dimension::parse(parts.next()?)?;
            let tier = Tier::from_level(parts.next()?.parse().ok()?)?;
            Some((dim, tier, parts.next()?))
        })
        .collect()
}

/// Whether an attribute matches a reference label, ignoring case and
/// surrounding whitespace.
pub fn is_known_attribute(attribute: &str) -> bool {
    let needle = attribute.trim().to_lowercase();
    ATTRIBUTES_TSV
        .lines()
        .filter_map(|l| l.rsplit('\t').next())
        .any(|a| a == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_list_has_88_attributes() {
        let attrs = reference_attributes();
        assert_eq!(attrs.len(), 88);
        assert!(is_known_attribute("Event Order"));
        assert!(!is_known_attribute("juggling style"));
    }

    #[test]
    fn label_round_trips() {
        for d in Dimension::ALL {
            assert_eq!(Dimension::parse(d.as_str()), Some(d));
            assert_eq!(Dimension::from_index(d.index()), Some(d));
        }
        for c in Condition::ALL {
            assert_eq!(Condition::parse(c.as_str()), Some(c));
        }
        assert_eq!(OptionLabel::parse("C"), Some(OptionLabel::C));
        assert_eq!(OptionLabel::parse("E"), None);
        assert_eq!(Tier::from_level(4), None);
    }
}
