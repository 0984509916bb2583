//! Joint probability shift between the text-free and contradictory variant
//! of each group.

use serde::{Deserialize, Serialize};

use super::Metric;
use crate::datamodel::ConditionGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Correct without text, misled onto the overlay option with it.
    ActiveMisleading,
    /// Already wrong without text.
    CompoundedFailure,
    /// Correct under both conditions.
    FacilitatedCorrectness,
    /// Correct without text, wrong with it but not on the overlay option.
    Other,
}

impl Regime {
    pub fn classify(correct_free: bool, correct_contra: bool, hallucinated: bool) -> Self {
        match (correct_free, correct_contra, hallucinated) {
            (false, _, _) => Regime::CompoundedFailure,
            (true, true, _) => Regime::FacilitatedCorrectness,
            (true, false, true) => Regime::ActiveMisleading,
            (true, false, false) => Regime::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftPoint {
    pub group_id: String,
    /// `P(y | contradictory) − P(y | free)`.
    pub delta_y: f64,
    /// `P(o | contradictory) − P(o | free)`.
    pub delta_o: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegimeCounts {
    pub active_misleading: usize,
    pub compounded_failure: usize,
    pub facilitated_correctness: usize,
    pub other: usize,
}

impl RegimeCounts {
    fn bump(&mut self, r: Regime) {
        *match r {
            Regime::ActiveMisleading => &mut self.active_misleading,
            Regime::CompoundedFailure => &mut self.compounded_failure,
            Regime::FacilitatedCorrectness => &mut self.facilitated_correctness,
            Regime::Other => &mut self.other,
        } += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbShiftSummary {
    pub points: Vec<ShiftPoint>,
    pub counts: RegimeCounts,
    pub mean_delta_y: Metric,
    pub mean_delta_o: Metric,
    /// Groups lacking a text-free or contradictory member.
    pub skipped_missing_condition: usize,
    /// Groups whose members do not both carry option probabilities.
    pub skipped_missing_probs: usize,
}

pub fn prob_shift(groups: &[ConditionGroup]) -> ProbShiftSummary {
    let mut points = Vec::new();
    let mut counts = RegimeCounts::default();
    let (mut skipped_missing_condition, mut skipped_missing_probs) = (0, 0);
    for g in groups {
        let (Some(free), Some(contra)) = (&g.free, &g.contradictory) else {
            skipped_missing_condition += 1;
            continue;
        };
        let (Some(pf), Some(pc)) = (&free.record.option_probs, &contra.record.option_probs) else {
            skipped_missing_probs += 1;
            continue;
        };
        let y = contra.sample.ground_truth.index();
        let o = contra
            .sample
            .hallucination_option
            .expect("contradictory samples carry a hallucination option")
            .index();
        let regime = Regime::classify(free.correct, contra.correct, contra.hallucinated);
        counts.bump(regime);
        points.push(ShiftPoint {
            group_id: g.group_id.clone(),
            delta_y: pc[y] - pf[y],
            delta_o: pc[o] - pf[o],
            regime,
        });
    }
    let n = points.len() as f64;
    let mean = |f: fn(&ShiftPoint) -> f64| {
        Metric::ratio(points.iter().map(f).sum(), n, "no group with probabilities under both conditions")
    };
    ProbShiftSummary {
        mean_delta_y: mean(|p| p.delta_y),
        mean_delta_o: mean(|p| p.delta_o),
        points,
        counts,
        skipped_missing_condition,
        skipped_missing_probs,
    }
}
