//! Robustness metrics over evaluated samples, the probability-shift regime
//! analysis, and the composite report with its renderers.

mod indices;
mod render;
mod shift;

pub use indices::{
    har, hrc, hrr, hsr, icr, load_sensitive, overall_accuracy, scsi, sgli, tib, tihr, vyr, whr,
    HrcLevel, LoadSensitivity, STRONG_CONFLICT, WEAK_CONFLICT,
};
pub use render::{render_json, render_table, TABLE_COLUMNS};
pub use shift::{prob_shift, ProbShiftSummary, Regime, RegimeCounts, ShiftPoint};

use serde::{Deserialize, Serialize};

use crate::datamodel::{
    group_conditions, Condition, ConditionGroup, DataError, Dimension, EvaluatedSample,
};

/// A scalar result that may be undefined on the given population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Value(f64),
    /// Only produced by t statistics at |r| = 1.
    Infinite { positive: bool },
    Undefined(String),
}

impl Metric {
    pub fn undefined(reason: impl Into<String>) -> Self {
        Metric::Undefined(reason.into())
    }

    /// `num / den`, undefined with `reason` when `den` is zero.
    pub fn ratio(num: f64, den: f64, reason: &str) -> Self {
        if den == 0.0 {
            Metric::undefined(reason)
        } else {
            Metric::Value(num / den)
        }
    }

    /// Finite value, if any.
    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            _ => None,
        }
    }

    /// Value with infinities mapped to `±inf`; `None` when undefined.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Infinite { positive: true } => Some(f64::INFINITY),
            Metric::Infinite { positive: false } => Some(f64::NEG_INFINITY),
            Metric::Undefined(_) => None,
        }
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            Metric::Undefined(r) => Some(r),
            _ => None,
        }
    }

    /// Same definedness and values within `tol` (infinities must match
    /// exactly).
    pub fn approx_eq(&self, other: &Metric, tol: f64) -> bool {
        match (self, other) {
            (Metric::Value(a), Metric::Value(b)) => (a - b).abs() <= tol,
            (Metric::Infinite { positive: a }, Metric::Infinite { positive: b }) => a == b,
            (Metric::Undefined(_), Metric::Undefined(_)) => true,
            _ => false,
        }
    }
}

/// Evaluated samples plus their condition groups.
#[derive(Debug, Clone)]
pub struct MetricInput {
    pub evaluated: Vec<EvaluatedSample>,
    pub groups: Vec<ConditionGroup>,
}

impl MetricInput {
    pub fn new(evaluated: Vec<EvaluatedSample>) -> Result<Self, DataError> {
        let groups = group_conditions(&evaluated)?;
        Ok(Self { evaluated, groups })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerOne {
    pub hrr: Metric,
    pub vyr: Metric,
    pub har: Metric,
    pub icr: Metric,
    pub sgli: Metric,
    pub tihr: Metric,
    pub tib: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTwo {
    pub scsi: Metric,
    pub whr: Metric,
    /// Percent.
    pub hsr: Metric,
    pub hrc: Vec<HrcLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionBreakdown {
    pub dimension: Dimension,
    pub n: usize,
    pub accuracy: Metric,
    pub text_free: Metric,
    pub text_congruent: Metric,
    pub text_contradictory: Metric,
}

/// Accuracy on contradictory samples at one SCS level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScsBreakdown {
    pub scs: u8,
    pub n: usize,
    pub accuracy: Metric,
}

/// Sizes of the populations the metrics were computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Population {
    pub samples: usize,
    pub contradictory: usize,
    pub groups: usize,
    /// Groups with both text-free and contradictory members (VYR, ICR).
    pub paired_groups: usize,
    /// Groups with all three conditions (SGLI).
    pub complete_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub population: Population,
    pub overall: Metric,
    pub layer1: LayerOne,
    pub layer2: LayerTwo,
    /// One entry per dimension in (T, A, O, S) order.
    pub layer3: Vec<LoadSensitivity>,
    pub by_dimension: Vec<DimensionBreakdown>,
    pub by_scs: Vec<ScsBreakdown>,
    pub prob_shift: ProbShiftSummary,
}

fn accuracy<'a>(items: impl Iterator<Item = &'a EvaluatedSample>) -> (usize, Metric) {
    let (mut n, mut hits) = (0usize, 0usize);
    for e in items {
        n += 1;
        hits += usize::from(e.correct);
    }
    (n, Metric::ratio(hits as f64, n as f64, "no samples"))
}

/// Computes every metric. Never fails: metrics whose population is empty
/// are marked undefined.
pub fn full_report(input: &MetricInput) -> MetricReport {
    let ev = &input.evaluated;
    let groups = &input.groups;
    let population = Population {
        samples: ev.len(),
        contradictory: ev.iter().filter(|e| e.sample.is_contradictory()).count(),
        groups: groups.len(),
        paired_groups: groups
            .iter()
            .filter(|g| g.free.is_some() && g.contradictory.is_some())
            .count(),
        complete_groups: groups.iter().filter(|g| g.is_complete()).count(),
    };

    let by_dimension = Dimension::ALL
        .into_iter()
        .map(|d| {
            let of_dim = || ev.iter().filter(move |e| e.sample.dimension == d);
            let under = |c: Condition| accuracy(of_dim().filter(move |e| e.condition() == c)).1;
            let (n, acc) = accuracy(of_dim());
            DimensionBreakdown {
                dimension: d,
                n,
                accuracy: acc,
                text_free: under(Condition::TextFree),
                text_congruent: under(Condition::TextCongruent),
                text_contradictory: under(Condition::TextContradictory),
            }
        })
        .collect();

    let by_scs = (1..=5u8)
        .map(|k| {
            let (n, acc) = accuracy(
                ev.iter().filter(|e| e.sample.is_contradictory() && e.sample.scs == Some(k)),
            );
            ScsBreakdown { scs: k, n, accuracy: acc }
        })
        .collect();

    MetricReport {
        population,
        overall: overall_accuracy(ev),
        layer1: LayerOne {
            hrr: hrr(ev),
            vyr: vyr(groups),
            har: har(ev),
            icr: icr(groups),
            sgli: sgli(groups),
            tihr: tihr(ev),
            tib: tib(ev),
        },
        layer2: LayerTwo { scsi: scsi(ev), whr: whr(ev), hsr: hsr(ev), hrc: hrc(ev) },
        layer3: Dimension::ALL.into_iter().map(|d| load_sensitive(ev, d)).collect(),
        by_dimension,
        by_scs,
        prob_shift: prob_shift(groups),
    }
}

impl MetricReport {
    /// Every scalar keyed by a stable dotted name, in a fixed order.
    pub fn flatten(&self) -> Vec<(String, Metric)> {
        let mut out: Vec<(String, Metric)> = Vec::new();
        let mut put = |k: String, m: &Metric| out.push((k, m.clone()));
        put("overall".into(), &self.overall);
        let l1 = &self.layer1;
        for (k, m) in [
            ("hrr", &l1.hrr),
            ("vyr", &l1.vyr),
            ("har", &l1.har),
            ("icr", &l1.icr),
            ("sgli", &l1.sgli),
            ("tihr", &l1.tihr),
            ("tib", &l1.tib),
            ("scsi", &self.layer2.scsi),
            ("whr", &self.layer2.whr),
            ("hsr", &self.layer2.hsr),
        ] {
            put(k.into(), m);
        }
        for h in &self.layer2.hrc {
            put(format!("hrc.{}", h.scs), &h.rate);
            put(format!("hrc.{}.n", h.scs), &Metric::Value(h.n as f64));
        }
        for l in &self.layer3 {
            put(format!("load.{}.r", l.dimension), &l.r);
            put(format!("load.{}.t", l.dimension), &l.t);
            put(format!("load.{}.n", l.dimension), &Metric::Value(l.n as f64));
        }
        for b in &self.by_dimension {
            let d = b.dimension;
            put(format!("dimension.{d}.n"), &Metric::Value(b.n as f64));
            put(format!("dimension.{d}.accuracy"), &b.accuracy);
            put(format!("dimension.{d}.text_free"), &b.text_free);
            put(format!("dimension.{d}.text_congruent"), &b.text_congruent);
            put(format!("dimension.{d}.text_contradictory"), &b.text_contradictory);
        }
        for b in &self.by_scs {
            put(format!("scs.{}.n", b.scs), &Metric::Value(b.n as f64));
            put(format!("scs.{}.accuracy", b.scs), &b.accuracy);
        }
        let ps = &self.prob_shift;
        let c = &ps.counts;
        for (k, v) in [
            ("active_misleading", c.active_misleading),
            ("compounded_failure", c.compounded_failure),
            ("facilitated_correctness", c.facilitated_correctness),
            ("other", c.other),
            ("skipped_missing_condition", ps.skipped_missing_condition),
            ("skipped_missing_probs", ps.skipped_missing_probs),
        ] {
            put(format!("prob_shift.{k}"), &Metric::Value(v as f64));
        }
        put("prob_shift.mean_delta_y".into(), &ps.mean_delta_y);
        put("prob_shift.mean_delta_o".into(), &ps.mean_delta_o);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::tests::sample;
    use crate::datamodel::{EvaluationRecord, OptionLabel};

    fn evaluated(prediction_for: impl Fn(Condition) -> OptionLabel) -> MetricInput {
        let mut ev = Vec::new();
        for g in 0..5 {
            for c in Condition::ALL {
                let s = sample(&format!("g{g}-{c}"), &format!("g{g}"), c);
                let r = EvaluationRecord {
                    sample_id: s.sample_id.clone(),
                    model_id: "m".into(),
                    prediction: prediction_for(c),
                    option_probs: None,
                };
                ev.push(EvaluatedSample::new(s, r));
            }
        }
        MetricInput::new(ev).unwrap()
    }

    #[test]
    fn always_correct_profile() {
        let r = full_report(&evaluated(|_| OptionLabel::A));
        assert_eq!(r.layer1.hrr.value(), Some(1.0));
        assert_eq!(r.layer1.har.value(), Some(0.0));
        assert_eq!(r.layer1.vyr.value(), Some(0.0));
        assert!(r.layer1.tib.value().is_none());
        assert_eq!(r.population.complete_groups, 5);
    }

    #[test]
    fn fully_misled_profile() {
        let r = full_report(&evaluated(|c| {
            if c == Condition::TextContradictory {
                OptionLabel::B
            } else {
                OptionLabel::A
            }
        }));
        assert_eq!(r.layer1.hrr.value(), Some(0.0));
        assert_eq!(r.layer1.har.value(), Some(1.0));
        assert_eq!(r.layer1.tib.value(), Some(1.0));
        assert_eq!(r.layer1.vyr.value(), Some(1.0));
        assert_eq!(r.layer1.icr.value(), Some(1.0));
        assert_eq!(r.layer2.scsi.value(), Some(3.0));
        assert_eq!(r.prob_shift.skipped_missing_probs, 5);
    }

    #[test]
    fn empty_input_is_all_undefined() {
        let r = full_report(&MetricInput::new(Vec::new()).unwrap());
        for (name, m) in r.flatten() {
            let is_count = name.ends_with(".n") || name.starts_with("prob_shift.") && !name.contains("mean");
            if !is_count {
                assert!(m.reason().is_some(), "{name} should be undefined");
            }
        }
    }
}
