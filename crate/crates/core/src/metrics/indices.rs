//! Individual indices. Each takes the evaluated samples (or the condition
//! groups, for paired indices) and returns a [`Metric`].

use serde::{Deserialize, Serialize};

use super::Metric;
use crate::datamodel::{Condition, ConditionGroup, Dimension, EvaluatedSample};
use crate::numerics::{pearson, t_statistic, TStat};

fn contradictory(input: &[EvaluatedSample]) -> impl Iterator<Item = &EvaluatedSample> {
    input.iter().filter(|e| e.condition() == Condition::TextContradictory)
}

fn rate<'a>(items: impl Iterator<Item = &'a EvaluatedSample>, hit: impl Fn(&EvaluatedSample) -> bool, empty: &str) -> Metric {
    let (mut num, mut den) = (0usize, 0usize);
    for e in items {
        den += 1;
        num += usize::from(hit(e));
    }
    Metric::ratio(num as f64, den as f64, empty)
}

/// Accuracy over every sample present.
pub fn overall_accuracy(input: &[EvaluatedSample]) -> Metric {
    rate(input.iter(), |e| e.correct, "no evaluated samples")
}

/// Hallucination resistance: accuracy on contradictory samples.
pub fn hrr(input: &[EvaluatedSample]) -> Metric {
    rate(contradictory(input), |e| e.correct, "no contradictory samples")
}

/// Hallucination acceptance: share of contradictory samples answered with
/// the overlay-asserted option.
pub fn har(input: &[EvaluatedSample]) -> Metric {
    rate(contradictory(input), |e| e.hallucinated, "no contradictory samples")
}

/// Text-induced hallucination rate: share of contradictory samples whose
/// answer matches the overlay text's option. Recomputed from the raw labels
/// rather than the `hallucinated` flag; equals [`har`] on this schema.
pub fn tihr(input: &[EvaluatedSample]) -> Metric {
    rate(
        contradictory(input),
        |e| e.sample.hallucination_option == Some(e.record.prediction),
        "no contradictory samples",
    )
}

/// Textual induction bias: among wrong contradictory answers, the share
/// that picked the overlay option.
pub fn tib(input: &[EvaluatedSample]) -> Metric {
    tib_where(input, |_| true)
}

fn tib_where(input: &[EvaluatedSample], keep: impl Fn(&EvaluatedSample) -> bool) -> Metric {
    rate(
        contradictory(input).filter(|e| !e.correct && keep(e)),
        |e| e.hallucinated,
        "no incorrect contradictory samples",
    )
}

/// Semantic conflict sensitivity: mean SCS of hallucinated samples.
pub fn scsi(input: &[EvaluatedSample]) -> Metric {
    let (mut weighted, mut count) = (0.0, 0.0);
    for e in contradictory(input).filter(|e| e.hallucinated) {
        weighted += f64::from(e.sample.scs.unwrap_or(0));
        count += 1.0;
    }
    Metric::ratio(weighted, count, "no hallucinations")
}

/// Weighted hallucination rate: `Σ SCS·H / Σ SCS`.
pub fn whr(input: &[EvaluatedSample]) -> Metric {
    let (mut num, mut den) = (0.0, 0.0);
    for e in contradictory(input) {
        let s = f64::from(e.sample.scs.unwrap_or(0));
        den += s;
        if e.hallucinated {
            num += s;
        }
    }
    Metric::ratio(num, den, "no contradictory samples")
}

/// SCS levels treated as weak conflict in [`hsr`].
pub const WEAK_CONFLICT: [u8; 2] = [1, 2];
/// SCS levels treated as strong conflict in [`hsr`].
pub const STRONG_CONFLICT: [u8; 2] = [4, 5];

/// Hallucination surge, in percent: relative change of TIB from weak to
/// strong conflict.
pub fn hsr(input: &[EvaluatedSample]) -> Metric {
    let in_levels = |levels: [u8; 2]| move |e: &EvaluatedSample| e.sample.scs.is_some_and(|s| levels.contains(&s));
    let weak = tib_where(input, in_levels(WEAK_CONFLICT));
    let strong = tib_where(input, in_levels(STRONG_CONFLICT));
    match (weak.value(), strong.value()) {
        (None, _) => Metric::undefined("TIB undefined at weak conflict (SCS 1-2)"),
        (Some(w), _) if w == 0.0 => Metric::undefined("TIB is zero at weak conflict (SCS 1-2)"),
        (_, None) => Metric::undefined("TIB undefined at strong conflict (SCS 4-5)"),
        (Some(w), Some(s)) => Metric::Value((s - w) / w * 100.0),
    }
}

/// Per-level hallucination rate for one SCS value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrcLevel {
    pub scs: u8,
    pub n: usize,
    pub rate: Metric,
}

/// Hallucination resistance curve: `R_k` for `k = 1..=5`.
pub fn hrc(input: &[EvaluatedSample]) -> Vec<HrcLevel> {
    (1..=5u8)
        .map(|k| {
            let at_k: Vec<&EvaluatedSample> =
                contradictory(input).filter(|e| e.sample.scs == Some(k)).collect();
            HrcLevel {
                scs: k,
                n: at_k.len(),
                rate: rate(at_k.into_iter(), |e| e.hallucinated, "no samples at this level"),
            }
        })
        .collect()
}

fn paired_accuracy(
    groups: &[ConditionGroup],
    needed: &[Condition],
    measured: Condition,
) -> Option<f64> {
    let members: Vec<&EvaluatedSample> = groups
        .iter()
        .filter(|g| needed.iter().all(|c| g.get(*c).is_some()))
        .filter_map(|g| g.get(measured))
        .collect();
    if members.is_empty() {
        return None;
    }
    Some(members.iter().filter(|e| e.correct).count() as f64 / members.len() as f64)
}

const FREE_CONTRA: [Condition; 2] = [Condition::TextFree, Condition::TextContradictory];

/// Visual yielding rate: text-free accuracy minus contradictory accuracy,
/// over groups that have both.
pub fn vyr(groups: &[ConditionGroup]) -> Metric {
    match (
        paired_accuracy(groups, &FREE_CONTRA, Condition::TextFree),
        paired_accuracy(groups, &FREE_CONTRA, Condition::TextContradictory),
    ) {
        (Some(clean), Some(mis)) => Metric::Value(clean - mis),
        _ => Metric::undefined("no group with both text-free and contradictory samples"),
    }
}

/// Interference cost ratio: `1 − Acc_contra / Acc_free` over paired groups.
pub fn icr(groups: &[ConditionGroup]) -> Metric {
    match (
        paired_accuracy(groups, &FREE_CONTRA, Condition::TextFree),
        paired_accuracy(groups, &FREE_CONTRA, Condition::TextContradictory),
    ) {
        (Some(clean), _) if clean == 0.0 => Metric::undefined("text-free accuracy is zero"),
        (Some(clean), Some(mis)) => Metric::Value(1.0 - mis / clean),
        _ => Metric::undefined("no group with both text-free and contradictory samples"),
    }
}

/// Synergy gain/loss: `(Acc_congruent − Acc_contra) / Acc_free` over groups
/// with all three conditions.
pub fn sgli(groups: &[ConditionGroup]) -> Metric {
    let acc = |c| paired_accuracy(groups, &Condition::ALL, c);
    match (acc(Condition::TextFree), acc(Condition::TextCongruent), acc(Condition::TextContradictory)) {
        (Some(none), _, _) if none == 0.0 => Metric::undefined("text-free accuracy is zero"),
        (Some(none), Some(pos), Some(neg)) => Metric::Value((pos - neg) / none),
        _ => Metric::undefined("no group with all three conditions"),
    }
}

/// Tier/correctness correlation within one dimension's contradictory
/// samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSensitivity {
    pub dimension: Dimension,
    pub n: usize,
    pub r: Metric,
    pub t: Metric,
}

impl LoadSensitivity {
    /// Column name used in reports for this dimension.
    pub fn index_name(&self) -> &'static str {
        match self.dimension {
            Dimension::Temporal => "TLSR",
            Dimension::Action => "ASLSR",
            Dimension::Object => "AALSR",
            Dimension::Spatial => "SRLSR",
        }
    }
}

pub fn load_sensitive(input: &[EvaluatedSample], dimension: Dimension) -> LoadSensitivity {
    let members: Vec<&EvaluatedSample> =
        contradictory(input).filter(|e| e.sample.dimension == dimension).collect();
    let n = members.len();
    let undefined = |why: &str| LoadSensitivity {
        dimension,
        n,
        r: Metric::undefined(why),
        t: Metric::undefined(why),
    };
    if n < 3 {
        return undefined("fewer than 3 contradictory samples in this dimension");
    }
    let tiers: Vec<f64> = members.iter().map(|e| f64::from(e.sample.tier.level())).collect();
    let correct: Vec<f64> = members.iter().map(|e| if e.correct { 1.0 } else { 0.0 }).collect();
    let r = match pearson(&tiers, &correct).expect("lengths match and n >= 3") {
        Some(r) => r,
        None => return undefined("zero variance in tier or correctness"),
    };
    let t = match t_statistic(r, n).expect("n >= 3 and |r| <= 1") {
        TStat::Finite(t) => Metric::Value(t),
        TStat::Infinite { positive } => Metric::Infinite { positive },
    };
    LoadSensitivity { dimension, n, r: Metric::Value(r), t }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{
        group_conditions, BenchmarkSample, EvaluationRecord, OptionLabel, Tier,
    };
    use crate::numerics::Simplex;
    use approx::assert_abs_diff_eq;

    /// Builds an evaluated sample; `pick` is the prediction where A is the
    /// ground truth and B the overlay option.
    fn ev(group: &str, condition: Condition, pick: OptionLabel, scs: u8, tier: u8) -> EvaluatedSample {
        let contra = condition == Condition::TextContradictory;
        let sample = BenchmarkSample {
            sample_id: format!("{group}-{condition}"),
            group_id: group.into(),
            dimension: Dimension::Temporal,
            attribute: "event order".into(),
            tier: Tier::from_level(tier.into()).unwrap(),
            condition,
            options: Default::default(),
            ground_truth: OptionLabel::A,
            hallucination_option: contra.then_some(OptionLabel::B),
            scs: contra.then_some(scs),
            allocation: Simplex::uniform(4),
            allocation_raw: [0.25; 4],
        };
        let record = EvaluationRecord {
            sample_id: sample.sample_id.clone(),
            model_id: "m".into(),
            prediction: pick,
            option_probs: None,
        };
        EvaluatedSample::new(sample, record)
    }

    use OptionLabel::{A, B, C};
    const CX: Condition = Condition::TextContradictory;
    const FR: Condition = Condition::TextFree;
    const CO: Condition = Condition::TextCongruent;

    fn contra(picks: &[OptionLabel]) -> Vec<EvaluatedSample> {
        picks.iter().enumerate().map(|(i, p)| ev(&format!("g{i}"), CX, *p, 3, 1)).collect()
    }

    #[test]
    fn hrr_examples() {
        assert_eq!(hrr(&contra(&[A, A, A])).value(), Some(1.0));
        assert_eq!(hrr(&contra(&[A, B, A, A])).value(), Some(0.75));
        assert!(hrr(&[ev("g", FR, A, 0, 1)]).value().is_none());
    }

    #[test]
    fn har_and_tihr_examples() {
        for f in [har, tihr] {
            assert_eq!(f(&contra(&[A, C, A])).value(), Some(0.0));
            assert_eq!(f(&contra(&[B, B, A, C])).value(), Some(0.5));
            assert_eq!(f(&contra(&[B, B])).value(), Some(1.0));
        }
    }

    #[test]
    fn tib_examples() {
        assert_eq!(tib(&contra(&[B, B, A])).value(), Some(1.0));
        assert_eq!(tib(&contra(&[B, B, B, C, A])).value(), Some(0.75));
        assert!(tib(&contra(&[A, A])).value().is_none());
    }

    #[test]
    fn scsi_and_whr_examples() {
        let s = vec![ev("a", CX, B, 5, 1), ev("b", CX, B, 3, 1), ev("c", CX, A, 1, 1)];
        assert_eq!(scsi(&s).value(), Some(4.0));
        assert_eq!(scsi(&[ev("a", CX, B, 5, 1)]).value(), Some(5.0));
        assert!(scsi(&[ev("a", CX, A, 5, 1)]).value().is_none());

        let w = vec![ev("a", CX, B, 5, 1), ev("b", CX, A, 1, 1)];
        assert_abs_diff_eq!(whr(&w).value().unwrap(), 5.0 / 6.0, epsilon = 1e-15);
        assert_eq!(whr(&contra(&[B, B])).value(), Some(1.0));
        assert_eq!(whr(&contra(&[A, C])).value(), Some(0.0));
    }

    #[test]
    fn hsr_examples() {
        // weak: 2 errors, 1 matches o (0.5); strong: 4 errors, 3 match (0.75)
        let mut s = vec![ev("w1", CX, B, 1, 1), ev("w2", CX, C, 2, 1)];
        s.extend(["s1", "s2", "s3"].iter().map(|g| ev(g, CX, B, 5, 1)));
        s.push(ev("s4", CX, C, 4, 1));
        assert_abs_diff_eq!(hsr(&s).value().unwrap(), 50.0, epsilon = 1e-12);

        let same = vec![ev("w", CX, B, 1, 1), ev("s", CX, B, 5, 1)];
        assert_eq!(hsr(&same).value(), Some(0.0));
        assert!(hsr(&[ev("s", CX, B, 5, 1)]).value().is_none());
        assert!(hsr(&[ev("w", CX, C, 1, 1), ev("s", CX, B, 5, 1)]).value().is_none());
    }

    #[test]
    fn hrc_examples() {
        let s = vec![
            ev("a", CX, B, 1, 1),
            ev("b", CX, A, 1, 1),
            ev("c", CX, B, 2, 1),
            ev("d", CX, B, 5, 1),
            ev("e", CX, C, 5, 1),
            ev("f", CX, A, 5, 1),
        ];
        let curve = hrc(&s);
        assert_eq!(curve[0].rate.value(), Some(0.5));
        assert_eq!(curve[1].rate.value(), Some(1.0));
        assert!(curve[2].rate.value().is_none());
        assert_eq!(curve[2].n, 0);
        assert_abs_diff_eq!(curve[4].rate.value().unwrap(), 1.0 / 3.0, epsilon = 1e-15);

        let uniform = contra(&[B, A, B, A]);
        assert_eq!(hrc(&uniform)[2].rate.value(), Some(0.5));
    }

    fn groups(members: Vec<EvaluatedSample>) -> Vec<ConditionGroup> {
        group_conditions(&members).unwrap()
    }

    #[test]
    fn vyr_and_icr_examples() {
        // Acc_free 0.8, Acc_contra 0.3 over 10 paired groups
        let mut m = Vec::new();
        for i in 0..10 {
            let g = format!("g{i}");
            m.push(ev(&g, FR, if i < 8 { A } else { C }, 0, 1));
            m.push(ev(&g, CX, if i < 3 { A } else { B }, 3, 1));
        }
        let gs = groups(m);
        assert_abs_diff_eq!(vyr(&gs).value().unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(icr(&gs).value().unwrap(), 1.0 - 0.3 / 0.8, epsilon = 1e-15);

        let same = groups(vec![ev("g", FR, A, 0, 1), ev("g", CX, A, 3, 1)]);
        assert_eq!(vyr(&same).value(), Some(0.0));
        assert_eq!(icr(&same).value(), Some(0.0));

        let better = groups(vec![ev("g", FR, C, 0, 1), ev("g", CX, A, 3, 1)]);
        assert_eq!(vyr(&better).value(), Some(-1.0));
        assert!(icr(&better).value().is_none());

        // Acc_clean 0.8, interfered 0.4 → 0.5
        let mut m = Vec::new();
        for i in 0..5 {
            let g = format!("h{i}");
            m.push(ev(&g, FR, if i < 4 { A } else { C }, 0, 1));
            m.push(ev(&g, CX, if i < 2 { A } else { B }, 3, 1));
        }
        assert_abs_diff_eq!(icr(&groups(m)).value().unwrap(), 0.5, epsilon = 1e-15);

        let unpaired = groups(vec![ev("g", FR, A, 0, 1), ev("h", CX, A, 3, 1)]);
        assert!(vyr(&unpaired).value().is_none());
    }

    #[test]
    fn sgli_examples() {
        // 10 complete groups: pos 0.9, neg 0.5, none 0.8
        let mut m = Vec::new();
        for i in 0..10 {
            let g = format!("g{i}");
            m.push(ev(&g, FR, if i < 8 { A } else { C }, 0, 1));
            m.push(ev(&g, CO, if i < 9 { A } else { C }, 0, 1));
            m.push(ev(&g, CX, if i < 5 { A } else { B }, 3, 1));
        }
        assert_abs_diff_eq!(sgli(&groups(m)).value().unwrap(), 0.5, epsilon = 1e-15);

        let flat = groups(vec![ev("g", FR, A, 0, 1), ev("g", CO, A, 0, 1), ev("g", CX, A, 3, 1)]);
        assert_eq!(sgli(&flat).value(), Some(0.0));
        let partial = groups(vec![ev("g", FR, A, 0, 1), ev("g", CX, A, 3, 1)]);
        assert!(sgli(&partial).value().is_none());
    }

    #[test]
    fn load_sensitivity_examples() {
        let s = vec![ev("a", CX, B, 3, 1), ev("b", CX, A, 3, 2), ev("c", CX, A, 3, 3)];
        let ls = load_sensitive(&s, Dimension::Temporal);
        assert_abs_diff_eq!(ls.r.value().unwrap(), 3f64.sqrt() / 2.0, epsilon = 1e-15);
        assert_eq!(ls.n, 3);
        // t = r √(1 / (1 − 3/4)) = 2r
        assert_abs_diff_eq!(ls.t.value().unwrap(), 3f64.sqrt(), epsilon = 1e-12);

        let constant = vec![ev("a", CX, A, 3, 1), ev("b", CX, A, 3, 2), ev("c", CX, A, 3, 3)];
        assert!(load_sensitive(&constant, Dimension::Temporal).r.value().is_none());

        let perfect = vec![
            ev("a", CX, B, 3, 1),
            ev("b", CX, B, 3, 1),
            ev("c", CX, A, 3, 3),
            ev("d", CX, A, 3, 3),
        ];
        let ls = load_sensitive(&perfect, Dimension::Temporal);
        assert_eq!(ls.r.value(), Some(1.0));
        assert_eq!(ls.t, Metric::Infinite { positive: true });

        assert_eq!(load_sensitive(&perfect, Dimension::Spatial).n, 0);
    }
}
