//! Brute-force re-count of every report scalar, written from the metric
//! definitions without touching the library's metric code. Also generates
//! random evaluated corpora to compare against.

use std::collections::BTreeMap;

use overlay_core::datamodel::{
    synth_corpus, Condition, CorpusSpec, Dimension, EvaluatedSample,
    EvaluationRecord, OptionLabel,
};
use overlay_core::metrics::{full_report, Metric, MetricInput};
use overlay_core::numerics::Simplex;
use overlay_core::rng::{substream, Stream};
use rand::Rng;

/// `None` = undefined. Infinities are kept as `±inf`.
pub type Expected = BTreeMap<String, Option<f64>>;

/// A random evaluated corpus of at most 200 samples. Some responses are
/// dropped, some lack probabilities, and about a fifth of the corpora use a
/// single SCS value so that the constant-SCS identity gets exercised.
pub fn random_case(seed: u64) -> Vec<EvaluatedSample> {
    let mut rng = substream(seed, Stream::Probe, 0);
    let groups = rng.gen_range(0..=66);
    let keep = rng.gen_range(0.4..=1.0);
    let fixed_scs = (rng.gen::<f64>() < 0.2).then(|| rng.gen_range(1..=5u8));
    let spec = CorpusSpec { groups, keep_condition: keep, fixed_scs };
    let corpus = synth_corpus(&spec, seed);
    let p_correct: f64 = rng.gen_range(0.0..=1.0);
    let p_halluc: f64 = rng.gen_range(0.0..=1.0 - p_correct);
    let p_probs: f64 = rng.gen();
    let p_respond: f64 = rng.gen_range(0.6..=1.0);

    let mut out = Vec::new();
    for s in corpus {
        if rng.gen::<f64>() > p_respond {
            continue;
        }
        let u: f64 = rng.gen();
        let prediction = if u < p_correct {
            s.ground_truth
        } else if s.is_contradictory() && u < p_correct + p_halluc {
            s.hallucination_option.unwrap()
        } else {
            OptionLabel::ALL[rng.gen_range(0..4)]
        };
        let option_probs = (rng.gen::<f64>() < p_probs).then(|| {
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(0.01..1.0)).collect();
            Simplex::normalized(&w).unwrap()
        });
        let record = EvaluationRecord {
            sample_id: s.sample_id.clone(),
            model_id: "m".into(),
            prediction,
            option_probs,
        };
        out.push(EvaluatedSample::new(s, record));
    }
    out
}

fn frac(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

struct Row {
    group: String,
    dim: Dimension,
    tier: u8,
    cond: Condition,
    scs: u8,
    correct: bool,
    halluc: bool,
    pred: usize,
    truth: usize,
    overlay: Option<usize>,
    probs: Option<[f64; 4]>,
}

fn rows(evaluated: &[EvaluatedSample]) -> Vec<Row> {
    evaluated
        .iter()
        .map(|e| {
            let s = &e.sample;
            let pred = e.record.prediction;
            Row {
                group: s.group_id.clone(),
                dim: s.dimension,
                tier: s.tier.level(),
                cond: s.condition,
                scs: s.scs.unwrap_or(0),
                correct: pred == s.ground_truth,
                halluc: s.condition == Condition::TextContradictory
                    && s.hallucination_option == Some(pred),
                pred: pred.index(),
                truth: s.ground_truth.index(),
                overlay: s.hallucination_option.map(|o| o.index()),
                probs: e.record.option_probs.as_ref().map(|p| [p[0], p[1], p[2], p[3]]),
            }
        })
        .collect()
}

/// Exact integer Pearson on small integer data, then `t`.
fn pearson_t(xs: &[i64], ys: &[i64]) -> (Option<f64>, Option<f64>) {
    let n = xs.len() as i64;
    if n < 3 {
        return (None, None);
    }
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i64, 0i64, 0i64, 0i64, 0i64);
    for (&x, &y) in xs.iter().zip(ys) {
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let cov = n * sxy - sx * sy;
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx == 0 || vy == 0 {
        return (None, None);
    }
    let r = cov as f64 / ((vx as f64) * (vy as f64)).sqrt();
    let t = if cov * cov == vx * vy {
        if cov > 0 { f64::INFINITY } else { f64::NEG_INFINITY }
    } else {
        r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt()
    };
    (Some(r), Some(t))
}

/// Every scalar of the flattened report, recomputed by hand.
pub fn recount(evaluated: &[EvaluatedSample]) -> Expected {
    let rows = rows(evaluated);
    let mut out = Expected::new();
    let mut put = |k: &str, v: Option<f64>| {
        out.insert(k.to_string(), v);
    };
    let contra: Vec<&Row> = rows.iter().filter(|r| r.cond == Condition::TextContradictory).collect();

    put("overall", frac(rows.iter().filter(|r| r.correct).count(), rows.len()));
    put("hrr", frac(contra.iter().filter(|r| r.correct).count(), contra.len()));
    let har = frac(contra.iter().filter(|r| r.halluc).count(), contra.len());
    put("har", har);
    put("tihr", frac(contra.iter().filter(|r| r.overlay == Some(r.pred)).count(), contra.len()));

    let tib_of = |keep: &dyn Fn(&Row) -> bool| {
        let wrong: Vec<&&Row> = contra.iter().filter(|r| !r.correct && keep(r)).collect();
        frac(wrong.iter().filter(|r| r.halluc).count(), wrong.len())
    };
    put("tib", tib_of(&|_| true));
    let weak = tib_of(&|r| r.scs == 1 || r.scs == 2);
    let strong = tib_of(&|r| r.scs == 4 || r.scs == 5);
    put(
        "hsr",
        match (weak, strong) {
            (Some(w), Some(s)) if w > 0.0 => Some(100.0 * (s - w) / w),
            _ => None,
        },
    );

    let hall_scs: Vec<u8> = contra.iter().filter(|r| r.halluc).map(|r| r.scs).collect();
    put("scsi", (!hall_scs.is_empty()).then(|| {
        hall_scs.iter().map(|&s| s as usize).sum::<usize>() as f64 / hall_scs.len() as f64
    }));
    let scs_total: usize = contra.iter().map(|r| r.scs as usize).sum();
    let scs_hit: usize = contra.iter().filter(|r| r.halluc).map(|r| r.scs as usize).sum();
    put("whr", frac(scs_hit, scs_total));

    for k in 1..=5u8 {
        let at: Vec<&&Row> = contra.iter().filter(|r| r.scs == k).collect();
        put(&format!("hrc.{k}"), frac(at.iter().filter(|r| r.halluc).count(), at.len()));
        put(&format!("hrc.{k}.n"), Some(at.len() as f64));
        put(&format!("scs.{k}.n"), Some(at.len() as f64));
        put(&format!("scs.{k}.accuracy"), frac(at.iter().filter(|r| r.correct).count(), at.len()));
    }

    // Group members by id.
    let mut ids: Vec<&str> = rows.iter().map(|r| r.group.as_str()).collect();
    ids.sort();
    ids.dedup();
    let member = |g: &str, c: Condition| rows.iter().find(|r| r.group == g && r.cond == c);
    let paired_acc = |need: &[Condition], c: Condition| {
        let mut n = 0;
        let mut hit = 0;
        for g in &ids {
            if need.iter().all(|&nc| member(g, nc).is_some()) {
                n += 1;
                hit += usize::from(member(g, c).unwrap().correct);
            }
        }
        frac(hit, n)
    };
    let fc = [Condition::TextFree, Condition::TextContradictory];
    let free = paired_acc(&fc, Condition::TextFree);
    let mis = paired_acc(&fc, Condition::TextContradictory);
    put("vyr", free.zip(mis).map(|(a, b)| a - b));
    put("icr", match (free, mis) {
        (Some(a), Some(b)) if a > 0.0 => Some(1.0 - b / a),
        _ => None,
    });
    let all = Condition::ALL;
    let none = paired_acc(&all, Condition::TextFree);
    let pos = paired_acc(&all, Condition::TextCongruent);
    let neg = paired_acc(&all, Condition::TextContradictory);
    put("sgli", match (none, pos, neg) {
        (Some(a), Some(p), Some(q)) if a > 0.0 => Some((p - q) / a),
        _ => None,
    });

    for d in Dimension::ALL {
        let name = d.as_str();
        let in_dim: Vec<&Row> = rows.iter().filter(|r| r.dim == d).collect();
        put(&format!("dimension.{name}.n"), Some(in_dim.len() as f64));
        put(
            &format!("dimension.{name}.accuracy"),
            frac(in_dim.iter().filter(|r| r.correct).count(), in_dim.len()),
        );
        for (c, key) in [
            (Condition::TextFree, "text_free"),
            (Condition::TextCongruent, "text_congruent"),
            (Condition::TextContradictory, "text_contradictory"),
        ] {
            let sub: Vec<&&Row> = in_dim.iter().filter(|r| r.cond == c).collect();
            put(
                &format!("dimension.{name}.{key}"),
                frac(sub.iter().filter(|r| r.correct).count(), sub.len()),
            );
        }
        let cd: Vec<&&Row> = contra.iter().filter(|r| r.dim == d).collect();
        let xs: Vec<i64> = cd.iter().map(|r| r.tier as i64).collect();
        let ys: Vec<i64> = cd.iter().map(|r| r.correct as i64).collect();
        let (r, t) = pearson_t(&xs, &ys);
        put(&format!("load.{name}.r"), r);
        put(&format!("load.{name}.t"), t);
        put(&format!("load.{name}.n"), Some(cd.len() as f64));
    }

    let (mut regimes, mut skip_cond, mut skip_probs) = ([0usize; 4], 0usize, 0usize);
    let (mut dy, mut dov, mut points) = (0.0, 0.0, 0usize);
    for g in &ids {
        let (Some(f), Some(c)) = (member(g, Condition::TextFree), member(g, Condition::TextContradictory))
        else {
            skip_cond += 1;
            continue;
        };
        let (Some(pf), Some(pc)) = (f.probs, c.probs) else {
            skip_probs += 1;
            continue;
        };
        let regime = if !f.correct {
            1
        } else if c.correct {
            2
        } else if c.halluc {
            0
        } else {
            3
        };
        regimes[regime] += 1;
        let o = c.overlay.unwrap();
        dy += pc[c.truth] - pf[c.truth];
        dov += pc[o] - pf[o];
        points += 1;
    }
    for (i, key) in ["active_misleading", "compounded_failure", "facilitated_correctness", "other"]
        .iter()
        .enumerate()
    {
        put(&format!("prob_shift.{key}"), Some(regimes[i] as f64));
    }
    put("prob_shift.skipped_missing_condition", Some(skip_cond as f64));
    put("prob_shift.skipped_missing_probs", Some(skip_probs as f64));
    put("prob_shift.mean_delta_y", frac(1, points).map(|inv| dy * inv));
    put("prob_shift.mean_delta_o", frac(1, points).map(|inv| dov * inv));
    out
}

/// Keys whose library value disagrees with the re-count, as messages.
pub fn mismatches(evaluated: Vec<EvaluatedSample>, tol: f64) -> Vec<String> {
    let want = recount(&evaluated);
    let input = MetricInput::new(evaluated).expect("generated groups are well formed");
    let got: BTreeMap<String, Metric> = full_report(&input).flatten().into_iter().collect();
    let mut bad = Vec::new();
    for k in want.keys().filter(|k| !got.contains_key(*k)) {
        bad.push(format!("{k}: missing from report"));
    }
    for (k, m) in &got {
        let Some(w) = want.get(k) else {
            bad.push(format!("{k}: not covered by the re-count"));
            continue;
        };
        let ok = match (m.as_f64(), w) {
            (None, None) => true,
            (Some(a), Some(b)) if a.is_infinite() || b.is_infinite() => a == *b,
            (Some(a), Some(b)) => (a - b).abs() <= tol * b.abs().max(1.0),
            _ => false,
        };
        if !ok {
            bad.push(format!("{k}: report {m:?}, re-count {w:?}"));
        }
    }
    bad
}
