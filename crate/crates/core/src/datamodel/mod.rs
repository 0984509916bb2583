//! Benchmark samples, model responses, their JSONL formats, joining and
//! grouping, and a seeded response simulator.

mod corpus;
mod io;
mod schema;
mod simulate;

pub use corpus::{synth_corpus, CorpusSpec};
pub use io::{
    parse_records, parse_samples, record_to_line, sample_to_line, validate_samples, write_records,
    write_samples, Parsed, Validation, OPTION_PROBS_TOLERANCE, SCHEMA_VERSION,
};
pub use schema::{
    is_known_attribute, reference_attributes, BenchmarkSample, Condition, ConditionGroup,
    Dimension, EvaluatedSample, EvaluationRecord, OptionLabel, Tier,
};
pub use simulate::{synthesize_responses, BehaviorProfile, ConditionBehavior};

use std::collections::{HashMap, HashSet};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: field `{field}`: {message}")]
    Field { line: usize, field: String, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{} response(s) reference unknown samples: {}", .0.len(), .0.join(", "))]
    DanglingRecords(Vec<String>),
    #[error("model `{model_id}` has more than one response for sample `{sample_id}`")]
    DuplicateRecord { sample_id: String, model_id: String },
    #[error("group `{group_id}` has more than one {condition} sample")]
    DuplicateCondition { group_id: String, condition: Condition },
    #[error("invalid behavior profile: {0}")]
    Profile(String),
    #[error("similarity {0} is outside [0, 1]")]
    Similarity(f64),
}

impl DataError {
    pub(crate) fn field(line: usize, field: &str, message: impl Into<String>) -> Self {
        DataError::Field { line, field: field.to_string(), message: message.into() }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            DataError::Field { line, .. } | DataError::Line { line, .. } => Some(*line),
            _ => None,
        }
    }

    pub fn field_name(&self) -> Option<&str> {
        match self {
            DataError::Field { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// How many samples had a response from the requested model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Coverage {
    pub samples: usize,
    pub evaluated: usize,
    pub missing: usize,
}

#[derive(Debug, Clone)]
pub struct Joined {
    pub evaluated: Vec<EvaluatedSample>,
    pub coverage: Coverage,
}

/// Pairs every sample with `model_id`'s response, in sample order. Samples
/// without a response are omitted and counted as missing.
pub fn join(
    samples: &[BenchmarkSample],
    records: &[EvaluationRecord],
    model_id: &str,
) -> Result<Joined, DataError> {
    let ids: HashSet<&str> = samples.iter().map(|s| s.sample_id.as_str()).collect();
    let dangling: Vec<String> = records
        .iter()
        .filter(|r| !ids.contains(r.sample_id.as_str()))
        .map(|r| r.sample_id.clone())
        .collect();
    if !dangling.is_empty() {
        return Err(DataError::DanglingRecords(dangling));
    }

    let mut by_sample: HashMap<&str, &EvaluationRecord> = HashMap::new();
    for r in records.iter().filter(|r| r.model_id == model_id) {
        if by_sample.insert(r.sample_id.as_str(), r).is_some() {
            return Err(DataError::DuplicateRecord {
                sample_id: r.sample_id.clone(),
                model_id: model_id.to_string(),
            });
        }
    }

    let evaluated: Vec<EvaluatedSample> = samples
        .iter()
        .filter_map(|s| {
            by_sample
                .get(s.sample_id.as_str())
                .map(|r| EvaluatedSample::new(s.clone(), (*r).clone()))
        })
        .collect();
    let coverage = Coverage {
        samples: samples.len(),
        evaluated: evaluated.len(),
        missing: samples.len() - evaluated.len(),
    };
    Ok(Joined { evaluated, coverage })
}

/// Groups evaluated samples by `group_id`, in order of first appearance.
pub fn group_conditions(evaluated: &[EvaluatedSample]) -> Result<Vec<ConditionGroup>, DataError> {
    let mut groups: Vec<ConditionGroup> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for e in evaluated {
        let gid = e.sample.group_id.as_str();
        let slot = *index.entry(gid).or_insert_with(|| {
            groups.push(ConditionGroup { group_id: gid.to_string(), ..Default::default() });
            groups.len() - 1
        });
        let cell = groups[slot].slot(e.condition());
        if cell.is_some() {
            return Err(DataError::DuplicateCondition {
                group_id: gid.to_string(),
                condition: e.condition(),
            });
        }
        *cell = Some(e.clone());
    }
    Ok(groups)
}

/// Maps a semantic-proximity similarity onto a tier: `< 0.5` → 1,
/// `[0.5, 0.8)` → 2, `≥ 0.8` → 3.
pub fn tier_from_similarity(s: f64) -> Result<Tier, DataError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(DataError::Similarity(s));
    }
    Ok(if s < 0.5 {
        Tier::Perceptual
    } else if s < 0.8 {
        Tier::Semantic
    } else {
        Tier::Reasoning
    })
}
