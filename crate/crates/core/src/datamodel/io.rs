//! Line-delimited JSON reading and writing for samples and responses.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::Serialize;
use serde_json::{Map, Value};

use super::schema::{
    is_known_attribute, BenchmarkSample, Condition, Dimension, EvaluationRecord, OptionLabel, Tier,
};
use super::DataError;
use crate::numerics::Simplex;

pub const SCHEMA_VERSION: &str = "1";

const SAMPLE_FIELDS: &[&str] = &[
    "schema_version",
    "sample_id",
    "group_id",
    "dimension",
    "attribute",
    "tier",
    "condition",
    "options",
    "ground_truth",
    "hallucination_option",
    "scs",
    "allocation",
];

const RECORD_FIELDS: &[&str] = &["schema_version", "sample_id", "model_id", "prediction", "option_probs"];

/// Tolerance on the sum of recorded option probabilities.
pub const OPTION_PROBS_TOLERANCE: f64 = 1e-6;

/// Successfully parsed items plus non-fatal diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub warnings: Vec<String>,
}

/// Outcome of a full validation pass that keeps going past bad lines.
#[derive(Debug)]
pub struct Validation<T> {
    pub items: Vec<T>,
    pub violations: Vec<DataError>,
    pub warnings: Vec<String>,
}

impl<T> Validation<T> {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Parses a samples stream, failing on the first invalid line.
pub fn parse_samples<R: BufRead>(reader: R) -> Result<Parsed<BenchmarkSample>, DataError> {
    let v = validate_samples_inner(reader, true)?;
    match v.violations.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(Parsed { items: v.items, warnings: v.warnings }),
    }
}

/// Parses a samples stream collecting every violation. Only I/O failures
/// abort.
pub fn validate_samples<R: BufRead>(reader: R) -> Result<Validation<BenchmarkSample>, DataError> {
    validate_samples_inner(reader, false)
}

fn validate_samples_inner<R: BufRead>(
    reader: R,
    stop_early: bool,
) -> Result<Validation<BenchmarkSample>, DataError> {
    let mut out = Validation { items: Vec::new(), violations: Vec::new(), warnings: Vec::new() };
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_object(&line, line_no)
            .and_then(|obj| sample_from_object(&obj, line_no, &mut out.warnings))
        {
            Ok(sample) => {
                if !seen.insert(sample.sample_id.clone()) {
                    out.violations.push(DataError::field(
                        line_no,
                        "sample_id",
                        format!("duplicate sample id `{}`", sample.sample_id),
                    ));
                } else {
                    out.items.push(sample);
                }
            }
            Err(e) => out.violations.push(e),
        }
        if stop_early && !out.violations.is_empty() {
            break;
        }
    }
    Ok(out)
}

/// Parses a responses stream, failing on the first invalid line.
pub fn parse_records<R: BufRead>(reader: R) -> Result<Parsed<EvaluationRecord>, DataError> {
    let mut items = Vec::new();
    let mut warnings = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let obj = parse_object(&line, line_no)?;
        items.push(record_from_object(&obj, line_no, &mut warnings)?);
    }
    Ok(Parsed { items, warnings })
}

fn parse_object(line: &str, line_no: usize) -> Result<Map<String, Value>, DataError> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(DataError::Line { line: line_no, message: "record is not a JSON object".into() }),
        Err(e) => Err(DataError::Line { line: line_no, message: format!("invalid JSON: {e}") }),
    }
}

struct Fields<'a> {
    obj: &'a Map<String, Value>,
    line: usize,
}

impl<'a> Fields<'a> {
    fn present(&self, field: &str) -> Option<&'a Value> {
        self.obj.get(field).filter(|v| !v.is_null())
    }

    fn required(&self, field: &str) -> Result<&'a Value, DataError> {
        self.present(field).ok_or_else(|| DataError::field(self.line, field, "missing required field"))
    }

    fn string(&self, field: &str) -> Result<&'a str, DataError> {
        self.required(field)?
            .as_str()
            .ok_or_else(|| DataError::field(self.line, field, "expected a string"))
    }

    fn non_empty(&self, field: &str) -> Result<String, DataError> {
        let s = self.string(field)?;
        if s.trim().is_empty() {
            return Err(DataError::field(self.line, field, "must not be empty"));
        }
        Ok(s.to_string())
    }

    fn integer(&self, value: &Value, field: &str) -> Result<i64, DataError> {
        value.as_i64().ok_or_else(|| DataError::field(self.line, field, "expected an integer"))
    }

    fn label(&self, value: &Value, field: &str) -> Result<OptionLabel, DataError> {
        let s = value
            .as_str()
            .ok_or_else(|| DataError::field(self.line, field, "expected an option label string"))?;
        OptionLabel::parse(s)
            .ok_or_else(|| DataError::field(self.line, field, format!("`{s}` is not one of A, B, C, D")))
    }

    fn numbers(&self, field: &str, len: usize) -> Result<Vec<f64>, DataError> {
        let arr = self
            .required(field)?
            .as_array()
            .ok_or_else(|| DataError::field(self.line, field, "expected an array"))?;
        if arr.len() != len {
            return Err(DataError::field(
                self.line,
                field,
                format!("expected {len} entries, got {}", arr.len()),
            ));
        }
        arr.iter()
            .map(|v| {
                v.as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| DataError::field(self.line, field, "expected finite numbers"))
            })
            .collect()
    }

    fn check_version(&self) -> Result<(), DataError> {
        let v = self.string("schema_version")?;
        if v != SCHEMA_VERSION {
            return Err(DataError::field(
                self.line,
                "schema_version",
                format!("unsupported version `{v}`, expected `{SCHEMA_VERSION}`"),
            ));
        }
        Ok(())
    }

    fn warn_unknown(&self, known: &[&str], warnings: &mut Vec<String>) {
        for key in self.obj.keys() {
            if !known.contains(&key.as_str()) {
                let msg = format!("line {}: unknown field `{key}` ignored", self.line);
                warnings.push(msg);
            }
        }
    }
}

fn sample_from_object(
    obj: &Map<String, Value>,
    line: usize,
    warnings: &mut Vec<String>,
) -> Result<BenchmarkSample, DataError> {
    let f = Fields { obj, line };
    f.check_version()?;
    let sample_id = f.non_empty("sample_id")?;
    let group_id = f.non_empty("group_id")?;

    let dim_str = f.string("dimension")?;
    let dimension = Dimension::parse(dim_str).ok_or_else(|| {
        DataError::field(line, "dimension", format!("`{dim_str}` is not temporal|action|object|spatial"))
    })?;

    let attribute = f.non_empty("attribute")?;
    if !is_known_attribute(&attribute) {
        let msg = format!("line {line}: attribute `{attribute}` is not in the reference list");
        warnings.push(msg);
    }

    let tier_raw = f.integer(f.required("tier")?, "tier")?;
    let tier = Tier::from_level(tier_raw)
        .ok_or_else(|| DataError::field(line, "tier", format!("{tier_raw} is not 1, 2 or 3")))?;

    let cond_str = f.string("condition")?;
    let condition = Condition::parse(cond_str).ok_or_else(|| {
        DataError::field(
            line,
            "condition",
            format!("`{cond_str}` is not text_free|text_congruent|text_contradictory"),
        )
    })?;

    let options_arr = f
        .required("options")?
        .as_array()
        .ok_or_else(|| DataError::field(line, "options", "expected an array of 4 strings"))?;
    if options_arr.len() != 4 {
        return Err(DataError::field(
            line,
            "options",
            format!("expected exactly 4 options, got {}", options_arr.len()),
        ));
    }
    let mut options: [String; 4] = Default::default();
    for (slot, v) in options.iter_mut().zip(options_arr) {
        *slot = v
            .as_str()
            .ok_or_else(|| DataError::field(line, "options", "options must be strings"))?
            .to_string();
    }

    let ground_truth = f.label(f.required("ground_truth")?, "ground_truth")?;
    let contradictory = condition == Condition::TextContradictory;

    let hallucination_option = match f.present("hallucination_option") {
        Some(v) if contradictory => {
            let o = f.label(v, "hallucination_option")?;
            if o == ground_truth {
                return Err(DataError::field(
                    line,
                    "hallucination_option",
                    "must differ from ground_truth",
                ));
            }
            Some(o)
        }
        Some(_) => {
            return Err(DataError::field(
                line,
                "hallucination_option",
                "only allowed when condition is text_contradictory",
            ))
        }
        None if contradictory => {
            return Err(DataError::field(
                line,
                "hallucination_option",
                "required when condition is text_contradictory",
            ))
        }
        None => None,
    };

    let scs = match f.present("scs") {
        Some(v) if contradictory => {
            let s = f.integer(v, "scs")?;
            if !(1..=5).contains(&s) {
                return Err(DataError::field(line, "scs", format!("{s} is outside 1..=5")));
            }
            Some(s as u8)
        }
        Some(_) => {
            return Err(DataError::field(line, "scs", "only allowed when condition is text_contradictory"))
        }
        None if contradictory => {
            return Err(DataError::field(line, "scs", "required when condition is text_contradictory"))
        }
        None => None,
    };

    let raw = f.numbers("allocation", 4)?;
    if raw.iter().any(|v| *v < 0.0) {
        return Err(DataError::field(line, "allocation", "entries must be nonnegative"));
    }
    let total: f64 = raw.iter().sum();
    if total > 1.0 + Simplex::TOLERANCE {
        return Err(DataError::field(line, "allocation", format!("entries sum to {total} > 1")));
    }
    let allocation = Simplex::normalized(&raw)
        .map_err(|_| DataError::field(line, "allocation", "entries sum to zero"))?;
    let allocation_raw = [raw[0], raw[1], raw[2], raw[3]];

    f.warn_unknown(SAMPLE_FIELDS, warnings);
    Ok(BenchmarkSample {
        sample_id,
        group_id,
        dimension,
        attribute,
        tier,
        condition,
        options,
        ground_truth,
        hallucination_option,
        scs,
        allocation,
        allocation_raw,
    })
}

fn record_from_object(
    obj: &Map<String, Value>,
    line: usize,
    warnings: &mut Vec<String>,
) -> Result<EvaluationRecord, DataError> {
    let f = Fields { obj, line };
    f.check_version()?;
    let sample_id = f.non_empty("sample_id")?;
    let model_id = f.non_empty("model_id")?;
    let prediction = f.label(f.required("prediction")?, "prediction")?;
    let option_probs = match f.present("option_probs") {
        None => None,
        Some(_) => {
            let probs = f.numbers("option_probs", 4)?;
            Some(Simplex::with_tolerance(probs, OPTION_PROBS_TOLERANCE).map_err(|e| {
                DataError::field(line, "option_probs", e.to_string())
            })?)
        }
    };
    f.warn_unknown(RECORD_FIELDS, warnings);
    Ok(EvaluationRecord { sample_id, model_id, prediction, option_probs })
}

#[derive(Serialize)]
struct SampleLine<'a> {
    schema_version: &'static str,
    sample_id: &'a str,
    group_id: &'a str,
    dimension: &'static str,
    attribute: &'a str,
    tier: u8,
    condition: &'static str,
    options: &'a [String; 4],
    ground_truth: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    hallucination_option: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scs: Option<u8>,
    allocation: &'a [f64; 4],
}

#[derive(Serialize)]
struct RecordLine<'a> {
    schema_version: &'static str,
    sample_id: &'a str,
    model_id: &'a str,
    prediction: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    option_probs: Option<&'a [f64]>,
}

/// One JSON line (without the trailing newline). The allocation is written
/// as originally annotated so that a re-parse is field-exact.
pub fn sample_to_line(s: &BenchmarkSample) -> String {
    let line = SampleLine {
        schema_version: SCHEMA_VERSION,
        sample_id: &s.sample_id,
        group_id: &s.group_id,
        dimension: s.dimension.as_str(),
        attribute: &s.attribute,
        tier: s.tier.level(),
        condition: s.condition.as_str(),
        options: &s.options,
        ground_truth: s.ground_truth.as_str(),
        hallucination_option: s.hallucination_option.map(OptionLabel::as_str),
        scs: s.scs,
        allocation: &s.allocation_raw,
    };
    serde_json::to_string(&line).expect("sample serialization cannot fail")
}

pub fn record_to_line(r: &EvaluationRecord) -> String {
    let line = RecordLine {
        schema_version: SCHEMA_VERSION,
        sample_id: &r.sample_id,
        model_id: &r.model_id,
        prediction: r.prediction.as_str(),
        option_probs: r.option_probs.as_ref().map(Simplex::as_slice),
    };
    serde_json::to_string(&line).expect("record serialization cannot fail")
}

pub fn write_samples<W: Write>(mut w: W, samples: &[BenchmarkSample]) -> std::io::Result<()> {
    for s in samples {
        writeln!(w, "{}", sample_to_line(s))?;
    }
    Ok(())
}

pub fn write_records<W: Write>(mut w: W, records: &[EvaluationRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", record_to_line(r))?;
    }
    Ok(())
}
