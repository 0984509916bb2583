//! corpus, validate, simulate and eval.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use overlay_core::datamodel::{
    join, parse_records, parse_samples, synth_corpus, synthesize_responses, validate_samples,
    write_records, write_samples, BehaviorProfile, BenchmarkSample, ConditionBehavior, CorpusSpec, EvaluationRecord,
};
use overlay_core::metrics::{full_report, render_json, render_table, MetricInput};
use overlay_core::rng::DEFAULT_SEED;

use crate::failure::{Failure, Outcome};

/// Violations printed by `validate` before the summary.
const MAX_SHOWN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

pub fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::io(path, e))
}

/// Writes `body` to `out`, or to stdout when no path is given.
pub fn emit(out: Option<&Path>, body: &str) -> Outcome {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| Failure::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(body.as_bytes()) {
                // a closed pipe (e.g. `| head`) is not a failure
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::io(Path::new("<stdout>"), e)),
                _ => Ok(()),
            }
        }
    }
}

fn load_samples(path: &Path) -> Result<Vec<BenchmarkSample>, Failure> {
    let parsed = parse_samples(open(path)?)
        .map_err(|e| Failure { message: format!("{}: {}", path.display(), e), ..Failure::from(e) })?;
    for w in &parsed.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(parsed.items)
}

fn load_records(path: &Path) -> Result<Vec<EvaluationRecord>, Failure> {
    let parsed = parse_records(open(path)?)
        .map_err(|e| Failure { message: format!("{}: {}", path.display(), e), ..Failure::from(e) })?;
    for w in &parsed.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(parsed.items)
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Samples file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Question groups; each contributes up to three condition variants.
    #[arg(long, default_value_t = 100)]
    pub groups: usize,
    /// Probability that each condition variant of a group is kept.
    #[arg(long, default_value_t = 1.0)]
    pub keep: f64,
    /// Give every contradictory sample this conflict score instead of a
    /// uniform draw.
    #[arg(long)]
    pub scs: Option<u8>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

pub fn corpus(args: &CorpusArgs) -> Outcome {
    if !(0.0..=1.0).contains(&args.keep) {
        return Err(Failure::usage(format!("--keep {} is outside [0, 1]", args.keep)));
    }
    if args.scs.is_some_and(|s| !(1..=5).contains(&s)) {
        return Err(Failure::usage("--scs must be between 1 and 5"));
    }
    let spec = CorpusSpec { groups: args.groups, keep_condition: args.keep, fixed_scs: args.scs };
    let samples = synth_corpus(&spec, args.seed);
    let file = File::create(&args.out).map_err(|e| Failure::io(&args.out, e))?;
    let mut w = BufWriter::new(file);
    write_samples(&mut w, &samples).map_err(|e| Failure::io(&args.out, e))?;
    w.flush().map_err(|e| Failure::io(&args.out, e))?;
    log::info!("wrote {} samples to {}", samples.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Benchmark samples, one JSON object per line.
    #[arg(long)]
    pub samples: PathBuf,
}

pub fn validate(args: &ValidateArgs) -> Outcome {
    let report = validate_samples(open(&args.samples)?)?;
    for w in &report.warnings {
        log::warn!("{}: {w}", args.samples.display());
    }
    if report.is_clean() {
        println!("{} samples OK", report.items.len());
        return Ok(());
    }
    for v in report.violations.iter().take(MAX_SHOWN) {
        println!("{}: {v}", args.samples.display());
    }
    let hidden = report.violations.len().saturating_sub(MAX_SHOWN);
    if hidden > 0 {
        println!("... and {hidden} more");
    }
    Err(Failure::invalid(format!(
        "{} violation(s), {} valid sample(s)",
        report.violations.len(),
        report.items.len()
    )))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub samples: PathBuf,
    /// Responses file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Probability of answering correctly on text-free and congruent samples.
    #[arg(long, default_value_t = 0.7)]
    pub p_correct: f64,
    /// Probability of answering correctly on contradictory samples; defaults
    /// to `--p-correct`.
    #[arg(long)]
    pub p_correct_contra: Option<f64>,
    /// Probability of picking the overlay option on contradictory samples.
    #[arg(long, default_value_t = 0.0)]
    pub p_halluc: f64,
    /// Also write per-option probabilities.
    #[arg(long)]
    pub with_probs: bool,
    #[arg(long, default_value = "simulated")]
    pub model_id: String,
}

pub fn simulate(args: &SimulateArgs) -> Outcome {
    let samples = load_samples(&args.samples)?;
    let profile = BehaviorProfile {
        free: ConditionBehavior::new(args.p_correct, 0.0),
        congruent: ConditionBehavior::new(args.p_correct, 0.0),
        contradictory: ConditionBehavior::new(args.p_correct_contra.unwrap_or(args.p_correct), args.p_halluc),
        with_probs: args.with_probs,
    };
    profile.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let records = synthesize_responses(&samples, &profile, &args.model_id, args.seed)?;
    let file = File::create(&args.out).map_err(|e| Failure::io(&args.out, e))?;
    let mut w = BufWriter::new(file);
    write_records(&mut w, &records).map_err(|e| Failure::io(&args.out, e))?;
    w.flush().map_err(|e| Failure::io(&args.out, e))?;
    log::info!("wrote {} responses to {}", records.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
    /// Model whose responses to score; may be omitted when the file holds a
    /// single model.
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn pick_model(records: &[EvaluationRecord], requested: Option<&str>) -> Result<String, Failure> {
    if let Some(m) = requested {
        return Ok(m.to_string());
    }
    let mut ids: Vec<&str> = records.iter().map(|r| r.model_id.as_str()).collect();
    ids.sort();
    ids.dedup();
    match ids.as_slice() {
        [] => Ok("unknown".to_string()),
        [one] => Ok(one.to_string()),
        many => Err(Failure::usage(format!(
            "responses hold {} models ({}); pass --model-id",
            many.len(),
            many.join(", ")
        ))),
    }
}

pub fn eval(args: &EvalArgs) -> Outcome {
    let samples = load_samples(&args.samples)?;
    let records = load_records(&args.responses)?;
    let model_id = pick_model(&records, args.model_id.as_deref())?;
    let joined = join(&samples, &records, &model_id)?;
    if joined.evaluated.is_empty() {
        log::warn!("no responses from `{model_id}`; every metric is undefined");
    } else if joined.coverage.missing > 0 {
        log::warn!(
            "{} of {} samples have no response from `{model_id}`",
            joined.coverage.missing,
            joined.coverage.samples
        );
    }
    let input = MetricInput::new(joined.evaluated)?;
    let report = full_report(&input);
    let body = match args.format {
        Format::Json => render_json(&model_id, &report),
        Format::Table => render_table(&model_id, &report),
    };
    emit(args.out.as_deref(), &body)
}
