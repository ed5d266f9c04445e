//! Seeded experiment runs, aggregation and offline classifier evaluation.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::acquisition::{verify_equivalence, Acquisition, AcquisitionConfig, Equivalence, GuidedLayers};
use crate::benchmarks::{generate_benchmark, make_oracle, BenchmarkSpec};
use crate::error::{AcqError, LearnError, ModelError};
use crate::learning::{cross_validate, parse_dataset_csv, prefix_curve, ClassifierKind, DEFAULT_PREFIX_FRACTIONS};
use crate::solver::Deadline;

/// Budget for the post-run equivalence check.
pub const VERIFY_BUDGET: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Base,
    Count,
    Gnb,
    Rf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Base, Method::Count, Method::Gnb, Method::Rf];

    pub fn classifier(self) -> Option<ClassifierKind> {
        match self {
            Method::Base => None,
            Method::Count => Some(ClassifierKind::Counting),
            Method::Gnb => Some(ClassifierKind::Gnb),
            Method::Rf => Some(ClassifierKind::Rf),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Base => "base",
            Method::Count => "count",
            Method::Gnb => "gnb",
            Method::Rf => "rf",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "base" => Ok(Method::Base),
            "count" => Ok(Method::Count),
            "gnb" => Ok(Method::Gnb),
            "rf" => Ok(Method::Rf),
            other => Err(format!("unknown method `{other}` (expected base, count, gnb or rf)")),
        }
    }
}

/// One row of experiment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub benchmark: String,
    pub method: Method,
    pub guided_layers: GuidedLayers,
    pub seed: u64,
    pub total_queries: u64,
    pub top_level_queries: u64,
    pub findscope_queries: u64,
    pub findc_queries: u64,
    pub max_wait_seconds: f64,
    pub avg_wait_seconds: f64,
    pub converged: bool,
    pub learned_size: usize,
    pub total_runtime_seconds: f64,
}

/// Violations of the acquisition bookkeeping found after a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bookkeeping {
    pub label_conservation: bool,
    pub one_refit_per_generation: bool,
    pub irredundancy_violations: u64,
}

impl Bookkeeping {
    pub fn is_clean(&self) -> bool {
        self.label_conservation && self.one_refit_per_generation && self.irredundancy_violations == 0
    }
}

pub struct RunOutcome {
    pub record: RunRecord,
    pub acquisition: Acquisition,
    pub equivalence: Option<Equivalence>,
    pub error: Option<AcqError>,
    pub bookkeeping: Bookkeeping,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub benchmark: BenchmarkSpec,
    pub method: Method,
    pub layers: GuidedLayers,
    pub cutoff: Option<Duration>,
    pub stall_nodes: Option<u64>,
    /// Skip the equivalence check (the run then reports not converged).
    pub verify: bool,
}

impl RunConfig {
    pub fn new(benchmark: BenchmarkSpec, method: Method, layers: GuidedLayers) -> Self {
        RunConfig {
            benchmark,
            method,
            layers,
            cutoff: Some(crate::acquisition::DEFAULT_CUTOFF),
            stall_nodes: Some(crate::solver::DEFAULT_STALL_NODES),
            verify: true,
        }
    }
}

pub fn check_bookkeeping(acq: &Acquisition) -> Bookkeeping {
    let s = acq.stats();
    let labels = s.negative_labels + s.positive_labels;
    let conserved = labels + s.candidates_left == s.candidates_seen && acq.guide().dataset().len() as u64 == labels;
    let refits = if acq.guide().is_guided() { s.top_level_generations } else { 0 };
    Bookkeeping {
        label_conservation: conserved,
        one_refit_per_generation: acq.guide().fits() == refits,
        irredundancy_violations: s.irredundancy_violations,
    }
}

/// Runs one seeded acquisition against the benchmark's simulated oracle.
pub fn run_once(config: &RunConfig, seed: u64) -> Result<RunOutcome, ModelError> {
    let problem = generate_benchmark(&config.benchmark)?;
    let target = problem.target.clone().unwrap_or_default();
    let mut oracle = make_oracle(&target);
    let acq_config = AcquisitionConfig {
        classifier: config.method.classifier(),
        layers: config.layers,
        seed,
        cutoff: config.cutoff,
        stall_nodes: config.stall_nodes,
    };
    let started = Instant::now();
    let mut acq = Acquisition::new(problem.vocabulary.clone(), problem.language.clone(), acq_config);
    let error = acq.grow_acquire(&mut oracle).err();
    let equivalence = (error.is_none() && config.verify).then(|| {
        verify_equivalence(acq.learned(), &target, &problem.vocabulary, Deadline::after(VERIFY_BUDGET), seed)
    });
    let runtime = started.elapsed();
    let stats = acq.stats();
    let record = RunRecord {
        benchmark: config.benchmark.name(),
        method: config.method,
        guided_layers: config.layers,
        seed,
        total_queries: stats.total_queries(),
        top_level_queries: stats.top_level_queries,
        findscope_queries: stats.findscope_queries,
        findc_queries: stats.findc_queries,
        max_wait_seconds: stats.max_wait.as_secs_f64(),
        avg_wait_seconds: stats.avg_wait().as_secs_f64(),
        converged: equivalence == Some(Equivalence::Equivalent),
        learned_size: acq.learned().len(),
        total_runtime_seconds: runtime.as_secs_f64(),
    };
    let bookkeeping = check_bookkeeping(&acq);
    Ok(RunOutcome { record, acquisition: acq, equivalence, error, bookkeeping })
}

/// One record per seed. Bookkeeping violations are reported as errors.
pub fn run_experiment(
    benchmark: BenchmarkSpec,
    method: Method,
    layers: GuidedLayers,
    seeds: &[u64],
    cutoff: Option<Duration>,
) -> Result<Vec<RunRecord>, ModelError> {
    let config = RunConfig { cutoff, ..RunConfig::new(benchmark, method, layers) };
    let mut records = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let outcome = run_once(&config, seed)?;
        if !outcome.bookkeeping.is_clean() {
            return Err(ModelError::Validation(format!(
                "bookkeeping violated on {benchmark} / {method} / seed {seed}: {:?}",
                outcome.bookkeeping
            )));
        }
        records.push(outcome.record);
    }
    Ok(records)
}

pub fn write_records<W: Write>(records: &[RunRecord], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub runs: usize,
    pub converged: usize,
    pub median_total_queries: f64,
    pub mean_total_queries: f64,
    pub max_wait_seconds: f64,
    pub mean_avg_wait_seconds: f64,
}

pub fn summarize(records: &[RunRecord]) -> Option<Summary> {
    let totals: Vec<f64> = records.iter().map(|r| r.total_queries as f64).collect();
    let avg_waits: Vec<f64> = records.iter().map(|r| r.avg_wait_seconds).collect();
    Some(Summary {
        runs: records.len(),
        converged: records.iter().filter(|r| r.converged).count(),
        median_total_queries: median(&totals)?,
        mean_total_queries: mean(&totals)?,
        max_wait_seconds: records.iter().map(|r| r.max_wait_seconds).fold(0.0, f64::max),
        mean_avg_wait_seconds: mean(&avg_waits)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub classifier: ClassifierKind,
    /// Training prefix fraction; `None` for cross-validation.
    pub fraction: Option<f64>,
    pub train_rows: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub f1: f64,
}

/// Evaluates classifiers on an exported dataset, by stratified k-fold or by
/// ordered prefixes.
pub fn eval_classifiers<R: Read>(
    dataset: R,
    kinds: &[ClassifierKind],
    folds: usize,
    prefix_mode: bool,
    seed: u64,
) -> Result<Vec<EvalRow>, LearnError> {
    let (_, x, y) = parse_dataset_csv(dataset)?;
    let mut rows = Vec::new();
    for &kind in kinds {
        if prefix_mode {
            for p in prefix_curve(&x, &y, kind, &DEFAULT_PREFIX_FRACTIONS, seed)? {
                rows.push(EvalRow {
                    classifier: kind,
                    fraction: Some(p.fraction),
                    train_rows: p.train_rows,
                    accuracy: p.metrics.accuracy,
                    balanced_accuracy: p.metrics.balanced_accuracy,
                    f1: p.metrics.f1,
                });
            }
        } else {
            let m = cross_validate(&x, &y, kind, folds, seed)?;
            rows.push(EvalRow {
                classifier: kind,
                fraction: None,
                train_rows: x.len() - x.len() / folds,
                accuracy: m.accuracy,
                balanced_accuracy: m.balanced_accuracy,
                f1: m.f1,
            });
        }
    }
    Ok(rows)
}

pub fn write_eval<W: Write>(rows: &[EvalRow], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    for r in rows {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}
