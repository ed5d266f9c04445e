use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use guidacq::acquisition::GuidedLayers;
use guidacq::benchmarks::{generate_benchmark, BenchmarkSpec};
use guidacq::harness::{eval_classifiers, run_once, summarize, write_eval, write_records, Method, RunConfig};
use guidacq::learning::ClassifierKind;
use guidacq::problem::serialize_problem;

#[derive(Parser)]
#[command(name = "guidacq", version, about = "Interactive constraint acquisition with guided queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded acquisitions against a benchmark's simulated user.
    Run {
        /// random, sudoku9, sudoku4, jigsaw, examtt, nurse (with optional `:k=v,..`)
        #[arg(long)]
        benchmark: String,
        #[arg(long, default_value = "base")]
        method: Method,
        #[arg(long, default_value = "qgen")]
        guide: GuidedLayers,
        /// Number of seeds, starting at `--first-seed`.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        /// Query-generation cutoff; 0 searches to optimality.
        #[arg(long, default_value_t = 1.0)]
        cutoff: f64,
        /// Stop optimizing a query after this many nodes without improvement;
        /// 0 disables the limit.
        #[arg(long, default_value_t = guidacq::solver::DEFAULT_STALL_NODES)]
        stall_nodes: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the last run's labeled dataset here.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        no_verify: bool,
    },
    /// Cross-validate classifiers on an exported dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "rf,gnb")]
        kinds: Vec<ClassifierKind>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Train on ordered prefixes of 10%..90% instead.
        #[arg(long)]
        prefix: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a builtin benchmark as a problem-definition document.
    Export {
        #[arg(long)]
        benchmark: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the HTTP session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = guidacq_service::DEFAULT_MAX_SESSIONS)]
        max_sessions: usize,
    },
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { benchmark, method, guide, seeds, first_seed, cutoff, stall_nodes, out, dataset, no_verify } => {
            let spec: BenchmarkSpec = benchmark.parse()?;
            if cutoff < 0.0 {
                bail!("cutoff must be non-negative");
            }
            let config = RunConfig {
                cutoff: (cutoff > 0.0).then(|| Duration::from_secs_f64(cutoff)),
                stall_nodes: (stall_nodes > 0).then_some(stall_nodes),
                verify: !no_verify,
                ..RunConfig::new(spec, method, guide)
            };
            let mut records = Vec::new();
            for seed in first_seed..first_seed + seeds {
                let outcome = run_once(&config, seed)?;
                if let Some(e) = &outcome.error {
                    eprintln!("seed {seed}: {e}");
                }
                let stats = outcome.acquisition.stats();
                eprintln!(
                    "seed {seed}: {} queries, converged={}, {:.1}s, {} generations, {} timeouts, {} unproven, {} nodes",
                    outcome.record.total_queries,
                    outcome.record.converged,
                    outcome.record.total_runtime_seconds,
                    stats.top_level_generations,
                    stats.generation_timeouts,
                    stats.unproven_convergences,
                    stats.solver_nodes
                );
                // an aborted run leaves its step's labels unbalanced
                if outcome.error.is_none() && !outcome.bookkeeping.is_clean() {
                    bail!("seed {seed}: bookkeeping violated: {:?}", outcome.bookkeeping);
                }
                if let Some(path) = &dataset {
                    let acq = &outcome.acquisition;
                    acq.guide().dataset().write_csv(acq.vocabulary(), File::create(path)?)?;
                }
                records.push(outcome.record);
            }
            write_records(&records, output(&out)?)?;
            if let Some(s) = summarize(&records) {
                eprintln!(
                    "median queries {:.1}, mean {:.1}, converged {}/{}, max wait {:.3}s",
                    s.median_total_queries, s.mean_total_queries, s.converged, s.runs, s.max_wait_seconds
                );
            }
        }
        Command::Eval { dataset, kinds, folds, prefix, seed, out } => {
            let file = File::open(&dataset).with_context(|| format!("opening {}", dataset.display()))?;
            let rows = eval_classifiers(file, &kinds, folds, prefix, seed)?;
            write_eval(&rows, output(&out)?)?;
        }
        Command::Export { benchmark, out } => {
            let problem = generate_benchmark(&benchmark.parse()?)?;
            writeln!(output(&out)?, "{}", serialize_problem(&problem))?;
        }
        Command::Serve { port, host, max_sessions } => {
            let addr = format!("{host}:{port}");
            guidacq_service::serve(&addr, max_sessions)?;
        }
    }
    Ok(())
}
