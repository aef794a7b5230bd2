//! Command-line front end for exact label-set likelihoods, the verification
//! suites, the synthetic training harness and transcription.
//!
//! Exit codes: 0 success, 1 bad input or failed check, 2 zero probability,
//! 3 size guard exceeded, 4 training diverged.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use exactmil::decode::{collapse_transcribe, column_sequence, emission_map, EmissionMap};
use exactmil::harness::{evaluate, train_with, GlyphSet, Objective, TestSets, TrainConfig};
use exactmil::io::{metrics_lines, read_checkpoint, read_emission_map, read_labels, read_tensor, Checkpoint};
use exactmil::likelihood::{brute_force_likelihood, LikelihoodConfig, LikelihoodResult, DEFAULT_MAX_SUBSET_ORDER};
use exactmil::verify::Suite;
use exactmil::Error;

#[derive(Parser)]
#[command(name = "exactmil", version, about = "Exact label-set likelihoods for multiple-instance learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Log-probability that a tensor emits exactly the given label set.
    Likelihood {
        #[arg(long)]
        tensor: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
        method: MethodArg,
        /// Truncation order for `--method bound`.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_MAX_SUBSET_ORDER)]
        max_order: usize,
        #[arg(long)]
        json: bool,
    },
    /// Run a randomized property suite.
    Verify {
        #[arg(long)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Defaults to the suite's standard size.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Train the scene model and write a checkpoint and a metrics log.
    Train {
        #[arg(long, default_value = "checkpoint.json")]
        checkpoint: PathBuf,
        #[arg(long, default_value = "metrics.jsonl")]
        metrics: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 6000)]
        train_size: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.01)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0.001)]
        final_learning_rate: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Exact)]
        objective: ObjectiveArg,
        /// Record per-epoch wall time; makes the metrics log run-dependent.
        #[arg(long)]
        record_wall_time: bool,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a checkpoint on freshly generated test scenes; prints JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the checkpoint's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        singles: usize,
        #[arg(long, default_value_t = 1000)]
        scenes: usize,
    },
    /// Collapse a tensor or an emission map into a left-to-right label string.
    Transcribe {
        #[arg(long, conflicts_with = "map", required_unless_present = "map")]
        tensor: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
        /// Number of classes for maps that do not record it.
        #[arg(long)]
        num_classes: Option<usize>,
        #[arg(long, default_value = "")]
        sep: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Beta,
    Brute,
    Bound,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Oracle,
    Methods,
    Partition,
    Gradcheck,
    Bounds,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Oracle => Suite::Oracle,
            SuiteArg::Methods => Suite::Methods,
            SuiteArg::Partition => Suite::Partition,
            SuiteArg::Gradcheck => Suite::Gradcheck,
            SuiteArg::Bounds => Suite::Bounds,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Exact,
    TraditionalMil,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ZeroProbability | Error::ZeroProbabilitySample { .. } => 2,
            Error::SubsetOrderExceeded { .. } | Error::EnumerationTooLarge { .. } => 3,
            Error::DivergedObjective { .. } => 4,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn input_error(message: String) -> Failure {
    Failure { code: 1, message }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn log_prob_json(v: f64) -> serde_json::Value {
    if v == f64::NEG_INFINITY {
        json!("-inf")
    } else {
        json!(v)
    }
}

fn log_prob_text(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

fn likelihood(
    tensor: &Path,
    labels: &Path,
    method: MethodArg,
    k: Option<usize>,
    max_order: usize,
    as_json: bool,
) -> Result<u8, Failure> {
    let p = read_tensor(&read(tensor)?)?.to_prob()?;
    let l = read_labels(&read(labels)?)?;
    let config = LikelihoodConfig::with_max_subset_order(max_order);
    let r: LikelihoodResult = match method {
        MethodArg::Exact => config.exact(&l, &p)?,
        MethodArg::Beta => config.beta(&l, &p)?,
        MethodArg::Brute => brute_force_likelihood(&l, &p)?,
        MethodArg::Bound => {
            let k = k.ok_or_else(|| input_error("--method bound needs --k".into()))?;
            config.upper_bound(&l, &p, k)?
        }
    };
    if as_json {
        let doc = json!({
            "logprob": log_prob_json(r.log_prob),
            "method": r.method.to_string(),
            "terms_evaluated": r.terms_evaluated,
        });
        println!("{doc}");
    } else {
        println!("logprob {}", log_prob_text(r.log_prob));
        println!("method {}", r.method);
        println!("terms_evaluated {}", r.terms_evaluated);
    }
    Ok(if r.is_zero() { 2 } else { 0 })
}

fn verify(suite: SuiteArg, seed: u64, trials: Option<usize>, as_json: bool) -> Result<u8, Failure> {
    let suite = Suite::from(suite);
    let trials = trials.unwrap_or_else(|| suite.default_trials());
    let report = suite.run(seed, trials)?;
    if as_json {
        println!("{}", serde_json::to_string(&report).expect("serializable report"));
    } else {
        println!(
            "{} {}: {} checks, {} failures, worst error {:e} (tolerance {:e})",
            report.suite,
            if report.passed() { "PASS" } else { "FAIL" },
            report.checks,
            report.failures,
            report.worst_error,
            report.tolerance
        );
    }
    Ok(if report.passed() { 0 } else { 1 })
}

fn transcribe(
    tensor: Option<&Path>,
    map: Option<&Path>,
    num_classes: Option<usize>,
    sep: &str,
    as_json: bool,
) -> Result<u8, Failure> {
    let map: EmissionMap = match (tensor, map) {
        (Some(t), _) => emission_map(&read_tensor(&read(t)?)?.to_prob()?),
        (None, Some(m)) => read_emission_map(&read(m)?, num_classes)?,
        (None, None) => return Err(input_error("give --tensor or --map".into())),
    };
    let t = collapse_transcribe(&column_sequence(&map), map.background());
    if as_json {
        println!("{}", json!({ "labels": t.labels(), "text": t.render(sep) }));
    } else {
        println!("{}", t.render(sep));
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Likelihood { tensor, labels, method, k, max_order, json } => {
            likelihood(&tensor, &labels, method, k, max_order, json)
        }
        Command::Verify { suite, seed, trials, json } => verify(suite, seed, trials, json),
        Command::Train {
            checkpoint,
            metrics,
            seed,
            epochs,
            train_size,
            batch_size,
            learning_rate,
            final_learning_rate,
            momentum,
            objective,
            record_wall_time,
            json,
        } => {
            let config = TrainConfig {
                seed,
                epochs,
                train_size,
                batch_size,
                learning_rate,
                final_learning_rate,
                momentum,
                objective: match objective {
                    ObjectiveArg::Exact => Objective::Exact,
                    ObjectiveArg::TraditionalMil => Objective::TraditionalMil,
                },
                record_wall_time,
                ..TrainConfig::default()
            };
            let trained = train_with(&config, |r| {
                if !json {
                    println!("epoch {} mean_nll {} lr {}", r.epoch, r.mean_nll, r.lr);
                }
            })?;
            write(&metrics, &metrics_lines(&trained.log))?;
            write(&checkpoint, &Checkpoint::new(&trained.params, &config).to_json())?;
            if json {
                let last = trained.log.last().expect("at least two epochs");
                let doc = json!({
                    "checkpoint": checkpoint.display().to_string(),
                    "metrics": metrics.display().to_string(),
                    "epochs": last.epoch,
                    "final_mean_nll": last.mean_nll,
                });
                println!("{doc}");
            }
            Ok(0)
        }
        Command::Eval { checkpoint, seed, singles, scenes } => {
            let ck = read_checkpoint(&read(&checkpoint)?)?;
            let c = &ck.config;
            let params = ck.params()?;
            let glyphs = GlyphSet::from_seed(ck.seed, c.num_classes, c.glyph_size)?;
            let sets = TestSets::generate(
                seed.unwrap_or(ck.seed),
                &glyphs,
                singles,
                scenes,
                c.glyphs_per_scene,
                c.height,
                c.width,
            )?;
            let m = evaluate(&params, &sets)?;
            println!("{}", serde_json::to_string(&m).expect("serializable metrics"));
            Ok(0)
        }
        Command::Transcribe { tensor, map, num_classes, sep, json } => {
            transcribe(tensor.as_deref(), map.as_deref(), num_classes, &sep, json)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
