//! `semder` — train, evaluate and inspect one-vs-all discourse-relation
//! models, plus a self-contained gradient audit.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or input error,
//! 3 numeric abort.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use semder_core::corpus::{parse_tsv, DiscourseInstance};
use semder_core::embeddings::{build_memory, load_word2vec_text, EmbeddingTable};
use semder_core::lbfgs::LbfgsConfig;
use semder_core::model_file::{load_model, save_model};
use semder_core::pipeline::{
    self, gradcheck_internal, PipelineError, TrainSettings,
};
use semder_core::recognizer::RegWeights;

#[derive(Parser)]
#[command(
    name = "semder",
    about = "Implicit discourse-relation recognition with attention over a word-vector semantic memory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a one-vs-all relation model and write it to disk
    Train(TrainArgs),
    /// Score a trained model on a TSV corpus
    Eval(EvalArgs),
    /// Print per-instance predictions with the top attended memory words
    Inspect(InspectArgs),
    /// Audit analytic gradients against central finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Optional key=value config file; explicit flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training corpus: relation<TAB>arg1 tokens<TAB>arg2 tokens
    #[arg(long)]
    train: Option<PathBuf>,
    /// Semantic-memory word vectors (word2vec text format)
    #[arg(long)]
    memory: Option<PathBuf>,
    /// Pretrained surface vectors; absent words are drawn at random
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Where to write the trained model
    #[arg(long = "model-out")]
    model_out: Option<PathBuf>,
    /// Relation label to train against (one model per relation)
    #[arg(long)]
    target: Option<String>,
    /// Surface embedding width
    #[arg(long)]
    d1: Option<usize>,
    /// Attention-space width
    #[arg(long)]
    da: Option<usize>,
    #[arg(long = "lambda-l")]
    lambda_l: Option<f64>,
    #[arg(long = "lambda-r")]
    lambda_r: Option<f64>,
    #[arg(long = "lambda-m")]
    lambda_m: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// L-BFGS curvature pairs kept (0 = gradient descent)
    #[arg(long)]
    history: Option<usize>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Semantic-memory word vectors; width must match the model
    #[arg(long)]
    memory: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    memory: PathBuf,
    /// Attended words shown per instance
    #[arg(long, default_value_t = 5)]
    k: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Finite-difference step, within [1e-8, 1e-4]
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Debug hook: flip the analytic gradient of one block by name
    #[arg(long = "corrupt-block", hide = true)]
    corrupt_block: Option<String>,
}

/// Failure that already knows its exit code.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::Optimizer(_) => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

macro_rules! from_failure_code2 {
    ($($ty:ty),*) => {$(
        impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure { code: 2, message: e.to_string() }
            }
        }
    )*};
}
from_failure_code2!(
    semder_core::corpus::CorpusError,
    semder_core::embeddings::EmbeddingError,
    semder_core::model_file::ModelFileError
);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Inspect(args) => run_inspect(args),
        Command::Gradcheck(args) => run_gradcheck(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

// --- config-file merging ------------------------------------------------

/// Key=value file, same keys as the long flags. Blank lines and
/// #-comments allowed.
fn read_config(path: &Path) -> Result<HashMap<String, String>, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {}", path.display(), e)))?;
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage(format!("{}: line {}: expected key=value", path.display(), i + 1))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

struct Settings<'a> {
    file: HashMap<String, String>,
    path: Option<&'a Path>,
}

impl Settings<'_> {
    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure> {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                usage(format!(
                    "{}: cannot parse {}={:?}",
                    self.path.map_or_else(|| "config".into(), |p| p.display().to_string()),
                    key,
                    raw
                ))
            }),
        }
    }
}

// --- train --------------------------------------------------------------

fn run_train(args: TrainArgs) -> Result<u8, Failure> {
    let file = match &args.config {
        Some(p) => read_config(p)?,
        None => HashMap::new(),
    };
    let cfg = Settings { file, path: args.config.as_deref() };

    let need = |flag: &str, v: Option<PathBuf>| -> Result<PathBuf, Failure> {
        v.ok_or_else(|| usage(format!("--{} is required (flag or config key)", flag)))
    };
    let train_path = need("train", args.train.or(cfg.parsed::<PathBuf>("train")?))?;
    let memory_path = need("memory", args.memory.or(cfg.parsed::<PathBuf>("memory")?))?;
    let model_out = need("model-out", args.model_out.or(cfg.parsed::<PathBuf>("model-out")?))?;
    let embeddings_path = args.embeddings.or(cfg.parsed::<PathBuf>("embeddings")?);
    let target = args
        .target
        .or(cfg.parsed::<String>("target")?)
        .ok_or_else(|| usage("--target is required (flag or config key)"))?;

    let d1 = args.d1.or(cfg.parsed("d1")?).unwrap_or(128);
    let d_a = args.da.or(cfg.parsed("da")?).unwrap_or(128);
    let reg = RegWeights {
        lambda_l: args.lambda_l.or(cfg.parsed("lambda-l")?).unwrap_or(1e-5),
        lambda_r: args.lambda_r.or(cfg.parsed("lambda-r")?).unwrap_or(1e-4),
        lambda_m: args.lambda_m.or(cfg.parsed("lambda-m")?).unwrap_or(1e-4),
    };
    let seed = args.seed.or(cfg.parsed("seed")?).unwrap_or(42);
    let optimizer = LbfgsConfig {
        history_size: args.history.or(cfg.parsed("history")?).unwrap_or(10),
        max_iterations: args.max_iters.or(cfg.parsed("max-iters")?).unwrap_or(500),
        ..Default::default()
    };
    if d1 == 0 || d_a == 0 {
        return Err(usage("--d1 and --da must be positive"));
    }

    let (memory, memory_stats) = load_word2vec_text(&memory_path)?;
    if memory_stats.duplicate_words > 0 {
        eprintln!(
            "note: {} duplicate words in {} (first occurrence kept)",
            memory_stats.duplicate_words,
            memory_path.display()
        );
    }
    let pretrained = match &embeddings_path {
        Some(p) => {
            let (table, stats) = load_word2vec_text(p)?;
            if stats.duplicate_words > 0 {
                eprintln!(
                    "note: {} duplicate words in {} (first occurrence kept)",
                    stats.duplicate_words,
                    p.display()
                );
            }
            table
        }
        None => EmbeddingTable::empty(d1, false),
    };

    let instances = parse_tsv(&train_path)?;
    if instances.is_empty() {
        return Err(usage(format!("no instances in {}", train_path.display())));
    }
    let target_lc = target.to_lowercase();
    if !instances.iter().any(|i| i.relation == target_lc) {
        eprintln!(
            "warning: target relation {:?} never occurs in {}; all instances are negative",
            target_lc,
            train_path.display()
        );
    }

    let settings = TrainSettings { d1, d_a, reg, seed, target: target_lc, optimizer };
    let outcome = pipeline::train(instances, &pretrained, &memory, &settings)?;

    let d = &outcome.diagnostics;
    eprintln!(
        "train set: {} positive / {} negative, {} added by resampling",
        d.positives, d.negatives, d.resampled_added
    );
    eprintln!(
        "memory coverage: {} instances with empty memory, {} word types dropped",
        d.empty_memory_instances, d.memory_dropped_words
    );
    eprintln!(
        "surface vectors: {} of {} vocabulary words randomly initialized",
        d.randomly_initialized_words,
        outcome.params.embeddings.len()
    );

    for rec in &outcome.report.iterations {
        println!(
            "iter {:>4}  J {:.12e}  |g| {:.6e}  step {:.6e}",
            rec.index, rec.j, rec.grad_norm, rec.step
        );
    }
    println!("termination: {}", outcome.report.termination);
    println!("final J: {:.12e}", outcome.report.final_j);
    println!("final train accuracy: {:.6}", outcome.train_accuracy);

    save_model(&model_out, &outcome.params, &outcome.target)?;
    eprintln!("model written to {}", model_out.display());
    Ok(0)
}

// --- eval ---------------------------------------------------------------

fn load_eval_inputs(
    model: &Path,
    data: &Path,
    memory: &Path,
) -> Result<(semder_core::model_file::SavedModel, Vec<DiscourseInstance>, EmbeddingTable), Failure>
{
    let saved = load_model(model)?;
    let (memory_table, stats) = load_word2vec_text(memory)?;
    if stats.duplicate_words > 0 {
        eprintln!(
            "note: {} duplicate words in {} (first occurrence kept)",
            stats.duplicate_words,
            memory.display()
        );
    }
    let instances = parse_tsv(data)?;
    if instances.is_empty() {
        return Err(usage(format!("no instances in {}", data.display())));
    }
    let mut empty = 0usize;
    let mut dropped = 0usize;
    for inst in &instances {
        let m = build_memory(inst, &memory_table);
        if m.is_empty() {
            empty += 1;
        }
        dropped += m.dropped_words;
    }
    eprintln!(
        "memory coverage: {} instances with empty memory, {} word types dropped",
        empty, dropped
    );
    Ok((saved, instances, memory_table))
}

fn run_eval(args: EvalArgs) -> Result<u8, Failure> {
    let (saved, instances, memory) = load_eval_inputs(&args.model, &args.data, &args.memory)?;
    let report = pipeline::evaluate(&saved.params, &saved.target, &memory, &instances)?;
    let c = report.counts;
    println!("target relation: {}", saved.target);
    println!("             tp      fp      fn      tn");
    println!("counts   {:>6}  {:>6}  {:>6}  {:>6}", c.tp, c.fp, c.fn_, c.tn);
    println!("precision  {:.6}", report.prf.precision);
    println!("recall     {:.6}", report.prf.recall);
    println!("f1         {:.6}", report.prf.f1);
    println!("accuracy   {:.6}", report.accuracy);
    println!();
    println!("precision={:.6}", report.prf.precision);
    println!("recall={:.6}", report.prf.recall);
    println!("f1={:.6}", report.prf.f1);
    println!("tp={}", c.tp);
    println!("fp={}", c.fp);
    println!("fn={}", c.fn_);
    println!("tn={}", c.tn);
    println!("accuracy={:.6}", report.accuracy);
    Ok(0)
}

// --- inspect ------------------------------------------------------------

fn run_inspect(args: InspectArgs) -> Result<u8, Failure> {
    let (saved, instances, memory) = load_eval_inputs(&args.model, &args.data, &args.memory)?;
    let records =
        pipeline::inspect(&saved.params, &saved.target, &memory, &instances, args.k)?;
    for (i, rec) in records.iter().enumerate() {
        println!("#{}  gold {}  predicted {}", i + 1, rec.gold, rec.predicted);
        if rec.top.is_empty() {
            println!("  (no in-memory words)");
        } else {
            for (word, weight) in &rec.top {
                println!("  {} {:.6}", word, weight);
            }
        }
    }
    Ok(0)
}

// --- gradcheck ----------------------------------------------------------

const BLOCK_NAMES: [&str; 8] =
    ["theta_l", "w_rp", "w_rk", "b_r", "w_p", "w_m", "w_s", "b_a"];

fn run_gradcheck(args: GradcheckArgs) -> Result<u8, Failure> {
    if !(1e-8..=1e-4).contains(&args.eps) {
        return Err(usage(format!("--eps must lie in [1e-8, 1e-4], got {:e}", args.eps)));
    }
    if let Some(name) = &args.corrupt_block {
        if !BLOCK_NAMES.contains(&name.as_str()) {
            return Err(usage(format!(
                "unknown parameter block {:?}; expected one of {}",
                name,
                BLOCK_NAMES.join(", ")
            )));
        }
    }
    let report = gradcheck_internal(args.seed, args.eps, args.corrupt_block.as_deref());
    for b in &report.blocks {
        println!(
            "block {:<8} max rel err {:.6e}  ({} scalars)",
            b.name, b.max_rel_err, b.checked
        );
    }
    println!("overall max rel err {:.6e}", report.max_rel_err);
    if report.passed {
        println!("gradient check passed (tolerance {:.0e})", report.tolerance);
        Ok(0)
    } else {
        println!("gradient check FAILED (tolerance {:.0e})", report.tolerance);
        Ok(1)
    }
}
