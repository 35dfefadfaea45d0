//! End-to-end flows shared by the command-line tool and the Python
//! bindings: training, evaluation, attention inspection and the
//! self-contained gradient audit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::autograd::{batch_gradient, forward_trace, grad_check, predict, GradCheckReport};
use crate::corpus::{
    balance_resample, binarize, evaluate as score, ConfusionCounts, CorpusError,
    DiscourseInstance, Prf,
};
use crate::embeddings::{
    build_memory, EmbeddingError, EmbeddingTable, Vocabulary, UNKNOWN_TOKEN,
};
use crate::lbfgs::{minimize, LbfgsConfig, LbfgsError, RunReport};
use crate::linalg::Matrix;
use crate::recognizer::{init_model, ModelDims, ModelParams, RecognizerParams, RegWeights};
use crate::semantic::{top_attended, AttentionParams};

/// Label used for the negative side of the one-vs-all split in printed
/// predictions. Never compared against gold labels for the positive class,
/// so collisions with real relation names are harmless.
pub const NEGATIVE_LABEL: &str = "other";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Optimizer(#[from] LbfgsError),
    #[error("model expects memory vectors of width {model}, got width {memory}")]
    MemoryWidthMismatch { model: usize, memory: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub d1: usize,
    pub d_a: usize,
    pub reg: RegWeights,
    pub seed: u64,
    /// Relation trained one-vs-all; matched case-insensitively.
    pub target: String,
    pub optimizer: LbfgsConfig,
}

/// Numbers worth reporting on stderr: class balance, resampling volume,
/// and memory coverage of what the optimizer actually saw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainDiagnostics {
    pub positives: usize,
    pub negatives: usize,
    /// Instances added by minority oversampling.
    pub resampled_added: usize,
    /// Balanced-set instances with no in-memory word at all.
    pub empty_memory_instances: usize,
    /// Distinct word types dropped per instance for missing the memory,
    /// summed over the balanced set.
    pub memory_dropped_words: usize,
    /// Vocabulary words with no pretrained surface vector.
    pub randomly_initialized_words: usize,
    /// The target relation never occurs in the training data.
    pub target_missing: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub target: String,
    pub report: RunReport,
    /// Accuracy on the raw, un-resampled training set — the number
    /// evaluation on the same file must reproduce exactly.
    pub train_accuracy: f64,
    pub diagnostics: TrainDiagnostics,
}

pub fn train(
    mut instances: Vec<DiscourseInstance>,
    pretrained_surface: &EmbeddingTable,
    memory: &EmbeddingTable,
    settings: &TrainSettings,
) -> Result<TrainOutcome, PipelineError> {
    assert!(!instances.is_empty(), "training corpus is empty");
    let target = settings.target.to_lowercase();
    let positives = binarize(&mut instances, &target);
    let negatives = instances.len() - positives;

    let balanced = balance_resample(instances.clone(), settings.seed)?;
    let resampled_added = balanced.len() - instances.len();

    // Trainable vocabulary: training word types in first-occurrence order,
    // plus the reserved unknown entry for words first seen at test time.
    let mut vocab = Vocabulary::new();
    for inst in &instances {
        for tok in inst.tokens() {
            vocab.insert(tok.to_string());
        }
    }
    vocab.insert(UNKNOWN_TOKEN.to_string());
    let randomly_initialized_words = vocab
        .words()
        .iter()
        .filter(|w| pretrained_surface.lookup(w).is_none())
        .count();

    let dims = ModelDims { d1: settings.d1, d2: memory.dim(), d_a: settings.d_a, l: 2 };
    let mut params = init_model(&vocab, pretrained_surface, dims, settings.seed)?;

    let mut empty_memory_instances = 0;
    let mut memory_dropped_words = 0;
    for inst in &balanced {
        let m = build_memory(inst, memory);
        if m.is_empty() {
            empty_memory_instances += 1;
        }
        memory_dropped_words += m.dropped_words;
    }

    let theta0 = params.flatten();
    let mut scratch = params.clone();
    let objective = |theta: &[f64]| {
        scratch.assign_from_flat(theta);
        batch_gradient(&scratch, memory, &balanced, &settings.reg)
    };
    let (theta_star, report) = minimize(objective, theta0, &settings.optimizer)?;
    params.assign_from_flat(&theta_star);

    let correct = instances
        .iter()
        .filter(|inst| {
            let positive = predict(&params, memory, inst).argmax() == 0;
            positive == inst.is_positive()
        })
        .count();
    let train_accuracy = correct as f64 / instances.len() as f64;

    Ok(TrainOutcome {
        params,
        target,
        report,
        train_accuracy,
        diagnostics: TrainDiagnostics {
            positives,
            negatives,
            resampled_added,
            empty_memory_instances,
            memory_dropped_words,
            randomly_initialized_words,
            target_missing: positives == 0,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub counts: ConfusionCounts,
    pub prf: Prf,
    pub accuracy: f64,
}

fn check_memory_width(params: &ModelParams, memory: &EmbeddingTable) -> Result<(), PipelineError> {
    let model = params.dims().d2;
    if memory.dim() != model {
        return Err(PipelineError::MemoryWidthMismatch { model, memory: memory.dim() });
    }
    Ok(())
}

/// Scores `params` one-vs-all on `instances`: prediction is the argmax
/// relation, gold is the instance's label string.
pub fn evaluate(
    params: &ModelParams,
    target: &str,
    memory: &EmbeddingTable,
    instances: &[DiscourseInstance],
) -> Result<EvalReport, PipelineError> {
    assert!(!instances.is_empty(), "evaluation set is empty");
    check_memory_width(params, memory)?;
    let target = target.to_lowercase();
    let mut predictions = Vec::with_capacity(instances.len());
    let mut golds = Vec::with_capacity(instances.len());
    for inst in instances {
        let label = if predict(params, memory, inst).argmax() == 0 {
            target.clone()
        } else {
            NEGATIVE_LABEL.to_string()
        };
        predictions.push(label);
        golds.push(inst.relation.clone());
    }
    let (counts, prf) = score(&predictions, &golds, &target);
    Ok(EvalReport { counts, prf, accuracy: counts.accuracy() })
}

/// One inspected instance: labels plus the most-attended memory words.
#[derive(Debug, Clone, PartialEq)]
pub struct InspectRecord {
    pub gold: String,
    pub predicted: String,
    /// `(word, attention weight)`, weight-descending; empty iff no
    /// discourse word was found in the memory.
    pub top: Vec<(String, f64)>,
}

pub fn inspect(
    params: &ModelParams,
    target: &str,
    memory: &EmbeddingTable,
    instances: &[DiscourseInstance],
    k: usize,
) -> Result<Vec<InspectRecord>, PipelineError> {
    check_memory_width(params, memory)?;
    let target = target.to_lowercase();
    let mut out = Vec::with_capacity(instances.len());
    for inst in instances {
        let trace = forward_trace(params, memory, inst);
        let predicted = if trace.prediction.argmax() == 0 {
            target.clone()
        } else {
            NEGATIVE_LABEL.to_string()
        };
        let top = match &trace.attention {
            Some(att) => top_attended(&trace.memory, att, k),
            None => Vec::new(),
        };
        out.push(InspectRecord { gold: inst.relation.clone(), predicted, top });
    }
    Ok(out)
}

/// Deterministic small configuration for the self-contained gradient
/// audit: healthy parameter scales, arguments of 2–5 tokens, partial
/// memory coverage.
pub fn gradcheck_config(
    seed: u64,
) -> (ModelParams, EmbeddingTable, Vec<DiscourseInstance>) {
    let dims = ModelDims { d1: 8, d2: 12, d_a: 6, l: 2 };
    let words: Vec<String> = (0..10).map(|i| format!("w{}", i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let normal = Normal::new(0.0, 0.4).expect("valid sigma");
    let wide = Normal::new(0.0, 1.0).expect("valid sigma");

    let fill = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.as_mut_slice() {
            *v = normal.sample(rng);
        }
        m
    };
    let embeddings = EmbeddingTable::new(
        Vocabulary::from_words(words.iter().cloned()),
        dims.d1,
        fill(words.len(), dims.d1, &mut rng),
        true,
    );
    let w_rp = fill(dims.l, 6 * dims.d1, &mut rng);
    let w_rk = fill(dims.l, dims.d2, &mut rng);
    let w_p = fill(dims.d_a, 6 * dims.d1, &mut rng);
    let w_m = fill(dims.d_a, dims.d2, &mut rng);
    let w_s = fill(dims.d_a, dims.d_a, &mut rng);
    let b_r: Vec<f64> = (0..dims.l).map(|_| 0.5 * normal.sample(&mut rng)).collect();
    let b_a: Vec<f64> = (0..dims.d_a).map(|_| 0.5 * normal.sample(&mut rng)).collect();
    let params = ModelParams::new(
        embeddings,
        RecognizerParams::new(w_rp, w_rk, b_r),
        AttentionParams::new(w_p, w_m, w_s, b_a),
    );

    // memory covers six of the ten words, so m stays small and some
    // instances lose words (or whole memories)
    let memory = EmbeddingTable::from_entries(
        dims.d2,
        words[..6].iter().map(|w| {
            let v: Vec<f64> = (0..dims.d2).map(|_| wide.sample(&mut rng)).collect();
            (w.as_str(), v)
        }),
        false,
    );

    let mut instances = Vec::new();
    for i in 0..4 {
        let arg = |rng: &mut ChaCha8Rng| -> Vec<String> {
            let n = rng.random_range(2..=5);
            (0..n).map(|_| words[rng.random_range(0..words.len())].clone()).collect()
        };
        let mut inst =
            DiscourseInstance::new(arg(&mut rng), arg(&mut rng), "com");
        inst.y = if i % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
        instances.push(inst);
    }
    (params, memory, instances)
}

/// Audits the bare loss gradient on the internal configuration.
pub fn gradcheck_internal(seed: u64, eps: f64, corrupt: Option<&str>) -> GradCheckReport {
    let (params, memory, instances) = gradcheck_config(seed);
    let no_reg = RegWeights { lambda_l: 0.0, lambda_r: 0.0, lambda_m: 0.0 };
    grad_check(&params, &memory, &instances, &no_reg, eps, 1e-4, seed, corrupt)
}
