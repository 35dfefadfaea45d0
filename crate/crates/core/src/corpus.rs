//! Corpus ingestion, one-vs-all binarization, balancing by resampling and
//! precision/recall/F1 evaluation.
//!
//! Input corpora are plain UTF-8 TSV files, one discourse per line:
//! `relation<TAB>arg1 tokens<TAB>arg2 tokens`, tokens space-separated and
//! already tokenized. All text is lowercased at ingestion so trainable and
//! memory lookups agree on casing.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

/// One discourse: two argument token sequences and a relation label.
/// `y` is the one-hot target and is empty until [`binarize`] assigns it.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscourseInstance {
    pub arg1: Vec<String>,
    pub arg2: Vec<String>,
    pub relation: String,
    pub y: Vec<f64>,
}

impl DiscourseInstance {
    pub fn new(arg1: Vec<String>, arg2: Vec<String>, relation: impl Into<String>) -> Self {
        DiscourseInstance {
            arg1,
            arg2,
            relation: relation.into(),
            y: Vec::new(),
        }
    }

    /// All tokens, Arg1 first, in surface order.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.arg1.iter().chain(self.arg2.iter()).map(String::as_str)
    }

    /// True when `y` marks the positive (first) class.
    pub fn is_positive(&self) -> bool {
        self.y.first().copied() == Some(1.0)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: empty argument field")]
    EmptyArgument { line: usize },
    #[error("cannot resample: class with zero instances ({positives} positive, {negatives} negative)")]
    EmptyClass { positives: usize, negatives: usize },
}

/// Parses a TSV corpus file. Blank lines are skipped, CRLF endings are
/// normalized, and every field is lowercased.
pub fn parse_tsv(path: impl AsRef<Path>) -> Result<Vec<DiscourseInstance>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_tsv_str(&text)
}

pub fn parse_tsv_str(text: &str) -> Result<Vec<DiscourseInstance>, CorpusError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::FieldCount {
                line: idx + 1,
                found: fields.len(),
            });
        }
        let tokens = |f: &str| -> Vec<String> {
            f.split_whitespace().map(|t| t.to_lowercase()).collect()
        };
        let arg1 = tokens(fields[1]);
        let arg2 = tokens(fields[2]);
        if arg1.is_empty() || arg2.is_empty() {
            return Err(CorpusError::EmptyArgument { line: idx + 1 });
        }
        out.push(DiscourseInstance {
            arg1,
            arg2,
            relation: fields[0].trim().to_lowercase(),
            y: Vec::new(),
        });
    }
    Ok(out)
}

/// One-vs-all binarization: `y = [1, 0]` for the target relation, `[0, 1]`
/// otherwise. Order is preserved. Returns the number of positives so callers
/// can warn when the target never occurs.
pub fn binarize(instances: &mut [DiscourseInstance], target: &str) -> usize {
    let target = target.to_lowercase();
    let mut positives = 0;
    for inst in instances.iter_mut() {
        if inst.relation == target {
            inst.y = vec![1.0, 0.0];
            positives += 1;
        } else {
            inst.y = vec![0.0, 1.0];
        }
    }
    positives
}

/// Oversamples the minority class (uniform draws with replacement, seeded)
/// until class counts are equal, keeps every original instance, and shuffles
/// the result with the same generator.
pub fn balance_resample(
    instances: Vec<DiscourseInstance>,
    seed: u64,
) -> Result<Vec<DiscourseInstance>, CorpusError> {
    let positives: Vec<usize> = (0..instances.len()).filter(|&i| instances[i].is_positive()).collect();
    let negatives: Vec<usize> = (0..instances.len()).filter(|&i| !instances[i].is_positive()).collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(CorpusError::EmptyClass {
            positives: positives.len(),
            negatives: negatives.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let minority = if positives.len() < negatives.len() { &positives } else { &negatives };
    let deficit = positives.len().abs_diff(negatives.len());

    let mut out = instances.clone();
    for _ in 0..deficit {
        let pick = minority[rng.random_range(0..minority.len())];
        out.push(instances[pick].clone());
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Binary confusion counts for a one-vs-all evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }
}

/// Precision, recall and F1, each defined as 0 when its denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        Prf::from_precision_recall(precision, recall)
    }

    /// F1 as the harmonic mean of precision and recall; 0 when both are 0.
    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores predicted labels against gold labels for one positive relation.
pub fn evaluate(predictions: &[String], golds: &[String], positive: &str) -> (ConfusionCounts, Prf) {
    assert_eq!(
        predictions.len(),
        golds.len(),
        "evaluate length mismatch: {} predictions vs {} golds",
        predictions.len(),
        golds.len()
    );
    let positive = positive.to_lowercase();
    let mut c = ConfusionCounts::default();
    for (pred, gold) in predictions.iter().zip(golds) {
        let p = pred.to_lowercase() == positive;
        let g = gold.to_lowercase() == positive;
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let prf = Prf::from_counts(&c);
    (c, prf)
}
