//! Word-embedding tables: the word2vec text loader, the trainable table that
//! the optimizer updates, and the fixed memory table that per-discourse
//! memory matrices are copied out of.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::corpus::DiscourseInstance;
use crate::linalg::Matrix;

/// Dense bidirectional word ↔ index map. Indices are assigned in insertion
/// order and stay stable for the lifetime of the vocabulary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary::default()
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary::new();
        for w in words {
            v.insert(w.into());
        }
        v
    }

    /// Inserts a word, returning its index; existing words keep theirs.
    pub fn insert(&mut self, word: String) -> usize {
        if let Some(&i) = self.index.get(&word) {
            return i;
        }
        let i = self.words.len();
        self.index.insert(word.clone(), i);
        self.words.push(word);
        i
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }
}

/// A word → vector table. One fixed instance serves as the semantic memory,
/// one trainable instance is the surface-embedding parameter block.
///
/// Vectors are stored one per row in vocabulary order, which is also the
/// serialization order in the model file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    dim: usize,
    vectors: Matrix,
    trainable: bool,
}

/// Reserved vocabulary entry that unseen words map to at prediction time.
pub const UNKNOWN_TOKEN: &str = "<unk>";

impl EmbeddingTable {
    pub fn new(vocab: Vocabulary, dim: usize, vectors: Matrix, trainable: bool) -> Self {
        assert_eq!(vectors.rows(), vocab.len(), "one vector row per vocabulary word");
        assert_eq!(vectors.cols(), dim, "vector width must equal dim");
        EmbeddingTable { vocab, dim, vectors, trainable }
    }

    pub fn empty(dim: usize, trainable: bool) -> Self {
        EmbeddingTable {
            vocab: Vocabulary::new(),
            dim,
            vectors: Matrix::zeros(0, dim),
            trainable,
        }
    }

    /// Builds a table from (word, vector) pairs, first occurrence winning.
    pub fn from_entries<'a, I>(dim: usize, entries: I, trainable: bool) -> Self
    where
        I: IntoIterator<Item = (&'a str, Vec<f64>)>,
    {
        let mut vocab = Vocabulary::new();
        let mut rows = Vec::new();
        for (word, vec) in entries {
            assert_eq!(vec.len(), dim, "vector for {:?} has length {}, expected {}", word, vec.len(), dim);
            if !vocab.contains(word) {
                vocab.insert(word.to_string());
                rows.push(vec);
            }
        }
        let vectors = Matrix::from_rows(&rows);
        EmbeddingTable::new(vocab, dim, if rows.is_empty() { Matrix::zeros(0, dim) } else { vectors }, trainable)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn vector(&self, idx: usize) -> &[f64] {
        self.vectors.row(idx)
    }

    pub fn vector_mut(&mut self, idx: usize) -> &mut [f64] {
        self.vectors.row_mut(idx)
    }

    pub fn lookup(&self, word: &str) -> Option<&[f64]> {
        self.vocab.index_of(word).map(|i| self.vectors.row(i))
    }

    /// Index of `word`, falling back to the reserved unknown entry.
    /// Panics when the word is absent and no unknown entry exists.
    pub fn index_or_unknown(&self, word: &str) -> usize {
        self.vocab
            .index_of(word)
            .or_else(|| self.vocab.index_of(UNKNOWN_TOKEN))
            .unwrap_or_else(|| panic!("word {:?} not in vocabulary and no {:?} entry", word, UNKNOWN_TOKEN))
    }

    /// Flat view of all vectors, vocabulary order.
    pub fn as_slice(&self) -> &[f64] {
        self.vectors.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.vectors.as_mut_slice()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.vectors.frobenius_sq()
    }
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header {header:?}: expected \"<count> <dim>\"")]
    MalformedHeader { header: String },
    #[error("line {line}: expected {expected} vector values, found {found}")]
    RowLength { line: usize, expected: usize, found: usize },
    #[error("line {line}: cannot parse {token:?} as a number")]
    BadNumber { line: usize, token: String },
    #[error("requested dimension {requested} conflicts with pretrained dimension {pretrained}")]
    DimensionConflict { requested: usize, pretrained: usize },
}

/// Loader statistics worth surfacing as diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    /// Words that appeared more than once; first occurrence kept.
    pub duplicate_words: usize,
}

/// Reads a word2vec text-format file: a `<count> <dim>` header followed by
/// one `<word> <v1> … <vdim>` line per word. Duplicate words keep their
/// first vector and are counted in the returned stats.
pub fn load_word2vec_text(path: impl AsRef<Path>) -> Result<(EmbeddingTable, LoadStats), EmbeddingError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let header = match lines.next() {
        Some(Ok(h)) => h,
        Some(Err(source)) => {
            return Err(EmbeddingError::Io { path: path.display().to_string(), source })
        }
        None => return Err(EmbeddingError::MalformedHeader { header: String::new() }),
    };
    let mut parts = header.split_whitespace();
    let count: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| EmbeddingError::MalformedHeader { header: header.clone() })?;
    let dim: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| EmbeddingError::MalformedHeader { header: header.clone() })?;
    if parts.next().is_some() || dim == 0 {
        return Err(EmbeddingError::MalformedHeader { header });
    }

    let mut vocab = Vocabulary::new();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut stats = LoadStats::default();

    for (i, line) in lines.enumerate() {
        let line_no = i + 2; // 1-based, after the header
        let line = line.map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-blank line has a first field");
        let mut vec = Vec::with_capacity(dim);
        for token in fields {
            let v: f64 = token.parse().map_err(|_| EmbeddingError::BadNumber {
                line: line_no,
                token: token.to_string(),
            })?;
            vec.push(v);
        }
        if vec.len() != dim {
            return Err(EmbeddingError::RowLength {
                line: line_no,
                expected: dim,
                found: vec.len(),
            });
        }
        if vocab.contains(word) {
            stats.duplicate_words += 1;
            continue;
        }
        vocab.insert(word.to_string());
        rows.push(vec);
    }

    let vectors = if rows.is_empty() { Matrix::zeros(0, dim) } else { Matrix::from_rows(&rows) };
    Ok((EmbeddingTable::new(vocab, dim, vectors, false), stats))
}

/// Builds the trainable table: every vocabulary word copies its pretrained
/// vector when one exists, and is otherwise drawn from N(0, 0.01²) with a
/// generator seeded by `seed`. Same seed, same table, bit for bit. Uses a
/// dedicated ChaCha stream so the draws are independent of every other
/// consumer of the same user seed.
pub fn init_trainable(
    vocab: &Vocabulary,
    pretrained: &EmbeddingTable,
    d1: usize,
    seed: u64,
) -> Result<EmbeddingTable, EmbeddingError> {
    let covered = vocab.words().iter().any(|w| pretrained.lookup(w).is_some());
    if covered && pretrained.dim() != d1 {
        return Err(EmbeddingError::DimensionConflict {
            requested: d1,
            pretrained: pretrained.dim(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let normal = Normal::new(0.0, 0.01).expect("valid sigma");
    let mut vectors = Matrix::zeros(vocab.len(), d1);
    for (i, word) in vocab.words().iter().enumerate() {
        let row = vectors.row_mut(i);
        match pretrained.lookup(word) {
            Some(v) => row.copy_from_slice(v),
            None => {
                for x in row.iter_mut() {
                    *x = normal.sample(&mut rng);
                }
            }
        }
    }
    Ok(EmbeddingTable::new(vocab.clone(), d1, vectors, true))
}

/// The per-discourse memory: one row per distinct in-memory word of the
/// discourse, rows copied verbatim from the memory table.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryMatrix {
    /// Surface words aligned to rows, pairwise distinct.
    pub words: Vec<String>,
    /// m × d2; rows are exact copies of memory-table vectors.
    pub rows: Matrix,
    /// Distinct discourse word types absent from the memory table.
    pub dropped_words: usize,
}

impl MemoryMatrix {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }
}

/// Collects the distinct tokens of Arg1 then Arg2 in first-occurrence order,
/// keeps those present in the memory table, and copies their vectors into
/// rows. `m = 0` is a legal outcome.
pub fn build_memory(instance: &DiscourseInstance, memory: &EmbeddingTable) -> MemoryMatrix {
    let mut words: Vec<String> = Vec::new();
    let mut dropped: Vec<&str> = Vec::new();
    let mut row_data: Vec<Vec<f64>> = Vec::new();
    for token in instance.tokens() {
        if words.iter().any(|w| w == token) || dropped.contains(&token) {
            continue;
        }
        match memory.lookup(token) {
            Some(v) => {
                words.push(token.to_string());
                row_data.push(v.to_vec());
            }
            None => dropped.push(token),
        }
    }
    let rows = if row_data.is_empty() {
        Matrix::zeros(0, memory.dim())
    } else {
        Matrix::from_rows(&row_data)
    };
    MemoryMatrix {
        words,
        rows,
        dropped_words: dropped.len(),
    }
}
