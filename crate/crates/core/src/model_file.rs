//! Binary model persistence. Layout, all little-endian:
//!
//! ```text
//! "SEMDER1"                      7-byte magic
//! d1 d2 d_a l |V|                5 × u32
//! vocabulary                     |V| × (u32 byte length + UTF-8 bytes)
//! target relation label          u32 byte length + UTF-8 bytes
//! parameters                     f64 × layout total, canonical block order
//! ```
//!
//! The parameter section uses the same flattening order as the optimizer
//! (`theta_l` rows by vocabulary index, then `w_rp, w_rk, b_r, w_p, w_m,
//! w_s, b_a`), so a file is exactly a header plus `flatten()`.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::embeddings::{EmbeddingTable, Vocabulary};
use crate::linalg::Matrix;
use crate::recognizer::{ModelDims, ModelParams, ParamLayout, RecognizerParams};
use crate::semantic::AttentionParams;

pub const MAGIC: &[u8; 7] = b"SEMDER1";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a model file (bad magic)")]
    BadMagic { path: String },
    #[error("{path}: file ends early while reading {context}")]
    Truncated { path: String, context: &'static str },
    #[error("{path}: {extra} trailing bytes after the parameter section")]
    TrailingBytes { path: String, extra: usize },
    #[error("{path}: invalid UTF-8 in string entry {index}")]
    BadString { path: String, index: usize },
    #[error("{path}: vocabulary word {word:?} repeated")]
    DuplicateWord { path: String, word: String },
    #[error("{path}: invalid dimension header (d1={d1}, d2={d2}, d_a={da}, l={l})")]
    BadDims { path: String, d1: u32, d2: u32, da: u32, l: u32 },
}

/// A deserialized model: the trainable parameters plus the relation the
/// model was trained one-vs-all against.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub params: ModelParams,
    pub target: String,
}

pub fn save_model(
    path: impl AsRef<Path>,
    params: &ModelParams,
    target: &str,
) -> Result<(), ModelFileError> {
    let path = path.as_ref();
    let vocab = params.embeddings.vocab();
    let layout = params.layout();
    let mut buf = Vec::with_capacity(32 + layout.total() * 8);
    buf.extend_from_slice(MAGIC);
    let dims = params.dims();
    for v in [dims.d1, dims.d2, dims.d_a, dims.l, vocab.len()] {
        buf.extend_from_slice(&u32::try_from(v).expect("dimension fits u32").to_le_bytes());
    }
    for word in vocab.words() {
        write_string(&mut buf, word);
    }
    write_string(&mut buf, target);
    for v in params.flatten() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_string(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&u32::try_from(s.len()).expect("string fits u32").to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel, ModelFileError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| ModelFileError::Io {
        path: display.clone(),
        source,
    })?;
    let mut r = Reader { buf: &bytes, pos: 0, path: &display };

    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(ModelFileError::BadMagic { path: display });
    }
    let d1 = r.u32("dimension header")?;
    let d2 = r.u32("dimension header")?;
    let da = r.u32("dimension header")?;
    let l = r.u32("dimension header")?;
    let vocab_size = r.u32("dimension header")?;
    if d1 == 0 || d2 == 0 || da == 0 || l == 0 {
        return Err(ModelFileError::BadDims { path: display, d1, d2, da, l });
    }
    let dims = ModelDims {
        d1: d1 as usize,
        d2: d2 as usize,
        d_a: da as usize,
        l: l as usize,
    };

    let mut vocab = Vocabulary::new();
    for i in 0..vocab_size as usize {
        let word = r.string(i)?;
        if vocab.contains(&word) {
            return Err(ModelFileError::DuplicateWord { path: display, word });
        }
        vocab.insert(word);
    }
    let target = r.string(vocab_size as usize)?;

    let layout = ParamLayout::new(dims, vocab.len());
    let theta = r.f64s(layout.total(), "parameter section")?;
    let consumed = r.pos;
    if consumed != bytes.len() {
        return Err(ModelFileError::TrailingBytes { path: display, extra: bytes.len() - consumed });
    }

    let mut params = ModelParams::new(
        EmbeddingTable::new(vocab.clone(), dims.d1, Matrix::zeros(vocab.len(), dims.d1), true),
        RecognizerParams::new(
            Matrix::zeros(dims.l, 6 * dims.d1),
            Matrix::zeros(dims.l, dims.d2),
            vec![0.0; dims.l],
        ),
        AttentionParams::new(
            Matrix::zeros(dims.d_a, 6 * dims.d1),
            Matrix::zeros(dims.d_a, dims.d2),
            Matrix::zeros(dims.d_a, dims.d_a),
            vec![0.0; dims.d_a],
        ),
    );
    params.assign_from_flat(&theta);
    Ok(SavedModel { params, target })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, context: &'static str) -> Result<&'a [u8], ModelFileError> {
        if self.pos + n > self.buf.len() {
            return Err(ModelFileError::Truncated { path: self.path.to_string(), context });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, context: &'static str) -> Result<u32, ModelFileError> {
        let b = self.take(4, context)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn string(&mut self, index: usize) -> Result<String, ModelFileError> {
        let len = self.u32("string length")? as usize;
        let b = self.take(len, "string bytes")?;
        String::from_utf8(b.to_vec())
            .map_err(|_| ModelFileError::BadString { path: self.path.to_string(), index })
    }

    fn f64s(&mut self, n: usize, context: &'static str) -> Result<Vec<f64>, ModelFileError> {
        let b = self.take(n * 8, context)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
