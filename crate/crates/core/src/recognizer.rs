//! Relation output layer and the pieces of the training objective: the
//! two-path linear scorer, cross-entropy, the bias-free L2 regularizer, and
//! the canonical flat parameter layout shared by the optimizer, the
//! gradient checker and the model file.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::embeddings::{init_trainable, EmbeddingError, EmbeddingTable, Vocabulary};
use crate::linalg::{softmax, Matrix};
use crate::semantic::AttentionParams;

/// Output-layer parameters: `w_rp` scores the surface vector, `w_rk` the
/// attended knowledge vector, `b_r` is the per-relation bias.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerParams {
    /// `l × 6*d1`
    pub w_rp: Matrix,
    /// `l × d2`
    pub w_rk: Matrix,
    /// `l`
    pub b_r: Vec<f64>,
}

impl RecognizerParams {
    pub fn new(w_rp: Matrix, w_rk: Matrix, b_r: Vec<f64>) -> Self {
        let l = w_rp.rows();
        assert_eq!(w_rk.rows(), l, "w_rk rows must equal relation count {}", l);
        assert_eq!(b_r.len(), l, "b_r length must equal relation count {}", l);
        RecognizerParams { w_rp, w_rk, b_r }
    }

    pub fn relations(&self) -> usize {
        self.b_r.len()
    }

    /// `w_rp·p + w_rk·p_k + b_r`.
    pub fn logits(&self, p: &[f64], p_k: &[f64]) -> Vec<f64> {
        let mut z = self.w_rp.matvec(p);
        let zk = self.w_rk.matvec(p_k);
        for ((zi, ki), bi) in z.iter_mut().zip(&zk).zip(&self.b_r) {
            *zi += ki + bi;
        }
        z
    }

    pub fn predict(&self, p: &[f64], p_k: &[f64]) -> Prediction {
        let logits = self.logits(p, p_k);
        let y_p = softmax(&logits);
        Prediction { logits, y_p }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    /// Softmaxed relation distribution.
    pub y_p: Vec<f64>,
}

impl Prediction {
    /// Index of the highest-probability relation; ties keep the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.y_p.len() {
            if self.y_p[i] > self.y_p[best] {
                best = i;
            }
        }
        best
    }
}

/// One instance's loss: `−Σ yⱼ ln(y_pⱼ)` with the prediction clamped at
/// 1e-300 so a saturated wrong answer yields a large finite loss, not inf.
/// `y` must be one-hot.
pub fn cross_entropy(y: &[f64], y_p: &[f64]) -> f64 {
    assert_eq!(y.len(), y_p.len(), "label and prediction length mismatch");
    assert!(
        y.iter().all(|&v| v == 0.0 || v == 1.0) && y.iter().sum::<f64>() == 1.0,
        "label vector must be one-hot, got {:?}",
        y
    );
    -y.iter()
        .zip(y_p)
        .map(|(&yi, &pi)| yi * pi.max(1e-300).ln())
        .sum::<f64>()
}

/// Per-block L2 strengths. The surface embeddings get a lighter touch than
/// the dense weight matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegWeights {
    pub lambda_l: f64,
    pub lambda_r: f64,
    pub lambda_m: f64,
}

impl Default for RegWeights {
    fn default() -> Self {
        RegWeights { lambda_l: 1e-5, lambda_r: 1e-4, lambda_m: 1e-4 }
    }
}

/// All trainable parameters. Field order mirrors the canonical flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Trainable surface embeddings, one `d1` row per vocabulary word.
    pub embeddings: EmbeddingTable,
    pub recognizer: RecognizerParams,
    pub attention: AttentionParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Surface embedding width.
    pub d1: usize,
    /// Memory vector width.
    pub d2: usize,
    /// Attention-space width.
    pub d_a: usize,
    /// Number of relations.
    pub l: usize,
}

/// A named contiguous run of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: &'static str,
    pub offset: usize,
    pub len: usize,
}

impl ParamBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Block table for the canonical flattening order:
/// `theta_l, w_rp, w_rk, b_r, w_p, w_m, w_s, b_a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub dims: ModelDims,
    pub vocab_size: usize,
    blocks: Vec<ParamBlock>,
}

impl ParamLayout {
    pub fn new(dims: ModelDims, vocab_size: usize) -> Self {
        let ModelDims { d1, d2, d_a, l } = dims;
        let sizes: [(&'static str, usize); 8] = [
            ("theta_l", vocab_size * d1),
            ("w_rp", l * 6 * d1),
            ("w_rk", l * d2),
            ("b_r", l),
            ("w_p", d_a * 6 * d1),
            ("w_m", d_a * d2),
            ("w_s", d_a * d_a),
            ("b_a", d_a),
        ];
        let mut blocks = Vec::with_capacity(sizes.len());
        let mut offset = 0;
        for (name, len) in sizes {
            blocks.push(ParamBlock { name, offset, len });
            offset += len;
        }
        ParamLayout { dims, vocab_size, blocks }
    }

    pub fn total(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len)
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Block containing a flat index; panics when out of range.
    pub fn block_of(&self, index: usize) -> &ParamBlock {
        self.blocks
            .iter()
            .find(|b| b.range().contains(&index))
            .unwrap_or_else(|| panic!("flat index {} beyond parameter vector", index))
    }
}

impl ModelParams {
    pub fn new(
        embeddings: EmbeddingTable,
        recognizer: RecognizerParams,
        attention: AttentionParams,
    ) -> Self {
        let params = ModelParams { embeddings, recognizer, attention };
        params.validate();
        params
    }

    fn validate(&self) {
        let ModelDims { d1, d2, d_a, l } = self.dims();
        assert!(self.embeddings.trainable(), "surface embeddings must be trainable");
        assert_eq!(self.recognizer.w_rp.cols(), 6 * d1, "w_rp width must be 6*d1");
        assert_eq!(self.recognizer.w_rk.rows(), l, "w_rk rows must equal relation count");
        assert_eq!(self.attention.w_p.cols(), 6 * d1, "w_p width must be 6*d1");
        assert_eq!(self.attention.w_m.cols(), d2, "w_m width must equal d2");
        assert_eq!(self.attention.d_a(), d_a, "attention width mismatch");
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            d1: self.embeddings.dim(),
            d2: self.recognizer.w_rk.cols(),
            d_a: self.attention.d_a(),
            l: self.recognizer.relations(),
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.dims(), self.embeddings.len())
    }

    /// Canonical flat view: `theta_l, w_rp, w_rk, b_r, w_p, w_m, w_s, b_a`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout().total());
        out.extend_from_slice(self.embeddings.as_slice());
        out.extend_from_slice(self.recognizer.w_rp.as_slice());
        out.extend_from_slice(self.recognizer.w_rk.as_slice());
        out.extend_from_slice(&self.recognizer.b_r);
        out.extend_from_slice(self.attention.w_p.as_slice());
        out.extend_from_slice(self.attention.w_m.as_slice());
        out.extend_from_slice(self.attention.w_s.as_slice());
        out.extend_from_slice(&self.attention.b_a);
        out
    }

    /// Writes a flat vector produced by [`flatten`](Self::flatten) back into
    /// the structured parameters.
    pub fn assign_from_flat(&mut self, theta: &[f64]) {
        let total = self.layout().total();
        assert_eq!(theta.len(), total, "flat vector has {} entries, expected {}", theta.len(), total);
        let mut off = 0;
        for dst in [
            self.embeddings.as_mut_slice(),
            self.recognizer.w_rp.as_mut_slice(),
            self.recognizer.w_rk.as_mut_slice(),
            &mut self.recognizer.b_r,
            self.attention.w_p.as_mut_slice(),
            self.attention.w_m.as_mut_slice(),
            self.attention.w_s.as_mut_slice(),
            &mut self.attention.b_a,
        ] {
            dst.copy_from_slice(&theta[off..off + dst.len()]);
            off += dst.len();
        }
        debug_assert_eq!(off, total);
    }
}

/// L2 penalty `Σ_blocks (λ/2)·‖block‖²`. The biases `b_r` and `b_a` are
/// deliberately left out.
pub fn regularizer(params: &ModelParams, reg: &RegWeights) -> f64 {
    let r = &params.recognizer;
    let a = &params.attention;
    0.5 * reg.lambda_l * params.embeddings.frobenius_sq()
        + 0.5 * reg.lambda_r * (r.w_rp.frobenius_sq() + r.w_rk.frobenius_sq())
        + 0.5 * reg.lambda_m * (a.w_p.frobenius_sq() + a.w_m.frobenius_sq() + a.w_s.frobenius_sq())
}

/// Fresh model: vocabulary words copy their pretrained surface vector when
/// one exists, everything else is drawn from N(0, 0.01²); biases start at
/// zero. Dense draws use an independent ChaCha stream so embedding and
/// weight initialization never overlap, and the whole thing is a pure
/// function of `seed`.
pub fn init_model(
    vocab: &Vocabulary,
    pretrained_surface: &EmbeddingTable,
    dims: ModelDims,
    seed: u64,
) -> Result<ModelParams, EmbeddingError> {
    let embeddings = init_trainable(vocab, pretrained_surface, dims.d1, seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let normal = Normal::new(0.0, 0.01).expect("valid sigma");
    let mut fill = |rows: usize, cols: usize| {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.as_mut_slice() {
            *v = normal.sample(&mut rng);
        }
        m
    };

    let w_rp = fill(dims.l, 6 * dims.d1);
    let w_rk = fill(dims.l, dims.d2);
    let w_p = fill(dims.d_a, 6 * dims.d1);
    let w_m = fill(dims.d_a, dims.d2);
    let w_s = fill(dims.d_a, dims.d_a);

    Ok(ModelParams::new(
        embeddings,
        RecognizerParams::new(w_rp, w_rk, vec![0.0; dims.l]),
        AttentionParams::new(w_p, w_m, w_s, vec![0.0; dims.d_a]),
    ))
}
