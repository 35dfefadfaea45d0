//! The training pass: a forward run that keeps every intermediate, the
//! hand-derived backward pass, batch objective/gradient assembly, and a
//! central-difference checker that audits the analytic gradient block by
//! block.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::DiscourseInstance;
use crate::embeddings::{build_memory, EmbeddingTable, MemoryMatrix};
use crate::linalg::{add_scaled, dot, norm, Matrix};
use crate::recognizer::{
    cross_entropy, regularizer, ModelDims, ModelParams, ParamLayout, Prediction, RegWeights,
};
use crate::semantic::{attend, Attention};
use crate::shallow::{encode_discourse, DiscourseEncoding, PooledArgument};

/// One instance's forward pass with everything the backward pass (or an
/// inspector) wants to look at.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub encoding: DiscourseEncoding,
    pub memory: MemoryMatrix,
    /// `None` when the discourse had no in-memory words.
    pub attention: Option<Attention>,
    /// `p_k`; all zeros when attention is `None`.
    pub knowledge: Vec<f64>,
    pub prediction: Prediction,
}

pub fn forward_trace(
    params: &ModelParams,
    memory_table: &EmbeddingTable,
    instance: &DiscourseInstance,
) -> ForwardTrace {
    let encoding = encode_discourse(instance, &params.embeddings);
    let memory = build_memory(instance, memory_table);
    let attention = attend(&params.attention, &encoding.p, &memory);
    let knowledge = match &attention {
        Some(att) => att.knowledge.clone(),
        None => vec![0.0; params.dims().d2],
    };
    let prediction = params.recognizer.predict(&encoding.p, &knowledge);
    ForwardTrace { encoding, memory, attention, knowledge, prediction }
}

/// Convenience wrapper when only the relation distribution is wanted.
pub fn predict(
    params: &ModelParams,
    memory_table: &EmbeddingTable,
    instance: &DiscourseInstance,
) -> Prediction {
    forward_trace(params, memory_table, instance).prediction
}

/// Per-instance loss gradients, one field per parameter block. The
/// embedding part is sparse: only vocabulary rows actually touched by the
/// instance appear.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub embeddings: BTreeMap<usize, Vec<f64>>,
    pub w_rp: Matrix,
    pub w_rk: Matrix,
    pub b_r: Vec<f64>,
    pub w_p: Matrix,
    pub w_m: Matrix,
    pub w_s: Matrix,
    pub b_a: Vec<f64>,
}

impl GradientSet {
    pub fn zeros(dims: &ModelDims) -> Self {
        GradientSet {
            embeddings: BTreeMap::new(),
            w_rp: Matrix::zeros(dims.l, 6 * dims.d1),
            w_rk: Matrix::zeros(dims.l, dims.d2),
            b_r: vec![0.0; dims.l],
            w_p: Matrix::zeros(dims.d_a, 6 * dims.d1),
            w_m: Matrix::zeros(dims.d_a, dims.d2),
            w_s: Matrix::zeros(dims.d_a, dims.d_a),
            b_a: vec![0.0; dims.d_a],
        }
    }

    /// Adds `scale · self` into a flat gradient laid out by `layout`.
    pub fn add_into_flat(&self, layout: &ParamLayout, out: &mut [f64], scale: f64) {
        assert_eq!(out.len(), layout.total(), "flat gradient length mismatch");
        let d1 = layout.dims.d1;
        let tl = layout.block("theta_l").expect("layout has theta_l");
        for (&vidx, row) in &self.embeddings {
            let off = tl.offset + vidx * d1;
            add_scaled(&mut out[off..off + d1], scale, row);
        }
        let dense: [(&str, &[f64]); 7] = [
            ("w_rp", self.w_rp.as_slice()),
            ("w_rk", self.w_rk.as_slice()),
            ("b_r", &self.b_r),
            ("w_p", self.w_p.as_slice()),
            ("w_m", self.w_m.as_slice()),
            ("w_s", self.w_s.as_slice()),
            ("b_a", &self.b_a),
        ];
        for (name, data) in dense {
            let b = layout.block(name).expect("layout has all dense blocks");
            add_scaled(&mut out[b.range()], scale, data);
        }
    }
}

/// Routes a pooled argument's gradient back onto the embedding rows it
/// read: the average path spreads `1/n` to every position, the max/min
/// paths send everything to the recorded winning position.
fn pool_backward(
    pooled: &PooledArgument,
    dc: &[f64],
    d1: usize,
    emb_grad: &mut BTreeMap<usize, Vec<f64>>,
) {
    let n = pooled.token_indices.len();
    assert_eq!(dc.len(), 3 * d1, "pooled gradient width mismatch");
    let mut dx = vec![0.0; n * d1]; // per token *position*, then scattered
    for j in 0..d1 {
        let davg = dc[j] / n as f64;
        for pos in 0..n {
            dx[pos * d1 + j] += davg;
        }
        dx[pooled.max_source[j] * d1 + j] += dc[d1 + j];
        dx[pooled.min_source[j] * d1 + j] += dc[2 * d1 + j];
    }
    for (pos, &vidx) in pooled.token_indices.iter().enumerate() {
        let row = emb_grad.entry(vidx).or_insert_with(|| vec![0.0; d1]);
        add_scaled(row, 1.0, &dx[pos * d1..(pos + 1) * d1]);
    }
}

/// Gradient of one instance's cross-entropy with respect to every
/// parameter block, evaluated at the trace's forward state.
pub fn backward(params: &ModelParams, trace: &ForwardTrace, y: &[f64]) -> GradientSet {
    let dims = params.dims();
    let mut g = GradientSet::zeros(&dims);

    let y_p = &trace.prediction.y_p;
    assert_eq!(y.len(), y_p.len(), "label width must match relation count");
    // softmax + cross-entropy collapse to a plain residual
    let dz: Vec<f64> = y_p.iter().zip(y).map(|(p, t)| p - t).collect();

    let p = &trace.encoding.p;
    let p_k = &trace.knowledge;
    for (i, &dzi) in dz.iter().enumerate() {
        add_scaled(g.w_rp.row_mut(i), dzi, p);
        add_scaled(g.w_rk.row_mut(i), dzi, p_k);
        g.b_r[i] += dzi;
    }
    let mut dp = params.recognizer.w_rp.tr_matvec(&dz);

    if let Some(att) = &trace.attention {
        let m = trace.memory.len();
        let dp_k = params.recognizer.w_rk.tr_matvec(&dz);
        // p_k = Σ αⱼ Mⱼ, memory rows fixed ⇒ gradient flows only into α
        let dalpha: Vec<f64> =
            (0..m).map(|j| dot(trace.memory.rows.row(j), &dp_k)).collect();
        let mixed: f64 = att.weights.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        let ds: Vec<f64> =
            att.weights.iter().zip(&dalpha).map(|(a, d)| a * (d - mixed)).collect();

        // sᵢ = p_aᵀ W_s M_aᵢ
        let p_a = &att.projected_discourse;
        let left = params.attention.w_s.tr_matvec(p_a); // W_sᵀ p_a
        let mut ds_ma = vec![0.0; dims.d_a]; // Σᵢ dsᵢ · M_aᵢ
        let mut da_m = vec![0.0; dims.d_a];
        for i in 0..m {
            let ma_i = att.projected_memory.row(i);
            let m_i = trace.memory.rows.row(i);
            g.w_s.add_outer(ds[i], p_a, ma_i);
            for k in 0..dims.d_a {
                ds_ma[k] += ds[i] * ma_i[k];
                // through the row's tanh projection
                da_m[k] = ds[i] * left[k] * (1.0 - ma_i[k] * ma_i[k]);
                g.b_a[k] += da_m[k];
            }
            g.w_m.add_outer(1.0, &da_m, m_i);
        }

        // through the discourse projection's tanh
        let dp_a = params.attention.w_s.matvec(&ds_ma);
        let mut da_p = vec![0.0; dims.d_a];
        for k in 0..dims.d_a {
            da_p[k] = dp_a[k] * (1.0 - p_a[k] * p_a[k]);
            g.b_a[k] += da_p[k];
        }
        g.w_p.add_outer(1.0, &da_p, p);
        let dp_att = params.attention.w_p.tr_matvec(&da_p);
        add_scaled(&mut dp, 1.0, &dp_att);
    }

    // through p = tanh(concat)/‖tanh(concat)‖; the all-zero guard case has
    // a pinned zero gradient
    let concat = &trace.encoding.concat;
    let t: Vec<f64> = concat.iter().map(|v| v.tanh()).collect();
    let r = norm(&t);
    let dconcat: Vec<f64> = if r < 1e-12 {
        vec![0.0; concat.len()]
    } else {
        let pd = dot(p, &dp);
        t.iter()
            .zip(p.iter().zip(&dp))
            .map(|(ti, (pi, dpi))| ((dpi - pi * pd) / r) * (1.0 - ti * ti))
            .collect()
    };

    let d1 = dims.d1;
    pool_backward(&trace.encoding.arg1, &dconcat[..3 * d1], d1, &mut g.embeddings);
    pool_backward(&trace.encoding.arg2, &dconcat[3 * d1..], d1, &mut g.embeddings);
    g
}

/// Mean cross-entropy over the batch plus the L2 penalty.
pub fn batch_objective(
    params: &ModelParams,
    memory_table: &EmbeddingTable,
    instances: &[DiscourseInstance],
    reg: &RegWeights,
) -> f64 {
    assert!(!instances.is_empty(), "cannot evaluate an empty batch");
    let mut loss = 0.0;
    for inst in instances {
        let trace = forward_trace(params, memory_table, inst);
        loss += cross_entropy(&inst.y, &trace.prediction.y_p);
    }
    loss / instances.len() as f64 + regularizer(params, reg)
}

/// Objective value and its full flat gradient:
/// `J = (1/T) Σ E + R(θ)`, `∇J = (1/T) Σ ∇E + λ·θ` per block (biases get
/// no penalty term).
pub fn batch_gradient(
    params: &ModelParams,
    memory_table: &EmbeddingTable,
    instances: &[DiscourseInstance],
    reg: &RegWeights,
) -> (f64, Vec<f64>) {
    assert!(!instances.is_empty(), "cannot take a gradient over an empty batch");
    let layout = params.layout();
    let mut grad = vec![0.0; layout.total()];
    let mut loss = 0.0;
    let t = instances.len() as f64;
    for inst in instances {
        let trace = forward_trace(params, memory_table, inst);
        loss += cross_entropy(&inst.y, &trace.prediction.y_p);
        backward(params, &trace, &inst.y).add_into_flat(&layout, &mut grad, 1.0 / t);
    }
    let j = loss / t + regularizer(params, reg);

    let theta = params.flatten();
    let penalized: [(&str, f64); 6] = [
        ("theta_l", reg.lambda_l),
        ("w_rp", reg.lambda_r),
        ("w_rk", reg.lambda_r),
        ("w_p", reg.lambda_m),
        ("w_m", reg.lambda_m),
        ("w_s", reg.lambda_m),
    ];
    for (name, lambda) in penalized {
        let b = layout.block(name).expect("layout has all penalized blocks");
        for i in b.range() {
            grad[i] += lambda * theta[i];
        }
    }
    (j, grad)
}

/// Per-block outcome of a finite-difference audit.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub name: &'static str,
    /// Scalars probed in this block.
    pub checked: usize,
    pub max_rel_err: f64,
    /// Flat index, analytic and numeric value at the worst scalar.
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst_block(&self) -> &BlockCheck {
        self.blocks
            .iter()
            .max_by(|a, b| a.max_rel_err.partial_cmp(&b.max_rel_err).expect("finite errors"))
            .expect("at least one block")
    }
}

/// Budget above which the checker samples scalars instead of probing all
/// of them. Sampling is seeded and stratified so every block is covered.
const FULL_CHECK_LIMIT: usize = 5000;

/// Audits the analytic batch gradient against central differences:
/// `(J(θ+εeᵢ) − J(θ−εeᵢ)) / 2ε`, relative error floored at 1e-8 scale.
/// Pass all-zero `reg` weights to audit the bare loss gradient.
/// `corrupt_block` flips the sign of one block's analytic gradient so the
/// checker's failure path can itself be tested.
pub fn grad_check(
    params: &ModelParams,
    memory_table: &EmbeddingTable,
    instances: &[DiscourseInstance],
    reg: &RegWeights,
    eps: f64,
    tolerance: f64,
    subsample_seed: u64,
    corrupt_block: Option<&str>,
) -> GradCheckReport {
    assert!(eps > 0.0, "step size must be positive");
    let layout = params.layout();
    let theta = params.flatten();
    let (_, mut analytic) = batch_gradient(params, memory_table, instances, reg);
    if let Some(name) = corrupt_block {
        let b = layout
            .block(name)
            .unwrap_or_else(|| panic!("unknown parameter block {:?}", name));
        for i in b.range() {
            analytic[i] = -analytic[i];
        }
    }

    let total = layout.total();
    let mut rng = ChaCha8Rng::seed_from_u64(subsample_seed);
    let mut scratch = params.clone();
    let mut probe = theta.clone();
    let mut blocks = Vec::new();

    for block in layout.blocks() {
        if block.len == 0 {
            continue;
        }
        let indices: Vec<usize> = if total <= FULL_CHECK_LIMIT {
            block.range().collect()
        } else {
            let want = ((FULL_CHECK_LIMIT * block.len + total - 1) / total).max(1).min(block.len);
            let mut all: Vec<usize> = block.range().collect();
            all.shuffle(&mut rng);
            all.truncate(want);
            all.sort_unstable();
            all
        };

        let mut check = BlockCheck {
            name: block.name,
            checked: indices.len(),
            max_rel_err: 0.0,
            worst_index: indices[0],
            analytic_at_worst: analytic[indices[0]],
            numeric_at_worst: 0.0,
        };
        for &i in &indices {
            probe[i] = theta[i] + eps;
            scratch.assign_from_flat(&probe);
            let j_plus = batch_objective(&scratch, memory_table, instances, reg);
            probe[i] = theta[i] - eps;
            scratch.assign_from_flat(&probe);
            let j_minus = batch_objective(&scratch, memory_table, instances, reg);
            probe[i] = theta[i];

            let numeric = (j_plus - j_minus) / (2.0 * eps);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > check.max_rel_err {
                check.max_rel_err = rel;
                check.worst_index = i;
                check.analytic_at_worst = a;
                check.numeric_at_worst = numeric;
            }
        }
        blocks.push(check);
    }

    let max_rel_err = blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max);
    GradCheckReport { passed: max_rel_err <= tolerance, blocks, max_rel_err, tolerance }
}
