//! Attention over the semantic memory: projects the discourse vector and
//! the memory rows into a shared attention space, scores each row
//! bilinearly, and mixes the *raw* memory rows by the softmaxed scores.

use crate::embeddings::MemoryMatrix;
use crate::linalg::{dot, softmax, Matrix};

/// Attention-side parameters. `w_p` maps the `6*d1` discourse vector and
/// `w_m` maps a `d2` memory row into the shared `d_a` space; both
/// projections add the same bias `b_a`. `w_s` is the `d_a × d_a` bilinear
/// scoring form.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_p: Matrix,
    pub w_m: Matrix,
    pub w_s: Matrix,
    pub b_a: Vec<f64>,
}

impl AttentionParams {
    pub fn new(w_p: Matrix, w_m: Matrix, w_s: Matrix, b_a: Vec<f64>) -> Self {
        let d_a = w_p.rows();
        assert_eq!(w_m.rows(), d_a, "w_m rows must equal attention width {}", d_a);
        assert_eq!(w_s.rows(), d_a, "w_s must be {0}x{0}", d_a);
        assert_eq!(w_s.cols(), d_a, "w_s must be {0}x{0}", d_a);
        assert_eq!(b_a.len(), d_a, "b_a length must equal attention width {}", d_a);
        AttentionParams { w_p, w_m, w_s, b_a }
    }

    pub fn d_a(&self) -> usize {
        self.w_p.rows()
    }

    /// `tanh(w_p · p + b_a)`.
    pub fn project_discourse(&self, p: &[f64]) -> Vec<f64> {
        let mut v = self.w_p.matvec(p);
        for (x, b) in v.iter_mut().zip(&self.b_a) {
            *x = (*x + b).tanh();
        }
        v
    }

    /// Row-wise `tanh(w_m · Mᵢ + b_a)`, giving an `m × d_a` matrix.
    pub fn project_memory(&self, memory: &MemoryMatrix) -> Matrix {
        let mut out = Matrix::zeros(memory.len(), self.d_a());
        for i in 0..memory.len() {
            let mut v = self.w_m.matvec(memory.rows.row(i));
            for (x, b) in v.iter_mut().zip(&self.b_a) {
                *x = (*x + b).tanh();
            }
            out.row_mut(i).copy_from_slice(&v);
        }
        out
    }

    /// Bilinear scores `sᵢ = p_aᵀ · w_s · M_aᵢ`.
    pub fn scores(&self, p_a: &[f64], projected_memory: &Matrix) -> Vec<f64> {
        let left = self.w_s.tr_matvec(p_a); // w_sᵀ p_a, so sᵢ = ⟨left, M_aᵢ⟩
        (0..projected_memory.rows())
            .map(|i| dot(&left, projected_memory.row(i)))
            .collect()
    }
}

/// Everything the attention step produced, kept for the backward pass and
/// for inspection output.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// `p_a`, the projected discourse vector.
    pub projected_discourse: Vec<f64>,
    /// `M_a`, the projected memory rows.
    pub projected_memory: Matrix,
    /// Pre-softmax scores, one per memory row.
    pub scores: Vec<f64>,
    /// Softmaxed scores; sums to one.
    pub weights: Vec<f64>,
    /// `p_k`, the weight-mixed *raw* memory rows, in `d2`.
    pub knowledge: Vec<f64>,
}

/// Runs attention for one discourse. Returns `None` when the memory is
/// empty; the caller substitutes a zero knowledge vector.
pub fn attend(params: &AttentionParams, p: &[f64], memory: &MemoryMatrix) -> Option<Attention> {
    if memory.is_empty() {
        return None;
    }
    assert_eq!(p.len(), params.w_p.cols(), "discourse vector width mismatch");
    assert_eq!(memory.dim(), params.w_m.cols(), "memory row width mismatch");
    let p_a = params.project_discourse(p);
    let m_a = params.project_memory(memory);
    let s = params.scores(&p_a, &m_a);
    let alpha = softmax(&s);
    let knowledge = memory.rows.tr_matvec(&alpha); // Σ αⱼ · Mⱼ
    Some(Attention {
        projected_discourse: p_a,
        projected_memory: m_a,
        scores: s,
        weights: alpha,
        knowledge,
    })
}

/// The `k` most-attended memory words, weight descending. Exact weight
/// ties keep memory order (the sort is stable).
pub fn top_attended(memory: &MemoryMatrix, attention: &Attention, k: usize) -> Vec<(String, f64)> {
    let mut order: Vec<usize> = (0..memory.len()).collect();
    order.sort_by(|&a, &b| {
        attention.weights[b]
            .partial_cmp(&attention.weights[a])
            .expect("attention weights are finite")
    });
    order
        .into_iter()
        .take(k)
        .map(|i| (memory.words[i].clone(), attention.weights[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::MemoryMatrix;
    use proptest::prelude::*;

    fn memory_from_rows(rows: &[Vec<f64>]) -> MemoryMatrix {
        MemoryMatrix {
            words: (0..rows.len()).map(|i| format!("w{}", i)).collect(),
            rows: Matrix::from_rows(rows),
            dropped_words: 0,
        }
    }

    fn empty_memory(d2: usize) -> MemoryMatrix {
        MemoryMatrix { words: vec![], rows: Matrix::zeros(0, d2), dropped_words: 0 }
    }

    #[test]
    fn discourse_projection_applies_bias_then_tanh() {
        let params = AttentionParams::new(
            Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 2.0]),
            Matrix::zeros(2, 3),
            Matrix::identity(2),
            vec![0.5, -1.0],
        );
        let p_a = params.project_discourse(&[0.25, 0.5]);
        assert!((p_a[0] - (0.75f64).tanh()).abs() < 1e-15);
        assert!((p_a[1] - (0.0f64).tanh()).abs() < 1e-15);
    }

    #[test]
    fn memory_projection_shares_the_bias() {
        let params = AttentionParams::new(
            Matrix::zeros(2, 4),
            Matrix::from_vec(2, 1, vec![1.0, -1.0]),
            Matrix::identity(2),
            vec![0.3, 0.3],
        );
        let memory = memory_from_rows(&[vec![2.0], vec![0.0]]);
        let m_a = params.project_memory(&memory);
        assert!((m_a[(0, 0)] - (2.3f64).tanh()).abs() < 1e-15);
        assert!((m_a[(0, 1)] - (-1.7f64).tanh()).abs() < 1e-15);
        assert!((m_a[(1, 0)] - (0.3f64).tanh()).abs() < 1e-15);
        assert!((m_a[(1, 1)] - (0.3f64).tanh()).abs() < 1e-15);
    }

    #[test]
    fn identity_form_scores_are_plain_dot_products() {
        let params = AttentionParams::new(
            Matrix::zeros(2, 4),
            Matrix::zeros(2, 3),
            Matrix::identity(2),
            vec![0.0, 0.0],
        );
        let m_a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]);
        let s = params.scores(&[2.0, 4.0], &m_a);
        assert_eq!(s, vec![2.0, 3.0]);
    }

    #[test]
    fn bilinear_form_matches_hand_expansion() {
        // s = p_aᵀ W M_a with W = [[1, 2], [3, 4]], p_a = [1, -1], row = [2, 5]
        // left = Wᵀ p_a = [1-3, 2-4] = [-2, -2]; s = -2*2 + -2*5 = -14
        let params = AttentionParams::new(
            Matrix::zeros(2, 4),
            Matrix::zeros(2, 3),
            Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]),
            vec![0.0, 0.0],
        );
        let m_a = Matrix::from_rows(&[vec![2.0, 5.0]]);
        assert_eq!(params.scores(&[1.0, -1.0], &m_a), vec![-14.0]);
    }

    #[test]
    fn empty_memory_yields_none() {
        let params = AttentionParams::new(
            Matrix::zeros(2, 4),
            Matrix::zeros(2, 3),
            Matrix::identity(2),
            vec![0.0, 0.0],
        );
        assert!(attend(&params, &[0.0; 4], &empty_memory(3)).is_none());
    }

    #[test]
    fn zero_projection_attends_uniformly() {
        // W_p = 0 ⇒ p_a = tanh(0) = 0 ⇒ all scores 0 ⇒ uniform weights,
        // and the knowledge vector is the plain row average.
        let params = AttentionParams::new(
            Matrix::zeros(2, 4),
            Matrix::from_vec(2, 2, vec![0.7, -0.3, 0.1, 0.9]),
            Matrix::identity(2),
            vec![0.0, 0.0],
        );
        let memory = memory_from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]);
        let att = attend(&params, &[3.0; 4], &memory).unwrap();
        for w in &att.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((att.knowledge[0] - 1.0).abs() < 1e-15);
        assert!((att.knowledge[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_row_memory_gets_all_the_weight() {
        let params = AttentionParams::new(
            Matrix::from_vec(2, 2, vec![0.5, 0.1, -0.2, 0.4]),
            Matrix::from_vec(2, 3, vec![0.3; 6]),
            Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.5, 1.0]),
            vec![0.1, -0.1],
        );
        let memory = memory_from_rows(&[vec![0.2, -0.4, 0.6]]);
        let att = attend(&params, &[0.5, -0.5], &memory).unwrap();
        assert_eq!(att.weights, vec![1.0]);
        assert_eq!(att.knowledge, vec![0.2, -0.4, 0.6]);
    }

    #[test]
    fn knowledge_mixes_raw_rows_not_projected_ones() {
        // d2 = 3 but d_a = 1: a projected mix could never live in R³.
        let params = AttentionParams::new(
            Matrix::zeros(1, 2),
            Matrix::zeros(1, 3),
            Matrix::identity(1),
            vec![0.0],
        );
        let memory = memory_from_rows(&[vec![4.0, 0.0, 2.0], vec![0.0, 4.0, 2.0]]);
        let att = attend(&params, &[1.0, 1.0], &memory).unwrap();
        assert_eq!(att.knowledge.len(), 3);
        assert!((att.knowledge[0] - 2.0).abs() < 1e-15);
        assert!((att.knowledge[1] - 2.0).abs() < 1e-15);
        assert!((att.knowledge[2] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn top_attended_sorts_descending_with_stable_ties() {
        let memory = memory_from_rows(&[vec![0.0], vec![0.0], vec![0.0], vec![0.0]]);
        let att = Attention {
            projected_discourse: vec![],
            projected_memory: Matrix::zeros(4, 1),
            scores: vec![0.0; 4],
            weights: vec![0.2, 0.3, 0.2, 0.3],
            knowledge: vec![0.0],
        };
        let top = top_attended(&memory, &att, 3);
        let names: Vec<&str> = top.iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(names, vec!["w1", "w3", "w0"]);
        assert_eq!(top[0].1, 0.3);
    }

    #[test]
    fn top_attended_caps_at_memory_size() {
        let memory = memory_from_rows(&[vec![0.0]]);
        let att = Attention {
            projected_discourse: vec![],
            projected_memory: Matrix::zeros(1, 1),
            scores: vec![0.0],
            weights: vec![1.0],
            knowledge: vec![0.0],
        };
        assert_eq!(top_attended(&memory, &att, 10).len(), 1);
    }

    proptest! {
        #[test]
        fn weights_form_a_distribution_and_knowledge_stays_in_hull(
            rows in proptest::collection::vec(
                proptest::collection::vec(-3.0f64..3.0, 2), 1..6),
            p in proptest::collection::vec(-2.0f64..2.0, 3),
            seed_vals in proptest::collection::vec(-0.8f64..0.8, 2 * 3 + 2 * 2 + 2 * 2 + 2),
        ) {
            let mut it = seed_vals.into_iter();
            let mut take = |n: usize| -> Vec<f64> { (0..n).map(|_| it.next().unwrap()).collect() };
            let params = AttentionParams::new(
                Matrix::from_vec(2, 3, take(6)),
                Matrix::from_vec(2, 2, take(4)),
                Matrix::from_vec(2, 2, take(4)),
                take(2),
            );
            let memory = memory_from_rows(&rows);
            let att = attend(&params, &p, &memory).unwrap();
            let total: f64 = att.weights.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(att.weights.iter().all(|&w| w > 0.0));
            // Convex hull membership, coordinate-wise interval check.
            for j in 0..2 {
                let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(att.knowledge[j] >= lo - 1e-9 && att.knowledge[j] <= hi + 1e-9);
            }
        }
    }
}
