//! Limited-memory BFGS with a strong-Wolfe line search. Works on flat
//! parameter vectors through an objective-and-gradient callback; the run
//! report carries the per-iteration trail for logging and audits.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::linalg::{add_scaled, dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    /// Curvature pairs kept; 0 degrades to gradient descent with Wolfe search.
    pub history_size: usize,
    pub max_iterations: usize,
    /// Convergence test: `‖g‖ / max(1, ‖θ‖) ≤ grad_tolerance`.
    pub grad_tolerance: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_search_steps: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history_size: 10,
            max_iterations: 500,
            grad_tolerance: 1e-5,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search_steps: 40,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) {
        assert!(self.max_iterations > 0, "max_iterations must be positive");
        assert!(
            0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0,
            "Wolfe constants must satisfy 0 < c1 < c2 < 1, got c1={} c2={}",
            self.wolfe_c1,
            self.wolfe_c2
        );
        assert!(self.grad_tolerance >= 0.0, "grad_tolerance must be nonnegative");
    }
}

/// Threshold on `yᵀs` below which an update is discarded — near-flat
/// curvature would poison the inverse-Hessian approximation.
const CURVATURE_FLOOR: f64 = 1e-10;

struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64, // 1 / yᵀs
}

/// Ring buffer of recent `(s, y, ρ)` triples, newest last.
pub struct LbfgsHistory {
    pairs: VecDeque<CurvaturePair>,
    capacity: usize,
}

impl LbfgsHistory {
    pub fn new(capacity: usize) -> Self {
        LbfgsHistory { pairs: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Stores the pair unless curvature is too flat (or capacity is zero);
    /// returns whether it was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let ys = dot(&y, &s);
        if ys <= CURVATURE_FLOOR || self.capacity == 0 {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(CurvaturePair { s, y, rho: 1.0 / ys });
        true
    }

    /// Initial Hessian scale `γ = sᵀy / yᵀy` from the newest pair; 1 when
    /// nothing is stored yet.
    pub fn gamma(&self) -> f64 {
        match self.pairs.back() {
            Some(p) => dot(&p.s, &p.y) / dot(&p.y, &p.y),
            None => 1.0,
        }
    }
}

/// Two-loop recursion: returns `−H·g` for the implicit inverse-Hessian
/// approximation. Empty history gives plain `−γ·g`.
pub fn two_loop_direction(history: &LbfgsHistory, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.pairs.len());
    for pair in history.pairs.iter().rev() {
        let a = pair.rho * dot(&pair.s, &q);
        add_scaled(&mut q, -a, &pair.y);
        alphas.push(a);
    }
    let gamma = history.gamma();
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for (pair, &a) in history.pairs.iter().zip(alphas.iter().rev()) {
        let b = pair.rho * dot(&pair.y, &q);
        add_scaled(&mut q, a - b, &pair.s);
    }
    for v in q.iter_mut() {
        *v = -*v;
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailure,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::GradientTolerance => write!(f, "gradient tolerance reached"),
            Termination::MaxIterations => write!(f, "iteration cap reached"),
            Termination::LineSearchFailure => write!(f, "line search failed"),
        }
    }
}

/// One accepted iterate: objective, gradient norm and step length *after*
/// the move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    pub j: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    pub final_j: f64,
    pub final_grad_norm: f64,
    /// Total objective-and-gradient callback invocations.
    pub evaluations: usize,
}

#[derive(Debug, Error)]
pub enum LbfgsError {
    #[error("non-finite objective or gradient at iteration {iteration}")]
    NonFinite { iteration: usize },
}

struct Point {
    alpha: f64,
    phi: f64,
    dphi: f64,
    theta: Vec<f64>,
    grad: Vec<f64>,
}

enum SearchOutcome {
    Accepted(Point),
    Exhausted,
    NonFinite,
}

/// Strong-Wolfe search along `d` from `theta0`: bracketing with doubling
/// trial steps starting at 1, then zoom with safeguarded cubic
/// interpolation.
fn wolfe_search<F>(
    evaluate: &mut F,
    evals: &mut usize,
    theta0: &[f64],
    d: &[f64],
    phi0: f64,
    dphi0: f64,
    cfg: &LbfgsConfig,
) -> SearchOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    debug_assert!(dphi0 < 0.0, "search direction must be descent");
    let mut budget = cfg.max_line_search_steps;
    let mut probe = |alpha: f64, budget: &mut usize| -> Result<Option<Point>, ()> {
        if *budget == 0 {
            return Ok(None);
        }
        *budget -= 1;
        let mut theta = theta0.to_vec();
        add_scaled(&mut theta, alpha, d);
        let (j, g) = evaluate(&theta);
        *evals += 1;
        if !j.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(());
        }
        let dphi = dot(d, &g);
        Ok(Some(Point { alpha, phi: j, dphi, theta, grad: g }))
    };

    let sufficient = |p: &Point| p.phi <= phi0 + cfg.wolfe_c1 * p.alpha * dphi0;
    let curvature = |p: &Point| p.dphi.abs() <= -cfg.wolfe_c2 * dphi0;

    // The unstepped origin; only alpha/phi/dphi are ever read from it.
    let origin = || Point {
        alpha: 0.0,
        phi: phi0,
        dphi: dphi0,
        theta: theta0.to_vec(),
        grad: Vec::new(),
    };

    // Bracketing phase: expand until the minimum is straddled.
    let mut prev_point: Option<Point> = None;
    let mut alpha = 1.0;
    let (mut lo, mut hi);
    loop {
        let p = match probe(alpha, &mut budget) {
            Err(()) => return SearchOutcome::NonFinite,
            Ok(None) => return SearchOutcome::Exhausted,
            Ok(Some(p)) => p,
        };
        let rose = prev_point.as_ref().is_some_and(|pp| p.phi >= pp.phi);
        if !sufficient(&p) || rose {
            lo = prev_point.take().unwrap_or_else(origin);
            hi = p;
            break;
        }
        if curvature(&p) {
            return SearchOutcome::Accepted(p);
        }
        if p.dphi >= 0.0 {
            hi = prev_point.take().unwrap_or_else(origin);
            lo = p;
            break;
        }
        alpha = p.alpha * 2.0;
        prev_point = Some(p);
    }

    // Zoom phase: shrink [lo, hi] keeping lo the best sufficient-decrease
    // point, with dφ(lo)·(hi−lo) < 0.
    loop {
        let next = interpolate(&lo, &hi);
        let p = match probe(next, &mut budget) {
            Err(()) => return SearchOutcome::NonFinite,
            Ok(None) => return SearchOutcome::Exhausted,
            Ok(Some(p)) => p,
        };
        if !sufficient(&p) || p.phi >= lo.phi {
            hi = p;
        } else {
            if curvature(&p) {
                return SearchOutcome::Accepted(p);
            }
            if p.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
}

/// Cubic-interpolated trial inside `(lo, hi)`, falling back to bisection
/// whenever the cubic is degenerate or lands too close to an endpoint.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, fa, da) = (lo.alpha, lo.phi, lo.dphi);
    let (b, fb, db) = (hi.alpha, hi.phi, hi.dphi);
    let mid = 0.5 * (a + b);
    if a == b {
        return mid;
    }
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = db - da + 2.0 * d2;
    if denom == 0.0 {
        return mid;
    }
    let candidate = b - (b - a) * (db + d2 - d1) / denom;
    let span = (b - a).abs();
    let lo_end = a.min(b) + 0.1 * span;
    let hi_end = a.max(b) - 0.1 * span;
    if !candidate.is_finite() || candidate < lo_end || candidate > hi_end {
        mid
    } else {
        candidate
    }
}

/// Minimizes `evaluate` from `theta0`. Terminates normally on the gradient
/// test, the iteration cap, or a failed line search (returning the best
/// iterate found); a non-finite objective or gradient aborts with the
/// iteration named.
pub fn minimize<F>(
    mut evaluate: F,
    theta0: Vec<f64>,
    cfg: &LbfgsConfig,
) -> Result<(Vec<f64>, RunReport), LbfgsError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    cfg.validate();
    let mut evals = 0usize;
    let mut theta = theta0;
    let (mut j, mut g) = evaluate(&theta);
    evals += 1;
    if !j.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(LbfgsError::NonFinite { iteration: 0 });
    }

    let mut history = LbfgsHistory::new(cfg.history_size);
    let mut records = Vec::new();
    let mut iter = 0usize;
    let termination = loop {
        let grad_norm = norm(&g);
        if grad_norm / norm(&theta).max(1.0) <= cfg.grad_tolerance {
            break Termination::GradientTolerance;
        }
        if iter >= cfg.max_iterations {
            break Termination::MaxIterations;
        }

        let mut d = two_loop_direction(&history, &g);
        let mut dg = dot(&d, &g);
        if dg >= 0.0 {
            // defensive reset: a rounding-poisoned history can stop being
            // positive definite; steepest descent always makes progress
            d = g.iter().map(|v| -v).collect();
            dg = -grad_norm * grad_norm;
        }

        match wolfe_search(&mut evaluate, &mut evals, &theta, &d, j, dg, cfg) {
            SearchOutcome::NonFinite => {
                return Err(LbfgsError::NonFinite { iteration: iter });
            }
            SearchOutcome::Exhausted => break Termination::LineSearchFailure,
            SearchOutcome::Accepted(p) => {
                assert!(
                    p.phi <= j + 1e-10 * j.abs().max(1.0),
                    "accepted step increased the objective: {} -> {}",
                    j,
                    p.phi
                );
                let s: Vec<f64> =
                    p.theta.iter().zip(&theta).map(|(n, o)| n - o).collect();
                let y: Vec<f64> = p.grad.iter().zip(&g).map(|(n, o)| n - o).collect();
                history.push(s, y);
                theta = p.theta;
                j = p.phi;
                g = p.grad;
                records.push(IterationRecord {
                    index: iter,
                    j,
                    grad_norm: norm(&g),
                    step: p.alpha,
                });
                iter += 1;
            }
        }
    };

    let report = RunReport {
        iterations: records,
        termination,
        final_j: j,
        final_grad_norm: norm(&g),
        evaluations: evals,
    };
    Ok((theta, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(center: Vec<f64>) -> impl FnMut(&[f64]) -> (f64, Vec<f64>) {
        move |x: &[f64]| {
            let g: Vec<f64> = x.iter().zip(&center).map(|(xi, ai)| xi - ai).collect();
            let j = 0.5 * g.iter().map(|v| v * v).sum::<f64>();
            (j, g)
        }
    }

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let j = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        (j, g)
    }

    #[test]
    fn quadratic_converges_within_three_iterations() {
        for start in [vec![0.0, 0.0, 0.0], vec![17.0, 5.0, -4.0]] {
            let center = vec![3.0, -1.0, 2.0];
            let cfg = LbfgsConfig::default();
            let (theta, report) = minimize(quadratic(center.clone()), start, &cfg).unwrap();
            assert!(report.iterations.len() <= 3, "{} iterations", report.iterations.len());
            assert_eq!(report.termination, Termination::GradientTolerance);
            for (t, c) in theta.iter().zip(&center) {
                assert!((t - c).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn stationary_start_stops_before_any_search() {
        let center = vec![1.0, 2.0];
        let (theta, report) =
            minimize(quadratic(center.clone()), center.clone(), &LbfgsConfig::default()).unwrap();
        assert_eq!(theta, center);
        assert!(report.iterations.is_empty());
        assert_eq!(report.evaluations, 1);
        assert_eq!(report.termination, Termination::GradientTolerance);
    }

    #[test]
    fn rosenbrock_reaches_the_minimum() {
        let cfg = LbfgsConfig { grad_tolerance: 1e-10, max_iterations: 200, ..Default::default() };
        let (theta, report) = minimize(rosenbrock, vec![-1.2, 1.0], &cfg).unwrap();
        assert!(
            (theta[0] - 1.0).abs() < 1e-6 && (theta[1] - 1.0).abs() < 1e-6,
            "ended at {:?} after {} iterations",
            theta,
            report.iterations.len()
        );
        assert!(report.iterations.len() <= 200);
        let mut prev = f64::INFINITY;
        for rec in &report.iterations {
            assert!(rec.j <= prev + 1e-12, "objective rose at iteration {}", rec.index);
            prev = rec.j;
        }
    }

    #[test]
    fn empty_history_direction_is_steepest_descent() {
        let history = LbfgsHistory::new(10);
        let g = vec![0.5, -2.0, 1.0];
        assert_eq!(two_loop_direction(&history, &g), vec![-0.5, 2.0, -1.0]);
    }

    #[test]
    fn identity_hessian_is_recovered_after_one_update() {
        // On f(x)=½‖x‖², y = s exactly, so H ≈ I and d = −g.
        let mut history = LbfgsHistory::new(10);
        let s = vec![0.3, -0.7, 0.2];
        assert!(history.push(s.clone(), s));
        let g = vec![1.0, 2.0, -0.5];
        let d = two_loop_direction(&history, &g);
        for (di, gi) in d.iter().zip(&g) {
            assert!((di + gi).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_curvature_pairs_are_rejected() {
        let mut history = LbfgsHistory::new(10);
        assert!(!history.push(vec![1.0, 0.0], vec![0.0, 1.0])); // yᵀs = 0
        assert!(!history.push(vec![1.0, 0.0], vec![-1.0, 0.0])); // yᵀs < 0
        assert!(!history.push(vec![1e-6, 0.0], vec![1e-6, 0.0])); // below floor
        assert!(history.is_empty());
        assert_eq!(history.gamma(), 1.0);
    }

    #[test]
    fn ring_buffer_caps_at_capacity() {
        let mut history = LbfgsHistory::new(2);
        for i in 1..=5 {
            let v = vec![i as f64, 0.0];
            assert!(history.push(v.clone(), v));
        }
        assert_eq!(history.len(), 2);
        assert_eq!(history.gamma(), 1.0); // y = s ⇒ γ = 1 regardless
    }

    #[test]
    fn directions_from_valid_history_are_descent() {
        // SPD map y = A·s keeps curvature positive; every resulting
        // direction must still oppose the gradient.
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let matvec = |v: &[f64]| -> Vec<f64> {
            a.iter().map(|row| dot(row, v)).collect()
        };
        let mut history = LbfgsHistory::new(5);
        let mut x = 1.0f64;
        for _ in 0..5 {
            // deterministic funky-but-fixed probe vectors
            let s: Vec<f64> = (0..3).map(|k| ((x + k as f64) * 2.7).sin()).collect();
            assert!(history.push(s.clone(), matvec(&s)));
            x += 1.3;
        }
        for probe in 0..10 {
            let g: Vec<f64> = (0..3).map(|k| ((probe * 3 + k) as f64 * 1.9).cos()).collect();
            let d = two_loop_direction(&history, &g);
            assert!(dot(&d, &g) < 0.0, "non-descent direction for probe {}", probe);
        }
    }

    #[test]
    fn zero_history_degrades_to_gradient_descent() {
        let cfg = LbfgsConfig { history_size: 0, ..Default::default() };
        let center = vec![2.0, -3.0];
        let (theta, report) = minimize(quadratic(center.clone()), vec![0.0, 0.0], &cfg).unwrap();
        assert!(report.iterations.len() <= 3);
        for (t, c) in theta.iter().zip(&center) {
            assert!((t - c).abs() < 1e-8);
        }
    }

    #[test]
    fn non_finite_objective_names_the_iteration() {
        let bad = |_: &[f64]| (f64::NAN, vec![0.0]);
        match minimize(bad, vec![1.0], &LbfgsConfig::default()) {
            Err(LbfgsError::NonFinite { iteration }) => assert_eq!(iteration, 0),
            other => panic!("expected NonFinite, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn non_finite_during_search_names_the_iteration() {
        // Finite at the start, NaN everywhere the search probes.
        let mut first = true;
        let f = move |x: &[f64]| {
            if first {
                first = false;
                (x[0] * x[0], vec![2.0 * x[0]])
            } else {
                (f64::NAN, vec![f64::NAN])
            }
        };
        match minimize(f, vec![3.0], &LbfgsConfig::default()) {
            Err(LbfgsError::NonFinite { iteration }) => assert_eq!(iteration, 0),
            other => panic!("expected NonFinite, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn exhausted_search_terminates_with_best_point() {
        let cfg = LbfgsConfig { max_line_search_steps: 0, ..Default::default() };
        let (theta, report) = minimize(quadratic(vec![5.0]), vec![0.0], &cfg).unwrap();
        assert_eq!(theta, vec![0.0]);
        assert_eq!(report.termination, Termination::LineSearchFailure);
        assert!(report.iterations.is_empty());
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let cfg = LbfgsConfig { grad_tolerance: 1e-10, ..Default::default() };
        let (t1, r1) = minimize(rosenbrock, vec![-1.2, 1.0], &cfg).unwrap();
        let (t2, r2) = minimize(rosenbrock, vec![-1.2, 1.0], &cfg).unwrap();
        assert!(t1.iter().zip(&t2).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(r1.iterations.len(), r2.iterations.len());
        for (a, b) in r1.iterations.iter().zip(&r2.iterations) {
            assert_eq!(a.j.to_bits(), b.j.to_bits());
            assert_eq!(a.step.to_bits(), b.step.to_bits());
        }
    }

    #[test]
    #[should_panic(expected = "Wolfe constants")]
    fn invalid_wolfe_constants_are_rejected() {
        let cfg = LbfgsConfig { wolfe_c1: 0.95, wolfe_c2: 0.9, ..Default::default() };
        let _ = minimize(quadratic(vec![0.0]), vec![1.0], &cfg);
    }
}
