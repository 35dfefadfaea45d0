//! Python bindings: `Memory` and `Model` classes plus module-level
//! `train`, `load_corpus`, `grad_check` and the two numeric helpers.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use semder_core::autograd;
use semder_core::corpus::parse_tsv;
use semder_core::embeddings::load_word2vec_text;
use semder_core::lbfgs::LbfgsConfig;
use semder_core::linalg;
use semder_core::model_file;
use semder_core::pipeline::{self, PipelineError, TrainSettings, NEGATIVE_LABEL};
use semder_core::recognizer::{ModelParams, RegWeights};
use semder_core::semantic::top_attended;

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn pipeline_err(e: PipelineError) -> PyErr {
    match e {
        PipelineError::Optimizer(inner) => PyRuntimeError::new_err(inner.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn lower(tokens: Vec<String>) -> Vec<String> {
    tokens.into_iter().map(|t| t.to_lowercase()).collect()
}

fn instance(arg1: Vec<String>, arg2: Vec<String>) -> PyResult<semder_core::corpus::DiscourseInstance> {
    if arg1.is_empty() || arg2.is_empty() {
        return Err(PyValueError::new_err("both arguments need at least one token"));
    }
    Ok(semder_core::corpus::DiscourseInstance::new(lower(arg1), lower(arg2), ""))
}

/// Fixed word-vector table used as the semantic memory (or as pretrained
/// surface vectors).
#[pyclass(frozen)]
struct Memory {
    table: semder_core::embeddings::EmbeddingTable,
}

#[pymethods]
impl Memory {
    /// Reads word2vec text format: a `<count> <dim>` header line, then
    /// one `word v1 ... vdim` line per entry.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (table, _) = load_word2vec_text(&path).map_err(io_err)?;
        Ok(Memory { table })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.table.dim()
    }

    fn __len__(&self) -> usize {
        self.table.len()
    }

    fn __contains__(&self, word: &str) -> bool {
        self.table.lookup(&word.to_lowercase()).is_some()
    }

    fn vector(&self, word: &str) -> Option<Vec<f64>> {
        self.table.lookup(&word.to_lowercase()).map(|v| v.to_vec())
    }
}

/// A trained one-vs-all relation recognizer.
#[pyclass]
struct Model {
    params: ModelParams,
    target: String,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let saved = model_file::load_model(&path).map_err(io_err)?;
        Ok(Model { params: saved.params, target: saved.target })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        model_file::save_model(&path, &self.params, &self.target).map_err(io_err)
    }

    /// The relation this model separates from all others.
    #[getter]
    fn target(&self) -> &str {
        &self.target
    }

    /// `(d1, d2, d_a, l)`.
    #[getter]
    fn dims(&self) -> (usize, usize, usize, usize) {
        let d = self.params.dims();
        (d.d1, d.d2, d.d_a, d.l)
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.params.embeddings.len()
    }

    /// Predicted label and the relation distribution for one discourse.
    fn predict(
        &self,
        memory: &Memory,
        arg1: Vec<String>,
        arg2: Vec<String>,
    ) -> PyResult<(String, Vec<f64>)> {
        self.check_width(memory)?;
        let inst = instance(arg1, arg2)?;
        let pred = autograd::predict(&self.params, &memory.table, &inst);
        let label = if pred.argmax() == 0 { self.target.clone() } else { NEGATIVE_LABEL.into() };
        Ok((label, pred.y_p))
    }

    /// The `k` most attended in-memory words, heaviest first. Empty when
    /// no discourse word is in the memory table.
    #[pyo3(signature = (memory, arg1, arg2, k = 5))]
    fn attention(
        &self,
        memory: &Memory,
        arg1: Vec<String>,
        arg2: Vec<String>,
        k: usize,
    ) -> PyResult<Vec<(String, f64)>> {
        self.check_width(memory)?;
        let inst = instance(arg1, arg2)?;
        let trace = autograd::forward_trace(&self.params, &memory.table, &inst);
        Ok(match &trace.attention {
            Some(att) => top_attended(&trace.memory, att, k),
            None => Vec::new(),
        })
    }

    /// Scores a TSV corpus; returns precision/recall/F1, the confusion
    /// counts and accuracy as a dict.
    fn evaluate_file<'py>(
        &self,
        py: Python<'py>,
        memory: &Memory,
        data: PathBuf,
    ) -> PyResult<Bound<'py, PyDict>> {
        let instances = parse_tsv(&data).map_err(io_err)?;
        if instances.is_empty() {
            return Err(PyValueError::new_err(format!("no instances in {}", data.display())));
        }
        let report = pipeline::evaluate(&self.params, &self.target, &memory.table, &instances)
            .map_err(pipeline_err)?;
        let d = PyDict::new(py);
        d.set_item("precision", report.prf.precision)?;
        d.set_item("recall", report.prf.recall)?;
        d.set_item("f1", report.prf.f1)?;
        d.set_item("tp", report.counts.tp)?;
        d.set_item("fp", report.counts.fp)?;
        d.set_item("fn", report.counts.fn_)?;
        d.set_item("tn", report.counts.tn)?;
        d.set_item("accuracy", report.accuracy)?;
        Ok(d)
    }
}

impl Model {
    fn check_width(&self, memory: &Memory) -> PyResult<()> {
        let want = self.params.dims().d2;
        if memory.table.dim() != want {
            return Err(PyValueError::new_err(format!(
                "model expects memory vectors of width {}, got width {}",
                want,
                memory.table.dim()
            )));
        }
        Ok(())
    }
}

/// Parses a TSV corpus into `(arg1_tokens, arg2_tokens, relation)` triples.
#[pyfunction]
fn load_corpus(path: PathBuf) -> PyResult<Vec<(Vec<String>, Vec<String>, String)>> {
    let instances = parse_tsv(&path).map_err(io_err)?;
    Ok(instances.into_iter().map(|i| (i.arg1, i.arg2, i.relation)).collect())
}

/// Trains a one-vs-all model; returns `(model, info)` where `info` holds
/// the training log summary.
#[pyfunction]
#[pyo3(signature = (
    train_path, memory_path, target, *,
    embeddings_path = None, d1 = 16, da = 8, seed = 42,
    max_iters = 200, history = 10,
    lambda_l = 1e-5, lambda_r = 1e-4, lambda_m = 1e-4,
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    train_path: PathBuf,
    memory_path: PathBuf,
    target: String,
    embeddings_path: Option<PathBuf>,
    d1: usize,
    da: usize,
    seed: u64,
    max_iters: usize,
    history: usize,
    lambda_l: f64,
    lambda_r: f64,
    lambda_m: f64,
) -> PyResult<(Model, Bound<'py, PyDict>)> {
    if d1 == 0 || da == 0 {
        return Err(PyValueError::new_err("d1 and da must be positive"));
    }
    let instances = parse_tsv(&train_path).map_err(io_err)?;
    if instances.is_empty() {
        return Err(PyValueError::new_err(format!("no instances in {}", train_path.display())));
    }
    let (memory, _) = load_word2vec_text(&memory_path).map_err(io_err)?;
    let pretrained = match embeddings_path {
        Some(p) => load_word2vec_text(&p).map_err(io_err)?.0,
        None => semder_core::embeddings::EmbeddingTable::empty(d1, false),
    };
    let settings = TrainSettings {
        d1,
        d_a: da,
        reg: RegWeights { lambda_l, lambda_r, lambda_m },
        seed,
        target,
        optimizer: LbfgsConfig {
            history_size: history,
            max_iterations: max_iters,
            ..Default::default()
        },
    };
    let outcome =
        pipeline::train(instances, &pretrained, &memory, &settings).map_err(pipeline_err)?;

    let info = PyDict::new(py);
    info.set_item("train_accuracy", outcome.train_accuracy)?;
    info.set_item("iterations", outcome.report.iterations.len())?;
    info.set_item("termination", outcome.report.termination.to_string())?;
    info.set_item("final_j", outcome.report.final_j)?;
    info.set_item("positives", outcome.diagnostics.positives)?;
    info.set_item("negatives", outcome.diagnostics.negatives)?;
    info.set_item("empty_memory_instances", outcome.diagnostics.empty_memory_instances)?;
    let model = Model { params: outcome.params, target: outcome.target };
    Ok((model, info))
}

/// Audits analytic gradients against central finite differences on a
/// small seeded configuration; `eps` must lie in `[1e-8, 1e-4]`.
#[pyfunction]
#[pyo3(signature = (seed = 42, eps = 1e-6))]
fn grad_check(py: Python<'_>, seed: u64, eps: f64) -> PyResult<Bound<'_, PyDict>> {
    if !(1e-8..=1e-4).contains(&eps) {
        return Err(PyValueError::new_err(format!(
            "eps must lie in [1e-8, 1e-4], got {:e}",
            eps
        )));
    }
    let report = pipeline::gradcheck_internal(seed, eps, None);
    let blocks = PyDict::new(py);
    for b in &report.blocks {
        blocks.set_item(&b.name, b.max_rel_err)?;
    }
    let d = PyDict::new(py);
    d.set_item("passed", report.passed)?;
    d.set_item("max_rel_err", report.max_rel_err)?;
    d.set_item("tolerance", report.tolerance)?;
    d.set_item("blocks", blocks)?;
    Ok(d)
}

/// Numerically stable softmax.
#[pyfunction]
fn softmax(scores: Vec<f64>) -> PyResult<Vec<f64>> {
    if scores.is_empty() {
        return Err(PyValueError::new_err("softmax of an empty vector"));
    }
    Ok(linalg::softmax(&scores))
}

/// Elementwise tanh followed by L2 normalization (zeros stay zeros).
#[pyfunction]
fn tanh_normalize(values: Vec<f64>) -> Vec<f64> {
    linalg::tanh_normalize(&values)
}

#[pymodule]
fn semder(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Memory>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(load_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(tanh_normalize, m)?)?;
    m.add("NEGATIVE_LABEL", NEGATIVE_LABEL)?;
    Ok(())
}
