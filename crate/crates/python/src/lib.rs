//! Python bindings: the numeric building blocks, the synthetic generator and
//! file-to-file sweep and fixed-K runs.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ssd_core::app;
use ssd_core::synthbench::{self, PlantedScenario};
use ssd_core::{sweep, RunConfig, RunMode, SsdError};

fn to_py(e: SsdError) -> PyErr {
    let msg = format!("{} (code {}): {e}", e.kind(), e.exit_code());
    match e.exit_code() {
        2 => PyValueError::new_err(msg),
        3 => PyIOError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    ssd_core::tokenize(text)
}

#[pyfunction]
#[pyo3(signature = (p, a = ssd_core::composer::DEFAULT_SIF_A))]
fn sif_weight(p: f64, a: f64) -> f64 {
    ssd_core::composer::sif_weight(p, a)
}

/// `P[F(d1, d2) > f]`.
#[pyfunction]
fn f_upper_tail(f: f64, d1: usize, d2: usize) -> f64 {
    ssd_core::f_upper_tail(f, d1, d2)
}

/// OLS with intercept. `x` is a list of rows.
#[pyfunction]
fn fit_ols<'py>(py: Python<'py>, x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let fit = ssd_core::fit_ols(&matrix(&x)?, &y).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("alpha", fit.alpha)?;
    d.set_item("beta", fit.beta.clone())?;
    d.set_item("r2", fit.r2)?;
    d.set_item("r2_adj", fit.r2_adj)?;
    d.set_item("f", fit.f_stat)?;
    d.set_item("p", fit.p_value)?;
    d.set_item("n", fit.n)?;
    d.set_item("rank_deficient", fit.rank_deficient)?;
    Ok(d)
}

#[pyfunction]
fn pca_fit<'py>(py: Python<'py>, x: Vec<Vec<f64>>, k: usize) -> PyResult<Bound<'py, PyDict>> {
    let m = ssd_core::pca_fit(&matrix(&x)?, k).map_err(to_py)?;
    let comps: Vec<Vec<f64>> = m.components.row_iter().map(|r| r.iter().copied().collect()).collect();
    let d = PyDict::new(py);
    d.set_item("mean", m.mean.as_slice().to_vec())?;
    d.set_item("components", comps)?;
    d.set_item("explained_variance_ratio", m.explained_variance_ratio.clone())?;
    d.set_item("cumulative_ratio", m.cumulative_ratio)?;
    Ok(d)
}

#[pyfunction]
fn gradient_change(current: Vec<f64>, previous: Vec<f64>) -> PyResult<f64> {
    if current.len() != previous.len() {
        return Err(PyValueError::new_err("vectors differ in length"));
    }
    Ok(sweep::gradient_change(&current, &previous))
}

#[pyfunction]
fn median_smooth(series: Vec<f64>, win: usize) -> PyResult<Vec<f64>> {
    sweep::median_smooth(&series, win).map_err(to_py)
}

#[pyfunction]
fn auck(series: Vec<f64>, radius: usize) -> Vec<f64> {
    sweep::auck(&series, radius)
}

#[pyfunction]
fn detrend_z(values: Vec<f64>, cum_var: Vec<f64>) -> PyResult<Vec<f64>> {
    sweep::detrend_z(&values, &cum_var).map_err(to_py)
}

/// Word vectors loaded from a GloVe-style text file.
#[pyclass(module = "ssd", frozen)]
struct EmbeddingStore {
    inner: ssd_core::EmbeddingStore,
}

#[pymethods]
impl EmbeddingStore {
    #[staticmethod]
    #[pyo3(signature = (path, dim = None))]
    fn load(path: PathBuf, dim: Option<usize>) -> PyResult<Self> {
        let inner = ssd_core::load_embeddings(&path, dim).map_err(to_py)?;
        Ok(EmbeddingStore { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, word: &str) -> bool {
        self.inner.contains(word)
    }

    fn vector(&self, word: &str) -> PyResult<Vec<f64>> {
        self.inner
            .lookup(word)
            .map(<[f64]>::to_vec)
            .map_err(|e| PyErr::new::<pyo3::exceptions::PyKeyError, _>(e.to_string()))
    }

    /// The `n` words closest in cosine to `direction`.
    #[pyo3(signature = (direction, n = 10))]
    fn nearest(&self, direction: Vec<f64>, n: usize) -> PyResult<Vec<(String, f64)>> {
        let nb = ssd_core::interpret::pole_neighbors(
            &direction,
            &self.inner,
            ssd_core::interpret::Pole::Positive,
            n,
            &Default::default(),
        )
        .map_err(to_py)?;
        Ok(nb.into_iter().map(|x| (x.word, x.cosine)).collect())
    }
}

/// Writes a planted-gradient corpus into `out_dir` and returns the ground truth.
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 0, n_authors = 350, vocab_size = 2000, dim = 50, effective_rank = 10, noise_sd = 1.0, tokens_per_author = 80))]
#[allow(clippy::too_many_arguments)]
fn generate<'py>(
    py: Python<'py>,
    out_dir: PathBuf,
    seed: u64,
    n_authors: usize,
    vocab_size: usize,
    dim: usize,
    effective_rank: usize,
    noise_sd: f64,
    tokens_per_author: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let scenario = PlantedScenario {
        seed,
        n_authors,
        vocab_size,
        dim,
        effective_rank,
        noise_sd,
        tokens_per_author,
    };
    let g = app::cmd_generate(&scenario, &out_dir).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("planted_direction", g.truth.planted_direction.clone())?;
    d.set_item("effective_rank", g.truth.effective_rank)?;
    d.set_item("positive_lexemes", g.truth.positive_lexemes.clone())?;
    d.set_item("negative_lexemes", g.truth.negative_lexemes.clone())?;
    d.set_item("embeddings", out_dir.join(synthbench::EMBEDDINGS_FILE))?;
    d.set_item("corpus", out_dir.join(synthbench::CORPUS_FILE))?;
    Ok(d)
}

fn summary<'py>(py: Python<'py>, s: app::RunSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("k", s.k)?;
    d.set_item("r2_adj", s.r2_adj)?;
    d.set_item("p", s.p_value)?;
    d.set_item("files", s.files)?;
    Ok(d)
}

/// Runs the pipeline from a TOML config file, with keyword overrides for the
/// common keys. `fixed_k` switches to a single-K run.
#[pyfunction]
#[pyo3(signature = (config = None, *, embeddings = None, corpus = None, outcome = None, out_dir = None, seed = None, k_stop = None, fixed_k = None, workers = None))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    config: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    corpus: Option<PathBuf>,
    outcome: Option<String>,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    k_stop: Option<usize>,
    fixed_k: Option<usize>,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = match config {
        Some(p) => RunConfig::from_file(p).map_err(to_py)?,
        None => RunConfig::default(),
    };
    cfg.embeddings = embeddings.or(cfg.embeddings);
    cfg.corpus = corpus.or(cfg.corpus);
    cfg.outcome = outcome.or(cfg.outcome);
    cfg.workers = workers.or(cfg.workers);
    if let Some(o) = out_dir {
        cfg.out_dir = o;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(k) = k_stop {
        cfg.k_stop = k;
    }
    if let Some(k) = fixed_k {
        cfg.mode = RunMode::FixedK;
        cfg.fixed_k = Some(k);
    }
    let s = py.detach(|| app::run(&cfg)).map_err(to_py)?;
    summary(py, s)
}

#[pymodule]
fn ssd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<EmbeddingStore>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(sif_weight, m)?)?;
    m.add_function(wrap_pyfunction!(f_upper_tail, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ols, m)?)?;
    m.add_function(wrap_pyfunction!(pca_fit, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_change, m)?)?;
    m.add_function(wrap_pyfunction!(median_smooth, m)?)?;
    m.add_function(wrap_pyfunction!(auck, m)?)?;
    m.add_function(wrap_pyfunction!(detrend_z, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
