//! Python bindings: models, scoring, planning, pruning, evaluation and the
//! statistics helpers.

use std::path::PathBuf;

use glu_shears_core::analytics::{self, stats, Direction, Series};
use glu_shears_core::eval::{self, Corpus};
use glu_shears_core::glu::{glu_forward as core_glu_forward, GluLayer};
use glu_shears_core::importance::{self, Criterion, ImportanceVector};
use glu_shears_core::model_io::{self, ModelConfig};
use glu_shears_core::pruner::{self, PruningPlan};
use glu_shears_core::tensor::{DataKind, Matrix};
use glu_shears_core::transformer::{init_toy_model, ToyTransformer};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: glu_shears_core::Error) -> PyErr {
    if e.is_io() {
        PyOSError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn criterion(name: &str) -> PyResult<Criterion> {
    name.parse().map_err(|e: glu_shears_core::Error| PyValueError::new_err(e.to_string()))
}

fn dtype(name: &str) -> PyResult<DataKind> {
    DataKind::parse(&name.to_ascii_uppercase())
        .ok_or_else(|| PyValueError::new_err(format!("dtype must be 'f32' or 'bf16', got {name:?}")))
}

fn matrix(rows: Vec<Vec<f32>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

type Rows = Vec<Vec<f32>>;

fn nested(m: &Matrix) -> Rows {
    m.row_iter().map(<[f32]>::to_vec).collect()
}

#[pyclass(name = "ModelConfig", module = "glu_shears", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyModelConfig {
    hidden_size: usize,
    intermediate_size: usize,
    num_layers: usize,
    num_heads: usize,
    vocab_size: usize,
    rope_theta: f64,
    rms_eps: f64,
}

impl From<&ModelConfig> for PyModelConfig {
    fn from(c: &ModelConfig) -> Self {
        Self {
            hidden_size: c.hidden_size,
            intermediate_size: c.intermediate_size,
            num_layers: c.num_layers,
            num_heads: c.num_heads,
            vocab_size: c.vocab_size,
            rope_theta: c.rope_theta,
            rms_eps: c.rms_eps,
        }
    }
}

impl PyModelConfig {
    fn core(&self) -> ModelConfig {
        ModelConfig {
            hidden_size: self.hidden_size,
            intermediate_size: self.intermediate_size,
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            vocab_size: self.vocab_size,
            rope_theta: self.rope_theta,
            rms_eps: self.rms_eps,
        }
    }
}

#[pymethods]
impl PyModelConfig {
    /// The toy architecture: d_model 64, d_ff 256, 2 layers, 4 heads.
    #[staticmethod]
    fn toy() -> Self {
        (&ModelConfig::default()).into()
    }

    #[staticmethod]
    #[pyo3(signature = (num_layers = 16))]
    fn llama_1b(num_layers: usize) -> Self {
        (&ModelConfig::llama_1b_shape(num_layers)).into()
    }

    #[staticmethod]
    #[pyo3(signature = (num_layers = 28))]
    fn llama_3b(num_layers: usize) -> Self {
        (&ModelConfig::llama_3b_shape(num_layers)).into()
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok((&ModelConfig::read(&path).map_err(to_py)?).into())
    }

    fn expansion_ratio(&self) -> f64 {
        self.core().expansion_ratio()
    }

    fn validate(&self) -> PyResult<()> {
        self.core().validate().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelConfig(hidden_size={}, intermediate_size={}, num_layers={}, num_heads={}, vocab_size={})",
            self.hidden_size, self.intermediate_size, self.num_layers, self.num_heads, self.vocab_size
        )
    }
}

#[pyclass(name = "Plan", module = "glu_shears", skip_from_py_object)]
#[derive(Clone)]
struct PyPlan {
    inner: PruningPlan,
}

#[pymethods]
impl PyPlan {
    #[getter]
    fn criterion(&self) -> &'static str {
        self.inner.criterion.as_str()
    }
    #[getter]
    fn fraction(&self) -> f64 {
        self.inner.fraction
    }
    #[getter]
    fn original_d_ff(&self) -> usize {
        self.inner.original_d_ff
    }
    #[getter]
    fn retained_d_ff(&self) -> usize {
        self.inner.retained_d_ff
    }
    #[getter]
    fn target_ratio(&self) -> f64 {
        self.inner.target_ratio
    }
    /// Removed neuron indices, one ascending list per layer.
    #[getter]
    fn removed(&self) -> Vec<Vec<usize>> {
        self.inner.per_layer_removals.iter().map(|l| l.removed.clone()).collect()
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("plan serializes")
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write(&path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: PruningPlan::read(&path).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        format!(
            "Plan({}, fraction={}, d_ff {} -> {}, ratio={:.4})",
            self.inner.criterion, self.inner.fraction, self.inner.original_d_ff, self.inner.retained_d_ff, self.inner.target_ratio
        )
    }
}

#[pyclass(name = "EvalResult", module = "glu_shears", get_all)]
struct PyEvalResult {
    perplexity: f64,
    token_count: usize,
    next_token_accuracy: f64,
    model_tag: String,
    ratio: f64,
}

#[pyclass(name = "Model", module = "glu_shears")]
struct PyModel {
    inner: ToyTransformer,
}

#[pymethods]
impl PyModel {
    /// Seeded random model; the toy architecture when `config` is omitted.
    #[new]
    #[pyo3(signature = (seed = 42, config = None))]
    fn new(seed: u64, config: Option<PyModelConfig>) -> PyResult<Self> {
        let cfg = config.map_or_else(ModelConfig::default, |c| c.core());
        Ok(Self { inner: init_toy_model(seed, &cfg).map_err(to_py)? })
    }

    /// Reads config.json + model.safetensors from a directory.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: model_io::load_model_dir(&path).map_err(to_py)? })
    }

    #[pyo3(signature = (path, dtype = "f32"))]
    fn save(&self, path: PathBuf, dtype: &str) -> PyResult<()> {
        model_io::save_model_dir(&self.inner, &path, self::dtype(dtype)?).map_err(to_py)
    }

    #[getter]
    fn config(&self) -> PyModelConfig {
        (&self.inner.config).into()
    }

    fn expansion_ratio(&self) -> f64 {
        self.inner.expansion_ratio()
    }

    /// `(gate, up, down)` weights of one MLP as nested lists.
    fn mlp(&self, layer: usize) -> PyResult<(Rows, Rows, Rows)> {
        let b = self
            .inner
            .blocks
            .get(layer)
            .ok_or_else(|| PyValueError::new_err(format!("layer {layer} out of range")))?;
        Ok((nested(&b.mlp.w_gate), nested(&b.mlp.w_up), nested(&b.mlp.w_down)))
    }

    /// `[len(ids), vocab]` next-token logits.
    fn logits(&self, ids: Vec<u32>) -> PyResult<Vec<Vec<f32>>> {
        Ok(nested(&self.inner.logits(&ids).map_err(to_py)?))
    }

    fn generate(&self, prompts: Vec<Vec<u32>>, gen_tokens: usize) -> PyResult<Vec<Vec<u32>>> {
        self.inner.generate_greedy(&prompts, gen_tokens).map_err(to_py)
    }

    /// Per-layer neuron scores under `criterion` ("maw", "vow" or "pon").
    #[pyo3(signature = (criterion = "maw"))]
    fn scores(&self, criterion: &str) -> PyResult<Vec<Vec<f64>>> {
        let c = self::criterion(criterion)?;
        Ok(importance::score_model(&self.inner, c).into_iter().map(|v| v.scores).collect())
    }

    #[pyo3(signature = (fraction, criterion = "maw"))]
    fn plan_fraction(&self, fraction: f64, criterion: &str) -> PyResult<PyPlan> {
        let inner = pruner::plan_from_fraction(&self.inner, self::criterion(criterion)?, fraction).map_err(to_py)?;
        Ok(PyPlan { inner })
    }

    #[pyo3(signature = (ratio, criterion = "maw"))]
    fn plan_ratio(&self, ratio: f64, criterion: &str) -> PyResult<PyPlan> {
        let inner = pruner::plan_from_ratio(&self.inner, self::criterion(criterion)?, ratio).map_err(to_py)?;
        Ok(PyPlan { inner })
    }

    fn prune(&self, plan: &PyPlan) -> PyResult<PyModel> {
        Ok(PyModel { inner: pruner::prune_model(&self.inner, &plan.inner).map_err(to_py)? })
    }

    /// `(passed, checks_run, violation_or_None)`.
    fn verify(&self) -> (bool, usize, Option<String>) {
        let r = pruner::verify_consistency(&self.inner);
        (r.passed, r.checks, r.violation)
    }

    /// Byte-level perplexity over documents (each evaluated with its own context).
    #[pyo3(signature = (documents, tag = "model"))]
    fn perplexity(&self, documents: Vec<String>, tag: &str) -> PyResult<PyEvalResult> {
        let corpus = Corpus::new("python", documents.into_iter().map(String::into_bytes).collect()).map_err(to_py)?;
        let r = eval::evaluate(&self.inner, &corpus, tag).map_err(to_py)?;
        Ok(PyEvalResult {
            perplexity: r.perplexity,
            token_count: r.token_count,
            next_token_accuracy: r.next_token_accuracy,
            model_tag: r.model_tag,
            ratio: r.ratio,
        })
    }

    fn __repr__(&self) -> String {
        let c = &self.inner.config;
        format!("Model(d_model={}, d_ff={}, layers={}, r={:.4})", c.hidden_size, c.intermediate_size, c.num_layers, c.expansion_ratio())
    }
}

/// GLU forward `(x Wupᵀ ⊙ SiLU(x Wgateᵀ)) Wdownᵀ` on nested lists.
#[pyfunction]
fn glu_forward(x: Vec<Vec<f32>>, gate: Vec<Vec<f32>>, up: Vec<Vec<f32>>, down: Vec<Vec<f32>>) -> PyResult<Vec<Vec<f32>>> {
    let layer = GluLayer::new(matrix(gate)?, matrix(up)?, matrix(down)?).map_err(to_py)?;
    Ok(nested(&core_glu_forward(&matrix(x)?, &layer).map_err(to_py)?))
}

/// Scores of one layer given its gate and up rows.
#[pyfunction]
#[pyo3(signature = (gate, up, criterion = "maw"))]
fn score_layer(gate: Vec<Vec<f32>>, up: Vec<Vec<f32>>, criterion: &str) -> PyResult<Vec<f64>> {
    let gate = matrix(gate)?;
    let down = Matrix::zeros(gate.cols(), gate.rows()).map_err(to_py)?;
    let layer = GluLayer::new(gate, matrix(up)?, down).map_err(to_py)?;
    Ok(importance::score_layer(&layer, 0, self::criterion(criterion)?).scores)
}

/// The `k` lowest-scoring indices (ties to the lower index), ascending.
#[pyfunction]
fn select_prune_set(scores: Vec<f64>, k: usize) -> PyResult<Vec<usize>> {
    let v = ImportanceVector { criterion: Criterion::Maw, layer_index: 0, scores };
    importance::select_prune_set(&v, k).map_err(to_py)
}

#[pyfunction]
fn retained_dim(d_ff: usize, fraction: f64) -> PyResult<usize> {
    pruner::retained_dim(d_ff, fraction).map_err(to_py)
}

#[pyfunction]
fn pearson_r(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    stats::pearson_r(&x, &y).map_err(to_py)
}

#[pyfunction]
fn t_pvalue(r: f64, n: usize) -> PyResult<f64> {
    stats::t_pvalue(r, n).map_err(to_py)
}

/// Percent of the first value; inverted when lower is better.
#[pyfunction]
#[pyo3(signature = (values, lower_is_better = false))]
fn normalize_to_baseline(values: Vec<f64>, lower_is_better: bool) -> PyResult<Vec<f64>> {
    let s = Series {
        benchmark: "values".into(),
        direction: if lower_is_better { Direction::Lower } else { Direction::Higher },
        points: values.iter().enumerate().map(|(i, &v)| (-(i as f64), v)).collect(),
    };
    Ok(analytics::normalize_to_baseline(&s).map_err(to_py)?.into_iter().map(|(_, p)| p).collect())
}

/// `(label, n, r, p)` for the knowledge-vs-truthfulness correlations of the
/// bundled result tables.
#[pyfunction]
fn fixture_correlations() -> PyResult<Vec<(String, usize, f64, f64)>> {
    let fx = analytics::embedded_fixtures();
    Ok(analytics::knowledge_truthfulness_correlations(&fx)
        .map_err(to_py)?
        .into_iter()
        .map(|c| (c.label, c.n, c.r, c.p_two_sided))
        .collect())
}

/// `(name, value)` headline figures recomputed from the bundled tables.
#[pyfunction]
fn fixture_headlines() -> PyResult<Vec<(String, f64)>> {
    let fx = analytics::embedded_fixtures();
    Ok(analytics::headline_numbers(&fx).map_err(to_py)?.into_iter().map(|h| (h.name, h.value)).collect())
}

/// `(ratio, value)` points of one bundled series, ratios descending.
#[pyfunction]
fn fixture_series(model: &str, benchmark: &str) -> PyResult<Vec<(f64, f64)>> {
    let fx = analytics::embedded_fixtures();
    Ok(fx.series(model, benchmark).map_err(to_py)?.points.clone())
}

#[pyfunction]
fn f32_to_bf16(x: f32) -> u16 {
    model_io::f32_to_bf16(x)
}

#[pyfunction]
fn bf16_to_f32(bits: u16) -> f32 {
    model_io::bf16_to_f32(bits)
}

#[pymodule]
fn glu_shears(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPlan>()?;
    m.add_class::<PyEvalResult>()?;
    m.add_function(wrap_pyfunction!(glu_forward, m)?)?;
    m.add_function(wrap_pyfunction!(score_layer, m)?)?;
    m.add_function(wrap_pyfunction!(select_prune_set, m)?)?;
    m.add_function(wrap_pyfunction!(retained_dim, m)?)?;
    m.add_function(wrap_pyfunction!(pearson_r, m)?)?;
    m.add_function(wrap_pyfunction!(t_pvalue, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_to_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(fixture_correlations, m)?)?;
    m.add_function(wrap_pyfunction!(fixture_headlines, m)?)?;
    m.add_function(wrap_pyfunction!(fixture_series, m)?)?;
    m.add_function(wrap_pyfunction!(f32_to_bf16, m)?)?;
    m.add_function(wrap_pyfunction!(bf16_to_f32, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
