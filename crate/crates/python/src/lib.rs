//! Python bindings: fixed-effects estimation, network centrality, crowding
//! and route metrics, embeddings, and the file-based pipeline commands.

use std::path::Path;

use capdis_core::econ::{self, AbsorbOptions, Factor, FixedEffectSpec, Regressor, TrendGroup};
use capdis_core::embed::{self, TrainingConfig};
use capdis_core::metrics::{self, RouteRule};
use capdis_core::network::{self, CarrierNetwork};
use capdis_core::pipeline::{self, Command, RunConfig};
use capdis_core::synth::{gen_fixture, FixtureSpec};
use capdis_core::text;
use capdis_core::Error;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

create_exception!(capdis, CapdisError, PyException);
create_exception!(capdis, SchemaError, CapdisError);
create_exception!(capdis, NumericalError, CapdisError);
create_exception!(capdis, ConfigError, CapdisError);

fn py_err(e: impl Into<Error>) -> PyErr {
    let e: Error = e.into();
    match e.exit_code() {
        2 => SchemaError::new_err(e.to_string()),
        3 => NumericalError::new_err(e.to_string()),
        _ => ConfigError::new_err(e.to_string()),
    }
}

fn keys(col: &Bound<'_, PyAny>) -> PyResult<Vec<String>> {
    col.try_iter()?.map(|k| Ok(k?.str()?.to_string())).collect()
}

/// `beta -> 100 (exp(beta) - 1)`.
#[pyfunction]
fn semi_elasticity(beta: f64) -> f64 {
    econ::semi_elasticity(beta)
}

/// OLS after absorbing fixed effects, with cluster-robust standard errors.
///
/// `regressors` maps names to columns (insertion order kept); `factors` is a
/// list of key columns; `trends` a list of `(keys, t)` pairs.
#[pyfunction]
#[pyo3(signature = (outcome, regressors, factors, clusters, trends=None, tol=1e-8, max_iter=10_000))]
#[allow(clippy::too_many_arguments)]
fn estimate_fe<'py>(
    py: Python<'py>,
    outcome: Vec<f64>,
    regressors: &Bound<'py, PyDict>,
    factors: &Bound<'py, PyList>,
    clusters: &Bound<'py, PyAny>,
    trends: Option<&Bound<'py, PyList>>,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mut regs = Vec::new();
    for (name, values) in regressors.iter() {
        let values: Vec<f64> = values.extract()?;
        let binary = values.iter().all(|&v| v == 0.0 || v == 1.0);
        regs.push(Regressor::new(&name.str()?.to_string(), values, binary));
    }
    let factors = factors
        .iter()
        .enumerate()
        .map(|(i, f)| Ok(Factor::from_keys(&format!("fe{i}"), keys(&f)?)))
        .collect::<PyResult<Vec<_>>>()?;
    let mut trend_groups = Vec::new();
    if let Some(trends) = trends {
        for (i, item) in trends.iter().enumerate() {
            let (k, t): (Bound<'py, PyAny>, Vec<f64>) = item.extract()?;
            let k = keys(&k)?;
            if k.len() != t.len() {
                return Err(ConfigError::new_err("trend keys and values differ in length"));
            }
            trend_groups.push(TrendGroup::from_keys(&format!("trend{i}"), k, t));
        }
    }
    let clusters = capdis_core::econ::absorb::encode(keys(clusters)?).0;
    let fe = FixedEffectSpec::new(factors, trend_groups);
    let opts = AbsorbOptions { tol, max_iter, threads: 1 };
    let r = py
        .detach(|| econ::estimate_fe(&outcome, &regs, &fe, &clusters, opts))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("names", &r.names)?;
    d.set_item("coef", &r.coef)?;
    d.set_item("se", &r.se)?;
    d.set_item("n_obs", r.n_obs)?;
    d.set_item("n_clusters", r.n_clusters)?;
    d.set_item("r2_within", r.r2_within)?;
    d.set_item("dropped", &r.dropped)?;
    Ok(d)
}

/// Normalized betweenness centrality of an undirected route network.
#[pyfunction]
fn betweenness(edges: Vec<(String, String)>) -> PyResult<Vec<(String, f64)>> {
    let net = CarrierNetwork::from_edges("", "", edges.iter().map(|(a, b)| (a.as_str(), b.as_str())));
    Ok(net.centrality().map_err(py_err)?.into_iter().collect())
}

/// Airports whose centrality is at least `threshold`, sorted.
#[pyfunction]
#[pyo3(signature = (edges, threshold=network::DEFAULT_HUB_THRESHOLD))]
fn hubs(edges: Vec<(String, String)>, threshold: f64) -> PyResult<Vec<String>> {
    let net = CarrierNetwork::from_edges("", "", edges.iter().map(|(a, b)| (a.as_str(), b.as_str())));
    let c = net.centrality().map_err(py_err)?;
    Ok(network::hubs(&c, threshold).into_iter().collect())
}

#[pyfunction]
fn average_time_difference(minutes: Vec<f64>) -> PyResult<f64> {
    metrics::average_time_difference(&minutes).map_err(py_err)
}

#[pyfunction]
fn normalized_crowding(minutes: Vec<f64>) -> PyResult<f64> {
    metrics::normalized_crowding(&minutes).map_err(py_err)
}

/// `rule` is `"all"` (minimum) or `"any"` (maximum).
#[pyfunction]
fn route_indicator(segments: Vec<f64>, rule: &str) -> PyResult<f64> {
    let rule = match rule {
        "all" => RouteRule::All,
        "any" => RouteRule::Any,
        other => return Err(ConfigError::new_err(format!("unknown rule `{other}` (all|any)"))),
    };
    metrics::route_indicator(&segments, rule).map_err(py_err)
}

#[pyfunction]
fn passenger_weighted(values: Vec<f64>, passengers: Vec<f64>) -> PyResult<f64> {
    metrics::passenger_weighted(&values, &passengers).map_err(py_err)
}

/// Lowercased, lemmatized tokens with stopwords removed.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    text::tokenize_lemmatize(text)
}

/// Whether management speech in a tagged transcript contains the phrase.
#[pyfunction]
fn flags_capacity_discipline(transcript: &str) -> bool {
    let pipe = text::TextPipeline::default();
    pipe.sentences(&text::strip_nonmanagement(transcript))
        .iter()
        .any(|s| text::flag_phrase(s, &text::CAPACITY_DISCIPLINE))
}

#[pyclass(name = "Embedding", module = "capdis")]
struct PyEmbedding {
    inner: embed::Embedding,
}

#[pymethods]
impl PyEmbedding {
    #[staticmethod]
    #[pyo3(signature = (sentences, dims=100, window=5, negatives=5, epochs=5, min_count=1, seed=1))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        sentences: Vec<Vec<String>>,
        dims: usize,
        window: usize,
        negatives: usize,
        epochs: usize,
        min_count: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = TrainingConfig {
            dims,
            window,
            negatives,
            epochs,
            min_count,
            seed,
            ..TrainingConfig::default()
        };
        let inner = py.detach(|| embed::Embedding::train(&sentences, &cfg)).map_err(py_err)?;
        Ok(PyEmbedding { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = std::fs::File::open(path).map_err(py_err)?;
        let inner = embed::Embedding::read_from(std::io::BufReader::new(f)).map_err(py_err)?;
        Ok(PyEmbedding { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let f = std::fs::File::create(path).map_err(py_err)?;
        self.inner.write_to(std::io::BufWriter::new(f)).map_err(py_err)
    }

    fn similarity(&self, a: &str, b: &str) -> PyResult<f64> {
        self.inner.similarity(a, b).map_err(py_err)
    }

    fn vector(&self, token: &str) -> Option<Vec<f32>> {
        self.inner.vector(token).map(<[f32]>::to_vec)
    }

    #[getter]
    fn vocab(&self) -> Vec<String> {
        self.inner.vocab.clone()
    }

    #[getter]
    fn dims(&self) -> usize {
        self.inner.dims
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, token: &str) -> bool {
        self.inner.contains(token)
    }
}

/// Writes a synthetic fixture (inputs, `truth.csv` and `capdis.conf`) to
/// `out_dir`; returns the relative file names.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=7))]
fn simulate(out_dir: &str, seed: u64) -> PyResult<Vec<String>> {
    let fx = gen_fixture(&FixtureSpec::with_seed(seed)).map_err(py_err)?;
    fx.write(Path::new(out_dir)).map_err(py_err)?;
    Ok(fx.files.keys().cloned().collect())
}

/// Runs a pipeline command (`"run-all"` for every step) and returns its text
/// summary. `overrides` use the config-file key names.
#[pyfunction]
#[pyo3(signature = (command, config=None, overrides=None))]
fn run(py: Python<'_>, command: &str, config: Option<&str>, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<String> {
    let mut cfg: RunConfig = pipeline::load_config(config.map(Path::new)).map_err(py_err)?;
    if let Some(o) = overrides {
        let cwd = std::env::current_dir().map_err(py_err)?;
        for (k, v) in o.iter() {
            let (k, v) = (k.str()?.to_string(), v.str()?.to_string());
            let v = match v.as_str() {
                "True" => "true".to_string(),
                "False" => "false".to_string(),
                _ => v,
            };
            cfg.set(&k, &v, &cwd).map_err(ConfigError::new_err)?;
        }
    }
    py.detach(|| {
        if command == "run-all" {
            return pipeline::run_pipeline(&cfg);
        }
        let cmd = Command::parse(command).ok_or_else(|| Error::Config(format!("unknown command `{command}`")))?;
        let out = pipeline::run(cmd, &cfg)?;
        pipeline::write_output(&out)?;
        Ok(out.text)
    })
    .map_err(py_err)
}

#[pymodule]
fn capdis(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("CapdisError", py.get_type::<CapdisError>())?;
    m.add("SchemaError", py.get_type::<SchemaError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add_class::<PyEmbedding>()?;
    m.add_function(wrap_pyfunction!(semi_elasticity, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_fe, m)?)?;
    m.add_function(wrap_pyfunction!(betweenness, m)?)?;
    m.add_function(wrap_pyfunction!(hubs, m)?)?;
    m.add_function(wrap_pyfunction!(average_time_difference, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_crowding, m)?)?;
    m.add_function(wrap_pyfunction!(route_indicator, m)?)?;
    m.add_function(wrap_pyfunction!(passenger_weighted, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(flags_capacity_discipline, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
