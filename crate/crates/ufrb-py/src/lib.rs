//! Python bindings for the unsupervised fuzzy rule-based dimensionality
//! reduction pipeline. Points cross the boundary as plain lists of rows.

use std::collections::HashMap;
use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use ufrb::cli::policy_default;
use ufrb::data::{normalize_unit, Dataset, NormStats};
use ufrb::fuzzy::FiringSummary;
use ufrb::graph::{build_knn_graph, default_epsilon, geodesic_all_pairs, Algorithm};
use ufrb::train::{fit_best_of, InitScheme, Objective, TrainConfig};

fn to_py_err(err: ufrb::Error) -> PyErr {
    match err {
        ufrb::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn dataset_from_rows(rows: Vec<Vec<f64>>, name: &str) -> PyResult<Dataset> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("points must be non-empty"));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("all rows must have the same length"));
    }
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let pts = Array2::from_shape_vec((n, d), flat)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Dataset::new(pts, None, name).map_err(to_py_err)
}

fn rows_from(points: &Array2<f64>) -> Vec<Vec<f64>> {
    points.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn parse_objective(name: &str) -> PyResult<Objective> {
    match name {
        "geodesic" => Ok(Objective::Geodesic),
        "sammon" => Ok(Objective::Sammon),
        other => Err(PyValueError::new_err(format!(
            "objective must be \"geodesic\" or \"sammon\", got {other:?}"
        ))),
    }
}

/// A trained projection model.
#[pyclass(module = "ufrb_py")]
pub struct Model {
    inner: ufrb::fuzzy::Model,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: ufrb::fuzzy::Model::load(&path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py_err)
    }

    /// Project raw points; returns (coords, max_firing, rejected).
    #[pyo3(signature = (points, reject_threshold = 0.15))]
    fn project(
        &self,
        points: Vec<Vec<f64>>,
        reject_threshold: f64,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, Vec<bool>)> {
        let ds = dataset_from_rows(points, "points")?;
        let proj = self
            .inner
            .project_dataset(&ds, reject_threshold)
            .map_err(to_py_err)?;
        Ok((rows_from(&proj.coords), proj.max_firing, proj.rejected))
    }

    /// Quality metrics of this model on a point set (graph rebuilt at the
    /// stored or given epsilon).
    #[pyo3(signature = (points, reject_threshold = 0.15, epsilon = None))]
    fn evaluate(
        &self,
        points: Vec<Vec<f64>>,
        reject_threshold: f64,
        epsilon: Option<usize>,
    ) -> PyResult<HashMap<String, f64>> {
        let raw = dataset_from_rows(points, "points")?;
        let model_space = self
            .inner
            .rulebase
            .norm_stats()
            .apply(&raw)
            .map_err(to_py_err)?;
        let eps = epsilon
            .unwrap_or(self.inner.epsilon)
            .clamp(1, model_space.n() - 1);
        let graph = build_knn_graph(&model_space, eps).map_err(to_py_err)?;
        let gd = geodesic_all_pairs(&graph, Algorithm::Auto).map_err(to_py_err)?;
        let proj = self
            .inner
            .rulebase
            .project_batch(&model_space, reject_threshold)
            .map_err(to_py_err)?;
        let report = ufrb::eval::evaluate(&proj, &model_space, &gd).map_err(to_py_err)?;
        Ok(HashMap::from([
            ("geodesic_stress".to_string(), report.geodesic_stress),
            ("sammon_stress".to_string(), report.sammon_stress),
            ("distance_correlation".to_string(), report.distance_correlation),
            ("rejection_rate".to_string(), report.rejection_rate),
        ]))
    }

    #[getter]
    fn n_rules(&self) -> usize {
        self.inner.rulebase.n_rules()
    }

    #[getter]
    fn d_h(&self) -> usize {
        self.inner.rulebase.d_h()
    }

    #[getter]
    fn d_l(&self) -> usize {
        self.inner.rulebase.d_l()
    }

    #[getter]
    fn epsilon(&self) -> usize {
        self.inner.epsilon
    }

    #[getter]
    fn objective(&self) -> &'static str {
        match self.inner.objective {
            Objective::Geodesic => "geodesic",
            Objective::Sammon => "sammon",
        }
    }

    /// Data-driven rejection threshold (1st percentile of training firings).
    #[getter]
    fn suggested_reject_threshold(&self) -> f64 {
        self.inner.firing_summary.p01
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n_rules={}, d_h={}, d_l={}, objective={:?})",
            self.n_rules(),
            self.d_h(),
            self.d_l(),
            self.objective()
        )
    }
}

/// Swiss roll sample; returns (points, labels).
#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn swiss_roll(n: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let ds = ufrb::data::generate_swiss_roll(n, seed).map_err(to_py_err)?;
    Ok((rows_from(ds.points()), ds.labels().unwrap().to_vec()))
}

/// S curve sample; returns (points, labels).
#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn s_curve(n: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let ds = ufrb::data::generate_s_curve(n, seed).map_err(to_py_err)?;
    Ok((rows_from(ds.points()), ds.labels().unwrap().to_vec()))
}

/// Helix sweep; returns (points, labels).
#[pyfunction]
#[pyo3(signature = (t_min = -20.0, t_max = 20.0, step = 0.02))]
fn helix(t_min: f64, t_max: f64, step: f64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let ds = ufrb::data::generate_helix(t_min, t_max, step).map_err(to_py_err)?;
    Ok((rows_from(ds.points()), ds.labels().unwrap().to_vec()))
}

/// Train a rule base on raw points. Returns the model and a report dict with
/// the initial/final stress, iteration count and winning restart seed.
#[pyfunction]
#[pyo3(signature = (
    points,
    d_l = 2,
    epsilon = None,
    n_c = None,
    objective = "geodesic",
    learning_rate = 0.1,
    momentum = 0.5,
    iterations = 1000,
    spread_ratio = 0.2,
    restarts = 1,
    seed = 0,
    normalize = false,
    gcm_iterations = 100,
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    points: Vec<Vec<f64>>,
    d_l: usize,
    epsilon: Option<usize>,
    n_c: Option<usize>,
    objective: &str,
    learning_rate: f64,
    momentum: f64,
    iterations: usize,
    spread_ratio: f64,
    restarts: usize,
    seed: u64,
    normalize: bool,
    gcm_iterations: usize,
) -> PyResult<(Model, HashMap<String, f64>)> {
    let raw = dataset_from_rows(points, "training")?;
    let objective = parse_objective(objective)?;
    let n = raw.n();

    let (model_space, stats) = if normalize {
        normalize_unit(&raw)
    } else {
        (raw.clone(), NormStats::identity(raw.dim()))
    };
    let epsilon = epsilon
        .unwrap_or_else(|| policy_default(n, default_epsilon(n)))
        .clamp(1, n - 1);
    let n_c = n_c
        .unwrap_or_else(|| policy_default(n, ((0.01 * n as f64).round() as usize).max(2)))
        .clamp(2, n);

    let graph = build_knn_graph(&model_space, epsilon).map_err(to_py_err)?;
    let gd = geodesic_all_pairs(&graph, Algorithm::Auto).map_err(to_py_err)?;

    let config = TrainConfig {
        objective,
        learning_rate,
        momentum,
        max_iter: iterations,
        spread_init_ratio: spread_ratio,
        seed,
        ..TrainConfig::default()
    };
    let outcome = fit_best_of(
        &model_space,
        &gd,
        d_l,
        n_c,
        &config,
        restarts,
        InitScheme::GcmCentroids {
            max_iter: gcm_iterations,
        },
    )
    .map_err(to_py_err)?;

    let mut rulebase = outcome.rulebase;
    rulebase.set_norm_stats(stats).map_err(to_py_err)?;
    let projection = rulebase.project_batch(&model_space, 0.0).map_err(to_py_err)?;
    let firing_summary = FiringSummary::from_values(&projection.max_firing).map_err(to_py_err)?;

    let report = HashMap::from([
        ("initial_stress".to_string(), outcome.report.initial_stress),
        ("final_stress".to_string(), outcome.report.final_stress),
        ("iterations".to_string(), outcome.report.iterations_run as f64),
        ("seed".to_string(), outcome.seed as f64),
    ]);
    let model = Model {
        inner: ufrb::fuzzy::Model {
            rulebase,
            epsilon,
            objective,
            firing_summary,
            clusters: outcome.clusters,
        },
    };
    Ok((model, report))
}

#[pymodule]
fn ufrb_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(swiss_roll, m)?)?;
    m.add_function(wrap_pyfunction!(s_curve, m)?)?;
    m.add_function(wrap_pyfunction!(helix, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    Ok(())
}
