//! First-order Takagi–Sugeno rule base: Gaussian memberships, product-norm
//! firing strengths, defuzzified projection and the output-rejection
//! decision.
//!
//! Rule `k` reads "if x_1 is close to v_k1 and ... and x_dh is close to
//! v_kdh, then y_m = a_km0 + sum_q a_kmq x_q". The projected output is the
//! firing-strength-weighted convex combination of the per-rule affine
//! outputs. Firing strengths are evaluated as `exp` of summed
//! log-memberships, which is identical to the per-feature product but holds
//! off underflow in high dimension.

use std::path::Path;

use ndarray::{Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NormStats};
use crate::gcm::ClusterResult;
use crate::train::Objective;
use crate::{Error, Result};

/// Below this total firing mass a projection is reported degenerate rather
/// than emitting NaN.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Gaussian membership `exp(-(x - v)^2 / (2 sigma^2))`.
pub fn membership(x: f64, v: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "membership spread must be > 0, got {sigma}"
        )));
    }
    let z = (x - v) / sigma;
    Ok((-0.5 * z * z).exp())
}

/// The learned model: rule centers `V`, spreads `Sigma`, consequents `A`
/// (index 0 of the last axis is the bias), plus the normalization statistics
/// of the training data. All inference operates in the normalized ("model")
/// coordinate space; callers apply [`NormStats`] to raw inputs first.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleBase {
    pub(crate) centers: Array2<f64>,     // n_c x d_h
    pub(crate) spreads: Array2<f64>,     // n_c x d_h
    pub(crate) consequents: Array3<f64>, // n_c x d_l x (d_h + 1)
    pub(crate) norm_stats: NormStats,
}

impl RuleBase {
    pub fn new(
        centers: Array2<f64>,
        spreads: Array2<f64>,
        consequents: Array3<f64>,
        norm_stats: NormStats,
    ) -> Result<Self> {
        let (n_c, d_h) = centers.dim();
        if n_c == 0 || d_h == 0 {
            return Err(Error::InvalidArgument("rule base must be non-empty".into()));
        }
        if spreads.dim() != (n_c, d_h) {
            return Err(Error::InvalidArgument("spreads shape must match centers".into()));
        }
        let (ca, _d_l, cq) = consequents.dim();
        if ca != n_c || cq != d_h + 1 {
            return Err(Error::InvalidArgument(
                "consequents must be n_c x d_l x (d_h + 1)".into(),
            ));
        }
        if norm_stats.dim() != d_h {
            return Err(Error::DimensionMismatch {
                expected: d_h,
                got: norm_stats.dim(),
            });
        }
        if spreads.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("all spreads must be > 0".into()));
        }
        if centers.iter().any(|v| !v.is_finite())
            || spreads.iter().any(|v| !v.is_finite())
            || consequents.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("rule base parameters must be finite".into()));
        }
        Ok(Self {
            centers,
            spreads,
            consequents,
            norm_stats,
        })
    }

    pub fn n_rules(&self) -> usize {
        self.centers.nrows()
    }

    pub fn d_h(&self) -> usize {
        self.centers.ncols()
    }

    pub fn d_l(&self) -> usize {
        self.consequents.dim().1
    }

    pub fn centers(&self) -> &Array2<f64> {
        &self.centers
    }

    pub fn spreads(&self) -> &Array2<f64> {
        &self.spreads
    }

    pub fn consequents(&self) -> &Array3<f64> {
        &self.consequents
    }

    pub fn norm_stats(&self) -> &NormStats {
        &self.norm_stats
    }

    pub fn set_norm_stats(&mut self, stats: NormStats) -> Result<()> {
        if stats.dim() != self.d_h() {
            return Err(Error::DimensionMismatch {
                expected: self.d_h(),
                got: stats.dim(),
            });
        }
        self.norm_stats = stats;
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d_h() {
            return Err(Error::DimensionMismatch {
                expected: self.d_h(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("input point must be finite".into()));
        }
        Ok(())
    }

    /// Log firing strength of each rule: `sum_q -(x_q - v_kq)^2 / (2 s^2)`.
    fn log_firing(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rules())
            .map(|k| {
                let mut acc = 0.0;
                for q in 0..self.d_h() {
                    let z = (x[q] - self.centers[[k, q]]) / self.spreads[[k, q]];
                    acc -= 0.5 * z * z;
                }
                acc
            })
            .collect()
    }

    /// Firing strength of every rule for input `x` (product T-norm over the
    /// per-feature Gaussian memberships).
    pub fn firing_strengths(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.log_firing(x).into_iter().map(f64::exp).collect())
    }

    /// Affine output of rule `k` for output dimension `m` (bias included).
    fn rule_output(&self, k: usize, m: usize, x: &[f64]) -> f64 {
        let mut acc = self.consequents[[k, m, 0]];
        for (q, &v) in x.iter().enumerate() {
            acc += self.consequents[[k, m, q + 1]] * v;
        }
        acc
    }

    fn eval_point(&self, x: &[f64]) -> PointEval {
        let n_c = self.n_rules();
        let d_l = self.d_l();
        let log_alpha = self.log_firing(x);
        let lmax = log_alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // If even the log scale overflowed (astronomically distant input),
        // fall back to uniform weights; the zero alpha_max still drives
        // rejection.
        let shifted: Vec<f64> = if lmax.is_finite() {
            log_alpha.iter().map(|&l| (l - lmax).exp()).collect()
        } else {
            vec![1.0; n_c]
        };
        let denom: f64 = shifted.iter().sum(); // >= 1 because the max term is 1
        let alpha_max = if lmax.is_finite() { lmax.exp() } else { 0.0 };
        let mut y = vec![0.0; d_l];
        let mut weights = Vec::with_capacity(n_c);
        let mut rule_out = vec![0.0; n_c * d_l];
        for k in 0..n_c {
            let w = shifted[k] / denom;
            weights.push(w);
            for m in 0..d_l {
                let g = self.rule_output(k, m, x);
                rule_out[k * d_l + m] = g;
                y[m] += w * g;
            }
        }
        PointEval {
            y,
            weights,
            rule_out,
            alpha_max,
            alpha_sum: alpha_max * denom,
        }
    }

    /// Project a single point, returning its low-dimensional coordinates and
    /// the maximum rule firing strength. Fails with a degenerate-firing error
    /// when the total firing mass underflows; batch callers map that case to
    /// rejection instead.
    pub fn project(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_input(x)?;
        let eval = self.eval_point(x);
        if eval.alpha_sum < UNDERFLOW_FLOOR {
            return Err(Error::DegenerateFiring);
        }
        Ok((eval.y, eval.alpha_max))
    }

    /// Project every row of a dataset and flag rows whose maximum firing
    /// strength falls below `reject_threshold`. Coordinates are computed for
    /// all rows; flagged rows are simply marked untrusted.
    pub fn project_batch(&self, dataset: &Dataset, reject_threshold: f64) -> Result<Projection> {
        if dataset.dim() != self.d_h() {
            return Err(Error::DimensionMismatch {
                expected: self.d_h(),
                got: dataset.dim(),
            });
        }
        if !(0.0..1.0).contains(&reject_threshold) {
            return Err(Error::InvalidArgument(format!(
                "reject threshold must lie in [0, 1), got {reject_threshold}"
            )));
        }
        let evals: Vec<PointEval> = (0..dataset.n())
            .into_par_iter()
            .map(|i| self.eval_point(dataset.row(i)))
            .collect();
        let d_l = self.d_l();
        let mut coords = Array2::zeros((dataset.n(), d_l));
        let mut max_firing = Vec::with_capacity(dataset.n());
        let mut rejected = Vec::with_capacity(dataset.n());
        for (i, e) in evals.into_iter().enumerate() {
            for m in 0..d_l {
                coords[[i, m]] = e.y[m];
            }
            max_firing.push(e.alpha_max);
            rejected.push(e.alpha_max < reject_threshold);
        }
        Ok(Projection {
            coords,
            max_firing,
            rejected,
        })
    }

    /// Batch evaluation with the intermediates the trainer needs.
    pub(crate) fn eval_batch(&self, dataset: &Dataset) -> BatchEval {
        let n = dataset.n();
        let n_c = self.n_rules();
        let d_l = self.d_l();
        let evals: Vec<PointEval> = (0..n)
            .into_par_iter()
            .map(|i| self.eval_point(dataset.row(i)))
            .collect();
        let mut weights = Array2::zeros((n, n_c));
        let mut rule_out = Array3::zeros((n, n_c, d_l));
        let mut y = Array2::zeros((n, d_l));
        for (i, e) in evals.into_iter().enumerate() {
            for k in 0..n_c {
                weights[[i, k]] = e.weights[k];
                for m in 0..d_l {
                    rule_out[[i, k, m]] = e.rule_out[k * d_l + m];
                }
            }
            for m in 0..d_l {
                y[[i, m]] = e.y[m];
            }
        }
        BatchEval { weights, rule_out, y }
    }
}

struct PointEval {
    y: Vec<f64>,
    weights: Vec<f64>,
    rule_out: Vec<f64>, // k-major, length n_c * d_l
    alpha_max: f64,
    alpha_sum: f64,
}

pub(crate) struct BatchEval {
    pub weights: Array2<f64>,  // n x n_c, normalized firing
    pub rule_out: Array3<f64>, // n x n_c x d_l
    pub y: Array2<f64>,        // n x d_l
}

/// Projected coordinates with per-point maximum firing strength and reject
/// flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Array2<f64>,
    pub max_firing: Vec<f64>,
    pub rejected: Vec<bool>,
}

impl Projection {
    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn d_l(&self) -> usize {
        self.coords.ncols()
    }

    pub fn rejection_rate(&self) -> f64 {
        self.rejected.iter().filter(|&&r| r).count() as f64 / self.rejected.len().max(1) as f64
    }
}

/// Data-driven rejection threshold: the 1st percentile of the training
/// maximum firing strengths, floored at 0. A point firing below this is
/// weaker than essentially all training points were.
pub fn suggest_reject_threshold(train_max_firings: &[f64]) -> Result<f64> {
    if train_max_firings.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot suggest a threshold from an empty firing vector".into(),
        ));
    }
    let mut sorted = train_max_firings.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = (0.01 * (sorted.len() - 1) as f64).floor() as usize;
    Ok(sorted[idx].max(0.0))
}

/// Summary of the training max-firing distribution stored in the model file:
/// extremes, low quantile, median, mean and a 20-bin histogram over [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiringSummary {
    pub min: f64,
    pub p01: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
    pub histogram: Vec<u64>,
}

impl FiringSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty firing vector".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mut histogram = vec![0u64; 20];
        for &v in values {
            let bin = ((v * 20.0).floor() as usize).min(19);
            histogram[bin] += 1;
        }
        Ok(Self {
            min: sorted[0],
            p01: suggest_reject_threshold(values)?,
            median: sorted[sorted.len() / 2],
            mean: values.iter().sum::<f64>() / values.len() as f64,
            max: sorted[sorted.len() - 1],
            histogram,
        })
    }
}

/// A trained model as persisted to disk: the rule base plus the training
/// metadata needed to reproduce and sanity-check projections.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub rulebase: RuleBase,
    pub epsilon: usize,
    pub objective: Objective,
    pub firing_summary: FiringSummary,
    pub clusters: Option<ClusterResult>,
}

pub const MODEL_SCHEMA: &str = "ufrb-model/1";

#[derive(Serialize, Deserialize)]
struct ModelFileV1 {
    schema: String,
    d_h: usize,
    d_l: usize,
    n_c: usize,
    centers: Vec<Vec<f64>>,
    spreads: Vec<Vec<f64>>,
    consequents: Vec<Vec<Vec<f64>>>,
    norm_stats: NormStats,
    epsilon: usize,
    objective: Objective,
    firing_summary: FiringSummary,
    clusters: Option<ClusterResult>,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl Model {
    /// Apply the stored normalization to raw inputs, then project.
    pub fn project_dataset(&self, raw: &Dataset, reject_threshold: f64) -> Result<Projection> {
        let normalized = self.rulebase.norm_stats().apply(raw)?;
        self.rulebase.project_batch(&normalized, reject_threshold)
    }

    /// Serialize as the versioned `ufrb-model/1` document. Values are written
    /// with shortest round-trip precision, so load followed by save is
    /// value-exact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let rb = &self.rulebase;
        let (n_c, d_l, _) = rb.consequents.dim();
        let file = ModelFileV1 {
            schema: MODEL_SCHEMA.to_string(),
            d_h: rb.d_h(),
            d_l,
            n_c,
            centers: rows(&rb.centers),
            spreads: rows(&rb.spreads),
            consequents: (0..n_c)
                .map(|k| {
                    (0..d_l)
                        .map(|m| (0..=rb.d_h()).map(|q| rb.consequents[[k, m, q]]).collect())
                        .collect()
                })
                .collect(),
            norm_stats: rb.norm_stats.clone(),
            epsilon: self.epsilon,
            objective: self.objective,
            firing_summary: self.firing_summary.clone(),
            clusters: self.clusters.clone(),
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFileV1 = serde_json::from_str(&text)
            .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::ModelFormat(format!(
                "unsupported schema {:?}, expected {MODEL_SCHEMA:?}",
                file.schema
            )));
        }
        let centers = nested_to_array2(&file.centers, file.n_c, file.d_h, "centers")?;
        let spreads = nested_to_array2(&file.spreads, file.n_c, file.d_h, "spreads")?;
        let mut consequents = Array3::zeros((file.n_c, file.d_l, file.d_h + 1));
        if file.consequents.len() != file.n_c {
            return Err(Error::ModelFormat("consequents: wrong rule count".into()));
        }
        for (k, per_rule) in file.consequents.iter().enumerate() {
            if per_rule.len() != file.d_l {
                return Err(Error::ModelFormat("consequents: wrong output count".into()));
            }
            for (m, coeffs) in per_rule.iter().enumerate() {
                if coeffs.len() != file.d_h + 1 {
                    return Err(Error::ModelFormat("consequents: wrong coefficient count".into()));
                }
                for (q, &v) in coeffs.iter().enumerate() {
                    consequents[[k, m, q]] = v;
                }
            }
        }
        let rulebase = RuleBase::new(centers, spreads, consequents, file.norm_stats)
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        Ok(Model {
            rulebase,
            epsilon: file.epsilon,
            objective: file.objective,
            firing_summary: file.firing_summary,
            clusters: file.clusters,
        })
    }
}

fn nested_to_array2(
    rows: &[Vec<f64>],
    nr: usize,
    nc: usize,
    what: &str,
) -> Result<Array2<f64>> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::ModelFormat(format!("{what}: wrong shape")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((nr, nc), flat).expect("shape checked"))
}
