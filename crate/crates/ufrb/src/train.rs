//! Objective evaluation, analytic gradients and the momentum gradient
//! descent loop that refines all rule base parameters.
//!
//! Both objectives accumulate `(d_ij - ||y_i - y_j||)^2 / d_ij` over
//! unordered point pairs; they differ in the reference distances `d` and in
//! the normalizer:
//!
//! ```text
//! geodesic:  E = (1 / #pairs)        * sum_{i<j} (d_ij - e_ij)^2 / d_ij
//! sammon:    E = (1 / sum_{i<j} d_ij) * sum_{i<j} (d_ij - e_ij)^2 / d_ij
//! ```
//!
//! The geodesic stress averages over pairs, which keeps gradient magnitudes
//! independent of the dataset size and makes the stock learning rate of 0.1
//! behave identically at any n; the Sammon stress carries the classical
//! `1 / sum d` prefactor. Pairs with a zero reference distance (duplicate
//! points) are excluded with a warning.
//!
//! The gradients with respect to the centers `V`, spreads `Sigma` and
//! consequents `A` are derived by the chain rule through the normalized
//! TS output and verified against central finite differences in the tests.
//! Writing `w_k(x)` for the normalized firing strength, `g_km(x)` for rule
//! k's affine output and `r_im = dE/dy_im` for the pairwise residual:
//!
//! ```text
//! dE/da_kmq     = sum_i r_im * w_k(x_i) * x_iq              (x_i0 = 1)
//! dE/dv_kq      = sum_i sum_m r_im * w_k(x_i) * (g_km - y_im)
//!                         * (x_iq - v_kq) / sigma_kq^2
//! dE/dsigma_kq  = sum_i sum_m r_im * w_k(x_i) * (g_km - y_im)
//!                         * (x_iq - v_kq)^2 / sigma_kq^3
//! ```
//!
//! The update rule is plain momentum descent: `delta_t = -grad + momentum *
//! delta_{t-1}`, `theta_t = theta_{t-1} + lr * delta_t`, with all momentum
//! buffers starting at zero.

use std::path::Path;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NormStats};
use crate::fuzzy::{BatchEval, RuleBase};
use crate::gcm::{gcm_cluster, ClusterResult};
use crate::graph::GeodesicMatrix;
use crate::{Error, Result};

/// Which reference distances the stress preserves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Preserve shortest-path distances over the neighborhood graph.
    Geodesic,
    /// Preserve plain Euclidean input distances (classical Sammon stress).
    Sammon,
}

/// Optimizer and objective hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_iter: usize,
    /// Initial spread as a multiple of the feature-specific range.
    pub spread_init_ratio: f64,
    pub consequent_init_range: (f64, f64),
    pub seed: u64,
    /// Record the stress every this many iterations (0th and last always).
    pub log_every: usize,
    /// Optional relative-change early stop; off by default to run the full
    /// iteration budget.
    pub early_stop: Option<f64>,
    /// Optional pair subsampling for large n: gradient uses this many random
    /// pairs per iteration instead of all n(n-1)/2.
    pub pair_sample: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Geodesic,
            learning_rate: 0.1,
            momentum: 0.5,
            max_iter: 1000,
            spread_init_ratio: 0.2,
            consequent_init_range: (-0.5, 0.5),
            seed: 0,
            log_every: 10,
            early_stop: None,
            pair_sample: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must lie in [0, 1)".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        if !(self.spread_init_ratio > 0.0) {
            return Err(Error::InvalidArgument("spread ratio must be > 0".into()));
        }
        if self.consequent_init_range.0 >= self.consequent_init_range.1 {
            return Err(Error::InvalidArgument(
                "consequent init range must satisfy low < high".into(),
            ));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidArgument("log_every must be >= 1".into()));
        }
        if self.early_stop.is_some() && self.pair_sample.is_some() {
            return Err(Error::InvalidArgument(
                "early stop needs the full-batch objective; disable pair sampling".into(),
            ));
        }
        Ok(())
    }
}

/// Objective values recorded over a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// `(iterations_done, stress)` at each logged step.
    pub stress_trace: Vec<(usize, f64)>,
    pub initial_stress: f64,
    pub final_stress: f64,
    pub iterations_run: usize,
}

impl TrainReport {
    /// Trace as CSV for plotting learning curves.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("iteration,stress\n");
        for &(it, s) in &self.stress_trace {
            out.push_str(&format!("{it},{s}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

fn feature_ranges(dataset: &Dataset) -> Vec<f64> {
    let d = dataset.dim();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for i in 0..dataset.n() {
        for (q, &v) in dataset.row(i).iter().enumerate() {
            min[q] = min[q].min(v);
            max[q] = max[q].max(v);
        }
    }
    min.iter().zip(&max).map(|(lo, hi)| hi - lo).collect()
}

fn check_d_l(d_l: usize) -> Result<()> {
    if !(d_l == 2 || d_l == 3) {
        return Err(Error::InvalidArgument(format!(
            "output dimension must be 2 or 3, got {d_l}"
        )));
    }
    Ok(())
}

/// Spread initialization shared by both init schemes: `ratio` times the
/// feature-specific range, the same for every rule. A constant feature has no
/// range to scale, so it falls back to `ratio * 1.0` with a warning.
fn initial_spreads(dataset: &Dataset, n_c: usize, ratio: f64) -> Array2<f64> {
    let ranges = feature_ranges(dataset);
    let mut spreads = Array2::zeros((n_c, dataset.dim()));
    for (q, &range) in ranges.iter().enumerate() {
        let sigma = if range > 0.0 {
            ratio * range
        } else {
            log::warn!("feature {q} has zero range; spread falls back to {ratio} * 1.0");
            ratio
        };
        for k in 0..n_c {
            spreads[[k, q]] = sigma;
        }
    }
    spreads
}

fn random_consequents(
    rng: &mut ChaCha8Rng,
    n_c: usize,
    d_l: usize,
    d_h: usize,
    range: (f64, f64),
) -> Array3<f64> {
    Array3::from_shape_fn((n_c, d_l, d_h + 1), |_| rng.random_range(range.0..range.1))
}

/// Build the initial rule base from GCM centroids: centers are the snapped
/// centroid coordinates, spreads are `ratio * feature range`, consequents are
/// sampled uniformly from the configured range with the seeded generator.
pub fn init_rulebase(
    dataset: &Dataset,
    clusters: &ClusterResult,
    d_l: usize,
    config: &TrainConfig,
) -> Result<RuleBase> {
    check_d_l(d_l)?;
    config.validate()?;
    let n_c = clusters.centroid_indices.len();
    let d_h = dataset.dim();
    if clusters.assignment.len() != dataset.n() {
        return Err(Error::DimensionMismatch {
            expected: dataset.n(),
            got: clusters.assignment.len(),
        });
    }
    let mut centers = Array2::zeros((n_c, d_h));
    for (k, &idx) in clusters.centroid_indices.iter().enumerate() {
        if idx >= dataset.n() {
            return Err(Error::InvalidArgument(format!(
                "centroid index {idx} out of range"
            )));
        }
        for (q, &v) in dataset.row(idx).iter().enumerate() {
            centers[[k, q]] = v;
        }
    }
    let spreads = initial_spreads(dataset, n_c, config.spread_init_ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let consequents =
        random_consequents(&mut rng, n_c, d_l, d_h, config.consequent_init_range);
    RuleBase::new(centers, spreads, consequents, NormStats::identity(d_h))
}

/// Alternative antecedent initialization used in the robustness study: rule
/// centers are uniform random points from the smallest hyperbox containing
/// the training data.
pub fn init_rulebase_hyperbox(
    dataset: &Dataset,
    n_c: usize,
    d_l: usize,
    config: &TrainConfig,
) -> Result<RuleBase> {
    check_d_l(d_l)?;
    config.validate()?;
    if n_c < 1 {
        return Err(Error::InvalidArgument("need at least one rule".into()));
    }
    let d_h = dataset.dim();
    let mut min = vec![f64::INFINITY; d_h];
    let mut max = vec![f64::NEG_INFINITY; d_h];
    for i in 0..dataset.n() {
        for (q, &v) in dataset.row(i).iter().enumerate() {
            min[q] = min[q].min(v);
            max[q] = max[q].max(v);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers = Array2::from_shape_fn((n_c, d_h), |(_, q)| {
        if max[q] > min[q] {
            rng.random_range(min[q]..max[q])
        } else {
            min[q]
        }
    });
    let spreads = initial_spreads(dataset, n_c, config.spread_init_ratio);
    let consequents =
        random_consequents(&mut rng, n_c, d_l, d_h, config.consequent_init_range);
    RuleBase::new(centers, spreads, consequents, NormStats::identity(d_h))
}

/// The `1 / normalizer` factor for the full pair set: pair count for the
/// geodesic stress, total reference mass for the Sammon stress. Zero-distance
/// pairs (duplicates) are excluded with a warning. Errors if nothing is left
/// to preserve.
fn pair_normalizer(reference: &GeodesicMatrix, kind: Objective) -> Result<f64> {
    let n = reference.n();
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut zeros = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = reference.get(i, j);
            if d > 0.0 {
                sum += d;
                count += 1;
            } else {
                zeros += 1;
            }
        }
    }
    if zeros > 0 {
        log::warn!("{zeros} zero-distance pair(s) excluded from the objective (duplicates)");
    }
    if count == 0 {
        return Err(Error::InvalidArgument(
            "all reference distances are zero; nothing to preserve".into(),
        ));
    }
    Ok(match kind {
        Objective::Geodesic => 1.0 / count as f64,
        Objective::Sammon => 1.0 / sum,
    })
}

/// Stress over all pairs, and the residual dE/dy needed by the parameter
/// gradients. `pair_norm` is `1 / sum of included reference distances`.
fn pair_pass(y: &Array2<f64>, reference: &GeodesicMatrix, pair_norm: f64) -> (f64, Array2<f64>) {
    let n = y.nrows();
    let d_l = y.ncols();
    let ys = y.as_slice().expect("row-major");
    let per_row: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = &ys[i * d_l..(i + 1) * d_l];
            let mut res = vec![0.0; d_l];
            let mut stress_i = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = reference.get(i, j);
                if d <= 0.0 {
                    continue; // excluded duplicate pair
                }
                let yj = &ys[j * d_l..(j + 1) * d_l];
                let mut e2 = 0.0;
                for m in 0..d_l {
                    let diff = yi[m] - yj[m];
                    e2 += diff * diff;
                }
                let e = e2.sqrt();
                if j > i {
                    let miss = d - e;
                    stress_i += miss * miss / d;
                }
                if e > 0.0 {
                    // d/dy_i of (d - e)^2 / d  =  2 (e - d) / (d e) * (y_i - y_j)
                    let beta = 2.0 * (e - d) / (d * e);
                    for m in 0..d_l {
                        res[m] += beta * (yi[m] - yj[m]);
                    }
                }
                // e == 0: subgradient 0 for the norm term.
            }
            (stress_i, res)
        })
        .collect();

    let mut residual = Array2::zeros((n, d_l));
    let mut stress = 0.0;
    for (i, (s, res)) in per_row.into_iter().enumerate() {
        stress += s;
        for m in 0..d_l {
            residual[[i, m]] = res[m] * pair_norm;
        }
    }
    (stress * pair_norm, residual)
}

/// Same residual computation restricted to a sampled set of unordered pairs,
/// normalized by the sampled pair count or reference mass per the objective.
fn pair_pass_sampled(
    y: &Array2<f64>,
    reference: &GeodesicMatrix,
    pairs: &[(usize, usize)],
    kind: Objective,
) -> (f64, Array2<f64>) {
    let d_l = y.ncols();
    let mut residual = Array2::zeros((y.nrows(), d_l));
    let mut stress = 0.0;
    let mut mass = 0.0;
    for &(i, j) in pairs {
        let d = reference.get(i, j);
        mass += d;
        let mut e2 = 0.0;
        for m in 0..d_l {
            let diff = y[[i, m]] - y[[j, m]];
            e2 += diff * diff;
        }
        let e = e2.sqrt();
        let miss = d - e;
        stress += miss * miss / d;
        if e > 0.0 {
            let beta = 2.0 * (e - d) / (d * e);
            for m in 0..d_l {
                let delta = beta * (y[[i, m]] - y[[j, m]]);
                residual[[i, m]] += delta;
                residual[[j, m]] -= delta;
            }
        }
    }
    let norm = match kind {
        Objective::Geodesic => pairs.len() as f64,
        Objective::Sammon => mass,
    };
    if norm > 0.0 {
        residual.mapv_inplace(|v| v / norm);
        stress /= norm;
    }
    (stress, residual)
}

fn sample_pairs(
    rng: &mut ChaCha8Rng,
    n: usize,
    reference: &GeodesicMatrix,
    count: usize,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(count);
    let mut guard = 0usize;
    while pairs.len() < count && guard < count * 20 {
        guard += 1;
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j || reference.get(i, j) <= 0.0 {
            continue;
        }
        pairs.push((i.min(j), i.max(j)));
    }
    pairs
}

/// Gradient of the stress with respect to every rule base parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub centers: Array2<f64>,
    pub spreads: Array2<f64>,
    pub consequents: Array3<f64>,
}

impl Gradients {
    fn zeros_like(rb: &RuleBase) -> Self {
        Self {
            centers: Array2::zeros(rb.centers().dim()),
            spreads: Array2::zeros(rb.spreads().dim()),
            consequents: Array3::zeros(rb.consequents().dim()),
        }
    }

    /// Largest absolute entry across all three tensors.
    pub fn max_abs(&self) -> f64 {
        self.centers
            .iter()
            .chain(self.spreads.iter())
            .chain(self.consequents.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// Chain the pairwise residual through the TS output into parameter space.
fn param_gradients(
    rb: &RuleBase,
    dataset: &Dataset,
    fwd: &BatchEval,
    residual: &Array2<f64>,
) -> Gradients {
    let n = dataset.n();
    let n_c = rb.n_rules();
    let d_h = rb.d_h();
    let d_l = rb.d_l();
    let centers = rb.centers();
    let spreads = rb.spreads();

    // Each rule's gradient rows are independent; collected in rule order so
    // the reduction is deterministic for any thread count.
    let per_rule: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n_c)
        .into_par_iter()
        .map(|k| {
            let mut dv = vec![0.0; d_h];
            let mut dsigma = vec![0.0; d_h];
            let mut da = vec![0.0; d_l * (d_h + 1)];
            for i in 0..n {
                let w = fwd.weights[[i, k]];
                if w == 0.0 {
                    continue;
                }
                let x = dataset.row(i);
                let mut shared = 0.0;
                for m in 0..d_l {
                    let r = residual[[i, m]];
                    shared += r * (fwd.rule_out[[i, k, m]] - fwd.y[[i, m]]);
                    let c = r * w;
                    da[m * (d_h + 1)] += c;
                    for q in 0..d_h {
                        da[m * (d_h + 1) + q + 1] += c * x[q];
                    }
                }
                if shared != 0.0 {
                    let sw = shared * w;
                    for q in 0..d_h {
                        let sigma = spreads[[k, q]];
                        let diff = x[q] - centers[[k, q]];
                        let t = diff / (sigma * sigma);
                        dv[q] += sw * t;
                        dsigma[q] += sw * t * diff / sigma;
                    }
                }
            }
            (dv, dsigma, da)
        })
        .collect();

    let mut grads = Gradients {
        centers: Array2::zeros((n_c, d_h)),
        spreads: Array2::zeros((n_c, d_h)),
        consequents: Array3::zeros((n_c, d_l, d_h + 1)),
    };
    for (k, (dv, dsigma, da)) in per_rule.into_iter().enumerate() {
        for q in 0..d_h {
            grads.centers[[k, q]] = dv[q];
            grads.spreads[[k, q]] = dsigma[q];
        }
        for m in 0..d_l {
            for q in 0..=d_h {
                grads.consequents[[k, m, q]] = da[m * (d_h + 1) + q];
            }
        }
    }
    grads
}

fn check_shapes(rb: &RuleBase, dataset: &Dataset, reference: &GeodesicMatrix) -> Result<()> {
    if dataset.dim() != rb.d_h() {
        return Err(Error::DimensionMismatch {
            expected: rb.d_h(),
            got: dataset.dim(),
        });
    }
    if reference.n() != dataset.n() {
        return Err(Error::DimensionMismatch {
            expected: dataset.n(),
            got: reference.n(),
        });
    }
    Ok(())
}

/// The stress objective for an explicit output configuration `y` against a
/// reference distance matrix. `kind` names which distances the matrix holds
/// (geodesic or Euclidean); the normalized functional form is shared.
pub fn stress(y: &Array2<f64>, reference: &GeodesicMatrix, kind: Objective) -> Result<f64> {
    if y.nrows() != reference.n() {
        return Err(Error::DimensionMismatch {
            expected: reference.n(),
            got: y.nrows(),
        });
    }
    if y.nrows() < 2 {
        return Err(Error::InsufficientData("stress needs at least 2 points".into()));
    }
    let norm = pair_normalizer(reference, kind)?;
    let (stress, _) = pair_pass(y, reference, norm);
    Ok(stress)
}

/// Analytic gradients of the stress for the current rule base over a full
/// pairwise pass.
pub fn gradients(
    rb: &RuleBase,
    dataset: &Dataset,
    reference: &GeodesicMatrix,
    kind: Objective,
) -> Result<Gradients> {
    check_shapes(rb, dataset, reference)?;
    let norm = pair_normalizer(reference, kind)?;
    let fwd = rb.eval_batch(dataset);
    let (_, residual) = pair_pass(&fwd.y, reference, norm);
    Ok(param_gradients(rb, dataset, &fwd, &residual))
}

/// Momentum gradient descent over the full rule base. Returns the refined
/// rule base and the stress trace. Spreads are clamped from below at
/// `1e-3 * feature range` so memberships cannot collapse.
pub fn fit(
    rulebase: RuleBase,
    dataset: &Dataset,
    reference: &GeodesicMatrix,
    config: &TrainConfig,
) -> Result<(RuleBase, TrainReport)> {
    config.validate()?;
    check_shapes(&rulebase, dataset, reference)?;
    let mut rb = rulebase;
    let pair_norm = pair_normalizer(reference, config.objective)?;
    let sigma_floor: Vec<f64> = feature_ranges(dataset)
        .iter()
        .map(|&r| 1e-3 * if r > 0.0 { r } else { 1.0 })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity = Gradients::zeros_like(&rb);
    let mut trace: Vec<(usize, f64)> = Vec::new();
    let mut initial_stress = f64::NAN;
    let mut prev_stress: Option<f64> = None;
    let mut iterations_run = 0;

    for t in 1..=config.max_iter {
        let fwd = rb.eval_batch(dataset);
        let done = t - 1; // updates applied so far
        let want_log = done % config.log_every == 0;

        let (grad_stress, residual, full_stress) = match config.pair_sample {
            Some(count) => {
                let pairs = sample_pairs(&mut rng, dataset.n(), reference, count);
                let (s, r) = pair_pass_sampled(&fwd.y, reference, &pairs, config.objective);
                let full = if t == 1 || want_log {
                    Some(pair_pass(&fwd.y, reference, pair_norm).0)
                } else {
                    None
                };
                (s, r, full)
            }
            None => {
                let (s, r) = pair_pass(&fwd.y, reference, pair_norm);
                (s, r, Some(s))
            }
        };
        if !grad_stress.is_finite() || full_stress.is_some_and(|s| !s.is_finite()) {
            return Err(Error::NonFiniteStress { iteration: t });
        }
        if t == 1 {
            initial_stress = full_stress.expect("first iteration always evaluates fully");
        }
        if want_log {
            trace.push((done, full_stress.expect("logged iterations evaluate fully")));
        }
        if let (Some(tol), Some(prev)) = (config.early_stop, prev_stress) {
            let current = full_stress.expect("early stop implies full batch");
            if (prev - current).abs() <= tol * prev.abs().max(f64::MIN_POSITIVE) {
                iterations_run = done;
                break;
            }
        }
        prev_stress = full_stress;

        let grads = param_gradients(&rb, dataset, &fwd, &residual);
        step(&mut velocity.centers, &mut rb.centers, &grads.centers, config);
        step(&mut velocity.spreads, &mut rb.spreads, &grads.spreads, config);
        step3(&mut velocity.consequents, &mut rb.consequents, &grads.consequents, config);
        for k in 0..rb.n_rules() {
            for q in 0..rb.d_h() {
                if rb.spreads[[k, q]] < sigma_floor[q] {
                    rb.spreads[[k, q]] = sigma_floor[q];
                }
            }
        }
        if rb.centers.iter().any(|v| !v.is_finite())
            || rb.spreads.iter().any(|v| !v.is_finite())
            || rb.consequents.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFiniteStress { iteration: t });
        }
        iterations_run = t;
    }

    let fwd = rb.eval_batch(dataset);
    let (final_stress, _) = pair_pass(&fwd.y, reference, pair_norm);
    if !final_stress.is_finite() {
        return Err(Error::NonFiniteStress {
            iteration: iterations_run,
        });
    }
    match trace.last() {
        Some(&(it, _)) if it == iterations_run => {
            let last = trace.len() - 1;
            trace[last] = (iterations_run, final_stress);
        }
        _ => trace.push((iterations_run, final_stress)),
    }

    Ok((
        rb,
        TrainReport {
            stress_trace: trace,
            initial_stress,
            final_stress,
            iterations_run,
        },
    ))
}

fn step(velocity: &mut Array2<f64>, param: &mut Array2<f64>, grad: &Array2<f64>, cfg: &TrainConfig) {
    velocity.zip_mut_with(grad, |v, &g| *v = cfg.momentum * *v - g);
    param.zip_mut_with(velocity, |p, &v| *p += cfg.learning_rate * v);
}

fn step3(velocity: &mut Array3<f64>, param: &mut Array3<f64>, grad: &Array3<f64>, cfg: &TrainConfig) {
    velocity.zip_mut_with(grad, |v, &g| *v = cfg.momentum * *v - g);
    param.zip_mut_with(velocity, |p, &v| *p += cfg.learning_rate * v);
}

/// How to seed the rule antecedents before descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Geodesic c-means centroids (the default pipeline).
    GcmCentroids { max_iter: usize },
    /// Uniform random centers from the data hyperbox (robustness baseline).
    RandomHyperbox,
}

/// One fitted candidate out of a restart sweep.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub rulebase: RuleBase,
    pub report: TrainReport,
    pub clusters: Option<ClusterResult>,
    pub seed: u64,
}

/// Run `restarts` independent training runs (seeds `seed, seed+1, ...`) and
/// keep the one with the minimum final objective value. Clustering and
/// consequent initialization are re-drawn per restart; the reference matrix
/// follows the configured objective (geodesics, or Euclidean distances for
/// the Sammon stress).
pub fn fit_best_of(
    dataset: &Dataset,
    geodesics: &GeodesicMatrix,
    d_l: usize,
    n_c: usize,
    config: &TrainConfig,
    restarts: usize,
    scheme: InitScheme,
) -> Result<FitOutcome> {
    if restarts < 1 {
        return Err(Error::InvalidArgument("need at least one restart".into()));
    }
    let euclidean_reference = match config.objective {
        Objective::Geodesic => None,
        Objective::Sammon => Some(GeodesicMatrix::euclidean(dataset)),
    };
    let reference = euclidean_reference.as_ref().unwrap_or(geodesics);

    let mut best: Option<FitOutcome> = None;
    for r in 0..restarts {
        let seed = config.seed.wrapping_add(r as u64);
        let run_config = TrainConfig {
            seed,
            ..config.clone()
        };
        let (rb, clusters) = match scheme {
            InitScheme::GcmCentroids { max_iter } => {
                let clusters = gcm_cluster(dataset, geodesics, n_c, max_iter, seed)?;
                let rb = init_rulebase(dataset, &clusters, d_l, &run_config)?;
                (rb, Some(clusters))
            }
            InitScheme::RandomHyperbox => {
                (init_rulebase_hyperbox(dataset, n_c, d_l, &run_config)?, None)
            }
        };
        let (rb, report) = fit(rb, dataset, reference, &run_config)?;
        let better = best
            .as_ref()
            .map(|b| report.final_stress < b.report.final_stress)
            .unwrap_or(true);
        if better {
            best = Some(FitOutcome {
                rulebase: rb,
                report,
                clusters,
                seed,
            });
        }
    }
    Ok(best.expect("restarts >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_swiss_roll;
    use crate::graph::{build_knn_graph, geodesic_all_pairs, Algorithm};
    use ndarray::{arr2, Array2};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_chain(n: usize) -> (Dataset, GeodesicMatrix) {
        let pts = Array2::from_shape_fn((n, 2), |(i, q)| if q == 0 { i as f64 } else { 0.0 });
        let ds = Dataset::new(pts, None, "line").unwrap();
        let g = build_knn_graph(&ds, 1).unwrap();
        let gd = geodesic_all_pairs(&g, Algorithm::Auto).unwrap();
        (ds, gd)
    }

    fn random_problem(
        n: usize,
        d_h: usize,
        n_c: usize,
        d_l: usize,
        seed: u64,
    ) -> (Dataset, GeodesicMatrix, RuleBase) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = Array2::from_shape_fn((n, d_h), |_| rng.random_range(-1.0..1.0));
        let ds = Dataset::new(pts, None, "rand").unwrap();
        // Smallest epsilon that yields a connected graph, for determinism.
        let gd = (2..n)
            .find_map(|eps| {
                let g = build_knn_graph(&ds, eps).unwrap();
                geodesic_all_pairs(&g, Algorithm::Auto).ok()
            })
            .expect("some epsilon connects the cloud");
        let clusters = gcm_cluster(&ds, &gd, n_c, 50, seed).unwrap();
        let config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let rb = init_rulebase(&ds, &clusters, d_l, &config).unwrap();
        (ds, gd, rb)
    }

    /// Naive double-loop stress, kept deliberately independent of the
    /// production summation path.
    fn stress_oracle(y: &Array2<f64>, reference: &GeodesicMatrix, kind: Objective) -> f64 {
        let n = y.nrows();
        let mut num = 0.0;
        let mut mass = 0.0;
        let mut pairs = 0.0;
        for i in 0..(n - 1) {
            for j in (i + 1)..n {
                let d = reference.get(i, j);
                if d <= 0.0 {
                    continue;
                }
                let mut e2 = 0.0;
                for m in 0..y.ncols() {
                    e2 += (y[[i, m]] - y[[j, m]]).powi(2);
                }
                let e = e2.sqrt();
                num += (d - e) * (d - e) / d;
                mass += d;
                pairs += 1.0;
            }
        }
        match kind {
            Objective::Geodesic => num / pairs,
            Objective::Sammon => num / mass,
        }
    }

    #[test]
    fn spread_initialization_uses_feature_range() {
        // Features with unit range -> sigma exactly equals the ratio.
        let pts = arr2(&[[0.0, 10.0], [0.5, 10.5], [1.0, 11.0]]);
        let ds = Dataset::new(pts, None, "unit").unwrap();
        let g = build_knn_graph(&ds, 1).unwrap();
        let gd = geodesic_all_pairs(&g, Algorithm::Auto).unwrap();
        let clusters = gcm_cluster(&ds, &gd, 2, 10, 0).unwrap();
        for ratio in [0.2, 0.4] {
            let config = TrainConfig {
                spread_init_ratio: ratio,
                ..TrainConfig::default()
            };
            let rb = init_rulebase(&ds, &clusters, 2, &config).unwrap();
            assert!(rb.spreads().iter().all(|&s| (s - ratio).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_range_feature_falls_back() {
        let pts = arr2(&[[0.0, 7.0], [1.0, 7.0], [2.0, 7.0]]);
        let ds = Dataset::new(pts, None, "flat").unwrap();
        let g = build_knn_graph(&ds, 1).unwrap();
        let gd = geodesic_all_pairs(&g, Algorithm::Auto).unwrap();
        let clusters = gcm_cluster(&ds, &gd, 2, 10, 0).unwrap();
        let config = TrainConfig::default();
        let rb = init_rulebase(&ds, &clusters, 2, &config).unwrap();
        assert!((rb.spreads()[[0, 0]] - 0.2 * 2.0).abs() < 1e-15);
        assert!((rb.spreads()[[0, 1]] - 0.2).abs() < 1e-15); // fallback ratio * 1.0
    }

    #[test]
    fn consequent_init_is_seeded() {
        let ds = generate_swiss_roll(30, 1).unwrap();
        let g = build_knn_graph(&ds, 3).unwrap();
        let gd = geodesic_all_pairs(&g, Algorithm::Auto).unwrap();
        let clusters = gcm_cluster(&ds, &gd, 3, 20, 5).unwrap();
        let config = TrainConfig {
            seed: 123,
            ..TrainConfig::default()
        };
        let a = init_rulebase(&ds, &clusters, 2, &config).unwrap();
        let b = init_rulebase(&ds, &clusters, 2, &config).unwrap();
        assert_eq!(a, b);
        assert!(a
            .consequents()
            .iter()
            .all(|&v| (-0.5..0.5).contains(&v)));
        // Centers are the snapped centroid coordinates, bitwise.
        for (k, &idx) in clusters.centroid_indices.iter().enumerate() {
            assert_eq!(a.centers().row(k).to_vec(), ds.row(idx).to_vec());
        }
    }

    #[test]
    fn chain_embedding_has_zero_stress() {
        let (_, gd) = line_chain(3);
        let y = arr2(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert_eq!(stress(&y, &gd, Objective::Geodesic).unwrap(), 0.0);
        let doubled = y.mapv(|v| v * 2.0);
        assert!(stress(&doubled, &gd, Objective::Geodesic).unwrap() > 0.0);
    }

    #[test]
    fn stress_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let pts = Array2::from_shape_fn((20, 3), |_| rng.random_range(-1.0..1.0));
        let ds = Dataset::new(pts, None, "o").unwrap();
        let g = build_knn_graph(&ds, 4).unwrap();
        let gd = geodesic_all_pairs(&g, Algorithm::Auto).unwrap();
        let y = Array2::from_shape_fn((20, 2), |_| rng.random_range(-2.0..2.0));
        let ours = stress(&y, &gd, Objective::Geodesic).unwrap();
        let oracle = stress_oracle(&y, &gd, Objective::Geodesic);
        assert!((ours - oracle).abs() <= 1e-12 * oracle.max(1.0));

        // The Sammon kind evaluates the same form against Euclidean input
        // distances.
        let euclid = GeodesicMatrix::euclidean(&ds);
        let ours_s = stress(&y, &euclid, Objective::Sammon).unwrap();
        let oracle_s = stress_oracle(&y, &euclid, Objective::Sammon);
        assert!((ours_s - oracle_s).abs() <= 1e-12 * oracle_s.max(1.0));
    }

    #[test]
    fn stress_invariant_under_rigid_motion() {
        let (_, gd, _) = random_problem(25, 3, 3, 2, 77);
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let y = Array2::from_shape_fn((25, 2), |_| rng.random_range(-2.0..2.0));
        let base = stress(&y, &gd, Objective::Geodesic).unwrap();
        // Rotate by 0.7 rad and translate by (3, -2).
        let (s, c) = (0.7f64.sin(), 0.7f64.cos());
        let moved = Array2::from_shape_fn(y.dim(), |(i, m)| {
            let (a, b) = (y[[i, 0]], y[[i, 1]]);
            if m == 0 {
                c * a - s * b + 3.0
            } else {
                s * a + c * b - 2.0
            }
        });
        let after = stress(&moved, &gd, Objective::Geodesic).unwrap();
        assert!((base - after).abs() < 1e-9 * base.max(1.0));
    }

    /// Central finite differences through the public stress path.
    fn finite_diff_check(
        rb: &RuleBase,
        ds: &Dataset,
        reference: &GeodesicMatrix,
        kind: Objective,
        step_size: f64,
        tol: f64,
    ) {
        let grads = gradients(rb, ds, reference, kind).unwrap();
        let eval = |rb: &RuleBase| {
            let proj = rb.project_batch(ds, 0.0).unwrap();
            stress(&proj.coords, reference, kind).unwrap()
        };
        let mut checked = 0usize;
        let mut check = |analytic: f64, plus: f64, minus: f64| {
            let fd = (plus - minus) / (2.0 * step_size);
            let denom = analytic.abs().max(fd.abs()).max(1e-4);
            assert!(
                ((analytic - fd) / denom).abs() < tol,
                "gradient mismatch: analytic={analytic}, fd={fd}"
            );
            checked += 1;
        };
        let (n_c, d_h) = rb.centers().dim();
        let d_l = rb.d_l();
        for k in 0..n_c {
            for q in 0..d_h {
                for (which, analytic) in [
                    (0usize, grads.centers[[k, q]]),
                    (1usize, grads.spreads[[k, q]]),
                ] {
                    let mut plus = rb.clone();
                    let mut minus = rb.clone();
                    if which == 0 {
                        plus.centers[[k, q]] += step_size;
                        minus.centers[[k, q]] -= step_size;
                    } else {
                        plus.spreads[[k, q]] += step_size;
                        minus.spreads[[k, q]] -= step_size;
                    }
                    check(analytic, eval(&plus), eval(&minus));
                }
            }
            for m in 0..d_l {
                for q in 0..=d_h {
                    let mut plus = rb.clone();
                    let mut minus = rb.clone();
                    plus.consequents[[k, m, q]] += step_size;
                    minus.consequents[[k, m, q]] -= step_size;
                    check(grads.consequents[[k, m, q]], eval(&plus), eval(&minus));
                }
            }
        }
        assert_eq!(checked, n_c * d_h * 2 + n_c * d_l * (d_h + 1));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (ds, gd, rb) = random_problem(15, 3, 2, 2, 5);
        finite_diff_check(&rb, &ds, &gd, Objective::Geodesic, 1e-5, 1e-4);
        let euclid = GeodesicMatrix::euclidean(&ds);
        finite_diff_check(&rb, &ds, &euclid, Objective::Sammon, 1e-5, 1e-4);
    }

    #[test]
    fn gradient_vanishes_at_zero_stress() {
        // Collinear integer-spaced points embed exactly; a single identity
        // rule reproduces the geodesics, so the minimum is attained.
        let (ds, gd) = line_chain(6);
        let centers = arr2(&[[2.5, 0.0]]);
        let spreads = arr2(&[[10.0, 10.0]]);
        let mut consequents = ndarray::Array3::zeros((1, 2, 3));
        consequents[[0, 0, 1]] = 1.0; // y0 = x0
        let rb = RuleBase::new(centers, spreads, consequents, NormStats::identity(2)).unwrap();
        let proj = rb.project_batch(&ds, 0.0).unwrap();
        assert_eq!(stress(&proj.coords, &gd, Objective::Geodesic).unwrap(), 0.0);
        let g = gradients(&rb, &ds, &gd, Objective::Geodesic).unwrap();
        assert!(g.max_abs() < 1e-8);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (ds, gd, rb) = random_problem(20, 3, 2, 2, 13);
        let config = TrainConfig {
            learning_rate: f64::MIN_POSITIVE, // validation requires > 0
            momentum: 0.0,
            max_iter: 5,
            log_every: 1,
            ..TrainConfig::default()
        };
        let (after, report) = fit(rb.clone(), &ds, &gd, &config).unwrap();
        // A denormal step cannot move O(1) parameters.
        assert_eq!(rb, after);
        let first = report.stress_trace[0].1;
        assert!(report.stress_trace.iter().all(|&(_, s)| s == first));
        assert_eq!(report.final_stress, first);
        assert_eq!(report.iterations_run, 5);
    }

    #[test]
    fn small_steps_decrease_stress_monotonically() {
        let (ds, gd, rb) = random_problem(25, 3, 3, 2, 21);
        let config = TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.0,
            max_iter: 50,
            log_every: 1,
            ..TrainConfig::default()
        };
        let (_, report) = fit(rb, &ds, &gd, &config).unwrap();
        for pair in report.stress_trace.windows(2) {
            assert!(
                pair[1].1 <= pair[0].1 + 1e-12,
                "stress increased: {pair:?}"
            );
        }
        assert!(report.final_stress < report.initial_stress);
    }

    #[test]
    fn fit_is_deterministic() {
        let (ds, gd, rb) = random_problem(20, 3, 2, 2, 5);
        let config = TrainConfig {
            max_iter: 30,
            ..TrainConfig::default()
        };
        let (a, ra) = fit(rb.clone(), &ds, &gd, &config).unwrap();
        let (b, rbb) = fit(rb, &ds, &gd, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rbb);
    }

    #[test]
    fn trace_bookkeeping() {
        let (ds, gd, rb) = random_problem(18, 3, 2, 2, 3);
        let config = TrainConfig {
            max_iter: 25,
            log_every: 10,
            ..TrainConfig::default()
        };
        let (_, report) = fit(rb, &ds, &gd, &config).unwrap();
        let iters: Vec<usize> = report.stress_trace.iter().map(|&(i, _)| i).collect();
        assert_eq!(iters, vec![0, 10, 20, 25]);
        assert_eq!(report.initial_stress, report.stress_trace[0].1);
        assert_eq!(report.final_stress, report.stress_trace.last().unwrap().1);
        assert!(report.stress_trace.iter().all(|&(_, s)| s.is_finite() && s >= 0.0));
    }

    #[test]
    fn early_stop_halts_on_plateau() {
        let (ds, gd, rb) = random_problem(18, 3, 2, 2, 4);
        let config = TrainConfig {
            learning_rate: f64::MIN_POSITIVE,
            momentum: 0.0,
            max_iter: 500,
            early_stop: Some(1e-7),
            log_every: 100,
            ..TrainConfig::default()
        };
        let (_, report) = fit(rb, &ds, &gd, &config).unwrap();
        // Stress is constant, so the second iteration already triggers it.
        assert_eq!(report.iterations_run, 1);
    }

    #[test]
    fn pair_sampling_descends_and_rejects_early_stop() {
        let (ds, gd, rb) = random_problem(40, 3, 3, 2, 8);
        let config = TrainConfig {
            max_iter: 80,
            pair_sample: Some(150),
            log_every: 20,
            ..TrainConfig::default()
        };
        let (_, report) = fit(rb.clone(), &ds, &gd, &config).unwrap();
        assert!(report.final_stress < report.initial_stress);

        let bad = TrainConfig {
            early_stop: Some(1e-7),
            pair_sample: Some(10),
            ..TrainConfig::default()
        };
        assert!(fit(rb, &ds, &gd, &bad).is_err());
    }

    #[test]
    fn best_of_restarts_picks_minimum() {
        let ds = generate_swiss_roll(60, 3).unwrap();
        let g = build_knn_graph(&ds, 4).unwrap();
        let gd = geodesic_all_pairs(&g, Algorithm::Auto).unwrap();
        let config = TrainConfig {
            max_iter: 40,
            seed: 10,
            ..TrainConfig::default()
        };
        let best = fit_best_of(
            &ds,
            &gd,
            2,
            3,
            &config,
            3,
            InitScheme::GcmCentroids { max_iter: 50 },
        )
        .unwrap();
        // Re-run each restart by hand and confirm the minimum was kept.
        for r in 0..3u64 {
            let cfg = TrainConfig {
                seed: 10 + r,
                ..config.clone()
            };
            let clusters = gcm_cluster(&ds, &gd, 3, 50, 10 + r).unwrap();
            let rb = init_rulebase(&ds, &clusters, 2, &cfg).unwrap();
            let (_, report) = fit(rb, &ds, &gd, &cfg).unwrap();
            assert!(best.report.final_stress <= report.final_stress + 1e-15);
        }
        assert!(best.clusters.is_some());
    }

    #[test]
    fn three_dimensional_output_trains() {
        let (ds, gd, _) = random_problem(20, 3, 2, 2, 14);
        let clusters = gcm_cluster(&ds, &gd, 2, 20, 14).unwrap();
        let config = TrainConfig {
            max_iter: 15,
            seed: 14,
            ..TrainConfig::default()
        };
        let rb = init_rulebase(&ds, &clusters, 3, &config).unwrap();
        assert_eq!(rb.d_l(), 3);
        let (rb, report) = fit(rb, &ds, &gd, &config).unwrap();
        assert!(report.final_stress.is_finite());
        let proj = rb.project_batch(&ds, 0.15).unwrap();
        assert_eq!(proj.d_l(), 3);
        assert!(init_rulebase(&ds, &clusters, 1, &config).is_err());
        assert!(init_rulebase(&ds, &clusters, 4, &config).is_err());
    }

    #[test]
    fn diverging_run_aborts_with_iteration() {
        let (ds, gd, rb) = random_problem(20, 3, 2, 2, 6);
        let config = TrainConfig {
            learning_rate: 1e12,
            momentum: 0.0,
            max_iter: 50,
            ..TrainConfig::default()
        };
        match fit(rb, &ds, &gd, &config) {
            Err(Error::NonFiniteStress { iteration }) => assert!(iteration >= 1),
            other => panic!("expected non-finite abort, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let bad_lr = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad_lr.validate().is_err());
        let bad_momentum = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad_momentum.validate().is_err());
        let bad_range = TrainConfig {
            consequent_init_range: (0.5, 0.5),
            ..TrainConfig::default()
        };
        assert!(bad_range.validate().is_err());
    }
}
