//! Geodesic c-means clustering. Points are assigned to the centroid with
//! minimum geodesic distance; each centroid is then recomputed as the
//! arithmetic mean of its cluster and snapped to the Euclidean-nearest data
//! point, so centroids always lie on the data manifold. The snapped centroids
//! seed the rule antecedents.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{euclidean, Dataset};
use crate::graph::GeodesicMatrix;
use crate::{Error, Result};

/// Result of a geodesic c-means run. Centroids are indices into the dataset:
/// every centroid is literally one of the input points.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClusterResult {
    pub centroid_indices: Vec<usize>,
    pub assignment: Vec<usize>,
    pub iterations_run: usize,
}

/// Cluster the dataset into `n_c` clusters using geodesic distances.
///
/// Initial centroids are `n_c` distinct points sampled with the seeded
/// generator. The loop stops after `max_iter` recenter passes or as soon as
/// the assignment vector stops changing (same fixed point, less compute).
/// Ties in assignment go to the lowest cluster id; ties in snapping go to the
/// lowest point index. A cluster left empty is re-seeded with the point
/// farthest (geodesically) from its current centroid.
pub fn gcm_cluster(
    dataset: &Dataset,
    geodesics: &GeodesicMatrix,
    n_c: usize,
    max_iter: usize,
    seed: u64,
) -> Result<ClusterResult> {
    let n = dataset.n();
    if n_c < 2 || n_c > n {
        return Err(Error::InvalidArgument(format!(
            "n_c must satisfy 2 <= n_c <= n (n_c={n_c}, n={n})"
        )));
    }
    if max_iter < 1 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    if geodesics.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: geodesics.n(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<usize> = rand::seq::index::sample(&mut rng, n, n_c).into_vec();

    let mut assignment = assign(geodesics, &centroids, n);
    let mut iterations_run = 0;
    for t in 1..=max_iter {
        iterations_run = t;
        recenter(dataset, geodesics, &assignment, &mut centroids);
        let next = assign(geodesics, &centroids, n);
        if next == assignment {
            break;
        }
        assignment = next;
    }

    Ok(ClusterResult {
        centroid_indices: centroids,
        assignment,
        iterations_run,
    })
}

/// Nearest-centroid assignment by geodesic distance, lowest id on ties.
fn assign(geodesics: &GeodesicMatrix, centroids: &[usize], n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| {
            let mut best = 0usize;
            let mut best_d = geodesics.get(i, centroids[0]);
            for (k, &c) in centroids.iter().enumerate().skip(1) {
                let d = geodesics.get(i, c);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn recenter(
    dataset: &Dataset,
    geodesics: &GeodesicMatrix,
    assignment: &[usize],
    centroids: &mut Vec<usize>,
) {
    let n = dataset.n();
    let d = dataset.dim();
    let n_c = centroids.len();

    let mut sums = vec![vec![0.0f64; d]; n_c];
    let mut counts = vec![0usize; n_c];
    for (i, &k) in assignment.iter().enumerate() {
        counts[k] += 1;
        for (q, v) in dataset.row(i).iter().enumerate() {
            sums[k][q] += v;
        }
    }

    let mut taken = vec![false; n];
    let mut new_centroids = vec![usize::MAX; n_c];
    for k in 0..n_c {
        let idx = if counts[k] == 0 {
            // Re-seed with the point farthest from its current centroid.
            farthest_unclaimed(geodesics, assignment, centroids, &taken, n)
        } else {
            let mean: Vec<f64> = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            snap_to_nearest(dataset, &mean, &taken)
        };
        taken[idx] = true;
        new_centroids[k] = idx;
    }
    *centroids = new_centroids;
}

/// Euclidean-nearest data point to `target`, skipping indices already taken
/// this pass so centroid indices stay distinct. Lowest index wins ties.
fn snap_to_nearest(dataset: &Dataset, target: &[f64], taken: &[bool]) -> usize {
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    for i in 0..dataset.n() {
        if taken[i] {
            continue;
        }
        let d = euclidean(dataset.row(i), target);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn farthest_unclaimed(
    geodesics: &GeodesicMatrix,
    assignment: &[usize],
    centroids: &[usize],
    taken: &[bool],
    n: usize,
) -> usize {
    let mut best = usize::MAX;
    let mut best_d = f64::NEG_INFINITY;
    for i in 0..n {
        if taken[i] {
            continue;
        }
        let d = geodesics.get(i, centroids[assignment[i]]);
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    best
}
