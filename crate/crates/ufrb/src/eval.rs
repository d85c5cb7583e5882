//! Quantitative quality metrics for a projection, beyond the training
//! objective: both stress variants, the Pearson correlation between reference
//! and output distances over all pairs, and the rejection rate.

use crate::data::Dataset;
use crate::fuzzy::Projection;
use crate::graph::GeodesicMatrix;
use crate::train::{stress, Objective};
use crate::{Error, Result};

/// Metrics for one projection. `distance_correlation` is the Pearson
/// correlation between the geodesic input distances and the Euclidean output
/// distances over all point pairs; near 1 means the embedding orders
/// distances like the manifold does.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub geodesic_stress: f64,
    pub sammon_stress: f64,
    pub distance_correlation: f64,
    pub rejection_rate: f64,
    /// Set when the correlation is undefined (zero variance on either side)
    /// and reported as 0.
    pub degenerate_correlation: bool,
}

impl MetricReport {
    /// The `key=value` lines printed by the pipeline.
    pub fn lines(&self) -> String {
        format!(
            "geodesic_stress={}\nsammon_stress={}\ndistance_correlation={}\nrejection_rate={}\ndegenerate_correlation={}\n",
            self.geodesic_stress,
            self.sammon_stress,
            self.distance_correlation,
            self.rejection_rate,
            self.degenerate_correlation
        )
    }
}

/// Evaluate a projection of `dataset` against its geodesic matrix.
pub fn evaluate(
    projection: &Projection,
    dataset: &Dataset,
    geodesics: &GeodesicMatrix,
) -> Result<MetricReport> {
    let n = dataset.n();
    if n < 3 {
        return Err(Error::InsufficientData(
            "evaluation needs at least 3 points".into(),
        ));
    }
    if projection.n() != n || geodesics.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: projection.n().min(geodesics.n()),
        });
    }

    let y = &projection.coords;
    let geodesic_stress = stress(y, geodesics, Objective::Geodesic)?;
    let euclid = GeodesicMatrix::euclidean(dataset);
    let sammon_stress = stress(y, &euclid, Objective::Sammon)?;

    // Pearson correlation over all unordered pairs, streaming.
    let d_l = projection.d_l();
    let mut count = 0.0f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let a = geodesics.get(i, j);
            let mut e2 = 0.0;
            for m in 0..d_l {
                let diff = y[[i, m]] - y[[j, m]];
                e2 += diff * diff;
            }
            let b = e2.sqrt();
            count += 1.0;
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
    }
    let var_x = sxx - sx * sx / count;
    let var_y = syy - sy * sy / count;
    let cov = sxy - sx * sy / count;
    let degenerate = var_x <= 0.0 || var_y <= 0.0;
    let distance_correlation = if degenerate {
        0.0
    } else {
        cov / (var_x.sqrt() * var_y.sqrt())
    };

    Ok(MetricReport {
        geodesic_stress,
        sammon_stress,
        distance_correlation,
        rejection_rate: projection.rejection_rate(),
        degenerate_correlation: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_knn_graph, geodesic_all_pairs, Algorithm};
    use ndarray::{arr2, Array2};

    fn chain() -> (Dataset, GeodesicMatrix) {
        let pts = arr2(&[[0.0], [1.0], [2.0]]);
        let ds = Dataset::new(pts, None, "chain").unwrap();
        let g = build_knn_graph(&ds, 1).unwrap();
        (ds, geodesic_all_pairs(&g, Algorithm::Auto).unwrap())
    }

    fn projection_from(coords: Array2<f64>) -> Projection {
        let n = coords.nrows();
        Projection {
            coords,
            max_firing: vec![1.0; n],
            rejected: vec![false; n],
        }
    }

    #[test]
    fn perfect_embedding_scores_perfectly() {
        let (ds, gd) = chain();
        let proj = projection_from(arr2(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]));
        let report = evaluate(&proj, &ds, &gd).unwrap();
        assert_eq!(report.geodesic_stress, 0.0);
        assert!((report.distance_correlation - 1.0).abs() < 1e-12);
        assert_eq!(report.rejection_rate, 0.0);
        assert!(!report.degenerate_correlation);
    }

    #[test]
    fn constant_projection_is_degenerate() {
        let (ds, gd) = chain();
        let proj = projection_from(arr2(&[[3.0, 3.0], [3.0, 3.0], [3.0, 3.0]]));
        let report = evaluate(&proj, &ds, &gd).unwrap();
        assert_eq!(report.distance_correlation, 0.0);
        assert!(report.degenerate_correlation);
    }

    #[test]
    fn metrics_invariant_under_rigid_motion_and_scale() {
        let (ds, gd) = chain();
        let y = arr2(&[[0.1, 0.4], [0.9, -0.2], [2.2, 0.3]]);
        let base = evaluate(&projection_from(y.clone()), &ds, &gd).unwrap();
        let (s, c) = (1.1f64.sin(), 1.1f64.cos());
        let moved = Array2::from_shape_fn(y.dim(), |(i, m)| {
            let (a, b) = (y[[i, 0]], y[[i, 1]]);
            if m == 0 {
                c * a - s * b + 10.0
            } else {
                s * a + c * b - 4.0
            }
        });
        let rigid = evaluate(&projection_from(moved), &ds, &gd).unwrap();
        assert!((base.geodesic_stress - rigid.geodesic_stress).abs() < 1e-9);
        assert!((base.sammon_stress - rigid.sammon_stress).abs() < 1e-9);
        assert!((base.distance_correlation - rigid.distance_correlation).abs() < 1e-9);

        // Correlation alone is additionally invariant under uniform scaling.
        let scaled = evaluate(&projection_from(y.mapv(|v| 3.0 * v)), &ds, &gd).unwrap();
        assert!((base.distance_correlation - scaled.distance_correlation).abs() < 1e-9);
        assert!(scaled.geodesic_stress != base.geodesic_stress);
    }

    #[test]
    fn small_inputs_are_rejected() {
        let pts = arr2(&[[0.0], [1.0]]);
        let ds = Dataset::new(pts, None, "two").unwrap();
        let g = build_knn_graph(&ds, 1).unwrap();
        let gd = geodesic_all_pairs(&g, Algorithm::Auto).unwrap();
        let proj = projection_from(arr2(&[[0.0, 0.0], [1.0, 0.0]]));
        assert!(matches!(
            evaluate(&proj, &ds, &gd),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn rejection_rate_counts_flags() {
        let (ds, gd) = chain();
        let mut proj = projection_from(arr2(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]));
        proj.rejected = vec![true, false, true];
        let report = evaluate(&proj, &ds, &gd).unwrap();
        assert!((report.rejection_rate - 2.0 / 3.0).abs() < 1e-15);
    }
}
