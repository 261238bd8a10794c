//! Sample moments with standard errors.

use nalgebra::{DMatrix, DVector};

/// Mean and covariance of a point cloud, each with a standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub count: usize,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub mean_se: DVector<f64>,
    /// Standard error of each covariance entry, from the empirical variance
    /// of the centered products.
    pub covariance_se: DMatrix<f64>,
}

impl SampleMoments {
    /// Panics on an empty set or ragged rows.
    pub fn from_points(points: &[Vec<f64>]) -> Self {
        let count = points.len();
        assert!(count > 0, "moments of an empty sample");
        let d = points[0].len();
        let nf = count as f64;
        let mut mean = DVector::zeros(d);
        for p in points {
            assert_eq!(p.len(), d, "ragged sample");
            mean += DVector::from_column_slice(p);
        }
        mean /= nf;
        let mut cov = DMatrix::zeros(d, d);
        for p in points {
            let c = DVector::from_column_slice(p) - &mean;
            cov += &c * c.transpose();
        }
        let denom = if count > 1 { nf - 1.0 } else { 1.0 };
        cov /= denom;
        let mut prod_var = DMatrix::<f64>::zeros(d, d);
        for p in points {
            let c = DVector::from_column_slice(p) - &mean;
            for i in 0..d {
                for j in 0..d {
                    let dev = c[i] * c[j] - cov[(i, j)];
                    prod_var[(i, j)] += dev * dev;
                }
            }
        }
        let mean_se = DVector::from_iterator(d, (0..d).map(|i| (cov[(i, i)] / nf).sqrt()));
        let covariance_se = prod_var.map(|v| (v / denom / nf).sqrt());
        Self {
            count,
            mean,
            covariance: cov,
            mean_se,
            covariance_se,
        }
    }
}

/// `|a - b| <= k * se + 1e-9`.
pub fn within_se(a: f64, b: f64, se: f64, k: f64) -> bool {
    (a - b).abs() <= k * se + 1e-9
}

/// `|a - b| / se`, or 0 when both the gap and the error vanish.
pub fn z_score(a: f64, b: f64, se: f64) -> f64 {
    let gap = (a - b).abs();
    if gap <= 1e-9 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        gap / se
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_small_sample() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![5.0, 8.0]];
        let m = SampleMoments::from_points(&pts);
        assert_eq!(m.mean.as_slice(), &[3.0, 4.0]);
        assert_eq!(m.covariance[(0, 0)], 4.0);
        assert_eq!(m.covariance[(1, 1)], 12.0);
        assert_eq!(m.covariance[(0, 1)], 6.0);
        assert!((m.mean_se[0] - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn z_scores() {
        assert_eq!(z_score(1.0, 1.0, 0.0), 0.0);
        assert_eq!(z_score(1.0, 2.0, 0.5), 2.0);
        assert!(z_score(1.0, 2.0, 0.0).is_infinite());
        assert!(within_se(1.0, 1.2, 0.1, 3.0));
        assert!(!within_se(1.0, 1.4, 0.1, 3.0));
    }
}
