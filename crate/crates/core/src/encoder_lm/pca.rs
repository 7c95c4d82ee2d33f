use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Principal-component projection fitted to row samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// `k x d`, orthonormal rows ordered by decreasing variance.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

impl PcaProjection {
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        self.explained_variance.iter().sum::<f64>() / self.total_variance
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.mean.len() {
            return Err(Error::Dimension {
                op: "pca_project",
                left: (1, v.len()),
                right: self.components.shape(),
            });
        }
        let centred: Vec<f64> = v.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok((0..self.k())
            .map(|c| self.components.row(c).iter().zip(&centred).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &w) in coords.iter().enumerate().take(self.k()) {
            for (o, x) in out.iter_mut().zip(self.components.row(c)) {
                *o += w * x;
            }
        }
        out
    }
}

/// Fits a `k`-component PCA to the rows of `samples` (`n x d`, `n >= 2`).
pub fn pca_fit(samples: &Matrix, k: usize) -> Result<PcaProjection> {
    let (n, d) = samples.shape();
    if n < 2 {
        return Err(Error::Rank(format!("PCA needs at least 2 samples, got {n}")));
    }
    if k == 0 || k > d || k > n {
        return Err(Error::Rank(format!(
            "cannot keep {k} components of {n} samples in dimension {d}"
        )));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, x) in mean.iter_mut().zip(samples.row(r)) {
            *m += x / n as f64;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for r in 0..n {
        let c: Vec<f64> = samples.row(r).iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in 0..d {
                let v = cov.get(i, j) + c[i] * c[j] / (n - 1) as f64;
                cov.set(i, j, v);
            }
        }
    }
    let total_variance: f64 = (0..d).map(|i| cov.get(i, i)).sum();
    if total_variance <= f64::EPSILON {
        return Err(Error::Rank("samples have zero variance".into()));
    }
    let (values, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut components = Matrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        for i in 0..d {
            components.set(c, i, vectors.get(i, idx));
        }
        explained_variance.push(values[idx].max(0.0));
    }
    Ok(PcaProjection {
        mean,
        components,
        explained_variance,
        total_variance,
    })
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues and a matrix whose columns are the eigenvectors.
fn jacobi_eigen(mut a: Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum();
        let scale: f64 = a.data().iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    ((0..n).map(|i| a.get(i, i)).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    #[test]
    fn collinear_points_are_fully_explained_by_one_component() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let t = i as f64 - 3.0;
                vec![1.0 + 2.0 * t, -1.0 + t, 0.5 - 3.0 * t]
            })
            .collect();
        let p = pca_fit(&Matrix::from_rows(&rows).unwrap(), 1).unwrap();
        assert!((p.explained_variance_ratio() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_basis_reconstructs_exactly() {
        let mut rng = SeededRng::new(9);
        let x = rng.uniform_matrix(20, 5, 1.0);
        let p = pca_fit(&x, 5).unwrap();
        for r in 0..x.rows() {
            let back = p.reconstruct(&p.project(x.row(r)).unwrap());
            for (a, b) in back.iter().zip(x.row(r)) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        let gram = p.components.matmul_t(&p.components).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - want).abs() < 1e-10);
            }
        }
        for w in p.explained_variance.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn rank_errors() {
        let constant = Matrix::filled(4, 3, 2.0);
        assert!(matches!(pca_fit(&constant, 1), Err(Error::Rank(_))));
        let x = SeededRng::new(1).uniform_matrix(4, 3, 1.0);
        assert!(matches!(pca_fit(&x, 4), Err(Error::Rank(_))));
        assert!(matches!(pca_fit(&x, 0), Err(Error::Rank(_))));
        assert!(matches!(pca_fit(&Matrix::zeros(1, 3), 1), Err(Error::Rank(_))));
    }
}
