//! Principal component analysis on z-scored feature columns.

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::linalg::{dot, symmetric_eigen};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PcaModel<T> {
    pub input_dim: usize,
    pub output_dim: usize,
    pub mean: Vec<T>,
    /// Sample standard deviation per column; 1 for constant columns.
    pub scale: Vec<T>,
    /// `output_dim` orthonormal rows of length `input_dim`.
    pub components: Vec<Vec<T>>,
    /// Variance of the standardized data along each component.
    pub explained_variance: Vec<T>,
    /// Trace of the standardized covariance.
    pub total_variance: T,
}

pub fn fit_pca<T: Scalar, V: AsRef<[T]>>(rows: &[V], output_dim: usize) -> Result<PcaModel<T>, FeatureError> {
    let n = rows.len();
    if n < output_dim + 1 || n < 2 {
        return Err(FeatureError::InsufficientData(format!(
            "{n} rows cannot support {output_dim} components"
        )));
    }
    let d = rows[0].as_ref().len();
    if output_dim > d {
        return Err(FeatureError::DimensionMismatch(format!(
            "{output_dim} components requested from {d} columns"
        )));
    }
    if let Some(bad) = rows.iter().position(|r| r.as_ref().len() != d) {
        return Err(FeatureError::DimensionMismatch(format!("row {bad} has a different length")));
    }
    if rows.iter().any(|r| r.as_ref().iter().any(|v| !v.is_finite())) {
        return Err(FeatureError::NonFinite);
    }

    let nt = T::from_usize_lossy(n);
    let dof = T::from_usize_lossy(n - 1);
    let mut mean = vec![T::zero(); d];
    for r in rows {
        for (m, &v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nt);

    let mut scale = vec![T::zero(); d];
    for r in rows {
        for ((s, &v), &m) in scale.iter_mut().zip(r.as_ref()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in scale.iter_mut() {
        let sd = (*s / dof).sqrt();
        *s = if sd > T::zero() { sd } else { T::one() };
    }

    let z: Vec<Vec<T>> = rows.iter().map(|r| standardize(r.as_ref(), &mean, &scale)).collect();
    let mut cov = vec![T::zero(); d * d];
    for zr in &z {
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += zr[i] * zr[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= dof;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let total_variance = (0..d).map(|i| cov[i * d + i]).sum();

    let eig = symmetric_eigen(&cov, d);
    let components: Vec<Vec<T>> = eig.vectors.into_iter().take(output_dim).map(fix_sign).collect();
    let explained_variance = eig.values.into_iter().take(output_dim).map(|v| v.max(T::zero())).collect();
    Ok(PcaModel {
        input_dim: d,
        output_dim,
        mean,
        scale,
        components,
        explained_variance,
        total_variance,
    })
}

fn standardize<T: Scalar>(x: &[T], mean: &[T], scale: &[T]) -> Vec<T> {
    x.iter().zip(mean).zip(scale).map(|((&v, &m), &s)| (v - m) / s).collect()
}

/// Flips a component so that its largest-magnitude entry is positive; the
/// first such entry wins ties.
fn fix_sign<T: Scalar>(mut v: Vec<T>) -> Vec<T> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

impl<T: Scalar> PcaModel<T> {
    pub fn transform(&self, x: &[T]) -> Result<Vec<T>, FeatureError> {
        if x.len() != self.input_dim {
            return Err(FeatureError::DimensionMismatch(format!(
                "expected {} values, got {}",
                self.input_dim,
                x.len()
            )));
        }
        let z = standardize(x, &self.mean, &self.scale);
        Ok(self.components.iter().map(|c| dot(c, &z)).collect())
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        let shapes_ok = self.mean.len() == self.input_dim
            && self.scale.len() == self.input_dim
            && self.components.len() == self.output_dim
            && self.explained_variance.len() == self.output_dim
            && self.components.iter().all(|c| c.len() == self.input_dim);
        if !shapes_ok {
            return Err("pca shapes are inconsistent".into());
        }
        if self.scale.iter().any(|s| !(*s > T::zero())) {
            return Err("pca scale must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Correlated columns so the spectrum is not flat.
        (0..n)
            .map(|_| {
                let base: f64 = rng.random_range(-1.0..1.0);
                (0..d).map(|j| base * (j as f64 + 1.0) + rng.random_range(-1.0..1.0) * (d - j) as f64).collect()
            })
            .collect()
    }

    #[test]
    fn rank_one_line() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let m = fit_pca(&rows, 2).unwrap();
        assert!((m.explained_variance[0] - m.total_variance).abs() < 1e-12);
        assert!(m.explained_variance[1].abs() < 1e-12);
    }

    #[test]
    fn matches_nalgebra_eigendecomposition() {
        let rows = random_rows(50, 10, 1);
        let m = fit_pca(&rows, 10).unwrap();

        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..10).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let sd: Vec<f64> = (0..10)
            .map(|j| (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
            .collect();
        let z = nalgebra::DMatrix::from_fn(50, 10, |i, j| (rows[i][j] - mean[j]) / sd[j]);
        let cov = z.transpose() * &z / (n - 1.0);
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..10).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        for (k, &idx) in order.iter().enumerate() {
            assert!((m.explained_variance[k] - eig.eigenvalues[idx]).abs() < 1e-8);
            let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
            let big = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            if big < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            for (a, b) in m.components[k].iter().zip(&v) {
                assert!((a - b).abs() < 1e-8, "component {k}");
            }
        }
    }

    #[test]
    fn orthonormal_and_sorted() {
        let m = fit_pca(&random_rows(40, 8, 2), 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&m.components[i], &m.components[j]) - expect).abs() < 1e-8);
            }
        }
        assert!(m.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn transform_round_trips() {
        let m = fit_pca(&random_rows(30, 6, 3), 4).unwrap();
        assert!(m.transform(&m.mean).unwrap().iter().all(|v| v.abs() < 1e-12));
        let x: Vec<f64> = (0..6).map(|j| m.mean[j] + m.scale[j] * m.components[0][j]).collect();
        let y = m.transform(&x).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10);
        assert!(y[1..].iter().all(|v| v.abs() < 1e-10));
        assert!(matches!(m.transform(&[0.0; 5]), Err(FeatureError::DimensionMismatch(_))));
    }

    #[test]
    fn reconstruction_error_matches_discarded_variance() {
        let rows = random_rows(60, 9, 4);
        let full = fit_pca(&rows, 9).unwrap();
        for k in 1..=9 {
            let m = fit_pca(&rows, k).unwrap();
            let mut err = 0.0;
            for r in &rows {
                let z = standardize(r, &m.mean, &m.scale);
                let y = m.transform(r).unwrap();
                let mut rec = vec![0.0; 9];
                for (c, &yk) in m.components.iter().zip(&y) {
                    for j in 0..9 {
                        rec[j] += yk * c[j];
                    }
                }
                err += z.iter().zip(&rec).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            }
            err /= (rows.len() - 1) as f64;
            let kept: f64 = m.explained_variance.iter().sum();
            assert!((err - (full.total_variance - kept)).abs() < 1e-8, "k={k}");
        }
    }

    #[test]
    fn constant_column_gets_unit_scale() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 3.0, (i * i) as f64]).collect();
        let m = fit_pca(&rows, 2).unwrap();
        assert_eq!(m.scale[1], 1.0);
        assert!(m.transform(&rows[4]).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn too_few_rows() {
        let rows = random_rows(5, 10, 5);
        assert!(matches!(fit_pca(&rows, 5), Err(FeatureError::InsufficientData(_))));
        assert!(fit_pca(&rows, 4).is_ok());
    }
}
