//! Full-covariance Gaussian mixture fitted by expectation-maximization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SegmentationError;
use crate::linalg::{cholesky, compose_from_eigen, forward_substitute, symmetric_eigen};
use crate::scalar::Scalar;

pub const GMM_FORMAT_VERSION: u32 = 1;
/// Largest supported feature dimension; scoring keeps its scratch on the stack.
pub const MAX_DIM: usize = 16;

/// Name of the pixel normalization the skin model expects.
pub const SKIN_NORMALIZATION: &str = "ycrcb_hsv_unit_v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmFitOptions {
    pub components: usize,
    pub max_iters: usize,
    /// Stop once the relative log-likelihood gain drops below this.
    pub tol: f64,
    /// Lower bound enforced on every covariance eigenvalue.
    pub covariance_floor: f64,
    pub seed: u64,
}

impl Default for GmmFitOptions {
    fn default() -> Self {
        Self {
            components: 4,
            max_iters: 200,
            tol: 1e-6,
            covariance_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GmmModelRaw<T> {
    format_version: u32,
    dim: usize,
    k: usize,
    weights: Vec<T>,
    means: Vec<Vec<T>>,
    /// Row-major `dim x dim`.
    covariances: Vec<Vec<T>>,
    covariance_floor: T,
    normalization: String,
    trained_on: String,
}

#[derive(Debug, Clone, PartialEq)]
struct ComponentFactor<T> {
    chol: Vec<T>,
    /// `ln w - (d ln 2pi + ln det) / 2`
    log_norm: T,
}

/// Mixture density `sum_j w_j N(x; mu_j, Sigma_j)`.
///
/// Cholesky factors are built once when the model is constructed or loaded,
/// so scoring never refactorizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmModelRaw<T>", into = "GmmModelRaw<T>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct GmmModel<T> {
    raw: GmmModelRaw<T>,
    factors: Vec<ComponentFactor<T>>,
}

impl<T: Scalar> From<GmmModel<T>> for GmmModelRaw<T> {
    fn from(m: GmmModel<T>) -> Self {
        m.raw
    }
}

impl<T: Scalar> TryFrom<GmmModelRaw<T>> for GmmModel<T> {
    type Error = SegmentationError;

    fn try_from(raw: GmmModelRaw<T>) -> Result<Self, Self::Error> {
        if raw.format_version != GMM_FORMAT_VERSION {
            return Err(SegmentationError::InvalidModel(format!(
                "unsupported GMM format version {}",
                raw.format_version
            )));
        }
        Self::new(
            raw.weights,
            raw.means,
            raw.covariances,
            raw.covariance_floor,
            raw.normalization,
            raw.trained_on,
        )
    }
}

impl<T: Scalar> GmmModel<T> {
    pub fn new(
        weights: Vec<T>,
        means: Vec<Vec<T>>,
        covariances: Vec<Vec<T>>,
        covariance_floor: T,
        normalization: impl Into<String>,
        trained_on: impl Into<String>,
    ) -> Result<Self, SegmentationError> {
        let k = weights.len();
        let invalid = |m: String| Err(SegmentationError::InvalidModel(m));
        if k == 0 || means.len() != k || covariances.len() != k {
            return invalid(format!(
                "component counts disagree: {} weights, {} means, {} covariances",
                k,
                means.len(),
                covariances.len()
            ));
        }
        let dim = means[0].len();
        if dim == 0 || dim > MAX_DIM {
            return invalid(format!("dimension {dim} outside 1..={MAX_DIM}"));
        }
        if means.iter().any(|m| m.len() != dim) || covariances.iter().any(|c| c.len() != dim * dim) {
            return invalid("ragged means or covariances".into());
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return invalid("weights must be finite and nonnegative".into());
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-6) {
            return invalid(format!("weights sum to {total}, not 1"));
        }

        let ln_2pi = (T::lit(2.0) * T::PI()).ln();
        let mut factors = Vec::with_capacity(k);
        for (j, cov) in covariances.iter().enumerate() {
            for r in 0..dim {
                for c in 0..r {
                    let (a, b) = (cov[r * dim + c], cov[c * dim + r]);
                    if (a - b).abs() > T::lit(1e-9) * (T::one() + a.abs()) {
                        return invalid(format!("covariance {j} is not symmetric"));
                    }
                }
            }
            let chol = cholesky(cov, dim).ok_or_else(|| {
                SegmentationError::InvalidModel(format!("covariance {j} is not positive definite"))
            })?;
            let log_det = (0..dim).map(|i| chol[i * dim + i].ln()).sum::<T>() * T::lit(2.0);
            let log_norm = weights[j].ln() - (T::from_usize_lossy(dim) * ln_2pi + log_det) / T::lit(2.0);
            factors.push(ComponentFactor { chol, log_norm });
        }

        Ok(Self {
            raw: GmmModelRaw {
                format_version: GMM_FORMAT_VERSION,
                dim,
                k,
                weights,
                means,
                covariances,
                covariance_floor,
                normalization: normalization.into(),
                trained_on: trained_on.into(),
            },
            factors,
        })
    }

    pub fn dim(&self) -> usize {
        self.raw.dim
    }

    pub fn components(&self) -> usize {
        self.raw.k
    }

    pub fn weights(&self) -> &[T] {
        &self.raw.weights
    }

    pub fn means(&self) -> &[Vec<T>] {
        &self.raw.means
    }

    pub fn covariances(&self) -> &[Vec<T>] {
        &self.raw.covariances
    }

    pub fn covariance_floor(&self) -> T {
        self.raw.covariance_floor
    }

    pub fn normalization(&self) -> &str {
        &self.raw.normalization
    }

    pub fn trained_on(&self) -> &str {
        &self.raw.trained_on
    }

    /// Draws `n` points from the mixture.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::StandardNormal;
        let d = self.raw.dim;
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut j = self.raw.k - 1;
                for (i, w) in self.raw.weights.iter().enumerate() {
                    acc += w.to_f64_lossy();
                    if u < acc {
                        j = i;
                        break;
                    }
                }
                let z: Vec<T> = (0..d)
                    .map(|_| T::lit(rand_distr::Distribution::<f64>::sample(&normal, &mut rng)))
                    .collect();
                let l = &self.factors[j].chol;
                (0..d)
                    .map(|r| self.raw.means[j][r] + (0..=r).map(|c| l[r * d + c] * z[c]).sum::<T>())
                    .collect()
            })
            .collect()
    }

    /// Per-component `ln w_j + ln N(x; mu_j, Sigma_j)`.
    #[inline]
    fn component_log_terms(&self, x: &[T], out: &mut [T]) {
        let d = self.raw.dim;
        let mut y = [T::zero(); MAX_DIM];
        for (j, f) in self.factors.iter().enumerate() {
            let mean = &self.raw.means[j];
            for i in 0..d {
                y[i] = x[i] - mean[i];
            }
            forward_substitute(&f.chol, d, &mut y[..d]);
            let q: T = y[..d].iter().map(|&v| v * v).sum();
            out[j] = f.log_norm - q / T::lit(2.0);
        }
    }

    /// `ln sum_j w_j N(x; mu_j, Sigma_j)` via log-sum-exp.
    pub fn log_density(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.raw.dim);
        let mut terms = [T::zero(); MAX_DIM];
        let terms = &mut terms[..self.raw.k.min(MAX_DIM)];
        if self.raw.k > MAX_DIM {
            let mut heap = vec![T::zero(); self.raw.k];
            self.component_log_terms(x, &mut heap);
            return log_sum_exp(&heap);
        }
        self.component_log_terms(x, terms);
        log_sum_exp(terms)
    }
}

#[inline]
pub(crate) fn log_sum_exp<T: Scalar>(terms: &[T]) -> T {
    let max = terms.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + terms.iter().map(|&t| (t - max).exp()).sum::<T>().ln()
}

/// Output of [`fit_gmm`]: the model plus the per-iteration mean
/// log-likelihood, which EM guarantees to be nondecreasing.
#[derive(Debug, Clone)]
pub struct GmmFit<T> {
    pub model: GmmModel<T>,
    pub log_likelihood_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when k-means++ seeding could not find `k` distinct centers.
    pub degenerate: bool,
}

const CHUNK: usize = 2048;

/// Fits a `k`-component full-covariance mixture by EM.
///
/// Initialization is seeded k-means++ followed by one M-step from the hard
/// assignment. The covariance M-step clips eigenvalues at the floor, which
/// is the exact constrained maximizer, so the likelihood stays monotone.
pub fn fit_gmm<T, V>(points: &[V], options: &GmmFitOptions, trained_on: &str) -> Result<GmmFit<T>, SegmentationError>
where
    T: Scalar,
    V: AsRef<[T]> + Sync,
{
    let k = options.components;
    let n = points.len();
    if k == 0 {
        return Err(SegmentationError::InsufficientData("k must be at least 1".into()));
    }
    if n < 10 * k {
        return Err(SegmentationError::InsufficientData(format!(
            "{n} points for {k} components (need at least {})",
            10 * k
        )));
    }
    let dim = points[0].as_ref().len();
    if dim == 0 || dim > MAX_DIM || points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(SegmentationError::InsufficientData("points must share a dimension in 1..=16".into()));
    }
    if points.iter().any(|p| p.as_ref().iter().any(|v| !v.is_finite())) {
        return Err(SegmentationError::NonFinite);
    }

    let floor = T::lit(options.covariance_floor);
    let (centers, degenerate) = kmeans_pp(points, k, options.seed);

    // Hard assignment to the nearest seed center.
    let mut resp = vec![T::zero(); n * k];
    for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        let best = (0..k)
            .min_by(|&a, &b| {
                sq_dist(p, &centers[a])
                    .partial_cmp(&sq_dist(p, &centers[b]))
                    .unwrap()
                    .then(a.cmp(&b))
            })
            .unwrap();
        resp[i * k + best] = T::one();
    }

    let provenance = if degenerate {
        format!("{trained_on} [degenerate: duplicated components]")
    } else {
        trained_on.to_string()
    };

    let mut prev: Option<GmmModel<T>> = None;
    let mut model = m_step(points, &resp, k, dim, floor, prev.as_ref(), &provenance)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..options.max_iters {
        let ll = e_step(points, &model, &mut resp);
        iterations += 1;
        if let Some(&last) = trace.last() {
            let gain: T = ll - last;
            trace.push(ll);
            if gain.abs() < T::lit(options.tol) * last.abs().max(T::lit(1e-12)) {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        prev = Some(model);
        model = m_step(points, &resp, k, dim, floor, prev.as_ref(), &provenance)?;
    }

    Ok(GmmFit {
        model,
        log_likelihood_trace: trace,
        iterations,
        converged,
        degenerate,
    })
}

#[inline]
fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp<T: Scalar, V: AsRef<[T]>>(points: &[V], k: usize, seed: u64) -> (Vec<Vec<T>>, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = points.len();
    let first = rng.random_range(0..n);
    let mut centers = vec![points[first].as_ref().to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p.as_ref(), &centers[0]).to_f64_lossy())
        .collect();
    let mut degenerate = false;
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            degenerate = true;
            rng.random_range(0..n)
        };
        let c = points[next].as_ref().to_vec();
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(sq_dist(p.as_ref(), &c).to_f64_lossy());
        }
        centers.push(c);
    }
    (centers, degenerate)
}

/// Fills responsibilities and returns the mean log-likelihood of `model`.
fn e_step<T: Scalar, V: AsRef<[T]> + Sync>(points: &[V], model: &GmmModel<T>, resp: &mut [T]) -> T {
    let k = model.components();
    let partial: Vec<T> = points
        .par_chunks(CHUNK)
        .zip(resp.par_chunks_mut(CHUNK * k))
        .map(|(pts, rs)| {
            let mut sum = T::zero();
            for (p, r) in pts.iter().zip(rs.chunks_exact_mut(k)) {
                model.component_log_terms(p.as_ref(), r);
                let lse = log_sum_exp(r);
                for v in r.iter_mut() {
                    *v = (*v - lse).exp();
                }
                sum += lse;
            }
            sum
        })
        .collect();
    partial.into_iter().sum::<T>() / T::from_usize_lossy(points.len())
}

fn m_step<T: Scalar, V: AsRef<[T]> + Sync>(
    points: &[V],
    resp: &[T],
    k: usize,
    dim: usize,
    floor: T,
    prev: Option<&GmmModel<T>>,
    provenance: &str,
) -> Result<GmmModel<T>, SegmentationError> {
    let tiny = T::lit(1e-10);

    // Responsibility mass and weighted sums, reduced chunk-wise in a fixed order.
    let partial: Vec<(Vec<T>, Vec<T>)> = points
        .par_chunks(CHUNK)
        .zip(resp.par_chunks(CHUNK * k))
        .map(|(pts, rs)| {
            let mut mass = vec![T::zero(); k];
            let mut sums = vec![T::zero(); k * dim];
            for (p, r) in pts.iter().zip(rs.chunks_exact(k)) {
                let p = p.as_ref();
                for j in 0..k {
                    mass[j] += r[j];
                    for d in 0..dim {
                        sums[j * dim + d] += r[j] * p[d];
                    }
                }
            }
            (mass, sums)
        })
        .collect();
    let mut mass = vec![T::zero(); k];
    let mut sums = vec![T::zero(); k * dim];
    for (m, s) in partial {
        mass.iter_mut().zip(m).for_each(|(a, b)| *a += b);
        sums.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    let means: Vec<Vec<T>> = (0..k)
        .map(|j| {
            if mass[j] > tiny {
                (0..dim).map(|d| sums[j * dim + d] / mass[j]).collect()
            } else {
                prev.map(|m| m.means()[j].clone())
                    .unwrap_or_else(|| vec![T::zero(); dim])
            }
        })
        .collect();

    let partial: Vec<Vec<T>> = points
        .par_chunks(CHUNK)
        .zip(resp.par_chunks(CHUNK * k))
        .map(|(pts, rs)| {
            let mut scatter = vec![T::zero(); k * dim * dim];
            let mut diff = [T::zero(); MAX_DIM];
            for (p, r) in pts.iter().zip(rs.chunks_exact(k)) {
                let p = p.as_ref();
                for j in 0..k {
                    if r[j] == T::zero() {
                        continue;
                    }
                    for d in 0..dim {
                        diff[d] = p[d] - means[j][d];
                    }
                    let block = &mut scatter[j * dim * dim..(j + 1) * dim * dim];
                    for a in 0..dim {
                        let ra = r[j] * diff[a];
                        for b in 0..=a {
                            block[a * dim + b] += ra * diff[b];
                        }
                    }
                }
            }
            scatter
        })
        .collect();
    let mut scatter = vec![T::zero(); k * dim * dim];
    for s in partial {
        scatter.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }

    let mut covariances = Vec::with_capacity(k);
    for j in 0..k {
        if mass[j] <= tiny {
            let fallback = prev.map(|m| m.covariances()[j].clone()).unwrap_or_else(|| {
                let mut c = vec![T::zero(); dim * dim];
                (0..dim).for_each(|d| c[d * dim + d] = T::one());
                c
            });
            covariances.push(fallback);
            continue;
        }
        let mut cov = vec![T::zero(); dim * dim];
        for a in 0..dim {
            for b in 0..=a {
                let v = scatter[j * dim * dim + a * dim + b] / mass[j];
                cov[a * dim + b] = v;
                cov[b * dim + a] = v;
            }
        }
        covariances.push(clip_eigenvalues(cov, dim, floor));
    }

    let total: T = mass.iter().copied().sum();
    let weights: Vec<T> = mass.iter().map(|&m| m / total).collect();
    GmmModel::new(weights, means, covariances, floor, SKIN_NORMALIZATION, provenance)
}

/// Returns `cov` unchanged when its spectrum already respects `floor`,
/// otherwise rebuilds it with every eigenvalue raised to at least `floor`.
pub(crate) fn clip_eigenvalues<T: Scalar>(cov: Vec<T>, dim: usize, floor: T) -> Vec<T> {
    let eig = symmetric_eigen(&cov, dim);
    let min = eig.values.iter().copied().fold(T::infinity(), T::min);
    // A margin keeps the Cholesky factorization away from the boundary.
    if min >= floor * T::lit(1.0 + 1e-9) && cholesky(&cov, dim).is_some() {
        return cov;
    }
    let clipped: Vec<T> = eig.values.iter().map(|&v| v.max(floor)).collect();
    let mut rebuilt = compose_from_eigen(&clipped, &eig.vectors);
    for a in 0..dim {
        for b in 0..a {
            let v = (rebuilt[a * dim + b] + rebuilt[b * dim + a]) / T::lit(2.0);
            rebuilt[a * dim + b] = v;
            rebuilt[b * dim + a] = v;
        }
    }
    rebuilt
}
