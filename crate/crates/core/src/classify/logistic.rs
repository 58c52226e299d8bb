use serde::{Deserialize, Serialize};

use super::{ClassifyError, Head};
use crate::linalg::dot;
use crate::scalar::Scalar;

/// `1 / (1 + e^-z)` without overflow for large `|z|`.
#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)`, stable on both tails.
#[inline]
fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LogisticModel<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub l2: f64,
    pub label_name: Head,
}

impl<T: Scalar> LogisticModel<T> {
    pub fn logit(&self, x: &[T]) -> Result<T, ClassifyError> {
        if x.len() != self.weights.len() {
            return Err(ClassifyError::DimensionMismatch(format!(
                "{} features for a {}-weight model",
                x.len(),
                self.weights.len()
            )));
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    pub fn predict_proba(&self, x: &[T]) -> Result<T, ClassifyError> {
        self.logit(x).map(sigmoid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticFitOptions {
    pub l2: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub gradient_tol: f64,
}

impl Default for LogisticFitOptions {
    fn default() -> Self {
        Self {
            l2: 0.01,
            max_iters: 20_000,
            gradient_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit<T> {
    pub model: LogisticModel<T>,
    pub loss: T,
    pub gradient_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Class-balanced, L2-penalized logistic loss:
/// `sum_i c_i nll_i / sum_i c_i + (l2 / 2) |w|^2`, with `c_i` the inverse
/// frequency of row i's class. The bias is not penalized.
pub struct LogisticObjective<'a, T> {
    rows: Vec<&'a [T]>,
    labels: &'a [bool],
    row_weights: Vec<T>,
    l2: T,
    dim: usize,
}

impl<'a, T: Scalar> LogisticObjective<'a, T> {
    pub fn new<V: AsRef<[T]>>(x: &'a [V], labels: &'a [bool], l2: f64) -> Result<Self, ClassifyError> {
        if x.len() != labels.len() {
            return Err(ClassifyError::DimensionMismatch(format!(
                "{} rows vs {} labels",
                x.len(),
                labels.len()
            )));
        }
        if x.len() < 2 {
            return Err(ClassifyError::InsufficientData("need at least two rows".into()));
        }
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(ClassifyError::InvalidParameter(format!("l2 = {l2}")));
        }
        let positives = labels.iter().filter(|&&l| l).count();
        let negatives = labels.len() - positives;
        if (positives == 0 || negatives == 0) && l2 == 0.0 {
            return Err(ClassifyError::SingleClassData);
        }
        let rows: Vec<&[T]> = x.iter().map(|r| r.as_ref()).collect();
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(ClassifyError::DimensionMismatch("ragged feature rows".into()));
        }
        if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(ClassifyError::NonFinite);
        }
        let n = labels.len() as f64;
        let weight_of = |count: usize| T::lit(n / (2.0 * count.max(1) as f64));
        let (wp, wn) = (weight_of(positives), weight_of(negatives));
        let row_weights = labels.iter().map(|&l| if l { wp } else { wn }).collect();
        Ok(Self {
            rows,
            labels,
            row_weights,
            l2: T::lit(l2),
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn loss(&self, weights: &[T], bias: T) -> T {
        let mut total = T::zero();
        let mut mass = T::zero();
        for ((row, &y), &c) in self.rows.iter().zip(self.labels).zip(&self.row_weights) {
            let z = dot(weights, row) + bias;
            // -log p(y | z) = softplus(z) - y z
            let nll = if y { softplus(-z) } else { softplus(z) };
            total += c * nll;
            mass += c;
        }
        total / mass + self.l2 * T::lit(0.5) * dot(weights, weights)
    }

    /// Gradient with respect to `(weights, bias)`.
    pub fn gradient(&self, weights: &[T], bias: T) -> (Vec<T>, T) {
        let mut gw = vec![T::zero(); self.dim];
        let mut gb = T::zero();
        let mut mass = T::zero();
        for ((row, &y), &c) in self.rows.iter().zip(self.labels).zip(&self.row_weights) {
            let p = sigmoid(dot(weights, row) + bias);
            let r = c * (p - if y { T::one() } else { T::zero() });
            for (g, &v) in gw.iter_mut().zip(row.iter()) {
                *g += r * v;
            }
            gb += r;
            mass += c;
        }
        for (g, &w) in gw.iter_mut().zip(weights) {
            *g = *g / mass + self.l2 * w;
        }
        (gw, gb / mass)
    }
}

/// Full-batch gradient descent with Armijo backtracking from zero weights.
pub fn fit_logistic<T: Scalar, V: AsRef<[T]>>(
    x: &[V],
    labels: &[bool],
    head: Head,
    options: &LogisticFitOptions,
) -> Result<LogisticFit<T>, ClassifyError> {
    let objective = LogisticObjective::new(x, labels, options.l2)?;
    let mut w = vec![T::zero(); objective.dim()];
    let mut b = T::zero();
    let mut loss = objective.loss(&w, b);
    let mut step = T::one();
    let armijo = T::lit(1e-4);
    let half = T::lit(0.5);
    let tol = T::lit(options.gradient_tol);
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm;

    loop {
        let (gw, gb) = objective.gradient(&w, b);
        let g2 = dot(&gw, &gw) + gb * gb;
        grad_norm = g2.sqrt();
        if grad_norm < tol {
            converged = true;
            break;
        }
        if iterations >= options.max_iters {
            break;
        }
        iterations += 1;

        // Start each search a little above the last accepted step.
        step = (step * T::lit(2.0)).min(T::lit(1e6));
        let mut accepted = false;
        for _ in 0..60 {
            let w_try: Vec<T> = w.iter().zip(&gw).map(|(&wi, &gi)| wi - step * gi).collect();
            let b_try = b - step * gb;
            let l_try = objective.loss(&w_try, b_try);
            if l_try <= loss - armijo * step * g2 {
                w = w_try;
                b = b_try;
                loss = l_try;
                accepted = true;
                break;
            }
            step *= half;
        }
        if !accepted {
            // No representable decrease left along the gradient.
            break;
        }
    }

    Ok(LogisticFit {
        model: LogisticModel {
            weights: w,
            bias: b,
            l2: options.l2,
            label_name: head,
        },
        loss,
        gradient_norm: grad_norm,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = i % 3 == 0;
            let mut row: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            row[0] += if label { 0.8 } else { -0.8 };
            x.push(row);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn zero_model_is_one_half() {
        let m = LogisticModel { weights: vec![0.0; 12], bias: 0.0, l2: 1.0, label_name: Head::Good };
        assert_eq!(m.predict_proba(&[3.7; 12]).unwrap(), 0.5);
        assert!(m.predict_proba(&[0.0; 11]).is_err());
    }

    #[test]
    fn saturates_without_overflow() {
        assert!((1.0 - sigmoid(40.0f64)).abs() < 1e-12);
        assert!(sigmoid(-40.0f64) > 0.0 && sigmoid(-40.0f64) < 1e-12);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert!(softplus(1000.0f64).is_finite());
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let label = i % 2 == 0;
            let mut row = vec![0.0; 12];
            row[3] = if label { 1.0 } else { -1.0 } + (i as f64) * 1e-3;
            x.push(row);
            y.push(label);
        }
        let fit = fit_logistic(&x, &y, Head::Blurry, &LogisticFitOptions::default()).unwrap();
        assert!(fit.converged);
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(r, &l)| (fit.model.predict_proba(r).unwrap() >= 0.5) == l)
            .count();
        assert_eq!(correct, 40);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y) = toy(60, 1);
        let obj = LogisticObjective::new(&x, &y, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let w: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b = rng.random_range(-1.0..1.0);
            let (gw, gb) = obj.gradient(&w, b);
            let h = 1e-6;
            for j in 0..=12 {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                let (mut bp, mut bm) = (b, b);
                if j < 12 {
                    wp[j] += h;
                    wm[j] -= h;
                } else {
                    bp += h;
                    bm -= h;
                }
                let fd = (obj.loss(&wp, bp) - obj.loss(&wm, bm)) / (2.0 * h);
                let g = if j < 12 { gw[j] } else { gb };
                assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-3), "coord {j}: {fd} vs {g}");
            }
        }
    }

    #[test]
    fn duplicated_rows_keep_the_optimum() {
        let (x, y) = toy(45, 3);
        let opts = LogisticFitOptions { l2: 1.0, gradient_tol: 1e-9, ..Default::default() };
        let once = fit_logistic(&x, &y, Head::Good, &opts).unwrap();
        let x2: Vec<Vec<f64>> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<bool> = y.iter().chain(&y).copied().collect();
        let twice = fit_logistic(&x2, &y2, Head::Good, &opts).unwrap();
        for (a, b) in once.model.weights.iter().zip(&twice.model.weights) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(once.converged && twice.converged);
        assert!((once.model.bias - twice.model.bias).abs() < 1e-8);
    }

    #[test]
    fn single_class_needs_regularization() {
        let x = vec![vec![1.0; 12]; 5];
        let y = vec![true; 5];
        let unreg = LogisticFitOptions { l2: 0.0, ..Default::default() };
        assert_eq!(
            fit_logistic::<f64, _>(&x, &y, Head::Good, &unreg).unwrap_err(),
            ClassifyError::SingleClassData
        );
        assert!(fit_logistic::<f64, _>(&x, &y, Head::Good, &LogisticFitOptions::default()).is_ok());
    }

    #[test]
    fn matches_compensated_oracle() {
        // Oracle: error-free dot product accumulation, then the tanh form.
        fn two_sum(a: f64, b: f64) -> (f64, f64) {
            let s = a + b;
            let bb = s - a;
            (s, (a - (s - bb)) + (b - bb))
        }
        fn two_prod(a: f64, b: f64) -> (f64, f64) {
            let p = a * b;
            (p, a.mul_add(b, -p))
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let w: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b = rng.random_range(-2.0..2.0);
            let (mut s, mut c) = (b, 0.0);
            for (wi, xi) in w.iter().zip(&x) {
                let (p, pe) = two_prod(*wi, *xi);
                let (s2, se) = two_sum(s, p);
                s = s2;
                c += pe + se;
            }
            let z = s + c;
            let oracle = 0.5 * (1.0 + (0.5 * z).tanh());
            let m = LogisticModel { weights: w, bias: b, l2: 0.0, label_name: Head::Good };
            let p = m.predict_proba(&x).unwrap();
            assert!((p - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn proba_is_monotone_in_logit() {
        let mut prev = 0.0f64;
        for i in -300..=300 {
            let p = sigmoid(i as f64 * 0.1);
            assert!(p >= prev);
            assert!(p > 0.0 && p < 1.0);
            prev = p;
        }
    }
}
