use crate::data::Dataset;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Logistic,
    Ridge,
}

/// Affine score `w . x + b`, with the training feature means kept for
/// closed-form attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl LinearModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeConfig {
    pub lambda: f64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

fn log1p_exp(m: f64) -> f64 {
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// Regularized logistic objective:
/// `mean(log(1 + e^m) - y m) + l2 / (2n) * |w|^2`, with the bias unpenalized.
pub fn logistic_objective(train: &Dataset, l2: f64, weights: &[f64], bias: f64) -> f64 {
    let n = train.n_rows() as f64;
    let data: f64 = train
        .rows()
        .zip(train.labels())
        .map(|(x, &y)| {
            let m = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
            log1p_exp(m) - f64::from(y) * m
        })
        .sum();
    let penalty: f64 = weights.iter().map(|w| w * w).sum();
    data / n + 0.5 * l2 / n * penalty
}

/// Fit L2-regularized logistic regression with damped Newton iterations.
///
/// Iterates until the max-norm of the objective gradient drops to `tol` or
/// `max_iter` is reached; `converged` records which. The procedure draws no
/// random numbers, so `seed` only labels the model.
pub fn train_logistic(train: &Dataset, config: &LogisticConfig) -> Result<LinearModel> {
    if train.is_degenerate() {
        return Err(Error::DegenerateLabels(format!(
            "logistic regression needs both classes in `{}`",
            train.id
        )));
    }
    if !(config.l2 >= 0.0) {
        return Err(Error::invalid("l2 must be >= 0"));
    }
    let d = train.n_features();
    let n = train.n_rows() as f64;
    let p = d + 1;
    let rate = train.positive_rate().clamp(1e-12, 1.0 - 1e-12);
    let mut theta = DVector::<f64>::zeros(p);
    theta[d] = (rate / (1.0 - rate)).ln();

    let objective = |theta: &DVector<f64>| {
        logistic_objective(train, config.l2, &theta.as_slice()[..d], theta[d])
    };
    let mut loss = objective(&theta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        let mut z = vec![1.0; p];
        for (x, &y) in train.rows().zip(train.labels()) {
            z[..d].copy_from_slice(x);
            let m: f64 = theta.iter().zip(&z).map(|(t, v)| t * v).sum();
            let prob = sigmoid(m);
            let r = prob - f64::from(y);
            let s = prob * (1.0 - prob);
            for a in 0..p {
                grad[a] += r * z[a];
                let sa = s * z[a];
                for b in a..p {
                    hess[(a, b)] += sa * z[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        grad /= n;
        hess /= n;
        for a in 0..d {
            grad[a] += config.l2 / n * theta[a];
            hess[(a, a)] += config.l2 / n;
        }
        if grad.amax() <= config.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let step = solve_spd(&hess, &grad)
            .ok_or_else(|| Error::Numerical("logistic Hessian is not positive definite".into()))?;
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let candidate = &theta - &step * t;
            let cand_loss = objective(&candidate);
            if cand_loss.is_finite() && cand_loss <= loss - 1e-4 * t * slope {
                theta = candidate;
                loss = cand_loss;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !loss.is_finite() {
            return Err(Error::Numerical("logistic loss is not finite".into()));
        }
        if !accepted {
            // No decrease is representable; the iterate is as good as it gets.
            break;
        }
    }
    if !loss.is_finite() || theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Numerical("logistic fit produced non-finite parameters".into()));
    }
    Ok(LinearModel {
        kind: LinearKind::Logistic,
        weights: theta.as_slice()[..d].to_vec(),
        bias: theta[d],
        feature_means: train.feature_means(),
        converged,
        iterations,
    })
}

/// Solve `a x = b` for symmetric positive (semi)definite `a`, adding a small
/// jitter when the plain Cholesky factorization fails.
fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Some(chol.solve(b));
    }
    let scale = a.diagonal().amax().max(1e-300);
    let mut jittered = a.clone();
    for i in 0..a.nrows() {
        jittered[(i, i)] += 1e-10 * scale;
    }
    jittered.cholesky().map(|c| c.solve(b))
}

/// Ridge regression on `+-1` targets with an unpenalized intercept:
/// minimizes `|y - X w - b|^2 + lambda |w|^2` in closed form.
pub fn train_ridge(train: &Dataset, config: &RidgeConfig) -> Result<LinearModel> {
    if !(config.lambda > 0.0) {
        return Err(Error::invalid("ridge lambda must be > 0"));
    }
    if train.is_degenerate() {
        return Err(Error::DegenerateLabels(format!(
            "ridge classifier needs both classes in `{}`",
            train.id
        )));
    }
    let d = train.n_features();
    let means = train.feature_means();
    let targets: Vec<f64> = train.labels().iter().map(|&y| 2.0 * f64::from(y) - 1.0).collect();
    let y_mean = targets.iter().sum::<f64>() / targets.len() as f64;

    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut centered = vec![0.0; d];
    for (x, &t) in train.rows().zip(&targets) {
        for j in 0..d {
            centered[j] = x[j] - means[j];
        }
        for a in 0..d {
            rhs[a] += centered[a] * (t - y_mean);
            for b in a..d {
                gram[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
        gram[(a, a)] += config.lambda;
    }
    let w = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("ridge normal equations are not positive definite".into()))?
        .solve(&rhs);
    let bias = y_mean - w.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>();
    Ok(LinearModel {
        kind: LinearKind::Ridge,
        weights: w.as_slice().to_vec(),
        bias,
        feature_means: means,
        converged: true,
        iterations: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(n: usize) -> Dataset {
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0 + 0.5) / n as f64).collect();
        let ys = xs.iter().map(|&x| u8::from(x > 0.0)).collect();
        Dataset::new("1d", vec!["x".into()], xs, ys).unwrap()
    }

    fn noisy(n: usize) -> Dataset {
        let spec = crate::data::SyntheticSpec::additive(vec![1.0, -0.5, 0.25], 1.0);
        crate::data::generate_synthetic(&spec, n, 5).unwrap()
    }

    #[test]
    fn logistic_separation_direction() {
        let m = train_logistic(&one_d(40), &LogisticConfig::default()).unwrap();
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn logistic_regularization_is_monotone() {
        let data = noisy(300);
        let norms: Vec<f64> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&l2| {
                let cfg = LogisticConfig { l2, ..Default::default() };
                train_logistic(&data, &cfg).unwrap().weight_norm()
            })
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
    }

    #[test]
    fn logistic_gradient_vanishes_at_optimum() {
        let data = noisy(400);
        let cfg = LogisticConfig::default();
        let m = train_logistic(&data, &cfg).unwrap();
        assert!(m.converged);
        // Central finite differences of the objective, independent of the
        // analytic gradient used by the trainer.
        let h = 1e-5;
        let mut params = m.weights.clone();
        params.push(m.bias);
        let d = m.weights.len();
        let f = |p: &[f64]| logistic_objective(&data, cfg.l2, &p[..d], p[d]);
        for k in 0..params.len() {
            let mut up = params.clone();
            let mut down = params.clone();
            up[k] += h;
            down[k] -= h;
            let g = (f(&up) - f(&down)) / (2.0 * h);
            assert!(g.abs() <= 10.0 * cfg.tol, "component {k}: {g}");
        }
    }

    #[test]
    fn logistic_rejects_single_class() {
        let ds = Dataset::new("c", vec!["x".into()], vec![1.0, 2.0], vec![1, 1]).unwrap();
        assert!(train_logistic(&ds, &LogisticConfig::default()).is_err());
    }

    #[test]
    fn ridge_orthonormal_design_shrinks_by_one_plus_lambda() {
        // Columns are orthonormal and centered, so w = X'y / (1 + lambda).
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let features = vec![s, 0.0, -s, 0.0, 0.0, s, 0.0, -s];
        let labels = vec![1, 0, 1, 1];
        let ds = Dataset::new("o", vec!["a".into(), "b".into()], features, labels).unwrap();
        let m = train_ridge(&ds, &RidgeConfig { lambda: 1.0 }).unwrap();
        let xty = [s * 1.0 - s * -1.0, s * 1.0 - s * 1.0];
        for j in 0..2 {
            assert!((m.weights[j] - xty[j] / 2.0).abs() < 1e-12, "{:?}", m.weights);
        }
    }

    #[test]
    fn ridge_large_lambda_vanishes() {
        let m = train_ridge(&noisy(200), &RidgeConfig { lambda: 1e12 }).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-8), "{:?}", m.weights);
    }

    #[test]
    fn ridge_rejects_zero_lambda() {
        assert!(train_ridge(&noisy(50), &RidgeConfig { lambda: 0.0 }).is_err());
    }

    #[test]
    fn ridge_is_deterministic() {
        let data = noisy(100);
        let cfg = RidgeConfig::default();
        assert_eq!(train_ridge(&data, &cfg).unwrap(), train_ridge(&data, &cfg).unwrap());
    }
}
