use super::linear::sigmoid;
use crate::data::Dataset;
use crate::rng;
use crate::{Error, Result};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

/// One-hidden-layer network producing a log-odds score.
///
/// Inputs are standardized with the training means and standard deviations
/// stored on the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    /// `hidden_width x d`, row-major.
    pub hidden_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden_width: usize,
    pub epochs: usize,
    pub step_size: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_width: 16,
            epochs: 1000,
            step_size: 0.5,
        }
    }
}

impl MlpModel {
    pub fn n_features(&self) -> usize {
        self.input_mean.len()
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_bias.len()
    }

    fn standardize(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..out.len() {
            out[j] = (x[j] - self.input_mean[j]) / self.input_scale[j];
        }
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        let d = self.n_features();
        let mut z = vec![0.0; d];
        self.standardize(x, &mut z);
        let mut out = self.output_bias;
        for (k, row) in self.hidden_weights.chunks_exact(d).enumerate() {
            let pre: f64 = row.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>() + self.hidden_bias[k];
            out += self.output_weights[k] * pre.max(0.0);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.hidden_weights
            .iter()
            .chain(&self.hidden_bias)
            .chain(&self.output_weights)
            .chain(std::iter::once(&self.output_bias))
            .all(|v| v.is_finite())
    }
}

/// Full-batch gradient descent on the mean logistic loss from a seeded
/// He-normal initialization.
pub fn train_mlp(train: &Dataset, config: &MlpConfig, seed: u64) -> Result<MlpModel> {
    if config.hidden_width == 0 {
        return Err(Error::invalid("hidden_width must be >= 1"));
    }
    if !(config.step_size > 0.0) {
        return Err(Error::invalid("step_size must be > 0"));
    }
    let d = train.n_features();
    let h = config.hidden_width;
    let n = train.n_rows();
    let input_mean = train.feature_means();
    let mut input_scale = vec![0.0; d];
    for row in train.rows() {
        for j in 0..d {
            input_scale[j] += (row[j] - input_mean[j]).powi(2);
        }
    }
    for s in &mut input_scale {
        *s = (*s / n as f64).sqrt();
        if !(*s > 0.0) {
            *s = 1.0;
        }
    }

    let mut rng = rng::seeded(seed);
    let hidden_init = Normal::new(0.0, (2.0 / d as f64).sqrt()).expect("valid std");
    let output_init = Normal::new(0.0, (1.0 / h as f64).sqrt()).expect("valid std");
    let mut model = MlpModel {
        input_mean,
        input_scale,
        hidden_weights: (0..h * d).map(|_| hidden_init.sample(&mut rng)).collect(),
        hidden_bias: vec![0.0; h],
        output_weights: (0..h).map(|_| output_init.sample(&mut rng)).collect(),
        output_bias: 0.0,
        activation: Activation::Relu,
    };

    let inputs: Vec<f64> = train
        .rows()
        .flat_map(|x| {
            let mut z = vec![0.0; d];
            model.standardize(x, &mut z);
            z
        })
        .collect();
    let mut hidden = vec![0.0; h];
    let mut g_hw = vec![0.0; h * d];
    let mut g_hb = vec![0.0; h];
    let mut g_ow = vec![0.0; h];
    for _ in 0..config.epochs {
        g_hw.iter_mut().for_each(|g| *g = 0.0);
        g_hb.iter_mut().for_each(|g| *g = 0.0);
        g_ow.iter_mut().for_each(|g| *g = 0.0);
        let mut g_ob = 0.0;
        let mut loss = 0.0;
        for (z, &y) in inputs.chunks_exact(d).zip(train.labels()) {
            let mut out = model.output_bias;
            for k in 0..h {
                let row = &model.hidden_weights[k * d..(k + 1) * d];
                let pre: f64 = row.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + model.hidden_bias[k];
                hidden[k] = pre;
                out += model.output_weights[k] * pre.max(0.0);
            }
            let y = f64::from(y);
            let p = sigmoid(out);
            loss += if out > 0.0 { out + (-out).exp().ln_1p() } else { out.exp().ln_1p() } - y * out;
            let r = p - y;
            g_ob += r;
            for k in 0..h {
                if hidden[k] <= 0.0 {
                    continue;
                }
                g_ow[k] += r * hidden[k];
                let back = r * model.output_weights[k];
                g_hb[k] += back;
                for (g, v) in g_hw[k * d..(k + 1) * d].iter_mut().zip(z) {
                    *g += back * v;
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Numerical("MLP loss diverged".into()));
        }
        let step = config.step_size / n as f64;
        for (w, g) in model.hidden_weights.iter_mut().zip(&g_hw) {
            *w -= step * g;
        }
        for (w, g) in model.hidden_bias.iter_mut().zip(&g_hb) {
            *w -= step * g;
        }
        for (w, g) in model.output_weights.iter_mut().zip(&g_ow) {
            *w -= step * g;
        }
        model.output_bias -= step * g_ob;
    }
    if !model.is_finite() {
        return Err(Error::Numerical("MLP parameters diverged".into()));
    }
    Ok(model)
}
