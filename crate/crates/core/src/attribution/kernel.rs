use super::{value_interventional, AttributionVector, BackgroundSet, Coalition};
use crate::rng;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;

pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelOptions {
    pub n_samples: usize,
    pub ridge_reg: f64,
    pub seed: u64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            ridge_reg: DEFAULT_RIDGE,
            seed: 0,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coalitions and regression weights. All `2^d - 2` proper coalitions are
/// used with their exact kernel weights when they fit in the budget;
/// otherwise sizes are drawn from the kernel's size distribution and each
/// sampled coalition is paired with its complement.
fn coalitions(d: usize, n_samples: usize, seed: u64) -> Vec<(Coalition, f64)> {
    let proper = if d >= 63 { usize::MAX } else { (1usize << d) - 2 };
    if proper <= n_samples {
        return (1..=proper as u64)
            .map(|m| {
                let s = Coalition(m).size();
                let w = (d - 1) as f64 / (binomial(d, s) * s as f64 * (d - s) as f64);
                (Coalition(m), w)
            })
            .collect();
    }
    let size_weight: Vec<f64> = (1..d).map(|s| 1.0 / (s as f64 * (d - s) as f64)).collect();
    let total: f64 = size_weight.iter().sum();
    let mut rng = rng::seeded(seed);
    let mut out = Vec::with_capacity(n_samples);
    while out.len() + 2 <= n_samples.max(2) {
        let mut u = rng.random::<f64>() * total;
        let mut s = d - 1;
        for (k, w) in size_weight.iter().enumerate() {
            if u < *w {
                s = k + 1;
                break;
            }
            u -= w;
        }
        let c = Coalition::from_features(sample(&mut rng, d, s).into_iter());
        out.push((c, 1.0));
        out.push((c.complement(d), 1.0));
    }
    out
}

/// KernelSHAP: Shapley-kernel weighted least squares over coalition values
/// with efficiency imposed as an exact equality constraint.
///
/// Absent features are imputed from every background row and the model output
/// averaged (interventional). The constrained ridge problem
/// `min sum_k w_k (v_k - base - z_k . phi)^2 + ridge |phi|^2  s.t.  sum(phi) = f(x) - base`
/// is solved through its KKT system, which treats all features symmetrically.
pub fn kernel_shap(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    background: &BackgroundSet,
    options: &KernelOptions,
) -> Result<AttributionVector> {
    let d = x.len();
    if d != background.n_features() {
        return Err(Error::DimensionMismatch {
            expected: background.n_features(),
            actual: d,
        });
    }
    if options.n_samples < d + 2 {
        return Err(Error::invalid(format!(
            "KernelSHAP needs n_samples >= d + 2 = {}, got {}",
            d + 2,
            options.n_samples
        )));
    }
    if !(options.ridge_reg >= 0.0) {
        return Err(Error::invalid("ridge_reg must be >= 0"));
    }
    let fx = f(x);
    let base = value_interventional(&f, x, Coalition::empty(), background);
    let total = fx - base;
    if d == 1 {
        return Ok(AttributionVector::new(vec![total], base, fx));
    }

    let samples = coalitions(d, options.n_samples, options.seed);
    let weight_sum: f64 = samples.iter().map(|(_, w)| w).sum();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for (c, w) in &samples {
        let w = w / weight_sum;
        let v = value_interventional(&f, x, *c, background) - base;
        for a in (0..d).filter(|&a| c.contains(a)) {
            rhs[a] += w * v;
            for b in (0..d).filter(|&b| c.contains(b)) {
                gram[(a, b)] += w;
            }
        }
    }

    let mut kkt = DMatrix::<f64>::zeros(d + 1, d + 1);
    let mut kkt_rhs = DVector::<f64>::zeros(d + 1);
    for a in 0..d {
        for b in 0..d {
            kkt[(a, b)] = gram[(a, b)];
        }
        kkt[(a, a)] += options.ridge_reg;
        kkt[(a, d)] = 1.0;
        kkt[(d, a)] = 1.0;
        kkt_rhs[a] = rhs[a];
    }
    kkt_rhs[d] = total;
    let singular = || {
        Error::Singular(format!(
            "{} coalitions for {d} features; raise n_samples or ridge_reg",
            samples.len()
        ))
    };
    let lu = kkt.lu();
    let pivots = lu.u().diagonal().map(f64::abs);
    if pivots.min() <= 1e-12 * pivots.max() {
        return Err(singular());
    }
    let solution = lu.solve(&kkt_rhs).ok_or_else(singular)?;
    let mut phi: Vec<f64> = solution.as_slice()[..d].to_vec();
    if phi.iter().any(|p| !p.is_finite()) {
        return Err(Error::Singular("regression produced non-finite values".into()));
    }
    // Re-impose the constraint exactly after the solve's rounding.
    let drift = (total - phi.iter().sum::<f64>()) / d as f64;
    phi.iter_mut().for_each(|p| *p += drift);
    Ok(AttributionVector::new(phi, base, fx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjunction_is_symmetric() {
        let bg = BackgroundSet::from_rows(vec![0.0, 0.0, 1.0, -1.0, -1.0, 1.0, 0.5, 0.5], 2).unwrap();
        let f = |z: &[f64]| z[0] * z[1];
        let out = kernel_shap(f, &[1.0, 1.0], &bg, &KernelOptions::default()).unwrap();
        assert!((out.phi[0] - out.phi[1]).abs() < 1e-6, "{:?}", out.phi);
        assert!(out.efficiency_gap() < 1e-9);
    }

    #[test]
    fn sampled_path_is_seeded_and_efficient() {
        let d = 12;
        let rows: Vec<f64> = (0..5 * d).map(|i| (i % 7) as f64 - 3.0).collect();
        let bg = BackgroundSet::from_rows(rows, d).unwrap();
        let f = |z: &[f64]| z.iter().enumerate().map(|(j, v)| (j as f64) * v).sum::<f64>() + z[0] * z[1];
        let x: Vec<f64> = (0..d).map(|j| j as f64 * 0.1).collect();
        let opts = KernelOptions { n_samples: 200, seed: 4, ..Default::default() };
        let a = kernel_shap(f, &x, &bg, &opts).unwrap();
        assert_eq!(a, kernel_shap(f, &x, &bg, &opts).unwrap());
        assert!(a.efficiency_gap() < 1e-9);
        let b = kernel_shap(f, &x, &bg, &KernelOptions { seed: 5, ..opts }).unwrap();
        assert_ne!(a.phi, b.phi);
    }

    #[test]
    fn too_few_samples() {
        let bg = BackgroundSet::from_rows(vec![0.0; 3], 3).unwrap();
        let opts = KernelOptions { n_samples: 4, ..Default::default() };
        assert!(kernel_shap(|z| z[0], &[1.0, 2.0, 3.0], &bg, &opts).is_err());
    }

    #[test]
    fn singular_without_ridge_is_reported() {
        // Budget of 4 pairs over 8 features cannot identify the attribution.
        let d = 8;
        let bg = BackgroundSet::from_rows(vec![0.0; d], d).unwrap();
        let opts = KernelOptions { n_samples: d + 2, ridge_reg: 0.0, seed: 1 };
        let res = kernel_shap(|z| z.iter().sum(), &vec![1.0; d], &bg, &opts);
        assert!(matches!(res, Err(Error::Singular(_))), "{res:?}");
    }

    #[test]
    fn enumeration_weights_sum_like_kernel() {
        let c = coalitions(4, 1000, 0);
        assert_eq!(c.len(), 14);
        // Size-1 and size-3 coalitions carry equal weight by symmetry.
        let w1 = c.iter().find(|(c, _)| c.size() == 1).unwrap().1;
        let w3 = c.iter().find(|(c, _)| c.size() == 3).unwrap().1;
        assert!((w1 - w3).abs() < 1e-15);
    }
}
