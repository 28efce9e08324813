use super::AttributionVector;
use crate::models::LinearModel;
use crate::{Error, Result};

/// Closed-form Shapley values of an affine model under the interventional
/// value function with independent features: `phi_j = w_j (x_j - mean_j)`.
pub fn linear_shap(model: &LinearModel, x: &[f64]) -> Result<AttributionVector> {
    if x.len() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: x.len(),
        });
    }
    let phi = model
        .weights
        .iter()
        .zip(x)
        .zip(&model.feature_means)
        .map(|((w, v), m)| w * (v - m))
        .collect();
    Ok(AttributionVector::new(
        phi,
        model.margin(&model.feature_means),
        model.margin(x),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearKind;

    fn model(weights: Vec<f64>, means: Vec<f64>) -> LinearModel {
        LinearModel {
            kind: LinearKind::Logistic,
            weights,
            bias: 0.25,
            feature_means: means,
            converged: true,
            iterations: 0,
        }
    }

    #[test]
    fn zero_weights_give_zero_attribution() {
        let out = linear_shap(&model(vec![0.0; 3], vec![1.0, 2.0, 3.0]), &[5.0, -1.0, 0.0]).unwrap();
        assert_eq!(out.phi, vec![0.0; 3]);
    }

    #[test]
    fn direct_formula() {
        let out = linear_shap(&model(vec![2.0, -1.0], vec![0.0, 0.0]), &[1.0, 1.0]).unwrap();
        assert_eq!(out.phi, vec![2.0, -1.0]);
        assert!(out.efficiency_gap() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(linear_shap(&model(vec![1.0], vec![0.0]), &[1.0, 2.0]).is_err());
    }
}
