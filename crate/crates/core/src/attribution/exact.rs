use super::AttributionVector;
use crate::{Error, Result};

/// Largest feature count accepted by [`exact_shapley`].
pub const MAX_EXACT_FEATURES: usize = 12;

/// Feature subset as a bitmask over indices `0..64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition(pub u64);

impl Coalition {
    pub fn empty() -> Self {
        Coalition(0)
    }

    pub fn full(d: usize) -> Self {
        Coalition(if d >= 64 { u64::MAX } else { (1u64 << d) - 1 })
    }

    pub fn contains(self, j: usize) -> bool {
        self.0 >> j & 1 == 1
    }

    pub fn with(self, j: usize) -> Self {
        Coalition(self.0 | 1 << j)
    }

    pub fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn complement(self, d: usize) -> Self {
        Coalition(!self.0 & Coalition::full(d).0)
    }

    pub fn from_features(features: impl IntoIterator<Item = usize>) -> Self {
        features.into_iter().fold(Coalition::empty(), Coalition::with)
    }
}

/// Shapley values of a `d`-player game by enumerating all `2^d` coalitions:
/// `phi_j = sum_S |S|! (d - |S| - 1)! / d! * (v(S + j) - v(S))`.
pub fn exact_shapley(mut value: impl FnMut(Coalition) -> f64, d: usize) -> Result<AttributionVector> {
    if d == 0 {
        return Err(Error::invalid("exact Shapley needs d >= 1"));
    }
    if d > MAX_EXACT_FEATURES {
        return Err(Error::invalid(format!(
            "exact Shapley enumeration refused for d = {d} > {MAX_EXACT_FEATURES}"
        )));
    }
    let n_coalitions = 1usize << d;
    let table: Vec<f64> = (0..n_coalitions as u64).map(|m| value(Coalition(m))).collect();

    // weight[s] = s! (d - s - 1)! / d!
    let mut factorial = vec![1.0f64; d + 1];
    for k in 1..=d {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..d)
        .map(|s| factorial[s] * factorial[d - s - 1] / factorial[d])
        .collect();

    let mut phi = vec![0.0; d];
    for (j, phi_j) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        let mut acc = 0.0;
        for mask in 0..n_coalitions {
            if mask & bit != 0 {
                continue;
            }
            let s = (mask as u64).count_ones() as usize;
            acc += weight[s] * (table[mask | bit] - table[mask]);
        }
        *phi_j = acc;
    }
    Ok(AttributionVector::new(phi, table[0], table[n_coalitions - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn additive_game() {
        let out = exact_shapley(|s| s.size() as f64, 5).unwrap();
        for p in out.phi {
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn glove_pair() {
        let out = exact_shapley(|s| f64::from(u8::from(s.contains(0) && s.contains(1))), 4).unwrap();
        let expected = [0.5, 0.5, 0.0, 0.0];
        for (p, e) in out.phi.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12, "{:?}", out.phi);
        }
    }

    #[test]
    fn random_table_is_efficient() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let table: Vec<f64> = (0..32).map(|_| rng.random_range(-3.0..3.0)).collect();
        let out = exact_shapley(|s| table[s.0 as usize], 5).unwrap();
        let total: f64 = out.phi.iter().sum();
        assert!((total - (table[31] - table[0])).abs() <= 1e-12);
    }

    #[test]
    fn refuses_large_d() {
        assert!(exact_shapley(|_| 0.0, 13).is_err());
        assert!(exact_shapley(|_| 0.0, 0).is_err());
    }

    #[test]
    fn coalition_ops() {
        let c = Coalition::from_features([0, 2]);
        assert!(c.contains(0) && !c.contains(1) && c.contains(2));
        assert_eq!(c.size(), 2);
        assert_eq!(c.complement(4), Coalition::from_features([1, 3]));
    }
}
