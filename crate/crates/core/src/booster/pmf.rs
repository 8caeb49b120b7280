use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Base-learner subclass drawn for one boosting round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Subclass {
    Tree { depth: usize },
    Rff,
}

/// Distribution over the `K = N_D + 1` subclasses: trees of each depth in
/// `[min_depth, max_depth]` with probability `p_t / N_D` each, and the RFF
/// ridge learner with probability `1 - p_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixturePmf {
    tree_probability: f64,
    min_depth: usize,
    max_depth: usize,
}

impl MixturePmf {
    pub fn new(tree_probability: f64, min_depth: usize, max_depth: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&tree_probability) {
            return Err(Error::InvalidParam(format!(
                "tree_probability must be in [0,1], got {tree_probability}"
            )));
        }
        if min_depth == 0 || min_depth > max_depth {
            return Err(Error::InvalidParam(format!(
                "need 1 <= min_max_depth <= max_max_depth, got {min_depth}..{max_depth}"
            )));
        }
        Ok(MixturePmf {
            tree_probability,
            min_depth,
            max_depth,
        })
    }

    pub fn tree_probability(&self) -> f64 {
        self.tree_probability
    }

    pub fn n_depths(&self) -> usize {
        self.max_depth - self.min_depth + 1
    }

    pub fn n_subclasses(&self) -> usize {
        self.n_depths() + 1
    }

    /// Subclass with index `k`; the last index is the RFF learner.
    pub fn subclass(&self, k: usize) -> Subclass {
        if k < self.n_depths() {
            Subclass::Tree {
                depth: self.min_depth + k,
            }
        } else {
            Subclass::Rff
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let nd = self.n_depths();
        let mut phi = vec![self.tree_probability / nd as f64; nd];
        phi.push(1.0 - self.tree_probability);
        phi
    }

    /// Draws a subclass: a Bernoulli(`p_t`) tree-or-RFF choice, then a uniform depth.
    pub fn sample(&self, rng: &mut Rng) -> Subclass {
        let u: f64 = rng.random();
        if u < self.tree_probability {
            Subclass::Tree {
                depth: rng.random_range(self.min_depth..=self.max_depth),
            }
        } else {
            Subclass::Rff
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn degenerate_pmf_always_same_tree() {
        let pmf = MixturePmf::new(1.0, 6, 6).unwrap();
        let mut r = rng::from_seed(0);
        for _ in 0..1000 {
            assert_eq!(pmf.sample(&mut r), Subclass::Tree { depth: 6 });
        }
        assert_eq!(pmf.probabilities(), vec![1.0, 0.0]);
    }

    #[test]
    fn phi_formula() {
        let pmf = MixturePmf::new(0.9, 4, 6).unwrap();
        let phi = pmf.probabilities();
        let expected = [0.3, 0.3, 0.3, 0.1];
        assert_eq!(phi.len(), 4);
        for (a, b) in phi.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(pmf.subclass(0), Subclass::Tree { depth: 4 });
        assert_eq!(pmf.subclass(3), Subclass::Rff);
    }

    #[test]
    fn empirical_frequencies_match_phi() {
        let pmf = MixturePmf::new(0.9, 4, 6).unwrap();
        let phi = pmf.probabilities();
        let mut counts = [0usize; 4];
        let mut r = rng::from_seed(99);
        let draws = 100_000;
        for _ in 0..draws {
            let k = match pmf.sample(&mut r) {
                Subclass::Tree { depth } => depth - 4,
                Subclass::Rff => 3,
            };
            counts[k] += 1;
        }
        for (c, p) in counts.iter().zip(&phi) {
            assert!((*c as f64 / draws as f64 - p).abs() <= 0.01);
        }
    }

    #[test]
    fn invalid_pmfs() {
        assert!(MixturePmf::new(1.1, 1, 2).is_err());
        assert!(MixturePmf::new(0.5, 0, 2).is_err());
        assert!(MixturePmf::new(0.5, 3, 2).is_err());
    }
}
