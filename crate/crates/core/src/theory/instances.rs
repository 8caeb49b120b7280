use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::TheoryInstance;
use crate::error::{Error, Result};
use crate::losses::LossFunction;
use crate::rng::Rng;

const BUILTINS: &[&str] = &[
    "identity2-uniform",
    "identity2-joint",
    "identity3-skewed",
    "perfect-fit",
    "logistic3",
];

pub fn builtin_names() -> &'static [&'static str] {
    BUILTINS
}

/// Named instances used by the verifier and the tests.
///
/// * `identity2-uniform`: `B = I_2`, one column per subclass, `phi = (1/2, 1/2)`, squared error.
/// * `identity2-joint`: `B = I_2` as a single subclass.
/// * `identity3-skewed`: `B = I_3`, singleton subclasses with `phi = (0.2, 0.3, 0.5)`.
/// * `perfect-fit`: one column proportional to the labels, so a single step reaches the optimum.
/// * `logistic3`: three examples, four hypotheses in three subclasses, regularized logistic loss.
pub fn builtin(name: &str) -> Result<TheoryInstance> {
    let sq = LossFunction::SquaredError;
    let i2 = [vec![1.0, 0.0], vec![0.0, 1.0]];
    match name {
        "identity2-uniform" => TheoryInstance::new(
            &i2,
            vec![vec![0], vec![1]],
            vec![0.5, 0.5],
            sq,
            vec![1.0, 1.0],
        ),
        "identity2-joint" => {
            TheoryInstance::new(&i2, vec![vec![0, 1]], vec![1.0], sq, vec![1.0, -2.0])
        }
        "identity3-skewed" => TheoryInstance::new(
            &[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            vec![vec![0], vec![1], vec![2]],
            vec![0.2, 0.3, 0.5],
            sq,
            vec![1.0, -1.0, 2.0],
        ),
        "perfect-fit" => TheoryInstance::new(
            &[vec![0.6], vec![0.8]],
            vec![vec![0]],
            vec![1.0],
            sq,
            vec![3.0, 4.0],
        ),
        "logistic3" => TheoryInstance::normalized(
            &[
                vec![0.9, -0.2, 0.5, 1.0],
                vec![0.3, 1.1, -0.4, 0.2],
                vec![-0.5, 0.4, 0.8, -0.7],
            ],
            vec![vec![0, 1], vec![2], vec![3]],
            vec![0.5, 0.3, 0.2],
            LossFunction::LogisticL2 { lambda: 0.1 },
            vec![1.0, -1.0, 1.0],
        ),
        other => Err(Error::InvalidInstance(format!(
            "unknown built-in instance {other:?}; available: {}",
            BUILTINS.join(", ")
        ))),
    }
}

/// Shape of a random instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomInstanceSpec {
    pub n_rows: usize,
    pub n_hypotheses: usize,
    pub n_subclasses: usize,
    pub loss: LossFunction,
}

/// Gaussian columns normalized to unit length, a random partition into
/// non-empty subclasses, `phi` uniform on the simplex, Gaussian labels for
/// squared error and random signs for logistic.
pub fn random_instance(spec: &RandomInstanceSpec, rng: &mut Rng) -> Result<TheoryInstance> {
    let RandomInstanceSpec {
        n_rows: n,
        n_hypotheses: p,
        n_subclasses: k,
        loss,
    } = *spec;
    if n == 0 || p == 0 || k == 0 || k > p {
        return Err(Error::InvalidParam(format!(
            "need n, p >= 1 and 1 <= subclasses <= p, got n={n} p={p} k={k}"
        )));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| StandardNormal.sample(rng)).collect())
        .collect();

    let mut owner: Vec<usize> = (0..p)
        .map(|j| if j < k { j } else { rng.random_range(0..k) })
        .collect();
    for j in (1..p).rev() {
        owner.swap(j, rng.random_range(0..=j));
    }
    let groups: Vec<Vec<usize>> = (0..k)
        .map(|g| (0..p).filter(|&j| owner[j] == g).collect())
        .collect();

    let raw: Vec<f64> = (0..k)
        .map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let mut phi: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let head: f64 = phi[..k - 1].iter().sum();
    phi[k - 1] = (1.0 - head).max(0.0);

    let y: Vec<f64> = match loss {
        LossFunction::SquaredError => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
        LossFunction::LogisticL2 { .. } => (0..n)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect(),
    };
    TheoryInstance::normalized(&rows, groups, phi, loss, y)
}
