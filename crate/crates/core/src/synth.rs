//! Seeded synthetic datasets.
//!
//! Features are uniform on `[-1, 1]^d`. The generators differ in the shape of
//! the noiseless target `f(x)`:
//!
//! * `Linear`: `f(x) = w . x` with Gaussian `w`.
//! * `AxisAligned`: a depth-2 tree on the first two features (four leaves with
//!   Gaussian values, thresholds at 0).
//! * `Rbf`: a sum of Gaussian bumps, `f(x) = sum_c a_c exp(-|x - m_c|^2 / w^2)`.
//!
//! Regression labels are `f(x)` plus Gaussian noise. Classification labels are
//! `1` when `f(x)` plus noise exceeds the median of `f`, else `0`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Linear,
    AxisAligned,
    Rbf,
}

impl Generator {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(Generator::Linear),
            "axis-aligned" | "axis_aligned" => Ok(Generator::AxisAligned),
            "rbf" => Ok(Generator::Rbf),
            other => Err(Error::InvalidParam(format!(
                "unknown generator {other:?}; expected linear, axis-aligned or rbf"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(Error::InvalidParam(format!(
                "unknown task {other:?}; expected regression or classification"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub generator: Generator,
    pub task: Task,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Standard deviation of the label noise.
    pub noise: f64,
    pub seed: u64,
}

const RBF_CENTERS: usize = 6;

enum Target {
    Linear(Vec<f64>),
    Tree {
        leaves: [f64; 4],
    },
    Rbf {
        centers: Vec<Vec<f64>>,
        amplitudes: Vec<f64>,
        width2: f64,
    },
}

impl Target {
    fn draw(generator: Generator, d: usize, rng: &mut Rng) -> Self {
        match generator {
            Generator::Linear => {
                Target::Linear((0..d).map(|_| StandardNormal.sample(rng)).collect())
            }
            Generator::AxisAligned => {
                let mut leaves = [0.0; 4];
                for (k, v) in leaves.iter_mut().enumerate() {
                    let g: f64 = StandardNormal.sample(rng);
                    *v = 2.0 * g + k as f64;
                }
                Target::Tree { leaves }
            }
            Generator::Rbf => Target::Rbf {
                centers: (0..RBF_CENTERS)
                    .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect(),
                amplitudes: (0..RBF_CENTERS)
                    .map(|_| {
                        let g: f64 = StandardNormal.sample(rng);
                        2.0 * g
                    })
                    .collect(),
                width2: 0.25 * d as f64,
            },
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Target::Linear(w) => w.iter().zip(x).map(|(a, b)| a * b).sum(),
            Target::Tree { leaves } => {
                let right0 = x[0] > 0.0;
                let right1 = x.get(1).is_some_and(|&v| v > 0.0);
                leaves[2 * usize::from(right0) + usize::from(right1)]
            }
            Target::Rbf {
                centers,
                amplitudes,
                width2,
            } => centers
                .iter()
                .zip(amplitudes)
                .map(|(c, a)| {
                    let d2: f64 = c.iter().zip(x).map(|(u, v)| (u - v).powi(2)).sum();
                    a * (-d2 / width2).exp()
                })
                .sum(),
        }
    }
}

pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    let SynthSpec {
        generator,
        task,
        n_rows: n,
        n_cols: d,
        noise,
        seed,
    } = *spec;
    if n == 0 || d == 0 {
        return Err(Error::InvalidParam(format!(
            "need n >= 1 and d >= 1, got n={n} d={d}"
        )));
    }
    let noise_dist = Normal::new(0.0, noise).map_err(|_| {
        Error::InvalidParam(format!("noise must be a finite value >= 0, got {noise}"))
    })?;
    let mut r = rng::stream(seed, 0, Purpose::Synth);
    let target = Target::draw(generator, d, &mut r);
    let x: Vec<f64> = (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect();
    let f: Vec<f64> = x.chunks(d).map(|row| target.eval(row)).collect();
    let noisy: Vec<f64> = f.iter().map(|v| v + noise_dist.sample(&mut r)).collect();
    let labels = match task {
        Task::Regression => noisy,
        Task::Classification => {
            let mut sorted = f.clone();
            sorted.sort_by(f64::total_cmp);
            let median = sorted[n / 2];
            noisy
                .iter()
                .map(|&v| if v > median { 1.0 } else { 0.0 })
                .collect()
        }
    };
    Dataset::new(x, n, d, labels, None)
}
