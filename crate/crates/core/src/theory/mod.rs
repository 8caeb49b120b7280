//! Coordinate-descent model of heterogeneous Newton boosting on a finite
//! hypothesis matrix.
//!
//! A [`TheoryInstance`] fixes `B[i][j] = b_j(x_i)` for a finite set of unit-norm
//! hypotheses grouped into subclasses `I(k)`, a mixture `phi` over subclasses,
//! a loss and labels. Boosting with such a class is randomized coordinate
//! descent on `L(beta) = sum_i l(y_i, (B beta)_i)`: each step samples `k ~ phi`,
//! picks the coordinate of largest `|Gamma_j|` inside `I(k)` and takes the
//! scaled scalar Newton step on it.

mod angle;
mod instances;

pub use angle::{min_cosine_angle, phi_norm, AngleMethod, ThetaEstimate};
pub use instances::{builtin, builtin_names, random_instance, RandomInstanceSpec};

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossFunction;
use crate::rng::{self, Purpose, Rng};

/// Columns must have unit Euclidean norm to this tolerance.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    b: Vec<Vec<f64>>,
    groups: Vec<Vec<usize>>,
    phi: Vec<f64>,
    loss: LossFunction,
    y: Vec<f64>,
}

/// Finite hypothesis matrix with subclass structure. `b` is row-major with
/// `n_rows` examples and `n_hypotheses` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryInstance {
    n_rows: usize,
    n_hypotheses: usize,
    b: Vec<f64>,
    groups: Vec<Vec<usize>>,
    phi: Vec<f64>,
    loss: LossFunction,
    y: Vec<f64>,
}

impl TheoryInstance {
    /// Builds and validates an instance; labels for the logistic loss may be
    /// given as `{0, 1}` or `{-1, +1}`.
    pub fn new(
        rows: &[Vec<f64>],
        groups: Vec<Vec<usize>>,
        phi: Vec<f64>,
        loss: LossFunction,
        y: Vec<f64>,
    ) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInstance("B has no rows".into()));
        }
        let p = rows[0].len();
        if p == 0 || rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInstance(
                "B must be a non-empty rectangular matrix".into(),
            ));
        }
        let b: Vec<f64> = rows.iter().flatten().copied().collect();
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("B has non-finite entries".into()));
        }
        for j in 0..p {
            let norm = (0..n).map(|i| b[i * p + j].powi(2)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::InvalidInstance(format!(
                    "column {j} has norm {norm}; every hypothesis column must have unit norm \
                     (sum over examples of b(x_i)^2 = 1)"
                )));
            }
        }
        if y.len() != n {
            return Err(Error::InvalidInstance(format!(
                "y has {} entries for {n} rows",
                y.len()
            )));
        }
        let y = loss.prepare_labels(&y)?;
        if groups.is_empty() || groups.iter().any(Vec::is_empty) {
            return Err(Error::InvalidInstance(
                "subclasses must be non-empty".into(),
            ));
        }
        let mut seen = vec![false; p];
        for &j in groups.iter().flatten() {
            if j >= p || std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidInstance(format!(
                    "column {j} is out of range or listed in two subclasses"
                )));
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInstance(format!(
                "column {j} belongs to no subclass"
            )));
        }
        if phi.len() != groups.len() {
            return Err(Error::InvalidInstance(format!(
                "phi has {} entries for {} subclasses",
                phi.len(),
                groups.len()
            )));
        }
        if phi.iter().any(|&v| !(v >= 0.0)) || (phi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInstance(
                "phi must be non-negative and sum to 1".into(),
            ));
        }
        Ok(TheoryInstance {
            n_rows: n,
            n_hypotheses: p,
            b,
            groups,
            phi,
            loss,
            y,
        })
    }

    /// Like [`TheoryInstance::new`] but rescales every column to unit norm first.
    pub fn normalized(
        rows: &[Vec<f64>],
        groups: Vec<Vec<usize>>,
        phi: Vec<f64>,
        loss: LossFunction,
        y: Vec<f64>,
    ) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let norms: Vec<f64> = (0..p)
            .map(|j| {
                rows.iter()
                    .map(|r| r.get(j).copied().unwrap_or(0.0).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        if norms.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidInstance(
                "zero column cannot be normalized".into(),
            ));
        }
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(&norms).map(|(v, s)| v / s).collect())
            .collect();
        Self::new(&scaled, groups, phi, loss, y)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        Self::new(&f.b, f.groups, f.phi, f.loss, f.y)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let f = InstanceFile {
            b: self
                .b
                .chunks(self.n_hypotheses)
                .map(<[f64]>::to_vec)
                .collect(),
            groups: self.groups.clone(),
            phi: self.phi.clone(),
            loss: self.loss,
            y: self.y.clone(),
        };
        serde_json::to_string_pretty(&f).map_err(|e| Error::Malformed(e.to_string()))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_hypotheses(&self) -> usize {
        self.n_hypotheses
    }

    pub fn n_subclasses(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn loss(&self) -> LossFunction {
        self.loss
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.b[i * self.n_hypotheses + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.entry(i, j)).collect()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows, self.n_hypotheses, &self.b)
    }

    /// `B beta`.
    pub fn margins(&self, beta: &[f64]) -> Vec<f64> {
        self.b
            .chunks(self.n_hypotheses)
            .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn loss_at_margins(&self, margins: &[f64]) -> f64 {
        self.y
            .iter()
            .zip(margins)
            .map(|(&y, &f)| self.loss.loss(y, f))
            .sum()
    }

    pub fn loss_at(&self, beta: &[f64]) -> f64 {
        self.loss_at_margins(&self.margins(beta))
    }

    /// Coordinate derivatives `(dL/dbeta_j, d2L/dbeta_j^2)` at the given margins.
    pub fn coordinate_derivatives(&self, margins: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.n_hypotheses;
        let mut grad = vec![0.0; p];
        let mut curv = vec![0.0; p];
        for (i, (&y, &f)) in self.y.iter().zip(margins).enumerate() {
            let g = self.loss.derivative(y, f);
            let h = self.loss.second_derivative(y, f);
            for j in 0..p {
                let v = self.entry(i, j);
                grad[j] += g * v;
                curv[j] += h * v * v;
            }
        }
        (grad, curv)
    }

    /// `Gamma_j = (dL/dbeta_j) / sqrt(d2L/dbeta_j^2)`.
    pub fn gamma(&self, margins: &[f64]) -> Result<Vec<f64>> {
        let (grad, curv) = self.coordinate_derivatives(margins);
        grad.iter()
            .zip(&curv)
            .enumerate()
            .map(|(j, (&g, &h))| {
                if h > 0.0 {
                    Ok(g / h.sqrt())
                } else {
                    Err(Error::NonPositiveHessian(format!(
                        "coordinate {j}: curvature {h}"
                    )))
                }
            })
            .collect()
    }

    /// Descent coordinate for subclass `k`: the largest `|Gamma_j|` over `I(k)`,
    /// lowest index on ties.
    pub fn select_coordinate(&self, k: usize, gamma: &[f64]) -> usize {
        let mut best = self.groups[k][0];
        for &j in &self.groups[k] {
            if gamma[j].abs() > gamma[best].abs()
                || (gamma[j].abs() == gamma[best].abs() && j < best)
            {
                best = j;
            }
        }
        best
    }

    /// Same choice expressed as a weighted least-squares fit: the coordinate of
    /// `I(k)` whose best multiple `sigma B_j` leaves the smallest residual
    /// `sum_i h_i (-g_i/h_i - sigma B_ij)^2`.
    pub fn select_by_residual(&self, k: usize, margins: &[f64]) -> Result<usize> {
        let g: Vec<f64> = self
            .y
            .iter()
            .zip(margins)
            .map(|(&y, &f)| self.loss.derivative(y, f))
            .collect();
        let h: Vec<f64> = self
            .y
            .iter()
            .zip(margins)
            .map(|(&y, &f)| self.loss.second_derivative(y, f))
            .collect();
        if let Some(i) = h.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NonPositiveHessian(format!(
                "example {i}: h = {}",
                h[i]
            )));
        }
        let base: f64 = g.iter().zip(&h).map(|(g, h)| g * g / h).sum();
        let mut best: Option<(usize, f64)> = None;
        for &j in &self.groups[k] {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..self.n_rows {
                let v = self.entry(i, j);
                num += g[i] * v;
                den += h[i] * v * v;
            }
            let residual = base - num * num / den;
            match best {
                Some((bj, br)) if residual > br || (residual == br && j > bj) => {}
                _ => best = Some((j, residual)),
            }
        }
        Ok(best.expect("subclasses are non-empty").0)
    }

    /// Index of the subclass drawn from `phi`.
    pub fn sample_subclass(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, &p) in self.phi.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        self.phi.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Orthonormal basis of `Range(B)` as an `n x r` matrix.
    pub fn range_basis(&self) -> DMatrix<f64> {
        let m = self.matrix();
        let svd = m.svd(true, false);
        let u = svd.u.expect("requested left singular vectors");
        let smax = svd.singular_values.iter().fold(0.0f64, |a, &s| a.max(s));
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > smax * 1e-10)
            .collect();
        DMatrix::from_fn(self.n_rows, keep.len(), |i, c| u[(i, keep[c])])
    }

    /// `min_beta L(beta)`, the infimum over margins in `Range(B)`.
    pub fn optimal_loss(&self) -> Result<f64> {
        let q = self.range_basis();
        let y = DVector::from_column_slice(&self.y);
        match self.loss {
            LossFunction::SquaredError => {
                let proj = &q * (q.transpose() * &y);
                Ok(0.5 * (y - proj).norm_squared())
            }
            LossFunction::LogisticL2 { lambda } => {
                if !(lambda > 0.0) {
                    return Err(Error::Unsupported(
                        "optimal loss needs a strongly convex objective".into(),
                    ));
                }
                self.newton_minimum(&q)
            }
        }
    }

    fn newton_minimum(&self, q: &DMatrix<f64>) -> Result<f64> {
        let r = q.ncols();
        let mut v = DVector::<f64>::zeros(r);
        let margins = |v: &DVector<f64>| -> Vec<f64> { (q * v).iter().copied().collect() };
        let mut current = self.loss_at_margins(&margins(&v));
        for _ in 0..200 {
            let f = margins(&v);
            let mut grad = DVector::<f64>::zeros(r);
            let mut hess = DMatrix::<f64>::zeros(r, r);
            for (i, (&yi, &fi)) in self.y.iter().zip(&f).enumerate() {
                let g = self.loss.derivative(yi, fi);
                let h = self.loss.second_derivative(yi, fi);
                let qi = q.row(i).transpose();
                grad += &qi * g;
                hess += &qi * qi.transpose() * h;
            }
            if grad.norm() <= 1e-12 {
                break;
            }
            let dir = hess
                .cholesky()
                .ok_or(Error::Singular { hint: "" })?
                .solve(&(-&grad));
            let mut t = 1.0;
            loop {
                let cand = &v + &dir * t;
                let value = self.loss_at_margins(&margins(&cand));
                if value <= current || t < 1e-12 {
                    v = cand;
                    current = value.min(current);
                    break;
                }
                t *= 0.5;
            }
        }
        Ok(current)
    }
}

/// Iterate of the coordinate descent. `margins` is maintained incrementally.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentState {
    pub beta: Vec<f64>,
    pub margins: Vec<f64>,
    pub iteration: usize,
}

impl DescentState {
    /// `beta = 0`.
    pub fn zero(inst: &TheoryInstance) -> Self {
        DescentState {
            beta: vec![0.0; inst.n_hypotheses()],
            margins: vec![0.0; inst.n_rows()],
            iteration: 0,
        }
    }

    /// Largest deviation between the tracked margins and `B beta`.
    pub fn margin_drift(&self, inst: &TheoryInstance) -> f64 {
        inst.margins(&self.beta)
            .iter()
            .zip(&self.margins)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One step for subclass `k` with learning rate `eps`; returns the coordinate used.
pub fn step(inst: &TheoryInstance, state: &mut DescentState, k: usize, eps: f64) -> Result<usize> {
    if k >= inst.n_subclasses() {
        return Err(Error::InvalidParam(format!(
            "subclass {k} out of range for {} subclasses",
            inst.n_subclasses()
        )));
    }
    let (grad, curv) = inst.coordinate_derivatives(&state.margins);
    if let Some(j) = curv.iter().position(|&h| !(h > 0.0)) {
        return Err(Error::NonPositiveHessian(format!(
            "coordinate {j}: curvature {}",
            curv[j]
        )));
    }
    let gamma: Vec<f64> = grad.iter().zip(&curv).map(|(g, h)| g / h.sqrt()).collect();
    let j = inst.select_coordinate(k, &gamma);
    let sigma = -grad[j] / curv[j];
    if sigma != 0.0 {
        let delta = eps * sigma;
        state.beta[j] += delta;
        for (i, m) in state.margins.iter_mut().enumerate() {
            *m += delta * inst.entry(i, j);
        }
    }
    state.iteration += 1;
    Ok(j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    /// `sum_k phi_k max_{j in I(k)} Gamma_j^2`, the exact expectation over the subclass draw.
    pub lhs: f64,
    /// `(sum_k phi_k max_{j in I(k)} |Gamma_j|)^2`.
    pub rhs: f64,
    pub holds: bool,
}

pub fn verify_lemma1(inst: &TheoryInstance, beta: &[f64]) -> Result<LemmaCheck> {
    let gamma = inst.gamma(&inst.margins(beta))?;
    let mut lhs = 0.0;
    let mut norm = 0.0;
    for (group, &p) in inst.groups().iter().zip(inst.phi()) {
        let m = group.iter().map(|&j| gamma[j].abs()).fold(0.0, f64::max);
        lhs += p * m * m;
        norm += p * m;
    }
    let rhs = norm * norm;
    Ok(LemmaCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - 1e-12,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremRow {
    pub m: usize,
    pub mean_gap: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub theta: f64,
    pub epsilon: f64,
    pub contraction: f64,
    pub optimal_loss: f64,
    pub initial_gap: f64,
    pub trials: usize,
    /// Absolute allowance for the inexact optimum.
    pub floor: f64,
    /// Rows for `m = 0..=iterations`.
    pub rows: Vec<TheoremRow>,
    pub holds: bool,
}

impl TheoremReport {
    /// Monte Carlo slack factor applied to the bound.
    pub fn slack(&self) -> f64 {
        1.0 + 3.0 / (self.trials as f64).sqrt()
    }
}

/// Runs `trials` independent descent trajectories from `beta = 0` with
/// `eps = mu / S` and compares the mean optimality gap with
/// `(1 - (mu/S)^2 theta^2)^m` times the initial gap.
pub fn verify_theorem1(
    inst: &TheoryInstance,
    iterations: usize,
    trials: usize,
    theta: f64,
    seed: u64,
) -> Result<TheoremReport> {
    let constants = inst.loss().constants();
    if !constants.strongly_convex() {
        return Err(Error::Unsupported(
            "the convergence bound needs a strongly convex loss".into(),
        ));
    }
    if trials == 0 {
        return Err(Error::InvalidParam("trials must be >= 1".into()));
    }
    if !(0.0..=1.0 + 1e-12).contains(&theta) {
        return Err(Error::InvalidParam(format!(
            "theta must be in [0,1], got {theta}"
        )));
    }
    let ratio = constants.mu / constants.smoothness;
    let eps = ratio;
    let contraction = (1.0 - ratio * ratio * theta * theta).max(0.0);
    let optimal = inst.optimal_loss()?;
    let initial = DescentState::zero(inst);
    let gap0 = inst.loss_at_margins(&initial.margins) - optimal;
    let floor = match inst.loss() {
        LossFunction::SquaredError => 1e-12 * (1.0 + optimal.abs()),
        LossFunction::LogisticL2 { .. } => 1e-10 * (1.0 + optimal.abs()),
    };

    let curves: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let mut r = rng::stream(seed, t as u64, Purpose::Trial);
            let mut state = initial.clone();
            let mut gaps = Vec::with_capacity(iterations + 1);
            gaps.push(gap0);
            for _ in 0..iterations {
                let k = inst.sample_subclass(&mut r);
                step(inst, &mut state, k, eps)?;
                gaps.push(inst.loss_at_margins(&state.margins) - optimal);
            }
            Ok(gaps)
        })
        .collect::<Result<_>>()?;

    let mut mean = vec![0.0; iterations + 1];
    for curve in &curves {
        for (acc, g) in mean.iter_mut().zip(curve) {
            *acc += g;
        }
    }
    let slack = 1.0 + 3.0 / (trials as f64).sqrt();
    let mut holds = true;
    let rows = mean
        .iter()
        .enumerate()
        .map(|(m, total)| {
            let mean_gap = total / trials as f64;
            let bound = contraction.powi(m as i32) * gap0;
            if mean_gap > bound * slack + floor {
                holds = false;
            }
            TheoremRow { m, mean_gap, bound }
        })
        .collect();
    Ok(TheoremReport {
        theta,
        epsilon: eps,
        contraction,
        optimal_loss: optimal,
        initial_gap: gap0,
        trials,
        floor,
        rows,
        holds,
    })
}
