//! Ridge regression on random Fourier features.
//!
//! The feature map `z(x) = sqrt(2/c) cos(xi^T x + tau)` with `xi ~ N(0, 2 gamma I)`
//! and `tau ~ U[0, 2 pi)` satisfies `E[z(x) . z(x')] = exp(-gamma |x - x'|^2)`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_MAX_COMPONENTS: usize = 100;

/// Rows per block when accumulating normal equations; fixed so the summation
/// order does not depend on the thread count.
const BLOCK_ROWS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffProjection {
    pub gamma: f64,
    pub n_features: usize,
    pub n_components: usize,
    /// `n_features x n_components`, row-major.
    pub weights: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl RffProjection {
    pub fn generate(
        n_features: usize,
        n_components: usize,
        gamma: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "gamma must be > 0, got {gamma}"
            )));
        }
        if n_features == 0 || n_components == 0 {
            return Err(Error::InvalidParam(
                "projection needs at least one input feature and one component".into(),
            ));
        }
        let normal = Normal::new(0.0, (2.0 * gamma).sqrt())
            .map_err(|e| Error::InvalidParam(e.to_string()))?;
        let weights = (0..n_features * n_components)
            .map(|_| normal.sample(rng))
            .collect();
        let uniform = Uniform::new(0.0, 2.0 * std::f64::consts::PI)
            .map_err(|e| Error::InvalidParam(e.to_string()))?;
        let offsets = (0..n_components).map(|_| uniform.sample(rng)).collect();
        Ok(RffProjection {
            gamma,
            n_features,
            n_components,
            weights,
            offsets,
        })
    }

    pub fn from_parts(
        gamma: f64,
        n_features: usize,
        weights: Vec<f64>,
        offsets: Vec<f64>,
    ) -> Result<Self> {
        let n_components = offsets.len();
        if n_components == 0 || weights.len() != n_features * n_components {
            return Err(Error::DimensionMismatch {
                expected: n_features * n_components,
                got: weights.len(),
            });
        }
        Ok(RffProjection {
            gamma,
            n_features,
            n_components,
            weights,
            offsets,
        })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_components == 0
            || self.offsets.len() != self.n_components
            || self.weights.len() != self.n_features * self.n_components
        {
            return Err(Error::Malformed("projection shape mismatch".into()));
        }
        if self
            .weights
            .iter()
            .chain(&self.offsets)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Malformed("non-finite projection entry".into()));
        }
        Ok(())
    }

    /// Maps one example into `out` (length `n_components`).
    #[inline]
    pub fn project_row(&self, x: &[f64], out: &mut [f64]) {
        let c = self.n_components;
        let scale = (2.0 / c as f64).sqrt();
        out.copy_from_slice(&self.offsets);
        for (j, &xj) in x[..self.n_features].iter().enumerate() {
            let w = &self.weights[j * c..(j + 1) * c];
            for (o, &wk) in out.iter_mut().zip(w) {
                *o += wk * xj;
            }
        }
        for o in out.iter_mut() {
            *o = scale * o.cos();
        }
    }

    /// Projects a row-major matrix with `n_cols >= n_features` columns.
    pub fn project(&self, x: &[f64], n_cols: usize) -> Result<Vec<f64>> {
        if n_cols < self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: n_cols,
            });
        }
        if n_cols == 0 || !x.len().is_multiple_of(n_cols) {
            return Err(Error::DimensionMismatch {
                expected: n_cols,
                got: x.len(),
            });
        }
        let c = self.n_components;
        let n_rows = x.len() / n_cols;
        let mut out = vec![0.0; n_rows * c];
        out.par_chunks_mut(c)
            .zip(x.par_chunks(n_cols))
            .for_each(|(o, row)| self.project_row(row, o));
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeOptions {
    pub alpha: f64,
    pub fit_intercept: bool,
    pub max_components: usize,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        RidgeOptions {
            alpha: 1e-3,
            fit_intercept: false,
            max_components: DEFAULT_MAX_COMPONENTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
}

impl RidgeModel {
    /// `w . z + intercept`, summed in component order.
    #[inline]
    pub fn predict_projected(&self, z: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (w, v) in self.coefficients.iter().zip(z) {
            acc += w * v;
        }
        acc + self.intercept
    }

    pub fn predict(&self, projection: &RffProjection, x: &[f64]) -> f64 {
        let mut z = vec![0.0; projection.n_components];
        projection.project_row(x, &mut z);
        self.predict_projected(&z)
    }
}

/// Minimizes `sum_i h_i (t_i - w.z_i - b)^2 + alpha |w|^2` over the listed rows
/// of the projected design `z` (row-major, `n_components` columns) by solving
/// the normal equations with a Cholesky factorization. The intercept `b` is
/// unpenalized and only fitted when requested.
pub fn fit_ridge(
    z: &[f64],
    n_components: usize,
    rows: &[usize],
    targets: &[f64],
    hessians: &[f64],
    opts: &RidgeOptions,
) -> Result<RidgeModel> {
    let c = n_components;
    if c == 0 || c > opts.max_components {
        return Err(Error::InvalidParam(format!(
            "n_components must be in [1, {}], got {c}",
            opts.max_components
        )));
    }
    if !(opts.alpha >= 0.0 && opts.alpha.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "alpha must be >= 0, got {}",
            opts.alpha
        )));
    }
    if !z.len().is_multiple_of(c) || targets.len() != z.len() / c || hessians.len() != targets.len()
    {
        return Err(Error::DimensionMismatch {
            expected: z.len() / c,
            got: targets.len(),
        });
    }
    if rows.is_empty() {
        return Err(Error::InvalidParam(
            "ridge fit needs at least one row".into(),
        ));
    }
    if let Some(&i) = rows.iter().find(|&&i| !(hessians[i] >= 0.0)) {
        return Err(Error::NonPositiveHessian(format!(
            "row {i}: h = {}",
            hessians[i]
        )));
    }

    let p = c + usize::from(opts.fit_intercept);
    let accumulate = |block: &[usize]| {
        let mut a = vec![0.0; p * p];
        let mut b = vec![0.0; p];
        let mut feat = vec![1.0; p];
        for &i in block {
            feat[..c].copy_from_slice(&z[i * c..(i + 1) * c]);
            let h = hessians[i];
            let ht = h * targets[i];
            for r in 0..p {
                let hr = h * feat[r];
                b[r] += ht * feat[r];
                for s in r..p {
                    a[r * p + s] += hr * feat[s];
                }
            }
        }
        (a, b)
    };
    let partials: Vec<(Vec<f64>, Vec<f64>)> = rows.par_chunks(BLOCK_ROWS).map(accumulate).collect();
    let mut a = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for (pa, pb) in &partials {
        for (x, y) in a.iter_mut().zip(pa) {
            *x += y;
        }
        for (x, y) in rhs.iter_mut().zip(pb) {
            *x += y;
        }
    }
    for r in 0..p {
        for s in 0..r {
            a[r * p + s] = a[s * p + r];
        }
    }
    for k in 0..c {
        a[k * p + k] += opts.alpha;
    }

    let solution = solve_spd(&a, &rhs, p).ok_or(Error::Singular {
        hint: if opts.alpha == 0.0 {
            "; use alpha > 0"
        } else {
            ""
        },
    })?;
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular {
            hint: "; use alpha > 0",
        });
    }
    let intercept = if opts.fit_intercept { solution[c] } else { 0.0 };
    Ok(RidgeModel {
        coefficients: solution[..c].to_vec(),
        intercept,
        alpha: opts.alpha,
    })
}

fn solve_spd(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(p, p, a);
    let scale = m.diagonal().iter().fold(0.0f64, |acc, v| acc.max(*v));
    let chol = m.cholesky()?;
    if chol
        .l_dirty()
        .diagonal()
        .iter()
        .any(|&v| !(v * v > scale * 1e-14))
    {
        return None;
    }
    let x = chol.solve(&DVector::from_column_slice(b));
    Some(x.iter().copied().collect())
}
