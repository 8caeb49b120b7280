use nalgebra::DMatrix;
use rayon::prelude::*;

use super::TheoryInstance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleMethod {
    Grid,
    AnalyticOrthonormal,
}

/// Estimate of the minimum cosine angle. For the grid method the true value
/// lies in `[value - error_bar, value]`; the analytic method is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEstimate {
    pub value: f64,
    pub error_bar: f64,
    pub mesh_points: usize,
}

impl ThetaEstimate {
    pub fn lower(&self) -> f64 {
        (self.value - self.error_bar).max(0.0)
    }
}

/// `sum_k phi_k max_{j in I(k)} |x_j|`.
pub fn phi_norm(inst: &TheoryInstance, x: &[f64]) -> f64 {
    inst.groups()
        .iter()
        .zip(inst.phi())
        .map(|(g, &p)| p * g.iter().map(|&j| x[j].abs()).fold(0.0, f64::max))
        .sum()
}

const CIRCLE_POINTS: usize = 200_000;
const SPHERE_POINTS: usize = 1_000_000;
const REFINE_STARTS: usize = 16;
const REFINE_DIRECTIONS: usize = 32;

/// Minimum over unit directions `c` in `Range(B)` of the phi-norm of the
/// cosines between `c` and every column.
pub fn min_cosine_angle(inst: &TheoryInstance, method: AngleMethod) -> Result<ThetaEstimate> {
    match method {
        AngleMethod::AnalyticOrthonormal => analytic(inst),
        AngleMethod::Grid => grid(inst),
    }
}

fn analytic(inst: &TheoryInstance) -> Result<ThetaEstimate> {
    let b = inst.matrix();
    let gram = b.transpose() * &b;
    let p = inst.n_hypotheses();
    let off = (gram - DMatrix::<f64>::identity(p, p)).abs().max();
    if off > 1e-10 {
        return Err(Error::Unsupported(
            "analytic angle needs orthonormal columns".into(),
        ));
    }
    let value = if inst.n_subclasses() == 1 {
        1.0 / (p as f64).sqrt()
    } else if inst.groups().iter().all(|g| g.len() == 1) {
        inst.phi().iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        return Err(Error::Unsupported(
            "analytic angle needs one subclass, or one column per subclass".into(),
        ));
    };
    Ok(ThetaEstimate {
        value,
        error_bar: 0.0,
        mesh_points: 0,
    })
}

/// Objective in basis coordinates: `proj` is `r x p` with column `j` holding
/// the coordinates of `B_j` in the orthonormal range basis.
struct Objective<'a> {
    inst: &'a TheoryInstance,
    proj: DMatrix<f64>,
}

impl Objective<'_> {
    fn eval(&self, u: &[f64]) -> f64 {
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cos: Vec<f64> = (0..self.proj.ncols())
            .map(|j| (0..u.len()).map(|a| self.proj[(a, j)] * u[a]).sum::<f64>() / norm)
            .collect();
        phi_norm(self.inst, &cos)
    }
}

fn grid(inst: &TheoryInstance) -> Result<ThetaEstimate> {
    let q = inst.range_basis();
    let r = q.ncols();
    if r == 0 || r > 3 {
        return Err(Error::Unsupported(format!(
            "grid angle search supports a range of dimension 1 to 3, got {r}"
        )));
    }
    let obj = Objective {
        inst,
        proj: q.transpose() * inst.matrix(),
    };
    let (mesh, radius): (Vec<Vec<f64>>, f64) = match r {
        1 => (vec![vec![1.0], vec![-1.0]], 0.0),
        2 => {
            let n = CIRCLE_POINTS;
            let pts = (0..n)
                .map(|i| {
                    let t = std::f64::consts::TAU * i as f64 / n as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect();
            (pts, std::f64::consts::PI / n as f64)
        }
        _ => {
            let n = SPHERE_POINTS;
            (
                fibonacci_sphere(n),
                2.0 * (std::f64::consts::PI / n as f64).sqrt(),
            )
        }
    };

    let values: Vec<f64> = mesh.par_iter().map(|u| obj.eval(u)).collect();
    let mut order: Vec<usize> = (0..mesh.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mesh_min = values[order[0]];

    let step0 = (2.0 * radius).max(1e-3);
    let refined = order
        .iter()
        .take(REFINE_STARTS)
        .map(|&i| refine(&obj, &mesh[i], values[i], step0))
        .fold(mesh_min, f64::min);

    Ok(ThetaEstimate {
        value: refined,
        error_bar: (refined - (mesh_min - radius)).max(0.0),
        mesh_points: mesh.len(),
    })
}

/// Pattern search on the unit sphere: tries `REFINE_DIRECTIONS` tangent
/// directions and halves the step when none improves.
fn refine(obj: &Objective<'_>, start: &[f64], start_value: f64, mut step: f64) -> f64 {
    let r = start.len();
    let mut u = start.to_vec();
    let mut best = start_value;
    if r == 1 {
        return best;
    }
    while step > 1e-12 {
        let tangents = tangent_basis(&u);
        let mut improved = false;
        let dirs = if r == 2 { 2 } else { REFINE_DIRECTIONS };
        for d in 0..dirs {
            let dir: Vec<f64> = if r == 2 {
                let s = if d == 0 { 1.0 } else { -1.0 };
                tangents[0].iter().map(|v| s * v).collect()
            } else {
                let a = std::f64::consts::TAU * d as f64 / dirs as f64;
                (0..r)
                    .map(|c| a.cos() * tangents[0][c] + a.sin() * tangents[1][c])
                    .collect()
            };
            let mut cand: Vec<f64> = u.iter().zip(&dir).map(|(x, y)| x + step * y).collect();
            let n = cand.iter().map(|v| v * v).sum::<f64>().sqrt();
            cand.iter_mut().for_each(|v| *v /= n);
            let value = obj.eval(&cand);
            if value < best {
                best = value;
                u = cand;
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

fn tangent_basis(u: &[f64]) -> Vec<Vec<f64>> {
    if u.len() == 2 {
        return vec![vec![-u[1], u[0]]];
    }
    let axis = (0..3)
        .min_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()))
        .expect("three coordinates");
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let t1 = normalize(&cross(u, &e));
    let t2 = cross(u, &t1);
    vec![t1, t2]
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn fibonacci_sphere(n: usize) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            vec![rho * t.cos(), rho * t.sin(), z]
        })
        .collect()
}
