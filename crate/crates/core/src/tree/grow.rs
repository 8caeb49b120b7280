//! Depth-first tree growth over per-node bin statistics.

use rayon::prelude::*;

use super::histogram::HistogramLayout;
use super::{Tree, TreeNode};
use crate::error::{Error, Result};
use crate::losses::GradHess;

/// Below this many (row, feature) cells per node, work stays on the calling thread.
const PARALLEL_CELLS: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub lambda_l2: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct BinStat {
    g: f64,
    h: f64,
    count: u32,
}

/// Per-feature bin statistics of one node, in the order of the candidate features.
struct NodeHist {
    features: Vec<Vec<BinStat>>,
}

impl NodeHist {
    fn build(layout: &HistogramLayout, gh: &GradHess, rows: &[usize], cols: &[usize]) -> Self {
        let one = |&j: &usize| {
            let mut stats = vec![BinStat::default(); layout.n_bins(j)];
            let bins = layout.column_bins(j);
            for &i in rows {
                let s = &mut stats[bins[i] as usize];
                s.g += gh.g[i];
                s.h += gh.h[i];
                s.count += 1;
            }
            stats
        };
        let features = if rows.len() * cols.len() >= PARALLEL_CELLS {
            cols.par_iter().map(one).collect()
        } else {
            cols.iter().map(one).collect()
        };
        NodeHist { features }
    }

    /// `self - other`, bin by bin. Empty bins are reset to exact zeros.
    fn subtract(&self, other: &NodeHist) -> NodeHist {
        let features = self
            .features
            .iter()
            .zip(&other.features)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let count = x.count - y.count;
                        if count == 0 {
                            BinStat::default()
                        } else {
                            BinStat {
                                g: x.g - y.g,
                                h: x.h - y.h,
                                count,
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        NodeHist { features }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    /// Position in the candidate feature list.
    slot: usize,
    bin: usize,
    gain: f64,
}

#[inline]
fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

fn best_bin(stats: &[BinStat], lambda: f64) -> Option<(usize, f64)> {
    let (g_tot, h_tot, n_tot) = stats.iter().fold((0.0, 0.0, 0u32), |(g, h, c), s| {
        (g + s.g, h + s.h, c + s.count)
    });
    if h_tot + lambda <= 0.0 {
        return None;
    }
    let parent = score(g_tot, h_tot, lambda);
    let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0u32);
    let mut best: Option<(usize, f64)> = None;
    for (b, s) in stats[..stats.len() - 1].iter().enumerate() {
        gl += s.g;
        hl += s.h;
        cl += s.count;
        if cl == 0 {
            continue;
        }
        if cl == n_tot {
            break;
        }
        let (gr, hr) = (g_tot - gl, h_tot - hl);
        // Both children need positive curvature mass.
        if hl <= 0.0 || hr <= 0.0 {
            continue;
        }
        let gain = score(gl, hl, lambda) + score(gr, hr, lambda) - parent;
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((b, gain));
        }
    }
    best
}

struct Grower<'a> {
    layout: &'a HistogramLayout,
    gh: &'a GradHess,
    cols: &'a [usize],
    params: TreeParams,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn find_split(&self, hist: &NodeHist, n_rows: usize) -> Option<Candidate> {
        let lambda = self.params.lambda_l2;
        let per_feature: Vec<Option<(usize, f64)>> = if n_rows * self.cols.len() >= PARALLEL_CELLS {
            hist.features
                .par_iter()
                .map(|s| best_bin(s, lambda))
                .collect()
        } else {
            hist.features.iter().map(|s| best_bin(s, lambda)).collect()
        };
        // Features are scanned in ascending order, so strict comparison keeps the
        // lowest feature index (then lowest threshold) among equal gains.
        let mut best: Option<Candidate> = None;
        for (slot, found) in per_feature.into_iter().enumerate() {
            if let Some((bin, gain)) = found {
                if best.is_none_or(|c| gain > c.gain) {
                    best = Some(Candidate { slot, bin, gain });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, hist: Option<NodeHist>, depth: usize) -> Result<usize> {
        let (mut g_sum, mut h_sum) = (0.0, 0.0);
        let mut any_positive = false;
        for &i in &rows {
            g_sum += self.gh.g[i];
            h_sum += self.gh.h[i];
            any_positive |= self.gh.h[i] > 0.0;
        }
        if !any_positive {
            return Err(Error::NonPositiveHessian(format!(
                "all {} hessians in a tree node are <= 0",
                rows.len()
            )));
        }
        let lambda = self.params.lambda_l2;
        let value = -g_sum / (h_sum + lambda) + 0.0;
        let idx = self.nodes.len();
        self.nodes.push(TreeNode::leaf(value));

        let Some(hist) = hist else { return Ok(idx) };
        let Some(split) = self.find_split(&hist, rows.len()) else {
            return Ok(idx);
        };
        if !(split.gain > 0.0) {
            return Ok(idx);
        }

        let feature = self.cols[split.slot];
        let bins = self.layout.column_bins(feature);
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| (bins[i] as usize) <= split.bin);
        if left.is_empty() || right.is_empty() {
            return Ok(idx);
        }

        let child_depth = depth + 1;
        let (left_hist, right_hist) = if child_depth < self.params.max_depth {
            let (small, small_is_left) = if left.len() <= right.len() {
                (&left, true)
            } else {
                (&right, false)
            };
            let small_hist = NodeHist::build(self.layout, self.gh, small, self.cols);
            let large_hist = hist.subtract(&small_hist);
            if small_is_left {
                (Some(small_hist), Some(large_hist))
            } else {
                (Some(large_hist), Some(small_hist))
            }
        } else {
            (None, None)
        };
        drop(hist);

        let left_idx = self.grow(left, left_hist, child_depth)?;
        let right_idx = self.grow(right, right_hist, child_depth)?;
        let node = &mut self.nodes[idx];
        node.feature = Some(feature);
        node.threshold = Some(self.layout.threshold(feature, split.bin));
        node.left = Some(left_idx);
        node.right = Some(right_idx);
        Ok(idx)
    }
}

/// Fits a depth-limited tree to the Newton targets of `gh` on the given rows,
/// splitting only on `cols`.
///
/// Each split maximizes the gain `G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)`;
/// a node stays a leaf at the depth limit, when no split has positive gain, or
/// when a side would be empty. Leaf values are `-G/(H+l)`.
pub fn fit_tree(
    layout: &HistogramLayout,
    gh: &GradHess,
    params: &TreeParams,
    rows: &[usize],
    cols: &[usize],
) -> Result<Tree> {
    if params.max_depth == 0 {
        return Err(Error::InvalidParam("tree depth must be >= 1".into()));
    }
    if !(params.lambda_l2 >= 0.0) {
        return Err(Error::InvalidParam(format!(
            "lambda_l2 must be >= 0, got {}",
            params.lambda_l2
        )));
    }
    if gh.len() != layout.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: layout.n_rows(),
            got: gh.len(),
        });
    }
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidParam(
            "tree needs at least one row and one feature".into(),
        ));
    }
    if let Some(&j) = cols.iter().find(|&&j| j >= layout.n_cols()) {
        return Err(Error::InvalidParam(format!("feature {j} out of range")));
    }
    let mut cols = cols.to_vec();
    cols.sort_unstable();
    cols.dedup();

    let root_hist = NodeHist::build(layout, gh, rows, &cols);
    let mut grower = Grower {
        layout,
        gh,
        cols: &cols,
        params: *params,
        nodes: Vec::new(),
    };
    grower.grow(rows.to_vec(), Some(root_hist), 0)?;
    Ok(Tree {
        nodes: grower.nodes,
        max_depth: params.max_depth,
        features: cols,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::tree::{build_histograms, presort};
    use rand::Rng as _;

    fn layout_for(ds: &Dataset, bins: usize) -> HistogramLayout {
        build_histograms(ds, &presort(ds), bins).unwrap()
    }

    #[test]
    fn hand_stump() {
        let ds = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 4, 1, vec![0.0; 4], None).unwrap();
        let layout = layout_for(&ds, 256);
        let gh = GradHess {
            g: vec![-1.0, -1.0, 1.0, 1.0],
            h: vec![1.0; 4],
        };
        let params = TreeParams {
            max_depth: 1,
            lambda_l2: 0.0,
        };
        let tree = fit_tree(&layout, &gh, &params, &[0, 1, 2, 3], &[0]).unwrap();
        assert_eq!(tree.nodes.len(), 3);
        let t = tree.nodes[0].threshold.unwrap();
        assert!((2.0..3.0).contains(&t));
        assert_eq!(tree.nodes[1].value, 1.0);
        assert_eq!(tree.nodes[2].value, -1.0);
        // gain = 2^2/2 + 2^2/2 - 0 = 4
        let hist = NodeHist::build(&layout, &gh, &[0, 1, 2, 3], &[0]);
        let (_, gain) = best_bin(&hist.features[0], 0.0).unwrap();
        assert_eq!(gain, 4.0);
    }

    #[test]
    fn zero_gradients_give_zero_leaf() {
        let ds = Dataset::new(vec![1.0, 2.0, 3.0], 3, 1, vec![0.0; 3], None).unwrap();
        let layout = layout_for(&ds, 256);
        let gh = GradHess {
            g: vec![0.0; 3],
            h: vec![1.0; 3],
        };
        let params = TreeParams {
            max_depth: 3,
            lambda_l2: 0.0,
        };
        let tree = fit_tree(&layout, &gh, &params, &[0, 1, 2], &[0]).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.nodes[0].value, 0.0);
    }

    #[test]
    fn non_positive_hessians_rejected() {
        let ds = Dataset::new(vec![1.0, 2.0], 2, 1, vec![0.0; 2], None).unwrap();
        let layout = layout_for(&ds, 256);
        let gh = GradHess {
            g: vec![1.0, -1.0],
            h: vec![0.0, -1.0],
        };
        let params = TreeParams {
            max_depth: 2,
            lambda_l2: 1.0,
        };
        assert!(matches!(
            fit_tree(&layout, &gh, &params, &[0, 1], &[0]),
            Err(Error::NonPositiveHessian(_))
        ));
    }

    #[test]
    fn depth_bound_on_adversarial_input() {
        // Alternating-sign gradients on distinct values reward splitting everywhere.
        let n = 512;
        let ds =
            Dataset::new((0..n).map(|i| i as f64).collect(), n, 1, vec![0.0; n], None).unwrap();
        let layout = layout_for(&ds, 256);
        let gh = GradHess {
            g: (0..n)
                .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
                .collect(),
            h: vec![1.0; n],
        };
        for depth in 1..8 {
            let params = TreeParams {
                max_depth: depth,
                lambda_l2: 0.0,
            };
            let rows: Vec<usize> = (0..n).collect();
            let tree = fit_tree(&layout, &gh, &params, &rows, &[0]).unwrap();
            assert!(tree.depth() <= depth);
            tree.validate().unwrap();
        }
    }

    #[test]
    fn split_gains_positive_and_objective_decreases() {
        let mut rng = crate::rng::from_seed(8);
        let (n, d) = (300, 4);
        let values: Vec<f64> = (0..n * d).map(|_| rng.random_range(0..30) as f64).collect();
        let ds = Dataset::new(values, n, d, vec![0.0; n], None).unwrap();
        let layout = layout_for(&ds, 16);
        let gh = GradHess {
            g: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            h: (0..n).map(|_| rng.random_range(0.1..1.0)).collect(),
        };
        let lambda = 0.5;
        let params = TreeParams {
            max_depth: 4,
            lambda_l2: lambda,
        };
        let rows: Vec<usize> = (0..n).collect();
        let tree = fit_tree(&layout, &gh, &params, &rows, &[0, 1, 2, 3]).unwrap();
        // Penalized Newton objective sum_i h_i (t_i - v)^2 + l v^2 with the tree's
        // fitted values must not exceed the single-leaf objective.
        let objective = |pred: &dyn Fn(usize) -> f64, leaves: &[f64]| {
            let fit: f64 = (0..n)
                .map(|i| {
                    let t = -gh.g[i] / gh.h[i];
                    gh.h[i] * (t - pred(i)).powi(2)
                })
                .sum();
            fit + lambda * leaves.iter().map(|v| v * v).sum::<f64>()
        };
        let root = tree.nodes[0].value;
        let leaves: Vec<f64> = tree
            .nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.value)
            .collect();
        let with_tree = objective(&|i| tree.predict(ds.row(i)), &leaves);
        let single = objective(&|_| root, &[root]);
        assert!(with_tree < single);
    }

    #[test]
    fn subsampled_rows_and_cols_respected() {
        let mut rng = crate::rng::from_seed(9);
        let (n, d) = (200, 3);
        let values: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
        let ds = Dataset::new(values, n, d, vec![0.0; n], None).unwrap();
        let layout = layout_for(&ds, 32);
        let gh = GradHess {
            g: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            h: vec![1.0; n],
        };
        let params = TreeParams {
            max_depth: 3,
            lambda_l2: 0.0,
        };
        let rows: Vec<usize> = (0..n).step_by(2).collect();
        let tree = fit_tree(&layout, &gh, &params, &rows, &[2]).unwrap();
        assert!(tree.nodes.iter().filter_map(|n| n.feature).all(|f| f == 2));
        assert_eq!(tree.features, vec![2]);
    }
}
