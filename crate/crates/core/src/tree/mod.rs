//! Histogram-based regression trees fitted to Newton targets.

mod grow;
mod histogram;

pub use grow::{fit_tree, TreeParams};
pub use histogram::{build_histograms, presort, HistogramLayout, MAX_BINS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One node of a tree stored in preorder. Internal nodes carry a split
/// (`x[feature] <= threshold` goes left); leaves carry only `value`.
/// Internal nodes keep the Newton value they would have had as a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: Option<usize>,
    pub threshold: Option<f64>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub value: f64,
}

impl TreeNode {
    pub fn leaf(value: f64) -> Self {
        TreeNode {
            feature: None,
            threshold: None,
            left: None,
            right: None,
            value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
    pub max_depth: usize,
    /// Feature subset the tree was allowed to split on.
    pub features: Vec<usize>,
}

impl Tree {
    pub fn single_leaf(value: f64) -> Self {
        Tree {
            nodes: vec![TreeNode::leaf(value)],
            max_depth: 0,
            features: Vec::new(),
        }
    }

    /// A single split on `feature` at `threshold`.
    pub fn stump(feature: usize, threshold: f64, left: f64, right: f64) -> Self {
        Tree {
            nodes: vec![
                TreeNode {
                    feature: Some(feature),
                    threshold: Some(threshold),
                    left: Some(1),
                    right: Some(2),
                    value: 0.0,
                },
                TreeNode::leaf(left),
                TreeNode::leaf(right),
            ],
            max_depth: 1,
            features: vec![feature],
        }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            let node = &self.nodes[idx];
            match (node.feature, node.threshold, node.left, node.right) {
                (Some(f), Some(t), Some(l), Some(r)) => {
                    idx = if x[f] <= t { l } else { r };
                }
                _ => return node.value,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], idx: usize) -> usize {
            match (nodes[idx].left, nodes[idx].right) {
                (Some(l), Some(r)) => 1 + walk(nodes, l).max(walk(nodes, r)),
                _ => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes.iter().filter_map(|n| n.feature).max()
    }

    /// Structural checks for trees read back from disk.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Malformed("tree has no nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.value.is_finite() {
                return Err(Error::Malformed(format!("node {i}: non-finite value")));
            }
            match (n.feature, n.threshold, n.left, n.right) {
                (None, None, None, None) => {}
                (Some(_), Some(t), Some(l), Some(r)) => {
                    if t.is_nan()
                        || l <= i
                        || r <= i
                        || l >= self.nodes.len()
                        || r >= self.nodes.len()
                        || l == r
                    {
                        return Err(Error::Malformed(format!("node {i}: invalid split")));
                    }
                }
                _ => return Err(Error::Malformed(format!("node {i}: incomplete split"))),
            }
        }
        if self.depth() > self.max_depth {
            return Err(Error::Malformed("tree deeper than its depth limit".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_leaf_predicts_constant() {
        let t = Tree::single_leaf(0.7);
        assert_eq!(t.predict(&[123.0]), 0.7);
        assert_eq!(t.predict(&[-5.0, 1.0]), 0.7);
    }

    #[test]
    fn stump_routing() {
        let t = Tree::stump(0, 2.5, 1.0, -1.0);
        assert_eq!(t.predict(&[2.0]), 1.0);
        assert_eq!(t.predict(&[3.0]), -1.0);
        assert_eq!(t.predict(&[2.5]), 1.0);
    }

    #[test]
    fn validate_catches_bad_links() {
        let mut t = Tree::stump(0, 1.0, 0.0, 0.0);
        assert!(t.validate().is_ok());
        t.nodes[0].left = Some(7);
        assert!(t.validate().is_err());
        let mut t = Tree::stump(0, 1.0, 0.0, 0.0);
        t.nodes[0].threshold = None;
        assert!(t.validate().is_err());
    }
}
