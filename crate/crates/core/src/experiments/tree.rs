//! Binary CART with Gini impurity and midpoint thresholds.

use crate::datasets::BinaryLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Nodes with fewer samples become leaves.
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 12,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(BinaryLabel),
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub root: Node,
    pub dim: usize,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

/// Majority label; ties go to benign.
fn majority(pos: usize, n: usize) -> BinaryLabel {
    if 2 * pos > n {
        BinaryLabel::Malignant
    } else {
        BinaryLabel::Benign
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [BinaryLabel],
    params: TreeParams,
}

impl Builder<'_> {
    fn positives(&self, idx: &[usize]) -> usize {
        idx.iter().filter(|&&i| self.y[i] == BinaryLabel::Malignant).count()
    }

    /// Lowest weighted Gini over all features and midpoints; first wins ties.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let total_pos = self.positives(idx);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x[idx[0]].len() {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left_pos = 0;
            for k in 1..n {
                if self.y[order[k - 1]] == BinaryLabel::Malignant {
                    left_pos += 1;
                }
                let lo = self.x[order[k - 1]][f];
                let hi = self.x[order[k]][f];
                if lo == hi {
                    continue;
                }
                let impurity = (k as f64 * gini(left_pos, k)
                    + (n - k) as f64 * gini(total_pos - left_pos, n - k))
                    / n as f64;
                if best.is_none_or(|(b, _, _)| impurity < b) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some((impurity, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn build(&self, idx: &[usize], depth: usize) -> Node {
        let pos = self.positives(idx);
        let n = idx.len();
        if pos == 0 || pos == n || depth >= self.params.max_depth || n < self.params.min_samples_split {
            return Node::Leaf(majority(pos, n));
        }
        let Some((feature, threshold)) = self.best_split(idx) else {
            return Node::Leaf(majority(pos, n));
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        Node::Split {
            feature,
            threshold,
            left: Box::new(self.build(&left, depth + 1)),
            right: Box::new(self.build(&right, depth + 1)),
        }
    }
}

impl DecisionTree {
    pub fn fit(x: &[Vec<f64>], y: &[BinaryLabel], params: TreeParams) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "decision tree needs matching non-empty data ({} rows, {} labels)",
                x.len(),
                y.len()
            )));
        }
        let dim = x[0].len();
        if x.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("rows of unequal width".into()));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        let idx: Vec<usize> = (0..x.len()).collect();
        let root = Builder { x, y, params }.build(&idx, 0);
        Ok(Self { root, dim })
    }

    pub fn predict(&self, x: &[f64]) -> BinaryLabel {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(label) => return *label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryLabel::{Benign as B, Malignant as M};

    #[test]
    fn one_sample_per_class_gives_a_stump() {
        let t = DecisionTree::fit(&[vec![0.0, 5.0], vec![1.0, 5.0]], &[B, M], TreeParams::default()).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(
            t.root,
            Node::Split {
                feature: 0,
                threshold: 0.5,
                left: Box::new(Node::Leaf(B)),
                right: Box::new(Node::Leaf(M))
            }
        );
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = [B, M, M, B];
        let t = DecisionTree::fit(&x, &y, TreeParams::default()).unwrap();
        for (r, l) in x.iter().zip(y) {
            assert_eq!(t.predict(r), l);
        }
        let stump = DecisionTree::fit(&x, &y, TreeParams { max_depth: 1, ..Default::default() }).unwrap();
        assert_eq!(stump.depth(), 1);
    }

    #[test]
    fn identical_rows_become_majority_leaf() {
        let t = DecisionTree::fit(&[vec![1.0], vec![1.0], vec![1.0]], &[M, B, M], TreeParams::default()).unwrap();
        assert_eq!(t.root, Node::Leaf(M));
    }
}
