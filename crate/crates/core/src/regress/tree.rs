use crate::Matrix;

/// Node of a regression tree stored in an arena; the root is node 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub(crate) fn from_nodes(nodes: Vec<TreeNode>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf(_) => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict(&self, x_row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf(v) => return v,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x_row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub(crate) fn set_leaf(&mut self, node: usize, value: f64) {
        debug_assert!(matches!(self.nodes[node], TreeNode::Leaf(_)));
        self.nodes[node] = TreeNode::Leaf(value);
    }

    pub(crate) fn leaf_value(&self, node: usize) -> f64 {
        match self.nodes[node] {
            TreeNode::Leaf(v) => v,
            TreeNode::Split { .. } => unreachable!("rows are assigned to leaves only"),
        }
    }
}

/// Every feature column sorted ascending, ties by row index.
pub(crate) struct Presorted {
    columns: Vec<Vec<(f64, u32)>>,
}

impl Presorted {
    pub(crate) fn new(x: &Matrix) -> Self {
        let columns = (0..x.cols())
            .map(|j| {
                let mut col: Vec<(f64, u32)> = (0..x.rows()).map(|i| (x.get(i, j), i as u32)).collect();
                col.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                col
            })
            .collect();
        Self { columns }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grows one least-squares tree on `grad` level by level.
///
/// Returns the tree (leaf values zeroed, to be filled by the caller) and the
/// leaf index of every training row.
pub(crate) fn grow(
    x: &Matrix,
    presorted: &Presorted,
    grad: &[f64],
    max_depth: usize,
    min_leaf: usize,
) -> (Tree, Vec<usize>) {
    let n = grad.len();
    let mut nodes = vec![TreeNode::Leaf(0.0)];
    let mut node_of_row = vec![0usize; n];
    let mut active = vec![true];

    for _ in 0..max_depth {
        let m = nodes.len();
        let mut count = vec![0usize; m];
        let mut sum = vec![0.0; m];
        let mut sum_sq = vec![0.0; m];
        for i in 0..n {
            let nd = node_of_row[i];
            if active[nd] {
                count[nd] += 1;
                sum[nd] += grad[i];
                sum_sq[nd] += grad[i] * grad[i];
            }
        }

        let mut best: Vec<Option<Candidate>> = vec![None; m];
        let mut left_count = vec![0usize; m];
        let mut left_sum = vec![0.0; m];
        let mut last = vec![f64::NEG_INFINITY; m];
        for (feature, column) in presorted.columns.iter().enumerate() {
            left_count.iter_mut().for_each(|c| *c = 0);
            left_sum.iter_mut().for_each(|s| *s = 0.0);
            for &(value, row) in column {
                let row = row as usize;
                let nd = node_of_row[row];
                if !active[nd] {
                    continue;
                }
                let lc = left_count[nd];
                if lc >= min_leaf && value > last[nd] && count[nd] - lc >= min_leaf {
                    let rc = count[nd] - lc;
                    let ls = left_sum[nd];
                    let rs = sum[nd] - ls;
                    let gain = ls * ls / lc as f64 + rs * rs / rc as f64 - sum[nd] * sum[nd] / count[nd] as f64;
                    let floor = 1e-12 * sum_sq[nd];
                    let improves = best[nd].map_or(gain > floor, |b| gain > b.gain);
                    if improves && gain > floor {
                        let mut threshold = 0.5 * (last[nd] + value);
                        if threshold >= value {
                            threshold = last[nd];
                        }
                        best[nd] = Some(Candidate {
                            gain,
                            feature,
                            threshold,
                        });
                    }
                }
                left_count[nd] = lc + 1;
                left_sum[nd] += grad[row];
                last[nd] = value;
            }
        }

        let mut any_split = false;
        for nd in 0..m {
            if let (true, Some(c)) = (active[nd], best[nd]) {
                let left = nodes.len();
                nodes.push(TreeNode::Leaf(0.0));
                nodes.push(TreeNode::Leaf(0.0));
                nodes[nd] = TreeNode::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right: left + 1,
                };
                any_split = true;
            }
        }
        if !any_split {
            break;
        }
        for (i, nd) in node_of_row.iter_mut().enumerate() {
            if let TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } = nodes[*nd]
            {
                *nd = if x.get(i, feature) <= threshold { left } else { right };
            }
        }
        active = vec![false; nodes.len()];
        for &nd in &node_of_row {
            active[nd] = true;
        }
    }

    (Tree::from_nodes(nodes), node_of_row)
}
