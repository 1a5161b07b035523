//! Least-squares gradient boosting with leaf-wise regression trees.
//!
//! Split search is exact: every boundary between consecutive distinct
//! values of a feature inside a leaf is a candidate, scored by
//! `S_L²/n_L + S_R²/n_R − S²/n` over the residuals. The leaf with the largest
//! positive gain is split next until `max_leaves` is reached.

use serde::{Deserialize, Serialize};

use super::{EstimatorError, TrainParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Checks indices, feature bounds and that the nodes form one tree rooted at 0.
    pub fn validate(&self, dim: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(idx) = stack.pop() {
            match &self.nodes[idx] {
                Node::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(format!("node {idx}: non-finite leaf value"));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= dim {
                        return Err(format!("node {idx}: feature {feature} >= dimension {dim}"));
                    }
                    if threshold.is_nan() {
                        return Err(format!("node {idx}: NaN threshold"));
                    }
                    for &child in [left, right] {
                        if child >= self.nodes.len() {
                            return Err(format!("node {idx}: child {child} out of range"));
                        }
                        if seen[child] {
                            return Err(format!("node {child} reached twice"));
                        }
                        seen[child] = true;
                        stack.push(child);
                    }
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(format!("node {orphan} is unreachable from the root"));
        }
        Ok(())
    }
}

/// Column-major feature matrix with per-feature sorted row orders.
pub(crate) struct Columns {
    pub cols: Vec<Vec<f64>>,
    pub order: Vec<Vec<u32>>,
}

impl Columns {
    pub fn new(rows: &[&[f64]], dim: usize) -> Self {
        let cols: Vec<Vec<f64>> = (0..dim).map(|f| rows.iter().map(|r| r[f]).collect()).collect();
        let order = cols
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { cols, order }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Leaf {
    node: usize,
    depth: usize,
    /// Rows of this leaf, sorted by each feature.
    order: Vec<Vec<u32>>,
    sum: f64,
    best: Option<Candidate>,
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

fn best_split(cols: &[Vec<f64>], order: &[Vec<u32>], residual: &[f64], sum: f64, min_leaf: usize) -> Option<Candidate> {
    let n = order[0].len();
    if n < 2 * min_leaf {
        return None;
    }
    let parent = sum * sum / n as f64;
    let mut best: Option<Candidate> = None;
    for (feature, rows) in order.iter().enumerate() {
        let col = &cols[feature];
        let mut left_sum = 0.0;
        for (i, &row) in rows.iter().enumerate().take(n - 1) {
            left_sum += residual[row as usize];
            let n_left = i + 1;
            let n_right = n - n_left;
            if n_left < min_leaf {
                continue;
            }
            if n_right < min_leaf {
                break;
            }
            let here = col[row as usize];
            let next = col[rows[i + 1] as usize];
            if next <= here {
                continue;
            }
            let right_sum = sum - left_sum;
            let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64 - parent;
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                best = Some(Candidate {
                    gain,
                    feature,
                    threshold: midpoint(here, next),
                });
            }
        }
    }
    best
}

/// Grows one tree on `residual`; returns the tree and the leaf value per row.
pub(crate) fn grow_tree(columns: &Columns, residual: &[f64], params: &TrainParams) -> (Tree, Vec<f64>) {
    let n = residual.len();
    let sum: f64 = columns.order[0].iter().map(|&r| residual[r as usize]).sum();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut root = Leaf {
        node: 0,
        depth: 0,
        order: columns.order.clone(),
        sum,
        best: None,
    };
    root.best = best_split(&columns.cols, &root.order, residual, sum, params.min_samples_leaf);
    let mut leaves = vec![root];
    let mut go_left = vec![false; n];

    while leaves.len() < params.max_leaves {
        // Largest gain wins; ties go to the earliest-created leaf.
        let mut pick: Option<usize> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if leaf.depth >= params.max_depth {
                continue;
            }
            if let Some(c) = leaf.best {
                if pick.is_none_or(|p| c.gain > leaves[p].best.map_or(f64::NEG_INFINITY, |b| b.gain)) {
                    pick = Some(i);
                }
            }
        }
        let Some(pick) = pick else { break };
        let parent = leaves.remove(pick);
        let split = parent.best.expect("picked leaves have a split");

        let col = &columns.cols[split.feature];
        for &row in &parent.order[0] {
            go_left[row as usize] = col[row as usize] <= split.threshold;
        }
        let mut left_order = Vec::with_capacity(parent.order.len());
        let mut right_order = Vec::with_capacity(parent.order.len());
        for rows in &parent.order {
            let (l, r): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&row| go_left[row as usize]);
            left_order.push(l);
            right_order.push(r);
        }
        let left_sum: f64 = left_order[0].iter().map(|&r| residual[r as usize]).sum();
        let right_sum: f64 = right_order[0].iter().map(|&r| residual[r as usize]).sum();

        let left_node = nodes.len();
        let right_node = left_node + 1;
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[parent.node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: left_node,
            right: right_node,
        };
        let depth = parent.depth + 1;
        for (node, order, sum) in [(left_node, left_order, left_sum), (right_node, right_order, right_sum)] {
            let best = best_split(&columns.cols, &order, residual, sum, params.min_samples_leaf);
            leaves.push(Leaf {
                node,
                depth,
                order,
                sum,
                best,
            });
        }
        // Keep creation order so that ties resolve to the earlier leaf.
        leaves.sort_by_key(|l| l.node);
    }

    let mut per_row = vec![0.0; n];
    for leaf in &leaves {
        let count = leaf.order[0].len();
        let value = if count == 0 { 0.0 } else { leaf.sum / count as f64 };
        nodes[leaf.node] = Node::Leaf { value };
        for &row in &leaf.order[0] {
            per_row[row as usize] = value;
        }
    }
    (Tree { nodes }, per_row)
}

/// Mean with a correction pass, exact when every value is identical.
pub(crate) fn stable_mean(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let first = xs.iter().sum::<f64>() / n;
    first + xs.iter().map(|x| x - first).sum::<f64>() / n
}

pub(crate) fn check_params(params: &TrainParams) -> Result<(), EstimatorError> {
    if params.num_trees < 1 {
        return Err(EstimatorError::Params("num_trees must be at least 1".into()));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(EstimatorError::Params("learning_rate must be in (0, 1]".into()));
    }
    if params.max_leaves < 2 {
        return Err(EstimatorError::Params("max_leaves must be at least 2".into()));
    }
    if params.min_samples_leaf < 1 {
        return Err(EstimatorError::Params("min_samples_leaf must be at least 1".into()));
    }
    if params.max_depth < 1 {
        return Err(EstimatorError::Params("max_depth must be at least 1".into()));
    }
    Ok(())
}
