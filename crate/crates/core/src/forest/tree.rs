use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Decrease in response sum of squares achieved by this split.
        decrease: f64,
    },
    Leaf {
        value: f64,
        n_samples: usize,
    },
}

/// Binary regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub mtry: usize,
    pub min_node_size: usize,
}

impl RegressionTree {
    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Adds each split's decrease to `importance[feature]`.
    pub fn accumulate_importance(&self, importance: &mut [f64]) {
        for node in &self.nodes {
            if let Node::Split {
                feature, decrease, ..
            } = node
            {
                importance[*feature] += decrease;
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Grow a tree on the rows listed in `sample` (a bootstrap multiset).
    pub(crate) fn grow<R: Rng>(
        x: ArrayView2<'_, f64>,
        y: &[f64],
        sample: Vec<usize>,
        params: TreeParams,
        rng: &mut R,
    ) -> RegressionTree {
        let mut grower = Grower {
            x,
            y,
            params,
            nodes: Vec::new(),
            pairs: Vec::with_capacity(sample.len()),
        };
        grower.nodes.push(Node::Leaf {
            value: 0.0,
            n_samples: 0,
        });
        // Depth-first with an explicit stack; node slots are allocated up front
        // so ids follow creation order.
        let mut stack = vec![(0usize, sample)];
        while let Some((id, members)) = stack.pop() {
            let (node, children) = grower.split_node(members, rng);
            grower.nodes[id] = node;
            if let Some((left_members, right_members)) = children {
                let left = grower.nodes.len();
                let right = left + 1;
                grower.nodes.push(Node::Leaf {
                    value: 0.0,
                    n_samples: 0,
                });
                grower.nodes.push(Node::Leaf {
                    value: 0.0,
                    n_samples: 0,
                });
                if let Node::Split {
                    left: l, right: r, ..
                } = &mut grower.nodes[id]
                {
                    *l = left;
                    *r = right;
                }
                stack.push((right, right_members));
                stack.push((left, left_members));
            }
        }
        RegressionTree {
            nodes: grower.nodes,
        }
    }
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    params: TreeParams,
    nodes: Vec<Node>,
    pairs: Vec<(f64, f64)>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn split_node<R: Rng>(
        &mut self,
        members: Vec<usize>,
        rng: &mut R,
    ) -> (Node, Option<(Vec<usize>, Vec<usize>)>) {
        let n = members.len();
        let mean = members.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let leaf = Node::Leaf {
            value: mean,
            n_samples: n,
        };
        if n < self.params.min_node_size || n < 2 {
            return (leaf, None);
        }
        let p = self.x.ncols();
        let mut features = index::sample(rng, p, self.params.mtry.min(p)).into_vec();
        features.sort_unstable();

        let mut best: Option<Candidate> = None;
        for &feature in &features {
            if let Some(c) = self.best_threshold(&members, feature, mean) {
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best.filter(|b| b.gain > 0.0) else {
            return (leaf, None);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = members
            .into_iter()
            .partition(|&i| self.x[[i, best.feature]] <= best.threshold);
        (
            Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left: 0,
                right: 0,
                decrease: best.gain,
            },
            Some((left, right)),
        )
    }

    /// Lowest-threshold split maximizing the decrease in sum of squares.
    fn best_threshold(&mut self, members: &[usize], feature: usize, mean: f64) -> Option<Candidate> {
        let col = self.x.column(feature);
        self.pairs.clear();
        // Centering on the node mean keeps the prefix sums well conditioned.
        self.pairs
            .extend(members.iter().map(|&i| (col[i], self.y[i] - mean)));
        self.pairs
            .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let n = self.pairs.len();
        let total: f64 = self.pairs.iter().map(|p| p.1).sum();
        let base = total * total / n as f64;
        let mut left_sum = 0.0;
        let mut best: Option<Candidate> = None;
        for i in 0..n - 1 {
            left_sum += self.pairs[i].1;
            let (xi, xnext) = (self.pairs[i].0, self.pairs[i + 1].0);
            if xi == xnext {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = (n - i - 1) as f64;
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - base;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = 0.5 * (xi + xnext);
                // Guard against midpoints rounding onto the upper value.
                if threshold >= xnext {
                    threshold = xi;
                }
                best = Some(Candidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::{array, Array2};

    fn full_sample(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn single_split_hand_trace() {
        let x = array![[-2.0], [-1.0], [1.0], [2.0], [3.0]];
        let y = [1.0, 3.0, 10.0, 12.0, 14.0];
        let params = TreeParams {
            mtry: 1,
            min_node_size: 5,
        };
        let tree = RegressionTree::grow(x.view(), &y, full_sample(5), params, &mut rng::stream(0, &[]));
        // Root splits at the midpoint 0; children are below the node-size floor.
        match &tree.nodes[0] {
            Node::Split {
                feature,
                threshold,
                decrease,
                ..
            } => {
                assert_eq!((*feature, *threshold), (0, 0.0));
                // SS(root) = 130, SS(left) = 2, SS(right) = 8.
                assert!((decrease - 120.0).abs() < 1e-9);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(tree.predict_row(array![-5.0].view()), 2.0);
        assert_eq!(tree.predict_row(array![0.5].view()), 12.0);
        assert_eq!(tree.n_leaves(), 2);
    }

    #[test]
    fn constant_response_is_one_leaf() {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| (i * (j + 1)) as f64);
        let y = vec![7.0; 20];
        let params = TreeParams {
            mtry: 2,
            min_node_size: 5,
        };
        let tree = RegressionTree::grow(x.view(), &y, full_sample(20), params, &mut rng::stream(1, &[]));
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict_row(array![3.0, 4.0].view()), 7.0);
    }

    #[test]
    fn leaves_hold_means_of_routed_samples() {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64);
        let y: Vec<f64> = (0..40).map(|i| (i % 5) as f64 + 0.5 * i as f64).collect();
        let params = TreeParams {
            mtry: 2,
            min_node_size: 5,
        };
        let tree = RegressionTree::grow(x.view(), &y, full_sample(40), params, &mut rng::stream(2, &[]));
        let mut routed: Vec<Vec<f64>> = vec![Vec::new(); tree.nodes.len()];
        for i in 0..40 {
            let mut at = 0;
            while let Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } = tree.nodes[at]
            {
                at = if x[[i, feature]] <= threshold { left } else { right };
            }
            routed[at].push(y[i]);
        }
        for (id, node) in tree.nodes.iter().enumerate() {
            if let Node::Leaf { value, n_samples } = node {
                assert_eq!(routed[id].len(), *n_samples);
                let mean = routed[id].iter().sum::<f64>() / routed[id].len() as f64;
                assert!((value - mean).abs() < 1e-12);
            }
        }
    }
}
