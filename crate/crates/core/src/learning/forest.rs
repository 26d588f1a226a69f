//! Random forest of CART regression trees.
//!
//! Each tree is grown on a bootstrap resample, considers every feature at
//! every split, chooses the split that minimizes the children's summed
//! squared error, and stops only when a node is pure, holds fewer than two
//! samples, or has no feature left that separates its samples.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            bootstrap: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { value, samples } => Some((*value, *samples)),
            TreeNode::Split { .. } => None,
        })
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    sse: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let value = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(TreeNode::Leaf {
            value,
            samples: idx.len(),
        });
        self.nodes.len() - 1
    }

    fn best_split(&self, idx: &[usize]) -> Option<BestSplit> {
        let features = self.x[idx[0]].len();
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for f in 0..features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let total: f64 = order.iter().map(|&i| self.y[i]).sum();
            let total_sq: f64 = order.iter().map(|&i| self.y[i] * self.y[i]).sum();
            let n = order.len() as f64;
            let (mut sum, mut sq) = (0.0, 0.0);
            for k in 1..order.len() {
                let prev = order[k - 1];
                sum += self.y[prev];
                sq += self.y[prev] * self.y[prev];
                let (lo, hi) = (self.x[prev][f], self.x[order[k]][f]);
                if lo >= hi {
                    continue;
                }
                let nl = k as f64;
                let nr = n - nl;
                let sse = (sq - sum * sum / nl) + ((total_sq - sq) - (total - sum).powi(2) / nr);
                if best.as_ref().is_none_or(|b| sse < b.sse) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit {
                        sse,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &[usize]) -> usize {
        let first = self.y[idx[0]];
        if idx.len() < 2 || idx.iter().all(|&i| self.y[i] == first) {
            return self.leaf(idx);
        }
        let Some(split) = self.best_split(idx) else {
            return self.leaf(idx);
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0, samples: 0 });
        let l = self.build(&left);
        let r = self.build(&right);
        self.nodes[at] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        at
    }
}

pub fn fit_tree(x: &[Vec<f64>], y: &[f64], idx: &[usize]) -> RegressionTree {
    let mut b = Builder {
        x,
        y,
        nodes: Vec::new(),
    };
    b.build(idx);
    RegressionTree { nodes: b.nodes }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_features: usize,
    pub config: ForestConfig,
    pub seed: u64,
    pub trees: Vec<RegressionTree>,
}

impl Forest {
    /// Trains `config.trees` trees; tree `k` draws its bootstrap sample from
    /// stream `k` of `seed`, so results do not depend on thread scheduling.
    pub fn fit(x: &[Vec<f64>], y: &[f64], config: ForestConfig, seed: u64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyData("no training rows".into()));
        }
        if x.len() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "{} rows but {} labels",
                x.len(),
                y.len()
            )));
        }
        if config.trees == 0 {
            return Err(Error::InvalidArgument("tree count must be positive".into()));
        }
        let n_features = x[0].len();
        if x.iter().any(|r| r.len() != n_features) {
            return Err(Error::InvalidArgument("ragged feature rows".into()));
        }
        if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training data".into()));
        }
        let n = x.len();
        let trees = (0..config.trees)
            .into_par_iter()
            .map(|k| {
                let idx: Vec<usize> = if config.bootstrap {
                    let mut rng = stream_rng(seed, k as u64);
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                fit_tree(x, y, &idx)
            })
            .collect();
        Ok(Self {
            n_features,
            config,
            seed,
            trees,
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}
