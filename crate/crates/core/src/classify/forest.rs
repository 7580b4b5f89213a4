//! CART random forest with Gini splits and per-split feature sampling.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adaboost::weighted_resample;
use super::TrainingSet;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of features tried per split; `None` means `sqrt(D) / D`.
    pub feature_frac: Option<f64>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            max_depth: 12,
            min_leaf: 2,
            feature_frac: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        /// Weighted class counts.
        hist: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    fn leaf(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { hist } => return hist,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Majority class of the reached leaf; ties go to the lowest id.
    pub fn predict(&self, x: &[f64]) -> usize {
        crate::stats::argmax(self.leaf(x))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let h = self.leaf(x);
        let s: f64 = h.iter().sum();
        h.iter().map(|v| v / s).collect()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

fn gini(hist: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - hist.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    /// Per-row multiplicity times sample weight.
    w: Vec<f64>,
    /// Unweighted multiplicity, for the leaf-size rule.
    count: Vec<usize>,
    classes: usize,
    mtry: usize,
    cfg: ForestConfig,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn hist(&self, idx: &[usize]) -> (Vec<f64>, f64, usize) {
        let mut h = vec![0.0; self.classes];
        let mut n = 0;
        for &i in idx {
            h[self.y[i]] += self.w[i];
            n += self.count[i];
        }
        let total = h.iter().sum();
        (h, total, n)
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize, rng: &mut Rng) -> usize {
        let (hist, total, n) = self.hist(&idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { hist: hist.clone() });
        let pure = hist.iter().filter(|&&c| c > 0.0).count() <= 1;
        if pure || depth >= self.cfg.max_depth || n < 2 * self.cfg.min_leaf {
            return id;
        }
        let parent = gini(&hist, total);
        let dim = self.x[idx[0]].len();
        let features = sample(rng, dim, self.mtry.min(dim));
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.clone();
        for f in features.iter() {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = vec![0.0; self.classes];
            let mut left_total = 0.0;
            let mut left_n = 0;
            for k in 0..order.len() - 1 {
                let i = order[k];
                left[self.y[i]] += self.w[i];
                left_total += self.w[i];
                left_n += self.count[i];
                let (v, next) = (self.x[i][f], self.x[order[k + 1]][f]);
                if v == next || left_n < self.cfg.min_leaf || n - left_n < self.cfg.min_leaf {
                    continue;
                }
                let right: Vec<f64> = hist.iter().zip(&left).map(|(h, l)| h - l).collect();
                let right_total = total - left_total;
                let impurity = (left_total * gini(&left, left_total)
                    + right_total * gini(&right, right_total))
                    / total;
                let gain = parent - impurity;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, v + (next - v) / 2.0));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

fn mtry(cfg: &ForestConfig, dim: usize) -> usize {
    let frac = cfg.feature_frac.unwrap_or((dim as f64).sqrt() / dim as f64);
    ((frac * dim as f64).ceil() as usize).clamp(1, dim)
}

fn train_tree(train: &TrainingSet, cfg: &ForestConfig, seed: u64) -> DecisionTree {
    let mut rng = rng::stream(seed, 0x7472_6565);
    let n = train.len();
    let mut count = vec![0usize; n];
    if cfg.bootstrap {
        for i in weighted_resample(&train.weights, n, &mut rng) {
            count[i] += 1;
        }
    } else {
        count.iter_mut().for_each(|c| *c = 1);
    }
    let w: Vec<f64> = if cfg.bootstrap {
        count.iter().map(|&c| c as f64).collect()
    } else {
        train.weights.clone()
    };
    let idx: Vec<usize> = (0..n).filter(|&i| count[i] > 0).collect();
    let mut b = Builder {
        x: &train.rows,
        y: &train.labels,
        w,
        count,
        classes: train.class_count,
        mtry: mtry(cfg, train.dim()),
        cfg: *cfg,
        nodes: Vec::new(),
    };
    b.build(idx, 0, &mut rng);
    DecisionTree { nodes: b.nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub class_count: usize,
    pub dim: usize,
    pub trees: Vec<DecisionTree>,
}

pub fn train_random_forest(train: &TrainingSet, cfg: &ForestConfig, seed: u64) -> Result<RandomForest> {
    train.validate()?;
    if cfg.trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    let trees = (0..cfg.trees)
        .into_par_iter()
        .map(|t| train_tree(train, cfg, rng::derive(seed, t as u64)))
        .collect();
    Ok(RandomForest {
        class_count: train.class_count,
        dim: train.dim(),
        trees,
    })
}

impl RandomForest {
    /// Fraction of trees voting for each class.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.class_count];
        for t in &self.trees {
            v[t.predict(x)] += 1.0;
        }
        let n = self.trees.len() as f64;
        v.iter().map(|c| c / n).collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        crate::stats::argmax(&self.predict_proba(x))
    }
}
