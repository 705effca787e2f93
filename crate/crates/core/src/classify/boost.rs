//! Gradient-boosted regression trees on the logistic loss.
//!
//! Each round fits one tree to the gradients `g = p - y` and hessians
//! `h = p(1 - p)` of the current margins. Splits are exact greedy searches
//! maximizing
//!
//! ```text
//! G_L^2/(H_L+λ) + G_R^2/(H_R+λ) - G^2/(H+λ)
//! ```
//!
//! and leaves take the Newton weight `-G/(H+λ)`, shrunk by the learning rate.
//! A split is only made when its gain is strictly positive and both children
//! carry at least `min_child_weight` hessian mass. Features are scanned in
//! ascending index order and earlier candidates win ties, so an exact copy
//! of a feature at a higher index never receives a split.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::util::{log_sigmoid, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    pub lambda: f64,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_child_weight: 1.0,
            lambda: 1.0,
            subsample: 1.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        weight: f64,
    },
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { weight } => return weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    config: BoostConfig,
    n_features: usize,
    base_margin: f64,
    trees: Vec<Tree>,
    importance: Vec<u32>,
    loss_history: Vec<f64>,
}

impl BoostedEnsemble {
    /// An ensemble with no trees; predicts 0.5 everywhere.
    pub fn empty(n_features: usize) -> Self {
        Self {
            config: BoostConfig {
                rounds: 0,
                ..BoostConfig::default()
            },
            n_features,
            base_margin: 0.0,
            trees: Vec::new(),
            importance: vec![0; n_features],
            loss_history: Vec::new(),
        }
    }

    pub fn config(&self) -> &BoostConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Number of splits on each feature across all trees.
    pub fn importance(&self) -> &[u32] {
        &self.importance
    }

    /// Mean training log-loss after each round.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_margin + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

/// Fit an ensemble; both classes must be present.
pub fn train_boosted(
    x: &[Vec<f64>],
    y: &[bool],
    config: &BoostConfig,
) -> Result<BoostedEnsemble, ClassifyError> {
    super::check_training_data(x, y)?;
    validate(config)?;
    Ok(fit_unchecked(x, y, config))
}

fn validate(c: &BoostConfig) -> Result<(), ClassifyError> {
    let ok = c.max_depth >= 1
        && c.learning_rate > 0.0
        && c.lambda >= 0.0
        && c.min_child_weight >= 0.0
        && c.subsample > 0.0
        && c.subsample <= 1.0;
    if ok {
        Ok(())
    } else {
        Err(ClassifyError::Config(format!("invalid boosting configuration {c:?}")))
    }
}

/// Training without the class-balance check, so degenerate label sets can be
/// exercised directly.
pub(crate) fn fit_unchecked(x: &[Vec<f64>], y: &[bool], config: &BoostConfig) -> BoostedEnsemble {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    let targets: Vec<f64> = y.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    let sorted: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            idx
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut margins = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut in_node = vec![false; n];
    let mut ensemble = BoostedEnsemble {
        config: config.clone(),
        n_features: d,
        base_margin: 0.0,
        trees: Vec::with_capacity(config.rounds),
        importance: vec![0; d],
        loss_history: Vec::with_capacity(config.rounds),
    };

    for _ in 0..config.rounds {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - targets[i];
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let rows: Vec<usize> = if config.subsample < 1.0 {
            let m = ((n as f64 * config.subsample).round() as usize).clamp(1, n);
            let mut r = sample(&mut rng, n, m).into_vec();
            r.sort_unstable();
            r
        } else {
            (0..n).collect()
        };
        let mut builder = TreeBuilder {
            x,
            sorted: &sorted,
            grad: &grad,
            hess: &hess,
            in_node: &mut in_node,
            config,
            nodes: Vec::new(),
            importance: &mut ensemble.importance,
        };
        builder.build(rows, 0);
        let tree = Tree {
            nodes: builder.nodes,
        };
        for (m, row) in margins.iter_mut().zip(x) {
            *m += tree.predict(row);
        }
        ensemble.trees.push(tree);
        ensemble.loss_history.push(log_loss(&margins, y));
    }
    ensemble
}

fn log_loss(margins: &[f64], y: &[bool]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &t)| if t { -log_sigmoid(m) } else { -log_sigmoid(-m) })
        .sum();
    total / margins.len().max(1) as f64
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    sorted: &'a [Vec<usize>],
    grad: &'a [f64],
    hess: &'a [f64],
    in_node: &'a mut Vec<bool>,
    config: &'a BoostConfig,
    nodes: Vec<Node>,
    importance: &'a mut Vec<u32>,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    /// Build the subtree for `rows` and return its node index.
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let id = self.nodes.len();
        let leaf = Node::Leaf {
            weight: -g / (h + self.config.lambda) * self.config.learning_rate,
        };
        self.nodes.push(leaf);
        if depth >= self.config.max_depth || rows.len() < 2 {
            return id;
        }
        let Some(best) = self.best_split(&rows, g, h) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[i][best.feature] < best.threshold);
        self.importance[best.feature] += 1;
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[usize], g: f64, h: f64) -> Option<Candidate> {
        let lambda = self.config.lambda;
        let mcw = self.config.min_child_weight;
        let parent = g * g / (h + lambda);
        for &i in rows {
            self.in_node[i] = true;
        }
        let mut best: Option<Candidate> = None;
        for (f, order) in self.sorted.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            let mut prev: Option<usize> = None;
            for &i in order.iter().filter(|&&i| self.in_node[i]) {
                if let Some(p) = prev {
                    let (a, b) = (self.x[p][f], self.x[i][f]);
                    if a < b && hl >= mcw && h - hl >= mcw {
                        let (gr, hr) = (g - gl, h - hl);
                        let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                        if gain > 0.0 && best.as_ref().is_none_or(|c| gain > c.gain) {
                            best = Some(Candidate {
                                gain,
                                feature: f,
                                threshold: midpoint(a, b),
                            });
                        }
                    }
                }
                gl += self.grad[i];
                hl += self.hess[i];
                prev = Some(i);
            }
        }
        for &i in rows {
            self.in_node[i] = false;
        }
        best
    }
}

/// A threshold strictly above `a` and at most `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m > a {
        m
    } else {
        b
    }
}
