use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, Dataset};
use crate::data::NUM_CLASSES;

/// Number of features examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    #[default]
    All,
    Sqrt,
    Log2,
    Count(usize),
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(self, dims: usize) -> usize {
        let m = match self {
            MaxFeatures::All => dims,
            MaxFeatures::Sqrt => (dims as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (dims as f64).log2().floor() as usize,
            MaxFeatures::Count(n) => n,
            MaxFeatures::Fraction(f) => (f * dims as f64).ceil() as usize,
        };
        m.clamp(1, dims.max(1))
    }

    fn validate(self) -> Result<(), ClassifierError> {
        match self {
            MaxFeatures::Count(0) => Err(ClassifierError::InvalidSpec("max_features count must be positive".into())),
            MaxFeatures::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(ClassifierError::InvalidSpec("max_features fraction must be in (0, 1]".into()))
            }
            _ => Ok(()),
        }
    }
}

fn default_min_leaf() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    #[serde(default)]
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.min_leaf == 0 {
            return Err(ClassifierError::InvalidSpec("min_leaf must be at least 1".into()));
        }
        self.max_features.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        distribution: [f64; NUM_CLASSES],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART classification tree with Gini impurity. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
}

struct Builder<'a, R: Rng> {
    data: &'a Dataset,
    params: &'a TreeParams,
    n_features: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

fn gini(counts: &[usize; NUM_CLASSES], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, idx: &[usize]) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for &i in idx {
            c[self.data.y[i].index()] += 1;
        }
        c
    }

    fn leaf(&mut self, counts: &[usize; NUM_CLASSES], n: usize) -> usize {
        let distribution = counts.map(|c| c as f64 / n as f64);
        self.nodes.push(Node::Leaf { distribution });
        self.nodes.len() - 1
    }

    fn candidates(&mut self) -> Vec<usize> {
        let d = self.data.dims();
        if self.n_features >= d {
            return (0..d).collect();
        }
        let mut chosen = sample(self.rng, d, self.n_features).into_vec();
        chosen.sort_unstable();
        chosen
    }

    /// Best (feature, threshold, impurity decrease) over the candidate features.
    fn best_split(&mut self, idx: &[usize], counts: &[usize; NUM_CLASSES]) -> Option<(usize, f64)> {
        let n = idx.len();
        let parent = gini(counts, n);
        let min_leaf = self.params.min_leaf;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for feature in self.candidates() {
            let x = &self.data.x;
            order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
            let mut left = [0usize; NUM_CLASSES];
            for pos in 0..n - 1 {
                let i = order[pos];
                left[self.data.y[i].index()] += 1;
                let nl = pos + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let lo = x[i][feature];
                let hi = x[order[pos + 1]][feature];
                if lo == hi {
                    continue;
                }
                let mut right = *counts;
                for c in 0..NUM_CLASSES {
                    right[c] -= left[c];
                }
                let child = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                let gain = parent - child;
                if gain > 1e-12 && best.is_none_or(|(_, _, g)| gain > g) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some((feature, threshold, gain));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let n = idx.len();
        let counts = self.counts(idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || n < 2 * self.params.min_leaf {
            return self.leaf(&counts, n);
        }
        let Some((feature, threshold)) = self.best_split(idx, &counts) else {
            return self.leaf(&counts, n);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.data.x[i][feature] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { distribution: [0.0; NUM_CLASSES] });
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

impl TreeModel {
    pub fn fit<R: Rng>(params: &TreeParams, data: &Dataset, rng: &mut R) -> Self {
        let idx: Vec<usize> = (0..data.len()).collect();
        Self::fit_rows(params, data, &idx, rng)
    }

    /// Fit on a multiset of row indices (bootstrap samples repeat rows).
    pub fn fit_rows<R: Rng>(params: &TreeParams, data: &Dataset, rows: &[usize], rng: &mut R) -> Self {
        let mut builder = Builder {
            data,
            params,
            n_features: params.max_features.resolve(data.dims()),
            rng,
            nodes: Vec::new(),
        };
        builder.build(rows, 0);
        Self { nodes: builder.nodes }
    }

    pub fn scores(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { distribution } => return *distribution,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn default_trees() -> usize {
    100
}
fn default_forest_features() -> MaxFeatures {
    MaxFeatures::Sqrt
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default = "default_forest_features")]
    pub max_features: MaxFeatures,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    #[serde(default = "default_true")]
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: default_trees(),
            max_features: default_forest_features(),
            max_depth: None,
            min_leaf: 1,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.n_trees == 0 {
            return Err(ClassifierError::InvalidSpec("n_trees must be at least 1".into()));
        }
        self.tree_params().validate()
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            max_features: self.max_features,
        }
    }
}

/// Bagged trees; scores are the mean of the trees' leaf distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
}

impl ForestModel {
    pub fn fit<R: Rng>(params: &ForestParams, data: &Dataset, rng: &mut R) -> Self {
        let seeds: Vec<u64> = (0..params.n_trees).map(|_| rng.random()).collect();
        let tree_params = params.tree_params();
        let n = data.len();
        let trees = seeds
            .par_iter()
            .map(|&seed| {
                let mut tree_rng = ChaCha8Rng::seed_from_u64(seed);
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| tree_rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                TreeModel::fit_rows(&tree_params, data, &rows, &mut tree_rng)
            })
            .collect();
        Self { trees }
    }

    pub fn scores(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let mut acc = [0.0; NUM_CLASSES];
        for tree in &self.trees {
            for (a, s) in acc.iter_mut().zip(tree.scores(x)) {
                *a += s;
            }
        }
        acc.map(|a| a / self.trees.len() as f64)
    }
}
