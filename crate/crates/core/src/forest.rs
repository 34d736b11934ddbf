//! Random-forest regression: bagged CART trees grown by variance reduction,
//! out-of-bag R² and out-of-bag permutation importance.
//!
//! Split search works on per-feature value ranks. When a feature has few
//! distinct values relative to the node size (TF-IDF columns are mostly
//! zero), the node's samples are bucketed by rank in linear time; otherwise
//! they are sorted. Ties between candidate splits go to the lowest feature
//! index, then the lowest threshold.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Features drawn at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mtry {
    Sqrt,
    Third,
    All,
    Count(usize),
}

impl Mtry {
    pub fn resolve(self, n_features: usize) -> usize {
        let m = match self {
            Mtry::Sqrt => (n_features as f64).sqrt().floor() as usize,
            Mtry::Third => n_features / 3,
            Mtry::All => n_features,
            Mtry::Count(k) => k,
        };
        m.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or hit `min_leaf`.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub mtry: Mtry,
    /// Sample `n` rows with replacement per tree. When off, every tree sees
    /// every row once and no sample is out-of-bag.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            mtry: Mtry::Third,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// A regression tree stored as a node arena; node 0 is the root. Samples go
/// left when `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_by(|f| x[f])
    }

    fn predict_by(&self, feature: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature: f,
                    threshold,
                    left,
                    right,
                } => {
                    i = if feature(f as usize) <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn used_features(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature as usize),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { value } => Some(*value),
            TreeNode::Split { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + go(nodes, left as usize).max(go(nodes, right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// Bootstrap row indices (with repetition) used to grow each tree.
    pub in_bag: Vec<Vec<u32>>,
    pub params: ForestParams,
    pub seed: u64,
    pub n_features: usize,
    pub n_samples: usize,
}

/// Column-major view with per-feature value ranks.
struct RankedData<'a> {
    y: &'a [f64],
    /// `ranks[f][i]` is the position of `x[i][f]` among the distinct values
    /// of feature `f`.
    ranks: Vec<Vec<u32>>,
    distinct: Vec<Vec<f64>>,
}

impl<'a> RankedData<'a> {
    fn new(x: &[Vec<f64>], y: &'a [f64]) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let (ranks, distinct) = (0..p)
            .map(|f| {
                let mut values: Vec<f64> = x.iter().map(|r| r[f]).collect();
                values.sort_by(f64::total_cmp);
                values.dedup();
                let ranks = x
                    .iter()
                    .map(|r| values.partition_point(|v| *v < r[f]) as u32)
                    .collect();
                (ranks, values)
            })
            .unzip();
        RankedData { y, ranks, distinct }
    }

    fn n_features(&self) -> usize {
        self.ranks.len()
    }
}

struct Scratch {
    count: Vec<u32>,
    sum: Vec<f64>,
    pairs: Vec<(u32, f64)>,
}

struct BestSplit {
    feature: usize,
    /// Highest rank going left.
    rank: u32,
    threshold: f64,
    score: f64,
}

struct Grower<'d, 'a> {
    data: &'d RankedData<'a>,
    params: &'d ForestParams,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
    scratch: Scratch,
    features: Vec<usize>,
}

impl Grower<'_, '_> {
    fn grow(&mut self, samples: &mut [u32], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let (sum, n) = samples
            .iter()
            .fold((0.0, 0usize), |(s, c), &i| (s + self.data.y[i as usize], c + 1));
        let mean = sum / n as f64;
        self.nodes.push(TreeNode::Leaf { value: mean });

        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || n < 2 * self.params.min_leaf.max(1) {
            return id;
        }
        let Some(best) = self.best_split(samples, sum, n) else {
            return id;
        };
        let ranks = &self.data.ranks[best.feature];
        let mut lo = 0;
        let mut hi = samples.len();
        while lo < hi {
            if ranks[samples[lo] as usize] <= best.rank {
                lo += 1;
            } else {
                hi -= 1;
                samples.swap(lo, hi);
            }
        }
        let (left_s, right_s) = samples.split_at_mut(lo);
        let left = self.grow(left_s, depth + 1);
        let right = self.grow(right_s, depth + 1);
        self.nodes[id as usize] = TreeNode::Split {
            feature: best.feature as u32,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn draw_features(&mut self) {
        let p = self.data.n_features();
        self.features.clear();
        if self.mtry >= p {
            self.features.extend(0..p);
        } else {
            self.features
                .extend(rand::seq::index::sample(&mut self.rng, p, self.mtry));
            self.features.sort_unstable();
        }
    }

    fn best_split(&mut self, samples: &[u32], total_sum: f64, n: usize) -> Option<BestSplit> {
        self.draw_features();
        let min_leaf = self.params.min_leaf.max(1);
        let parent = total_sum * total_sum / n as f64;
        let mut best: Option<BestSplit> = None;
        let features = std::mem::take(&mut self.features);
        for &f in &features {
            let ranks = &self.data.ranks[f];
            let distinct = &self.data.distinct[f];
            if distinct.len() < 2 {
                continue;
            }
            let mut consider = |rank_left: u32, rank_right: u32, nl: usize, sl: f64| {
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    return;
                }
                let sr = total_sum - sl;
                let score = sl * sl / nl as f64 + sr * sr / nr as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let threshold =
                        0.5 * (distinct[rank_left as usize] + distinct[rank_right as usize]);
                    best = Some(BestSplit {
                        feature: f,
                        rank: rank_left,
                        threshold,
                        score,
                    });
                }
            };
            if distinct.len() <= 2 * samples.len() {
                let Scratch { count, sum, .. } = &mut self.scratch;
                let d = distinct.len();
                count[..d].fill(0);
                sum[..d].fill(0.0);
                for &i in samples {
                    let r = ranks[i as usize] as usize;
                    count[r] += 1;
                    sum[r] += self.data.y[i as usize];
                }
                let (mut nl, mut sl) = (0usize, 0.0);
                let mut prev: Option<u32> = None;
                for r in 0..d {
                    if count[r] == 0 {
                        continue;
                    }
                    if let Some(p) = prev {
                        consider(p, r as u32, nl, sl);
                    }
                    nl += count[r] as usize;
                    sl += sum[r];
                    prev = Some(r as u32);
                }
            } else {
                let pairs = &mut self.scratch.pairs;
                pairs.clear();
                pairs.extend(
                    samples
                        .iter()
                        .map(|&i| (ranks[i as usize], self.data.y[i as usize])),
                );
                pairs.sort_unstable_by_key(|p| p.0);
                let (mut nl, mut sl) = (0usize, 0.0);
                for k in 0..pairs.len() {
                    if k > 0 && pairs[k].0 != pairs[k - 1].0 {
                        consider(pairs[k - 1].0, pairs[k].0, nl, sl);
                    }
                    nl += 1;
                    sl += pairs[k].1;
                }
            }
        }
        self.features = features;
        // no split unless the weighted within-node variance strictly drops
        best.filter(|b| b.score > parent + 1e-12 * parent.abs().max(1e-300))
    }
}

fn check_design(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Spec("random forest needs at least one sample".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            got: y.len(),
        });
    }
    let p = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != p) {
        return Err(Error::Shape {
            expected: p,
            got: r.len(),
        });
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Spec("random forest inputs must be finite".into()));
    }
    Ok(p)
}

fn tree_seed(seed: u64, tree: usize) -> u64 {
    par::derive_seed(seed, tree as u64)
}

pub fn fit_forest(x: &[Vec<f64>], y: &[f64], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    let p = check_design(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::Spec("n_trees must be at least 1".into()));
    }
    let n = x.len();
    let data = RankedData::new(x, y);
    let max_distinct = data.distinct.iter().map(Vec::len).max().unwrap_or(0);
    let mtry = params.mtry.resolve(p);

    let grown: Vec<(Tree, Vec<u32>)> = par::map_indexed(params.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, t));
        let in_bag: Vec<u32> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n as u32)).collect()
        } else {
            (0..n as u32).collect()
        };
        let mut samples = in_bag.clone();
        let mut grower = Grower {
            data: &data,
            params,
            mtry,
            rng,
            nodes: Vec::new(),
            scratch: Scratch {
                count: vec![0; max_distinct],
                sum: vec![0.0; max_distinct],
                pairs: Vec::with_capacity(n),
            },
            features: Vec::with_capacity(p),
        };
        grower.grow(&mut samples, 0);
        (Tree { nodes: grower.nodes }, in_bag)
    });
    let (trees, in_bag) = grown.into_iter().unzip();
    Ok(ForestModel {
        trees,
        in_bag,
        params: *params,
        seed,
        n_features: p,
        n_samples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OobScore {
    pub r2: f64,
    pub mse: f64,
    /// Samples that were out-of-bag for at least one tree.
    pub covered: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    /// Mean over trees of (permuted OOB MSE − baseline OOB MSE).
    pub raw: Vec<f64>,
    /// `raw` divided by its sum when that sum is positive.
    pub normalized: Vec<f64>,
}

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Shape {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    /// Rows not drawn into tree `t`'s bootstrap sample.
    pub fn oob_indices(&self, t: usize) -> Vec<usize> {
        let mut in_bag = vec![false; self.n_samples];
        for &i in &self.in_bag[t] {
            in_bag[i as usize] = true;
        }
        (0..self.n_samples).filter(|&i| !in_bag[i]).collect()
    }

    fn check_training_rows(&self, x: &[Vec<f64>], y: &[f64]) -> Result<()> {
        if x.len() != self.n_samples || y.len() != self.n_samples {
            return Err(Error::Shape {
                expected: self.n_samples,
                got: x.len().min(y.len()),
            });
        }
        Ok(())
    }

    /// Average over the trees for which each row is out-of-bag; `None` for
    /// rows in every bootstrap sample.
    pub fn oob_predictions(&self, x: &[Vec<f64>]) -> Vec<Option<f64>> {
        let mut sum = vec![0.0; self.n_samples];
        let mut count = vec![0usize; self.n_samples];
        for (t, tree) in self.trees.iter().enumerate() {
            for i in self.oob_indices(t) {
                sum[i] += tree.predict(&x[i]);
                count[i] += 1;
            }
        }
        sum.into_iter()
            .zip(count)
            .map(|(s, c)| (c > 0).then(|| s / c as f64))
            .collect()
    }

    pub fn oob_r2(&self, x: &[Vec<f64>], y: &[f64]) -> Result<OobScore> {
        self.check_training_rows(x, y)?;
        let preds = self.oob_predictions(x);
        let pairs: Vec<(f64, f64)> = preds
            .iter()
            .zip(y)
            .filter_map(|(p, &v)| p.map(|p| (v, p)))
            .collect();
        if pairs.is_empty() {
            return Err(Error::Coverage);
        }
        let m = pairs.len() as f64;
        let mean = pairs.iter().map(|p| p.0).sum::<f64>() / m;
        let sse: f64 = pairs.iter().map(|(v, p)| (v - p).powi(2)).sum();
        let sst: f64 = pairs.iter().map(|(v, _)| (v - mean).powi(2)).sum();
        let r2 = if sst > 0.0 {
            1.0 - sse / sst
        } else if sse == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        };
        Ok(OobScore {
            r2,
            mse: sse / m,
            covered: pairs.len(),
            skipped: self.n_samples - pairs.len(),
        })
    }

    /// Out-of-bag permutation importance. Within each tree's OOB rows one
    /// seeded shuffle is drawn and applied to each feature column in turn.
    /// Features a tree never splits on cannot change its predictions and
    /// contribute exactly 0.
    pub fn oob_importance(&self, x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<Importance> {
        self.check_training_rows(x, y)?;
        let per_tree: Vec<Option<Vec<(usize, f64)>>> = par::map_indexed(self.trees.len(), |t| {
            let tree = &self.trees[t];
            let oob = self.oob_indices(t);
            if oob.is_empty() {
                return None;
            }
            let mut perm = oob.clone();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(tree_seed(seed, t)));
            let m = oob.len() as f64;
            let base: f64 = oob
                .iter()
                .map(|&i| (y[i] - tree.predict(&x[i])).powi(2))
                .sum::<f64>()
                / m;
            let deltas = tree
                .used_features()
                .into_iter()
                .map(|f| {
                    let permuted: f64 = oob
                        .iter()
                        .zip(&perm)
                        .map(|(&i, &j)| {
                            let row = &x[i];
                            let p = tree.predict_by(|g| if g == f { x[j][f] } else { row[g] });
                            (y[i] - p).powi(2)
                        })
                        .sum::<f64>()
                        / m;
                    (f, permuted - base)
                })
                .collect();
            Some(deltas)
        });
        let scored = per_tree.iter().filter(|t| t.is_some()).count();
        if scored == 0 {
            return Err(Error::Coverage);
        }
        let mut raw = vec![0.0; self.n_features];
        for deltas in per_tree.iter().flatten() {
            for &(f, d) in deltas {
                raw[f] += d;
            }
        }
        raw.iter_mut().for_each(|v| *v /= scored as f64);
        let total: f64 = raw.iter().sum();
        let normalized = if total > 0.0 {
            raw.iter().map(|v| v / total).collect()
        } else {
            raw.clone()
        };
        Ok(Importance { raw, normalized })
    }
}

/// Feature indices sorted by descending score, ties by index.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_rows(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..p).map(|_| rng.random::<f64>()).collect()).collect()
    }

    #[test]
    fn constant_target_gives_constant_forest() {
        let x = random_rows(50, 3, 1);
        let y = vec![4.25; 50];
        let f = fit_forest(&x, &y, &ForestParams::default(), 3).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
        for r in &random_rows(10, 3, 2) {
            assert_eq!(f.predict(r).unwrap(), 4.25);
        }
    }

    #[test]
    fn depth_zero_predicts_mean() {
        let x = random_rows(20, 2, 1);
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let params = ForestParams {
            n_trees: 1,
            max_depth: Some(0),
            bootstrap: false,
            ..Default::default()
        };
        let f = fit_forest(&x, &y, &params, 0).unwrap();
        assert_eq!(f.predict(&[0.3, 0.9]).unwrap(), 9.5);
    }

    #[test]
    fn step_function_is_recovered() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 39.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 }).collect();
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            mtry: Mtry::All,
            ..Default::default()
        };
        let f = fit_forest(&x, &y, &params, 0).unwrap();
        for (r, v) in x.iter().zip(&y) {
            assert_eq!(f.predict(r).unwrap(), *v);
        }
        assert_eq!(f.trees[0].depth(), 1);
        match f.trees[0].nodes[0] {
            TreeNode::Split { threshold, .. } => {
                assert_eq!(threshold, 0.5 * (19.0 / 39.0 + 20.0 / 39.0))
            }
            _ => panic!("root should split"),
        }
    }

    #[test]
    fn forest_prediction_is_mean_of_trees() {
        let x = random_rows(60, 4, 5);
        let y: Vec<f64> = x.iter().map(|r| r[0] * 3.0 + r[1]).collect();
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 7, ..Default::default() }, 9).unwrap();
        for r in random_rows(20, 4, 6) {
            let oracle = f.trees.iter().map(|t| t.predict(&r)).sum::<f64>() / 7.0;
            assert_eq!(f.predict(&r).unwrap(), oracle);
            let lo = f.trees.iter().flat_map(Tree::leaf_values).fold(f64::INFINITY, f64::min);
            let hi = f.trees.iter().flat_map(Tree::leaf_values).fold(f64::NEG_INFINITY, f64::max);
            let p = f.predict(&r).unwrap();
            assert!(lo <= p && p <= hi);
        }
        assert!(matches!(f.predict(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn three_tree_average() {
        let leaf = |v| Tree {
            nodes: vec![TreeNode::Leaf { value: v }],
        };
        let f = ForestModel {
            trees: vec![leaf(1.0), leaf(2.0), leaf(3.0)],
            in_bag: vec![vec![]; 3],
            params: ForestParams::default(),
            seed: 0,
            n_features: 1,
            n_samples: 0,
        };
        assert_eq!(f.predict(&[0.0]).unwrap(), 2.0);
    }

    #[test]
    fn seeded_fit_is_deterministic() {
        let x = random_rows(80, 5, 7);
        let y: Vec<f64> = x.iter().map(|r| r[2] - r[4]).collect();
        let p = ForestParams { n_trees: 20, ..Default::default() };
        let a = fit_forest(&x, &y, &p, 42).unwrap();
        let b = fit_forest(&x, &y, &p, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.oob_importance(&x, &y, 1).unwrap(), b.oob_importance(&x, &y, 1).unwrap());
        assert_ne!(a, fit_forest(&x, &y, &p, 43).unwrap());
    }

    #[test]
    fn oob_matches_hand_averaging() {
        let x = random_rows(30, 2, 8);
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 5, ..Default::default() }, 1).unwrap();
        let preds = f.oob_predictions(&x);
        for i in 0..30 {
            let trees: Vec<f64> = (0..5)
                .filter(|&t| !f.in_bag[t].contains(&(i as u32)))
                .map(|t| f.trees[t].predict(&x[i]))
                .collect();
            let oracle = (!trees.is_empty()).then(|| trees.iter().sum::<f64>() / trees.len() as f64);
            assert_eq!(preds[i], oracle);
        }
        let score = f.oob_r2(&x, &y).unwrap();
        assert_eq!(score.covered + score.skipped, 30);
    }

    #[test]
    fn no_bootstrap_means_no_coverage() {
        let x = random_rows(10, 2, 1);
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 3, bootstrap: false, ..Default::default() }, 1).unwrap();
        assert!(matches!(f.oob_r2(&x, &y), Err(Error::Coverage)));
        assert!(matches!(f.oob_importance(&x, &y, 0), Err(Error::Coverage)));
    }

    #[test]
    fn planted_signal_dominates_noise() {
        let mut wins = 0;
        for seed in 0..10 {
            let x = random_rows(200, 2, 100 + seed);
            let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
            let f = fit_forest(&x, &y, &ForestParams { n_trees: 50, ..Default::default() }, seed).unwrap();
            let imp = f.oob_importance(&x, &y, seed).unwrap();
            if imp.normalized[0] > imp.normalized[1] {
                wins += 1;
            }
            let total: f64 = imp.normalized.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(wins >= 9);
    }

    #[test]
    fn constant_column_has_zero_importance() {
        let mut x = random_rows(100, 3, 4);
        x.iter_mut().for_each(|r| r[1] = 0.0);
        let y: Vec<f64> = x.iter().map(|r| r[0] + r[2]).collect();
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 30, mtry: Mtry::All, ..Default::default() }, 2).unwrap();
        let imp = f.oob_importance(&x, &y, 2).unwrap();
        assert_eq!(imp.raw[1], 0.0);
    }

    #[test]
    fn duplicated_column_leaves_single_tree_unchanged() {
        let x = random_rows(60, 3, 12);
        let y: Vec<f64> = x.iter().map(|r| (r[0] * 5.0).sin() + r[1]).collect();
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            mtry: Mtry::All,
            ..Default::default()
        };
        let f = fit_forest(&x, &y, &params, 0).unwrap();
        let dup: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0], r[1], r[2], r[1]]).collect();
        let g = fit_forest(&dup, &y, &params, 0).unwrap();
        for r in random_rows(50, 3, 13) {
            let rd = vec![r[0], r[1], r[2], r[1]];
            assert_eq!(f.predict(&r).unwrap(), g.predict(&rd).unwrap());
        }
        assert!(!g.trees[0].used_features().contains(&3));
    }

    /// Exhaustive CART: try every midpoint of every feature, keep the
    /// first strictly best one in (feature, threshold) order.
    fn brute_tree(x: &[Vec<f64>], y: &[f64], idx: &[usize], depth: usize, q: &[f64]) -> f64 {
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        if depth == 0 || idx.len() < 2 {
            return mean;
        }
        let sse = |s: &[usize]| {
            let m = s.iter().map(|&i| y[i]).sum::<f64>() / s.len() as f64;
            s.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
        };
        let parent = sse(idx);
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = idx.iter().map(|&i| x[i][f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][f] <= t);
                let cost = sse(&l) + sse(&r);
                if best.is_none_or(|b| cost < b.0 - 1e-9) {
                    best = Some((cost, f, t));
                }
            }
        }
        match best {
            Some((cost, f, t)) if cost < parent - 1e-9 => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][f] <= t);
                if q[f] <= t { brute_tree(x, y, &l, depth - 1, q) } else { brute_tree(x, y, &r, depth - 1, q) }
            }
            _ => mean,
        }
    }

    #[test]
    fn matches_exhaustive_cart_oracle() {
        // continuous columns exercise the sorted path at small nodes, the
        // integer column the bucketed one
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..120)
            .map(|_| vec![rng.random::<f64>(), rng.random_range(0..4) as f64, rng.random::<f64>()])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| (6.0 * r[0]).sin() + r[1] * r[1] * 0.3 + r[2]).collect();
        let params = ForestParams { n_trees: 1, bootstrap: false, mtry: Mtry::All, max_depth: Some(4), ..Default::default() };
        let f = fit_forest(&x, &y, &params, 0).unwrap();
        let idx: Vec<usize> = (0..x.len()).collect();
        for q in random_rows(40, 3, 4).into_iter().chain(x.iter().take(20).cloned()) {
            let oracle = brute_tree(&x, &y, &idx, 4, &q);
            assert!((f.predict(&q).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn mtry_resolution() {
        assert_eq!(Mtry::Sqrt.resolve(100), 10);
        assert_eq!(Mtry::Third.resolve(2), 1);
        assert_eq!(Mtry::All.resolve(7), 7);
        assert_eq!(Mtry::Count(50).resolve(7), 7);
    }
}
