//! Random forest of Gini decision trees.
//!
//! Trees are grown to purity on bootstrap samples, drawing `⌈√F⌉` candidate
//! features per split. Split search works on per-feature histograms: every
//! feature is mapped once to the rank of its value among the distinct values
//! seen in training, and thresholds sit halfway between adjacent values.
//! Identical rows are stored once with their bootstrap weights per label,
//! which grows exactly the trees the expanded data would.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_TREES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(p) => return p,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
}

/// Distinct training rows stored feature-major as value ranks.
struct Binned {
    ranks: Vec<Vec<u32>>,
    values: Vec<Vec<f64>>,
    /// distinct row of each training row
    row_of: Vec<u32>,
    labels: Vec<u8>,
    n_distinct: usize,
}

impl Binned {
    fn new(x: &[Vec<f64>], y: &[u8]) -> Self {
        let mut seen: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut distinct: Vec<&[f64]> = Vec::new();
        let row_of: Vec<u32> = x
            .iter()
            .map(|r| {
                let key: Vec<u64> = r.iter().map(|v| v.to_bits()).collect();
                *seen.entry(key).or_insert_with(|| {
                    distinct.push(r);
                    distinct.len() as u32 - 1
                })
            })
            .collect();
        let n_features = x.first().map_or(0, Vec::len);
        let mut ranks = Vec::with_capacity(n_features);
        let mut values = Vec::with_capacity(n_features);
        for f in 0..n_features {
            let mut uniq: Vec<f64> = distinct.iter().map(|r| r[f]).collect();
            uniq.sort_by(f64::total_cmp);
            uniq.dedup();
            ranks.push(
                distinct
                    .iter()
                    .map(|r| uniq.binary_search_by(|v| v.total_cmp(&r[f])).unwrap() as u32)
                    .collect(),
            );
            values.push(uniq);
        }
        Binned { ranks, values, row_of, labels: y.to_vec(), n_distinct: distinct.len() }
    }
}

struct BestSplit {
    feature: usize,
    /// last rank that goes left
    rank: u32,
    threshold: f64,
    impurity: f64,
}

struct Grower<'a> {
    data: &'a Binned,
    /// bootstrap weight of each distinct row, in total and for label 1
    weight: Vec<u32>,
    positive: Vec<u32>,
    max_features: usize,
    rng: ChaCha8Rng,
    hist_pos: Vec<u64>,
    hist_tot: Vec<u64>,
}

impl Grower<'_> {
    fn best_split(&mut self, rows: &[u32]) -> Option<BestSplit> {
        let n_features = self.data.ranks.len();
        let mut order: Vec<usize> = (0..n_features).collect();
        order.shuffle(&mut self.rng);
        let mut best: Option<BestSplit> = None;
        let mut tried = 0;
        for f in order {
            if tried >= self.max_features {
                break;
            }
            let nbins = self.data.values[f].len();
            if nbins < 2 {
                continue;
            }
            self.hist_pos[..nbins].fill(0);
            self.hist_tot[..nbins].fill(0);
            let ranks = &self.data.ranks[f];
            for &r in rows {
                let b = ranks[r as usize] as usize;
                self.hist_tot[b] += self.weight[r as usize] as u64;
                self.hist_pos[b] += self.positive[r as usize] as u64;
            }
            let total: u64 = self.hist_tot[..nbins].iter().sum();
            let pos: u64 = self.hist_pos[..nbins].iter().sum();
            let occupied = self.hist_tot[..nbins].iter().filter(|&&t| t > 0).count();
            if occupied < 2 {
                // constant inside this node; sklearn does not count it either
                continue;
            }
            tried += 1;
            let (mut lt, mut lp) = (0u64, 0u64);
            let mut prev: Option<usize> = None;
            for b in 0..nbins {
                if self.hist_tot[b] == 0 {
                    continue;
                }
                if let Some(p) = prev {
                    // split between bins p and b
                    let (rt, rp) = (total - lt, pos - lp);
                    let imp = gini_sum(lt, lp) + gini_sum(rt, rp);
                    if best.as_ref().is_none_or(|s| imp < s.impurity - 1e-12) {
                        let values = &self.data.values[f];
                        best = Some(BestSplit {
                            feature: f,
                            rank: p as u32,
                            threshold: 0.5 * (values[p] + values[b]),
                            impurity: imp,
                        });
                    }
                }
                lt += self.hist_tot[b];
                lp += self.hist_pos[b];
                prev = Some(b);
            }
        }
        best
    }

    fn grow(&mut self, mut rows: Vec<u32>) -> DecisionTree {
        let mut nodes = vec![Node::Leaf(0.0)];
        let mut stack = vec![(0usize, 0usize, rows.len())];
        while let Some((at, start, end)) = stack.pop() {
            let (mut tot, mut pos) = (0u64, 0u64);
            for &r in &rows[start..end] {
                tot += self.weight[r as usize] as u64;
                pos += self.positive[r as usize] as u64;
            }
            let p = if tot == 0 { 0.0 } else { pos as f64 / tot as f64 };
            if pos == 0 || pos == tot {
                nodes[at] = Node::Leaf(p);
                continue;
            }
            let Some(split) = self.best_split(&rows[start..end]) else {
                nodes[at] = Node::Leaf(p);
                continue;
            };
            let ranks = &self.data.ranks[split.feature];
            // stable, so the order inside each child matches a fresh filter
            let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
                rows[start..end].iter().partition(|&&r| ranks[r as usize] <= split.rank);
            let mid = start + left_rows.len();
            rows[start..mid].copy_from_slice(&left_rows);
            rows[mid..end].copy_from_slice(&right_rows);
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf(0.0));
            nodes.push(Node::Leaf(0.0));
            nodes[at] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
            stack.push((left, start, mid));
            stack.push((right, mid, end));
        }
        DecisionTree { nodes }
    }
}

/// `n · gini` for a node of total weight `n` with `pos` positives.
fn gini_sum(n: u64, pos: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let p = pos as f64;
    let q = n - p;
    n - (p * p + q * q) / n
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[u8], n_trees: usize, seed: u64) -> Self {
        assert_eq!(x.len(), y.len(), "feature and label counts differ");
        let n = x.len();
        if n == 0 {
            return RandomForest { trees: Vec::new() };
        }
        let data = Binned::new(x, y);
        let n_features = data.ranks.len();
        let max_features = ((n_features as f64).sqrt().ceil() as usize).max(1);
        let max_bins = data.values.iter().map(Vec::len).max().unwrap_or(0);
        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut weight = vec![0u32; data.n_distinct];
            let mut positive = vec![0u32; data.n_distinct];
            for _ in 0..n {
                let r = rng.gen_range(0..n);
                let d = data.row_of[r] as usize;
                weight[d] += 1;
                positive[d] += data.labels[r] as u32;
            }
            let rows: Vec<u32> = (0..data.n_distinct as u32).filter(|&r| weight[r as usize] > 0).collect();
            let mut grower = Grower {
                data: &data,
                weight,
                positive,
                max_features,
                rng,
                hist_pos: vec![0; max_bins],
                hist_tot: vec![0; max_bins],
            };
            trees.push(grower.grow(rows));
        }
        RandomForest { trees }
    }

    /// Mean leaf frequency of label 1 across trees.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.5;
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict_proba(x)).sum();
        (sum / self.trees.len() as f64).clamp(0.0, 1.0)
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_separated_rows_are_reproduced() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = vec![0, 1];
        let forest = RandomForest::fit(&x, &y, DEFAULT_TREES, 7);
        // a bootstrap may miss a row, but on average both labels are recovered
        assert!(forest.predict_proba(&x[0]) < 0.5);
        assert!(forest.predict_proba(&x[1]) > 0.5);
    }

    #[test]
    fn pure_trees_interpolate_training_data() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i / 7) as f64, (i % 3) as f64]).collect();
        let y: Vec<u8> = (0..40).map(|i| ((i % 7) > 3) as u8).collect();
        let forest = RandomForest::fit(&x, &y, 25, 3);
        for (row, &label) in x.iter().zip(&y) {
            let p = forest.predict_proba(row);
            assert_eq!(p > 0.5, label == 1);
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 11) as f64, (i % 4) as f64]).collect();
        let y: Vec<u8> = (0..30).map(|i| (i % 3 == 0) as u8).collect();
        let a = RandomForest::fit(&x, &y, 10, 42);
        let b = RandomForest::fit(&x, &y, 10, 42);
        assert_eq!(a, b);
        for probe in [[0.0, 0.0], [3.0, 1.0], [10.0, 3.0]] {
            assert_eq!(a.predict_proba(&probe), b.predict_proba(&probe));
        }
    }

    #[test]
    fn gini_of_pure_node_is_zero() {
        assert_eq!(gini_sum(5, 0), 0.0);
        assert_eq!(gini_sum(5, 5), 0.0);
        assert!((gini_sum(4, 2) - 2.0).abs() < 1e-12);
    }
}
