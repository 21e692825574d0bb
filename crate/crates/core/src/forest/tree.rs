use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted impurity decrease `W*G - W_l*G_l - W_r*G_r` of this split.
        impurity_decrease: f64,
    },
    Leaf {
        probabilities: Vec<f64>,
    },
}

/// A fitted CART classification tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf_probabilities(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { probabilities } => return probabilities,
            }
        }
    }

    /// Unnormalized impurity decrease summed per feature.
    pub fn impurity_decrease_by_feature(&self, n_features: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_features];
        for node in &self.nodes {
            if let Node::Split {
                feature,
                impurity_decrease,
                ..
            } = node
            {
                out[*feature] += impurity_decrease.max(0.0);
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

pub(crate) fn gini(mass: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - mass.iter().map(|m| (m / total) * (m / total)).sum::<f64>()
}

/// Best split found for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// `W*G - W_l*G_l - W_r*G_r`.
    pub impurity_decrease: f64,
    pub weight: f64,
    pub parent_impurity: f64,
    pub left_impurity: f64,
    pub right_impurity: f64,
    pub left_weight: f64,
}

impl SplitCandidate {
    /// Gain normalized by the node weight.
    pub fn relative_decrease(&self) -> f64 {
        self.impurity_decrease / self.weight
    }

    fn beats(&self, other: &SplitCandidate) -> bool {
        if self.impurity_decrease != other.impurity_decrease {
            return self.impurity_decrease > other.impurity_decrease;
        }
        (self.feature, self.threshold) < (other.feature, other.threshold)
    }
}

pub(crate) struct TreeBuilder<'a> {
    pub x: &'a Matrix,
    pub y: &'a [usize],
    pub n_classes: usize,
    /// Per-row weight (bootstrap multiplicity times class weight).
    pub weight: &'a [f64],
    /// Per-row bootstrap multiplicity.
    pub count: &'a [u32],
    pub max_features: usize,
    pub min_samples_split: usize,
}

impl TreeBuilder<'_> {
    pub fn build(&self, rng: &mut ChaCha8Rng) -> DecisionTree {
        let samples: Vec<usize> = (0..self.x.n_rows()).filter(|&i| self.count[i] > 0).collect();
        let mut nodes = Vec::new();
        let mut features: Vec<usize> = (0..self.x.n_cols()).collect();
        self.grow(samples, &mut nodes, &mut features, rng);
        DecisionTree { nodes }
    }

    fn class_mass(&self, samples: &[usize]) -> Vec<f64> {
        let mut mass = vec![0.0; self.n_classes];
        for &i in samples {
            mass[self.y[i]] += self.weight[i];
        }
        mass
    }

    fn grow(&self, samples: Vec<usize>, nodes: &mut Vec<Node>, features: &mut [usize], rng: &mut ChaCha8Rng) -> usize {
        let id = nodes.len();
        let mass = self.class_mass(&samples);
        let total: f64 = mass.iter().sum();
        let n_samples: usize = samples.iter().map(|&i| self.count[i] as usize).sum();
        let pure = mass.iter().filter(|&&m| m > 0.0).count() <= 1;
        let leaf = |mass: &[f64]| Node::Leaf {
            probabilities: mass.iter().map(|m| m / total).collect(),
        };
        if pure || n_samples < self.min_samples_split {
            nodes.push(leaf(&mass));
            return id;
        }
        features.shuffle(rng);
        let Some(split) = self.search(&samples, &mass, features) else {
            nodes.push(leaf(&mass));
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| self.x.get(i, split.feature) <= split.threshold);
        nodes.push(Node::Leaf {
            probabilities: Vec::new(),
        });
        let l = self.grow(left, nodes, features, rng);
        let r = self.grow(right, nodes, features, rng);
        nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
            impurity_decrease: split.impurity_decrease,
        };
        id
    }

    /// Visits features in the given order until `max_features` non-constant
    /// ones have been examined and a valid split exists.
    fn search(&self, samples: &[usize], mass: &[f64], order: &[usize]) -> Option<SplitCandidate> {
        let mut best: Option<SplitCandidate> = None;
        let mut visited = 0;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(samples.len());
        for &f in order {
            if visited >= self.max_features && best.is_some() {
                break;
            }
            sorted.clear();
            sorted.extend(samples.iter().map(|&i| (self.x.get(i, f), i)));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            if sorted[0].0 == sorted[sorted.len() - 1].0 {
                continue;
            }
            visited += 1;
            if let Some(c) = best_split_on_sorted(&sorted, f, self.y, self.weight, mass) {
                if best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
        }
        best
    }
}

/// Scans every threshold between distinct consecutive values of one feature.
fn best_split_on_sorted(
    sorted: &[(f64, usize)],
    feature: usize,
    y: &[usize],
    weight: &[f64],
    mass: &[f64],
) -> Option<SplitCandidate> {
    let total: f64 = mass.iter().sum();
    let parent = gini(mass, total);
    let mut left = vec![0.0; mass.len()];
    let mut right = mass.to_vec();
    let mut best: Option<SplitCandidate> = None;
    for k in 0..sorted.len() - 1 {
        let (v, i) = sorted[k];
        left[y[i]] += weight[i];
        right[y[i]] -= weight[i];
        let next = sorted[k + 1].0;
        if next <= v {
            continue;
        }
        let wl: f64 = left.iter().sum();
        let wr = total - wl;
        let (gl, gr) = (gini(&left, wl), gini(&right, wr));
        let mut threshold = 0.5 * (v + next);
        if threshold >= next {
            threshold = v;
        }
        let c = SplitCandidate {
            feature,
            threshold,
            impurity_decrease: total * parent - wl * gl - wr * gr,
            weight: total,
            parent_impurity: parent,
            left_impurity: gl,
            right_impurity: gr,
            left_weight: wl,
        };
        if best.as_ref().is_none_or(|b| c.beats(b)) {
            best = Some(c);
        }
    }
    best
}

/// Exhaustive split search at the root over all features with explicit
/// per-row weights. Exposed so weighting schemes can be compared directly.
pub fn root_split(x: &Matrix, y: &[usize], n_classes: usize, weight: &[f64]) -> Option<SplitCandidate> {
    let samples: Vec<usize> = (0..x.n_rows()).collect();
    let mut mass = vec![0.0; n_classes];
    for &i in &samples {
        mass[y[i]] += weight[i];
    }
    let mut best: Option<SplitCandidate> = None;
    for f in 0..x.n_cols() {
        let mut sorted: Vec<(f64, usize)> = samples.iter().map(|&i| (x.get(i, f), i)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(c) = best_split_on_sorted(&sorted, f, y, weight, &mass) {
            if best.as_ref().is_none_or(|b| c.beats(b)) {
                best = Some(c);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[5.0, 0.0], 5.0), 0.0);
        assert!((gini(&[1.0, 1.0], 2.0) - 0.5).abs() < 1e-15);
        assert_eq!(gini(&[0.0, 0.0], 0.0), 0.0);
    }

    #[test]
    fn root_split_finds_separating_threshold() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0], vec![4.0, 5.0]]).unwrap();
        let y = [0, 0, 1, 1];
        let s = root_split(&x, &y, 2, &[1.0; 4]).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 2.5);
        assert!((s.impurity_decrease - 2.0).abs() < 1e-12);
        assert_eq!((s.left_impurity, s.right_impurity), (0.0, 0.0));
    }

    #[test]
    fn constant_feature_has_no_split() {
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        assert!(root_split(&x, &[0, 1, 0], 2, &[1.0; 3]).is_none());
    }
}
