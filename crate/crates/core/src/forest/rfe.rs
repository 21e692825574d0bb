use serde::{Deserialize, Serialize};

use super::{fit, ForestParams, Matrix};
use crate::error::{Error, Result};
use crate::seed;

/// Order in which features were eliminated, first eliminated first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeRanking {
    pub elimination_order: Vec<usize>,
    /// Averaged importances of the remaining features at each step, indexed
    /// by original feature index (eliminated features carry `None`).
    pub step_importances: Vec<Vec<Option<f64>>>,
}

impl RfeRanking {
    /// The `k` most important features, most important first.
    pub fn top(&self, k: usize) -> Vec<usize> {
        self.elimination_order.iter().rev().take(k).copied().collect()
    }

    /// Position 1 is the most important feature.
    pub fn rank_of(&self, feature: usize) -> Option<usize> {
        let p = self.elimination_order.len();
        self.elimination_order.iter().position(|&f| f == feature).map(|i| p - i)
    }
}

/// Recursive feature elimination over several training sets that share a
/// feature layout. At each step a forest is fit on every set, importances are
/// averaged across the sets and the single least important feature is
/// dropped; ties go to the lowest feature index.
pub fn rfe_rank(folds: &[(Matrix, Vec<usize>)], params: &ForestParams, seed: u64) -> Result<RfeRanking> {
    let Some((first, _)) = folds.first() else {
        return Err(Error::Data(
            "feature elimination needs at least one training set".into(),
        ));
    };
    let p = first.n_cols();
    if p < 2 {
        return Err(Error::Data(format!(
            "feature elimination needs at least 2 features, got {p}"
        )));
    }
    if folds.iter().any(|(x, _)| x.n_cols() != p) {
        return Err(Error::Data("training sets have different feature counts".into()));
    }
    let mut active: Vec<usize> = (0..p).collect();
    let mut order = Vec::with_capacity(p);
    let mut steps = Vec::with_capacity(p - 1);
    let mut step = 0u64;
    while active.len() > 1 {
        let mut mean = vec![0.0; active.len()];
        for (f, (x, y)) in folds.iter().enumerate() {
            let sub = x.select_cols(&active);
            let fold_seed = seed::derive(seed::derive(seed, step), f as u64);
            let imp = fit(&sub, y, params, fold_seed)?.feature_importance().0;
            for (m, v) in mean.iter_mut().zip(&imp) {
                *m += v / folds.len() as f64;
            }
        }
        let mut snapshot = vec![None; p];
        for (&feature, &m) in active.iter().zip(&mean) {
            snapshot[feature] = Some(m);
        }
        steps.push(snapshot);
        // `active` stays sorted, so the first minimum is the lowest index.
        let mut worst = 0;
        for i in 1..active.len() {
            if mean[i] < mean[worst] {
                worst = i;
            }
        }
        order.push(active.remove(worst));
        step += 1;
    }
    order.push(active[0]);
    Ok(RfeRanking {
        elimination_order: order,
        step_importances: steps,
    })
}

/// Elimination driven by a single training set; the reference the
/// multi-set averaging is compared against.
pub fn rfe_rank_single(x: &Matrix, y: &[usize], params: &ForestParams, seed: u64) -> Result<RfeRanking> {
    rfe_rank(&[(x.clone(), y.to_vec())], params, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn noisy(n: usize, p: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = crate::seed::rng(seed, 0);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let label = rng.random_bool(0.5);
            let mut row: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
            row[0] += if label { 0.8 } else { 0.0 };
            rows.push(row);
            y.push(usize::from(label));
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn constant_feature_goes_first() {
        let mut rng = crate::seed::rng(1, 0);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![7.0, rng.random()]).collect();
        let y: Vec<usize> = (0..60).map(|i| i % 2).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let params = ForestParams {
            n_trees: 20,
            ..Default::default()
        };
        let r = rfe_rank_single(&x, &y, &params, 0).unwrap();
        assert_eq!(r.elimination_order, vec![0, 1]);
        assert_eq!(r.top(1), vec![1]);
        assert_eq!(r.rank_of(1), Some(1));
    }

    #[test]
    fn rejects_single_feature() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(rfe_rank_single(&x, &[0, 1], &ForestParams::default(), 0).is_err());
        assert!(rfe_rank(&[], &ForestParams::default(), 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn ranking_is_a_permutation(seed in 0u64..500, p in 2usize..7) {
            let (x, y) = noisy(40, p, seed);
            let params = ForestParams { n_trees: 8, ..Default::default() };
            let r = rfe_rank(&[(x.clone(), y.clone()), (x, y)], &params, seed).unwrap();
            let mut sorted = r.elimination_order.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..p).collect::<Vec<_>>());
            prop_assert_eq!(r.step_importances.len(), p - 1);
            prop_assert_eq!(*r.elimination_order.last().unwrap(), 0);
        }
    }
}
