//! Gradient-boosted regression trees for conditional means and quantiles.
//!
//! Trees are grown level by level with an exhaustive split search over the
//! midpoints of sorted unique feature values. Squared loss fits residuals
//! with leaf means. Pinball loss fits the sign pattern of the negative
//! gradient `q − 1{y ≤ f}` and then sets every leaf to the leaf-local
//! `q`-quantile of the residuals, which is the exact per-leaf minimiser.
//!
//! Fitting is deterministic: there is no subsampling, and gain ties are
//! broken by the lowest feature index, then the lowest threshold.

mod dump;
mod tree;

use crate::{Error, Matrix, Result};
pub use tree::{Tree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    SquaredError,
    /// Pinball (check) loss for the `q`-quantile, `0 < q < 1`.
    Pinball(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbmConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub loss: Loss,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            loss: Loss::SquaredError,
        }
    }
}

impl GbmConfig {
    pub fn with_loss(&self, loss: Loss) -> Self {
        Self { loss, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::InvalidConfig("max_depth must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig("min_samples_leaf must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if let Loss::Pinball(q) = self.loss {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidConfig(format!("pinball level {q} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// A fitted boosted ensemble.
///
/// `prediction(x) = base_prediction + learning_rate · Σ tree(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmModel {
    trees: Vec<Tree>,
    learning_rate: f64,
    base_prediction: f64,
    loss: Loss,
    n_features: usize,
    train_loss: Vec<f64>,
}

impl GbmModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn base_prediction(&self) -> f64 {
        self.base_prediction
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Mean training loss before the first tree and after every stage.
    /// Empty for models restored from a dump.
    pub fn train_loss(&self) -> &[f64] {
        &self.train_loss
    }

    /// Prediction for one row. The row must have `n_features` entries.
    pub fn predict_row(&self, x_row: &[f64]) -> f64 {
        debug_assert_eq!(x_row.len(), self.n_features);
        let sum: f64 = self.trees.iter().map(|t| t.predict(x_row)).sum();
        self.base_prediction + self.learning_rate * sum
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_width(x.cols())?;
        Ok(x.iter_rows().map(|row| self.predict_row(row)).collect())
    }

    pub(crate) fn check_width(&self, cols: usize) -> Result<()> {
        if cols != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: cols,
            });
        }
        Ok(())
    }
}

/// Fits a boosted ensemble of `cfg.n_trees` depth-limited trees.
pub fn fit(x: &Matrix, targets: &[f64], cfg: &GbmConfig) -> Result<GbmModel> {
    cfg.validate()?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::Empty("no training rows"));
    }
    if targets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: targets.len(),
        });
    }
    if let Some(index) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite {
            what: "regression target",
            index,
        });
    }
    if let Some(index) = x.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "covariates",
            index,
        });
    }

    let base_prediction = match cfg.loss {
        Loss::SquaredError => targets.iter().sum::<f64>() / n as f64,
        Loss::Pinball(q) => lower_quantile(&mut targets.to_vec(), q),
    };
    let mut pred = vec![base_prediction; n];
    let mut train_loss = vec![mean_loss(cfg.loss, targets, &pred)];
    let presorted = tree::Presorted::new(x);
    let mut grad = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.n_trees);

    for _ in 0..cfg.n_trees {
        match cfg.loss {
            Loss::SquaredError => {
                for i in 0..n {
                    grad[i] = targets[i] - pred[i];
                }
            }
            Loss::Pinball(q) => {
                for i in 0..n {
                    grad[i] = q - if targets[i] <= pred[i] { 1.0 } else { 0.0 };
                }
            }
        }
        let (mut tree, leaf_of_row) = tree::grow(x, &presorted, &grad, cfg.max_depth, cfg.min_samples_leaf);

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes().len()];
        for (i, &leaf) in leaf_of_row.iter().enumerate() {
            members[leaf].push(i);
        }
        for (node, rows) in members.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let value = match cfg.loss {
                Loss::SquaredError => rows.iter().map(|&i| grad[i]).sum::<f64>() / rows.len() as f64,
                Loss::Pinball(q) => {
                    let mut residuals: Vec<f64> = rows.iter().map(|&i| targets[i] - pred[i]).collect();
                    lower_quantile(&mut residuals, q)
                }
            };
            tree.set_leaf(node, value);
        }
        for (i, &leaf) in leaf_of_row.iter().enumerate() {
            pred[i] += cfg.learning_rate * tree.leaf_value(leaf);
        }
        train_loss.push(mean_loss(cfg.loss, targets, &pred));
        trees.push(tree);
    }

    Ok(GbmModel {
        trees,
        learning_rate: cfg.learning_rate,
        base_prediction,
        loss: cfg.loss,
        n_features: x.cols(),
        train_loss,
    })
}

/// Lower empirical `q`-quantile: the `⌈q·n⌉`-th smallest value.
pub(crate) fn lower_quantile(values: &mut [f64], q: f64) -> f64 {
    let n = values.len();
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let k = rank.min(n) - 1;
    let (_, v, _) = values.select_nth_unstable_by(k, f64::total_cmp);
    *v
}

/// Mean pinball loss `ρ_q(y − f)`.
pub fn pinball_loss(q: f64, targets: &[f64], pred: &[f64]) -> f64 {
    let total: f64 = targets
        .iter()
        .zip(pred)
        .map(|(&y, &f)| {
            let r = y - f;
            if r >= 0.0 {
                q * r
            } else {
                (q - 1.0) * r
            }
        })
        .sum();
    total / targets.len() as f64
}

fn mean_loss(loss: Loss, targets: &[f64], pred: &[f64]) -> f64 {
    match loss {
        Loss::SquaredError => {
            targets.iter().zip(pred).map(|(y, f)| (y - f).powi(2)).sum::<f64>() / targets.len() as f64
        }
        Loss::Pinball(q) => pinball_loss(q, targets, pred),
    }
}

/// Lower and upper conditional-quantile models.
///
/// Predictions are repaired for crossing: where `lo > hi`, both are replaced
/// by their midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantilePair {
    pub lo: GbmModel,
    pub hi: GbmModel,
}

impl QuantilePair {
    pub fn predict_row(&self, x_row: &[f64]) -> (f64, f64) {
        let lo = self.lo.predict_row(x_row);
        let hi = self.hi.predict_row(x_row);
        if lo > hi {
            let mid = 0.5 * (lo + hi);
            (mid, mid)
        } else {
            (lo, hi)
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<(f64, f64)>> {
        self.lo.check_width(x.cols())?;
        Ok(x.iter_rows().map(|row| self.predict_row(row)).collect())
    }

    pub fn n_features(&self) -> usize {
        self.lo.n_features
    }
}

/// Fits pinball-loss models at `q_lo < q_hi` sharing the other settings of
/// `cfg` (its loss field is ignored).
pub fn fit_quantile_pair(x: &Matrix, targets: &[f64], q_lo: f64, q_hi: f64, cfg: &GbmConfig) -> Result<QuantilePair> {
    if !(0.0 < q_lo && q_lo < q_hi && q_hi < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "quantile levels must satisfy 0 < q_lo < q_hi < 1, got ({q_lo}, {q_hi})"
        )));
    }
    Ok(QuantilePair {
        lo: fit(x, targets, &cfg.with_loss(Loss::Pinball(q_lo)))?,
        hi: fit(x, targets, &cfg.with_loss(Loss::Pinball(q_hi)))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn grid_1d(n: usize) -> Matrix {
        let rows: Vec<[f64; 1]> = (0..n).map(|i| [i as f64 / (n - 1) as f64]).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    fn random_x(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.random::<f64>()).collect();
        Matrix::new(data, n, d).unwrap()
    }

    #[test]
    fn constant_targets_are_reproduced() {
        let x = random_x(200, 3, 1);
        let targets = vec![2.5; 200];
        for loss in [Loss::SquaredError, Loss::Pinball(0.3)] {
            let model = fit(&x, &targets, &GbmConfig::default().with_loss(loss)).unwrap();
            for p in model.predict(&x).unwrap() {
                assert!((p - 2.5).abs() < 1e-12, "{loss:?}: {p}");
            }
            assert!(*model.train_loss().last().unwrap() < 1e-20);
        }
    }

    #[test]
    fn zero_trees_predict_base_value() {
        let x = random_x(5, 2, 2);
        let targets = [5.0, 1.0, 4.0, 2.0, 3.0];
        let cfg = GbmConfig {
            n_trees: 0,
            ..GbmConfig::default()
        };
        let mean = fit(&x, &targets, &cfg).unwrap();
        assert_eq!(mean.predict_row(x.row(0)), 3.0);
        let median = fit(&x, &targets, &cfg.with_loss(Loss::Pinball(0.5))).unwrap();
        assert_eq!(median.predict_row(x.row(0)), 3.0);
        let q80 = fit(&x, &targets, &cfg.with_loss(Loss::Pinball(0.8))).unwrap();
        assert_eq!(q80.predict_row(x.row(0)), 4.0);
    }

    #[test]
    fn identity_on_grid() {
        let x = grid_1d(1000);
        let targets: Vec<f64> = x.iter_rows().map(|r| r[0]).collect();
        let model = fit(&x, &targets, &GbmConfig::default()).unwrap();
        let pred = model.predict(&x).unwrap();
        let rmse = (pred.iter().zip(&targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 1000.0).sqrt();
        assert!(rmse < 0.05, "rmse {rmse}");
    }

    #[test]
    fn squared_loss_is_nonincreasing() {
        let x = random_x(400, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let targets: Vec<f64> = x
            .iter_rows()
            .map(|r| (6.0 * r[0]).sin() + r[1] * r[2] + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for loss in [Loss::SquaredError, Loss::Pinball(0.2), Loss::Pinball(0.9)] {
            let model = fit(&x, &targets, &GbmConfig::default().with_loss(loss)).unwrap();
            for w in model.train_loss().windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{loss:?}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn prediction_is_row_wise() {
        let x = random_x(300, 2, 5);
        let targets: Vec<f64> = x.iter_rows().map(|r| r[0] - 2.0 * r[1]).collect();
        let model = fit(&x, &targets, &GbmConfig::default()).unwrap();
        let batch = model.predict(&x).unwrap();
        for i in [0, 17, 299] {
            assert_eq!(model.predict_row(x.row(i)), batch[i]);
        }
        let perm: Vec<usize> = (0..300).rev().collect();
        let permuted = model.predict(&x.select_rows(&perm)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(permuted[k], batch[i]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let x = random_x(50, 2, 6);
        let model = fit(&x, &vec![1.0; 50], &GbmConfig::default()).unwrap();
        assert!(matches!(
            model.predict(&random_x(3, 3, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(fit(&x, &vec![1.0; 49], &GbmConfig::default()).is_err());
    }

    #[test]
    fn bad_inputs_rejected() {
        let x = random_x(10, 1, 7);
        let mut t = vec![0.0; 10];
        t[3] = f64::NAN;
        assert!(matches!(
            fit(&x, &t, &GbmConfig::default()),
            Err(Error::NonFinite { .. })
        ));
        let empty = Matrix::new(vec![], 0, 1).unwrap();
        assert!(matches!(fit(&empty, &[], &GbmConfig::default()), Err(Error::Empty(_))));
        let bad = GbmConfig::default().with_loss(Loss::Pinball(1.0));
        assert!(fit(&x, &[0.0; 10], &bad).is_err());
    }

    #[test]
    fn fitting_is_deterministic() {
        let x = random_x(500, 4, 8);
        let targets: Vec<f64> = x.iter_rows().map(|r| r[0] * r[3] + r[2]).collect();
        let a = fit(&x, &targets, &GbmConfig::default()).unwrap();
        let b = fit(&x, &targets, &GbmConfig::default()).unwrap();
        assert_eq!(a, b);
        let probe = random_x(100, 4, 9);
        assert_eq!(a.predict(&probe).unwrap(), b.predict(&probe).unwrap());
    }

    #[test]
    fn pinball_training_coverage() {
        let x = random_x(2000, 2, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let targets: Vec<f64> = x
            .iter_rows()
            .map(|r| r[0] + (0.2 + r[1]) * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for q in [0.05, 0.25, 0.5, 0.9] {
            let model = fit(&x, &targets, &GbmConfig::default().with_loss(Loss::Pinball(q))).unwrap();
            let pred = model.predict(&x).unwrap();
            let below = targets.iter().zip(&pred).filter(|(y, f)| y <= f).count() as f64 / 2000.0;
            assert!((below - q).abs() <= 0.05, "q = {q}: {below}");
        }
    }

    #[test]
    fn quantile_pair_on_gaussian_noise() {
        let n = 5000;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let targets: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let probe = grid_1d(101);

        // A constant covariate carries no information: no split exists.
        let flat = Matrix::new(vec![0.5; n], n, 1).unwrap();
        let pair = fit_quantile_pair(&flat, &targets, 0.05, 0.95, &GbmConfig::default()).unwrap();
        for (lo, hi) in pair.predict(&probe).unwrap() {
            assert!((lo + 1.645).abs() < 0.15 && (hi - 1.645).abs() < 0.15, "({lo}, {hi})");
        }

        // An independent random covariate lets the trees chase noise pointwise,
        // but the average over the probe grid stays on the Gaussian quantiles.
        let x = random_x(n, 1, 12);
        let pair = fit_quantile_pair(&x, &targets, 0.05, 0.95, &GbmConfig::default()).unwrap();
        let preds = pair.predict(&probe).unwrap();
        let mean_lo = preds.iter().map(|p| p.0).sum::<f64>() / preds.len() as f64;
        let mean_hi = preds.iter().map(|p| p.1).sum::<f64>() / preds.len() as f64;
        assert!(
            (mean_lo + 1.645).abs() < 0.15 && (mean_hi - 1.645).abs() < 0.15,
            "({mean_lo}, {mean_hi})"
        );
    }

    #[test]
    fn quantile_pair_never_crosses() {
        let x = random_x(60, 1, 14);
        let targets = vec![1.0; 60];
        let pair = fit_quantile_pair(&x, &targets, 0.5 - 1e-6, 0.5, &GbmConfig::default()).unwrap();
        for (lo, hi) in pair.predict(&grid_1d(100)).unwrap() {
            assert!(lo <= hi);
            assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        }
        // Deliberately inverted levels through separate fits still get repaired.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let noisy: Vec<f64> = (0..60).map(|_| rng.sample(StandardNormal)).collect();
        let crossed = QuantilePair {
            lo: fit(&x, &noisy, &GbmConfig::default().with_loss(Loss::Pinball(0.9))).unwrap(),
            hi: fit(&x, &noisy, &GbmConfig::default().with_loss(Loss::Pinball(0.1))).unwrap(),
        };
        for (lo, hi) in crossed.predict(&grid_1d(100)).unwrap() {
            assert!(lo <= hi);
        }
        assert!(fit_quantile_pair(&x, &targets, 0.6, 0.4, &GbmConfig::default()).is_err());
    }

    #[test]
    fn lower_quantile_ranks() {
        let mut v = vec![3.0, 1.0, 2.0, 4.0];
        assert_eq!(lower_quantile(&mut v, 0.5), 2.0);
        assert_eq!(lower_quantile(&mut v, 0.51), 3.0);
        assert_eq!(lower_quantile(&mut v, 0.01), 1.0);
        assert_eq!(lower_quantile(&mut v, 0.99), 4.0);
    }
}
