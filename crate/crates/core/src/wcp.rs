//! Weighted conformal baselines for ITE intervals.
//!
//! Potential-outcome intervals come from CQR fitted on one arm and calibrated
//! with likelihood-ratio weights under the known propensity. Three ITE
//! constructions build on them:
//!
//! * **naive**: `Ĉ₁` and `Ĉ₀` each at level `1 − α/2`, combined as
//!   `[L₁ − U₀, U₁ − L₀]`;
//! * **exact nested**: plug-in ITE intervals on the training split (observed
//!   outcome against the counterfactual arm's interval), then quantile
//!   regressions of their endpoints, conformalized on a held-back part;
//! * **inexact nested**: the same endpoint regressions issued directly.
//!
//! Nested stage 1 reweights towards the counterfactual arm's covariate law
//! (`π/(1−π)` for control-arm scores used on treated units, `(1−π)/π` the
//! other way), stage 2 is unweighted. All levels split `α` evenly between the
//! two stages.

use crate::conformal::{check_alpha, cqr_score, ItemInterval, RANK_TOL};
use crate::dgp::{CausalDataset, SplitIndices, POSITIVITY_EPS};
use crate::regress::{self, GbmConfig, QuantilePair};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedScores {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub test_weight: f64,
}

impl WeightedScores {
    pub fn new(values: Vec<f64>, weights: Vec<f64>, test_weight: f64) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                got: weights.len(),
            });
        }
        if values.is_empty() {
            return Err(Error::Empty("no calibration scores"));
        }
        for (i, &v) in values.iter().enumerate() {
            if v.is_nan() {
                return Err(Error::NonFinite {
                    what: "weighted score",
                    index: i,
                });
            }
        }
        for (i, &w) in weights.iter().chain(std::iter::once(&test_weight)).enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Domain(format!(
                    "weight {w} at {i} is not a finite nonnegative number"
                )));
            }
        }
        Ok(Self {
            values,
            weights,
            test_weight,
        })
    }
}

/// Weighted `(1−α)`-quantile with `+∞` carrying the test point's mass.
pub fn weighted_conformal_quantile(ws: &WeightedScores, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let mut order: Vec<usize> = (0..ws.values.len()).collect();
    order.sort_by(|&a, &b| ws.values[a].total_cmp(&ws.values[b]));
    let values: Vec<f64> = order.iter().map(|&i| ws.values[i]).collect();
    let weights: Vec<f64> = order.iter().map(|&i| ws.weights[i]).collect();
    sorted_quantile(&values, &weights, ws.test_weight, alpha)
}

fn sorted_quantile(values: &[f64], weights: &[f64], test_weight: f64, alpha: f64) -> Result<f64> {
    let total = weights.iter().sum::<f64>() + test_weight;
    if total <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    let target = (1.0 - alpha) * total - RANK_TOL * total;
    let mut cum = 0.0;
    for (&v, &w) in values.iter().zip(weights) {
        cum += w;
        if w > 0.0 && cum >= target {
            return Ok(v);
        }
    }
    Ok(f64::INFINITY)
}

/// Covariate law the weighted calibration targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightTarget {
    /// The marginal law of `X`.
    Population,
    /// The covariate law of the opposite arm.
    Counterfactual,
}

/// Likelihood ratio for a unit of `arm` with propensity `pi`, up to a constant.
pub fn likelihood_ratio(arm: u8, target: WeightTarget, pi: f64) -> f64 {
    match (target, arm) {
        (WeightTarget::Population, 1) => 1.0 / pi,
        (WeightTarget::Population, _) => 1.0 / (1.0 - pi),
        (WeightTarget::Counterfactual, 1) => (1.0 - pi) / pi,
        (WeightTarget::Counterfactual, _) => pi / (1.0 - pi),
    }
}

/// Weighted CQR interval for `Y(arm)`.
#[derive(Debug, Clone)]
pub struct PoInterval {
    arm: u8,
    target: WeightTarget,
    alpha: f64,
    model: QuantilePair,
    scores: Vec<f64>,
    weights: Vec<f64>,
}

impl PoInterval {
    pub fn arm(&self) -> u8 {
        self.arm
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_calib(&self) -> usize {
        self.scores.len()
    }

    /// Calibrated CQR correction at a test point with propensity `pi`.
    pub fn quantile_at(&self, pi: f64) -> Result<f64> {
        check_pi(pi)?;
        let test_weight = likelihood_ratio(self.arm, self.target, pi);
        sorted_quantile(&self.scores, &self.weights, test_weight, self.alpha)
    }

    pub fn interval(&self, x_row: &[f64], pi: f64) -> Result<ItemInterval> {
        if x_row.len() != self.model.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.model.n_features(),
                got: x_row.len(),
            });
        }
        let q = self.quantile_at(pi)?;
        let (lo, hi) = self.model.predict_row(x_row);
        interval_or_collapse(lo - q, hi + q)
    }
}

fn check_pi(pi: f64) -> Result<()> {
    if !(pi > POSITIVITY_EPS && pi < 1.0 - POSITIVITY_EPS) {
        return Err(Error::Positivity {
            row: 0,
            value: pi,
            eps: POSITIVITY_EPS,
        });
    }
    Ok(())
}

fn interval_or_collapse(lo: f64, hi: f64) -> Result<ItemInterval> {
    if lo > hi {
        let mid = 0.5 * (lo + hi);
        return ItemInterval::new(mid, mid);
    }
    ItemInterval::new(lo, hi)
}

fn arm_rows(dataset: &CausalDataset, rows: &[usize], arm: u8) -> Result<Vec<usize>> {
    let out: Vec<usize> = rows.iter().copied().filter(|&i| dataset.w()[i] == arm).collect();
    if out.is_empty() {
        return Err(Error::InsufficientArm { arm, have: 0, need: 1 });
    }
    Ok(out)
}

/// Fits the PO quantile band on the `arm` rows of `fit_rows` and calibrates on
/// the `arm` rows of `calib_rows` at miscoverage `alpha`.
pub fn fit_po_interval(
    dataset: &CausalDataset,
    fit_rows: &[usize],
    calib_rows: &[usize],
    arm: u8,
    alpha: f64,
    target: WeightTarget,
    cfg: &GbmConfig,
) -> Result<PoInterval> {
    check_alpha(alpha)?;
    let fit = arm_rows(dataset, fit_rows, arm)?;
    let calib = arm_rows(dataset, calib_rows, arm)?;
    let y_fit: Vec<f64> = fit.iter().map(|&i| dataset.y()[i]).collect();
    let model = regress::fit_quantile_pair(
        &dataset.x().select_rows(&fit),
        &y_fit,
        alpha / 2.0,
        1.0 - alpha / 2.0,
        cfg,
    )?;

    let mut pairs: Vec<(f64, f64)> = calib
        .iter()
        .map(|&i| {
            let (lo, hi) = model.predict_row(dataset.x().row(i));
            let score = cqr_score(lo, hi, dataset.y()[i]);
            (score, likelihood_ratio(arm, target, dataset.pi(i)))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (scores, weights) = pairs.into_iter().unzip();
    Ok(PoInterval {
        arm,
        target,
        alpha,
        model,
        scores,
        weights,
    })
}

/// Interval for `Y(arm)` over the population covariate law, fitted on the
/// `phi` split and calibrated on the `calib` split.
pub fn po_interval(
    dataset: &CausalDataset,
    splits: &SplitIndices,
    arm: u8,
    alpha: f64,
    cfg: &GbmConfig,
) -> Result<PoInterval> {
    fit_po_interval(
        dataset,
        &splits.phi,
        &splits.calib,
        arm,
        alpha,
        WeightTarget::Population,
        cfg,
    )
}

/// Bonferroni combination of two PO intervals.
#[derive(Debug, Clone)]
pub struct WcpNaive {
    pub c0: PoInterval,
    pub c1: PoInterval,
}

impl WcpNaive {
    pub fn interval(&self, x_row: &[f64], pi: f64) -> Result<ItemInterval> {
        let a = self.c0.interval(x_row, pi)?;
        let b = self.c1.interval(x_row, pi)?;
        ItemInterval::new(b.lo - a.hi, b.hi - a.lo)
    }
}

pub fn wcp_naive(dataset: &CausalDataset, splits: &SplitIndices, alpha: f64, cfg: &GbmConfig) -> Result<WcpNaive> {
    check_alpha(alpha)?;
    Ok(WcpNaive {
        c0: po_interval(dataset, splits, 0, alpha / 2.0, cfg)?,
        c1: po_interval(dataset, splits, 1, alpha / 2.0, cfg)?,
    })
}

/// Fraction of the training split used to fit the stage-2 regressions; the
/// rest calibrates the exact variant.
pub const STAGE2_FIT_FRACTION: f64 = 0.75;

/// Stage-1 plug-in ITE intervals on the training split.
pub fn plugin_ite_intervals(
    dataset: &CausalDataset,
    splits: &SplitIndices,
    alpha: f64,
    cfg: &GbmConfig,
) -> Result<Vec<ItemInterval>> {
    let level = alpha / 2.0;
    let c0 = fit_po_interval(
        dataset,
        &splits.phi,
        &splits.calib,
        0,
        level,
        WeightTarget::Counterfactual,
        cfg,
    )?;
    let c1 = fit_po_interval(
        dataset,
        &splits.phi,
        &splits.calib,
        1,
        level,
        WeightTarget::Counterfactual,
        cfg,
    )?;
    splits
        .train
        .iter()
        .map(|&i| {
            let (x, y, pi) = (dataset.x().row(i), dataset.y()[i], dataset.pi(i));
            let iv = if dataset.w()[i] == 1 {
                let c = c0.interval(x, pi)?;
                ItemInterval::new(y - c.hi, y - c.lo)?
            } else {
                let c = c1.interval(x, pi)?;
                ItemInterval::new(c.lo - y, c.hi - y)?
            };
            if !iv.is_finite() {
                return Err(Error::Degenerate(format!(
                    "stage-1 interval for row {i} is unbounded; calibration arm too small for alpha {alpha}"
                )));
            }
            Ok(iv)
        })
        .collect()
}

/// Both nested variants share stage 1 and the stage-2 endpoint regressions.
#[derive(Debug, Clone)]
pub struct WcpNested {
    pub lower: regress::GbmModel,
    pub upper: regress::GbmModel,
    /// Stage-2 conformal correction for the exact variant.
    pub correction: f64,
    pub n_stage2_calib: usize,
}

impl WcpNested {
    fn band(&self, x_row: &[f64]) -> Result<(f64, f64)> {
        if x_row.len() != self.lower.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.lower.n_features(),
                got: x_row.len(),
            });
        }
        Ok((self.lower.predict_row(x_row), self.upper.predict_row(x_row)))
    }

    pub fn exact_interval(&self, x_row: &[f64]) -> Result<ItemInterval> {
        let (lo, hi) = self.band(x_row)?;
        interval_or_collapse(lo - self.correction, hi + self.correction)
    }

    pub fn inexact_interval(&self, x_row: &[f64]) -> Result<ItemInterval> {
        let (lo, hi) = self.band(x_row)?;
        interval_or_collapse(lo, hi)
    }
}

pub fn wcp_nested(dataset: &CausalDataset, splits: &SplitIndices, alpha: f64, cfg: &GbmConfig) -> Result<WcpNested> {
    check_alpha(alpha)?;
    let stage1 = plugin_ite_intervals(dataset, splits, alpha, cfg)?;
    let n_fit = (splits.train.len() as f64 * STAGE2_FIT_FRACTION).floor() as usize;
    if n_fit == 0 || n_fit == splits.train.len() {
        return Err(Error::InsufficientArm {
            arm: 2,
            have: splits.train.len(),
            need: 2,
        });
    }
    let rows_fit = &splits.train[..n_fit];
    let rows_cal = &splits.train[n_fit..];
    let x_fit = dataset.x().select_rows(rows_fit);
    let lo_t: Vec<f64> = stage1[..n_fit].iter().map(|c| c.lo).collect();
    let hi_t: Vec<f64> = stage1[..n_fit].iter().map(|c| c.hi).collect();
    let q = alpha / 4.0;
    let lower = regress::fit(&x_fit, &lo_t, &cfg.with_loss(regress::Loss::Pinball(q)))?;
    let upper = regress::fit(&x_fit, &hi_t, &cfg.with_loss(regress::Loss::Pinball(1.0 - q)))?;

    let x_cal: Matrix = dataset.x().select_rows(rows_cal);
    let scores: Vec<f64> = x_cal
        .iter_rows()
        .zip(&stage1[n_fit..])
        .map(|(row, c)| (lower.predict_row(row) - c.lo).max(c.hi - upper.predict_row(row)))
        .collect();
    let correction = crate::conformal::quantile_value(&scores, alpha / 2.0)?;
    Ok(WcpNested {
        lower,
        upper,
        correction,
        n_stage2_calib: scores.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NestedVariant {
    Exact,
    Inexact,
}

/// One nested variant bound to its fitted models.
#[derive(Debug, Clone)]
pub struct NestedIssuer {
    pub nested: WcpNested,
    pub variant: NestedVariant,
}

impl NestedIssuer {
    pub fn interval(&self, x_row: &[f64]) -> Result<ItemInterval> {
        match self.variant {
            NestedVariant::Exact => self.nested.exact_interval(x_row),
            NestedVariant::Inexact => self.nested.inexact_interval(x_row),
        }
    }
}

pub fn wcp_exact_nested(
    dataset: &CausalDataset,
    splits: &SplitIndices,
    alpha: f64,
    cfg: &GbmConfig,
) -> Result<NestedIssuer> {
    Ok(NestedIssuer {
        nested: wcp_nested(dataset, splits, alpha, cfg)?,
        variant: NestedVariant::Exact,
    })
}

pub fn wcp_inexact_nested(
    dataset: &CausalDataset,
    splits: &SplitIndices,
    alpha: f64,
    cfg: &GbmConfig,
) -> Result<NestedIssuer> {
    Ok(NestedIssuer {
        nested: wcp_nested(dataset, splits, alpha, cfg)?,
        variant: NestedVariant::Inexact,
    })
}
