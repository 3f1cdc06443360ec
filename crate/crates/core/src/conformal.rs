//! Split conformal calibration.
//!
//! Scores are computed on a held-out calibration split and the interval
//! half-width is the `⌈(n+1)(1−α)⌉`-th smallest score, or `+∞` when
//! `α < 1/(n+1)`. Three targets are supported: pseudo-outcomes (the conformal
//! meta-learner), true ITEs (oracle calibration, only available on
//! simulated data) and potential outcomes (used by the weighted baselines).

use crate::dgp::{CausalDataset, SplitIndices};
use crate::metalearner::{self, CateMode, CateModel, Learner, NuisanceModel};
use crate::regress::GbmConfig;
use crate::{Error, Matrix, Result};

/// Relative slack when turning `(n+1)(1−α)` into an integer rank, so that
/// `α = 0.1, n = 99` lands on rank 90 rather than 91.
pub(crate) const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    /// `|τ̂(x) − y|`, paired with a point CATE model.
    AbsoluteResidual,
    /// `max(τ̂_l(x) − y, y − τ̂_h(x))`, paired with a quantile band.
    SignedDistanceCqr,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::AbsoluteResidual => "abs",
            ScoreKind::SignedDistanceCqr => "cqr",
        }
    }

    /// Regression mode matching this score at miscoverage `alpha`.
    pub fn cate_mode(self, alpha: f64) -> CateMode {
        match self {
            ScoreKind::AbsoluteResidual => CateMode::PointAbsResidual,
            ScoreKind::SignedDistanceCqr => CateMode::QuantilePair(alpha / 2.0, 1.0 - alpha / 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreSource {
    Oracle,
    Pseudo(Learner),
    PotentialOutcome(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformityScores {
    values: Vec<f64>,
    kind: ScoreKind,
    source: ScoreSource,
}

impl ConformityScores {
    pub fn new(values: Vec<f64>, kind: ScoreKind, source: ScoreSource) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "conformity score",
                    index: i,
                });
            }
            if kind == ScoreKind::AbsoluteResidual && v < 0.0 {
                return Err(Error::Domain(format!("absolute residual score {v} < 0 at {i}")));
            }
        }
        Ok(Self { values, kind, source })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn source(&self) -> ScoreSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedQuantile {
    /// Target coverage `1 − α`.
    pub level: f64,
    pub value: f64,
    pub n_calib: usize,
    pub kind: ScoreKind,
}

impl CalibratedQuantile {
    pub fn is_vacuous(&self) -> bool {
        self.value == f64::INFINITY
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// 1-based rank of the calibrated score among `n` sorted scores, or `None`
/// when the rank would be `n + 1` (the infinite quantile).
pub fn quantile_rank(n: usize, alpha: f64) -> Result<Option<usize>> {
    check_alpha(alpha)?;
    let m = (n + 1) as f64;
    let target = m * (1.0 - alpha) - RANK_TOL * m;
    let k = (target.ceil().max(1.0)) as usize;
    Ok((k <= n).then_some(k))
}

/// The `⌈(n+1)(1−α)⌉`-th smallest of `values`, `+∞` if that rank exceeds `n`.
pub fn quantile_value(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("no calibration scores"));
    }
    match quantile_rank(values.len(), alpha)? {
        None => Ok(f64::INFINITY),
        Some(k) => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            Ok(sorted[k - 1])
        }
    }
}

pub fn conformal_quantile(scores: &ConformityScores, alpha: f64) -> Result<CalibratedQuantile> {
    Ok(CalibratedQuantile {
        level: 1.0 - alpha,
        value: quantile_value(&scores.values, alpha)?,
        n_calib: scores.len(),
        kind: scores.kind,
    })
}

fn check_rows(x: &Matrix, targets: &[f64]) -> Result<()> {
    if x.rows() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: targets.len(),
        });
    }
    Ok(())
}

pub fn abs_residual_scores(
    cate: &CateModel,
    x: &Matrix,
    targets: &[f64],
    source: ScoreSource,
) -> Result<ConformityScores> {
    check_rows(x, targets)?;
    let pred = cate.predict(x)?;
    let values = pred.iter().zip(targets).map(|(p, t)| (p - t).abs()).collect();
    ConformityScores::new(values, ScoreKind::AbsoluteResidual, source)
}

/// CQR signed distance `max(lo − y, y − hi)`.
pub fn cqr_score(lo: f64, hi: f64, y: f64) -> f64 {
    (lo - y).max(y - hi)
}

pub fn cqr_scores(cate: &CateModel, x: &Matrix, targets: &[f64], source: ScoreSource) -> Result<ConformityScores> {
    check_rows(x, targets)?;
    cate.check_width(x.cols())?;
    let mut values = Vec::with_capacity(targets.len());
    for (row, &t) in x.iter_rows().zip(targets) {
        let (lo, hi) = cate
            .band_row(row)
            .ok_or_else(|| Error::ModeMismatch("CQR scores need a quantile-pair model".into()))?;
        values.push(cqr_score(lo, hi, t));
    }
    ConformityScores::new(values, ScoreKind::SignedDistanceCqr, source)
}

/// Scores of `kind` for `cate` against arbitrary targets.
pub fn scores(
    cate: &CateModel,
    kind: ScoreKind,
    x: &Matrix,
    targets: &[f64],
    source: ScoreSource,
) -> Result<ConformityScores> {
    match kind {
        ScoreKind::AbsoluteResidual => abs_residual_scores(cate, x, targets, source),
        ScoreKind::SignedDistanceCqr => cqr_scores(cate, x, targets, source),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ItemInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Domain(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

pub fn issue_interval(cate: &CateModel, q: &CalibratedQuantile, x_row: &[f64]) -> Result<ItemInterval> {
    cate.check_width(x_row.len())?;
    if q.is_vacuous() {
        return Ok(ItemInterval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        });
    }
    let (lo, hi) = match (q.kind, cate.band_row(x_row)) {
        (ScoreKind::AbsoluteResidual, None) => {
            let t = cate.predict_row(x_row);
            (t - q.value, t + q.value)
        }
        (ScoreKind::SignedDistanceCqr, Some((l, h))) => (l - q.value, h + q.value),
        (kind, _) => {
            return Err(Error::ModeMismatch(format!(
                "{} quantile does not match the CATE model mode",
                kind.name()
            )))
        }
    };
    // A strongly negative CQR quantile can invert the band; collapse it.
    if lo > hi {
        let mid = 0.5 * (lo + hi);
        return Ok(ItemInterval { lo: mid, hi: mid });
    }
    Ok(ItemInterval { lo, hi })
}

/// A fitted and calibrated interval predictor.
#[derive(Debug, Clone)]
pub struct ConformalFit {
    pub cate: CateModel,
    pub quantile: CalibratedQuantile,
    pub calib_scores: ConformityScores,
}

impl ConformalFit {
    pub fn interval(&self, x_row: &[f64]) -> Result<ItemInterval> {
        issue_interval(&self.cate, &self.quantile, x_row)
    }

    pub fn intervals(&self, x: &Matrix) -> Result<Vec<ItemInterval>> {
        x.iter_rows().map(|r| self.interval(r)).collect()
    }

    /// Scores of the fitted model against the true ITEs of `rows`.
    pub fn oracle_scores(&self, dataset: &CausalDataset, rows: &[usize]) -> Result<ConformityScores> {
        let ites = dataset.ites(rows).ok_or(Error::Empty("dataset has no true ITEs"))?;
        scores(
            &self.cate,
            self.quantile.kind,
            &dataset.x().select_rows(rows),
            &ites,
            ScoreSource::Oracle,
        )
    }
}

fn calibrate(
    cate: CateModel,
    kind: ScoreKind,
    x_calib: &Matrix,
    targets: &[f64],
    source: ScoreSource,
    alpha: f64,
) -> Result<ConformalFit> {
    let calib_scores = scores(&cate, kind, x_calib, targets, source)?;
    let quantile = conformal_quantile(&calib_scores, alpha)?;
    Ok(ConformalFit {
        cate,
        quantile,
        calib_scores,
    })
}

/// Conformal meta-learner with the nuisance models fitted on the `phi` split.
pub fn conformal_meta_learner(
    dataset: &CausalDataset,
    splits: &SplitIndices,
    learner: Learner,
    kind: ScoreKind,
    alpha: f64,
    cfg: &GbmConfig,
) -> Result<ConformalFit> {
    check_alpha(alpha)?;
    let nuisance = metalearner::fit_nuisance(dataset, &splits.phi, cfg)?;
    conformal_meta_learner_with_nuisance(dataset, splits, &nuisance, learner, kind, alpha, cfg)
}

/// Conformal meta-learner reusing already fitted nuisance models.
pub fn conformal_meta_learner_with_nuisance(
    dataset: &CausalDataset,
    splits: &SplitIndices,
    nuisance: &NuisanceModel,
    learner: Learner,
    kind: ScoreKind,
    alpha: f64,
    cfg: &GbmConfig,
) -> Result<ConformalFit> {
    check_alpha(alpha)?;
    if splits.calib.is_empty() {
        return Err(Error::Empty("calibration split is empty"));
    }
    let train = metalearner::pseudo_samples(dataset, &splits.train, nuisance, learner)?;
    let cate = metalearner::fit_cate(&train, kind.cate_mode(alpha), cfg)?;
    let calib = metalearner::pseudo_samples(dataset, &splits.calib, nuisance, learner)?;
    let targets: Vec<f64> = calib.iter().map(|s| s.y_tilde).collect();
    calibrate(
        cate,
        kind,
        &dataset.x().select_rows(&splits.calib),
        &targets,
        ScoreSource::Pseudo(learner),
        alpha,
    )
}

/// Regresses and calibrates directly on the true ITEs.
pub fn oracle_conformal(
    dataset: &CausalDataset,
    splits: &SplitIndices,
    kind: ScoreKind,
    alpha: f64,
    cfg: &GbmConfig,
) -> Result<ConformalFit> {
    check_alpha(alpha)?;
    if splits.calib.is_empty() || splits.train.is_empty() {
        return Err(Error::Empty("train or calibration split is empty"));
    }
    let missing = || Error::Empty("dataset has no true ITEs");
    let train_ites = dataset.ites(&splits.train).ok_or_else(missing)?;
    let cate = CateModel::fit_targets(
        &dataset.x().select_rows(&splits.train),
        &train_ites,
        kind.cate_mode(alpha),
        cfg,
    )?;
    let calib_ites = dataset.ites(&splits.calib).ok_or_else(missing)?;
    calibrate(
        cate,
        kind,
        &dataset.x().select_rows(&splits.calib),
        &calib_ites,
        ScoreSource::Oracle,
        alpha,
    )
}
