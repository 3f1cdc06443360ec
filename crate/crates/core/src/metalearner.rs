//! Pseudo-outcome meta-learners.
//!
//! Stage 1 fits the outcome regressions `μ̂₀`, `μ̂₁` on the nuisance split
//! (the propensity is known and never estimated). Stage 2 maps every
//! observed unit `(x, w, y)` to a pseudo-outcome `Ỹ` whose regression on `x`
//! targets the CATE:
//!
//! | learner | pseudo-outcome |
//! |---------|----------------|
//! | IPW     | `(w − π)/(π(1 − π)) · y` |
//! | X       | `w·(y − μ̂₀(x)) + (1 − w)·(μ̂₁(x) − y)` |
//! | DR      | `(w − π)/(π(1 − π)) · (y − μ̂_w(x)) + μ̂₁(x) − μ̂₀(x)` |
//!
//! The X-learner here is the single pooled transform, not the two-model
//! weighted variant.

use std::fmt;

use crate::dgp::{CausalDataset, POSITIVITY_EPS};
use crate::regress::{self, GbmConfig, GbmModel, Loss, QuantilePair};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Learner {
    Ipw,
    X,
    Dr,
}

impl Learner {
    pub const ALL: [Learner; 3] = [Learner::Dr, Learner::Ipw, Learner::X];

    pub fn name(self) -> &'static str {
        match self {
            Learner::Ipw => "IPW",
            Learner::X => "X",
            Learner::Dr => "DR",
        }
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome regressions per arm. The propensity lives on the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceModel {
    pub mu0: GbmModel,
    pub mu1: GbmModel,
}

/// Fits `μ̂₀` on the control rows and `μ̂₁` on the treated rows of
/// `phi_indices`. Each arm needs at least `min_samples_leaf` rows.
pub fn fit_nuisance(dataset: &CausalDataset, phi_indices: &[usize], cfg: &GbmConfig) -> Result<NuisanceModel> {
    let cfg = cfg.with_loss(Loss::SquaredError);
    let fit_arm = |arm: u8| -> Result<GbmModel> {
        let rows: Vec<usize> = phi_indices.iter().copied().filter(|&i| dataset.w()[i] == arm).collect();
        if rows.len() < cfg.min_samples_leaf.max(1) {
            return Err(Error::InsufficientArm {
                arm,
                have: rows.len(),
                need: cfg.min_samples_leaf.max(1),
            });
        }
        let targets: Vec<f64> = rows.iter().map(|&i| dataset.y()[i]).collect();
        regress::fit(&dataset.x().select_rows(&rows), &targets, &cfg)
    };
    Ok(NuisanceModel {
        mu0: fit_arm(0)?,
        mu1: fit_arm(1)?,
    })
}

/// One observed unit together with its known propensity.
#[derive(Debug, Clone, Copy)]
pub struct Unit<'a> {
    pub x: &'a [f64],
    pub w: u8,
    pub y: f64,
    pub pi: f64,
}

impl<'a> Unit<'a> {
    pub fn from_dataset(dataset: &'a CausalDataset, i: usize) -> Self {
        Self {
            x: dataset.x().row(i),
            w: dataset.w()[i],
            y: dataset.y()[i],
            pi: dataset.pi(i),
        }
    }
}

/// Pseudo-outcome of one unit under `learner`.
pub fn pseudo_outcome(unit: Unit<'_>, nuisance: &NuisanceModel, learner: Learner) -> Result<f64> {
    let Unit { x, w, y, pi } = unit;
    if !(pi > POSITIVITY_EPS && pi < 1.0 - POSITIVITY_EPS) {
        return Err(Error::Positivity {
            row: 0,
            value: pi,
            eps: POSITIVITY_EPS,
        });
    }
    let w = f64::from(w);
    let ipw_weight = (w - pi) / (pi * (1.0 - pi));
    Ok(match learner {
        Learner::Ipw => ipw_weight * y,
        Learner::X => {
            let (mu0, mu1) = (nuisance.mu0.predict_row(x), nuisance.mu1.predict_row(x));
            w * (y - mu0) + (1.0 - w) * (mu1 - y)
        }
        Learner::Dr => {
            let (mu0, mu1) = (nuisance.mu0.predict_row(x), nuisance.mu1.predict_row(x));
            let mu_w = if unit.w == 1 { mu1 } else { mu0 };
            ipw_weight * (y - mu_w) + mu1 - mu0
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSample {
    pub x_row: Vec<f64>,
    pub y_tilde: f64,
    pub learner: Learner,
}

/// Pseudo-outcomes for the listed dataset rows, in order.
pub fn pseudo_samples(
    dataset: &CausalDataset,
    indices: &[usize],
    nuisance: &NuisanceModel,
    learner: Learner,
) -> Result<Vec<PseudoSample>> {
    indices
        .iter()
        .map(|&i| {
            let y_tilde = pseudo_outcome(Unit::from_dataset(dataset, i), nuisance, learner).map_err(|e| match e {
                Error::Positivity { value, eps, .. } => Error::Positivity { row: i, value, eps },
                other => other,
            })?;
            if !y_tilde.is_finite() {
                return Err(Error::NonFinite {
                    what: "pseudo-outcome",
                    index: i,
                });
            }
            Ok(PseudoSample {
                x_row: dataset.x().row(i).to_vec(),
                y_tilde,
                learner,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CateMode {
    /// Mean regression, calibrated with absolute residuals.
    PointAbsResidual,
    /// Pinball regressions at `(q_lo, q_hi)`, calibrated with the CQR score.
    QuantilePair(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CateFit {
    Point(GbmModel),
    Quantile(QuantilePair),
}

/// Second-stage CATE regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct CateModel {
    pub fit: CateFit,
}

impl CateModel {
    /// Regresses arbitrary targets on `x`; used for pseudo-outcomes and for
    /// oracle regression on true ITEs.
    pub fn fit_targets(x: &Matrix, targets: &[f64], mode: CateMode, cfg: &GbmConfig) -> Result<Self> {
        let fit = match mode {
            CateMode::PointAbsResidual => CateFit::Point(regress::fit(x, targets, &cfg.with_loss(Loss::SquaredError))?),
            CateMode::QuantilePair(lo, hi) => CateFit::Quantile(regress::fit_quantile_pair(x, targets, lo, hi, cfg)?),
        };
        Ok(Self { fit })
    }

    /// Point CATE estimate; the midpoint of the band in quantile mode.
    pub fn predict_row(&self, x_row: &[f64]) -> f64 {
        match &self.fit {
            CateFit::Point(m) => m.predict_row(x_row),
            CateFit::Quantile(pair) => {
                let (lo, hi) = pair.predict_row(x_row);
                0.5 * (lo + hi)
            }
        }
    }

    /// Quantile band, when fitted in quantile mode.
    pub fn band_row(&self, x_row: &[f64]) -> Option<(f64, f64)> {
        match &self.fit {
            CateFit::Point(_) => None,
            CateFit::Quantile(pair) => Some(pair.predict_row(x_row)),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_width(x.cols())?;
        Ok(x.iter_rows().map(|r| self.predict_row(r)).collect())
    }

    pub fn n_features(&self) -> usize {
        match &self.fit {
            CateFit::Point(m) => m.n_features(),
            CateFit::Quantile(p) => p.n_features(),
        }
    }

    pub(crate) fn check_width(&self, cols: usize) -> Result<()> {
        if cols != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: cols,
            });
        }
        Ok(())
    }
}

/// Fits the CATE model on pseudo samples that all come from one learner.
pub fn fit_cate(samples: &[PseudoSample], mode: CateMode, cfg: &GbmConfig) -> Result<CateModel> {
    let first = samples.first().ok_or(Error::Empty("no pseudo samples"))?;
    if let Some(other) = samples.iter().find(|s| s.learner != first.learner) {
        return Err(Error::MixedLearners {
            first: first.learner.to_string(),
            second: other.learner.to_string(),
        });
    }
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.x_row.as_slice()).collect();
    let x = Matrix::from_rows(&rows)?;
    let targets: Vec<f64> = samples.iter().map(|s| s.y_tilde).collect();
    CateModel::fit_targets(&x, &targets, mode, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{generate_synthetic, Propensity, Setup, SynthConfig};
    use crate::regress::GbmConfig;

    fn constant_model(value: f64, d: usize) -> GbmModel {
        let x = Matrix::new(vec![0.0; 10 * d], 10, d).unwrap();
        let cfg = GbmConfig {
            n_trees: 0,
            ..GbmConfig::default()
        };
        regress::fit(&x, &[value; 10], &cfg).unwrap()
    }

    fn nuisance(mu0: f64, mu1: f64) -> NuisanceModel {
        NuisanceModel {
            mu0: constant_model(mu0, 1),
            mu1: constant_model(mu1, 1),
        }
    }

    fn unit(w: u8, y: f64, pi: f64) -> Unit<'static> {
        Unit { x: &[0.3], w, y, pi }
    }

    #[test]
    fn pseudo_outcome_formulas() {
        let nu = nuisance(0.0, 3.0);
        assert!((pseudo_outcome(unit(1, 4.0, 0.25), &nu, Learner::Ipw).unwrap() - 16.0).abs() < 1e-12);
        assert_eq!(pseudo_outcome(unit(0, 1.0, 0.4), &nu, Learner::X).unwrap(), 2.0);
        let nu = nuisance(0.0, 1.0);
        assert_eq!(pseudo_outcome(unit(1, 2.0, 0.5), &nu, Learner::Dr).unwrap(), 3.0);
    }

    #[test]
    fn positivity_guard() {
        let nu = nuisance(0.0, 0.0);
        assert!(pseudo_outcome(unit(1, 1.0, 0.0), &nu, Learner::Ipw).is_err());
        assert!(pseudo_outcome(unit(1, 1.0, 1.0 - 1e-7), &nu, Learner::Dr).is_err());
    }

    /// Brute-force expectation over W ∈ {0, 1} with the outcome replaced by
    /// its conditional mean.
    fn expected_pseudo(learner: Learner, pi: f64, m0: f64, m1: f64, nu: &NuisanceModel) -> f64 {
        pi * pseudo_outcome(unit(1, m1, pi), nu, learner).unwrap()
            + (1.0 - pi) * pseudo_outcome(unit(0, m0, pi), nu, learner).unwrap()
    }

    #[test]
    fn ipw_and_dr_are_unbiased_for_any_nuisance() {
        for &(pi, m0, m1, a, b) in &[
            (0.3, 1.0, 2.5, 0.0, 0.0),
            (0.7, -1.0, 4.0, 3.0, -2.0),
            (0.05, 0.2, 0.1, 10.0, 7.0),
            (0.5, 0.0, 0.0, 1.0, 1.0),
        ] {
            let nu = nuisance(a, b);
            for learner in [Learner::Ipw, Learner::Dr] {
                let e = expected_pseudo(learner, pi, m0, m1, &nu);
                assert!((e - (m1 - m0)).abs() < 1e-10, "{learner} pi={pi}: {e}");
            }
        }
    }

    #[test]
    fn x_learner_biased_under_misspecified_nuisance() {
        // μ̂₀ = μ̂₁ = 0 with Y(0) > 0 and Y(1) < 0.
        let nu = nuisance(0.0, 0.0);
        let (pi, m0, m1) = (0.3, 2.0, -1.0);
        let e = expected_pseudo(Learner::X, pi, m0, m1, &nu);
        assert!((e - (m1 - m0)).abs() > 0.1, "{e}");
    }

    #[test]
    fn nuisance_recovers_arm_constants() {
        let x = Matrix::from_rows(&(0..40).map(|i| [i as f64 / 40.0]).collect::<Vec<_>>()).unwrap();
        let w: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = w.iter().map(|&v| f64::from(v)).collect();
        let ds = CausalDataset::new(x, w, y, None, None, Propensity::Constant(0.5)).unwrap();
        let phi: Vec<usize> = (0..40).collect();
        let nu = fit_nuisance(&ds, &phi, &GbmConfig::default()).unwrap();
        for i in 0..40 {
            assert!((nu.mu1.predict_row(ds.x().row(i)) - 1.0).abs() < 1e-6);
            assert!(nu.mu0.predict_row(ds.x().row(i)).abs() < 1e-6);
        }
        assert_eq!(nu, fit_nuisance(&ds, &phi, &GbmConfig::default()).unwrap());

        let controls: Vec<usize> = (0..40).step_by(2).collect();
        match fit_nuisance(&ds, &controls, &GbmConfig::default()) {
            Err(Error::InsufficientArm { arm: 1, have: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cate_on_constant_pseudo_outcomes() {
        let samples: Vec<PseudoSample> = (0..30)
            .map(|i| PseudoSample {
                x_row: vec![i as f64, (i * 7 % 5) as f64],
                y_tilde: 1.25,
                learner: Learner::Dr,
            })
            .collect();
        let cate = fit_cate(&samples, CateMode::PointAbsResidual, &GbmConfig::default()).unwrap();
        for s in &samples {
            assert!((cate.predict_row(&s.x_row) - 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_learners_rejected() {
        let mk = |learner| PseudoSample {
            x_row: vec![0.0],
            y_tilde: 0.0,
            learner,
        };
        let samples = vec![mk(Learner::Dr), mk(Learner::X)];
        assert!(matches!(
            fit_cate(&samples, CateMode::PointAbsResidual, &GbmConfig::default()),
            Err(Error::MixedLearners { .. })
        ));
        assert!(fit_cate(&[], CateMode::PointAbsResidual, &GbmConfig::default()).is_err());
    }

    #[test]
    fn quantile_band_is_ordered() {
        let ds = generate_synthetic(&SynthConfig::new(Setup::B, 800, 3, 21)).unwrap();
        let idx: Vec<usize> = (0..400).collect();
        let nu = fit_nuisance(&ds, &idx, &GbmConfig::default()).unwrap();
        let train: Vec<usize> = (400..800).collect();
        let samples = pseudo_samples(&ds, &train, &nu, Learner::Dr).unwrap();
        let cate = fit_cate(&samples, CateMode::QuantilePair(0.05, 0.95), &GbmConfig::default()).unwrap();
        for k in 0..100 {
            let t = k as f64 / 99.0;
            let (lo, hi) = cate.band_row(&[t, 1.0 - t, 0.5]).unwrap();
            assert!(lo <= hi);
        }
    }

    #[test]
    fn pseudo_samples_are_pointwise() {
        let ds = generate_synthetic(&SynthConfig::new(Setup::B, 300, 2, 22)).unwrap();
        let phi: Vec<usize> = (0..150).collect();
        let nu = fit_nuisance(&ds, &phi, &GbmConfig::default()).unwrap();
        let rows: Vec<usize> = (150..300).collect();
        let reversed: Vec<usize> = rows.iter().rev().copied().collect();
        for learner in Learner::ALL {
            let a = pseudo_samples(&ds, &rows, &nu, learner).unwrap();
            let mut b = pseudo_samples(&ds, &reversed, &nu, learner).unwrap();
            b.reverse();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn oracle_regression_rmse_on_setup_b() {
        let ds = generate_synthetic(&SynthConfig::new(Setup::B, 5000, 5, 23)).unwrap();
        let train: Vec<usize> = (0..4000).collect();
        let test: Vec<usize> = (4000..5000).collect();
        let ites = ds.ites(&train).unwrap();
        let cate = CateModel::fit_targets(
            &ds.x().select_rows(&train),
            &ites,
            CateMode::PointAbsResidual,
            &GbmConfig::default(),
        )
        .unwrap();
        let pred = cate.predict(&ds.x().select_rows(&test)).unwrap();
        let tau = ds.tau_true().unwrap();
        let mse = test.iter().zip(&pred).map(|(&i, p)| (p - tau[i]).powi(2)).sum::<f64>() / test.len() as f64;
        assert!(mse.sqrt() < 0.6, "rmse {}", mse.sqrt());
    }
}
