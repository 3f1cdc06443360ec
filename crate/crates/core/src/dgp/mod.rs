//! Causal data model, synthetic benchmark generator and dataset ingestion.
//!
//! A [`CausalDataset`] holds covariates `x`, a binary treatment `w`, the
//! factual outcome `y` and, for simulated data, both potential outcomes and
//! the true CATE. The propensity score is treated as known: it is either the
//! built-in synthetic score, a constant, or a per-row column read from disk.

mod csv_io;
mod split;
mod synthetic;

pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use split::{split, SplitFractions, SplitIndices};
pub use synthetic::{generate_synthetic, propensity_fn, regularized_incomplete_beta, zeta, Setup, SynthConfig};

use crate::{Error, Matrix, Result};

/// Propensities must stay inside `(EPS, 1 - EPS)`.
pub const POSITIVITY_EPS: f64 = 1e-6;

/// Source of the (known) propensity score `π(x) = P(W = 1 | X = x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Propensity {
    /// `(1 + I_{x1}(2, 4)) / 4`, the score of the synthetic benchmark.
    Synthetic,
    Constant(f64),
    /// One value per dataset row; cannot be evaluated at unseen covariates.
    Observed(Vec<f64>),
}

impl Propensity {
    /// Evaluates the score at a covariate row, when the source allows it.
    pub fn eval(&self, x_row: &[f64]) -> Option<f64> {
        match self {
            Propensity::Synthetic => propensity_fn(x_row).ok(),
            Propensity::Constant(p) => Some(*p),
            Propensity::Observed(_) => None,
        }
    }
}

/// Simulation-only ground truth attached to a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalDataset {
    x: Matrix,
    w: Vec<u8>,
    y: Vec<f64>,
    potential: Option<PotentialOutcomes>,
    tau_true: Option<Vec<f64>>,
    propensity: Propensity,
    pi: Vec<f64>,
}

impl CausalDataset {
    /// Validates and assembles a dataset.
    ///
    /// Checks row counts, binary treatment, finiteness, consistency
    /// `y = w·y1 + (1−w)·y0` (exact) and positivity of the propensity.
    pub fn new(
        x: Matrix,
        w: Vec<u8>,
        y: Vec<f64>,
        potential: Option<PotentialOutcomes>,
        tau_true: Option<Vec<f64>>,
        propensity: Propensity,
    ) -> Result<Self> {
        let n = x.rows();
        if n == 0 {
            return Err(Error::Empty("dataset has no rows"));
        }
        check_len(n, w.len())?;
        check_len(n, y.len())?;
        if let Some(i) = w.iter().position(|&v| v > 1) {
            return Err(Error::Domain(format!(
                "treatment at row {i} is {}, expected 0 or 1",
                w[i]
            )));
        }
        check_finite("covariates", x.as_slice())?;
        check_finite("outcome", &y)?;
        if let Some(po) = &potential {
            check_len(n, po.y0.len())?;
            check_len(n, po.y1.len())?;
            check_finite("y0", &po.y0)?;
            check_finite("y1", &po.y1)?;
            if let Some(row) = first_inconsistent_row(&w, &y, po) {
                return Err(Error::Domain(format!(
                    "row {row}: factual outcome does not match potential outcome of arm {}",
                    w[row]
                )));
            }
        }
        if let Some(tau) = &tau_true {
            check_len(n, tau.len())?;
            check_finite("tau", tau)?;
        }
        let pi = match &propensity {
            Propensity::Synthetic => x.iter_rows().map(propensity_fn).collect::<Result<Vec<_>>>()?,
            Propensity::Constant(p) => vec![*p; n],
            Propensity::Observed(values) => {
                check_len(n, values.len())?;
                values.clone()
            }
        };
        for (row, &value) in pi.iter().enumerate() {
            // NaN fails both comparisons and is rejected here too.
            if !(value > POSITIVITY_EPS && value < 1.0 - POSITIVITY_EPS) {
                return Err(Error::Positivity {
                    row,
                    value,
                    eps: POSITIVITY_EPS,
                });
            }
        }
        Ok(Self {
            x,
            w,
            y,
            potential,
            tau_true,
            propensity,
            pi,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn w(&self) -> &[u8] {
        &self.w
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn potential(&self) -> Option<&PotentialOutcomes> {
        self.potential.as_ref()
    }

    pub fn tau_true(&self) -> Option<&[f64]> {
        self.tau_true.as_deref()
    }

    pub fn propensity(&self) -> &Propensity {
        &self.propensity
    }

    /// Propensity score of row `i`.
    pub fn pi(&self, i: usize) -> f64 {
        self.pi[i]
    }

    /// Realised ITE `y1 − y0` of row `i` (simulation only).
    pub fn ite(&self, i: usize) -> Option<f64> {
        self.potential.as_ref().map(|po| po.y1[i] - po.y0[i])
    }

    /// Realised ITEs for the listed rows (simulation only).
    pub fn ites(&self, indices: &[usize]) -> Option<Vec<f64>> {
        let po = self.potential.as_ref()?;
        Some(indices.iter().map(|&i| po.y1[i] - po.y0[i]).collect())
    }
}

fn first_inconsistent_row(w: &[u8], y: &[f64], po: &PotentialOutcomes) -> Option<usize> {
    (0..y.len()).find(|&i| {
        let factual = if w[i] == 1 { po.y1[i] } else { po.y0[i] };
        factual != y[i]
    })
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}
