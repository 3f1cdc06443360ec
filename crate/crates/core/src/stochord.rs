//! Empirical stochastic-order diagnostics between score samples.
//!
//! Throughout, `F` is the distribution of pseudo-outcome scores and `G` that
//! of oracle scores. `F ⪰₁ G` (first order) means `F ≤ G` pointwise;
//! `F ⪰₂ G` (second order) means `∫_{−∞}^x (G − F) ≥ 0` for all `x`;
//! `F ⪰_mcx G` (increasing convex) is tested through stop-loss transforms
//! `E_F[(X − t)₊] ≥ E_G[(X − t)₊]`. Every check runs on the merged sample
//! points: both sides are piecewise constant or piecewise linear between
//! them, so nothing happens in between.

use crate::{Error, Result};

/// Slack on integrated and stop-loss gaps.
pub const STRICT_TOL: f64 = 1e-12;

/// Grid size for averaged ECDF curves.
pub const AVERAGED_GRID: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
    /// `suffix[i]` is the sum of `sorted[i..]`.
    suffix: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("ECDF needs at least one sample"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "ECDF sample",
                index: i,
            });
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut suffix = vec![0.0; sorted.len() + 1];
        for i in (0..sorted.len()).rev() {
            suffix[i] = suffix[i + 1] + sorted[i];
        }
        Ok(Self { sorted, suffix })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    /// Number of samples `≤ t`.
    pub fn count_le(&self, t: f64) -> usize {
        self.sorted.partition_point(|&v| v <= t)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.count_le(t) as f64 / self.n() as f64
    }

    pub fn mean(&self) -> f64 {
        self.suffix[0] / self.n() as f64
    }

    /// `E[(X − t)₊]`.
    pub fn stop_loss(&self, t: f64) -> f64 {
        let k = self.count_le(t);
        let above = (self.n() - k) as f64;
        ((self.suffix[k] - t * above) / self.n() as f64).max(0.0)
    }

    /// `∫_{−∞}^t F(s) ds = E[(t − X)₊]`.
    pub fn integrated_cdf(&self, t: f64) -> f64 {
        let k = self.count_le(t);
        let below_sum = self.suffix[0] - self.suffix[k];
        ((t * k as f64 - below_sum) / self.n() as f64).max(0.0)
    }
}

pub fn ecdf(samples: &[f64]) -> Result<Ecdf> {
    Ecdf::new(samples)
}

/// Sorted, deduplicated union of both samples.
pub fn merged_grid(f: &Ecdf, g: &Ecdf) -> Vec<f64> {
    let mut grid: Vec<f64> = f.sorted.iter().chain(&g.sorted).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Outcome of one dominance check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderCheck {
    pub holds: bool,
    /// FOSD: `max (F − G)`; SOSD and MCX: the minimum gap.
    pub margin: f64,
}

/// `F ⪰₁ G`: `F ≤ G` on the grid, strictly somewhere. Compared as exact
/// rationals.
pub fn check_fosd(f: &Ecdf, g: &Ecdf, grid: &[f64]) -> OrderCheck {
    let (nf, ng) = (f.n() as u128, g.n() as u128);
    let mut all_le = true;
    let mut strict = false;
    let mut margin = f64::NEG_INFINITY;
    for &t in grid {
        let a = f.count_le(t) as u128 * ng;
        let b = g.count_le(t) as u128 * nf;
        all_le &= a <= b;
        strict |= a < b;
        margin = margin.max(f.eval(t) - g.eval(t));
    }
    OrderCheck {
        holds: all_le && strict,
        margin,
    }
}

fn gap_check(grid: &[f64], gap: impl Fn(f64) -> f64) -> OrderCheck {
    let mut min_gap = f64::INFINITY;
    let mut strict = false;
    for &t in grid {
        let d = gap(t);
        min_gap = min_gap.min(d);
        strict |= d > STRICT_TOL;
    }
    OrderCheck {
        holds: min_gap >= -STRICT_TOL && strict,
        margin: min_gap,
    }
}

/// `F ⪰₂ G`: `∫_{−∞}^x (G − F) ≥ 0` at every grid `x`, strictly somewhere.
pub fn check_sosd(f: &Ecdf, g: &Ecdf, grid: &[f64]) -> OrderCheck {
    gap_check(grid, |t| g.integrated_cdf(t) - f.integrated_cdf(t))
}

/// `F ⪰_mcx G` through stop-loss dominance at every grid point.
pub fn check_mcx(f: &Ecdf, g: &Ecdf, grid: &[f64]) -> OrderCheck {
    gap_check(grid, |t| f.stop_loss(t) - g.stop_loss(t))
}

/// `E[(X − t)₊]` for a discrete law given as `(value, probability)` atoms.
pub fn weighted_stop_loss(atoms: &[(f64, f64)], t: f64) -> f64 {
    atoms.iter().map(|&(v, p)| p * (v - t).max(0.0)).sum()
}

/// Minimum stop-loss gap `E_F[(X − t)₊] − E_G[(X − t)₊]` over the union of
/// both supports, for discrete laws given as atoms.
pub fn weighted_stop_loss_gap(f: &[(f64, f64)], g: &[(f64, f64)]) -> f64 {
    f.iter()
        .chain(g)
        .map(|&(t, _)| weighted_stop_loss(f, t) - weighted_stop_loss(g, t))
        .fold(f64::INFINITY, f64::min)
}

/// Last-crossing level and location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaStar {
    pub alpha_star: Option<f64>,
    pub v_star: Option<f64>,
}

/// Locates where `F_pseudo − F_oracle` settles into its final sign.
///
/// Empirical FOSD of the pseudo scores gives `α* = 1`. When the pseudo ECDF
/// is never below the oracle ECDF there is no valid level. Otherwise `v*` is
/// the first grid point of the final run of equal nonzero signs and
/// `α* = F_pseudo(v*)`.
pub fn estimate_alpha_star(pseudo: &Ecdf, oracle: &Ecdf) -> AlphaStar {
    let grid = merged_grid(pseudo, oracle);
    if check_fosd(pseudo, oracle, &grid).holds {
        return AlphaStar {
            alpha_star: Some(1.0),
            v_star: None,
        };
    }
    let (np, no) = (pseudo.n() as i128, oracle.n() as i128);
    let signs: Vec<(f64, i8)> = grid
        .iter()
        .map(|&t| {
            let d = pseudo.count_le(t) as i128 * no - oracle.count_le(t) as i128 * np;
            (t, d.signum() as i8)
        })
        .filter(|&(_, s)| s != 0)
        .collect();
    if signs.iter().all(|&(_, s)| s > 0) {
        return AlphaStar {
            alpha_star: None,
            v_star: None,
        };
    }
    let last = signs.last().map(|&(_, s)| s).unwrap_or(0);
    let start = signs.iter().rposition(|&(_, s)| s != last).map_or(0, |i| i + 1);
    let v = signs[start].0;
    AlphaStar {
        alpha_star: Some(pseudo.eval(v)),
        v_star: Some(v),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderReport {
    pub fosd_fg: OrderCheck,
    pub fosd_gf: OrderCheck,
    pub sosd_fg: OrderCheck,
    pub mcx_fg: OrderCheck,
    pub alpha_star: Option<f64>,
    pub crossing_point: Option<f64>,
}

/// Runs every check with `F` the pseudo scores and `G` the oracle scores.
pub fn order_report(pseudo_scores: &[f64], oracle_scores: &[f64]) -> Result<OrderReport> {
    let f = Ecdf::new(pseudo_scores)?;
    let g = Ecdf::new(oracle_scores)?;
    let grid = merged_grid(&f, &g);
    let a = estimate_alpha_star(&f, &g);
    Ok(OrderReport {
        fosd_fg: check_fosd(&f, &g, &grid),
        fosd_gf: check_fosd(&g, &f, &grid),
        sosd_fg: check_sosd(&f, &g, &grid),
        mcx_fg: check_mcx(&f, &g, &grid),
        alpha_star: a.alpha_star,
        crossing_point: a.v_star,
    })
}

/// Pointwise mean of per-replication ECDFs on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedEcdf {
    pub t: Vec<f64>,
    pub f_pseudo: Vec<f64>,
    pub f_oracle: Vec<f64>,
}

impl AveragedEcdf {
    /// Fraction of grid points where the pseudo curve is at or below the
    /// oracle curve.
    pub fn fraction_pseudo_below(&self) -> f64 {
        let k = self.f_pseudo.iter().zip(&self.f_oracle).filter(|(p, o)| p <= o).count();
        k as f64 / self.t.len() as f64
    }

    pub fn fraction_pseudo_above(&self) -> f64 {
        let k = self.f_pseudo.iter().zip(&self.f_oracle).filter(|(p, o)| p >= o).count();
        k as f64 / self.t.len() as f64
    }
}

/// Averages `(pseudo, oracle)` ECDF pairs over replications on
/// `grid_size` quantiles of the pooled sample.
pub fn averaged_ecdfs(replications: &[(Vec<f64>, Vec<f64>)], grid_size: usize) -> Result<AveragedEcdf> {
    if replications.is_empty() {
        return Err(Error::Empty("no replications to average"));
    }
    if grid_size < 2 {
        return Err(Error::InvalidConfig(format!("grid size must be >= 2, got {grid_size}")));
    }
    let mut pooled: Vec<f64> = replications
        .iter()
        .flat_map(|(p, o)| p.iter().chain(o).copied())
        .collect();
    if pooled.is_empty() {
        return Err(Error::Empty("no scores to average"));
    }
    pooled.sort_by(f64::total_cmp);
    let last = pooled.len() - 1;
    let t: Vec<f64> = (0..grid_size)
        .map(|k| pooled[(k as f64 / (grid_size - 1) as f64 * last as f64).round() as usize])
        .collect();

    let mut f_pseudo = vec![0.0; grid_size];
    let mut f_oracle = vec![0.0; grid_size];
    for (p, o) in replications {
        let (ep, eo) = (Ecdf::new(p)?, Ecdf::new(o)?);
        for (k, &tk) in t.iter().enumerate() {
            f_pseudo[k] += ep.eval(tk);
            f_oracle[k] += eo.eval(tk);
        }
    }
    let r = replications.len() as f64;
    f_pseudo.iter_mut().chain(f_oracle.iter_mut()).for_each(|v| *v /= r);
    Ok(AveragedEcdf { t, f_pseudo, f_oracle })
}
