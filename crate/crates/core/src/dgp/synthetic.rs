use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{CausalDataset, PotentialOutcomes, Propensity};
use crate::{Error, Matrix, Result};

/// Clamp applied to the first covariate so that `σ²(x) = −ln x₁` stays finite.
const X1_CLAMP: f64 = 1e-12;

/// Regularized incomplete beta function `I_x(a, b)` for positive integer
/// shapes, via the binomial tail
/// `Σ_{j=a}^{a+b−1} C(a+b−1, j) x^j (1−x)^{a+b−1−j}`.
pub fn regularized_incomplete_beta(x: f64, a: u32, b: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("incomplete beta argument {x} outside [0, 1]")));
    }
    if a == 0 || b == 0 {
        return Err(Error::Domain("incomplete beta shapes must be >= 1".into()));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let n = a + b - 1;
    let mut total = 0.0;
    for j in a..=n {
        total += binomial(n, j) * x.powi(j as i32) * (1.0 - x).powi((n - j) as i32);
    }
    Ok(total.clamp(0.0, 1.0))
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Propensity score of the synthetic benchmark: `(1 + I_{x₁}(2, 4)) / 4`.
pub fn propensity_fn(x_row: &[f64]) -> Result<f64> {
    let x1 = *x_row
        .first()
        .ok_or(Error::Empty("propensity needs at least one covariate"))?;
    Ok((1.0 + regularized_incomplete_beta(x1, 2, 4)?) / 4.0)
}

/// Logistic ramp `1 / (1 + exp(−12 (t − 0.5)))`.
pub fn zeta(t: f64) -> f64 {
    1.0 / (1.0 + (-12.0 * (t - 0.5)).exp())
}

/// Effect regime of the synthetic generator.
///
/// `μ₁(x) = ζ(x₁)ζ(x₂)` and `μ₀(x) = γ·μ₁(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setup {
    /// `γ = 1`: the treatment has no effect.
    A,
    /// `γ = 0`: heterogeneous effect `τ(x) = ζ(x₁)ζ(x₂)`.
    B,
    CustomGamma(f64),
}

impl Setup {
    pub fn gamma(self) -> f64 {
        match self {
            Setup::A => 1.0,
            Setup::B => 0.0,
            Setup::CustomGamma(g) => g,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub setup: Setup,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(setup: Setup, n: usize, d: usize, seed: u64) -> Self {
        Self { n, d, setup, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if self.d < 2 {
            return Err(Error::InvalidConfig(format!(
                "d must be >= 2 (outcomes use x1 and x2), got {}",
                self.d
            )));
        }
        let gamma = self.setup.gamma();
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!("gamma {gamma} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Draws a synthetic dataset with heteroscedastic noise `σ²(x) = −ln x₁`.
///
/// Covariates are `U([0,1]^d)`, treatment is `Bernoulli(π(x))` and the two
/// potential outcomes are independent normals around `μ₀(x)`, `μ₁(x)`.
/// Deterministic for a given seed.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<CausalDataset> {
    cfg.validate()?;
    let SynthConfig { n, d, .. } = *cfg;
    let gamma = cfg.setup.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut x = Vec::with_capacity(n * d);
    let mut w = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);

    let mut row = vec![0.0; d];
    for _ in 0..n {
        for v in row.iter_mut() {
            *v = rng.random::<f64>();
        }
        row[0] = row[0].clamp(X1_CLAMP, 1.0 - X1_CLAMP);
        let pi = propensity_fn(&row)?;
        let treated = rng.random::<f64>() < pi;

        let mu1 = zeta(row[0]) * zeta(row[1]);
        let mu0 = gamma * mu1;
        let sigma = (-row[0].ln()).sqrt();
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let po0 = mu0 + sigma * z0;
        let po1 = mu1 + sigma * z1;

        x.extend_from_slice(&row);
        w.push(u8::from(treated));
        y.push(if treated { po1 } else { po0 });
        y0.push(po0);
        y1.push(po1);
        tau.push(mu1 - mu0);
    }

    CausalDataset::new(
        Matrix::new(x, n, d)?,
        w,
        y,
        Some(PotentialOutcomes { y0, y1 }),
        Some(tau),
        Propensity::Synthetic,
    )
}
