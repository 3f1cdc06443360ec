use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Fractions of the dataset assigned to each subset; the remainder is held
/// out (for example as a test set).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub calib: f64,
    pub phi: f64,
}

impl SplitFractions {
    pub fn new(train: f64, calib: f64, phi: f64) -> Self {
        Self { train, calib, phi }
    }
}

/// Disjoint row subsets: nuisance fitting (`phi`), second-stage training
/// (`train`) and conformal calibration (`calib`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub phi: Vec<usize>,
    pub train: Vec<usize>,
    pub calib: Vec<usize>,
}

impl SplitIndices {
    /// Rows of `0..n` not assigned to any subset, ascending.
    pub fn held_out(&self, n: usize) -> Vec<usize> {
        let mut used = vec![false; n];
        for &i in self.phi.iter().chain(&self.train).chain(&self.calib) {
            used[i] = true;
        }
        (0..n).filter(|&i| !used[i]).collect()
    }
}

/// Random disjoint partition of `0..n`, reproducible from `seed`.
///
/// Subset sizes are `⌊n·fraction⌋`. A zero `phi` fraction is allowed (no
/// nuisance fit); any positive fraction that rounds to an empty subset is
/// an error.
pub fn split(n: usize, fractions: SplitFractions, seed: u64) -> Result<SplitIndices> {
    let SplitFractions { train, calib, phi } = fractions;
    for (name, f) in [("train", train), ("calib", calib), ("phi", phi)] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidConfig(format!("{name} fraction {f} outside [0, 1]")));
        }
    }
    if train <= 0.0 || calib <= 0.0 {
        return Err(Error::InvalidConfig(
            "train and calib fractions must be positive".into(),
        ));
    }
    if train + calib + phi > 1.0 + 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "fractions sum to {} > 1",
            train + calib + phi
        )));
    }
    let size = |f: f64| (n as f64 * f + 1e-9).floor() as usize;
    let (n_train, n_calib, n_phi) = (size(train), size(calib), size(phi));
    for (name, f, len) in [
        ("train", train, n_train),
        ("calib", calib, n_calib),
        ("phi", phi, n_phi),
    ] {
        if f > 0.0 && len == 0 {
            return Err(Error::InvalidConfig(format!("{name} subset is empty for n = {n}")));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rest = order.into_iter();
    let train: Vec<usize> = rest.by_ref().take(n_train).collect();
    let calib: Vec<usize> = rest.by_ref().take(n_calib).collect();
    let phi: Vec<usize> = rest.take(n_phi).collect();
    Ok(SplitIndices { phi, train, calib })
}
