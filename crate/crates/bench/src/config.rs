//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [experiment]
//! master_seed = 7
//! replications = 100
//! alpha = 0.1
//! methods = ["CM-DR", "CM-IPW", "CM-X", "WCP-Naive", "WCP-Exact", "WCP-Inexact", "Oracle"]
//! score = "abs"            # or "cqr"
//!
//! [data]
//! source = "synthetic"     # or "csv" with `path` and optional `propensity`
//! setup = "B"              # or `gamma = 0.5`
//! n = 2000
//! d = 10
//!
//! [splits]
//! test = 0.1
//! calib = 0.25
//! phi = 0.25
//!
//! [gbm]
//! n_trees = 100
//! max_depth = 3
//! learning_rate = 0.1
//! min_samples_leaf = 5
//!
//! [sweep]
//! alphas = [0.02, 0.05, 0.1, 0.2, 0.3, 0.5]
//! ```
//!
//! Every section except `[data]` is optional; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cmeta::conformal::ScoreKind;
use cmeta::dgp::{Setup, SplitFractions};
use cmeta::metalearner::Learner;
use cmeta::regress::GbmConfig;
use serde::Deserialize;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
pub enum Method {
    #[serde(rename = "CM-DR")]
    CmDr,
    #[serde(rename = "CM-IPW")]
    CmIpw,
    #[serde(rename = "CM-X")]
    CmX,
    #[serde(rename = "WCP-Naive")]
    WcpNaive,
    #[serde(rename = "WCP-Exact")]
    WcpExact,
    #[serde(rename = "WCP-Inexact")]
    WcpInexact,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::CmDr,
        Method::CmIpw,
        Method::CmX,
        Method::WcpNaive,
        Method::WcpExact,
        Method::WcpInexact,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::CmDr => "CM-DR",
            Method::CmIpw => "CM-IPW",
            Method::CmX => "CM-X",
            Method::WcpNaive => "WCP-Naive",
            Method::WcpExact => "WCP-Exact",
            Method::WcpInexact => "WCP-Inexact",
            Method::Oracle => "Oracle",
        }
    }

    /// Meta-learner behind a conformal meta-learner method.
    pub fn learner(self) -> Option<Learner> {
        match self {
            Method::CmDr => Some(Learner::Dr),
            Method::CmIpw => Some(Learner::Ipw),
            Method::CmX => Some(Learner::X),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreChoice {
    #[default]
    Abs,
    Cqr,
}

impl From<ScoreChoice> for ScoreKind {
    fn from(s: ScoreChoice) -> Self {
        match s {
            ScoreChoice::Abs => ScoreKind::AbsoluteResidual,
            ScoreChoice::Cqr => ScoreKind::SignedDistanceCqr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub master_seed: u64,
    pub replications: usize,
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub score: ScoreChoice,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            master_seed: 0,
            replications: 100,
            alpha: 0.1,
            methods: Method::ALL.to_vec(),
            score: ScoreChoice::Abs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum SetupChoice {
    A,
    B,
}

fn default_d() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSection {
    Synthetic {
        setup: Option<SetupChoice>,
        gamma: Option<f64>,
        n: usize,
        #[serde(default = "default_d")]
        d: usize,
    },
    Csv {
        path: PathBuf,
        /// Constant propensity, used when the file has no `pi` column.
        propensity: Option<f64>,
    },
}

impl DataSection {
    pub fn setup(&self) -> Result<Option<Setup>> {
        match self {
            DataSection::Synthetic { setup, gamma, .. } => match (setup, gamma) {
                (Some(SetupChoice::A), None) => Ok(Some(Setup::A)),
                (Some(SetupChoice::B), None) => Ok(Some(Setup::B)),
                (None, Some(g)) => Ok(Some(Setup::CustomGamma(*g))),
                _ => Err(BenchError::Config(
                    "[data] needs exactly one of `setup` and `gamma`".into(),
                )),
            },
            DataSection::Csv { .. } => Ok(None),
        }
    }
}

/// Fractions of the full sample, nested as test / calibration / nuisance.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    /// Held-out test share of all rows.
    pub test: f64,
    /// Calibration share of the non-test rows.
    pub calib: f64,
    /// Nuisance share of the proper training rows.
    pub phi: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            test: 0.1,
            calib: 0.25,
            phi: 0.25,
        }
    }
}

impl SplitSection {
    pub fn fractions(&self) -> SplitFractions {
        let fit = 1.0 - self.test;
        let proper = fit * (1.0 - self.calib);
        SplitFractions::new(proper * (1.0 - self.phi), fit * self.calib, proper * self.phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbmSection {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbmSection {
    fn default() -> Self {
        let g = GbmConfig::default();
        Self {
            n_trees: g.n_trees,
            max_depth: g.max_depth,
            learning_rate: g.learning_rate,
            min_samples_leaf: g.min_samples_leaf,
        }
    }
}

impl GbmSection {
    pub fn to_config(&self) -> GbmConfig {
        GbmConfig {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            learning_rate: self.learning_rate,
            min_samples_leaf: self.min_samples_leaf,
            ..GbmConfig::default()
        }
    }
}

pub const DEFAULT_SWEEP: [f64; 6] = [0.02, 0.05, 0.1, 0.2, 0.3, 0.5];

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            alphas: DEFAULT_SWEEP.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub data: DataSection,
    #[serde(default)]
    pub splits: SplitSection,
    #[serde(default)]
    pub gbm: GbmSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(BenchError::Config(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML; relative CSV paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|source| BenchError::ConfigParse {
            path: base_dir.to_path_buf(),
            source,
        })?;
        if let DataSection::Csv { path, .. } = &mut cfg.data {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            BenchError::ConfigParse { source, .. } => BenchError::ConfigParse {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.replications == 0 {
            return Err(BenchError::Config("replications must be >= 1".into()));
        }
        check_unit("alpha", e.alpha)?;
        if e.methods.is_empty() {
            return Err(BenchError::Config("methods must not be empty".into()));
        }
        let mut seen = e.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != e.methods.len() {
            return Err(BenchError::Config("methods contains duplicates".into()));
        }
        check_unit("splits.test", self.splits.test)?;
        check_unit("splits.calib", self.splits.calib)?;
        check_unit("splits.phi", self.splits.phi)?;
        self.gbm.to_config().validate()?;
        if self.sweep.alphas.is_empty() {
            return Err(BenchError::Config("sweep.alphas must not be empty".into()));
        }
        for &a in &self.sweep.alphas {
            check_unit("sweep alpha", a)?;
        }
        match &self.data {
            DataSection::Synthetic { n, d, .. } => {
                self.data.setup()?;
                if *n == 0 || *d < 2 {
                    return Err(BenchError::Config(format!(
                        "synthetic data needs n >= 1 and d >= 2, got n={n} d={d}"
                    )));
                }
            }
            DataSection::Csv { propensity, .. } => {
                if let Some(p) = propensity {
                    check_unit("data.propensity", *p)?;
                }
            }
        }
        Ok(())
    }

    pub fn score_kind(&self) -> ScoreKind {
        self.experiment.score.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(text, Path::new("/cfg"))
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse("[data]\nsource = \"synthetic\"\nsetup = \"A\"\nn = 500\n").unwrap();
        assert_eq!(cfg.experiment, ExperimentSection::default());
        assert_eq!(cfg.splits, SplitSection::default());
        assert_eq!(cfg.sweep.alphas, DEFAULT_SWEEP.to_vec());
        assert_eq!(cfg.data.setup().unwrap(), Some(Setup::A));
        match cfg.data {
            DataSection::Synthetic { d, .. } => assert_eq!(d, 10),
            _ => unreachable!(),
        }
    }

    #[test]
    fn full_config() {
        let cfg = parse(
            r#"
[experiment]
master_seed = 3
replications = 5
alpha = 0.2
methods = ["CM-DR", "Oracle"]
score = "cqr"

[data]
source = "csv"
path = "data.csv"
propensity = 0.5

[gbm]
n_trees = 10
"#,
        )
        .unwrap();
        assert_eq!(cfg.experiment.methods, vec![Method::CmDr, Method::Oracle]);
        assert_eq!(cfg.score_kind(), ScoreKind::SignedDistanceCqr);
        assert_eq!(cfg.gbm.to_config().n_trees, 10);
        assert_eq!(cfg.gbm.max_depth, 3);
        match &cfg.data {
            DataSection::Csv { path, propensity } => {
                assert_eq!(path, Path::new("/cfg/data.csv"));
                assert_eq!(*propensity, Some(0.5));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "[data]\nsource = \"synthetic\"\nsetup = \"A\"\nn = 5\nextra = 1\n",
            "[data]\nsource = \"synthetic\"\nsetup = \"C\"\nn = 5\n",
            "[data]\nsource = \"synthetic\"\nsetup = \"A\"\ngamma = 0.5\nn = 5\n",
            "[data]\nsource = \"synthetic\"\nn = 5\n",
            "[data]\nsource = \"parquet\"\n",
            "[experiment]\nalpha = 1.5\n[data]\nsource = \"synthetic\"\nsetup = \"A\"\nn = 5\n",
            "[experiment]\nmethods = []\n[data]\nsource = \"synthetic\"\nsetup = \"A\"\nn = 5\n",
            "[experiment]\nmethods = [\"CM-S\"]\n[data]\nsource = \"synthetic\"\nsetup = \"A\"\nn = 5\n",
            "[experiment]\nreplications = 0\n[data]\nsource = \"synthetic\"\nsetup = \"A\"\nn = 5\n",
            "[experiment]\nbogus = 0\n[data]\nsource = \"synthetic\"\nsetup = \"A\"\nn = 5\n",
            "[splits]\ntest = 0\n[data]\nsource = \"synthetic\"\nsetup = \"A\"\nn = 5\n",
            "[gbm]\nmax_depth = 0\n[data]\nsource = \"synthetic\"\nsetup = \"A\"\nn = 5\n",
        ];
        for text in bad {
            let err = parse(text).expect_err(text);
            assert_eq!(err.exit_code(), 1, "{text}: {err}");
        }
    }

    #[test]
    fn default_fractions_nest() {
        let f = SplitSection::default().fractions();
        assert!((f.train - 0.9 * 0.75 * 0.75).abs() < 1e-15);
        assert!((f.calib - 0.9 * 0.25).abs() < 1e-15);
        assert!((f.phi - 0.9 * 0.75 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("cm-dr".parse::<Method>().is_err());
    }
}
