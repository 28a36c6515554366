use std::path::{Path, PathBuf};

use conjclt::stats::{SampleMode, DEFAULT_CAP, MIN_SAMPLED};
use conjclt::words::sphere_size;
use conjclt::{class_of, ConjugacyClass, Rank, WeightFunction, WeightSpec, Word};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Draws used for sphere populations too large to enumerate.
pub const DEFAULT_SPHERE_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: u32,
    pub weight: WeightSpec,
    pub class_rep: String,
    pub m_grid: Vec<usize>,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub enumeration_cap: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub grids: Grids,
    /// Draws for sphere samples in `ratio` when `Γ_{k+2m}` exceeds the cap.
    #[serde(default = "default_sphere_samples")]
    pub sphere_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModeConfig {
    #[default]
    Exact,
    Sampled {
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ks_max: f64,
    pub ratio_band: [f64; 2],
    pub derivative_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { ks_max: 0.1, ratio_band: [1.7, 2.3], derivative_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    /// Parameters `t` for the pressure curve.
    pub pressure: Vec<f64>,
    /// Points `y` of the CDF table.
    pub cdf: Vec<f64>,
    /// Frequencies `t` of the characteristic function.
    pub charfn: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            pressure: (-8..=8).map(|i| i as f64 * 0.25).collect(),
            cdf: (-12..=12).map(|i| i as f64 * 0.25).collect(),
            charfn: vec![0.5, 1.0, 2.0],
        }
    }
}

fn default_cap() -> u64 {
    DEFAULT_CAP as u64
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_sphere_samples() -> usize {
    DEFAULT_SPHERE_SAMPLES
}

/// A validated config with its library objects built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub rank: Rank,
    pub weight: WeightFunction,
    pub class: ConjugacyClass,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn class_mode(&self) -> SampleMode {
        match self.mode {
            ModeConfig::Exact => SampleMode::Exact { cap: self.enumeration_cap as u128 },
            ModeConfig::Sampled { count } => SampleMode::Sampled { count, seed: self.seed },
        }
    }

    /// Exact when `Γ_n` fits under the cap, otherwise sampled on a stream
    /// separate from the class sample.
    pub fn sphere_mode(&self, rank: Rank, n: usize) -> SampleMode {
        if sphere_size(rank, n) <= self.enumeration_cap as u128 {
            SampleMode::Exact { cap: self.enumeration_cap as u128 }
        } else {
            SampleMode::Sampled { count: self.sphere_samples, seed: self.seed.wrapping_add(1) }
        }
    }

    pub fn build(self) -> Result<Experiment, CliError> {
        if self.m_grid.is_empty() {
            return Err(CliError::Config("m_grid must be nonempty".into()));
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("m_grid must be strictly ascending".into()));
        }
        if let ModeConfig::Sampled { count } = self.mode {
            if count < MIN_SAMPLED {
                return Err(CliError::Config(format!("sampled mode needs count >= {MIN_SAMPLED}")));
            }
        }
        if self.sphere_samples < MIN_SAMPLED {
            return Err(CliError::Config(format!("sphere_samples must be >= {MIN_SAMPLED}")));
        }
        let [lo, hi] = self.tolerances.ratio_band;
        let positive = |x: f64| x > 0.0;
        if lo.partial_cmp(&hi).is_none_or(|o| o.is_gt())
            || !positive(self.tolerances.ks_max)
            || !positive(self.tolerances.derivative_tol)
        {
            return Err(CliError::Config("tolerances are inconsistent".into()));
        }
        let rank = Rank::new(self.p)?;
        let weight = self.weight.build(rank)?;
        let rep: Word = self.class_rep.parse()?;
        rep.check_rank(rank)?;
        let class = class_of(rank, &rep)?;
        Ok(Experiment { config: self, rank, weight, class })
    }
}
