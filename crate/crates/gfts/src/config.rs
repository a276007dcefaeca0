//! Run configuration: a TOML file mirroring the CLI flags, so every run can
//! be reproduced from a single serialized snapshot. Unknown keys are
//! rejected. CLI flags override file values; the merged config is echoed
//! into the output directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// RNG seed; the `GFTS_SEED` environment variable is the fallback when
    /// neither flag nor file provides one.
    pub seed: Option<u64>,
    #[serde(default)]
    pub smooth: SmoothSection,
    #[serde(default)]
    pub forecast: ForecastSection,
    #[serde(default)]
    pub backtest: BacktestSection,
    #[serde(default)]
    pub synthesize: SynthSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SmoothSection {
    pub knot_spacing: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_count: Option<usize>,
    pub monotone_from_age: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ForecastSection {
    pub horizons: Option<usize>,
    pub alpha: Option<f64>,
    /// "dfts" (univariate) or "dmfts" (joint blocks).
    pub variant: Option<String>,
    /// "base", "bu", "ols" or "mint".
    pub method: Option<String>,
    /// "bartlett" or "flat-top".
    pub kernel: Option<String>,
    pub threshold: Option<f64>,
    pub max_k: Option<usize>,
    pub max_p: Option<usize>,
    pub max_q: Option<usize>,
    pub max_d: Option<usize>,
    pub bootstrap_samples: Option<usize>,
    pub intervals: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    pub first_train_years: Option<usize>,
    pub horizons: Option<usize>,
    pub alpha: Option<f64>,
    /// Comma-free list of methods; default all four.
    pub methods: Option<Vec<String>>,
    pub variants: Option<Vec<String>>,
    pub intervals: Option<bool>,
    pub max_p: Option<usize>,
    pub max_q: Option<usize>,
    pub max_d: Option<usize>,
    /// MinT shrinkage: a number in [0, 1] or "auto".
    pub shrink: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub regions: Option<usize>,
    pub prefs_per_region: Option<usize>,
    pub sexes: Option<bool>,
    pub years: Option<usize>,
    pub ages: Option<usize>,
    pub k_true: Option<usize>,
    /// "white-noise", "ar1" or "rwd".
    pub dynamics: Option<String>,
    pub phi: Option<f64>,
    pub drift: Option<f64>,
    pub noise: Option<f64>,
    pub outlier_years: Option<Vec<usize>>,
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })
}

pub fn save_config(config: &RunConfig, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(config)
        .map_err(|e| Error::InvalidArgument(format!("config serialization failed: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}
