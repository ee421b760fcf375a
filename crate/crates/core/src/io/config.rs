//! Run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::events::Binning;
use crate::baselines::HistoryRule;
use crate::error::{Error, Result};
use crate::evaluation::{COVERAGE_LINES, DEFAULT_SPEED};
use crate::model::SeasonalityConfig;
use crate::sampler::{BirthDeathConfig, McmcConfig};

/// Study region polygon file and integration resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    /// `x_km,y_km` vertex CSV, relative to the config file.
    pub path: PathBuf,
    #[serde(default = "default_resolution")]
    pub grid_resolution: f64,
}

fn default_resolution() -> f64 {
    0.5
}

/// Variable-K settings; `birth_rate` defaults to `tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirthDeathSettings {
    pub tau: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub birth_rate: Option<f64>,
    #[serde(default = "default_stage")]
    pub stage_duration: f64,
}

fn default_k_max() -> usize {
    50
}

fn default_stage() -> f64 {
    1.0
}

impl BirthDeathSettings {
    pub fn to_config(&self) -> BirthDeathConfig {
        BirthDeathConfig {
            tau: self.tau,
            k_max: self.k_max,
            birth_rate: self.birth_rate.unwrap_or(self.tau),
            stage_duration: self.stage_duration,
        }
    }
}

/// MEDIC and MEDIC-KDE settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// History rule preset name.
    pub history: String,
    /// MEDIC grid cell side, km.
    pub cell_size: f64,
    /// KDE bandwidth pairs tried by cross-validation, km.
    pub bandwidths: Vec<[f64; 2]>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            history: "medic-4w".into(),
            cell_size: 1.0,
            bandwidths: [0.25, 0.5, 0.75, 1.0, 1.5, 2.0].iter().map(|&h| [h, h]).collect(),
        }
    }
}

/// Scoring, coverage and validation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub speed_kmh: f64,
    /// Response-time thresholds, seconds.
    pub thresholds_s: Vec<f64>,
    pub coverage_lines: usize,
    pub ci_level: f64,
    pub qq_points: usize,
    pub ks_alpha: f64,
    /// Draws used for residuals, evenly spaced over the archive.
    pub validation_draws: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            speed_kmh: DEFAULT_SPEED,
            thresholds_s: (6..=30).map(|k| k as f64 * 10.0).collect(),
            coverage_lines: COVERAGE_LINES,
            ci_level: 0.95,
            qq_points: 100,
            ks_alpha: 0.01,
            validation_draws: 100,
        }
    }
}

fn one() -> usize {
    1
}

/// Everything a run needs besides its input files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub season: SeasonalityConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default = "one")]
    pub chains: usize,
    /// Present for variable-K runs.
    #[serde(default)]
    pub birth_death: Option<BirthDeathSettings>,
    pub region: RegionConfig,
    #[serde(default)]
    pub binning: Binning,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Cross-field checks.
    pub fn validate(&self) -> Result<()> {
        self.season.validate()?;
        self.mcmc.validate()?;
        self.binning.validate()?;
        if self.chains == 0 {
            return Err(Error::Config("need at least one chain".into()));
        }
        if self.binning.width_minutes as usize * self.season.per_day != 24 * 60 {
            return Err(Error::Config(format!(
                "{} periods per day of {} minutes do not make a day",
                self.season.per_day, self.binning.width_minutes
            )));
        }
        if let Some(bd) = &self.birth_death {
            let cfg = bd.to_config();
            cfg.validate()?;
            if self.mcmc.components > cfg.k_max {
                return Err(Error::Config(format!(
                    "{} starting components exceed k_max {}",
                    self.mcmc.components, cfg.k_max
                )));
            }
        }
        if !(self.region.grid_resolution > 0.0) || !self.region.grid_resolution.is_finite() {
            return Err(Error::Config("grid_resolution must be positive".into()));
        }
        self.history_rule()?;
        if !(self.baseline.cell_size > 0.0) || !self.baseline.cell_size.is_finite() {
            return Err(Error::Config("baseline cell_size must be positive".into()));
        }
        if self.baseline.bandwidths.is_empty()
            || self.baseline.bandwidths.iter().flatten().any(|h| !(*h > 0.0) || !h.is_finite())
        {
            return Err(Error::Config("bandwidth candidates must be nonempty and positive".into()));
        }
        let ev = &self.evaluation;
        if !(ev.speed_kmh > 0.0) || !ev.speed_kmh.is_finite() {
            return Err(Error::Config("speed_kmh must be positive".into()));
        }
        if ev.thresholds_s.is_empty()
            || ev.thresholds_s.iter().any(|r| !(*r >= 0.0) || !r.is_finite())
            || ev.thresholds_s.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config("thresholds_s must be nonempty, nonnegative and increasing".into()));
        }
        if ev.coverage_lines == 0 || ev.qq_points == 0 || ev.validation_draws == 0 {
            return Err(Error::Config("coverage_lines, qq_points and validation_draws must be positive".into()));
        }
        if !(ev.ci_level > 0.0 && ev.ci_level < 1.0) || !(ev.ks_alpha > 0.0 && ev.ks_alpha < 1.0) {
            return Err(Error::Config("ci_level and ks_alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn history_rule(&self) -> Result<HistoryRule> {
        HistoryRule::preset(&self.baseline.history, self.season.block)
    }

    pub fn birth_death_config(&self) -> Option<BirthDeathConfig> {
        self.birth_death.as_ref().map(BirthDeathSettings::to_config)
    }

    /// Region file resolved against the directory of the config file.
    pub fn region_path(&self, config_dir: &Path) -> PathBuf {
        if self.region.path.is_absolute() {
            self.region.path.clone()
        } else {
            config_dir.join(&self.region.path)
        }
    }
}

/// SHA-256 of the canonical JSON form, hex encoded.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg).map_err(|e| Error::Config(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
