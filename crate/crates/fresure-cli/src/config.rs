//! JSON experiment configuration. Every field has a baseline default so a
//! missing config file or a partial document still describes a full,
//! reproducible experiment; the seed is always explicit (never wall clock).

use anyhow::{bail, Context, Result};
use fresure::dynamics::Acquisition;
use fresure::model::{NoiseModel, SpinSystemParams};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SpinSystemParams,
    pub noise: NoiseModel,
    pub acquisition: Acquisition,
    pub mc: MonteCarloConfig,
    pub analysis: AnalysisConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_mc: 10_000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub window_hz: (f64, f64),
    pub zero_pad_factor: usize,
    /// Peak prominence threshold, fraction of the window maximum.
    pub prominence: f64,
    /// Exponential line broadening applied before the FFT, Hz (0 = none).
    pub line_broadening_hz: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            window_hz: fresure::spectra::DEFAULT_WINDOW_HZ,
            zero_pad_factor: 4,
            prominence: fresure::spectra::DEFAULT_PROMINENCE,
            line_broadening_hz: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_values: Vec<f64>,
    /// Infidelity threshold marking the weak-coupling validity limit;
    /// reported and drawn only when set.
    pub threshold: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_values: vec![0.5, 1.0, 2.0, 3.0, 4.0, 5.0],
            threshold: None,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SpinSystemParams::baseline(),
            noise: NoiseModel::default(),
            acquisition: Acquisition::baseline(),
            mc: MonteCarloConfig::default(),
            analysis: AnalysisConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("cannot parse config {}", p.display()))?
            }
            None => Self::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.system
            .validate()
            .context("invalid system parameters")?;
        if self.noise.gamma_fwhm_hz <= 0.0 {
            bail!("noise.gamma_fwhm_hz must be positive");
        }
        if self.acquisition.dt_s <= 0.0 || self.acquisition.n_samples < 2 {
            bail!("acquisition needs dt_s > 0 and n_samples >= 2");
        }
        if self.mc.n_mc == 0 {
            bail!("mc.n_mc must be at least 1");
        }
        if self.analysis.zero_pad_factor == 0 {
            bail!("analysis.zero_pad_factor must be at least 1");
        }
        if self.analysis.window_hz.0 >= self.analysis.window_hz.1 {
            bail!("analysis.window_hz must be an increasing pair");
        }
        if self.analysis.line_broadening_hz < 0.0 {
            bail!("analysis.line_broadening_hz must be non-negative");
        }
        let ratio = self.system.weak_coupling_ratio();
        if ratio > SpinSystemParams::WEAK_COUPLING_WARN {
            eprintln!(
                "warning: weak-coupling ratio max|J/(delta_i - delta_j)| = {ratio:.2} exceeds {}; \
                 the secular model is unreliable for these parameters",
                SpinSystemParams::WEAK_COUPLING_WARN
            );
        }
        Ok(())
    }
}
