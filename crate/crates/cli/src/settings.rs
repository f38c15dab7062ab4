//! Flag/config-file settings shared by every subcommand.
//!
//! Every value is optional at this layer. A config file (flat TOML, or the
//! `parameters` object of a previously written manifest) is loaded first and
//! any flag given on the command line replaces the file's value. Defaults are
//! applied last, by the command that needs the value.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use nfc_core::numerics::{BoundedNoiseKind, ForwardNoiseKind};
use nfc_core::simulator::{DelayPlacement, SchemeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    SideInfo,
    Quantized,
    ScaledBackward,
}

impl From<SchemeArg> for SchemeKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::SideInfo => SchemeKind::SideInfo,
            SchemeArg::Quantized => SchemeKind::QuantizedFeedback,
            SchemeArg::ScaledBackward => SchemeKind::ScaledBackward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseArg {
    Gaussian,
    Uniform,
}

impl From<NoiseArg> for ForwardNoiseKind {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Gaussian => ForwardNoiseKind::Gaussian,
            NoiseArg::Uniform => ForwardNoiseKind::UniformWhite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackNoiseArg {
    Uniform,
    TruncGauss,
    Rademacher,
    Constant,
    Zero,
}

impl From<FeedbackNoiseArg> for BoundedNoiseKind {
    fn from(n: FeedbackNoiseArg) -> Self {
        match n {
            FeedbackNoiseArg::Uniform => BoundedNoiseKind::Uniform,
            FeedbackNoiseArg::TruncGauss => BoundedNoiseKind::TruncatedGaussian,
            FeedbackNoiseArg::Rademacher => BoundedNoiseKind::Rademacher,
            FeedbackNoiseArg::Constant => BoundedNoiseKind::Constant,
            FeedbackNoiseArg::Zero => BoundedNoiseKind::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayArg {
    After,
    Before,
}

impl From<DelayArg> for DelayPlacement {
    fn from(d: DelayArg) -> Self {
        match d {
            DelayArg::After => DelayPlacement::AfterFeedbackDecoder,
            DelayArg::Before => DelayPlacement::BeforeFeedbackDecoder,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Forward noise variance σ_W²
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_w2: Option<f64>,
    /// Forward input power constraint P_X²
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub px2: Option<f64>,
    /// Backward input power constraint P_Q²
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pq2: Option<f64>,
    /// Feedback corruption amplitude / quantizer sensitivity σ̄_V
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_v: Option<f64>,
    /// Backward channel noise amplitude σ̄_S
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_s: Option<f64>,
    /// Target rate r (bits per channel use)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    /// Operator rate r̄
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rbar: Option<f64>,
    /// Block length
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeArg>,
    /// Forward noise law
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseArg>,
    /// Bounded feedback noise law (V_t for side-info, S_t for scaled-backward)
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback_noise: Option<FeedbackNoiseArg>,
    /// Placement of the one-step delay around the feedback decoder
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelayArg>,
    /// Run the scaled-backward scheme with --sigma-v instead of Γ
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_v_override: Option<bool>,
    /// Send this message in every trial instead of drawing uniformly
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<u64>,
    /// Levels α at which to count |X_n| ≥ α (comma separated)
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_levels: Option<Vec<f64>>,
    /// Sweep start
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    /// Sweep end (inclusive)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    /// Number of sweep points (>= 2)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Backward amplitude constraints P_Q for gamma-sweep (comma separated)
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pq: Option<Vec<f64>>,
    /// First block length for bounds
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_min: Option<usize>,
    /// Last block length for bounds
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// Output path; a `<out>.manifest.json` is written next to it
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl Settings {
    /// `self` with every value present in `flags` replaced.
    pub fn overlay(mut self, flags: Settings) -> Settings {
        overlay!(self, flags;
            sigma_w2, px2, pq2, sigma_v, sigma_s, rate, rbar, n, trials, seed,
            scheme, noise, feedback_noise, delay, sigma_v_override, message,
            tail_levels, min, max, points, pq, n_min, n_max, out,
        );
        self
    }

    /// Reads a flat TOML config, or the parameters of a manifest.
    pub fn load(path: &Path) -> anyhow::Result<Settings> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(&text) {
            let Some(params) = value.get("parameters") else {
                bail!("{}: JSON config must be a run manifest with a `parameters` object", path.display());
            };
            return serde_json::from_value(params.clone())
                .with_context(|| format!("parsing manifest parameters in {}", path.display()));
        }
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Settings = toml::from_str("sigma_w2 = 2.0\nrate = 0.3\nscheme = \"side-info\"\n").unwrap();
        let flags = Settings {
            rate: Some(0.4),
            ..Default::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.sigma_w2, Some(2.0));
        assert_eq!(merged.rate, Some(0.4));
        assert_eq!(merged.scheme, Some(SchemeArg::SideInfo));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("sigma_w3 = 2.0\n").is_err());
    }
}
