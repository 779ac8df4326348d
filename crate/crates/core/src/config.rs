//! Experiment configuration: one structured TOML file with nested sections.
//! Unknown keys are rejected everywhere; silent misconfiguration would be
//! indistinguishable from physics. Angles and squeezing levels use the
//! bench conventions (degrees, dB) and are converted once at this boundary.

use serde::{Deserialize, Serialize};

use crate::chain::{r_from_variance_db, ChainConfig, FeedforwardMode, PhaseNoise};
use crate::error::{Error, Result};
use crate::gates::Gate;

/// Evaluation mode of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Exact moments, no sampling noise.
    Analytic,
    /// Seeded per-shot records.
    #[default]
    Sampled,
}

/// Named gates accepted in config files and target strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateName {
    Identity,
    Rotation,
    SqueezeRot,
    Shear,
}

impl GateName {
    pub fn gate(&self) -> Gate {
        match self {
            GateName::Identity => Gate::Identity,
            GateName::Rotation => Gate::Rotation,
            GateName::SqueezeRot => Gate::SqueezeRot,
            GateName::Shear => Gate::Shear,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            GateName::Identity => "identity",
            GateName::Rotation => "rotation",
            GateName::SqueezeRot => "squeeze_rot",
            GateName::Shear => "shear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(default = "defaults::n_steps")]
    pub n_steps: usize,
    /// Squeezed-quadrature variance of the x-squeezed resource, dB relative
    /// to vacuum (negative below vacuum).
    #[serde(default = "defaults::squeezing_db")]
    pub squeezing_db_x: f64,
    #[serde(default = "defaults::squeezing_db")]
    pub squeezing_db_p: f64,
    #[serde(default = "defaults::eta")]
    pub eta_resource: f64,
    #[serde(default = "defaults::eta")]
    pub eta_detect: f64,
    #[serde(default = "defaults::delta_t_ns")]
    pub delta_t_ns: f64,
    #[serde(default)]
    pub phase_noise: Option<PhaseNoise>,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            n_steps: defaults::n_steps(),
            squeezing_db_x: defaults::squeezing_db(),
            squeezing_db_p: defaults::squeezing_db(),
            eta_resource: defaults::eta(),
            eta_detect: defaults::eta(),
            delta_t_ns: defaults::delta_t_ns(),
            phase_noise: None,
        }
    }
}

impl ChainSection {
    /// Physical chain parameters with the step count overridden (sweep
    /// commands vary it).
    pub fn chain_config(&self, n_steps: usize) -> ChainConfig {
        ChainConfig {
            n_steps,
            r_x: r_from_variance_db(self.squeezing_db_x),
            r_p: r_from_variance_db(self.squeezing_db_p),
            eta_resource: self.eta_resource,
            eta_detect: self.eta_detect,
            phase_noise: self.phase_noise,
            delta_t_ns: self.delta_t_ns,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub gate: GateName,
    pub phi_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSection {
    #[serde(default = "defaults::rotation_grid")]
    pub rotation_phi_deg: Vec<f64>,
    #[serde(default = "defaults::squeeze_grid")]
    pub squeeze_phi_deg: Vec<f64>,
    #[serde(default = "defaults::shear_grid")]
    pub shear_phi_deg: Vec<f64>,
}

impl Default for TableSection {
    fn default() -> Self {
        Self {
            rotation_phi_deg: defaults::rotation_grid(),
            squeeze_phi_deg: defaults::squeeze_grid(),
            shear_phi_deg: defaults::shear_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultistepSection {
    #[serde(default = "defaults::n_list")]
    pub n_list: Vec<usize>,
}

impl Default for MultistepSection {
    fn default() -> Self {
        Self {
            n_list: defaults::n_list(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceDemoSection {
    #[serde(default = "defaults::frames")]
    pub frames: usize,
    #[serde(default = "defaults::noise_power")]
    pub noise_power: f64,
}

impl Default for TraceDemoSection {
    fn default() -> Self {
        Self {
            frames: defaults::frames(),
            noise_power: defaults::noise_power(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "defaults::out_dir")]
    pub dir: String,
    #[serde(default)]
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: defaults::out_dir(),
            format: OutputFormat::default(),
        }
    }
}

/// Top-level config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::shots")]
    pub shots: u64,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default = "defaults::feedforward")]
    pub feedforward: FeedforwardMode,
    #[serde(default = "defaults::threads")]
    pub threads: usize,
    #[serde(default = "defaults::bootstrap_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub table: Option<TableSection>,
    #[serde(default)]
    pub multistep: Option<MultistepSection>,
    #[serde(default)]
    pub trace_demo: Option<TraceDemoSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

mod defaults {
    pub fn seed() -> u64 {
        42
    }
    pub fn shots() -> u64 {
        38_600
    }
    pub fn feedforward() -> super::FeedforwardMode {
        super::FeedforwardMode::Postprocess
    }
    pub fn threads() -> usize {
        1
    }
    pub fn bootstrap_resamples() -> usize {
        1000
    }
    pub fn n_steps() -> usize {
        1
    }
    pub fn squeezing_db() -> f64 {
        -4.0
    }
    pub fn eta() -> f64 {
        1.0
    }
    pub fn delta_t_ns() -> f64 {
        40.0
    }
    pub fn rotation_grid() -> Vec<f64> {
        vec![0.0, 22.5, -22.5, 45.0, -45.0, 67.5, -67.5, 90.0, -90.0]
    }
    pub fn squeeze_grid() -> Vec<f64> {
        vec![
            15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0, 65.0, 70.0, 75.0,
        ]
    }
    pub fn shear_grid() -> Vec<f64> {
        vec![
            0.0, 10.0, -10.0, 20.0, -20.0, 30.0, -30.0, 45.0, -45.0, 60.0, -60.0,
        ]
    }
    pub fn n_list() -> Vec<usize> {
        vec![1, 2, 5, 10, 20, 50, 100]
    }
    pub fn frames() -> usize {
        2
    }
    pub fn noise_power() -> f64 {
        1.0
    }
    pub fn out_dir() -> String {
        "out".into()
    }
}

impl ExperimentConfig {
    /// Parse and validate a TOML config. Syntax and unknown-key errors come
    /// back with the parser's line/column message.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots < 1 {
            return Err(Error::Config("shots must be >= 1".into()));
        }
        if self.bootstrap_resamples < 2 {
            return Err(Error::Config("bootstrap_resamples must be >= 2".into()));
        }
        if self.threads < 1 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        self.chain
            .chain_config(self.chain.n_steps)
            .validate()
            .map_err(|e| Error::Config(format!("chain: {e}")))?;
        if self.chain.squeezing_db_x > 0.0 || self.chain.squeezing_db_p > 0.0 {
            return Err(Error::Config(
                "squeezing_db must be <= 0 (variance below vacuum)".into(),
            ));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.phi_deg.is_empty() {
                return Err(Error::Config("sweep.phi_deg must not be empty".into()));
            }
        }
        if let Some(table) = &self.table {
            for (name, list) in [
                ("table.rotation_phi_deg", &table.rotation_phi_deg),
                ("table.squeeze_phi_deg", &table.squeeze_phi_deg),
                ("table.shear_phi_deg", &table.shear_phi_deg),
            ] {
                if list.is_empty() {
                    return Err(Error::Config(format!("{name} must not be empty")));
                }
            }
        }
        if let Some(ms) = &self.multistep {
            if ms.n_list.is_empty() {
                return Err(Error::Config("multistep.n_list must not be empty".into()));
            }
        }
        if let Some(td) = &self.trace_demo {
            if td.frames < 1 {
                return Err(Error::Config("trace_demo.frames must be >= 1".into()));
            }
            if td.noise_power < 0.0 {
                return Err(Error::Config("trace_demo.noise_power must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Canonical single-line JSON of the resolved config, embedded in every
    /// output for replay.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn sha256_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
