//! Experiment configuration. Precedence: JSON file, then `UFOCTL_SEED`,
//! then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ufo_core::evaluate::RobustnessSpec;
use ufo_core::targets::parse_target;
use ufo_core::Target;
use ufo_learn::baseline::SgdConfig;
use ufo_learn::env::EnvConfig;
use ufo_learn::trpo::TrpoConfig;

use crate::error::CliError;

pub const SEED_ENV: &str = "UFOCTL_SEED";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Rl,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSettings {
    pub trpo: TrpoConfig,
    pub iterations: usize,
    /// Episodes per batch at the original scale, kept for reference only.
    pub paper_scale_episodes: usize,
}

impl Default for RlSettings {
    fn default() -> Self {
        Self { trpo: TrpoConfig::default(), iterations: 50, paper_scale_episodes: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub gamma: f64,
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub alpha_step: f64,
    /// RL iterations per α, or the SGD iteration count per candidate length.
    pub budget: usize,
    /// Candidate gate lengths (in steps) tried by the SGD sweep.
    pub sgd_length_step: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            gamma: std::f64::consts::FRAC_PI_2,
            alpha_start: 0.1,
            alpha_end: std::f64::consts::PI,
            alpha_step: ufo_learn::train::ALPHA_STEP,
            budget: 20,
            sgd_length_step: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: String,
    pub optimizer: Optimizer,
    /// Master seed; agent, baseline, environment noise and evaluation
    /// noise all derive from it.
    pub seed: u64,
    pub env: EnvConfig,
    pub rl: RlSettings,
    pub sgd: SgdConfig,
    pub robustness: RobustnessSpec,
    pub sweep: SweepSettings,
    /// Haar states for the Monte-Carlo average fidelity; zero skips it.
    pub haar_states: usize,
    /// Not part of the configuration hash.
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            target: "CZ".into(),
            optimizer: Optimizer::Rl,
            seed: 0,
            env: EnvConfig::default(),
            rl: RlSettings::default(),
            sgd: SgdConfig::default(),
            robustness: RobustnessSpec::default(),
            sweep: SweepSettings::default(),
            haar_states: 10_000,
            output_dir: PathBuf::from("ufoctl-out"),
        }
    }
}

/// Where a configuration came from, for error messages.
#[derive(Clone, Debug, Default)]
pub struct Source {
    pub path: Option<PathBuf>,
    pub text: Option<String>,
}

impl Source {
    /// `file:line` of the first occurrence of `"key"`, or the bare file name.
    pub fn locate(&self, key: &str) -> String {
        let file = self.path.as_ref().map_or_else(|| "<flags>".to_string(), |p| p.display().to_string());
        let needle = format!("\"{key}\"");
        match self.text.as_ref().and_then(|t| t.lines().position(|l| l.contains(&needle))) {
            Some(line) => format!("{file}:{}", line + 1),
            None => file,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: Option<&Path>) -> Result<(Self, Source), CliError> {
        let source = Source { path: path.map(Path::to_path_buf), text: Some(text.to_string()) };
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            let file = path.map_or_else(|| "<config>".to_string(), |p| p.display().to_string());
            CliError::Config(format!("{file}:{}:{}: {e}", e.line(), e.column()))
        })?;
        Ok((cfg, source))
    }

    pub fn load(path: &Path) -> Result<(Self, Source), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, Some(path))
    }

    /// Pushes the master seed into every component.
    pub fn propagate_seed(&mut self) {
        self.rl.trpo.seed = self.seed;
        self.sgd.seed = self.seed;
        self.env.noise.seed = self.seed;
        self.sgd.noise.seed = self.seed;
    }

    pub fn target(&self) -> Result<Target, CliError> {
        parse_target(&self.target).map_err(|e| CliError::Config(format!("target: {e}")))
    }

    /// Range checks with the location of the offending key.
    pub fn validate(&self, source: &Source) -> Result<(), CliError> {
        let fail = |key: &str, msg: String| Err(CliError::Config(format!("{}: {msg}", source.locate(key))));
        if let Err(e) = self.target() {
            return fail("target", e.to_string());
        }
        if let Err(e) = self.env.validate() {
            return fail("env", e.to_string());
        }
        if let Err(e) = self.rl.trpo.validate() {
            return fail("trpo", e.to_string());
        }
        if self.rl.iterations == 0 {
            return fail("iterations", "rl.iterations must be positive".into());
        }
        if let Err(e) = self.sgd.validate() {
            return fail("sgd", e.to_string());
        }
        if self.sgd.iters == 0 {
            return fail("iters", "sgd.iters must be positive".into());
        }
        if let Err(e) = self.robustness.validate() {
            return fail("robustness", e.to_string());
        }
        let s = &self.sweep;
        if !(s.alpha_step > 0.0) || !(s.alpha_start <= s.alpha_end) || !s.alpha_start.is_finite() || !s.alpha_end.is_finite() {
            return fail("sweep", "sweep needs alpha_start ≤ alpha_end and alpha_step > 0".into());
        }
        if s.budget == 0 || s.sgd_length_step == 0 {
            return fail("budget", "sweep budget and sgd_length_step must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("output_dir");
        }
        let digest = Sha256::digest(serde_json::to_string(&v).expect("value serializes").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_hash_is_stable() {
        let c = ExperimentConfig::default();
        c.validate(&Source::default()).unwrap();
        assert_eq!(c.hash(), c.clone().hash());
        assert_eq!(c.hash().len(), 64);
        let moved = ExperimentConfig { output_dir: "elsewhere".into(), ..c.clone() };
        assert_eq!(moved.hash(), c.hash());
        let other = ExperimentConfig { seed: 1, ..c.clone() };
        assert_ne!(other.hash(), c.hash());
    }

    #[test]
    fn errors_point_at_lines() {
        let text = "{\n  \"target\": \"CZ\",\n  \"env\": {\n    \"dt_ns\": -1.0\n  }\n}";
        let (c, src) = ExperimentConfig::from_json(text, Some(Path::new("c.json"))).unwrap();
        let err = c.validate(&src).unwrap_err().to_string();
        assert!(err.contains("c.json:3"), "{err}");
        let bad = ExperimentConfig::from_json("{\n \"targt\": 1\n}", Some(Path::new("c.json"))).unwrap_err();
        assert!(bad.to_string().contains("c.json:2"), "{bad}");
    }
}
