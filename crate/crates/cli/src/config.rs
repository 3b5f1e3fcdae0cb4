//! Run configuration: a TOML file of per-command sections, overridden by
//! command-line flags, resolved against the global seed and written back
//! out as a snapshot next to each run's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use confrefine::data::ToyDatasetSpec;
use confrefine::interpolant::Schedule;
use confrefine::model::ModelConfig;
use confrefine::pipeline::TrainConfig;
use confrefine::seeding;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "CONFREFINE_OUT";
pub const DEFAULT_OUT: &str = "confrefine-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    /// Omit wall-clock fields from run records.
    pub deterministic: bool,
    pub out: Option<PathBuf>,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub generator: TrainConfig,
    pub refiner: TrainConfig,
    pub sample: SampleSection,
    pub eval: EvalConfig,
    pub diagnose: DiagnoseConfig,
    pub bound: BoundConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig {
            epochs: 1200,
            batch_size: 32,
            learning_rate: 3e-3,
            final_learning_rate: Some(1.5e-4),
            ..TrainConfig::default()
        };
        Self {
            seed: 0,
            jobs: 1,
            deterministic: false,
            out: None,
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            generator: TrainConfig {
                schedule: Schedule::generator(),
                ..train.clone()
            },
            refiner: train,
            sample: SampleSection::default(),
            eval: EvalConfig::default(),
            diagnose: DiagnoseConfig::default(),
            bound: BoundConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub train: ToyDatasetSpec,
    pub eval: ToyDatasetSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train: ToyDatasetSpec::default(),
            eval: ToyDatasetSpec {
                n_molecules: 20,
                id_prefix: "eval".into(),
                ..ToyDatasetSpec::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    pub generator_steps: usize,
    pub refiner_steps: usize,
    /// Conformers generated per reference conformer.
    pub samples_per_reference: usize,
    /// Noise scale of generation; the generator's training σ when absent.
    pub generator_sigma: Option<f64>,
    /// Write per-step trajectory dumps when refining.
    pub trajectories: bool,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self {
            generator_steps: 20,
            refiner_steps: 20,
            samples_per_reference: 2,
            generator_sigma: None,
            trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Coverage threshold in Å.
    pub delta: f64,
    /// Improvement/downgrade tolerances in Å.
    pub taus: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            delta: 0.5,
            taus: vec![0.05, 0.1, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseConfig {
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
    /// Noise scale of the degree sweep and pair-perturbation probe.
    pub sigma: f64,
    /// Noisy states per grid time in the degree sweep.
    pub n_samples: usize,
    pub pair_samples: usize,
    pub bins: usize,
    /// Conformers per molecule used for speed histograms and traces.
    pub conformers_per_molecule: usize,
    /// Steps starting before this time count as the generator's early phase.
    pub early_time: f64,
    pub heavy_atoms_only: bool,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            radii: vec![2.5, 5.0],
            times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            sigma: 1.0,
            n_samples: 200,
            pair_samples: 100_000,
            bins: 40,
            conformers_per_molecule: 4,
            early_time: 0.5,
            heavy_atoms_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConfig {
    pub n_atoms: usize,
    pub sigma_star: f64,
    pub qk: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            n_atoms: 10,
            sigma_star: 1.0,
            qk: 1.96,
        }
    }
}

/// Purposes of seeds derived from the global one.
#[derive(Debug, Clone, Copy)]
pub enum SeedUse {
    TrainData = 0,
    EvalData = 1,
    GeneratorInit = 2,
    RefinerInit = 3,
    GeneratorTraining = 4,
    RefinerTraining = 5,
    Sampling = 6,
    Diagnostics = 7,
}

/// Kept below 2⁶³ so the value survives a TOML round trip.
pub fn derived_seed(seed: u64, purpose: SeedUse) -> u64 {
    seeding::stream(seed, purpose as u64).next_u64() >> 1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Parses `text` layered key by key over the defaults, so a partial
    /// `[generator]` section keeps the generator schedule and epochs.
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        let file: toml::Table = toml::from_str(text)?;
        let mut merged = toml::Table::try_from(Self::default()).expect("defaults serialize");
        overlay(&mut merged, file);
        merged.try_into()
    }

    /// Writes every seed that derives from the global one.
    pub fn resolve(&mut self) {
        self.synth.train.seed = derived_seed(self.seed, SeedUse::TrainData);
        self.synth.eval.seed = derived_seed(self.seed, SeedUse::EvalData);
        self.generator.seed = derived_seed(self.seed, SeedUse::GeneratorTraining);
        self.refiner.seed = derived_seed(self.seed, SeedUse::RefinerTraining);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.jobs == 0 {
            return bad("jobs must be at least 1");
        }
        if self.sample.generator_steps == 0 || self.sample.refiner_steps == 0 {
            return bad("step counts must be at least 1");
        }
        if self.sample.samples_per_reference == 0 {
            return bad("samples_per_reference must be at least 1");
        }
        if !(self.eval.delta > 0.0) || self.eval.taus.iter().any(|t| !(*t >= 0.0)) {
            return bad("delta must be positive and taus non-negative");
        }
        if self.diagnose.radii.iter().any(|r| !(*r > 0.0)) {
            return bad("radii must be positive");
        }
        if self.diagnose.times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return bad("diagnostic times must lie in [0, 1]");
        }
        let checks = [
            self.synth.train.validate(),
            self.synth.eval.validate(),
            self.model.validate(),
            self.generator.validate(),
            self.refiner.validate(),
        ];
        for c in checks {
            c.map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    /// Flag, then config file, then environment, then the built-in default.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RunConfig {
            seed: 17,
            ..RunConfig::default()
        };
        cfg.resolve();
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let text = "seed = 3\n[model]\nhidden = 16\n[eval]\ndelta = 0.75\n[generator]\nepochs = 5\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.model.hidden, 16);
        assert_eq!(cfg.model.layers, ModelConfig::default().layers);
        assert_eq!(cfg.eval.delta, 0.75);
        assert_eq!(cfg.generator.schedule, Schedule::generator());
        assert_eq!(cfg.generator.epochs, 5);
        assert_eq!(cfg.generator.learning_rate, RunConfig::default().generator.learning_rate);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("sed = 3\n").is_err());
        assert!(RunConfig::from_toml("[model]\nhiden = 3\n").is_err());
        assert!(RunConfig::from_toml("[synth.train]\nchains = 3\n").is_err());
    }

    #[test]
    fn seeds_follow_the_global_seed() {
        let mut a = RunConfig::default();
        let mut b = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        a.resolve();
        b.resolve();
        assert_ne!(a.synth.train.seed, b.synth.train.seed);
        assert_ne!(a.synth.train.seed, a.synth.eval.seed);
        let mut c = a.clone();
        c.resolve();
        assert_eq!(a, c);
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.eval.delta = 0.0;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.model.hidden = 0;
        assert!(cfg.validate().is_err());
    }
}
