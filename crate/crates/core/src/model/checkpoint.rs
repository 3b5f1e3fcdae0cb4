use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, VelocityModel};
use crate::error::{Error, Result};
use crate::interpolant::Schedule;

pub const CHECKPOINT_FORMAT: &str = "confrefine-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing JSON container: hyperparameters, the training schedule
/// and noise scale, and the flat parameter vector. Floats are written in
/// shortest round-trip form, so save/load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub schedule: Schedule,
    /// Base-noise scale σ the model was trained with.
    pub sigma: f64,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(model: &VelocityModel, schedule: Schedule, sigma: f64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: model.config().clone(),
            schedule,
            sigma,
            params: model.params().to_vec(),
        }
    }

    pub fn model(&self) -> Result<VelocityModel> {
        VelocityModel::from_params(self.config.clone(), self.params.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format tag {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        ck.model()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = VelocityModel::zeros(ModelConfig {
            hidden: 8,
            ..ModelConfig::default()
        })
        .unwrap();
        model.init_uniform(&mut rng, true);
        model.params_mut()[0] = 1.0 / 3.0;
        model.params_mut()[1] = -1e-300;
        let ck = Checkpoint::new(&model, Schedule::refiner(), 1.0);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        let restored = back.model().unwrap();
        for (a, b) in restored.params().iter().zip(model.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_wrong_version_and_length() {
        let model = VelocityModel::zeros(ModelConfig::default()).unwrap();
        let mut ck = Checkpoint::new(&model, Schedule::generator(), 1.0);
        ck.version = 99;
        assert!(Checkpoint::from_json(&ck.to_json()).is_err());
        ck.version = CHECKPOINT_VERSION;
        ck.params.pop();
        assert!(Checkpoint::from_json(&ck.to_json()).is_err());
    }
}
