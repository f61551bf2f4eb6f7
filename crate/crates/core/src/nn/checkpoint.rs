//! Model checkpoints as versioned JSON. Floats are written in shortest
//! round-trip form, so a save/load cycle restores every bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CafkNetModel, MlpBaseline, NnError};

pub const CHECKPOINT_FORMAT: &str = "cdprkit-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum Checkpoint {
    Cafknet(CafkNetModel),
    MlpBaseline(MlpBaseline),
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: Checkpoint,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let env = Envelope { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, body: self.clone() };
        serde_json::to_string(&env).expect("models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let env: Envelope = serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if env.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unexpected format `{}`", env.format)));
        }
        if env.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {}", env.version)));
        }
        Ok(env.body)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| NnError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| NnError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ArchSpec, Parameters};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let arch = ArchSpec { hidden_dim: 8, mlp_width: 8, mlp_hidden_layers: 2, depth: 2 };
        let model = CafkNetModel::new_multi_task(arch, &["SimC4", "SimC8"], &mut ChaCha8Rng::seed_from_u64(3));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        Checkpoint::Cafknet(model.clone()).save(&path).unwrap();
        let Checkpoint::Cafknet(back) = Checkpoint::load(&path).unwrap() else { panic!("wrong kind") };
        assert_eq!(back.param_hash(), model.param_hash());
        assert_eq!(back, model);

        let base = MlpBaseline::new(5, 4, 1, &mut ChaCha8Rng::seed_from_u64(4));
        let text = Checkpoint::MlpBaseline(base.clone()).to_json();
        assert_eq!(Checkpoint::from_json(&text).unwrap(), Checkpoint::MlpBaseline(base));
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(matches!(Checkpoint::from_json("{}"), Err(NnError::Checkpoint(_))));
        let arch = ArchSpec { hidden_dim: 2, mlp_width: 2, mlp_hidden_layers: 1, depth: 1 };
        let m = CafkNetModel::new(arch, &mut ChaCha8Rng::seed_from_u64(0));
        let text = Checkpoint::Cafknet(m).to_json().replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(Checkpoint::from_json(&text), Err(NnError::Checkpoint(_))));
    }
}
