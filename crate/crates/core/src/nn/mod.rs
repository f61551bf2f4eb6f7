//! Neural building blocks: MLPs with hand-written reverse mode, Adam, the
//! graph network forward kinematics model and a flat MLP baseline.

pub mod adam;
pub mod baseline;
pub mod cafknet;
pub mod checkpoint;
pub mod mlp;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Pose;
use crate::graph::CdprGraph;

pub use adam::AdamState;
pub use baseline::MlpBaseline;
pub use cafknet::{ArchSpec, CafkNetModel, HiddenState, Normalization};
pub use checkpoint::Checkpoint;
pub use mlp::Mlp;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("model has no decoder head for configuration `{0}`")]
    UnknownHead(String),
    #[error("model expects {expected} cables, graph has {found}")]
    CableCountMismatch { expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Flat view over every trainable parameter, in a fixed order.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut at = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&values[at..at + s.len()]);
            at += s.len();
        });
        assert_eq!(at, values.len(), "parameter vector length");
    }

    /// SHA-256 over the little-endian bit patterns of all parameters.
    fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        self.visit(&mut |s| {
            for v in s {
                h.update(v.to_bits().to_le_bytes());
            }
        });
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Which pose components enter the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum LossMask {
    /// `x, y, z` only.
    #[default]
    Position,
    /// All six components.
    Full,
}

impl LossMask {
    pub fn components(self) -> &'static [usize] {
        match self {
            LossMask::Position => &[0, 1, 2],
            LossMask::Full => &[0, 1, 2, 3, 4, 5],
        }
    }
}

/// A trainable forward kinematics model over robot graphs.
pub trait FkModel: Parameters + Clone {
    fn predict(&self, graphs: &[&CdprGraph]) -> Result<Vec<Pose>, NnError>;

    /// Mean over the batch of the squared normalized error on the masked pose
    /// components. Gradients are accumulated into `grads`.
    fn loss_and_grad(&self, graphs: &[&CdprGraph], targets: &[Pose], mask: LossMask, grads: &mut Self) -> Result<f64, NnError>;

    fn zeros_like(&self) -> Self;
}
