//! Flat MLP reference model: concatenated lengths, anchors and offsets in,
//! pose out. Tied to one cable count.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cafknet::{masked_mse, Normalization};
use super::mlp::Mlp;
use super::{FkModel, LossMask, NnError, Parameters};
use crate::geometry::Pose;
use crate::graph::CdprGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpBaseline {
    pub cable_count: usize,
    pub normalization: Normalization,
    pub mlp: Mlp,
}

impl MlpBaseline {
    pub fn new(cable_count: usize, width: usize, hidden_layers: usize, rng: &mut impl Rng) -> Self {
        let mut dims = vec![7 * cable_count];
        dims.extend(std::iter::repeat(width).take(hidden_layers));
        dims.push(6);
        Self { cable_count, normalization: Normalization::default(), mlp: Mlp::new(&dims, rng) }
    }

    fn inputs(&self, graphs: &[&CdprGraph]) -> Result<Array2<f64>, NnError> {
        if graphs.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let m = self.cable_count;
        let ls = self.normalization.length_scale;
        let mut x = Array2::zeros((graphs.len(), 7 * m));
        for (r, g) in graphs.iter().enumerate() {
            if g.cable_count() != m {
                return Err(NnError::CableCountMismatch { expected: m, found: g.cable_count() });
            }
            for i in 0..m {
                x[(r, i)] = g.cable_features[i] / ls;
                for k in 0..3 {
                    x[(r, m + 3 * i + k)] = g.edge_wc_features[i][k] / ls;
                    x[(r, 4 * m + 3 * i + k)] = g.edge_cb_features[i][k] / ls;
                }
            }
        }
        Ok(x)
    }
}

impl Parameters for MlpBaseline {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.mlp.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.mlp.visit_mut(f);
    }
}

impl FkModel for MlpBaseline {
    fn predict(&self, graphs: &[&CdprGraph]) -> Result<Vec<Pose>, NnError> {
        let y = self.mlp.infer(self.inputs(graphs)?.view());
        Ok(y.rows()
            .into_iter()
            .map(|r| Pose::from_array(self.normalization.pose_from_unit([r[0], r[1], r[2], r[3], r[4], r[5]])))
            .collect())
    }

    fn loss_and_grad(&self, graphs: &[&CdprGraph], targets: &[Pose], mask: LossMask, grads: &mut Self) -> Result<f64, NnError> {
        if graphs.len() != targets.len() {
            return Err(NnError::ShapeMismatch { expected: graphs.len(), found: targets.len() });
        }
        let (y, tape) = self.mlp.forward(self.inputs(graphs)?);
        let t: Vec<[f64; 6]> = targets.iter().map(|p| self.normalization.pose_to_unit(p.to_array())).collect();
        let (loss, dy) = masked_mse(&y, &t, mask);
        self.mlp.backward(&tape, dy, &mut grads.mlp);
        Ok(loss)
    }

    fn zeros_like(&self) -> Self {
        Self { cable_count: self.cable_count, normalization: self.normalization, mlp: self.mlp.zeros_like() }
    }
}
