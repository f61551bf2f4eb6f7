//! Heterogeneous graph view of a robot instance.
//!
//! One world node, `m` cable nodes and one body node; `m` world-to-cable edges
//! carrying the frame anchors and `m` cable-to-body edges carrying the
//! body-frame attachment offsets. Features are stored raw, in mm.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{CableLengths, CdprConfig};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("config `{config}` has {expected} cables but {found} lengths were given")]
    ConfigMismatch { config: String, expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdprGraph {
    /// Name of the configuration the graph was built from.
    pub config: String,
    pub world_feature: [f64; 3],
    pub body_feature: [f64; 6],
    pub cable_features: Vec<f64>,
    pub edge_wc_features: Vec<[f64; 3]>,
    pub edge_cb_features: Vec<[f64; 3]>,
    /// `cable_order[k]` is the original index of the cable stored at slot `k`.
    pub cable_order: Vec<usize>,
}

impl CdprGraph {
    pub fn cable_count(&self) -> usize {
        self.cable_features.len()
    }

    pub fn node_count(&self) -> usize {
        self.cable_count() + 2
    }

    pub fn edge_count(&self) -> usize {
        self.edge_wc_features.len() + self.edge_cb_features.len()
    }

    /// Reorders the cable nodes (and their edges): slot `k` receives slot `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.cable_count(), "permutation length");
        Self {
            config: self.config.clone(),
            world_feature: self.world_feature,
            body_feature: self.body_feature,
            cable_features: perm.iter().map(|&i| self.cable_features[i]).collect(),
            edge_wc_features: perm.iter().map(|&i| self.edge_wc_features[i]).collect(),
            edge_cb_features: perm.iter().map(|&i| self.edge_cb_features[i]).collect(),
            cable_order: perm.iter().map(|&i| self.cable_order[i]).collect(),
        }
    }

    /// Plain-text dump for debugging, one node or edge per line.
    pub fn to_dump_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# cdprkit-graph v1");
        let _ = writeln!(out, "# config: {}", self.config);
        let _ = writeln!(out, "# cables: {}", self.cable_count());
        let _ = writeln!(out, "# columns: kind,index,features...");
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "world,0,{}", join(&self.world_feature));
        for (k, l) in self.cable_features.iter().enumerate() {
            let _ = writeln!(out, "cable,{},{}", self.cable_order[k], l);
        }
        let _ = writeln!(out, "body,0,{}", join(&self.body_feature));
        for (k, e) in self.edge_wc_features.iter().enumerate() {
            let _ = writeln!(out, "edge_wc,{},{}", self.cable_order[k], join(e));
        }
        for (k, e) in self.edge_cb_features.iter().enumerate() {
            let _ = writeln!(out, "edge_cb,{},{}", self.cable_order[k], join(e));
        }
        out
    }
}

/// Builds the graph for `config` with measured cable `lengths`.
///
/// The cable-to-body edge carries the body-frame offset of the attachment
/// point rather than its world position, which depends on the unknown pose.
pub fn build_graph(config: &CdprConfig, lengths: &CableLengths) -> Result<CdprGraph, GraphError> {
    let m = config.cable_count();
    if lengths.len() != m {
        return Err(GraphError::ConfigMismatch {
            config: config.name().to_string(),
            expected: m,
            found: lengths.len(),
        });
    }
    let arr = |v: &nalgebra::Vector3<f64>| [v.x, v.y, v.z];
    Ok(CdprGraph {
        config: config.name().to_string(),
        world_feature: [0.0; 3],
        body_feature: [0.0; 6],
        cable_features: lengths.as_slice().to_vec(),
        edge_wc_features: config.frame_anchors().iter().map(arr).collect(),
        edge_cb_features: config.ee_offsets().iter().map(arr).collect(),
        cable_order: (0..m).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{bundled, inverse_kinematics, Pose};

    #[test]
    fn counts_for_four_cables() {
        let c = bundled("SimC4").unwrap();
        let g = build_graph(&c, &CableLengths::new(vec![500.0; 4]).unwrap()).unwrap();
        assert_eq!(g.node_count(), 6);
        assert_eq!(g.edge_count(), 8);
        assert_eq!(g.world_feature, [0.0; 3]);
        assert_eq!(g.body_feature, [0.0; 6]);
        assert_eq!(g.config, "SimC4");
    }

    #[test]
    fn zero_lengths_pass_through() {
        let c = bundled("SimC7").unwrap();
        let g = build_graph(&c, &CableLengths::new(vec![0.0; 7]).unwrap()).unwrap();
        assert!(g.cable_features.iter().all(|&l| l == 0.0));
        assert_eq!(g.edge_wc_features[6], [500.0, 1000.0, 0.0]);
        assert_eq!(g.edge_cb_features[6], [0.0, -50.0, -50.0]);
    }

    #[test]
    fn cable_features_equal_ik() {
        let c = bundled("SimC8").unwrap();
        let pose = Pose::new(321.0, 654.0, 222.0, -0.1, 0.2, 0.0);
        let l = inverse_kinematics(&c, &pose);
        let g = build_graph(&c, &l).unwrap();
        assert_eq!(g.cable_features, l.as_slice());
    }

    #[test]
    fn mismatch_is_reported() {
        let c = bundled("SimC6").unwrap();
        let err = build_graph(&c, &CableLengths::new(vec![1.0; 4]).unwrap()).unwrap_err();
        assert!(matches!(err, GraphError::ConfigMismatch { expected: 6, found: 4, .. }));
    }

    #[test]
    fn relabeling_commutes_with_construction() {
        let c = bundled("SimC9").unwrap();
        let pose = Pose::new(500.0, 450.0, 610.0, 0.05, -0.1, 0.0);
        let perm = [3, 0, 8, 1, 7, 2, 6, 4, 5];
        let g = build_graph(&c, &inverse_kinematics(&c, &pose)).unwrap();
        let pc = c.permuted(&perm);
        let pg = build_graph(&pc, &inverse_kinematics(&pc, &pose)).unwrap();
        let relabeled = g.permuted(&perm);
        assert_eq!(pg.cable_features, relabeled.cable_features);
        assert_eq!(pg.edge_wc_features, relabeled.edge_wc_features);
        assert_eq!(pg.edge_cb_features, relabeled.edge_cb_features);
        assert_eq!(relabeled.cable_order, perm);
    }

    #[test]
    fn dump_lists_every_node_and_edge() {
        let c = bundled("SimC5").unwrap();
        let g = build_graph(&c, &inverse_kinematics(&c, &c.bounds_center())).unwrap();
        let dump = g.to_dump_string();
        let rows = dump.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(rows, g.node_count() + g.edge_count());
    }
}
