//! Graph network forward kinematics model.
//!
//! Every node and edge feature is lifted to `H` dimensions by a per-role
//! encoder. Each propagation block sends a message from the world node to every
//! cable node, folds it in with an elementwise max, then sends a message from
//! every cable node to the body node and folds those in the same way. The body
//! state is decoded to a pose.
//!
//! On exact ties the max keeps the incumbent state; among equal messages the
//! cable stored first wins. Gradients follow the same selection.

use ndarray::{s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpTape};
use super::{FkModel, LossMask, NnError, Parameters};
use crate::geometry::Pose;
use crate::graph::CdprGraph;

/// Layer sizes shared by every MLP in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub hidden_dim: usize,
    pub mlp_width: usize,
    pub mlp_hidden_layers: usize,
    /// Number of propagation blocks.
    pub depth: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self { hidden_dim: 128, mlp_width: 128, mlp_hidden_layers: 2, depth: 2 }
    }
}

impl ArchSpec {
    fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(std::iter::repeat(self.mlp_width).take(self.mlp_hidden_layers));
        d.push(output);
        d
    }
}

/// Scales applied to raw features and undone on the predicted pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// mm per unit, for lengths and positions.
    pub length_scale: f64,
    /// rad per unit.
    pub angle_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { length_scale: 1000.0, angle_scale: std::f64::consts::PI }
    }
}

impl Normalization {
    pub fn pose_to_unit(&self, p: [f64; 6]) -> [f64; 6] {
        let (l, a) = (self.length_scale, self.angle_scale);
        [p[0] / l, p[1] / l, p[2] / l, p[3] / a, p[4] / a, p[5] / a]
    }

    pub fn pose_from_unit(&self, u: [f64; 6]) -> [f64; 6] {
        let (l, a) = (self.length_scale, self.angle_scale);
        [u[0] * l, u[1] * l, u[2] * l, u[3] * a, u[4] * a, u[5] * a]
    }
}

/// A decoder. `config = None` is the shared head used for any configuration
/// without a dedicated one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub config: Option<String>,
    pub mlp: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CafkNetModel {
    pub arch: ArchSpec,
    pub normalization: Normalization,
    pub enc_world: Mlp,
    pub enc_cable: Mlp,
    pub enc_body: Mlp,
    pub enc_edge_wc: Mlp,
    pub enc_edge_cb: Mlp,
    pub gamma_wc: Mlp,
    pub gamma_cb: Mlp,
    pub heads: Vec<Head>,
}

/// Hidden vectors for a batch of graphs. Rows of `world` and `body` are per
/// graph; rows of `cable`, `edge_wc` and `edge_cb` are per cable, with
/// `cable_graph[c]` naming the owning graph.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub cable_graph: Vec<usize>,
    pub world: Array2<f64>,
    pub cable: Array2<f64>,
    pub body: Array2<f64>,
    pub edge_wc: Array2<f64>,
    pub edge_cb: Array2<f64>,
}

impl HiddenState {
    pub fn graph_count(&self) -> usize {
        self.world.nrows()
    }
}

struct GraphBatch {
    cable_graph: Vec<usize>,
    heads: Vec<usize>,
    world: Array2<f64>,
    body: Array2<f64>,
    cable: Array2<f64>,
    edge_wc: Array2<f64>,
    edge_cb: Array2<f64>,
}

struct EncodeTape {
    world: MlpTape,
    cable: MlpTape,
    body: MlpTape,
    edge_wc: MlpTape,
    edge_cb: MlpTape,
}

const INCUMBENT: u32 = u32::MAX;

struct BlockTape {
    wc: MlpTape,
    /// Per cable and channel: the world message replaced the cable state.
    took_message: Vec<bool>,
    cb: MlpTape,
    /// Per graph and channel: the cable whose message won, or `INCUMBENT`.
    body_source: Vec<u32>,
}

struct HeadTape {
    head: usize,
    rows: Vec<usize>,
    tape: MlpTape,
}

struct ForwardTape {
    encode: EncodeTape,
    blocks: Vec<BlockTape>,
    heads: Vec<HeadTape>,
}

/// Concatenates `[a[ia[c]], b[ib[c]], e[c]]` row by row.
fn concat_rows(a: &Array2<f64>, ia: Option<&[usize]>, b: &Array2<f64>, ib: Option<&[usize]>, e: &Array2<f64>) -> Array2<f64> {
    let (n, h) = (e.nrows(), e.ncols());
    let mut x = Array2::zeros((n, 3 * h));
    for c in 0..n {
        let ra = ia.map_or(c, |i| i[c]);
        let rb = ib.map_or(c, |i| i[c]);
        let mut row = x.row_mut(c);
        row.slice_mut(s![0..h]).assign(&a.row(ra));
        row.slice_mut(s![h..2 * h]).assign(&b.row(rb));
        row.slice_mut(s![2 * h..3 * h]).assign(&e.row(c));
    }
    x
}

/// Elementwise `h <- max(h, m)`; returns where `m` strictly won.
pub fn max_update(h: &mut [f64], m: &[f64]) -> Vec<bool> {
    h.iter_mut()
        .zip(m)
        .map(|(a, &b)| {
            if b > *a {
                *a = b;
                true
            } else {
                false
            }
        })
        .collect()
}

impl CafkNetModel {
    /// Model with one shared decoder head.
    pub fn new(arch: ArchSpec, rng: &mut impl Rng) -> Self {
        Self::with_heads(arch, &[None], rng)
    }

    /// Model with one decoder head per named configuration.
    pub fn new_multi_task(arch: ArchSpec, configs: &[&str], rng: &mut impl Rng) -> Self {
        let names: Vec<Option<String>> = configs.iter().map(|c| Some(c.to_string())).collect();
        Self::with_heads(arch, &names, rng)
    }

    fn with_heads(arch: ArchSpec, heads: &[Option<String>], rng: &mut impl Rng) -> Self {
        assert!(arch.hidden_dim > 0 && arch.depth > 0 && arch.mlp_width > 0, "architecture sizes must be positive");
        let h = arch.hidden_dim;
        let enc_world = Mlp::new(&arch.dims(3, h), rng);
        let enc_cable = Mlp::new(&arch.dims(1, h), rng);
        let enc_body = Mlp::new(&arch.dims(6, h), rng);
        let enc_edge_wc = Mlp::new(&arch.dims(3, h), rng);
        let enc_edge_cb = Mlp::new(&arch.dims(3, h), rng);
        let gamma_wc = Mlp::new(&arch.dims(3 * h, h), rng);
        let gamma_cb = Mlp::new(&arch.dims(3 * h, h), rng);
        let heads = heads
            .iter()
            .map(|c| Head { config: c.clone(), mlp: Mlp::new(&arch.dims(h, 6), rng) })
            .collect();
        Self {
            arch,
            normalization: Normalization::default(),
            enc_world,
            enc_cable,
            enc_body,
            enc_edge_wc,
            enc_edge_cb,
            gamma_wc,
            gamma_cb,
            heads,
        }
    }

    pub fn head_names(&self) -> Vec<Option<&str>> {
        self.heads.iter().map(|h| h.config.as_deref()).collect()
    }

    /// Index of the decoder used for `config`: its own head if registered,
    /// otherwise the shared head.
    pub fn head_for(&self, config: &str) -> Result<usize, NnError> {
        self.heads
            .iter()
            .position(|h| h.config.as_deref().is_some_and(|c| c.eq_ignore_ascii_case(config)))
            .or_else(|| self.heads.iter().position(|h| h.config.is_none()))
            .ok_or_else(|| NnError::UnknownHead(config.to_string()))
    }

    fn batch(&self, graphs: &[&CdprGraph]) -> Result<GraphBatch, NnError> {
        if graphs.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let nb = graphs.len();
        let nc: usize = graphs.iter().map(|g| g.cable_count()).sum();
        let ls = self.normalization.length_scale;
        let mut b = GraphBatch {
            cable_graph: Vec::with_capacity(nc),
            heads: Vec::with_capacity(nb),
            world: Array2::zeros((nb, 3)),
            body: Array2::zeros((nb, 6)),
            cable: Array2::zeros((nc, 1)),
            edge_wc: Array2::zeros((nc, 3)),
            edge_cb: Array2::zeros((nc, 3)),
        };
        let mut c = 0;
        for (gi, g) in graphs.iter().enumerate() {
            b.heads.push(self.head_for(&g.config)?);
            for k in 0..3 {
                b.world[(gi, k)] = g.world_feature[k] / ls;
            }
            let body = self.normalization.pose_to_unit(g.body_feature);
            for k in 0..6 {
                b.body[(gi, k)] = body[k];
            }
            for i in 0..g.cable_count() {
                b.cable_graph.push(gi);
                b.cable[(c, 0)] = g.cable_features[i] / ls;
                for k in 0..3 {
                    b.edge_wc[(c, k)] = g.edge_wc_features[i][k] / ls;
                    b.edge_cb[(c, k)] = g.edge_cb_features[i][k] / ls;
                }
                c += 1;
            }
        }
        Ok(b)
    }

    fn encode_batch(&self, b: &GraphBatch) -> (HiddenState, EncodeTape) {
        let (world, tw) = self.enc_world.forward(b.world.clone());
        let (cable, tc) = self.enc_cable.forward(b.cable.clone());
        let (body, tb) = self.enc_body.forward(b.body.clone());
        let (edge_wc, te) = self.enc_edge_wc.forward(b.edge_wc.clone());
        let (edge_cb, tf) = self.enc_edge_cb.forward(b.edge_cb.clone());
        (
            HiddenState { cable_graph: b.cable_graph.clone(), world, cable, body, edge_wc, edge_cb },
            EncodeTape { world: tw, cable: tc, body: tb, edge_wc: te, edge_cb: tf },
        )
    }

    fn block(&self, state: &mut HiddenState) -> BlockTape {
        let cg = &state.cable_graph;
        let x_wc = concat_rows(&state.world, Some(cg), &state.cable, None, &state.edge_wc);
        let (m_wc, wc) = self.gamma_wc.forward(x_wc);
        let took_message = max_update(
            state.cable.as_slice_mut().expect("standard layout"),
            m_wc.as_slice().expect("standard layout"),
        );

        let x_cb = concat_rows(&state.cable, None, &state.body, Some(cg), &state.edge_cb);
        let (m_cb, cb) = self.gamma_cb.forward(x_cb);
        let h = self.arch.hidden_dim;
        let mut body_source = vec![INCUMBENT; state.body.len()];
        for (c, &g) in cg.iter().enumerate() {
            for j in 0..h {
                let v = m_cb[(c, j)];
                if v > state.body[(g, j)] {
                    state.body[(g, j)] = v;
                    body_source[g * h + j] = c as u32;
                }
            }
        }
        BlockTape { wc, took_message, cb, body_source }
    }

    fn decode(&self, body: &Array2<f64>, heads: &[usize]) -> (Array2<f64>, Vec<HeadTape>) {
        let mut out = Array2::zeros((body.nrows(), 6));
        let mut tapes = Vec::new();
        for (hi, head) in self.heads.iter().enumerate() {
            let rows: Vec<usize> = (0..heads.len()).filter(|&r| heads[r] == hi).collect();
            if rows.is_empty() {
                continue;
            }
            let x = body.select(Axis(0), &rows);
            let (y, tape) = head.mlp.forward(x);
            for (k, &r) in rows.iter().enumerate() {
                out.row_mut(r).assign(&y.row(k));
            }
            tapes.push(HeadTape { head: hi, rows, tape });
        }
        (out, tapes)
    }

    fn forward_batch(&self, b: &GraphBatch) -> (Array2<f64>, ForwardTape) {
        let (mut state, encode) = self.encode_batch(b);
        let blocks = (0..self.arch.depth).map(|_| self.block(&mut state)).collect();
        let (out, heads) = self.decode(&state.body, &b.heads);
        (out, ForwardTape { encode, blocks, heads })
    }

    /// Lifts every node and edge feature of `graph` to the hidden dimension.
    pub fn encode(&self, graph: &CdprGraph) -> Result<HiddenState, NnError> {
        let b = self.batch(&[graph])?;
        Ok(self.encode_batch(&b).0)
    }

    /// One round of world-to-cable and cable-to-body message passing.
    pub fn propagate_block(&self, mut state: HiddenState) -> HiddenState {
        self.block(&mut state);
        state
    }

    /// Predicted pose for one graph.
    pub fn forward(&self, graph: &CdprGraph) -> Result<Pose, NnError> {
        Ok(self.predict(&[graph])?.remove(0))
    }

    /// Reverse pass from the gradient on the normalized output `dy`.
    fn backward(&self, b: &GraphBatch, tape: &ForwardTape, dy: &Array2<f64>, grads: &mut Self) {
        let h = self.arch.hidden_dim;
        let nb = b.heads.len();
        let nc = b.cable_graph.len();
        let cg = &b.cable_graph;

        let mut d_body = Array2::<f64>::zeros((nb, h));
        for ht in &tape.heads {
            let dsub = dy.select(Axis(0), &ht.rows);
            let dx = self.heads[ht.head].mlp.backward(&ht.tape, dsub, &mut grads.heads[ht.head].mlp);
            for (k, &r) in ht.rows.iter().enumerate() {
                d_body.row_mut(r).assign(&dx.row(k));
            }
        }
        let mut d_world = Array2::<f64>::zeros((nb, h));
        let mut d_cable = Array2::<f64>::zeros((nc, h));
        let mut d_ewc = Array2::<f64>::zeros((nc, h));
        let mut d_ecb = Array2::<f64>::zeros((nc, h));

        for bt in tape.blocks.iter().rev() {
            // body <- max(body, messages)
            let mut d_mcb = Array2::<f64>::zeros((nc, h));
            for g in 0..nb {
                for j in 0..h {
                    let src = bt.body_source[g * h + j];
                    if src != INCUMBENT {
                        d_mcb[(src as usize, j)] += d_body[(g, j)];
                        d_body[(g, j)] = 0.0;
                    }
                }
            }
            let dx = self.gamma_cb.backward(&bt.cb, d_mcb, &mut grads.gamma_cb);
            for c in 0..nc {
                let row = dx.row(c);
                let mut dc = d_cable.row_mut(c);
                dc += &row.slice(s![0..h]);
                let mut db = d_body.row_mut(cg[c]);
                db += &row.slice(s![h..2 * h]);
                let mut de = d_ecb.row_mut(c);
                de += &row.slice(s![2 * h..3 * h]);
            }

            // cable <- max(cable, world message)
            let mut d_mwc = Array2::<f64>::zeros((nc, h));
            {
                let dmw = d_mwc.as_slice_mut().expect("standard layout");
                let dc = d_cable.as_slice_mut().expect("standard layout");
                for (k, &took) in bt.took_message.iter().enumerate() {
                    if took {
                        dmw[k] = dc[k];
                        dc[k] = 0.0;
                    }
                }
            }
            let dx = self.gamma_wc.backward(&bt.wc, d_mwc, &mut grads.gamma_wc);
            for c in 0..nc {
                let row = dx.row(c);
                let mut dw = d_world.row_mut(cg[c]);
                dw += &row.slice(s![0..h]);
                let mut dc = d_cable.row_mut(c);
                dc += &row.slice(s![h..2 * h]);
                let mut de = d_ewc.row_mut(c);
                de += &row.slice(s![2 * h..3 * h]);
            }
        }

        let e = &tape.encode;
        self.enc_world.backward(&e.world, d_world, &mut grads.enc_world);
        self.enc_cable.backward(&e.cable, d_cable, &mut grads.enc_cable);
        self.enc_body.backward(&e.body, d_body, &mut grads.enc_body);
        self.enc_edge_wc.backward(&e.edge_wc, d_ewc, &mut grads.enc_edge_wc);
        self.enc_edge_cb.backward(&e.edge_cb, d_ecb, &mut grads.enc_edge_cb);
    }

    fn mlps(&self) -> Vec<&Mlp> {
        let mut v = vec![
            &self.enc_world,
            &self.enc_cable,
            &self.enc_body,
            &self.enc_edge_wc,
            &self.enc_edge_cb,
            &self.gamma_wc,
            &self.gamma_cb,
        ];
        v.extend(self.heads.iter().map(|h| &h.mlp));
        v
    }

    fn mlps_mut(&mut self) -> Vec<&mut Mlp> {
        let mut v = vec![
            &mut self.enc_world,
            &mut self.enc_cable,
            &mut self.enc_body,
            &mut self.enc_edge_wc,
            &mut self.enc_edge_cb,
            &mut self.gamma_wc,
            &mut self.gamma_cb,
        ];
        v.extend(self.heads.iter_mut().map(|h| &mut h.mlp));
        v
    }
}

impl Parameters for CafkNetModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for m in self.mlps() {
            m.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for m in self.mlps_mut() {
            m.visit_mut(f);
        }
    }
}

/// Squared error on the masked components and its gradient, averaged over rows.
pub(crate) fn masked_mse(pred: &Array2<f64>, targets: &[[f64; 6]], mask: LossMask) -> (f64, Array2<f64>) {
    let n = pred.nrows() as f64;
    let mut loss = 0.0;
    let mut dy = Array2::zeros(pred.raw_dim());
    for (r, t) in targets.iter().enumerate() {
        for &k in mask.components() {
            let e = pred[(r, k)] - t[k];
            loss += e * e;
            dy[(r, k)] = 2.0 * e / n;
        }
    }
    (loss / n, dy)
}

impl FkModel for CafkNetModel {
    fn predict(&self, graphs: &[&CdprGraph]) -> Result<Vec<Pose>, NnError> {
        let b = self.batch(graphs)?;
        let (out, _) = self.forward_batch(&b);
        Ok(out
            .rows()
            .into_iter()
            .map(|r| Pose::from_array(self.normalization.pose_from_unit([r[0], r[1], r[2], r[3], r[4], r[5]])))
            .collect())
    }

    fn loss_and_grad(&self, graphs: &[&CdprGraph], targets: &[Pose], mask: LossMask, grads: &mut Self) -> Result<f64, NnError> {
        if graphs.len() != targets.len() {
            return Err(NnError::ShapeMismatch { expected: graphs.len(), found: targets.len() });
        }
        let b = self.batch(graphs)?;
        let (out, tape) = self.forward_batch(&b);
        let t: Vec<[f64; 6]> = targets.iter().map(|p| self.normalization.pose_to_unit(p.to_array())).collect();
        let (loss, dy) = masked_mse(&out, &t, mask);
        self.backward(&b, &tape, &dy, grads);
        Ok(loss)
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |s| s.fill(0.0));
        z
    }
}
