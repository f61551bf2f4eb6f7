//! Training loop, evaluation and the experiment protocols.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{split, DataError, Dataset};
use crate::fk_opt::{solve_fk_opt_best_effort, FkOptError, FkOptSettings};
use crate::geometry::{CableLengths, CdprConfig, GeometryError, Pose};
use crate::graph::{build_graph, CdprGraph, GraphError};
use crate::nn::{AdamState, ArchSpec, CafkNetModel, FkModel, LossMask, NnError, Parameters};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("cannot compute an error over zero samples")]
    EmptyInput,
    #[error("{predictions} predictions for {references} references")]
    LengthMismatch { predictions: usize, references: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parameters changed during zero-shot evaluation")]
    ParametersChanged,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    FkOpt(#[from] FkOptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplier applied when the epoch loss stalls.
    pub decay_factor: f64,
    /// Epochs without improvement before decaying.
    pub patience: usize,
    pub seed: u64,
    pub loss_mask: LossMask,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            decay_factor: 0.5,
            patience: 20,
            seed: 0,
            loss_mask: LossMask::Position,
        }
    }
}

impl TrainSpec {
    fn validate(&self) -> Result<(), ExperimentError> {
        if self.batch_size == 0 {
            return Err(ExperimentError::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ExperimentError::InvalidArgument("learning rate must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(ExperimentError::InvalidArgument("decay factor must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Graphs and reference poses, possibly from several configurations.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub graphs: Vec<CdprGraph>,
    pub poses: Vec<Pose>,
}

impl TrainingSet {
    pub fn from_dataset(config: &CdprConfig, dataset: &Dataset) -> Result<Self, ExperimentError> {
        Ok(Self { graphs: dataset.graphs(config)?, poses: dataset.poses() })
    }

    pub fn from_datasets(parts: &[(&CdprConfig, &Dataset)]) -> Result<Self, ExperimentError> {
        let mut out = Self::default();
        for (c, d) in parts {
            out.extend(Self::from_dataset(c, d)?);
        }
        Ok(out)
    }

    pub fn extend(&mut self, other: TrainingSet) {
        self.graphs.extend(other.graphs);
        self.poses.extend(other.poses);
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean training loss per epoch, in normalized units.
    pub epoch_loss: Vec<f64>,
    pub learning_rate: Vec<f64>,
}

/// Minibatch Adam with plateau decay. Deterministic for a fixed seed.
pub fn train<M: FkModel>(model: &mut M, data: &TrainingSet, spec: &TrainSpec) -> Result<TrainLog, ExperimentError> {
    spec.validate()?;
    let mut log = TrainLog::default();
    if spec.epochs == 0 {
        return Ok(log);
    }
    if data.is_empty() {
        return Err(ExperimentError::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut adam = AdamState::new(model.param_count(), spec.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut best = f64::INFINITY;
    let mut stall = 0;
    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(spec.batch_size) {
            let graphs: Vec<&CdprGraph> = chunk.iter().map(|&i| &data.graphs[i]).collect();
            let poses: Vec<Pose> = chunk.iter().map(|&i| data.poses[i]).collect();
            let mut grads = model.zeros_like();
            let loss = model.loss_and_grad(&graphs, &poses, spec.loss_mask, &mut grads)?;
            if !loss.is_finite() {
                return Err(ExperimentError::DivergenceDetected { epoch });
            }
            adam.step(model, &grads)?;
            total += loss * chunk.len() as f64;
        }
        let epoch_loss = total / data.len() as f64;
        log.epoch_loss.push(epoch_loss);
        log.learning_rate.push(adam.learning_rate);
        if epoch_loss < best * (1.0 - 1e-4) {
            best = epoch_loss;
            stall = 0;
        } else {
            stall += 1;
            if stall >= spec.patience {
                adam.learning_rate *= spec.decay_factor;
                stall = 0;
            }
        }
    }
    Ok(log)
}

pub fn predict_all<M: FkModel>(model: &M, graphs: &[CdprGraph]) -> Result<Vec<Pose>, ExperimentError> {
    let mut out = Vec::with_capacity(graphs.len());
    for chunk in graphs.chunks(256) {
        let refs: Vec<&CdprGraph> = chunk.iter().collect();
        out.extend(model.predict(&refs)?);
    }
    Ok(out)
}

/// Root mean square Euclidean position error in mm; orientation is ignored.
pub fn rmse_position(predictions: &[Pose], references: &[Pose]) -> Result<f64, ExperimentError> {
    if predictions.len() != references.len() {
        return Err(ExperimentError::LengthMismatch { predictions: predictions.len(), references: references.len() });
    }
    if predictions.is_empty() {
        return Err(ExperimentError::EmptyInput);
    }
    let sum: f64 = predictions
        .iter()
        .zip(references)
        .map(|(p, r)| (p.x - r.x).powi(2) + (p.y - r.y).powi(2) + (p.z - r.z).powi(2))
        .sum();
    Ok((sum / predictions.len() as f64).sqrt())
}

/// Predictions and position RMSE of `model` on `set`.
pub fn evaluate<M: FkModel>(model: &M, set: &TrainingSet) -> Result<(Vec<Pose>, f64), ExperimentError> {
    let preds = predict_all(model, &set.graphs)?;
    let rmse = rmse_position(&preds, &set.poses)?;
    Ok((preds, rmse))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub config: String,
    /// What the test samples were, e.g. `held-out` or `noise`.
    pub test_data: String,
    pub rmse_mm: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seconds_per_trajectory: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub entries: Vec<EvalEntry>,
}

impl EvalReport {
    pub fn single(protocol: &str, config: &str, test_data: &str, rmse_mm: f64, samples: usize) -> Self {
        Self {
            protocol: protocol.to_string(),
            entries: vec![EvalEntry {
                config: config.to_string(),
                test_data: test_data.to_string(),
                rmse_mm,
                samples,
                seconds_per_trajectory: None,
            }],
        }
    }

    pub fn rmse(&self) -> f64 {
        self.entries[0].rmse_mm
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}

/// Per-sample reference and predicted poses with the position error.
pub fn prediction_csv(dataset: &Dataset, predictions: &[Pose]) -> String {
    let mut out = String::from("index,traj,x_ref,y_ref,z_ref,roll_ref,pitch_ref,yaw_ref,x_pred,y_pred,z_pred,roll_pred,pitch_pred,yaw_pred,error_mm\n");
    for (i, (s, p)) in dataset.samples.iter().zip(predictions).enumerate() {
        let _ = write!(out, "{i},{}", s.trajectory);
        for v in s.pose.to_array().iter().chain(p.to_array().iter()) {
            let _ = write!(out, ",{v}");
        }
        let e = ((p.x - s.pose.x).powi(2) + (p.y - s.pose.y).powi(2) + (p.z - s.pose.z).powi(2)).sqrt();
        let _ = writeln!(out, ",{e}");
    }
    out
}

/// Static x-y plot of reference (solid) and predicted (dashed) paths, one
/// polyline pair per trajectory.
pub fn trajectory_svg(dataset: &Dataset, predictions: &[Pose], title: &str) -> String {
    let (w, h, pad) = (640.0, 640.0, 40.0);
    let all = dataset.samples.iter().map(|s| s.pose).chain(predictions.iter().copied());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let px = |x: f64| pad + (x - x0) / span * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / span * (h - 2.0 * pad);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, xml_escape(title));
    let mut start = 0;
    while start < dataset.samples.len() {
        let traj = dataset.samples[start].trajectory;
        let end = dataset.samples[start..].iter().position(|s| s.trajectory != traj).map_or(dataset.samples.len(), |k| start + k);
        let line = |pts: &mut dyn Iterator<Item = Pose>| pts.map(|p| format!("{:.2},{:.2}", px(p.x), py(p.y))).collect::<Vec<_>>().join(" ");
        let r = line(&mut dataset.samples[start..end].iter().map(|s| s.pose));
        let p = line(&mut predictions[start..end.min(predictions.len())].iter().copied());
        let _ = writeln!(out, r##"<polyline fill="none" stroke="#222" stroke-width="1.5" points="{r}"/>"##);
        let _ = writeln!(out, r##"<polyline fill="none" stroke="#d33" stroke-width="1.2" stroke-dasharray="4 3" points="{p}"/>"##);
        start = end;
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Zero-shot evaluation of `model` on `target`. `sources` are the
/// configurations the model was trained on; with more than one source the
/// target must not be among them.
pub fn run_transfer(
    model: &CafkNetModel,
    sources: &[&str],
    target: &CdprConfig,
    target_data: &Dataset,
) -> Result<EvalReport, ExperimentError> {
    if sources.len() > 1 && sources.iter().any(|s| s.eq_ignore_ascii_case(target.name())) {
        return Err(ExperimentError::InvalidArgument(format!("target `{}` is one of the training sources", target.name())));
    }
    let before = model.param_hash();
    let set = TrainingSet::from_dataset(target, target_data)?;
    let (_, rmse) = evaluate(model, &set)?;
    if model.param_hash() != before {
        return Err(ExperimentError::ParametersChanged);
    }
    let protocol = format!("transfer:{}->{}", sources.join("+"), target.name());
    Ok(EvalReport::single(&protocol, target.name(), "zero-shot", rmse, set.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sim2RealMethod {
    /// Train on all simulated data.
    Sim2Real,
    /// Train on 80% of the clean path data.
    Real2Real,
    /// Train on all simulated data plus 80% of the clean path data.
    SimAndReal2Real,
}

impl Sim2RealMethod {
    pub const ALL: [Sim2RealMethod; 3] = [Sim2RealMethod::Sim2Real, Sim2RealMethod::Real2Real, Sim2RealMethod::SimAndReal2Real];

    pub fn name(self) -> &'static str {
        match self {
            Sim2RealMethod::Sim2Real => "sim2real",
            Sim2RealMethod::Real2Real => "real2real",
            Sim2RealMethod::SimAndReal2Real => "sim&real2real",
        }
    }
}

impl std::str::FromStr for Sim2RealMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected sim2real, real2real or sim&real2real)"))
    }
}

#[derive(Debug, Clone)]
pub struct Sim2RealOutcome {
    pub model: CafkNetModel,
    pub clean_test: EvalReport,
    pub noise_test: EvalReport,
    pub log: TrainLog,
}

/// Trains per the method's data recipe and tests on clean and noise data.
///
/// `sim2real` tests on all clean data; the other two on the 20% of clean data
/// they did not train on. All three test on all noise data.
pub fn run_sim2real(
    config: &CdprConfig,
    simulated: &Dataset,
    clean: &Dataset,
    noise: &Dataset,
    method: Sim2RealMethod,
    arch: ArchSpec,
    spec: &TrainSpec,
) -> Result<Sim2RealOutcome, ExperimentError> {
    let (clean_train, clean_test) = split(clean, 0.8, spec.seed)?;
    let (train_set, clean_eval) = match method {
        Sim2RealMethod::Sim2Real => (TrainingSet::from_dataset(config, simulated)?, clean.clone()),
        Sim2RealMethod::Real2Real => (TrainingSet::from_dataset(config, &clean_train)?, clean_test),
        Sim2RealMethod::SimAndReal2Real => {
            (TrainingSet::from_datasets(&[(config, simulated), (config, &clean_train)])?, clean_test)
        }
    };
    let mut model = CafkNetModel::new(arch, &mut ChaCha8Rng::seed_from_u64(spec.seed));
    let log = train(&mut model, &train_set, spec)?;
    let (_, clean_rmse) = evaluate(&model, &TrainingSet::from_dataset(config, &clean_eval)?)?;
    let (_, noise_rmse) = evaluate(&model, &TrainingSet::from_dataset(config, noise)?)?;
    let protocol = format!("sim2real:{}", method.name());
    Ok(Sim2RealOutcome {
        clean_test: EvalReport::single(&protocol, config.name(), "clean", clean_rmse, clean_eval.len()),
        noise_test: EvalReport::single(&protocol, config.name(), "noise", noise_rmse, noise.len()),
        model,
        log,
    })
}

pub enum FkSolver<'a> {
    Opt(FkOptSettings),
    CafkNet(&'a CafkNetModel),
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub seconds: f64,
    pub poses: Vec<Pose>,
}

/// Wall-clock time to solve every FK problem in `lengths`. The optimizer runs
/// one problem after another; the network takes the trajectory as one batch.
pub fn bench_fk(config: &CdprConfig, solver: &FkSolver<'_>, lengths: &[CableLengths]) -> Result<BenchResult, ExperimentError> {
    let start = Instant::now();
    let poses = match solver {
        FkSolver::Opt(settings) => {
            let mut out = Vec::with_capacity(lengths.len());
            for l in lengths {
                out.push(solve_fk_opt_best_effort(config, l, settings)?.pose);
            }
            out
        }
        FkSolver::CafkNet(model) => {
            if lengths.is_empty() {
                Vec::new()
            } else {
                let graphs = lengths.iter().map(|l| build_graph(config, l)).collect::<Result<Vec<_>, _>>()?;
                let refs: Vec<&CdprGraph> = graphs.iter().collect();
                model.predict(&refs)?
            }
        }
    };
    Ok(BenchResult { seconds: start.elapsed().as_secs_f64(), poses })
}

/// Position RMSE of the optimization solver over a dataset, started from the
/// bounds midpoint.
pub fn evaluate_opt(config: &CdprConfig, dataset: &Dataset) -> Result<(Vec<Pose>, f64), ExperimentError> {
    let lengths: Vec<CableLengths> = dataset.samples.iter().map(|s| s.lengths.clone()).collect();
    let r = bench_fk(config, &FkSolver::Opt(FkOptSettings::for_config(config)), &lengths)?;
    let rmse = rmse_position(&r.poses, &dataset.poses())?;
    Ok((r.poses, rmse))
}

/// One model trained on one configuration and tested on its held-out split.
#[derive(Debug, Clone)]
pub struct One2OneOutcome {
    pub model: CafkNetModel,
    pub log: TrainLog,
    pub report: EvalReport,
    pub test: Dataset,
    pub predictions: Vec<Pose>,
}

pub fn run_one2one(config: &CdprConfig, dataset: &Dataset, arch: ArchSpec, spec: &TrainSpec) -> Result<One2OneOutcome, ExperimentError> {
    let (train_ds, test_ds) = split(dataset, 0.8, spec.seed)?;
    let mut model = CafkNetModel::new(arch, &mut ChaCha8Rng::seed_from_u64(spec.seed));
    let log = train(&mut model, &TrainingSet::from_dataset(config, &train_ds)?, spec)?;
    let (predictions, rmse) = evaluate(&model, &TrainingSet::from_dataset(config, &test_ds)?)?;
    Ok(One2OneOutcome {
        report: EvalReport::single("one2one", config.name(), "held-out", rmse, test_ds.len()),
        model,
        log,
        test: test_ds,
        predictions,
    })
}

/// One model with a decoder head per configuration, trained on the union of
/// the training splits and tested per configuration.
pub fn run_multi_task(parts: &[(&CdprConfig, &Dataset)], arch: ArchSpec, spec: &TrainSpec) -> Result<(CafkNetModel, EvalReport), ExperimentError> {
    let names: Vec<&str> = parts.iter().map(|(c, _)| c.name()).collect();
    let mut model = CafkNetModel::new_multi_task(arch, &names, &mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut train_set = TrainingSet::default();
    let mut tests = Vec::new();
    for (c, d) in parts {
        let (tr, te) = split(d, 0.8, spec.seed)?;
        train_set.extend(TrainingSet::from_dataset(c, &tr)?);
        tests.push((*c, te));
    }
    train(&mut model, &train_set, spec)?;
    let mut entries = Vec::new();
    for (c, te) in tests {
        let (_, rmse) = evaluate(&model, &TrainingSet::from_dataset(c, &te)?)?;
        entries.push(EvalEntry { config: c.name().to_string(), test_data: "held-out".into(), rmse_mm: rmse, samples: te.len(), seconds_per_trajectory: None });
    }
    Ok((model, EvalReport { protocol: "multi-task".into(), entries }))
}

/// Position RMSE for the three train/test pairings of the noise study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudy {
    pub clean_on_clean: f64,
    pub clean_on_noise: f64,
    pub noise_on_noise: f64,
}

/// Trains one model on the clean training split and one on each noisy copy,
/// and tests them on the matching held-out samples. The noisy datasets must be
/// sample-aligned relabelings of `clean`.
pub fn run_noise_study(
    config: &CdprConfig,
    clean: &Dataset,
    noisy: &[&Dataset],
    arch: ArchSpec,
    spec: &TrainSpec,
) -> Result<Vec<NoiseStudy>, ExperimentError> {
    if noisy.iter().any(|n| n.len() != clean.len()) {
        return Err(ExperimentError::InvalidArgument("clean and noisy datasets must be sample-aligned".into()));
    }
    let fit = |ds: &Dataset| -> Result<CafkNetModel, ExperimentError> {
        let mut m = CafkNetModel::new(arch, &mut ChaCha8Rng::seed_from_u64(spec.seed));
        train(&mut m, &TrainingSet::from_dataset(config, ds)?, spec)?;
        Ok(m)
    };
    let (clean_tr, clean_te) = split(clean, 0.8, spec.seed)?;
    let on_clean = fit(&clean_tr)?;
    let clean_on_clean = evaluate(&on_clean, &TrainingSet::from_dataset(config, &clean_te)?)?.1;
    let mut out = Vec::with_capacity(noisy.len());
    for n in noisy {
        let (noise_tr, noise_te) = split(n, 0.8, spec.seed)?;
        let noise_set = TrainingSet::from_dataset(config, &noise_te)?;
        let on_noise = fit(&noise_tr)?;
        out.push(NoiseStudy {
            clean_on_clean,
            clean_on_noise: evaluate(&on_clean, &noise_set)?.1,
            noise_on_noise: evaluate(&on_noise, &noise_set)?.1,
        });
    }
    Ok(out)
}

/// Zero-shot error on `target` of a model trained on the union of `sources`.
pub fn train_and_transfer(
    sources: &[(&CdprConfig, &Dataset)],
    target: (&CdprConfig, &Dataset),
    arch: ArchSpec,
    spec: &TrainSpec,
) -> Result<EvalReport, ExperimentError> {
    let mut model = CafkNetModel::new(arch, &mut ChaCha8Rng::seed_from_u64(spec.seed));
    train(&mut model, &TrainingSet::from_datasets(sources)?, spec)?;
    let names: Vec<&str> = sources.iter().map(|(c, _)| c.name()).collect();
    run_transfer(&model, &names, target.0, target.1)
}
