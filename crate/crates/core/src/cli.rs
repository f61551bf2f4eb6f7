//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{clean_path_dataset, gen_dataset, inject_noise, split, synthesize_real_run, Dataset, HalfCircle, RealRunSpec};
use crate::experiments::{
    bench_fk, evaluate, prediction_csv, run_sim2real, run_transfer, train, trajectory_svg, EvalEntry, EvalReport, FkSolver, Sim2RealMethod,
    TrainSpec, TrainingSet,
};
use crate::fk_opt::{solve_fk_opt, FkOptSettings};
use crate::geometry::{inverse_kinematics, resolve_config, CableLengths, CdprConfig, Pose};
use crate::graph::build_graph;
use crate::nn::{ArchSpec, CafkNetModel, Checkpoint, FkModel, LossMask, MlpBaseline};

#[derive(Debug, Parser)]
#[command(name = "cdprkit", version, about = "Cable-driven parallel robot kinematics toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an IK-labelled dataset.
    GenData(GenDataArgs),
    /// Relabel a dataset's lengths under perturbed anchors and offsets.
    InjectNoise(InjectNoiseArgs),
    /// Train a model on one or more datasets.
    Train(TrainArgs),
    /// Evaluate a model on a dataset.
    Eval(EvalArgs),
    /// Cable lengths for a pose.
    SolveIk(SolveIkArgs),
    /// Pose for a set of cable lengths.
    SolveFk(SolveFkArgs),
    /// Zero-shot evaluation of a trained model on another configuration.
    Transfer(TransferArgs),
    /// Train and test one of the simulation-to-device methods.
    Sim2real(Sim2RealArgs),
    /// Time the optimizer and the network on one trajectory.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DataKind {
    /// Random cubic trajectories.
    Random,
    /// Half-circle target path with exact labels.
    HalfCircle,
    /// Half-circle path executed by a device with geometry, encoder and tracking errors.
    RealRun,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Bundled configuration name or path to a config file.
    #[arg(long)]
    pub config: String,
    #[arg(long, value_enum, default_value_t = DataKind::Random)]
    pub kind: DataKind,
    /// Number of random trajectories.
    #[arg(long, default_value_t = 100)]
    pub trajectories: usize,
    /// Samples per trajectory (random) or along the path (half-circle, real-run).
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InjectNoiseArgs {
    #[arg(long)]
    pub config: String,
    #[arg(long)]
    pub input: PathBuf,
    /// Standard deviation of the anchor and offset perturbation, mm.
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelKind {
    Cafknet,
    Mlp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MaskArg {
    Position,
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    /// Hidden dimension of node and edge states.
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    /// Width of every MLP hidden layer.
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    /// Hidden layers per MLP.
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Propagation blocks.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Learning-rate multiplier on a plateau.
    #[arg(long, default_value_t = 0.5)]
    pub decay: f64,
    /// Stalled epochs before decaying.
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    /// Pose components in the loss.
    #[arg(long, value_enum, default_value_t = MaskArg::Position)]
    pub loss: MaskArg,
    /// Seed for initialization, shuffling and splits.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainOpts {
    fn arch(&self) -> ArchSpec {
        ArchSpec { hidden_dim: self.hidden, mlp_width: self.width, mlp_hidden_layers: self.layers, depth: self.depth }
    }

    fn spec(&self) -> TrainSpec {
        TrainSpec {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            decay_factor: self.decay,
            patience: self.patience,
            seed: self.seed,
            loss_mask: match self.loss {
                MaskArg::Position => LossMask::Position,
                MaskArg::Full => LossMask::Full,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset files; repeat for several.
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,
    /// Configurations matching `--data` one to one. Defaults to the names in the dataset headers.
    #[arg(long = "config")]
    pub configs: Vec<String>,
    #[arg(long, value_enum, default_value_t = ModelKind::Cafknet)]
    pub model: ModelKind,
    /// One decoder head per configuration instead of a shared one.
    #[arg(long)]
    pub multi_task: bool,
    /// Fraction of each dataset used for training; the rest is held out.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Held-out evaluation report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-epoch loss and learning rate (CSV).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to the name in the dataset header.
    #[arg(long)]
    pub config: Option<String>,
    /// Report output (JSON); printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-sample reference and predicted poses (CSV).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Reference and predicted paths as an SVG plot.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveIkArgs {
    #[arg(long)]
    pub config: String,
    /// `x,y,z,roll,pitch,yaw` in mm and rad.
    #[arg(long, allow_hyphen_values = true)]
    pub pose: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Opt,
    Cafknet,
}

#[derive(Debug, Args)]
pub struct SolveFkArgs {
    #[arg(long)]
    pub config: String,
    /// Comma-separated cable lengths in mm.
    #[arg(long)]
    pub lengths: String,
    #[arg(long, value_enum, default_value_t = SolverArg::Opt)]
    pub solver: SolverArg,
    /// Checkpoint, required with `--solver cafknet`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Configurations the model was trained on, comma-separated.
    #[arg(long)]
    pub sources: String,
    #[arg(long)]
    pub target: String,
    /// Dataset on the target configuration.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Sim2RealArgs {
    #[arg(long)]
    pub config: String,
    #[arg(long)]
    pub simulated: PathBuf,
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub noise: PathBuf,
    /// `sim2real`, `real2real` or `sim&real2real`.
    #[arg(long)]
    pub method: String,
    #[command(flatten)]
    pub opts: TrainOpts,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: String,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Trajectory index within the dataset.
    #[arg(long, default_value_t = 0)]
    pub trajectory: usize,
    /// Timed repetitions; the minimum is reported.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn parse_floats(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("{what}: `{p}` is not a number")))
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn config_for(dataset: &Dataset, explicit: Option<&str>) -> Result<CdprConfig> {
    let c = resolve_config(explicit.unwrap_or(&dataset.config))?;
    if c.cable_count() != dataset.cable_count {
        bail!("config `{}` has {} cables but the dataset has {}", c.name(), c.cable_count(), dataset.cable_count);
    }
    Ok(c)
}

fn load_model(path: &Path) -> Result<Checkpoint> {
    Ok(Checkpoint::load(path)?)
}

fn predict_with(ck: &Checkpoint, set: &TrainingSet) -> Result<(Vec<Pose>, f64)> {
    Ok(match ck {
        Checkpoint::Cafknet(m) => evaluate(m, set)?,
        Checkpoint::MlpBaseline(m) => evaluate(m, set)?,
    })
}

fn emit_report(report: &EvalReport, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write_file(p, &report.to_json()),
        None => {
            print!("{}", report.to_json());
            Ok(())
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => {
            let c = resolve_config(&a.config)?;
            let ds = match a.kind {
                DataKind::Random => gen_dataset(&c, a.trajectories, a.samples, a.seed)?,
                DataKind::HalfCircle => clean_path_dataset(&c, &HalfCircle::default(), a.samples),
                DataKind::RealRun => {
                    let spec = RealRunSpec { samples: a.samples, ..Default::default() };
                    synthesize_real_run(&c, &HalfCircle::default(), &spec, a.seed)?
                }
            };
            ds.save(&a.out)?;
            eprintln!("wrote {} samples to {}", ds.len(), a.out.display());
        }
        Command::InjectNoise(a) => {
            let c = resolve_config(&a.config)?;
            let ds = Dataset::load(&a.input)?;
            let noisy = inject_noise(&c, &ds, a.sigma, a.seed)?;
            noisy.save(&a.out)?;
        }
        Command::Train(a) => cmd_train(a)?,
        Command::Eval(a) => {
            let ck = load_model(&a.model)?;
            let ds = Dataset::load(&a.data)?;
            let c = config_for(&ds, a.config.as_deref())?;
            let set = TrainingSet::from_dataset(&c, &ds)?;
            let (preds, rmse) = predict_with(&ck, &set)?;
            emit_report(&EvalReport::single("eval", c.name(), "all", rmse, ds.len()), a.report.as_deref())?;
            if let Some(p) = &a.csv {
                write_file(p, &prediction_csv(&ds, &preds))?;
            }
            if let Some(p) = &a.svg {
                write_file(p, &trajectory_svg(&ds, &preds, &format!("{}: reference (solid) vs predicted (dashed)", c.name())))?;
            }
        }
        Command::SolveIk(a) => {
            let c = resolve_config(&a.config)?;
            let v = parse_floats(&a.pose, "pose")?;
            if v.len() != 6 {
                bail!("pose needs 6 values, got {}", v.len());
            }
            let pose = Pose::try_new(v[0], v[1], v[2], v[3], v[4], v[5])?;
            println!("{}", join(inverse_kinematics(&c, &pose).as_slice()));
        }
        Command::SolveFk(a) => {
            let c = resolve_config(&a.config)?;
            let lengths = CableLengths::new(parse_floats(&a.lengths, "lengths")?)?;
            if lengths.len() != c.cable_count() {
                bail!("config `{}` has {} cables but {} lengths were given", c.name(), c.cable_count(), lengths.len());
            }
            let pose = match a.solver {
                SolverArg::Opt => {
                    let sol = solve_fk_opt(&c, &lengths, &FkOptSettings::for_config(&c))?;
                    eprintln!("residual norm {} mm after {} iterations", sol.residual_norm, sol.iterations);
                    sol.pose
                }
                SolverArg::Cafknet => {
                    let path = a.model.as_ref().context("--solver cafknet needs --model")?;
                    let g = build_graph(&c, &lengths)?;
                    match load_model(path)? {
                        Checkpoint::Cafknet(m) => m.forward(&g)?,
                        Checkpoint::MlpBaseline(m) => m.predict(&[&g])?.remove(0),
                    }
                }
            };
            println!("{}", join(&pose.to_array()));
        }
        Command::Transfer(a) => {
            let Checkpoint::Cafknet(model) = load_model(&a.model)? else {
                bail!("zero-shot transfer needs a graph network checkpoint");
            };
            let target = resolve_config(&a.target)?;
            let ds = Dataset::load(&a.data)?;
            let sources: Vec<&str> = a.sources.split(',').map(str::trim).collect();
            let report = run_transfer(&model, &sources, &target, &ds)?;
            emit_report(&report, a.report.as_deref())?;
        }
        Command::Sim2real(a) => {
            let method: Sim2RealMethod = a.method.parse().map_err(anyhow::Error::msg)?;
            let c = resolve_config(&a.config)?;
            let sim = Dataset::load(&a.simulated)?;
            let clean = Dataset::load(&a.clean)?;
            let noise = Dataset::load(&a.noise)?;
            let out = run_sim2real(&c, &sim, &clean, &noise, method, a.opts.arch(), &a.opts.spec())?;
            let report = EvalReport {
                protocol: out.clean_test.protocol.clone(),
                entries: vec![out.clean_test.entries[0].clone(), out.noise_test.entries[0].clone()],
            };
            emit_report(&report, a.report.as_deref())?;
            if let Some(p) = &a.out {
                Checkpoint::Cafknet(out.model).save(p)?;
            }
        }
        Command::Bench(a) => {
            let c = resolve_config(&a.config)?;
            let Checkpoint::Cafknet(model) = load_model(&a.model)? else {
                bail!("bench needs a graph network checkpoint");
            };
            let ds = Dataset::load(&a.data)?;
            let lengths: Vec<CableLengths> =
                ds.samples.iter().filter(|s| s.trajectory == a.trajectory).map(|s| s.lengths.clone()).collect();
            if lengths.is_empty() {
                bail!("dataset has no trajectory {}", a.trajectory);
            }
            let time = |solver: &FkSolver<'_>| -> Result<f64> {
                let mut best = f64::INFINITY;
                for _ in 0..a.repeats.max(1) {
                    best = best.min(bench_fk(&c, solver, &lengths)?.seconds);
                }
                Ok(best)
            };
            let opt = time(&FkSolver::Opt(FkOptSettings::for_config(&c)))?;
            let net = time(&FkSolver::CafkNet(&model))?;
            #[derive(Serialize)]
            struct Bench<'a> {
                config: &'a str,
                problems: usize,
                opt_seconds: f64,
                cafknet_seconds: f64,
                speedup: f64,
            }
            let b = Bench { config: c.name(), problems: lengths.len(), opt_seconds: opt, cafknet_seconds: net, speedup: opt / net };
            println!("{}", serde_json::to_string_pretty(&b)?);
        }
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    if !a.configs.is_empty() && a.configs.len() != a.data.len() {
        bail!("{} --config values for {} --data files", a.configs.len(), a.data.len());
    }
    let mut parts = Vec::new();
    for (k, p) in a.data.iter().enumerate() {
        let ds = Dataset::load(p)?;
        let c = config_for(&ds, a.configs.get(k).map(String::as_str))?;
        parts.push((c, ds));
    }
    let spec = a.opts.spec();
    let mut train_set = TrainingSet::default();
    let mut tests = Vec::new();
    for (c, ds) in &parts {
        let (tr, te) = split(ds, a.train_fraction, spec.seed)?;
        train_set.extend(TrainingSet::from_dataset(c, &tr)?);
        tests.push((c, te));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (ck, log) = match a.model {
        ModelKind::Cafknet => {
            let mut m = if a.multi_task {
                let names: Vec<&str> = parts.iter().map(|(c, _)| c.name()).collect();
                CafkNetModel::new_multi_task(a.opts.arch(), &names, &mut rng)
            } else {
                CafkNetModel::new(a.opts.arch(), &mut rng)
            };
            let log = train(&mut m, &train_set, &spec)?;
            (Checkpoint::Cafknet(m), log)
        }
        ModelKind::Mlp => {
            let m0 = parts[0].0.cable_count();
            if parts.iter().any(|(c, _)| c.cable_count() != m0) {
                bail!("the MLP baseline needs every dataset to have the same cable count");
            }
            let mut m = MlpBaseline::new(m0, a.opts.width, a.opts.layers, &mut rng);
            let log = train(&mut m, &train_set, &spec)?;
            (Checkpoint::MlpBaseline(m), log)
        }
    };
    ck.save(&a.out)?;
    if let Some(p) = &a.log {
        let mut text = String::from("epoch,loss,learning_rate\n");
        for (e, (l, r)) in log.epoch_loss.iter().zip(&log.learning_rate).enumerate() {
            text.push_str(&format!("{e},{l},{r}\n"));
        }
        write_file(p, &text)?;
    }
    let mut entries = Vec::new();
    for (c, te) in tests {
        if te.is_empty() {
            continue;
        }
        let (_, rmse) = predict_with(&ck, &TrainingSet::from_dataset(c, &te)?)?;
        entries.push(EvalEntry { config: c.name().to_string(), test_data: "held-out".into(), rmse_mm: rmse, samples: te.len(), seconds_per_trajectory: None });
    }
    let protocol = match (a.model, a.multi_task, parts.len()) {
        (ModelKind::Mlp, _, _) => "mlp-baseline",
        (_, true, _) => "multi-task",
        (_, false, 1) => "one2one",
        _ => "multi-config",
    };
    emit_report(&EvalReport { protocol: protocol.into(), entries }, a.report.as_deref())
}
