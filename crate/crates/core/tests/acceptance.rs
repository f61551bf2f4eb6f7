//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Run all criteria (about 50 minutes on one core):
//!     cargo test --release -p cdprkit --test acceptance
//! Run a subset by number:
//!     cargo test --release -p cdprkit --test acceptance -- 1 4 5

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cdprkit::data::{clean_path_dataset, gen_dataset, inject_noise, split, synthesize_real_run, Dataset, HalfCircle, RealRunSpec};
use cdprkit::experiments::{
    bench_fk, evaluate, evaluate_opt, run_noise_study, run_one2one, run_sim2real, run_transfer, train, train_and_transfer, FkSolver,
    Sim2RealMethod, TrainSpec, TrainingSet,
};
use cdprkit::fk_opt::{solve_fk_opt, FkOptSettings};
use cdprkit::geometry::{bundled, bundled_names, inverse_kinematics, CableLengths, CdprConfig, Pose, SPATIAL_CONFIGS};
use cdprkit::graph::{build_graph, CdprGraph};
use cdprkit::nn::{ArchSpec, CafkNetModel, Checkpoint, FkModel, LossMask, Parameters};

// Criterion 1
const ROUND_TRIP_POSES: usize = 200;
const ROUND_TRIP_TOL_MM: f64 = 0.1;
const ROUND_TRIP_MIN_FRACTION: f64 = 0.99;
const ROUND_TRIP_BUDGET_S: f64 = 120.0;
// Criterion 2
const UNDERCONSTRAINED_MIN_RATIO: f64 = 10.0;
// Criterion 3
const DESK_RMSE_FRACTION: f64 = 0.01;
const DESK_BUDGET_S: f64 = 1800.0;
// Criterion 4
const GRAD_REL_TOL: f64 = 1e-4;
// Criterion 5
const PERMUTATIONS: usize = 100;
// Criterion 9
const TIMING_MIN_RATIO: f64 = 10.0;
const TIMING_REPEATS: usize = 20;

const SEEDS: u64 = 3;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn position_error(a: &Pose, b: &Pose) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
}

fn mean_position_error(pred: &[Pose], truth: &[Pose]) -> f64 {
    pred.iter().zip(truth).map(|(a, b)| position_error(a, b)).sum::<f64>() / pred.len() as f64
}

fn random_pose(config: &CdprConfig, rng: &mut impl Rng) -> Pose {
    let (lo, hi) = (config.pose_lower(), config.pose_upper());
    let mut a = [0.0; 6];
    for k in 0..6 {
        a[k] = if lo[k] < hi[k] { rng.gen_range(lo[k]..hi[k]) } else { lo[k] };
    }
    Pose::from_array(a)
}

fn arch(hidden: usize) -> ArchSpec {
    ArchSpec { hidden_dim: hidden, mlp_width: hidden, mlp_hidden_layers: 2, depth: 2 }
}

fn round_trip() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["SimC6", "SimC7", "SimC8", "SimC9", "SimC10"] {
        let c = bundled(name).unwrap();
        let settings = FkOptSettings::for_config(&c);
        let mut ok = 0;
        let mut worst: f64 = 0.0;
        for _ in 0..ROUND_TRIP_POSES {
            let q = random_pose(&c, &mut rng);
            let err = match solve_fk_opt(&c, &inverse_kinematics(&c, &q), &settings) {
                Ok(sol) => position_error(&sol.pose, &q),
                Err(_) => f64::INFINITY,
            };
            worst = worst.max(err);
            ok += usize::from(err < ROUND_TRIP_TOL_MM);
        }
        let frac = ok as f64 / ROUND_TRIP_POSES as f64;
        pass &= frac >= ROUND_TRIP_MIN_FRACTION;
        parts.push(format!("{name} {:.1}% (max {worst:.2e} mm)", 100.0 * frac));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < ROUND_TRIP_BUDGET_S;
    verdict(pass, format!("{}; {secs:.1} s", parts.join(", ")))
}

fn underconstrained() -> Verdict {
    let c = bundled("SimC4").unwrap();
    let ds = gen_dataset(&c, 20, 100, 4).unwrap();
    let out = run_one2one(&c, &ds, ArchSpec::default(), &TrainSpec::default()).unwrap();
    let truth = out.test.poses();
    let (opt, _) = evaluate_opt(&c, &out.test).unwrap();
    let opt_err = mean_position_error(&opt, &truth);
    let net_err = mean_position_error(&out.predictions, &truth);
    let ratio = opt_err / net_err;
    verdict(
        ratio >= UNDERCONSTRAINED_MIN_RATIO,
        format!("opt mean {opt_err:.2} mm, network mean {net_err:.2} mm, ratio {ratio:.1} (need >= {UNDERCONSTRAINED_MIN_RATIO})"),
    )
}

fn desk_accuracy() -> Verdict {
    let start = Instant::now();
    let c = bundled("SimC6").unwrap();
    let ds = gen_dataset(&c, 20, 100, 6).unwrap();
    let out = run_one2one(&c, &ds, arch(64), &TrainSpec::default()).unwrap();
    let rmse = out.report.rmse();
    let limit = DESK_RMSE_FRACTION * c.workspace_diagonal();
    let secs = start.elapsed().as_secs_f64();
    verdict(rmse < limit && secs < DESK_BUDGET_S, format!("held-out RMSE {rmse:.2} mm (limit {limit:.2} mm), {secs:.0} s"))
}

fn gradients() -> Verdict {
    let a = ArchSpec { hidden_dim: 8, mlp_width: 8, mlp_hidden_layers: 2, depth: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let model = CafkNetModel::new(a, &mut rng);
    let c = bundled("SimC4").unwrap();
    let graphs: Vec<CdprGraph> =
        (0..4).map(|_| build_graph(&c, &inverse_kinematics(&c, &random_pose(&c, &mut rng))).unwrap()).collect();
    let targets: Vec<Pose> = (0..4).map(|_| random_pose(&c, &mut rng)).collect();
    let refs: Vec<&CdprGraph> = graphs.iter().collect();
    let mut grads = model.zeros_like();
    model.loss_and_grad(&refs, &targets, LossMask::Full, &mut grads).unwrap();
    let analytic = grads.flat();
    let base = model.flat();
    let mut scratch = model.clone();
    let mut loss_at = |p: &[f64]| {
        scratch.set_flat(p);
        let mut g = scratch.zeros_like();
        scratch.loss_and_grad(&refs, &targets, LossMask::Full, &mut g).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut p = base.clone();
    for k in 0..base.len() {
        let h = 1e-4 * base[k].abs().max(1e-2);
        p[k] = base[k] + h;
        let up = loss_at(&p);
        p[k] = base[k] - h;
        let down = loss_at(&p);
        p[k] = base[k];
        let fd = (up - down) / (2.0 * h);
        let scale = fd.abs().max(analytic[k].abs()).max(1e-6);
        worst = worst.max((fd - analytic[k]).abs() / scale);
    }
    verdict(worst < GRAD_REL_TOL, format!("{} parameters, max relative error {worst:.2e}", base.len()))
}

fn permutations() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = CafkNetModel::new(ArchSpec::default(), &mut rng);
    let mut mismatches = 0;
    let mut total = 0;
    for name in ["SimC6", "SimC10"] {
        let c = bundled(name).unwrap();
        let graph = build_graph(&c, &inverse_kinematics(&c, &random_pose(&c, &mut rng))).unwrap();
        let base = model.forward(&graph).unwrap().to_array().map(f64::to_bits);
        let mut perm: Vec<usize> = (0..c.cable_count()).collect();
        for _ in 0..PERMUTATIONS {
            perm.shuffle(&mut rng);
            let out = model.forward(&graph.permuted(&perm)).unwrap().to_array().map(f64::to_bits);
            mismatches += usize::from(out != base);
            total += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches} of {total} permuted forward passes differ bitwise"))
}

// Criterion 6
const TRANSFER_HIDDEN: usize = 32;
const TRANSFER_TRAJ: usize = 5;
const TRANSFER_EPOCHS: usize = 60;

fn transfer() -> Verdict {
    let short = |seed| TrainSpec { epochs: TRANSFER_EPOCHS, learning_rate: 3e-3, patience: 10, seed, ..Default::default() };
    // Structural part: one trained model, every other bundled config, no parameter change.
    let c6 = bundled("SimC6").unwrap();
    let mut model = CafkNetModel::new(arch(TRANSFER_HIDDEN), &mut ChaCha8Rng::seed_from_u64(0));
    train(&mut model, &TrainingSet::from_dataset(&c6, &gen_dataset(&c6, 2, 50, 0).unwrap()).unwrap(), &short(0)).unwrap();
    let hash = model.param_hash();
    let mut structural = true;
    for name in bundled_names().filter(|n| *n != "SimC6") {
        let c = bundled(name).unwrap();
        let ds = gen_dataset(&c, 1, 20, 1).unwrap();
        structural &= run_transfer(&model, &["SimC6"], &c, &ds).is_ok_and(|r| r.rmse().is_finite());
    }
    structural &= model.param_hash() == hash;

    let configs: Vec<CdprConfig> = SPATIAL_CONFIGS.iter().map(|n| bundled(n).unwrap()).collect();
    let n = configs.len();
    let mut single = vec![vec![0.0; n]; n];
    let mut multi = vec![0.0; n];
    for seed in 0..SEEDS {
        let data: Vec<Dataset> =
            configs.iter().enumerate().map(|(i, c)| gen_dataset(c, TRANSFER_TRAJ, 100, 1000 * seed + i as u64).unwrap()).collect();
        for s in 0..n {
            let mut m = CafkNetModel::new(arch(TRANSFER_HIDDEN), &mut ChaCha8Rng::seed_from_u64(seed));
            train(&mut m, &TrainingSet::from_dataset(&configs[s], &data[s]).unwrap(), &short(seed)).unwrap();
            for t in (0..n).filter(|&t| t != s) {
                single[s][t] += run_transfer(&m, &[SPATIAL_CONFIGS[s]], &configs[t], &data[t]).unwrap().rmse() / SEEDS as f64;
            }
        }
        for t in 0..n {
            let sources: Vec<(&CdprConfig, &Dataset)> = (0..n).filter(|&i| i != t).map(|i| (&configs[i], &data[i])).collect();
            multi[t] += train_and_transfer(&sources, (&configs[t], &data[t]), arch(TRANSFER_HIDDEN), &short(seed)).unwrap().rmse()
                / SEEDS as f64;
        }
    }
    let mut ordering = true;
    let mut parts = Vec::new();
    for t in 0..n {
        let best = (0..n).filter(|&s| s != t).map(|s| single[s][t]).fold(f64::INFINITY, f64::min);
        ordering &= multi[t] < best;
        parts.push(format!("{} {:.1}<{:.1}", SPATIAL_CONFIGS[t], multi[t], best));
    }
    verdict(
        structural && ordering,
        format!("hash-verified forward on all bundled configs: {structural}; multi-source vs best single-source mm: {}", parts.join(", ")),
    )
}

// Criterion 7
const NOISE_HIDDEN: usize = 64;
const NOISE_TRAJ: usize = 20;
const NOISE_EPOCHS: usize = 100;

fn noise_trend() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in SPATIAL_CONFIGS {
        let c = bundled(name).unwrap();
        // [sigma][clean-on-noise, noise-on-noise]
        let mut acc = [[0.0; 2]; 2];
        for seed in 0..SEEDS {
            let clean = gen_dataset(&c, NOISE_TRAJ, 100, 100 + seed).unwrap();
            let n5 = inject_noise(&c, &clean, 5.0, 200 + seed).unwrap();
            let n10 = inject_noise(&c, &clean, 10.0, 300 + seed).unwrap();
            let spec = TrainSpec { epochs: NOISE_EPOCHS, learning_rate: 3e-3, patience: 10, seed, ..Default::default() };
            let study = run_noise_study(&c, &clean, &[&n5, &n10], arch(NOISE_HIDDEN), &spec).unwrap();
            for (k, s) in study.iter().enumerate() {
                acc[k][0] += s.clean_on_noise / SEEDS as f64;
                acc[k][1] += s.noise_on_noise / SEEDS as f64;
            }
        }
        let ok = acc[0][1] < acc[0][0] && acc[1][1] < acc[1][0] && acc[1][0] >= acc[0][0] && acc[1][1] >= acc[0][1];
        pass &= ok;
        parts.push(format!(
            "{name}{} s5 {:.1}/{:.1} s10 {:.1}/{:.1}",
            if ok { "" } else { "(x)" },
            acc[0][1],
            acc[0][0],
            acc[1][1],
            acc[1][0]
        ));
    }
    verdict(pass, format!("noise-trained/clean-trained RMSE on noisy test, mm: {}", parts.join(", ")))
}

// Criterion 8
const SIM2REAL_HIDDEN: usize = 64;
const SIM2REAL_SIM_TRAJ: usize = 100;
const SIM2REAL_EPOCHS: usize = 100;

fn sim2real() -> Verdict {
    let c = bundled("ExpC4").unwrap();
    let path = HalfCircle::default();
    let clean = clean_path_dataset(&c, &path, 1000);
    let methods = [Sim2RealMethod::Real2Real, Sim2RealMethod::SimAndReal2Real];
    let mut noise_rmse = [0.0; 2];
    let mut clean_rmse = [0.0; 2];
    for seed in 0..SEEDS {
        let sim = gen_dataset(&c, SIM2REAL_SIM_TRAJ, 100, 10 + seed).unwrap();
        let noise = synthesize_real_run(&c, &path, &RealRunSpec::default(), 20 + seed).unwrap();
        let spec = TrainSpec { epochs: SIM2REAL_EPOCHS, learning_rate: 3e-3, patience: 10, seed, ..Default::default() };
        for (k, m) in methods.into_iter().enumerate() {
            let out = run_sim2real(&c, &sim, &clean, &noise, m, arch(SIM2REAL_HIDDEN), &spec).unwrap();
            noise_rmse[k] += out.noise_test.rmse() / SEEDS as f64;
            clean_rmse[k] += out.clean_test.rmse() / SEEDS as f64;
        }
    }
    verdict(
        noise_rmse[1] <= noise_rmse[0],
        format!(
            "noise-test RMSE mm: sim&real2real {:.2}, real2real {:.2} (clean-test {:.2}, {:.2})",
            noise_rmse[1], noise_rmse[0], clean_rmse[1], clean_rmse[0]
        ),
    )
}

fn timing() -> Verdict {
    let model = CafkNetModel::new(ArchSpec::default(), &mut ChaCha8Rng::seed_from_u64(9));
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["SimC6", "SimC7", "SimC8", "SimC9", "SimC10"] {
        let c = bundled(name).unwrap();
        let traj = gen_dataset(&c, 1, 100, 77).unwrap();
        let lengths: Vec<CableLengths> = traj.samples.iter().map(|s| s.lengths.clone()).collect();
        let best = |solver: &FkSolver<'_>| {
            (0..TIMING_REPEATS).map(|_| bench_fk(&c, solver, &lengths).unwrap().seconds).fold(f64::INFINITY, f64::min)
        };
        let opt = best(&FkSolver::Opt(FkOptSettings::for_config(&c)));
        let net = best(&FkSolver::CafkNet(&model));
        let ratio = opt / net;
        pass &= ratio >= TIMING_MIN_RATIO;
        parts.push(format!("{name} opt {:.2} ms / net {:.2} ms = {ratio:.2}", opt * 1e3, net * 1e3));
    }
    verdict(pass, format!("{} (need >= {TIMING_MIN_RATIO})", parts.join(", ")))
}

/// Every stage's serialized output, concatenated.
fn pipeline_bytes(seed: u64) -> Vec<u8> {
    let c = bundled("SimC7").unwrap();
    let mut out = Vec::new();
    let ds = gen_dataset(&c, 3, 30, seed).unwrap();
    out.extend(ds.to_text().into_bytes());
    let noisy = inject_noise(&c, &ds, 5.0, seed + 1).unwrap();
    out.extend(noisy.to_text().into_bytes());
    let (tr, te) = split(&noisy, 0.8, seed).unwrap();
    out.extend(tr.to_text().into_bytes());
    out.extend(te.to_text().into_bytes());
    let spec = TrainSpec { epochs: 3, seed, ..Default::default() };
    let a = ArchSpec { hidden_dim: 8, mlp_width: 8, mlp_hidden_layers: 1, depth: 2 };
    let one = run_one2one(&c, &ds, a, &spec).unwrap();
    out.extend(Checkpoint::Cafknet(one.model.clone()).to_json().into_bytes());
    out.extend(one.report.to_json().into_bytes());
    for l in &one.log.epoch_loss {
        out.extend(l.to_bits().to_le_bytes());
    }
    let reloaded = match Checkpoint::from_json(&Checkpoint::Cafknet(one.model.clone()).to_json()).unwrap() {
        Checkpoint::Cafknet(m) => m,
        Checkpoint::MlpBaseline(_) => unreachable!(),
    };
    let (pred, _) = evaluate(&reloaded, &TrainingSet::from_dataset(&c, &te).unwrap()).unwrap();
    for p in pred {
        for v in p.to_array() {
            out.extend(v.to_bits().to_le_bytes());
        }
    }
    let real = synthesize_real_run(&bundled("ExpC4").unwrap(), &HalfCircle::default(), &RealRunSpec::default(), seed).unwrap();
    out.extend(real.to_text().into_bytes());
    let (opt, _) = evaluate_opt(&c, &te).unwrap();
    for p in opt {
        for v in p.to_array() {
            out.extend(v.to_bits().to_le_bytes());
        }
    }
    out
}

fn determinism() -> Verdict {
    let a = pipeline_bytes(12);
    let b = pipeline_bytes(12);
    let other = pipeline_bytes(13);
    verdict(
        a == b && a != other,
        format!("{} bytes across generate, noise, split, train, checkpoint, eval, real-run, opt; identical reruns: {}", a.len(), a == b),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 10] = [
        (1, "IK/FK round trip", round_trip),
        (2, "under-constrained failure mode", underconstrained),
        (3, "desk-scale accuracy", desk_accuracy),
        (4, "gradient correctness", gradients),
        (5, "permutation invariance", permutations),
        (6, "structural transfer", transfer),
        (7, "noise trend", noise_trend),
        (8, "sim2real ordering", sim2real),
        (9, "timing ratio", timing),
        (10, "determinism", determinism),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        failures += usize::from(!v.pass);
        println!(
            "{} criterion {id:>2} {name}: {} [{:.0} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
