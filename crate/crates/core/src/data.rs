//! Trajectory generation, IK labelling, noise injection, splits and the
//! dataset text format.
//!
//! Dataset files are plain text:
//!
//! ```text
//! # cdprkit-dataset v1
//! # config: SimC6
//! # cables: 6
//! # provenance: simulated
//! # seed: 7
//! traj,x,y,z,roll,pitch,yaw,l1,l2,l3,l4,l5,l6
//! 0,512.25,...
//! ```
//!
//! Provenance is `simulated`, `noise-injected sigma=<mm>`, `external` or
//! `real-run`. Seed is an integer or `none`. Numbers are written in plain
//! decimal with the shortest digits that read back to the same `f64`.

use std::fmt::{self, Write as _};
use std::path::Path;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::{inverse_kinematics, resolve_config, CableLengths, CdprConfig, GeometryError, Pose};
use crate::graph::{build_graph, CdprGraph};

pub const DATASET_HEADER: &str = "# cdprkit-dataset v1";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dataset schema error on line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("dataset is for `{found}` but `{expected}` was expected")]
    ConfigMismatch { expected: String, found: String },
    #[error("config `{config}` has {expected} cables but the dataset has {found}")]
    CableCountMismatch { config: String, expected: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Where a dataset's labels came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Simulated,
    NoiseInjected { sigma: f64 },
    External,
    /// Synthesized execution of a target path on a device with its own errors.
    RealRun,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Simulated => f.write_str("simulated"),
            Provenance::NoiseInjected { sigma } => write!(f, "noise-injected sigma={sigma}"),
            Provenance::External => f.write_str("external"),
            Provenance::RealRun => f.write_str("real-run"),
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simulated" => Ok(Provenance::Simulated),
            "external" => Ok(Provenance::External),
            "real-run" => Ok(Provenance::RealRun),
            _ => {
                let sigma = s
                    .strip_prefix("noise-injected sigma=")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| format!("unknown provenance `{s}`"))?;
                Ok(Provenance::NoiseInjected { sigma })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub trajectory: usize,
    pub pose: Pose,
    pub lengths: CableLengths,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: String,
    pub cable_count: usize,
    pub provenance: Provenance,
    pub seed: Option<u64>,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: String,
    pub poses: Vec<Pose>,
}

/// Per-coordinate polynomial in Bernstein form on `t in [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialPath {
    /// `control[k]` are the control values of coordinate `k`; degree is `len - 1`.
    pub control: [Vec<f64>; 6],
}

impl PolynomialPath {
    pub fn eval(&self, t: f64) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (k, o) in out.iter_mut().enumerate() {
            // de Casteljau
            let mut b = self.control[k].clone();
            let n = b.len();
            for r in 1..n {
                for i in 0..n - r {
                    b[i] = (1.0 - t) * b[i] + t * b[i + 1];
                }
            }
            *o = b[0];
        }
        out
    }

    /// Cubic with random endpoints inside `[lower, upper]` and interior control
    /// values near the chord, offset by up to a quarter of the range.
    pub fn random_cubic(lower: [f64; 6], upper: [f64; 6], rng: &mut impl Rng) -> Self {
        let control = std::array::from_fn(|k| {
            let (lo, hi) = (lower[k], upper[k]);
            if hi <= lo {
                return vec![lo; 4];
            }
            let p0 = rng.gen_range(lo..=hi);
            let p3 = rng.gen_range(lo..=hi);
            let span = 0.25 * (hi - lo);
            let p1 = p0 + (p3 - p0) / 3.0 + rng.gen_range(-span..=span);
            let p2 = p0 + 2.0 * (p3 - p0) / 3.0 + rng.gen_range(-span..=span);
            vec![p0, p1, p2, p3]
        });
        Self { control }
    }

    /// `samples` poses at uniform `t`, each coordinate clamped to the bounds.
    pub fn sample(&self, lower: [f64; 6], upper: [f64; 6], samples: usize) -> Vec<Pose> {
        (0..samples)
            .map(|s| {
                let t = if samples == 1 { 0.0 } else { s as f64 / (samples - 1) as f64 };
                let mut q = self.eval(t);
                for k in 0..6 {
                    q[k] = q[k].clamp(lower[k], upper[k]);
                }
                Pose::from_array(q)
            })
            .collect()
    }
}

pub fn gen_trajectory(config: &CdprConfig, seed: u64, samples_per_traj: usize) -> Result<Trajectory, DataError> {
    if samples_per_traj < 2 {
        return Err(DataError::InvalidArgument(format!("samples per trajectory must be at least 2, got {samples_per_traj}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = PolynomialPath::random_cubic(config.pose_lower(), config.pose_upper(), &mut rng);
    Ok(Trajectory {
        config: config.name().to_string(),
        poses: path.sample(config.pose_lower(), config.pose_upper(), samples_per_traj),
    })
}

/// `n_traj` random trajectories labelled with exact IK.
pub fn gen_dataset(config: &CdprConfig, n_traj: usize, samples_per_traj: usize, seed: u64) -> Result<Dataset, DataError> {
    if n_traj == 0 {
        return Err(DataError::InvalidArgument("at least one trajectory is required".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_traj * samples_per_traj);
    for t in 0..n_traj {
        let traj = gen_trajectory(config, master.gen(), samples_per_traj)?;
        samples.extend(traj.poses.into_iter().map(|pose| Sample {
            trajectory: t,
            lengths: inverse_kinematics(config, &pose),
            pose,
        }));
    }
    Ok(Dataset {
        config: config.name().to_string(),
        cable_count: config.cable_count(),
        provenance: Provenance::Simulated,
        seed: Some(seed),
        samples,
    })
}

fn check_config(config: &CdprConfig, dataset: &Dataset) -> Result<(), DataError> {
    if dataset.cable_count != config.cable_count() {
        return Err(DataError::CableCountMismatch {
            config: config.name().to_string(),
            expected: config.cable_count(),
            found: dataset.cable_count,
        });
    }
    Ok(())
}

/// Config whose anchors and offsets are each moved by independent draws from
/// `N(0, sigma^2)` per component.
pub fn perturbed_geometry(config: &CdprConfig, sigma: f64, rng: &mut impl Rng) -> CdprConfig {
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let mut jitter = |v: &Vector3<f64>| Vector3::new(v.x + normal.sample(rng), v.y + normal.sample(rng), v.z + normal.sample(rng));
    let anchors: Vec<_> = config.frame_anchors().iter().map(&mut jitter).collect();
    let offsets: Vec<_> = config.ee_offsets().iter().map(&mut jitter).collect();
    config.with_geometry(anchors, offsets)
}

/// Relabels every sample's lengths under an independently perturbed geometry.
/// Poses are left untouched.
pub fn inject_noise(config: &CdprConfig, dataset: &Dataset, sigma: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DataError::InvalidArgument(format!("noise sigma must be finite and non-negative, got {sigma}")));
    }
    check_config(config, dataset)?;
    let mut out = dataset.clone();
    out.provenance = Provenance::NoiseInjected { sigma };
    out.seed = Some(seed);
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in &mut out.samples {
        let noisy = perturbed_geometry(config, sigma, &mut rng);
        s.lengths = inverse_kinematics(&noisy, &s.pose);
    }
    Ok(out)
}

/// Random sample-level partition; both halves keep the original order.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidArgument(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let n = dataset.samples.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * train_fraction).round() as usize;
    let mut train_idx = idx[..n_train].to_vec();
    let mut test_idx = idx[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |ids: &[usize]| Dataset {
        samples: ids.iter().map(|&i| dataset.samples[i].clone()).collect(),
        ..dataset.clone_header()
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

impl Dataset {
    fn clone_header(&self) -> Dataset {
        Dataset {
            config: self.config.clone(),
            cable_count: self.cable_count,
            provenance: self.provenance,
            seed: self.seed,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.samples.iter().map(|s| s.pose).collect()
    }

    /// One graph per sample, built on the nominal geometry of `config`.
    pub fn graphs(&self, config: &CdprConfig) -> Result<Vec<CdprGraph>, DataError> {
        check_config(config, self)?;
        Ok(self
            .samples
            .iter()
            .map(|s| build_graph(config, &s.lengths).expect("cable count checked"))
            .collect())
    }

    /// Concatenation; trajectory indices of `other` are shifted past ours.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset, DataError> {
        if !self.config.eq_ignore_ascii_case(&other.config) {
            return Err(DataError::ConfigMismatch { expected: self.config.clone(), found: other.config.clone() });
        }
        let shift = self.samples.iter().map(|s| s.trajectory + 1).max().unwrap_or(0);
        let mut out = self.clone();
        out.samples.extend(other.samples.iter().map(|s| Sample { trajectory: s.trajectory + shift, ..s.clone() }));
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{DATASET_HEADER}");
        let _ = writeln!(out, "# config: {}", self.config);
        let _ = writeln!(out, "# cables: {}", self.cable_count);
        let _ = writeln!(out, "# provenance: {}", self.provenance);
        match self.seed {
            Some(s) => {
                let _ = writeln!(out, "# seed: {s}");
            }
            None => {
                let _ = writeln!(out, "# seed: none");
            }
        }
        out.push_str("traj,x,y,z,roll,pitch,yaw");
        for i in 1..=self.cable_count {
            let _ = write!(out, ",l{i}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{}", s.trajectory);
            for v in s.pose.to_array() {
                let _ = write!(out, ",{v}");
            }
            for v in s.lengths.as_slice() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Dataset, DataError> {
        let schema = |line: usize, message: String| DataError::Schema { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        match lines.next() {
            Some((_, l)) if l == DATASET_HEADER => {}
            _ => return Err(schema(1, format!("expected `{DATASET_HEADER}`"))),
        }
        let mut field = |key: &str| -> Result<(usize, String), DataError> {
            let (n, l) = lines.next().ok_or_else(|| schema(0, format!("missing `{key}` header")))?;
            let v = l
                .strip_prefix("# ")
                .and_then(|r| r.strip_prefix(key))
                .and_then(|r| r.strip_prefix(": "))
                .ok_or_else(|| schema(n, format!("expected `# {key}: ...`")))?;
            Ok((n, v.to_string()))
        };
        let (_, config) = field("config")?;
        let (n, cables) = field("cables")?;
        let cable_count: usize = cables.parse().map_err(|_| schema(n, format!("bad cable count `{cables}`")))?;
        let (n, prov) = field("provenance")?;
        let provenance: Provenance = prov.parse().map_err(|e| schema(n, e))?;
        let (n, seed) = field("seed")?;
        let seed = match seed.as_str() {
            "none" => None,
            s => Some(s.parse::<u64>().map_err(|_| schema(n, format!("bad seed `{s}`")))?),
        };
        let (n, cols) = lines.next().ok_or_else(|| schema(0, "missing column header".into()))?;
        let expected_cols = 7 + cable_count;
        if cols.split(',').count() != expected_cols || !cols.starts_with("traj,x,y,z,roll,pitch,yaw") {
            return Err(schema(n, "column header does not match the cable count".into()));
        }
        let mut samples = Vec::new();
        for (n, l) in lines {
            if l.is_empty() {
                continue;
            }
            let parts: Vec<&str> = l.split(',').collect();
            if parts.len() != expected_cols {
                return Err(schema(n, format!("expected {expected_cols} fields, found {}", parts.len())));
            }
            let trajectory = parts[0].parse().map_err(|_| schema(n, format!("bad trajectory index `{}`", parts[0])))?;
            let nums = parts[1..]
                .iter()
                .map(|p| p.parse::<f64>().map_err(|_| schema(n, format!("bad number `{p}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            let pose = Pose::try_new(nums[0], nums[1], nums[2], nums[3], nums[4], nums[5]).map_err(|e| schema(n, e.to_string()))?;
            let lengths = CableLengths::new(nums[6..].to_vec()).map_err(|e| schema(n, e.to_string()))?;
            samples.push(Sample { trajectory, pose, lengths });
        }
        Ok(Dataset { config, cable_count, provenance, seed, samples })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| DataError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
        Dataset::from_text(&text)
    }
}

/// Reads a dataset recorded outside this crate and checks it against the
/// configuration named in its header.
pub fn load_external(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let mut ds = Dataset::load(path)?;
    let config = resolve_config(&ds.config)?;
    check_config(&config, &ds)?;
    ds.provenance = Provenance::External;
    Ok(ds)
}

/// Target path for the planar transfer study: a half circle swept left to
/// right with a gentle yaw swing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfCircle {
    pub center: [f64; 2],
    pub radius: f64,
    pub yaw_amplitude: f64,
}

impl Default for HalfCircle {
    fn default() -> Self {
        Self { center: [500.0, 350.0], radius: 300.0, yaw_amplitude: 0.15 }
    }
}

impl HalfCircle {
    /// Pose at path parameter `s in [0, 1]`.
    pub fn pose(&self, s: f64) -> Pose {
        let a = std::f64::consts::PI * (1.0 - s);
        Pose::new(
            self.center[0] + self.radius * a.cos(),
            self.center[1] + self.radius * a.sin(),
            0.0,
            0.0,
            0.0,
            self.yaw_amplitude * (2.0 * std::f64::consts::PI * s).sin(),
        )
    }

    pub fn poses(&self, samples: usize) -> Vec<Pose> {
        (0..samples)
            .map(|k| self.pose(if samples < 2 { 0.0 } else { k as f64 / (samples - 1) as f64 }))
            .collect()
    }
}

/// Error model of a physical device executing a target path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealRunSpec {
    pub samples: usize,
    /// Std of the fixed per-device anchor and offset errors, mm.
    pub geometry_sigma: f64,
    /// Std of the per-reading length error, mm.
    pub encoder_sigma: f64,
    /// Amplitude of the smooth deviation of the executed pose from the target, mm.
    pub tracking_amplitude: f64,
    /// Std of the per-reading position error of the pose measurement, mm.
    pub capture_sigma: f64,
}

impl Default for RealRunSpec {
    fn default() -> Self {
        Self { samples: 1103, geometry_sigma: 3.0, encoder_sigma: 0.3, tracking_amplitude: 4.0, capture_sigma: 0.2 }
    }
}

/// Clean labels for `path`: `samples` poses at uniform path parameter with
/// exact IK on the nominal geometry.
pub fn clean_path_dataset(config: &CdprConfig, path: &HalfCircle, samples: usize) -> Dataset {
    let samples = path
        .poses(samples)
        .into_iter()
        .map(|pose| Sample { trajectory: 0, lengths: inverse_kinematics(config, &pose), pose })
        .collect();
    Dataset {
        config: config.name().to_string(),
        cable_count: config.cable_count(),
        provenance: Provenance::Simulated,
        seed: None,
        samples,
    }
}

/// Synthesized recording of a device with its own geometry errors executing
/// `path`. The device geometry is drawn once. The executed pose wanders
/// smoothly around the target; lengths come from the device geometry plus
/// encoder noise, poses from the capture system with its own small noise.
pub fn synthesize_real_run(config: &CdprConfig, path: &HalfCircle, spec: &RealRunSpec, seed: u64) -> Result<Dataset, DataError> {
    if spec.samples < 2 {
        return Err(DataError::InvalidArgument("a run needs at least 2 samples".into()));
    }
    for (name, v) in [
        ("geometry sigma", spec.geometry_sigma),
        ("encoder sigma", spec.encoder_sigma),
        ("tracking amplitude", spec.tracking_amplitude),
        ("capture sigma", spec.capture_sigma),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(DataError::InvalidArgument(format!("{name} must be finite and non-negative")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut device = perturbed_geometry(config, spec.geometry_sigma, &mut rng);
    if config.is_planar() {
        let flat = |v: &Vector3<f64>| Vector3::new(v.x, v.y, 0.0);
        device = device.with_geometry(
            device.frame_anchors().iter().map(flat).collect(),
            device.ee_offsets().iter().map(flat).collect(),
        );
    }
    let phase: [f64; 2] = [rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU)];
    let encoder = Normal::new(0.0, spec.encoder_sigma).expect("checked");
    let capture = Normal::new(0.0, spec.capture_sigma).expect("checked");
    let (lo, hi) = (config.pose_lower(), config.pose_upper());
    let mut samples = Vec::with_capacity(spec.samples);
    for k in 0..spec.samples {
        let s = k as f64 / (spec.samples - 1) as f64;
        let target = path.pose(s).to_array();
        let w = 3.0 * std::f64::consts::TAU * s;
        let mut actual = target;
        actual[0] += spec.tracking_amplitude * (w + phase[0]).sin();
        actual[1] += spec.tracking_amplitude * (w + phase[1]).cos();
        for i in 0..6 {
            actual[i] = actual[i].clamp(lo[i], hi[i]);
        }
        let actual = Pose::from_array(actual);
        let lengths: Vec<f64> = inverse_kinematics(&device, &actual)
            .as_slice()
            .iter()
            .map(|l| (l + encoder.sample(&mut rng)).max(0.0))
            .collect();
        let mut measured = actual.to_array();
        let position_axes = if config.is_planar() { 2 } else { 3 };
        for v in measured.iter_mut().take(position_axes) {
            *v += capture.sample(&mut rng);
        }
        samples.push(Sample { trajectory: 0, pose: Pose::from_array(measured), lengths: CableLengths::new(lengths)? });
    }
    Ok(Dataset {
        config: config.name().to_string(),
        cable_count: config.cable_count(),
        provenance: Provenance::RealRun,
        seed: Some(seed),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::bundled;

    #[test]
    fn degree_one_with_equal_endpoints_is_constant() {
        let path = PolynomialPath { control: std::array::from_fn(|k| vec![k as f64 * 10.0 + 1.0; 2]) };
        let lo = [-1e9; 6];
        let hi = [1e9; 6];
        let poses = path.sample(lo, hi, 5);
        assert!(poses.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(poses[0].to_array(), [1.0, 11.0, 21.0, 31.0, 41.0, 51.0]);
    }

    #[test]
    fn bernstein_cubic_matches_power_form() {
        // control 0, 1, 3, 2 -> (1-t)^3*0 + 3(1-t)^2 t*1 + 3(1-t)t^2*3 + t^3*2
        let path = PolynomialPath { control: std::array::from_fn(|_| vec![0.0, 1.0, 3.0, 2.0]) };
        for t in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let u: f64 = 1.0 - t;
            let want = 3.0 * u * u * t + 9.0 * u * t * t + 2.0 * t * t * t;
            assert!((path.eval(t)[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectories_stay_in_bounds_and_repeat() {
        for name in ["SimC4", "SimC8", "ExpC4"] {
            let c = bundled(name).unwrap();
            for seed in 0..20 {
                let t = gen_trajectory(&c, seed, 100).unwrap();
                assert_eq!(t.poses.len(), 100);
                assert!(t.poses.iter().all(|p| c.contains(p)));
                assert_eq!(t, gen_trajectory(&c, seed, 100).unwrap());
            }
        }
        let c = bundled("SimC6").unwrap();
        assert_ne!(gen_trajectory(&c, 1, 10).unwrap(), gen_trajectory(&c, 2, 10).unwrap());
        assert!(matches!(gen_trajectory(&c, 0, 1), Err(DataError::InvalidArgument(_))));
    }

    #[test]
    fn default_sizes_and_exact_labels() {
        let c = bundled("SimC6").unwrap();
        let ds = gen_dataset(&c, 100, 100, 1).unwrap();
        assert_eq!(ds.len(), 10_000);
        assert_eq!(ds.provenance, Provenance::Simulated);
        assert!(ds.samples.iter().all(|s| s.lengths == inverse_kinematics(&c, &s.pose)));
        let (train, test) = split(&ds, 0.8, 3).unwrap();
        assert_eq!((train.len(), test.len()), (8_000, 2_000));

        let desk = gen_dataset(&c, 20, 100, 1).unwrap();
        assert_eq!(desk.len(), 2_000);
        assert!(desk.samples.iter().all(|s| c.contains(&s.pose) && s.lengths == inverse_kinematics(&c, &s.pose)));
        assert_eq!(desk.samples.last().unwrap().trajectory, 19);
    }

    #[test]
    fn split_partitions_and_repeats() {
        let c = bundled("SimC5").unwrap();
        let ds = gen_dataset(&c, 5, 20, 9).unwrap();
        let (a, b) = split(&ds, 0.8, 4).unwrap();
        let mut all: Vec<String> = a.samples.iter().chain(&b.samples).map(|s| format!("{:?}", s)).collect();
        let mut orig: Vec<String> = ds.samples.iter().map(|s| format!("{:?}", s)).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert_eq!(split(&ds, 0.8, 4).unwrap(), (a.clone(), b));
        assert_ne!(split(&ds, 0.8, 5).unwrap().0, a);
        assert!(split(&ds, 1.0, 0).is_err());
        assert!(split(&ds, 0.0, 0).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let c = bundled("SimC7").unwrap();
        let ds = gen_dataset(&c, 2, 10, 0).unwrap();
        let n = inject_noise(&c, &ds, 0.0, 5).unwrap();
        assert_eq!(n.samples, ds.samples);
        assert_eq!(n.provenance, Provenance::NoiseInjected { sigma: 0.0 });
    }

    #[test]
    fn noise_changes_only_lengths_and_grows_with_sigma() {
        let c = bundled("SimC8").unwrap();
        let ds = gen_dataset(&c, 10, 100, 2).unwrap();
        let mean_shift = |sigma: f64| {
            let n = inject_noise(&c, &ds, sigma, 11).unwrap();
            assert_eq!(n.poses(), ds.poses());
            let mut total = 0.0;
            let mut count = 0.0;
            for (a, b) in n.samples.iter().zip(&ds.samples) {
                for (x, y) in a.lengths.as_slice().iter().zip(b.lengths.as_slice()) {
                    total += (x - y).abs();
                    count += 1.0;
                }
            }
            total / count
        };
        let five = mean_shift(5.0);
        let ten = mean_shift(10.0);
        assert!(five > 1.0 && ten > 1.5 * five, "{five} {ten}");
        assert!(inject_noise(&c, &ds, -1.0, 0).is_err());
        assert!(inject_noise(&bundled("SimC4").unwrap(), &ds, 1.0, 0).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let c = bundled("SimC9").unwrap();
        let ds = inject_noise(&c, &gen_dataset(&c, 3, 7, 8).unwrap(), 5.0, 1).unwrap();
        let back = Dataset::from_text(&ds.to_text()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_text(), ds.to_text());
        assert!(ds.to_text().lines().skip(6).all(|l| !l.contains('e')), "no exponents");
    }

    #[test]
    fn schema_errors_name_the_line() {
        let c = bundled("SimC4").unwrap();
        let text = gen_dataset(&c, 1, 3, 0).unwrap().to_text();
        let broken = text.replacen("\n0,", "\n0,abc,", 1);
        assert!(matches!(Dataset::from_text(&broken), Err(DataError::Schema { line: 7, .. })));
        assert!(matches!(Dataset::from_text("hello"), Err(DataError::Schema { line: 1, .. })));
        let wrong_cables = text.replace("# cables: 4", "# cables: 5");
        assert!(matches!(Dataset::from_text(&wrong_cables), Err(DataError::Schema { line: 6, .. })));
    }

    #[test]
    fn external_files_are_checked_against_their_config() {
        let dir = tempfile::tempdir().unwrap();
        let c = bundled("ExpC4").unwrap();
        let ds = gen_dataset(&c, 1, 5, 0).unwrap();
        let p = dir.path().join("run.csv");
        ds.save(&p).unwrap();
        let ext = load_external(&p).unwrap();
        assert_eq!(ext.provenance, Provenance::External);
        assert_eq!(ext.samples, ds.samples);

        let lie = ds.to_text().replace("# config: ExpC4", "# config: SimC6");
        std::fs::write(&p, lie).unwrap();
        assert!(matches!(load_external(&p), Err(DataError::CableCountMismatch { expected: 6, found: 4, .. })));
    }

    #[test]
    fn half_circle_and_real_run() {
        let c = bundled("ExpC4").unwrap();
        let path = HalfCircle::default();
        let clean = clean_path_dataset(&c, &path, 1000);
        assert_eq!(clean.len(), 1000);
        assert!(clean.samples.iter().all(|s| c.contains(&s.pose)));
        assert_eq!(clean.samples[0].pose.x, 200.0);
        assert!((clean.samples[999].pose.x - 800.0).abs() < 1e-9);

        let run = synthesize_real_run(&c, &path, &RealRunSpec::default(), 4).unwrap();
        assert_eq!(run.len(), 1103);
        assert_eq!(run, synthesize_real_run(&c, &path, &RealRunSpec::default(), 4).unwrap());
        assert!(run.samples.iter().all(|s| s.pose.z == 0.0));
        let ideal = RealRunSpec { geometry_sigma: 0.0, encoder_sigma: 0.0, tracking_amplitude: 0.0, capture_sigma: 0.0, ..Default::default() };
        let exact = synthesize_real_run(&c, &path, &ideal, 4).unwrap();
        assert!(exact.samples.iter().all(|s| s.lengths == inverse_kinematics(&c, &s.pose)));
    }

    #[test]
    fn concat_shifts_trajectories() {
        let c = bundled("SimC6").unwrap();
        let a = gen_dataset(&c, 2, 3, 0).unwrap();
        let b = gen_dataset(&c, 1, 3, 1).unwrap();
        let ab = a.concat(&b).unwrap();
        assert_eq!(ab.len(), 9);
        assert_eq!(ab.samples[8].trajectory, 2);
    }
}
