//! Geometric model of a cable-driven parallel robot and its exact inverse
//! kinematics.
//!
//! All lengths are in millimetres and all angles in radians. Orientation uses
//! roll/pitch/yaw Euler angles composed as `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of the on-disk configuration format.
pub const CONFIG_FORMAT: &str = "cdpr-config";
/// Current configuration format version.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cable index {index} out of range for {count} cables")]
    CableIndexOutOfRange { index: usize, count: usize },
    #[error("expected {expected} cable lengths, found {found}")]
    LengthCountMismatch { expected: usize, found: usize },
    #[error("cable length {index} is {value}; lengths must be finite and non-negative")]
    InvalidLength { index: usize, value: f64 },
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("unknown bundled configuration `{0}`")]
    UnknownConfig(String),
    #[error("config schema error: {0}")]
    Schema(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// End-effector pose `(x, y, z, roll, pitch, yaw)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            roll,
            pitch,
            yaw,
        }
    }

    /// Builds a pose and checks that it is finite with Euler angles in `[-pi, pi]`.
    pub fn try_new(
        x: f64,
        y: f64,
        z: f64,
        roll: f64,
        pitch: f64,
        yaw: f64,
    ) -> Result<Self, GeometryError> {
        let pose = Self::new(x, y, z, roll, pitch, yaw);
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let a = self.to_array();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPose(format!("non-finite component in {self}")));
        }
        if a[3..].iter().any(|v| v.abs() > PI) {
            return Err(GeometryError::InvalidPose(format!(
                "Euler angles of {self} leave [-pi, pi]"
            )));
        }
        Ok(())
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix(self.roll, self.pitch, self.yaw)
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {}, {}, {})",
            self.x, self.y, self.z, self.roll, self.pitch, self.yaw
        )
    }
}

/// Cable lengths in mm, one per cable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableLengths(Vec<f64>);

impl CableLengths {
    pub fn new(lengths: Vec<f64>) -> Result<Self, GeometryError> {
        for (index, &value) in lengths.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(GeometryError::InvalidLength { index, value });
            }
        }
        Ok(Self(lengths))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Full geometric description of one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct CdprConfig {
    name: String,
    frame_anchors: Vec<Vector3<f64>>,
    ee_offsets: Vec<Vector3<f64>>,
    planar: bool,
    pose_lower: [f64; 6],
    pose_upper: [f64; 6],
}

impl CdprConfig {
    pub fn new(
        name: impl Into<String>,
        frame_anchors: Vec<Vector3<f64>>,
        ee_offsets: Vec<Vector3<f64>>,
        planar: bool,
        pose_lower: [f64; 6],
        pose_upper: [f64; 6],
    ) -> Result<Self, GeometryError> {
        let config = Self {
            name: name.into(),
            frame_anchors,
            ee_offsets,
            planar,
            pose_lower,
            pose_upper,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::InvalidConfig(format!("{}: {msg}", self.name)));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        let m = self.frame_anchors.len();
        if m < 3 {
            return bad(format!("need at least 3 cables, got {m}"));
        }
        if self.ee_offsets.len() != m {
            return bad(format!(
                "{m} frame anchors but {} end-effector offsets",
                self.ee_offsets.len()
            ));
        }
        let finite = |v: &Vector3<f64>| v.iter().all(|c| c.is_finite());
        if !self.frame_anchors.iter().all(finite) || !self.ee_offsets.iter().all(finite) {
            return bad("non-finite anchor or offset".into());
        }
        for k in 0..6 {
            let (lo, hi) = (self.pose_lower[k], self.pose_upper[k]);
            if !lo.is_finite() || !hi.is_finite() {
                return bad(format!("pose bound {k} is not finite"));
            }
            if lo > hi {
                return bad(format!("pose_lower[{k}] = {lo} exceeds pose_upper[{k}] = {hi}"));
            }
            if k >= 3 && (lo < -PI || hi > PI) {
                return bad(format!("angle bounds for component {k} leave [-pi, pi]"));
            }
        }
        if self.planar {
            if self
                .frame_anchors
                .iter()
                .chain(&self.ee_offsets)
                .any(|v| v.z != 0.0)
            {
                return bad("planar robot must have z = 0 on all anchors and offsets".into());
            }
            for k in [2, 3, 4] {
                if self.pose_lower[k] != 0.0 || self.pose_upper[k] != 0.0 {
                    return bad(format!("planar robot must fix pose component {k} at 0"));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cable_count(&self) -> usize {
        self.frame_anchors.len()
    }

    pub fn frame_anchors(&self) -> &[Vector3<f64>] {
        &self.frame_anchors
    }

    pub fn ee_offsets(&self) -> &[Vector3<f64>] {
        &self.ee_offsets
    }

    pub fn is_planar(&self) -> bool {
        self.planar
    }

    pub fn pose_lower(&self) -> [f64; 6] {
        self.pose_lower
    }

    pub fn pose_upper(&self) -> [f64; 6] {
        self.pose_upper
    }

    /// Midpoint of the pose bounds.
    pub fn bounds_center(&self) -> Pose {
        let mut c = [0.0; 6];
        for (k, v) in c.iter_mut().enumerate() {
            *v = 0.5 * (self.pose_lower[k] + self.pose_upper[k]);
        }
        Pose::from_array(c)
    }

    /// Length of the diagonal of the positional bounding box.
    pub fn workspace_diagonal(&self) -> f64 {
        (0..3)
            .map(|k| (self.pose_upper[k] - self.pose_lower[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, pose: &Pose) -> bool {
        pose.to_array()
            .iter()
            .enumerate()
            .all(|(k, v)| *v >= self.pose_lower[k] && *v <= self.pose_upper[k])
    }

    /// Copy of this config with different anchors and offsets (same bounds).
    ///
    /// Used to model geometric uncertainty; planar invariants are not re-checked
    /// because perturbed geometry may leave the plane.
    pub fn with_geometry(&self, frame_anchors: Vec<Vector3<f64>>, ee_offsets: Vec<Vector3<f64>>) -> Self {
        assert_eq!(frame_anchors.len(), self.cable_count());
        assert_eq!(ee_offsets.len(), self.cable_count());
        Self {
            frame_anchors,
            ee_offsets,
            ..self.clone()
        }
    }

    /// Reorders cables: cable `k` of the result is cable `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.cable_count());
        Self {
            frame_anchors: perm.iter().map(|&i| self.frame_anchors[i]).collect(),
            ee_offsets: perm.iter().map(|&i| self.ee_offsets[i]).collect(),
            ..self.clone()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, GeometryError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| GeometryError::Schema(e.to_string()))?;
        file.into_config()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GeometryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ConfigFile::from(self);
        toml::to_string(&file).expect("config serialization is infallible")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GeometryError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|source| GeometryError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// On-disk representation of [`CdprConfig`].
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    format: String,
    version: u32,
    name: String,
    cable_count: usize,
    planar: bool,
    pose_lower: [f64; 6],
    pose_upper: [f64; 6],
    frame_anchors: Vec<[f64; 3]>,
    ee_offsets: Vec<[f64; 3]>,
}

impl ConfigFile {
    fn into_config(self) -> Result<CdprConfig, GeometryError> {
        if self.format != CONFIG_FORMAT {
            return Err(GeometryError::Schema(format!(
                "format is `{}`, expected `{CONFIG_FORMAT}`",
                self.format
            )));
        }
        if self.version != CONFIG_VERSION {
            return Err(GeometryError::Schema(format!(
                "unsupported config version {} (supported: {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.frame_anchors.len() != self.cable_count || self.ee_offsets.len() != self.cable_count {
            return Err(GeometryError::Schema(format!(
                "cable_count = {} but {} frame_anchors and {} ee_offsets",
                self.cable_count,
                self.frame_anchors.len(),
                self.ee_offsets.len()
            )));
        }
        let to_vec = |v: Vec<[f64; 3]>| v.into_iter().map(Vector3::from).collect();
        CdprConfig::new(
            self.name,
            to_vec(self.frame_anchors),
            to_vec(self.ee_offsets),
            self.planar,
            self.pose_lower,
            self.pose_upper,
        )
    }
}

impl From<&CdprConfig> for ConfigFile {
    fn from(c: &CdprConfig) -> Self {
        let to_arr = |v: &[Vector3<f64>]| v.iter().map(|p| [p.x, p.y, p.z]).collect();
        Self {
            format: CONFIG_FORMAT.to_string(),
            version: CONFIG_VERSION,
            name: c.name.clone(),
            cable_count: c.cable_count(),
            planar: c.planar,
            pose_lower: c.pose_lower,
            pose_upper: c.pose_upper,
            frame_anchors: to_arr(&c.frame_anchors),
            ee_offsets: to_arr(&c.ee_offsets),
        }
    }
}

const BUNDLED: [(&str, &str); 8] = [
    ("SimC4", include_str!("../configs/simc4.toml")),
    ("SimC5", include_str!("../configs/simc5.toml")),
    ("SimC6", include_str!("../configs/simc6.toml")),
    ("SimC7", include_str!("../configs/simc7.toml")),
    ("SimC8", include_str!("../configs/simc8.toml")),
    ("SimC9", include_str!("../configs/simc9.toml")),
    ("SimC10", include_str!("../configs/simc10.toml")),
    ("ExpC4", include_str!("../configs/expc4.toml")),
];

/// Names of the bundled configurations.
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// Names of the seven bundled spatial simulation configs, SimC4 to SimC10.
pub const SPATIAL_CONFIGS: [&str; 7] = ["SimC4", "SimC5", "SimC6", "SimC7", "SimC8", "SimC9", "SimC10"];

/// Looks up a bundled configuration by (case-insensitive) name.
pub fn bundled(name: &str) -> Result<CdprConfig, GeometryError> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .ok_or_else(|| GeometryError::UnknownConfig(name.to_string()))?;
    CdprConfig::from_toml_str(text)
}

/// Resolves a bundled name or a path to a config file.
pub fn resolve_config(name_or_path: &str) -> Result<CdprConfig, GeometryError> {
    match bundled(name_or_path) {
        Ok(c) => Ok(c),
        Err(GeometryError::UnknownConfig(_)) if Path::new(name_or_path).exists() => {
            CdprConfig::load(name_or_path)
        }
        Err(e) => Err(e),
    }
}

pub fn rotation_matrix(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Partial derivatives of [`rotation_matrix`] with respect to roll, pitch and yaw.
pub fn rotation_partials(roll: f64, pitch: f64, yaw: f64) -> [Matrix3<f64>; 3] {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let drz = Matrix3::new(-sy, -cy, 0.0, cy, -sy, 0.0, 0.0, 0.0, 0.0);
    let dry = Matrix3::new(-sp, 0.0, cp, 0.0, 0.0, 0.0, -cp, 0.0, -sp);
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sr, -cr, 0.0, cr, -sr);
    [rz * ry * drx, rz * dry * rx, drz * ry * rx]
}

fn cable_vector_with(anchor: &Vector3<f64>, offset: &Vector3<f64>, pose: &Pose, r: &Matrix3<f64>) -> Vector3<f64> {
    pose.position() + r * offset - anchor
}

/// Vector from the frame anchor to the end-effector attachment of cable `index`
/// (zero-based).
pub fn cable_vector(config: &CdprConfig, pose: &Pose, index: usize) -> Result<Vector3<f64>, GeometryError> {
    let m = config.cable_count();
    if index >= m {
        return Err(GeometryError::CableIndexOutOfRange { index, count: m });
    }
    Ok(cable_vector_with(
        &config.frame_anchors[index],
        &config.ee_offsets[index],
        pose,
        &pose.rotation(),
    ))
}

/// All cable vectors at `pose`.
pub fn cable_vectors(config: &CdprConfig, pose: &Pose) -> Vec<Vector3<f64>> {
    let r = pose.rotation();
    config
        .frame_anchors
        .iter()
        .zip(&config.ee_offsets)
        .map(|(a, v)| cable_vector_with(a, v, pose, &r))
        .collect()
}

pub fn inverse_kinematics(config: &CdprConfig, pose: &Pose) -> CableLengths {
    CableLengths(cable_vectors(config, pose).iter().map(|l| l.norm()).collect())
}
