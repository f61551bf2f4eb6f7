//! Forward kinematics by bounded nonlinear least squares.
//!
//! Minimizes `|| L - ik(Q) ||^2` subject to `Q_lb <= Q <= Q_ub` with a
//! Levenberg-Marquardt iteration. Components whose bounds coincide are held
//! fixed and removed from the problem; components resting on a bound with the
//! descent direction pointing outward are dropped from the step for that
//! iteration, and every candidate is projected back into the box.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{cable_vectors, inverse_kinematics, rotation_partials, CableLengths, CdprConfig, GeometryError, Pose};

#[derive(Debug, Error)]
pub enum FkOptError {
    #[error("solver did not converge within the iteration budget (best residual {:.3e} mm)", best.residual_norm)]
    MaxIterationsExceeded { best: FkSolution },
    #[error("infeasible bounds: lower bound {lower} exceeds upper bound {upper} for component {index}")]
    InfeasibleBounds { index: usize, lower: f64, upper: f64 },
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkOptSettings {
    pub lower: [f64; 6],
    pub upper: [f64; 6],
    pub initial_guess: Pose,
    pub max_iterations: usize,
    /// Residual norm (mm) below which the solve is converged.
    pub residual_tolerance: f64,
    /// Step norm below which the solve is converged.
    pub step_tolerance: f64,
}

impl FkOptSettings {
    /// Bounds `[100,100,100,-0.26,-0.26,0]` / `[900,900,900,0.26,0.26,0]`,
    /// initial guess `[500,500,500,0,0,0]`.
    pub fn reference() -> Self {
        Self {
            lower: [100.0, 100.0, 100.0, -0.26, -0.26, 0.0],
            upper: [900.0, 900.0, 900.0, 0.26, 0.26, 0.0],
            initial_guess: Pose::new(500.0, 500.0, 500.0, 0.0, 0.0, 0.0),
            ..Self::for_bounds([0.0; 6], [0.0; 6])
        }
    }

    /// Uses the configuration's pose bounds, starting at their midpoint.
    pub fn for_config(config: &CdprConfig) -> Self {
        Self::for_bounds(config.pose_lower(), config.pose_upper())
    }

    fn for_bounds(lower: [f64; 6], upper: [f64; 6]) -> Self {
        let mut mid = [0.0; 6];
        for k in 0..6 {
            mid[k] = 0.5 * (lower[k] + upper[k]);
        }
        Self {
            lower,
            upper,
            initial_guess: Pose::from_array(mid),
            max_iterations: 200,
            residual_tolerance: 1e-9,
            step_tolerance: 1e-12,
        }
    }

    fn validate(&self) -> Result<(), FkOptError> {
        let guess = self.initial_guess.to_array();
        for k in 0..6 {
            let (lower, upper) = (self.lower[k], self.upper[k]);
            if lower > upper {
                return Err(FkOptError::InfeasibleBounds { index: k, lower, upper });
            }
            if !(lower..=upper).contains(&guess[k]) {
                return Err(FkOptError::InvalidSettings(format!(
                    "initial guess component {k} = {} outside [{lower}, {upper}]",
                    guess[k]
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(FkOptError::InvalidSettings("max_iterations must be positive".into()));
        }
        if !(self.residual_tolerance > 0.0 && self.step_tolerance > 0.0) {
            return Err(FkOptError::InvalidSettings("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkSolution {
    pub pose: Pose,
    /// Euclidean norm of the length residuals at `pose`, in mm.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at every accepted iterate, starting with the initial guess.
    pub objective_history: Vec<f64>,
}

/// `r_i = target_i - ||l_i(pose)||`.
pub fn residuals(config: &CdprConfig, pose: &Pose, target: &CableLengths) -> Result<Vec<f64>, GeometryError> {
    check_target(config, target)?;
    Ok(inverse_kinematics(config, pose)
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(l, t)| t - l)
        .collect())
}

fn check_target(config: &CdprConfig, target: &CableLengths) -> Result<(), GeometryError> {
    if target.len() != config.cable_count() {
        return Err(GeometryError::LengthCountMismatch {
            expected: config.cable_count(),
            found: target.len(),
        });
    }
    Ok(())
}

/// Analytic Jacobian of the residuals with respect to the six pose components
/// (m x 6, row-major rows per cable).
pub fn residual_jacobian(config: &CdprConfig, pose: &Pose) -> Vec<[f64; 6]> {
    let partials = rotation_partials(pose.roll, pose.pitch, pose.yaw);
    cable_vectors(config, pose)
        .iter()
        .zip(config.ee_offsets())
        .map(|(l, v)| {
            let norm = l.norm();
            if norm == 0.0 {
                return [0.0; 6];
            }
            let u = l / norm;
            let mut row = [-u.x, -u.y, -u.z, 0.0, 0.0, 0.0];
            for (j, d) in partials.iter().enumerate() {
                row[3 + j] = -u.dot(&(d * v));
            }
            row
        })
        .collect()
}

/// Central finite-difference Jacobian of the residuals, step `1e-6` of each
/// variable's scale.
pub fn residual_jacobian_fd(config: &CdprConfig, pose: &Pose, target: &CableLengths) -> Result<Vec<[f64; 6]>, GeometryError> {
    check_target(config, target)?;
    let m = config.cable_count();
    let base = pose.to_array();
    let mut jac = vec![[0.0; 6]; m];
    for k in 0..6 {
        let h = 1e-6 * base[k].abs().max(1.0);
        let mut plus = base;
        let mut minus = base;
        plus[k] += h;
        minus[k] -= h;
        let rp = residuals(config, &Pose::from_array(plus), target)?;
        let rm = residuals(config, &Pose::from_array(minus), target)?;
        for i in 0..m {
            jac[i][k] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Solves forward kinematics for `target` lengths.
///
/// On `MaxIterationsExceeded` the error carries the best iterate found.
pub fn solve_fk_opt(config: &CdprConfig, target: &CableLengths, settings: &FkOptSettings) -> Result<FkSolution, FkOptError> {
    settings.validate()?;
    check_target(config, target)?;

    let free: Vec<usize> = (0..6).filter(|&k| settings.lower[k] < settings.upper[k]).collect();
    let n = free.len();
    let mut q = settings.initial_guess.to_array();
    let mut r = residuals(config, &Pose::from_array(q), target)?;
    let mut cost = sum_sq(&r);
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut iterations = 0;

    let finish = |q: [f64; 6], cost: f64, iterations, converged, history| FkSolution {
        pose: Pose::from_array(q),
        residual_norm: cost.sqrt(),
        iterations,
        converged,
        objective_history: history,
    };

    if cost.sqrt() < settings.residual_tolerance || n == 0 {
        return Ok(finish(q, cost, 0, true, history));
    }

    while iterations < settings.max_iterations {
        let jac = residual_jacobian(config, &Pose::from_array(q));
        let mut grad = vec![0.0; n];
        for (row, ri) in jac.iter().zip(&r) {
            for (a, &k) in free.iter().enumerate() {
                grad[a] += row[k] * ri;
            }
        }
        // Bound-active variables whose descent direction leaves the box.
        let active: Vec<usize> = (0..n)
            .filter(|&a| {
                let k = free[a];
                let descent = -grad[a];
                (q[k] <= settings.lower[k] && descent < 0.0) || (q[k] >= settings.upper[k] && descent > 0.0)
            })
            .collect();
        let cols: Vec<usize> = (0..n).filter(|a| !active.contains(a)).collect();
        if cols.is_empty() {
            return Ok(finish(q, cost, iterations, true, history));
        }
        let p = cols.len();
        let j = DMatrix::from_fn(jac.len(), p, |i, c| jac[i][free[cols[c]]]);
        let jtj = j.transpose() * &j;
        let g = DVector::from_fn(p, |c, _| grad[cols[c]]);
        let diag_floor = 1e-12 * jtj.diagonal().max().max(1e-300);

        loop {
            iterations += 1;
            let mut a = jtj.clone();
            for c in 0..p {
                a[(c, c)] += lambda * jtj[(c, c)].max(diag_floor);
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => match a.lu().solve(&(-&g)) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        if iterations >= settings.max_iterations {
                            break;
                        }
                        continue;
                    }
                },
            };
            let mut candidate = q;
            for (c, &a_idx) in cols.iter().enumerate() {
                let k = free[a_idx];
                candidate[k] = (q[k] + step[c]).clamp(settings.lower[k], settings.upper[k]);
            }
            let step_norm = candidate.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let r_new = residuals(config, &Pose::from_array(candidate), target)?;
            let cost_new = sum_sq(&r_new);
            if cost_new < cost {
                q = candidate;
                r = r_new;
                cost = cost_new;
                history.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                if cost.sqrt() < settings.residual_tolerance || step_norm < settings.step_tolerance {
                    return Ok(finish(q, cost, iterations, true, history));
                }
                break;
            }
            if step_norm < settings.step_tolerance {
                return Ok(finish(q, cost, iterations, true, history));
            }
            lambda *= 10.0;
            if iterations >= settings.max_iterations {
                break;
            }
        }
    }
    Err(FkOptError::MaxIterationsExceeded {
        best: finish(q, cost, iterations, false, history),
    })
}

/// Like [`solve_fk_opt`] but returns the best iterate when the iteration budget
/// runs out.
pub fn solve_fk_opt_best_effort(config: &CdprConfig, target: &CableLengths, settings: &FkOptSettings) -> Result<FkSolution, FkOptError> {
    match solve_fk_opt(config, target, settings) {
        Err(FkOptError::MaxIterationsExceeded { best }) => Ok(best),
        other => other,
    }
}
