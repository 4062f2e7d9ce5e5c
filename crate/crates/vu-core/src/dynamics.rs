//! Newmark-beta deformation of the wall model under unfolding forces, with
//! the distance-metric termination rule.
//!
//! The system is integrated numerically in (mm, kg, s) units: accelerations
//! are force numbers divided by mass numbers with no unit conversion, so a
//! unit mass on a unit-stiffness spring oscillates at 1 rad/s.

use serde::{Deserialize, Serialize};

use crate::unfold_geometry::{force_direction, DestinationSet, UnfoldPlane};
use crate::wall_model::WallModel;
use crate::Vec3;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Time step in seconds.
    pub dt: f64,
    /// Newmark beta parameter (1/4 = average acceleration).
    pub beta: f64,
    /// Newmark gamma parameter (1/2 = no algorithmic damping).
    pub gamma: f64,
    /// Fixed-point corrector passes per step.
    pub corrector_passes: usize,
    /// Pull gain toward the destination points (force per mm of error).
    pub pull_gain: f64,
    /// Pull force magnitude cap.
    pub pull_force_cap: f64,
    /// Flattening gain toward the unfolded plane, reached after the ramp.
    pub flatten_gain: f64,
    /// Iterations over which the flattening gain ramps from zero.
    pub flatten_ramp_iters: usize,
    /// Hard iteration limit.
    pub max_iterations: usize,
    /// Termination threshold on successive D differences (mm).
    pub kappa: f64,
    /// Stop as diverged when D exceeds this multiple of the initial D.
    pub divergence_factor: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            beta: 0.25,
            gamma: 0.85,
            corrector_passes: 3,
            pull_gain: 0.009,
            pull_force_cap: 1.2,
            flatten_gain: 0.04,
            flatten_ramp_iters: 30,
            max_iterations: 5000,
            kappa: 0.5,
            divergence_factor: 10.0,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::BadConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(0.0..=0.5).contains(&self.beta) {
            return Err(DynamicsError::BadConfig(format!("beta must be in [0, 1/2], got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(DynamicsError::BadConfig(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if !(self.kappa > 0.0) {
            return Err(DynamicsError::BadConfig(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.max_iterations < 1 {
            return Err(DynamicsError::BadConfig("max_iterations must be at least 1".into()));
        }
        if self.corrector_passes < 1 {
            return Err(DynamicsError::BadConfig("corrector_passes must be at least 1".into()));
        }
        if !(self.pull_gain >= 0.0 && self.flatten_gain >= 0.0 && self.pull_force_cap > 0.0) {
            return Err(DynamicsError::BadConfig("force gains must be non-negative, cap positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("invalid dynamics config: {0}")]
    BadConfig(String),
    #[error("divergence at iteration {iteration}: vertex {vertex} is non-finite")]
    Divergence { iteration: usize, vertex: u32 },
    #[error("cut-edge vertex set is empty, metric undefined")]
    EmptyCutEdge,
}

/// Per-vertex kinematic state plus the D-metric history.
#[derive(Clone, Debug)]
pub struct SimState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub accelerations: Vec<Vec3>,
    /// Completed unfolding iterations (one Newmark step each).
    pub iteration: usize,
    /// D^(0) .. D^(iteration) once a destination set exists.
    pub d_history: Vec<f64>,
}

impl SimState {
    /// Rest state: rest positions, zero velocity and acceleration.
    pub fn at_rest(model: &WallModel) -> Self {
        let n = model.positions.len();
        Self {
            positions: model.positions.clone(),
            velocities: vec![Vec3::zeros(); n],
            accelerations: vec![Vec3::zeros(); n],
            iteration: 0,
            d_history: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Diverged,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::Converged => "converged",
            StopReason::MaxIterations => "max-iterations",
            StopReason::Diverged => "diverged",
        };
        f.write_str(s)
    }
}

/// Accumulates spring and damper forces into `out` (cleared first).
/// Returns the number of degenerate (coincident-endpoint) springs skipped.
pub fn accumulate_internal_forces(
    model: &WallModel,
    positions: &[Vec3],
    velocities: &[Vec3],
    out: &mut Vec<Vec3>,
) -> usize {
    out.clear();
    out.resize(positions.len(), Vec3::zeros());
    let mut degenerate = 0usize;
    for s in &model.springs {
        let (ia, ib) = (s.a as usize, s.b as usize);
        let l = positions[ia] - positions[ib];
        let len = l.norm();
        if len < 1e-9 {
            degenerate += 1;
            continue;
        }
        let dir = l / len;
        let stretch = len - s.rest_len;
        let rel_v = (velocities[ia] - velocities[ib]).dot(&dir);
        let f = dir * (-s.stiffness * stretch - s.damping * rel_v);
        out[ia] += f;
        out[ib] -= f;
    }
    degenerate
}

/// Spring and damper forces for the given state.
pub fn internal_forces(model: &WallModel, state: &SimState) -> Vec<Vec3> {
    let mut out = Vec::new();
    accumulate_internal_forces(model, &state.positions, &state.velocities, &mut out);
    out
}

/// Adds the unfolding forces for iteration `alpha` into `forces`:
/// a capped proportional pull toward each destination for cut-edge vertices,
/// and a ramped flattening force toward the plane for all surface vertices.
pub fn accumulate_external_forces(
    positions: &[Vec3],
    dest: &DestinationSet,
    plane: &UnfoldPlane,
    surface: &[u32],
    cfg: &DynamicsConfig,
    alpha: usize,
    forces: &mut [Vec3],
) {
    let dirs = force_direction(positions, dest);
    for (entry, e) in dest.entries.iter().zip(dirs) {
        let mut f = e * cfg.pull_gain;
        let mag = f.norm();
        if mag > cfg.pull_force_cap {
            f *= cfg.pull_force_cap / mag;
        }
        forces[entry.vertex as usize] += f;
    }
    let ramp = if cfg.flatten_ramp_iters == 0 {
        1.0
    } else {
        (alpha as f64 / cfg.flatten_ramp_iters as f64).min(1.0)
    };
    let gain = cfg.flatten_gain * ramp;
    if gain > 0.0 {
        for &v in surface {
            let d = (positions[v as usize] - plane.point).dot(&plane.normal);
            forces[v as usize] -= plane.normal * (gain * d);
        }
    }
}

/// External forces alone, for the given state and iteration count.
pub fn external_forces(
    state: &SimState,
    dest: &DestinationSet,
    plane: &UnfoldPlane,
    surface: &[u32],
    cfg: &DynamicsConfig,
    alpha: usize,
) -> Vec<Vec3> {
    let mut forces = vec![Vec3::zeros(); state.positions.len()];
    accumulate_external_forces(&state.positions, dest, plane, surface, cfg, alpha, &mut forces);
    forces
}

/// Outcome of one integration step.
pub struct StepInfo {
    /// Largest total force magnitude seen in the final corrector pass.
    pub max_force: f64,
    pub degenerate_springs: usize,
}

/// One Newmark-beta step with internal forces only.
pub fn newmark_step(
    model: &WallModel,
    state: &mut SimState,
    cfg: &DynamicsConfig,
) -> Result<StepInfo, DynamicsError> {
    newmark_step_with(model, state, cfg, |_, _, _| {})
}

/// One Newmark-beta step. `extra` adds external forces for trial positions
/// and velocities; it is re-evaluated in every corrector pass.
///
/// Predictor: `r* = r + dt v + dt^2 (1/2 - beta) a`, `v* = v + dt (1-gamma) a`.
/// Corrector (fixed pass count, seeded with the previous acceleration):
/// `a_new = F(r*, v*; a_new) / m` with `r = r* + dt^2 beta a_new` and
/// `v = v* + dt gamma a_new` re-built each pass; the final state uses the
/// last iterate.
pub fn newmark_step_with<F>(
    model: &WallModel,
    state: &mut SimState,
    cfg: &DynamicsConfig,
    extra: F,
) -> Result<StepInfo, DynamicsError>
where
    F: Fn(&[Vec3], &[Vec3], &mut [Vec3]),
{
    let n = state.positions.len();
    let dt = cfg.dt;
    let dt2 = dt * dt;

    let mut r_star = Vec::with_capacity(n);
    let mut v_star = Vec::with_capacity(n);
    for i in 0..n {
        r_star.push(
            state.positions[i]
                + state.velocities[i] * dt
                + state.accelerations[i] * (dt2 * (0.5 - cfg.beta)),
        );
        v_star.push(state.velocities[i] + state.accelerations[i] * (dt * (1.0 - cfg.gamma)));
    }

    let mut a_new = state.accelerations.clone();
    let mut r_hat = vec![Vec3::zeros(); n];
    let mut v_hat = vec![Vec3::zeros(); n];
    let mut forces: Vec<Vec3> = Vec::new();
    let mut max_force = 0.0f64;
    let mut degenerate = 0usize;
    for _ in 0..cfg.corrector_passes {
        for i in 0..n {
            r_hat[i] = r_star[i] + a_new[i] * (dt2 * cfg.beta);
            v_hat[i] = v_star[i] + a_new[i] * (dt * cfg.gamma);
        }
        degenerate = accumulate_internal_forces(model, &r_hat, &v_hat, &mut forces);
        extra(&r_hat, &v_hat, &mut forces);
        max_force = 0.0;
        for i in 0..n {
            a_new[i] = forces[i] / model.masses[i];
            let f = forces[i].norm();
            if f > max_force {
                max_force = f;
            }
        }
    }

    for i in 0..n {
        state.positions[i] = r_star[i] + a_new[i] * (dt2 * cfg.beta);
        state.velocities[i] = v_star[i] + a_new[i] * (dt * cfg.gamma);
        state.accelerations[i] = a_new[i];
    }
    state.iteration += 1;

    for i in 0..n {
        let p = state.positions[i];
        let v = state.velocities[i];
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite())
            || !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite())
        {
            return Err(DynamicsError::Divergence {
                iteration: state.iteration,
                vertex: i as u32,
            });
        }
    }

    Ok(StepInfo { max_force, degenerate_springs: degenerate })
}

/// Mean distance of cut-edge vertices to their destinations.
pub fn unfold_metric(positions: &[Vec3], dest: &DestinationSet) -> Result<f64, DynamicsError> {
    if dest.is_empty() {
        return Err(DynamicsError::EmptyCutEdge);
    }
    let sum: f64 = dest
        .entries
        .iter()
        .map(|e| (positions[e.vertex as usize] - e.goal).norm())
        .sum();
    Ok(sum / dest.len() as f64)
}

/// First iteration (>= 1) at which the termination rule fires on a D
/// history, if any.
pub fn converged_at(history: &[f64], kappa: f64) -> Option<usize> {
    history
        .windows(2)
        .position(|w| (w[0] - w[1]).abs() <= kappa)
        .map(|p| p + 1)
}

/// Result of a full unfolding run.
pub struct UnfoldRun {
    pub state: SimState,
    pub stop: StopReason,
    /// Largest total force magnitude per iteration, for the run log.
    pub max_force_history: Vec<f64>,
}

/// Runs the iterative unfolding from rest until the D difference drops to
/// kappa, the iteration limit is reached, or the state diverges.
pub fn run_unfold(
    model: &WallModel,
    dest: &DestinationSet,
    plane: &UnfoldPlane,
    surface: &[u32],
    cfg: &DynamicsConfig,
) -> Result<UnfoldRun, DynamicsError> {
    cfg.validate()?;
    let mut state = SimState::at_rest(model);
    let d0 = unfold_metric(&state.positions, dest)?;
    state.d_history.push(d0);
    let mut max_force_history = Vec::new();

    let stop = loop {
        if state.iteration >= cfg.max_iterations {
            break StopReason::MaxIterations;
        }
        let alpha = state.iteration;
        let step = newmark_step_with(model, &mut state, cfg, |r, _v, forces| {
            accumulate_external_forces(r, dest, plane, surface, cfg, alpha, forces);
        });
        match step {
            Ok(info) => max_force_history.push(info.max_force),
            Err(DynamicsError::Divergence { .. }) => break StopReason::Diverged,
            Err(other) => return Err(other),
        }
        let d = unfold_metric(&state.positions, dest)?;
        state.d_history.push(d);
        let prev = state.d_history[state.d_history.len() - 2];
        if (prev - d).abs() <= cfg.kappa {
            break StopReason::Converged;
        }
        if d > cfg.divergence_factor * d0 {
            break StopReason::Diverged;
        }
    };

    Ok(UnfoldRun { state, stop, max_force_history })
}

/// Kinetic plus spring potential energy. Pinned (infinite-mass) vertices
/// contribute no kinetic term.
pub fn mechanical_energy(model: &WallModel, state: &SimState) -> f64 {
    let mut e = 0.0;
    for (m, v) in model.masses.iter().zip(&state.velocities) {
        if m.is_finite() {
            e += 0.5 * m * v.norm_squared();
        }
    }
    for s in &model.springs {
        let len = (state.positions[s.a as usize] - state.positions[s.b as usize]).norm();
        let stretch = len - s.rest_len;
        e += 0.5 * s.stiffness * stretch * stretch;
    }
    e
}
