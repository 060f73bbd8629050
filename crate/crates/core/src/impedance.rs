//! Translational cartesian impedance for one end effector.
//!
//! Each arm is a 3-DoF point mass with diagonal virtual mass `M`, damping `D`
//! and stiffness `K`. With `e = x_ref − x` the error obeys
//!
//! ```text
//! M ë + D ė + K e = −F_ext
//! ```
//!
//! which is realized in world coordinates as
//! `M ẍ = M ẍ_ref + K e + D ė + F_ext`. The reference-acceleration term is zero
//! unless the caller supplies it; the simulator feeds a finite-difference
//! value that makes disturbance-free tracking exact under the discrete
//! integrator. Orientation is carried along but not regulated.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::serde_util;

/// Virtual mass used when a knowledge-base entry supplies only `K` and `D`.
pub const DEFAULT_VIRTUAL_MASS: [f64; 3] = [1.0, 1.0, 1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImpedanceError {
    #[error("invalid impedance parameters: {0}")]
    InvalidParams(String),
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("non-finite state at t = {time} s (unstable time step / gain combination)")]
    NonFiniteState { time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmId {
    Left,
    Right,
}

impl ArmId {
    pub fn short(self) -> &'static str {
        match self {
            ArmId::Left => "L",
            ArmId::Right => "R",
        }
    }
}

impl std::fmt::Display for ArmId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ArmId::Left => "left",
            ArmId::Right => "right",
        })
    }
}

/// Diagonals of `M`, `D` and `K`. All nine entries are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpedanceParams {
    #[serde(with = "serde_util::vec3")]
    mass: Vector3<f64>,
    #[serde(with = "serde_util::vec3")]
    damping: Vector3<f64>,
    #[serde(with = "serde_util::vec3")]
    stiffness: Vector3<f64>,
}

impl ImpedanceParams {
    pub fn new(
        mass: Vector3<f64>,
        damping: Vector3<f64>,
        stiffness: Vector3<f64>,
    ) -> Result<Self, ImpedanceError> {
        for (name, v) in [("mass", mass), ("damping", damping), ("stiffness", stiffness)] {
            if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(ImpedanceError::InvalidParams(format!(
                    "{name} must be strictly positive and finite, got {bad}"
                )));
            }
        }
        Ok(Self {
            mass,
            damping,
            stiffness,
        })
    }

    /// Gains with the default unit virtual mass.
    pub fn from_gains(stiffness: Vector3<f64>, damping: Vector3<f64>) -> Result<Self, ImpedanceError> {
        Self::new(Vector3::from(DEFAULT_VIRTUAL_MASS), damping, stiffness)
    }

    /// Same scalar `(m, d, k)` on every axis.
    pub fn uniform(mass: f64, damping: f64, stiffness: f64) -> Result<Self, ImpedanceError> {
        Self::new(
            Vector3::repeat(mass),
            Vector3::repeat(damping),
            Vector3::repeat(stiffness),
        )
    }

    pub fn with_mass(self, mass: Vector3<f64>) -> Result<Self, ImpedanceError> {
        Self::new(mass, self.damping, self.stiffness)
    }

    pub fn mass(&self) -> Vector3<f64> {
        self.mass
    }

    pub fn damping(&self) -> Vector3<f64> {
        self.damping
    }

    pub fn stiffness(&self) -> Vector3<f64> {
        self.stiffness
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualForce {
    #[serde(with = "serde_util::vec3")]
    pub force: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpedanceState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub reference_position: Vector3<f64>,
    pub reference_velocity: Vector3<f64>,
    /// Feed-forward term; zero for a resting or constant-velocity reference.
    pub reference_acceleration: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub reference_orientation: UnitQuaternion<f64>,
    pub time: f64,
}

impl ImpedanceState {
    /// A state resting at `position` with a coincident, resting reference.
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            reference_position: position,
            reference_velocity: Vector3::zeros(),
            reference_acceleration: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
            reference_orientation: UnitQuaternion::identity(),
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        let vecs = [
            self.position,
            self.velocity,
            self.reference_position,
            self.reference_velocity,
            self.reference_acceleration,
        ];
        self.time.is_finite()
            && vecs.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.orientation.coords.iter().all(|x| x.is_finite())
    }
}

/// `(x_ref − x, ẋ_ref − ẋ)`.
pub fn translational_error(state: &ImpedanceState) -> (Vector3<f64>, Vector3<f64>) {
    (
        state.reference_position - state.position,
        state.reference_velocity - state.velocity,
    )
}

/// `K e + D ė`, component-wise.
pub fn virtual_force(
    params: &ImpedanceParams,
    error: &Vector3<f64>,
    error_rate: &Vector3<f64>,
) -> VirtualForce {
    VirtualForce {
        force: params.stiffness.component_mul(error) + params.damping.component_mul(error_rate),
    }
}

/// One semi-implicit Euler step: velocity first from the pre-step force,
/// then position from the new velocity.
pub fn step_impedance(
    state: &ImpedanceState,
    params: &ImpedanceParams,
    external_force: &Vector3<f64>,
    dt: f64,
) -> Result<ImpedanceState, ImpedanceError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(ImpedanceError::InvalidTimeStep(dt));
    }
    let (e, e_dot) = translational_error(state);
    let f = virtual_force(params, &e, &e_dot).force + external_force;
    let accel = state.reference_acceleration + f.component_div(&params.mass);

    let velocity = state.velocity + accel * dt;
    let position = state.position + velocity * dt;
    let next = ImpedanceState {
        position,
        velocity,
        orientation: state.reference_orientation,
        time: state.time + dt,
        ..*state
    };
    if !next.is_finite() {
        return Err(ImpedanceError::NonFiniteState { time: next.time });
    }
    Ok(next)
}

/// Closed-form `e(t)` of `m ë + d ė + k e = 0` for one axis.
pub fn free_response_axis(m: f64, d: f64, k: f64, e0: f64, edot0: f64, t: f64) -> f64 {
    let alpha = d / (2.0 * m);
    let disc = d * d - 4.0 * m * k;
    if disc.abs() <= 1e-12 * d * d {
        // critically damped
        (e0 + (edot0 + alpha * e0) * t) * (-alpha * t).exp()
    } else if disc < 0.0 {
        let wd = (-disc).sqrt() / (2.0 * m);
        (-alpha * t).exp() * (e0 * (wd * t).cos() + (edot0 + alpha * e0) / wd * (wd * t).sin())
    } else {
        let beta = disc.sqrt() / (2.0 * m);
        let (r1, r2) = (-alpha + beta, -alpha - beta);
        let c1 = (edot0 - r2 * e0) / (r1 - r2);
        let c2 = e0 - c1;
        c1 * (r1 * t).exp() + c2 * (r2 * t).exp()
    }
}

/// Per-axis closed-form free response of the homogeneous error dynamics.
pub fn analytic_free_response(
    params: &ImpedanceParams,
    e0: &Vector3<f64>,
    edot0: &Vector3<f64>,
    t: f64,
) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        free_response_axis(
            params.mass[i],
            params.damping[i],
            params.stiffness[i],
            e0[i],
            edot0[i],
            t,
        )
    })
}

/// `½ k e² + ½ m ė²` summed over the three axes.
pub fn error_energy(params: &ImpedanceParams, e: &Vector3<f64>, e_dot: &Vector3<f64>) -> f64 {
    (0..3)
        .map(|i| 0.5 * params.stiffness[i] * e[i] * e[i] + 0.5 * params.mass[i] * e_dot[i] * e_dot[i])
        .sum()
}

/// `(t, e, ė)` at one integrator step.
pub type ErrorSample = (f64, Vector3<f64>, Vector3<f64>);

/// Integrates the disturbance-free response from `(e0, ė0)` with a fixed
/// reference and returns the error trace sampled at every step (including
/// `t = 0`).
pub fn integrate_free_response(
    params: &ImpedanceParams,
    e0: &Vector3<f64>,
    edot0: &Vector3<f64>,
    dt: f64,
    duration: f64,
) -> Result<Vec<ErrorSample>, ImpedanceError> {
    let steps = (duration / dt).round() as usize;
    let mut state = ImpedanceState {
        velocity: -edot0,
        reference_position: *e0,
        ..ImpedanceState::at_rest(Vector3::zeros())
    };
    let mut out = Vec::with_capacity(steps + 1);
    for _ in 0..=steps {
        let (e, e_dot) = translational_error(&state);
        out.push((state.time, e, e_dot));
        state = step_impedance(&state, params, &Vector3::zeros(), dt)?;
    }
    Ok(out)
}

/// Largest component-wise gap between the integrated free response and the
/// closed-form solution over `[0, duration]`.
pub fn oracle_deviation(
    params: &ImpedanceParams,
    e0: &Vector3<f64>,
    edot0: &Vector3<f64>,
    dt: f64,
    duration: f64,
) -> Result<f64, ImpedanceError> {
    let trace = integrate_free_response(params, e0, edot0, dt, duration)?;
    Ok(trace
        .iter()
        .map(|(t, e, _)| (e - analytic_free_response(params, e0, edot0, *t)).amax())
        .fold(0.0, f64::max))
}
