//! Desk-scale closed loop: reference trajectory → impedance filter → DLS IK
//! → plant, with a unilateral contact surface supplying the external force.
//!
//! Per tick, the contact force is evaluated at the plant pose, the filter is
//! stepped with that force, IK solves toward the filtered (virtual) pose from
//! the previous joint vector, and FK of the result becomes the next plant
//! pose. Joint tracking is assumed perfect.

mod environment;
mod trace;
mod trajectory;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use environment::{contact_force, Environment, Heightfield, Surface, DEFAULT_CONTACT_DAMPING, DEFAULT_CONTACT_STIFFNESS};
pub use trace::{compute_metrics, compute_metrics_after, TaskMetrics, Trace, TraceRecord};
pub use trajectory::{plan_trajectory, TrajectorySpec};

use crate::exec::Execution;
use crate::impedance::{
    integrate_free_response, step_impedance, translational_error, virtual_force, ArmId, ImpedanceError,
    ImpedanceParams, ImpedanceState,
};
use crate::kinematics::{forward_kinematics, solve_ik_dls, IkOptions, KinematicChain, KinematicsError};
use crate::retrieval::ControlParameters;

pub const SAMPLE_RATE: f64 = 50.0;

pub const KNOWN_TASKS: [&str; 9] = [
    "follow_surface",
    "apply_pressure",
    "dual_placement_egg",
    "dual_placement_bottle",
    "tool_interaction",
    "grasp_from_table",
    "press_button",
    "wipe_surface",
    "handover",
];

/// Tasks with published gains, in table order.
pub const TABLE_TASKS: [&str; 6] = [
    "follow_surface",
    "apply_pressure",
    "dual_placement_egg",
    "dual_placement_bottle",
    "tool_interaction",
    "grasp_from_table",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbortCause {
    #[error(transparent)]
    Impedance(#[from] ImpedanceError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("trace is empty")]
    EmptyTrace,
    #[error("{task_id} ({arm}) aborted after {} records: {cause}", partial.len())]
    Aborted {
        task_id: String,
        arm: ArmId,
        cause: AbortCause,
        partial: Box<Trace>,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
}

impl SimulationError {
    pub fn partial_trace(&self) -> Option<&Trace> {
        match self {
            SimulationError::Aborted { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Integrator step; one step per 50 Hz reference sample.
    pub dt: f64,
    pub table_height: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub press_depth: f64,
    pub placement_depth: f64,
    pub poke_depth: f64,
    pub glide_depth: f64,
    pub sweep_speed: f64,
    pub sweep_length: f64,
    pub wipe_stroke: f64,
    pub lift_height: f64,
    pub approach_height: f64,
    pub move_time: f64,
    pub dwell_time: f64,
    pub settle_time: f64,
    pub workspace_right: [f64; 2],
    pub workspace_left: [f64; 2],
    pub profile_origin: [f64; 2],
    pub profile_direction: [f64; 2],
    pub ik: IkOptions,
    pub ik_seed: Vec<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            table_height: 0.0,
            contact_stiffness: DEFAULT_CONTACT_STIFFNESS,
            contact_damping: DEFAULT_CONTACT_DAMPING,
            press_depth: 0.01,
            placement_depth: 0.002,
            poke_depth: 0.005,
            glide_depth: 0.001,
            sweep_speed: 0.05,
            sweep_length: 0.3,
            wipe_stroke: 0.1,
            lift_height: 0.15,
            approach_height: 0.05,
            move_time: 1.0,
            dwell_time: 2.0,
            settle_time: 0.5,
            workspace_right: [0.30, -0.20],
            workspace_left: [0.30, 0.20],
            profile_origin: [0.28, -0.35],
            profile_direction: [0.0, 1.0],
            ik: IkOptions {
                tol_m: 1e-6,
                ..IkOptions::default()
            },
            ik_seed: vec![-0.6, 0.0, 0.0, -0.8, 0.0],
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidConfig(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        let positive = [
            ("sweep_speed", self.sweep_speed),
            ("sweep_length", self.sweep_length),
            ("wipe_stroke", self.wipe_stroke),
            ("move_time", self.move_time),
            ("contact_stiffness", self.contact_stiffness),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("contact_damping", self.contact_damping),
            ("press_depth", self.press_depth),
            ("placement_depth", self.placement_depth),
            ("poke_depth", self.poke_depth),
            ("glide_depth", self.glide_depth),
            ("lift_height", self.lift_height),
            ("approach_height", self.approach_height),
            ("dwell_time", self.dwell_time),
            ("settle_time", self.settle_time),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn workspace_centre(&self, arm: ArmId) -> [f64; 2] {
        match arm {
            ArmId::Right => self.workspace_right,
            ArmId::Left => self.workspace_left,
        }
    }

    pub fn flat_environment(&self) -> Environment {
        Environment {
            contact_stiffness: self.contact_stiffness,
            contact_damping: self.contact_damping,
            ..Environment::flat(self.table_height)
        }
    }

    /// The heightfield profile for surface following, a flat table for every
    /// other task.
    pub fn environment_for(&self, task_id: &str, heightfield: &Heightfield) -> Result<Environment, SimulationError> {
        let flat = self.flat_environment();
        if task_id != "follow_surface" {
            return Ok(flat);
        }
        let surface = Surface::profile(
            self.table_height,
            self.profile_origin,
            self.profile_direction,
            heightfield.clone(),
        )
        .map_err(SimulationError::InvalidConfig)?;
        Environment::new(surface, flat.contact_stiffness, flat.contact_damping)
    }
}

/// The shipped surface profile: amplitude 0.02 m, wavelength 0.3 m, sampled
/// every 5 mm over 0.3 m.
pub fn default_heightfield() -> Heightfield {
    Heightfield::sinusoid(0.02, 0.3, 0.3, 61).expect("valid sinusoid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmChains {
    pub left: KinematicChain,
    pub right: KinematicChain,
}

impl ArmChains {
    pub fn get(&self, arm: ArmId) -> &KinematicChain {
        match arm {
            ArmId::Left => &self.left,
            ArmId::Right => &self.right,
        }
    }
}

/// Runs the semi-implicit integrator on the homogeneous error dynamics for
/// `steps` ticks; a divergent filter surfaces as `NonFiniteState` before the
/// closed loop starts.
fn check_filter(params: &ImpedanceParams, dt: f64, steps: usize) -> Result<(), ImpedanceError> {
    let e0 = Vector3::repeat(1.0);
    integrate_free_response(params, &e0, &Vector3::zeros(), dt, steps as f64 * dt).map(|_| ())
}

fn record(state: &ImpedanceState, params: &ImpedanceParams, env: &Environment, q: &[f64]) -> TraceRecord {
    let (e, e_dot) = translational_error(state);
    TraceRecord {
        t: state.time,
        x_ref: state.reference_position,
        x: state.position,
        e,
        e_dot,
        f_virt: virtual_force(params, &e, &e_dot).force,
        f_env: contact_force(env, &state.position, &state.velocity),
        q: q.to_vec(),
    }
}

/// Closed-loop execution of one trajectory. `state.position` always holds
/// the plant pose; the filter carries its own virtual pose between ticks.
pub fn run_trajectory(
    trajectory: &TrajectorySpec,
    params: &ImpedanceParams,
    chain: &KinematicChain,
    env: &Environment,
    cfg: &SimulationConfig,
) -> Result<Trace, SimulationError> {
    cfg.validate()?;
    env.validate()?;
    if trajectory.is_empty() {
        return Err(SimulationError::EmptyTrace);
    }
    let dt = cfg.dt;
    let mut trace = Trace::new(trajectory.task_id.clone(), trajectory.arm, dt);
    let abort = |cause: AbortCause, trace: Trace| SimulationError::Aborted {
        task_id: trajectory.task_id.clone(),
        arm: trajectory.arm,
        cause,
        partial: Box::new(trace),
    };

    if let Err(e) = check_filter(params, dt, trajectory.len()) {
        return Err(abort(e.into(), trace));
    }

    let (ref_vel, ref_acc) = trajectory.derivatives(dt);
    let seed = if cfg.ik_seed.len() == chain.dof() {
        cfg.ik_seed.clone()
    } else {
        vec![0.0; chain.dof()]
    };
    let to_joint = |q0: &[f64], target: &Vector3<f64>| -> Result<(Vec<f64>, Vector3<f64>), KinematicsError> {
        let sol = solve_ik_dls(chain, q0, &crate::kinematics::Pose::from_position(*target), &cfg.ik)?;
        let plant = forward_kinematics(chain, &sol.joints)?.position;
        Ok((sol.joints.0, plant))
    };

    let (mut q, plant) = match to_joint(&seed, &trajectory.samples[0]) {
        Ok(v) => v,
        Err(e) => return Err(abort(e.into(), trace)),
    };
    let mut state = ImpedanceState {
        position: plant,
        reference_position: trajectory.samples[0],
        reference_velocity: ref_vel[0],
        reference_acceleration: ref_acc[0],
        ..ImpedanceState::at_rest(plant)
    };
    let mut virtual_position = plant;
    trace.records.push(record(&state, params, env, &q));

    for i in 1..trajectory.len() {
        let f_ext = contact_force(env, &state.position, &state.velocity);
        let filter_state = ImpedanceState {
            position: virtual_position,
            ..state
        };
        let next = match step_impedance(&filter_state, params, &f_ext, dt) {
            Ok(s) => s,
            Err(e) => return Err(abort(e.into(), trace)),
        };
        virtual_position = next.position;
        let (q_next, plant) = match to_joint(&q, &virtual_position) {
            Ok(v) => v,
            Err(e) => return Err(abort(e.into(), trace)),
        };
        q = q_next;
        state = ImpedanceState {
            position: plant,
            reference_position: trajectory.samples[i],
            reference_velocity: ref_vel[i],
            reference_acceleration: ref_acc[i],
            time: i as f64 * dt,
            ..next
        };
        trace.records.push(record(&state, params, env, &q));
    }
    Ok(trace)
}

/// Plans and runs the trajectory for each retrieved arm bundle; bimanual
/// tasks produce one trace per arm.
pub fn run_scenario(
    params: &[ControlParameters],
    chains: &ArmChains,
    env: &Environment,
    cfg: &SimulationConfig,
) -> Result<Vec<Trace>, SimulationError> {
    params
        .iter()
        .map(|p| {
            let traj = plan_trajectory(&p.scenario.task_id, p.arm, env, cfg)?;
            run_trajectory(&traj, &p.impedance, chains.get(p.arm), env, cfg)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScenarioJob {
    pub params: Vec<ControlParameters>,
    pub env: Environment,
}

/// Independent scenarios, each simulated sequentially inside its own job.
pub fn run_batch(
    jobs: &[ScenarioJob],
    chains: &ArmChains,
    cfg: &SimulationConfig,
    exec: Execution,
) -> Vec<Result<Vec<Trace>, SimulationError>> {
    exec.map(jobs, |job| run_scenario(&job.params, chains, &job.env, cfg))
}

/// Settled virtual normal force for a constant reference `depth` below a
/// flat contact surface: `K k d / (K + k)`.
pub fn steady_state_contact_force(stiffness_z: f64, contact_stiffness: f64, depth: f64) -> f64 {
    stiffness_z * contact_stiffness * depth / (stiffness_z + contact_stiffness)
}
