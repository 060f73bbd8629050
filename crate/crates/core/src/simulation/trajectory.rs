use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::environment::{Environment, Surface};
use super::{SimulationConfig, SimulationError, SAMPLE_RATE};
use crate::impedance::ArmId;

/// Reference positions sampled on a uniform 50 Hz grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub task_id: String,
    pub arm: ArmId,
    pub sample_rate: f64,
    #[serde(with = "vec3_list")]
    pub samples: Vec<Vector3<f64>>,
}

mod vec3_list {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vector3<f64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vector3<f64>>, D::Error> {
        Ok(Vec::<[f64; 3]>::deserialize(d)?.into_iter().map(Vector3::from).collect())
    }
}

impl TrajectorySpec {
    /// A resting reference at `point` for `duration` seconds.
    pub fn constant(task_id: impl Into<String>, arm: ArmId, point: Vector3<f64>, duration: f64) -> Self {
        let mut b = Builder::new(point);
        b.hold(duration);
        b.finish(task_id.into(), arm)
    }

    pub fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 / self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Backward-difference velocity and centred second-difference
    /// acceleration at every sample for integrator step `dt`, with the
    /// reference held still before the first and after the last sample.
    pub fn derivatives(&self, dt: f64) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
        let n = self.samples.len();
        let at = |i: isize| self.samples[i.clamp(0, n as isize - 1) as usize];
        let vel = (0..n as isize).map(|i| (at(i) - at(i - 1)) / dt).collect();
        let acc = (0..n as isize)
            .map(|i| (at(i + 1) - 2.0 * at(i) + at(i - 1)) / (dt * dt))
            .collect();
        (vel, acc)
    }
}

/// Quintic minimum-jerk time scaling on `[0, 1]`.
fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

fn steps(duration: f64) -> usize {
    (duration * SAMPLE_RATE).round().max(0.0) as usize
}

struct Builder {
    samples: Vec<Vector3<f64>>,
}

impl Builder {
    fn new(start: Vector3<f64>) -> Self {
        Self { samples: vec![start] }
    }

    fn last(&self) -> Vector3<f64> {
        self.samples[self.samples.len() - 1]
    }

    fn hold(&mut self, duration: f64) -> &mut Self {
        let p = self.last();
        self.samples.extend(std::iter::repeat_n(p, steps(duration)));
        self
    }

    /// Appends `path(τ)` for τ on `(0, 1]`; `path(0)` should equal the
    /// current end point.
    fn path(&mut self, duration: f64, path: impl Fn(f64) -> Vector3<f64>) -> &mut Self {
        let n = steps(duration).max(1);
        self.samples.extend((1..=n).map(|i| path(i as f64 / n as f64)));
        self
    }

    fn move_to(&mut self, target: Vector3<f64>, duration: f64) -> &mut Self {
        let start = self.last();
        self.path(duration, |tau| start + (target - start) * min_jerk(tau))
    }

    fn finish(&mut self, task_id: String, arm: ArmId) -> TrajectorySpec {
        TrajectorySpec {
            task_id,
            arm,
            sample_rate: SAMPLE_RATE,
            samples: std::mem::take(&mut self.samples),
        }
    }
}

/// Builds the deterministic reference for one task and arm:
///
/// * `follow_surface` glides `glide_depth` below the surface along a lateral
///   sweep (along the heightfield when the surface is a profile);
/// * `apply_pressure` and `press_button` descend to `press_depth` below the
///   surface, dwell, and retract;
/// * placements descend from `lift_height` to `placement_depth` below the
///   surface, dwell while releasing, and retract;
/// * `tool_interaction` pokes to `poke_depth` (down, dwell, up);
/// * `grasp_from_table` lifts from the surface to `lift_height` above it;
/// * `wipe_surface` glides back and forth; `handover` moves up and forward
///   in free space.
pub fn plan_trajectory(
    task_id: &str,
    arm: ArmId,
    env: &Environment,
    cfg: &SimulationConfig,
) -> Result<TrajectorySpec, SimulationError> {
    let [cx, cy] = cfg.workspace_centre(arm);
    let zs = env.surface_height(cx, cy);
    let at = |z: f64| Vector3::new(cx, cy, z);
    let mut b;
    match task_id {
        "follow_surface" => {
            let (start, dir, length) = sweep_line(&env.surface, [cx, cy], cfg.sweep_length);
            let surface = env.surface.clone();
            let glide = cfg.glide_depth;
            let point = move |s: f64| {
                let xy = start + dir * s;
                Vector3::new(xy[0], xy[1], surface.height(xy[0], xy[1]) - glide)
            };
            b = Builder::new(point(0.0));
            b.hold(cfg.settle_time)
                .path(length / cfg.sweep_speed, |tau| point(length * min_jerk(tau)))
                .hold(cfg.settle_time);
        }
        "apply_pressure" | "press_button" => {
            let dwell = if task_id == "press_button" { 0.5 * cfg.dwell_time } else { cfg.dwell_time };
            b = Builder::new(at(zs + cfg.approach_height));
            b.hold(cfg.settle_time)
                .move_to(at(zs - cfg.press_depth), cfg.move_time)
                .hold(dwell)
                .move_to(at(zs + cfg.approach_height), cfg.move_time)
                .hold(cfg.settle_time);
        }
        "dual_placement_egg" | "dual_placement_bottle" => {
            b = Builder::new(at(zs + cfg.lift_height));
            b.hold(cfg.settle_time)
                .move_to(at(zs - cfg.placement_depth), 1.5 * cfg.move_time)
                .hold(cfg.dwell_time)
                .move_to(at(zs + cfg.approach_height), cfg.move_time)
                .hold(cfg.settle_time);
        }
        "tool_interaction" => {
            b = Builder::new(at(zs + cfg.approach_height));
            b.hold(cfg.settle_time)
                .move_to(at(zs - cfg.poke_depth), 0.5 * cfg.move_time)
                .hold(0.5 * cfg.dwell_time)
                .move_to(at(zs + cfg.approach_height), 0.5 * cfg.move_time)
                .hold(cfg.settle_time);
        }
        "grasp_from_table" => {
            b = Builder::new(at(zs));
            b.hold(cfg.dwell_time)
                .move_to(at(zs + cfg.lift_height), 1.5 * cfg.move_time)
                .hold(cfg.settle_time);
        }
        "wipe_surface" => {
            let half = 0.5 * cfg.wipe_stroke;
            let z = zs - cfg.glide_depth;
            let p = |dy: f64| Vector3::new(cx, cy + dy, z);
            b = Builder::new(p(-half));
            b.hold(cfg.settle_time);
            for _ in 0..2 {
                b.move_to(p(half), cfg.wipe_stroke / cfg.sweep_speed)
                    .move_to(p(-half), cfg.wipe_stroke / cfg.sweep_speed);
            }
            b.hold(cfg.settle_time);
        }
        "handover" => {
            b = Builder::new(at(zs + cfg.lift_height));
            b.hold(cfg.settle_time)
                .move_to(Vector3::new(cx + 0.08, cy, zs + cfg.lift_height + 0.05), 1.5 * cfg.move_time)
                .hold(cfg.dwell_time);
        }
        other => return Err(SimulationError::UnknownTask(other.to_string())),
    }
    Ok(b.finish(task_id.to_string(), arm))
}

/// Start point, unit direction and length of the lateral sweep. Profiles
/// sweep their full heightfield; flat surfaces sweep along +y centred on
/// the arm workspace.
fn sweep_line(surface: &Surface, centre: [f64; 2], flat_length: f64) -> (nalgebra::Vector2<f64>, nalgebra::Vector2<f64>, f64) {
    match surface {
        Surface::Profile {
            origin,
            direction,
            field,
            ..
        } => (
            nalgebra::Vector2::from(*origin),
            nalgebra::Vector2::from(*direction),
            field.length(),
        ),
        Surface::Flat { .. } => (
            nalgebra::Vector2::new(centre[0], centre[1] - 0.5 * flat_length),
            nalgebra::Vector2::new(0.0, 1.0),
            flat_length,
        ),
    }
}
