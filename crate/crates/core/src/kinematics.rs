//! Serial revolute chains: forward kinematics, the translational Jacobian and
//! a position-only damped-least-squares IK solver.
//!
//! Frame convention: joint `i` first rotates about its own axis by `q_i`, then
//! its fixed link transform carries the frame to the next joint (or to the end
//! effector for the last joint):
//!
//! ```text
//! T_ee = base · R(a_0, q_0) · L_0 · R(a_1, q_1) · L_1 · … · R(a_n, q_n) · L_n
//! ```

use std::path::Path;

use nalgebra::{Isometry3, Matrix3, OMatrix, Translation3, Unit, UnitQuaternion, Vector3, U3, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::serde_util;

pub const MAX_JOINTS: usize = 10;
const MIN_STEP_SCALE: f64 = 1.0 / 1024.0;

/// Joint origin and world-frame axis.
type JointFrame = (Vector3<f64>, Vector3<f64>);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("joint vector has {got} entries, chain has {expected} joints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("IK did not converge: residual {residual:.3e} m after {iterations} iterations")]
    NotConverged {
        best: JointVector,
        residual: f64,
        iterations: usize,
    },
    #[error("invalid IK options: {0}")]
    InvalidOptions(String),
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("chain file {path}: {message}")]
    Load { path: String, message: String },
}

/// Joint angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl std::ops::Deref for JointVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(with = "serde_util::vec3")]
    pub position: Vector3<f64>,
    #[serde(with = "serde_util::quat")]
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn from_position(position: Vector3<f64>) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: Option<String>,
    pub axis: Unit<Vector3<f64>>,
    pub link: Isometry3<f64>,
    pub limits: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub name: String,
    pub base_pose: Isometry3<f64>,
    joints: Vec<Joint>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    name: String,
    base_pose: Pose,
    joints: Vec<JointFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    axis: [f64; 3],
    link_translation: [f64; 3],
    #[serde(with = "serde_util::quat")]
    link_rotation_quat: UnitQuaternion<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    limits: Option<[f64; 2]>,
}

impl KinematicChain {
    pub fn new(name: impl Into<String>, base_pose: Isometry3<f64>, joints: Vec<Joint>) -> Result<Self, KinematicsError> {
        if joints.is_empty() || joints.len() > MAX_JOINTS {
            return Err(KinematicsError::InvalidChain(format!(
                "joint count must be in 1..={MAX_JOINTS}, got {}",
                joints.len()
            )));
        }
        for (i, j) in joints.iter().enumerate() {
            if let Some((lo, hi)) = j.limits {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(KinematicsError::InvalidChain(format!(
                        "joint {i}: limits must be finite with lower < upper"
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            base_pose,
            joints,
        })
    }

    /// Planar chain in the xy-plane: every joint turns about +z and each link
    /// extends along its local +x.
    pub fn planar(link_lengths: &[f64]) -> Result<Self, KinematicsError> {
        let joints = link_lengths
            .iter()
            .map(|&l| Joint {
                name: None,
                axis: Vector3::z_axis(),
                link: Isometry3::translation(l, 0.0, 0.0),
                limits: None,
            })
            .collect();
        Self::new("planar", Isometry3::identity(), joints)
    }

    pub fn from_json_str(s: &str) -> Result<Self, KinematicsError> {
        let file: ChainFile = serde_json::from_str(s).map_err(|e| KinematicsError::InvalidChain(e.to_string()))?;
        let mut joints = Vec::with_capacity(file.joints.len());
        for (i, j) in file.joints.into_iter().enumerate() {
            let axis = Vector3::from(j.axis);
            if (axis.norm() - 1.0).abs() > 1e-9 {
                return Err(KinematicsError::InvalidChain(format!(
                    "joint {i}: axis must have unit norm ± 1e-9, got {}",
                    axis.norm()
                )));
            }
            joints.push(Joint {
                name: j.name,
                axis: Unit::new_unchecked(axis),
                link: Isometry3::from_parts(Translation3::from(Vector3::from(j.link_translation)), j.link_rotation_quat),
                limits: j.limits.map(|[lo, hi]| (lo, hi)),
            });
        }
        Self::new(file.name, file.base_pose.isometry(), joints)
    }

    pub fn load(path: &Path) -> Result<Self, KinematicsError> {
        let text = std::fs::read_to_string(path).map_err(|e| KinematicsError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text).map_err(|e| KinematicsError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_json_string(&self) -> String {
        let file = ChainFile {
            name: self.name.clone(),
            base_pose: Pose::from_isometry(&self.base_pose),
            joints: self
                .joints
                .iter()
                .map(|j| JointFile {
                    name: j.name.clone(),
                    axis: [j.axis.x, j.axis.y, j.axis.z],
                    link_translation: j.link.translation.vector.into(),
                    link_rotation_quat: j.link.rotation,
                    limits: j.limits.map(|(lo, hi)| [lo, hi]),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("chain serializes")
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    /// Upper bound on the distance from the first joint to the end effector.
    pub fn reach(&self) -> f64 {
        self.joints.iter().map(|j| j.link.translation.vector.norm()).sum()
    }

    pub fn with_base(&self, base_pose: Isometry3<f64>) -> Self {
        Self {
            base_pose,
            ..self.clone()
        }
    }

    fn check_len(&self, q: &[f64]) -> Result<(), KinematicsError> {
        if q.len() != self.joints.len() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.joints.len(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Joint origins and world-frame axes, plus the end-effector transform.
    fn frames(&self, q: &[f64]) -> (Vec<JointFrame>, Isometry3<f64>) {
        let mut t = self.base_pose;
        let mut out = Vec::with_capacity(self.joints.len());
        for (joint, &angle) in self.joints.iter().zip(q) {
            out.push((t.translation.vector, t.rotation * joint.axis.into_inner()));
            t = t * UnitQuaternion::from_axis_angle(&joint.axis, angle) * joint.link;
        }
        (out, t)
    }

    fn clamp(&self, q: &mut [f64]) {
        for (x, j) in q.iter_mut().zip(&self.joints) {
            if let Some((lo, hi)) = j.limits {
                *x = x.clamp(lo, hi);
            }
        }
    }
}

pub fn forward_kinematics(chain: &KinematicChain, q: &[f64]) -> Result<Pose, KinematicsError> {
    chain.check_len(q)?;
    Ok(Pose::from_isometry(&chain.frames(q).1))
}

/// 3×N position Jacobian; column `i` is `axis_i × (p_ee − p_i)`.
pub fn translational_jacobian(chain: &KinematicChain, q: &[f64]) -> Result<OMatrix<f64, U3, Dyn>, KinematicsError> {
    chain.check_len(q)?;
    let (frames, ee) = chain.frames(q);
    let p_ee = ee.translation.vector;
    let mut jac = OMatrix::<f64, U3, Dyn>::zeros(chain.dof());
    for (i, (p, axis)) in frames.iter().enumerate() {
        jac.set_column(i, &axis.cross(&(p_ee - p)));
    }
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkOptions {
    pub lambda: f64,
    pub max_iters: usize,
    pub tol_m: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            max_iters: 200,
            tol_m: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub joints: JointVector,
    pub iterations: usize,
    pub residual: f64,
}

/// Position-only DLS: `Δq = Jᵀ (J Jᵀ + λ² I)⁻¹ Δx`. The orientation of
/// `target` is ignored. A step that does not lower the residual is halved
/// until it does. On failure the best iterate seen is returned inside
/// [`KinematicsError::NotConverged`].
pub fn solve_ik_dls(
    chain: &KinematicChain,
    q0: &[f64],
    target: &Pose,
    opts: &IkOptions,
) -> Result<IkSolution, KinematicsError> {
    chain.check_len(q0)?;
    if !(opts.lambda.is_finite() && opts.lambda > 0.0) {
        return Err(KinematicsError::InvalidOptions(format!("lambda must be > 0, got {}", opts.lambda)));
    }
    if !(opts.tol_m.is_finite() && opts.tol_m > 0.0) {
        return Err(KinematicsError::InvalidOptions(format!("tol_m must be > 0, got {}", opts.tol_m)));
    }
    if !target.position.iter().all(|x| x.is_finite()) {
        return Err(KinematicsError::InvalidOptions("target position is not finite".into()));
    }

    let damping = Matrix3::identity() * (opts.lambda * opts.lambda);
    let mut q = q0.to_vec();
    let mut best = (q.clone(), f64::INFINITY);

    for iteration in 0..=opts.max_iters {
        let (_, ee) = chain.frames(&q);
        let dx = target.position - ee.translation.vector;
        let residual = dx.norm();
        if residual < best.1 {
            best = (q.clone(), residual);
        }
        if residual <= opts.tol_m {
            return Ok(IkSolution {
                joints: JointVector(q),
                iterations: iteration,
                residual,
            });
        }
        if iteration == opts.max_iters {
            break;
        }
        let jac = translational_jacobian(chain, &q)?;
        let a = &jac * jac.transpose() + damping;
        // J Jᵀ + λ²I is symmetric positive definite for λ > 0.
        let y = a.cholesky().expect("damped normal matrix is SPD").solve(&dx);
        let dq = jac.transpose() * y;
        // Halve the step until the residual drops; give up once it stalls.
        let mut scale = 1.0;
        loop {
            let mut trial: Vec<f64> = q.iter().zip(dq.iter()).map(|(qi, d)| qi + scale * d).collect();
            chain.clamp(&mut trial);
            let r = (target.position - chain.frames(&trial).1.translation.vector).norm();
            if r < residual {
                q = trial;
                break;
            }
            scale *= 0.5;
            if scale < MIN_STEP_SCALE {
                return Err(KinematicsError::NotConverged {
                    best: JointVector(best.0),
                    residual: best.1,
                    iterations: iteration + 1,
                });
            }
        }
    }

    Err(KinematicsError::NotConverged {
        best: JointVector(best.0),
        residual: best.1,
        iterations: opts.max_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn two_link() -> KinematicChain {
        KinematicChain::planar(&[0.3, 0.25]).unwrap()
    }

    #[test]
    fn zero_angles_compose_links_only() {
        let chain = two_link();
        let p = forward_kinematics(&chain, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(p.position, Vector3::new(0.55, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn planar_quarter_turn() {
        let p = forward_kinematics(&two_link(), &[FRAC_PI_2, 0.0]).unwrap();
        assert_relative_eq!(p.position, Vector3::new(0.0, 0.55, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn base_transform_maps_output() {
        let chain = two_link();
        let q = [0.4, -1.1];
        let t = Isometry3::new(Vector3::new(0.1, -0.2, 0.3), Vector3::new(0.3, -0.5, 0.2));
        let moved = chain.with_base(t * chain.base_pose);
        let p0 = forward_kinematics(&chain, &q).unwrap();
        let p1 = forward_kinematics(&moved, &q).unwrap();
        assert_relative_eq!(p1.position, (t * nalgebra::Point3::from(p0.position)).coords, epsilon = 1e-12);
        assert_relative_eq!(p1.orientation, t.rotation * p0.orientation, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            forward_kinematics(&two_link(), &[0.0]),
            Err(KinematicsError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(translational_jacobian(&two_link(), &[0.0; 3]).is_err());
    }

    #[test]
    fn jacobian_column_norms_are_lever_arms() {
        let j = translational_jacobian(&two_link(), &[0.0, 0.0]).unwrap();
        assert_relative_eq!(j.column(0).norm(), 0.55, epsilon = 1e-15);
        assert_relative_eq!(j.column(1).norm(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn axis_through_end_effector_gives_zero_column() {
        let chain = KinematicChain::planar(&[0.3, 0.0]).unwrap();
        let j = translational_jacobian(&chain, &[0.7, 0.2]).unwrap();
        assert_eq!(j.column(1).norm(), 0.0);
    }

    #[test]
    fn ik_at_seed_is_immediate() {
        let chain = two_link();
        let q0 = [0.3, 0.8];
        let target = forward_kinematics(&chain, &q0).unwrap();
        let sol = solve_ik_dls(&chain, &q0, &target, &IkOptions::default()).unwrap();
        assert!(sol.iterations <= 1);
        assert_eq!(sol.joints.0, q0.to_vec());
    }

    #[test]
    fn ik_full_reach() {
        // the target sits on the singular boundary, so DLS creeps toward it
        let chain = two_link();
        let target = Pose::from_position(Vector3::new(0.55, 0.0, 0.0));
        let (q, residual) = match solve_ik_dls(&chain, &[0.2, 0.3], &target, &IkOptions::default()) {
            Ok(sol) => (sol.joints, sol.residual),
            Err(KinematicsError::NotConverged { best, residual, .. }) => (best, residual),
            Err(e) => panic!("{e}"),
        };
        assert!(q[0].abs() < 5e-2 && q[1].abs() < 5e-2, "{q:?}");
        assert!(residual < 1e-4, "{residual}");
    }

    #[test]
    fn ik_unreachable_reports_residual() {
        let chain = two_link();
        let target = Pose::from_position(Vector3::new(0.0, 0.7, 0.0));
        let opts = IkOptions::default();
        match solve_ik_dls(&chain, &[0.3, 0.4], &target, &opts) {
            Err(KinematicsError::NotConverged { residual, best, .. }) => {
                assert!((residual - (0.7 - 0.55)).abs() <= opts.tol_m, "residual {residual}");
                let p = forward_kinematics(&chain, &best).unwrap();
                assert_relative_eq!((p.position - target.position).norm(), residual, epsilon = 1e-12);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn ik_respects_limits() {
        let mut chain = two_link();
        chain.joints[1].limits = Some((-0.5, 0.5));
        let target = forward_kinematics(&chain, &[0.2, 0.4]).unwrap();
        let sol = solve_ik_dls(&chain, &[0.0, 0.0], &target, &IkOptions::default()).unwrap();
        assert!(sol.joints[1].abs() <= 0.5);
    }

    #[test]
    fn ik_rejects_bad_options() {
        let t = Pose::from_position(Vector3::new(0.3, 0.1, 0.0));
        let bad = IkOptions { lambda: 0.0, ..Default::default() };
        assert!(matches!(solve_ik_dls(&two_link(), &[0.0, 0.0], &t, &bad), Err(KinematicsError::InvalidOptions(_))));
        let bad = IkOptions { tol_m: -1.0, ..Default::default() };
        assert!(matches!(solve_ik_dls(&two_link(), &[0.0, 0.0], &t, &bad), Err(KinematicsError::InvalidOptions(_))));
    }

    #[test]
    fn chain_json_round_trip_and_validation() {
        let chain = two_link();
        let back = KinematicChain::from_json_str(&chain.to_json_string()).unwrap();
        assert_eq!(back.dof(), 2);
        let q = [0.3, -0.2];
        assert_eq!(
            forward_kinematics(&chain, &q).unwrap().position,
            forward_kinematics(&back, &q).unwrap().position
        );

        let bad_axis = r#"{"name":"x","base_pose":{"position":[0,0,0],"orientation":[1,0,0,0]},
            "joints":[{"axis":[0,0,2],"link_translation":[0.1,0,0],"link_rotation_quat":[1,0,0,0]}]}"#;
        assert!(KinematicChain::from_json_str(bad_axis).is_err());
        let empty = r#"{"name":"x","base_pose":{"position":[0,0,0],"orientation":[1,0,0,0]},"joints":[]}"#;
        assert!(KinematicChain::from_json_str(empty).is_err());
    }
}
