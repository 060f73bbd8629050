mod common;

use imprag::kinematics::*;
use nalgebra::{Isometry3, Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_q(chain: &KinematicChain, rng: &mut ChaCha8Rng) -> Vec<f64> {
    chain
        .joints()
        .iter()
        .map(|j| {
            let (lo, hi) = j.limits.unwrap_or((-1.5, 1.5));
            rng.random_range(lo.max(-1.5)..hi.min(1.5))
        })
        .collect()
}

#[test]
fn ik_round_trip_on_shipped_arm() {
    let chains = common::chains();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let opts = IkOptions::default();
    let mut converged = 0;
    for _ in 0..100 {
        let chain = if rng.random_bool(0.5) { &chains.right } else { &chains.left };
        let q_true = random_q(chain, &mut rng);
        let target = forward_kinematics(chain, &q_true).unwrap();
        let seed: Vec<f64> = q_true.iter().map(|q| q + rng.random_range(-0.3..0.3)).collect();
        if let Ok(sol) = solve_ik_dls(chain, &seed, &target, &opts) {
            let reached = forward_kinematics(chain, &sol.joints).unwrap();
            assert!((reached.position - target.position).norm() <= 1e-4);
            converged += 1;
        }
    }
    assert!(converged >= 99, "{converged}/100 converged");
}

#[test]
fn shipped_chains_mirror_each_other() {
    let chains = common::chains();
    assert_eq!((chains.right.dof(), chains.left.dof()), (5, 5));
    let q = [-0.6, 0.1, 0.2, -0.8, 0.3];
    let r = forward_kinematics(&chains.right, &q).unwrap().position;
    let l = forward_kinematics(&chains.left, &[q[0], -q[1], -q[2], q[3], q[4]]).unwrap().position;
    assert!((r - Vector3::new(l.x, -l.y, l.z)).norm() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn jacobian_matches_finite_differences(q in prop::collection::vec(-1.5f64..1.5, 5)) {
        let chain = common::chains().right;
        let jac = translational_jacobian(&chain, &q).unwrap();
        let h = 1e-6;
        for i in 0..5 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            let fd = (forward_kinematics(&chain, &qp).unwrap().position
                - forward_kinematics(&chain, &qm).unwrap().position)
                / (2.0 * h);
            prop_assert!((fd - jac.column(i)).norm() < 1e-6, "column {}", i);
        }
    }

    #[test]
    fn base_pose_is_equivariant(
        q in prop::collection::vec(-1.5f64..1.5, 2),
        t in prop::array::uniform3(-1.0f64..1.0),
        r in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let chain = KinematicChain::planar(&[0.3, 0.25]).unwrap();
        let iso = Isometry3::new(Vector3::from(t), Vector3::from(r));
        let moved = chain.with_base(iso * chain.base_pose);
        let p0 = forward_kinematics(&chain, &q).unwrap().position;
        let p1 = forward_kinematics(&moved, &q).unwrap().position;
        prop_assert!((p1 - (iso * Point3::from(p0)).coords).norm() < 1e-12);
    }

    #[test]
    fn ik_residual_never_exceeds_seed_residual(
        seed in prop::collection::vec(-1.0f64..1.0, 2),
        target in prop::array::uniform2(-0.8f64..0.8),
    ) {
        let chain = KinematicChain::planar(&[0.3, 0.25]).unwrap();
        let goal = Pose::from_position(Vector3::new(target[0], target[1], 0.0));
        let start = (forward_kinematics(&chain, &seed).unwrap().position - goal.position).norm();
        let residual = match solve_ik_dls(&chain, &seed, &goal, &IkOptions::default()) {
            Ok(s) => s.residual,
            Err(KinematicsError::NotConverged { residual, .. }) => residual,
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(residual <= start + 1e-15);
        let reach_gap = (goal.position.norm() - 0.55).max(0.0);
        prop_assert!(residual + 1e-12 >= reach_gap);
    }
}
