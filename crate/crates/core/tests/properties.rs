use proptest::prelude::*;

use minhgr::distributions::{product_joint, random_joint, AlphabetSpec, DiscreteJoint};
use minhgr::hgr::hgr_svd;
use minhgr::lowerbound::{gamma_lb_closed, lower_bound_closed, QdSystem};

fn joint_strategy() -> impl Strategy<Value = DiscreteJoint> {
    (1usize..4, 2usize..4, any::<u64>())
        .prop_map(|(p, m, seed)| random_joint(AlphabetSpec::new(p, m).unwrap(), seed).unwrap())
}

fn flip_y(j: &DiscreteJoint) -> DiscreteJoint {
    let flipped: Vec<f64> = j.as_slice().chunks(2).flat_map(|c| [c[1], c[0]]).collect();
    DiscreteJoint::from_dense(j.spec(), flipped).unwrap()
}

fn gamma(j: &DiscreteJoint) -> f64 {
    gamma_lb_closed(&QdSystem::from_joint(j).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_is_invariant_under_flipping_y(j in joint_strategy()) {
        prop_assert!((gamma(&j) - gamma(&flip_y(&j))).abs() < 1e-12);
    }

    #[test]
    fn gamma_is_invariant_under_relabeling(j in joint_strategy(), i in 0usize..3, r in 1usize..3) {
        let s = j.spec();
        let i = i % s.p();
        let perm: Vec<usize> = (0..s.m()).map(|k| (k + r) % s.m()).collect();
        prop_assert!((gamma(&j) - gamma(&j.relabel(i, &perm).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn gamma_is_the_objective_at_the_minimizer(j in joint_strategy()) {
        let sys = QdSystem::from_joint(&j).unwrap();
        let lb = lower_bound_closed(&sys).unwrap();
        prop_assert!(lb.gamma_lb >= 0.0 && lb.gamma_lb <= 0.25);
        prop_assert!((sys.objective(&lb.z_star).unwrap() - lb.gamma_lb).abs() < 1e-12);
        prop_assert!(sys.stationarity_residual(&lb.z_star).unwrap() < 1e-10);
    }

    #[test]
    fn bound_is_below_maximal_correlation(j in joint_strategy()) {
        let lb = lower_bound_closed(&QdSystem::from_joint(&j).unwrap()).unwrap().rho_lb.unwrap();
        prop_assert!(lb <= hgr_svd(&j.flatten()).unwrap().rho + 1e-9);
    }

    #[test]
    fn independence_gives_zero_bound(
        a in prop::collection::vec(0.05f64..1.0, 3),
        b in prop::collection::vec(0.05f64..1.0, 3),
        p1 in 0.05f64..0.95,
    ) {
        let norm = |v: Vec<f64>| { let t: f64 = v.iter().sum(); v.into_iter().map(|x| x / t).collect::<Vec<_>>() };
        let j = product_joint(&[norm(a), norm(b)], p1).unwrap();
        let lb = lower_bound_closed(&QdSystem::from_joint(&j).unwrap()).unwrap();
        prop_assert!((lb.gamma_lb - p1 * (1.0 - p1)).abs() < 1e-12);
        prop_assert!(lb.rho_lb.unwrap() < 1e-5);
    }
}
