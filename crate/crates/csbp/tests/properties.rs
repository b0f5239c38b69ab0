//! Invariants over randomly drawn mechanisms.

use csbp::evolution::{u_at, u_infinity};
use csbp::rng::PathStreams;
use csbp::simulate::sample_feller_exact;
use csbp::skeleton::InitialLaw;
use csbp::{BranchingMechanism, LevyMeasure};
use proptest::prelude::*;

fn mechanism() -> impl Strategy<Value = BranchingMechanism> {
    let levy = prop_oneof![
        Just(LevyMeasure::None),
        (0.1f64..2.0, 0.5f64..3.0).prop_map(|(c, b)| LevyMeasure::Exponential { c, b }),
        (0.1f64..1.0, 1.1f64..1.9, 0.5f64..2.0).prop_map(|(c, a, tilt)| LevyMeasure::Tilted { c, a, tilt }),
        (0.1f64..3.0, 0.1f64..1.0).prop_map(|(r, m)| LevyMeasure::Atoms { atoms: vec![(r, m), (2.0 * r, 0.5 * m)] }),
    ];
    (-1.5f64..1.5, 0.2f64..1.5, levy).prop_map(|(a, b, l)| BranchingMechanism::new(a, b, l).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn psi_prime_is_the_derivative(m in mechanism(), theta in 0.05f64..5.0) {
        let h = 1e-5 * theta.max(1.0);
        let fd = (m.psi(theta + h).unwrap() - m.psi(theta - h).unwrap()) / (2.0 * h);
        let d = m.psi_prime(theta).unwrap();
        prop_assert!((fd - d).abs() < 1e-6 * d.abs().max(1.0), "{fd} vs {d}");
    }

    #[test]
    fn psi_is_convex(m in mechanism(), a in 0.0f64..4.0, b in 0.0f64..4.0) {
        let mid = m.psi(0.5 * (a + b)).unwrap();
        let chord = 0.5 * (m.psi(a).unwrap() + m.psi(b).unwrap());
        prop_assert!(mid <= chord + 1e-12 * chord.abs().max(1.0));
    }

    #[test]
    fn esscher_tilts_compose(m in mechanism(), a in 0.0f64..1.0, b in 0.0f64..1.0, theta in 0.0f64..3.0) {
        let base = m.lambda_star_or_zero().unwrap();
        let (l1, l2) = (base + a, b);
        let twice = m.esscher(l1).unwrap().esscher(l2).unwrap();
        let once = m.esscher(l1 + l2).unwrap();
        let (x, y) = (twice.psi(theta).unwrap(), once.psi(theta).unwrap());
        prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0), "{x} vs {y}");
        prop_assert!(once.alpha <= 1e-12, "tilted mechanism is supercritical");
    }

    #[test]
    fn flow_property(m in mechanism(), theta in 0.01f64..5.0, t in 0.0f64..1.5, s in 0.0f64..1.5) {
        let whole = u_at(&m, theta, t + s).unwrap();
        let split = u_at(&m, u_at(&m, theta, s).unwrap(), t).unwrap();
        prop_assert!((whole - split).abs() < 1e-8 * whole.max(1e-3), "{whole} vs {split}");
    }

    #[test]
    fn u_is_increasing_in_theta(m in mechanism(), a in 0.01f64..5.0, d in 0.01f64..2.0, t in 0.05f64..2.0) {
        let lo = u_at(&m, a, t).unwrap();
        let hi = u_at(&m, a + d, t).unwrap();
        prop_assert!(lo < hi);
        prop_assert!(lo > 0.0);
    }

    #[test]
    fn offspring_law_is_a_distribution(m in mechanism(), extra in 0.0f64..2.0) {
        let l = m.lambda_star_or_zero().unwrap() + extra + 0.05;
        let law = m.skeleton_params(l, 256).unwrap();
        let total: f64 = law.probs.iter().sum::<f64>() + law.tail;
        prop_assert!((total - 1.0).abs() < 1e-9, "{total}");
        prop_assert!(law.probs.iter().all(|&p| p >= 0.0));
        prop_assert_eq!(law.probs[1], 0.0);
    }

    #[test]
    fn exact_sampler_is_seeded(alpha in -1.0f64..1.0, beta in 0.1f64..2.0, x in 0.0f64..3.0, seed in any::<u64>(), path in 0u64..1000) {
        let m = BranchingMechanism::feller(alpha, beta).unwrap();
        let a = sample_feller_exact(&m, x, 0.7, &mut PathStreams::new(seed, path).exact).unwrap();
        let b = sample_feller_exact(&m, x, 0.7, &mut PathStreams::new(seed, path).exact).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn initial_law_round_trips(mu in 0.001f64..50.0, k in 0u64..100, which in 0usize..3) {
        let law = [InitialLaw::Fixed(k), InitialLaw::Poisson(mu), InitialLaw::PoissonConditionedPositive(mu)][which];
        let s = serde_json::to_string(&law).unwrap();
        prop_assert_eq!(serde_json::from_str::<InitialLaw>(&s).unwrap(), law);
    }
}

#[test]
fn u_infinity_bounds_u() {
    let m = BranchingMechanism::new(-0.5, 1.0, LevyMeasure::Exponential { c: 1.0, b: 2.0 }).unwrap();
    for &t in &[0.1, 1.0, 3.0] {
        let cap = u_infinity(&m, t).unwrap();
        for &th in &[0.1, 10.0, 1e4] {
            assert!(u_at(&m, th, t).unwrap() < cap);
        }
    }
}
