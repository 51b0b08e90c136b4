//! Property tests for the transform pair and the conserved quantities.

use nlse_core::lattice::*;
use nlse_core::stepper::{midpoint_step, SolverParams};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn state_strategy(dim: usize) -> impl Strategy<Value = FieldState> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim)
        .prop_map(|v| FieldState::new(v.into_iter().map(|(a, b)| C64::new(a, b)).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transform_round_trip_and_parseval(
        k in 1usize..24,
        seed in any::<u64>(),
    ) {
        let dx = 0.3 + (seed % 7) as f64 * 0.1;
        let lat = Lattice::new(GridSpec::new(k, dx).unwrap());
        let mut rng = nlse_core::testutil::Seeded::new(seed);
        let u = nlse_core::testutil::rand_state(lat.dim(), &mut rng);
        let m = lat.to_modes(&u);
        let back = lat.from_modes(&m);
        let err = back.sub(&u).l2();
        prop_assert!(err <= 1e-12 * u.l2().max(1.0));
        prop_assert!((m.l2() - u.l2()).abs() <= 1e-12 * u.l2().max(1.0));
    }

    #[test]
    fn propagator_preserves_discrete_norm(
        k in 1usize..24,
        h in 1e-4f64..10.0,
        u in state_strategy(49),
    ) {
        let lat = Lattice::new(GridSpec::new(k, 0.5).unwrap());
        let u = FieldState::new(u.values[..lat.dim()].to_vec());
        prop_assume!(u.l2() > 1e-6);
        let ru = apply_propagator(&lat, h, &u);
        let n0 = norm_dx(&lat, &u);
        let n1 = norm_dx(&lat, &ru);
        prop_assert!((n1 - n0).abs() <= 1e-12 * n0);
    }

    #[test]
    fn midpoint_step_preserves_mass(
        lambda in prop::sample::select(vec![-1i8, 1]),
        r in 1u32..4,
        u in state_strategy(17),
    ) {
        let lat = Lattice::new(GridSpec::new(8, 0.5).unwrap());
        let params = ModelParams::new(lambda, r).unwrap();
        prop_assume!(u.l2() > 1e-3);
        let scaled = u.scale(0.5 / norm_dx(&lat, &u));
        let solver = SolverParams::new(0.01).unwrap();
        let (next, diag) = midpoint_step(&lat, &params, &solver, &scaled).unwrap();
        prop_assert!(diag.converged);
        let dm = (mass(&lat, &next) - mass(&lat, &scaled)).abs();
        prop_assert!(dm <= 1e-12);
    }
}
