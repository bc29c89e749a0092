use kirchhoff_core::elliptic::GreenOperator;
use kirchhoff_core::grid::Grid;
use kirchhoff_core::nonlocal::{
    apply_t, fixed_point_solve, verify_invariance, InvariantEnvelope, OrderInterval, SolveOptions, SolveStatus,
    StartPoint,
};
use kirchhoff_core::oracle::{newton_solve, NewtonOptions};
use kirchhoff_core::problems::{Example1, ExampleKind, ExampleParams, Forcing, G2Options, Parameter};
use proptest::prelude::*;

fn green(n: usize) -> GreenOperator {
    GreenOperator::new(&Grid::build(vec![(0.0, 1.0)], vec![n]).unwrap()).unwrap()
}

#[test]
fn example1_interval_is_invariant() {
    let gr = green(128);
    let p = ExampleParams::defaults(ExampleKind::Example1)
        .build(&gr, &G2Options::default())
        .unwrap();
    let r = verify_invariance(&p.spec, &gr, &p.interval, 1000, 42).unwrap();
    assert!(r.pass);
    assert_eq!(r.violations, 0);
    assert_eq!(r.samples, 1002);
    assert!(r.worst_excess <= 0.0);
}

#[test]
fn halved_supersolution_breaks_invariance() {
    let gr = green(128);
    let ex = Example1::new(&gr, Forcing::constant(2.0), 2.0, 1.0, 0.95).unwrap();
    let p = ex.build(0.9 * ex.lambda_f, &G2Options::default()).unwrap();
    let halved = OrderInterval::new_unchecked(p.interval.phi.clone(), p.interval.psi.scaled(0.5), 0.0).unwrap();
    let r = verify_invariance(&p.spec, &gr, &halved, 200, 1).unwrap();
    assert!(!r.pass);
    assert!(r.violations > 0);
    // the upper endpoint alone already escapes
    let env = InvariantEnvelope::new(&p.spec, &halved).unwrap();
    assert!(env.excess(&apply_t(&p.spec, &gr, &halved.psi).unwrap()) > 0.0);
}

#[test]
fn psi_end_and_phi_end_reach_the_same_solution() {
    let gr = green(64);
    for kind in ExampleKind::ALL {
        let p = ExampleParams::defaults(kind).build(&gr, &G2Options::default()).unwrap();
        let solve = |start| {
            let opts = SolveOptions {
                start,
                tol: 1e-12,
                ..SolveOptions::default()
            };
            fixed_point_solve(&p.spec, &gr, &p.interval, &opts).unwrap()
        };
        let a = solve(StartPoint::PsiEnd);
        let b = solve(StartPoint::PhiEnd);
        assert_eq!(a.status, SolveStatus::Converged, "{}", kind.as_str());
        assert_eq!(b.status, SolveStatus::Converged, "{}", kind.as_str());
        assert!(a.u.sup_distance(&b.u).unwrap() < 1e-9, "{}", kind.as_str());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn oracle_agrees_on_example3_across_grids(n in 8usize..48, d in 0.2f64..3.0) {
        let gr = green(n);
        let params = ExampleParams { d, ..ExampleParams::defaults(ExampleKind::Example3) };
        let p = params.build(&gr, &G2Options { omega_trials: 20, ..G2Options::default() }).unwrap();
        let fp = fixed_point_solve(&p.spec, &gr, &p.interval, &SolveOptions::default()).unwrap();
        prop_assert_eq!(fp.status, SolveStatus::Converged);
        let start = p.interval.phi.zip_map(&p.interval.psi, |a, b| 0.5 * (a + b)).unwrap();
        let nw = newton_solve(&p.spec, &start, &NewtonOptions::default()).unwrap();
        prop_assert!(nw.converged);
        prop_assert!(nw.final_residual <= 1e-12 * (1.0 + nw.g_scale));
        prop_assert!(nw.u.sup_distance(&fp.u).unwrap() < 1e-8);
    }

    #[test]
    fn fixed_point_stays_between_bounds(frac in 0.05f64..0.95, seed in 0u64..1000) {
        let gr = green(48);
        let params = ExampleParams {
            parameter: Parameter::Fraction(frac),
            ..ExampleParams::defaults(ExampleKind::Example1)
        };
        let p = params.build(&gr, &G2Options::with_seed(seed)).unwrap();
        let r = fixed_point_solve(&p.spec, &gr, &p.interval, &SolveOptions::default()).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Converged);
        let env = InvariantEnvelope::new(&p.spec, &p.interval).unwrap();
        prop_assert!(env.contains(&r.u));
        prop_assert!(r.residual < 1e-8);
    }
}
