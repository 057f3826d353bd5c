use std::sync::Arc;

use proptest::prelude::*;

use pmaflow::harness::{check_comparison, holder_seminorm};
use pmaflow::legendre::{biconjugate, legendre_transform, legendre_transform_bruteforce, DualGrid};
use pmaflow::operators::monotone_ma_at;
use pmaflow::problem::{validate_conditions, CONDITION_TOL};
use pmaflow::stepper::{cfl_dt, solve_lockstep, SolverState};
use pmaflow::{builtin_problem, Domain, Grid, GridFunction, ScalarFn, SolveOptions, StencilWidth};

fn disk(h: f64) -> Arc<Grid> {
    Arc::new(Grid::new(Domain::unit_disk(), h).unwrap())
}

fn quadratic(g: &Arc<Grid>, a: f64, b: f64, c: f64, q: f64) -> GridFunction {
    GridFunction::from_fn(g.clone(), |x| 0.5 * (a * x[0] * x[0] + 2.0 * c * x[0] * x[1] + b * x[1] * x[1]) + q * x[0].powi(4))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn monotone_ma_is_nondecreasing_in_neighbours(
        a in 0.2f64..3.0, b in 0.2f64..3.0, c in -0.1f64..0.1,
        node in 0usize..1000, arm in 0usize..8, bump in 0.0f64..0.05,
        width in prop_oneof![Just(StencilWidth::Axes), Just(StencilWidth::AxesAndDiagonals)],
    ) {
        let g = disk(0.125);
        let u = quadratic(&g, a, b, c, 0.0);
        let k = node % g.n_interior();
        let before = monotone_ma_at(&g, u.values(), k, width);
        let mut raised = u.values().to_vec();
        raised[g.arms(k)[arm].target] += bump;
        prop_assert!(monotone_ma_at(&g, &raised, k, width) >= before);
    }

    #[test]
    fn fast_legendre_equals_oracle(
        a in 0.3f64..3.0, b in 0.3f64..3.0, c in -0.2f64..0.2, q in 0.0f64..1.0,
        h in prop_oneof![Just(0.125), Just(0.1), Just(0.0625)],
    ) {
        let u = quadratic(&disk(h), a, b, c, q);
        let dual = DualGrid::auto(&u).unwrap();
        let fast = legendre_transform(&u, &dual);
        let slow = legendre_transform_bruteforce(&u, &dual);
        prop_assert_eq!(&fast.argmax, &slow.argmax);
        for (x, y) in fast.values.iter().zip(&slow.values) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn fenchel_young_holds(a in 0.3f64..3.0, b in 0.3f64..3.0, c in -0.2f64..0.2) {
        let u = quadratic(&disk(0.125), a, b, c, 0.0);
        let dual = DualGrid::auto(&u).unwrap();
        let big_u = legendre_transform(&u, &dual);
        let g = u.grid();
        for d in 0..dual.len() {
            let y = dual.point(d);
            for k in 0..g.n_nodes() {
                let x = g.point(k);
                prop_assert!(big_u.values[d] + u[k] - (y[0] * x[0] + y[1] * x[1]) >= -1e-13);
            }
        }
    }

    #[test]
    fn biconjugate_preserves_order(a in 0.3f64..3.0, b in 0.3f64..3.0, shift in 0.0f64..0.5, tilt in 0.0f64..0.3) {
        let g = disk(0.125);
        let u = quadratic(&g, a, b, 0.0, 0.0);
        let v = GridFunction::from_fn(g.clone(), |x| {
            0.5 * (a * x[0] * x[0] + b * x[1] * x[1]) + shift + tilt * (x[0] * x[0] + x[1] * x[1])
        })
        .unwrap();
        let dual = DualGrid::covering(&[&u, &v], 3).unwrap();
        let (bu, bv) = (biconjugate(&u, &dual), biconjugate(&v, &dual));
        for k in 0..g.n_nodes() {
            prop_assert!(bu[k] <= bv[k]);
        }
    }

    #[test]
    fn holder_seminorm_is_homogeneous(scale_pow in -3i32..4, seed in 0u64..1000) {
        let g = disk(0.125);
        let times = vec![0.0, 0.5, 1.0];
        let fields: Vec<_> = times
            .iter()
            .map(|&t| GridFunction::from_fn(g.clone(), move |x| (x[0] + t).sin() * x[1]).unwrap())
            .collect();
        let c = 2f64.powi(scale_pow);
        let scaled: Vec<_> = fields
            .iter()
            .map(|f| GridFunction::new(g.clone(), f.values().iter().map(|v| c * v).collect()).unwrap())
            .collect();
        let s = holder_seminorm(&times, &fields, 0.5, 2000, seed).unwrap();
        let sc = holder_seminorm(&times, &scaled, 0.5, 2000, seed).unwrap();
        prop_assert!(s >= 0.0);
        prop_assert_eq!(sc, c * s);
    }

    #[test]
    fn condition_report_is_stable_in_density(density in 8.0f64..64.0) {
        let spec = builtin_problem("mms_quadratic").unwrap();
        let r = validate_conditions(&spec, density, CONDITION_TOL).unwrap();
        prop_assert!(r.all_pass());
        prop_assert_eq!(r, validate_conditions(&spec, density, CONDITION_TOL).unwrap());
    }

    #[test]
    fn cfl_never_overshoots_horizon(t_frac in 0.0f64..1.0) {
        let spec = builtin_problem("mms_quadratic").unwrap();
        let mut state = SolverState::initial(&spec, disk(0.125)).unwrap();
        state.t = t_frac * spec.horizon;
        let dt = cfl_dt(&state, &spec, &SolveOptions::default()).unwrap();
        prop_assert!(dt > 0.0 && state.t + dt <= spec.horizon);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ordered_data_gives_ordered_solutions(lift in 0.0f64..0.5, drop in 0.0f64..0.3) {
        let v = builtin_problem("mms_quadratic").unwrap().with_horizon(0.2).unwrap();
        let mut w = v.clone();
        let (psi, phi) = (v.psi.clone(), v.phi.clone());
        w.psi = ScalarFn::new("psi + lift", move |x, t| psi.eval(x, t) + lift);
        w.phi = ScalarFn::new("phi - drop", move |x, t| phi.eval(x, t) - drop);
        let times: Vec<f64> = (1..=20).map(|k| 0.01 * k as f64).collect();
        let [tw, tv] = solve_lockstep([&w, &v], disk(0.125), &times, &SolveOptions::default()).unwrap();
        let r = check_comparison(&tw, &tv, 1e-12).unwrap();
        prop_assert_eq!(r.violations, 0);
    }
}
