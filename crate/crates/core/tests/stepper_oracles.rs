mod common;

use common::{coupled_step, fde_step, sup_diff, CoupledProblem};
use fde_relax::grid::apply_laplacian;
use fde_relax::stepper::{self, NewtonSettings, RunParameters, State, Stepper};
use fde_relax::{Field, Grid, PowerLaw, TimeGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn law() -> PowerLaw {
    PowerLaw::new(2.5).unwrap()
}

fn params(grid: Grid, mu: f64, eps: f64, xi: f64, dt: f64, steps: usize) -> RunParameters {
    RunParameters {
        law: law(),
        mu,
        eps,
        xi,
        time: TimeGrid::with_steps(dt, steps),
        grid,
    }
}

fn random_field(g: &Grid, rng: &mut impl Rng, amp: f64) -> Field {
    Field::from_vec((0..g.len()).map(|_| rng.gen_range(-amp..amp)).collect())
}

#[test]
fn coupled_step_matches_gauss_seidel_in_1d() {
    let g = Grid::new(1, 1.0, 0.25).unwrap();
    let p = params(g, 0.5, 0.1, 0.1, 1e-2, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let s = State::new(random_field(&g, &mut rng, 1.0), random_field(&g, &mut rng, 1.0));
        let next = stepper::step(&s, &p, &NewtonSettings::default()).unwrap();
        let pb = CoupledProblem { grid: &g, law: law(), mu: 0.5, eps: 0.1, xi: 0.1, dt: 1e-2 };
        let (u, v) = coupled_step(&pb, s.u.as_slice(), s.v.as_slice());
        assert!(sup_diff(next.u.as_slice(), &u) < 1e-10);
        assert!(sup_diff(next.v.as_slice(), &v) < 1e-10);
    }
}

#[test]
fn krylov_step_matches_gauss_seidel_in_2d() {
    let g = Grid::new(2, 1.0, 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (eps, xi) in [(0.1, 0.1), (1e-3, 0.0)] {
        let p = params(g, 0.4, eps, xi, 1e-2, 1);
        let s = State::new(random_field(&g, &mut rng, 1.0), random_field(&g, &mut rng, 0.5));
        let next = stepper::step(&s, &p, &NewtonSettings::default()).unwrap();
        let pb = CoupledProblem { grid: &g, law: law(), mu: 0.4, eps, xi, dt: 1e-2 };
        let (u, v) = coupled_step(&pb, s.u.as_slice(), s.v.as_slice());
        assert!(sup_diff(next.u.as_slice(), &u) < 1e-9, "{}", sup_diff(next.u.as_slice(), &u));
        assert!(sup_diff(next.v.as_slice(), &v) < 1e-9);
    }
}

#[test]
fn fde_step_matches_gauss_seidel() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for g in [Grid::new(1, 1.0, 0.25).unwrap(), Grid::new(2, 1.0, 0.2).unwrap()] {
        let p = params(g, 0.5, 0.1, 0.1, 1e-2, 1);
        for _ in 0..10 {
            let z = random_field(&g, &mut rng, 1.0);
            let next = stepper::step_fde(&z, &z.map(|x| law().alpha(x)), &p, &NewtonSettings::default()).unwrap();
            let oracle = fde_step(&g, &law(), 1e-2, z.as_slice());
            assert!(sup_diff(next.as_slice(), &oracle) < 1e-10);
        }
    }
}

#[test]
fn decoupled_heat_step_closed_form() {
    for dim in [1, 2] {
        let g = Grid::new(dim, 1.0, 0.1).unwrap();
        let f = g.field_from_fn(|x| (0..dim).map(|k| (std::f64::consts::PI * x[k]).sin()).product());
        let lf = apply_laplacian(&f, &g).unwrap();
        let k = (0..g.len()).max_by(|&a, &b| f.as_slice()[a].total_cmp(&f.as_slice()[b])).unwrap();
        let lambda = lf.as_slice()[k] / f.as_slice()[k];
        let (mu, dt, xi) = (0.5, 1e-3, 1.0);
        let p = params(g, mu, 1e12, xi, dt, 1);
        let next = stepper::step(&State::new(f.clone(), f.clone()), &p, &NewtonSettings::default()).unwrap();
        for i in 0..g.len() {
            let fi = f.as_slice()[i];
            let u = fi / (1.0 - mu * dt * lambda);
            let v = fi / (1.0 - dt * lambda / xi);
            assert!((next.u.as_slice()[i] - u).abs() <= 1e-6 * u.abs().max(1e-12));
            assert!((next.v.as_slice()[i] - v).abs() <= 1e-6 * v.abs().max(1e-12));
        }
    }
}

#[test]
fn tiny_eps_step_matches_fde_step() {
    let g = Grid::with_intervals(1, 1.0, 10).unwrap();
    let p = params(g, 0.5, 1e-8, 1e-8, 1e-3, 1);
    let z0 = g.field_from_fn(|x| (std::f64::consts::PI * x[0]).sin());
    let (u0, v0) = fde_relax::stationary::initial_uv(&z0, 0.5, &law()).unwrap();
    let next = stepper::step(&State::new(u0, v0), &p, &NewtonSettings::default()).unwrap();
    let fde = stepper::step_fde(&z0, &z0.map(|x| law().alpha(x)), &p, &NewtonSettings::default()).unwrap();
    assert!(sup_diff(next.z(0.5).as_slice(), fde.as_slice()) < 1e-6);
}

#[test]
fn run_without_steps_returns_initial_state() {
    let g = Grid::new(1, 1.0, 0.1).unwrap();
    let p = params(g, 0.5, 0.1, 0.1, 1e-3, 0);
    let u0 = g.field_from_fn(|x| x[0]);
    let v0 = g.field_from_fn(|x| 1.0 - x[0]);
    let mut seen = Vec::new();
    let summary = stepper::run(&p, u0.clone(), v0.clone(), &NewtonSettings::default(), |o| {
        seen.push(o.n);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![0]);
    assert_eq!(summary.final_state, State::new(u0, v0));
}

#[test]
fn zero_data_give_zero_trajectory() {
    let g = Grid::new(1, 1.0, 0.1).unwrap();
    let p = params(g, 0.5, 0.01, 0.0, 1e-3, 20);
    let mut count = 0;
    stepper::run(&p, g.zeros(), g.zeros(), &NewtonSettings::default(), |o| {
        assert_eq!(o.state.u.sup_norm() + o.state.v.sup_norm(), 0.0);
        count += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(count, 21);
}

#[test]
fn step_failure_reports_the_step_index() {
    let g = Grid::new(1, 1.0, 0.1).unwrap();
    let p = params(g, 0.5, 1e-3, 0.0, 1e-3, 3);
    let ns = NewtonSettings { max_iter: 1, ..NewtonSettings::default() };
    let u0 = g.field_from_fn(|x| (std::f64::consts::PI * x[0]).sin());
    let err = stepper::run(&p, u0, g.zeros(), &ns, |_| Ok(())).unwrap_err();
    match err {
        fde_relax::Error::Step { step, iterations, residuals, .. } => {
            assert_eq!((step, iterations), (1, 1));
            assert_eq!(residuals.len(), 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn extended_run_matches_plain_run_until_rescaling() {
    let g = Grid::new(1, 1.0, 0.1).unwrap();
    let p = params(g, 0.5, 1e-2, 1e-2, 1e-3, 50);
    let z0 = g.field_from_fn(|x| (std::f64::consts::PI * x[0]).sin());
    let (u0, v0) = fde_relax::stationary::initial_uv(&z0, 0.5, &law()).unwrap();
    let ns = NewtonSettings::default();
    let a = stepper::run(&p, u0.clone(), v0.clone(), &ns, |_| Ok(())).unwrap();
    let b = stepper::run_extended(&p, u0, v0, &ns, |_| Ok(())).unwrap();
    assert_eq!(b.final_exponent, 0);
    assert_eq!(a.final_state, b.final_state);
}

#[test]
fn rescaled_state_is_the_same_scheme() {
    // Scaling the data by 2^-600 and back reproduces the unscaled step.
    let g = Grid::new(1, 1.0, 0.1).unwrap();
    let p = params(g, 0.5, 1e-2, 1e-2, 1e-3, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let s = State::new(random_field(&g, &mut rng, 1.0), random_field(&g, &mut rng, 1.0));
    let ns = NewtonSettings::default();
    let plain = stepper::step(&s, &p, &ns).unwrap();
    let mut scaled = Stepper::new(p, ns).unwrap();
    scaled.set_scale_exponent(-3);
    let shrunk = State::new(s.u.scaled(8.0), s.v.scaled(8.0));
    let (out, _) = scaled.step(&shrunk).unwrap();
    assert!(sup_diff(&out.u.scaled(0.125).into_vec(), plain.u.as_slice()) < 1e-12);
    assert!(sup_diff(&out.v.scaled(0.125).into_vec(), plain.v.as_slice()) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nonzero_input_never_maps_to_zero(
        seed in any::<u64>(),
        eps in 1e-4f64..1.0,
        xi in prop_oneof![Just(0.0), 1e-4f64..1.0],
        amp in 1e-6f64..1.0,
    ) {
        let g = Grid::new(1, 1.0, 0.1).unwrap();
        let p = params(g, 0.5, eps, xi, 1e-3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = State::new(random_field(&g, &mut rng, amp), random_field(&g, &mut rng, amp));
        let next = stepper::step(&s, &p, &NewtonSettings::default()).unwrap();
        prop_assert!(next.u.sup_norm() + next.v.sup_norm() > 0.0);
    }

    #[test]
    fn combined_equation_has_no_reaction_term(
        seed in any::<u64>(),
        eps in 1e-4f64..1.0,
        xi in prop_oneof![Just(0.0), 1e-4f64..1.0],
    ) {
        let g = Grid::new(1, 1.0, 0.1).unwrap();
        let (mu, dt) = (0.5, 1e-3);
        let p = params(g, mu, eps, xi, dt, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = State::new(random_field(&g, &mut rng, 1.0), random_field(&g, &mut rng, 1.0));
        let next = stepper::step(&s, &p, &NewtonSettings::default()).unwrap();
        let lu = apply_laplacian(&next.u, &g).unwrap();
        let lv = apply_laplacian(&next.v, &g).unwrap();
        for i in 0..g.len() {
            let lhs = (next.u.as_slice()[i] - s.u.as_slice()[i]) / dt
                + xi * (next.v.as_slice()[i] - s.v.as_slice()[i]) / dt;
            let rhs = mu * lu.as_slice()[i] + lv.as_slice()[i];
            prop_assert!((lhs - rhs).abs() <= 1e-5 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn reaction_residual_is_nodewise(seed in any::<u64>()) {
        let g = Grid::new(1, 1.0, 0.1).unwrap();
        let p = params(g, 0.5, 0.1, 0.1, 1e-3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = State::new(random_field(&g, &mut rng, 2.0), random_field(&g, &mut rng, 2.0));
        let r = stepper::reaction_residual(&s, &p).unwrap();
        for i in 0..g.len() {
            let (u, v) = (s.u.as_slice()[i], s.v.as_slice()[i]);
            prop_assert_eq!(r.as_slice()[i], u - law().alpha(0.5 * u + v));
        }
    }
}
