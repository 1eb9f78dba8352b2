mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statecon_core::expr::parse_expr;
use statecon_core::stationarity::*;
use statecon_core::variations::*;

fn kappa(src: &str) -> ExprKappa {
    ExprKappa::new(parse_expr(src, &["t"]).unwrap()).unwrap()
}

fn random_trig(rng: &mut ChaCha8Rng, t1: f64, t2: f64, positive: bool) -> TrigKappa {
    let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let spread: f64 = a.iter().chain(&b).map(|v| v.abs()).sum();
    let c0 = if positive { spread + rng.gen_range(0.1..1.0) } else { rng.gen_range(-1.0..1.0) };
    TrigKappa { c0, a, b, t1, t2 }
}

#[test]
fn zero_kappa_gives_zero_variation() {
    let (p, w) = common::atoms(1.0, 100);
    let var = build_variation(&p, &w, &kappa("0")).unwrap();
    assert_eq!(var.state.max_abs(), 0.0);
    assert_eq!(var.control.max_abs(), 0.0);
    let m = reconstruct_multipliers(&p, &w).unwrap();
    let r = pairing_identity_residual(&p, &w, &m, &var, &kappa("0")).unwrap();
    assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    assert_eq!(directional_derivative(&p, &w, &var).unwrap(), 0.0);
}

#[test]
fn atom_example_quadratic_kappa() {
    let (p, w) = common::atoms(1.0, 400);
    let k = kappa("(t - 1)*(2 - t)");
    let var = build_variation(&p, &w, &k).unwrap();
    // g = u so ū = κ̇ = 3 − 2t, and f'(0) = 0 keeps z̄ ≡ 0 on the arc
    let arc = var.control.piece(1);
    for i in 0..=arc.steps {
        assert!((arc.node(i)[0] - (3.0 - 2.0 * arc.time(i))).abs() < 1e-12);
        assert!(var.state.piece(1).node(i)[0].abs() < 1e-14);
    }
    let m = reconstruct_multipliers(&p, &w).unwrap();
    let r = pairing_identity_residual(&p, &w, &m, &var, &k).unwrap();
    assert!(r.abs <= 1e-6 && r.lhs.abs() < 1e-9 && r.rhs.abs() < 1e-9);
    assert!(variational_residual(&p, &w, &var).unwrap() <= 1e-8);
}

#[test]
fn atom_example_constant_kappa() {
    let (p, w) = common::atoms(1.0, 400);
    let k = kappa("1");
    let var = build_variation(&p, &w, &k).unwrap();
    // the homogeneous system is trivial, so x̄ ≡ 1 on the first interval
    let first = var.state.piece(0);
    assert!((0..=first.steps).all(|i| (first.node(i)[1] - 1.0).abs() < 1e-14));
    let m = reconstruct_multipliers(&p, &w).unwrap();
    let r = pairing_identity_residual(&p, &w, &m, &var, &k).unwrap();
    assert!((r.rhs + 2.0).abs() < 1e-9);
    assert!(r.abs <= 1e-6);
    let dj = directional_derivative(&p, &w, &var).unwrap();
    assert!((dj - 2.0).abs() < 1e-9);
    assert!((measure_pairing(&w, &m, &k).unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn pairing_identity_random_kappa() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (p, w) in [common::atoms(1.0, 400), common::density(1.0, 2.0, 3.0, 400), common::smooth(400)] {
        let m = reconstruct_multipliers(&p, &w).unwrap();
        for _ in 0..20 {
            let k = random_trig(&mut rng, w.t1, w.t2, false);
            let var = build_variation(&p, &w, &k).unwrap();
            let r = pairing_identity_residual(&p, &w, &m, &var, &k).unwrap();
            assert!(r.rel <= 1e-6, "{r:?}");
            let dj = directional_derivative(&p, &w, &var).unwrap();
            assert!((dj - measure_pairing(&w, &m, &k).unwrap()).abs() <= 1e-6);
        }
    }
}

#[test]
fn zero_perturbation_reproduces_reference() {
    let (p, w) = common::atoms(1.0, 200);
    let var = build_variation(&p, &w, &kappa("1 + (t - 1)*(2 - t)")).unwrap();
    let pert = perturb_process(&p, &w, &var, 0.0).unwrap();
    assert_eq!(pert.cost_gap, 0.0);
    assert_eq!(pert.process.state(), w.state());
}

#[test]
fn perturbation_is_feasible_for_positive_kappa() {
    let (p, w) = common::atoms(1.0, 400);
    let var = build_variation(&p, &w, &kappa("1 + (t - 1)*(2 - t)")).unwrap();
    for eps in [1e-2, 1e-3] {
        let pert = perturb_process(&p, &w, &var, eps).unwrap();
        assert!(pert.feasible(), "{pert:?}");
        assert!(pert.min_arc >= eps / 2.0);
    }
}

#[test]
fn finite_difference_ladder() {
    let (p, w) = common::density(1.0, 2.0, 3.0, 400);
    let k = kappa("1 + (t - 1)*(2 - t)");
    let var = build_variation(&p, &w, &k).unwrap();
    let dj = directional_derivative(&p, &w, &var).unwrap();
    let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&e| (perturb_process(&p, &w, &var, e).unwrap().cost_gap / e - dj).abs())
        .collect();
    let slope = (errs[0].log10() - errs[2].log10()) / 2.0;
    assert!((slope - 1.0).abs() <= 0.2, "{errs:?}");
}

#[test]
fn bumps_certify_density_example() {
    let (p, w) = common::density(1.0, 2.0, 3.0, 400);
    let m = reconstruct_multipliers(&p, &w).unwrap();
    let bumps = bump_family(w.t1, w.t2, 9);
    let rep = check_dj_inequality(&w, &m, &as_family(&bumps), 1e-6).unwrap();
    assert!(!rep.nonnegative && rep.min_value <= -1e-3);
    // centred tent of half-width 1/4: ∫(t−1)(t−2)κ = −1/16 + 1/384
    let centred = Bump { centre: 1.5, half_width: 0.25 };
    let v = measure_pairing(&w, &m, &centred).unwrap();
    assert!((v - (-1.0 / 16.0 + 1.0 / 384.0)).abs() < 1e-6, "{v}");
}

#[test]
fn bumps_nonnegative_on_atom_example() {
    let (p, w) = common::atoms(1.0, 400);
    let m = reconstruct_multipliers(&p, &w).unwrap();
    let bumps = bump_family(w.t1, w.t2, 9);
    let rep = check_dj_inequality(&w, &m, &as_family(&bumps), 1e-6).unwrap();
    assert!(rep.nonnegative);
    assert!(rep.min_value.abs() < 1e-9);
}

#[test]
fn grid_kappa_matches_expression() {
    let (p, w) = common::density(1.0, 2.0, 3.0, 200);
    let k = kappa("1 + sin(t)");
    let arc = w.state().piece(1);
    let grid = GridKappa::new(
        statecon_core::integrate::Piece::from_fn(arc.t0, arc.t1, 4 * arc.steps, 1, |t, o| {
            o[0] = 1.0 + t.sin();
            Ok(())
        })
        .unwrap(),
    )
    .unwrap();
    let a = build_variation(&p, &w, &k).unwrap();
    let b = build_variation(&p, &w, &grid).unwrap();
    let diff = a.terminal().iter().zip(b.terminal()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff < 1e-6, "{diff:e}");
}
