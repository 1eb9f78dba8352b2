mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statecon_core::expr::parse_expr;
use statecon_core::linalg::{Lu, Mat};
use statecon_core::model::{boxed_law, simulate_process, ControlPieces, ControlSystem};
use statecon_core::reductions::*;
use statecon_core::report::StationarityReport;
use statecon_core::stationarity::*;

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn cubic_primitive(s: f64) -> f64 {
    s * s * s / 3.0 - 1.5 * s * s + 2.0 * s
}

#[test]
fn replication_of_atom_example() {
    let (p, w) = common::atoms(1.0, 100);
    let b = build_problem_b(&p, &w).unwrap();
    assert_eq!(b.rho(), [1.0, 1.0, 1.0]);
    for (i, iv) in b.intervals.iter().enumerate() {
        for j in 0..=iv.states.steps {
            let tau = iv.states.time(j);
            assert!((iv.states.node(j)[2] - (i as f64 + tau)).abs() < 1e-14);
        }
    }
}

#[test]
fn replication_uses_interval_lengths() {
    let (p, w) = common::density(0.5, 2.5, 3.5, 50);
    let b = build_problem_b(&p, &w).unwrap();
    let rho = b.rho();
    assert!((rho[0] - 0.5).abs() < 1e-14 && (rho[1] - 2.0).abs() < 1e-14 && (rho[2] - 1.0).abs() < 1e-14);
}

#[test]
fn atom_example_b_form_passes() {
    let (p, w) = common::atoms(1.0, 2000);
    let (m, _) = verify_theorem(&p, &w, &Tolerances::default()).unwrap();
    let b = build_problem_b(&p, &w).unwrap();
    let mb = map_multipliers_a_to_b(&m, &b).unwrap();
    let rep = verify_b_conditions(&p, &b, &mb, &Tolerances::default()).unwrap();
    assert!(rep.verdict(), "{:?}", rep.violations());
    assert!(rep.max_residual() <= 1e-5);
    // total mass 2 sits in α₁, σ = m ≡ −Δμ(t2) on the arc
    assert!((mb.alpha1 - 2.0).abs() < 1e-9);
    assert!((mb.beta7 + 1.0).abs() < 1e-9);
    assert!(mb.sigma.values().iter().all(|s| (s + 1.0).abs() < 1e-9));
    assert_eq!(mb.h1.values(), m.h.piece(0).values());
}

#[test]
fn density_example_b_form_only_alpha_sign() {
    let (p, w) = common::density(1.0, 2.0, 3.0, 2000);
    let (m, _) = verify_theorem(&p, &w, &Tolerances::default()).unwrap();
    let b = build_problem_b(&p, &w).unwrap();
    let mb = map_multipliers_a_to_b(&m, &b).unwrap();
    let rep = verify_b_conditions(&p, &b, &mb, &Tolerances::default()).unwrap();
    assert_eq!(rep.violations(), vec![B_NONNEG_ALPHA]);
    assert!((mb.alpha1 + 1.0 / 6.0).abs() < 1e-9);
    for c in &rep.conditions {
        if c.name != B_NONNEG_ALPHA {
            assert!(c.residual <= 1e-5, "{} = {:e}", c.name, c.residual);
        }
    }
    for j in 0..=mb.sigma.steps {
        let t = 1.0 + mb.sigma.time(j);
        let want = -(cubic_primitive(2.0) - cubic_primitive(t));
        assert!((mb.sigma.node(j)[0] - want).abs() < 1e-9);
    }
}

#[test]
fn corrupted_time_multiplier_detected() {
    let (p, w) = common::atoms(1.0, 200);
    let (m, _) = verify_theorem(&p, &w, &Tolerances::default()).unwrap();
    let b = build_problem_b(&p, &w).unwrap();
    let mut mb = map_multipliers_a_to_b(&m, &b).unwrap();
    mb.beta_t[1] += 0.1;
    let rep = verify_b_conditions(&p, &b, &mb, &Tolerances::default()).unwrap();
    assert_eq!(rep.violations(), vec![B_TIME_MULTIPLIERS]);
}

#[test]
fn corrupted_sigma_detected() {
    let (p, w) = common::atoms(1.0, 200);
    let (m, _) = verify_theorem(&p, &w, &Tolerances::default()).unwrap();
    let b = build_problem_b(&p, &w).unwrap();
    let mut mb = map_multipliers_a_to_b(&m, &b).unwrap();
    for j in 0..=mb.sigma.steps {
        mb.sigma.node_mut(j)[0] += 1e-2;
    }
    let rep = verify_b_conditions(&p, &b, &mb, &Tolerances::default()).unwrap();
    assert!(rep.violations().contains(&B_CONTROL_STATIONARITY));
}

#[test]
fn no_atom_b_form_passes() {
    let (p, w) = common::no_atom(400);
    let (m, _) = verify_theorem(&p, &w, &Tolerances::default()).unwrap();
    let b = build_problem_b(&p, &w).unwrap();
    let mb = map_multipliers_a_to_b(&m, &b).unwrap();
    let rep = verify_b_conditions(&p, &b, &mb, &Tolerances::default()).unwrap();
    assert!(rep.verdict(), "{:?}", rep.violations());
    assert!((mb.alpha1 - 1.0).abs() < 1e-9);
}

#[test]
fn mismatched_grid_rejected() {
    let (p, w) = common::atoms(1.0, 100);
    let (_, w2) = common::atoms(1.0, 50);
    let m = reconstruct_multipliers(&p, &w2).unwrap();
    let b = build_problem_b(&p, &w).unwrap();
    assert!(map_multipliers_a_to_b(&m, &b).is_err());
}

fn polar() -> ChangeOfVariables {
    let y = names(&["r", "a"]);
    let v = ["r", "a"];
    ChangeOfVariables::new(y, vec![parse_expr("r*cos(a)", &v).unwrap()], parse_expr("r*sin(a)", &v).unwrap()).unwrap()
}

#[test]
fn identity_inversion() {
    let cv = ChangeOfVariables::identity(&names(&["a", "b", "c"])).unwrap();
    let inv = invert_change_of_vars(&cv, &[1.0, -2.0, 3.0], &[0.0; 3]).unwrap();
    assert_eq!(inv.y, vec![1.0, -2.0, 3.0]);
    assert_eq!(check_gzpp(&cv, &[0.3, 0.2, 0.1]).unwrap(), 0.0);
}

#[test]
fn linear_inversion_is_one_step() {
    let a = Mat::from_rows(2, 2, vec![2.0, 1.0, -1.0, 3.0]);
    let cv = ChangeOfVariables::linear(&names(&["p", "q"]), &a).unwrap();
    let zx = [1.0, 2.0];
    let inv = invert_change_of_vars(&cv, &zx, &[10.0, -4.0]).unwrap();
    assert!(inv.iterations <= 2);
    let want = Lu::new(&a).unwrap().solve(&zx);
    assert!((inv.y[0] - want[0]).abs() < 1e-13 && (inv.y[1] - want[1]).abs() < 1e-13);
    assert!((inv.det - 7.0).abs() < 1e-12);
    assert!(check_gzpp(&cv, &[0.4, -0.1]).unwrap() <= 1e-13);
}

#[test]
fn polar_round_trip() {
    let cv = polar();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut zx = [0.0; 2];
    for _ in 0..100 {
        let y = [rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0)];
        cv.apply(&y, &mut zx).unwrap();
        let guess = [y[0] + 0.05, y[1] - 0.05];
        let inv = invert_change_of_vars(&cv, &zx, &guess).unwrap();
        assert!((inv.y[0] - y[0]).abs() <= 1e-10 && (inv.y[1] - y[1]).abs() <= 1e-10);
        assert!((inv.det - y[0]).abs() < 1e-12);
        assert!(check_gzpp(&cv, &y).unwrap() <= 1e-10);
    }
}

#[test]
fn singular_change_rejected() {
    let cv = polar();
    assert!(matches!(invert_change_of_vars(&cv, &[0.0, 0.0], &[0.0, 0.3]), Err(statecon_core::Error::Singular(_))));
}

#[test]
fn second_derivative_symmetry_at_random_points() {
    let v = ["p", "q", "r"];
    let cv = ChangeOfVariables::new(
        names(&v),
        vec![parse_expr("p*q + sin(r)*p", &v).unwrap(), parse_expr("exp(q)*r^2", &v).unwrap()],
        parse_expr("p^3 - q*r + cos(p*r)", &v).unwrap(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let mut r3 = || [0; 3].map(|_| rng.gen_range(-1.0..1.0));
    for _ in 0..100 {
        let (psi, y, f, yb) = (r3(), r3(), r3(), r3());
        assert!(second_derivative_symmetry(&cv, &psi, &y, &f, &yb).unwrap() <= 1e-8);
    }
}

#[test]
fn identity_problem_d_matches_original() {
    let (p, _) = common::density(1.0, 2.0, 3.0, 10);
    let pc = p.to_problem_c().unwrap();
    let cv = ChangeOfVariables::for_problem(
        &pc,
        vec![parse_expr("z1", &["z1"]).unwrap(), parse_expr("z2", &["z2"]).unwrap()],
    )
    .unwrap();
    let pd = build_problem_d(&pc, &cv).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
    for _ in 0..100 {
        let s = [0; 3].map(|_| rng.gen_range(-2.0..2.0));
        let u = [rng.gen_range(-1.0..1.0)];
        p.dynamics(&s, &u, &mut a).unwrap();
        pd.dynamics(&s, &u, &mut b).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12));
    }
}

fn assert_same_verdicts(a: &StationarityReport, b: &StationarityReport) {
    for (x, y) in a.conditions.iter().zip(&b.conditions) {
        assert_eq!(x.name, y.name);
        assert_eq!(x.pass, y.pass, "{}", x.name);
    }
}

#[test]
fn identity_split_reproduces_a_form_verdicts() {
    for (p, w) in [common::atoms(1.0, 1000), common::density(1.0, 2.0, 3.0, 1000)] {
        let (ma, ra) = verify_theorem(&p, &w, &Tolerances::default()).unwrap();
        let pc = p.to_problem_c().unwrap();
        let cv = ChangeOfVariables::identity(&pc.y).unwrap();
        let run = verify_problem_c(&pc, &cv, &w, &Tolerances::default()).unwrap();
        assert_same_verdicts(&ra, &run.report);
        assert!((run.multipliers_c.atoms[0] - ma.atoms[0]).abs() < 1e-10);
        let tube = certify_tube(&cv, w.state(), 0.1).unwrap();
        assert!(tube.max_gzpp <= 1e-10 && tube.max_round_trip <= 1e-10);
    }
}

#[test]
fn linear_change_transports_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for (p, w) in [common::atoms(1.0, 500), common::density(1.0, 2.0, 3.0, 500)] {
        let k = p.n() + 1;
        let mut a = Mat::identity(k);
        for i in 0..k {
            for j in 0..k {
                a.row_mut(i)[j] += rng.gen_range(-0.3..0.3);
            }
        }
        let (me, re) = verify_theorem(&p, &w, &Tolerances::default()).unwrap();
        let pc = common::pull_back_linear(&p, &a);
        let ainv = Lu::new(&a).unwrap().inverse();
        let y0 = ainv.mul_vec(w.initial_state());
        let w_y =
            simulate_process(&pc, boxed_law(ControlPieces::constant(&[&[-1.0], &[0.0], &[1.0]])), w.t1, w.t2, &y0, 500)
                .unwrap();
        let cv = ChangeOfVariables::linear(&pc.y, &a).unwrap();
        let run = verify_problem_c(&pc, &cv, &w_y, &Tolerances::default()).unwrap();
        assert_same_verdicts(&re, &run.report);
        for kk in 0..3 {
            let pe = me.psi.piece(kk);
            let pcv = run.multipliers_c.psi.piece(kk);
            for i in 0..=pe.steps {
                let want = a.vec_mul(pe.node(i));
                for (got, want) in pcv.node(i).iter().zip(&want) {
                    assert!((got - want).abs() <= 1e-8, "piece {kk} node {i}");
                }
            }
        }
    }
}

#[test]
fn nonlinear_coordinates_leave_multipliers_invariant() {
    let (p, w) = common::no_atom(400);
    let (ma, ra) = verify_theorem(&p, &w, &Tolerances::default()).unwrap();
    let pc = p.to_problem_c().unwrap();
    let cv = ChangeOfVariables::for_problem(&pc, vec![parse_expr("z + 0.1*x^2", &["z", "x"]).unwrap()]).unwrap();
    let run = verify_problem_c(&pc, &cv, &w, &Tolerances::default()).unwrap();
    assert_same_verdicts(&ra, &run.report);
    let diff = (0..3)
        .flat_map(|k| {
            let a = ma.psi.piece(k);
            let c = run.multipliers_c.psi.piece(k);
            a.values().iter().zip(c.values()).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    assert!(diff <= 1e-8, "{diff:e}");
}
