//! Test problems built directly from expressions.
#![allow(dead_code)]

use statecon_core::expr::{parse_expr, Expr};
use statecon_core::model::{boxed_law, simulate_process, ControlPieces, ProblemA, ProblemAParts, ReferenceProcess};

pub fn e(src: &str, vars: &[&str]) -> Expr {
    parse_expr(src, vars).unwrap()
}

fn tent_controls() -> ControlPieces {
    ControlPieces::constant(&[&[-1.0], &[0.0], &[1.0]])
}

/// Atom example: ż = f(u), ẋ = u, u² ≤ 1, J = z(0) − z(3) + a(x(0) + x(3)).
pub fn atoms(a: f64, steps: usize) -> (ProblemA, ReferenceProcess) {
    let p = ProblemA::new(ProblemAParts {
        name: "atoms".into(),
        z: vec!["z".into()],
        x: "x".into(),
        u: vec!["u".into()],
        f: vec![e(&format!("(1 - {a}/2)*u^4 + (3*{a}/2 - 1)*u^2"), &["u"])],
        g: e("u", &["u"]),
        phi: vec![e("u^2 - 1", &["u"])],
        cost: e(&format!("z_0 - z_T + {a}*(x_0 + x_T)"), &["z_0", "z_T", "x_0", "x_T"]),
        horizon: 3.0,
    })
    .unwrap();
    let w = simulate_process(&p, boxed_law(tent_controls()), 1.0, 2.0, &[0.0, 1.0], steps).unwrap();
    (p, w)
}

/// Endpoint targets that make the density example stationary apart from
/// the sign of the density: (ẑ₁, ẑ₂, x̂₀, x̂_T).
pub fn density_targets(a: f64, b: f64, t: f64) -> (f64, f64, f64, f64) {
    let z1 = 0.5;
    let left = -2.0 * a.powi(3) / 3.0 + (3.0 * a + b) * a * a / 2.0 - a * a * (a + b);
    let right = 2.0 * (b.powi(3) - t.powi(3)) / 3.0 - (a + 3.0 * b) * (b * b - t * t) / 2.0 + b * (a + b) * (b - t);
    let z2 = (left - right) / 2.0;
    let x0 = a + (a.powi(3) / 3.0 - (a + b) * a * a / 2.0 + a * a * b) / 2.0;
    let xt = t - b - ((b.powi(3) - t.powi(3)) / 3.0 - (a + b) * (b * b - t * t) / 2.0 + a * b * (b - t)) / 2.0;
    (z1, z2, x0, xt)
}

/// Density example: ż₁ = (z₂ − a)(z₂ − b)x, ż₂ = 1, ẋ = u, |u| ≤ 1.
pub fn density(a: f64, b: f64, t: f64, steps: usize) -> (ProblemA, ReferenceProcess) {
    let (z1h, z2h, x0h, xth) = density_targets(a, b, t);
    let p = ProblemA::new(ProblemAParts {
        name: "density".into(),
        z: vec!["z1".into(), "z2".into()],
        x: "x".into(),
        u: vec!["u".into()],
        f: vec![e(&format!("(z2 - {a})*(z2 - {b})*x"), &["z2", "x"]), e("1", &[])],
        g: e("u", &["u"]),
        phi: vec![e("u^2 - 1", &["u"])],
        cost: e(
            &format!("z1_T + (z1_0 - {z1h})^2 + (z2_0 - ({z2h}))^2 + (x_0 - {x0h})^2 + (x_T - {xth})^2"),
            &["z1_0", "z2_0", "x_0", "z1_T", "z2_T", "x_T"],
        ),
        horizon: t,
    })
    .unwrap();
    let w = simulate_process(&p, boxed_law(tent_controls()), a, b, &[0.0, 0.0, a], steps).unwrap();
    (p, w)
}

/// Free dynamics independent of u: ż = x, ẋ = u.
pub fn no_atom(steps: usize) -> (ProblemA, ReferenceProcess) {
    let p = ProblemA::new(ProblemAParts {
        name: "noatom".into(),
        z: vec!["z".into()],
        x: "x".into(),
        u: vec!["u".into()],
        f: vec![e("x", &["x"])],
        g: e("u", &["u"]),
        phi: vec![e("u^2 - 1", &["u"])],
        cost: e("z_T + (z_0 - 0.5)^2 + (x_0 - 1.5)^2 + (x_T - 1.5)^2", &["z_0", "x_0", "z_T", "x_T"]),
        horizon: 3.0,
    })
    .unwrap();
    let w = simulate_process(&p, boxed_law(tent_controls()), 1.0, 2.0, &[0.0, 1.0], steps).unwrap();
    (p, w)
}

/// Smooth variant of the density example: ż₁ = cos(z₂)x.
pub fn smooth(steps: usize) -> (ProblemA, ReferenceProcess) {
    let (s1, s2, s3) = (1f64.sin(), 2f64.sin(), 3f64.sin());
    let x0h = 1.0 + s1 / 2.0;
    let xth = 1.0 + (s3 - s2) / 2.0;
    let psi_z2_0 = 1.0 - s1 - 3f64.cos() + s3 - s2;
    let z2h = -psi_z2_0 / 2.0;
    let p = ProblemA::new(ProblemAParts {
        name: "smooth".into(),
        z: vec!["z1".into(), "z2".into()],
        x: "x".into(),
        u: vec!["u".into()],
        f: vec![e("cos(z2)*x", &["z2", "x"]), e("1", &[])],
        g: e("u", &["u"]),
        phi: vec![e("u^2 - 1", &["u"])],
        cost: e(
            &format!("z1_T + (z1_0 - 0.5)^2 + (z2_0 - ({z2h}))^2 + (x_0 - {x0h})^2 + (x_T - {xth})^2"),
            &["z1_0", "z2_0", "x_0", "z1_T", "z2_T", "x_T"],
        ),
        horizon: 3.0,
    })
    .unwrap();
    let w = simulate_process(&p, boxed_law(tent_controls()), 1.0, 2.0, &[0.0, 0.0, 1.0], steps).unwrap();
    (p, w)
}

use statecon_core::linalg::Mat;
use statecon_core::model::{ProblemC, ProblemCParts};
use std::collections::BTreeMap;

fn linear_combo(row: &[f64], names: &[String]) -> Expr {
    let mut terms =
        row.iter().zip(names).map(|(a, v)| Expr::Mul(Box::new(Expr::Const(*a)), Box::new(Expr::Var(v.clone()))));
    let first = terms.next().unwrap();
    terms.fold(first, |acc, t| Expr::Add(Box::new(acc), Box::new(t)))
}

/// The problem `pa` written in coordinates `y` with `(z, x) = A y`.
pub fn pull_back_linear(pa: &ProblemA, a: &Mat) -> ProblemC {
    let k = pa.n() + 1;
    let s_names: Vec<String> = pa.z.iter().cloned().chain([pa.x.clone()]).collect();
    let y_names: Vec<String> = (1..=k).map(|i| format!("y{i}")).collect();
    let mut map = BTreeMap::new();
    for (i, s) in s_names.iter().enumerate() {
        map.insert(s.clone(), linear_combo(a.row(i), &y_names));
    }
    let mut ends = BTreeMap::new();
    for suffix in ["_0", "_T"] {
        let yn: Vec<String> = y_names.iter().map(|y| format!("{y}{suffix}")).collect();
        for (i, s) in s_names.iter().enumerate() {
            ends.insert(format!("{s}{suffix}"), linear_combo(a.row(i), &yn));
        }
    }
    let fe: Vec<Expr> = pa.f.iter().chain([&pa.g]).map(|e| e.substitute(&map)).collect();
    let inv = statecon_core::linalg::Lu::new(a).unwrap().inverse();
    let f = (0..k)
        .map(|i| {
            let mut terms = (0..k).map(|j| Expr::Mul(Box::new(Expr::Const(inv[(i, j)])), Box::new(fe[j].clone())));
            let first = terms.next().unwrap();
            terms.fold(first, |acc, t| Expr::Add(Box::new(acc), Box::new(t)))
        })
        .collect();
    ProblemC::new(ProblemCParts {
        name: format!("{}-linear", pa.name),
        y: y_names.clone(),
        u: pa.u.clone(),
        f,
        state_constraint: linear_combo(a.row(k - 1), &y_names),
        phi: pa.phi.clone(),
        cost: pa.cost.substitute(&ends),
        horizon: 3.0,
    })
    .unwrap()
}
