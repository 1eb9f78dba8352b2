//! `F = (P, Φ)` maps `y` to `(z, x)`; Problem D is Problem C written in
//! `(z, x)`, with `G = F⁻¹` evaluated by Newton's method.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::{Error, Result};
use crate::expr::{Compiled, Expr};
use crate::integrate::{GridSignal, Piece};
use crate::linalg::{dot, max_abs, Lu, Mat};
use crate::model::{ControlSystem, ProblemC, ReferenceProcess};
use crate::report::StationarityReport;
use crate::stationarity::{reconstruct_multipliers, verify_stationarity, Multipliers, Tolerances};

/// Multipliers of Problem C: `psi` is the full row `ψ_y`.
pub type MultiplierSetC = Multipliers;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub max_iter: usize,
    /// Stop when `‖F(y) − (z, x)‖∞ ≤ tol · (1 + ‖(z, x)‖∞)`.
    pub tol: f64,
    /// Reject iterates with `|det F'| ` below this.
    pub min_det: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings { max_iter: 50, tol: 1e-12, min_det: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct ChangeOfVariables {
    pub y: Vec<String>,
    /// `P`, one expression per `z` component.
    pub p: Vec<Expr>,
    pub phi: Expr,
    pub newton: NewtonSettings,
    compiled: Vec<Compiled>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub y: Vec<f64>,
    pub det: f64,
    pub iterations: usize,
}

impl ChangeOfVariables {
    pub fn new(y: Vec<String>, p: Vec<Expr>, phi: Expr) -> Result<ChangeOfVariables> {
        if p.len() + 1 != y.len() {
            return Err(Error::Invalid(format!("{} P components for {} variables", p.len(), y.len())));
        }
        let names: Vec<&str> = y.iter().map(String::as_str).collect();
        let compiled = p.iter().chain(core::iter::once(&phi)).map(|e| e.compile(&names)).collect::<Result<Vec<_>>>()?;
        Ok(ChangeOfVariables { y, p, phi, newton: NewtonSettings::default(), compiled })
    }

    /// `P` for a Problem C instance; `Φ` is its state constraint.
    pub fn for_problem(pc: &ProblemC, p: Vec<Expr>) -> Result<ChangeOfVariables> {
        ChangeOfVariables::new(pc.y.clone(), p, pc.state_constraint.clone())
    }

    /// `P(y) = (y₁, …, yₙ)`, `Φ(y) = y_{n+1}`.
    pub fn identity(y: &[String]) -> Result<ChangeOfVariables> {
        let (last, front) = y.split_last().ok_or_else(|| Error::Invalid("no variables".into()))?;
        ChangeOfVariables::new(
            y.to_vec(),
            front.iter().map(|v| Expr::Var(v.clone())).collect(),
            Expr::Var(last.clone()),
        )
    }

    /// `F(y) = A y`.
    pub fn linear(y: &[String], a: &Mat) -> Result<ChangeOfVariables> {
        let k = y.len();
        if a.rows() != k || a.cols() != k {
            return Err(Error::Invalid("linear change of variables needs a square matrix".into()));
        }
        let row = |i: usize| {
            let mut e: Option<Expr> = None;
            for (j, v) in y.iter().enumerate() {
                let term = Expr::Mul(Box::new(Expr::Const(a[(i, j)])), Box::new(Expr::Var(v.clone())));
                e = Some(match e {
                    None => term,
                    Some(prev) => Expr::Add(Box::new(prev), Box::new(term)),
                });
            }
            e.unwrap_or(Expr::Const(0.0))
        };
        ChangeOfVariables::new(y.to_vec(), (0..k - 1).map(row).collect(), row(k - 1))
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn apply(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, c) in out.iter_mut().zip(&self.compiled) {
            *o = c.eval(y)?;
        }
        Ok(())
    }

    /// `F'(y)`; row `j` is the gradient of component `j`.
    pub fn jacobian(&self, y: &[f64]) -> Result<Mat> {
        let k = self.dim();
        let mut jac = Mat::zeros(k, k);
        for (j, c) in self.compiled.iter().enumerate() {
            c.gradient(y, jac.row_mut(j))?;
        }
        Ok(jac)
    }

    pub fn component_hessian(&self, j: usize, y: &[f64]) -> Result<Mat> {
        self.compiled[j].hessian(y)
    }

    /// `F_j''(y)[a, b]`.
    pub fn second_directional(&self, j: usize, y: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
        self.compiled[j].second_directional(y, a, b)
    }
}

/// Solve `F(y) = zx` by Newton's method from `guess`.
pub fn invert_change_of_vars(cv: &ChangeOfVariables, zx: &[f64], guess: &[f64]) -> Result<Inversion> {
    let k = cv.dim();
    if zx.len() != k || guess.len() != k {
        return Err(Error::Invalid("dimension mismatch in change of variables".into()));
    }
    let s = cv.newton;
    let target = s.tol * (1.0 + max_abs(zx));
    let mut y = guess.to_vec();
    let mut f = vec![0.0; k];
    let mut residual = f64::INFINITY;
    for it in 0..=s.max_iter {
        cv.apply(&y, &mut f)?;
        for (fv, t) in f.iter_mut().zip(zx) {
            *fv -= t;
        }
        residual = max_abs(&f);
        let lu = Lu::new(&cv.jacobian(&y)?)?;
        let det = lu.det();
        if !(det.abs() >= s.min_det) {
            return Err(Error::Singular(format!("|det F'| = {:e} at y = {y:?}", det.abs())));
        }
        if residual <= target {
            return Ok(Inversion { y, det, iterations: it });
        }
        let step = lu.solve(&f);
        for (yv, d) in y.iter_mut().zip(&step) {
            *yv -= d;
        }
    }
    Err(Error::NewtonFailed { iterations: s.max_iter, residual })
}

/// `‖G'_z P'(y) + G'_x Φ'(y) − E‖∞` with `G' = F'(y)⁻¹` split by columns.
pub fn check_gzpp(cv: &ChangeOfVariables, y: &[f64]) -> Result<f64> {
    let fp = cv.jacobian(y)?;
    let g = Lu::new(&fp)?.inverse();
    let k = cv.dim();
    let mut worst: f64 = 0.0;
    for r in 0..k {
        for c in 0..k {
            // column block z of G' times rows of P', plus column x times Φ'
            let v: f64 = (0..k).map(|l| g[(r, l)] * fp[(l, c)]).sum();
            let e = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((v - e).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TubeReport {
    pub points: usize,
    pub min_abs_det: f64,
    pub max_gzpp: f64,
    /// `max ‖G(F(y)) − y‖∞`.
    pub max_round_trip: f64,
}

/// Certify invertibility at every node of `states` and at the points
/// `y ± radius·eⱼ` around it.
pub fn certify_tube(cv: &ChangeOfVariables, states: &GridSignal, radius: f64) -> Result<TubeReport> {
    let k = cv.dim();
    let mut rep = TubeReport { points: 0, min_abs_det: f64::INFINITY, max_gzpp: 0.0, max_round_trip: 0.0 };
    let mut zx = vec![0.0; k];
    for p in states.pieces() {
        for i in 0..=p.steps {
            let centre = p.node(i);
            let mut probe = |y: &[f64]| -> Result<()> {
                cv.apply(y, &mut zx)?;
                let inv = invert_change_of_vars(cv, &zx, centre)?;
                rep.points += 1;
                rep.min_abs_det = rep.min_abs_det.min(inv.det.abs());
                rep.max_gzpp = rep.max_gzpp.max(check_gzpp(cv, y)?);
                let err = inv.y.iter().zip(y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                rep.max_round_trip = rep.max_round_trip.max(err);
                Ok(())
            };
            probe(centre)?;
            if radius > 0.0 {
                for j in 0..k {
                    for sgn in [-1.0, 1.0] {
                        let mut y = centre.to_vec();
                        y[j] += sgn * radius;
                        probe(&y)?;
                    }
                }
            }
        }
    }
    Ok(rep)
}

/// Problem C in the coordinates `(z, x) = F(y)`:
/// `ż = P'(G) f(G, u)`, `ẋ = Φ'(G) f(G, u)`, `x ≥ 0`,
/// cost `J(G(z₀, x₀), G(z_T, x_T))`. `G` is evaluated by Newton's method,
/// warm-started from the previous solution.
#[derive(Debug)]
pub struct ProblemD {
    pub source: ProblemC,
    pub cv: ChangeOfVariables,
    names: Vec<String>,
    warm: RefCell<Vec<f64>>,
}

impl Clone for ProblemD {
    fn clone(&self) -> Self {
        ProblemD {
            source: self.source.clone(),
            cv: self.cv.clone(),
            names: self.names.clone(),
            warm: RefCell::new(self.warm.borrow().clone()),
        }
    }
}

pub fn build_problem_d(pc: &ProblemC, cv: &ChangeOfVariables) -> Result<ProblemD> {
    if cv.dim() != pc.y.len() {
        return Err(Error::Invalid("change of variables does not match the state dimension".into()));
    }
    let n = cv.dim() - 1;
    let mut names: Vec<String> = (1..=n).map(|i| format!("z{i}")).collect();
    if n == 1 {
        names[0] = "z".into();
    }
    names.push("x".into());
    Ok(ProblemD { source: pc.clone(), cv: cv.clone(), names, warm: RefCell::new(vec![0.0; n + 1]) })
}

impl ProblemD {
    pub fn set_warm_start(&self, y: &[f64]) {
        self.warm.borrow_mut().copy_from_slice(y);
    }

    /// `G(s)`.
    pub fn pull_back(&self, s: &[f64]) -> Result<Vec<f64>> {
        let guess = self.warm.borrow().clone();
        let inv = invert_change_of_vars(&self.cv, s, &guess)?;
        self.warm.borrow_mut().copy_from_slice(&inv.y);
        Ok(inv.y)
    }

    /// Push a Problem C reference forward node by node: `s(t) = F(y⁰(t))`.
    pub fn transport_reference(&self, w0_y: &ReferenceProcess) -> Result<ReferenceProcess> {
        let k = self.cv.dim();
        let mut out = vec![0.0; k];
        let pieces = w0_y
            .state()
            .pieces()
            .iter()
            .map(|p| {
                let mut vals = Vec::with_capacity(p.values().len());
                for i in 0..=p.steps {
                    self.cv.apply(p.node(i), &mut out)?;
                    vals.extend_from_slice(&out);
                }
                Piece::new(p.t0, p.t1, p.steps, k, vals)
            })
            .collect::<Result<Vec<_>>>()?;
        self.set_warm_start(w0_y.initial_state());
        ReferenceProcess::from_states(self, w0_y.controls().clone(), GridSignal::new(pieces)?)
    }

    fn inverse_jacobian(&self, y: &[f64]) -> Result<(Mat, Mat)> {
        let fp = self.cv.jacobian(y)?;
        let inv = Lu::new(&fp)?.inverse();
        Ok((fp, inv))
    }
}

impl ControlSystem for ProblemD {
    fn state_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn control_names(&self) -> Vec<String> {
        self.source.control_names()
    }

    fn constraint_count(&self) -> usize {
        self.source.constraint_count()
    }

    fn horizon(&self) -> f64 {
        self.source.horizon()
    }

    fn dynamics(&self, s: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        let y = self.pull_back(s)?;
        let mut f = vec![0.0; y.len()];
        self.source.dynamics(&y, u, &mut f)?;
        let fp = self.cv.jacobian(&y)?;
        out.copy_from_slice(&fp.mul_vec(&f));
        Ok(())
    }

    fn dynamics_jacobian(&self, s: &[f64], u: &[f64], value: &mut [f64], ds: &mut Mat, du: &mut Mat) -> Result<()> {
        let y = self.pull_back(s)?;
        let k = y.len();
        let m = u.len();
        let mut f = vec![0.0; k];
        let mut fy = Mat::zeros(k, k);
        let mut fu = Mat::zeros(k, m);
        self.source.dynamics_jacobian(&y, u, &mut f, &mut fy, &mut fu)?;
        let (fp, inv) = self.inverse_jacobian(&y)?;
        value.copy_from_slice(&fp.mul_vec(&f));
        // d/dy (F_j' f) = fᵀ F_j'' + F_j' f_y, then chain through G' = F'⁻¹
        let mut dy = Mat::zeros(k, k);
        for j in 0..k {
            let hess = self.cv.component_hessian(j, &y)?;
            let a = hess.vec_mul(&f);
            let b = fy.vec_mul(fp.row(j));
            for (c, (av, bv)) in dy.row_mut(j).iter_mut().zip(a.iter().zip(&b)) {
                *c = av + bv;
            }
        }
        let chained = dy.mul(&inv);
        for j in 0..k {
            ds.row_mut(j).copy_from_slice(chained.row(j));
        }
        let fpu = fp.mul(&fu);
        for j in 0..k {
            du.row_mut(j).copy_from_slice(fpu.row(j));
        }
        Ok(())
    }

    fn control_constraints(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        self.source.control_constraints(u, out)
    }

    fn control_constraint_jacobian(&self, u: &[f64], value: &mut [f64], du: &mut Mat) -> Result<()> {
        self.source.control_constraint_jacobian(u, value, du)
    }

    fn cost(&self, s0: &[f64], s_t: &[f64]) -> Result<f64> {
        let y0 = self.pull_back(s0)?;
        let y_t = self.pull_back(s_t)?;
        self.source.cost(&y0, &y_t)
    }

    fn cost_gradient(&self, s0: &[f64], s_t: &[f64], g0: &mut [f64], g_t: &mut [f64]) -> Result<f64> {
        let y0 = self.pull_back(s0)?;
        let y_t = self.pull_back(s_t)?;
        let k = y0.len();
        let mut gy0 = vec![0.0; k];
        let mut gy_t = vec![0.0; k];
        let v = self.source.cost_gradient(&y0, &y_t, &mut gy0, &mut gy_t)?;
        g0.copy_from_slice(&self.inverse_jacobian(&y0)?.1.vec_mul(&gy0));
        g_t.copy_from_slice(&self.inverse_jacobian(&y_t)?.1.vec_mul(&gy_t));
        Ok(v)
    }

    fn state_constraint(&self, s: &[f64]) -> Result<f64> {
        Ok(s[s.len() - 1])
    }

    fn state_constraint_gradient(&self, s: &[f64], out: &mut [f64]) -> Result<f64> {
        out.iter_mut().for_each(|o| *o = 0.0);
        let last = out.len() - 1;
        out[last] = 1.0;
        Ok(s[last])
    }
}

/// `ψ_y = ψ_z P'(y⁰) + ψ̃ Φ'(y⁰)`; the measure, `h` and `c` carry over.
pub fn map_multipliers_d_to_c(
    mult_d: &Multipliers,
    w0_y: &ReferenceProcess,
    cv: &ChangeOfVariables,
) -> Result<MultiplierSetC> {
    let k = cv.dim();
    if mult_d.psi.dim() != k {
        return Err(Error::Invalid("multiplier dimension does not match the change of variables".into()));
    }
    let pieces = mult_d
        .psi
        .pieces()
        .iter()
        .zip(w0_y.state().pieces())
        .map(|(pp, sp)| {
            if pp.steps != sp.steps {
                return Err(Error::Invalid("multipliers and reference use different grids".into()));
            }
            let mut vals = Vec::with_capacity(pp.values().len());
            for i in 0..=pp.steps {
                vals.extend_from_slice(&cv.jacobian(sp.node(i))?.vec_mul(pp.node(i)));
            }
            Piece::new(pp.t0, pp.t1, pp.steps, k, vals)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Multipliers { psi: GridSignal::new(pieces)?, ..mult_d.clone() })
}

/// Re-check every stationarity condition natively in `y`.
pub fn verify_theorem_c(
    pc: &ProblemC,
    w0_y: &ReferenceProcess,
    mult_c: &MultiplierSetC,
    tol: &Tolerances,
) -> Result<StationarityReport> {
    verify_stationarity(pc, w0_y, mult_c, tol)
}

/// Result of the Problem C pipeline.
#[derive(Debug, Clone)]
pub struct ProblemCRun {
    pub problem_d: ProblemD,
    pub reference_d: ReferenceProcess,
    pub multipliers_d: Multipliers,
    pub multipliers_c: MultiplierSetC,
    pub report: StationarityReport,
}

/// Transport the reference to Problem D, reconstruct there, map the
/// multipliers back and verify in `y`.
pub fn verify_problem_c(
    pc: &ProblemC,
    cv: &ChangeOfVariables,
    w0_y: &ReferenceProcess,
    tol: &Tolerances,
) -> Result<ProblemCRun> {
    let problem_d = build_problem_d(pc, cv)?;
    let reference_d = problem_d.transport_reference(w0_y)?;
    let multipliers_d = reconstruct_multipliers(&problem_d, &reference_d)?;
    let multipliers_c = map_multipliers_d_to_c(&multipliers_d, w0_y, cv)?;
    let report = verify_theorem_c(pc, w0_y, &multipliers_c, tol)?;
    Ok(ProblemCRun { problem_d, reference_d, multipliers_d, multipliers_c, report })
}

/// Symmetric-cancellation check at one point: with `ȳ` any direction,
/// `Σⱼ ψⱼ F_j''(y)[f, ȳ]` from the hyper-dual directional derivative must
/// equal `Σⱼ ψⱼ fᵀ F_j''(y) ȳ` from the assembled Hessians and the same
/// quantity with the directions swapped. Returns the larger discrepancy.
pub fn second_derivative_symmetry(
    cv: &ChangeOfVariables,
    psi: &[f64],
    y: &[f64],
    f: &[f64],
    ybar: &[f64],
) -> Result<f64> {
    let mut directional = 0.0;
    let mut swapped = 0.0;
    let mut assembled = 0.0;
    for (j, pj) in psi.iter().enumerate() {
        directional += pj * cv.second_directional(j, y, f, ybar)?;
        swapped += pj * cv.second_directional(j, y, ybar, f)?;
        assembled += pj * dot(&cv.component_hessian(j, y)?.vec_mul(f), ybar);
    }
    Ok((directional - assembled).abs().max((swapped - assembled).abs()))
}
