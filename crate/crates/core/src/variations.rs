//! Variations concentrated on the boundary arc.
//!
//! A variation prescribes `x̄ = κ` on `[t1, t2]`. There the control
//! variation `ū = v g_u` with `v = (κ̇ − g_z z̄ − g_x κ)/|g_u|²` keeps the
//! linearized constraint equation satisfied and `z̄` solves the linearized
//! `z`-equation from `z̄(t1) = 0`. Off the arc `ū = 0` and `(z̄, x̄)` follow
//! the homogeneous linearized system, backward from `t1` and forward from
//! `t2`.
//!
//! Variations live on a grid twice as fine as the reference, so that a
//! forward RK4 sweep on the reference grid only evaluates `ū` at nodes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::{Compiled, Expr};
use crate::integrate::{rk4_integrate, Direction, GridSignal, Piece};
use crate::linalg::{dot, Mat};
use crate::model::{integrate_unchecked, ControlLaw, ControlSystem, ReferenceProcess, SharedControl};
use crate::stationarity::{Multipliers, ORDER_ONE_THRESHOLD};

/// A scalar function on the arc with its derivative.
pub trait Kappa {
    fn value(&self, t: f64) -> Result<f64>;
    fn rate(&self, t: f64) -> Result<f64>;

    fn describe(&self) -> String {
        String::from("kappa")
    }
}

/// `κ` given as an expression in `t`; the rate comes from dual numbers.
#[derive(Debug, Clone)]
pub struct ExprKappa {
    pub expr: Expr,
    compiled: Compiled,
}

impl ExprKappa {
    pub fn new(expr: Expr) -> Result<ExprKappa> {
        let compiled = expr.compile(&["t"])?;
        Ok(ExprKappa { expr, compiled })
    }
}

impl Kappa for ExprKappa {
    fn value(&self, t: f64) -> Result<f64> {
        self.compiled.eval(&[t])
    }

    fn rate(&self, t: f64) -> Result<f64> {
        Ok(self.compiled.directional(&[t], &[1.0])?.1)
    }

    fn describe(&self) -> String {
        format!("{}", self.expr)
    }
}

/// `κ` sampled on a grid; values are linearly interpolated and the rate
/// comes from finite differences at the nodes.
#[derive(Debug, Clone)]
pub struct GridKappa {
    pub values: Piece,
    rates: Piece,
}

impl GridKappa {
    pub fn new(values: Piece) -> Result<GridKappa> {
        if values.dim != 1 {
            return Err(Error::Invalid("kappa grid must be scalar".into()));
        }
        let rates = values.derivative();
        Ok(GridKappa { values, rates })
    }
}

impl Kappa for GridKappa {
    fn value(&self, t: f64) -> Result<f64> {
        let mut o = [0.0];
        self.values.interp_into(t, &mut o);
        Ok(o[0])
    }

    fn rate(&self, t: f64) -> Result<f64> {
        let mut o = [0.0];
        self.rates.interp_into(t, &mut o);
        Ok(o[0])
    }

    fn describe(&self) -> String {
        format!("grid[{}]", self.values.steps)
    }
}

/// Tent `max(0, 1 − |t − centre|/half_width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub centre: f64,
    pub half_width: f64,
}

impl Kappa for Bump {
    fn value(&self, t: f64) -> Result<f64> {
        Ok((1.0 - (t - self.centre).abs() / self.half_width).max(0.0))
    }

    fn rate(&self, t: f64) -> Result<f64> {
        let d = t - self.centre;
        Ok(if d.abs() >= self.half_width || d == 0.0 { 0.0 } else { -d.signum() / self.half_width })
    }

    fn describe(&self) -> String {
        format!("bump(centre = {}, half_width = {})", self.centre, self.half_width)
    }
}

/// `c₀ + Σₖ aₖ sin(kπs) + bₖ cos(kπs)` with `s = (t − t1)/(t2 − t1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigKappa {
    pub c0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub t1: f64,
    pub t2: f64,
}

impl TrigKappa {
    /// Smallest value `c₀ − Σ(|aₖ| + |bₖ|)` can reach; positive means `κ > 0`.
    pub fn lower_bound(&self) -> f64 {
        self.c0 - self.a.iter().chain(&self.b).map(|v| v.abs()).sum::<f64>()
    }
}

impl Kappa for TrigKappa {
    fn value(&self, t: f64) -> Result<f64> {
        let s = (t - self.t1) / (self.t2 - self.t1);
        let mut v = self.c0;
        for (k, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            let w = (k + 1) as f64 * core::f64::consts::PI;
            v += a * libm::sin(w * s) + b * libm::cos(w * s);
        }
        Ok(v)
    }

    fn rate(&self, t: f64) -> Result<f64> {
        let len = self.t2 - self.t1;
        let s = (t - self.t1) / len;
        let mut v = 0.0;
        for (k, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            let w = (k + 1) as f64 * core::f64::consts::PI;
            v += w * (a * libm::cos(w * s) - b * libm::sin(w * s));
        }
        Ok(v / len)
    }

    fn describe(&self) -> String {
        format!("trig(c0 = {}, a = {:?}, b = {:?})", self.c0, self.a, self.b)
    }
}

/// A variation on the fine grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Variation {
    /// `(z̄, x̄)`.
    pub state: GridSignal,
    /// `ū`, zero off the arc.
    pub control: GridSignal,
    /// `κ` on the arc nodes.
    pub kappa: Piece,
}

impl Variation {
    pub fn initial(&self) -> &[f64] {
        self.state.piece(0).first()
    }

    pub fn terminal(&self) -> &[f64] {
        self.state.piece(2).last()
    }

    /// `x̄` at the junctions.
    pub fn junction_values(&self) -> [f64; 2] {
        let last = self.state.dim() - 1;
        [self.state.piece(1).first()[last], self.state.piece(1).last()[last]]
    }
}

struct Linearization {
    s: Vec<f64>,
    u: Vec<f64>,
    value: Vec<f64>,
    fs: Mat,
    fu: Mat,
}

impl Linearization {
    fn new(sys: &dyn ControlSystem) -> Linearization {
        let (nn, m) = (sys.state_dim(), sys.control_dim());
        Linearization {
            s: vec![0.0; nn],
            u: vec![0.0; m],
            value: vec![0.0; nn],
            fs: Mat::zeros(nn, nn),
            fu: Mat::zeros(nn, m),
        }
    }

    fn at(&mut self, sys: &dyn ControlSystem, w0: &ReferenceProcess, k: usize, t: f64) -> Result<()> {
        w0.state_in(k, t, &mut self.s);
        w0.control_at(k, t, &mut self.u)?;
        sys.dynamics_jacobian(&self.s, &self.u, &mut self.value, &mut self.fs, &mut self.fu)
    }

    /// `ū` on the arc given `z̄`, `κ` and `κ̇`.
    fn arc_control(&self, zbar: &[f64], kappa: f64, kappa_rate: f64, out: &mut [f64]) -> Result<()> {
        let n = zbar.len();
        let gu = self.fu.row(n);
        let gu2 = dot(gu, gu);
        if !(libm::sqrt(gu2) > ORDER_ONE_THRESHOLD) {
            return Err(Error::Assumption(format!("|g_u| = {:e} on the boundary arc", libm::sqrt(gu2))));
        }
        let gs = self.fs.row(n);
        let v = (kappa_rate - dot(&gs[..n], zbar) - gs[n] * kappa) / gu2;
        for (o, g) in out.iter_mut().zip(gu) {
            *o = v * g;
        }
        Ok(())
    }
}

fn zero_piece(t0: f64, t1: f64, steps: usize, dim: usize) -> Result<Piece> {
    Piece::new(t0, t1, steps, dim, vec![0.0; (steps + 1) * dim])
}

/// Build the variation with `x̄ = κ` on the arc. The variation grid has
/// `2·w0.steps` cells per interval.
pub fn build_variation(sys: &dyn ControlSystem, w0: &ReferenceProcess, kappa: &dyn Kappa) -> Result<Variation> {
    let nn = sys.state_dim();
    let n = nn - 1;
    let m = sys.control_dim();
    let fine = 2 * w0.steps;
    let [_, t1, t2, horizon] = w0.breaks();
    let mut lin = Linearization::new(sys);
    let mut ubar = vec![0.0; m];

    let arc_z = rk4_integrate(
        |t, z, dz| {
            lin.at(sys, w0, 1, t)?;
            let kap = kappa.value(t)?;
            lin.arc_control(z, kap, kappa.rate(t)?, &mut ubar)?;
            for j in 0..n {
                dz[j] = dot(&lin.fs.row(j)[..n], z) + lin.fs.row(j)[n] * kap + dot(lin.fu.row(j), &ubar);
            }
            Ok(())
        },
        &vec![0.0; n],
        t1,
        t2,
        fine,
        Direction::Forward,
    )?;
    let mut arc_state = Vec::with_capacity((fine + 1) * nn);
    let mut arc_control = Vec::with_capacity((fine + 1) * m);
    let mut kvals = Vec::with_capacity(fine + 1);
    for i in 0..=fine {
        let t = arc_z.time(i);
        let z = arc_z.node(i);
        let kap = kappa.value(t)?;
        lin.at(sys, w0, 1, t)?;
        lin.arc_control(z, kap, kappa.rate(t)?, &mut ubar)?;
        arc_state.extend_from_slice(z);
        arc_state.push(kap);
        arc_control.extend_from_slice(&ubar);
        kvals.push(kap);
    }
    let arc_state = Piece::new(t1, t2, fine, nn, arc_state)?;

    let mut homogeneous = |k: usize, start: &[f64], a: f64, b: f64, dir: Direction| {
        rk4_integrate(
            |t, w, dw| {
                lin.at(sys, w0, k, t)?;
                dw.copy_from_slice(&lin.fs.mul_vec(w));
                Ok(())
            },
            start,
            a,
            b,
            fine,
            dir,
        )
    };
    let first = homogeneous(0, arc_state.first(), 0.0, t1, Direction::Backward)?;
    let third = homogeneous(2, arc_state.last(), t2, horizon, Direction::Forward)?;

    Ok(Variation {
        state: GridSignal::new(vec![first, arc_state, third])?,
        control: GridSignal::new(vec![
            zero_piece(0.0, t1, fine, m)?,
            Piece::new(t1, t2, fine, m, arc_control)?,
            zero_piece(t2, horizon, fine, m)?,
        ])?,
        kappa: Piece::new(t1, t2, fine, 1, kvals)?,
    })
}

/// `max |w̄' − F_s w̄ − F_u ū|` over the fine nodes, derivative by finite
/// differences.
pub fn variational_residual(sys: &dyn ControlSystem, w0: &ReferenceProcess, var: &Variation) -> Result<f64> {
    let mut lin = Linearization::new(sys);
    let d = var.state.derivative();
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        let p = var.state.piece(k);
        let up = var.control.piece(k);
        for i in 0..=p.steps {
            lin.at(sys, w0, k, p.time(i))?;
            let a = lin.fs.mul_vec(p.node(i));
            let b = lin.fu.mul_vec(up.node(i));
            for j in 0..p.dim {
                worst = worst.max((d.piece(k).node(i)[j] - a[j] - b[j]).abs());
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairingResidual {
    /// `ψ(T) w̄(T) − ψ(0) w̄(0)`.
    pub lhs: f64,
    /// `−Δμ(t1) x̄(t1) − Δμ(t2) x̄(t2) − ∫μ̇ x̄ + ∫ h φ' ū`.
    pub rhs: f64,
    pub abs: f64,
    /// `abs / max(1, |lhs|, |rhs|)`.
    pub rel: f64,
}

/// `∫_{t1}^{t2} μ̇ κ` by Simpson on the reference arc grid.
fn density_pairing(mult: &Multipliers, kappa: &dyn Kappa) -> Result<f64> {
    let arc = mult.density.piece(1);
    let mut vals = Vec::with_capacity(arc.steps + 1);
    for i in 0..=arc.steps {
        vals.push(arc.node(i)[0] * kappa.value(arc.time(i))?);
    }
    Ok(Piece::new(arc.t0, arc.t1, arc.steps, 1, vals)?.simpson(0))
}

/// Both sides of the pairing identity for `var` built from `kappa`.
pub fn pairing_identity_residual(
    sys: &dyn ControlSystem,
    w0: &ReferenceProcess,
    mult: &Multipliers,
    var: &Variation,
    kappa: &dyn Kappa,
) -> Result<PairingResidual> {
    let psi = &mult.psi;
    let lhs = dot(psi.piece(2).last(), var.terminal()) - dot(psi.piece(0).first(), var.initial());
    let [x1, x2] = var.junction_values();

    // ∫ h φ' ū over the outer intervals, Simpson on the reference grid
    let d = sys.constraint_count();
    let m = sys.control_dim();
    let mut phi = vec![0.0; d];
    let mut phi_u = Mat::zeros(d, m);
    let mut u = vec![0.0; m];
    let mut ub = vec![0.0; m];
    let mut control_term = 0.0;
    for k in [0, 2] {
        let hp = mult.h.piece(k);
        let mut vals = Vec::with_capacity(hp.steps + 1);
        for i in 0..=hp.steps {
            let t = hp.time(i);
            w0.control_at(k, t, &mut u)?;
            sys.control_constraint_jacobian(&u, &mut phi, &mut phi_u)?;
            var.control.piece(k).interp_into(t, &mut ub);
            let hphi = phi_u.vec_mul(hp.node(i));
            vals.push(dot(&hphi, &ub));
        }
        control_term += Piece::new(hp.t0, hp.t1, hp.steps, 1, vals)?.simpson(0);
    }
    let rhs = -mult.atoms[0] * x1 - mult.atoms[1] * x2 - density_pairing(mult, kappa)? + control_term;
    let abs = (lhs - rhs).abs();
    Ok(PairingResidual { lhs, rhs, abs, rel: abs / 1f64.max(lhs.abs()).max(rhs.abs()) })
}

/// `J'(w⁰) w̄` from the endpoint values of the variation.
pub fn directional_derivative(sys: &dyn ControlSystem, w0: &ReferenceProcess, var: &Variation) -> Result<f64> {
    let nn = sys.state_dim();
    let mut g0 = vec![0.0; nn];
    let mut g_t = vec![0.0; nn];
    sys.cost_gradient(w0.initial_state(), w0.final_state(), &mut g0, &mut g_t)?;
    Ok(dot(&g0, var.initial()) + dot(&g_t, var.terminal()))
}

/// `Δμ(t1) κ(t1) + Δμ(t2) κ(t2) + ∫ μ̇ κ`.
pub fn measure_pairing(w0: &ReferenceProcess, mult: &Multipliers, kappa: &dyn Kappa) -> Result<f64> {
    Ok(mult.atoms[0] * kappa.value(w0.t1)? + mult.atoms[1] * kappa.value(w0.t2)? + density_pairing(mult, kappa)?)
}

/// `u⁰ + ε ū`, with `ū` read from the fine variation grid.
struct PerturbedControl {
    base: SharedControl,
    delta: GridSignal,
    eps: f64,
}

impl ControlLaw for PerturbedControl {
    fn control_dim(&self) -> usize {
        self.base.control_dim()
    }

    fn control(&self, piece: usize, t: f64, out: &mut [f64]) -> Result<()> {
        self.base.control(piece, t, out)?;
        let mut d = vec![0.0; out.len()];
        self.delta.piece(piece).interp_into(t, &mut d);
        for (o, dv) in out.iter_mut().zip(&d) {
            *o += self.eps * dv;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Perturbation {
    pub eps: f64,
    pub process: ReferenceProcess,
    /// `min Φ` over the outer intervals without the junction nodes.
    pub min_outer: f64,
    pub min_arc: f64,
    /// `max φ(u_ε)` over the fine nodes.
    pub max_control_constraint: f64,
    /// `J(w_ε) − J(w⁰)`.
    pub cost_gap: f64,
}

impl Perturbation {
    pub fn feasible(&self) -> bool {
        self.min_outer > 0.0 && self.min_arc >= 0.0 && self.max_control_constraint <= 0.0
    }
}

/// Integrate the nonlinear system under `u⁰ + εū` from `s⁰(0) + εw̄(0)`.
pub fn perturb_process(
    sys: &dyn ControlSystem,
    w0: &ReferenceProcess,
    var: &Variation,
    eps: f64,
) -> Result<Perturbation> {
    let law = PerturbedControl { base: w0.controls().clone(), delta: var.control.clone(), eps };
    let law: SharedControl = alloc::sync::Arc::new(law);
    let s_init: Vec<f64> = w0.initial_state().iter().zip(var.initial()).map(|(s, d)| s + eps * d).collect();
    let process = integrate_unchecked(sys, law.clone(), w0.t1, w0.t2, &s_init, w0.steps)?;
    let c = process.constraint_signal(sys)?;
    let steps = w0.steps;
    let outer = (0..steps).map(|i| c.piece(0).node(i)[0]).chain((1..=steps).map(|i| c.piece(2).node(i)[0]));
    let min_outer = outer.fold(f64::INFINITY, f64::min);
    let arc = c.piece(1);
    let min_arc = (0..=arc.steps).map(|i| arc.node(i)[0]).fold(f64::INFINITY, f64::min);

    let mut u = vec![0.0; sys.control_dim()];
    let mut phi = vec![0.0; sys.constraint_count()];
    let mut max_phi = f64::NEG_INFINITY;
    for (k, p) in var.control.pieces().iter().enumerate() {
        for i in 0..=p.steps {
            law.control(k, p.time(i), &mut u)?;
            sys.control_constraints(&u, &mut phi)?;
            max_phi = phi.iter().fold(max_phi, |a, b| a.max(*b));
        }
    }
    let j0 = sys.cost(w0.initial_state(), w0.final_state())?;
    let je = sys.cost(process.initial_state(), process.final_state())?;
    Ok(Perturbation { eps, process, min_outer, min_arc, max_control_constraint: max_phi, cost_gap: je - j0 })
}

/// Default nonnegative family: tents of half-widths `|Δ₂|/4` and `|Δ₂|/16`
/// centred on a uniform grid of `centres` points over the arc, plus tents
/// of half-width `|Δ₂|/4` sitting on each junction.
pub fn bump_family(t1: f64, t2: f64, centres: usize) -> Vec<Bump> {
    let len = t2 - t1;
    let mut out = Vec::new();
    for half_width in [len / 4.0, len / 16.0] {
        for i in 0..centres {
            let centre = t1 + len * (i as f64 + 0.5) / centres as f64;
            out.push(Bump { centre, half_width });
        }
    }
    out.push(Bump { centre: t1, half_width: len / 4.0 });
    out.push(Bump { centre: t2, half_width: len / 4.0 });
    out
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DjReport {
    pub values: Vec<f64>,
    pub min_value: f64,
    pub argmin: usize,
    pub argmin_label: String,
    /// `min_value ≥ −tol`.
    pub nonnegative: bool,
}

/// Evaluate the measure pairing over a family of `κ ≥ 0`. A negative value
/// certifies that the first-order necessary condition fails.
pub fn check_dj_inequality(
    w0: &ReferenceProcess,
    mult: &Multipliers,
    family: &[&dyn Kappa],
    tol: f64,
) -> Result<DjReport> {
    if family.is_empty() {
        return Err(Error::Invalid("empty kappa family".into()));
    }
    let values = family.iter().map(|k| measure_pairing(w0, mult, *k)).collect::<Result<Vec<_>>>()?;
    let (argmin, min_value) =
        values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
    Ok(DjReport { argmin_label: family[argmin].describe(), nonnegative: min_value >= -tol, values, min_value, argmin })
}

/// Box a concrete `κ` list for [`check_dj_inequality`].
pub fn as_family<K: Kappa>(ks: &[K]) -> Vec<&dyn Kappa> {
    ks.iter().map(|k| k as &dyn Kappa).collect()
}
