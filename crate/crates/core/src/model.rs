//! Problem descriptions, reference processes and the standing assumptions.
//!
//! Every problem is seen through [`ControlSystem`]: an autonomous system
//! `ṡ = F(s, u)` with state `s ∈ Rᴺ`, control constraints `φ(u) ≤ 0`, an
//! endpoint cost `J(s(0), s(T))` and a scalar state constraint `Φ(s) ≥ 0`.
//! For [`ProblemA`] the state is `s = (z, x)` and `Φ(s) = x`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::{Compiled, Expr};
use crate::integrate::{rk4_integrate, Direction, GridSignal, Piece, Side};
use crate::linalg::{convex_hull_distance, dot, norm, Mat};

pub trait ControlSystem {
    fn state_names(&self) -> Vec<String>;
    fn control_names(&self) -> Vec<String>;
    fn constraint_count(&self) -> usize;
    fn horizon(&self) -> f64;

    fn state_dim(&self) -> usize {
        self.state_names().len()
    }

    fn control_dim(&self) -> usize {
        self.control_names().len()
    }

    fn dynamics(&self, s: &[f64], u: &[f64], out: &mut [f64]) -> Result<()>;

    /// Value of `F` plus `∂F/∂s` (N×N) and `∂F/∂u` (N×m).
    fn dynamics_jacobian(&self, s: &[f64], u: &[f64], value: &mut [f64], ds: &mut Mat, du: &mut Mat) -> Result<()>;

    fn control_constraints(&self, u: &[f64], out: &mut [f64]) -> Result<()>;

    /// Values of `φ` plus their gradients as rows of `du` (d×m).
    fn control_constraint_jacobian(&self, u: &[f64], value: &mut [f64], du: &mut Mat) -> Result<()>;

    fn cost(&self, s0: &[f64], s_t: &[f64]) -> Result<f64>;

    /// Returns `J` and writes its gradients with respect to both endpoints.
    fn cost_gradient(&self, s0: &[f64], s_t: &[f64], g0: &mut [f64], g_t: &mut [f64]) -> Result<f64>;

    fn state_constraint(&self, s: &[f64]) -> Result<f64>;

    /// Returns `Φ(s)` and writes `Φ'(s)`.
    fn state_constraint_gradient(&self, s: &[f64], out: &mut [f64]) -> Result<f64>;
}

/// Expression-backed system shared by [`ProblemA`] and [`ProblemC`].
#[derive(Debug, Clone)]
struct ExprSystem {
    states: Vec<String>,
    controls: Vec<String>,
    horizon: f64,
    dynamics: Vec<Compiled>,
    constraints: Vec<Compiled>,
    cost: Compiled,
    state_constraint: Compiled,
}

/// Names used for endpoint values in cost expressions.
pub fn endpoint_names(states: &[String]) -> Vec<String> {
    states.iter().map(|s| format!("{s}_0")).chain(states.iter().map(|s| format!("{s}_T"))).collect()
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

impl ExprSystem {
    fn new(
        states: Vec<String>,
        controls: Vec<String>,
        dynamics: &[Expr],
        constraints: &[Expr],
        cost: &Expr,
        state_constraint: &Expr,
        horizon: f64,
    ) -> Result<ExprSystem> {
        if dynamics.len() != states.len() {
            return Err(Error::Invalid(format!("{} dynamics expressions for {} states", dynamics.len(), states.len())));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Invalid("horizon must be positive".into()));
        }
        let su: Vec<String> = states.iter().chain(&controls).cloned().collect();
        let su = refs(&su);
        let ends = endpoint_names(&states);
        let compile_all = |es: &[Expr], vars: &[&str]| es.iter().map(|e| e.compile(vars)).collect::<Result<Vec<_>>>();
        Ok(ExprSystem {
            dynamics: compile_all(dynamics, &su)?,
            constraints: compile_all(constraints, &refs(&controls))?,
            cost: cost.compile(&refs(&ends))?,
            state_constraint: state_constraint.compile(&refs(&states))?,
            states,
            controls,
            horizon,
        })
    }

    fn args(&self, s: &[f64], u: &[f64]) -> Vec<f64> {
        s.iter().chain(u).copied().collect()
    }
}

impl ControlSystem for ExprSystem {
    fn state_names(&self) -> Vec<String> {
        self.states.clone()
    }

    fn control_names(&self) -> Vec<String> {
        self.controls.clone()
    }

    fn state_dim(&self) -> usize {
        self.states.len()
    }

    fn control_dim(&self) -> usize {
        self.controls.len()
    }

    fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn dynamics(&self, s: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        let x = self.args(s, u);
        for (o, f) in out.iter_mut().zip(&self.dynamics) {
            *o = f.eval(&x)?;
        }
        Ok(())
    }

    fn dynamics_jacobian(&self, s: &[f64], u: &[f64], value: &mut [f64], ds: &mut Mat, du: &mut Mat) -> Result<()> {
        let x = self.args(s, u);
        let n = s.len();
        let mut g = vec![0.0; x.len()];
        for (j, f) in self.dynamics.iter().enumerate() {
            value[j] = f.gradient(&x, &mut g)?;
            ds.row_mut(j).copy_from_slice(&g[..n]);
            du.row_mut(j).copy_from_slice(&g[n..]);
        }
        Ok(())
    }

    fn control_constraints(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, c) in out.iter_mut().zip(&self.constraints) {
            *o = c.eval(u)?;
        }
        Ok(())
    }

    fn control_constraint_jacobian(&self, u: &[f64], value: &mut [f64], du: &mut Mat) -> Result<()> {
        for (j, c) in self.constraints.iter().enumerate() {
            value[j] = c.gradient(u, du.row_mut(j))?;
        }
        Ok(())
    }

    fn cost(&self, s0: &[f64], s_t: &[f64]) -> Result<f64> {
        let x: Vec<f64> = s0.iter().chain(s_t).copied().collect();
        self.cost.eval(&x)
    }

    fn cost_gradient(&self, s0: &[f64], s_t: &[f64], g0: &mut [f64], g_t: &mut [f64]) -> Result<f64> {
        let x: Vec<f64> = s0.iter().chain(s_t).copied().collect();
        let mut g = vec![0.0; x.len()];
        let v = self.cost.gradient(&x, &mut g)?;
        let n = s0.len();
        g0.copy_from_slice(&g[..n]);
        g_t.copy_from_slice(&g[n..]);
        Ok(v)
    }

    fn state_constraint(&self, s: &[f64]) -> Result<f64> {
        self.state_constraint.eval(s)
    }

    fn state_constraint_gradient(&self, s: &[f64], out: &mut [f64]) -> Result<f64> {
        self.state_constraint.gradient(s, out)
    }
}

macro_rules! delegate_system {
    ($ty:ty) => {
        impl ControlSystem for $ty {
            fn state_names(&self) -> Vec<String> {
                self.sys.state_names()
            }
            fn control_names(&self) -> Vec<String> {
                self.sys.control_names()
            }
            fn state_dim(&self) -> usize {
                self.sys.state_dim()
            }
            fn control_dim(&self) -> usize {
                self.sys.control_dim()
            }
            fn constraint_count(&self) -> usize {
                self.sys.constraint_count()
            }
            fn horizon(&self) -> f64 {
                self.sys.horizon()
            }
            fn dynamics(&self, s: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
                self.sys.dynamics(s, u, out)
            }
            fn dynamics_jacobian(
                &self,
                s: &[f64],
                u: &[f64],
                value: &mut [f64],
                ds: &mut Mat,
                du: &mut Mat,
            ) -> Result<()> {
                self.sys.dynamics_jacobian(s, u, value, ds, du)
            }
            fn control_constraints(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
                self.sys.control_constraints(u, out)
            }
            fn control_constraint_jacobian(&self, u: &[f64], value: &mut [f64], du: &mut Mat) -> Result<()> {
                self.sys.control_constraint_jacobian(u, value, du)
            }
            fn cost(&self, s0: &[f64], s_t: &[f64]) -> Result<f64> {
                self.sys.cost(s0, s_t)
            }
            fn cost_gradient(&self, s0: &[f64], s_t: &[f64], g0: &mut [f64], g_t: &mut [f64]) -> Result<f64> {
                self.sys.cost_gradient(s0, s_t, g0, g_t)
            }
            fn state_constraint(&self, s: &[f64]) -> Result<f64> {
                self.sys.state_constraint(s)
            }
            fn state_constraint_gradient(&self, s: &[f64], out: &mut [f64]) -> Result<f64> {
                self.sys.state_constraint_gradient(s, out)
            }
        }
    };
}

/// `ż = f(z,x,u)`, `ẋ = g(z,x,u)`, `φ(u) ≤ 0`, `x ≥ 0`, `J(z₀, z_T, x₀, x_T) → min`.
///
/// The cost refers to endpoint values as `<name>_0` and `<name>_T`.
#[derive(Debug, Clone)]
pub struct ProblemA {
    pub name: String,
    pub z: Vec<String>,
    pub x: String,
    pub u: Vec<String>,
    pub f: Vec<Expr>,
    pub g: Expr,
    pub phi: Vec<Expr>,
    pub cost: Expr,
    sys: ExprSystem,
}

/// Unvalidated parts of a [`ProblemA`].
#[derive(Debug, Clone)]
pub struct ProblemAParts {
    pub name: String,
    pub z: Vec<String>,
    pub x: String,
    pub u: Vec<String>,
    pub f: Vec<Expr>,
    pub g: Expr,
    pub phi: Vec<Expr>,
    pub cost: Expr,
    pub horizon: f64,
}

impl ProblemA {
    pub fn new(p: ProblemAParts) -> Result<ProblemA> {
        if p.f.len() != p.z.len() {
            return Err(Error::Invalid(format!("{} expressions for {} free states", p.f.len(), p.z.len())));
        }
        for c in &p.phi {
            if let Some(v) = c.free_vars().into_iter().find(|v| !p.u.contains(v)) {
                return Err(Error::Invalid(format!("control constraint depends on `{v}`, not only on controls")));
            }
        }
        let mut states = p.z.clone();
        states.push(p.x.clone());
        let mut dyns = p.f.clone();
        dyns.push(p.g.clone());
        let sys = ExprSystem::new(states, p.u.clone(), &dyns, &p.phi, &p.cost, &Expr::Var(p.x.clone()), p.horizon)?;
        Ok(ProblemA { name: p.name, z: p.z, x: p.x, u: p.u, f: p.f, g: p.g, phi: p.phi, cost: p.cost, sys })
    }

    /// Dimension of `z`.
    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn m(&self) -> usize {
        self.u.len()
    }

    /// The same problem in the general form with `y = (z, x)` and `Φ(y) = x`.
    pub fn to_problem_c(&self) -> Result<ProblemC> {
        let mut y = self.z.clone();
        y.push(self.x.clone());
        let mut f = self.f.clone();
        f.push(self.g.clone());
        ProblemC::new(ProblemCParts {
            name: self.name.clone(),
            y,
            u: self.u.clone(),
            f,
            state_constraint: Expr::Var(self.x.clone()),
            phi: self.phi.clone(),
            cost: self.cost.clone(),
            horizon: self.sys.horizon,
        })
    }
}

delegate_system!(ProblemA);

/// `ẏ = f(y,u)`, `φ(u) ≤ 0`, `Φ(y) ≥ 0`, `J(y₀, y_T) → min`.
#[derive(Debug, Clone)]
pub struct ProblemC {
    pub name: String,
    pub y: Vec<String>,
    pub u: Vec<String>,
    pub f: Vec<Expr>,
    pub state_constraint: Expr,
    pub phi: Vec<Expr>,
    pub cost: Expr,
    sys: ExprSystem,
}

#[derive(Debug, Clone)]
pub struct ProblemCParts {
    pub name: String,
    pub y: Vec<String>,
    pub u: Vec<String>,
    pub f: Vec<Expr>,
    pub state_constraint: Expr,
    pub phi: Vec<Expr>,
    pub cost: Expr,
    pub horizon: f64,
}

impl ProblemC {
    pub fn new(p: ProblemCParts) -> Result<ProblemC> {
        if p.y.is_empty() {
            return Err(Error::Invalid("problem needs at least one state".into()));
        }
        let sys = ExprSystem::new(p.y.clone(), p.u.clone(), &p.f, &p.phi, &p.cost, &p.state_constraint, p.horizon)?;
        Ok(ProblemC {
            name: p.name,
            y: p.y,
            u: p.u,
            f: p.f,
            state_constraint: p.state_constraint,
            phi: p.phi,
            cost: p.cost,
            sys,
        })
    }
}

delegate_system!(ProblemC);

/// Controls of a reference process, one law per interval.
pub trait ControlLaw {
    fn control_dim(&self) -> usize;
    /// Control of interval `piece` (0, 1, 2) at time `t`; at a junction the
    /// owning interval's one-sided value.
    fn control(&self, piece: usize, t: f64, out: &mut [f64]) -> Result<()>;
}

/// Per-interval control expressions in `t`.
#[derive(Debug, Clone)]
pub struct ControlPieces {
    pub exprs: Vec<Vec<Expr>>,
    compiled: Vec<Vec<Compiled>>,
}

impl ControlPieces {
    pub fn new(exprs: Vec<Vec<Expr>>) -> Result<ControlPieces> {
        let m = exprs.first().map_or(0, Vec::len);
        if exprs.iter().any(|p| p.len() != m) {
            return Err(Error::Invalid("control pieces disagree on dimension".into()));
        }
        let compiled = exprs
            .iter()
            .map(|p| p.iter().map(|e| e.compile(&["t"])).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(ControlPieces { exprs, compiled })
    }

    /// Constant controls per piece.
    pub fn constant(values: &[&[f64]]) -> ControlPieces {
        let exprs = values.iter().map(|p| p.iter().map(|v| Expr::Const(*v)).collect()).collect();
        ControlPieces::new(exprs).expect("constants compile")
    }
}

impl ControlLaw for ControlPieces {
    fn control_dim(&self) -> usize {
        self.compiled.first().map_or(0, Vec::len)
    }

    fn control(&self, piece: usize, t: f64, out: &mut [f64]) -> Result<()> {
        let p = self.compiled.get(piece).ok_or_else(|| Error::Invalid(format!("no control piece {piece}")))?;
        for (o, e) in out.iter_mut().zip(p) {
            *o = e.eval(&[t])?;
        }
        Ok(())
    }
}

impl ControlLaw for GridSignal {
    fn control_dim(&self) -> usize {
        self.dim()
    }

    fn control(&self, piece: usize, t: f64, out: &mut [f64]) -> Result<()> {
        let p = self.pieces().get(piece).ok_or_else(|| Error::Invalid(format!("no control piece {piece}")))?;
        p.interp_into(t, out);
        Ok(())
    }
}

pub type SharedControl = Arc<dyn ControlLaw + Send + Sync>;

/// A trajectory with one boundary arc `[t1, t2]`, integrated on a grid with
/// `steps` cells per interval.
#[derive(Clone)]
pub struct ReferenceProcess {
    pub t1: f64,
    pub t2: f64,
    pub horizon: f64,
    pub steps: usize,
    controls: SharedControl,
    state: GridSignal,
    rate: GridSignal,
}

impl core::fmt::Debug for ReferenceProcess {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ReferenceProcess")
            .field("t1", &self.t1)
            .field("t2", &self.t2)
            .field("horizon", &self.horizon)
            .field("steps", &self.steps)
            .finish_non_exhaustive()
    }
}

/// Relative tolerance for `Φ = 0` on the boundary arc.
pub const FLATNESS_TOL: f64 = 1e-8;

/// Integrate the reference trajectory from `s_init` under `controls`.
pub fn simulate_process(
    sys: &dyn ControlSystem,
    controls: SharedControl,
    t1: f64,
    t2: f64,
    s_init: &[f64],
    steps: usize,
) -> Result<ReferenceProcess> {
    let w = integrate_unchecked(sys, controls, t1, t2, s_init, steps)?;
    w.check_arc(sys)?;
    Ok(w)
}

/// Integration without the boundary-arc checks; used for perturbed
/// trajectories that leave the boundary.
pub fn integrate_unchecked(
    sys: &dyn ControlSystem,
    controls: SharedControl,
    t1: f64,
    t2: f64,
    s_init: &[f64],
    steps: usize,
) -> Result<ReferenceProcess> {
    let horizon = sys.horizon();
    if !(0.0 < t1 && t1 < t2 && t2 < horizon) {
        return Err(Error::Invalid(format!("need 0 < t1 < t2 < T, got t1 = {t1}, t2 = {t2}, T = {horizon}")));
    }
    if s_init.len() != sys.state_dim() || controls.control_dim() != sys.control_dim() {
        return Err(Error::Invalid("initial state or control dimension mismatch".into()));
    }
    let breaks = [0.0, t1, t2, horizon];
    let m = sys.control_dim();
    let mut pieces = Vec::with_capacity(3);
    let mut s = s_init.to_vec();
    for k in 0..3 {
        let mut u = vec![0.0; m];
        let ctl = &controls;
        let p = rk4_integrate(
            |t, y, dy| {
                ctl.control(k, t, &mut u)?;
                sys.dynamics(y, &u, dy)
            },
            &s,
            breaks[k],
            breaks[k + 1],
            steps,
            Direction::Forward,
        )?;
        s = p.last().to_vec();
        pieces.push(p);
    }
    let state = GridSignal::new(pieces)?;
    let mut u = vec![0.0; m];
    let rate = state.map(sys.state_dim(), |k, t, s, out| {
        controls.control(k, t, &mut u)?;
        sys.dynamics(s, &u, out)
    })?;
    Ok(ReferenceProcess { t1, t2, horizon, steps, controls, state, rate })
}

impl ReferenceProcess {
    /// Wrap given node states (for example a pushforward of another process).
    /// The grid must have the three intervals `[0, t1]`, `[t1, t2]`, `[t2, T]`
    /// with equal step counts; the boundary-arc assumptions are checked.
    pub fn from_states(
        sys: &dyn ControlSystem,
        controls: SharedControl,
        state: GridSignal,
    ) -> Result<ReferenceProcess> {
        if state.pieces().len() != 3 {
            return Err(Error::Invalid("reference states need three intervals".into()));
        }
        let b = [state.start(), state.piece(1).t0, state.piece(2).t0, state.end()];
        let steps = state.piece(0).steps;
        if state.pieces().iter().any(|p| p.steps != steps) {
            return Err(Error::Invalid("reference intervals need equal step counts".into()));
        }
        if state.dim() != sys.state_dim() || controls.control_dim() != sys.control_dim() {
            return Err(Error::Invalid("state or control dimension mismatch".into()));
        }
        if (b[0] != 0.0) || (b[3] - sys.horizon()).abs() > 1e-12 * (1.0 + sys.horizon()) {
            return Err(Error::Invalid("reference grid does not span [0, T]".into()));
        }
        let mut u = vec![0.0; sys.control_dim()];
        let rate = state.map(sys.state_dim(), |k, t, s, out| {
            controls.control(k, t, &mut u)?;
            sys.dynamics(s, &u, out)
        })?;
        let w = ReferenceProcess { t1: b[1], t2: b[2], horizon: b[3], steps, controls, state, rate };
        w.check_arc(sys)?;
        Ok(w)
    }

    pub fn breaks(&self) -> [f64; 4] {
        [0.0, self.t1, self.t2, self.horizon]
    }

    pub fn state(&self) -> &GridSignal {
        &self.state
    }

    /// `F(s⁰, u⁰)` at every node.
    pub fn rate(&self) -> &GridSignal {
        &self.rate
    }

    pub fn controls(&self) -> &SharedControl {
        &self.controls
    }

    pub fn control_at(&self, piece: usize, t: f64, out: &mut [f64]) -> Result<()> {
        self.controls.control(piece, t, out)
    }

    /// State inside interval `piece` by cubic Hermite interpolation.
    pub fn state_in(&self, piece: usize, t: f64, out: &mut [f64]) {
        self.state.piece(piece).hermite_into(self.rate.piece(piece), t, out);
    }

    pub fn state_at(&self, t: f64, side: Side, out: &mut [f64]) -> Result<()> {
        let k = self.state.piece_at(t, side)?;
        self.state_in(k, t, out);
        Ok(())
    }

    pub fn initial_state(&self) -> &[f64] {
        self.state.piece(0).first()
    }

    pub fn final_state(&self) -> &[f64] {
        self.state.piece(2).last()
    }

    /// Control sampled on the state grid.
    pub fn control_signal(&self) -> Result<GridSignal> {
        let mut pieces = Vec::with_capacity(3);
        for (k, p) in self.state.pieces().iter().enumerate() {
            pieces.push(Piece::from_fn(p.t0, p.t1, p.steps, self.controls.control_dim(), |t, out| {
                self.controls.control(k, t, out)
            })?);
        }
        GridSignal::new(pieces)
    }

    /// `Φ(s⁰)` at every node.
    pub fn constraint_signal(&self, sys: &dyn ControlSystem) -> Result<GridSignal> {
        self.state.map(1, |_, _, s, out| {
            out[0] = sys.state_constraint(s)?;
            Ok(())
        })
    }

    fn check_arc(&self, sys: &dyn ControlSystem) -> Result<()> {
        let c = self.constraint_signal(sys)?;
        let scale = 1.0 + c.max_abs();
        let arc = c.piece(1).max_abs();
        if arc > FLATNESS_TOL * scale {
            return Err(Error::Assumption(format!(
                "state constraint leaves the boundary on [t1, t2]: max |Φ| = {arc:e}"
            )));
        }
        let outer = |k: usize, skip: usize| {
            let p = c.piece(k);
            (0..=p.steps).filter(move |&i| i != skip).map(move |i| (p.time(i), p.node(i)[0]))
        };
        let steps = self.steps;
        if let Some((t, v)) = outer(0, steps).chain(outer(2, 0)).find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::Assumption(format!(
                "state constraint not strictly positive off the boundary arc: Φ = {v:e} at t = {t}"
            )));
        }
        Ok(())
    }
}

/// Indices `s` with `φ_s ≥ −tol_act`.
pub fn active_indices(values: &[f64], tol_act: f64) -> Vec<usize> {
    values.iter().enumerate().filter(|(_, v)| **v >= -tol_act).map(|(i, _)| i).collect()
}

pub fn active_set(sys: &dyn ControlSystem, u: &[f64], tol_act: f64) -> Result<Vec<usize>> {
    let mut v = vec![0.0; sys.constraint_count()];
    sys.control_constraints(u, &mut v)?;
    Ok(active_indices(&v, tol_act))
}

/// Default activity threshold for control constraints.
pub const TOL_ACT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegularityReport {
    /// `d/dt Φ(s⁰)` at `t1 − 0`; must be negative.
    pub landing: f64,
    /// `d/dt Φ(s⁰)` at `t2 + 0`; must be positive.
    pub leaving: f64,
    /// `min |Φ' F_u|` on the arc.
    pub min_order_gradient: f64,
    /// `min_s −φ_s(u⁰)` on the arc.
    pub min_arc_slack: f64,
    /// Smallest distance from 0 to the hull of normalized active gradients
    /// on the outer intervals (infinite when nothing is active).
    pub min_independence: f64,
    pub worst_independence_t: f64,
    /// `max |Φ(s⁰)|` on the arc.
    pub arc_flatness: f64,
    /// `min |Φ'(s⁰)|` over the grid.
    pub min_constraint_gradient: f64,
    /// Finite-difference Lipschitz bound of `u⁰` on the arc (informational).
    pub arc_lipschitz: f64,
    pub violations: Vec<String>,
}

impl RegularityReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check landing/leaving, order one, interior arc controls, positive
/// independence of active control gradients and flatness of the arc.
/// Strict inequalities are tested against the margin `tol`.
pub fn check_regularity(sys: &dyn ControlSystem, w0: &ReferenceProcess, tol: f64) -> Result<RegularityReport> {
    let nn = sys.state_dim();
    let m = sys.control_dim();
    let d = sys.constraint_count();
    let mut grad = vec![0.0; nn];
    let state = w0.state();
    let rate = w0.rate();

    let s1 = state.piece(0).last();
    sys.state_constraint_gradient(s1, &mut grad)?;
    let landing = dot(&grad, rate.piece(0).last());
    let s2 = state.piece(2).first();
    sys.state_constraint_gradient(s2, &mut grad)?;
    let leaving = dot(&grad, rate.piece(2).first());

    let mut u = vec![0.0; m];
    let mut value = vec![0.0; nn];
    let mut fs = Mat::zeros(nn, nn);
    let mut fu = Mat::zeros(nn, m);
    let mut phi = vec![0.0; d];
    let mut phi_u = Mat::zeros(d, m);

    let mut min_order_gradient = f64::INFINITY;
    let mut min_arc_slack = f64::INFINITY;
    let mut arc_flatness: f64 = 0.0;
    let mut arc_lipschitz: f64 = 0.0;
    let mut min_constraint_gradient = f64::INFINITY;
    let mut min_independence = f64::INFINITY;
    let mut worst_independence_t = f64::NAN;
    let mut prev_u: Option<Vec<f64>> = None;

    for (k, p) in state.pieces().iter().enumerate() {
        for i in 0..=p.steps {
            let t = p.time(i);
            let s = p.node(i);
            w0.control_at(k, t, &mut u)?;
            let phi_val = sys.state_constraint_gradient(s, &mut grad)?;
            min_constraint_gradient = min_constraint_gradient.min(norm(&grad));
            sys.control_constraint_jacobian(&u, &mut phi, &mut phi_u)?;
            if k == 1 {
                sys.dynamics_jacobian(s, &u, &mut value, &mut fs, &mut fu)?;
                let gu = fu.vec_mul(&grad);
                min_order_gradient = min_order_gradient.min(norm(&gu));
                for v in &phi {
                    min_arc_slack = min_arc_slack.min(-v);
                }
                arc_flatness = arc_flatness.max(phi_val.abs());
                if let Some(pu) = &prev_u {
                    let du: f64 = u.iter().zip(pu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    arc_lipschitz = arc_lipschitz.max(du / p.step());
                }
                prev_u = Some(u.clone());
            } else {
                let active = active_indices(&phi, TOL_ACT);
                let gradients: Vec<Vec<f64>> = active
                    .iter()
                    .map(|&a| {
                        let row = phi_u.row(a);
                        let nr = norm(row);
                        row.iter().map(|v| if nr > 0.0 { v / nr } else { 0.0 }).collect()
                    })
                    .collect();
                let (dist, _) = convex_hull_distance(&gradients)?;
                if dist < min_independence {
                    min_independence = dist;
                    worst_independence_t = t;
                }
            }
        }
    }

    let mut violations = Vec::new();
    let mut flag = |bad: bool, name: &str| {
        if bad {
            violations.push(name.to_string());
        }
    };
    flag(!(landing < -tol), "LANDING");
    flag(!(leaving > tol), "LEAVING");
    flag(!(min_order_gradient > tol), "ORDER_ONE");
    flag(!(min_arc_slack > tol), "ARC_CONTROL_INTERIOR");
    flag(!(min_independence > tol), "POSITIVE_INDEPENDENCE");
    let scale = 1.0 + w0.constraint_signal(sys)?.max_abs();
    flag(!(arc_flatness <= FLATNESS_TOL * scale), "ARC_FLAT");
    flag(!(min_constraint_gradient > tol), "CONSTRAINT_GRADIENT");
    Ok(RegularityReport {
        landing,
        leaving,
        min_order_gradient,
        min_arc_slack,
        min_independence,
        worst_independence_t,
        arc_flatness,
        min_constraint_gradient,
        arc_lipschitz,
        violations,
    })
}

/// Boxed control law, handy for one-off closures.
pub struct FnControl<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> ControlLaw for FnControl<F>
where
    F: Fn(usize, f64, &mut [f64]) -> Result<()>,
{
    fn control_dim(&self) -> usize {
        self.dim
    }

    fn control(&self, piece: usize, t: f64, out: &mut [f64]) -> Result<()> {
        (self.f)(piece, t, out)
    }
}

pub fn boxed_law<L: ControlLaw + Send + Sync + 'static>(law: L) -> SharedControl {
    let b: Box<dyn ControlLaw + Send + Sync> = Box::new(law);
    Arc::from(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn atoms_problem(a: f64) -> ProblemA {
        let f = parse_expr(&format!("(1 - {a}/2)*u^4 + (3*{a}/2 - 1)*u^2"), &["u"]).unwrap();
        ProblemA::new(ProblemAParts {
            name: "atoms".into(),
            z: vec!["z".into()],
            x: "x".into(),
            u: vec!["u".into()],
            f: vec![f],
            g: parse_expr("u", &["u"]).unwrap(),
            phi: vec![parse_expr("u^2 - 1", &["u"]).unwrap()],
            cost: parse_expr(&format!("z_0 - z_T + {a}*(x_0 + x_T)"), &["z_0", "z_T", "x_0", "x_T"]).unwrap(),
            horizon: 3.0,
        })
        .unwrap()
    }

    fn tent() -> SharedControl {
        boxed_law(ControlPieces::constant(&[&[-1.0], &[0.0], &[1.0]]))
    }

    #[test]
    fn tent_trajectory_and_regularity() {
        let p = atoms_problem(1.0);
        assert_eq!((p.n(), p.m(), p.constraint_count()), (1, 1, 1));
        let w = simulate_process(&p, tent(), 1.0, 2.0, &[0.0, 1.0], 100).unwrap();
        let mut s = [0.0; 2];
        for (t, x) in [(0.25, 0.75), (1.5, 0.0), (2.5, 0.5), (3.0, 1.0)] {
            w.state_at(t, Side::Either, &mut s).unwrap();
            assert!((s[1] - x).abs() < 1e-14, "x({t}) = {}", s[1]);
        }
        let r = check_regularity(&p, &w, 1e-9).unwrap();
        assert!(r.pass(), "{:?}", r.violations);
        assert_eq!(r.landing, -1.0);
        assert_eq!(r.leaving, 1.0);
        assert_eq!(r.min_order_gradient, 1.0);
        assert_eq!(r.min_arc_slack, 1.0);
    }

    #[test]
    fn rejects_degenerate_trajectory() {
        let p = ProblemA::new(ProblemAParts {
            name: "zero".into(),
            z: vec![],
            x: "x".into(),
            u: vec!["u".into()],
            f: vec![],
            g: Expr::Const(0.0),
            phi: vec![],
            cost: Expr::Const(0.0),
            horizon: 3.0,
        })
        .unwrap();
        let err = simulate_process(&p, tent(), 1.0, 2.0, &[0.0], 10).unwrap_err();
        assert!(matches!(err, Error::Assumption(_)));
    }

    #[test]
    fn rejects_arc_drift() {
        let p = atoms_problem(1.0);
        let ctl = boxed_law(ControlPieces::constant(&[&[-1.0], &[0.1], &[1.0]]));
        assert!(matches!(simulate_process(&p, ctl, 1.0, 2.0, &[0.0, 1.0], 10), Err(Error::Assumption(_))));
    }

    #[test]
    fn tangential_leaving_is_flagged() {
        let p = atoms_problem(1.0);
        let t = parse_expr("t - 2", &["t"]).unwrap();
        let ctl = ControlPieces::new(vec![vec![Expr::Const(-1.0)], vec![Expr::Const(0.0)], vec![t]]).unwrap();
        let w = simulate_process(&p, boxed_law(ctl), 1.0, 2.0, &[0.0, 1.0], 50).unwrap();
        let r = check_regularity(&p, &w, 1e-9).unwrap();
        assert_eq!(r.violations, vec!["LEAVING".to_string()]);
    }

    #[test]
    fn active_sets() {
        let p = atoms_problem(1.0);
        assert_eq!(active_set(&p, &[-1.0], 1e-8).unwrap(), vec![0]);
        assert!(active_set(&p, &[0.0], 1e-8).unwrap().is_empty());
        assert_eq!(active_set(&p, &[0.999999], 1e-3).unwrap(), vec![0]);
        assert!(active_set(&p, &[0.999], 1e-6).unwrap().is_empty());
    }

    #[test]
    fn control_constraint_must_only_use_controls() {
        let r = ProblemA::new(ProblemAParts {
            name: "bad".into(),
            z: vec![],
            x: "x".into(),
            u: vec!["u".into()],
            f: vec![],
            g: parse_expr("u", &["u"]).unwrap(),
            phi: vec![parse_expr("u + x", &["u", "x"]).unwrap()],
            cost: Expr::Const(0.0),
            horizon: 1.0,
        });
        assert!(matches!(r, Err(Error::Invalid(_))));
    }

    #[test]
    fn integrator_order_on_state() {
        let p = ProblemA::new(ProblemAParts {
            name: "smooth".into(),
            z: vec!["z".into()],
            x: "x".into(),
            u: vec!["u".into()],
            f: vec![parse_expr("sin(z) + x*u", &["z", "x", "u"]).unwrap()],
            g: parse_expr("u", &["u"]).unwrap(),
            phi: vec![],
            cost: Expr::Const(0.0),
            horizon: 3.0,
        })
        .unwrap();
        let zt = |n| simulate_process(&p, tent(), 1.0, 2.0, &[0.3, 1.0], n).unwrap().final_state()[0];
        let (a, b, c) = (zt(8), zt(16), zt(32));
        assert!(libm::log2((a - b).abs() / (b - c).abs()) > 3.7);
    }
}
