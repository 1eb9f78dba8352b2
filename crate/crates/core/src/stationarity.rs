//! Multiplier reconstruction along the boundary-arc reduction and
//! re-substitution checks of the stationarity conditions.
//!
//! Conventions, with `s = (z, x)`, `H = ψ F(s, u)` and the constraint
//! `Φ(s) ≥ 0`:
//!
//! * adjoint `−ψ̇ = ψ F_s + μ̇ Φ'(s)`;
//! * transversality `ψ(0) = J'_{s(0)}`, `ψ(T) = −J'_{s(T)}`;
//! * control stationarity `ψ F_u = h φ'(u)`, `h ≥ 0`, `h φ(u) = 0`;
//! * jumps `ψ(tᵢ+0) − ψ(tᵢ−0) = −Δμ(tᵢ) Φ'(s(tᵢ))`, `Δμ(tᵢ) ≥ 0`;
//! * density `μ̇ ≥ 0` on the arc, zero elsewhere;
//! * `H ≡ c`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::integrate::{rk4_integrate, Direction, GridSignal, Piece};
use crate::linalg::{dot, least_squares_combination, max_abs, norm, Mat};
use crate::model::{active_indices, check_regularity, ControlSystem, ReferenceProcess, TOL_ACT};
use crate::report::*;

/// Below this `|g_u|` the arc control cannot be recovered.
pub const ORDER_ONE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tolerances {
    /// Relative tolerance for equality residuals: `master · (1 + scale)`.
    pub master: f64,
    /// Absolute tolerance for sign conditions.
    pub sign: f64,
    /// Margin for the strict inequalities of the regularity check.
    pub regularity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { master: 1e-6, sign: 1e-7, regularity: 1e-9 }
    }
}

impl Tolerances {
    pub fn with_master(master: f64) -> Self {
        Tolerances { master, ..Tolerances::default() }
    }

    pub fn rel(&self, scale: f64) -> f64 {
        self.master * (1.0 + scale)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Diagnostics {
    /// `max ‖ψ_z f_u + ψ̃ g_u‖` on the arc.
    pub algebraic_residual: f64,
    /// Largest least-squares residual when solving for `h`.
    pub h_residual: f64,
    /// `‖ψ_z(t2−0) − ψ_z(t2+0)‖` between the forward and backward sweeps.
    pub solvability: f64,
    /// `max |H − c|`.
    pub energy_deviation: f64,
}

/// Adjoint, measure and control multipliers on the process grid. `α₀ = 1`.
///
/// The same type carries the multipliers of general-constraint problems,
/// where `psi` is the full row `ψ_y`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Multipliers {
    /// `ψ = (ψ_z, ψ̃)` on the three intervals.
    pub psi: GridSignal,
    /// `μ̇`, identically zero off the arc.
    pub density: GridSignal,
    pub atoms: [f64; 2],
    /// Control-constraint multiplier, zero on the arc.
    pub h: GridSignal,
    pub c: f64,
    pub diagnostics: Diagnostics,
}

impl Multipliers {
    /// Cumulative measure normalized by `μ(t1+0) = 0`.
    pub fn cumulative_measure(&self) -> Result<GridSignal> {
        let running = self.density.piece(1).cumulative(0);
        let total = running[running.len() - 1];
        let [a1, a2] = self.atoms;
        let pieces = self
            .density
            .pieces()
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let mut i = 0;
                Piece::from_fn(p.t0, p.t1, p.steps, 1, |_, out| {
                    out[0] = match k {
                        0 => -a1,
                        1 => running[i],
                        _ => total + a2,
                    };
                    i += 1;
                    Ok(())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GridSignal::new(pieces)
    }

    /// The component of `psi` along the constrained coordinate.
    pub fn psi_x(&self) -> Result<GridSignal> {
        let last = self.psi.dim() - 1;
        self.psi.map(1, |_, _, v, out| {
            out[0] = v[last];
            Ok(())
        })
    }
}

struct Jac {
    value: Vec<f64>,
    fs: Mat,
    fu: Mat,
    phi: Vec<f64>,
    phi_u: Mat,
    grad: Vec<f64>,
}

impl Jac {
    fn new(sys: &dyn ControlSystem) -> Jac {
        let (nn, m, d) = (sys.state_dim(), sys.control_dim(), sys.constraint_count());
        Jac {
            value: vec![0.0; nn],
            fs: Mat::zeros(nn, nn),
            fu: Mat::zeros(nn, m),
            phi: vec![0.0; d],
            phi_u: Mat::zeros(d, m),
            grad: vec![0.0; nn],
        }
    }

    fn dynamics(&mut self, sys: &dyn ControlSystem, s: &[f64], u: &[f64]) -> Result<()> {
        sys.dynamics_jacobian(s, u, &mut self.value, &mut self.fs, &mut self.fu)
    }

    fn constraints(&mut self, sys: &dyn ControlSystem, u: &[f64]) -> Result<()> {
        sys.control_constraint_jacobian(u, &mut self.phi, &mut self.phi_u)
    }
}

pub(crate) fn require_last_coordinate_constraint(sys: &dyn ControlSystem, w0: &ReferenceProcess) -> Result<()> {
    let nn = sys.state_dim();
    let mut g = vec![0.0; nn];
    for p in w0.state().pieces() {
        for s in [p.first(), p.last()] {
            sys.state_constraint_gradient(s, &mut g)?;
            let ok = g.iter().enumerate().all(|(i, v)| if i + 1 == nn { *v == 1.0 } else { *v == 0.0 });
            if !ok {
                return Err(Error::Assumption(
                    "reconstruction needs the state constraint to be the last coordinate".into(),
                ));
            }
        }
    }
    Ok(())
}

// ψ̃ on the arc from ψ_z f_u + ψ̃ g_u = 0, plus the residual orthogonal to g_u.
fn arc_psi_x(fu: &Mat, psi_z: &[f64]) -> Result<(f64, f64)> {
    let n = psi_z.len();
    let m = fu.cols();
    let gu = fu.row(n);
    let gu2 = dot(gu, gu);
    if !(libm::sqrt(gu2) > ORDER_ONE_THRESHOLD) {
        return Err(Error::Assumption(format!("|g_u| = {:e} on the boundary arc", libm::sqrt(gu2))));
    }
    let mut a = vec![0.0; m];
    for (i, pz) in psi_z.iter().enumerate() {
        for (av, f) in a.iter_mut().zip(fu.row(i)) {
            *av += pz * f;
        }
    }
    let px = -dot(&a, gu) / gu2;
    let resid: Vec<f64> = a.iter().zip(gu).map(|(av, g)| av + px * g).collect();
    Ok((px, norm(&resid)))
}

/// Reconstruct `(ψ, μ, h, c)` for a problem whose state constraint is the
/// last state coordinate.
///
/// Outer intervals: the adjoint system is integrated from the
/// transversality conditions (forward on the first, backward on the last),
/// and `h` is the least-squares solution of `ψ F_u = h φ'` over the active
/// constraints. Arc: `ψ_z` is integrated forward from `t1` with `ψ̃`
/// eliminated by the algebraic relation `ψ_z f_u + ψ̃ g_u = 0`; the density
/// follows from the `ψ̃` adjoint equation. Atoms are the drops of `ψ̃` at
/// the junctions.
pub fn reconstruct_multipliers(sys: &dyn ControlSystem, w0: &ReferenceProcess) -> Result<Multipliers> {
    require_last_coordinate_constraint(sys, w0)?;
    let nn = sys.state_dim();
    let n = nn - 1;
    let m = sys.control_dim();
    let d = sys.constraint_count();
    let b = w0.breaks();
    let steps = w0.steps;

    let mut g0 = vec![0.0; nn];
    let mut g_t = vec![0.0; nn];
    sys.cost_gradient(w0.initial_state(), w0.final_state(), &mut g0, &mut g_t)?;
    let psi_end: Vec<f64> = g_t.iter().map(|v| -v).collect();

    let mut jac = Jac::new(sys);
    let mut s = vec![0.0; nn];
    let mut u = vec![0.0; m];

    let mut outer = |k: usize, init: &[f64], dir: Direction, jac: &mut Jac| {
        rk4_integrate(
            |t, psi, dpsi| {
                w0.state_in(k, t, &mut s);
                w0.control_at(k, t, &mut u)?;
                jac.dynamics(sys, &s, &u)?;
                for (j, dp) in dpsi.iter_mut().enumerate() {
                    *dp = -(0..nn).map(|i| psi[i] * jac.fs[(i, j)]).sum::<f64>();
                }
                Ok(())
            },
            init,
            b[k],
            b[k + 1],
            steps,
            dir,
        )
    };
    let first = outer(0, &g0, Direction::Forward, &mut jac)?;
    let third = outer(2, &psi_end, Direction::Backward, &mut jac)?;

    let mut s = vec![0.0; nn];
    let mut u = vec![0.0; m];
    let psi_z_arc = rk4_integrate(
        |t, pz, dpz| {
            w0.state_in(1, t, &mut s);
            w0.control_at(1, t, &mut u)?;
            jac.dynamics(sys, &s, &u)?;
            let (px, _) = arc_psi_x(&jac.fu, pz)?;
            for (j, dp) in dpz.iter_mut().enumerate() {
                *dp = -((0..n).map(|i| pz[i] * jac.fs[(i, j)]).sum::<f64>() + px * jac.fs[(n, j)]);
            }
            Ok(())
        },
        &first.last()[..n],
        b[1],
        b[2],
        steps,
        Direction::Forward,
    )?;

    let mut algebraic_residual: f64 = 0.0;
    let arc_state = w0.state().piece(1);
    let mut idx = 0;
    let second = Piece::from_fn(b[1], b[2], steps, nn, |t, out| {
        let pz = psi_z_arc.node(idx);
        w0.control_at(1, t, &mut u)?;
        jac.dynamics(sys, arc_state.node(idx), &u)?;
        let (px, r) = arc_psi_x(&jac.fu, pz)?;
        algebraic_residual = algebraic_residual.max(r);
        out[..n].copy_from_slice(pz);
        out[n] = px;
        idx += 1;
        Ok(())
    })?;

    // μ̇ = −(ψ F_s)_x − dψ̃/dt on the arc.
    let dpsi = second.derivative();
    let mut idx = 0;
    let density_arc = Piece::from_fn(b[1], b[2], steps, 1, |t, out| {
        let psi = second.node(idx);
        w0.control_at(1, t, &mut u)?;
        jac.dynamics(sys, arc_state.node(idx), &u)?;
        let psi_fs_x: f64 = (0..nn).map(|i| psi[i] * jac.fs[(i, n)]).sum();
        out[0] = -psi_fs_x - dpsi.node(idx)[n];
        idx += 1;
        Ok(())
    })?;
    let zero = |k: usize| {
        Piece::from_fn(b[k], b[k + 1], steps, 1, |_, out| {
            out[0] = 0.0;
            Ok(())
        })
    };
    let density = GridSignal::new(vec![zero(0)?, density_arc, zero(2)?])?;

    let solvability = norm(&second.last()[..n].iter().zip(&third.first()[..n]).map(|(a, c)| a - c).collect::<Vec<_>>());
    let atoms = [first.last()[n] - second.first()[n], second.last()[n] - third.first()[n]];
    let psi = GridSignal::new(vec![first, second, third])?;

    // h on the outer intervals.
    let mut h_residual: f64 = 0.0;
    let mut h_pieces = Vec::with_capacity(3);
    for k in 0..3 {
        let p = psi.piece(k);
        let sp = w0.state().piece(k);
        let mut idx = 0;
        h_pieces.push(Piece::from_fn(p.t0, p.t1, p.steps, d, |t, out| {
            out.iter_mut().for_each(|v| *v = 0.0);
            let i = idx;
            idx += 1;
            if k == 1 {
                return Ok(());
            }
            w0.control_at(k, t, &mut u)?;
            jac.dynamics(sys, sp.node(i), &u)?;
            jac.constraints(sys, &u)?;
            let target = jac.fu.vec_mul(p.node(i));
            let active = active_indices(&jac.phi, TOL_ACT);
            let rows: Vec<Vec<f64>> = active.iter().map(|&a| jac.phi_u.row(a).to_vec()).collect();
            let (coef, r) = least_squares_combination(&rows, &target);
            for (&a, c) in active.iter().zip(coef) {
                out[a] = c;
            }
            h_residual = h_residual.max(r);
            Ok(())
        })?);
    }
    let h = GridSignal::new(h_pieces)?;

    let energy = hamiltonian(w0, &psi)?;
    let (sum, count) =
        energy.pieces().iter().flat_map(|p| p.values().iter()).fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    let c = sum / count as f64;
    let energy_deviation =
        energy.pieces().iter().flat_map(|p| p.values().iter()).fold(0.0f64, |m, v| m.max((v - c).abs()));

    Ok(Multipliers {
        psi,
        density,
        atoms,
        h,
        c,
        diagnostics: Diagnostics { algebraic_residual, h_residual, solvability, energy_deviation },
    })
}

/// `H = ψ F(s⁰, u⁰)` at every node.
pub fn hamiltonian(w0: &ReferenceProcess, psi: &GridSignal) -> Result<GridSignal> {
    let rate = w0.rate();
    let mut k_prev = usize::MAX;
    let mut i = 0;
    psi.map(1, |k, _, p, out| {
        if k != k_prev {
            k_prev = k;
            i = 0;
        }
        out[0] = dot(p, rate.piece(k).node(i));
        i += 1;
        Ok(())
    })
}

/// Check every condition by substituting `mult` into the problem data.
///
/// Nothing from the reconstruction is trusted: derivatives of `ψ` are taken
/// from the stored grid values by finite differences and compared with the
/// right-hand sides, sign conditions are read off the stored measure and
/// `h`, and `c` is compared with `H` at every node.
pub fn verify_stationarity(
    sys: &dyn ControlSystem,
    w0: &ReferenceProcess,
    mult: &Multipliers,
    tol: &Tolerances,
) -> Result<StationarityReport> {
    let nn = sys.state_dim();
    let m = sys.control_dim();
    let mut jac = Jac::new(sys);
    let mut u = vec![0.0; m];
    let psi = &mult.psi;
    let psi_scale = psi.max_abs();
    let density_scale = mult.density.max_abs();
    let dpsi = psi.derivative();

    let mut adjoint: f64 = 0.0;
    let mut stationarity: f64 = 0.0;
    let mut energy: f64 = 0.0;
    let mut slack_state: f64 = 0.0;
    let mut slack_control: f64 = 0.0;
    let mut min_density = f64::INFINITY;
    let mut min_h = f64::INFINITY;

    for k in 0..3 {
        let sp = w0.state().piece(k);
        let pp = psi.piece(k);
        let dp = dpsi.piece(k);
        let mu = mult.density.piece(k);
        let hp = mult.h.piece(k);
        for i in 0..=sp.steps {
            let t = sp.time(i);
            let s = sp.node(i);
            let p = pp.node(i);
            let mu_dot = mu.node(i)[0];
            w0.control_at(k, t, &mut u)?;
            jac.dynamics(sys, s, &u)?;
            jac.constraints(sys, &u)?;
            let phi_state = sys.state_constraint_gradient(s, &mut jac.grad)?;

            let psi_fs = jac.fs.vec_mul(p);
            for j in 0..nn {
                adjoint = adjoint.max((dp.node(i)[j] + psi_fs[j] + mu_dot * jac.grad[j]).abs());
            }

            let mut r = jac.fu.vec_mul(p);
            let hv = hp.node(i);
            for (a, hs) in hv.iter().enumerate() {
                for (rv, g) in r.iter_mut().zip(jac.phi_u.row(a)) {
                    *rv -= hs * g;
                }
                slack_control = slack_control.max((hs * jac.phi[a]).abs());
                if k != 1 {
                    min_h = min_h.min(*hs);
                }
            }
            stationarity = stationarity.max(norm(&r));
            energy = energy.max((dot(p, &jac.value) - mult.c).abs());
            slack_state = slack_state.max((mu_dot * phi_state).abs());
            if k == 1 {
                min_density = min_density.min(mu_dot);
            }
        }
    }

    // Atoms sit where Φ = 0.
    let mut grad1 = vec![0.0; nn];
    let mut grad2 = vec![0.0; nn];
    let phi_t1 = sys.state_constraint_gradient(w0.state().piece(1).first(), &mut grad1)?;
    let phi_t2 = sys.state_constraint_gradient(w0.state().piece(1).last(), &mut grad2)?;
    slack_state = slack_state.max((mult.atoms[0] * phi_t1).abs()).max((mult.atoms[1] * phi_t2).abs());

    let mut g0 = vec![0.0; nn];
    let mut g_t = vec![0.0; nn];
    sys.cost_gradient(w0.initial_state(), w0.final_state(), &mut g0, &mut g_t)?;
    let transversality = psi
        .piece(0)
        .first()
        .iter()
        .zip(&g0)
        .map(|(p, g)| (p - g).abs())
        .chain(psi.piece(2).last().iter().zip(&g_t).map(|(p, g)| (p + g).abs()))
        .fold(0.0, f64::max);
    let cost_scale = max_abs(&g0).max(max_abs(&g_t));

    let jump_residual = |k: usize, atom: f64, grad: &[f64]| -> Vec<f64> {
        let l = psi.piece(k).last();
        let r = psi.piece(k + 1).first();
        (0..nn).map(|j| r[j] - l[j] + atom * grad[j]).collect()
    };
    let r1 = jump_residual(0, mult.atoms[0], &grad1);
    let r2 = jump_residual(1, mult.atoms[1], &grad2);
    let g2n = dot(&grad2, &grad2);
    let along = if g2n > 0.0 { dot(&r2, &grad2) / g2n } else { 0.0 };
    let orth: Vec<f64> = r2.iter().zip(&grad2).map(|(r, g)| r - along * g).collect();
    let jump = norm(&r1).max(along.abs() * libm::sqrt(g2n));
    let solvability = norm(&orth);

    let regularity = check_regularity(sys, w0, tol.regularity)?;

    let conditions = vec![
        ConditionRecord::sign(NONNEG_DENSITY, min_density, tol.sign),
        ConditionRecord::sign(NONNEG_ATOMS, mult.atoms[0].min(mult.atoms[1]), tol.sign),
        ConditionRecord::sign(NONNEG_H, min_h, tol.sign),
        ConditionRecord::new(COMP_SLACK_STATE, slack_state, tol.rel(0.0)),
        ConditionRecord::new(COMP_SLACK_CONTROL, slack_control, tol.rel(0.0)),
        ConditionRecord::new(ADJOINT, adjoint, tol.rel(psi_scale + density_scale)),
        ConditionRecord::new(TRANSVERSALITY, transversality, tol.rel(cost_scale)),
        ConditionRecord::new(JUMP_CONDITIONS, jump, tol.rel(psi_scale)),
        ConditionRecord::new(SOLVABILITY, solvability, tol.rel(psi_scale)),
        ConditionRecord::new(ENERGY_CONSERVATION, energy, tol.rel(mult.c.abs())),
        ConditionRecord::new(CONTROL_STATIONARITY, stationarity, tol.rel(psi_scale)),
        ConditionRecord {
            value: Some(regularity.violations.len() as f64),
            ..ConditionRecord::new(REGULARITY, if regularity.pass() { 0.0 } else { 1.0 }, 0.0)
        },
    ];
    Ok(StationarityReport { conditions, atoms: mult.atoms, c: mult.c, min_density, regularity: Some(regularity) })
}

/// Reconstruct and verify in one call.
pub fn verify_theorem(
    sys: &dyn ControlSystem,
    w0: &ReferenceProcess,
    tol: &Tolerances,
) -> Result<(Multipliers, StationarityReport)> {
    let mult = reconstruct_multipliers(sys, w0)?;
    let report = verify_stationarity(sys, w0, &mult, tol)?;
    Ok((mult, report))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoAtomReport {
    /// Whether the free dynamics are independent of the control.
    pub applicable: bool,
    /// `max |f_u|` seen while checking the premise.
    pub premise_residual: f64,
    /// `max |ψ̃|` on the arc.
    pub max_psi_x_on_arc: f64,
    pub atoms: [f64; 2],
    /// `|Δψ̃(tᵢ) g(tᵢ∓0)|` at both junctions; zero by continuity of `H`.
    pub switching_residual: f64,
    /// False when the premise holds but the multipliers contradict it.
    pub consistent: bool,
}

/// When the free dynamics do not depend on `u`, the measure has no atoms:
/// on the arc `ψ̃ = 0`, and continuity of `H` with `g(t1−0) < 0`,
/// `g(t2+0) > 0` forces `ψ̃(t1−0) = ψ̃(t2+0) = 0`.
pub fn check_no_atom_case(
    sys: &dyn ControlSystem,
    w0: &ReferenceProcess,
    mult: &Multipliers,
    tol: f64,
) -> Result<NoAtomReport> {
    let nn = sys.state_dim();
    let n = nn - 1;
    let m = sys.control_dim();
    let mut jac = Jac::new(sys);
    let mut u = vec![0.0; m];
    let mut premise: f64 = 0.0;
    for (k, p) in w0.state().pieces().iter().enumerate() {
        for i in 0..=p.steps {
            w0.control_at(k, p.time(i), &mut u)?;
            for shift in [-0.1, 0.0, 0.1] {
                let v: Vec<f64> = u.iter().map(|x| x + shift).collect();
                jac.dynamics(sys, p.node(i), &v)?;
                for r in 0..n {
                    premise = premise.max(max_abs(jac.fu.row(r)));
                }
            }
        }
    }
    let psi_arc = mult.psi.piece(1);
    let max_psi_x_on_arc = (0..=psi_arc.steps).map(|i| psi_arc.node(i)[n].abs()).fold(0.0, f64::max);
    let rate = w0.rate();
    let jump1 = mult.psi.piece(1).first()[n] - mult.psi.piece(0).last()[n];
    let jump2 = mult.psi.piece(2).first()[n] - mult.psi.piece(1).last()[n];
    let switching_residual = (jump1 * rate.piece(0).last()[n]).abs().max((jump2 * rate.piece(2).first()[n]).abs());
    let applicable = premise <= 1e-12;
    let consistent = !applicable
        || (max_psi_x_on_arc <= tol && mult.atoms.iter().all(|a| a.abs() <= tol) && switching_residual <= tol);
    Ok(NoAtomReport {
        applicable,
        premise_residual: premise,
        max_psi_x_on_arc,
        atoms: mult.atoms,
        switching_residual,
        consistent,
    })
}

/// Box sampler for the maximality check.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxSampler {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Grid points per control dimension; one point means the box centre.
    pub per_dim: usize,
    /// Check every `node_stride`-th node.
    pub node_stride: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MaxConditionReport {
    pub admissible_samples: usize,
    /// `max_v H(v) − H(u⁰)` over sampled times.
    pub worst_excess: f64,
    pub worst_t: f64,
    pub worst_v: Vec<f64>,
    pub pass: bool,
}

/// Sample `H(s⁰, v)` over admissible `v` and compare with `H(s⁰, u⁰)`.
pub fn check_max_condition(
    sys: &dyn ControlSystem,
    w0: &ReferenceProcess,
    mult: &Multipliers,
    sampler: &MaxSampler,
) -> Result<MaxConditionReport> {
    let m = sys.control_dim();
    if sampler.lower.len() != m || sampler.upper.len() != m || sampler.per_dim == 0 {
        return Err(Error::Invalid("sampler box does not match the control dimension".into()));
    }
    let total = sampler.per_dim.checked_pow(m as u32).ok_or_else(|| Error::Invalid("sampler too large".into()))?;
    let mut samples = Vec::new();
    let mut phi = vec![0.0; sys.constraint_count()];
    for idx in 0..total {
        let mut rem = idx;
        let v: Vec<f64> = (0..m)
            .map(|j| {
                let i = rem % sampler.per_dim;
                rem /= sampler.per_dim;
                if sampler.per_dim == 1 {
                    0.5 * (sampler.lower[j] + sampler.upper[j])
                } else {
                    sampler.lower[j] + (sampler.upper[j] - sampler.lower[j]) * i as f64 / (sampler.per_dim - 1) as f64
                }
            })
            .collect();
        sys.control_constraints(&v, &mut phi)?;
        if phi.iter().all(|p| *p <= 0.0) {
            samples.push(v);
        }
    }
    if samples.is_empty() {
        return Err(Error::Invalid("no sampled control satisfies the control constraints".into()));
    }
    let nn = sys.state_dim();
    let mut u = vec![0.0; m];
    let mut f = vec![0.0; nn];
    let mut worst = (f64::NEG_INFINITY, f64::NAN, Vec::new());
    let stride = sampler.node_stride.max(1);
    for (k, sp) in w0.state().pieces().iter().enumerate() {
        let pp = mult.psi.piece(k);
        for i in (0..=sp.steps).step_by(stride) {
            let t = sp.time(i);
            w0.control_at(k, t, &mut u)?;
            sys.dynamics(sp.node(i), &u, &mut f)?;
            let h0 = dot(pp.node(i), &f);
            for v in &samples {
                sys.dynamics(sp.node(i), v, &mut f)?;
                let excess = dot(pp.node(i), &f) - h0;
                if excess > worst.0 {
                    worst = (excess, t, v.clone());
                }
            }
        }
    }
    Ok(MaxConditionReport {
        admissible_samples: samples.len(),
        worst_excess: worst.0,
        worst_t: worst.1,
        worst_v: worst.2,
        pass: worst.0 <= sampler.tol,
    })
}

/// Names of the failing conditions joined for messages.
pub fn describe_violations(report: &StationarityReport) -> String {
    report.violations().join(", ")
}
