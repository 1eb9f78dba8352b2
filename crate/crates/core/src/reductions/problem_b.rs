//! Problem B: three copies of the system on `τ ∈ [0, 1]`, one per interval
//! of the reference, tied by junction equalities. The boundary arc becomes
//! the endpoint inequality `y₂(0) ≥ 0` plus the mixed equality
//! `g(r₂, y₂, v₂) = 0`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::integrate::Piece;
use crate::linalg::{convex_hull_distance, dot, max_abs, norm, Mat};
use crate::model::{active_indices, ControlSystem, ReferenceProcess, TOL_ACT};
use crate::report::{ConditionRecord, ConditionSet};
use crate::stationarity::{require_last_coordinate_constraint, Multipliers, Tolerances, ORDER_ONE_THRESHOLD};

pub const B_NONTRIVIALITY: &str = "B_NONTRIVIALITY";
pub const B_NONNEG_ALPHA: &str = "B_NONNEG_ALPHA";
pub const B_NONNEG_H: &str = "B_NONNEG_H";
pub const B_COMP_SLACK: &str = "B_COMP_SLACK";
pub const B_ADJOINT: &str = "B_ADJOINT";
pub const B_TRANSVERSALITY: &str = "B_TRANSVERSALITY";
pub const B_TIME_MULTIPLIERS: &str = "B_TIME_MULTIPLIERS";
pub const B_CONTROL_STATIONARITY: &str = "B_CONTROL_STATIONARITY";
pub const B_RHO_STATIONARITY: &str = "B_RHO_STATIONARITY";
pub const B_MIXED_REGULARITY: &str = "B_MIXED_REGULARITY";
pub const B_PRIMAL: &str = "B_PRIMAL";

/// One replicated interval on the `τ` grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReplicatedInterval {
    /// `ρᵢ`, constant on the reference.
    pub rho: f64,
    /// Node values `(rᵢ, yᵢ, tᵢ)`, dimension `n + 2`.
    pub states: Piece,
    /// Node values of `vᵢ`.
    pub controls: Piece,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProblemBInstance {
    /// Dimension of `z`.
    pub n: usize,
    pub m: usize,
    pub horizon: f64,
    pub intervals: [ReplicatedInterval; 3],
}

impl ProblemBInstance {
    pub fn rho(&self) -> [f64; 3] {
        [self.intervals[0].rho, self.intervals[1].rho, self.intervals[2].rho]
    }

    pub fn steps(&self) -> usize {
        self.intervals[0].states.steps
    }
}

/// Replicate the reference on `τ ∈ [0, 1]` with `ρᵢ = |Δᵢ|`. Node `j` of
/// interval `i` is the node `j` of the reference, so nothing is integrated.
pub fn build_problem_b(sys: &dyn ControlSystem, w0: &ReferenceProcess) -> Result<ProblemBInstance> {
    require_last_coordinate_constraint(sys, w0)?;
    let nn = sys.state_dim();
    let m = sys.control_dim();
    let mut u = vec![0.0; m];
    let mut intervals = Vec::with_capacity(3);
    for k in 0..3 {
        let sp = w0.state().piece(k);
        let mut states = Vec::with_capacity((sp.steps + 1) * (nn + 1));
        let mut controls = Vec::with_capacity((sp.steps + 1) * m);
        for i in 0..=sp.steps {
            let t = sp.time(i);
            states.extend_from_slice(sp.node(i));
            states.push(t);
            w0.control_at(k, t, &mut u)?;
            controls.extend_from_slice(&u);
        }
        intervals.push(ReplicatedInterval {
            rho: sp.t1 - sp.t0,
            states: Piece::new(0.0, 1.0, sp.steps, nn + 1, states)?,
            controls: Piece::new(0.0, 1.0, sp.steps, m, controls)?,
        });
    }
    let intervals: [ReplicatedInterval; 3] =
        intervals.try_into().map_err(|_| Error::Invalid("three intervals".into()))?;
    Ok(ProblemBInstance { n: nn - 1, m, horizon: w0.horizon, intervals })
}

/// Multipliers of Problem B with `α₀ = 1`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MultiplierSetB {
    pub alpha0: f64,
    pub alpha1: f64,
    /// `β₁ … β₄`, paired with the time equalities.
    pub beta_t: [f64; 4],
    /// `β₅`, `β₆`, paired with `r₁(1) = r₂(0)` and `r₂(1) = r₃(0)`.
    pub beta5: Vec<f64>,
    pub beta6: Vec<f64>,
    /// `β₇`, `β₈`, paired with `y₁(1) = y₂(0)` and `y₂(1) = y₃(0)`.
    pub beta7: f64,
    pub beta8: f64,
    /// `(ψ_{rᵢ}, ψ_{yᵢ}, ψ_{tᵢ})` on the `τ` grid.
    pub psi: [Piece; 3],
    /// Multiplier of the mixed equality on interval 2.
    pub sigma: Piece,
    pub h1: Piece,
    pub h3: Piece,
}

/// Express reconstructed multipliers in Problem B terms.
///
/// Continuity of `ψ_y` across the second junction fixes `m(t2−0) =
/// −Δμ(t2)`, so `m(t) = −Δμ(t2) − ∫_t^{t2} μ̇` on the arc and
/// `α₁ = Δμ(t1) + ∫μ̇ + Δμ(t2)` is the total mass of the measure.
pub fn map_multipliers_a_to_b(mult: &Multipliers, b: &ProblemBInstance) -> Result<MultiplierSetB> {
    let n = b.n;
    let steps = b.steps();
    if mult.psi.dim() != n + 1 || mult.psi.pieces().iter().any(|p| p.steps != steps) {
        return Err(Error::Invalid("multipliers and Problem B instance use different grids".into()));
    }
    let running = mult.density.piece(1).cumulative(0);
    let total = running[steps];
    let [a1, a2] = mult.atoms;
    let m_arc: Vec<f64> = running.iter().map(|r| -a2 - (total - r)).collect();
    let c = mult.c;

    let psi = [0, 1, 2].map(|k| {
        let pp = mult.psi.piece(k);
        let mut v = Vec::with_capacity((steps + 1) * (n + 2));
        for i in 0..=steps {
            let node = pp.node(i);
            v.extend_from_slice(&node[..n]);
            v.push(node[n] + if k == 1 { m_arc[i] } else { 0.0 });
            v.push(-c);
        }
        v
    });
    let psi = {
        let [p0, p1, p2] = psi;
        [
            Piece::new(0.0, 1.0, steps, n + 2, p0)?,
            Piece::new(0.0, 1.0, steps, n + 2, p1)?,
            Piece::new(0.0, 1.0, steps, n + 2, p2)?,
        ]
    };
    let rho = b.rho();
    let scaled_h = |k: usize| -> Result<Piece> {
        let hp = mult.h.piece(k);
        let vals = hp.values().iter().map(|h| rho[k] * h).collect();
        Piece::new(0.0, 1.0, steps, hp.dim, vals)
    };
    let p0 = mult.psi.piece(0);
    let p1 = mult.psi.piece(1);
    let p2 = mult.psi.piece(2);
    Ok(MultiplierSetB {
        alpha0: 1.0,
        alpha1: a1 + total + a2,
        beta_t: [-c, c, c, c],
        beta5: p0.last()[..n].iter().map(|v| -v).collect(),
        beta6: p1.last()[..n].iter().map(|v| -v).collect(),
        beta7: -p0.last()[n],
        beta8: -p2.first()[n],
        psi,
        sigma: Piece::new(0.0, 1.0, steps, 1, m_arc)?,
        h1: scaled_h(0)?,
        h3: scaled_h(2)?,
    })
}

/// Substitute `mb` into every Problem B condition and report residuals.
///
/// Derivatives in `τ` come from the stored grid values by finite
/// differences; nothing from the Problem A reconstruction is reused.
pub fn verify_b_conditions(
    sys: &dyn ControlSystem,
    b: &ProblemBInstance,
    mb: &MultiplierSetB,
    tol: &Tolerances,
) -> Result<ConditionSet> {
    let n = b.n;
    let nn = n + 1;
    let m = b.m;
    let d = sys.constraint_count();
    let steps = b.steps();
    if mb.psi.iter().any(|p| p.steps != steps || p.dim != nn + 1) || mb.sigma.steps != steps {
        return Err(Error::Invalid("Problem B multipliers do not match the instance grid".into()));
    }

    let mut value = vec![0.0; nn];
    let mut fs = Mat::zeros(nn, nn);
    let mut fu = Mat::zeros(nn, m);
    let mut phi = vec![0.0; d];
    let mut phi_u = Mat::zeros(d, m);

    let psi_scale = mb.psi.iter().fold(mb.sigma.max_abs(), |a, p| a.max(p.max_abs()));
    let mut adjoint: f64 = 0.0;
    let mut time_mult: f64 = 0.0;
    let mut v_stat: f64 = 0.0;
    let mut rho_stat: f64 = 0.0;
    let mut slack: f64 = 0.0;
    let mut primal: f64 = 0.0;
    let mut min_h = f64::INFINITY;
    let mut min_margin = f64::INFINITY;
    let mut rate_scale: f64 = 0.0;

    for (k, iv) in b.intervals.iter().enumerate() {
        let rho = iv.rho;
        let dpsi = mb.psi[k].derivative();
        let dstate = iv.states.derivative();
        let hk = match k {
            0 => Some(&mb.h1),
            2 => Some(&mb.h3),
            _ => None,
        };
        for i in 0..=steps {
            let st = iv.states.node(i);
            let s = &st[..nn];
            let v = iv.controls.node(i);
            let p = mb.psi[k].node(i);
            let sigma = if k == 1 { mb.sigma.node(i)[0] } else { 0.0 };
            sys.dynamics_jacobian(s, v, &mut value, &mut fs, &mut fu)?;
            sys.control_constraint_jacobian(v, &mut phi, &mut phi_u)?;
            rate_scale = rate_scale.max(max_abs(&value));

            // (ψ_r, ψ_y − σ) on the arc, (ψ_r, ψ_y) elsewhere
            let mut q = p[..nn].to_vec();
            q[n] -= sigma;
            let qfs = fs.vec_mul(&q);
            for j in 0..nn {
                adjoint = adjoint.max((dpsi.node(i)[j] + rho * qfs[j]).abs());
            }
            time_mult = time_mult.max(dpsi.node(i)[nn].abs());

            let mut r = fu.vec_mul(&q);
            if let Some(h) = hk {
                let hv = h.node(i);
                for a in 0..d {
                    for (rv, g) in r.iter_mut().zip(phi_u.row(a)) {
                        *rv -= hv[a] * g / rho;
                    }
                    slack = slack.max((hv[a] * phi[a]).abs());
                    min_h = min_h.min(hv[a]);
                    primal = primal.max(phi[a].max(0.0));
                }
                let active = active_indices(&phi, TOL_ACT);
                let rows: Vec<Vec<f64>> = active.iter().map(|&a| phi_u.row(a).to_vec()).collect();
                let (dist, _) = convex_hull_distance(&rows)?;
                min_margin = min_margin.min(dist);
            } else {
                min_margin = min_margin.min(norm(fu.row(n)));
                primal = primal.max(value[n].abs());
            }
            v_stat = v_stat.max(norm(&r));
            rho_stat = rho_stat.max((dot(&q, &value) + p[nn]).abs());

            // dynamics in τ: d(r, y)/dτ = ρF, dt/dτ = ρ
            for j in 0..nn {
                primal = primal.max((dstate.node(i)[j] - rho * value[j]).abs());
            }
            primal = primal.max((dstate.node(i)[nn] - rho).abs());
        }
    }

    let iv = &b.intervals;
    let first = |k: usize| iv[k].states.first();
    let last = |k: usize| iv[k].states.last();
    for k in 0..2 {
        for j in 0..=nn {
            primal = primal.max((last(k)[j] - first(k + 1)[j]).abs());
        }
    }
    primal = primal.max(first(0)[nn].abs()).max((last(2)[nn] - b.horizon).abs());
    let y2_0 = first(1)[n];
    primal = primal.max((-y2_0).max(0.0));
    slack = slack.max((mb.alpha1 * y2_0).abs());

    let mut g0 = vec![0.0; nn];
    let mut g_t = vec![0.0; nn];
    sys.cost_gradient(&first(0)[..nn], &last(2)[..nn], &mut g0, &mut g_t)?;
    let cost_scale = max_abs(&g0).max(max_abs(&g_t));
    let ps = |k: usize| mb.psi[k].first();
    let pe = |k: usize| mb.psi[k].last();
    let mut transversality: f64 = 0.0;
    for j in 0..n {
        for r in [
            ps(0)[j] - g0[j],
            pe(0)[j] + mb.beta5[j],
            ps(1)[j] + mb.beta5[j],
            pe(1)[j] + mb.beta6[j],
            ps(2)[j] + mb.beta6[j],
            pe(2)[j] + g_t[j],
        ] {
            transversality = transversality.max(r.abs());
        }
    }
    for r in [
        ps(0)[n] - g0[n],
        pe(0)[n] + mb.beta7,
        ps(1)[n] + mb.beta7 + mb.alpha1,
        pe(1)[n] + mb.beta8,
        ps(2)[n] + mb.beta8,
        pe(2)[n] + g_t[n],
    ] {
        transversality = transversality.max(r.abs());
    }
    let bt = mb.beta_t;
    for r in [
        ps(0)[nn] - bt[0],
        pe(0)[nn] + bt[1],
        ps(1)[nn] + bt[1],
        pe(1)[nn] + bt[2],
        ps(2)[nn] + bt[2],
        pe(2)[nn] + bt[3],
    ] {
        time_mult = time_mult.max(r.abs());
    }

    let nontriviality = mb.alpha0
        + mb.alpha1.abs()
        + bt.iter().map(|v| v.abs()).sum::<f64>()
        + mb.beta5.iter().chain(&mb.beta6).map(|v| v.abs()).sum::<f64>()
        + mb.beta7.abs()
        + mb.beta8.abs();

    let mut set = ConditionSet::default();
    set.push(ConditionRecord {
        value: Some(nontriviality),
        ..ConditionRecord::new(B_NONTRIVIALITY, if nontriviality > 0.0 { 0.0 } else { 1.0 }, 0.0)
    });
    set.push(ConditionRecord::sign(B_NONNEG_ALPHA, mb.alpha0.min(mb.alpha1), tol.sign));
    set.push(ConditionRecord::sign(B_NONNEG_H, min_h, tol.sign));
    set.push(ConditionRecord::new(B_COMP_SLACK, slack, tol.rel(0.0)));
    set.push(ConditionRecord::new(B_ADJOINT, adjoint, tol.rel(psi_scale)));
    set.push(ConditionRecord::new(B_TRANSVERSALITY, transversality, tol.rel(cost_scale.max(psi_scale))));
    set.push(ConditionRecord::new(B_TIME_MULTIPLIERS, time_mult, tol.rel(psi_scale)));
    set.push(ConditionRecord::new(B_CONTROL_STATIONARITY, v_stat, tol.rel(psi_scale)));
    set.push(ConditionRecord::new(B_RHO_STATIONARITY, rho_stat, tol.rel(psi_scale * (1.0 + rate_scale))));
    let regular = min_margin > tol.regularity.max(ORDER_ONE_THRESHOLD);
    set.push(ConditionRecord {
        value: Some(min_margin),
        ..ConditionRecord::new(B_MIXED_REGULARITY, if regular { 0.0 } else { 1.0 }, 0.0)
    });
    set.push(ConditionRecord::new(B_PRIMAL, primal, tol.rel(rate_scale)));
    Ok(set)
}
