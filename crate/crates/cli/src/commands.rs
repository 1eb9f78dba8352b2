//! Subcommand pipelines. Each returns whether its report passed; errors map
//! to exit code 1 in the binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statecon_core::expr::parse_expr_with_params;
use statecon_core::integrate::Piece;
use statecon_core::model::{boxed_law, simulate_process, ControlSystem, ReferenceProcess};
use statecon_core::reductions::{
    build_problem_b, map_multipliers_a_to_b, verify_b_conditions, verify_problem_c, ProblemD,
};
use statecon_core::report::{ConditionRecord, StationarityReport};
use statecon_core::stationarity::{reconstruct_multipliers, verify_stationarity, Multipliers, Tolerances};
use statecon_core::variations::{
    as_family, build_variation, bump_family, check_dj_inequality, directional_derivative, measure_pairing,
    pairing_identity_residual, perturb_process, ExprKappa, Kappa, TrigKappa,
};

use crate::document::{Kind, ProblemDocument};
use crate::error::{CliError, CliResult};
use crate::output::*;

pub const DEFAULT_GRID: usize = 2000;

/// Flags shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub grid: Option<usize>,
    pub tol: Option<f64>,
    pub report: Option<PathBuf>,
    pub csv_out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    /// Human-readable summary for stdout.
    pub summary: String,
}

/// Bundled problem files.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "atoms" => Some(include_str!("../problems/atoms.ocp")),
        "density" => Some(include_str!("../problems/density.ocp")),
        "noatom" => Some(include_str!("../problems/noatom.ocp")),
        "smooth" => Some(include_str!("../problems/smooth.ocp")),
        "sheared" => Some(include_str!("../problems/sheared.ocp")),
        _ => None,
    }
}

pub const BUNDLED: &[&str] = &["atoms", "density", "noatom", "smooth", "sheared"];

pub fn parse_overrides(pairs: &[String]) -> CliResult<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for p in pairs {
        let (k, v) = p.split_once('=').ok_or_else(|| CliError::Usage(format!("--param expects k=v, got `{p}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| CliError::Usage(format!("--param {k}: `{v}` is not a number")))?;
        if out.insert(k.trim().to_string(), v).is_some() {
            return Err(CliError::Usage(format!("--param {k} given twice")));
        }
    }
    Ok(out)
}

fn tolerances(doc: &ProblemDocument, opts: &Options) -> CliResult<Tolerances> {
    let mut t = doc.tolerances;
    if let Some(m) = opts.tol {
        if !(m > 0.0 && m.is_finite()) {
            return Err(CliError::Usage("--tol must be positive".into()));
        }
        t.master = m;
    }
    Ok(t)
}

fn grid(doc: &ProblemDocument, opts: &Options) -> CliResult<usize> {
    let g = opts.grid.or(doc.steps).unwrap_or(DEFAULT_GRID);
    if g < 4 {
        return Err(CliError::Usage("--grid must be at least 4".into()));
    }
    Ok(g)
}

fn csv_dir(opts: &Options) -> CliResult<Option<&Path>> {
    if let Some(d) = &opts.csv_out {
        std::fs::create_dir_all(d)?;
    }
    Ok(opts.csv_out.as_deref())
}

/// A verified pipeline in Problem A coordinates, ready for reductions and
/// variations. For kind C documents this is Problem D.
pub struct Pipeline {
    pub doc: ProblemDocument,
    pub steps: usize,
    pub tol: Tolerances,
    pub system: Box<dyn ControlSystem>,
    pub reference: ReferenceProcess,
    pub multipliers: Multipliers,
    /// Report in the document's own coordinates.
    pub report: StationarityReport,
    /// For kind C: multipliers in `y`, plus the `y` reference.
    pub native: Option<(Multipliers, ReferenceProcess)>,
}

pub fn run_pipeline(doc: ProblemDocument, opts: &Options) -> CliResult<Pipeline> {
    let steps = grid(&doc, opts)?;
    let tol = tolerances(&doc, opts)?;
    let law = boxed_law(doc.control_pieces()?);
    let r = &doc.reference;
    match doc.kind {
        Kind::A => {
            let (p, order) = doc.problem_a()?;
            let init: Vec<f64> = order.iter().map(|&i| r.initial[i]).collect();
            let w = simulate_process(&p, law, r.t1, r.t2, &init, steps)?;
            let m = reconstruct_multipliers(&p, &w)?;
            let report = verify_stationarity(&p, &w, &m, &tol)?;
            Ok(Pipeline { doc, steps, tol, system: Box::new(p), reference: w, multipliers: m, report, native: None })
        }
        Kind::C => {
            let pc = doc.problem_c()?;
            let cv = doc.change_of_variables(&pc)?;
            let w_y = simulate_process(&pc, law, r.t1, r.t2, &r.initial, steps)?;
            let run = verify_problem_c(&pc, &cv, &w_y, &tol)?;
            let pd: ProblemD = run.problem_d;
            Ok(Pipeline {
                doc,
                steps,
                tol,
                system: Box::new(pd),
                reference: run.reference_d,
                multipliers: run.multipliers_d,
                report: run.report,
                native: Some((run.multipliers_c, w_y)),
            })
        }
    }
}

fn condition_lines(out: &mut String, conditions: &[ConditionRecord]) {
    for c in conditions {
        let _ = writeln!(
            out,
            "  {:<24} {:>11.3e} {:>11.3e}  {}",
            c.name,
            c.residual,
            c.tol,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
}

fn verdict_line(pass: bool) -> &'static str {
    if pass {
        "verdict: PASS"
    } else {
        "verdict: FAIL"
    }
}

pub fn cmd_verify(doc: ProblemDocument, opts: &Options) -> CliResult<Outcome> {
    let pl = run_pipeline(doc, opts)?;
    let r = &pl.report;
    let kind = if pl.doc.kind == Kind::A { "A" } else { "C" };
    if let Some(path) = &opts.report {
        write_json(path, &VerifyJson::new(&pl.doc.name, kind, pl.steps, r))?;
    }
    if let Some(dir) = csv_dir(opts)? {
        let (mult, w, names) = match &pl.native {
            Some((m, w)) => (m, w, pl.doc.states.clone()),
            None => (&pl.multipliers, &pl.reference, pl.system.state_names()),
        };
        let mut header: Vec<String> = names.iter().map(|s| format!("psi_{s}")).collect();
        header.push("density".into());
        header.extend((0..mult.h.dim()).map(|k| format!("h{}", k + 1)));
        header.push("measure".into());
        let measure = mult.cumulative_measure()?;
        write_signals_csv(&dir.join("multipliers.csv"), &header, &[&mult.psi, &mult.density, &mult.h, &measure])?;
        let mut header: Vec<String> = names.clone();
        header.extend(pl.doc.controls.iter().cloned());
        let controls = w.control_signal()?;
        write_signals_csv(&dir.join("state.csv"), &header, &[w.state(), &controls])?;
    }
    let mut s = String::new();
    let _ = writeln!(s, "{} (kind {kind}, grid {})", pl.doc.name, pl.steps);
    condition_lines(&mut s, &r.conditions);
    let _ = writeln!(s, "  atoms: t1 {:.9}, t2 {:.9}", r.atoms[0], r.atoms[1]);
    let _ = writeln!(s, "  c: {:.9}", r.c);
    let _ = writeln!(s, "  min density: {:.9}", r.min_density);
    let _ = writeln!(s, "{}", verdict_line(r.verdict()));
    Ok(Outcome { pass: r.verdict(), summary: s })
}

pub fn cmd_reduce_b(doc: ProblemDocument, opts: &Options) -> CliResult<Outcome> {
    let pl = run_pipeline(doc, opts)?;
    let sys = pl.system.as_ref();
    let b = build_problem_b(sys, &pl.reference)?;
    let mb = map_multipliers_a_to_b(&pl.multipliers, &b)?;
    let set = verify_b_conditions(sys, &b, &mb, &pl.tol)?;
    if let Some(path) = &opts.report {
        write_json(
            path,
            &ReduceJson {
                schema: SCHEMA,
                problem: &pl.doc.name,
                grid: pl.steps,
                rho: b.rho(),
                alpha0: mb.alpha0,
                alpha1: mb.alpha1,
                beta_t: mb.beta_t,
                beta5: &mb.beta5,
                beta6: &mb.beta6,
                beta7: mb.beta7,
                beta8: mb.beta8,
                conditions: &set.conditions,
                verdict: set.verdict(),
                violations: set.violations(),
            },
        )?;
    }
    if let Some(dir) = csv_dir(opts)? {
        write_b_csv(&dir.join("problem_b.csv"), sys, &b, &mb)?;
    }
    let mut s = String::new();
    let rho = b.rho();
    let _ = writeln!(s, "{} as Problem B (grid {}, rho = {:?})", pl.doc.name, pl.steps, rho);
    condition_lines(&mut s, &set.conditions);
    let _ = writeln!(s, "  alpha1: {:.9}", mb.alpha1);
    let _ = writeln!(s, "{}", verdict_line(set.verdict()));
    Ok(Outcome { pass: set.verdict(), summary: s })
}

fn write_b_csv(
    path: &Path,
    sys: &dyn ControlSystem,
    b: &statecon_core::reductions::ProblemBInstance,
    mb: &statecon_core::reductions::MultiplierSetB,
) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let names = sys.state_names();
    let n = b.n;
    let mut header = vec!["i".to_string(), "tau".to_string()];
    header.extend(names[..n].iter().map(|s| format!("r_{s}")));
    header.extend(["y".into(), "t".into()]);
    header.extend(names[..n].iter().map(|s| format!("psi_r_{s}")));
    header.extend(["psi_y".into(), "psi_t".into(), "sigma".into()]);
    header.extend((0..mb.h1.dim).map(|k| format!("h{}", k + 1)));
    w.write_record(&header)?;
    for (k, iv) in b.intervals.iter().enumerate() {
        for j in 0..=iv.states.steps {
            let mut rec = vec![(k + 1).to_string(), format!("{:.17e}", iv.states.time(j))];
            rec.extend(iv.states.node(j).iter().map(|v| format!("{v:.17e}")));
            rec.extend(mb.psi[k].node(j).iter().map(|v| format!("{v:.17e}")));
            rec.push(if k == 1 { format!("{:.17e}", mb.sigma.node(j)[0]) } else { String::new() });
            let h: Option<&Piece> = match k {
                0 => Some(&mb.h1),
                2 => Some(&mb.h3),
                _ => None,
            };
            match h {
                Some(h) => rec.extend(h.node(j).iter().map(|v| format!("{v:.17e}"))),
                None => rec.extend((0..mb.h1.dim).map(|_| String::new())),
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Options specific to `variation`.
#[derive(Debug, Clone)]
pub struct VariationOptions {
    /// `κ` expressions in `t`; params may appear.
    pub kappas: Vec<String>,
    /// Number of random positive trigonometric `κ` (seeded).
    pub random: usize,
    /// Bump centres per width in the nonnegative family.
    pub bump_centres: usize,
    pub eps: Vec<f64>,
}

impl Default for VariationOptions {
    fn default() -> Self {
        VariationOptions { kappas: Vec::new(), random: 0, bump_centres: 9, eps: vec![1e-2, 1e-3, 1e-4] }
    }
}

pub fn random_trig(rng: &mut ChaCha8Rng, t1: f64, t2: f64, positive: bool) -> TrigKappa {
    let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let spread: f64 = a.iter().chain(&b).map(|v| v.abs()).sum();
    let c0 = if positive { spread + rng.gen_range(0.1..1.0) } else { rng.gen_range(-1.0..1.0) };
    TrigKappa { c0, a, b, t1, t2 }
}

fn loglog_slope(eps: &[f64], err: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        eps.iter().zip(err).filter(|(_, e)| **e > 0.0).map(|(x, e)| (x.log10(), e.log10())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

pub fn cmd_variation(doc: ProblemDocument, opts: &Options, vopts: &VariationOptions) -> CliResult<Outcome> {
    let pl = run_pipeline(doc, opts)?;
    let sys = pl.system.as_ref();
    let w = &pl.reference;
    let m = &pl.multipliers;
    let tol = pl.tol.master;

    let mut kappas: Vec<Box<dyn Kappa>> = Vec::new();
    for src in &vopts.kappas {
        let e = parse_expr_with_params(src, &["t"], &pl.doc.params)
            .map_err(|e| CliError::Usage(format!("--kappa `{src}`: {e}")))?;
        kappas.push(Box::new(ExprKappa::new(e)?));
    }
    if vopts.random > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.unwrap_or(0));
        for _ in 0..vopts.random {
            kappas.push(Box::new(random_trig(&mut rng, w.t1, w.t2, true)));
        }
    }
    if kappas.is_empty() {
        kappas.push(Box::new(ExprKappa::new(statecon_core::Expr::Const(1.0))?));
    }

    let mut rows = Vec::with_capacity(kappas.len());
    let mut all_pass = true;
    let mut first_var = None;
    for k in &kappas {
        let var = build_variation(sys, w, k.as_ref())?;
        let pr = pairing_identity_residual(sys, w, m, &var, k.as_ref())?;
        let dj = directional_derivative(sys, w, &var)?;
        let mp = measure_pairing(w, m, k.as_ref())?;
        let mut ladder = Vec::with_capacity(vopts.eps.len());
        for &eps in &vopts.eps {
            let p = perturb_process(sys, w, &var, eps)?;
            let q = p.cost_gap / eps;
            ladder.push(LadderStep { eps, quotient: q, error: (q - dj).abs(), feasible: p.feasible() });
        }
        let errs: Vec<f64> = ladder.iter().map(|l| l.error).collect();
        let slope = loglog_slope(&vopts.eps, &errs);
        let pass = pr.rel <= tol && (dj - mp).abs() <= tol * (1.0 + dj.abs());
        all_pass &= pass;
        rows.push(KappaJson {
            kappa: k.describe(),
            pairing_lhs: pr.lhs,
            pairing_rhs: pr.rhs,
            pairing_abs: pr.abs,
            pairing_rel: pr.rel,
            directional_derivative: dj,
            measure_pairing: mp,
            ladder,
            slope,
            pass,
        });
        if first_var.is_none() {
            first_var = Some(var);
        }
    }

    let bumps = bump_family(w.t1, w.t2, vopts.bump_centres.max(1));
    let dj_rep = check_dj_inequality(w, m, &as_family(&bumps), tol)?;
    let family = FamilyJson {
        size: bumps.len(),
        min_value: dj_rep.min_value,
        argmin: dj_rep.argmin_label.clone(),
        nonnegative: dj_rep.nonnegative,
    };
    let verdict = all_pass && dj_rep.nonnegative;

    if let Some(path) = &opts.report {
        write_json(
            path,
            &VariationJson {
                schema: SCHEMA,
                problem: &pl.doc.name,
                grid: pl.steps,
                kappas: rows.clone(),
                family: family.clone(),
                verdict,
            },
        )?;
    }
    if let (Some(dir), Some(var)) = (csv_dir(opts)?, &first_var) {
        let names = sys.state_names();
        let mut header: Vec<String> = names.iter().map(|s| format!("{s}_bar")).collect();
        header.extend(sys.control_names().iter().map(|s| format!("{s}_bar")));
        write_signals_csv(&dir.join("variation.csv"), &header, &[&var.state, &var.control])?;
    }

    let mut s = String::new();
    let _ = writeln!(s, "{} variations (grid {})", pl.doc.name, pl.steps);
    for r in &rows {
        let _ = writeln!(
            s,
            "  kappa {}: pairing rel {:.3e}, J'w = {:.9}, measure pairing = {:.9}, slope {}  {}",
            r.kappa,
            r.pairing_rel,
            r.directional_derivative,
            r.measure_pairing,
            r.slope.map_or("-".to_string(), |v| format!("{v:.3}")),
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    let _ = writeln!(
        s,
        "  bump family ({}): min {:.6e} at {}  {}",
        family.size,
        family.min_value,
        family.argmin,
        if family.nonnegative { "PASS" } else { "FAIL" }
    );
    let _ = writeln!(s, "{}", verdict_line(verdict));
    Ok(Outcome { pass: verdict, summary: s })
}
