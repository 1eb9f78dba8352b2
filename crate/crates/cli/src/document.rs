//! `.ocp` problem files.
//!
//! Line-oriented, INI-style. `#` starts a comment line. Sections:
//!
//! ```text
//! [meta]              name, kind (A or C), T
//! [params]            name = constant expression over earlier params
//! [states]            one name per line (or comma separated)
//! [controls]          same
//! [dynamics]          state = expression
//! [cost]              one expression over <state>_0 and <state>_T
//! [control_constraints] one expression per line, meaning expr <= 0
//! [state_constraint]  kind A: the constrained state; kind C: Φ(y) >= 0
//! [reference]         t1, t2, <control>.<interval> = expr in t,
//!                     initial.<state> = constant expression
//! [change_of_vars]    kind C: one P component per line (key = expr)
//! [grid]              steps
//! [tolerances]        master, sign, regularity
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use statecon_core::expr::{parse_expr_with_params, Expr};
use statecon_core::model::{ControlPieces, ProblemA, ProblemAParts, ProblemC, ProblemCParts};
use statecon_core::reductions::ChangeOfVariables;
use statecon_core::stationarity::Tolerances;

use crate::error::{CliError, CliResult};

const SECTIONS: &[&str] = &[
    "meta",
    "params",
    "states",
    "controls",
    "dynamics",
    "cost",
    "control_constraints",
    "state_constraint",
    "reference",
    "change_of_vars",
    "grid",
    "tolerances",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    A,
    C,
}

#[derive(Debug, Clone)]
pub struct ReferenceSpec {
    pub t1: f64,
    pub t2: f64,
    /// Control expressions in `t`, per interval.
    pub controls: Vec<Vec<Expr>>,
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ProblemDocument {
    pub name: String,
    pub kind: Kind,
    pub horizon: f64,
    pub params: BTreeMap<String, f64>,
    pub states: Vec<String>,
    pub controls: Vec<String>,
    /// In state order.
    pub dynamics: Vec<Expr>,
    pub cost: Expr,
    pub control_constraints: Vec<Expr>,
    pub state_constraint: Expr,
    pub reference: ReferenceSpec,
    pub change_of_vars: Option<Vec<Expr>>,
    pub steps: Option<usize>,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone)]
struct Line {
    no: usize,
    key: Option<String>,
    value: String,
}

struct Raw<'a> {
    path: &'a str,
    sections: BTreeMap<String, Vec<Line>>,
}

impl<'a> Raw<'a> {
    fn err(&self, line: usize, msg: impl Into<String>) -> CliError {
        CliError::Document { path: self.path.to_string(), line, msg: msg.into() }
    }

    fn lines(&self, s: &str) -> &[Line] {
        self.sections.get(s).map_or(&[], Vec::as_slice)
    }

    fn keyed(&self, s: &str, key: &str) -> Option<&Line> {
        self.lines(s).iter().find(|l| l.key.as_deref() == Some(key))
    }

    fn required(&self, s: &str, key: &str) -> CliResult<&Line> {
        self.keyed(s, key).ok_or_else(|| self.err(0, format!("[{s}] needs `{key}`")))
    }

    fn names(&self, s: &str) -> CliResult<Vec<String>> {
        let mut out = Vec::new();
        for l in self.lines(s) {
            if l.key.is_some() {
                return Err(self.err(l.no, format!("[{s}] lists names, not assignments")));
            }
            for n in l.value.split(',').map(str::trim).filter(|n| !n.is_empty()) {
                if !is_ident(n) {
                    return Err(self.err(l.no, format!("`{n}` is not a valid name")));
                }
                if out.iter().any(|o| o == n) {
                    return Err(self.err(l.no, format!("`{n}` declared twice")));
                }
                out.push(n.to_string());
            }
        }
        Ok(out)
    }

    fn expr(&self, l: &Line, vars: &[&str], params: &BTreeMap<String, f64>) -> CliResult<Expr> {
        parse_expr_with_params(&l.value, vars, params).map_err(|e| self.err(l.no, e.to_string()))
    }

    fn constant(&self, l: &Line, params: &BTreeMap<String, f64>) -> CliResult<f64> {
        let e = self.expr(l, &[], params)?;
        let v = e.compile(&[]).and_then(|c| c.eval(&[])).map_err(|e| self.err(l.no, e.to_string()))?;
        if !v.is_finite() {
            return Err(self.err(l.no, "value is not finite"));
        }
        Ok(v)
    }
}

fn is_ident(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

fn split(path: &str, text: &str) -> CliResult<BTreeMap<String, Vec<Line>>> {
    let mut sections: BTreeMap<String, Vec<Line>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| CliError::Document { path: path.to_string(), line: no, msg };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?.trim();
            if !SECTIONS.contains(&name) {
                return Err(err(format!("unknown section [{name}]")));
            }
            if sections.contains_key(name) {
                return Err(err(format!("section [{name}] appears twice")));
            }
            sections.insert(name.to_string(), Vec::new());
            current = Some(name.to_string());
            continue;
        }
        let sec = current.as_ref().ok_or_else(|| err("content before the first section".into()))?;
        let keyed_section =
            !matches!(sec.as_str(), "states" | "controls" | "cost" | "control_constraints" | "state_constraint");
        let (key, value) = match line.split_once('=') {
            Some((k, v)) if keyed_section => (Some(k.trim().to_string()), v.trim().to_string()),
            _ if keyed_section => return Err(err(format!("[{sec}] expects `key = value`"))),
            _ => (None, line.to_string()),
        };
        let lines = sections.get_mut(sec).expect("section exists");
        if let Some(k) = &key {
            if lines.iter().any(|l| l.key.as_ref() == Some(k)) {
                return Err(err(format!("`{k}` assigned twice in [{sec}]")));
            }
        }
        lines.push(Line { no, key, value });
    }
    Ok(sections)
}

impl ProblemDocument {
    pub fn load(path: &Path, overrides: &BTreeMap<String, f64>) -> CliResult<ProblemDocument> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        ProblemDocument::parse(&path.display().to_string(), &text, overrides)
    }

    /// Parse a document; `overrides` replace declared params before any
    /// dependent value is computed.
    pub fn parse(path: &str, text: &str, overrides: &BTreeMap<String, f64>) -> CliResult<ProblemDocument> {
        let raw = Raw { path, sections: split(path, text)? };

        let mut params = BTreeMap::new();
        for l in raw.lines("params") {
            let key = l.key.clone().expect("keyed");
            if !is_ident(&key) {
                return Err(raw.err(l.no, format!("`{key}` is not a valid name")));
            }
            let v = match overrides.get(&key) {
                Some(v) => *v,
                None => raw.constant(l, &params)?,
            };
            params.insert(key, v);
        }
        if let Some(k) = overrides.keys().find(|k| !params.contains_key(*k)) {
            return Err(CliError::Usage(format!("--param {k} is not declared in [params]")));
        }

        let name = raw.keyed("meta", "name").map_or_else(|| "problem".to_string(), |l| l.value.clone());
        let kind = match raw.keyed("meta", "kind").map(|l| l.value.as_str()) {
            None | Some("A") => Kind::A,
            Some("C") => Kind::C,
            Some(other) => {
                return Err(raw.err(raw.keyed("meta", "kind").unwrap().no, format!("unknown kind `{other}`")))
            }
        };
        let horizon = raw.constant(raw.required("meta", "T")?, &params)?;

        let states = raw.names("states")?;
        let controls = raw.names("controls")?;
        if states.is_empty() || controls.is_empty() {
            return Err(raw.err(0, "need at least one state and one control"));
        }
        if let Some(c) = states.iter().find(|s| controls.contains(s) || params.contains_key(*s)) {
            return Err(raw.err(0, format!("`{c}` is declared more than once")));
        }
        let su: Vec<&str> = states.iter().chain(&controls).map(String::as_str).collect();
        let mut dynamics = Vec::with_capacity(states.len());
        for s in &states {
            let l = raw.keyed("dynamics", s).ok_or_else(|| raw.err(0, format!("no dynamics for state `{s}`")))?;
            dynamics.push(raw.expr(l, &su, &params)?);
        }
        if let Some(l) = raw.lines("dynamics").iter().find(|l| !states.contains(l.key.as_ref().unwrap())) {
            return Err(raw.err(l.no, format!("dynamics for undeclared state `{}`", l.key.as_ref().unwrap())));
        }

        let ends: Vec<String> =
            states.iter().map(|s| format!("{s}_0")).chain(states.iter().map(|s| format!("{s}_T"))).collect();
        let ends: Vec<&str> = ends.iter().map(String::as_str).collect();
        let cost = match raw.lines("cost") {
            [l] => raw.expr(l, &ends, &params)?,
            _ => return Err(raw.err(0, "[cost] needs exactly one expression")),
        };

        let cvars: Vec<&str> = controls.iter().map(String::as_str).collect();
        let control_constraints = raw
            .lines("control_constraints")
            .iter()
            .map(|l| raw.expr(l, &cvars, &params))
            .collect::<CliResult<Vec<_>>>()?;

        let svars: Vec<&str> = states.iter().map(String::as_str).collect();
        let state_constraint = match raw.lines("state_constraint") {
            [l] => raw.expr(l, &svars, &params)?,
            _ => return Err(raw.err(0, "[state_constraint] needs exactly one expression")),
        };
        if kind == Kind::A {
            match &state_constraint {
                Expr::Var(_) => {}
                _ => return Err(raw.err(0, "kind A needs the constrained state's name in [state_constraint]")),
            }
        }

        let t1 = raw.constant(raw.required("reference", "t1")?, &params)?;
        let t2 = raw.constant(raw.required("reference", "t2")?, &params)?;
        let mut ref_controls: Vec<Vec<Expr>> = (0..3).map(|_| Vec::with_capacity(controls.len())).collect();
        for (k, piece) in ref_controls.iter_mut().enumerate() {
            for c in &controls {
                let key = format!("{c}.{}", k + 1);
                piece.push(raw.expr(raw.required("reference", &key)?, &["t"], &params)?);
            }
        }
        let mut initial = Vec::with_capacity(states.len());
        for s in &states {
            initial.push(raw.constant(raw.required("reference", &format!("initial.{s}"))?, &params)?);
        }
        for l in raw.lines("reference") {
            let k = l.key.as_deref().unwrap();
            let known = k == "t1"
                || k == "t2"
                || k.strip_prefix("initial.").is_some_and(|s| states.iter().any(|x| x == s))
                || k.split_once('.')
                    .is_some_and(|(c, i)| controls.iter().any(|x| x == c) && ["1", "2", "3"].contains(&i));
            if !known {
                return Err(raw.err(l.no, format!("unknown [reference] key `{k}`")));
            }
        }

        let change_of_vars = if raw.sections.contains_key("change_of_vars") {
            if kind == Kind::A {
                return Err(raw.err(0, "[change_of_vars] only applies to kind C"));
            }
            Some(
                raw.lines("change_of_vars")
                    .iter()
                    .map(|l| raw.expr(l, &svars, &params))
                    .collect::<CliResult<Vec<_>>>()?,
            )
        } else {
            None
        };

        let steps = match raw.keyed("grid", "steps") {
            Some(l) => {
                let v = raw.constant(l, &params)?;
                if !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(raw.err(l.no, "steps must be a positive integer"));
                }
                Some(v as usize)
            }
            None => None,
        };
        let mut tolerances = Tolerances::default();
        for l in raw.lines("tolerances") {
            let v = raw.constant(l, &params)?;
            match l.key.as_deref().unwrap() {
                "master" => tolerances.master = v,
                "sign" => tolerances.sign = v,
                "regularity" => tolerances.regularity = v,
                other => return Err(raw.err(l.no, format!("unknown tolerance `{other}`"))),
            }
        }

        Ok(ProblemDocument {
            name,
            kind,
            horizon,
            params,
            states,
            controls,
            dynamics,
            cost,
            control_constraints,
            state_constraint,
            reference: ReferenceSpec { t1, t2, controls: ref_controls, initial },
            change_of_vars,
            steps,
            tolerances,
        })
    }

    /// Index of the constrained state for kind A.
    fn constrained_index(&self) -> CliResult<usize> {
        match &self.state_constraint {
            Expr::Var(x) => self
                .states
                .iter()
                .position(|s| s == x)
                .ok_or_else(|| CliError::Usage(format!("constrained state `{x}` is not declared"))),
            _ => Err(CliError::Usage("kind A needs a state name as the state constraint".into())),
        }
    }

    /// Kind A document as a Problem A instance, with the constrained state
    /// moved last. Returns the permutation from problem order to file order.
    pub fn problem_a(&self) -> CliResult<(ProblemA, Vec<usize>)> {
        if self.kind != Kind::A {
            return Err(CliError::Usage("not a kind A document".into()));
        }
        let xi = self.constrained_index()?;
        let mut order: Vec<usize> = (0..self.states.len()).filter(|&i| i != xi).collect();
        order.push(xi);
        let p = ProblemA::new(ProblemAParts {
            name: self.name.clone(),
            z: order[..order.len() - 1].iter().map(|&i| self.states[i].clone()).collect(),
            x: self.states[xi].clone(),
            u: self.controls.clone(),
            f: order[..order.len() - 1].iter().map(|&i| self.dynamics[i].clone()).collect(),
            g: self.dynamics[xi].clone(),
            phi: self.control_constraints.clone(),
            cost: self.cost.clone(),
            horizon: self.horizon,
        })?;
        Ok((p, order))
    }

    pub fn problem_c(&self) -> CliResult<ProblemC> {
        Ok(ProblemC::new(ProblemCParts {
            name: self.name.clone(),
            y: self.states.clone(),
            u: self.controls.clone(),
            f: self.dynamics.clone(),
            state_constraint: self.state_constraint.clone(),
            phi: self.control_constraints.clone(),
            cost: self.cost.clone(),
            horizon: self.horizon,
        })?)
    }

    /// `[change_of_vars]`, or the identity split when `Φ` is a plain state.
    pub fn change_of_variables(&self, pc: &ProblemC) -> CliResult<ChangeOfVariables> {
        match (&self.change_of_vars, &self.state_constraint) {
            (Some(p), _) => Ok(ChangeOfVariables::for_problem(pc, p.clone())?),
            (None, Expr::Var(x)) => {
                let p = self.states.iter().filter(|s| *s != x).map(|s| Expr::Var(s.clone())).collect();
                Ok(ChangeOfVariables::for_problem(pc, p)?)
            }
            (None, _) => Err(CliError::Usage("kind C with a general state constraint needs [change_of_vars]".into())),
        }
    }

    pub fn control_pieces(&self) -> CliResult<ControlPieces> {
        Ok(ControlPieces::new(self.reference.controls.clone())?)
    }
}
