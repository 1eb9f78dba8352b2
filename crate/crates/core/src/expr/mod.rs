//! Expression trees with forward-mode differentiation.
//!
//! Expressions are parsed once against a declared variable set, then either
//! evaluated by name through an [`EvalPoint`] or compiled to a slot-indexed
//! [`Compiled`] form for repeated evaluation on grids.

mod parse;
mod scalar;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

pub use scalar::{Dual, HyperDual, Scalar};

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Expr {
    Const(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Neg(Box<Expr>),
    Func(Func, Box<Expr>),
}

/// Parse `text`, accepting only names in `allowed_vars`.
pub fn parse_expr(text: &str, allowed_vars: &[&str]) -> Result<Expr> {
    parse::Parser::new(text, allowed_vars, None)?.parse_all()
}

/// Parse `text`; names found in `params` (and not in `allowed_vars`) are
/// replaced by their values.
pub fn parse_expr_with_params(text: &str, allowed_vars: &[&str], params: &BTreeMap<String, f64>) -> Result<Expr> {
    parse::Parser::new(text, allowed_vars, Some(params))?.parse_all()
}

/// Named variable values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalPoint {
    values: BTreeMap<String, f64>,
}

impl EvalPoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

impl<'a> FromIterator<(&'a str, f64)> for EvalPoint {
    fn from_iter<I: IntoIterator<Item = (&'a str, f64)>>(iter: I) -> Self {
        let mut p = EvalPoint::new();
        for (k, v) in iter {
            p.set(k, v);
        }
        p
    }
}

/// Evaluate `e` at `p`.
pub fn eval(e: &Expr, p: &EvalPoint) -> Result<f64> {
    let (c, x) = compile_at(e, &[], p)?;
    c.eval(&x)
}

/// Gradient of `e` with respect to `vars` at `p`.
pub fn grad(e: &Expr, vars: &[&str], p: &EvalPoint) -> Result<Vec<f64>> {
    let (c, x) = compile_at(e, vars, p)?;
    let mut full = alloc::vec![0.0; x.len()];
    c.gradient(&x, &mut full)?;
    full.truncate(vars.len());
    Ok(full)
}

/// Hessian of `e` with respect to `vars` at `p`.
pub fn hessian(e: &Expr, vars: &[&str], p: &EvalPoint) -> Result<Mat> {
    let (c, x) = compile_at(e, vars, p)?;
    c.hessian_block(&x, vars.len())
}

// Compiles with `vars` in the leading slots followed by the remaining free
// variables, and gathers their values from `p`.
fn compile_at(e: &Expr, vars: &[&str], p: &EvalPoint) -> Result<(Compiled, Vec<f64>)> {
    let mut order: Vec<&str> = vars.to_vec();
    let free = e.free_vars();
    for name in &free {
        if !order.contains(&name.as_str()) {
            order.push(name.as_str());
        }
    }
    let x = order
        .iter()
        .map(|n| p.get(n).ok_or_else(|| Error::UnboundVariable((*n).to_string())))
        .collect::<Result<Vec<f64>>>()?;
    Ok((e.compile(&order)?, x))
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(n) => {
                out.insert(n.clone());
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Pow(a, _) | Expr::Neg(a) | Expr::Func(_, a) => a.collect_vars(out),
        }
    }

    /// Replace variables by expressions. Unmapped variables are kept.
    pub fn substitute(&self, map: &BTreeMap<String, Expr>) -> Expr {
        let bx = |e: &Expr| Box::new(e.substitute(map));
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(n) => map.get(n).cloned().unwrap_or_else(|| Expr::Var(n.clone())),
            Expr::Add(a, b) => Expr::Add(bx(a), bx(b)),
            Expr::Sub(a, b) => Expr::Sub(bx(a), bx(b)),
            Expr::Mul(a, b) => Expr::Mul(bx(a), bx(b)),
            Expr::Div(a, b) => Expr::Div(bx(a), bx(b)),
            Expr::Pow(a, k) => Expr::Pow(bx(a), *k),
            Expr::Neg(a) => Expr::Neg(bx(a)),
            Expr::Func(f, a) => Expr::Func(*f, bx(a)),
        }
    }

    /// Resolve variable names to slots in `vars`.
    pub fn compile(&self, vars: &[&str]) -> Result<Compiled> {
        Ok(Compiled { root: self.to_node(vars)?, arity: vars.len() })
    }

    fn to_node(&self, vars: &[&str]) -> Result<Node> {
        let bx = |e: &Expr| e.to_node(vars).map(Box::new);
        Ok(match self {
            Expr::Const(c) => Node::Const(*c),
            Expr::Var(n) => {
                Node::Var(vars.iter().position(|v| v == n).ok_or_else(|| Error::UnboundVariable(n.clone()))?)
            }
            Expr::Add(a, b) => Node::Add(bx(a)?, bx(b)?),
            Expr::Sub(a, b) => Node::Sub(bx(a)?, bx(b)?),
            Expr::Mul(a, b) => Node::Mul(bx(a)?, bx(b)?),
            Expr::Div(a, b) => Node::Div(bx(a)?, bx(b)?),
            Expr::Pow(a, k) => Node::Pow(bx(a)?, *k),
            Expr::Neg(a) => Node::Neg(bx(a)?),
            Expr::Func(f, a) => Node::Func(*f, bx(a)?),
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if c.is_sign_negative() => write!(f, "(-{})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(n) => f.write_str(n),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => {
                let base = match **a {
                    Expr::Pow(..) => format!("({a})"),
                    _ => format!("{a}"),
                };
                if *k < 0 {
                    write!(f, "(1 / {base}^{})", k.unsigned_abs())
                } else {
                    write!(f, "{base}^{k}")
                }
            }
            // Keep `-` away from a bare literal so it is not folded on reparse.
            Expr::Neg(a) if matches!(**a, Expr::Const(_)) => write!(f, "(-({a}))"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Func(func, a) => match **a {
                Expr::Add(..) | Expr::Sub(..) | Expr::Mul(..) | Expr::Div(..) | Expr::Neg(..) => {
                    write!(f, "{}{a}", func.name())
                }
                _ => write!(f, "{}({a})", func.name()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Neg(Box<Node>),
    Func(Func, Box<Node>),
}

/// An expression with variables bound to argument slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Compiled {
    root: Node,
    arity: usize,
}

impl Compiled {
    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Evaluate over any [`Scalar`], reading slot `i` through `arg(i)`.
    pub fn eval_with<S: Scalar>(&self, arg: &impl Fn(usize) -> S) -> Result<S> {
        eval_node(&self.root, arg)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.eval_with(&|i| x[i])
    }

    /// Value and derivative along `dir`.
    pub fn directional(&self, x: &[f64], dir: &[f64]) -> Result<(f64, f64)> {
        let d = self.eval_with(&|i| Dual::new(x[i], dir[i]))?;
        Ok((d.v, d.d))
    }

    /// Fills `out` (length = arity) with the gradient and returns the value.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<f64> {
        let mut value = 0.0;
        if self.arity == 0 {
            return self.eval(x);
        }
        for (k, o) in out.iter_mut().enumerate().take(self.arity) {
            let d = self.eval_with(&|i| Dual::new(x[i], if i == k { 1.0 } else { 0.0 }))?;
            *o = d.d;
            value = d.v;
        }
        Ok(value)
    }

    /// `pᵀ H q` at `x`.
    pub fn second_directional(&self, x: &[f64], p: &[f64], q: &[f64]) -> Result<f64> {
        Ok(self.eval_with(&|i| HyperDual::new(x[i], p[i], q[i]))?.ab)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<Mat> {
        self.hessian_block(x, self.arity)
    }

    // Leading k×k block. Each off-diagonal entry is computed once and written
    // to both positions, so the result is exactly symmetric.
    fn hessian_block(&self, x: &[f64], k: usize) -> Result<Mat> {
        let mut h = Mat::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let v = self
                    .eval_with(&|i| {
                        HyperDual::new(x[i], if i == a { 1.0 } else { 0.0 }, if i == b { 1.0 } else { 0.0 })
                    })?
                    .ab;
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        Ok(h)
    }
}

fn eval_node<S: Scalar>(n: &Node, arg: &impl Fn(usize) -> S) -> Result<S> {
    Ok(match n {
        Node::Const(c) => S::constant(*c),
        Node::Var(i) => arg(*i),
        Node::Add(a, b) => eval_node(a, arg)? + eval_node(b, arg)?,
        Node::Sub(a, b) => eval_node(a, arg)? - eval_node(b, arg)?,
        Node::Mul(a, b) => eval_node(a, arg)? * eval_node(b, arg)?,
        Node::Div(a, b) => {
            let num = eval_node(a, arg)?;
            let den = eval_node(b, arg)?;
            if den.value() == 0.0 {
                return Err(Error::Domain("division by zero".to_string()));
            }
            num / den
        }
        Node::Pow(a, k) => {
            let base = eval_node(a, arg)?;
            let mut acc = S::constant(1.0);
            for _ in 0..k.unsigned_abs() {
                acc = acc * base;
            }
            if *k < 0 {
                if acc.value() == 0.0 {
                    return Err(Error::Domain("division by zero".to_string()));
                }
                S::constant(1.0) / acc
            } else {
                acc
            }
        }
        Node::Neg(a) => -eval_node(a, arg)?,
        Node::Func(f, a) => {
            let v = eval_node(a, arg)?;
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Log => {
                    if v.value() <= 0.0 {
                        return Err(Error::Domain(format!("log of non-positive {}", v.value())));
                    }
                    v.ln()
                }
            }
        }
    })
}
