//! Piecewise-uniform grids, fixed-step RK4, interpolation and quadrature.
//!
//! A [`GridSignal`] is a chain of [`Piece`]s. Adjacent pieces share their
//! boundary time, and each keeps its own value there, so a signal can jump
//! at breakpoints and nowhere else.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Side {
    Left,
    Right,
    /// At a breakpoint the right-hand value is returned.
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Uniform nodes on `[t0, t1]` with `dim` components per node.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Piece {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
    pub dim: usize,
    values: Vec<f64>,
}

impl Piece {
    pub fn new(t0: f64, t1: f64, steps: usize, dim: usize, values: Vec<f64>) -> Result<Piece> {
        if steps == 0 || !(t1 > t0) {
            return Err(Error::Invalid("piece needs t0 < t1 and at least one step".into()));
        }
        if values.len() != (steps + 1) * dim {
            return Err(Error::Invalid("piece value count does not match its grid".into()));
        }
        Ok(Piece { t0, t1, steps, dim, values })
    }

    pub fn from_fn(
        t0: f64,
        t1: f64,
        steps: usize,
        dim: usize,
        mut f: impl FnMut(f64, &mut [f64]) -> Result<()>,
    ) -> Result<Piece> {
        let mut values = vec![0.0; (steps + 1) * dim];
        let h = (t1 - t0) / steps as f64;
        for (i, chunk) in values.chunks_mut(dim.max(1)).enumerate().take(steps + 1) {
            let t = if i == steps { t1 } else { t0 + h * i as f64 };
            f(t, &mut chunk[..dim])?;
        }
        Piece::new(t0, t1, steps, dim, values)
    }

    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t1
        } else {
            self.t0 + self.step() * i as f64
        }
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first(&self) -> &[f64] {
        self.node(0)
    }

    pub fn last(&self) -> &[f64] {
        self.node(self.steps)
    }

    /// Component `j` at every node.
    pub fn component(&self, j: usize) -> Vec<f64> {
        (0..=self.steps).map(|i| self.node(i)[j]).collect()
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t1
    }

    // Cell index and fraction for t inside the piece.
    fn locate(&self, t: f64) -> (usize, f64) {
        let s = (t - self.t0) / self.step();
        let i = (libm::floor(s) as isize).clamp(0, self.steps as isize - 1) as usize;
        (i, s - i as f64)
    }

    pub fn interp_into(&self, t: f64, out: &mut [f64]) {
        let (i, w) = self.locate(t);
        let (a, b) = (self.node(i), self.node(i + 1));
        for j in 0..self.dim {
            out[j] = if w == 0.0 { a[j] } else { a[j] + w * (b[j] - a[j]) };
        }
    }

    /// Cubic Hermite interpolation using node derivatives from `derivs`.
    pub fn hermite_into(&self, derivs: &Piece, t: f64, out: &mut [f64]) {
        let (i, w) = self.locate(t);
        let h = self.step();
        let (a, b) = (self.node(i), self.node(i + 1));
        let (da, db) = (derivs.node(i), derivs.node(i + 1));
        let w2 = w * w;
        let w3 = w2 * w;
        let h00 = 2.0 * w3 - 3.0 * w2 + 1.0;
        let h10 = w3 - 2.0 * w2 + w;
        let h01 = -2.0 * w3 + 3.0 * w2;
        let h11 = w3 - w2;
        for j in 0..self.dim {
            out[j] = h00 * a[j] + h10 * h * da[j] + h01 * b[j] + h11 * h * db[j];
        }
    }

    /// Node-wise derivative with fourth-order stencils (five-point centred
    /// inside, one-sided five-point near the ends). Pieces with fewer than
    /// four steps fall back to second order.
    pub fn derivative(&self) -> Piece {
        let n = self.steps;
        let h = self.step();
        let mut out = vec![0.0; self.values.len()];
        for j in 0..self.dim {
            let f = |i: usize| self.node(i)[j];
            for i in 0..=n {
                let d = if n >= 4 {
                    if i >= 2 && i + 2 <= n {
                        (f(i - 2) - 8.0 * f(i - 1) + 8.0 * f(i + 1) - f(i + 2)) / (12.0 * h)
                    } else if i == 0 {
                        (-25.0 * f(0) + 48.0 * f(1) - 36.0 * f(2) + 16.0 * f(3) - 3.0 * f(4)) / (12.0 * h)
                    } else if i == 1 {
                        (-3.0 * f(0) - 10.0 * f(1) + 18.0 * f(2) - 6.0 * f(3) + f(4)) / (12.0 * h)
                    } else if i == n - 1 {
                        (3.0 * f(n) + 10.0 * f(n - 1) - 18.0 * f(n - 2) + 6.0 * f(n - 3) - f(n - 4)) / (12.0 * h)
                    } else {
                        (25.0 * f(n) - 48.0 * f(n - 1) + 36.0 * f(n - 2) - 16.0 * f(n - 3) + 3.0 * f(n - 4))
                            / (12.0 * h)
                    }
                } else if n >= 2 {
                    if i == 0 {
                        (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h)
                    } else if i == n {
                        (3.0 * f(n) - 4.0 * f(n - 1) + f(n - 2)) / (2.0 * h)
                    } else {
                        (f(i + 1) - f(i - 1)) / (2.0 * h)
                    }
                } else {
                    (f(1) - f(0)) / h
                };
                out[i * self.dim + j] = d;
            }
        }
        Piece { values: out, ..self.clone() }
    }

    /// Composite trapezoid of component `j`.
    pub fn trapezoid(&self, j: usize) -> f64 {
        let n = self.steps;
        let inner: f64 = (1..n).map(|i| self.node(i)[j]).sum();
        self.step() * (0.5 * (self.node(0)[j] + self.node(n)[j]) + inner)
    }

    /// Composite Simpson of component `j`; an odd step count closes with the
    /// three-eighths rule on the last three cells. One step is a trapezoid.
    pub fn simpson(&self, j: usize) -> f64 {
        let n = self.steps;
        let h = self.step();
        let f = |i: usize| self.node(i)[j];
        if n == 1 {
            return 0.5 * h * (f(0) + f(1));
        }
        let (even_end, tail) = if n.is_multiple_of(2) {
            (n, 0.0)
        } else {
            (n - 3, 3.0 * h / 8.0 * (f(n - 3) + 3.0 * f(n - 2) + 3.0 * f(n - 1) + f(n)))
        };
        let mut s = 0.0;
        let mut i = 0;
        while i < even_end {
            s += f(i) + 4.0 * f(i + 1) + f(i + 2);
            i += 2;
        }
        s * h / 3.0 + tail
    }

    /// Running integral of component `j` from `t0` to every node, exact for
    /// cubics (local four-point rule, shifted at the ends).
    pub fn cumulative(&self, j: usize) -> Vec<f64> {
        let n = self.steps;
        let h = self.step();
        let f = |i: usize| self.node(i)[j];
        let mut out = vec![0.0; n + 1];
        for i in 0..n {
            let cell = if n < 3 {
                0.5 * h * (f(i) + f(i + 1))
            } else if i == 0 {
                h / 24.0 * (9.0 * f(0) + 19.0 * f(1) - 5.0 * f(2) + f(3))
            } else if i == n - 1 {
                h / 24.0 * (f(n - 3) - 5.0 * f(n - 2) + 19.0 * f(n - 1) + 9.0 * f(n))
            } else {
                h / 24.0 * (-f(i - 1) + 13.0 * f(i) + 13.0 * f(i + 1) - f(i + 2))
            };
            out[i + 1] = out[i] + cell;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A signal on consecutive pieces sharing their boundary times.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSignal {
    pieces: Vec<Piece>,
}

impl GridSignal {
    pub fn new(pieces: Vec<Piece>) -> Result<GridSignal> {
        if pieces.is_empty() {
            return Err(Error::Invalid("signal needs at least one piece".into()));
        }
        let dim = pieces[0].dim;
        for w in pieces.windows(2) {
            if w[0].t1 != w[1].t0 {
                return Err(Error::Invalid("pieces must share their boundary times".into()));
            }
        }
        if pieces.iter().any(|p| p.dim != dim) {
            return Err(Error::Invalid("pieces disagree on dimension".into()));
        }
        Ok(GridSignal { pieces })
    }

    /// Sample `f(piece_index, t, out)` on pieces over `breaks` with `steps`
    /// cells each.
    pub fn from_fn(
        breaks: &[f64],
        steps: usize,
        dim: usize,
        mut f: impl FnMut(usize, f64, &mut [f64]) -> Result<()>,
    ) -> Result<GridSignal> {
        let pieces = breaks
            .windows(2)
            .enumerate()
            .map(|(k, w)| Piece::from_fn(w[0], w[1], steps, dim, |t, out| f(k, t, out)))
            .collect::<Result<Vec<_>>>()?;
        GridSignal::new(pieces)
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].dim
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn piece(&self, k: usize) -> &Piece {
        &self.pieces[k]
    }

    pub fn piece_mut(&mut self, k: usize) -> &mut Piece {
        &mut self.pieces[k]
    }

    pub fn start(&self) -> f64 {
        self.pieces[0].t0
    }

    pub fn end(&self) -> f64 {
        self.pieces[self.pieces.len() - 1].t1
    }

    /// Interior boundary times between pieces.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces[1..].iter().map(|p| p.t0).collect()
    }

    /// Index of the piece that owns `t` when approached from `side`.
    pub fn piece_at(&self, t: f64, side: Side) -> Result<usize> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::Invalid(alloc::format!("t = {t} outside [{}, {}]", self.start(), self.end())));
        }
        let last = self.pieces.len() - 1;
        for (k, p) in self.pieces.iter().enumerate() {
            if t < p.t1 || k == last {
                return Ok(k);
            }
            if t == p.t1 {
                return Ok(if side == Side::Left { k } else { k + 1 });
            }
        }
        Ok(last)
    }

    pub fn interp_into(&self, t: f64, side: Side, out: &mut [f64]) -> Result<()> {
        let k = self.piece_at(t, side)?;
        self.pieces[k].interp_into(t, out);
        Ok(())
    }

    pub fn interp(&self, t: f64, side: Side) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.interp_into(t, side, &mut out)?;
        Ok(out)
    }

    /// Scalar shortcut for component 0.
    pub fn interp_scalar(&self, t: f64, side: Side) -> Result<f64> {
        Ok(self.interp(t, side)?[0])
    }

    /// Right value minus left value at each interior breakpoint.
    pub fn jumps(&self) -> Vec<Vec<f64>> {
        self.pieces.windows(2).map(|w| w[1].first().iter().zip(w[0].last()).map(|(r, l)| r - l).collect()).collect()
    }

    /// Composite trapezoid of component `j` over `[a, b]`. Endpoints inside
    /// a cell are handled by linear interpolation, so piecewise-linear data
    /// integrate exactly.
    pub fn quad(&self, j: usize, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Ok(-self.quad(j, b, a)?);
        }
        if a < self.start() || b > self.end() {
            return Err(Error::Invalid("quadrature interval outside signal domain".into()));
        }
        let mut total = 0.0;
        for p in &self.pieces {
            let lo = a.max(p.t0);
            let hi = b.min(p.t1);
            if hi <= lo {
                continue;
            }
            let mut buf = vec![0.0; p.dim];
            let mut value = |t: f64| {
                p.interp_into(t, &mut buf);
                buf[j]
            };
            let h = p.step();
            let mut t = lo;
            let mut ft = value(t);
            while t < hi {
                let cell = libm::floor((t - p.t0) / h + 1e-9) as usize;
                let next = p.time((cell + 1).min(p.steps)).min(hi);
                let next = if next <= t { hi } else { next };
                let fn_ = value(next);
                total += 0.5 * (next - t) * (ft + fn_);
                t = next;
                ft = fn_;
            }
        }
        Ok(total)
    }

    /// Composite Simpson of component `j` over whole pieces.
    pub fn simpson(&self, j: usize) -> f64 {
        self.pieces.iter().map(|p| p.simpson(j)).sum()
    }

    pub fn derivative(&self) -> GridSignal {
        GridSignal { pieces: self.pieces.iter().map(Piece::derivative).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.pieces.iter().fold(0.0, |m, p| m.max(p.max_abs()))
    }

    /// Node-wise map into a signal of dimension `dim`.
    pub fn map(
        &self,
        dim: usize,
        mut f: impl FnMut(usize, f64, &[f64], &mut [f64]) -> Result<()>,
    ) -> Result<GridSignal> {
        let pieces = self
            .pieces
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let mut i = 0;
                Piece::from_fn(p.t0, p.t1, p.steps, dim, |t, out| {
                    let r = f(k, t, p.node(i), out);
                    i += 1;
                    r
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GridSignal::new(pieces)
    }
}

/// Classical RK4 for `y' = rhs(t, y)` on `[t0, t1]` with `steps` cells.
/// `Backward` starts from `y_init` at `t1`. Nodes are stored in increasing
/// time either way.
pub fn rk4_integrate(
    mut rhs: impl FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    y_init: &[f64],
    t0: f64,
    t1: f64,
    steps: usize,
    direction: Direction,
) -> Result<Piece> {
    let dim = y_init.len();
    if steps == 0 || !(t1 > t0) {
        return Err(Error::Invalid("integration needs t0 < t1 and at least one step".into()));
    }
    let h_abs = (t1 - t0) / steps as f64;
    let (h, start) = match direction {
        Direction::Forward => (h_abs, t0),
        Direction::Backward => (-h_abs, t1),
    };
    let mut values = vec![0.0; (steps + 1) * dim];
    let mut y = y_init.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    let slot = |i: usize| match direction {
        Direction::Forward => i,
        Direction::Backward => steps - i,
    };
    values[slot(0) * dim..(slot(0) + 1) * dim].copy_from_slice(&y);
    for i in 0..steps {
        let t = start + h * i as f64;
        rhs(t, &y, &mut k1)?;
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * h * k1[j];
        }
        rhs(t + 0.5 * h, &tmp, &mut k2)?;
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * h * k2[j];
        }
        rhs(t + 0.5 * h, &tmp, &mut k3)?;
        for j in 0..dim {
            tmp[j] = y[j] + h * k3[j];
        }
        let t_next = if i + 1 == steps { start + h * steps as f64 } else { t + h };
        rhs(t_next, &tmp, &mut k4)?;
        for j in 0..dim {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t_next });
        }
        let s = slot(i + 1);
        values[s * dim..(s + 1) * dim].copy_from_slice(&y);
    }
    Piece::new(t0, t1, steps, dim, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let p = rk4_integrate(
            |_, y, d| {
                d[0] = y[0];
                Ok(())
            },
            &[1.0],
            0.0,
            1.0,
            1000,
            Direction::Forward,
        )
        .unwrap();
        assert!((p.last()[0] - core::f64::consts::E).abs() < 1e-10);
        let c = rk4_integrate(
            |_, _, d| {
                d[0] = 0.0;
                Ok(())
            },
            &[2.5],
            0.0,
            1.0,
            10,
            Direction::Forward,
        )
        .unwrap();
        assert!(c.values().iter().all(|v| *v == 2.5));
    }

    #[test]
    fn backward_integration_stores_increasing_time() {
        let p = rk4_integrate(
            |_, y, d| {
                d[0] = y[0];
                Ok(())
            },
            &[1.0],
            0.0,
            1.0,
            200,
            Direction::Backward,
        )
        .unwrap();
        assert_eq!(p.last()[0], 1.0);
        assert!((p.first()[0] - libm::exp(-1.0)).abs() < 1e-11);
    }

    #[test]
    fn tent_trajectory() {
        let u = [-1.0, 0.0, 1.0];
        let mut x = 1.0;
        let mut pieces = Vec::new();
        for k in 0..3 {
            let p = rk4_integrate(
                |_, _, d| {
                    d[0] = u[k];
                    Ok(())
                },
                &[x],
                k as f64,
                k as f64 + 1.0,
                50,
                Direction::Forward,
            )
            .unwrap();
            x = p.last()[0];
            pieces.push(p);
        }
        let s = GridSignal::new(pieces).unwrap();
        for (t, want) in [(0.0, 1.0), (0.5, 0.5), (1.5, 0.0), (2.5, 0.5), (3.0, 1.0)] {
            assert!((s.interp_scalar(t, Side::Either).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn rk4_order() {
        let err = |n| {
            let p = rk4_integrate(
                |t, y, d| {
                    d[0] = -y[0] * libm::cos(t);
                    Ok(())
                },
                &[1.0],
                0.0,
                2.0,
                n,
                Direction::Forward,
            )
            .unwrap();
            (p.last()[0] - libm::exp(-libm::sin(2.0))).abs()
        };
        let (e1, e2, e3) = (err(10), err(20), err(40));
        assert!(libm::log2(e1 / e2) > 3.8);
        assert!(libm::log2(e2 / e3) > 3.8);
    }

    fn jump_signal() -> GridSignal {
        GridSignal::from_fn(&[0.0, 1.0, 2.0], 4, 1, |k, t, o| {
            o[0] = t + k as f64;
            Ok(())
        })
        .unwrap()
    }

    #[test]
    fn interpolation_and_sides() {
        let s = jump_signal();
        assert_eq!(s.interp_scalar(0.25, Side::Either).unwrap(), 0.25);
        assert_eq!(s.interp_scalar(0.375, Side::Either).unwrap(), 0.375);
        assert_eq!(s.interp_scalar(1.0, Side::Left).unwrap(), 1.0);
        assert_eq!(s.interp_scalar(1.0, Side::Right).unwrap(), 2.0);
        assert_eq!(s.jumps(), vec![vec![1.0]]);
        assert!(s.interp(2.5, Side::Either).is_err());
        assert!(s.interp(-0.1, Side::Either).is_err());
    }

    #[test]
    fn quadrature() {
        let lin = GridSignal::from_fn(&[0.0, 1.0], 7, 1, |_, t, o| {
            o[0] = t;
            Ok(())
        })
        .unwrap();
        assert!((lin.quad(0, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((lin.quad(0, 0.1, 0.77).unwrap() - 0.5 * (0.77f64 * 0.77 - 0.01)).abs() < 1e-15);
        let zero = GridSignal::from_fn(&[0.0, 1.0], 3, 1, |_, _, o| {
            o[0] = 0.0;
            Ok(())
        })
        .unwrap();
        assert_eq!(zero.quad(0, 0.0, 1.0).unwrap(), 0.0);
        let dens = GridSignal::from_fn(&[1.0, 2.0], 2000, 1, |_, t, o| {
            o[0] = (t - 1.0) * (t - 2.0);
            Ok(())
        })
        .unwrap();
        assert!((dens.quad(0, 1.0, 2.0).unwrap() + 1.0 / 6.0).abs() < 1e-7);
        assert!((dens.simpson(0) + 1.0 / 6.0).abs() < 1e-14);
        let odd = Piece::from_fn(0.0, 1.0, 7, 1, |t, o| {
            o[0] = t * t * t;
            Ok(())
        })
        .unwrap();
        assert!((odd.simpson(0) - 0.25).abs() < 1e-14);
        assert!((jump_signal().quad(0, 0.0, 2.0).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn derivative_order() {
        let err = |n| {
            let p = Piece::from_fn(0.0, 1.0, n, 1, |t, o| {
                o[0] = libm::sin(3.0 * t);
                Ok(())
            })
            .unwrap();
            let d = p.derivative();
            (0..=n).map(|i| (d.node(i)[0] - 3.0 * libm::cos(3.0 * p.time(i))).abs()).fold(0.0, f64::max)
        };
        assert!(libm::log2(err(40) / err(80)) > 3.7);
    }

    #[test]
    fn hermite_is_exact_for_cubics() {
        let p = Piece::from_fn(0.0, 1.0, 3, 1, |t, o| {
            o[0] = t * t * t - t;
            Ok(())
        })
        .unwrap();
        let d = Piece::from_fn(0.0, 1.0, 3, 1, |t, o| {
            o[0] = 3.0 * t * t - 1.0;
            Ok(())
        })
        .unwrap();
        let mut out = [0.0];
        p.hermite_into(&d, 0.41, &mut out);
        assert!((out[0] - (0.41f64.powi(3) - 0.41)).abs() < 1e-15);
    }

    #[test]
    fn cumulative_exact_for_cubics() {
        let p = Piece::from_fn(1.0, 2.0, 7, 1, |t, o| {
            o[0] = (t - 1.0) * (t - 2.0) * t;
            Ok(())
        })
        .unwrap();
        let c = p.cumulative(0);
        let prim = |t: f64| t * t * t * t / 4.0 - t * t * t + t * t;
        for i in 0..=7 {
            assert!((c[i] - (prim(p.time(i)) - prim(1.0))).abs() < 1e-14);
        }
    }
}
