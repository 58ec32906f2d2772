//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Works on flat `f64` parameter vectors. The objective closure writes the
//! gradient into its second argument and returns the value.

use std::collections::VecDeque;

/// How a minimization run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    /// Gradient norm fell to the tolerance.
    Converged,
    MaxIterations,
    /// No step satisfying the sufficient-decrease condition could be found,
    /// usually because the objective is flat to machine precision.
    LineSearchFailed,
    /// The objective became NaN or infinite at the starting point.
    Diverged,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIterations => "max_iterations",
            Status::LineSearchFailed => "line_search_failed",
            Status::Diverged => "diverged",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Absolute tolerance on the Euclidean gradient norm.
    pub grad_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 1000,
            grad_tol: 1e-9,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: Status,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    /// Gradient norm aligned with `objective_trace`.
    pub grad_trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Point {
    alpha: f64,
    f: f64,
    d: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

struct LineSearch<'a, F> {
    eval: &'a mut F,
    x: &'a [f64],
    p: &'a [f64],
    f0: f64,
    d0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> LineSearch<'_, F> {
    fn at(&mut self, alpha: f64) -> Point {
        self.budget = self.budget.saturating_sub(1);
        let x: Vec<f64> = self
            .x
            .iter()
            .zip(self.p)
            .map(|(xi, pi)| xi + alpha * pi)
            .collect();
        let mut g = vec![0.0; x.len()];
        let f = (self.eval)(&x, &mut g);
        if f.is_finite() && g.iter().all(|v| v.is_finite()) {
            let d = dot(&g, self.p);
            Point { alpha, f, d, x, g }
        } else {
            Point {
                alpha,
                f: f64::INFINITY,
                d: f64::NAN,
                x,
                g,
            }
        }
    }

    fn armijo(&self, pt: &Point) -> bool {
        pt.f <= self.f0 + self.c1 * pt.alpha * self.d0
    }

    fn curvature(&self, pt: &Point) -> bool {
        pt.d.abs() <= -self.c2 * self.d0
    }

    fn search(&mut self, start: Point, alpha0: f64) -> Option<Point> {
        let mut prev = start;
        let mut alpha = alpha0;
        let mut first = true;
        while self.budget > 0 {
            let pt = self.at(alpha);
            if !self.armijo(&pt) || (!first && pt.f >= prev.f) {
                return self.zoom(prev, pt);
            }
            if self.curvature(&pt) {
                return Some(pt);
            }
            if pt.d >= 0.0 {
                return self.zoom(pt, prev);
            }
            first = false;
            prev = pt;
            alpha *= 2.0;
        }
        (prev.alpha > 0.0).then_some(prev)
    }

    /// Narrows the bracket between `lo` (satisfies sufficient decrease, lowest
    /// value so far) and `hi` until the curvature condition holds.
    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Option<Point> {
        while self.budget > 0 {
            let width = hi.alpha - lo.alpha;
            if width.abs() <= f64::EPSILON * lo.alpha.abs().max(hi.alpha.abs()) {
                break;
            }
            let trial = interpolate(&lo, &hi);
            let pt = self.at(trial);
            if !self.armijo(&pt) || pt.f >= lo.f {
                hi = pt;
            } else {
                if self.curvature(&pt) {
                    return Some(pt);
                }
                if pt.d * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = pt;
            }
        }
        (lo.alpha > 0.0 && lo.f < self.f0).then_some(lo)
    }
}

/// Safeguarded cubic interpolation inside the bracket, falling back to bisection.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let mid = 0.5 * (a + b);
    if !(hi.f.is_finite() && hi.d.is_finite()) {
        return mid;
    }
    let d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (a - b);
    let rad = d1 * d1 - lo.d * hi.d;
    if rad < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * rad.sqrt();
    let t = b - (b - a) * (hi.d + d2 - d1) / (hi.d - lo.d + 2.0 * d2);
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    if t.is_finite() && t >= left + margin && t <= right - margin {
        t
    } else {
        mid
    }
}

/// Two-loop recursion: returns `-H g` for the current inverse-Hessian model.
fn direction(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `f` from `x0`.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut x = x0;
    let mut g = vec![0.0; x.len()];
    let mut fx = f(&x, &mut g);
    let mut gn = norm(&g);
    let mut objective_trace = vec![fx];
    let mut grad_trace = vec![gn];
    if !fx.is_finite() || !gn.is_finite() {
        return LbfgsOutcome {
            x,
            f: fx,
            grad_norm: gn,
            iterations: 0,
            status: Status::Diverged,
            objective_trace,
            grad_trace,
        };
    }

    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let status = loop {
        if gn <= opts.grad_tol {
            break Status::Converged;
        }
        if iterations >= opts.max_iters {
            break Status::MaxIterations;
        }
        let mut p = direction(&g, &mem);
        let mut d0 = dot(&g, &p);
        if !(d0 < 0.0) || !d0.is_finite() {
            mem.clear();
            p = g.iter().map(|v| -v).collect();
            d0 = -gn * gn;
        }
        let alpha0 = if mem.is_empty() {
            (1.0 / gn).min(1.0)
        } else {
            1.0
        };
        let start = Point {
            alpha: 0.0,
            f: fx,
            d: d0,
            x: x.clone(),
            g: g.clone(),
        };
        let mut ls = LineSearch {
            eval: &mut f,
            x: &x,
            p: &p,
            f0: fx,
            d0,
            c1: opts.c1,
            c2: opts.c2,
            budget: opts.max_line_search,
        };
        let Some(pt) = ls.search(start, alpha0) else {
            if mem.is_empty() {
                break Status::LineSearchFailed;
            }
            mem.clear();
            continue;
        };

        let s: Vec<f64> = pt.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * dot(&y, &y) {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        x = pt.x;
        g = pt.g;
        fx = pt.f;
        gn = norm(&g);
        iterations += 1;
        objective_trace.push(fx);
        grad_trace.push(gn);
    };

    LbfgsOutcome {
        x,
        f: fx,
        grad_norm: gn,
        iterations,
        status,
        objective_trace,
        grad_trace,
    }
}
