//! Posynomials and a small geometric-program solver.
//!
//! With `x = log p` every posynomial becomes `exp` of a log-sum-exp of affine
//! forms, so the problem
//!
//! ```text
//! minimize f0(p)  s.t.  f_i(p) <= 1
//! ```
//!
//! is convex in `x`. It is solved with a log-barrier method: centering steps
//! use damped Newton with backtracking, the barrier weight grows tenfold per
//! outer step, and a phase-I problem finds a strictly feasible start when the
//! supplied point is not one.

use log::trace;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `coeff * prod_i p_i^exponents[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<f64>,
}

/// Sum of monomials with positive coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Posynomial {
    vars: usize,
    terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn new(vars: usize) -> Self {
        Posynomial { vars, terms: Vec::new() }
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds `coeff * prod p_i^e_i`; zero coefficients are dropped.
    ///
    /// # Panics
    /// On a negative or non-finite coefficient or a wrong exponent length.
    pub fn push(&mut self, coeff: f64, exponents: Vec<f64>) {
        assert!(coeff >= 0.0 && coeff.is_finite(), "posynomial coefficient {coeff}");
        assert_eq!(exponents.len(), self.vars, "exponent vector length");
        if coeff > 0.0 {
            self.terms.push(Monomial { coeff, exponents });
        }
    }

    /// Adds `coeff * prod p_i^e_i` given as sparse `(index, exponent)` pairs.
    pub fn push_sparse(&mut self, coeff: f64, sparse: &[(usize, f64)]) {
        let mut e = vec![0.0; self.vars];
        for &(i, x) in sparse {
            e[i] += x;
        }
        self.push(coeff, e);
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        assert!(factor > 0.0);
        for t in &mut self.terms {
            t.coeff *= factor;
        }
        self
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.coeff * t.exponents.iter().zip(p).map(|(e, x)| x.powf(*e)).product::<f64>()).sum()
    }

    /// Whether any term depends on a variable.
    pub fn has_variables(&self) -> bool {
        self.terms.iter().any(|t| t.exponents.iter().any(|&e| e != 0.0))
    }
}

/// Minimize `objective` subject to `constraint <= 1` for every constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct GpProblem {
    pub objective: Posynomial,
    pub constraints: Vec<Posynomial>,
    pub var_count: usize,
    /// Sum-AMSE target for the power-minimization variants.
    pub amse_target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpOptions {
    /// Target duality gap in log units, i.e. relative objective accuracy.
    pub tol: f64,
    /// Newton steps allowed per centering problem.
    pub max_newton: usize,
    /// Starting point in `p`; ones if absent.
    pub initial: Option<Vec<f64>>,
}

impl Default for GpOptions {
    fn default() -> Self {
        GpOptions { tol: 1e-10, max_newton: 200, initial: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpSolution {
    pub p: Vec<f64>,
    pub objective: f64,
    pub newton_steps: usize,
}

/// `log sum_i exp(a_i . x + b_i)`.
#[derive(Debug, Clone)]
pub struct LogSumExp {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl LogSumExp {
    pub fn from_posynomial(p: &Posynomial) -> Self {
        let rows = p.terms.len();
        let a = DMatrix::from_fn(rows, p.vars, |i, j| p.terms[i].exponents[j]);
        let b = DVector::from_iterator(rows, p.terms.iter().map(|t| t.coeff.ln()));
        LogSumExp { a, b }
    }

    fn weights(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let z = &self.a * x + &self.b;
        let top = z.max();
        let e = z.map(|v| (v - top).exp());
        let total = e.sum();
        (top + total.ln(), e / total)
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.weights(x).0
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (_, w) = self.weights(x);
        self.a.transpose() * w
    }

    /// Value, gradient and Hessian.
    pub fn full(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (v, w) = self.weights(x);
        let g = self.a.transpose() * &w;
        let wa = DMatrix::from_fn(self.a.nrows(), self.a.ncols(), |i, j| self.a[(i, j)] * w[i]);
        let h = self.a.transpose() * wa - &g * g.transpose();
        (v, g, h)
    }
}

struct Barrier<'a> {
    objective: Option<&'a LogSumExp>,
    constraints: &'a [LogSumExp],
    /// Constraints read `f_i(x) - shift <= 0`; phase I shifts by a slack
    /// variable stored in the last coordinate.
    phase_one: bool,
}

impl Barrier<'_> {
    fn split(&self, z: &DVector<f64>) -> (DVector<f64>, f64) {
        if self.phase_one {
            let n = z.len() - 1;
            (z.rows(0, n).into_owned(), z[n])
        } else {
            (z.clone(), 0.0)
        }
    }

    /// Barrier value or `None` outside the domain.
    fn value(&self, z: &DVector<f64>, t: f64) -> Option<f64> {
        let (x, s) = self.split(z);
        let mut v = match (self.phase_one, self.objective) {
            (true, _) => t * s,
            (false, Some(obj)) => t * obj.value(&x),
            (false, None) => 0.0,
        };
        for c in self.constraints {
            let gap = s - c.value(&x);
            if !(gap > 0.0) {
                return None;
            }
            v -= gap.ln();
        }
        v.is_finite().then_some(v)
    }

    fn derivatives(&self, z: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let (x, s) = self.split(z);
        let dim = z.len();
        let nx = x.len();
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        if self.phase_one {
            g[nx] = t;
        } else if let Some(obj) = self.objective {
            let (_, og, oh) = obj.full(&x);
            g.rows_mut(0, nx).axpy(t, &og, 1.0);
            let mut block = h.view_mut((0, 0), (nx, nx));
            block += &oh * t;
        }
        for c in self.constraints {
            let (cv, cg, ch) = c.full(&x);
            let gap = s - cv;
            // d/dz of -log(s - f(x)): (grad f, -1) / gap.
            let mut dg = DVector::zeros(dim);
            dg.rows_mut(0, nx).copy_from(&cg);
            if self.phase_one {
                dg[nx] = -1.0;
            }
            g += &dg / gap;
            h += &dg * dg.transpose() / (gap * gap);
            let mut block = h.view_mut((0, 0), (nx, nx));
            block += &ch / gap;
        }
        (g, h)
    }
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().iter().fold(1e-300_f64, |m, v| m.max(v.abs()));
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += ridge;
        }
        if let Some(chol) = hr.cholesky() {
            let dx = -chol.solve(g);
            if dx.iter().all(|v| v.is_finite()) {
                return Some(dx);
            }
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 100.0 };
    }
    None
}

const ARMIJO: f64 = 0.3;
const SHRINK: f64 = 0.5;
const CENTERING_TOL: f64 = 1e-10;
/// Longest Newton step in log coordinates.
const MAX_STEP: f64 = 2.0;

/// Minimizes the barrier at weight `t` from `z`. Returns the number of
/// Newton steps taken. `stop` can end centering early (phase I).
fn center(
    barrier: &Barrier<'_>,
    z: &mut DVector<f64>,
    t: f64,
    max_newton: usize,
    stop: impl Fn(&DVector<f64>) -> bool,
) -> Result<usize> {
    let mut value =
        barrier.value(z, t).ok_or_else(|| Error::Domain("barrier start is not strictly feasible".into()))?;
    for step in 0..max_newton {
        if stop(z) {
            return Ok(step);
        }
        let (g, h) = barrier.derivatives(z, t);
        let Some(mut dz) = newton_direction(&g, &h) else {
            return Err(Error::GpStalled { iterations: step });
        };
        // Below this the barrier value cannot resolve further decrease.
        let floor = CENTERING_TOL.max(4.0 * f64::EPSILON * value.abs());
        if -g.dot(&dz) / 2.0 <= floor {
            return Ok(step);
        }
        let longest = dz.amax();
        if longest > MAX_STEP {
            dz *= MAX_STEP / longest;
        }
        let decrement = -g.dot(&dz);
        let mut s = 1.0;
        loop {
            let cand = &*z + &dz * s;
            match barrier.value(&cand, t) {
                Some(v) if v <= value - ARMIJO * s * decrement => {
                    let stalled = v >= value;
                    *z = cand;
                    value = v;
                    if stalled {
                        return Ok(step + 1);
                    }
                    break;
                }
                _ => {
                    s *= SHRINK;
                    if s < 1e-20 {
                        // No progress possible at working precision.
                        return Ok(step);
                    }
                }
            }
        }
    }
    Err(Error::GpStalled { iterations: max_newton })
}

/// Solves a geometric program.
///
/// Returns the optimizer in `p` and the posynomial objective there. An
/// infeasible problem is reported with the index of the most violated
/// constraint at the phase-I optimum.
pub fn gp_solve(prob: &GpProblem, opts: &GpOptions) -> Result<GpSolution> {
    let vars = prob.var_count;
    if prob.objective.vars() != vars || prob.constraints.iter().any(|c| c.vars() != vars) {
        return Err(Error::Dimension("posynomial variable counts disagree".into()));
    }
    if prob.objective.is_empty() {
        return Err(Error::Domain("empty objective".into()));
    }
    let objective = LogSumExp::from_posynomial(&prob.objective);
    let mut constraints = Vec::new();
    for (i, c) in prob.constraints.iter().enumerate() {
        if c.is_empty() {
            continue;
        }
        if !c.has_variables() && c.eval(&vec![1.0; vars]) > 1.0 {
            return Err(Error::GpInfeasible { constraint: i, value: c.eval(&vec![1.0; vars]) });
        }
        if c.has_variables() {
            constraints.push((i, LogSumExp::from_posynomial(c)));
        }
    }
    let lse: Vec<LogSumExp> = constraints.iter().map(|(_, c)| c.clone()).collect();

    let start: Vec<f64> = match &opts.initial {
        Some(p) if p.len() == vars && p.iter().all(|&v| v > 0.0 && v.is_finite()) => p.clone(),
        Some(_) => return Err(Error::Domain("initial point must be positive with one entry per variable".into())),
        None => vec![1.0; vars],
    };
    let mut x = DVector::from_iterator(vars, start.iter().map(|v| v.ln()));
    let mut steps = 0;

    let worst = |x: &DVector<f64>| lse.iter().map(|c| c.value(x)).fold(f64::NEG_INFINITY, f64::max);
    if !lse.is_empty() && worst(&x) > -1e-9 {
        steps += phase_one(&lse, &mut x, opts, &constraints)?;
    }

    let barrier = Barrier { objective: Some(&objective), constraints: &lse, phase_one: false };
    let m = lse.len() as f64;
    let mut t = 1.0;
    loop {
        steps += center(&barrier, &mut x, t, opts.max_newton, |_| false)?;
        if m == 0.0 || m / t < opts.tol {
            break;
        }
        t *= 10.0;
    }
    trace!("gp solved in {steps} Newton steps");
    let p: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    Ok(GpSolution { objective: prob.objective.eval(&p), p, newton_steps: steps })
}

/// Finds `x` with every constraint strictly below zero, in place.
fn phase_one(lse: &[LogSumExp], x: &mut DVector<f64>, opts: &GpOptions, index: &[(usize, LogSumExp)]) -> Result<usize> {
    let vars = x.len();
    let worst = |x: &DVector<f64>| lse.iter().map(|c| c.value(x)).fold(f64::NEG_INFINITY, f64::max);
    let mut z = DVector::zeros(vars + 1);
    z.rows_mut(0, vars).copy_from(x);
    z[vars] = worst(x) + 1.0;
    let barrier = Barrier { objective: None, constraints: lse, phase_one: true };
    let target = -1e-2;
    let done = |z: &DVector<f64>| z[vars] < target && worst(&z.rows(0, vars).into_owned()) < target;
    let m = lse.len() as f64;
    let mut t = 1.0;
    let mut steps = 0;
    loop {
        steps += center(&barrier, &mut z, t, opts.max_newton, done)?;
        if done(&z) {
            x.copy_from(&z.rows(0, vars));
            return Ok(steps);
        }
        if m / t < opts.tol.max(1e-12) {
            break;
        }
        t *= 10.0;
    }
    let xs = z.rows(0, vars).into_owned();
    if worst(&xs) < 0.0 {
        x.copy_from(&xs);
        return Ok(steps);
    }
    let (k, v) = lse.iter().enumerate().map(|(k, c)| (k, c.value(&xs))).fold((0, f64::NEG_INFINITY), |a, b| {
        if b.1 > a.1 {
            b
        } else {
            a
        }
    });
    Err(Error::GpInfeasible { constraint: index[k].0, value: v.exp() })
}
