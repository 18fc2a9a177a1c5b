//! Conditional-gradient (IPFP) minimization of quadratics over the capped
//! simplex `{w : Σw = 1, 0 ≤ w ≤ 1/k}`.
//!
//! Each iteration linearizes the objective at the current point, jumps toward
//! the domain vertex minimizing the linearization (the `k` coordinates with the
//! smallest partial derivatives, each at `1/k`), and takes the exact minimizer
//! of the quadratic along that segment.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{dot, SymMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-9;

/// Tolerance on `Σw = 1`.
pub const SUM_TOL: f64 = 1e-9;
/// Tolerance on the box `0 ≤ w ≤ 1/k`.
pub const BOX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CappedSimplex {
    n: usize,
    k: usize,
}

impl CappedSimplex {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("capped simplex needs at least one coordinate"));
        }
        if k == 0 || k > n {
            return Err(Error::input(format!("cap parameter k={k} must lie in 1..={n}")));
        }
        Ok(Self { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cap(&self) -> f64 {
        1.0 / self.k as f64
    }

    /// The uniform point `1/n`, always feasible.
    pub fn uniform(&self) -> SelectionWeights {
        SelectionWeights {
            w: vec![1.0 / self.n as f64; self.n],
            k: self.k,
        }
    }

    pub fn check(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.n {
            return Err(Error::Domain(format!(
                "point has {} coordinates, domain has {}",
                w.len(),
                self.n
            )));
        }
        let cap = self.cap();
        if let Some((j, v)) = w
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v >= -BOX_TOL && v <= cap + BOX_TOL))
        {
            return Err(Error::Domain(format!("w[{j}] = {v} is outside [0, {cap}]")));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::Domain(format!("weights sum to {s}, expected 1")));
        }
        Ok(())
    }
}

/// A feasible point of the capped simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionWeights {
    w: Vec<f64>,
    k: usize,
}

impl SelectionWeights {
    pub fn new(w: Vec<f64>, k: usize) -> Result<Self> {
        CappedSimplex::new(w.len(), k)?.check(&w)?;
        Ok(Self { w, k })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn domain(&self) -> CappedSimplex {
        CappedSimplex {
            n: self.w.len(),
            k: self.k,
        }
    }

    /// Coordinates with weight above `1/(2k)`, heaviest first, ties by index.
    pub fn selected(&self) -> Vec<usize> {
        let threshold = 0.5 / self.k as f64;
        let mut idx: Vec<usize> = (0..self.w.len()).filter(|&j| self.w[j] > threshold).collect();
        idx.sort_by(|&a, &b| self.w[b].total_cmp(&self.w[a]).then(a.cmp(&b)));
        idx
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }
}

/// `J(w) = wᵀAw + cᵀw`, to be minimized.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    a: SymMatrix,
    c: Vec<f64>,
}

impl QuadraticObjective {
    pub fn new(a: SymMatrix, c: Vec<f64>) -> Result<Self> {
        if c.len() != a.dim() {
            return Err(Error::dim(format!(
                "linear term has {} entries, quadratic term is {}x{}",
                c.len(),
                a.dim(),
                a.dim()
            )));
        }
        if let Some((i, j)) = a.asymmetry(1e-12) {
            return Err(Error::input(format!("quadratic term is not symmetric at ({i}, {j})")));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("linear term has non-finite entries"));
        }
        Ok(Self { a, c })
    }

    pub fn quadratic(&self) -> &SymMatrix {
        &self.a
    }

    pub fn linear(&self) -> &[f64] {
        &self.c
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let aw = self.a.matvec(w);
        dot(w, &aw) + dot(&self.c, w)
    }

    /// `∇J(w) = 2Aw + c`.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let aw = self.a.matvec(w);
        gradient_from(&aw, &self.c)
    }
}

fn gradient_from(aw: &[f64], c: &[f64]) -> Vec<f64> {
    aw.iter().zip(c).map(|(x, ci)| 2.0 * x + ci).collect()
}

/// Indices of the `k` smallest scores, ties to the lowest index, in ascending index order.
fn bottom_k(s: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    let cmp = |a: &usize, b: &usize| s[*a].total_cmp(&s[*b]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

/// Minimizer of `sᵀw` over the domain: `1/k` on the `k` smallest scores.
pub fn linear_oracle(s: &[f64], dom: &CappedSimplex) -> Result<SelectionWeights> {
    if s.len() != dom.n {
        return Err(Error::dim(format!(
            "score vector has {} entries, domain has {}",
            s.len(),
            dom.n
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("scores must be finite"));
    }
    Ok(vertex(&bottom_k(s, dom.k), dom))
}

fn vertex(support: &[usize], dom: &CappedSimplex) -> SelectionWeights {
    let mut w = vec![0.0; dom.n];
    let cap = dom.cap();
    for &j in support {
        w[j] = cap;
    }
    SelectionWeights { w, k: dom.k }
}

/// Closed-form step along `d` given `g = ∇J(w)ᵀd` and `q = dᵀAd`.
fn step_size(g: f64, q: f64) -> f64 {
    if g == 0.0 && q == 0.0 {
        return 0.0;
    }
    if q > 0.0 {
        (-g / (2.0 * q)).clamp(0.0, 1.0)
    } else if g <= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Exact minimizing step `α ∈ [0, 1]` of `J(w + α(b − w))`.
pub fn line_search(obj: &QuadraticObjective, w: &SelectionWeights, b_vertex: &SelectionWeights) -> Result<f64> {
    let n = obj.dim();
    if w.len() != n || b_vertex.len() != n {
        return Err(Error::dim("line search points do not match the objective"));
    }
    let d: Vec<f64> = b_vertex.w.iter().zip(&w.w).map(|(b, x)| b - x).collect();
    if d.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let g = dot(&obj.gradient(&w.w), &d);
    let q = obj.a.quad_form(&d);
    Ok(step_size(g, q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub w_star: SelectionWeights,
    /// `J(w0)` followed by the objective after each iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: f64,
    /// Lowest-objective oracle vertex seen during the run.
    pub best_vertex: SelectionWeights,
    pub best_vertex_objective: f64,
}

impl SolveReport {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds J(w0)")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// IPFP iterations from `w0` until the relative objective change drops to
/// `tol` or `max_iter` steps have run. Returns the last iterate.
///
/// A step whose rounded objective would rise is not taken; the run then stops
/// as converged, which keeps the trace monotone.
pub fn ipfp_solve(
    obj: &QuadraticObjective,
    dom: &CappedSimplex,
    w0: &SelectionWeights,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    if opts.max_iter == 0 {
        return Err(Error::input("max_iter must be at least 1"));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::input(format!("tol must be positive, got {}", opts.tol)));
    }
    if obj.dim() != dom.n {
        return Err(Error::dim(format!(
            "objective has {} coordinates, domain has {}",
            obj.dim(),
            dom.n
        )));
    }
    if w0.k != dom.k {
        return Err(Error::Domain(format!(
            "initial point uses k={}, domain uses k={}",
            w0.k, dom.k
        )));
    }
    dom.check(&w0.w)?;

    let start = Instant::now();
    let mut w = w0.w.clone();
    let mut aw = obj.a.matvec(&w);
    let mut j_cur = dot(&w, &aw) + dot(&obj.c, &w);
    let mut trace = vec![j_cur];
    let mut best: Option<(SelectionWeights, f64)> = None;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let grad = gradient_from(&aw, &obj.c);
        let b = vertex(&bottom_k(&grad, dom.k), dom);
        let ab = obj.a.matvec(&b.w);
        let jb = dot(&b.w, &ab) + dot(&obj.c, &b.w);
        if best.as_ref().is_none_or(|(_, v)| jb < *v) {
            best = Some((b.clone(), jb));
        }

        let d: Vec<f64> = b.w.iter().zip(&w).map(|(x, y)| x - y).collect();
        let ad: Vec<f64> = ab.iter().zip(&aw).map(|(x, y)| x - y).collect();
        let g = dot(&grad, &d);
        let q = dot(&d, &ad);
        let alpha = if d.iter().all(|&v| v == 0.0) {
            0.0
        } else {
            step_size(g, q)
        };

        let (w_next, aw_next, j_next) = if alpha == 0.0 {
            (w.clone(), aw.clone(), j_cur)
        } else {
            let w_next: Vec<f64> = w.iter().zip(&d).map(|(x, di)| x + alpha * di).collect();
            let aw_next = obj.a.matvec(&w_next);
            let j_next = dot(&w_next, &aw_next) + dot(&obj.c, &w_next);
            (w_next, aw_next, j_next)
        };

        if j_next > j_cur {
            trace.push(j_cur);
            converged = true;
            break;
        }
        w = w_next;
        aw = aw_next;
        let prev = j_cur;
        j_cur = j_next;
        trace.push(j_cur);
        if (j_cur - prev).abs() <= opts.tol * (prev.abs() + 1.0) {
            converged = true;
            break;
        }
    }

    let (best_vertex, best_vertex_objective) = best.expect("at least one iteration runs");
    Ok(SolveReport {
        w_star: SelectionWeights { w, k: dom.k },
        objective_trace: trace,
        iterations,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
        best_vertex,
        best_vertex_objective,
    })
}

/// Smallest `ε / ‖∇J‖∞` for which some multiplier `λ` satisfies the
/// capped-simplex KKT conditions at `w`: `∂J/∂wⱼ ≥ λ − ε` where `wⱼ = 0`,
/// `≤ λ + ε` where `wⱼ = 1/k`, and `= λ ± ε` in between.
///
/// Coordinates within `bound_tol` of a bound count as on it.
pub fn kkt_residual(grad: &[f64], w: &SelectionWeights, bound_tol: f64) -> f64 {
    let cap = 1.0 / w.k as f64;
    // λ must lie at or below every gradient off the upper bound and at or
    // above every gradient off the lower bound.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&g, &x) in grad.iter().zip(&w.w) {
        let at_zero = x <= bound_tol;
        let at_cap = x >= cap - bound_tol;
        if !at_cap || at_zero {
            lo = lo.min(g);
        }
        if !at_zero || at_cap {
            hi = hi.max(g);
        }
    }
    let gap = if lo.is_finite() && hi.is_finite() {
        ((hi - lo) / 2.0).max(0.0)
    } else {
        0.0
    };
    let scale = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    if gap == 0.0 {
        0.0
    } else {
        gap / scale
    }
}
