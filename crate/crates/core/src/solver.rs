//! The p-IRLS iteration for `min_{Cx = d} ‖Ax − b‖_p` with `p ≥ 2`.
//!
//! Each step solves a padded, weighted least-squares subproblem, takes an
//! exact line search along its solution, and halves the refinement scale `i`
//! whenever the step fails the progress test. The loop stops once
//! `ε/(16p(1+ε)) · ‖Ax − b‖_p^p ≥ i`, at which point the objective is within
//! a `(1 + ε)` factor of optimal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    constrained_l2_min_with_floor, dot, quadratic_subproblem_with_floor, Constraints, Matrix,
    DEFAULT_PIVOT_FLOOR,
};

/// Bisection/doubling cap of the line search.
const LINE_SEARCH_MAX_STEPS: usize = 200;

/// Hard cap on the default iteration budget.
const MAX_ITERATIONS_CAP: usize = 100_000;

/// An ℓp regression problem `min_{Cx = d} ‖Ax − b‖_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    a: Matrix,
    b: Vec<f64>,
    constraints: Option<Constraints>,
    p: f64,
}

impl ProblemInstance {
    pub fn new(a: Matrix, b: Vec<f64>, constraints: Option<Constraints>, p: f64) -> Result<Self> {
        let (m, n) = (a.rows(), a.cols());
        if n == 0 || m < n {
            return Err(Error::InvalidInstance(format!(
                "need m >= n >= 1, got {m}x{n}"
            )));
        }
        if b.len() != m {
            return Err(Error::DimensionMismatch {
                context: "b",
                expected: m,
                got: b.len(),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("b"));
        }
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::InvalidInstance(format!("p must be a finite real >= 2, got {p}")));
        }
        let constraints = constraints.filter(|c| !c.is_empty());
        if let Some(c) = &constraints {
            if c.matrix.cols() != n {
                return Err(Error::DimensionMismatch {
                    context: "C columns",
                    expected: n,
                    got: c.matrix.cols(),
                });
            }
        }
        Ok(Self {
            a,
            b,
            constraints,
            p,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn constraints(&self) -> Option<&Constraints> {
        self.constraints.as_ref()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }

    /// Same data with a different exponent.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.constraints.clone(), p)
    }

    /// Same matrices with `b` and `d` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let b = self.b.iter().map(|v| v * factor).collect();
        let constraints = self
            .constraints
            .as_ref()
            .map(|c| Constraints::new(c.matrix.clone(), c.rhs.iter().map(|v| v * factor).collect()))
            .transpose()?;
        Self::new(self.a.clone(), b, constraints, self.p)
    }

    /// `Ax − b`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        residual(&self.a, &self.b, x)
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        lp_objective(&self.a, &self.b, x, self.p)
    }
}

/// Solver parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative accuracy: the result satisfies `f(x) ≤ (1 + ε) OPT`.
    pub epsilon: f64,
    /// Iteration cap; `None` derives one from `p`, `m` and `ε`.
    pub max_iterations: Option<usize>,
    /// Relative bracket width at which the line search stops.
    pub line_search_tol: f64,
    /// Relative pivot floor for the Cholesky factorizations.
    pub linear_tol: f64,
    /// Rescale `b` and `d` so the initial objective is 1.
    pub normalize: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            max_iterations: None,
            line_search_tol: 1e-12,
            linear_tol: DEFAULT_PIVOT_FLOOR,
            normalize: true,
        }
    }
}

impl SolverConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !(self.line_search_tol > 0.0) || !(self.linear_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Default iteration budget: ten times the practical bound
/// `p^1.5 m^((p−2)/(2(p−1))) ln(m/ε) + p log₂(m/ε)`, capped at 100000.
pub fn default_max_iterations(p: f64, m: usize, epsilon: f64) -> usize {
    let m = m as f64;
    let ratio = m / epsilon;
    let bound = p.powf(1.5) * m.powf((p - 2.0) / (2.0 * (p - 1.0))) * ratio.ln() + p * ratio.log2();
    let budget = (10.0 * bound).ceil();
    if budget.is_finite() {
        (budget as usize).clamp(1, MAX_ITERATIONS_CAP)
    } else {
        MAX_ITERATIONS_CAP
    }
}

/// `‖v‖_p^p`, computed as `M^p Σ (|v_e|/M)^p` with `M = max |v_e|`.
pub fn lp_norm_pow(v: &[f64], p: f64) -> f64 {
    let max = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if max == 0.0 {
        return 0.0;
    }
    let sum: f64 = v.iter().map(|x| (x.abs() / max).powf(p)).sum();
    max.powf(p) * sum
}

/// `‖v‖_p`.
pub fn lp_norm(v: &[f64], p: f64) -> f64 {
    let max = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if max == 0.0 {
        return 0.0;
    }
    let sum: f64 = v.iter().map(|x| (x.abs() / max).powf(p)).sum();
    max * sum.powf(1.0 / p)
}

/// True when every `|rₑ|` is within the evaluation error of `Ax − b`,
/// `(n + 1) u (|A||x| + |b|)ₑ`, so `x` solves `Ax = b` to working precision.
fn residual_is_rounding_noise(a: &Matrix, b: &[f64], x: &[f64], r: &[f64]) -> bool {
    let gamma = (a.cols() + 1) as f64 * f64::EPSILON;
    r.iter().zip(b).enumerate().all(|(e, (re, be))| {
        let scale: f64 = a.row(e).iter().zip(x).map(|(aij, xj)| (aij * xj).abs()).sum::<f64>() + be.abs();
        re.abs() <= gamma * scale
    })
}

fn residual(a: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut r = a.matvec(x);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= bi);
    r
}

/// `‖Ax − b‖_p^p`.
pub fn lp_objective(a: &Matrix, b: &[f64], x: &[f64], p: f64) -> Result<f64> {
    if x.len() != a.cols() || b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "lp_objective",
            expected: a.cols(),
            got: x.len(),
        });
    }
    let r = residual(a, b, x);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("residual"));
    }
    Ok(lp_norm_pow(&r, p))
}

/// `λ = 16p`.
#[inline]
pub fn lambda(p: f64) -> f64 {
    16.0 * p
}

/// Padding `s = ½ i^((p−2)/p) m^(−(p−2)/p)`.
pub fn padding(i: f64, m: usize, p: f64) -> f64 {
    let e = (p - 2.0) / p;
    0.5 * i.powf(e) * (m as f64).powf(-e)
}

/// Everything derived from the current iterate.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub x: Vec<f64>,
    /// Refinement scale.
    pub i: f64,
    /// `Ax − b`.
    pub residual: Vec<f64>,
    /// Weights `|Ax − b|^(p−2)`.
    pub r: Vec<f64>,
    pub s: f64,
    /// `p R (Ax − b)`.
    pub g: Vec<f64>,
    pub objective: f64,
}

impl IterationState {
    pub fn new(a: &Matrix, b: &[f64], x: Vec<f64>, i: f64, p: f64) -> Self {
        let res = residual(a, b, &x);
        Self::from_residual(x, res, i, p)
    }

    fn from_residual(x: Vec<f64>, residual: Vec<f64>, i: f64, p: f64) -> Self {
        let r: Vec<f64> = residual.iter().map(|v| v.abs().powf(p - 2.0)).collect();
        let g = r.iter().zip(&residual).map(|(w, v)| p * w * v).collect();
        let s = padding(i, residual.len(), p);
        let objective = lp_norm_pow(&residual, p);
        Self {
            x,
            i,
            residual,
            r,
            s,
            g,
            objective,
        }
    }

    /// Diagonal of `R + sI`.
    pub fn padded_weights(&self) -> Vec<f64> {
        self.r.iter().map(|w| w + self.s).collect()
    }
}

fn residual_value_along(q: &[f64], state: &IterationState, p: f64) -> f64 {
    let linear = dot(&state.g, q);
    let quad: f64 = state.r.iter().zip(q).map(|(w, v)| w * v * v).sum();
    linear - 2.0 * p * p * quad - (p * lp_norm(q, p)).powf(p)
}

/// The local model `gᵀAΔ − 2p² ΔᵀAᵀRAΔ − p^p ‖AΔ‖_p^p` at the state's iterate,
/// with the unpadded weights `R`.
pub fn residual_value(delta: &[f64], state: &IterationState, a: &Matrix, p: f64) -> f64 {
    residual_value_along(&a.matvec(delta), state, p)
}

/// Outcome of the insufficient-progress test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressCheckReport {
    /// `p^p ‖AΔ‖_p^p / (2p² ΔᵀAᵀ(R+sI)AΔ)`.
    pub k: f64,
    pub alpha0: f64,
    pub residual_at_alpha0: f64,
    /// `ΔᵀAᵀ(R+sI)AΔ`.
    pub quad_form: f64,
    pub insufficient: bool,
}

fn check_progress_along(q: &[f64], state: &IterationState, p: f64) -> ProgressCheckReport {
    let lam = lambda(p);
    let quad_form: f64 = state
        .r
        .iter()
        .zip(q)
        .map(|(w, v)| (w + state.s) * v * v)
        .sum();
    let q_norm = lp_norm(q, p);
    let base_step = 1.0 / (16.0 * lam);
    // k spans hundreds of orders of magnitude for large p; stay in logs.
    let (k, alpha0) = if quad_form > 0.0 && q_norm > 0.0 {
        let ln_k = p * (p * q_norm).ln() - (2.0 * p * p * quad_form).ln();
        let ln_cap = -((16.0 * lam).ln() + ln_k) / (p - 1.0);
        (ln_k.exp(), base_step.min(ln_cap.exp()))
    } else {
        (0.0, base_step)
    };
    let step: Vec<f64> = q.iter().map(|v| alpha0 * v).collect();
    let residual_at_alpha0 = residual_value_along(&step, state, p);
    let insufficient =
        residual_at_alpha0 < alpha0 / 4.0 * state.i || quad_form > lam * state.i / (p * p);
    ProgressCheckReport {
        k,
        alpha0,
        residual_at_alpha0,
        quad_form,
        insufficient,
    }
}

/// Decides whether the refinement scale must be halved after step `delta`.
///
/// `k` and the quadratic form use the padded weights `R + sI`; the residual
/// model at `α₀Δ` uses the unpadded `R`.
pub fn progress_check(delta: &[f64], state: &IterationState, a: &Matrix, p: f64) -> ProgressCheckReport {
    check_progress_along(&a.matvec(delta), state, p)
}

/// Exact minimizer of `φ(α) = ‖ρ − αq‖_p^p` over `α ≥ 0` by bisection on the
/// monotone derivative.
fn minimize_along(rho: &[f64], q: &[f64], p: f64, tol: f64) -> Result<f64> {
    let point = |alpha: f64| -> Vec<f64> { rho.iter().zip(q).map(|(r, d)| r - alpha * d).collect() };
    let phi = |alpha: f64| lp_norm_pow(&point(alpha), p);
    let dphi = |alpha: f64| -> f64 {
        -p * rho
            .iter()
            .zip(q)
            .map(|(r, d)| {
                let v = r - alpha * d;
                v.abs().powf(p - 2.0) * v * d
            })
            .sum::<f64>()
    };

    let d0 = dphi(0.0);
    if d0.is_nan() {
        return Err(Error::NonFinite("line search derivative"));
    }
    if d0 >= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut doublings = 0;
    loop {
        let d = dphi(hi);
        if d.is_nan() {
            return Err(Error::NonFinite("line search derivative"));
        }
        if d >= 0.0 {
            break;
        }
        doublings += 1;
        if doublings >= LINE_SEARCH_MAX_STEPS {
            return Err(Error::BracketFailure);
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..LINE_SEARCH_MAX_STEPS {
        // Relative width: steps along nearly-degenerate directions can be
        // huge, so an absolute width would leave x visibly perturbed.
        if hi - lo <= tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let d = dphi(mid);
        if d == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if d < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (phi_lo, phi_hi) = (phi(lo), phi(hi));
    let (alpha, best) = if phi_hi < phi_lo { (hi, phi_hi) } else { (lo, phi_lo) };
    if best > phi(0.0) {
        return Ok(0.0);
    }
    Ok(alpha)
}

/// `argmin_{α ≥ 0} ‖A(x − αΔ) − b‖_p^p`.
pub fn line_search(a: &Matrix, b: &[f64], x: &[f64], delta: &[f64], p: f64, tol: f64) -> Result<f64> {
    let rho = residual(a, b, x);
    let q = a.matvec(delta);
    minimize_along(&rho, &q, p, tol)
}

/// Upper bound on `‖x − x★‖∞` for a `(1 + δ)`-approximate solution:
/// `(2√m / σ_min(A)) (2δ/m)^(1/p) ‖Ax★ − b‖_p`.
pub fn coordinate_error_bound(delta: f64, opt_norm: f64, sigma_min: f64, p: f64, m: usize) -> f64 {
    let m = m as f64;
    2.0 * m.sqrt() / sigma_min * (2.0 * delta / m).powf(1.0 / p) * opt_norm
}

/// One row of the solve trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 1-based iteration number.
    pub iteration: usize,
    /// Objective after the step.
    pub objective: f64,
    /// Refinement scale used during this iteration (before any halving).
    pub i: f64,
    pub alpha: f64,
    pub halved: bool,
    /// `residual(αΔ) / i`, the step's quality relative to the target scale.
    pub residual_ratio: f64,
    /// `‖Cx − d‖∞ / (1 + ‖d‖∞)` after the step; 0 without constraints.
    pub constraint_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Objective of the constrained ℓ2 minimizer the solve started from.
    pub initial_objective: f64,
    pub iterations: usize,
    pub halvings: usize,
    /// Refinement scale on exit.
    pub final_i: f64,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

/// Solves `min_{Cx = d} ‖Ax − b‖_p^p` to relative accuracy `config.epsilon`.
///
/// Hitting the iteration cap is not an error: the best iterate is returned
/// with `converged = false`.
pub fn p_irls(instance: &ProblemInstance, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    let p = instance.p();
    let a = instance.a();
    let m = a.rows();
    let eps = config.epsilon;
    let max_iterations = config
        .max_iterations
        .unwrap_or_else(|| default_max_iterations(p, m, eps));

    let x0 = constrained_l2_min_with_floor(a, instance.b(), instance.constraints(), config.linear_tol)?;
    let res0 = instance.residual(&x0);
    if res0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial residual"));
    }
    let initial_objective = lp_norm_pow(&res0, p);
    if initial_objective == 0.0 || residual_is_rounding_noise(a, instance.b(), &x0, &res0) {
        return Ok(SolveResult {
            x: x0,
            objective: initial_objective,
            initial_objective,
            iterations: 0,
            halvings: 0,
            final_i: 0.0,
            converged: true,
            trace: Vec::new(),
        });
    }

    // Work on a copy scaled so that ‖Ax⁽⁰⁾ − b‖_p = 1.
    let unit = if config.normalize { lp_norm(&res0, p) } else { 1.0 };
    let work = instance.scaled(1.0 / unit)?;
    let objective_unit = if config.normalize { initial_objective } else { 1.0 };
    let b = work.b();
    let cons = work.constraints();

    let x: Vec<f64> = x0.iter().map(|v| v / unit).collect();
    let res: Vec<f64> = res0.iter().map(|v| v / unit).collect();
    let mut objective = lp_norm_pow(&res, p);
    let mut i = objective / (16.0 * p);
    let mut state = IterationState::from_residual(x, res, i, p);
    let stop_factor = eps / (16.0 * p * (1.0 + eps));

    let mut trace = Vec::new();
    let mut halvings = 0;
    let mut converged = true;
    while stop_factor * objective < i {
        if trace.len() >= max_iterations {
            converged = false;
            break;
        }
        let weights = state.padded_weights();
        let step = quadratic_subproblem_with_floor(
            a,
            &weights,
            &state.g,
            cons.map(|c| &c.matrix),
            i,
            config.linear_tol,
        );
        let (mut alpha, mut halved, residual_ratio, mut x_next, promised) = match step {
            Ok(delta) => {
                let q = a.matvec(&delta);
                let alpha = minimize_along(&state.residual, &q, p, config.line_search_tol)?;
                let report = check_progress_along(&q, &state, p);
                let scaled_q: Vec<f64> = q.iter().map(|v| alpha * v).collect();
                let ratio = residual_value_along(&scaled_q, &state, p) / i;
                let mut x_next = state.x.clone();
                x_next.iter_mut().zip(&delta).for_each(|(xi, di)| *xi -= alpha * di);
                (alpha, report.insufficient, ratio, x_next, report.alpha0 * i / 4.0)
            }
            // gᵀA vanishes on the feasible directions: x is stationary, so
            // only the scale can shrink.
            Err(Error::DegenerateConstraint) => (0.0, true, 0.0, state.x.clone(), 0.0),
            Err(e) => return Err(e),
        };
        let mut res = residual(a, b, &x_next);
        if res.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("residual"));
        }
        // A passed check guarantees a decrease of at least α₀i/4 in exact
        // arithmetic. Falling short means the iterate sits at the rounding
        // floor, so the check passed on noise.
        let decrease = objective - lp_norm_pow(&res, p);
        if !halved && decrease < promised {
            halved = true;
        }
        // Rounding can make the recomputed residual worse than the line
        // search saw; never accept an increase.
        if decrease < 0.0 {
            alpha = 0.0;
            halved = true;
            x_next = state.x.clone();
            res = state.residual.clone();
        }
        let used_i = i;
        if halved {
            i /= 2.0;
            halvings += 1;
        }
        state = IterationState::from_residual(x_next, res, i, p);
        objective = state.objective;
        trace.push(TraceEntry {
            iteration: trace.len() + 1,
            objective: objective * objective_unit,
            i: used_i * objective_unit,
            alpha,
            halved,
            residual_ratio,
            constraint_violation: cons.map_or(0.0, |c| c.relative_violation(&state.x)),
        });
    }

    Ok(SolveResult {
        x: state.x.iter().map(|v| v * unit).collect(),
        objective: objective * objective_unit,
        initial_objective,
        iterations: trace.len(),
        halvings,
        final_i: i * objective_unit,
        converged,
        trace,
    })
}
