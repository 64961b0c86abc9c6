#![allow(dead_code)]

use pirls::linalg::Constraints;
use pirls::solver::{lp_norm_pow, ProblemInstance, SolveResult};
use pirls::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Constant in the iteration ceiling `K p^{3.5} m^{(p−2)/(2(p−1))} ln(m/ε)`.
pub const ITERATION_CEILING_K: f64 = 1.0;
/// Slack on per-step objective increase, relative to the initial objective.
pub const MONOTONICITY_SLACK: f64 = 1e-12;
/// Extra halvings allowed beyond `ceil(p log₂(m/ε))`.
pub const HALVING_SLACK: usize = 8;
/// Relative constraint violation allowed at every iterate.
pub const FEASIBILITY_TOL: f64 = 1e-8;

pub fn halving_budget(p: f64, m: usize, eps: f64) -> usize {
    (p * (m as f64 / eps).log2()).ceil() as usize + HALVING_SLACK
}

pub fn iteration_ceiling(p: f64, m: usize, eps: f64) -> f64 {
    let m = m as f64;
    ITERATION_CEILING_K * p.powf(3.5) * m.powf((p - 2.0) / (2.0 * (p - 1.0))) * (m / eps).ln()
}

/// Lower bound on every in-loop scale value.
pub fn scale_floor(p: f64, m: usize, eps: f64, initial_objective: f64) -> f64 {
    eps / (16.0 * p * (1.0 + eps)) * initial_objective * (m as f64).powf(-(p - 2.0) / 2.0)
}

/// Every convergence-proof invariant that can be read off a finished solve.
/// Returns one message per violation.
pub fn check_solve(label: &str, inst: &ProblemInstance, eps: f64, res: &SolveResult) -> Vec<String> {
    let p = inst.p();
    let m = inst.rows();
    let mut out = Vec::new();
    let mut fail = |msg: String| out.push(format!("{label}: {msg}"));
    let obj0 = res.initial_objective;
    let slack = MONOTONICITY_SLACK * obj0;

    let mut prev = obj0;
    let mut prev_i = f64::INFINITY;
    let floor = scale_floor(p, m, eps, obj0);
    for t in &res.trace {
        if t.objective > prev + slack {
            fail(format!("objective rose at iteration {}: {} -> {}", t.iteration, prev, t.objective));
        }
        if t.i > prev_i {
            fail(format!("scale rose at iteration {}", t.iteration));
        }
        if t.i < floor {
            fail(format!("scale {} below floor {} at iteration {}", t.i, floor, t.iteration));
        }
        if t.constraint_violation > FEASIBILITY_TOL {
            fail(format!("constraint violation {} at iteration {}", t.constraint_violation, t.iteration));
        }
        prev = t.objective;
        prev_i = t.i;
    }
    if let Some(cons) = inst.constraints() {
        let v = cons.relative_violation(&res.x);
        if v > FEASIBILITY_TOL {
            fail(format!("final constraint violation {v}"));
        }
    }
    let budget = halving_budget(p, m, eps);
    if res.halvings > budget {
        fail(format!("{} halvings exceed budget {budget}", res.halvings));
    }
    let ceiling = iteration_ceiling(p, m, eps);
    if res.iterations as f64 > ceiling {
        fail(format!("{} iterations exceed ceiling {ceiling:.1}", res.iterations));
    }
    if !res.converged {
        fail("did not converge".into());
    }
    let stop = eps / (16.0 * p * (1.0 + eps)) * res.objective;
    if res.final_i > stop * (1.0 + 1e-12) {
        fail(format!("exited with scale {} above stopping level {stop}", res.final_i));
    }
    let direct = lp_norm_pow(&inst.residual(&res.x), p);
    if (direct - res.objective).abs() > 1e-9 * direct.max(f64::MIN_POSITIVE) {
        fail(format!("reported objective {} differs from recomputed {direct}", res.objective));
    }
    out
}

/// Uniform `[0,1)` instance with optional single random constraint, drawn
/// from a test-local generator.
pub fn random_instance(rng: &mut ChaCha8Rng, m: usize, n: usize, p: f64, constrained: bool) -> ProblemInstance {
    let a: Vec<f64> = (0..m * n).map(|_| rng.gen()).collect();
    let b: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
    let cons = constrained.then(|| {
        let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Constraints::new(Matrix::new(1, n, row).unwrap(), vec![rng.gen_range(-1.0..1.0)]).unwrap()
    });
    ProblemInstance::new(Matrix::new(m, n, a).unwrap(), b, cons, p).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Least-squares line fit `y ≈ a + b x`; returns `(slope, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
