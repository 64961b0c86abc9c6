//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run alone with `cargo test -p pirls --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use common::{check_solve, linear_fit, max_abs_diff, random_instance, rng};
use pirls::instances::{
    generate_knn_graph_instance, generate_random_matrix_instance, graph_to_regression, Edge, GraphInstance,
    Instance, KnnGraphParams, RngSeed,
};
use pirls::linalg::constrained_l2_min;
use pirls::solver::lp_norm;
use pirls::{p_irls, reference_solve, verify_first_order, ProblemInstance, SolveResult, SolverConfig};
use rand::Rng;

// Criterion 1.
const C1_INSTANCES: usize = 50;
const C1_EPS: f64 = 1e-10;
const C1_OBJECTIVE_RATIO: f64 = 1.0 + 1e-8;
const C1_GRADIENT_TOL: f64 = 1e-8;
const C1_P_VALUES: [f64; 6] = [2.0, 2.5, 4.0, 8.0, 16.0, 32.0];
// Criterion 2.
const C2_INSTANCES: usize = 20;
const C2_REL_TOL: f64 = 1e-10;
// Criterion 3.
const C3_SEEDS: u64 = 5;
const C3_P: f64 = 50.0;
const C3_EPS: f64 = 1e-8;
const C3_MAX_MEAN_ITERATIONS: f64 = 150.0;
// Criterion 4.
const C4_REPS: u64 = 5;
const C4_P: f64 = 8.0;
const C4_EPS: f64 = 1e-8;
const C4_MIN_R2: f64 = 0.9;
const C4_MAX_SIZE_RATIO: f64 = 2.0;
const C4_MAX_P_RATIO: f64 = 8.0;
// Criterion 6.
const C6_INSTANCES: u64 = 20;
const C6_REFERENCE_EPS: f64 = 1e-25;
const C6_EPS: [f64; 3] = [1e-4, 1e-8, 1e-12];
// Criterion 7.
const C7_GRAPHS: u64 = 100;
const C7_POINTS: usize = 100;
const C7_REL_TOL: f64 = 1e-12;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

/// Collects every solve from criteria 1–4 for the invariant check.
#[derive(Default)]
struct InvariantLog {
    solves: usize,
    violations: Vec<String>,
}

impl InvariantLog {
    fn solve(&mut self, label: &str, inst: &ProblemInstance, eps: f64) -> SolveResult {
        let res = p_irls(inst, &SolverConfig::with_epsilon(eps)).unwrap_or_else(|e| panic!("{label}: {e}"));
        self.solves += 1;
        self.violations.extend(check_solve(label, inst, eps, &res));
        res
    }
}

fn criterion_1(log: &mut InvariantLog) -> Outcome {
    let mut worst_ratio = 0.0f64;
    let mut worst_grad = 0.0f64;
    let mut failures = Vec::new();
    for k in 0..C1_INSTANCES {
        let mut r = rng(1000 + k as u64);
        let m = r.gen_range(20..=100);
        let n = r.gen_range(5..=40.min(m));
        let p = C1_P_VALUES[k % C1_P_VALUES.len()];
        let inst = random_instance(&mut r, m, n, p, k % 2 == 1);
        let res = log.solve(&format!("c1 #{k}"), &inst, C1_EPS);
        let x_ref = match reference_solve(&inst, C1_GRADIENT_TOL) {
            Ok(x) => x,
            Err(e) => {
                failures.push(format!("#{k} reference: {e}"));
                continue;
            }
        };
        let cert = verify_first_order(&inst, &x_ref, C1_GRADIENT_TOL, 1e-8);
        let ratio = res.objective / cert.objective;
        worst_ratio = worst_ratio.max(ratio);
        worst_grad = worst_grad.max(cert.projected_gradient_norm);
        if !cert.passed {
            failures.push(format!("#{k} certificate {cert:?}"));
        }
        if ratio > C1_OBJECTIVE_RATIO {
            failures.push(format!("#{k} ({m}x{n}, p={p}) ratio {ratio}"));
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{C1_INSTANCES} instances, worst objective ratio {worst_ratio:.12}, worst reference gradient {worst_grad:.2e}{}",
            summarize(&failures)
        ),
    )
}

fn criterion_2(log: &mut InvariantLog) -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..C2_INSTANCES {
        let mut r = rng(2000 + k as u64);
        let m = r.gen_range(20..=100);
        let n = r.gen_range(5..=40.min(m));
        let inst = random_instance(&mut r, m, n, 2.0, k % 2 == 1);
        let res = log.solve(&format!("c2 #{k}"), &inst, 1e-10);
        let ls = constrained_l2_min(inst.a(), inst.b(), inst.constraints()).unwrap();
        let scale = ls.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        worst = worst.max(max_abs_diff(&res.x, &ls) / scale);
    }
    Outcome::new(
        worst <= C2_REL_TOL,
        format!("{C2_INSTANCES} instances, worst relative inf-norm error {worst:.2e} (limit {C2_REL_TOL:e})"),
    )
}

fn criterion_3(log: &mut InvariantLog) -> Outcome {
    let mut matrix = Vec::new();
    let mut graph = Vec::new();
    let start = Instant::now();
    for seed in 0..C3_SEEDS {
        let inst = generate_random_matrix_instance(1000, 850, C3_P, RngSeed(3000 + seed)).unwrap();
        matrix.push(log.solve(&format!("c3 matrix seed {seed}"), &inst, C3_EPS).iterations as f64);
        let g = generate_knn_graph_instance(KnnGraphParams::with_defaults(1000, C3_P), RngSeed(3100 + seed)).unwrap();
        let inst = graph_to_regression(&g).unwrap();
        graph.push(log.solve(&format!("c3 graph seed {seed}"), &inst, C3_EPS).iterations as f64);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mm, mg) = (mean(&matrix), mean(&graph));
    Outcome::new(
        mm <= C3_MAX_MEAN_ITERATIONS && mg <= C3_MAX_MEAN_ITERATIONS,
        format!(
            "mean iterations: 1000x850 matrices {mm:.1} {matrix:?}, 1000-node graphs {mg:.1} {graph:?} \
             (limit {C3_MAX_MEAN_ITERATIONS}), {:.0}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn mean_iterations(log: &mut InvariantLog, label: &str, rows: usize, cols: usize, p: f64, eps: f64) -> f64 {
    let total: usize = (0..C4_REPS)
        .map(|rep| {
            let inst = generate_random_matrix_instance(rows, cols, p, RngSeed(4000 + rep)).unwrap();
            log.solve(&format!("{label} rep {rep}"), &inst, eps).iterations
        })
        .sum();
    total as f64 / C4_REPS as f64
}

fn criterion_4(log: &mut InvariantLog) -> Outcome {
    let eps_values: Vec<f64> = (2..=10).map(|k| 10f64.powi(-k)).collect();
    let eps_means: Vec<f64> = eps_values
        .iter()
        .map(|&e| mean_iterations(log, &format!("c4a eps {e:e}"), 400, 300, C4_P, e))
        .collect();
    let log_inv: Vec<f64> = eps_values.iter().map(|e| (1.0 / e).ln()).collect();
    let (slope, r2) = linear_fit(&log_inv, &eps_means);
    let a_ok = slope > 0.0 && r2 >= C4_MIN_R2;

    let size_means: Vec<f64> = [150usize, 350, 550, 750, 950]
        .iter()
        .map(|&m| mean_iterations(log, &format!("c4b m {m}"), m, m - 50, C4_P, C4_EPS))
        .collect();
    let size_ratio = size_means.iter().cloned().fold(f64::MIN, f64::max) / size_means.iter().cloned().fold(f64::MAX, f64::min);
    let b_ok = size_ratio <= C4_MAX_SIZE_RATIO;

    let p_means: Vec<f64> = [4.0, 8.0, 16.0, 32.0]
        .iter()
        .map(|&p| mean_iterations(log, &format!("c4c p {p}"), 400, 300, p, C4_EPS))
        .collect();
    let p_ratio = p_means[3] / p_means[0];
    let c_ok = p_ratio <= C4_MAX_P_RATIO;

    Outcome::new(
        a_ok && b_ok && c_ok,
        format!(
            "(a) slope {slope:.3}/ln-unit r2 {r2:.3} means {eps_means:?} [{}]; (b) size ratio {size_ratio:.2} means {size_means:?} [{}]; \
             (c) p32/p4 ratio {p_ratio:.2} means {p_means:?} [{}]",
            verdict(a_ok),
            verdict(b_ok),
            verdict(c_ok)
        ),
    )
}

fn criterion_5(log: &InvariantLog) -> Outcome {
    Outcome::new(
        log.violations.is_empty() && log.solves > 0,
        format!(
            "{} solves checked, {} violations{}",
            log.solves,
            log.violations.len(),
            summarize(&log.violations)
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for p in [4.0, 8.0] {
        let mut mean_err = [0.0; 3];
        for k in 0..C6_INSTANCES {
            let inst = generate_random_matrix_instance(200, 160, p, RngSeed(6000 + k)).unwrap();
            let pilot = p_irls(&inst, &SolverConfig::with_epsilon(C6_REFERENCE_EPS)).unwrap();
            let inst = inst.scaled(1.0 / lp_norm(&inst.residual(&pilot.x), p)).unwrap();
            let star = p_irls(&inst, &SolverConfig::with_epsilon(C6_REFERENCE_EPS)).unwrap();
            for (slot, &eps) in mean_err.iter_mut().zip(&C6_EPS) {
                let x = p_irls(&inst, &SolverConfig::with_epsilon(eps)).unwrap().x;
                *slot += max_abs_diff(&x, &star.x) / C6_INSTANCES as f64;
            }
        }
        let log_eps: Vec<f64> = C6_EPS.iter().map(|e| e.ln()).collect();
        let log_err: Vec<f64> = mean_err.iter().map(|e| e.ln()).collect();
        let (slope, _) = linear_fit(&log_eps, &log_err);
        let (lo, hi) = (0.5 / p, 2.0 / p);
        let in_band = slope >= lo && slope <= hi;
        ok &= in_band;
        details.push(format!(
            "p={p}: mean errors {mean_err:?} slope {slope:.4} band [{lo}, {hi}] [{}]",
            verdict(in_band)
        ));
    }
    Outcome::new(ok, details.join("; "))
}

/// `Σ_e w_e |x_u − x_v|^p` computed straight from the edge list.
fn direct_laplacian(g: &GraphInstance, x: &[f64]) -> f64 {
    let mut value = vec![f64::NAN; g.num_vertices()];
    let mut next = 0;
    for (v, slot) in value.iter_mut().enumerate() {
        *slot = match g.labels().get(&v) {
            Some(&label) => label,
            None => {
                next += 1;
                x[next - 1]
            }
        };
    }
    g.edges()
        .iter()
        .map(|e| e.weight * (value[e.u] - value[e.v]).abs().powf(g.p()))
        .sum()
}

fn random_graph(seed: u64) -> GraphInstance {
    let mut r = rng(seed);
    let nv = r.gen_range(3..=25);
    let p = 2.0 + r.gen::<f64>() * 8.0;
    let mut edges = BTreeMap::new();
    // Random spanning tree first, so there are never fewer edges than unknowns.
    for v in 1..nv {
        let u = r.gen_range(0..v);
        edges.insert((u, v), r.gen_range(0.01..2.0));
    }
    let target = r.gen_range(nv - 1..=nv * (nv - 1) / 2);
    while edges.len() < target {
        let (u, v) = (r.gen_range(0..nv), r.gen_range(0..nv));
        if u != v {
            edges.entry((u.min(v), u.max(v))).or_insert_with(|| r.gen_range(0.01..2.0));
        }
    }
    let n_labels = r.gen_range(1..nv);
    let mut labels = BTreeMap::new();
    while labels.len() < n_labels {
        labels.insert(r.gen_range(0..nv), r.gen_range(-1.0..1.0));
    }
    let edges = edges
        .into_iter()
        .map(|((u, v), weight)| if r.gen() { Edge { u, v, weight } } else { Edge { u: v, v: u, weight } })
        .collect();
    GraphInstance::new(nv, edges, labels, p).unwrap()
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..C7_GRAPHS {
        let g = random_graph(7000 + seed);
        let inst = graph_to_regression(&g).unwrap();
        let mut r = rng(7500 + seed);
        for _ in 0..C7_POINTS {
            let x: Vec<f64> = (0..inst.cols()).map(|_| r.gen_range(-2.0..2.0)).collect();
            let direct = direct_laplacian(&g, &x);
            let reduced = inst.objective(&x).unwrap();
            let rel = if direct == 0.0 { reduced.abs() } else { (reduced - direct).abs() / direct };
            worst = worst.max(rel);
        }
    }
    Outcome::new(
        worst <= C7_REL_TOL,
        format!("{C7_GRAPHS} graphs x {C7_POINTS} points, worst relative error {worst:.2e} (limit {C7_REL_TOL:e})"),
    )
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();
    let files_identical = (0..2).all(|round| {
        let write = |name: &str, inst: &Instance| {
            let path = dir.path().join(format!("{name}-{round}.json"));
            pirls::instances::write_instance(inst, &path).unwrap();
            std::fs::read(path).unwrap()
        };
        let matrix = Instance::Matrix(generate_random_matrix_instance(120, 80, 6.0, RngSeed(8000)).unwrap());
        let graph = Instance::Graph(
            generate_knn_graph_instance(KnnGraphParams::with_defaults(150, 6.0), RngSeed(8001)).unwrap(),
        );
        let bytes = (write("matrix", &matrix), write("graph", &graph));
        problems.push((matrix, graph, bytes));
        round == 0 || problems[0].2 == problems[1].2
    });
    let trace_key = |r: &SolveResult| -> Vec<(u64, u64, u64, bool)> {
        r.trace
            .iter()
            .map(|t| (t.objective.to_bits(), t.i.to_bits(), t.alpha.to_bits(), t.halved))
            .collect()
    };
    let mut traces_identical = true;
    let mut lengths = Vec::new();
    for pick in 0..2 {
        let runs: Vec<SolveResult> = (0..2)
            .map(|round| {
                let inst = match pick {
                    0 => problems[round].0.to_problem(),
                    _ => problems[round].1.to_problem(),
                };
                let inst = inst.unwrap();
                p_irls(&inst, &SolverConfig::with_epsilon(1e-8)).unwrap()
            })
            .collect();
        traces_identical &= trace_key(&runs[0]) == trace_key(&runs[1])
            && runs[0].x.iter().map(|v| v.to_bits()).eq(runs[1].x.iter().map(|v| v.to_bits()));
        lengths.push(runs[0].trace.len());
    }
    Outcome::new(
        files_identical && traces_identical,
        format!("instance files identical: {files_identical}; traces identical: {traces_identical} (lengths {lengths:?})"),
    )
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "fail"
    }
}

fn summarize(items: &[String]) -> String {
    match items {
        [] => String::new(),
        _ => format!("; first: {}", items.iter().take(3).cloned().collect::<Vec<_>>().join(" | ")),
    }
}

fn main() {
    let mut log = InvariantLog::default();
    let mut all_passed = true;
    let mut report = |n: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = run();
        all_passed &= outcome.passed;
        println!(
            "criterion {n} [{}] {name}: {} ({:.1}s)",
            if outcome.passed { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "optimality vs oracle", &mut || criterion_1(&mut log));
    report(2, "p = 2 exactness", &mut || criterion_2(&mut log));
    report(3, "iteration counts at p = 50", &mut || criterion_3(&mut log));
    report(4, "scaling shape", &mut || criterion_4(&mut log));
    report(5, "invariant suite", &mut || criterion_5(&log));
    report(6, "coordinate-wise convergence", &mut criterion_6);
    report(7, "graph reduction identity", &mut criterion_7);
    report(8, "determinism", &mut criterion_8);
    if !all_passed {
        std::process::exit(1);
    }
}
