//! Parameter sweeps: vary one of size, `p` or `ε`, solve fresh seeded
//! instances and collect iteration counts and timings.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{
    generate_knn_graph_instance, generate_random_matrix_instance, graph_to_regression, KnnGraphParams, RngSeed,
};
use crate::solver::{p_irls, ProblemInstance, SolverConfig};

/// Column header of sweep CSV output. Aggregate rows carry `mean` or `std`
/// in the `rep` column.
pub const CSV_HEADER: &str = "axis_value,rep,iterations,halvings,wall_ms,objective,error";

/// Environment variable capping sweep worker threads.
pub const THREADS_ENV: &str = "PIRLS_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Rows of a matrix instance (columns follow as `rows − 50`) or vertices
    /// of a graph instance.
    Size,
    P,
    Epsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Matrix,
    Graph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub kind: InstanceKind,
    pub values: Vec<f64>,
    /// Matrix rows when size is fixed.
    pub rows: usize,
    /// Matrix columns when size is fixed.
    pub cols: usize,
    /// Graph vertices when size is fixed.
    pub vertices: usize,
    pub p: f64,
    pub epsilon: f64,
    pub repetitions: usize,
    /// Repetition `r` uses seed `seed_base + r` for every axis value.
    pub seed_base: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.values.is_empty() {
            return bad("sweep values must be non-empty");
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite");
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("sweep values must be strictly increasing");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.axis == SweepAxis::Size && self.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return bad("size values must be positive integers");
        }
        Ok(())
    }

    /// Instance and solver settings for one grid point.
    pub fn build(&self, value: f64, rep: usize) -> Result<(ProblemInstance, SolverConfig)> {
        let seed = RngSeed(self.seed_base.wrapping_add(rep as u64));
        let p = if self.axis == SweepAxis::P { value } else { self.p };
        let epsilon = if self.axis == SweepAxis::Epsilon { value } else { self.epsilon };
        let instance = match self.kind {
            InstanceKind::Matrix => {
                let (rows, cols) = if self.axis == SweepAxis::Size {
                    let rows = value as usize;
                    (rows, rows.saturating_sub(50).max(1))
                } else {
                    (self.rows, self.cols)
                };
                generate_random_matrix_instance(rows, cols, p, seed)?
            }
            InstanceKind::Graph => {
                let vertices = if self.axis == SweepAxis::Size { value as usize } else { self.vertices };
                let graph = generate_knn_graph_instance(KnnGraphParams::with_defaults(vertices, p), seed)?;
                graph_to_regression(&graph)?
            }
        };
        Ok((instance, SolverConfig::with_epsilon(epsilon)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub rep: usize,
    pub iterations: usize,
    pub halvings: usize,
    pub wall_ms: f64,
    pub objective: f64,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let error = self.error.as_deref().map(csv_field).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.axis_value, self.rep, self.iterations, self.halvings, self.wall_ms, self.objective, error
        )
    }
}

/// Mean and population standard deviation of the successful rows at one
/// axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub axis_value: f64,
    pub successes: usize,
    pub failures: usize,
    pub iterations: (f64, f64),
    pub halvings: (f64, f64),
    pub wall_ms: (f64, f64),
    pub objective: (f64, f64),
}

impl SweepAggregate {
    pub fn to_csv(&self) -> [String; 2] {
        let error = if self.failures > 0 {
            format!("{} failed", self.failures)
        } else {
            String::new()
        };
        let line = |tag: &str, pick: fn(&(f64, f64)) -> f64| {
            format!(
                "{},{tag},{},{},{},{},{error}",
                self.axis_value,
                pick(&self.iterations),
                pick(&self.halvings),
                pick(&self.wall_ms),
                pick(&self.objective)
            )
        };
        [line("mean", |s| s.0), line("std", |s| s.1)]
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Per-value aggregates in axis order.
pub fn aggregate(spec: &SweepSpec, rows: &[SweepRow]) -> Vec<SweepAggregate> {
    spec.values
        .iter()
        .map(|&value| {
            let ok: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.axis_value == value && r.error.is_none())
                .collect();
            let failures = rows.iter().filter(|r| r.axis_value == value && r.error.is_some()).count();
            let stat = |f: fn(&SweepRow) -> f64| mean_std(ok.iter().map(move |r| f(r)));
            SweepAggregate {
                axis_value: value,
                successes: ok.len(),
                failures,
                iterations: stat(|r| r.iterations as f64),
                halvings: stat(|r| r.halvings as f64),
                wall_ms: stat(|r| r.wall_ms),
                objective: stat(|r| r.objective),
            }
        })
        .collect()
}

fn run_point(spec: &SweepSpec, value: f64, rep: usize) -> SweepRow {
    let mut row = SweepRow {
        axis_value: value,
        rep,
        iterations: 0,
        halvings: 0,
        wall_ms: f64::NAN,
        objective: f64::NAN,
        error: None,
    };
    let solved = spec.build(value, rep).and_then(|(instance, config)| {
        let start = Instant::now();
        let result = p_irls(&instance, &config)?;
        Ok((result, start.elapsed()))
    });
    match solved {
        Ok((result, elapsed)) => {
            row.iterations = result.iterations;
            row.halvings = result.halvings;
            row.wall_ms = elapsed.as_secs_f64() * 1e3;
            row.objective = result.objective;
            if !result.converged {
                row.error = Some("iteration limit".into());
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Worker count from `PIRLS_THREADS`, else the number of processors.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every (value, repetition) pair on up to `threads` workers.
///
/// `on_row` is called under a lock as each row completes, so rows arrive in
/// completion order. Returns all rows in the same order.
pub fn run_sweep(spec: &SweepSpec, threads: usize, mut on_row: impl FnMut(&SweepRow) + Send) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let jobs: Vec<(f64, usize)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.repetitions).map(move |r| (v, r)))
        .collect();
    let next = AtomicUsize::new(0);
    let sink = Mutex::new((Vec::with_capacity(jobs.len()), &mut on_row));
    let workers = threads.clamp(1, jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(value, rep)) = jobs.get(job) else {
                    break;
                };
                let row = run_point(spec, value, rep);
                let mut guard = sink.lock().unwrap_or_else(|e| e.into_inner());
                (guard.1)(&row);
                guard.0.push(row);
            });
        }
    });
    Ok(sink.into_inner().unwrap_or_else(|e| e.into_inner()).0)
}

/// Runs the sweep and writes the CSV: header, one row per completed solve,
/// then a `mean` and a `std` row per axis value.
pub fn run_sweep_csv<W: Write + Send>(spec: &SweepSpec, threads: usize, out: &mut W) -> Result<Vec<SweepAggregate>> {
    spec.validate()?;
    writeln!(out, "{CSV_HEADER}")?;
    let mut write_error = None;
    let rows = run_sweep(spec, threads, |row| {
        if write_error.is_none() {
            if let Err(e) = writeln!(out, "{}", row.to_csv()).and_then(|_| out.flush()) {
                write_error = Some(e);
            }
        }
    })?;
    if let Some(e) = write_error {
        return Err(e.into());
    }
    let aggregates = aggregate(spec, &rows);
    for agg in &aggregates {
        for line in agg.to_csv() {
            writeln!(out, "{line}")?;
        }
    }
    out.flush()?;
    Ok(aggregates)
}
