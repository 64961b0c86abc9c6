//! Dense real linear algebra.
//!
//! Row-major matrices, a Cholesky factorization with a scale-relative pivot
//! floor, and the two equality-constrained least-squares closed forms used by
//! the solver: the constrained ℓ2 minimizer that seeds the iteration and the
//! weighted quadratic subproblem solved at every step.
//!
//! Storage convention: `data[i * cols + j]` holds entry `(i, j)`.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative pivot floor used when factoring normal-equation matrices.
pub const DEFAULT_PIVOT_FLOOR: f64 = 1e-12;

/// Relative tolerance for the symmetry precondition of [`cholesky`].
const SYMMETRY_TOL: f64 = 1e-12;

/// Fraction of nonzeros below which [`Matrix::weighted_gram`] switches to a
/// row-sparse accumulation.
const SPARSE_GRAM_DENSITY: f64 = 0.05;

/// A dense matrix stored in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from equally sized rows.
    ///
    /// Panics if the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                t.data[j * self.rows + i] = v;
            }
        }
        t
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ y`.
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "matvec_t dimension");
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(yi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        out
    }

    /// `Aᵀ diag(w) A`, exactly symmetric. Every weight must be non-negative.
    pub fn weighted_gram(&self, w: &[f64]) -> Matrix {
        assert_eq!(w.len(), self.rows, "weighted_gram dimension");
        debug_assert!(w.iter().all(|&v| v >= 0.0));
        let nnz = self.data.iter().filter(|v| **v != 0.0).count();
        let total = (self.rows * self.cols).max(1);
        if (nnz as f64) < SPARSE_GRAM_DENSITY * total as f64 {
            self.weighted_gram_sparse(w)
        } else {
            self.weighted_gram_dense(w)
        }
    }

    fn weighted_gram_dense(&self, w: &[f64]) -> Matrix {
        let (m, n) = (self.rows, self.cols);
        let mut scaled = self.data.clone();
        for (row, &we) in scaled.chunks_exact_mut(n.max(1)).zip(w) {
            let s = we.sqrt();
            row.iter_mut().for_each(|v| *v *= s);
        }
        let mut gram = Matrix::zeros(n, n);
        if m == 0 || n == 0 {
            return gram;
        }
        // SAFETY: `scaled` is m×n row-major and read as its own transpose
        // through the strides; `gram` is n×n row-major and written once.
        unsafe {
            matrixmultiply::dgemm(
                n,
                m,
                n,
                1.0,
                scaled.as_ptr(),
                1,
                n as isize,
                scaled.as_ptr(),
                n as isize,
                1,
                0.0,
                gram.data.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        gram.symmetrize_from_upper();
        gram
    }

    fn weighted_gram_sparse(&self, w: &[f64]) -> Matrix {
        let n = self.cols;
        let mut gram = Matrix::zeros(n, n);
        let mut nz: Vec<(usize, f64)> = Vec::new();
        for (e, &we) in w.iter().enumerate() {
            if we == 0.0 {
                continue;
            }
            nz.clear();
            nz.extend(
                self.row(e)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, &v)| (j, v)),
            );
            for (a, &(j, vj)) in nz.iter().enumerate() {
                let wj = we * vj;
                for &(k, vk) in &nz[a..] {
                    gram.data[j * n + k] += wj * vk;
                }
            }
        }
        gram.symmetrize_from_upper();
        gram
    }

    fn symmetrize_from_upper(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in 0..i {
                self.data[i * n + j] = self.data[j * n + i];
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "vstack dimension");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        }
    }

    /// Columns `start..end` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, end - start);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[start..end]);
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += a x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Lower-triangular Cholesky factor `M = L Lᵀ` of a symmetric positive
/// definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// The factor `L` as a dense matrix.
    pub fn factor(&self) -> Matrix {
        Matrix {
            rows: self.n,
            cols: self.n,
            data: self.l.clone(),
        }
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.n;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&self.l[i * n..i * n + j + 1], &self.l[j * n..j * n + j + 1]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        assert_eq!(x.len(), n, "cholesky solve dimension");
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            x[i] = (x[i] - dot(row, &x[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            x[i] /= self.l[i * n + i];
            let xi = x[i];
            let row = &self.l[i * n..i * n + i];
            axpy(-xi, row, &mut x[..i]);
        }
    }

    /// `M⁻¹ B` for every column of `B`, returned column-wise.
    pub fn solve_columns(&self, columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
        columns.iter().map(|c| self.solve(c)).collect()
    }
}

/// Factors a symmetric positive-definite matrix with the default pivot floor.
pub fn cholesky(m: &Matrix) -> Result<Cholesky> {
    cholesky_with_floor(m, DEFAULT_PIVOT_FLOOR)
}

/// Factors `m`, rejecting any pivot `≤ rel_floor · max_i m[i][i]`.
pub fn cholesky_with_floor(m: &Matrix, rel_floor: f64) -> Result<Cholesky> {
    if m.rows != m.cols {
        return Err(Error::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    let n = m.rows;
    let scale = m.max_abs();
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let max_diag = (0..n).map(|i| m[(i, i)]).fold(0.0f64, f64::max);
    let floor = rel_floor * max_diag;

    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = m.data[i * n + j] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            if i == j {
                if !(s > floor) {
                    return Err(Error::NotPositiveDefinite { index: i, pivot: s });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(Cholesky { n, l })
}

/// Linear equality constraints `C x = d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    pub matrix: Matrix,
    pub rhs: Vec<f64>,
}

impl Constraints {
    pub fn new(matrix: Matrix, rhs: Vec<f64>) -> Result<Self> {
        if matrix.rows() != rhs.len() {
            return Err(Error::DimensionMismatch {
                context: "constraint right-hand side",
                expected: matrix.rows(),
                got: rhs.len(),
            });
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("constraint right-hand side"));
        }
        Ok(Self { matrix, rhs })
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    /// `‖Cx − d‖∞ / (1 + ‖d‖∞)`.
    pub fn relative_violation(&self, x: &[f64]) -> f64 {
        let cx = self.matrix.matvec(x);
        let viol = cx
            .iter()
            .zip(&self.rhs)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        viol / (1.0 + norm_inf(&self.rhs))
    }
}

/// Cholesky factor of `D M D` with `D ≈ diag(M)^{-1/2}` rounded to powers of
/// two.
///
/// Weighted Gram matrices can have diagonals spread over many orders of
/// magnitude while being well conditioned after scaling; the pivot floor is
/// then applied to the unit-diagonal matrix.
#[derive(Debug, Clone)]
struct EquilibratedCholesky {
    scale: Vec<f64>,
    factor: Cholesky,
}

impl EquilibratedCholesky {
    fn new(m: &Matrix, rel_floor: f64) -> Result<Self> {
        let n = m.rows();
        if n != m.cols() {
            return Err(Error::NotSquare { rows: n, cols: m.cols() });
        }
        let mut scale = Vec::with_capacity(n);
        for i in 0..n {
            let d = m[(i, i)];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { index: i, pivot: d });
            }
            // A power of two near 1/√d keeps the scaling exact.
            scale.push((-(d.log2() / 2.0).round()).exp2());
        }
        let mut scaled = m.clone();
        for i in 0..n {
            let si = scale[i];
            for (v, sj) in scaled.row_mut(i).iter_mut().zip(&scale) {
                *v *= si * sj;
            }
        }
        let factor = cholesky_with_floor(&scaled, rel_floor)?;
        Ok(Self { scale, factor })
    }

    fn dim(&self) -> usize {
        self.scale.len()
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = rhs.iter().zip(&self.scale).map(|(r, s)| r * s).collect();
        self.factor.solve_in_place(&mut x);
        x.iter_mut().zip(&self.scale).for_each(|(v, s)| *v *= s);
        x
    }
}

fn rank_deficient(err: Error) -> Error {
    match err {
        Error::NotPositiveDefinite { index, pivot } => Error::RankDeficient { index, pivot },
        other => other,
    }
}

/// Solves `Z = M⁻¹ Cᵀ` and the Schur complement `C M⁻¹ Cᵀ` for the rows of
/// `c_rows`, then returns `Z (C M⁻¹ Cᵀ)⁻¹ rhs`.
fn schur_solve(
    factor: &EquilibratedCholesky,
    c_rows: &[Vec<f64>],
    rhs: &[f64],
    rel_floor: f64,
) -> std::result::Result<Vec<f64>, Error> {
    let z: Vec<Vec<f64>> = c_rows.iter().map(|c| factor.solve(c)).collect();
    let k = c_rows.len();
    // C M⁻¹ Cᵀ is symmetric in exact arithmetic; average away roundoff.
    let mut schur = Matrix::zeros(k, k);
    for a in 0..k {
        for b in 0..=a {
            let v = 0.5 * (dot(&c_rows[a], &z[b]) + dot(&c_rows[b], &z[a]));
            schur[(a, b)] = v;
            schur[(b, a)] = v;
        }
    }
    let lambda = EquilibratedCholesky::new(&schur, rel_floor)?.solve(rhs);
    let mut out = vec![0.0; factor.dim()];
    for (zc, &l) in z.iter().zip(&lambda) {
        axpy(l, zc, &mut out);
    }
    Ok(out)
}

fn constraint_rows(c: &Matrix) -> Vec<Vec<f64>> {
    (0..c.rows()).map(|i| c.row(i).to_vec()).collect()
}

/// Iterative-refinement sweeps after the initial normal-equation solve.
const REFINEMENT_STEPS: usize = 2;

/// `argmin_{Cx = d} ‖Ax − b‖₂²` through the Lagrangian closed form
/// `x = (AᵀA)⁻¹(Aᵀb + Cᵀ(C(AᵀA)⁻¹Cᵀ)⁻¹(d − C(AᵀA)⁻¹Aᵀb))`.
///
/// With no constraints (or a 0-row constraint matrix) this is ordinary
/// least squares.
pub fn constrained_l2_min(a: &Matrix, b: &[f64], constraints: Option<&Constraints>) -> Result<Vec<f64>> {
    constrained_l2_min_with_floor(a, b, constraints, DEFAULT_PIVOT_FLOOR)
}

pub(crate) fn constrained_l2_min_with_floor(
    a: &Matrix,
    b: &[f64],
    constraints: Option<&Constraints>,
    rel_floor: f64,
) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "least-squares right-hand side",
            expected: a.rows(),
            got: b.len(),
        });
    }
    let cons = constraints.filter(|c| !c.is_empty());
    if let Some(cons) = cons {
        if cons.matrix.cols() != a.cols() {
            return Err(Error::DimensionMismatch {
                context: "constraint columns",
                expected: a.cols(),
                got: cons.matrix.cols(),
            });
        }
    }
    let gram = a.weighted_gram(&vec![1.0; a.rows()]);
    let factor = EquilibratedCholesky::new(&gram, rel_floor).map_err(rank_deficient)?;
    let rows = cons.map(|c| constraint_rows(&c.matrix));
    // The map (b, d) ↦ x is linear, so the same solve applied to the
    // current residuals gives a refinement step.
    let solve = |b: &[f64], d: &[f64]| -> Result<Vec<f64>> {
        let mut x = factor.solve(&a.matvec_t(b));
        if let (Some(cons), Some(rows)) = (cons, &rows) {
            let gap: Vec<f64> = cons.matrix.matvec(&x).iter().zip(d).map(|(cx, di)| di - cx).collect();
            let correction =
                schur_solve(&factor, rows, &gap, rel_floor).map_err(|_| Error::InfeasibleConstraints)?;
            axpy(1.0, &correction, &mut x);
        }
        Ok(x)
    };
    let d = cons.map_or(&[][..], |c| &c.rhs[..]);
    let mut x = solve(b, d)?;
    for _ in 0..REFINEMENT_STEPS {
        let r: Vec<f64> = a.matvec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        let e: Vec<f64> = cons.map_or_else(Vec::new, |c| {
            c.matrix.matvec(&x).iter().zip(&c.rhs).map(|(cx, di)| di - cx).collect()
        });
        let step = solve(&r, &e)?;
        axpy(1.0, &step, &mut x);
    }
    Ok(x)
}

/// `argmin ΔᵀAᵀR′AΔ` subject to `gᵀAΔ = scale/2` and `CΔ = 0`, where
/// `R′ = diag(weights)`.
///
/// Solved as `Δ = (AᵀR′A)⁻¹C′ᵀ(C′(AᵀR′A)⁻¹C′ᵀ)⁻¹d′` with `C′ = [C; gᵀA]` and
/// `d′ = [0; scale/2]`.
pub fn quadratic_subproblem(
    a: &Matrix,
    weights: &[f64],
    g: &[f64],
    constraint_matrix: Option<&Matrix>,
    scale: f64,
) -> Result<Vec<f64>> {
    quadratic_subproblem_with_floor(a, weights, g, constraint_matrix, scale, DEFAULT_PIVOT_FLOOR)
}

pub(crate) fn quadratic_subproblem_with_floor(
    a: &Matrix,
    weights: &[f64],
    g: &[f64],
    constraint_matrix: Option<&Matrix>,
    scale: f64,
    rel_floor: f64,
) -> Result<Vec<f64>> {
    if weights.len() != a.rows() || g.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "subproblem weights/gradient",
            expected: a.rows(),
            got: weights.len().min(g.len()),
        });
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidInstance("subproblem weights must be positive".into()));
    }
    let gram = a.weighted_gram(weights);
    let factor = EquilibratedCholesky::new(&gram, rel_floor).map_err(rank_deficient)?;
    let pulled = a.matvec_t(g);
    if pulled.iter().all(|v| *v == 0.0) || pulled.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateConstraint);
    }
    let mut rows = constraint_matrix.map(constraint_rows).unwrap_or_default();
    let mut rhs = vec![0.0; rows.len()];
    rows.push(pulled);
    rhs.push(scale / 2.0);
    schur_solve(&factor, &rows, &rhs, rel_floor).map_err(|_| Error::DegenerateConstraint)
}

/// Householder QR of an `r × c` matrix: returns the full orthogonal `Q`
/// (`r × r`) and the upper-trapezoidal `R` (`r × c`).
pub fn qr(a: &Matrix) -> (Matrix, Matrix) {
    let (rows, cols) = (a.rows(), a.cols());
    let mut r = a.clone();
    let mut q = Matrix::identity(rows);
    for k in 0..cols.min(rows.saturating_sub(1)) {
        let mut v: Vec<f64> = (k..rows).map(|i| r[(i, k)]).collect();
        let alpha = norm2(&v);
        if alpha == 0.0 {
            continue;
        }
        v[0] += if v[0] >= 0.0 { alpha } else { -alpha };
        let vnorm2 = dot(&v, &v);
        if vnorm2 == 0.0 {
            continue;
        }
        // R ← (I − 2vvᵀ/vᵀv) R
        for j in 0..cols {
            let s: f64 = (k..rows).map(|i| v[i - k] * r[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..rows {
                r[(i, j)] -= s * v[i - k];
            }
        }
        // Q ← Q (I − 2vvᵀ/vᵀv)
        for i in 0..rows {
            let s: f64 = (k..rows).map(|j| q[(i, j)] * v[j - k]).sum::<f64>() * 2.0 / vnorm2;
            for j in k..rows {
                q[(i, j)] -= s * v[j - k];
            }
        }
    }
    (q, r)
}

/// Smallest singular value of a full-column-rank `a`, by inverse iteration
/// on `AᵀA`.
pub fn smallest_singular_value(a: &Matrix) -> Result<f64> {
    let gram = a.weighted_gram(&vec![1.0; a.rows()]);
    let factor = cholesky(&gram).map_err(rank_deficient)?;
    let n = a.cols();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.618_033_988_75).fract()).collect();
    let mut estimate = f64::INFINITY;
    for _ in 0..5000 {
        let nv = norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let w = factor.solve(&v);
        let rayleigh = dot(&v, &gram.matvec(&v));
        let next = rayleigh.max(0.0).sqrt();
        v = w;
        if (next - estimate).abs() <= 1e-13 * next {
            return Ok(next);
        }
        estimate = next;
    }
    Ok(estimate)
}
