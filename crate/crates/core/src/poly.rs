//! Univariate polynomials, determinants of small polynomial matrices and
//! nullspace extraction.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Coefficients below this fraction of the largest one are treated as zero
/// when trimming the leading end.
pub const TRIM_RELATIVE: f64 = 1e-14;
/// Roots closer than this (relative to `1 + |r|`) are reported once.
pub const CLUSTER_TOLERANCE: f64 = 1e-8;
/// Eigenvalues with `|im| <= IMAG_TOLERANCE (1 + |z|)` are considered real.
pub const IMAG_TOLERANCE: f64 = 1e-8;

/// Dense polynomial with coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UniPoly {
    coeffs: Vec<f64>,
}

impl UniPoly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    /// `c0 + c1 x`.
    pub fn linear(c0: f64, c1: f64) -> Self {
        Self { coeffs: vec![c0, c1] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, degree: usize) -> f64 {
        self.coeffs.get(degree).copied().unwrap_or(0.0)
    }

    /// Length of the coefficient vector minus one (no trimming).
    pub fn raw_degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Drops leading coefficients below [`TRIM_RELATIVE`] of the largest one.
    pub fn trimmed(&self) -> Self {
        let max = self.max_abs_coeff();
        let mut coeffs = self.coeffs.clone();
        while let Some(&last) = coeffs.last() {
            if last.abs() <= TRIM_RELATIVE * max || last == 0.0 {
                coeffs.pop();
            } else {
                break;
            }
        }
        Self { coeffs }
    }

    /// Keeps only the terms of degree `<= degree`.
    pub fn truncated(&self, degree: usize) -> Self {
        Self {
            coeffs: self.coeffs.iter().take(degree + 1).copied().collect(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Value and first derivative by Horner's scheme.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in self.coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn derivative(&self) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        }
    }
}

impl Add for &UniPoly {
    type Output = UniPoly;
    fn add(self, rhs: &UniPoly) -> UniPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        UniPoly::new((0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl Sub for &UniPoly {
    type Output = UniPoly;
    fn sub(self, rhs: &UniPoly) -> UniPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        UniPoly::new((0..n).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }
}

impl Mul for &UniPoly {
    type Output = UniPoly;
    fn mul(self, rhs: &UniPoly) -> UniPoly {
        if self.coeffs.is_empty() || rhs.coeffs.is_empty() {
            return UniPoly::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        UniPoly::new(out)
    }
}

impl Neg for &UniPoly {
    type Output = UniPoly;
    fn neg(self) -> UniPoly {
        self.scale(-1.0)
    }
}

/// Polishes `x0` towards a root of `p` with damped Newton steps until the
/// accepted step falls below `tol (1 + |x|)` or no step reduces `|p|`.
pub fn newton_polish(p: &UniPoly, dp: &UniPoly, x0: f64, tol: f64) -> f64 {
    let mut x = x0;
    let mut fx = p.eval(x).abs();
    for _ in 0..80 {
        if fx == 0.0 {
            break;
        }
        let d = dp.eval(x);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let step = p.eval(x) / d;
        let mut damping = 1.0;
        let mut improved = false;
        while damping > 1e-4 {
            let cand = x - damping * step;
            let fc = p.eval(cand).abs();
            if fc < fx {
                x = cand;
                fx = fc;
                improved = true;
                break;
            }
            damping *= 0.5;
        }
        if !improved || (damping * step).abs() <= tol * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// All real roots of `p`, ascending.
///
/// Candidates are eigenvalues of the companion matrix; those with a
/// negligible imaginary part are Newton-polished and roots closer than
/// [`CLUSTER_TOLERANCE`] are merged. `tol` is the relative Newton step
/// size at which polishing stops.
pub fn real_roots(p: &UniPoly, tol: f64) -> Result<Vec<f64>> {
    let q = p.trimmed();
    if q.coeffs.is_empty() {
        return Err(Error::DegenerateInput);
    }
    let n = q.raw_degree();
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = q.coeffs[n];
    let mut candidates = Vec::with_capacity(n);
    if n == 1 {
        candidates.push(-q.coeffs[0] / lead);
    } else {
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            companion[(i, n - 1)] = -q.coeffs[i] / lead;
        }
        for z in companion.complex_eigenvalues().iter() {
            if z.im.abs() <= IMAG_TOLERANCE * (1.0 + z.norm()) && z.re.is_finite() {
                candidates.push(z.re);
            }
        }
    }

    let dq = q.derivative();
    let mut roots: Vec<f64> = candidates
        .into_iter()
        .map(|r| newton_polish(&q, &dq, r, tol))
        .collect();
    roots.sort_by(|a, b| a.total_cmp(b));

    let mut out: Vec<f64> = Vec::with_capacity(roots.len());
    for r in roots {
        match out.last() {
            Some(&prev) if (r - prev).abs() <= CLUSTER_TOLERANCE * (1.0 + r.abs()) => {}
            _ => out.push(r),
        }
    }
    Ok(out)
}

/// Matrix whose entries are polynomials in one hidden variable.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<UniPoly>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![UniPoly::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<UniPoly>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidArgument("ragged polynomial matrix".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &UniPoly {
        &self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, p: UniPoly) {
        self.entries[r * self.cols + c] = p;
    }

    /// Scalar matrix obtained by evaluating every entry at `x`.
    pub fn eval(&self, x: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).eval(x))
    }
}

/// Determinant of a square polynomial matrix of size at most 4, by cofactor
/// expansion in exact coefficient arithmetic.
pub fn det_polymatrix(m: &PolyMatrix) -> Result<UniPoly> {
    if m.rows != m.cols {
        return Err(Error::InvalidArgument(format!(
            "determinant of a non-square {}x{} matrix",
            m.rows, m.cols
        )));
    }
    if m.rows > 4 {
        return Err(Error::InvalidArgument(format!(
            "polynomial determinant limited to 4x4, got {}x{}",
            m.rows, m.cols
        )));
    }
    if m.rows == 0 {
        return Ok(UniPoly::constant(1.0));
    }
    let cols: Vec<usize> = (0..m.cols).collect();
    Ok(cofactor(m, 0, &cols))
}

fn cofactor(m: &PolyMatrix, row: usize, cols: &[usize]) -> UniPoly {
    if cols.len() == 1 {
        return m.get(row, cols[0]).clone();
    }
    if cols.len() == 2 {
        let a = m.get(row, cols[0]) * m.get(row + 1, cols[1]);
        let b = m.get(row, cols[1]) * m.get(row + 1, cols[0]);
        return &a - &b;
    }
    let mut acc = UniPoly::zero();
    for (k, &c) in cols.iter().enumerate() {
        let entry = m.get(row, c);
        if entry.coeffs().iter().all(|&v| v == 0.0) {
            continue;
        }
        let rest: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
        let term = entry * &cofactor(m, row + 1, &rest);
        acc = if k % 2 == 0 { &acc + &term } else { &acc - &term };
    }
    acc
}

/// Unit vector minimizing `||A v||` and the corresponding singular value.
///
/// Wide matrices are padded with zero rows so the full right singular basis
/// is available.
pub fn nullspace_min(a: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let n = a.ncols();
    let padded;
    let a = if a.nrows() < n {
        padded = a.clone().resize_vertically(n, 0.0);
        &padded
    } else {
        a
    };
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    let (idx, &sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("matrix has at least one column");
    let v = v_t.row(idx).transpose().normalize();
    (v, sigma)
}
