//! Unknown common focal length and division-model distortion, 2.5 points.
//!
//! Solving works in the ground plane. Writing `k = 1/f` and
//! `omega_i = 1 + lambda rho_i`, the aligned ray of a measured point is
//! `a_i = omega_i c + k g_i` with `c = R^T e3`, `g_i = R^T [x_i, y_i, 0]`.
//! Its ground point is `a_i` dehomogenized by the y component, so with
//! coordinates permuted to `(x, z, y)` the line through two ground points is
//! `a_i x a_j`, which after dividing out `k` is affine in `(k, lambda)`.
//!
//! `H_y` acts on ground points as `Q = (P + [h1, h3]) / h2`, a translation and
//! scaling, so the segment between two points keeps its direction. Requiring
//! segment 1-2 and segment 1-3 to be parallel in both views gives two conics
//! in `(k, lambda)`; their resultant in `lambda` is a quartic in `k`. The
//! length of segment 1-3 is not used and serves as the held-out equation.
//!
//! [`build_frhfr_system`] is the equivalent formulation in the unknowns
//! `t = R2 (c1 - c2)`, `f`, `lambda` after eliminating the `t_2` monomials by
//! Gauss-Jordan. It is used as a degeneracy gate and for verification.

use nalgebra::{Matrix2, SMatrix, Vector2};

use super::{transfer_residual, SolverKind, SolverSolution, MIN_FOCAL};
use crate::error::{Error, Result};
use crate::geometry::{Correspondence, GravityRotation, ImagePoint, Intrinsics, Mat3, MotionHomography, Vec3};
use crate::poly::{real_roots, UniPoly};

/// Relative pivot magnitude below which the elimination is rejected.
pub const PIVOT_TOLERANCE: f64 = 1e-10;
/// Newton step tolerance for the quartic roots.
pub const ROOT_TOLERANCE: f64 = 1e-14;
/// Resultant counts as identically zero below this (conics normalized).
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;

/// Bivariate quadratic, coefficients of `[1, l, k, l^2, l k, k^2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Conic([f64; 6]);

/// Affine form in `[1, l, k]`.
type Affine = [f64; 3];

impl Conic {
    fn product(p: Affine, q: Affine) -> Self {
        Conic([
            p[0] * q[0],
            p[0] * q[1] + p[1] * q[0],
            p[0] * q[2] + p[2] * q[0],
            p[1] * q[1],
            p[1] * q[2] + p[2] * q[1],
            p[2] * q[2],
        ])
    }

    fn sub(self, o: Conic) -> Conic {
        let mut c = self.0;
        for (x, y) in c.iter_mut().zip(o.0) {
            *x -= y;
        }
        Conic(c)
    }

    fn normalized(self) -> Conic {
        let m = self.0.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if m == 0.0 {
            return self;
        }
        Conic(self.0.map(|c| c / m))
    }

    fn eval(&self, k: f64, l: f64) -> f64 {
        let c = &self.0;
        c[0] + c[1] * l + c[2] * k + c[3] * l * l + c[4] * l * k + c[5] * k * k
    }

    /// `(d/dk, d/dl)`.
    fn gradient(&self, k: f64, l: f64) -> (f64, f64) {
        let c = &self.0;
        (
            c[2] + c[4] * l + 2.0 * c[5] * k,
            c[1] + 2.0 * c[3] * l + c[4] * k,
        )
    }

    /// As `A l^2 + B(k) l + C(k)`.
    fn in_lambda(&self) -> (f64, UniPoly, UniPoly) {
        let c = &self.0;
        (
            c[3],
            UniPoly::linear(c[1], c[4]),
            UniPoly::new(vec![c[0], c[2], c[5]]),
        )
    }
}

fn permute(v: Vec3) -> Vec3 {
    Vec3::new(v.x, v.z, v.y)
}

/// Per-view data: `c` and the `g_i`, permuted, plus `rho_i`.
struct View {
    c: Vec3,
    g: [Vec3; 3],
    rho: [f64; 3],
}

impl View {
    fn new(points: [ImagePoint; 3], r: &GravityRotation) -> Self {
        let rt = r.matrix().transpose();
        Self {
            c: permute(rt.column(2).into_owned()),
            g: points.map(|p| permute(rt * Vec3::new(p.x, p.y, 0.0))),
            rho: points.map(|p| p.radius_sq()),
        }
    }

    /// Line through ground points `i` and `j` as three affine forms in
    /// `[1, l, k]`.
    fn line(&self, i: usize, j: usize) -> [Affine; 3] {
        let l0 = self.c.cross(&(self.g[j] - self.g[i]));
        let ll = self.c.cross(&self.g[j]) * self.rho[i] - self.c.cross(&self.g[i]) * self.rho[j];
        let lk = self.g[i].cross(&self.g[j]);
        [0, 1, 2].map(|m| [l0[m], ll[m], lk[m]])
    }
}

/// `l_P x l_Q` third component: zero iff the two lines are parallel.
fn parallel(p: [Affine; 3], q: [Affine; 3]) -> Conic {
    Conic::product(p[0], q[1]).sub(Conic::product(p[1], q[0]))
}

/// Two conics in `(k, lambda)` and their resultant in `lambda`.
struct ConicPair {
    c1: Conic,
    c2: Conic,
}

impl ConicPair {
    fn new(v1: &View, v2: &View) -> Self {
        Self {
            c1: parallel(v1.line(0, 1), v2.line(0, 1)).normalized(),
            c2: parallel(v1.line(0, 2), v2.line(0, 2)).normalized(),
        }
    }

    fn resultant(&self) -> UniPoly {
        let (a1, b1, c1) = self.c1.in_lambda();
        let (a2, b2, c2) = self.c2.in_lambda();
        let cross_bc = &(&b1 * &c2) - &(&b2 * &c1);
        if a1.abs() < DEGENERATE_TOLERANCE && a2.abs() < DEGENERATE_TOLERANCE {
            return cross_bc;
        }
        let ac = &c2.scale(a1) - &c1.scale(a2);
        let ab = &b2.scale(a1) - &b1.scale(a2);
        &(&ac * &ac) - &(&ab * &cross_bc)
    }

    /// Common `lambda` of both conics at a root `k` of the resultant.
    fn lambda_at(&self, k: f64) -> Option<f64> {
        let (a1, b1, c1) = self.c1.in_lambda();
        let (a2, b2, c2) = self.c2.in_lambda();
        let den = a1 * b2.eval(k) - a2 * b1.eval(k);
        let num = a1 * c2.eval(k) - a2 * c1.eval(k);
        let scale = a1.abs() * b2.eval(k).abs() + a2.abs() * b1.eval(k).abs();
        if den.abs() > 1e-10 * scale && scale > 0.0 {
            return Some(-num / den);
        }
        // Fall back to the roots of the first conic.
        let (b, c) = (b1.eval(k), c1.eval(k));
        let candidates: Vec<f64> = if a1.abs() < DEGENERATE_TOLERANCE {
            if b.abs() < DEGENERATE_TOLERANCE {
                return None;
            }
            vec![-c / b]
        } else {
            let disc = b * b - 4.0 * a1 * c;
            if disc < 0.0 {
                return None;
            }
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            let mut v = vec![q / a1];
            if q != 0.0 {
                v.push(c / q);
            }
            v
        };
        candidates
            .into_iter()
            .min_by(|x, y| {
                self.c2
                    .eval(k, *x)
                    .abs()
                    .total_cmp(&self.c2.eval(k, *y).abs())
            })
    }

    fn residual(&self, k: f64, l: f64) -> f64 {
        self.c1.eval(k, l).hypot(self.c2.eval(k, l))
    }

    /// A few Newton steps on the 2x2 system; keeps the start point when they
    /// do not help.
    fn refine(&self, k: f64, l: f64) -> (f64, f64) {
        let mut x = Vector2::new(k, l);
        let mut r = self.residual(k, l);
        for _ in 0..8 {
            let f = Vector2::new(self.c1.eval(x[0], x[1]), self.c2.eval(x[0], x[1]));
            let (g1k, g1l) = self.c1.gradient(x[0], x[1]);
            let (g2k, g2l) = self.c2.gradient(x[0], x[1]);
            let j = Matrix2::new(g1k, g1l, g2k, g2l);
            let Some(step) = j.lu().solve(&f) else { break };
            let next = x - step;
            let rn = self.residual(next[0], next[1]);
            if !(rn < r) {
                break;
            }
            x = next;
            r = rn;
            if step.norm() <= 1e-15 * (1.0 + x.norm()) {
                break;
            }
        }
        (x[0], x[1])
    }
}

/// Ground point `(x, z)` of an aligned ray.
fn ground_point(c: &Correspondence, intr: &Intrinsics, second: bool) -> Option<Vector2<f64>> {
    let (a, b) = c.aligned_rays(intr);
    let v = if second { b } else { a };
    if !(v.y.abs() > 1e-12 * v.norm()) {
        return None;
    }
    Some(Vector2::new(v.x / v.y, v.z / v.y))
}

/// `H_y` from the ground points of correspondences 1 and 2 under `intr`.
fn motion_from_ground(corrs: &[Correspondence; 3], intr: &Intrinsics) -> Option<MotionHomography> {
    let p: Vec<_> = corrs[..2].iter().map(|c| ground_point(c, intr, false)).collect::<Option<_>>()?;
    let q: Vec<_> = corrs[..2].iter().map(|c| ground_point(c, intr, true)).collect::<Option<_>>()?;
    let dp = p[1] - p[0];
    let dq = q[1] - q[0];
    let qq = dq.norm_squared();
    if !(qq > 1e-24) {
        return None;
    }
    let h2 = dp.dot(&dq) / qq;
    let off = ((q[0] * h2 - p[0]) + (q[1] * h2 - p[1])) * 0.5;
    MotionHomography::try_new(off.x, h2, off.y).ok()
}

/// Up to three `(H_y, f, lambda)` hypotheses from three correspondences,
/// sorted by the residual of the held-out part of the third one.
pub fn solve_frhfr(corrs: &[Correspondence; 3]) -> Result<Vec<SolverSolution>> {
    build_frhfr_system(corrs)?;

    let v1 = View::new(corrs.map(|c| c.p1), &corrs[0].r1);
    let v2 = View::new(corrs.map(|c| c.p2), &corrs[0].r2);
    let pair = ConicPair::new(&v1, &v2);
    let res = pair.resultant().trimmed();
    if !(res.max_abs_coeff() > DEGENERATE_TOLERANCE) || res.raw_degree() == 0 {
        return Err(Error::DegenerateConfiguration(
            "parallelism conics share a component".into(),
        ));
    }

    let mut sols: Vec<SolverSolution> = Vec::new();
    for k in real_roots(&res, ROOT_TOLERANCE)? {
        if !(k > 0.0) {
            continue;
        }
        let Some(l) = pair.lambda_at(k) else { continue };
        let (k, lambda) = pair.refine(k, l);
        let f = 1.0 / k;
        if !(f > MIN_FOCAL && f.is_finite() && lambda.is_finite()) {
            continue;
        }
        let intr = Intrinsics { f, lambda };
        let Some(hy) = motion_from_ground(corrs, &intr) else { continue };
        let sol = SolverSolution {
            hy,
            f,
            lambda,
            held_out_residual: Some(transfer_residual(&corrs[2], &hy, &intr)),
            tag: SolverKind::Frhfr,
        };
        if !sols.iter().any(|s| same_solution(s, &sol)) {
            sols.push(sol);
        }
    }
    if sols.is_empty() {
        return Err(Error::NoSolution);
    }
    sols.sort_by(|a, b| {
        a.held_out_residual
            .unwrap_or(f64::INFINITY)
            .total_cmp(&b.held_out_residual.unwrap_or(f64::INFINITY))
    });
    sols.truncate(SolverKind::Frhfr.max_solutions());
    Ok(sols)
}

fn same_solution(a: &SolverSolution, b: &SolverSolution) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs()));
    close(a.f, b.f)
        && close(a.lambda, b.lambda)
        && close(a.hy.h1, b.hy.h1)
        && close(a.hy.h2, b.hy.h2)
        && close(a.hy.h3, b.hy.h3)
}

/// Per-correspondence terms of the first-row equations.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FirstRow {
    x1: f64,
    y1: f64,
    rho1: f64,
    y2: f64,
    rho2: f64,
}

/// The five polynomial equations in `(t1, t3, f, lambda)` left after
/// eliminating `t2 f lambda`, `t2 f` and `t2`.
///
/// Unknowns are `t = R2 (c1 - c2)` (camera-2 frame translation with unit
/// plane distance), `f` and `lambda`. Monomial order of the eliminated
/// quantities is `[t1 f lambda, t1 f, t1, f lambda, f, 1]`; after elimination
/// `t2 f lambda = -g1`, `t2 f = -g2`, `t2 = -g3`.
#[derive(Debug, Clone, PartialEq)]
pub struct EliminatedSystem {
    /// Rows of `g1, g2, g3`.
    pub g: [[f64; 6]; 3],
    /// Relative pivot magnitudes met during elimination.
    pub pivots: [f64; 3],
    r_rel: Mat3,
    normal: Vec3,
    first_rows: [FirstRow; 2],
}

impl EliminatedSystem {
    fn monomials(t1: f64, f: f64, lambda: f64) -> [f64; 6] {
        let fl = f * lambda;
        [t1 * fl, t1 * f, t1, fl, f, 1.0]
    }

    pub fn g_values(&self, t1: f64, f: f64, lambda: f64) -> [f64; 3] {
        let m = Self::monomials(t1, f, lambda);
        self.g.map(|row| row.iter().zip(m).map(|(a, b)| a * b).sum())
    }

    /// `t2` recovered from each of the three eliminated monomials.
    pub fn t2_estimates(&self, t1: f64, f: f64, lambda: f64) -> [f64; 3] {
        let g = self.g_values(t1, f, lambda);
        [-g[0] / (f * lambda), -g[1] / f, -g[2]]
    }

    /// `g1 - lambda g2`, `g2 - f g3`, `g1 - lambda f g3`.
    pub fn constraints(&self, t1: f64, f: f64, lambda: f64) -> [f64; 3] {
        let g = self.g_values(t1, f, lambda);
        [g[0] - lambda * g[1], g[1] - f * g[2], g[0] - lambda * f * g[2]]
    }

    /// First cross-product row of correspondences 1 and 2.
    pub fn first_rows(&self, t1: f64, t3: f64, f: f64, lambda: f64) -> [f64; 2] {
        let g = self.g_values(t1, f, lambda);
        let fl = f * lambda;
        let n = &self.normal;
        self.first_rows.map(|r| {
            let p1 = Vec3::new(r.x1, r.y1, f + fl * r.rho1);
            let rp = self.r_rel * p1;
            let sigma = n.x * r.x1 + n.y * r.y1;
            let s = n.dot(&p1);
            // t2 s with the t2 monomials substituted
            let t2s = -(sigma * g[2] + n.z * g[1] + n.z * r.rho1 * g[0]);
            let q3 = rp.z + t3 * s;
            let q2 = rp.y + t2s;
            r.y2 * q3 - (f + fl * r.rho2) * q2
        })
    }

    /// All five equations: three constraints, two first rows.
    pub fn residuals(&self, t1: f64, t3: f64, f: f64, lambda: f64) -> [f64; 5] {
        let c = self.constraints(t1, f, lambda);
        let r = self.first_rows(t1, t3, f, lambda);
        [c[0], c[1], c[2], r[0], r[1]]
    }
}

/// Builds the radial (third) cross-product rows of all three
/// correspondences in `[t1 f l, t1 f, t1, t2 f l, t2 f, t2, f l, f, 1]` and
/// eliminates the `t2` monomials.
pub fn build_frhfr_system(corrs: &[Correspondence; 3]) -> Result<EliminatedSystem> {
    let r1 = corrs[0].r1.matrix();
    let r2 = corrs[0].r2.matrix();
    let r_rel = r2 * r1.transpose();
    let n = corrs[0].r1.plane_normal_in_camera();

    // Columns: t2 monomials first so they become the pivots.
    let mut m = SMatrix::<f64, 3, 9>::zeros();
    for (i, c) in corrs.iter().enumerate() {
        let (x1, y1, rho1) = (c.p1.x, c.p1.y, c.p1.radius_sq());
        let (x2, y2) = (c.p2.x, c.p2.y);
        let sigma = n.x * x1 + n.y * y1;
        let s = [n.z * rho1, n.z, sigma];
        let u = r_rel.row(1) * x2 - r_rel.row(0) * y2;
        for j in 0..3 {
            m[(i, j)] = x2 * s[j];
            m[(i, 3 + j)] = -y2 * s[j];
        }
        m[(i, 6)] = u[2] * rho1;
        m[(i, 7)] = u[2];
        m[(i, 8)] = u[0] * x1 + u[1] * y1;
    }

    let mut pivots = [0.0; 3];
    for col in 0..3 {
        let rel = |m: &SMatrix<f64, 3, 9>, r: usize| {
            let norm = m.row(r).norm();
            if norm == 0.0 {
                0.0
            } else {
                m[(r, col)].abs() / norm
            }
        };
        let best = (col..3)
            .max_by(|&a, &b| rel(&m, a).total_cmp(&rel(&m, b)))
            .expect("non-empty range");
        let p = rel(&m, best);
        if !(p >= PIVOT_TOLERANCE) {
            return Err(Error::EliminationFailure { pivot: p });
        }
        pivots[col] = p;
        m.swap_rows(col, best);
        let pivot_row = m.row(col) / m[(col, col)];
        m.set_row(col, &pivot_row);
        for r in 0..3 {
            if r != col {
                let factor = m[(r, col)];
                let updated = m.row(r) - pivot_row * factor;
                m.set_row(r, &updated);
            }
        }
    }

    let mut g = [[0.0; 6]; 3];
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, 3 + j)];
        }
    }
    let first_rows = [0, 1].map(|i| {
        let c = &corrs[i];
        FirstRow {
            x1: c.p1.x,
            y1: c.p1.y,
            rho1: c.p1.radius_sq(),
            y2: c.p2.y,
            rho2: c.p2.radius_sq(),
        }
    });
    Ok(EliminatedSystem {
        g,
        pivots,
        r_rel,
        normal: n,
        first_rows,
    })
}
