//! Sparse coding engines.
//!
//! * [`omp`]: greedy orthogonal matching pursuit with a sparsity budget.
//! * [`bpdn`]: `min ||w||_1  s.t. ||b - A w||_2 <= eps` by ADMM with an
//!   l2-ball projection, followed by a support-restricted polish that
//!   recovers the exact vertex and checks the KKT conditions.
//! * [`basis_pursuit`]: the `eps = 0` case of the same solver.
//! * [`bp_bruteforce_oracle`]: exact LP optimum by vertex enumeration; an
//!   independent check for small problems.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::frames::Dictionary;
use crate::matrix::{ensure_finite, Mat, Vector};

/// Magnitude at or below which a coefficient counts as zero.
pub const ZERO_THRESHOLD: f64 = 1e-6;

/// Largest atom count accepted by the brute-force oracle.
pub const ORACLE_MAX_ATOMS: usize = 12;

/// Coefficient vector with a thresholded support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    values: Vector,
}

impl SparseVec {
    pub fn new(values: Vector) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(Vector::zeros(len))
    }

    pub fn values(&self) -> &Vector {
        &self.values
    }

    pub fn into_values(self) -> Vector {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices with `|value| > ZERO_THRESHOLD`.
    pub fn support(&self) -> Vec<usize> {
        support_of(&self.values)
    }

    pub fn l0(&self) -> usize {
        self.support().len()
    }

    pub fn l1(&self) -> f64 {
        self.values.lp_norm(1)
    }
}

pub fn support_of(v: &Vector) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| x.abs() > ZERO_THRESHOLD)
        .map(|(i, _)| i)
        .collect()
}

// ---------------------------------------------------------------------------
// Orthogonal matching pursuit
// ---------------------------------------------------------------------------

/// Orthogonal matching pursuit: selects at most `k` atoms, stopping early
/// once `||y - psi u|| <= residual_tol`.
pub fn omp(psi: &Dictionary, y: &Vector, k: usize, residual_tol: f64) -> Result<SparseVec> {
    if y.len() != psi.n() {
        return Err(Error::ShapeMismatch(format!(
            "signal length {} vs dictionary rows {}",
            y.len(),
            psi.n()
        )));
    }
    let gram = psi.mat().transpose() * psi.mat();
    Ok(SparseVec::new(omp_gram(
        psi.mat(),
        &gram,
        y,
        k,
        residual_tol,
    )))
}

/// OMP of every column of `y`; returns the `m x N` code matrix.
pub fn omp_batch(psi: &Mat, y: &Mat, k: usize, residual_tol: f64) -> Mat {
    use rayon::prelude::*;
    let gram = psi.transpose() * psi;
    let cols: Vec<Vector> = (0..y.ncols())
        .into_par_iter()
        .map(|i| omp_gram(psi, &gram, &y.column(i).into_owned(), k, residual_tol))
        .collect();
    let mut x = Mat::zeros(psi.ncols(), y.ncols());
    for (i, c) in cols.iter().enumerate() {
        x.set_column(i, c);
    }
    x
}

/// Cholesky-updated OMP on a precomputed Gram matrix.
pub(crate) fn omp_gram(psi: &Mat, gram: &Mat, y: &Vector, k: usize, residual_tol: f64) -> Vector {
    let m = psi.ncols();
    let n = psi.nrows();
    let k = k.min(n).min(m);
    let mut out = Vector::zeros(m);
    let alpha = psi.transpose() * y;
    let atom_norms: Vec<f64> = (0..m).map(|j| gram[(j, j)].max(0.0).sqrt()).collect();

    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut chol = Mat::zeros(k.max(1), k.max(1));
    let mut coef: Vec<f64> = Vec::new();
    let mut residual_norm = y.norm();
    let mut corr = alpha.clone();

    while support.len() < k && residual_norm > residual_tol {
        let mut best = None;
        let mut best_val = 0.0;
        for j in 0..m {
            if atom_norms[j] == 0.0 || support.contains(&j) {
                continue;
            }
            let v = corr[j].abs() / atom_norms[j];
            if v > best_val {
                best_val = v;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        if best_val <= 1e-14 * y.norm().max(f64::MIN_POSITIVE) {
            break;
        }

        // Extend L with the new atom: L w = G[S, j], d = sqrt(G_jj - w^T w).
        let s = support.len();
        let mut w = vec![0.0; s];
        for r in 0..s {
            let mut acc = gram[(support[r], j)];
            for c in 0..r {
                acc -= chol[(r, c)] * w[c];
            }
            w[r] = acc / chol[(r, r)];
        }
        let d2 = gram[(j, j)] - w.iter().map(|v| v * v).sum::<f64>();
        if d2 <= 1e-12 * gram[(j, j)] {
            break;
        }
        for (c, wc) in w.iter().enumerate() {
            chol[(s, c)] = *wc;
        }
        chol[(s, s)] = d2.sqrt();
        support.push(j);

        // Solve L L^T x = alpha_S.
        let s = support.len();
        let mut tmp = vec![0.0; s];
        for r in 0..s {
            let mut acc = alpha[support[r]];
            for c in 0..r {
                acc -= chol[(r, c)] * tmp[c];
            }
            tmp[r] = acc / chol[(r, r)];
        }
        coef = vec![0.0; s];
        for r in (0..s).rev() {
            let mut acc = tmp[r];
            for c in r + 1..s {
                acc -= chol[(c, r)] * coef[c];
            }
            coef[r] = acc / chol[(r, r)];
        }

        let mut residual = y.clone();
        for (idx, &a) in support.iter().enumerate() {
            residual.axpy(-coef[idx], &psi.column(a), 1.0);
        }
        residual_norm = residual.norm();
        corr = psi.transpose() * residual;
    }

    for (idx, &a) in support.iter().enumerate() {
        out[a] = coef[idx];
    }
    out
}

// ---------------------------------------------------------------------------
// Basis pursuit (denoising)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpdnOptions {
    /// Primal/dual residual tolerance of the ADMM loop (on the scale-free
    /// problem with `||b|| = 1`).
    pub tol: f64,
    pub max_iters: usize,
    /// Iterations between polishing attempts.
    pub polish_every: usize,
}

impl Default for BpdnOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 2000,
            polish_every: 20,
        }
    }
}

/// Outcome of a BPDN solve.
#[derive(Debug, Clone)]
pub struct BpdnSolution {
    pub w: Vector,
    pub iterations: usize,
    /// `||b - A w||_2`.
    pub residual: f64,
    /// True when the KKT conditions were verified for the returned point.
    pub certified: bool,
}

/// `min ||w||_1  s.t. ||b - A w||_2 <= eps`.
pub fn bpdn(a: &Mat, b: &Vector, eps: f64, tol: f64) -> Result<SparseVec> {
    let opts = BpdnOptions {
        tol,
        ..BpdnOptions::default()
    };
    bpdn_with(a, b, eps, &opts).map(|s| SparseVec::new(s.w))
}

/// `min ||u||_1  s.t. psi u = x`, accepted when
/// `||psi u - x|| <= tol * max(1, ||x||)`.
pub fn basis_pursuit(psi: &Dictionary, x: &Vector, tol: f64) -> Result<SparseVec> {
    let opts = BpdnOptions {
        tol,
        ..BpdnOptions::default()
    };
    bpdn_with(psi.mat(), x, 0.0, &opts).map(|s| SparseVec::new(s.w))
}

pub fn bpdn_with(a: &Mat, b: &Vector, eps: f64, opts: &BpdnOptions) -> Result<BpdnSolution> {
    BpdnOperator::new(a.clone())?.solve(b, eps, opts)
}

/// An operator prepared for repeated BPDN solves with different data.
#[derive(Debug, Clone)]
pub struct BpdnOperator {
    a: Mat,
    at: Mat,
    /// `(I + A^T A)^{-1}`, formed through the Woodbury identity.
    step: Mat,
    /// Largest singular value of `A`.
    norm: f64,
}

impl BpdnOperator {
    pub fn new(a: Mat) -> Result<Self> {
        ensure_finite(&a)?;
        let (p, m) = a.shape();
        let at = a.transpose();
        let inner =
            Cholesky::new(Mat::identity(p, p) + &a * &at).ok_or(Error::SolverDidNotConverge {
                iterations: 0,
                residual: f64::NAN,
                gap: f64::NAN,
            })?;
        let step = Mat::identity(m, m) - &at * inner.solve(&a);
        let norm = a.singular_values().max();
        Ok(Self { a, at, step, norm })
    }

    pub fn matrix(&self) -> &Mat {
        &self.a
    }

    pub fn solve(&self, b: &Vector, eps: f64, opts: &BpdnOptions) -> Result<BpdnSolution> {
        let a = &self.a;
        let at = &self.at;
        let (p, m) = a.shape();
        if b.len() != p {
            return Err(Error::ShapeMismatch(format!(
                "rhs length {} vs operator rows {p}",
                b.len()
            )));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "eps must be >= 0, got {eps}"
            )));
        }
        let bnorm = b.norm();
        if bnorm <= eps || bnorm == 0.0 {
            return Ok(BpdnSolution {
                w: Vector::zeros(m),
                iterations: 0,
                residual: bnorm,
                certified: true,
            });
        }

        // The problem is positively homogeneous: solve with ||b|| = 1.
        let bs = b / bnorm;
        let es = eps / bnorm;
        let equality = eps == 0.0;

        let relax = 1.6;
        let mut rho = 1.0;
        let mut z = Vector::zeros(m);
        let mut v = Vector::zeros(p);
        let mut u = Vector::zeros(m);
        let mut s = Vector::zeros(p);
        let mut best_polish: Option<(Vector, bool)> = None;
        let mut iterations = 0;
        let mut converged = false;
        let mut prim = f64::INFINITY;
        let mut last_eps_pri = 0.0;

        for it in 1..=opts.max_iters {
            iterations = it;
            // w = (I + A^T A)^{-1} q via the Woodbury identity.
            let q = &z - &u + at * (&v + &bs - &s);
            let w = &self.step * &q;

            let aw = a * &w;
            let x1 = &w * relax + &z * (1.0 - relax);
            let x2 = (&aw - &bs) * relax + &v * (1.0 - relax);

            let z_old = z.clone();
            let v_old = v.clone();
            z = soft_threshold(&(&x1 + &u), 1.0 / rho);
            v = if equality {
                Vector::zeros(p)
            } else {
                project_ball(&(&x2 + &s), es)
            };
            u += &x1 - &z;
            s += &x2 - &v;

            let r1 = &w - &z;
            let r2 = &aw - &bs - &v;
            prim = (r1.norm_squared() + r2.norm_squared()).sqrt();
            let dual = rho * (&z - &z_old + at * (&v - &v_old)).norm();
            let eps_pri = opts.tol * ((m + p) as f64).sqrt()
                + opts.tol * w.norm().max(aw.norm()).max(z.norm()).max((&v + &bs).norm());
            last_eps_pri = eps_pri;
            let eps_dual = opts.tol * (m as f64).sqrt() + opts.tol * rho * (&u + at * &s).norm();

            if it % opts.polish_every == 0 {
                let y = -&s * rho;
                if let Some((cand, certified)) = polish(a, &bs, es, &z, &y) {
                    if certified {
                        return Ok(finish(a, b, cand * bnorm, it, true));
                    }
                    best_polish = Some((cand, false));
                }
            }

            if prim <= eps_pri && dual <= eps_dual {
                converged = true;
                break;
            }

            if it % 10 == 0 {
                if prim > 10.0 * dual {
                    rho *= 2.0;
                    u /= 2.0;
                    s /= 2.0;
                } else if dual > 10.0 * prim {
                    rho /= 2.0;
                    u *= 2.0;
                    s *= 2.0;
                }
            }
        }

        let y = -&s * rho;
        if let Some((cand, certified)) = polish(a, &bs, es, &z, &y) {
            if certified || cand.lp_norm(1) <= z.lp_norm(1) * (1.0 + 1e-6) + 1e-12 {
                return Ok(finish(a, b, cand * bnorm, iterations, certified));
            }
        }
        if let Some((cand, _)) = best_polish {
            if cand.lp_norm(1) <= z.lp_norm(1) * (1.0 + 1e-6) + 1e-12 {
                return Ok(finish(a, b, cand * bnorm, iterations, false));
            }
        }

        if let Some(path) = lasso_homotopy(a, at, &bs, es) {
            let supp: Vec<usize> = (0..m).filter(|&i| path[i] != 0.0).collect();
            if let Some((cand, true)) = polish_on(a, &bs, es, &path, &Vector::zeros(p), &supp) {
                return Ok(finish(a, b, cand * bnorm, iterations, true));
            }
            if path_is_optimal(a, at, &bs, es, &path) {
                return Ok(finish(a, b, path * bnorm, iterations, true));
            }
        }

        if let Some(cd) = lasso_bisection(a, &bs, es) {
            let supp: Vec<usize> = (0..m).filter(|&i| cd[i] != 0.0).collect();
            if let Some((cand, true)) = polish_on(a, &bs, es, &cd, &Vector::zeros(p), &supp) {
                return Ok(finish(a, b, cand * bnorm, iterations, true));
            }
            if path_is_optimal(a, at, &bs, es, &cd) {
                return Ok(finish(a, b, cd * bnorm, iterations, true));
            }
        }

        // Fall back to the ADMM iterate when it is feasible enough.
        let zs = z.clone() * bnorm;
        let residual = (b - a * &zs).norm();
        let allowed = if equality {
            opts.tol * bnorm.max(1.0)
        } else {
            eps + bnorm * last_eps_pri * (1.0 + self.norm)
        };
        if converged && residual <= allowed {
            return Ok(finish(a, b, zs, iterations, false));
        }
        Err(Error::SolverDidNotConverge {
            iterations,
            residual: prim,
            gap: (residual - eps).max(0.0),
        })
    }
}

fn finish(a: &Mat, b: &Vector, w: Vector, iterations: usize, certified: bool) -> BpdnSolution {
    let residual = (b - a * &w).norm();
    BpdnSolution {
        w,
        iterations,
        residual,
        certified,
    }
}

/// Follows the lasso path `min 1/2 ||b - A w||^2 + lambda ||w||_1` from
/// `lambda = ||A^T b||_inf` down to the point where `||b - A w|| = eps`.
fn lasso_homotopy(a: &Mat, at: &Mat, b: &Vector, eps: f64) -> Option<Vector> {
    let (p, m) = a.shape();
    let tiny = 1e-14;
    let mut w = Vector::zeros(m);
    let mut r = b.clone();
    let mut c = at * &r;
    let mut lam = c.amax();
    let first = c.iamax();
    let mut active = vec![first];
    let mut signs = vec![c[first].signum()];
    for _ in 0..20 * m.max(p) {
        let a_s = a.select_columns(&active);
        let chol = Cholesky::new(a_s.transpose() * &a_s)?;
        let d = chol.solve(&Vector::from_column_slice(&signs));
        let u = &a_s * &d;
        let v = at * &u;

        let mut gamma = lam;
        let mut event: Option<(bool, usize)> = None;
        for j in 0..m {
            if active.contains(&j) {
                continue;
            }
            for (num, den) in [(lam - c[j], 1.0 - v[j]), (lam + c[j], 1.0 + v[j])] {
                if den > tiny {
                    let g = num / den;
                    if g > tiny && g < gamma {
                        gamma = g;
                        event = Some((true, j));
                    }
                }
            }
        }
        for (k, &i) in active.iter().enumerate() {
            if d[k] != 0.0 {
                let g = -w[i] / d[k];
                if g > tiny && g < gamma {
                    gamma = g;
                    event = Some((false, k));
                }
            }
        }

        let uu = u.norm_squared();
        let ru = r.dot(&u);
        let rr = r.norm_squared();
        let end = rr - 2.0 * gamma * ru + gamma * gamma * uu;
        let exhausted = eps == 0.0 && end <= tiny * rr.max(1.0);
        if end <= eps * eps || exhausted || (event.is_none() && eps == 0.0) {
            let step = if exhausted {
                gamma
            } else {
                let disc = (ru * ru - uu * (rr - eps * eps)).max(0.0);
                (ru - disc.sqrt()) / uu
            };
            for (k, &i) in active.iter().enumerate() {
                w[i] += step * d[k];
            }
            return Some(w);
        }

        for (k, &i) in active.iter().enumerate() {
            w[i] += gamma * d[k];
        }
        lam -= gamma;
        match event {
            Some((true, j)) => {
                if active.len() == p {
                    return None;
                }
                active.push(j);
                signs.push((c[j] - gamma * v[j]).signum());
            }
            Some((false, k)) => {
                w[active[k]] = 0.0;
                active.remove(k);
                signs.remove(k);
                if active.is_empty() {
                    return None;
                }
            }
            None => return None,
        }
        r = b - a * &w;
        c = at * &r;
    }
    None
}

/// Coordinate descent for `min 1/2 ||b - A w||^2 + lambda ||w||_1` from `w`.
fn lasso_cd(a: &Mat, b: &Vector, lambda: f64, w: &mut Vector, sq: &[f64]) {
    let m = a.ncols();
    let mut r = b - a * &*w;
    let scale = b.norm().max(1e-300);
    for _ in 0..20_000 {
        let mut biggest: f64 = 0.0;
        for j in 0..m {
            if sq[j] == 0.0 {
                continue;
            }
            let col = a.column(j);
            let rho = col.dot(&r) + sq[j] * w[j];
            let new = rho.signum() * (rho.abs() - lambda).max(0.0) / sq[j];
            let delta = new - w[j];
            if delta != 0.0 {
                r.axpy(-delta, &col, 1.0);
                w[j] = new;
                biggest = biggest.max(delta.abs() * sq[j].sqrt());
            }
        }
        if biggest <= 1e-15 * scale {
            break;
        }
    }
}

/// Bisects the lasso weight until the residual norm of its solution meets
/// `eps`; robust to the ties that stall the homotopy.
fn lasso_bisection(a: &Mat, b: &Vector, eps: f64) -> Option<Vector> {
    let m = a.ncols();
    let sq: Vec<f64> = a.column_iter().map(|c| c.norm_squared()).collect();
    let hi_start = (a.transpose() * b).amax();
    if !(hi_start > 0.0) {
        return None;
    }
    let (mut lo, mut hi) = (hi_start * 1e-14, hi_start);
    let target = if eps == 0.0 { 1e-11 * b.norm() } else { eps };
    let mut w = Vector::zeros(m);
    let mut best: Option<Vector> = None;
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        lasso_cd(a, b, mid, &mut w, &sq);
        let res = (b - a * &w).norm();
        if res <= target {
            lo = mid;
            best = Some(w.clone());
        } else {
            hi = mid;
        }
        if hi / lo <= 1.0 + 1e-13 {
            break;
        }
    }
    best.map(|mut v| {
        v.iter_mut().for_each(|x| {
            if x.abs() <= 1e-13 * hi_start {
                *x = 0.0
            }
        });
        v
    })
}

/// KKT check for `w` with an active data-fit constraint: the scaled
/// correlation `A^T r / lambda` equals `sign(w)` on the support and stays
/// within the unit box elsewhere.
fn path_is_optimal(a: &Mat, at: &Mat, b: &Vector, eps: f64, w: &Vector) -> bool {
    let r = b - a * w;
    let res = r.norm();
    let feasible = if eps == 0.0 {
        res <= 1e-10 * b.norm().max(1.0)
    } else {
        res <= eps * (1.0 + 1e-9) + 1e-14
    };
    let c = at * &r;
    let lam = c.amax();
    if !feasible || !(lam > 0.0) || w.iter().all(|v| *v == 0.0) {
        return false;
    }
    w.iter().zip(c.iter()).all(|(wi, ci)| {
        let y = ci / lam;
        if *wi == 0.0 {
            y.abs() <= 1.0 + 1e-7
        } else {
            (y - wi.signum()).abs() <= 1e-7
        }
    })
}

fn soft_threshold(x: &Vector, t: f64) -> Vector {
    x.map(|v| v.signum() * (v.abs() - t).max(0.0))
}

fn project_ball(x: &Vector, radius: f64) -> Vector {
    let n = x.norm();
    if n <= radius {
        x.clone()
    } else {
        x * (radius / n)
    }
}

/// Solves the problem restricted to a sign pattern read off `z`.
///
/// On a support `S` with signs `s` and full-column-rank `A_S`, the optimum
/// of `min s^T w_S  s.t. ||A_S w_S - b|| <= eps` is
/// `w_S = w_ls - t G^{-1} s` with `G = A_S^T A_S`, `w_ls = G^{-1} A_S^T b`
/// and `t` chosen so the constraint is active. The multiplier `1/t` gives
/// the dual vector used to certify global optimality. Returns the best
/// sign-consistent candidate and whether it was certified.
fn polish(a: &Mat, b: &Vector, eps: f64, z: &Vector, y_admm: &Vector) -> Option<(Vector, bool)> {
    let (p, m) = a.shape();
    let zmax = z.amax();
    if zmax == 0.0 {
        return None;
    }
    let mut tried: Vec<Vec<usize>> = Vec::new();
    let mut best: Option<(Vector, bool, f64)> = None;
    for exp in 2..=10 {
        let thr = zmax * 10f64.powi(-exp);
        let supp: Vec<usize> = (0..m).filter(|&i| z[i].abs() > thr).collect();
        if supp.is_empty() || supp.len() > p || tried.contains(&supp) {
            continue;
        }
        tried.push(supp.clone());
        let Some((cand, certified)) = polish_on(a, b, eps, z, y_admm, &supp) else {
            continue;
        };
        let l1 = cand.lp_norm(1);
        let better = match &best {
            None => true,
            Some((_, bc, bl)) => (certified && !bc) || (certified == *bc && l1 < *bl),
        };
        if better {
            best = Some((cand, certified, l1));
        }
    }
    best.map(|(w, c, _)| (w, c))
}

fn polish_on(
    a: &Mat,
    b: &Vector,
    eps: f64,
    z: &Vector,
    y_admm: &Vector,
    supp: &[usize],
) -> Option<(Vector, bool)> {
    let m = a.ncols();
    let k = supp.len();
    let a_s = a.select_columns(supp);
    let signs = Vector::from_iterator(k, supp.iter().map(|&i| z[i].signum()));
    let g = a_s.transpose() * &a_s;
    let gdiag = g.diagonal().max();
    let chol = Cholesky::new(g.clone())?;
    // Reject numerically rank-deficient supports.
    let ldiag = chol.l_dirty().diagonal();
    if ldiag.iter().any(|&d| d * d <= 1e-12 * gdiag) {
        return None;
    }
    let w_ls = chol.solve(&(a_s.transpose() * b));
    let r_ls = &a_s * &w_ls - b;
    let r_ls2 = r_ls.norm_squared();

    let (w_s, y) = if eps == 0.0 {
        if r_ls.norm() > 1e-10 * b.norm().max(1.0) {
            return None;
        }
        // Dual certificate: correct the ADMM multiplier so A_S^T y = s.
        let corr = chol.solve(&(&signs - a_s.transpose() * y_admm));
        let y = y_admm + &a_s * corr;
        (w_ls, y)
    } else {
        let slack = eps * eps - r_ls2;
        if slack < 0.0 {
            return None;
        }
        let h = chol.solve(&signs);
        let sh = signs.dot(&h);
        if !(sh > 0.0) {
            return None;
        }
        let t = (slack / sh).sqrt();
        if t == 0.0 {
            return None;
        }
        let w_s = &w_ls - &h * t;
        let y = -(&a_s * &w_s - b) / t;
        (w_s, y)
    };

    if w_s.iter().zip(signs.iter()).any(|(w, s)| w * s <= 0.0) {
        return None;
    }
    let mut w = Vector::zeros(m);
    for (idx, &i) in supp.iter().enumerate() {
        w[i] = w_s[idx];
    }
    let residual = (a * &w - b).norm();
    let feasible = if eps == 0.0 {
        residual <= 1e-10 * b.norm().max(1.0)
    } else {
        residual <= eps * (1.0 + 1e-9) + 1e-14
    };
    if !feasible {
        return None;
    }
    let certified = (a.transpose() * &y).amax() <= 1.0 + 1e-7;
    Some((w, certified))
}

// ---------------------------------------------------------------------------
// Brute-force LP oracle
// ---------------------------------------------------------------------------

/// Exact `min ||u||_1 s.t. psi u = x` by enumerating every basic solution of
/// the split system `[psi | -psi] [u+; u-] = x`, `u+- >= 0`.
pub fn bp_bruteforce_oracle(psi: &Dictionary, x: &Vector) -> Result<SparseVec> {
    let (n, m) = psi.mat().shape();
    if m > ORACLE_MAX_ATOMS {
        return Err(Error::TooLarge(format!(
            "{m} atoms exceeds the oracle limit of {ORACLE_MAX_ATOMS}"
        )));
    }
    if x.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "signal length {} vs {n}",
            x.len()
        )));
    }
    if x.norm() == 0.0 {
        return Ok(SparseVec::zeros(m));
    }
    let split = Mat::from_fn(n, 2 * m, |r, c| {
        if c < m {
            psi.mat()[(r, c)]
        } else {
            -psi.mat()[(r, c - m)]
        }
    });
    let xnorm = x.norm();
    let mut best: Option<(f64, Vector)> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let clash = idx.iter().any(|&i| i < m && idx.contains(&(i + m)));
        if !clash {
            let basis = split.select_columns(&idx);
            if let Some(sol) = basis.clone().lu().solve(x) {
                let ok = sol.iter().all(|v| v.is_finite() && *v >= -1e-10)
                    && (&basis * &sol - x).norm() <= 1e-9 * xnorm.max(1.0);
                if ok {
                    let obj: f64 = sol.iter().map(|v| v.max(0.0)).sum();
                    if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                        let mut u = Vector::zeros(m);
                        for (k, &c) in idx.iter().enumerate() {
                            let v = sol[k].max(0.0);
                            if c < m {
                                u[c] += v;
                            } else {
                                u[c - m] -= v;
                            }
                        }
                        best = Some((obj, u));
                    }
                }
            }
        }
        if !next_combination(&mut idx, 2 * m) {
            break;
        }
    }
    best.map(|(_, u)| SparseVec::new(u))
        .ok_or_else(|| Error::InvalidArgument("no basic feasible solution".into()))
}

/// Advances `idx` to the next k-combination of `0..total` in lexicographic
/// order; returns false after the last one.
pub(crate) fn next_combination(idx: &mut [usize], total: usize) -> bool {
    let k = idx.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < total - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
