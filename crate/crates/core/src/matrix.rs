//! Dense linear-algebra substrate.
//!
//! Everything here works on [`Mat`], a plain `nalgebra` dynamic matrix of
//! `f64`. The two Sylvester solvers are interchangeable: the real-Schur
//! route is the production path, the Kronecker route solves the full
//! `nm x nm` vectorised system and is kept as a cross-check.

use nalgebra::{DMatrix, DVector, Schur, SVD};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff used by [`pseudo_inverse`].
pub const PINV_RCOND: f64 = 1e-12;

/// Condition-estimate ceiling above which a Sylvester system is rejected.
pub const SYLVESTER_MAX_CONDITION: f64 = 1e12;

/// Builds a matrix from row-major data, rejecting empty shapes and
/// non-finite entries.
pub fn mat_from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Mat> {
    if rows == 0 || cols == 0 {
        return Err(Error::BadShape(format!("{rows}x{cols} matrix is empty")));
    }
    if data.len() != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "{} values supplied for a {rows}x{cols} matrix",
            data.len()
        )));
    }
    let m = Mat::from_row_slice(rows, cols, data);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn ensure_finite(m: &Mat) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

pub fn frobenius(m: &Mat) -> f64 {
    m.norm()
}

pub fn frobenius_sq(m: &Mat) -> f64 {
    m.norm_squared()
}

/// Moore-Penrose pseudo-inverse via SVD; singular values below
/// `1e-12 * sigma_max` are treated as zero.
pub fn pseudo_inverse(m: &Mat) -> Mat {
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = PINV_RCOND * sigma_max;

    let mut out = Mat::zeros(m.ncols(), m.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // out += v_i u_i^T / s
            let vi = v_t.row(i).transpose();
            let ui = u.column(i);
            out.ger(1.0 / s, &vi, &ui, 1.0);
        }
    }
    out
}

/// Numerical rank with a relative singular-value threshold.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Standard Kronecker product.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Mat::zeros(ra * rb, ca * cb);
    for j in 0..ca {
        for i in 0..ra {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            out.view_mut((i * rb, j * cb), (rb, cb)).copy_from(&(b * s));
        }
    }
    out
}

/// Column-stacking `vec` operator.
pub fn vec(m: &Mat) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`] for a target shape.
pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v.as_slice())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SylvesterMethod {
    /// Real Schur reduction of `B` followed by block back-substitution.
    #[default]
    Schur,
    /// Least-squares solve of `(I_m (x) A + B^T (x) I_n) vec(X) = vec(C)`.
    Kron,
}

/// Solves `A X + X B = C` for `X` (`A` is `n x n`, `B` is `m x m`).
pub fn solve_sylvester(a: &Mat, b: &Mat, c: &Mat, method: SylvesterMethod) -> Result<Mat> {
    let n = a.nrows();
    let m = b.nrows();
    if !a.is_square() || !b.is_square() || c.shape() != (n, m) {
        return Err(Error::ShapeMismatch(format!(
            "sylvester: A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    ensure_finite(a)?;
    ensure_finite(b)?;
    ensure_finite(c)?;
    match method {
        SylvesterMethod::Schur => sylvester_schur(a, b, c),
        SylvesterMethod::Kron => sylvester_kron(a, b, c),
    }
}

/// Spectral condition estimate `(||A|| + ||B||) / min |a_i + b_j|`.
fn spectral_condition(a: &Mat, b_eigs: &[(f64, f64)]) -> Result<f64> {
    let a_eigs = real_schur(a)?.complex_eigenvalues();
    let mut sep = f64::INFINITY;
    for ea in a_eigs.iter() {
        for &(br, bi) in b_eigs {
            let d = ((ea.re + br).powi(2) + (ea.im + bi).powi(2)).sqrt();
            sep = sep.min(d);
        }
    }
    let b_scale = b_eigs
        .iter()
        .map(|&(r, i)| (r * r + i * i).sqrt())
        .fold(0.0, f64::max);
    let scale = a.norm().max(b_scale).max(f64::MIN_POSITIVE);
    Ok(if sep == 0.0 {
        f64::INFINITY
    } else {
        scale / sep
    })
}

/// Cap on QR sweeps per Schur reduction.
const SCHUR_MAX_SWEEPS: usize = 10_000;

fn real_schur(m: &Mat) -> Result<Schur<f64, nalgebra::Dyn>> {
    Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_SWEEPS).ok_or(Error::SolverDidNotConverge {
        iterations: SCHUR_MAX_SWEEPS,
        residual: f64::NAN,
        gap: f64::NAN,
    })
}

fn sylvester_schur(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let m = b.nrows();
    // B = Q T Q^T with T upper quasi-triangular.
    let (q, t) = real_schur(b)?.unpack();

    let b_eigs = quasi_triangular_eigenvalues(&t);
    let condition = spectral_condition(a, &b_eigs)?;
    if !(condition <= SYLVESTER_MAX_CONDITION) {
        return Err(Error::NearSingularSylvester { condition });
    }

    // A Z + Z T = C Q, then X = Z Q^T.
    let f = c * &q;
    let mut z = Mat::zeros(n, m);
    let eye = Mat::identity(n, n);
    let mut j = 0;
    while j < m {
        let two_by_two = j + 1 < m && t[(j + 1, j)] != 0.0;
        if !two_by_two {
            let mut rhs = f.column(j).into_owned();
            for i in 0..j {
                let tij = t[(i, j)];
                if tij != 0.0 {
                    rhs.axpy(-tij, &z.column(i), 1.0);
                }
            }
            let lhs = a + &eye * t[(j, j)];
            let col = lhs
                .lu()
                .solve(&rhs)
                .ok_or(Error::NearSingularSylvester { condition })?;
            z.set_column(j, &col);
            j += 1;
        } else {
            let mut r1 = f.column(j).into_owned();
            let mut r2 = f.column(j + 1).into_owned();
            for i in 0..j {
                let (t1, t2) = (t[(i, j)], t[(i, j + 1)]);
                r1.axpy(-t1, &z.column(i), 1.0);
                r2.axpy(-t2, &z.column(i), 1.0);
            }
            let (t11, t12, t21, t22) = (t[(j, j)], t[(j, j + 1)], t[(j + 1, j)], t[(j + 1, j + 1)]);
            let mut lhs = Mat::zeros(2 * n, 2 * n);
            lhs.view_mut((0, 0), (n, n)).copy_from(&(a + &eye * t11));
            lhs.view_mut((0, n), (n, n)).copy_from(&(&eye * t21));
            lhs.view_mut((n, 0), (n, n)).copy_from(&(&eye * t12));
            lhs.view_mut((n, n), (n, n)).copy_from(&(a + &eye * t22));
            let mut rhs = Vector::zeros(2 * n);
            rhs.rows_mut(0, n).copy_from(&r1);
            rhs.rows_mut(n, n).copy_from(&r2);
            let sol = lhs
                .lu()
                .solve(&rhs)
                .ok_or(Error::NearSingularSylvester { condition })?;
            z.set_column(j, &sol.rows(0, n));
            z.set_column(j + 1, &sol.rows(n, n));
            j += 2;
        }
    }
    let x = z * q.transpose();
    ensure_finite(&x).map_err(|_| Error::NearSingularSylvester { condition })?;
    Ok(x)
}

fn quasi_triangular_eigenvalues(t: &Mat) -> Vec<(f64, f64)> {
    let m = t.nrows();
    let mut out = Vec::with_capacity(m);
    let mut j = 0;
    while j < m {
        if j + 1 < m && t[(j + 1, j)] != 0.0 {
            let (a, b, c, d) = (t[(j, j)], t[(j, j + 1)], t[(j + 1, j)], t[(j + 1, j + 1)]);
            let tr = 0.5 * (a + d);
            let disc = 0.25 * (a - d).powi(2) + b * c;
            if disc >= 0.0 {
                out.push((tr + disc.sqrt(), 0.0));
                out.push((tr - disc.sqrt(), 0.0));
            } else {
                out.push((tr, (-disc).sqrt()));
                out.push((tr, -(-disc).sqrt()));
            }
            j += 2;
        } else {
            out.push((t[(j, j)], 0.0));
            j += 1;
        }
    }
    out
}

fn sylvester_kron(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let m = b.nrows();
    let op = kron(&Mat::identity(m, m), a) + kron(&b.transpose(), &Mat::identity(n, n));
    let sv = op.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition <= SYLVESTER_MAX_CONDITION) {
        return Err(Error::NearSingularSylvester { condition });
    }
    let sol = op
        .full_piv_lu()
        .solve(&vec(c))
        .ok_or(Error::NearSingularSylvester { condition })?;
    Ok(unvec(&sol, n, m))
}

/// `||A X + X B - C||_F`.
pub fn sylvester_residual(a: &Mat, b: &Mat, c: &Mat, x: &Mat) -> f64 {
    (a * x + x * b - c).norm()
}

/// Solves `A X G + X M = C` for symmetric `A`, symmetric positive
/// semidefinite `G` and symmetric positive-definite `M`.
///
/// With `M = L L^T`, `A = U diag(a) U^T` and `L^{-1} G L^{-T} = V diag(g) V^T`
/// the system decouples entrywise into `(a_i g_j + 1) W_ij = R_ij` where
/// `X = U W V^T L^{-1}` and `R = U^T C L^{-T} V`. `G = I` gives the ordinary
/// Sylvester equation `A X + X M = C`.
pub fn solve_sylvester_symmetric(a: &Mat, g: &Mat, m: &Mat, c: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let k = m.nrows();
    if !a.is_square() || !g.is_square() || !m.is_square() || g.nrows() != k || c.shape() != (n, k) {
        return Err(Error::ShapeMismatch(format!(
            "A {:?}, G {:?}, M {:?}, C {:?}",
            a.shape(),
            g.shape(),
            m.shape(),
            c.shape()
        )));
    }
    for mat in [a, g, m, c] {
        ensure_finite(mat)?;
    }
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or(Error::RankDeficient { ratio: 0.0 })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .solve_lower_triangular(&Mat::identity(k, k))
        .ok_or(Error::RankDeficient { ratio: 0.0 })?;
    let reduced = &l_inv * g * l_inv.transpose();
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let ge = nalgebra::SymmetricEigen::new(reduced);
    let ae = nalgebra::SymmetricEigen::new((a + a.transpose()) * 0.5);

    let mut smallest = f64::INFINITY;
    let mut largest: f64 = 0.0;
    for &ai in ae.eigenvalues.iter() {
        for &gj in ge.eigenvalues.iter() {
            let d = (ai * gj + 1.0).abs();
            smallest = smallest.min(d);
            largest = largest.max(d);
        }
    }
    let condition = largest / smallest;
    if !(condition <= SYLVESTER_MAX_CONDITION) {
        return Err(Error::NearSingularSylvester { condition });
    }

    let u = &ae.eigenvectors;
    let v = &ge.eigenvectors;
    let mut w = u.transpose() * c * l_inv.transpose() * v;
    for j in 0..k {
        for i in 0..n {
            w[(i, j)] /= ae.eigenvalues[i] * ge.eigenvalues[j] + 1.0;
        }
    }
    let x = u * w * v.transpose() * l_inv;
    ensure_finite(&x).map_err(|_| Error::NearSingularSylvester { condition })?;
    Ok(x)
}

/// Symmetric positive-definite solve `G X = R`, falling back to LU.
pub(crate) fn spd_solve(g: &Mat, rhs: &Mat) -> Option<Mat> {
    if let Some(ch) = g.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    g.clone().lu().solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn rel(a: &Mat, b: &Mat, scale: f64) -> f64 {
        (a - b).norm() / scale.max(1e-300)
    }

    fn assert_moore_penrose(m: &Mat) {
        let p = pseudo_inverse(m);
        let s = m.norm();
        assert!(rel(&(m * &p * m), m, s) < 1e-10);
        assert!(rel(&(&p * m * &p), &p, p.norm()) < 1e-10);
        let mp = m * &p;
        assert!(rel(&mp.transpose(), &mp, mp.norm()) < 1e-10);
        let pm = &p * m;
        assert!(rel(&pm.transpose(), &pm, pm.norm()) < 1e-10);
    }

    #[test]
    fn pinv_identity_and_diagonal() {
        let i3 = Mat::identity(3, 3);
        assert!((pseudo_inverse(&i3) - &i3).norm() < 1e-15);
        let d = Mat::from_diagonal(&Vector::from_vec(vec![2.0, 4.0]));
        let expect = Mat::from_diagonal(&Vector::from_vec(vec![0.5, 0.25]));
        assert!((pseudo_inverse(&d) - expect).norm() < 1e-15);
    }

    #[test]
    fn pinv_moore_penrose_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            assert_moore_penrose(&random(&mut rng, 3, 5));
            assert_moore_penrose(&random(&mut rng, 6, 4));
            // rank 2 product
            let low = random(&mut rng, 5, 2) * random(&mut rng, 2, 4);
            assert_moore_penrose(&low);
            assert_eq!(rank(&low, 1e-10), 2);
        }
    }

    #[test]
    fn kron_small_cases() {
        let i2 = Mat::identity(2, 2);
        assert_eq!(kron(&i2, &i2), Mat::identity(4, 4));
        let a = Mat::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = Mat::from_row_slice(2, 1, &[3.0, 4.0]);
        assert_eq!(
            kron(&a, &b),
            Mat::from_row_slice(2, 2, &[3.0, 6.0, 4.0, 8.0])
        );
    }

    #[test]
    fn kron_vec_identity_and_mixed_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random(&mut rng, 2, 2);
            let b = random(&mut rng, 2, 2);
            let x = random(&mut rng, 2, 2);
            let lhs = kron(&a, &b) * vec(&x);
            let rhs = vec(&(&b * &x * a.transpose()));
            assert!((lhs - rhs).norm() < 1e-12);

            let a = random(&mut rng, 2, 3);
            let b = random(&mut rng, 3, 2);
            let c = random(&mut rng, 3, 2);
            let d = random(&mut rng, 2, 3);
            let lhs = kron(&a, &b) * kron(&c, &d);
            let rhs = kron(&(&a * &c), &(&b * &d));
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn sylvester_trivial_and_diagonal() {
        let i2 = Mat::identity(2, 2);
        for method in [SylvesterMethod::Schur, SylvesterMethod::Kron] {
            let x = solve_sylvester(&i2, &i2, &(&i2 * 2.0), method).unwrap();
            assert!((x - &i2).norm() < 1e-14);

            let a = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 2.0]));
            let b = Mat::from_diagonal(&Vector::from_vec(vec![3.0, 4.0]));
            let c = Mat::from_element(2, 2, 1.0);
            let x = solve_sylvester(&a, &b, &c, method).unwrap();
            // x_ij = c_ij / (a_ii + b_jj)
            let expect = Mat::from_fn(2, 2, |i, j| 1.0 / (a[(i, i)] + b[(j, j)]));
            assert!((x - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn sylvester_methods_agree_with_complex_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random(&mut rng, 4, 4) + Mat::identity(4, 4) * 4.0;
            // rotation-like B has complex eigenvalues -> 2x2 Schur blocks
            let b = random(&mut rng, 6, 6) + Mat::identity(6, 6) * 4.0;
            let c = random(&mut rng, 4, 6);
            let xs = solve_sylvester(&a, &b, &c, SylvesterMethod::Schur).unwrap();
            let xk = solve_sylvester(&a, &b, &c, SylvesterMethod::Kron).unwrap();
            assert!((&xs - &xk).norm() < 1e-8);
            assert!(sylvester_residual(&a, &b, &c, &xs) <= 1e-9 * c.norm().max(1.0));
        }
    }

    #[test]
    fn sylvester_rejects_overlapping_spectra() {
        // spectrum of A is {1}, spectrum of -B is {1}
        let a = Mat::identity(2, 2);
        let b = -Mat::identity(2, 2);
        let c = Mat::identity(2, 2);
        for method in [SylvesterMethod::Schur, SylvesterMethod::Kron] {
            assert!(matches!(
                solve_sylvester(&a, &b, &c, method),
                Err(Error::NearSingularSylvester { .. })
            ));
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(mat_from_row_major(1, 2, &[1.0, f64::NAN]).is_err());
        assert!(mat_from_row_major(0, 2, &[]).is_err());
        assert!(mat_from_row_major(1, 2, &[1.0, 2.0]).is_ok());
    }

    #[test]
    fn symmetric_generalized_solve() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut draw =
            |r: usize, c: usize| Mat::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
        let (n, k) = (4, 7);
        let a0 = draw(n, n);
        let a = &a0 * a0.transpose();
        let g0 = draw(k, 3);
        let g = &g0 * g0.transpose();
        let m0 = draw(k, k);
        let m = &m0 * m0.transpose() + Mat::identity(k, k);
        let c = draw(n, k);
        let x = solve_sylvester_symmetric(&a, &g, &m, &c).unwrap();
        assert!((&a * &x * &g + &x * &m - &c).norm() <= 1e-9 * c.norm());

        // G = I is the ordinary equation; compare with both general solvers.
        let eye = Mat::identity(k, k);
        let plain = solve_sylvester_symmetric(&a, &eye, &m, &c).unwrap();
        for method in [SylvesterMethod::Schur, SylvesterMethod::Kron] {
            let other = solve_sylvester(&a, &m, &c, method).unwrap();
            assert!((&plain - other).amax() < 1e-8);
        }
    }
}
