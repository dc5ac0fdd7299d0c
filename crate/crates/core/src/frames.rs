//! Frame-theoretic operations on dictionaries.
//!
//! A [`Dictionary`] is an `n x m` matrix whose columns (atoms) span `R^n`.
//! The frame operator is `S = psi psi^T`; its extreme eigenvalues are the
//! optimal frame bounds, and any `phi` with `psi phi^T = I` is a dual frame.

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{ensure_finite, spd_solve, Mat};

/// Relative smallest-singular-value floor for a valid dictionary.
pub const DICTIONARY_RANK_RTOL: f64 = 1e-10;

/// Smallest/largest eigenvalue ratio of `psi psi^T` below which the
/// dictionary is not a frame.
pub const FRAME_RTOL: f64 = 1e-12;

/// Full-row-rank `n x m` matrix with `m >= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    mat: Mat,
}

impl Dictionary {
    pub fn new(mat: Mat) -> Result<Self> {
        let (n, m) = mat.shape();
        if n == 0 || m < n {
            return Err(Error::BadShape(format!(
                "dictionary must be n x m with m >= n >= 1, got {n}x{m}"
            )));
        }
        ensure_finite(&mat)?;
        let sv = mat.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if !(smax > 0.0) || smin <= DICTIONARY_RANK_RTOL * smax {
            return Err(Error::RankDeficient {
                ratio: if smax > 0.0 { smin / smax } else { 0.0 },
            });
        }
        Ok(Self { mat })
    }

    /// Signal dimension.
    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    /// Number of atoms.
    pub fn m(&self) -> usize {
        self.mat.ncols()
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn into_mat(self) -> Mat {
        self.mat
    }

    /// Frame operator `psi psi^T`.
    pub fn frame_operator(&self) -> Mat {
        &self.mat * self.mat.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameBounds {
    pub lower: f64,
    pub upper: f64,
}

impl FrameBounds {
    pub fn ratio(&self) -> f64 {
        self.upper / self.lower
    }
}

/// Optimal frame bounds: extreme eigenvalues of `psi psi^T`.
pub fn frame_bounds(psi: &Dictionary) -> Result<FrameBounds> {
    let eig = SymmetricEigen::new(psi.frame_operator()).eigenvalues;
    let upper = eig.max();
    let lower = eig.min();
    if lower <= FRAME_RTOL * upper {
        return Err(Error::RankDeficient {
            ratio: lower / upper,
        });
    }
    Ok(FrameBounds { lower, upper })
}

/// Canonical dual `(psi psi^T)^{-1} psi`.
pub fn canonical_dual(psi: &Dictionary) -> Result<Dictionary> {
    frame_bounds(psi)?;
    let phi =
        spd_solve(&psi.frame_operator(), psi.mat()).ok_or(Error::RankDeficient { ratio: 0.0 })?;
    Dictionary::new(phi)
}

/// A non-canonical dual frame `phi^T = phi_2^T + P`, where the columns of
/// `P` are standard-normal draws projected onto `null(psi)`.
pub fn random_dual(psi: &Dictionary, seed: u64) -> Result<Dictionary> {
    let (n, m) = psi.mat().shape();
    if m == n {
        return Err(Error::UniqueDual);
    }
    let phi2 = canonical_dual(psi)?;
    // Orthogonal projector onto null(psi).
    let null_proj = Mat::identity(m, m) - phi2.mat().transpose() * psi.mat();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Mat::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
    let p = null_proj * g;
    Dictionary::new(phi2.mat() + p.transpose())
}

/// `||psi psi^T - I||_F <= tol`.
pub fn is_parseval(psi: &Dictionary, tol: f64) -> bool {
    let n = psi.n();
    (psi.frame_operator() - Mat::identity(n, n)).norm() <= tol
}

fn integer_sqrt(v: usize) -> Option<usize> {
    let r = (v as f64).sqrt().round() as usize;
    (r * r == v).then_some(r)
}

/// Separable overcomplete DCT dictionary of size `n x m`.
///
/// A 1-D `sqrt(n) x sqrt(m)` cosine grid `D1[i, j] = cos(pi i j / sqrt(m))`
/// has every non-DC column mean-removed and all columns normalised; the
/// result is `D1 (x) D1` with columns normalised again.
pub fn overcomplete_dct(n: usize, m: usize) -> Result<Dictionary> {
    let (p, q) = match (integer_sqrt(n), integer_sqrt(m)) {
        (Some(p), Some(q)) if p > 0 && q >= p => (p, q),
        _ => {
            return Err(Error::BadShape(format!(
                "overcomplete DCT needs square n <= m, got n={n}, m={m}"
            )))
        }
    };
    let mut d1 = Mat::from_fn(p, q, |i, j| {
        (std::f64::consts::PI * (i * j) as f64 / q as f64).cos()
    });
    for j in 0..q {
        let mut col = d1.column_mut(j);
        if j > 0 {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let norm = col.norm();
        col /= norm;
    }
    let mut d = crate::matrix::kron(&d1, &d1);
    normalize_columns(&mut d);
    Dictionary::new(d)
}

pub(crate) fn normalize_columns(d: &mut Mat) {
    for mut col in d.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
}

/// Per-atom distances between two dictionaries and their histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomDistanceHistogram {
    /// `1 - max_j |d_i^T e_j|` for every atom `d_i` of the first dictionary.
    pub distances: Vec<f64>,
    /// Counts over `bins` equal-width bins spanning `[0, 1]`.
    pub counts: Vec<usize>,
}

pub fn atom_distance_histogram(
    d: &Dictionary,
    e: &Dictionary,
    bins: usize,
) -> Result<AtomDistanceHistogram> {
    if d.n() != e.n() {
        return Err(Error::ShapeMismatch(format!(
            "atom dimension {} vs {}",
            d.n(),
            e.n()
        )));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let corr = d.mat().transpose() * e.mat();
    let distances: Vec<f64> = corr
        .row_iter()
        .map(|row| {
            let best = row.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
            (1.0 - best).clamp(0.0, 1.0)
        })
        .collect();
    let mut counts = vec![0; bins];
    for &dist in &distances {
        let idx = ((dist * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(AtomDistanceHistogram { distances, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Vector;

    fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Dictionary {
        Dictionary::new(Mat::from_fn(r, c, |_, _| StandardNormal.sample(rng))).unwrap()
    }

    #[test]
    fn bounds_of_simple_frames() {
        let b = frame_bounds(&Dictionary::new(Mat::identity(4, 4)).unwrap()).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-12 && (b.upper - 1.0).abs() < 1e-12);

        let mut two = Mat::zeros(2, 4);
        two.view_mut((0, 0), (2, 2)).fill_with_identity();
        two.view_mut((0, 2), (2, 2)).fill_with_identity();
        let b = frame_bounds(&Dictionary::new(two).unwrap()).unwrap();
        assert!((b.lower - 2.0).abs() < 1e-12 && (b.upper - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bounds_match_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = gaussian(&mut rng, 4, 8);
        let fb = frame_bounds(&psi).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for _ in 0..10_000 {
            let f: Vector = Vector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
            let f = &f / f.norm();
            let e = (psi.mat().transpose() * f).norm_squared();
            assert!(e >= fb.lower - 1e-9 && e <= fb.upper + 1e-9);
            lo = lo.min(e);
            hi = hi.max(e);
        }
        assert!((lo - fb.lower).abs() / fb.lower < 0.02);
        assert!((hi - fb.upper).abs() / fb.upper < 0.02);
    }

    #[test]
    fn rank_deficient_rejected() {
        let m = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(
            Dictionary::new(m),
            Err(Error::RankDeficient { .. })
        ));
        assert!(Dictionary::new(Mat::zeros(3, 2)).is_err());
    }

    #[test]
    fn canonical_dual_properties() {
        // orthonormal basis is self-dual
        let q = nalgebra::Rotation2::new(0.3).matrix().clone_owned();
        let psi = Dictionary::new(Mat::from_iterator(2, 2, q.iter().cloned())).unwrap();
        assert!((canonical_dual(&psi).unwrap().mat() - psi.mat()).norm() < 1e-12);

        // square invertible -> inverse transpose
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sq = gaussian(&mut rng, 3, 3);
        let inv_t = sq.mat().clone().try_inverse().unwrap().transpose();
        assert!((canonical_dual(&sq).unwrap().mat() - inv_t).norm() < 1e-9);

        // bounds invert, kernel is an orthogonal projection, duality involutive
        let psi = gaussian(&mut rng, 3, 6);
        let phi = canonical_dual(&psi).unwrap();
        let fb = frame_bounds(&psi).unwrap();
        let fd = frame_bounds(&phi).unwrap();
        assert!((fd.lower - 1.0 / fb.upper).abs() < 1e-9);
        assert!((fd.upper - 1.0 / fb.lower).abs() < 1e-9);
        assert!((psi.mat() * phi.mat().transpose() - Mat::identity(3, 3)).norm() < 1e-10);
        let k = phi.mat().transpose() * psi.mat();
        assert!((&k - k.transpose()).norm() < 1e-10);
        assert!((&k * &k - &k).norm() < 1e-10);
        let back = canonical_dual(&phi).unwrap();
        assert!((back.mat() - psi.mat()).norm() < 1e-8);
    }

    #[test]
    fn random_duals() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let psi = gaussian(&mut rng, 3, 6);
        let a = random_dual(&psi, 1).unwrap();
        let b = random_dual(&psi, 2).unwrap();
        let eye = Mat::identity(3, 3);
        assert!((psi.mat() * a.mat().transpose() - &eye).norm() < 1e-10);
        assert!((a.mat() - b.mat()).norm() > 1e-3);
        let mid = (a.mat() + b.mat()) * 0.5;
        assert!((psi.mat() * mid.transpose() - &eye).norm() < 1e-10);
        // kernel is idempotent but not symmetric
        let k = a.mat().transpose() * psi.mat();
        assert!((&k * &k - &k).norm() < 1e-8);
        assert!((&k - k.transpose()).norm() > 1e-3);
        assert!(a != canonical_dual(&psi).unwrap());

        let sq = gaussian(&mut rng, 3, 3);
        assert!(matches!(random_dual(&sq, 1), Err(Error::UniqueDual)));
    }

    #[test]
    fn parseval_checks() {
        assert!(is_parseval(
            &Dictionary::new(Mat::identity(4, 4)).unwrap(),
            1e-12
        ));
        assert!(!is_parseval(
            &Dictionary::new(Mat::identity(4, 4) * 2.0).unwrap(),
            1e-6
        ));
        let dct = overcomplete_dct(64, 256).unwrap();
        let s = dct.frame_operator();
        assert!((s - Mat::identity(64, 64)).norm() > 1.0);
        assert!(!is_parseval(&dct, 1e-6));
        let fb = frame_bounds(&Dictionary::new(Mat::identity(5, 5)).unwrap()).unwrap();
        assert!((fb.ratio() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dct_construction() {
        let d = overcomplete_dct(4, 4).unwrap();
        let g = d.mat().transpose() * d.mat();
        assert!((g - Mat::identity(4, 4)).norm() < 1e-12);

        let d = overcomplete_dct(64, 256).unwrap();
        for col in d.mat().column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }
        for n in [4usize, 16, 64] {
            let d = overcomplete_dct(n, 4 * n).unwrap();
            let expect = 1.0 / (n as f64).sqrt();
            assert!(d.mat().column(0).iter().all(|v| (v - expect).abs() < 1e-12));
        }
        assert!(matches!(overcomplete_dct(5, 16), Err(Error::BadShape(_))));
        assert!(matches!(overcomplete_dct(16, 20), Err(Error::BadShape(_))));
    }

    #[test]
    fn atom_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = gaussian(&mut rng, 3, 5);
        let mut dn = d.mat().clone();
        normalize_columns(&mut dn);
        let dn = Dictionary::new(dn).unwrap();
        let h = atom_distance_histogram(&dn, &dn, 10).unwrap();
        assert!(h.distances.iter().all(|&v| v.abs() < 1e-12));
        assert_eq!(h.counts[0], 5);

        let e = Dictionary::new(Mat::identity(2, 2)).unwrap();
        let swapped = Dictionary::new(Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let h = atom_distance_histogram(&swapped, &e, 4).unwrap();
        assert!(h.distances.iter().all(|&v| v == 0.0));

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let diag = Dictionary::new(Mat::from_row_slice(2, 2, &[s, -s, s, s])).unwrap();
        let h = atom_distance_histogram(&diag, &e, 10).unwrap();
        for v in h.distances {
            assert!((v - (1.0 - s)).abs() < 1e-12);
        }
    }
}
