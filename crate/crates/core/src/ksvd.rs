//! Baseline K-SVD: alternate OMP coding with rank-1 atom refits.

use nalgebra::SymmetricEigen;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frames::{normalize_columns, Dictionary};
use crate::matrix::{ensure_finite, frobenius_sq, Mat};
use crate::sparse::omp_batch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KsvdConfig {
    /// Number of atoms.
    pub atoms: usize,
    /// Nonzeros allowed per code column.
    pub sparsity: usize,
    /// Number of coding/update sweeps.
    pub iters: usize,
    pub seed: u64,
}

impl Default for KsvdConfig {
    fn default() -> Self {
        Self {
            atoms: 256,
            sparsity: 64,
            iters: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KsvdOutput {
    pub dictionary: Dictionary,
    /// `m x N` code matrix.
    pub codes: Mat,
    /// `||Y - psi X||_F^2` after the first coding pass and after every sweep.
    pub objective: Vec<f64>,
}

/// Dictionary of `atoms` distinct, normalized training columns drawn with
/// the given seed.
pub fn init_from_columns(y: &Mat, atoms: usize, seed: u64) -> Result<Dictionary> {
    let (n, count) = y.shape();
    if atoms > count {
        return Err(Error::InvalidArgument(format!(
            "need at least {atoms} training columns, got {count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, count, atoms);
    let mut d = Mat::zeros(n, atoms);
    for (j, i) in picks.iter().enumerate() {
        d.set_column(j, &y.column(i));
    }
    normalize_columns(&mut d);
    Dictionary::new(d)
}

pub fn ksvd_train(y: &Mat, cfg: &KsvdConfig, init: &Dictionary) -> Result<KsvdOutput> {
    ensure_finite(y)?;
    let (n, count) = y.shape();
    if init.n() != n {
        return Err(Error::ShapeMismatch(format!(
            "training data has {n} rows, dictionary {}",
            init.n()
        )));
    }
    if init.m() != cfg.atoms {
        return Err(Error::ShapeMismatch(format!(
            "config asks for {} atoms, dictionary has {}",
            cfg.atoms,
            init.m()
        )));
    }
    if cfg.sparsity == 0 || cfg.sparsity > n {
        return Err(Error::InvalidArgument(format!(
            "sparsity must lie in 1..={n}, got {}",
            cfg.sparsity
        )));
    }

    let mut psi = init.mat().clone();
    normalize_columns(&mut psi);
    let mut x = omp_batch(&psi, y, cfg.sparsity, 0.0);
    let mut residual = y - &psi * &x;
    let mut objective = vec![frobenius_sq(&residual)];
    let scale = frobenius_sq(y).max(f64::MIN_POSITIVE);

    for sweep in 0..cfg.iters {
        if sweep > 0 {
            let fresh = omp_batch(&psi, y, cfg.sparsity, 0.0);
            let fresh_residual = y - &psi * &fresh;
            for i in 0..count {
                if fresh_residual.column(i).norm_squared() < residual.column(i).norm_squared() {
                    x.set_column(i, &fresh.column(i));
                    residual.set_column(i, &fresh_residual.column(i));
                }
            }
        }

        let mut column_err: Vec<f64> = (0..count)
            .map(|i| residual.column(i).norm_squared())
            .collect();
        for j in 0..cfg.atoms {
            let users: Vec<usize> = (0..count).filter(|&i| x[(j, i)] != 0.0).collect();
            if users.is_empty() {
                let (worst, err) = column_err
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, -1.0), |b, (i, e)| if e > b.1 { (i, e) } else { b });
                if err > 1e-20 * scale {
                    let col = y.column(worst);
                    let norm = col.norm();
                    if norm > 0.0 {
                        psi.set_column(j, &(col / norm));
                        column_err[worst] = 0.0;
                    }
                }
                continue;
            }

            let atom = psi.column(j).into_owned();
            let mut e = Mat::zeros(n, users.len());
            for (c, &i) in users.iter().enumerate() {
                let mut col = residual.column(i).into_owned();
                col.axpy(x[(j, i)], &atom, 1.0);
                e.set_column(c, &col);
            }
            let eig = SymmetricEigen::new(&e * e.transpose());
            let top = eig.eigenvalues.imax();
            let u = eig.eigenvectors.column(top).into_owned();
            let coeffs = e.transpose() * &u;
            psi.set_column(j, &u);
            for (c, &i) in users.iter().enumerate() {
                x[(j, i)] = coeffs[c];
                let col = e.column(c) - &u * coeffs[c];
                residual.set_column(i, &col);
            }
        }
        objective.push(frobenius_sq(&residual));
    }

    Ok(KsvdOutput {
        dictionary: Dictionary::new(psi)?,
        codes: x,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::overcomplete_dct;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn perfect_one_sparse_model() {
        let init = overcomplete_dct(4, 9).unwrap();
        let mut y = Mat::zeros(4, 18);
        for i in 0..18 {
            y.set_column(i, &(init.mat().column(i % 9) * (1.0 + i as f64)));
        }
        let cfg = KsvdConfig {
            atoms: 9,
            sparsity: 1,
            iters: 1,
            seed: 0,
        };
        let out = ksvd_train(&y, &cfg, &init).unwrap();
        assert!(*out.objective.last().unwrap() < 1e-18);
        for j in 0..9 {
            let dot = out.dictionary.mat().column(j).dot(&init.mat().column(j));
            assert!((dot.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_budget_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut d = gaussian(&mut rng, 5, 5);
        normalize_columns(&mut d);
        let init = Dictionary::new(d).unwrap();
        let y = Mat::from_fn(5, 1, |_, _| StandardNormal.sample(&mut rng));
        let cfg = KsvdConfig {
            atoms: 5,
            sparsity: 5,
            iters: 3,
            seed: 0,
        };
        let out = ksvd_train(&y, &cfg, &init).unwrap();
        assert!(*out.objective.last().unwrap() <= 1e-18);
    }

    #[test]
    fn monotone_unit_atoms_bounded_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = gaussian(&mut rng, 8, 200);
        let cfg = KsvdConfig {
            atoms: 16,
            sparsity: 3,
            iters: 10,
            seed: 7,
        };
        let init = init_from_columns(&y, 16, cfg.seed).unwrap();
        let out = ksvd_train(&y, &cfg, &init).unwrap();
        for w in out.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-9, "{w:?}");
        }
        assert!(out.objective.last().unwrap() <= &out.objective[0]);
        for j in 0..16 {
            assert!((out.dictionary.mat().column(j).norm() - 1.0).abs() < 1e-12);
        }
        for i in 0..200 {
            let nz = out.codes.column(i).iter().filter(|v| **v != 0.0).count();
            assert!(nz <= 3);
        }
        let recon = y - out.dictionary.mat() * &out.codes;
        assert!((frobenius_sq(&recon) - out.objective.last().unwrap()).abs() < 1e-8);
    }

    #[test]
    fn unused_atom_replaced_by_worst_column() {
        // Atom 2 never wins a correlation contest so OMP leaves it unused.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let init =
            Dictionary::new(Mat::from_row_slice(2, 3, &[1.0, 0.0, -s, 0.0, 1.0, s])).unwrap();
        let y = Mat::from_row_slice(2, 3, &[1.0, 0.0, 3.0, 0.0, 1.0, 4.0]);
        let cfg = KsvdConfig {
            atoms: 3,
            sparsity: 1,
            iters: 1,
            seed: 0,
        };
        let out = ksvd_train(&y, &cfg, &init).unwrap();
        // The worst-represented column (3,4,0) seeds the unused atom.
        let third = out.dictionary.mat().column(2);
        assert!((third[0].abs() - 0.6).abs() < 1e-12 && (third[1].abs() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = gaussian(&mut rng, 4, 40);
        let a = init_from_columns(&y, 8, 1).unwrap();
        let b = init_from_columns(&y, 8, 1).unwrap();
        let c = init_from_columns(&y, 8, 2).unwrap();
        assert_eq!(a.mat(), b.mat());
        assert_ne!(a.mat(), c.mat());
    }
}
