use pksvd::applications::{bitplane_bits, random_mask};
use pksvd::frames::{canonical_dual, frame_bounds, random_dual, Dictionary};
use pksvd::imaging::{decode_pgm, encode_pgm, from_blocks, psnr, ssim, to_blocks, GrayImage};
use pksvd::io::{decode_matrix, encode_matrix, DICTIONARY_MAGIC};
use pksvd::matrix::{
    kron, mat_from_row_major, pseudo_inverse, solve_sylvester, sylvester_residual, Mat,
    SylvesterMethod,
};
use pksvd::sparse::{basis_pursuit, omp};
use pksvd::Vector;
use proptest::prelude::*;

fn mat(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |v| mat_from_row_major(rows, cols, &v).unwrap())
}

fn frame(n: usize, m: usize) -> impl Strategy<Value = Dictionary> {
    mat(n, m).prop_filter_map("rank deficient", |m| Dictionary::new(m).ok())
}

fn image(max_side: usize) -> impl Strategy<Value = GrayImage> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(0u8..=255, w * h).prop_map(move |px| {
            GrayImage::new(w, h, px.into_iter().map(f64::from).collect()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pseudo_inverse_meets_penrose_identities(a in (1usize..5, 1usize..5).prop_flat_map(|(r, c)| mat(r, c))) {
        let p = pseudo_inverse(&a);
        let scale = a.norm().max(1.0);
        prop_assert!((&a * &p * &a - &a).norm() <= 1e-10 * scale);
        prop_assert!((&p * &a * &p - &p).norm() <= 1e-10 * p.norm().max(1.0));
        let ap = &a * &p;
        let pa = &p * &a;
        prop_assert!((ap.transpose() - &ap).norm() <= 1e-10 * scale);
        prop_assert!((pa.transpose() - &pa).norm() <= 1e-10 * scale);
    }

    #[test]
    fn kron_mixed_product(a in mat(2, 2), b in mat(3, 3), c in mat(2, 2), d in mat(3, 3)) {
        let lhs = kron(&a, &b) * kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        prop_assert!((lhs - rhs).norm() <= 1e-12);
    }

    #[test]
    fn sylvester_solvers_agree(
        (a, b, c) in (1usize..5, 1usize..7).prop_flat_map(|(n, m)| (mat(n, n), mat(m, m), mat(n, m)))
    ) {
        let (n, m) = (a.nrows(), b.nrows());
        let a = a * 0.3 + Mat::identity(n, n) * 2.0;
        let b = b * 0.3 + Mat::identity(m, m) * 2.0;
        let xs = solve_sylvester(&a, &b, &c, SylvesterMethod::Schur).unwrap();
        let xk = solve_sylvester(&a, &b, &c, SylvesterMethod::Kron).unwrap();
        prop_assert!((&xs - &xk).norm() <= 1e-9);
        prop_assert!(sylvester_residual(&a, &b, &c, &xs) <= 1e-9);
    }

    #[test]
    fn canonical_dual_is_dual_and_projects(psi in frame(3, 6)) {
        let phi = canonical_dual(&psi).unwrap();
        let gap = psi.mat() * phi.mat().transpose() - Mat::identity(3, 3);
        prop_assert!(gap.norm() <= 1e-9);
        let p = phi.mat().transpose() * psi.mat();
        prop_assert!((&p * &p - &p).norm() <= 1e-9);
        prop_assert!((p.transpose() - &p).norm() <= 1e-9);
    }

    #[test]
    fn random_duals_reconstruct(psi in frame(4, 7), seed in any::<u64>(), x in prop::collection::vec(-1.0f64..1.0, 4)) {
        let phi = random_dual(&psi, seed).unwrap();
        let x = Vector::from_vec(x);
        let back = psi.mat() * (phi.mat().transpose() * &x);
        prop_assert!((back - &x).norm() <= 1e-8 * (1.0 + phi.mat().norm()));
    }

    #[test]
    fn frame_bounds_bracket_the_analysis_energy(psi in frame(3, 5), x in prop::collection::vec(-1.0f64..1.0, 3)) {
        let b = frame_bounds(&psi).unwrap();
        prop_assert!(b.lower > 0.0 && b.lower <= b.upper);
        let x = Vector::from_vec(x);
        let e = (psi.mat().transpose() * &x).norm_squared();
        let f = x.norm_squared();
        prop_assert!(e >= b.lower * f - 1e-10);
        prop_assert!(e <= b.upper * f + 1e-10);
    }

    #[test]
    fn omp_residual_shrinks_with_budget(psi in frame(4, 8), y in prop::collection::vec(-1.0f64..1.0, 4)) {
        let y = Vector::from_vec(y);
        let mut last = y.norm();
        for k in 1..=4 {
            let u = omp(&psi, &y, k, 0.0).unwrap();
            prop_assert!(u.l0() <= k);
            let r = (&y - psi.mat() * u.values()).norm();
            prop_assert!(r <= last + 1e-10);
            last = r;
        }
        prop_assert!(last <= 1e-8);
    }

    #[test]
    fn basis_pursuit_beats_least_squares(psi in frame(3, 6), x in prop::collection::vec(-1.0f64..1.0, 3)) {
        let x = Vector::from_vec(x);
        let u = basis_pursuit(&psi, &x, 1e-6).unwrap();
        prop_assert!(u.values().iter().all(|v| v.is_finite()));
        prop_assert!((psi.mat() * u.values() - &x).norm() <= 1e-5);
        let ls = pseudo_inverse(psi.mat()) * &x;
        prop_assert!(u.l1() <= ls.lp_norm(1) + 1e-6);
    }

    #[test]
    fn blocks_round_trip_exactly(b in 1usize..5, bw in 1usize..5, bh in 1usize..5, seed in any::<u64>(), mean in any::<bool>()) {
        let (w, h) = (b * bw, b * bh);
        let px: Vec<f64> = (0..w * h).map(|i| ((i as u64).wrapping_mul(seed | 1) % 256) as f64).collect();
        let img = GrayImage::new(w, h, px).unwrap();
        let blk = to_blocks(&img, b, mean).unwrap();
        prop_assert_eq!(blk.y.ncols(), bw * bh);
        prop_assert_eq!(blk.y.nrows(), b * b);
        prop_assert_eq!(from_blocks(&blk).unwrap(), img);
    }

    #[test]
    fn pgm_round_trips(img in image(9)) {
        prop_assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn matrix_files_round_trip(a in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| mat(r, c))) {
        let bytes = encode_matrix(DICTIONARY_MAGIC, &a);
        prop_assert_eq!(decode_matrix(DICTIONARY_MAGIC, &bytes).unwrap(), a);
    }

    #[test]
    fn quality_metrics_are_symmetric(a in image(12), noise in prop::collection::vec(-20.0f64..20.0, 144)) {
        let px: Vec<f64> = a.pixels().iter().zip(&noise).map(|(p, n)| (p + n).clamp(0.0, 255.0)).collect();
        let b = GrayImage::new(a.width(), a.height(), px).unwrap();
        if a != b {
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        }
        if a.width() >= 8 && a.height() >= 8 {
            prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn bit_count_never_negative(q in prop::collection::vec(-300i64..300, 0..64)) {
        let bits = bitplane_bits(&q);
        prop_assert!(bits >= 0.0 && bits.is_finite());
        prop_assert!(bitplane_bits(&vec![0; q.len()]) == 0.0);
    }

    #[test]
    fn masks_keep_requested_share(fraction in 0.0f64..0.9, seed in any::<u64>()) {
        let mask = random_mask(16, 16, 4, fraction, seed).unwrap();
        let observed = mask.observed_fraction();
        prop_assert!(observed > 0.0 && observed <= 1.0);
        let missing_per_block = (fraction * 16.0).round() / 16.0;
        prop_assert!((observed - (1.0 - missing_per_block)).abs() <= 1e-12);
    }
}
