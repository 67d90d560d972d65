use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relaydof::channel::complex_gaussian;
use relaydof::linalg::{self, kron, null_space, rank, solve, vec, CMatrix, Tolerance, C64};

const CASES: u32 = 10_000;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Random `rows × cols` matrix of exact rank `r` (generically).
fn low_rank(rows: usize, cols: usize, r: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    &gaussian(rows, r, rng) * &gaussian(r, cols, rng)
}

fn tol() -> Tolerance {
    Tolerance::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn null_space_columns_annihilate(rows in 1usize..7, extra in 1usize..4, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(rows, rows + extra, &mut rng);
        let basis = null_space(&a, tol()).unwrap();
        prop_assert_eq!(basis.cols(), extra);
        let norm = a.frobenius_norm();
        for j in 0..basis.cols() {
            let v = basis.col_matrix(j);
            prop_assert!((&a * &v).frobenius_norm() / norm <= 1e-9);
            prop_assert!((v.frobenius_norm() - 1.0).abs() < 1e-12);
        }
        let gram = &basis.adjoint() * &basis;
        prop_assert!(gram.distance(&CMatrix::identity(extra)) < 1e-12);
    }

    #[test]
    fn null_space_of_rank_deficient(rows in 2usize..7, cols in 2usize..8, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = 1 + (seed as usize) % rows.min(cols).saturating_sub(1).max(1);
        let a = low_rank(rows, cols, r, &mut rng);
        prop_assert_eq!(rank(&a, tol()), r);
        match null_space(&a, tol()) {
            Ok(basis) => {
                prop_assert_eq!(basis.cols(), cols - r);
                let norm = a.frobenius_norm();
                for j in 0..basis.cols() {
                    prop_assert!((&a * &basis.col_matrix(j)).frobenius_norm() / norm <= 1e-9);
                }
            }
            Err(e) => prop_assert!(cols == r, "unexpected {e}"),
        }
    }

    #[test]
    fn solve_round_trip(n in 1usize..8, k in 1usize..3, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = CMatrix::identity(n).scale_real(2.0 * (n as f64).sqrt());
        let a = &gaussian(n, n, &mut rng) + &shift;
        let x = gaussian(n, k, &mut rng);
        let back = solve(&a, &(&a * &x)).unwrap();
        prop_assert!(back.distance(&x) / x.frobenius_norm() <= 1e-9);
    }

    #[test]
    fn rank_invariant_under_permutation_and_phase(
        rows in 1usize..7,
        cols in 1usize..7,
        seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = 1 + (seed as usize >> 7) % rows.min(cols);
        let a = low_rank(rows, cols, r, &mut rng);
        let base = rank(&a, tol());
        prop_assert_eq!(base, r);
        prop_assert_eq!(rank(&a.adjoint(), tol()), base);

        let row_perm: Vec<usize> = (0..rows).map(|i| (i + seed as usize) % rows).rev().collect();
        let col_perm: Vec<usize> = (0..cols).map(|j| (j * 7 + (seed >> 3) as usize) % cols).collect();
        let mut seen = col_perm.clone();
        seen.sort_unstable();
        seen.dedup();
        let col_perm = if seen.len() == cols { col_perm } else { (0..cols).rev().collect() };
        let permuted = a.select_rows(&row_perm).select_columns(&col_perm);
        prop_assert_eq!(rank(&permuted, tol()), base);

        let phases: Vec<C64> = (0..rows)
            .map(|i| C64::from_polar(1.0, (seed.wrapping_add(i as u64) % 628) as f64 / 100.0))
            .collect();
        let scaled = CMatrix::from_fn(rows, cols, |i, j| a[(i, j)] * phases[i]);
        prop_assert_eq!(rank(&scaled, tol()), base);
    }

    #[test]
    fn kronecker_vec_identity(
        m in 1usize..4,
        n in 1usize..4,
        p in 1usize..4,
        q in 1usize..4,
        seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(m, n, &mut rng);
        let x = gaussian(n, p, &mut rng);
        let b = gaussian(p, q, &mut rng);
        let lhs = vec(&(&(&a * &x) * &b));
        let rhs = &kron(&b.transpose(), &a) * &vec(&x);
        let scale = a.frobenius_norm() * x.frobenius_norm() * b.frobenius_norm();
        prop_assert!(lhs.distance(&rhs) / scale <= 1e-12);
    }

    #[test]
    fn vec_unvec_round_trip(rows in 1usize..6, cols in 1usize..6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(rows, cols, &mut rng);
        prop_assert_eq!(linalg::unvec(&vec(&a), rows, cols).unwrap(), a);
    }
}

#[test]
fn rank_of_generic_wide_matrix_matches_minor() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let a = gaussian(3, 5, &mut rng);
        let minor = a.select_columns(&[0, 2, 4]);
        // a nonzero 3x3 minor certifies full row rank
        let det = linalg::log2_det_hpd(&(&minor * &minor.adjoint())).unwrap();
        assert!(det.is_finite());
        assert_eq!(rank(&a, tol()), 3);
    }
}

#[test]
fn outer_product_has_rank_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let u = gaussian(4, 1, &mut rng);
        let v = gaussian(3, 1, &mut rng);
        assert_eq!(rank(&(&u * &v.adjoint()), tol()), 1);
    }
}

#[test]
fn random_solve_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let a = &gaussian(4, 4, &mut rng) + &CMatrix::identity(4).scale_real(4.0);
        let b = gaussian(4, 1, &mut rng);
        let x = solve(&a, &b).unwrap();
        assert!((&(&a * &x) - &b).frobenius_norm() / b.frobenius_norm() < 1e-10);
    }
}

#[test]
fn random_two_by_three_null_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let a = gaussian(2, 3, &mut rng);
        let n = null_space(&a, tol()).unwrap();
        assert_eq!(n.cols(), 1);
        assert!((&a * &n).frobenius_norm() < 1e-9 * a.frobenius_norm());
        assert!((n.frobenius_norm() - 1.0).abs() < 1e-12);
    }
}
