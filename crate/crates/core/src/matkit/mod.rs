//! Dense real-matrix kernel: storage, LU solves, Cholesky positive-definiteness
//! tests, Jacobi symmetric eigendecomposition and the matrix exponential.
//!
//! There is deliberately no general nonsymmetric eigensolver. Stability
//! questions are answered with Lyapunov certificates (see [`crate::riccati`]).

mod decomp;
mod expm;
mod mat;

use thiserror::Error;

pub use decomp::{cholesky_pd, inverse, is_positive_definite, lu_solve, sym_eig, sym_max_eig, SymEig};
pub use expm::expm;
pub use mat::{kron, Mat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is singular to working precision (pivot {pivot:.3e} in column {column})")]
    Singular { pivot: f64, column: usize },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("matrix exponential argument too large (||At||_F = {norm:.3e})")]
    Overflow { norm: f64 },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::settings::NumericSettings;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol() -> NumericSettings {
        NumericSettings::default()
    }

    fn m(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(rows).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        random(rng, n, n).symmetrize()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert_eq!(Mat::from_vec(1, 2, vec![1.0, f64::NAN]), Err(MatError::NonFinite));
        assert!(matches!(Mat::from_vec(2, 2, vec![1.0]), Err(MatError::Shape(_))));
        assert!(matches!(
            Mat::from_rows(&[vec![1.0, 2.0], vec![3.0]]),
            Err(MatError::Shape(_))
        ));
        assert!(serde_json::from_str::<Mat>("[[1, 2], [3]]").is_err());
        let parsed: Mat = serde_json::from_str("[[1, 2], [3, 4]]").unwrap();
        assert_eq!(parsed, m(&[&[1.0, 2.0], &[3.0, 4.0]]));
    }

    #[test]
    fn lu_identity_and_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random(&mut rng, 3, 2);
        assert_eq!(lu_solve(&Mat::identity(3), &b, &tol()).unwrap(), b);

        let a = m(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let x = lu_solve(&a, &m(&[&[2.0], &[8.0]]), &tol()).unwrap();
        assert_eq!(x, m(&[&[1.0], &[2.0]]));
    }

    #[test]
    fn lu_residual_on_random_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = &random(&mut rng, 8, 8) + &Mat::identity(8).scale(3.0);
            let b = random(&mut rng, 8, 3);
            let x = lu_solve(&a, &b, &tol()).unwrap();
            let res = (&(&a * &x) - &b).norm_fro();
            assert!(res <= 1e-10 * (1.0 + a.norm_fro() * x.norm_fro()), "residual {res}");
        }
    }

    #[test]
    fn lu_detects_singular() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(
            lu_solve(&a, &Mat::identity(2), &tol()),
            Err(MatError::Singular { .. })
        ));
        assert!(matches!(
            lu_solve(&Mat::zeros(2, 2), &Mat::identity(2), &tol()),
            Err(MatError::Singular { .. })
        ));
    }

    #[test]
    fn sym_eig_fixtures() {
        let e = sym_eig(&Mat::from_diag(&[3.0, 1.0, 2.0]), &tol()).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);

        let z = sym_eig(&Mat::zeros(4, 4), &tol()).unwrap();
        assert_eq!(z.values, vec![0.0; 4]);
        assert_eq!(z.vectors, Mat::identity(4));

        // Unit 6-cycle Laplacian; closed form 2 - 2 cos(2 pi k / 6).
        let mut l = Mat::identity(6).scale(2.0);
        for i in 0..6 {
            l[(i, (i + 1) % 6)] = -1.0;
            l[((i + 1) % 6, i)] = -1.0;
        }
        let mut expected: Vec<f64> = (0..6)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / 6.0).cos())
            .collect();
        expected.sort_by(f64::total_cmp);
        let e = sym_eig(&l, &tol()).unwrap();
        for (got, want) in e.values.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        for (got, want) in e.values.iter().zip([0.0, 1.0, 1.0, 3.0, 3.0, 4.0]) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn sym_eig_reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 5, 12, 24] {
            let s = random_sym(&mut rng, n);
            let e = sym_eig(&s, &tol()).unwrap();
            let v = &e.vectors;
            let recon = &(v * &Mat::from_diag(&e.values)) * &v.transpose();
            assert!((&recon - &s).norm_fro() <= 1e-9 * s.norm_fro());
            let orth = &(&v.transpose() * v) - &Mat::identity(n);
            assert!(orth.norm_fro() <= 1e-10);
            let av = &(&s * v) - &(v * &Mat::from_diag(&e.values));
            assert!(av.norm_fro() <= 1e-9 * s.norm_fro());
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn cholesky_fixtures() {
        assert_eq!(cholesky_pd(&Mat::identity(3), &tol()).unwrap(), Some(Mat::identity(3)));
        let l = cholesky_pd(&m(&[&[4.0, 2.0], &[2.0, 5.0]]), &tol()).unwrap().unwrap();
        assert!(l.max_abs_diff(&m(&[&[2.0, 0.0], &[1.0, 2.0]])) < 1e-15);
        assert_eq!(cholesky_pd(&m(&[&[1.0, 2.0], &[2.0, 1.0]]), &tol()).unwrap(), None);
        assert_eq!(cholesky_pd(&Mat::zeros(2, 2), &tol()).unwrap(), None);
        assert!(cholesky_pd(&Mat::zeros(2, 3), &tol()).is_err());
    }

    #[test]
    fn cholesky_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random(&mut rng, 6, 6);
        let s = &(&g * &g.transpose()) + &Mat::identity(6).scale(0.1);
        let l = cholesky_pd(&s, &tol()).unwrap().unwrap();
        assert!((&(&l * &l.transpose()) - &s).norm_fro() <= 1e-10 * s.norm_fro());
    }

    #[test]
    fn kron_fixtures() {
        let b = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let k = kron(&Mat::identity(2), &b);
        let mut expected = Mat::zeros(4, 4);
        expected.set_block(0, 0, &b);
        expected.set_block(2, 2, &b);
        assert_eq!(k, expected);
        assert_eq!(kron(&b, &Mat::identity(1)), b);
    }

    #[test]
    fn expm_fixtures() {
        let a = m(&[&[0.3, -1.2], &[0.7, 0.1]]);
        assert_eq!(expm(&a, 0.0, &tol()).unwrap(), Mat::identity(2));
        assert_eq!(expm(&Mat::zeros(3, 3), 2.0, &tol()).unwrap(), Mat::identity(3));

        let d = expm(&Mat::from_diag(&[-1.5, 0.4]), 2.0, &tol()).unwrap();
        assert!((d[(0, 0)] - (-3.0f64).exp()).abs() <= 1e-12 * (-3.0f64).exp());
        assert!((d[(1, 1)] - 0.8f64.exp()).abs() <= 1e-12 * 0.8f64.exp());
        assert_eq!(d[(0, 1)], 0.0);

        let nil = expm(&m(&[&[0.0, 1.0], &[0.0, 0.0]]), 1.0, &tol()).unwrap();
        assert!(nil.max_abs_diff(&m(&[&[1.0, 1.0], &[0.0, 1.0]])) < 1e-14);
    }

    #[test]
    fn expm_large_scalar_and_rotation() {
        // ||At|| = 40 exercises many squarings.
        let e = expm(&Mat::from_diag(&[-40.0]), 1.0, &tol()).unwrap();
        assert!((e[(0, 0)] / (-40.0f64).exp() - 1.0).abs() < 1e-9);
        let e = expm(&Mat::from_diag(&[30.0]), 1.0, &tol()).unwrap();
        assert!((e[(0, 0)] / 30.0f64.exp() - 1.0).abs() < 1e-9);
        // Rotation generator: exp = [[cos, sin], [-sin, cos]].
        let w = 7.3;
        let r = expm(&m(&[&[0.0, w], &[-w, 0.0]]), 1.0, &tol()).unwrap();
        let want = m(&[&[w.cos(), w.sin()], &[-w.sin(), w.cos()]]);
        assert!(r.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn expm_overflow_guard() {
        assert!(matches!(
            expm(&Mat::identity(2), 1e5, &tol()),
            Err(MatError::Overflow { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn expm_semigroup(seed in any::<u64>(), t in -2.0f64..2.0, s in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&mut rng, 4, 4);
            let lhs = &expm(&a, t, &tol()).unwrap() * &expm(&a, s, &tol()).unwrap();
            let rhs = expm(&a, t + s, &tol()).unwrap();
            prop_assert!((&lhs - &rhs).norm_fro() <= 1e-8 * rhs.norm_fro());
        }

        #[test]
        fn kron_mixed_product(seed in any::<u64>(), dims in prop::array::uniform6(1usize..=3)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let [p, q, r, s, t, u] = dims;
            let a = random(&mut rng, p, q);
            let c = random(&mut rng, q, r);
            let b = random(&mut rng, s, t);
            let d = random(&mut rng, t, u);
            let lhs = &kron(&a, &b) * &kron(&c, &d);
            let rhs = kron(&(&a * &c), &(&b * &d));
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12);
        }

        #[test]
        fn lu_residual_bound(seed in any::<u64>(), n in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = &random(&mut rng, n, n) + &Mat::identity(n).scale(2.0);
            let b = random(&mut rng, n, 2);
            if let Ok(x) = lu_solve(&a, &b, &tol()) {
                let res = (&(&a * &x) - &b).norm_fro();
                prop_assert!(res <= 1e-10 * (1.0 + a.norm_fro() * x.norm_fro()));
            }
        }
    }
}
