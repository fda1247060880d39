mod common;

use hyperfact::cli::{parse_matrix, MatrixFile};
use hyperfact::dilate::{self, canonical_pi, norm_gap};
use hyperfact::factors::{self, check_fm, pair_defect, sufficiency_residual, szego_counterexample};
use hyperfact::hyper::{self, classify, q_limit};
use hyperfact::matcore::{
    c, douglas_solve, hermitian_eig, identity, op_norm, psd_check, psd_sqrt, range_basis, unitary_completion, CMatrix,
};
use hyperfact::schur::{canonical_pencils, model_operator, pencil_identities, Pencil};
use hyperfact::weights::WeightTable;
use proptest::prelude::*;

/// `PROPTEST_CASES` overrides the per-block default.
fn config(cases: u32) -> ProptestConfig {
    let cases = std::env::var("PROPTEST_CASES").ok().and_then(|v| v.parse().ok()).unwrap_or(cases);
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn random_contraction(seed: u64, rows: usize, cols: usize) -> CMatrix {
    let g = common::gaussian(&mut common::rng(seed), rows, cols);
    let n = op_norm(&g);
    if n == 0.0 {
        g
    } else {
        g.unscale(n * 1.05)
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn weights_summed_and_monotone(n in 1usize..=8, k in 0usize..=64) {
        let table = WeightTable::new(8, 64).unwrap();
        let sum: u128 = (0..=k).map(|j| table.get(n - 1, j).unwrap()).sum();
        prop_assert_eq!(table.get(n, k).unwrap(), sum);
        if k > 0 {
            prop_assert!(table.get(n, k).unwrap() >= table.get(n, k - 1).unwrap());
        }
        prop_assert!(table.get(n, k).unwrap() >= table.get(n - 1, k).unwrap());
    }

    #[test]
    fn psd_sqrt_squares_back(seed in any::<u64>(), n in 1usize..=20, rank in 1usize..=20) {
        let g = common::gaussian(&mut common::rng(seed), n, rank.min(n));
        let m = &g * g.adjoint();
        let s = psd_sqrt(&m, 1e-9).unwrap();
        let scale = op_norm(&m).max(1.0);
        prop_assert!(op_norm(&(&s * &s - &m)) <= 1e-8 * scale);
    }

    #[test]
    fn psd_certificate_matches_rule(seed in any::<u64>(), n in 1usize..=8, shift in -0.5f64..0.5) {
        let g = common::gaussian(&mut common::rng(seed), n, n);
        let m = (&g * g.adjoint()).unscale(op_norm(&g).powi(2)) - identity(n).scale(shift);
        let cert = psd_check(&m, 1e-9).unwrap();
        let scale = op_norm(&m).max(1.0);
        prop_assert_eq!(cert.is_psd, cert.min_eigenvalue >= -1e-9 * scale);
    }

    #[test]
    fn hermitian_2x2_matches_closed_form(p in -5.0f64..5.0, s in -5.0f64..5.0, re in -5.0f64..5.0, im in -5.0f64..5.0) {
        let m = CMatrix::from_row_slice(2, 2, &[c(p, 0.0), c(re, im), c(re, -im), c(s, 0.0)]);
        let eig = hermitian_eig(&m).unwrap();
        let mid = (p + s) / 2.0;
        let rad = (((p - s) / 2.0).powi(2) + re * re + im * im).sqrt();
        prop_assert!((eig.values[0] - (mid + rad)).abs() <= 1e-10);
        prop_assert!((eig.values[1] - (mid - rad)).abs() <= 1e-10);
    }

    #[test]
    fn range_basis_spans_input(seed in any::<u64>(), rows in 1usize..=10, cols in 1usize..=10, rank in 1usize..=10) {
        let mut rng = common::rng(seed);
        let m = common::gaussian(&mut rng, rows, rank) * common::gaussian(&mut rng, rank, cols);
        let b = range_basis(&m, 1e-10);
        prop_assert_eq!(b.ncols(), rank.min(rows).min(cols));
        prop_assert!(op_norm(&(b.adjoint() * &b - identity(b.ncols()))) <= 1e-10);
        prop_assert!(op_norm(&(&b * b.adjoint() * &m - &m)) <= 1e-10 * op_norm(&m).max(1.0));
    }

    #[test]
    fn douglas_bounds_hold(seed in any::<u64>(), n in 1usize..=8, k in 1usize..=8, j in 1usize..=8) {
        let b = common::gaussian(&mut common::rng(seed), n, k);
        let a = &b * random_contraction(seed ^ 0x5eed, k, j);
        let cmat = douglas_solve(&a, &b, 1e-9).unwrap();
        prop_assert!(op_norm(&(&b * &cmat - &a)) <= 1e-8 * op_norm(&a).max(1.0));
        prop_assert!(op_norm(&cmat) <= 1.0 + 1e-8);
    }

    #[test]
    fn unitary_completion_is_unitary(seed in any::<u64>(), n in 1usize..=10, k in 0usize..=10) {
        let mut rng = common::rng(seed);
        let k = k.min(n);
        let ua = factors::random_unitary(&mut rng, n);
        let ub = factors::random_unitary(&mut rng, n);
        let a = ua.columns(0, k).into_owned();
        let b = ub.columns(0, k).into_owned();
        let u = unitary_completion(&a, &b, n, 1e-10).unwrap();
        prop_assert!(op_norm(&(u.adjoint() * &u - identity(n))) <= 1e-10);
        prop_assert!(op_norm(&(&u * &a - &b)) <= 1e-10);
    }

    #[test]
    fn pencil_identities_and_contraction(seed in any::<u64>(), n in 1usize..=10) {
        let mut rng = common::rng(seed);
        let u = factors::random_unitary(&mut rng, n);
        let p = factors::random_projection(&mut rng, n);
        let (phi, psi) = canonical_pencils(&u, &p).unwrap();
        prop_assert!(pencil_identities(&phi.pencil, &psi.pencil).max() <= 1e-12);
        for pencil in [&phi.pencil, &psi.pencil] {
            prop_assert!(pencil.contraction_identity_residual() <= 1e-12);
        }
    }

    #[test]
    fn shift_pencil_gives_bergman_shift(m in 1usize..=4, degree in 1usize..=12, e in 1usize..=3) {
        let weights = WeightTable::new(m, degree + 1).unwrap();
        let model = model_operator(&Pencil::shift(e), m, degree, &weights).unwrap().matrix;
        let scalar = hyper::bergman_shift(m, degree, &weights).unwrap();
        let blocks = scalar.kronecker(&identity(e));
        prop_assert!(op_norm(&(model - blocks)) <= 1e-15);
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn hypercontraction_invariants(seed in any::<u64>(), m in 1usize..=3, dim in 1usize..=6) {
        let t = common::pure_hypercontraction(&mut common::rng(seed), dim, m);
        let report = classify(&t, m, 1e-9).unwrap();
        prop_assert!(report.is_hypercontraction(m));
        for n in 1..=m {
            prop_assert!(report.order_positive(n));
        }
        let lim = q_limit(&t, m, 1e-13, hyper::DEFAULT_R_MAX).unwrap();
        prop_assert!(lim.converged);
        prop_assert!(lim.fixed_point_residual(&t) <= 1e-7 * op_norm(&lim.q_squared).max(1.0));
    }

    #[test]
    fn norm_gap_decreases_to_q(seed in any::<u64>(), m in 1usize..=3, dim in 1usize..=5) {
        let t = common::mixed_hypercontraction(&mut common::rng(seed), dim, 1, m);
        let weights = WeightTable::new(m, 41).unwrap();
        let lim = q_limit(&t, m, 1e-13, hyper::DEFAULT_R_MAX).unwrap();
        prop_assert!(lim.converged, "no convergence after {} steps", lim.iterations);
        let mut prev: Option<CMatrix> = None;
        for n in [10, 20, 40] {
            let dil = canonical_pi(&t, m, n, &weights, 1e-9).unwrap();
            let gap = norm_gap(&t, &dil).unwrap();
            if let Some(p) = &prev {
                prop_assert!(psd_check(&(p - &gap), 1e-9).unwrap().is_psd);
            }
            prev = Some(gap);
        }
        // q_limit stopped once the increments fell below 1e-13
        let n = lim.iterations.max(40);
        let weights = WeightTable::new(m, n + 1).unwrap();
        let gap = dilate::tail(&t, m, n + 1, &weights).unwrap();
        prop_assert!(op_norm(&(gap - &lim.q_squared)) <= 1e-6, "degree {}", n);
    }

    #[test]
    fn membership_is_monotone(seed in 0u64..1_000_000, m in 1usize..=4, base in 1usize..=2) {
        let pair = factors::generate_fm_pair(seed, base, m, 2).unwrap();
        prop_assume!(pair.dim() <= 8);
        for n in 1..=m {
            let report = check_fm(&pair, n, 1e-9).unwrap();
            prop_assert!(report.is_member, "order {} fails for a member of order {}", n, m);
            prop_assert!(report.product_hyper.is_hypercontraction(n));
        }
        prop_assert!(sufficiency_residual(&pair, m).unwrap() <= 1e-10);
    }

    #[test]
    fn pair_defect_recursion(seed in 0u64..1_000_000, m in 2usize..=4) {
        let pair = factors::generate_fm_pair(seed, 2, m, 2).unwrap();
        for i in [1u8, 2] {
            let ti = pair.factor(i).unwrap();
            let lower = pair_defect(&pair, m - 1, i).unwrap();
            let upper = pair_defect(&pair, m, i).unwrap();
            let k = hyper::hereditary_k_inverse(&pair.product, m - 1).unwrap();
            prop_assert!(op_norm(&(&upper - (&k - ti * &k * ti.adjoint()))) <= 1e-10);
            let stepped = &lower - &pair.product * &lower * pair.product.adjoint();
            prop_assert!(op_norm(&(upper - stepped)) <= 1e-10);
        }
    }

    #[test]
    fn szego_membership_matches_closed_form(r in 0.05f64..std::f64::consts::FRAC_1_SQRT_2, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let a = r + a * (1.0 - r);
        let b = b * (1.0 - a * a);
        let ex = szego_counterexample(r, a, b).unwrap();
        let (p, q, s) = ((1.0 - r * r) * (1.0 - a * a) - b * b, -a * b, 1.0 - a * a);
        let min_eig = (p + s) / 2.0 - (((p - s) / 2.0).powi(2) + q * q).sqrt();
        // the other pair defect is diagonal: diag(1 - r² - r²/a², 1)
        let other = 1.0 - r * r - r * r / (a * a);
        prop_assume!(min_eig.abs() > 1e-6 && other.abs() > 1e-6);
        let report = check_fm(&ex.pair, 2, 1e-9).unwrap();
        prop_assert_eq!(report.is_member, min_eig >= 0.0 && other >= 0.0);
        prop_assert!(op_norm(&(pair_defect(&ex.pair, 2, 2).unwrap() - &ex.defect2)) <= 1e-12);
        prop_assert!(op_norm(&(pair_defect(&ex.pair, 2, 1).unwrap() - &ex.defect1)) <= 1e-12);
    }

    #[test]
    fn matrix_file_round_trip(seed in any::<u64>(), rows in 1usize..=6, cols in 1usize..=6) {
        let m = common::gaussian(&mut common::rng(seed), rows, cols).scale(1e3);
        let text = MatrixFile::from_matrix(&m).to_json();
        let back = parse_matrix(&text).unwrap();
        prop_assert_eq!(back, m);
    }
}
