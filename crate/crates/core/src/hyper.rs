//! Hereditary functional calculus for a single contraction.
//!
//! `K_n⁻¹(T,T*) = Σ_k (-1)^k C(n,k) T^k T*^k` decides whether `T` is an
//! `m`-hypercontraction. The partial sums
//! `f_r⁽ⁿ⁾(T,T*) = I - Σ_{k<r} w_{n,k} T^k K_n⁻¹ T*^k` decrease to a positive
//! limit `Q²`, which vanishes exactly when `T` is pure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{
    self, c, ensure_finite, ensure_square, hermitian_part, identity, op_norm, psd_check, psd_sqrt, range_basis,
    CMatrix, PsdCertificate, RANK_TOL,
};
use crate::weights::{binomial, WeightTable};

/// Purity cut-off on the spectral radius.
pub const PURE_RADIUS_MARGIN: f64 = 1e-10;
pub const DEFAULT_CONV_TOL: f64 = 1e-10;
pub const DEFAULT_R_MAX: usize = 10_000;

/// Call-local cache of `T^k`.
pub(crate) struct Powers {
    pows: Vec<CMatrix>,
}

impl Powers {
    pub(crate) fn new(t: &CMatrix) -> Self {
        Self { pows: vec![identity(t.nrows()), t.clone()] }
    }

    pub(crate) fn get(&mut self, k: usize) -> &CMatrix {
        while self.pows.len() <= k {
            let next = &self.pows[self.pows.len() - 1] * &self.pows[1];
            self.pows.push(next);
        }
        &self.pows[k]
    }
}

/// `Σ_{k=0..n} (-1)^k C(n,k) T^k T*^k`; the identity for `n = 0`.
pub fn hereditary_k_inverse(t: &CMatrix, n: usize) -> Result<CMatrix> {
    ensure_square(t)?;
    ensure_finite(t)?;
    let mut powers = Powers::new(t);
    k_inverse_with(&mut powers, t.nrows(), n)
}

pub(crate) fn k_inverse_with(powers: &mut Powers, dim: usize, n: usize) -> Result<CMatrix> {
    let mut acc = CMatrix::zeros(dim, dim);
    for k in 0..=n {
        let coeff = binomial(n as u128, k as u128)? as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let tk = powers.get(k);
        acc += (tk * tk.adjoint()).scale(sign * coeff);
    }
    Ok(hermitian_part(&acc))
}

/// Positivity profile of a single operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperReport {
    pub operator_dim: usize,
    pub max_order_checked: usize,
    pub norm: f64,
    pub is_contraction: bool,
    /// Orders `n` in `1..=max_order_checked` with `K_n⁻¹(T,T*) >= 0`.
    pub orders_positive: Vec<usize>,
    pub spectral_radius: f64,
    pub is_pure: bool,
    /// `certificates[n - 1]` belongs to order `n`.
    pub certificates: Vec<PsdCertificate>,
    /// Whether positivity at orders 1 and `n` came with positivity at every
    /// order in between, for all checked `n`.
    pub intermediate_positivity_holds: bool,
}

impl HyperReport {
    pub fn order_positive(&self, n: usize) -> bool {
        self.orders_positive.contains(&n)
    }

    /// `T` is an `m`-hypercontraction: orders 1 and `m` positive.
    pub fn is_hypercontraction(&self, m: usize) -> bool {
        m >= 1 && m <= self.max_order_checked && self.order_positive(1) && self.order_positive(m)
    }

    pub fn certificate(&self, n: usize) -> Option<&PsdCertificate> {
        n.checked_sub(1).and_then(|i| self.certificates.get(i))
    }

    /// Largest `m` with `T` an `m`-hypercontraction, 0 if not even a contraction.
    pub fn max_hyper_order(&self) -> usize {
        (1..=self.max_order_checked).rev().find(|&m| self.is_hypercontraction(m)).unwrap_or(0)
    }
}

/// Purity in finite dimension: `T*^n -> 0` iff the spectral radius is below 1.
///
/// Radii within [`PURE_RADIUS_MARGIN`] of 1 fall back to a power-norm decay
/// test on `T^{4096}`.
pub fn is_pure(t: &CMatrix) -> Result<(bool, f64)> {
    let rho = matcore::spectral_radius(t)?;
    if rho < 1.0 - PURE_RADIUS_MARGIN {
        return Ok((true, rho));
    }
    if rho > 1.0 + 1e-6 {
        return Ok((false, rho));
    }
    let mut p = t.clone();
    for _ in 0..12 {
        p = &p * &p;
    }
    Ok((op_norm(&p) < 1e-8, rho))
}

/// Positivity of `K_n⁻¹(T,T*)` for `n = 1..=m_max`, contractivity and purity.
pub fn classify(t: &CMatrix, m_max: usize, tol: f64) -> Result<HyperReport> {
    ensure_square(t)?;
    ensure_finite(t)?;
    if m_max == 0 {
        return Err(Error::InvalidArgument("m_max must be >= 1".into()));
    }
    let dim = t.nrows();
    let norm = op_norm(t);
    let mut powers = Powers::new(t);
    let mut certificates = Vec::with_capacity(m_max);
    let mut orders_positive = Vec::new();
    for n in 1..=m_max {
        let k = k_inverse_with(&mut powers, dim, n)?;
        let cert = psd_check(&k, tol)?;
        if cert.is_psd {
            orders_positive.push(n);
        }
        certificates.push(cert);
    }
    let first = orders_positive.first() == Some(&1);
    let intermediate_positivity_holds =
        !first || orders_positive.iter().all(|&n| (1..=n).all(|j| orders_positive.contains(&j)));
    let (pure, rho) = is_pure(t)?;
    Ok(HyperReport {
        operator_dim: dim,
        max_order_checked: m_max,
        norm,
        is_contraction: norm <= 1.0 + tol,
        orders_positive,
        spectral_radius: rho,
        is_pure: pure,
        certificates,
        intermediate_positivity_holds,
    })
}

/// Defect operator `D_{n,T} = (K_n⁻¹)^{1/2}` and an orthonormal basis of its range.
pub fn defect(t: &CMatrix, n: usize, tol: f64) -> Result<(CMatrix, CMatrix)> {
    let k = hereditary_k_inverse(t, n)?;
    let d = match psd_sqrt(&k, tol) {
        Err(Error::NotPsd { certificate, .. }) => {
            return Err(Error::NotPsd { what: format!("K_{n}^-1(T,T*)"), certificate })
        }
        other => other?,
    };
    let basis = range_basis(&d, RANK_TOL);
    Ok((d, basis))
}

/// `f_r⁽ⁿ⁾(T,T*) = I - Σ_{k<r} w_{n,k} T^k K_n⁻¹(T,T*) T*^k`.
pub fn f_r(t: &CMatrix, n: usize, r: usize, weights: &WeightTable) -> Result<CMatrix> {
    ensure_square(t)?;
    if r > 0 {
        weights.get(n, r - 1)?;
    }
    let mut seq = FSequence::new(t, n, weights)?;
    for _ in 0..r {
        seq.advance()?;
    }
    Ok(seq.current)
}

/// Iterator state for `r -> f_r⁽ⁿ⁾`, one `T · T*` sandwich per step.
pub(crate) struct FSequence<'a> {
    t: CMatrix,
    n: usize,
    weights: &'a WeightTable,
    /// `T^r K_n⁻¹ T*^r`
    sandwich: CMatrix,
    pub(crate) r: usize,
    pub(crate) current: CMatrix,
    pub(crate) last_step: CMatrix,
}

impl<'a> FSequence<'a> {
    pub(crate) fn new(t: &CMatrix, n: usize, weights: &'a WeightTable) -> Result<Self> {
        let dim = t.nrows();
        let k = hereditary_k_inverse(t, n)?;
        Ok(Self {
            t: t.clone(),
            n,
            weights,
            sandwich: k,
            r: 0,
            current: identity(dim),
            last_step: CMatrix::zeros(dim, dim),
        })
    }

    /// Moves from `f_r` to `f_{r+1}`.
    pub(crate) fn advance(&mut self) -> Result<()> {
        let w = self.weights.get_f64(self.n, self.r)?;
        self.last_step = self.sandwich.scale(w);
        self.current = hermitian_part(&(&self.current - &self.last_step));
        self.sandwich = hermitian_part(&(&self.t * &self.sandwich * self.t.adjoint()));
        self.r += 1;
        Ok(())
    }
}

/// Limit of the decreasing sequence `f_r⁽ᵐ⁾(T,T*)`.
#[derive(Debug, Clone)]
pub struct QLimit {
    pub q_squared: CMatrix,
    pub q: CMatrix,
    pub iterations: usize,
    pub final_step_norm: f64,
    pub converged: bool,
    /// Most negative relative eigenvalue seen among the increments
    /// `f_r - f_{r+1}`; non-negative up to noise for a hypercontraction.
    pub worst_monotonicity: f64,
}

impl QLimit {
    /// `‖T Q² T* - Q²‖`.
    pub fn fixed_point_residual(&self, t: &CMatrix) -> f64 {
        op_norm(&(t * &self.q_squared * t.adjoint() - &self.q_squared))
    }
}

/// Iterates `f_r⁽ᵐ⁾` until the step norm drops below `tol_conv` (and is no
/// longer growing) or `r_max` steps have been taken.
pub fn q_limit(t: &CMatrix, m: usize, tol_conv: f64, r_max: usize) -> Result<QLimit> {
    q_limit_with_tol(t, m, tol_conv, r_max, matcore::DEFAULT_TOL)
}

pub fn q_limit_with_tol(t: &CMatrix, m: usize, tol_conv: f64, r_max: usize, tol: f64) -> Result<QLimit> {
    ensure_square(t)?;
    if m == 0 {
        return Err(Error::InvalidArgument("order m must be >= 1".into()));
    }
    let report = classify(t, m, tol)?;
    if !report.is_hypercontraction(m) {
        let bad = if report.order_positive(1) { m } else { 1 };
        return Err(Error::NotPsd {
            what: format!("K_{bad}^-1(T,T*)"),
            certificate: Box::new(report.certificate(bad).cloned().expect("order checked")),
        });
    }
    // Steps are formed as w_{m,r} G_r G_r* with G_r = T^r K_m^{1/2}: round-off
    // left on a unitary summand then enters quadratically, instead of being
    // amplified by the growing weights.
    let weights = WeightTable::new(m, r_max)?;
    let dim = t.nrows();
    let mut g = psd_sqrt(&hereditary_k_inverse(t, m)?, tol)?;
    let mut current = identity(dim);
    let mut r = 0;
    let mut prev_step = f64::INFINITY;
    let mut step_norm = f64::INFINITY;
    let mut worst = 0.0f64;
    let mut converged = false;
    while r < r_max {
        let step = hermitian_part(&(&g * g.adjoint()).scale(weights.get_f64(m, r)?));
        current = hermitian_part(&(&current - &step));
        g = t * g;
        r += 1;
        step_norm = op_norm(&step);
        let cert = psd_check(&step, tol)?;
        worst = worst.min(cert.min_eigenvalue / cert.scale);
        if step_norm < tol_conv && step_norm <= prev_step {
            converged = true;
            break;
        }
        prev_step = step_norm;
    }
    let eig = matcore::hermitian_eig(&current)?;
    let mut clamped = CMatrix::zeros(dim, dim);
    for j in 0..dim {
        let v = eig.vectors.column(j);
        clamped += (v * v.adjoint()).scale(eig.values[j].max(0.0));
    }
    let q_squared = hermitian_part(&clamped);
    let q = psd_sqrt(&q_squared, tol)?;
    Ok(QLimit { q_squared, q, iterations: r, final_step_norm: step_norm, converged, worst_monotonicity: worst })
}

/// Truncated Bergman shift on `A²_m` (degrees `0..=degree`), scalar-valued.
pub fn bergman_shift(m: usize, degree: usize, weights: &WeightTable) -> Result<CMatrix> {
    weights.get(m, degree + 1)?;
    let size = degree + 1;
    let mut s = CMatrix::zeros(size, size);
    for k in 0..degree {
        let ratio = weights.get_f64(m, k)? / weights.get_f64(m, k + 1)?;
        s[(k + 1, k)] = c(ratio.sqrt(), 0.0);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{from_real_rows, zeros};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t_r(r: f64) -> CMatrix {
        from_real_rows(2, 2, &[0.0, r, 0.0, 0.0])
    }

    fn random_contraction(rng: &mut impl Rng, n: usize, scale: f64) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let nrm = op_norm(&a);
        a.scale(scale / nrm)
    }

    #[test]
    fn k_inverse_of_zero_is_identity() {
        for n in 1..5 {
            let k = hereditary_k_inverse(&zeros(3, 3), n).unwrap();
            assert!(op_norm(&(k - identity(3))) == 0.0);
        }
    }

    #[test]
    fn k_inverse_of_nilpotent_jordan_block() {
        let r: f64 = 0.6;
        let k1 = hereditary_k_inverse(&t_r(r), 1).unwrap();
        let k2 = hereditary_k_inverse(&t_r(r), 2).unwrap();
        assert!(op_norm(&(k1 - from_real_rows(2, 2, &[1.0 - r * r, 0.0, 0.0, 1.0]))) < 1e-15);
        assert!(op_norm(&(k2 - from_real_rows(2, 2, &[1.0 - 2.0 * r * r, 0.0, 0.0, 1.0]))) < 1e-15);
    }

    #[test]
    fn k_inverse_of_hardy_shift_truncation() {
        let weights = WeightTable::new(1, 4).unwrap();
        let s = bergman_shift(1, 2, &weights).unwrap();
        let k1 = hereditary_k_inverse(&s, 1).unwrap();
        // I - S S* = diag(1, 0, 0): the shift fills degrees 1 and 2.
        let expected = from_real_rows(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(op_norm(&(k1 - expected)) < 1e-15);
    }

    #[test]
    fn k_inverse_rejects_rectangular() {
        assert!(matches!(hereditary_k_inverse(&zeros(2, 3), 1), Err(Error::NonSquare { .. })));
    }

    #[test]
    fn classify_boundary_t_r() {
        let rep = classify(&t_r(1.0 / 2f64.sqrt()), 3, 1e-9).unwrap();
        assert!(rep.is_hypercontraction(2));
        assert!(rep.is_pure);
        assert!(rep.certificate(2).unwrap().min_eigenvalue.abs() < 1e-12);
        assert!(rep.intermediate_positivity_holds);
    }

    #[test]
    fn classify_t_r_beyond_threshold() {
        let r: f64 = 0.72;
        let rep = classify(&t_r(r), 2, 1e-9).unwrap();
        assert!(rep.is_hypercontraction(1));
        assert!(!rep.is_hypercontraction(2));
        assert_abs_diff_eq!(rep.certificate(2).unwrap().min_eigenvalue, 1.0 - 2.0 * r * r, epsilon = 1e-14);
        assert_eq!(rep.max_hyper_order(), 1);
    }

    #[test]
    fn classify_unitary() {
        let u = CMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]));
        let rep = classify(&u, 5, 1e-9).unwrap();
        assert_eq!(rep.orders_positive, vec![1, 2, 3, 4, 5]);
        assert!(!rep.is_pure);
        for cert in &rep.certificates {
            assert!(cert.min_eigenvalue.abs() < 1e-12);
        }
    }

    #[test]
    fn classify_non_contraction() {
        let rep = classify(&from_real_rows(1, 1, &[1.5]), 2, 1e-9).unwrap();
        assert!(!rep.is_contraction);
        assert!(!rep.is_hypercontraction(1));
    }

    #[test]
    fn defect_examples() {
        let u = CMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0, 1.0), c(-1.0, 0.0)]));
        let (d, basis) = defect(&u, 2, 1e-9).unwrap();
        assert!(op_norm(&d) < 1e-7);
        assert_eq!(basis.ncols(), 0);

        let (d, basis) = defect(&t_r(0.6), 1, 1e-9).unwrap();
        assert!(op_norm(&(d - from_real_rows(2, 2, &[0.8, 0.0, 0.0, 1.0]))) < 1e-12);
        assert_eq!(basis.ncols(), 2);

        let (d, _) = defect(&zeros(3, 3), 4, 1e-9).unwrap();
        assert!(op_norm(&(d - identity(3))) < 1e-12);

        assert!(matches!(defect(&t_r(0.72), 2, 1e-9), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn f_r_base_cases() {
        let weights = WeightTable::new(4, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_contraction(&mut rng, 3, 0.8);
        assert!(op_norm(&(f_r(&t, 2, 0, &weights).unwrap() - identity(3))) == 0.0);
        let mut p = Powers::new(&t);
        for r in 0..8 {
            let tr = p.get(r).clone();
            let expect = &tr * tr.adjoint();
            assert!(op_norm(&(f_r(&t, 1, r, &weights).unwrap() - expect)) < 1e-12, "r = {r}");
        }
    }

    #[test]
    fn f_r_order_recurrence() {
        let weights = WeightTable::new(4, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let s = rng.random_range(0.1..1.0);
            let t = random_contraction(&mut rng, 3, s);
            let mut p = Powers::new(&t);
            for n in 2..=4 {
                let k_prev = hereditary_k_inverse(&t, n - 1).unwrap();
                for r in 1..10 {
                    let tr = p.get(r).clone();
                    let rhs = f_r(&t, n - 1, r, &weights).unwrap()
                        + (&tr * &k_prev * tr.adjoint()).scale(weights.get_f64(n, r - 1).unwrap());
                    let lhs = f_r(&t, n, r, &weights).unwrap();
                    assert!(op_norm(&(lhs - rhs)) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn f_r_needs_table() {
        let weights = WeightTable::new(2, 3).unwrap();
        assert!(matches!(f_r(&t_r(0.5), 2, 6, &weights), Err(Error::WeightTableTooSmall { .. })));
        assert!(matches!(f_r(&t_r(0.5), 3, 1, &weights), Err(Error::WeightTableTooSmall { .. })));
    }

    #[test]
    fn q_limit_pure_is_zero() {
        let q = q_limit(&t_r(0.7), 2, DEFAULT_CONV_TOL, DEFAULT_R_MAX).unwrap();
        assert!(q.converged);
        assert!(op_norm(&q.q_squared) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = random_contraction(&mut rng, 4, 0.5);
        let q = q_limit(&t, 2, DEFAULT_CONV_TOL, DEFAULT_R_MAX).unwrap();
        assert!(q.converged);
        assert!(op_norm(&q.q_squared) < 1e-9);
    }

    #[test]
    fn q_limit_unitary_is_identity() {
        let u = CMatrix::from_diagonal(&DVector::from_vec(vec![c(0.6, 0.8), c(-1.0, 0.0)]));
        let q = q_limit(&u, 3, DEFAULT_CONV_TOL, DEFAULT_R_MAX).unwrap();
        assert!(q.converged);
        assert!(op_norm(&(&q.q_squared - identity(2))) < 1e-12);
        assert!(q.fixed_point_residual(&u) < 1e-12);
    }

    #[test]
    fn q_limit_rank_one() {
        let t = from_real_rows(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let q = q_limit(&t, 1, DEFAULT_CONV_TOL, DEFAULT_R_MAX).unwrap();
        assert!(q.converged);
        assert!(op_norm(&(&q.q_squared - from_real_rows(2, 2, &[1.0, 0.0, 0.0, 0.0]))) < 1e-10);
        assert!(q.fixed_point_residual(&t) < 1e-10);
        assert!(q.worst_monotonicity > -1e-12);
    }

    #[test]
    fn q_limit_rejects_non_hyper() {
        assert!(matches!(q_limit(&t_r(0.72), 2, 1e-10, 100), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn bergman_shift_weights() {
        let weights = WeightTable::new(2, 10).unwrap();
        let s = bergman_shift(2, 3, &weights).unwrap();
        assert_abs_diff_eq!(s[(1, 0)].re, (0.5f64).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s[(2, 1)].re, (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s[(3, 2)].re, (0.75f64).sqrt(), epsilon = 1e-15);
        let hardy = bergman_shift(1, 3, &weights).unwrap();
        for k in 0..3 {
            assert_eq!(hardy[(k + 1, k)], c(1.0, 0.0));
        }
    }
}
