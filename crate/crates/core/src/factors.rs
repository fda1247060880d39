//! Contractive factor pairs and the class `F_m`.
//!
//! A commuting contractive pair `(T1, T2)` with product `T` is in `F_m` when
//! `D²_{m,T,Ti} = K_{m-1}⁻¹(T,T*) - Ti K_{m-1}⁻¹(T,T*) Ti* >= 0` for both `i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyper::{self, hereditary_k_inverse, HyperReport};
use crate::matcore::{
    self, c, ensure_finite, ensure_square, hermitian_part, identity, op_norm, psd_check, zeros, CMatrix, PsdCertificate,
};
use crate::schur::{canonical_pencils, model_operator};
use crate::weights::WeightTable;

pub const TOL_COMMUTE: f64 = 1e-10;

/// Attempts made by [`generate_fm_pair`] before giving up.
pub const GENERATE_RETRIES: usize = 8;

/// Threshold for accepting a new direction in the adjoint-orbit closure.
const ORBIT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct FactorPair {
    pub t1: CMatrix,
    pub t2: CMatrix,
    pub product: CMatrix,
    pub commutator_norm: f64,
}

impl FactorPair {
    /// Validates shapes, commutativity (relative to `TOL_COMMUTE`) and
    /// contractivity (`‖Ti‖ <= 1 + tol`).
    pub fn new(t1: CMatrix, t2: CMatrix, tol: f64) -> Result<Self> {
        ensure_square(&t1)?;
        ensure_square(&t2)?;
        ensure_finite(&t1)?;
        ensure_finite(&t2)?;
        if t1.shape() != t2.shape() {
            return Err(Error::DimensionMismatch(format!("T1 is {:?} but T2 is {:?}", t1.shape(), t2.shape())));
        }
        let product = &t1 * &t2;
        let commutator_norm = op_norm(&(&product - &t2 * &t1));
        let n1 = op_norm(&t1);
        let n2 = op_norm(&t2);
        if commutator_norm > TOL_COMMUTE * (n1 * n2).max(1.0) {
            return Err(Error::NotCommuting { norm: commutator_norm });
        }
        for (what, norm) in [("T1", n1), ("T2", n2)] {
            if norm > 1.0 + tol {
                return Err(Error::NotContraction { what: what.into(), norm });
            }
        }
        Ok(Self { t1, t2, product, commutator_norm })
    }

    pub fn dim(&self) -> usize {
        self.t1.nrows()
    }

    pub fn factor(&self, i: u8) -> Result<&CMatrix> {
        match i {
            1 => Ok(&self.t1),
            2 => Ok(&self.t2),
            _ => Err(Error::InvalidArgument(format!("factor index must be 1 or 2, got {i}"))),
        }
    }

    /// `(V T1 V*, V T2 V*)` for a unitary `V`.
    pub fn conjugate(&self, v: &CMatrix) -> Result<Self> {
        let vs = v.adjoint();
        Self::new(v * &self.t1 * &vs, v * &self.t2 * &vs, matcore::DEFAULT_TOL)
    }

    /// Direct sum with `(diag(u1), diag(u2))`; unit-modulus entries keep the
    /// pair in every `F_m`.
    pub fn with_unitary_summand(&self, u1: &[num_complex::Complex64], u2: &[num_complex::Complex64]) -> Result<Self> {
        if u1.len() != u2.len() {
            return Err(Error::DimensionMismatch("unitary summands differ in length".into()));
        }
        let d = self.dim();
        let n = d + u1.len();
        let mut a = zeros(n, n);
        let mut b = zeros(n, n);
        a.view_mut((0, 0), (d, d)).copy_from(&self.t1);
        b.view_mut((0, 0), (d, d)).copy_from(&self.t2);
        for (j, (x, y)) in u1.iter().zip(u2).enumerate() {
            a[(d + j, d + j)] = *x;
            b[(d + j, d + j)] = *y;
        }
        Self::new(a, b, matcore::DEFAULT_TOL)
    }
}

/// `D²_{n,T,Ti} = K_{n-1}⁻¹(T,T*) - Ti K_{n-1}⁻¹(T,T*) Ti*`.
pub fn pair_defect(pair: &FactorPair, n: usize, i: u8) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("pair defect order must be >= 1".into()));
    }
    let ti = pair.factor(i)?;
    let k = hereditary_k_inverse(&pair.product, n - 1)?;
    Ok(hermitian_part(&(&k - ti * &k * ti.adjoint())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FmReport {
    pub m: usize,
    pub pair_defects_psd: [PsdCertificate; 2],
    pub orders_checked: Vec<usize>,
    /// `chain[n - 1]` holds the two certificates at order `n`.
    pub chain: Vec<[PsdCertificate; 2]>,
    /// Orders `n <= m` at which both pair defects are PSD.
    pub orders_member: Vec<usize>,
    pub product_hyper: HyperReport,
    pub is_member: bool,
    /// False if order `m` passes while some lower order fails.
    pub chain_consistent: bool,
}

impl FmReport {
    pub fn failure_summary(&self) -> String {
        let failed: Vec<String> = self
            .pair_defects_psd
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_psd)
            .map(|(i, c)| format!("D^2_{{{},T,T{}}} has min eigenvalue {:.6e}", self.m, i + 1, c.min_eigenvalue))
            .collect();
        if failed.is_empty() {
            "pair is in F_m".into()
        } else {
            format!("pair is not in F_{}: {}", self.m, failed.join("; "))
        }
    }
}

pub fn check_fm(pair: &FactorPair, m: usize, tol: f64) -> Result<FmReport> {
    if m == 0 {
        return Err(Error::InvalidArgument("order m must be >= 1".into()));
    }
    let mut chain = Vec::with_capacity(m);
    let mut orders_member = Vec::new();
    for n in 1..=m {
        let c1 = psd_check(&pair_defect(pair, n, 1)?, tol)?;
        let c2 = psd_check(&pair_defect(pair, n, 2)?, tol)?;
        if c1.is_psd && c2.is_psd {
            orders_member.push(n);
        }
        chain.push([c1, c2]);
    }
    let is_member = orders_member.last() == Some(&m);
    let chain_consistent = !is_member || orders_member.len() == m;
    let product_hyper = hyper::classify(&pair.product, m, tol)?;
    let pair_defects_psd = chain[m - 1].clone();
    Ok(FmReport {
        m,
        pair_defects_psd,
        orders_checked: (1..=m).collect(),
        chain,
        orders_member,
        product_hyper,
        is_member,
        chain_consistent,
    })
}

/// Fails with `Precondition` unless the pair is in `F_m`.
pub fn require_member(pair: &FactorPair, m: usize, tol: f64) -> Result<FmReport> {
    let report = check_fm(pair, m, tol)?;
    if report.is_member {
        Ok(report)
    } else {
        Err(Error::Precondition(report.failure_summary()))
    }
}

/// `‖K_m⁻¹ - D²_{m,T,T1} - T1 D²_{m,T,T2} T1*‖`.
pub fn sufficiency_residual(pair: &FactorPair, m: usize) -> Result<f64> {
    let k = hereditary_k_inverse(&pair.product, m)?;
    let d1 = pair_defect(pair, m, 1)?;
    let d2 = pair_defect(pair, m, 2)?;
    let rhs = d1 + &pair.t1 * d2 * pair.t1.adjoint();
    Ok(op_norm(&(k - rhs)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SufficiencyCertificate {
    pub hyper: HyperReport,
    pub decomposition_residual: f64,
}

pub const DECOMPOSITION_TOL: f64 = 1e-10;

/// For a member of `F_m`, certifies that the product is an
/// `m`-hypercontraction through `K_m⁻¹ = D²_{m,T,T1} + T1 D²_{m,T,T2} T1*`.
pub fn product_hyper_from_membership(pair: &FactorPair, m: usize, tol: f64) -> Result<SufficiencyCertificate> {
    let fm = require_member(pair, m, tol)?;
    let scale = op_norm(&hereditary_k_inverse(&pair.product, m)?).max(1.0);
    let residual = sufficiency_residual(pair, m)?;
    if residual > DECOMPOSITION_TOL * scale {
        return Err(Error::Internal(format!("K_m^-1 decomposition residual {residual:.3e}")));
    }
    if !fm.product_hyper.is_hypercontraction(m) {
        return Err(Error::Internal(format!(
            "members of F_{m} must have an {m}-hypercontractive product, classification disagrees"
        )));
    }
    Ok(SufficiencyCertificate { hyper: fm.product_hyper, decomposition_residual: residual })
}

#[derive(Debug, Clone)]
pub struct SzegoExample {
    pub pair: FactorPair,
    /// `D²_{2,T,T_r S⁻¹} = diag(1 - r² - r²/a², 1)`.
    pub defect1: CMatrix,
    /// `D²_{2,T,S} = [[(1-r²)(1-a²) - b², -ab], [-ab, 1-a²]]`.
    pub defect2: CMatrix,
    pub t_r: CMatrix,
    pub s: CMatrix,
}

/// Slack on the parameter inequalities, so `r = 1/√2` passes `r² <= 1/2`.
const PARAM_SLACK: f64 = 1e-12;

/// The pair `(T_r S⁻¹, S)` with `T_r = [[0, r], [0, 0]]`, `S = [[a, b], [0, a]]`.
pub fn szego_counterexample(r: f64, a: f64, b: f64) -> Result<SzegoExample> {
    for (name, v) in [("r", r), ("a", a), ("b", b)] {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be finite")));
        }
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Precondition(format!("0 < r <= 1 fails for r = {r}")));
    }
    if a <= 0.0 {
        return Err(Error::Precondition(format!("a > 0 fails for a = {a}")));
    }
    if b < 0.0 {
        return Err(Error::Precondition(format!("b >= 0 fails for b = {b}")));
    }
    if b > 1.0 - a * a + PARAM_SLACK {
        return Err(Error::Precondition(format!("S is a contraction iff b <= 1 - a^2; {b} > {}", 1.0 - a * a)));
    }
    if r * r > 0.5 + PARAM_SLACK {
        return Err(Error::Precondition(format!("T_r is a 2-hypercontraction iff r^2 <= 1/2; r^2 = {}", r * r)));
    }
    if r > a + PARAM_SLACK {
        return Err(Error::Precondition(format!("T_r S^-1 is a contraction iff r <= a; {r} > {a}")));
    }
    let t_r = matcore::from_real_rows(2, 2, &[0.0, r, 0.0, 0.0]);
    let s = matcore::from_real_rows(2, 2, &[a, b, 0.0, a]);
    let t1 = matcore::from_real_rows(2, 2, &[0.0, r / a, 0.0, 0.0]);
    let pair = FactorPair::new(t1, s.clone(), 1e-12)?;
    let defect2 = matcore::from_real_rows(2, 2, &[(1.0 - r * r) * (1.0 - a * a) - b * b, -a * b, -a * b, 1.0 - a * a]);
    let defect1 = matcore::from_real_rows(2, 2, &[1.0 - r * r - r * r / (a * a), 0.0, 0.0, 1.0]);
    Ok(SzegoExample { pair, defect1, defect2, t_r, s })
}

pub(crate) fn random_gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

/// Haar-distributed unitary (QR of a Gaussian matrix with phase fix).
pub fn random_unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
    let qr = random_gaussian(rng, n, n).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for i in 0..n {
                q[(i, j)] *= phase;
            }
        }
    }
    q
}

/// Orthogonal projection onto a random subspace of random rank.
pub fn random_projection(rng: &mut impl Rng, n: usize) -> CMatrix {
    let rank = rng.random_range(0..=n);
    let q = random_unitary(rng, n);
    let cols = q.columns(0, rank);
    cols * cols.adjoint()
}

/// Orthonormal basis of the smallest subspace containing `seeds` and
/// invariant under every operator in `ops`.
pub fn invariant_closure(ops: &[&CMatrix], seeds: &CMatrix) -> CMatrix {
    let n = seeds.nrows();
    let mut basis: Vec<nalgebra::DVector<num_complex::Complex64>> = Vec::new();
    let mut queue: Vec<nalgebra::DVector<num_complex::Complex64>> =
        (0..seeds.ncols()).map(|j| seeds.column(j).into_owned()).collect();
    while let Some(v) = queue.pop() {
        let norm = v.norm();
        if norm == 0.0 || basis.len() == n {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&w);
                w -= b * proj;
            }
        }
        let rest = w.norm();
        if rest <= ORBIT_TOL * norm.max(1.0) {
            continue;
        }
        let w = w / c(rest, 0.0);
        for op in ops {
            queue.push(*op * &w);
        }
        basis.push(w);
    }
    let mut out = zeros(n, basis.len());
    for (j, b) in basis.iter().enumerate() {
        out.set_column(j, b);
    }
    out
}

/// Random member of `F_m`: compression of a truncated canonical model pair
/// `(M_Φ, M_Ψ)` on `A²_m(E)`, `dim E = base_dim`, to the adjoint-orbit
/// closure of a random vector.
pub fn generate_fm_pair(seed: u64, base_dim: usize, m: usize, degree: usize) -> Result<FactorPair> {
    if base_dim == 0 || m == 0 || degree == 0 {
        return Err(Error::InvalidArgument("base_dim, m and degree must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = WeightTable::new(m, degree + 1)?;
    let mut last_err = None;
    for _ in 0..GENERATE_RETRIES {
        let u = random_unitary(&mut rng, base_dim);
        let p = random_projection(&mut rng, base_dim);
        let (phi, psi) = canonical_pencils(&u, &p)?;
        let m_phi = model_operator(&phi.pencil, m, degree, &weights)?.matrix;
        let m_psi = model_operator(&psi.pencil, m, degree, &weights)?.matrix;
        let size = m_phi.nrows();
        let seeds = random_gaussian(&mut rng, size, 1);
        let (a1, a2) = (m_phi.adjoint(), m_psi.adjoint());
        let basis = invariant_closure(&[&a1, &a2], &seeds);
        let bs = basis.adjoint();
        let t1 = &bs * &m_phi * &basis;
        let t2 = &bs * &m_psi * &basis;
        match FactorPair::new(t1, t2, matcore::DEFAULT_TOL).and_then(|pair| {
            require_member(&pair, m, matcore::DEFAULT_TOL)?;
            Ok(pair)
        }) {
            Ok(pair) => return Ok(pair),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Internal(format!(
        "no verified F_{m} member after {GENERATE_RETRIES} attempts: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Generated member conjugated by a random unitary, optionally with a
/// diagonal unitary summand of size `unitary_dim` (making it non-pure).
pub fn generate_fm_pair_mixed(
    seed: u64,
    base_dim: usize,
    m: usize,
    degree: usize,
    unitary_dim: usize,
) -> Result<FactorPair> {
    let pair = generate_fm_pair(seed, base_dim, m, degree)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let angle = |rng: &mut ChaCha8Rng| {
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        num_complex::Complex64::from_polar(1.0, t)
    };
    let u1: Vec<_> = (0..unitary_dim).map(|_| angle(&mut rng)).collect();
    let u2: Vec<_> = (0..unitary_dim).map(|_| angle(&mut rng)).collect();
    let pair = pair.with_unitary_summand(&u1, &u2)?;
    let v = random_unitary(&mut rng, pair.dim());
    pair.conjugate(&v)
}

/// Random commuting contractive pair `(A, p(A))` with `A` upper triangular.
/// Membership in any `F_m` with `m >= 2` is not guaranteed; this is meant
/// for negative tests.
pub fn random_commuting_pair(seed: u64, dim: usize) -> Result<FactorPair> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = random_gaussian(&mut rng, dim, dim);
    for i in 0..dim {
        for j in 0..i {
            a[(i, j)] = c(0.0, 0.0);
        }
    }
    let s: f64 = rng.random_range(0.3..0.99);
    let a = a.scale(s / op_norm(&a).max(f64::MIN_POSITIVE));
    let coeffs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut b = identity(dim).scale(coeffs[0]) + a.scale(coeffs[1]) + (&a * &a).scale(coeffs[2]);
    let nb = op_norm(&b);
    let s2: f64 = rng.random_range(0.3..0.99);
    if nb > 0.0 {
        b = b.scale(s2 / nb);
    }
    FactorPair::new(a, b, matcore::DEFAULT_TOL)
}
