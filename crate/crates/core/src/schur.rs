//! Canonical Schur pairs and their realizations.
//!
//! A triple `(E, U, P)` (unitary `U`, orthogonal projection `P` on `E`)
//! gives the linear pencils `Φ(z) = (P + zP⊥)U*` and `Ψ(z) = U(P⊥ + zP)` with
//! `ΦΨ = ΨΦ = z`. For a factor pair the triple is built from the pair defect
//! spaces: `E = ancilla ⊕ D_{m,T,T1} ⊕ D_{m,T,T2}`, `P` projects onto the last
//! block, `U` extends the isometry
//! `(D₂h, D₁T₂*h) ↦ (D₁h, D₂T₁*h)` and `V: D_{m,T}h ↦ (0, D₁h, D₂T₁*h)`.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dilate::{self, block_rows_residual, direct_sum, kept_rows, DilationPack};
use crate::error::{Error, Result};
use crate::factors::{self, FactorPair};
use crate::hyper::hereditary_k_inverse;
use crate::matcore::{
    self, identity, op_norm, pinv, psd_sqrt, range_basis, unitary_completion, zeros, CMatrix, RANK_TOL,
};
use crate::weights::WeightTable;

/// Tolerance on the coefficient identities of canonical pencils.
pub const PENCIL_TOL: f64 = 1e-10;

/// `z ↦ coeff0 + z · coeff1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pencil {
    pub coeff0: CMatrix,
    pub coeff1: CMatrix,
}

impl Pencil {
    pub fn new(coeff0: CMatrix, coeff1: CMatrix) -> Result<Self> {
        if coeff0.shape() != coeff1.shape() || coeff0.nrows() != coeff0.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "pencil coefficients {:?} and {:?}",
                coeff0.shape(),
                coeff1.shape()
            )));
        }
        Ok(Self { coeff0, coeff1 })
    }

    /// The pencil `z ↦ z · I`.
    pub fn shift(dim: usize) -> Self {
        Self { coeff0: zeros(dim, dim), coeff1: identity(dim) }
    }

    pub fn dim(&self) -> usize {
        self.coeff0.nrows()
    }

    pub fn eval(&self, z: num_complex::Complex64) -> CMatrix {
        &self.coeff0 + &self.coeff1 * z
    }

    /// Coefficients of the quadratic `self(z) · other(z)`.
    pub fn product(&self, other: &Pencil) -> [CMatrix; 3] {
        [
            &self.coeff0 * &other.coeff0,
            &self.coeff0 * &other.coeff1 + &self.coeff1 * &other.coeff0,
            &self.coeff1 * &other.coeff1,
        ]
    }

    /// Coefficientwise distance of `self · other` from `z · I`.
    pub fn product_shift_defect(&self, other: &Pencil) -> f64 {
        let [c0, c1, c2] = self.product(other);
        let id = identity(self.dim());
        op_norm(&c0).max(op_norm(&(c1 - id))).max(op_norm(&c2))
    }

    /// `V* self V`, coefficientwise.
    pub fn compress(&self, v: &CMatrix) -> Pencil {
        Pencil { coeff0: v.adjoint() * &self.coeff0 * v, coeff1: v.adjoint() * &self.coeff1 * v }
    }

    /// `‖c0*c0 + c1*c1 - I‖`.
    pub fn contraction_identity_residual(&self) -> f64 {
        let id = identity(self.dim());
        op_norm(&(self.coeff0.adjoint() * &self.coeff0 + self.coeff1.adjoint() * &self.coeff1 - id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PencilRole {
    Phi,
    Psi,
}

/// A canonical pencil together with the triple that generated it.
#[derive(Debug, Clone)]
pub struct SchurPencil {
    pub pencil: Pencil,
    pub u: CMatrix,
    pub p: CMatrix,
    pub role: PencilRole,
}

impl SchurPencil {
    pub fn e_dim(&self) -> usize {
        self.u.nrows()
    }
}

/// Residuals of the product identities `ΦΨ = ΨΦ = z`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PencilIdentities {
    pub phi_psi: [f64; 3],
    pub psi_phi: [f64; 3],
}

impl PencilIdentities {
    pub fn max(&self) -> f64 {
        self.phi_psi.iter().chain(self.psi_phi.iter()).fold(0.0, |a, &b| a.max(b))
    }
}

/// Coefficient residuals `(‖c0‖, ‖c1 - I‖, ‖c2‖)` of both products.
pub fn pencil_identities(phi: &Pencil, psi: &Pencil) -> PencilIdentities {
    let id = identity(phi.dim());
    let res = |[c0, c1, c2]: [CMatrix; 3]| [op_norm(&c0), op_norm(&(c1 - &id)), op_norm(&c2)];
    PencilIdentities { phi_psi: res(phi.product(psi)), psi_phi: res(psi.product(phi)) }
}

/// `Φ(z) = (P + zP⊥)U*`, `Ψ(z) = U(P⊥ + zP)`.
pub fn canonical_pencils(u: &CMatrix, p: &CMatrix) -> Result<(SchurPencil, SchurPencil)> {
    matcore::ensure_square(u)?;
    if u.shape() != p.shape() {
        return Err(Error::DimensionMismatch(format!("U is {:?} but P is {:?}", u.shape(), p.shape())));
    }
    let n = u.nrows();
    let unitary_defect = matcore::isometry_defect(u).max(op_norm(&(u * u.adjoint() - identity(n))));
    if unitary_defect > PENCIL_TOL {
        return Err(Error::Precondition(format!("U is not unitary (defect {unitary_defect:.3e})")));
    }
    let proj_defect = op_norm(&(p - p.adjoint())).max(op_norm(&(p * p - p)));
    if proj_defect > PENCIL_TOL {
        return Err(Error::Precondition(format!("P is not an orthogonal projection (defect {proj_defect:.3e})")));
    }
    let p_perp = identity(n) - p;
    let u_star = u.adjoint();
    let phi = Pencil { coeff0: p * &u_star, coeff1: &p_perp * &u_star };
    let psi = Pencil { coeff0: u * &p_perp, coeff1: u * p };
    let ids = pencil_identities(&phi, &psi);
    if ids.max() > PENCIL_TOL {
        return Err(Error::Internal(format!("canonical pencil identities off by {:.3e}", ids.max())));
    }
    Ok((
        SchurPencil { pencil: phi, u: u.clone(), p: p.clone(), role: PencilRole::Phi },
        SchurPencil { pencil: psi, u: u.clone(), p: p.clone(), role: PencilRole::Psi },
    ))
}

/// Truncated multiplication operator on `A²_m(E)`, degrees `0..=degree`.
#[derive(Debug, Clone)]
pub struct ModelOperator {
    pub matrix: CMatrix,
    pub order: usize,
    pub degree: usize,
    pub block_dim: usize,
}

/// Block `(k,k) = coeff0`, block `(k+1,k) = √(w_{m,k}/w_{m,k+1}) · coeff1`.
pub fn model_operator(pencil: &Pencil, m: usize, degree: usize, weights: &WeightTable) -> Result<ModelOperator> {
    weights.get(m, degree + 1)?;
    let e = pencil.dim();
    let size = (degree + 1) * e;
    let mut mat = zeros(size, size);
    for k in 0..=degree {
        mat.view_mut((k * e, k * e), (e, e)).copy_from(&pencil.coeff0);
        if k < degree {
            let ratio = (weights.get_f64(m, k)? / weights.get_f64(m, k + 1)?).sqrt();
            mat.view_mut(((k + 1) * e, k * e), (e, e)).copy_from(&pencil.coeff1.scale(ratio));
        }
    }
    Ok(ModelOperator { matrix: mat, order: m, degree, block_dim: e })
}

/// Coordinates of the pair data that every construction below shares.
#[derive(Debug, Clone)]
pub struct DefectLayout {
    pub ancilla: usize,
    pub d1: usize,
    pub d2: usize,
}

impl DefectLayout {
    pub fn e_dim(&self) -> usize {
        self.ancilla + self.d1 + self.d2
    }

    /// `ι₁`: ancilla ⊕ D₁ → E.
    pub fn iota1(&self) -> CMatrix {
        let k = self.ancilla + self.d1;
        let mut m = zeros(self.e_dim(), k);
        m.view_mut((0, 0), (k, k)).fill_with_identity();
        m
    }

    /// `ι₂`: D₂ → E.
    pub fn iota2(&self) -> CMatrix {
        let mut m = zeros(self.e_dim(), self.d2);
        m.view_mut((self.ancilla + self.d1, 0), (self.d2, self.d2)).fill_with_identity();
        m
    }

    /// `P = ι₂ι₂*`.
    pub fn projection(&self) -> CMatrix {
        let i2 = self.iota2();
        &i2 * i2.adjoint()
    }
}

/// Defect operators of a factor pair, in range-basis coordinates.
#[derive(Debug, Clone)]
pub struct PairDefects {
    pub order: usize,
    pub layout: DefectLayout,
    /// `D_{m,T}` as an `r_D × d` matrix (`B_D* D_{m,T}`).
    pub d_coords: CMatrix,
    /// `D_{m,T,T1}` and `D_{m,T,T2}` in coordinates (`r_i × d`).
    pub g1: CMatrix,
    pub g2: CMatrix,
    /// `h ↦ (0, D₁h, D₂T₁*h) ∈ E`, an `e × d` matrix.
    pub v_image: CMatrix,
    /// `h ↦ (0, D₁T₂*h, D₂h) ∈ E`.
    pub u_domain: CMatrix,
}

impl PairDefects {
    pub fn compute(pair: &FactorPair, m: usize, ancilla: usize, tol: f64) -> Result<Self> {
        let t = &pair.product;
        let k_m = hereditary_k_inverse(t, m)?;
        let d = psd_sqrt(&k_m, tol).map_err(|e| rename_not_psd(e, format!("K_{m}^-1(T,T*)")))?;
        let d_coords = range_basis(&d, RANK_TOL).adjoint() * &d;

        let coords = |i: u8| -> Result<CMatrix> {
            let sq = factors::pair_defect(pair, m, i)?;
            let g = psd_sqrt(&sq, tol).map_err(|e| rename_not_psd(e, format!("D^2_{{{m},T,T{i}}}")))?;
            Ok(range_basis(&g, RANK_TOL).adjoint() * g)
        };
        let g1 = coords(1)?;
        let g2 = coords(2)?;
        let layout = DefectLayout { ancilla, d1: g1.nrows(), d2: g2.nrows() };
        let dim = t.nrows();
        let stack = |top: CMatrix, bottom: CMatrix| {
            let mut out = zeros(layout.e_dim(), dim);
            out.view_mut((ancilla, 0), (layout.d1, dim)).copy_from(&top);
            out.view_mut((ancilla + layout.d1, 0), (layout.d2, dim)).copy_from(&bottom);
            out
        };
        let v_image = stack(g1.clone(), &g2 * pair.t1.adjoint());
        let u_domain = stack(&g1 * pair.t2.adjoint(), g2.clone());
        Ok(Self { order: m, layout, d_coords, g1, g2, v_image, u_domain })
    }
}

fn rename_not_psd(err: Error, what: String) -> Error {
    match err {
        Error::NotPsd { certificate, .. } => Error::NotPsd { what, certificate },
        other => other,
    }
}

/// Worst violation of `‖h‖² ↦ ‖Ah‖² = ‖Bh‖²` over unit vectors, with the witness.
fn norm_identity_gap(a: &CMatrix, b: &CMatrix) -> Result<(f64, DVector<num_complex::Complex64>)> {
    let diff = a.adjoint() * a - b.adjoint() * b;
    let eig = matcore::hermitian_eig(&matcore::hermitian_part(&diff))?;
    let n = eig.values.len();
    if n == 0 {
        return Ok((0.0, DVector::zeros(0)));
    }
    let (idx, val) =
        if eig.values[0].abs() >= eig.values[n - 1].abs() { (0, eig.values[0]) } else { (n - 1, eig.values[n - 1]) };
    Ok((val.abs(), eig.vectors.column(idx).into_owned()))
}

fn identity_failure(what: &str, gap: f64, witness: DVector<num_complex::Complex64>) -> Error {
    let w: Vec<String> = witness.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
    Error::Precondition(format!("{what} fails by {gap:.3e} at h = [{}]", w.join(", ")))
}

/// The isometry `V: D_{m,T} → E`, as an `e × r_D` matrix.
#[derive(Debug, Clone)]
pub struct SpecialV {
    pub v: CMatrix,
    pub isometry_identity_residual: f64,
    pub isometry_defect: f64,
}

/// Tolerance on the defect-norm identities feeding `V` and `U`.
const NORM_IDENTITY_TOL: f64 = 1e-8;

pub fn special_v(defects: &PairDefects) -> Result<SpecialV> {
    let (gap, witness) = norm_identity_gap(&defects.v_image, &defects.d_coords)?;
    let scale = op_norm(&defects.d_coords).powi(2).max(1.0);
    if gap > NORM_IDENTITY_TOL * scale {
        return Err(identity_failure("‖D_{m,T}h‖² = ‖D₁h‖² + ‖D₂T₁*h‖²", gap, witness));
    }
    let v = &defects.v_image * pinv(&defects.d_coords, RANK_TOL);
    let isometry_defect = matcore::isometry_defect(&v);
    Ok(SpecialV { v, isometry_identity_residual: gap, isometry_defect })
}

pub fn build_special_v(pair: &FactorPair, m: usize, ancilla: usize, tol: f64) -> Result<SpecialV> {
    factors::require_member(pair, m, tol)?;
    special_v(&PairDefects::compute(pair, m, ancilla, tol)?)
}

/// Unitary `U` on `E` with `U(D₂h, D₁T₂*h) = (D₁h, D₂T₁*h)` (in `E` order
/// `ancilla ⊕ D₁ ⊕ D₂`).
#[derive(Debug, Clone)]
pub struct SpecialU {
    pub u: CMatrix,
    pub graph_rank: usize,
    pub defect_norm_residual: f64,
}

pub fn special_u(defects: &PairDefects, tol: f64) -> Result<SpecialU> {
    let (gap, witness) = norm_identity_gap(&defects.u_domain, &defects.v_image)?;
    let scale = op_norm(&defects.v_image).powi(2).max(1.0);
    if gap > NORM_IDENTITY_TOL * scale {
        return Err(identity_failure("‖D₁h‖² + ‖D₂T₁*h‖² = ‖D₂h‖² + ‖D₁T₂*h‖²", gap, witness));
    }
    let e = defects.layout.e_dim();
    let domain = range_basis(&defects.u_domain, RANK_TOL);
    let image = &defects.v_image * pinv(&defects.u_domain, RANK_TOL) * &domain;
    let image_rank = range_basis(&defects.v_image, RANK_TOL).ncols();
    if image_rank != domain.ncols() {
        return Err(Error::Internal(format!(
            "graph subspaces have different dimensions ({} vs {image_rank})",
            domain.ncols()
        )));
    }
    let u = unitary_completion(&domain, &image, e, tol.max(1e-9))?;
    Ok(SpecialU { u, graph_rank: domain.ncols(), defect_norm_residual: gap })
}

pub fn build_special_u(pair: &FactorPair, m: usize, ancilla: usize, tol: f64) -> Result<SpecialU> {
    factors::require_member(pair, m, tol)?;
    special_u(&PairDefects::compute(pair, m, ancilla, tol)?, tol)
}

/// Residual of `U(D₂h, D₁T₂*h) = (D₁h, D₂T₁*h)` over all `h`.
pub fn special_u_residual(defects: &PairDefects, u: &CMatrix) -> f64 {
    op_norm(&(u * &defects.u_domain - &defects.v_image))
}

/// Block colligations `U₁`, `U₂` and their defining-action residuals.
#[derive(Debug, Clone)]
pub struct TransferUnitaries {
    /// On `E ⊕ (ancilla ⊕ D₁)`.
    pub u1: CMatrix,
    /// On `E ⊕ D₂`.
    pub u2: CMatrix,
    pub e_dim: usize,
    pub action_residual_1: f64,
    pub action_residual_2: f64,
}

pub fn transfer_unitaries_from(pair: &FactorPair, defects: &PairDefects, u: &CMatrix) -> Result<TransferUnitaries> {
    let lay = &defects.layout;
    let e = lay.e_dim();
    let a1 = lay.ancilla + lay.d1;
    let p = lay.projection();
    let p_perp = identity(e) - &p;
    let iota1 = lay.iota1();
    let iota2 = lay.iota2();

    let mut u1 = zeros(e + a1, e + a1);
    u1.view_mut((0, 0), (e, e)).copy_from(&(u * &p));
    u1.view_mut((0, e), (e, a1)).copy_from(&(u * &iota1));
    u1.view_mut((e, 0), (a1, e)).copy_from(&iota1.adjoint());

    let u_star = u.adjoint();
    let mut u2 = zeros(e + lay.d2, e + lay.d2);
    u2.view_mut((0, 0), (e, e)).copy_from(&(&p_perp * &u_star));
    u2.view_mut((0, e), (e, lay.d2)).copy_from(&iota2);
    u2.view_mut((e, 0), (lay.d2, e)).copy_from(&(iota2.adjoint() * &u_star));

    let t_star = pair.product.adjoint();
    let dim = pair.dim();
    let l = &defects.v_image;
    let ancilla_pad = |m: CMatrix| {
        let mut out = zeros(a1, dim);
        out.view_mut((lay.ancilla, 0), (lay.d1, dim)).copy_from(&m);
        out
    };
    let stack = |top: &CMatrix, bottom: &CMatrix| {
        let mut out = zeros(top.nrows() + bottom.nrows(), dim);
        out.view_mut((0, 0), top.shape()).copy_from(top);
        out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
        out
    };
    let in1 = stack(l, &ancilla_pad(&defects.g1 * &t_star));
    let out1 = stack(&(l * pair.t1.adjoint()), &ancilla_pad(defects.g1.clone()));
    let in2 = stack(l, &(&defects.g2 * &t_star));
    let out2 = stack(&(l * pair.t2.adjoint()), &defects.g2);
    Ok(TransferUnitaries {
        action_residual_1: op_norm(&(&u1 * in1 - out1)),
        action_residual_2: op_norm(&(&u2 * in2 - out2)),
        u1,
        u2,
        e_dim: e,
    })
}

pub fn transfer_unitaries(pair: &FactorPair, m: usize, ancilla: usize, tol: f64) -> Result<TransferUnitaries> {
    factors::require_member(pair, m, tol)?;
    let defects = PairDefects::compute(pair, m, ancilla, tol)?;
    let su = special_u(&defects, tol)?;
    transfer_unitaries_from(pair, &defects, &su.u)
}

/// Transfer function `A* + z C*B*` of a colligation `[[A, B], [C, 0]]`
/// whose top-left block is `e × e`.
pub fn transfer_pencil(colligation: &CMatrix, e: usize) -> Result<Pencil> {
    matcore::ensure_square(colligation)?;
    let n = colligation.nrows();
    if e > n {
        return Err(Error::DimensionMismatch(format!("state block {e} exceeds colligation size {n}")));
    }
    let a = colligation.view((0, 0), (e, e));
    let b = colligation.view((0, e), (e, n - e));
    let cm = colligation.view((e, 0), (n - e, e));
    Pencil::new(a.adjoint(), cm.adjoint() * b.adjoint())
}

/// `Φ̃ = V*ΦV`, `Ψ̃ = V*ΨV`. No commutativity is implied.
pub fn compressed_symbols(v: &CMatrix, phi: &Pencil, psi: &Pencil) -> Result<(Pencil, Pencil)> {
    if v.nrows() != phi.dim() || v.nrows() != psi.dim() {
        return Err(Error::DimensionMismatch(format!(
            "V maps into dimension {} but pencils act on {} and {}",
            v.nrows(),
            phi.dim(),
            psi.dim()
        )));
    }
    Ok((phi.compress(v), psi.compress(v)))
}

/// Everything built from a factor pair in `F_m`.
#[derive(Debug, Clone)]
pub struct CanonicalFactorization {
    pub defects: PairDefects,
    pub v: SpecialV,
    pub u: SpecialU,
    pub phi: SchurPencil,
    pub psi: SchurPencil,
    pub transfer: TransferUnitaries,
}

pub fn canonical_factorization(
    pair: &FactorPair,
    m: usize,
    ancilla: usize,
    tol: f64,
) -> Result<CanonicalFactorization> {
    let defects = PairDefects::compute(pair, m, ancilla, tol)?;
    let v = special_v(&defects)?;
    let u = special_u(&defects, tol)?;
    let (phi, psi) = canonical_pencils(&u.u, &defects.layout.projection())?;
    let transfer = transfer_unitaries_from(pair, &defects, &u.u)?;
    Ok(CanonicalFactorization { defects, v, u, phi, psi, transfer })
}

/// Named residuals of the factorization theorems for one pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub order: usize,
    pub degree: usize,
    pub tolerance: f64,
    /// Set when the pair is not in `F_m`; no residuals are computed then.
    pub precondition_failed: Option<String>,
    pub pure: bool,
    pub e_dim: usize,
    pub residual_dim: usize,
    pub residuals: BTreeMap<String, f64>,
    /// Coefficientwise `‖Φ̃Ψ̃ - zI‖`; informational, not a pass/fail claim.
    pub compressed_noncommutation: f64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.precondition_failed.is_none() && self.residuals.values().all(|&r| r <= self.tolerance)
    }

    pub fn failures(&self) -> Vec<(&str, f64)> {
        self.residuals.iter().filter(|(_, &r)| r > self.tolerance).map(|(k, &r)| (k.as_str(), r)).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.values().fold(0.0, |a, &b| a.max(b))
    }
}

fn subspace_containment(pi: &CMatrix, image: &CMatrix) -> f64 {
    let coeffs = pinv(pi, RANK_TOL) * image;
    op_norm(&(image - pi * coeffs))
}

/// Builds the dilation of the pair and checks every intertwining,
/// co-invariance and compression identity on degrees `0..degree-1`.
pub fn verify_factorization(pair: &FactorPair, m: usize, degree: usize, tol: f64) -> Result<VerificationReport> {
    verify_factorization_with(pair, m, degree, 0, tol)
}

/// As [`verify_factorization`], with an `ancilla`-dimensional summand in `E`.
pub fn verify_factorization_with(
    pair: &FactorPair,
    m: usize,
    degree: usize,
    ancilla: usize,
    tol: f64,
) -> Result<VerificationReport> {
    let fm = factors::check_fm(pair, m, matcore::DEFAULT_TOL)?;
    let mut report = VerificationReport {
        order: m,
        degree,
        tolerance: tol,
        precondition_failed: None,
        pure: fm.product_hyper.is_pure,
        e_dim: 0,
        residual_dim: 0,
        residuals: BTreeMap::new(),
        compressed_noncommutation: 0.0,
    };
    if !fm.is_member {
        report.precondition_failed = Some(fm.failure_summary());
        return Ok(report);
    }
    let pack = match dilate::general_factor_dilation_with(pair, m, degree, ancilla, matcore::DEFAULT_TOL) {
        Ok(pack) => pack,
        Err(err @ (Error::DimensionMismatch(_) | Error::NonSquare { .. })) => return Err(err),
        Err(err) => {
            report.precondition_failed = Some(err.to_string());
            return Ok(report);
        }
    };
    fill_factorization_residuals(pair, &pack, &mut report)?;
    Ok(report)
}

fn fill_factorization_residuals(pair: &FactorPair, pack: &DilationPack, report: &mut VerificationReport) -> Result<()> {
    let fact = pack.factorization.as_ref().ok_or_else(|| Error::Internal("pack without factorization".into()))?;
    let m = report.order;
    let degree = report.degree;
    let e = fact.defects.layout.e_dim();
    let weights = WeightTable::new(m, degree + 1)?;
    report.e_dim = e;
    report.residual_dim = pack.residual_dim();

    let m_phi = model_operator(&fact.phi.pencil, m, degree, &weights)?.matrix;
    let m_psi = model_operator(&fact.psi.pencil, m, degree, &weights)?.matrix;
    let m_z = model_operator(&Pencil::shift(e), m, degree, &weights)?.matrix;
    let (w1, w2, w) = pack.residual_unitaries();

    let res = &mut report.residuals;
    let pi = pack.combined();
    let t1s = pair.t1.adjoint();
    let t2s = pair.t2.adjoint();

    // (a), (b) come with the pack; (c) joint co-invariance of ran Π on kept rows.
    let kept_pi = kept_rows(&pi, e, degree);
    for (name, model, wi) in [("phi", &m_phi, &w1), ("psi", &m_psi, &w2), ("shift", &m_z, &w)] {
        let img = direct_sum(&model.adjoint(), &wi.adjoint()) * &pi;
        res.insert(format!("coinvariance_{name}"), subspace_containment(&kept_pi, &kept_rows(&img, e, degree)));
    }
    res.insert("isometry".into(), matcore::isometry_defect(&pi));
    res.insert("model_phi_psi_is_shift".into(), op_norm(&(&m_phi * &m_psi - &m_z)));
    res.insert("model_psi_phi_is_shift".into(), op_norm(&(&m_psi * &m_phi - &m_z)));

    // Compressions recover the pair.
    for (name, model, wi, ti) in [
        ("compression_t1", &m_phi, &w1, &pair.t1),
        ("compression_t2", &m_psi, &w2, &pair.t2),
        ("compression_t", &m_z, &w, &pair.product),
    ] {
        let big = direct_sum(model, wi);
        res.insert(name.to_string(), op_norm(&(pi.adjoint() * big * &pi - ti)));
    }

    // (d) compressed symbols on the canonical dilation space of T.
    let v = &fact.v.v;
    let (phi_t, psi_t) = compressed_symbols(v, &fact.phi.pencil, &fact.psi.pencil)?;
    report.compressed_noncommutation = phi_t.product_shift_defect(&psi_t);
    let rd = v.ncols();
    let m_phi_t = model_operator(&phi_t, m, degree, &weights)?.matrix;
    let m_psi_t = model_operator(&psi_t, m, degree, &weights)?.matrix;
    let m_z_d = model_operator(&Pencil::shift(rd), m, degree, &weights)?.matrix;
    let canon = pack.canonical_combined();
    for (name, model, ti) in
        [("compressed_intertwine_phi", &m_phi_t, &t1s), ("compressed_intertwine_psi", &m_psi_t, &t2s)]
    {
        let diff = model.adjoint() * &pack.canonical.pi - &pack.canonical.pi * ti;
        res.insert(name.to_string(), block_rows_residual(&diff, rd, degree));
    }
    let shift_side = canon.adjoint() * direct_sum(&m_z_d, &w) * &canon;
    let phipsi = canon.adjoint() * direct_sum(&(&m_phi_t * &m_psi_t), &w) * &canon;
    let psiphi = canon.adjoint() * direct_sum(&(&m_psi_t * &m_phi_t), &w) * &canon;
    res.insert("compressed_phi_psi".into(), op_norm(&(&shift_side - phipsi)));
    res.insert("compressed_psi_phi".into(), op_norm(&(&shift_side - psiphi)));
    res.insert("compressed_t1".into(), op_norm(&(canon.adjoint() * direct_sum(&m_phi_t, &w1) * &canon - &pair.t1)));
    res.insert("compressed_t2".into(), op_norm(&(canon.adjoint() * direct_sum(&m_psi_t, &w2) * &canon - &pair.t2)));

    // (e) residual unitary part.
    for (k, v) in &pack.residuals {
        res.insert(k.clone(), *v);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{c, from_real_rows};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        a.qr().q()
    }

    fn random_projection(rng: &mut impl Rng, n: usize) -> CMatrix {
        let rank = rng.random_range(0..=n);
        let q = random_unitary(rng, n);
        let cols = q.columns(0, rank);
        cols * cols.adjoint()
    }

    #[test]
    fn diagonal_triple() {
        let p = from_real_rows(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let (phi, psi) = canonical_pencils(&identity(2), &p).unwrap();
        // Φ(z) = diag(1, z), Ψ(z) = diag(z, 1)
        assert_eq!(phi.pencil.coeff0, from_real_rows(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(phi.pencil.coeff1, from_real_rows(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        assert_eq!(psi.pencil.coeff0, from_real_rows(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        assert_eq!(psi.pencil.coeff1, from_real_rows(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(pencil_identities(&phi.pencil, &psi.pencil).max(), 0.0);
    }

    #[test]
    fn zero_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_unitary(&mut rng, 3);
        let (phi, psi) = canonical_pencils(&u, &zeros(3, 3)).unwrap();
        assert!(op_norm(&phi.pencil.coeff0) == 0.0);
        assert!(op_norm(&(&phi.pencil.coeff1 - u.adjoint())) < 1e-15);
        assert!(op_norm(&(&psi.pencil.coeff0 - &u)) < 1e-15);
        assert!(op_norm(&psi.pencil.coeff1) == 0.0);
    }

    #[test]
    fn random_triples_satisfy_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let n = rng.random_range(1..=8);
            let u = random_unitary(&mut rng, n);
            let p = random_projection(&mut rng, n);
            let (phi, psi) = canonical_pencils(&u, &p).unwrap();
            assert!(pencil_identities(&phi.pencil, &psi.pencil).max() < 1e-12);
            assert!(phi.pencil.contraction_identity_residual() < 1e-12);
            assert!(psi.pencil.contraction_identity_residual() < 1e-12);
        }
    }

    #[test]
    fn pencils_reject_bad_triples() {
        let p = from_real_rows(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(canonical_pencils(&identity(2).scale(0.5), &p).is_err());
        assert!(canonical_pencils(&identity(2), &p.scale(0.5)).is_err());
        assert!(canonical_pencils(&identity(2), &identity(3)).is_err());
    }

    #[test]
    fn shift_model_operator_weights() {
        let weights = WeightTable::new(3, 10).unwrap();
        let hardy = model_operator(&Pencil::shift(1), 1, 4, &weights).unwrap();
        for k in 0..4 {
            assert_eq!(hardy.matrix[(k + 1, k)], c(1.0, 0.0));
        }
        let berg = model_operator(&Pencil::shift(1), 2, 3, &weights).unwrap();
        let expected = crate::hyper::bergman_shift(2, 3, &weights).unwrap();
        assert!(op_norm(&(berg.matrix - expected)) == 0.0);
    }

    #[test]
    fn model_product_is_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let weights = WeightTable::new(3, 20).unwrap();
        for m in 1..=3 {
            let u = random_unitary(&mut rng, 3);
            let p = random_projection(&mut rng, 3);
            let (phi, psi) = canonical_pencils(&u, &p).unwrap();
            let a = model_operator(&phi.pencil, m, 6, &weights).unwrap().matrix;
            let b = model_operator(&psi.pencil, m, 6, &weights).unwrap().matrix;
            let z = model_operator(&Pencil::shift(3), m, 6, &weights).unwrap().matrix;
            assert!(op_norm(&(&a * &b - &z)) < 1e-12);
            assert!(op_norm(&(&b * &a - &z)) < 1e-12);
        }
    }

    #[test]
    fn transfer_pencil_of_block_permutation() {
        // [[0, 1], [1, 0]] with 1-dim state: Φ(z) = 0 + z·1.
        let u = from_real_rows(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = transfer_pencil(&u, 1).unwrap();
        assert_eq!(p.coeff0[(0, 0)], c(0.0, 0.0));
        assert_eq!(p.coeff1[(0, 0)], c(1.0, 0.0));
    }

    #[test]
    fn compressed_symbols_identity_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_unitary(&mut rng, 3);
        let p = random_projection(&mut rng, 3);
        let (phi, psi) = canonical_pencils(&u, &p).unwrap();
        let (pt, st) = compressed_symbols(&identity(3), &phi.pencil, &psi.pencil).unwrap();
        assert_eq!(pt, phi.pencil);
        assert_eq!(st, psi.pencil);
        assert!(compressed_symbols(&identity(2), &phi.pencil, &psi.pencil).is_err());
    }

    #[test]
    fn transfer_pencils_match_canonical() {
        for seed in 0..5 {
            let pair = factors::generate_fm_pair(seed, 2, 2, 3).unwrap();
            let fact = canonical_factorization(&pair, 2, 1, 1e-9).unwrap();
            let e = fact.transfer.e_dim;
            let phi = transfer_pencil(&fact.transfer.u1, e).unwrap();
            let psi = transfer_pencil(&fact.transfer.u2, e).unwrap();
            assert!(op_norm(&(phi.coeff0 - &fact.phi.pencil.coeff0)) < 1e-10);
            assert!(op_norm(&(phi.coeff1 - &fact.phi.pencil.coeff1)) < 1e-10);
            assert!(op_norm(&(psi.coeff0 - &fact.psi.pencil.coeff0)) < 1e-10);
            assert!(op_norm(&(psi.coeff1 - &fact.psi.pencil.coeff1)) < 1e-10);
            assert!(fact.transfer.action_residual_1 < 1e-10);
            assert!(fact.transfer.action_residual_2 < 1e-10);
            assert!(matcore::isometry_defect(&fact.transfer.u1) < 1e-10);
            assert!(matcore::isometry_defect(&fact.transfer.u2) < 1e-10);
            assert!(special_u_residual(&fact.defects, &fact.u.u) < 1e-10);
            assert!(fact.v.isometry_defect < 1e-10);
        }
    }

    #[test]
    fn verification_on_pure_members() {
        for m in 1..=3 {
            let pair = factors::generate_fm_pair(40 + m as u64, 2, m, 3).unwrap();
            let report = verify_factorization(&pair, m, dilate::default_degree(pair.dim()), 1e-7).unwrap();
            assert!(report.pure);
            assert!(report.passed(), "{:?}", report.failures());
        }
    }

    #[test]
    fn verification_on_mixed_member() {
        let pair = factors::generate_fm_pair_mixed(21, 2, 2, 3, 1).unwrap();
        let report = verify_factorization(&pair, 2, 40, 1e-7).unwrap();
        assert!(!report.pure);
        assert_eq!(report.residual_dim, 1);
        assert!(report.passed(), "{:?}", report.failures());
    }

    #[test]
    fn compressed_symbols_need_not_commute() {
        let pair = factors::szego_counterexample(0.5, 0.6, 0.0).unwrap().pair;
        for ancilla in [0, 2] {
            let report = verify_factorization_with(&pair, 2, 8, ancilla, 1e-7).unwrap();
            assert!(report.passed(), "{:?}", report.failures());
            assert_eq!(report.e_dim, 4 + ancilla);
            assert!(report.compressed_noncommutation > 0.1);
        }
    }

    #[test]
    fn verification_rejects_non_member() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let ex = factors::szego_counterexample(h, h, 0.5).unwrap();
        let report = verify_factorization(&ex.pair, 2, 8, 1e-7).unwrap();
        assert!(report.precondition_failed.is_some());
        assert!(!report.passed());
        assert!(build_special_v(&ex.pair, 2, 0, 1e-9).is_err());
    }
}
