//! Truncated dilations into `A²_m(D) ⊕ R`.
//!
//! Every model operator acts on degrees `0..=N`. Adjoints of the shifts pull
//! data from degree `N+1`, which the truncation drops, so intertwining
//! residuals are measured on block rows `0..N-1` only.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::factors::{self, FactorPair};
use crate::hyper::{self, FSequence};
use crate::matcore::{self, douglas_solve, hermitian_eig, identity, op_norm, require_psd, zeros, CMatrix, RANK_TOL};
use crate::schur::{self, model_operator, CanonicalFactorization, Pencil};
use crate::weights::WeightTable;

/// Eigenvalues of `Q²` at or below this are treated as zero.
pub const Q_RANK_TOL: f64 = 1e-9;
/// Convergence tolerance of the `f_r` iteration used for `Q²`.
pub const Q_CONV_TOL: f64 = 1e-13;
/// Tolerance on the unitary and product claims for `X`, `X_i`.
pub const CLAIM_TOL: f64 = 1e-8;

/// `Π_{m,T}` on degrees `0..=degree`, defect coordinates in a range basis.
#[derive(Debug, Clone)]
pub struct TruncatedDilation {
    pub pi: CMatrix,
    pub degree: usize,
    pub order: usize,
    pub defect_dim: usize,
    pub isometry_defect: f64,
}

/// Degree used when none is given.
pub fn default_degree(dim: usize) -> usize {
    (4 * dim).max(1)
}

/// Block row `k` is `√w_{m,k} · D_{m,T} · T*^k`.
pub fn canonical_pi(
    t: &CMatrix,
    m: usize,
    degree: usize,
    weights: &WeightTable,
    tol: f64,
) -> Result<TruncatedDilation> {
    weights.get(m, degree + 1)?;
    let report = hyper::classify(t, m, tol)?;
    if !report.is_hypercontraction(m) {
        let bad = if report.order_positive(1) { m } else { 1 };
        return Err(Error::NotPsd {
            what: format!("K_{bad}^-1(T,T*)"),
            certificate: Box::new(report.certificate(bad).cloned().expect("order checked")),
        });
    }
    let (d, basis) = hyper::defect(t, m, tol)?;
    let dc = basis.adjoint() * d;
    let r = dc.nrows();
    let n = t.nrows();
    let mut pi = zeros((degree + 1) * r, n);
    let t_star = t.adjoint();
    let mut block = dc;
    for k in 0..=degree {
        let w = weights.get_f64(m, k)?.sqrt();
        pi.view_mut((k * r, 0), (r, n)).copy_from(&block.scale(w));
        block = &block * &t_star;
    }
    let isometry_defect = op_norm(&tail(t, m, degree + 1, weights)?);
    Ok(TruncatedDilation { pi, degree, order: m, defect_dim: r, isometry_defect })
}

/// `f_r⁽ᵐ⁾(T,T*) = T^r (I + Σ_{j=2..m} w_{j,r-1} K_{j-1}⁻¹(T,T*)) T*^r`, for `r >= 1`.
///
/// Equal to `I - Π*Π` for `Π` truncated at degree `r - 1`, but free of the
/// cancellation in that subtraction.
pub fn tail(t: &CMatrix, m: usize, r: usize, weights: &WeightTable) -> Result<CMatrix> {
    if r == 0 {
        return Err(Error::InvalidArgument("tail index must be >= 1".into()));
    }
    let n = t.nrows();
    let mut middle = identity(n);
    for j in 2..=m {
        middle += hyper::hereditary_k_inverse(t, j - 1)?.scale(weights.get_f64(j, r - 1)?);
    }
    let tr = t.pow(r as u32);
    Ok(matcore::hermitian_part(&(&tr * middle * tr.adjoint())))
}

/// Norm of the first `degree` block rows of `diff`.
pub fn block_rows_residual(diff: &CMatrix, block: usize, degree: usize) -> f64 {
    op_norm(&diff.rows(0, degree * block).into_owned())
}

/// `‖(M_z* Π - Π T*)‖` over block rows `0..N-1`.
pub fn intertwine_residual(dil: &TruncatedDilation, t: &CMatrix) -> Result<f64> {
    if t.nrows() != dil.pi.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "dilation acts on dimension {} but T has {}",
            dil.pi.ncols(),
            t.nrows()
        )));
    }
    let weights = WeightTable::new(dil.order, dil.degree + 1)?;
    let mz = model_operator(&Pencil::shift(dil.defect_dim), dil.order, dil.degree, &weights)?.matrix;
    let diff = mz.adjoint() * &dil.pi - &dil.pi * t.adjoint();
    Ok(block_rows_residual(&diff, dil.defect_dim, dil.degree))
}

/// Smallest `N` with `‖f_{N+1} - f_{N+2}‖ < target` and the increments no
/// longer growing, capped at `max_degree`.
pub fn degree_for_tail(t: &CMatrix, m: usize, target: f64, max_degree: usize) -> Result<usize> {
    let weights = WeightTable::new(m, max_degree + 2)?;
    let mut seq = FSequence::new(t, m, &weights)?;
    let mut prev = f64::INFINITY;
    while seq.r <= max_degree + 1 {
        seq.advance()?;
        let step = op_norm(&seq.last_step);
        if step < target && step <= prev {
            return Ok(seq.r.saturating_sub(1).max(1));
        }
        prev = step;
    }
    Ok(max_degree)
}

/// Residual part `Q` of a dilation, in a range basis of `Q`.
#[derive(Debug, Clone)]
pub struct ResidualPart {
    /// `Q` after discarding eigenvalues of `Q²` below [`Q_RANK_TOL`].
    pub q: CMatrix,
    pub basis: CMatrix,
    /// `B_Q* Q`, an `r × d` matrix.
    pub coords: CMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub fixed_point_residual: f64,
}

impl ResidualPart {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn compute(t: &CMatrix, m: usize, tol: f64) -> Result<Self> {
        let lim = hyper::q_limit_with_tol(t, m, Q_CONV_TOL, hyper::DEFAULT_R_MAX, tol)?;
        let eig = hermitian_eig(&lim.q_squared)?;
        let n = t.nrows();
        let keep: Vec<usize> = (0..n).filter(|&j| eig.values[j] > Q_RANK_TOL).collect();
        let mut basis = zeros(n, keep.len());
        let mut coords = zeros(keep.len(), n);
        for (col, &j) in keep.iter().enumerate() {
            let v = eig.vectors.column(j);
            basis.set_column(col, &v);
            coords.set_row(col, &v.adjoint().scale(eig.values[j].sqrt()));
        }
        let q = &basis * &coords;
        let q2 = &q * &q;
        let fixed_point_residual = op_norm(&(t * &q2 * t.adjoint() - &q2));
        Ok(Self { q, basis, coords, iterations: lim.iterations, converged: lim.converged, fixed_point_residual })
    }

    /// `W*` in range coordinates from the Douglas solution of `X*Q = QT_i*`.
    /// Fails naming the claim when `Q² >= T_i Q² T_i*` or the solve breaks.
    fn adjoint_unitary(&self, ti: &CMatrix, name: &str, tol: f64) -> Result<(CMatrix, f64)> {
        let q2 = &self.q * &self.q;
        let gap = &q2 - ti * &q2 * ti.adjoint();
        require_psd(&gap, tol, &format!("Q^2 - {name} Q^2 {name}*"))
            .map_err(|e| claim(&format!("Q^2 >= {name} Q^2 {name}*"), e))?;
        let cmat =
            douglas_solve(&(ti * &self.q), &self.q, tol).map_err(|e| claim(&format!("Douglas solve for {name}"), e))?;
        let x_star = cmat.adjoint();
        let residual = op_norm(&(&x_star * &self.q - &self.q * ti.adjoint()));
        Ok((self.basis.adjoint() * x_star * &self.basis, residual))
    }
}

fn claim(what: &str, err: Error) -> Error {
    Error::Precondition(format!("claim {what} failed: {err}"))
}

fn unitary_defect(w: &CMatrix) -> f64 {
    let n = w.nrows();
    matcore::isometry_defect(w).max(op_norm(&(w * w.adjoint() - identity(n))))
}

/// `Π h = (Π_V h, Q h)` with the unitary data on `R = ran Q`.
#[derive(Debug, Clone)]
pub struct DilationPack {
    pub canonical: TruncatedDilation,
    /// Isometry from the defect space of `T` into the model coefficient space.
    pub embedding: CMatrix,
    /// `(I ⊗ V) Π_{m,T}`.
    pub pi_v: CMatrix,
    pub residual: ResidualPart,
    /// Unitaries on `R` in range coordinates.
    pub w: CMatrix,
    pub w1: Option<CMatrix>,
    pub w2: Option<CMatrix>,
    pub residuals: BTreeMap<String, f64>,
    pub factorization: Option<CanonicalFactorization>,
}

fn stack(top: &CMatrix, bottom: &CMatrix) -> CMatrix {
    let mut out = zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

pub fn direct_sum(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

impl DilationPack {
    pub fn degree(&self) -> usize {
        self.canonical.degree
    }

    pub fn residual_dim(&self) -> usize {
        self.residual.dim()
    }

    pub fn block_dim(&self) -> usize {
        self.embedding.nrows()
    }

    /// `[Π_V; Q]` stacked.
    pub fn combined(&self) -> CMatrix {
        stack(&self.pi_v, &self.residual.coords)
    }

    /// `[Π_{m,T}; Q]`, without the embedding.
    pub fn canonical_combined(&self) -> CMatrix {
        stack(&self.canonical.pi, &self.residual.coords)
    }

    /// `(W1, W2, W)`; for a single operator all three are `W`.
    pub fn residual_unitaries(&self) -> (CMatrix, CMatrix, CMatrix) {
        (
            self.w1.clone().unwrap_or_else(|| self.w.clone()),
            self.w2.clone().unwrap_or_else(|| self.w.clone()),
            self.w.clone(),
        )
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.values().fold(0.0, |a, &b| a.max(b))
    }
}

/// `‖((M ⊕ W)* Π - Π T*)‖` over kept rows: Bergman blocks `0..N-1` and all of `R`.
pub fn stacked_intertwining(
    model: &CMatrix,
    w: &CMatrix,
    pi: &CMatrix,
    t: &CMatrix,
    block: usize,
    degree: usize,
) -> f64 {
    let big = direct_sum(&model.adjoint(), &w.adjoint());
    let diff = big * pi - pi * t.adjoint();
    kept_rows_norm(&diff, block, degree)
}

pub(crate) fn kept_rows(m: &CMatrix, block: usize, degree: usize) -> CMatrix {
    let head = degree * block;
    let tail_start = (degree + 1) * block;
    let tail = m.nrows() - tail_start;
    let mut out = zeros(head + tail, m.ncols());
    out.view_mut((0, 0), (head, m.ncols())).copy_from(&m.rows(0, head));
    out.view_mut((head, 0), (tail, m.ncols())).copy_from(&m.rows(tail_start, tail));
    out
}

fn kept_rows_norm(m: &CMatrix, block: usize, degree: usize) -> f64 {
    op_norm(&kept_rows(m, block, degree))
}

fn common_residuals(pack: &mut DilationPack, t: &CMatrix, shift: &CMatrix, tol_w: f64) -> Result<()> {
    let pi = pack.combined();
    let e = pack.block_dim();
    let degree = pack.degree();
    let w = pack.w.clone();
    let res = &mut pack.residuals;
    res.insert("isometry".into(), matcore::isometry_defect(&pi));
    res.insert("intertwine_shift".into(), stacked_intertwining(shift, &w, &pi, t, e, degree));
    res.insert("compression_t".into(), op_norm(&(pi.adjoint() * direct_sum(shift, &w) * &pi - t)));
    res.insert("q_fixed_point".into(), pack.residual.fixed_point_residual);
    let uw = unitary_defect(&w);
    if uw > tol_w {
        return Err(Error::Precondition(format!("claim X* unitary on ran Q failed (defect {uw:.3e})")));
    }
    res.insert("unitary_w".into(), uw);
    Ok(())
}

/// `Π h = (Π_{m,T} h, Q h)` with `W` solving `W* Q = Q T*` on `ran Q`.
pub fn douglas_dilation(t: &CMatrix, m: usize, degree: usize, tol: f64) -> Result<DilationPack> {
    let weights = WeightTable::new(m, degree + 1)?;
    let canonical = canonical_pi(t, m, degree, &weights, tol)?;
    let residual = ResidualPart::compute(t, m, tol)?;
    let (w_star, x_res) = residual.adjoint_unitary(t, "T", tol)?;
    let mut pack = DilationPack {
        embedding: identity(canonical.defect_dim),
        pi_v: canonical.pi.clone(),
        canonical,
        residual,
        w: w_star.adjoint(),
        w1: None,
        w2: None,
        residuals: BTreeMap::new(),
        factorization: None,
    };
    pack.residuals.insert("douglas_x".into(), x_res);
    let shift = model_operator(&Pencil::shift(pack.block_dim()), m, degree, &weights)?.matrix;
    common_residuals(&mut pack, t, &shift, CLAIM_TOL)?;
    Ok(pack)
}

/// Dilation of a member of `F_m` through the special isometry `V`, with
/// unitaries `W1`, `W2`, `W = W1 W2` on the residual space.
pub fn general_factor_dilation(pair: &FactorPair, m: usize, degree: usize, tol: f64) -> Result<DilationPack> {
    general_factor_dilation_with(pair, m, degree, 0, tol)
}

/// As [`general_factor_dilation`], with an `ancilla`-dimensional summand in
/// the coefficient space `E`.
pub fn general_factor_dilation_with(
    pair: &FactorPair,
    m: usize,
    degree: usize,
    ancilla: usize,
    tol: f64,
) -> Result<DilationPack> {
    factors::require_member(pair, m, tol)?;
    let t = &pair.product;
    let weights = WeightTable::new(m, degree + 1)?;
    let canonical = canonical_pi(t, m, degree, &weights, tol)?;
    let fact = schur::canonical_factorization(pair, m, ancilla, tol)?;
    let v = fact.v.v.clone();
    let rd = canonical.defect_dim;
    if v.ncols() != rd {
        return Err(Error::Internal(format!("V has {} columns, defect space has dimension {rd}", v.ncols())));
    }
    let e = v.nrows();
    let mut pi_v = zeros((degree + 1) * e, t.ncols());
    for k in 0..=degree {
        let blk = &v * canonical.pi.rows(k * rd, rd);
        pi_v.view_mut((k * e, 0), (e, t.ncols())).copy_from(&blk);
    }
    let residual = ResidualPart::compute(t, m, tol)?;
    let (w1s, x1) = residual.adjoint_unitary(&pair.t1, "T1", tol)?;
    let (w2s, x2) = residual.adjoint_unitary(&pair.t2, "T2", tol)?;
    let (ws, x) = residual.adjoint_unitary(t, "T", tol)?;
    for (name, wi) in [("X1*", &w1s), ("X2*", &w2s)] {
        let d = unitary_defect(wi);
        if d > CLAIM_TOL {
            return Err(Error::Precondition(format!("claim {name} unitary on ran Q failed (defect {d:.3e})")));
        }
    }
    let p12 = op_norm(&(&w1s * &w2s - &ws));
    let p21 = op_norm(&(&w2s * &w1s - &ws));
    if p12.max(p21) > CLAIM_TOL {
        return Err(Error::Precondition(format!(
            "claim X* = X1* X2* = X2* X1* failed (residuals {p12:.3e}, {p21:.3e})"
        )));
    }
    let mut pack = DilationPack {
        canonical,
        embedding: v.clone(),
        pi_v,
        residual,
        w: ws.adjoint(),
        w1: Some(w1s.adjoint()),
        w2: Some(w2s.adjoint()),
        residuals: BTreeMap::new(),
        factorization: None,
    };
    {
        let res = &mut pack.residuals;
        res.insert("douglas_x".into(), x);
        res.insert("douglas_x1".into(), x1);
        res.insert("douglas_x2".into(), x2);
        res.insert("w_product_12".into(), p12);
        res.insert("w_product_21".into(), p21);
        res.insert("unitary_w1".into(), unitary_defect(&w1s));
        res.insert("unitary_w2".into(), unitary_defect(&w2s));
        res.insert("isometry_v".into(), fact.v.isometry_defect);
    }
    let shift = model_operator(&Pencil::shift(e), m, degree, &weights)?.matrix;
    common_residuals(&mut pack, t, &shift, CLAIM_TOL)?;
    let pi = pack.combined();
    let m_phi = model_operator(&fact.phi.pencil, m, degree, &weights)?.matrix;
    let m_psi = model_operator(&fact.psi.pencil, m, degree, &weights)?.matrix;
    let (w1, w2, _) = pack.residual_unitaries();
    pack.residuals.insert("intertwine_phi".into(), stacked_intertwining(&m_phi, &w1, &pi, &pair.t1, e, degree));
    pack.residuals.insert("intertwine_psi".into(), stacked_intertwining(&m_psi, &w2, &pi, &pair.t2, e, degree));
    pack.factorization = Some(fact);
    Ok(pack)
}

/// `‖h‖² - ‖Π_N h‖²` as an operator, i.e. `I - Π_N*Π_N`, via [`tail`].
pub fn norm_gap(t: &CMatrix, dil: &TruncatedDilation) -> Result<CMatrix> {
    let weights = WeightTable::new(dil.order, dil.degree + 1)?;
    tail(t, dil.order, dil.degree + 1, &weights)
}

/// Rank of `Q` as used by the dilation (shared rank threshold on `Q²`).
pub fn residual_rank(q_squared: &CMatrix) -> usize {
    matcore::numerical_rank(q_squared, RANK_TOL.max(Q_RANK_TOL))
}
