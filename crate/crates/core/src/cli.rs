//! Command-line front end: matrix files, reports and the subcommands of the
//! `hyperfact` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dilate::{self, direct_sum};
use crate::error::Error;
use crate::factors::{self, FactorPair};
use crate::hyper;
use crate::matcore::{self, c, op_norm, psd_check, CMatrix, PsdCertificate};
use crate::schur::{self, model_operator, Pencil};
use crate::weights::WeightTable;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const MATRIX_FORMAT: u32 = 1;

/// On-disk matrix: `{"format": 1, "rows", "cols", "data": [[re, im], ...]}`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub format: u32,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixFile {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                data.push([z.re, z.im]);
            }
        }
        Self { format: MATRIX_FORMAT, rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self) -> Result<CMatrix, CliError> {
        if self.format != MATRIX_FORMAT {
            return Err(CliError::input(format!("field `format`: expected {MATRIX_FORMAT}, found {}", self.format)));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(CliError::input("fields `rows`/`cols` must be positive"));
        }
        if self.data.len() != self.rows * self.cols {
            return Err(CliError::input(format!(
                "field `data`: expected rows*cols = {} entries, found {}",
                self.rows * self.cols,
                self.data.len()
            )));
        }
        if let Some((idx, _)) = self.data.iter().enumerate().find(|(_, p)| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(CliError::input(format!("field `data[{idx}]`: entry is not finite")));
        }
        Ok(CMatrix::from_fn(self.rows, self.cols, |i, j| {
            let p = self.data[i * self.cols + j];
            c(p[0], p[1])
        }))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("matrix file serializes");
        s.push('\n');
        s
    }
}

pub fn parse_matrix(text: &str) -> Result<CMatrix, CliError> {
    let file: MatrixFile = serde_json::from_str(text)
        .map_err(|e| CliError::input(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    file.to_matrix()
}

pub fn read_matrix(path: &Path) -> Result<(CMatrix, InputDigest), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let m = parse_matrix(text).map_err(|e| CliError::input(format!("{}: {}", path.display(), e.message)))?;
    let digest = InputDigest { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) };
    Ok((m, digest))
}

pub fn write_matrix(path: &Path, m: &CMatrix) -> Result<(), CliError> {
    fs::write(path, MatrixFile::from_matrix(m).to_json())
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        Self { code: exit_code(&err), message: err.to_string() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

/// Exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else if matches!(err, Error::NotPsd { .. } | Error::NonIsometric { .. }) {
        EXIT_NEGATIVE
    } else {
        EXIT_INPUT
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Claim {
    pub name: String,
    /// The identity or inequality being checked.
    pub reference: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<PsdCertificate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDocument {
    pub command: Vec<String>,
    pub inputs: Vec<InputDigest>,
    pub claims: Vec<Claim>,
    pub summary: Vec<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub matrices: BTreeMap<String, MatrixFile>,
    pub exit_status: i32,
}

impl ReportDocument {
    fn new(command: Vec<String>) -> Self {
        Self {
            command,
            inputs: Vec::new(),
            claims: Vec::new(),
            summary: Vec::new(),
            matrices: BTreeMap::new(),
            exit_status: 0,
        }
    }

    fn residual(&mut self, name: &str, reference: &str, residual: f64, tolerance: f64) {
        let verdict = if residual <= tolerance { Verdict::Pass } else { Verdict::Fail };
        self.claims.push(Claim {
            name: name.into(),
            reference: reference.into(),
            verdict,
            residual: Some(residual),
            tolerance: Some(tolerance),
            certificate: None,
        });
    }

    fn certificate(&mut self, name: &str, reference: &str, cert: PsdCertificate, expect_psd: bool) {
        let verdict = if cert.is_psd == expect_psd { Verdict::Pass } else { Verdict::Fail };
        self.claims.push(Claim {
            name: name.into(),
            reference: reference.into(),
            verdict,
            residual: None,
            tolerance: Some(cert.tolerance_used),
            certificate: Some(cert),
        });
    }

    fn flag(&mut self, name: &str, reference: &str, holds: bool) {
        self.claims.push(Claim {
            name: name.into(),
            reference: reference.into(),
            verdict: if holds { Verdict::Pass } else { Verdict::Fail },
            residual: None,
            tolerance: None,
            certificate: None,
        });
    }

    fn finish(mut self) -> Self {
        self.exit_status = if self.passed() { EXIT_PASS } else { EXIT_NEGATIVE };
        self
    }

    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.verdict == Verdict::Pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command: {}", self.command.join(" "));
        for d in &self.inputs {
            let _ = writeln!(out, "input: {} sha256={}", d.path, d.sha256);
        }
        for claim in &self.claims {
            let tag = match claim.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
            };
            let mut line = format!("[{tag}] {}: {}", claim.name, claim.reference);
            if let Some(r) = claim.residual {
                let _ = write!(line, " (residual {r:.3e}");
                if let Some(t) = claim.tolerance {
                    let _ = write!(line, ", tol {t:.1e}");
                }
                line.push(')');
            }
            if let Some(cert) = &claim.certificate {
                let _ = write!(line, " (min eigenvalue {:.6e}", cert.min_eigenvalue);
                if !cert.is_psd {
                    let w: Vec<String> = cert.witness.iter().map(|p| format!("{:.6}{:+.6}i", p[0], p[1])).collect();
                    let _ = write!(line, ", witness [{}]", w.join(", "));
                }
                line.push(')');
            }
            let _ = writeln!(out, "{line}");
        }
        for (name, m) in &self.matrices {
            let _ = writeln!(out, "{name} ({}x{}):", m.rows, m.cols);
            for i in 0..m.rows {
                let row: Vec<String> = (0..m.cols)
                    .map(|j| {
                        let p = m.data[i * m.cols + j];
                        if p[1] == 0.0 {
                            format!("{:>12.9}", p[0])
                        } else {
                            format!("{:.9}{:+.9}i", p[0], p[1])
                        }
                    })
                    .collect();
                let _ = writeln!(out, "  [{}]", row.join(", "));
            }
        }
        for s in &self.summary {
            let _ = writeln!(out, "{s}");
        }
        let _ = writeln!(out, "exit status: {}", self.exit_status);
        out
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hyperfact",
    version,
    about = "Classify m-hypercontractions, test F_m membership, build and verify dilations"
)]
pub struct Cli {
    /// Emit the report as JSON.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct TolArg {
    /// Positivity tolerance (relative to max(1, ‖M‖)).
    #[arg(long, env = "HYPERFACT_TOL", default_value_t = matcore::DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Positivity of K_n^-1(T,T*) for n = 1..m-max, contractivity and purity.
    Classify {
        matrix: PathBuf,
        /// Order that decides the exit status.
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Highest order to check (defaults to --m).
        #[arg(long)]
        m_max: Option<usize>,
        #[command(flatten)]
        tol: TolArg,
    },
    /// Membership of a commuting pair in F_m.
    CheckFm {
        t1: PathBuf,
        t2: PathBuf,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[command(flatten)]
        tol: TolArg,
    },
    /// Douglas-type dilation of an m-hypercontraction.
    Dilate {
        matrix: PathBuf,
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Truncation degree N (defaults to 4 * dim).
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long, default_value_t = 1e-7)]
        residual_tol: f64,
        #[command(flatten)]
        tol: TolArg,
        /// Directory for pi.json, q.json, q_basis.json and w.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recomputes dilation residuals from files written by `dilate --out`.
    VerifyDilation {
        matrix: PathBuf,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 1e-7)]
        residual_tol: f64,
    },
    /// Canonical Schur factorization of an F_m pair, with every residual.
    Factorize {
        t1: PathBuf,
        t2: PathBuf,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long, default_value_t = 1e-7)]
        residual_tol: f64,
        /// Extra dimensions added to the coefficient space E.
        #[arg(long, default_value_t = 0)]
        ancilla: usize,
        #[command(flatten)]
        tol: TolArg,
    },
    /// Random member of F_m, written as t1.json and t2.json.
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        base_dim: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        /// Size of a diagonal unitary summand (0 keeps the product pure).
        #[arg(long, default_value_t = 0)]
        unitary_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// The 2x2 pair (T_r S^-1, S) whose product is a 2-hypercontraction.
    Counterexample {
        #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
        r: f64,
        #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
        a: f64,
        #[arg(long, default_value_t = 0.5)]
        b: f64,
        #[command(flatten)]
        tol: TolArg,
    },
}

fn check_tol(tol: f64) -> Result<f64, CliError> {
    if tol.is_finite() && tol > 0.0 {
        Ok(tol)
    } else {
        Err(CliError::input(format!("tolerance must be a positive number, got {tol}")))
    }
}

fn check_order(m: usize) -> Result<usize, CliError> {
    if m == 0 {
        Err(CliError::input("order --m must be >= 1"))
    } else {
        Ok(m)
    }
}

/// Runs a parsed command. `argv` is echoed into the report.
pub fn run(cli: &Cli, argv: Vec<String>) -> Result<ReportDocument, CliError> {
    let mut doc = ReportDocument::new(argv);
    match &cli.command {
        Command::Classify { matrix, m, m_max, tol } => {
            let tol = check_tol(tol.tol)?;
            let m = check_order(*m)?;
            let m_max = m_max.unwrap_or(m).max(m);
            let (t, digest) = read_matrix(matrix)?;
            doc.inputs.push(digest);
            classify_claims(&mut doc, &t, m, m_max, tol)?;
        }
        Command::CheckFm { t1, t2, m, tol } => {
            let tol = check_tol(tol.tol)?;
            let m = check_order(*m)?;
            let pair = read_pair(&mut doc, t1, t2, tol)?;
            fm_claims(&mut doc, &pair, m, tol)?;
        }
        Command::Dilate { matrix, m, degree, residual_tol, tol, out } => {
            let tol = check_tol(tol.tol)?;
            let rtol = check_tol(*residual_tol)?;
            let m = check_order(*m)?;
            let (t, digest) = read_matrix(matrix)?;
            doc.inputs.push(digest);
            matcore::ensure_square(&t)?;
            let degree = degree.unwrap_or_else(|| dilate::default_degree(t.nrows()));
            let pack = dilate::douglas_dilation(&t, m, degree, tol)?;
            let files = DilationFiles {
                pi: pack.pi_v.clone(),
                q: pack.residual.q.clone(),
                q_basis: pack.residual.basis.clone(),
                w: pack.w.clone(),
            };
            doc.residual("douglas", "X* Q = Q T*", pack.residuals["douglas_x"], 1e-8);
            doc.residual("q_fixed_point", "T Q² T* = Q²", pack.residual.fixed_point_residual, rtol);
            dilation_claims(&mut doc, &t, m, &files, rtol)?;
            doc.summary.push(format!("degree N: {degree}"));
            doc.summary.push(format!("defect dimension: {}", pack.canonical.defect_dim));
            doc.summary.push(format!("residual dimension (rank Q): {}", pack.residual_dim()));
            doc.summary.push(format!("isometry_defect of Pi_N: {:.6e}", pack.canonical.isometry_defect));
            if pack.residual_dim() > 0 {
                doc.matrices.insert("q".into(), MatrixFile::from_matrix(&files.q));
                doc.matrices.insert("w".into(), MatrixFile::from_matrix(&files.w));
            }
            if let Some(dir) = out {
                files.write(dir)?;
                doc.summary.push(format!("wrote dilation files to {}", dir.display()));
            }
        }
        Command::VerifyDilation { matrix, dir, m, residual_tol } => {
            let rtol = check_tol(*residual_tol)?;
            let m = check_order(*m)?;
            let (t, digest) = read_matrix(matrix)?;
            doc.inputs.push(digest);
            let files = DilationFiles::read(dir, t.nrows(), &mut doc.inputs)?;
            dilation_claims(&mut doc, &t, m, &files, rtol)?;
        }
        Command::Factorize { t1, t2, m, degree, residual_tol, ancilla, tol } => {
            let tol = check_tol(tol.tol)?;
            let rtol = check_tol(*residual_tol)?;
            let m = check_order(*m)?;
            let pair = read_pair(&mut doc, t1, t2, tol)?;
            let degree = degree.unwrap_or_else(|| dilate::default_degree(pair.dim()));
            let report = schur::verify_factorization_with(&pair, m, degree, *ancilla, rtol)?;
            match &report.precondition_failed {
                Some(msg) => {
                    doc.flag("fm_membership", &format!("(T1, T2) in F_{m}"), false);
                    doc.summary.push(format!("precondition failed: {msg}"));
                }
                None => {
                    doc.flag("fm_membership", &format!("(T1, T2) in F_{m}"), true);
                    for (name, value) in &report.residuals {
                        doc.residual(name, residual_reference(name), *value, rtol);
                    }
                    doc.summary.push(format!("pure product: {}", yes_no(report.pure)));
                    doc.summary
                        .push(format!("dim E: {}, rank Q: {}, degree N: {degree}", report.e_dim, report.residual_dim));
                    doc.summary.push(format!(
                        "compressed symbols: ‖Φ̃Ψ̃ - z‖ = {:.6e} ({})",
                        report.compressed_noncommutation,
                        if report.compressed_noncommutation > rtol { "do not multiply to z" } else { "multiply to z" }
                    ));
                }
            }
        }
        Command::Generate { seed, base_dim, m, degree, unitary_dim, out } => {
            let m = check_order(*m)?;
            if *base_dim == 0 || *degree == 0 {
                return Err(CliError::input("--base-dim and --degree must be >= 1"));
            }
            let pair = if *unitary_dim == 0 {
                factors::generate_fm_pair(*seed, *base_dim, m, *degree)?
            } else {
                factors::generate_fm_pair_mixed(*seed, *base_dim, m, *degree, *unitary_dim)?
            };
            fs::create_dir_all(out).map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
            write_matrix(&out.join("t1.json"), &pair.t1)?;
            write_matrix(&out.join("t2.json"), &pair.t2)?;
            let fm = factors::check_fm(&pair, m, matcore::DEFAULT_TOL)?;
            doc.flag("fm_membership", &format!("generated pair in F_{m}"), fm.is_member);
            doc.residual("commutator", "T1 T2 = T2 T1", pair.commutator_norm, 1e-9);
            doc.summary.push(format!("dimension: {}", pair.dim()));
            doc.summary.push(format!("wrote {} and {}", out.join("t1.json").display(), out.join("t2.json").display()));
        }
        Command::Counterexample { r, a, b, tol } => {
            let tol = check_tol(tol.tol)?;
            counterexample_claims(&mut doc, *r, *a, *b, tol)?;
        }
    }
    Ok(doc.finish())
}

fn read_pair(doc: &mut ReportDocument, t1: &Path, t2: &Path, tol: f64) -> Result<FactorPair, CliError> {
    let (a, da) = read_matrix(t1)?;
    let (b, db) = read_matrix(t2)?;
    doc.inputs.push(da);
    doc.inputs.push(db);
    Ok(FactorPair::new(a, b, tol)?)
}

fn classify_claims(doc: &mut ReportDocument, t: &CMatrix, m: usize, m_max: usize, tol: f64) -> Result<(), CliError> {
    let report = hyper::classify(t, m_max, tol)?;
    for n in 1..=m_max {
        let cert = report.certificate(n).cloned().expect("checked order");
        let reference = format!("K_{n}^-1(T,T*) >= 0");
        if n == 1 || n == m {
            doc.certificate(&format!("order_{n}_positive"), &reference, cert, true);
        } else {
            doc.summary.push(format!(
                "order {n}: {} (min eigenvalue {:.6e})",
                if cert.is_psd { "positive" } else { "not positive" },
                cert.min_eigenvalue
            ));
        }
    }
    doc.summary.push(format!("norm: {:.12}", report.norm));
    doc.summary.push(format!("spectral radius: {:.12}", report.spectral_radius));
    doc.summary.push(format!("orders positive: {:?}", report.orders_positive));
    doc.summary.push(format!(
        "{m}-hypercontraction: {}, pure: {}",
        yes_no(report.is_hypercontraction(m)),
        yes_no(report.is_pure)
    ));
    Ok(())
}

fn fm_claims(doc: &mut ReportDocument, pair: &FactorPair, m: usize, tol: f64) -> Result<(), CliError> {
    let fm = factors::check_fm(pair, m, tol)?;
    for (i, cert) in fm.pair_defects_psd.iter().enumerate() {
        doc.certificate(
            &format!("pair_defect_{}_positive", i + 1),
            &format!("K_{}^-1(T,T*) - T{} K_{}^-1(T,T*) T{}* >= 0", m - 1, i + 1, m - 1, i + 1),
            cert.clone(),
            true,
        );
        doc.matrices.insert(
            format!("pair_defect_{}", i + 1),
            MatrixFile::from_matrix(&factors::pair_defect(pair, m, (i + 1) as u8)?),
        );
    }
    doc.summary.push(format!("orders with both pair defects positive: {:?}", fm.orders_member));
    doc.summary.push(format!("lower orders consistent: {}", yes_no(fm.chain_consistent)));
    doc.summary.push(format!(
        "product {m}-hypercontraction: {}, pure: {}",
        yes_no(fm.product_hyper.is_hypercontraction(m)),
        yes_no(fm.product_hyper.is_pure)
    ));
    if fm.is_member {
        let cert = factors::product_hyper_from_membership(pair, m, tol)?;
        doc.summary.push(format!("decomposition residual: {:.3e}", cert.decomposition_residual));
    }
    doc.summary.push(format!("member of F_{m}: {}", yes_no(fm.is_member)));
    Ok(())
}

fn counterexample_claims(doc: &mut ReportDocument, r: f64, a: f64, b: f64, tol: f64) -> Result<(), CliError> {
    let ex = factors::szego_counterexample(r, a, b)?;
    let hyper_t = hyper::classify(&ex.t_r, 2, tol)?;
    doc.certificate(
        "t_r_contraction",
        "K_1^-1(T_r,T_r*) >= 0",
        hyper_t.certificate(1).cloned().expect("order 1"),
        true,
    );
    doc.certificate(
        "t_r_2_hypercontraction",
        "K_2^-1(T_r,T_r*) >= 0",
        hyper_t.certificate(2).cloned().expect("order 2"),
        true,
    );
    let id = matcore::identity(2);
    for (name, reference, op) in [
        ("s_contraction", "I - S S* >= 0", &ex.s),
        ("t_r_s_inv_contraction", "I - T_r S^-1 (T_r S^-1)* >= 0", &ex.pair.t1),
    ] {
        doc.certificate(name, reference, psd_check(&(&id - op * op.adjoint()), tol)?, true);
    }
    doc.residual("commutation", "T_r S = S T_r", op_norm(&(&ex.t_r * &ex.s - &ex.s * &ex.t_r)), 0.0);
    let defect1 = factors::pair_defect(&ex.pair, 2, 1)?;
    doc.residual(
        "pair_defect_1_closed_form",
        "D²_{2,T,T_r S^-1} = diag(1 - r² - r²/a², 1)",
        op_norm(&(&defect1 - &ex.defect1)),
        1e-12,
    );
    let defect = factors::pair_defect(&ex.pair, 2, 2)?;
    doc.residual(
        "pair_defect_2_closed_form",
        "D²_{2,T,S} = [[(1-r²)(1-a²) - b², -ab], [-ab, 1-a²]]",
        op_norm(&(&defect - &ex.defect2)),
        1e-12,
    );
    let fm = factors::check_fm(&ex.pair, 2, tol)?;
    let closed = psd_check(&ex.defect1, tol)?.is_psd && psd_check(&ex.defect2, tol)?.is_psd;
    doc.flag(
        "membership_paths_agree",
        "(T_r S^-1, S) in F_2 iff both closed-form pair defects are PSD",
        fm.is_member == closed,
    );
    doc.matrices.insert("pair_defect_2".into(), MatrixFile::from_matrix(&defect));
    doc.summary.push(format!("r = {r}, a = {a}, b = {b}"));
    doc.summary.push(format!("min eigenvalue of D²_{{2,T,S}}: {:.15}", fm.pair_defects_psd[1].min_eigenvalue));
    doc.summary.push(format!("min eigenvalue of D²_{{2,T,T_r S^-1}}: {:.15}", fm.pair_defects_psd[0].min_eigenvalue));
    doc.summary.push(format!("product T_r is a 2-hypercontraction: {}", yes_no(hyper_t.is_hypercontraction(2))));
    doc.summary.push(format!("member of F_2: {}", yes_no(fm.is_member)));
    Ok(())
}

fn residual_reference(name: &str) -> &'static str {
    match name {
        "intertwine_phi" => "Π T1* = (M_Φ ⊕ W1)* Π",
        "intertwine_psi" => "Π T2* = (M_Ψ ⊕ W2)* Π",
        "intertwine_shift" => "Π T* = (M_z ⊕ W)* Π",
        "coinvariance_phi" | "coinvariance_psi" | "coinvariance_shift" => "ran Π invariant under the model adjoint",
        "isometry" => "Π*Π = I",
        "isometry_v" => "V*V = I",
        "model_phi_psi_is_shift" => "M_Φ M_Ψ = M_z",
        "model_psi_phi_is_shift" => "M_Ψ M_Φ = M_z",
        "compression_t1" => "Π*(M_Φ ⊕ W1)Π = T1",
        "compression_t2" => "Π*(M_Ψ ⊕ W2)Π = T2",
        "compression_t" => "Π*(M_z ⊕ W)Π = T",
        "compressed_intertwine_phi" => "Π_{m,T} T1* = M_Φ̃* Π_{m,T}",
        "compressed_intertwine_psi" => "Π_{m,T} T2* = M_Ψ̃* Π_{m,T}",
        "compressed_phi_psi" => "P(M_z ⊕ W)|_Q = P(M_{Φ̃Ψ̃} ⊕ W)|_Q",
        "compressed_psi_phi" => "P(M_z ⊕ W)|_Q = P(M_{Ψ̃Φ̃} ⊕ W)|_Q",
        "compressed_t1" => "Π*(M_Φ̃ ⊕ W1)Π = T1",
        "compressed_t2" => "Π*(M_Ψ̃ ⊕ W2)Π = T2",
        "douglas_x" => "X* Q = Q T*",
        "douglas_x1" => "X1* Q = Q T1*",
        "douglas_x2" => "X2* Q = Q T2*",
        "w_product_12" => "X* = X1* X2*",
        "w_product_21" => "X* = X2* X1*",
        "unitary_w" => "W unitary on ran Q",
        "unitary_w1" => "W1 unitary on ran Q",
        "unitary_w2" => "W2 unitary on ran Q",
        "q_fixed_point" => "T Q² T* = Q²",
        _ => "",
    }
}

/// The matrices `dilate --out` writes.
#[derive(Debug, Clone)]
pub struct DilationFiles {
    /// Stacked degree blocks of the Bergman part, `(N+1)·r_D × d`.
    pub pi: CMatrix,
    /// `Q` as a `d × d` matrix.
    pub q: CMatrix,
    /// Orthonormal basis of `ran Q`, `d × r`.
    pub q_basis: CMatrix,
    /// `W` in the coordinates of `q_basis`, `r × r`.
    pub w: CMatrix,
}

impl DilationFiles {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
        write_matrix(&dir.join("pi.json"), &self.pi)?;
        let q_path = dir.join("q.json");
        if self.q_basis.ncols() > 0 {
            write_matrix(&q_path, &self.q)?;
            write_matrix(&dir.join("q_basis.json"), &self.q_basis)?;
            write_matrix(&dir.join("w.json"), &self.w)?;
        } else {
            for name in ["q.json", "q_basis.json", "w.json"] {
                let p = dir.join(name);
                if p.exists() {
                    fs::remove_file(&p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
                }
            }
        }
        Ok(())
    }

    pub fn read(dir: &Path, dim: usize, digests: &mut Vec<InputDigest>) -> Result<Self, CliError> {
        let (pi, d) = read_matrix(&dir.join("pi.json"))?;
        digests.push(d);
        let (q, q_basis, w) = if dir.join("q.json").exists() {
            let (q, d1) = read_matrix(&dir.join("q.json"))?;
            let (b, d2) = read_matrix(&dir.join("q_basis.json"))?;
            let (w, d3) = read_matrix(&dir.join("w.json"))?;
            digests.extend([d1, d2, d3]);
            (q, b, w)
        } else {
            (CMatrix::zeros(dim, dim), CMatrix::zeros(dim, 0), CMatrix::zeros(0, 0))
        };
        if pi.ncols() != dim
            || q.shape() != (dim, dim)
            || q_basis.nrows() != dim
            || w.shape() != (q_basis.ncols(), q_basis.ncols())
        {
            return Err(CliError::input("dilation files do not fit the operator dimensions"));
        }
        Ok(Self { pi, q, q_basis, w })
    }
}

/// Block size and degree of a stacked `Π`, given the defect dimension
/// implied by `K_m⁻¹(T,T*)`.
fn pi_layout(t: &CMatrix, m: usize, pi: &CMatrix) -> Result<(usize, usize), CliError> {
    let (_, basis) = hyper::defect(t, m, matcore::DEFAULT_TOL)?;
    let r = basis.ncols();
    if r == 0 {
        return Ok((0, pi.nrows()));
    }
    if !pi.nrows().is_multiple_of(r) || pi.nrows() == 0 {
        return Err(CliError::input(format!("pi has {} rows, not a multiple of the defect dimension {r}", pi.nrows())));
    }
    Ok((r, pi.nrows() / r - 1))
}

fn dilation_claims(
    doc: &mut ReportDocument,
    t: &CMatrix,
    m: usize,
    files: &DilationFiles,
    rtol: f64,
) -> Result<(), CliError> {
    let (r, degree) = pi_layout(t, m, &files.pi)?;
    let qc = files.q_basis.adjoint() * &files.q;
    let mut pi = CMatrix::zeros(files.pi.nrows() + qc.nrows(), t.ncols());
    pi.view_mut((0, 0), files.pi.shape()).copy_from(&files.pi);
    pi.view_mut((files.pi.nrows(), 0), qc.shape()).copy_from(&qc);
    let weights = WeightTable::new(m, degree + 1)?;
    let shift = model_operator(&Pencil::shift(r), m, degree, &weights)?.matrix;
    let w_unitary = matcore::isometry_defect(&files.w)
        .max(op_norm(&(&files.w * files.w.adjoint() - matcore::identity(files.w.nrows()))));
    doc.residual("isometry", "Π*Π = I", matcore::isometry_defect(&pi), rtol);
    doc.residual(
        "intertwine_shift",
        "Π T* = (M_z ⊕ W)* Π on degrees 0..N-1",
        dilate::stacked_intertwining(&shift, &files.w, &pi, t, r, degree),
        rtol,
    );
    doc.residual(
        "compression",
        "Π*(M_z ⊕ W)Π = T",
        op_norm(&(pi.adjoint() * direct_sum(&shift, &files.w) * &pi - t)),
        rtol,
    );
    doc.residual("unitary_w", "W unitary on ran Q", w_unitary, 1e-8);
    Ok(())
}

/// Parses `argv`, runs the command and renders the report. Returns the text
/// for stdout (or stderr on error) and the exit status.
pub fn main_with_args(argv: Vec<String>) -> (String, String, i32) {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
            let text = e.render().to_string();
            return if code == EXIT_PASS { (text, String::new(), code) } else { (String::new(), text, code) };
        }
    };
    match run(&cli, argv) {
        Ok(doc) => {
            let text = if cli.json { doc.to_json() } else { doc.to_text() };
            (text, String::new(), doc.exit_status)
        }
        Err(err) => (String::new(), format!("error: {}\n", err.message), err.code),
    }
}
