//! Homogeneous Lyapunov certificates `V_c(x) = y_c(x)ᵀ P y_c(x)`.
//!
//! [`certify`] assembles the level-`c` LMIs from the reduced operators and
//! hands them to the solver. A [`Certificate`] carries everything needed to
//! re-check it from scratch against the system it was issued for: the
//! monomial ordering, `P`, the margin `δ` it was held to and the system
//! digest.
//!
//! Levels `c ≥ 2` are solved in the coordinates of `(xᵀQx)^c`, where `Q`
//! is a quadratic (`c = 1`) certificate when one exists; the monomials are
//! additionally weighted by `√multinomial` so that `‖ỹ‖² = ‖x‖^{2c}`.
//! This is a congruence on the LMI and never changes the answer, only the
//! conditioning.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{lifted_operator, reduce_with_basis, reduced_operator, DENSE_LIFT_CAP};
use crate::linalg::{accurate_cholesky_upper, lyapunov_form, max_sym_eigenvalue, min_sym_eigenvalue, product_norm_squared, quadratic_form, spectral_norm};
use crate::sdp::{self, LmiProblem, Margins, SolveStatus, SolverOptions, CHECK_TOL};
use crate::system::{matrix_from_rows, matrix_to_rows, SwitchedSystem};
use crate::tensor_lift::{enumerate_basis, kron, kron_len, ExponentVector, MonomialBasis, MonomialOrder};

/// Which linear functional of `P` the solver minimises.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Pure feasibility.
    Feas,
    /// `P(1,1)`, the coefficient of `x_1^{2c}`.
    #[default]
    X1,
    /// `P(m,m)`, the coefficient of the last monomial (`x_n^{2c}` in the
    /// built-in orders).
    X2,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Feas, Objective::X1, Objective::X2];

    pub fn cost_matrix(self, m: usize) -> Option<DMatrix<f64>> {
        let k = match self {
            Objective::Feas => return None,
            Objective::X1 => 0,
            Objective::X2 => m - 1,
        };
        let mut c = DMatrix::zeros(m, m);
        c[(k, k)] = 1.0;
        Some(c)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Feas => "feas",
            Objective::X1 => "x1",
            Objective::X2 => "x2",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feas" => Ok(Objective::Feas),
            "x1" => Ok(Objective::X1),
            "x2" => Ok(Objective::X2),
            other => Err(Error::InvalidArgument(format!("unknown objective {other:?} (expected feas, x1 or x2)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub solver: SolverOptions,
    /// Overrides the default `δ = 1e-6 · max_i ‖B_{c,i}‖₂`.
    pub margin: Option<f64>,
    pub order: MonomialOrder,
    /// Solve in `(xᵀQx)^c` coordinates (see the module docs).
    pub precondition: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            margin: None,
            order: MonomialOrder::default(),
            precondition: true,
        }
    }
}

/// Solver provenance stored with a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub iterations: usize,
    pub runtime_secs: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// The strictness `δ` the LMIs were solved and are validated with.
    pub margin: f64,
    pub max_margin: f64,
    pub duality_gap: Option<f64>,
    pub objective_value: Option<f64>,
    pub preconditioned: bool,
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub n: usize,
    pub c: usize,
    basis: MonomialBasis,
    pub p: DMatrix<f64>,
    pub objective: Objective,
    pub margins: Margins,
    pub solver: SolverMeta,
    pub system_hash: String,
}

/// Why [`certify`] produced no certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub c: usize,
    pub status: SolveStatus,
    /// Best normalised phase-1 margin (positive means feasible).
    pub max_margin: f64,
    /// Upper bound on the normalised margin; negative proves infeasibility.
    pub max_margin_bound: f64,
    pub iterations: usize,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Certified(Box<Certificate>),
    Rejected(Rejection),
}

impl Outcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Outcome::Certified(c) => Some(c),
            Outcome::Rejected(_) => None,
        }
    }

    pub fn into_certificate(self) -> Option<Certificate> {
        match self {
            Outcome::Certified(c) => Some(*c),
            Outcome::Rejected(_) => None,
        }
    }

    pub fn status(&self) -> SolveStatus {
        match self {
            Outcome::Certified(_) => SolveStatus::Feasible,
            Outcome::Rejected(r) => r.status,
        }
    }
}

/// Searches for a level-`c` certificate.
pub fn certify(system: &SwitchedSystem, c: usize, objective: Objective, options: &CertifyOptions) -> Result<Outcome> {
    if c == 0 {
        return Err(Error::InvalidArgument("level must be at least 1".into()));
    }
    let basis = enumerate_basis(system.n(), c, options.order)?;
    let ops = reduce_with_basis(system, basis);
    let m = ops.dim();
    let mut problem = LmiProblem::new(ops.reduced.clone())?;
    if let Some(delta) = options.margin {
        problem = problem.with_margin(delta);
    }
    let preconditioned = options.precondition && c > 1;
    if preconditioned {
        problem = problem.with_preconditioner(preconditioner(system, &ops.basis, &options.solver)?);
    }
    let report = match objective.cost_matrix(m) {
        None => sdp::solve(&problem, &options.solver)?,
        Some(cost) => sdp::solve_with_objective(&problem.clone().with_objective(cost), &options.solver)?,
    };
    match (report.status, report.p, report.margins) {
        (SolveStatus::Feasible, Some(p), Some(margins)) => Ok(Outcome::Certified(Box::new(Certificate {
            n: system.n(),
            c,
            basis: ops.basis,
            p,
            objective,
            margins,
            solver: SolverMeta {
                iterations: report.iterations,
                runtime_secs: report.runtime_secs,
                max_iters: options.solver.max_iters,
                tol: options.solver.tol,
                margin: problem.margin,
                max_margin: report.max_margin,
                duality_gap: report.duality_gap,
                objective_value: report.objective_value,
                preconditioned,
            },
            system_hash: ops.system_hash,
        }))),
        (status, _, _) => Ok(Outcome::Rejected(Rejection {
            c,
            status,
            max_margin: report.max_margin,
            max_margin_bound: report.max_margin_bound,
            iterations: report.iterations,
            runtime_secs: report.runtime_secs,
        })),
    }
}

/// The congruence `T` used for level `c`: `T = S·G`, with
/// `S = diag(√multinomial)` and `G` the action of `Q^{1/2}` on degree-`c`
/// monomials, `Q` a unit-norm quadratic certificate. Falls back to `T = S`
/// when the system has no quadratic certificate.
pub fn preconditioner(system: &SwitchedSystem, basis: &MonomialBasis, solver: &SolverOptions) -> Result<DMatrix<f64>> {
    let m = basis.len();
    let s = DMatrix::from_diagonal(&DVector::from_iterator(
        m,
        basis.ordering().iter().map(|e| (e.multinomial() as f64).sqrt()),
    ));
    let quadratic = sdp::solve(&LmiProblem::new(system.modes().to_vec())?, solver)?;
    let Some(q) = quadratic.p else {
        return Ok(s);
    };
    let q = &q / spectral_norm(&q);
    let eig = q.symmetric_eigen();
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt())) * eig.eigenvectors.transpose();
    Ok(s * basis.induced_map(&root)?)
}

/// Outcome of [`Certificate::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub passed: bool,
    pub margin: f64,
    pub recomputed: Margins,
    /// Human-readable names of the violated constraints.
    pub violations: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CertificateFile {
    n: usize,
    c: usize,
    ordering: Vec<ExponentVector>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    objective: Objective,
    margins: Margins,
    solver: SolverMeta,
    system_hash: String,
}

impl Certificate {
    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn ordering(&self) -> &[ExponentVector] {
        self.basis.ordering()
    }

    /// Polynomial order `2c` of `V`.
    pub fn order(&self) -> usize {
        2 * self.c
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("point has length {}, certificate has n = {}", x.len(), self.n)));
        }
        Ok(())
    }

    /// `V_c(x) = y_c(x)ᵀ P y_c(x)`.
    pub fn eval_v(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(quadratic_form(&self.p, &self.basis.eval(x)))
    }

    /// The matrices `B_{c,i}ᵀP + P B_{c,i}` for every mode of `system`.
    pub fn derivative_forms(&self, system: &SwitchedSystem) -> Result<Vec<DMatrix<f64>>> {
        self.check_system(system)?;
        Ok(system
            .modes()
            .iter()
            .map(|a| lyapunov_form(&reduced_operator(a, &self.basis), &self.p))
            .collect())
    }

    /// `V̇(x)` along mode `i`: `y_c(x)ᵀ (B_{c,i}ᵀP + P B_{c,i}) y_c(x)`.
    pub fn eval_vdot(&self, system: &SwitchedSystem, x: &[f64], i: usize) -> Result<f64> {
        self.check_point(x)?;
        if i >= system.num_modes() {
            return Err(Error::InvalidArgument(format!("mode index {i} out of range")));
        }
        self.check_system(system)?;
        let form = lyapunov_form(&reduced_operator(system.mode(i), &self.basis), &self.p);
        let y = self.basis.eval(x);
        Ok(y.dot(&(form * &y)))
    }

    fn check_system(&self, system: &SwitchedSystem) -> Result<()> {
        let actual = system.digest();
        if actual != self.system_hash {
            return Err(Error::WrongSystem {
                expected: self.system_hash.clone(),
                actual,
            });
        }
        if system.n() != self.n {
            return Err(Error::Dimension(format!("system has n = {}, certificate n = {}", system.n(), self.n)));
        }
        Ok(())
    }

    /// Re-derives the basis, the reduced operators and every eigenvalue
    /// margin from `system`, ignoring what the solver reported.
    pub fn validate(&self, system: &SwitchedSystem) -> Result<Validation> {
        self.check_system(system)?;
        let basis = MonomialBasis::from_ordering(self.n, self.ordering().to_vec())?;
        let m = basis.len();
        if self.p.shape() != (m, m) {
            return Err(Error::Dimension(format!("P must be {m}x{m} for this ordering")));
        }
        let asym = (&self.p - self.p.transpose()).amax();
        let floor_min_eig = min_sym_eigenvalue(&(&self.p - DMatrix::identity(m, m)));
        let lmi_max_eigs: Vec<f64> = system
            .modes()
            .iter()
            .map(|a| max_sym_eigenvalue(&lyapunov_form(&reduced_operator(a, &basis), &self.p)))
            .collect();
        let recomputed = Margins {
            floor_min_eig,
            lmi_max_eigs,
        };
        let delta = self.solver.margin;
        let mut violations = Vec::new();
        if asym > CHECK_TOL * self.p.amax().max(1.0) {
            violations.push(format!("P is not symmetric (max asymmetry {asym:.3e})"));
        }
        if !(floor_min_eig >= -CHECK_TOL) {
            violations.push(format!("P - I >= 0: min eigenvalue {floor_min_eig:.6e}"));
        }
        for (i, &e) in recomputed.lmi_max_eigs.iter().enumerate() {
            if !(e <= -delta + CHECK_TOL) {
                violations.push(format!(
                    "{}: max eigenvalue of B'P + PB is {e:.6e}, needs <= {:.6e}",
                    mode_name(system, i),
                    -delta + CHECK_TOL
                ));
            }
        }
        Ok(Validation {
            passed: violations.is_empty(),
            margin: delta,
            recomputed,
            violations,
        })
    }

    /// `L` (upper triangular) with `P = LᵀL`, so that
    /// `V_c(x) = ‖L y_c(x)‖² = Σ_j (L_j · y_c(x))²` is an explicit sum of squares.
    pub fn sos_factor(&self) -> Option<DMatrix<f64>> {
        accurate_cholesky_upper(&self.p)
    }

    /// `‖L y_c(x)‖²` for a factor from [`Certificate::sos_factor`].
    pub fn eval_sos(&self, l: &DMatrix<f64>, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(product_norm_squared(l, &self.basis.eval(x)))
    }

    pub fn to_json(&self) -> String {
        let file = CertificateFile {
            n: self.n,
            c: self.c,
            ordering: self.ordering().to_vec(),
            p: matrix_to_rows(&self.p),
            objective: self.objective,
            margins: self.margins.clone(),
            solver: self.solver.clone(),
            system_hash: self.system_hash.clone(),
        };
        serde_json::to_string_pretty(&file).expect("certificate serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CertificateFile = serde_json::from_str(text)?;
        let basis = MonomialBasis::from_ordering(file.n, file.ordering)?;
        if basis.c() != file.c {
            return Err(Error::Dimension(format!("ordering has degree {}, certificate says c = {}", basis.c(), file.c)));
        }
        let p = matrix_from_rows(&file.p).map_err(Error::Dimension)?;
        if p.shape() != (basis.len(), basis.len()) {
            return Err(Error::Dimension(format!("P must be {0}x{0}", basis.len())));
        }
        Ok(Self {
            n: file.n,
            c: file.c,
            basis,
            p,
            objective: file.objective,
            margins: file.margins,
            solver: file.solver,
            system_hash: file.system_hash,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn mode_name(system: &SwitchedSystem, i: usize) -> String {
    match system.labels().get(i) {
        Some(l) => format!("mode {} ({l})", i + 1),
        None => format!("mode {}", i + 1),
    }
}

/// `⊗^k Q`.
pub fn lift_quadratic(q: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    if !q.is_square() {
        return Err(Error::Dimension("Q must be square".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("lift power must be at least 1".into()));
    }
    kron_len(q.nrows(), k, DENSE_LIFT_CAP, "lifted quadratic form")?;
    let mut out = q.clone();
    for _ in 1..k {
        out = kron(&out, q);
    }
    Ok(out)
}

/// `λ_max(𝓐_{k,i}ᵀ (⊗^k Q) + (⊗^k Q) 𝓐_{k,i})` for every mode: the lifted
/// form of `(xᵀQx)^k` checked as a quadratic Lyapunov function of the
/// level-`k` Kronecker system.
pub fn lifted_quadratic_margins(system: &SwitchedSystem, q: &DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
    if q.shape() != (system.n(), system.n()) {
        return Err(Error::Dimension(format!("Q must be {0}x{0}", system.n())));
    }
    let big_q = lift_quadratic(q, k)?;
    system
        .modes()
        .iter()
        .map(|a| lifted_operator(a, k).map(|big_a| max_sym_eigenvalue(&lyapunov_form(&big_a, &big_q))))
        .collect()
}
