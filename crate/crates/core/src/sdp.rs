//! Dense interior-point solver for the common-Lyapunov LMI family
//!
//! ```text
//!   P − F ⪰ 0,   −(B_iᵀP + P B_i) − δ I ⪰ 0  (i = 1..N),   minimise ⟨C, P⟩
//! ```
//!
//! Both phases run a path-following barrier method with damped Newton steps
//! on the `m(m+1)/2` free entries of the symmetric variable.
//!
//! Phase 1 maximises a normalised margin `t` subject to
//! `P ⪰ t I`, `B̃_iᵀP + P B̃_i ⪯ −t I`, `tr P = 1`, with `B̃_i = B_i / max‖B_j‖`.
//! The constraints are homogeneous in `P`, so the original problem is
//! feasible exactly when `t* > 0`; a positive `t` is then rescaled into a
//! strictly feasible start for phase 2, while `t + gap < 0` proves
//! infeasibility. Phase 2 (objective only) follows the central path of the
//! original problem from that start.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lyapunov_form, max_sym_eigenvalue, min_sym_eigenvalue, spectral_norm, symmetrize};

/// Default relative strictness: `δ = 1e-6 · max_i ‖B_i‖₂`.
pub const DEFAULT_RELATIVE_MARGIN: f64 = 1e-6;

/// Tolerance used when re-checking a reported solution.
pub const CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub dim: usize,
    pub constraint_ops: Vec<DMatrix<f64>>,
    pub floor: DMatrix<f64>,
    pub objective: Option<DMatrix<f64>>,
    pub margin: f64,
    /// Optional invertible `T`: the solver works on `P̃ = T⁻ᵀ P T⁻¹`, which
    /// leaves the problem unchanged but can improve conditioning by orders
    /// of magnitude when `TᵀT` resembles the expected solution.
    pub preconditioner: Option<DMatrix<f64>>,
}

impl LmiProblem {
    /// Pure feasibility with floor `I` and the default scaled margin.
    pub fn new(constraint_ops: Vec<DMatrix<f64>>) -> Result<Self> {
        let dim = constraint_ops
            .first()
            .map(|b| b.nrows())
            .ok_or_else(|| Error::InvalidArgument("at least one constraint operator is required".into()))?;
        let margin = default_margin(&constraint_ops);
        let problem = Self {
            dim,
            constraint_ops,
            floor: DMatrix::identity(dim, dim),
            objective: None,
            margin,
            preconditioner: None,
        };
        problem.check()?;
        Ok(problem)
    }

    pub fn with_objective(mut self, c: DMatrix<f64>) -> Self {
        self.objective = Some(c);
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn with_floor(mut self, floor: DMatrix<f64>) -> Self {
        self.floor = floor;
        self
    }

    pub fn with_preconditioner(mut self, t: DMatrix<f64>) -> Self {
        self.preconditioner = Some(t);
        self
    }

    pub fn check(&self) -> Result<()> {
        let m = self.dim;
        if m == 0 {
            return Err(Error::InvalidArgument("matrix variable must be at least 1x1".into()));
        }
        if self.constraint_ops.is_empty() {
            return Err(Error::InvalidArgument("at least one constraint operator is required".into()));
        }
        for (i, b) in self.constraint_ops.iter().enumerate() {
            if b.shape() != (m, m) || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dimension(format!("constraint operator {i} must be a finite {m}x{m} matrix")));
            }
        }
        if self.floor.shape() != (m, m) || !is_symmetric(&self.floor) {
            return Err(Error::Dimension(format!("floor must be a symmetric {m}x{m} matrix")));
        }
        if let Some(c) = &self.objective {
            if c.shape() != (m, m) || !is_symmetric(c) {
                return Err(Error::Dimension(format!("objective must be a symmetric {m}x{m} matrix")));
            }
        }
        if let Some(t) = &self.preconditioner {
            if t.shape() != (m, m) || t.iter().any(|v| !v.is_finite()) || t.clone().try_inverse().is_none() {
                return Err(Error::InvalidArgument(format!("preconditioner must be an invertible finite {m}x{m} matrix")));
            }
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::InvalidArgument(format!("margin must be finite and non-negative, got {}", self.margin)));
        }
        Ok(())
    }

    /// Achieved margins of a candidate `P`, recomputed by eigenvalue
    /// decomposition.
    pub fn margins_of(&self, p: &DMatrix<f64>) -> Margins {
        Margins {
            floor_min_eig: min_sym_eigenvalue(&(p - &self.floor)),
            lmi_max_eigs: self.constraint_ops.iter().map(|b| max_sym_eigenvalue(&lyapunov_form(b, p))).collect(),
        }
    }
}

/// `1e-6 · max_i ‖B_i‖₂`.
pub fn default_margin(ops: &[DMatrix<f64>]) -> f64 {
    DEFAULT_RELATIVE_MARGIN * ops.iter().map(spectral_norm).fold(0.0, f64::max)
}

fn is_symmetric(a: &DMatrix<f64>) -> bool {
    let scale = a.amax().max(1.0);
    (a - a.transpose()).amax() <= 1e-12 * scale
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Newton-step budget, shared by both phases.
    pub max_iters: usize,
    /// Relative duality-gap target for the objective phase.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    MaxIterations,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// `λ_min(P − F)`.
    pub floor_min_eig: f64,
    /// `λ_max(B_iᵀP + P B_i)` per constraint.
    pub lmi_max_eigs: Vec<f64>,
}

impl Margins {
    pub fn satisfies(&self, margin: f64) -> bool {
        self.floor_min_eig >= -CHECK_TOL && self.lmi_max_eigs.iter().all(|&e| e <= -margin + CHECK_TOL)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub p: Option<DMatrix<f64>>,
    pub iterations: usize,
    pub runtime_secs: f64,
    pub margins: Option<Margins>,
    /// Best normalised margin found in phase 1 (positive iff feasible).
    pub max_margin: f64,
    /// Certified upper bound on the normalised margin.
    pub max_margin_bound: f64,
    /// Final barrier duality-gap estimate `ν / τ` of the objective phase.
    pub duality_gap: Option<f64>,
    pub objective_value: Option<f64>,
}

impl SolveReport {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }
}

/// Finds `P` satisfying the LMIs, ignoring any objective.
pub fn solve(problem: &LmiProblem, options: &SolverOptions) -> Result<SolveReport> {
    problem.check()?;
    let clock = Stopwatch::start();
    let scaled = Scaled::new(problem);
    let mut iters = 0;
    let phase1 = find_margin(&scaled, options, &mut iters);
    let report = match phase1 {
        PhaseOne::Feasible { p_unit, margin, bound } => {
            let p = scaled.unscale(&scale_into_interior(&scaled, &p_unit, 1.01));
            let margins = problem.margins_of(&p);
            let status = if margins.satisfies(problem.margin) {
                SolveStatus::Feasible
            } else {
                SolveStatus::NumericalFailure
            };
            SolveReport {
                status,
                p: (status == SolveStatus::Feasible).then_some(p),
                iterations: iters,
                runtime_secs: 0.0,
                margins: Some(margins),
                max_margin: margin,
                max_margin_bound: bound,
                duality_gap: None,
                objective_value: None,
            }
        }
        other => other.into_failed_report(iters),
    };
    Ok(SolveReport {
        runtime_secs: clock.elapsed(),
        ..report
    })
}

/// Finds `P` satisfying the LMIs while minimising `⟨C, P⟩`.
pub fn solve_with_objective(problem: &LmiProblem, options: &SolverOptions) -> Result<SolveReport> {
    problem.check()?;
    let Some(cost) = problem.objective.as_ref() else {
        return Err(Error::InvalidArgument("solve_with_objective requires an objective".into()));
    };
    if cost.amax() == 0.0 {
        return solve(problem, options);
    }
    let clock = Stopwatch::start();
    let scaled = Scaled::new(problem);
    let mut iters = 0;
    let report = match find_margin(&scaled, options, &mut iters) {
        PhaseOne::Feasible { p_unit, margin, bound } => {
            let start = scale_into_interior(&scaled, &p_unit, 2.0);
            minimise(problem, &scaled, options, start, cost, &mut iters, margin, bound)
        }
        other => other.into_failed_report(iters),
    };
    Ok(SolveReport {
        runtime_secs: clock.elapsed(),
        ..report
    })
}

/// The problem in the coordinates `P̃ = T⁻ᵀ P T⁻¹`:
/// `B̃ = T B T⁻¹`, floor `T⁻ᵀ F T⁻¹`, margin `δ T⁻ᵀ T⁻¹`, cost `T C Tᵀ`.
struct Scaled {
    t: DMatrix<f64>,
    ops: Vec<DMatrix<f64>>,
    floor: DMatrix<f64>,
    margin: DMatrix<f64>,
}

impl Scaled {
    fn new(problem: &LmiProblem) -> Self {
        let m = problem.dim;
        let t = problem.preconditioner.clone().unwrap_or_else(|| DMatrix::identity(m, m));
        let t_inv = t.clone().try_inverse().expect("checked invertible");
        let ops = problem.constraint_ops.iter().map(|b| &t * b * &t_inv).collect();
        let floor = symmetrize(&(t_inv.transpose() * &problem.floor * &t_inv));
        let margin = symmetrize(&(t_inv.transpose() * &t_inv)) * problem.margin;
        Self { t, ops, floor, margin }
    }

    fn dim(&self) -> usize {
        self.t.nrows()
    }

    fn cost(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.t * c * self.t.transpose()))
    }

    /// `Tᵀ P̃ T`.
    fn unscale(&self, pt: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(self.t.transpose() * pt * &self.t))
    }
}

/// Smallest multiple `κ·factor` of `p_unit` meeting floor and margin in
/// scaled coordinates.
fn scale_into_interior(scaled: &Scaled, p_unit: &DMatrix<f64>, factor: f64) -> DMatrix<f64> {
    let lam_min = min_sym_eigenvalue(p_unit);
    let floor_scale = max_sym_eigenvalue(&scaled.floor).max(0.0) / lam_min;
    let need = max_sym_eigenvalue(&scaled.margin).max(0.0);
    let lmi_scale = scaled
        .ops
        .iter()
        .map(|b| need / -max_sym_eigenvalue(&lyapunov_form(b, p_unit)))
        .fold(0.0, f64::max);
    let kappa = floor_scale.max(lmi_scale);
    let kappa = if kappa > 0.0 { kappa } else { 1.0 };
    p_unit * (kappa * factor)
}

enum PhaseOne {
    Feasible { p_unit: DMatrix<f64>, margin: f64, bound: f64 },
    Infeasible { margin: f64, bound: f64 },
    Budget { margin: f64, bound: f64 },
    Failure { margin: f64, bound: f64 },
}

impl PhaseOne {
    fn into_failed_report(self, iterations: usize) -> SolveReport {
        let (status, margin, bound) = match self {
            PhaseOne::Infeasible { margin, bound } => (SolveStatus::Infeasible, margin, bound),
            PhaseOne::Budget { margin, bound } => (SolveStatus::MaxIterations, margin, bound),
            PhaseOne::Failure { margin, bound } => (SolveStatus::NumericalFailure, margin, bound),
            PhaseOne::Feasible { .. } => unreachable!("feasible phase-1 result is not a failure"),
        };
        SolveReport {
            status,
            p: None,
            iterations,
            runtime_secs: 0.0,
            margins: None,
            max_margin: margin,
            max_margin_bound: bound,
            duality_gap: None,
            objective_value: None,
        }
    }
}

/// Symmetric unit matrices `E_k` spanning `m × m` symmetric matrices.
fn symmetric_units(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        for j in i..m {
            out.push((i, j));
        }
    }
    out
}

fn unit_matrix(m: usize, (i, j): (usize, usize)) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(m, m);
    e[(i, j)] = 1.0;
    e[(j, i)] = 1.0;
    e
}

fn find_margin(scaled: &Scaled, options: &SolverOptions, iters: &mut usize) -> PhaseOne {
    let m = scaled.dim();
    let scale = scaled.ops.iter().map(spectral_norm).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let ops: Vec<DMatrix<f64>> = scaled.ops.iter().map(|b| b / scale).collect();

    // P(z) = e_m e_mᵀ + Σ z_k E'_k with diagonal units E'_ii = e_i e_iᵀ − e_m e_mᵀ,
    // so tr P = 1 identically; the last variable is t.
    let last = m - 1;
    let mut p_const = DMatrix::zeros(m, m);
    p_const[(last, last)] = 1.0;
    let units: Vec<DMatrix<f64>> = symmetric_units(m)
        .into_iter()
        .filter(|&(i, j)| !(i == last && j == last))
        .map(|(i, j)| {
            let mut e = unit_matrix(m, (i, j));
            if i == j {
                e[(last, last)] = -1.0;
            }
            e
        })
        .collect();
    let nv = units.len() + 1;
    let id = DMatrix::<f64>::identity(m, m);

    let mut blocks = Vec::with_capacity(ops.len() + 1);
    let mut floor_coeffs = units.clone();
    floor_coeffs.push(-&id);
    blocks.push(Block {
        constant: p_const.clone(),
        coeffs: floor_coeffs,
    });
    for b in &ops {
        let mut coeffs: Vec<DMatrix<f64>> = units.iter().map(|e| -lyapunov_form(b, e)).collect();
        coeffs.push(-&id);
        blocks.push(Block {
            constant: -lyapunov_form(b, &p_const),
            coeffs,
        });
    }
    let mut cost = DVector::zeros(nv);
    cost[nv - 1] = -1.0;
    let program = BarrierProgram { blocks, cost };

    // start at P = I/m with t strictly below both margins
    let mut z = DVector::zeros(nv);
    for (k, (i, j)) in symmetric_units(m).into_iter().filter(|&(i, j)| !(i == last && j == last)).enumerate() {
        if i == j {
            z[k] = 1.0 / m as f64;
        }
    }
    let p0 = &id / m as f64;
    let t_floor = 1.0 / m as f64;
    let t_lmi = ops.iter().map(|b| -max_sym_eigenvalue(&lyapunov_form(b, &p0))).fold(f64::INFINITY, f64::min);
    z[nv - 1] = t_floor.min(t_lmi) - 1.0 / m as f64;

    let p_of = |z: &DVector<f64>| {
        let mut p = p_const.clone();
        for (k, e) in units.iter().enumerate() {
            p += e * z[k];
        }
        p
    };

    let outcome = program.follow_path(&mut z, 1.0, 20.0, options.max_iters, iters, |z, gap| {
        let t = z[z.len() - 1];
        if t + gap < 0.0 {
            Some(PathStop::Infeasible)
        } else if t > 0.0 && gap <= 1e-3 * t {
            Some(PathStop::Done)
        } else if gap < 1e-15 {
            Some(if t > 0.0 { PathStop::Done } else { PathStop::Infeasible })
        } else {
            None
        }
    });
    let t = z[nv - 1];
    let bound = t + program.nu() / outcome.tau;
    match outcome.end {
        PathEnd::Stopped(PathStop::Done) => PhaseOne::Feasible {
            p_unit: p_of(&z),
            margin: t,
            bound,
        },
        PathEnd::Stopped(PathStop::Infeasible) => PhaseOne::Infeasible { margin: t, bound },
        PathEnd::Converged => {
            if t > 0.0 {
                PhaseOne::Feasible {
                    p_unit: p_of(&z),
                    margin: t,
                    bound,
                }
            } else {
                PhaseOne::Infeasible { margin: t, bound }
            }
        }
        PathEnd::Budget => PhaseOne::Budget { margin: t, bound },
        PathEnd::Stalled | PathEnd::Singular => {
            if t > 0.0 {
                PhaseOne::Feasible {
                    p_unit: p_of(&z),
                    margin: t,
                    bound,
                }
            } else {
                PhaseOne::Failure { margin: t, bound }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn minimise(
    problem: &LmiProblem,
    scaled: &Scaled,
    options: &SolverOptions,
    start: DMatrix<f64>,
    cost_matrix: &DMatrix<f64>,
    iters: &mut usize,
    phase_one_margin: f64,
    phase_one_bound: f64,
) -> SolveReport {
    let m = problem.dim;
    let pairs = symmetric_units(m);
    let units: Vec<DMatrix<f64>> = pairs.iter().map(|&p| unit_matrix(m, p)).collect();
    let trace_cap = 1e6 * start.trace().max(1.0);

    let mut blocks = Vec::with_capacity(scaled.ops.len() + 2);
    blocks.push(Block {
        constant: -&scaled.floor,
        coeffs: units.clone(),
    });
    for b in &scaled.ops {
        blocks.push(Block {
            constant: -&scaled.margin,
            coeffs: units.iter().map(|e| -lyapunov_form(b, e)).collect(),
        });
    }
    blocks.push(Block {
        constant: DMatrix::from_element(1, 1, trace_cap),
        coeffs: units.iter().map(|e| DMatrix::from_element(1, 1, -e.trace())).collect(),
    });
    let cost_t = scaled.cost(cost_matrix);
    let cost = DVector::from_iterator(units.len(), units.iter().map(|e| cost_t.component_mul(e).sum()));
    let program = BarrierProgram { blocks, cost };

    let mut z = DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| start[(i, j)]));
    let p_of = |z: &DVector<f64>| {
        let mut p = DMatrix::zeros(m, m);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            p[(i, j)] = z[k];
            p[(j, i)] = z[k];
        }
        p
    };

    let obj0 = program.cost.dot(&z).abs().max(1e-12);
    let tau0 = program.nu() / obj0;
    let tol = options.tol;
    let outcome = program.follow_path(&mut z, tau0, 20.0, options.max_iters, iters, |z, gap| {
        let obj = program.cost.dot(z);
        (gap <= tol * obj.abs().max(1.0)).then_some(PathStop::Done)
    });
    let (p, margins) = pull_inside(problem, scaled.unscale(&p_of(&z)), &scaled.unscale(&start));
    let gap = program.nu() / outcome.tau;
    let status = match outcome.end {
        PathEnd::Stopped(_) | PathEnd::Converged => SolveStatus::Feasible,
        PathEnd::Budget => SolveStatus::MaxIterations,
        // a stalled line search near the optimum still leaves a strictly
        // feasible point; accept it when the gap is already small
        PathEnd::Stalled | PathEnd::Singular => {
            if gap <= 1e3 * tol * program.cost.dot(&z).abs().max(1.0) {
                SolveStatus::Feasible
            } else {
                SolveStatus::NumericalFailure
            }
        }
    };
    let status = if status == SolveStatus::Feasible && !margins.satisfies(problem.margin) {
        SolveStatus::NumericalFailure
    } else {
        status
    };
    SolveReport {
        status,
        objective_value: Some(cost_matrix.component_mul(&p).sum()),
        p: (status == SolveStatus::Feasible).then_some(p),
        iterations: *iters,
        runtime_secs: 0.0,
        margins: Some(margins),
        max_margin: phase_one_margin,
        max_margin_bound: phase_one_bound,
        duality_gap: Some(gap),
    }
}

/// Late central-path points sit within roundoff of the boundary, which
/// the independent eigenvalue check can see as a violation. Moves `p` a
/// small step towards the strictly feasible `interior` until the check
/// passes, giving up a correspondingly small part of the objective.
fn pull_inside(problem: &LmiProblem, p: DMatrix<f64>, interior: &DMatrix<f64>) -> (DMatrix<f64>, Margins) {
    let margins = problem.margins_of(&p);
    if margins.satisfies(problem.margin) {
        return (p, margins);
    }
    for k in (1..=8).rev() {
        let lambda = 10f64.powi(-k);
        let q = &p * (1.0 - lambda) + interior * lambda;
        let mq = problem.margins_of(&q);
        if mq.satisfies(problem.margin) {
            return (q, mq);
        }
    }
    (p, margins)
}

/// `F(z) = constant + Σ z_k coeffs[k]`, required to stay positive definite.
struct Block {
    constant: DMatrix<f64>,
    coeffs: Vec<DMatrix<f64>>,
}

impl Block {
    fn at(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.constant.clone();
        for (k, f) in self.coeffs.iter().enumerate() {
            if z[k] != 0.0 {
                s += f * z[k];
            }
        }
        s
    }

    fn size(&self) -> usize {
        self.constant.nrows()
    }
}

struct BarrierProgram {
    blocks: Vec<Block>,
    cost: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PathStop {
    Done,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PathEnd {
    Stopped(PathStop),
    Converged,
    Budget,
    Stalled,
    Singular,
}

struct PathOutcome {
    end: PathEnd,
    tau: f64,
}

const INNER_TOL: f64 = 1e-7;
const MAX_TAU: f64 = 1e18;

impl BarrierProgram {
    fn nu(&self) -> f64 {
        self.blocks.iter().map(Block::size).sum::<usize>() as f64
    }

    /// `−Σ log det F_b(z)`, or `None` outside the domain.
    fn barrier(&self, z: &DVector<f64>) -> Option<f64> {
        let mut acc = 0.0;
        for b in &self.blocks {
            let chol = b.at(z).cholesky()?;
            acc -= 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        acc.is_finite().then_some(acc)
    }

    fn objective(&self, z: &DVector<f64>, tau: f64) -> Option<f64> {
        self.barrier(z).map(|phi| tau * self.cost.dot(z) + phi)
    }

    /// Gradient and Hessian of `τ cᵀz + φ(z)`. With `F(z) = L Lᵀ` and
    /// `F̂_k = L⁻¹ F_k L⁻ᵀ`, the barrier contributes `−tr F̂_k` and
    /// `⟨F̂_k, F̂_l⟩`, a Gram matrix that stays symmetric positive
    /// semidefinite in floating point.
    fn derivatives(&self, z: &DVector<f64>, tau: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let nv = z.len();
        let mut grad = &self.cost * tau;
        let mut hess = DMatrix::zeros(nv, nv);
        for b in &self.blocks {
            let l = b.at(z).cholesky()?.l();
            let mut fhat = Vec::with_capacity(nv);
            for f in &b.coeffs {
                let x = l.solve_lower_triangular(f)?;
                fhat.push(l.solve_lower_triangular(&x.transpose())?);
            }
            for k in 0..nv {
                grad[k] -= fhat[k].trace();
                for l in 0..=k {
                    hess[(k, l)] += fhat[k].dot(&fhat[l]);
                }
            }
        }
        for k in 0..nv {
            for l in 0..k {
                hess[(l, k)] = hess[(k, l)];
            }
        }
        Some((grad, hess))
    }

    fn follow_path(
        &self,
        z: &mut DVector<f64>,
        tau0: f64,
        mu: f64,
        max_iters: usize,
        iters: &mut usize,
        mut stop: impl FnMut(&DVector<f64>, f64) -> Option<PathStop>,
    ) -> PathOutcome {
        let nu = self.nu();
        let mut tau = tau0;
        loop {
            if let Err(end) = self.center(z, tau, max_iters, iters) {
                return PathOutcome { end, tau };
            }
            if let Some(s) = stop(z, nu / tau) {
                return PathOutcome {
                    end: PathEnd::Stopped(s),
                    tau,
                };
            }
            if tau >= MAX_TAU {
                return PathOutcome {
                    end: PathEnd::Converged,
                    tau,
                };
            }
            tau *= mu;
        }
    }

    /// Damped Newton minimisation of `τ cᵀz + φ(z)` from a strictly
    /// feasible `z`.
    fn center(&self, z: &mut DVector<f64>, tau: f64, max_iters: usize, iters: &mut usize) -> Result<(), PathEnd> {
        let mut f = self.objective(z, tau).ok_or(PathEnd::Singular)?;
        loop {
            let (grad, hess) = self.derivatives(z, tau).ok_or(PathEnd::Singular)?;
            let step = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => hess.lu().solve(&(-&grad)).ok_or(PathEnd::Singular)?,
            };
            let slope = grad.dot(&step);
            let decrement = -slope;
            if !decrement.is_finite() {
                return Err(PathEnd::Singular);
            }
            if decrement / 2.0 <= INNER_TOL {
                return Ok(());
            }
            if *iters >= max_iters {
                return Err(PathEnd::Budget);
            }
            *iters += 1;
            let mut s = 1.0;
            loop {
                let trial = &*z + &step * s;
                if let Some(ft) = self.objective(&trial, tau) {
                    // roundoff floor: τ cᵀz dominates f late on the path
                    if ft <= f + 0.01 * s * slope + 64.0 * f64::EPSILON * f.abs() {
                        *z = trial;
                        f = ft;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-12 {
                    // no further progress is representable
                    return if decrement < 1e-4 { Ok(()) } else { Err(PathEnd::Stalled) };
                }
            }
        }
    }
}

struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn elapsed(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn stable_identity_is_its_own_certificate() {
        let b = -DMatrix::<f64>::identity(2, 2);
        let problem = LmiProblem::new(vec![b]).unwrap();
        let report = solve(&problem, &opts()).unwrap();
        assert_eq!(report.status, SolveStatus::Feasible);
        let m = report.margins.unwrap();
        assert!(m.floor_min_eig >= -1e-8);
        assert!(m.lmi_max_eigs[0] <= -2.0);
    }

    #[test]
    fn unstable_identity_is_infeasible() {
        let b = DMatrix::<f64>::identity(2, 2);
        let problem = LmiProblem::new(vec![b]).unwrap().with_margin(1e-3);
        let report = solve(&problem, &opts()).unwrap();
        assert_eq!(report.status, SolveStatus::Infeasible);
        assert!(report.p.is_none());
        assert!(report.max_margin_bound < 0.0);
    }

    #[test]
    fn zero_objective_matches_feasibility() {
        let b = DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, -0.5, -0.5]);
        let problem = LmiProblem::new(vec![b]).unwrap();
        let plain = solve(&problem, &opts()).unwrap();
        let zero = solve_with_objective(&problem.clone().with_objective(DMatrix::zeros(2, 2)), &opts()).unwrap();
        assert_eq!(plain.p, zero.p);
        assert_eq!(plain.iterations, zero.iterations);
    }

    #[test]
    fn objective_is_required() {
        let problem = LmiProblem::new(vec![-DMatrix::<f64>::identity(2, 2)]).unwrap();
        assert!(solve_with_objective(&problem, &opts()).is_err());
    }

    #[test]
    fn malformed_problems_are_rejected() {
        assert!(LmiProblem::new(vec![]).is_err());
        let p = LmiProblem::new(vec![-DMatrix::<f64>::identity(2, 2)]).unwrap().with_margin(-1.0);
        assert!(solve(&p, &opts()).is_err());
        let p = LmiProblem::new(vec![-DMatrix::<f64>::identity(2, 2)])
            .unwrap()
            .with_objective(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]));
        assert!(solve_with_objective(&p, &opts()).is_err());
    }

    #[test]
    fn tiny_budget_reports_max_iterations() {
        let sys = crate::system::SwitchedSystem::two_mode_example();
        let ops = crate::hierarchy::reduce(&sys, 6).unwrap().reduced;
        let problem = LmiProblem::new(ops).unwrap();
        let report = solve(&problem, &SolverOptions { max_iters: 2, tol: 1e-7 }).unwrap();
        assert_eq!(report.status, SolveStatus::MaxIterations);
        assert!(report.p.is_none());
    }
}
