//! LP and MILP solution of assembled dispatch programs.
//!
//! Continuous programs go through a bounded revised simplex with geometric
//! scaling; programs with binaries go through a deterministic best-bound
//! branch-and-bound that warm starts every node from its parent's basis.

mod bnb;
mod lu;
mod mps;
mod simplex;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{LinearProgram, Sense, VariableRef};
use simplex::{Basis, Outcome, Simplex, SimplexOptions, StandardLp};

pub use bnb::solve_milp;
pub use mps::{export_mps, export_solution, import_solution, mps_names, parse_mps, ImportedSolution, MpsModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
    NodeLimit,
}

impl SolveStatus {
    pub fn is_optimal(self) -> bool {
        self == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branching {
    #[default]
    MostFractional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOrder {
    #[default]
    BestBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    /// Relative gap `(incumbent - bound) / max(1, |incumbent|)`.
    pub mip_gap: f64,
    pub node_limit: Option<usize>,
    pub time_limit: Option<Duration>,
    pub iteration_limit: usize,
    pub branching: Branching,
    pub node_order: NodeOrder,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-7,
            mip_gap: 1e-6,
            node_limit: None,
            time_limit: None,
            iteration_limit: 10_000_000,
            branching: Branching::MostFractional,
            node_order: NodeOrder::BestBound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("solve options: {0}")]
    Options(String),
    #[error("binary assignment does not cover {0}")]
    MissingBinary(String),
    #[error("line {line}: unknown variable name {name:?}")]
    UnknownVariable { line: usize, name: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("program is infeasible with the given binaries")]
    InfeasibleAfterFixing,
}

/// Result of a continuous solve. Vectors are aligned with the program's
/// columns and rows; duals are the sensitivity of the objective to each
/// row's right-hand side, reduced costs the sensitivity to each column bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: SolveStatus,
    /// currency per hour
    pub objective: f64,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn value(&self, lp: &LinearProgram, var: &VariableRef) -> Option<f64> {
        lp.column_of(var).and_then(|j| self.primal.get(j).copied())
    }

    pub fn primal_map(&self, lp: &LinearProgram) -> BTreeMap<VariableRef, f64> {
        lp.columns.iter().zip(&self.primal).map(|(c, &v)| (c.var, v)).collect()
    }

    pub fn has_duals(&self) -> bool {
        !self.duals.is_empty()
    }

    fn failed(status: SolveStatus, iterations: usize) -> Self {
        LpSolution { status, objective: f64::INFINITY, primal: Vec::new(), duals: Vec::new(), reduced_costs: Vec::new(), iterations }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    /// The incumbent. `status` is `Optimal` when the gap closed, a limit
    /// status when the search stopped early, `Infeasible` when no integer
    /// point exists.
    pub lp: LpSolution,
    pub binaries: BTreeMap<VariableRef, u8>,
    pub bound: f64,
    pub gap: f64,
    pub node_count: usize,
}

impl MilpSolution {
    pub fn status(&self) -> SolveStatus {
        self.lp.status
    }

    pub fn objective(&self) -> f64 {
        self.lp.objective
    }
}

fn check_options(opts: &SolveOptions) -> Result<(), SolverError> {
    for (name, v) in [("feasibility_tol", opts.feasibility_tol), ("optimality_tol", opts.optimality_tol), ("mip_gap", opts.mip_gap)] {
        if !(v > 0.0) {
            return Err(SolverError::Options(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

fn row_bounds(sense: Sense, rhs: f64) -> (f64, f64) {
    match sense {
        Sense::Le => (f64::NEG_INFINITY, rhs),
        Sense::Ge => (rhs, f64::INFINITY),
        Sense::Eq => (rhs, rhs),
    }
}

fn to_standard(lp: &LinearProgram) -> StandardLp {
    let rows: Vec<Vec<(usize, f64)>> = lp.rows.iter().map(|r| r.coeffs.clone()).collect();
    let cost: Vec<f64> = lp.columns.iter().map(|c| c.cost).collect();
    let bounds: Vec<(f64, f64)> = lp.columns.iter().map(|c| (c.lower, c.upper)).collect();
    let rb: Vec<(f64, f64)> = lp.rows.iter().map(|r| row_bounds(r.sense, r.rhs)).collect();
    StandardLp::new(lp.columns.len(), &rows, &cost, &bounds, &rb, true)
}

fn simplex_options(opts: &SolveOptions, deadline: Option<Instant>) -> SimplexOptions {
    SimplexOptions {
        primal_tol: opts.feasibility_tol.min(1e-9),
        dual_tol: opts.optimality_tol.min(1e-9),
        iteration_limit: opts.iteration_limit,
        deadline,
    }
}

fn status_of(outcome: Outcome) -> SolveStatus {
    match outcome {
        Outcome::Optimal => SolveStatus::Optimal,
        Outcome::Infeasible => SolveStatus::Infeasible,
        Outcome::Unbounded => SolveStatus::Unbounded,
        Outcome::IterationLimit => SolveStatus::IterationLimit,
        Outcome::TimeLimit => SolveStatus::TimeLimit,
    }
}

/// Solves `std` with column bound overrides `(column, lower, upper)` in user
/// units, optionally warm started.
fn solve_standard(
    std: &StandardLp,
    overrides: &[(usize, f64, f64)],
    warm: Option<&Basis>,
    opts: &SolveOptions,
    deadline: Option<Instant>,
) -> (LpSolution, Option<Basis>) {
    let mut s = Simplex::new(std, simplex_options(opts, deadline));
    if let Some(b) = warm {
        s.load_basis(b);
    }
    for &(j, l, u) in overrides {
        s.set_bounds(j, std.scale_bound(j, l), std.scale_bound(j, u));
    }
    let outcome = s.solve();
    let status = status_of(outcome);
    if status != SolveStatus::Optimal {
        return (LpSolution::failed(status, s.iterations), None);
    }
    let mut primal = s.values();
    primal.truncate(std.n);
    let sol = LpSolution {
        status,
        objective: s.objective(),
        primal,
        duals: s.row_duals(),
        reduced_costs: s.reduced_costs(),
        iterations: s.iterations,
    };
    (sol, Some(s.basis()))
}

/// Largest violation of row and column bounds by `x`, in program units.
pub fn primal_residual(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (c, &v) in lp.columns.iter().zip(x) {
        worst = worst.max(c.lower - v).max(v - c.upper);
    }
    for r in &lp.rows {
        let a: f64 = r.coeffs.iter().map(|&(j, v)| v * x[j]).sum();
        let viol = match r.sense {
            Sense::Le => a - r.rhs,
            Sense::Ge => r.rhs - a,
            Sense::Eq => (a - r.rhs).abs(),
        };
        worst = worst.max(viol);
    }
    worst
}

/// Solves the continuous relaxation (integrality flags are ignored).
pub fn solve_lp(lp: &LinearProgram, opts: &SolveOptions) -> Result<LpSolution, SolverError> {
    check_options(opts)?;
    let deadline = opts.time_limit.map(|d| Instant::now() + d);
    let std = to_standard(lp);
    let (sol, _) = solve_standard(&std, &[], None, opts, deadline);
    if sol.status.is_optimal() {
        let res = primal_residual(lp, &sol.primal);
        if res > opts.feasibility_tol {
            log::warn!("LP solution violates constraints by {res:.3e}");
        }
    }
    log::debug!("LP {:?} after {} iterations, objective {}", sol.status, sol.iterations, sol.objective);
    Ok(sol)
}

/// Fixes every binary column to `binaries` and solves the remaining LP, so
/// that duals are available for the chosen topology.
pub fn fix_and_resolve(
    lp: &LinearProgram,
    binaries: &BTreeMap<VariableRef, u8>,
    opts: &SolveOptions,
) -> Result<LpSolution, SolverError> {
    let mut fixed = lp.relaxed();
    for (col, orig) in fixed.columns.iter_mut().zip(&lp.columns) {
        if orig.integer {
            let v = *binaries.get(&orig.var).ok_or_else(|| SolverError::MissingBinary(orig.name.clone()))?;
            col.lower = f64::from(v);
            col.upper = f64::from(v);
        }
    }
    let sol = solve_lp(&fixed, opts)?;
    if sol.status == SolveStatus::Infeasible {
        return Err(SolverError::InfeasibleAfterFixing);
    }
    Ok(sol)
}
