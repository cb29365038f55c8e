use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use sopf_core::economics::{nodal_lmps, settlement, EconomicsError, LmpVector, ModelReport, SettlementReport};
use sopf_core::formulation::{build_model, BuildOptions, DispatchResult, FormulationError, LinearProgram, ModelKind};
use sopf_core::net_model::PowerSystemCase;
use sopf_core::solver::{fix_and_resolve, solve_lp, solve_milp, LpSolution, SolveOptions, SolveStatus, SolverError};
use sopf_core::verifier::{check_dispatch, VerifyError, ViolationReport};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Economics(#[from] EconomicsError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{model}: no solution ({status:?})")]
    NoSolution { model: ModelKind, status: SolveStatus },
}

/// Search statistics of a switching model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSummary {
    pub bound: f64,
    pub gap: f64,
    pub node_count: usize,
}

/// One model solved, priced, settled and verified.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub kind: ModelKind,
    pub lp: LinearProgram,
    /// `Optimal`, or the limit that stopped a switching search with an incumbent
    pub status: SolveStatus,
    /// carries the duals; the fixed-topology re-solve for switching models
    pub priced: LpSolution,
    pub search: Option<SearchSummary>,
    pub dispatch: DispatchResult,
    pub lmps: LmpVector,
    pub settlement: SettlementReport,
    pub violations: ViolationReport,
    pub elapsed: Duration,
}

impl ModelRun {
    pub fn objective(&self) -> f64 {
        self.dispatch.objective
    }

    pub fn report(&self) -> ModelReport {
        ModelReport { model: self.kind, tc: self.objective(), lmps: self.lmps.clone(), settlement: self.settlement.clone() }
    }
}

pub fn run_model(case: &PowerSystemCase, kind: ModelKind, build: &BuildOptions, solve: &SolveOptions) -> Result<ModelRun, RunError> {
    let start = Instant::now();
    let lp = build_model(case, kind, build)?;
    let (status, priced, search) = if kind.has_switching() {
        let m = solve_milp(&lp, solve)?;
        if m.lp.primal.is_empty() {
            return Err(RunError::NoSolution { model: kind, status: m.status() });
        }
        let priced = fix_and_resolve(&lp, &m.binaries, solve)?;
        let search = SearchSummary { bound: m.bound, gap: m.gap, node_count: m.node_count };
        (m.status(), priced, Some(search))
    } else {
        let sol = solve_lp(&lp, solve)?;
        if !sol.status.is_optimal() {
            return Err(RunError::NoSolution { model: kind, status: sol.status });
        }
        (sol.status, sol, None)
    };
    // prices and quantities from the same solve
    let dispatch = DispatchResult::decode(case, &lp, &priced.primal, priced.objective);
    let lmps = nodal_lmps(case, &lp, &priced)?;
    let settlement = settlement(case, &dispatch, &lmps);
    let violations = check_dispatch(case, &dispatch, kind, build)?;
    log::info!("{kind}: {status:?}, objective {:.2}, {} violations", dispatch.objective, violations.entries.len());
    Ok(ModelRun { kind, lp, status, priced, search, dispatch, lmps, settlement, violations, elapsed: start.elapsed() })
}
