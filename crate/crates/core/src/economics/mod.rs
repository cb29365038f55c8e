//! Congestion costs, nodal prices and market settlement of solved models.
//!
//! Prices are read off the balance-row duals of the base case and, for the
//! security-constrained models, of every contingency copy. Settlement uses
//! those prices together with the scenario-weighted dispatch.

mod reports;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{DispatchResult, Element, Equation, LinearProgram, ModelKind};
use crate::net_model::{BusId, PowerSystemCase};
use crate::solver::LpSolution;

pub use reports::{emit_reports, parse_csv_table, CsvTable, ModelReport, ReportTables};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EconomicsError {
    #[error("congestion costs need a {0} total cost")]
    MissingBenchmark(ModelKind),
    #[error("solution carries no duals (status {0:?})")]
    MissingDuals(crate::solver::SolveStatus),
    #[error("solution has {got} duals for {expected} rows")]
    DualCount { expected: usize, got: usize },
}

/// Total cost per model and the premiums over the network-free and the
/// base-case-only benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub tc: BTreeMap<ModelKind, f64>,
    pub tcc: BTreeMap<ModelKind, f64>,
    /// absent for the network-free model
    pub tccc: BTreeMap<ModelKind, f64>,
}

/// Cost saved by corrective switching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NrReduction {
    pub amount: f64,
    /// percent of the E-SOPF total congestion cost
    pub pct_of_tcc: f64,
    /// percent of the E-SOPF contingency congestion cost
    pub pct_of_tccc: f64,
}

impl CostSummary {
    pub fn nr_reduction(&self) -> Option<NrReduction> {
        let e = ModelKind::ESopf;
        let nr = ModelKind::ESopfNr;
        let amount = self.tcc.get(&e)? - self.tcc.get(&nr)?;
        Some(NrReduction {
            amount,
            pct_of_tcc: 100.0 * amount / self.tcc[&e],
            pct_of_tccc: 100.0 * amount / self.tccc[&e],
        })
    }
}

pub fn congestion_costs(tc_by_model: &BTreeMap<ModelKind, f64>) -> Result<CostSummary, EconomicsError> {
    let r = *tc_by_model.get(&ModelKind::RSopf).ok_or(EconomicsError::MissingBenchmark(ModelKind::RSopf))?;
    let n = *tc_by_model.get(&ModelKind::NSopf).ok_or(EconomicsError::MissingBenchmark(ModelKind::NSopf))?;
    let tcc = tc_by_model.iter().map(|(&k, &v)| (k, v - r)).collect();
    let tccc = tc_by_model.iter().filter(|(&k, _)| k != ModelKind::RSopf).map(|(&k, &v)| (k, v - n)).collect();
    Ok(CostSummary { tc: tc_by_model.clone(), tcc, tccc })
}

/// Nodal prices in currency per MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmpVector {
    pub model: ModelKind,
    pub bus_ids: Vec<BusId>,
    pub per_bus: Vec<f64>,
    pub avg: f64,
    /// load-weighted; equals `avg` when the system carries no load
    pub avg_weighted: f64,
}

impl LmpVector {
    pub fn new(case: &PowerSystemCase, model: ModelKind, per_bus: Vec<f64>) -> Self {
        let n = per_bus.len().max(1) as f64;
        let avg = per_bus.iter().sum::<f64>() / n;
        let load = case.total_load();
        let avg_weighted = if load > 0.0 {
            per_bus.iter().zip(&case.buses).map(|(p, b)| p * b.load).sum::<f64>() / load
        } else {
            avg
        };
        LmpVector { model, bus_ids: case.buses.iter().map(|b| b.id).collect(), per_bus, avg, avg_weighted }
    }

    pub fn spread(&self) -> f64 {
        let max = self.per_bus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.per_bus.iter().copied().fold(f64::INFINITY, f64::min);
        if self.per_bus.is_empty() {
            0.0
        } else {
            max - min
        }
    }
}

/// Sums the balance duals of every scenario (and every contingency copy) per
/// bus. For switching models pass the fixed-topology re-solve.
pub fn nodal_lmps(case: &PowerSystemCase, lp: &LinearProgram, solution: &LpSolution) -> Result<LmpVector, EconomicsError> {
    if !solution.has_duals() {
        return Err(EconomicsError::MissingDuals(solution.status));
    }
    if solution.duals.len() != lp.rows.len() {
        return Err(EconomicsError::DualCount { expected: lp.rows.len(), got: solution.duals.len() });
    }
    let mut per_bus = vec![0.0; case.buses.len()];
    for (row, &y) in lp.rows.iter().zip(&solution.duals) {
        if let (Equation::Balance | Equation::ContingencyBalance, Element::Bus(n)) = (row.tag.eq, row.tag.element) {
            per_bus[n] += y / lp.base_mva;
        }
    }
    Ok(LmpVector::new(case, lp.kind, per_bus))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurtailmentEntry {
    pub scenario: usize,
    pub unit: String,
    /// MW
    pub curtailed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurtailmentReport {
    pub entries: Vec<CurtailmentEntry>,
    /// per scenario, MW
    pub totals: Vec<f64>,
}

impl CurtailmentReport {
    pub fn is_zero(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| e.curtailed.abs() <= tol)
    }

    pub fn get(&self, scenario: usize, unit: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.scenario == scenario && e.unit == unit).map(|e| e.curtailed)
    }
}

pub fn curtailment_report(case: &PowerSystemCase, dispatch: &DispatchResult) -> CurtailmentReport {
    let mut entries = Vec::new();
    for (s, sc) in dispatch.scenarios.iter().enumerate() {
        for (i, u) in case.renewable_units.iter().enumerate() {
            entries.push(CurtailmentEntry { scenario: s, unit: u.id.clone(), curtailed: sc.curtailment[i] });
        }
    }
    CurtailmentReport { entries, totals: dispatch.curtailment_totals() }
}

/// Market quantities in currency per hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub model: ModelKind,
    pub load_payment: f64,
    pub gen_revenue: f64,
    pub renewable_revenue: f64,
    pub gen_cost: f64,
    pub gen_profit: f64,
    pub congestion_revenue: f64,
    pub curtailment: CurtailmentReport,
}

/// Expected generation cost `sum_s w_s sum_g OP_g p_gs` of a dispatch.
pub fn generation_cost(case: &PowerSystemCase, dispatch: &DispatchResult) -> f64 {
    dispatch
        .scenarios
        .iter()
        .map(|sc| sc.weight * case.thermal_units.iter().zip(&sc.thermal).map(|(u, p)| u.cost * p).sum::<f64>())
        .sum()
}

pub fn settlement(case: &PowerSystemCase, dispatch: &DispatchResult, lmps: &LmpVector) -> SettlementReport {
    let price = |bus: BusId| lmps.per_bus[case.bus_index(bus).expect("validated")];
    let load_payment = case.buses.iter().zip(&lmps.per_bus).map(|(b, p)| p * b.load).sum();
    let mut gen_revenue = 0.0;
    let mut renewable_revenue = 0.0;
    for sc in &dispatch.scenarios {
        for (u, p) in case.thermal_units.iter().zip(&sc.thermal) {
            gen_revenue += price(u.bus) * sc.weight * p;
        }
        for (u, p) in case.renewable_units.iter().zip(&sc.renewable) {
            renewable_revenue += price(u.bus) * sc.weight * p;
        }
    }
    let gen_cost = generation_cost(case, dispatch);
    SettlementReport {
        model: dispatch.model,
        load_payment,
        gen_revenue,
        renewable_revenue,
        gen_cost,
        gen_profit: gen_revenue - gen_cost,
        congestion_revenue: load_payment - gen_revenue - renewable_revenue,
        curtailment: curtailment_report(case, dispatch),
    }
}
