use serde::{Deserialize, Serialize};

use super::{LinearProgram, ModelKind, VarKind};
use crate::net_model::{BranchId, PowerSystemCase};

/// Solver values in engineering units. Vectors are aligned with the case's
/// units, buses and branches; powers in MW, angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub model: ModelKind,
    /// currency per hour
    pub objective: f64,
    pub scenarios: Vec<ScenarioDispatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDispatch {
    pub weight: f64,
    /// zero for offline units
    pub thermal: Vec<f64>,
    pub reserve: Vec<f64>,
    pub renewable: Vec<f64>,
    pub curtailment: Vec<f64>,
    pub angles: Vec<f64>,
    pub flows: Vec<f64>,
    pub contingencies: Vec<ContingencyDispatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyDispatch {
    pub outage: BranchId,
    pub angles: Vec<f64>,
    pub flows: Vec<f64>,
    /// branches opened by the corrective switching decision
    pub opened: Vec<BranchId>,
}

impl DispatchResult {
    /// Empty dispatch with every quantity at zero and no opened lines.
    pub fn zeros(case: &PowerSystemCase, model: ModelKind) -> Self {
        let (nb, nk) = (case.buses.len(), case.branches.len());
        let scenarios = case
            .scenario_set
            .scenarios
            .iter()
            .map(|sc| ScenarioDispatch {
                weight: sc.weight,
                thermal: vec![0.0; case.thermal_units.len()],
                reserve: vec![0.0; case.thermal_units.len()],
                renewable: vec![0.0; case.renewable_units.len()],
                curtailment: vec![0.0; case.renewable_units.len()],
                angles: vec![0.0; nb],
                flows: vec![0.0; nk],
                contingencies: if model.has_contingencies() {
                    case.contingency_set
                        .outages
                        .iter()
                        .map(|&outage| ContingencyDispatch { outage, angles: vec![0.0; nb], flows: vec![0.0; nk], opened: Vec::new() })
                        .collect()
                } else {
                    Vec::new()
                },
            })
            .collect();
        DispatchResult { model, objective: 0.0, scenarios }
    }

    /// Decodes the column values `x` of a program built from `case`.
    pub fn decode(case: &PowerSystemCase, lp: &LinearProgram, x: &[f64], objective: f64) -> Self {
        let mut d = Self::zeros(case, lp.kind);
        d.objective = objective;
        let base = lp.base_mva;
        for (col, &v) in lp.columns.iter().zip(x) {
            let var = col.var;
            let sc = &mut d.scenarios[var.scenario];
            let e = var.element;
            match (var.kind, var.contingency) {
                (VarKind::P, _) => sc.thermal[e] = v * base,
                (VarKind::R, _) => sc.reserve[e] = v * base,
                (VarKind::PIr, _) => sc.renewable[e] = v * base,
                (VarKind::CIr, _) => sc.curtailment[e] = v * base,
                (VarKind::Theta, _) => sc.angles[e] = v,
                (VarKind::Flow, _) => sc.flows[e] = v * base,
                (VarKind::ThetaC, Some(c)) => sc.contingencies[c].angles[e] = v,
                (VarKind::FlowC, Some(c)) => sc.contingencies[c].flows[e] = v * base,
                (VarKind::Z, Some(c)) if v < 0.5 => sc.contingencies[c].opened.push(case.branches[e].id),
                _ => {}
            }
        }
        for sc in &mut d.scenarios {
            for cd in &mut sc.contingencies {
                cd.opened.sort_unstable();
            }
        }
        d
    }

    /// Switch status `z` of branch `k` (index) in scenario `s`, contingency `c`.
    pub fn is_closed(&self, case: &PowerSystemCase, s: usize, c: usize, k: usize) -> bool {
        !self.scenarios[s].contingencies[c].opened.contains(&case.branches[k].id)
    }

    /// Per-scenario curtailment totals, MW.
    pub fn curtailment_totals(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.curtailment.iter().sum()).collect()
    }
}
