//! Power-system instance data: buses, branches, units, scenarios and outages.
//!
//! Cases are read from a single JSON document. Every reader goes through
//! [`load_case`], which either returns a fully validated [`PowerSystemCase`]
//! or a structured [`CaseError`]; partially built cases never escape.

mod topology;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use topology::{bridges, check_islanding, default_contingencies, is_connected, is_connected_without};

pub type BusId = u32;
pub type BranchId = u32;

/// Tolerance on the sum of scenario weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: BusId,
    /// MW
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub id: BranchId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// per unit on the case base
    pub reactance: f64,
    /// long-term rating, MW
    pub limit_normal: f64,
    /// short-term emergency rating, MW
    pub limit_emergency: f64,
    #[serde(default = "default_true")]
    pub switchable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalUnit {
    pub id: String,
    pub bus: BusId,
    pub p_min: f64,
    pub p_max: f64,
    /// Output at the start of the dispatch interval. Required for online units
    /// unless ramp limits are ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_initial: Option<f64>,
    /// MW per dispatch interval
    pub ramp_interval: f64,
    /// MW deliverable as spinning reserve within 10 minutes
    pub ramp_spin: f64,
    /// currency per MWh
    pub cost: f64,
    #[serde(default = "default_true")]
    pub online: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewableUnit {
    pub id: String,
    pub bus: BusId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub weight: f64,
    /// Forecast maximum output per renewable unit id, MW.
    pub forecast_max: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

/// Single-branch outages, by branch id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContingencySet {
    pub outages: Vec<BranchId>,
}

impl ContingencySet {
    pub fn len(&self) -> usize {
        self.outages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outages.is_empty()
    }
}

fn default_true() -> bool {
    true
}

/// Validated problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystemCase {
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub thermal_units: Vec<ThermalUnit>,
    pub renewable_units: Vec<RenewableUnit>,
    pub scenario_set: ScenarioSet,
    pub contingency_set: ContingencySet,
    pub z_max: u32,
    pub reference_bus: BusId,
    pub ignore_ramp: bool,
    index: CaseIndex,
}

/// Position lookups derived from the record lists.
#[derive(Debug, Clone, PartialEq, Default)]
struct CaseIndex {
    bus: HashMap<BusId, usize>,
    branch: HashMap<BranchId, usize>,
    renewable: HashMap<String, usize>,
}

/// On-disk shape of a case. Optional keys take their documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDocument {
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub thermal_units: Vec<ThermalUnit>,
    #[serde(default)]
    pub renewable_units: Vec<RenewableUnit>,
    pub scenarios: Vec<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contingencies: Option<Vec<BranchId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_bus: Option<BusId>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ignore_ramp: bool,
}

fn default_base_mva() -> f64 {
    100.0
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid case: {0}")]
    Invalid(#[from] Invariant),
    #[error("unknown branch id {0}")]
    UnknownBranch(BranchId),
}

/// The case invariant that a document violates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Invariant {
    #[error("base_mva must be positive, got {0}")]
    BaseMva(f64),
    #[error("case has no buses")]
    NoBuses,
    #[error("bus id {0} is not unique")]
    DuplicateBus(BusId),
    #[error("bus {bus}: load must be non-negative, got {load}")]
    NegativeLoad { bus: BusId, load: f64 },
    #[error("branch id {0} is not unique")]
    DuplicateBranch(BranchId),
    #[error("branch {0}: from_bus equals to_bus")]
    SelfLoop(BranchId),
    #[error("branch {0}: reactance must be nonzero")]
    ZeroReactance(BranchId),
    #[error("branch {branch}: need 0 < limit_normal <= limit_emergency, got {normal} and {emergency}")]
    BranchLimits { branch: BranchId, normal: f64, emergency: f64 },
    #[error("{what} references unknown bus {bus}")]
    UnknownBus { what: String, bus: BusId },
    #[error("unit id {0} is not unique")]
    DuplicateUnit(String),
    #[error("unit {unit}: need 0 <= p_min <= p_max, got {p_min} and {p_max}")]
    UnitLimits { unit: String, p_min: f64, p_max: f64 },
    #[error("unit {unit}: {field} must be non-negative, got {value}")]
    NegativeUnitField { unit: String, field: &'static str, value: f64 },
    #[error("online unit {0} has no p_initial and ramp limits are not ignored")]
    MissingInitialOutput(String),
    #[error("scenario set is empty")]
    NoScenarios,
    #[error("scenario {scenario}: weight must be positive, got {weight}")]
    NonPositiveWeight { scenario: usize, weight: f64 },
    #[error("scenario weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL}")]
    WeightSum { sum: f64 },
    #[error("scenario {scenario}: no forecast for renewable unit {unit}")]
    MissingForecast { scenario: usize, unit: String },
    #[error("scenario {scenario}: forecast names unknown renewable unit {unit}")]
    UnknownForecastUnit { scenario: usize, unit: String },
    #[error("scenario {scenario}: forecast for {unit} must be non-negative, got {value}")]
    NegativeForecast { scenario: usize, unit: String, value: f64 },
    #[error("contingency references unknown branch {0}")]
    UnknownContingencyBranch(BranchId),
    #[error("outage of branch {0} islands the network")]
    IslandingContingency(BranchId),
    #[error("contingency on branch {0} listed twice")]
    DuplicateContingency(BranchId),
    #[error("network is not connected")]
    Disconnected,
    #[error("switch budget z_max must be non-negative, got {0}")]
    NegativeSwitchBudget(i64),
    #[error("non-finite value in field {0}")]
    NonFinite(String),
}

impl PowerSystemCase {
    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.index.bus.get(&id).copied()
    }

    pub fn branch_index(&self, id: BranchId) -> Option<usize> {
        self.index.branch.get(&id).copied()
    }

    pub fn renewable_index(&self, id: &str) -> Option<usize> {
        self.index.renewable.get(id).copied()
    }

    pub fn reference_index(&self) -> usize {
        self.index.bus[&self.reference_bus]
    }

    /// Indices of online thermal units, the set G of the dispatch models.
    pub fn online_units(&self) -> Vec<usize> {
        (0..self.thermal_units.len()).filter(|&g| self.thermal_units[g].online).collect()
    }

    /// Branch indices of the contingency list.
    pub fn contingency_branches(&self) -> Vec<usize> {
        self.contingency_set.outages.iter().map(|id| self.index.branch[id]).collect()
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load).sum()
    }

    /// Forecast of renewable unit `i` (index) in scenario `s`, MW.
    pub fn forecast(&self, s: usize, i: usize) -> f64 {
        self.scenario_set.scenarios[s].forecast_max[&self.renewable_units[i].id]
    }

    pub fn to_document(&self) -> CaseDocument {
        CaseDocument {
            base_mva: self.base_mva,
            buses: self.buses.clone(),
            branches: self.branches.clone(),
            thermal_units: self.thermal_units.clone(),
            renewable_units: self.renewable_units.clone(),
            scenarios: self.scenario_set.scenarios.clone(),
            contingencies: Some(self.contingency_set.outages.clone()),
            z_max: Some(self.z_max as i64),
            reference_bus: Some(self.reference_bus),
            ignore_ramp: self.ignore_ramp,
        }
    }

    /// Serializes every field explicitly, including derived defaults.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("case serializes")
    }

    /// Returns a copy with the scenario set replaced, revalidated.
    pub fn with_scenarios(&self, scenarios: ScenarioSet) -> Result<Self, CaseError> {
        let mut doc = self.to_document();
        doc.scenarios = scenarios.scenarios;
        PowerSystemCase::from_document(doc)
    }

    /// Returns a copy with a different contingency list, revalidated.
    pub fn with_contingencies(&self, outages: Vec<BranchId>) -> Result<Self, CaseError> {
        let mut doc = self.to_document();
        doc.contingencies = Some(outages);
        PowerSystemCase::from_document(doc)
    }

    /// Returns a copy with a different switch budget.
    pub fn with_z_max(&self, z_max: u32) -> Self {
        PowerSystemCase { z_max, ..self.clone() }
    }

    /// Builds and validates a case from an in-memory document.
    pub fn from_document(doc: CaseDocument) -> Result<Self, CaseError> {
        let index = validate_records(&doc)?;
        let z_max = match doc.z_max {
            None => 1,
            Some(z) if z < 0 => return Err(Invariant::NegativeSwitchBudget(z).into()),
            Some(z) => z as u32,
        };
        let reference_bus = match doc.reference_bus {
            Some(id) => {
                if !index.bus.contains_key(&id) {
                    return Err(Invariant::UnknownBus { what: "reference_bus".into(), bus: id }.into());
                }
                id
            }
            None => doc.buses.iter().map(|b| b.id).min().expect("buses nonempty"),
        };
        let mut case = PowerSystemCase {
            base_mva: doc.base_mva,
            buses: doc.buses,
            branches: doc.branches,
            thermal_units: doc.thermal_units,
            renewable_units: doc.renewable_units,
            scenario_set: ScenarioSet { scenarios: doc.scenarios },
            contingency_set: ContingencySet::default(),
            z_max,
            reference_bus,
            ignore_ramp: doc.ignore_ramp,
            index,
        };
        if !is_connected(&case, None) {
            return Err(Invariant::Disconnected.into());
        }
        case.contingency_set = match doc.contingencies {
            None => default_contingencies(&case),
            Some(outages) => {
                let mut seen = HashSet::new();
                for &id in &outages {
                    if !seen.insert(id) {
                        return Err(Invariant::DuplicateContingency(id).into());
                    }
                    let Some(k) = case.branch_index(id) else {
                        return Err(Invariant::UnknownContingencyBranch(id).into());
                    };
                    if !is_connected(&case, Some(k)) {
                        return Err(Invariant::IslandingContingency(id).into());
                    }
                }
                ContingencySet { outages }
            }
        };
        Ok(case)
    }
}

fn finite(name: impl Fn() -> String, v: f64) -> Result<(), Invariant> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Invariant::NonFinite(name()))
    }
}

fn validate_records(doc: &CaseDocument) -> Result<CaseIndex, Invariant> {
    if !(doc.base_mva.is_finite() && doc.base_mva > 0.0) {
        return Err(Invariant::BaseMva(doc.base_mva));
    }
    if doc.buses.is_empty() {
        return Err(Invariant::NoBuses);
    }
    let mut index = CaseIndex::default();
    for (n, bus) in doc.buses.iter().enumerate() {
        finite(|| format!("buses[{n}].load"), bus.load)?;
        if index.bus.insert(bus.id, n).is_some() {
            return Err(Invariant::DuplicateBus(bus.id));
        }
        if bus.load < 0.0 {
            return Err(Invariant::NegativeLoad { bus: bus.id, load: bus.load });
        }
    }
    let known_bus = |what: String, bus: BusId| -> Result<(), Invariant> {
        if index.bus.contains_key(&bus) {
            Ok(())
        } else {
            Err(Invariant::UnknownBus { what, bus })
        }
    };
    for (k, br) in doc.branches.iter().enumerate() {
        for (field, v) in [("reactance", br.reactance), ("limit_normal", br.limit_normal), ("limit_emergency", br.limit_emergency)] {
            finite(|| format!("branches[{k}].{field}"), v)?;
        }
        if index.branch.insert(br.id, k).is_some() {
            return Err(Invariant::DuplicateBranch(br.id));
        }
        known_bus(format!("branch {}", br.id), br.from_bus)?;
        known_bus(format!("branch {}", br.id), br.to_bus)?;
        if br.from_bus == br.to_bus {
            return Err(Invariant::SelfLoop(br.id));
        }
        if br.reactance == 0.0 {
            return Err(Invariant::ZeroReactance(br.id));
        }
        if !(br.limit_normal > 0.0 && br.limit_normal <= br.limit_emergency) {
            return Err(Invariant::BranchLimits { branch: br.id, normal: br.limit_normal, emergency: br.limit_emergency });
        }
    }
    let mut unit_ids = HashSet::new();
    for (g, u) in doc.thermal_units.iter().enumerate() {
        for (field, v) in [("p_min", u.p_min), ("p_max", u.p_max), ("ramp_interval", u.ramp_interval), ("ramp_spin", u.ramp_spin), ("cost", u.cost)] {
            finite(|| format!("thermal_units[{g}].{field}"), v)?;
        }
        if let Some(p0) = u.p_initial {
            finite(|| format!("thermal_units[{g}].p_initial"), p0)?;
        }
        if !unit_ids.insert(u.id.clone()) {
            return Err(Invariant::DuplicateUnit(u.id.clone()));
        }
        known_bus(format!("thermal unit {}", u.id), u.bus)?;
        if !(0.0 <= u.p_min && u.p_min <= u.p_max) {
            return Err(Invariant::UnitLimits { unit: u.id.clone(), p_min: u.p_min, p_max: u.p_max });
        }
        for (field, value) in [("ramp_interval", u.ramp_interval), ("ramp_spin", u.ramp_spin), ("cost", u.cost)] {
            if value < 0.0 {
                return Err(Invariant::NegativeUnitField { unit: u.id.clone(), field, value });
            }
        }
        if u.online && u.p_initial.is_none() && !doc.ignore_ramp {
            return Err(Invariant::MissingInitialOutput(u.id.clone()));
        }
    }
    for (i, r) in doc.renewable_units.iter().enumerate() {
        if !unit_ids.insert(r.id.clone()) {
            return Err(Invariant::DuplicateUnit(r.id.clone()));
        }
        known_bus(format!("renewable unit {}", r.id), r.bus)?;
        index.renewable.insert(r.id.clone(), i);
    }
    if doc.scenarios.is_empty() {
        return Err(Invariant::NoScenarios);
    }
    let mut sum = 0.0;
    for (s, sc) in doc.scenarios.iter().enumerate() {
        finite(|| format!("scenarios[{s}].weight"), sc.weight)?;
        if sc.weight <= 0.0 {
            return Err(Invariant::NonPositiveWeight { scenario: s, weight: sc.weight });
        }
        sum += sc.weight;
        for r in &doc.renewable_units {
            match sc.forecast_max.get(&r.id) {
                None => return Err(Invariant::MissingForecast { scenario: s, unit: r.id.clone() }),
                Some(&v) => {
                    finite(|| format!("scenarios[{s}].forecast_max.{}", r.id), v)?;
                    if v < 0.0 {
                        return Err(Invariant::NegativeForecast { scenario: s, unit: r.id.clone(), value: v });
                    }
                }
            }
        }
        if let Some(unit) = sc.forecast_max.keys().find(|k| !index.renewable.contains_key(*k)) {
            return Err(Invariant::UnknownForecastUnit { scenario: s, unit: unit.clone() });
        }
    }
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Invariant::WeightSum { sum });
    }
    Ok(index)
}

fn parse_error(e: serde_json::Error) -> CaseError {
    CaseError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

/// Parses and validates a case document.
pub fn load_case(text: &str) -> Result<PowerSystemCase, CaseError> {
    let doc: CaseDocument = serde_json::from_str(text).map_err(parse_error)?;
    PowerSystemCase::from_document(doc)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OverlayDocument {
    Wrapped { scenarios: Vec<Scenario> },
    Bare(Vec<Scenario>),
}

/// Parses a scenario overlay: either `{"scenarios": [...]}` or a bare array.
/// Structural checks against a case happen in [`PowerSystemCase::with_scenarios`].
pub fn load_scenarios(text: &str) -> Result<ScenarioSet, CaseError> {
    let doc: OverlayDocument = serde_json::from_str(text).map_err(parse_error)?;
    let scenarios = match doc {
        OverlayDocument::Wrapped { scenarios } | OverlayDocument::Bare(scenarios) => scenarios,
    };
    Ok(ScenarioSet { scenarios })
}

/// The bundled one-area RTS-96 case with ten equiprobable renewable scenarios.
pub const RTS96_ONE_AREA: &str = include_str!("../../data/rts96_one_area.json");
