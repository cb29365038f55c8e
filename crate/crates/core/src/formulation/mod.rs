//! Assembly of the four stochastic DC-OPF models as tagged sparse programs.
//!
//! Every row and every bounded column carries the number of the dispatch
//! constraint it implements, so the constraint mix of a build can be audited
//! against the model taxonomy (see [`ModelKind::equations`]).
//!
//! Internally all power quantities are per unit on the case base; the flow
//! definition reads `p = (theta_i - theta_j) / x` in per unit, which is
//! `base_mva * (theta_i - theta_j) / x` in MW.

mod constraints;
mod dispatch;

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net_model::{BranchRecord, PowerSystemCase};

pub use dispatch::{ContingencyDispatch, DispatchResult, ScenarioDispatch};
pub use constraints::{
    add_base_columns, add_base_constraints, add_contingency_constraints, add_reconfiguration_constraints,
    add_thermal_limit_rows,
};

/// The four dispatch models, from network-free to switching-enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "R_SOPF")]
    RSopf,
    #[serde(rename = "N_SOPF")]
    NSopf,
    #[serde(rename = "E_SOPF")]
    ESopf,
    #[serde(rename = "E_SOPF_NR")]
    ESopfNr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::RSopf, ModelKind::NSopf, ModelKind::ESopf, ModelKind::ESopfNr];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::RSopf => "R-SOPF",
            ModelKind::NSopf => "N-SOPF",
            ModelKind::ESopf => "E-SOPF",
            ModelKind::ESopfNr => "E-SOPFwNR",
        }
    }

    /// Command-line shorthand.
    pub fn short(self) -> &'static str {
        match self {
            ModelKind::RSopf => "r",
            ModelKind::NSopf => "n",
            ModelKind::ESopf => "e",
            ModelKind::ESopfNr => "enr",
        }
    }

    pub fn from_short(s: &str) -> Option<Self> {
        ModelKind::ALL.into_iter().find(|k| k.short().eq_ignore_ascii_case(s))
    }

    pub fn enforces_base_limits(self) -> bool {
        self != ModelKind::RSopf
    }

    pub fn has_contingencies(self) -> bool {
        matches!(self, ModelKind::ESopf | ModelKind::ESopfNr)
    }

    pub fn has_switching(self) -> bool {
        self == ModelKind::ESopfNr
    }

    /// Constraint numbers the model enforces, in rows or column bounds.
    pub fn equations(self) -> BTreeSet<u8> {
        let mut eqs: BTreeSet<u8> = [3, 4, 5, 6, 7, 9, 10, 11, 12, 13].into_iter().collect();
        match self {
            ModelKind::RSopf => {}
            ModelKind::NSopf => {
                eqs.insert(8);
            }
            ModelKind::ESopf => eqs.extend([8, 14, 15, 16, 17]),
            ModelKind::ESopfNr => eqs.extend([8, 14, 17, 18, 19, 20, 21]),
        }
        eqs
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Decision variable families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarKind {
    /// thermal output
    P,
    /// spinning reserve
    R,
    /// scheduled renewable output
    PIr,
    /// renewable curtailment
    CIr,
    Theta,
    Flow,
    ThetaC,
    FlowC,
    /// post-contingency line status, 1 = closed
    Z,
}

impl VarKind {
    fn prefix(self) -> &'static str {
        match self {
            VarKind::P => "p",
            VarKind::R => "r",
            VarKind::PIr => "pir",
            VarKind::CIr => "cir",
            VarKind::Theta => "th",
            VarKind::Flow => "f",
            VarKind::ThetaC => "thc",
            VarKind::FlowC => "fc",
            VarKind::Z => "z",
        }
    }
}

/// Identifies one decision variable. `element` indexes the case's unit, bus
/// or branch list according to `kind`; `contingency` indexes the case's
/// contingency list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VariableRef {
    pub kind: VarKind,
    pub scenario: usize,
    pub contingency: Option<usize>,
    pub element: usize,
}

impl VariableRef {
    pub fn base(kind: VarKind, scenario: usize, element: usize) -> Self {
        VariableRef { kind, scenario, contingency: None, element }
    }

    pub fn post(kind: VarKind, scenario: usize, contingency: usize, element: usize) -> Self {
        VariableRef { kind, scenario, contingency: Some(contingency), element }
    }
}

/// Constraint provenance. `Bound` marks column bounds that are modeling
/// conventions rather than dispatch constraints (angle limits, angle datum).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Equation {
    Balance,
    Ramp,
    OutputLimit,
    RenewableSplit,
    RenewableNonNegative,
    ThermalLimit,
    FlowDefinition,
    SpinRamp,
    Capacity,
    UnitReserve,
    RenewableReserve,
    ContingencyBalance,
    EmergencyLimit,
    ContingencyFlow,
    OutageFlow,
    SwitchedLimit,
    BigMLower,
    BigMUpper,
    SwitchBudget,
    Bound,
}

impl Equation {
    pub fn number(self) -> Option<u8> {
        use Equation::*;
        Some(match self {
            Balance => 3,
            Ramp => 4,
            OutputLimit => 5,
            RenewableSplit => 6,
            RenewableNonNegative => 7,
            ThermalLimit => 8,
            FlowDefinition => 9,
            SpinRamp => 10,
            Capacity => 11,
            UnitReserve => 12,
            RenewableReserve => 13,
            ContingencyBalance => 14,
            EmergencyLimit => 15,
            ContingencyFlow => 16,
            OutageFlow => 17,
            SwitchedLimit => 18,
            BigMLower => 19,
            BigMUpper => 20,
            SwitchBudget => 21,
            Bound => return None,
        })
    }

    pub fn label(self) -> String {
        match self.number() {
            Some(n) => format!("eq{n:02}"),
            None => "bound".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    Bus(usize),
    Branch(usize),
    Thermal(usize),
    Renewable(usize),
    System,
}

/// Which half of a two-sided constraint a row carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowTag {
    pub eq: Equation,
    pub scenario: usize,
    pub contingency: Option<usize>,
    pub element: Element,
    pub side: Option<Side>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub var: VariableRef,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
    pub integer: bool,
    pub bound_tag: Option<Equation>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: RowTag,
    pub name: String,
}

/// A built dispatch model. Power in per unit, objective in currency per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub kind: ModelKind,
    pub base_mva: f64,
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
    index: HashMap<VariableRef, usize>,
}

impl LinearProgram {
    pub fn new(kind: ModelKind, base_mva: f64) -> Self {
        LinearProgram { kind, base_mva, columns: Vec::new(), rows: Vec::new(), index: HashMap::new() }
    }

    pub fn add_column(&mut self, column: Column) -> usize {
        let j = self.columns.len();
        let prev = self.index.insert(column.var, j);
        assert!(prev.is_none(), "duplicate variable {:?}", column.var);
        self.columns.push(column);
        j
    }

    /// Adds a row, merging repeated columns and dropping zero coefficients.
    pub fn add_row(&mut self, terms: impl IntoIterator<Item = (usize, f64)>, sense: Sense, rhs: f64, tag: RowTag, name: String) {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for (j, v) in terms {
            match coeffs.iter_mut().find(|(jj, _)| *jj == j) {
                Some(e) => e.1 += v,
                None => coeffs.push((j, v)),
            }
        }
        coeffs.retain(|&(_, v)| v != 0.0);
        self.rows.push(Row { coeffs, sense, rhs, tag, name });
    }

    pub fn column_of(&self, var: &VariableRef) -> Option<usize> {
        self.index.get(var).copied()
    }

    pub fn num_binaries(&self) -> usize {
        self.columns.iter().filter(|c| c.integer).count()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.coeffs.len()).sum()
    }

    /// Constraint numbers present in rows and column bounds.
    pub fn equations(&self) -> BTreeSet<u8> {
        self.rows
            .iter()
            .filter_map(|r| r.tag.eq.number())
            .chain(self.columns.iter().filter_map(|c| c.bound_tag.and_then(Equation::number)))
            .collect()
    }

    /// Number of rows per constraint tag.
    pub fn row_counts(&self) -> std::collections::BTreeMap<Equation, usize> {
        let mut out = std::collections::BTreeMap::new();
        for r in &self.rows {
            *out.entry(r.tag.eq).or_insert(0) += 1;
        }
        out
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.columns.iter().zip(x).map(|(c, v)| c.cost * v).sum()
    }

    /// Returns a copy with integrality dropped.
    pub fn relaxed(&self) -> LinearProgram {
        let mut lp = self.clone();
        lp.columns.iter_mut().for_each(|c| c.integer = false);
        lp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BigMMode {
    /// `2 * angle_bound / x_k`, the largest flow-equation residual the angle
    /// bounds allow.
    PerLineTight,
    /// Fixed value in per unit.
    Constant(f64),
    /// With a switching budget of one line, opening line k leaves every other
    /// line of the post-contingency network closed, so the angle difference
    /// across k is bounded by the shortest path between its ends weighted by
    /// `x_l * LimitC_l`. Falls back to [`BigMMode::PerLineTight`] for larger
    /// budgets.
    ShortestPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Bus angle bound in radians; `None` leaves angles free.
    pub angle_bound: Option<f64>,
    pub big_m: BigMMode,
    pub enable_reserve: bool,
    pub ignore_ramp: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { angle_bound: Some(PI), big_m: BigMMode::ShortestPath, enable_reserve: true, ignore_ramp: false }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulationError {
    #[error("{0} needs a nonempty contingency set")]
    NoContingencies(ModelKind),
    #[error("unit {unit}: bounds [{lower}, {upper}] MW are infeasible")]
    InfeasibleBounds { unit: String, lower: f64, upper: f64 },
    #[error("big-M constant must be positive, got {0}")]
    NonPositiveBigM(f64),
    #[error("angle bound must be positive, got {0}")]
    NonPositiveAngleBound(f64),
    #[error("per-line big-M needs finite angle bounds")]
    AngleBoundRequired,
    #[error("contingency index {0} is out of range")]
    UnknownContingency(usize),
}

/// Big-M constant of the switched flow equations for `branch`, per unit.
/// The shortest-path mode needs the network and is resolved by
/// [`big_m_in_network`]; here it behaves like the per-line mode.
pub fn big_m(branch: &BranchRecord, opts: &BuildOptions) -> Result<f64, FormulationError> {
    match opts.big_m {
        BigMMode::Constant(v) if v > 0.0 => Ok(v),
        BigMMode::Constant(v) => Err(FormulationError::NonPositiveBigM(v)),
        BigMMode::PerLineTight | BigMMode::ShortestPath => match opts.angle_bound {
            Some(a) if a > 0.0 => Ok(2.0 * a / branch.reactance.abs()),
            Some(a) => Err(FormulationError::NonPositiveAngleBound(a)),
            None => Err(FormulationError::AngleBoundRequired),
        },
    }
}

/// Big-M of line `k` (index) in the network without branch `out` (index).
pub fn big_m_in_network(case: &PowerSystemCase, out: usize, k: usize, opts: &BuildOptions) -> Result<f64, FormulationError> {
    let branch = &case.branches[k];
    if opts.big_m != BigMMode::ShortestPath || case.z_max > 1 {
        return big_m(branch, opts);
    }
    let from = case.bus_index(branch.from_bus).expect("validated");
    let to = case.bus_index(branch.to_bus).expect("validated");
    let path = shortest_angle_path(case, &[out, k], from, to);
    let cap = opts.angle_bound.map_or(f64::INFINITY, |a| 2.0 * a);
    let spread = path.min(cap);
    if spread.is_finite() {
        Ok(spread / branch.reactance.abs())
    } else {
        Err(FormulationError::AngleBoundRequired)
    }
}

/// Largest angle difference between buses `a` and `b` (indices) that the
/// emergency ratings allow when `removed` branches are out: Dijkstra over
/// edge weights `|x_l| * LimitC_l` in per unit.
fn shortest_angle_path(case: &PowerSystemCase, removed: &[usize], a: usize, b: usize) -> f64 {
    let n = case.buses.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[a] = 0.0;
    for _ in 0..n {
        let Some(u) = (0..n).filter(|&u| !done[u] && dist[u].is_finite()).min_by(|&u, &v| dist[u].total_cmp(&dist[v])) else {
            break;
        };
        if u == b {
            break;
        }
        done[u] = true;
        for (l, br) in case.branches.iter().enumerate() {
            if removed.contains(&l) {
                continue;
            }
            let (i, j) = (case.bus_index(br.from_bus).expect("validated"), case.bus_index(br.to_bus).expect("validated"));
            let v = if i == u { j } else if j == u { i } else { continue };
            let w = br.reactance.abs() * br.limit_emergency / case.base_mva;
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
            }
        }
    }
    dist[b]
}

/// A post-contingency line opening forced on an E-SOPF build: in scenario
/// `scenario` under contingency `contingency` (index into the case list) the
/// branch with index `branch` is taken out of service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Opening {
    pub scenario: usize,
    pub contingency: usize,
    pub branch: usize,
}

fn check_options(case: &PowerSystemCase, kind: ModelKind, opts: &BuildOptions) -> Result<(), FormulationError> {
    if let Some(a) = opts.angle_bound {
        if !(a > 0.0) {
            return Err(FormulationError::NonPositiveAngleBound(a));
        }
    }
    if kind.has_contingencies() && case.contingency_set.is_empty() {
        return Err(FormulationError::NoContingencies(kind));
    }
    for &g in &case.online_units() {
        let u = &case.thermal_units[g];
        if u.p_min > u.p_max {
            return Err(FormulationError::InfeasibleBounds { unit: u.id.clone(), lower: u.p_min, upper: u.p_max });
        }
    }
    if kind.has_switching() {
        if let Some(br) = case.branches.first() {
            big_m(br, opts)?;
        }
    }
    Ok(())
}

/// Builds the program for `kind`.
pub fn build_model(case: &PowerSystemCase, kind: ModelKind, opts: &BuildOptions) -> Result<LinearProgram, FormulationError> {
    check_options(case, kind, opts)?;
    let mut lp = LinearProgram::new(kind, case.base_mva);
    add_base_columns(&mut lp, case, opts);
    add_base_constraints(&mut lp, case, opts);
    if kind.enforces_base_limits() {
        add_thermal_limit_rows(&mut lp, case);
    }
    if kind.has_contingencies() {
        add_contingency_constraints(&mut lp, case, opts, &[])?;
    }
    if kind.has_switching() {
        add_reconfiguration_constraints(&mut lp, case, opts)?;
    }
    Ok(lp)
}

/// Builds an E-SOPF program in which the given lines are out of service in
/// their post-contingency networks. Used to evaluate fixed switching plans.
pub fn build_with_openings(
    case: &PowerSystemCase,
    opts: &BuildOptions,
    openings: &[Opening],
) -> Result<LinearProgram, FormulationError> {
    check_options(case, ModelKind::ESopf, opts)?;
    let mut lp = LinearProgram::new(ModelKind::ESopf, case.base_mva);
    add_base_columns(&mut lp, case, opts);
    add_base_constraints(&mut lp, case, opts);
    add_thermal_limit_rows(&mut lp, case);
    add_contingency_constraints(&mut lp, case, opts, openings)?;
    Ok(lp)
}

pub(crate) fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-' { c } else { '_' }).collect()
}
