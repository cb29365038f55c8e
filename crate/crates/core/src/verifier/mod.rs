//! Independent feasibility checks of decoded dispatches and the brute-force
//! switching oracle.
//!
//! Every residual is recomputed from the case data; nothing is read back
//! from an assembled program, so a formulation mistake shows up here as a
//! violation instead of being checked against itself.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{
    big_m_in_network, build_with_openings, BuildOptions, DispatchResult, Equation, FormulationError, ModelKind, Opening,
    ScenarioDispatch,
};
use crate::net_model::{is_connected_without, BranchId, PowerSystemCase};
use crate::solver::{solve_lp, SolveOptions, SolveStatus, SolverError};

/// Residual tolerance in per unit.
pub const TOL_PU: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("dispatch does not cover the model: {0}")]
    Coverage(String),
    #[error("network is islanded with branches {0:?} out of service")]
    Islanded(Vec<BranchId>),
    #[error("unknown branch {0}")]
    UnknownBranch(BranchId),
    #[error("oracle needs {needed} programs, more than the limit of {limit}")]
    TooLarge { needed: u128, limit: u128 },
    #[error("no switching assignment is feasible")]
    NoFeasibleAssignment,
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub tag: Equation,
    pub scenario: usize,
    /// outaged branch
    pub contingency: Option<BranchId>,
    pub element: String,
    /// MW for power rows, radians for angle bounds
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub entries: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_clean(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|v| v.residual).fold(0.0, f64::max)
    }

    /// Columns tag, scenario, contingency, element, residual, tolerance.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["tag", "scenario", "contingency", "element", "residual", "tolerance"]).expect("in-memory write");
        for v in &self.entries {
            w.write_record([
                v.tag.label(),
                v.scenario.to_string(),
                v.contingency.map_or(String::new(), |c| c.to_string()),
                v.element.clone(),
                v.residual.to_string(),
                v.tolerance.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

struct Checker<'a> {
    case: &'a PowerSystemCase,
    report: ViolationReport,
    scenario: usize,
    contingency: Option<BranchId>,
    tol_mw: f64,
    tol_rad: f64,
}

impl Checker<'_> {
    fn push(&mut self, tag: Equation, element: String, residual: f64, tolerance: f64) {
        if residual > tolerance || residual.is_nan() {
            self.report.entries.push(Violation { tag, scenario: self.scenario, contingency: self.contingency, element, residual, tolerance });
        }
    }

    fn mw(&mut self, tag: Equation, element: impl Into<String>, residual: f64) {
        self.push(tag, element.into(), residual, self.tol_mw);
    }

    fn rad(&mut self, tag: Equation, element: impl Into<String>, residual: f64) {
        self.push(tag, element.into(), residual, self.tol_rad);
    }

    /// Balance residual per bus for the given flows.
    fn balance(&mut self, tag: Equation, sc: &ScenarioDispatch, flows: &[f64]) {
        let case = self.case;
        let mut net: Vec<f64> = case.buses.iter().map(|b| -b.load).collect();
        for (u, p) in case.thermal_units.iter().zip(&sc.thermal) {
            net[case.bus_index(u.bus).expect("validated")] += p;
        }
        for (u, p) in case.renewable_units.iter().zip(&sc.renewable) {
            net[case.bus_index(u.bus).expect("validated")] += p;
        }
        for (br, f) in case.branches.iter().zip(flows) {
            net[case.bus_index(br.to_bus).expect("validated")] += f;
            net[case.bus_index(br.from_bus).expect("validated")] -= f;
        }
        for (b, r) in case.buses.iter().zip(net) {
            self.mw(tag, format!("bus {}", b.id), r.abs());
        }
    }

    fn angles(&mut self, angles: &[f64], bound: Option<f64>) {
        let case = self.case;
        let reference = case.reference_index();
        for (n, (b, &a)) in case.buses.iter().zip(angles).enumerate() {
            if n == reference {
                self.rad(Equation::Bound, format!("bus {} reference", b.id), a.abs());
            } else if let Some(bound) = bound {
                self.rad(Equation::Bound, format!("bus {}", b.id), a.abs() - bound);
            }
        }
    }

    /// `flow - (theta_from - theta_to) / x`, MW.
    fn flow_residual(&self, k: usize, flow: f64, angles: &[f64]) -> f64 {
        let br = &self.case.branches[k];
        let i = self.case.bus_index(br.from_bus).expect("validated");
        let j = self.case.bus_index(br.to_bus).expect("validated");
        flow - (angles[i] - angles[j]) / br.reactance * self.case.base_mva
    }
}

fn coverage(case: &PowerSystemCase, d: &DispatchResult, kind: ModelKind) -> Result<(), VerifyError> {
    let gap = |what: &str, got: usize, want: usize| {
        if got == want {
            Ok(())
        } else {
            Err(VerifyError::Coverage(format!("{what}: {got} values for {want} elements")))
        }
    };
    gap("scenarios", d.scenarios.len(), case.scenario_set.len())?;
    for sc in &d.scenarios {
        gap("thermal", sc.thermal.len(), case.thermal_units.len())?;
        gap("reserve", sc.reserve.len(), case.thermal_units.len())?;
        gap("renewable", sc.renewable.len(), case.renewable_units.len())?;
        gap("curtailment", sc.curtailment.len(), case.renewable_units.len())?;
        gap("angles", sc.angles.len(), case.buses.len())?;
        gap("flows", sc.flows.len(), case.branches.len())?;
        let want = if kind.has_contingencies() { case.contingency_set.len() } else { 0 };
        gap("contingencies", sc.contingencies.len(), want)?;
        for (cd, &out) in sc.contingencies.iter().zip(&case.contingency_set.outages) {
            if cd.outage != out {
                return Err(VerifyError::Coverage(format!("contingency on branch {} where the case lists {out}", cd.outage)));
            }
            gap("contingency angles", cd.angles.len(), case.buses.len())?;
            gap("contingency flows", cd.flows.len(), case.branches.len())?;
            if let Some(&b) = cd.opened.iter().find(|&&b| case.branch_index(b).is_none()) {
                return Err(VerifyError::UnknownBranch(b));
            }
        }
    }
    Ok(())
}

/// Checks every constraint of `kind` on `dispatch`. Power residuals are in
/// MW with tolerance `TOL_PU * base_mva`; angle residuals in radians with
/// tolerance `TOL_PU`.
pub fn check_dispatch(
    case: &PowerSystemCase,
    dispatch: &DispatchResult,
    kind: ModelKind,
    opts: &BuildOptions,
) -> Result<ViolationReport, VerifyError> {
    coverage(case, dispatch, kind)?;
    let mut ck = Checker { case, report: ViolationReport::default(), scenario: 0, contingency: None, tol_mw: TOL_PU * case.base_mva, tol_rad: TOL_PU };
    let ignore_ramp = opts.ignore_ramp || case.ignore_ramp;
    for (s, sc) in dispatch.scenarios.iter().enumerate() {
        ck.scenario = s;
        ck.contingency = None;
        ck.balance(Equation::Balance, sc, &sc.flows);
        for (g, u) in case.thermal_units.iter().enumerate() {
            let (p, name) = (sc.thermal[g], format!("unit {}", u.id));
            if !u.online {
                ck.mw(Equation::OutputLimit, name.clone(), p.abs());
                ck.mw(Equation::SpinRamp, name, sc.reserve[g].abs());
                continue;
            }
            let g = name;
            ck.mw(Equation::OutputLimit, g.clone(), (u.p_min - p).max(p - u.p_max));
            if !ignore_ramp {
                let p0 = u.p_initial.unwrap_or(0.0);
                ck.mw(Equation::Ramp, g, (p0 - u.ramp_interval - p).max(p - p0 - u.ramp_interval));
            }
        }
        for (i, u) in case.renewable_units.iter().enumerate() {
            let w = format!("unit {}", u.id);
            let (p, c) = (sc.renewable[i], sc.curtailment[i]);
            ck.mw(Equation::RenewableSplit, w.clone(), (p + c - case.forecast(s, i)).abs());
            ck.mw(Equation::RenewableNonNegative, w, (-p).max(-c));
        }
        check_reserve(&mut ck, sc, opts.enable_reserve);
        ck.angles(&sc.angles, opts.angle_bound);
        for (k, br) in case.branches.iter().enumerate() {
            let f = sc.flows[k];
            ck.mw(Equation::FlowDefinition, format!("branch {}", br.id), ck.flow_residual(k, f, &sc.angles).abs());
            if kind.enforces_base_limits() {
                ck.mw(Equation::ThermalLimit, format!("branch {}", br.id), f.abs() - br.limit_normal);
            }
        }
        for (c, cd) in sc.contingencies.iter().enumerate() {
            ck.contingency = Some(cd.outage);
            check_contingency(&mut ck, sc, c, kind, opts)?;
        }
    }
    Ok(ck.report)
}

fn check_reserve(ck: &mut Checker, sc: &ScenarioDispatch, enabled: bool) {
    let case = ck.case;
    let online: Vec<usize> = case.online_units();
    if !enabled {
        for &g in &online {
            ck.mw(Equation::SpinRamp, format!("unit {}", case.thermal_units[g].id), sc.reserve[g].abs());
        }
        return;
    }
    let total: f64 = online.iter().map(|&g| sc.reserve[g]).sum();
    for &g in &online {
        let u = &case.thermal_units[g];
        let (p, r) = (sc.thermal[g], sc.reserve[g]);
        let name = format!("unit {}", u.id);
        ck.mw(Equation::SpinRamp, name.clone(), (-r).max(r - u.ramp_spin));
        ck.mw(Equation::Capacity, name.clone(), p + r - u.p_max);
        ck.mw(Equation::UnitReserve, name, p + r - total);
    }
    for (u, &p) in case.renewable_units.iter().zip(&sc.renewable) {
        ck.mw(Equation::RenewableReserve, format!("unit {}", u.id), p - total);
    }
}

fn check_contingency(
    ck: &mut Checker,
    sc: &ScenarioDispatch,
    c: usize,
    kind: ModelKind,
    opts: &BuildOptions,
) -> Result<(), VerifyError> {
    let case = ck.case;
    let cd = &sc.contingencies[c];
    let out = case.branch_index(cd.outage).expect("validated");
    ck.balance(Equation::ContingencyBalance, sc, &cd.flows);
    ck.angles(&cd.angles, opts.angle_bound);
    let opened: Vec<usize> = cd.opened.iter().map(|&b| case.branch_index(b).expect("checked")).collect();
    let budget = if kind.has_switching() { case.z_max as usize } else { 0 };
    let over = opened.len().saturating_sub(budget);
    ck.push(Equation::SwitchBudget, "system".into(), over as f64, 0.0);
    for (k, br) in case.branches.iter().enumerate() {
        let f = cd.flows[k];
        let name = format!("branch {}", br.id);
        if k == out {
            ck.mw(Equation::OutageFlow, name, f.abs());
            continue;
        }
        let is_open = opened.contains(&k);
        if is_open && !(kind.has_switching() && br.switchable) {
            ck.push(Equation::SwitchBudget, format!("{name} not switchable"), 1.0, 0.0);
        }
        let residual = ck.flow_residual(k, f, &cd.angles);
        if kind.has_switching() && br.switchable {
            let z = if is_open { 0.0 } else { 1.0 };
            ck.mw(Equation::SwitchedLimit, name.clone(), f.abs() - z * br.limit_emergency);
            let m = big_m_in_network(case, out, k, opts)? * case.base_mva;
            ck.mw(Equation::BigMLower, name.clone(), -residual - m * (1.0 - z));
            ck.mw(Equation::BigMUpper, name, residual - m * (1.0 - z));
        } else {
            ck.mw(Equation::EmergencyLimit, name.clone(), f.abs() - br.limit_emergency);
            ck.mw(Equation::ContingencyFlow, name, residual.abs());
        }
    }
    Ok(())
}

/// Post-contingency flows (MW) of scenario `s` from the DC load flow of the
/// network without `outage` and the `opened` branches, with the dispatch's
/// injections. `outage = None` gives the base-case flows.
pub fn recompute_contingency_flows(
    case: &PowerSystemCase,
    dispatch: &DispatchResult,
    scenario: usize,
    outage: Option<BranchId>,
    opened: &[BranchId],
) -> Result<Vec<f64>, VerifyError> {
    let sc = dispatch.scenarios.get(scenario).ok_or_else(|| VerifyError::Coverage(format!("no scenario {scenario}")))?;
    let mut removed = Vec::new();
    for &b in outage.iter().chain(opened) {
        removed.push(case.branch_index(b).ok_or(VerifyError::UnknownBranch(b))?);
    }
    let islanded = || VerifyError::Islanded(outage.iter().chain(opened).copied().collect());
    if !is_connected_without(case, &removed) {
        return Err(islanded());
    }
    let n = case.buses.len();
    let base = case.base_mva;
    let mut injection = DVector::from_iterator(n, case.buses.iter().map(|b| -b.load / base));
    for (u, p) in case.thermal_units.iter().zip(&sc.thermal) {
        injection[case.bus_index(u.bus).expect("validated")] += p / base;
    }
    for (u, p) in case.renewable_units.iter().zip(&sc.renewable) {
        injection[case.bus_index(u.bus).expect("validated")] += p / base;
    }
    let mut b = DMatrix::<f64>::zeros(n, n);
    let ends = |k: usize| {
        let br = &case.branches[k];
        (case.bus_index(br.from_bus).expect("validated"), case.bus_index(br.to_bus).expect("validated"))
    };
    for k in (0..case.branches.len()).filter(|k| !removed.contains(k)) {
        let (i, j) = ends(k);
        let y = 1.0 / case.branches[k].reactance;
        b[(i, i)] += y;
        b[(j, j)] += y;
        b[(i, j)] -= y;
        b[(j, i)] -= y;
    }
    let reference = case.reference_index();
    let keep: Vec<usize> = (0..n).filter(|&i| i != reference).collect();
    let reduced = b.select_rows(&keep).select_columns(&keep);
    let rhs = injection.select_rows(&keep);
    let theta_r = reduced.lu().solve(&rhs).ok_or_else(islanded)?;
    let mut theta = vec![0.0; n];
    for (t, &i) in theta_r.iter().zip(&keep) {
        theta[i] = *t;
    }
    Ok((0..case.branches.len())
        .map(|k| {
            if removed.contains(&k) {
                0.0
            } else {
                let (i, j) = ends(k);
                (theta[i] - theta[j]) / case.branches[k].reactance * base
            }
        })
        .collect())
}

/// Largest post-contingency overload (MW above the emergency rating) over
/// every scenario, contingency and closed branch, by independent load flow.
pub fn worst_post_contingency_overload(case: &PowerSystemCase, dispatch: &DispatchResult) -> Result<f64, VerifyError> {
    let mut worst = f64::NEG_INFINITY;
    for (s, sc) in dispatch.scenarios.iter().enumerate() {
        for cd in &sc.contingencies {
            let flows = recompute_contingency_flows(case, dispatch, s, Some(cd.outage), &cd.opened)?;
            for (br, f) in case.branches.iter().zip(flows) {
                if br.id != cd.outage && !cd.opened.contains(&br.id) {
                    worst = worst.max(f.abs() - br.limit_emergency);
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleLimits {
    /// largest number of linear programs to enumerate
    pub max_programs: u128,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_programs: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub objective: f64,
    pub openings: Vec<Opening>,
    pub programs: usize,
}

/// Exact switching optimum by enumerating, per scenario and contingency,
/// every set of at most `z_max` switchable lines to open, across the joint
/// cross product. Ties keep the first assignment found, which puts fewer
/// and earlier openings first.
pub fn enumerate_switching_oracle(
    case: &PowerSystemCase,
    opts: &BuildOptions,
    solve: &SolveOptions,
    limits: &OracleLimits,
) -> Result<OracleResult, VerifyError> {
    let outaged = case.contingency_branches();
    let mut slots = Vec::new();
    for s in 0..case.scenario_set.len() {
        for (c, &out) in outaged.iter().enumerate() {
            let lines: Vec<usize> = (0..case.branches.len()).filter(|&k| k != out && case.branches[k].switchable).collect();
            slots.push((s, c, subsets(&lines, case.z_max as usize)));
        }
    }
    let needed = slots.iter().try_fold(1u128, |acc, (_, _, o)| acc.checked_mul(o.len() as u128)).unwrap_or(u128::MAX);
    if needed > limits.max_programs {
        return Err(VerifyError::TooLarge { needed, limit: limits.max_programs });
    }
    let mut best: Option<OracleResult> = None;
    let mut choice = vec![0usize; slots.len()];
    for _ in 0..needed {
        let openings: Vec<Opening> = slots
            .iter()
            .zip(&choice)
            .flat_map(|((s, c, options), &i)| options[i].iter().map(|&branch| Opening { scenario: *s, contingency: *c, branch }))
            .collect();
        let lp = build_with_openings(case, opts, &openings)?;
        let sol = solve_lp(&lp, solve)?;
        if sol.status == SolveStatus::Optimal && best.as_ref().is_none_or(|b| sol.objective < b.objective) {
            best = Some(OracleResult { objective: sol.objective, openings, programs: 0 });
        }
        // odometer, last slot fastest
        for (i, slot) in slots.iter().enumerate().rev() {
            choice[i] += 1;
            if choice[i] < slot.2.len() {
                break;
            }
            choice[i] = 0;
        }
    }
    let mut best = best.ok_or(VerifyError::NoFeasibleAssignment)?;
    best.programs = needed as usize;
    Ok(best)
}

/// All subsets of `items` with at most `max` elements, smallest first.
fn subsets(items: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max.min(items.len()) {
        let mut next = Vec::new();
        for set in &frontier {
            let start = set.last().map_or(0, |&l| items.iter().position(|&x| x == l).expect("member") + 1);
            for &k in &items[start..] {
                let mut s = set.clone();
                s.push(k);
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[cfg(test)]
mod tests;
