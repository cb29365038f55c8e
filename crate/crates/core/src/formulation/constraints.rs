
use super::{
    big_m_in_network, sanitize, BuildOptions, Column, Element, Equation, FormulationError, LinearProgram, Opening, RowTag,
    Sense, Side, VarKind, VariableRef,
};
use crate::net_model::PowerSystemCase;

fn element_label(case: &PowerSystemCase, e: Element) -> String {
    match e {
        Element::Bus(n) => format!("b{}", case.buses[n].id),
        Element::Branch(k) => format!("k{}", case.branches[k].id),
        Element::Thermal(g) => format!("g{}", sanitize(&case.thermal_units[g].id)),
        Element::Renewable(i) => format!("w{}", sanitize(&case.renewable_units[i].id)),
        Element::System => "sys".to_string(),
    }
}

fn contingency_label(case: &PowerSystemCase, c: Option<usize>) -> String {
    match c {
        Some(c) => format!("_c{}", case.contingency_set.outages[c]),
        None => String::new(),
    }
}

pub(crate) fn row_name(case: &PowerSystemCase, tag: &RowTag) -> String {
    let side = match tag.side {
        Some(Side::Lower) => "_lo",
        Some(Side::Upper) => "_up",
        None => "",
    };
    format!(
        "{}_s{}{}_{}{}",
        tag.eq.label(),
        tag.scenario,
        contingency_label(case, tag.contingency),
        element_label(case, tag.element),
        side
    )
}

pub(crate) fn column_name(case: &PowerSystemCase, var: &VariableRef) -> String {
    let element = match var.kind {
        VarKind::P | VarKind::R => Element::Thermal(var.element),
        VarKind::PIr | VarKind::CIr => Element::Renewable(var.element),
        VarKind::Theta | VarKind::ThetaC => Element::Bus(var.element),
        VarKind::Flow | VarKind::FlowC | VarKind::Z => Element::Branch(var.element),
    };
    format!(
        "{}_s{}{}_{}",
        var.kind.prefix(),
        var.scenario,
        contingency_label(case, var.contingency),
        element_label(case, element)
    )
}

struct Builder<'a> {
    lp: &'a mut LinearProgram,
    case: &'a PowerSystemCase,
}

impl Builder<'_> {
    fn column(&mut self, var: VariableRef, lower: f64, upper: f64, cost: f64, bound_tag: Option<Equation>) -> usize {
        let name = column_name(self.case, &var);
        self.lp.add_column(Column { var, lower, upper, cost, integer: false, bound_tag, name })
    }

    fn col(&self, var: VariableRef) -> usize {
        self.lp.column_of(&var).unwrap_or_else(|| panic!("missing column {var:?}"))
    }

    fn row(&mut self, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64, tag: RowTag) {
        let name = row_name(self.case, &tag);
        self.lp.add_row(terms, sense, rhs, tag, name);
    }

    fn angle_bounds(&self, opts: &BuildOptions, n: usize) -> (f64, f64, Option<Equation>) {
        if n == self.case.reference_index() {
            (0.0, 0.0, Some(Equation::Bound))
        } else {
            match opts.angle_bound {
                Some(a) => (-a, a, Some(Equation::Bound)),
                None => (f64::NEG_INFINITY, f64::INFINITY, None),
            }
        }
    }
}

fn tag(eq: Equation, scenario: usize, contingency: Option<usize>, element: Element) -> RowTag {
    RowTag { eq, scenario, contingency, element, side: None }
}

fn sided(mut t: RowTag, side: Side) -> RowTag {
    t.side = Some(side);
    t
}

/// Adds the base-case columns of every scenario with the bounds of the
/// output, renewable and reserve limits. Flows start free; the normal
/// thermal limits are applied by [`add_thermal_limit_rows`].
pub fn add_base_columns(lp: &mut LinearProgram, case: &PowerSystemCase, opts: &BuildOptions) {
    let base = case.base_mva;
    let units = case.online_units();
    let mut b = Builder { lp, case };
    for (s, sc) in case.scenario_set.scenarios.iter().enumerate() {
        for &g in &units {
            let u = &case.thermal_units[g];
            b.column(VariableRef::base(VarKind::P, s, g), u.p_min / base, u.p_max / base, sc.weight * u.cost * base, Some(Equation::OutputLimit));
        }
        for &g in &units {
            let u = &case.thermal_units[g];
            if opts.enable_reserve {
                b.column(VariableRef::base(VarKind::R, s, g), 0.0, u.ramp_spin / base, 0.0, Some(Equation::SpinRamp));
            } else {
                b.column(VariableRef::base(VarKind::R, s, g), 0.0, 0.0, 0.0, None);
            }
        }
        for i in 0..case.renewable_units.len() {
            let cap = case.forecast(s, i) / base;
            b.column(VariableRef::base(VarKind::PIr, s, i), 0.0, cap, 0.0, Some(Equation::RenewableNonNegative));
            b.column(VariableRef::base(VarKind::CIr, s, i), 0.0, cap, 0.0, Some(Equation::RenewableNonNegative));
        }
        for n in 0..case.buses.len() {
            let (lo, up, t) = b.angle_bounds(opts, n);
            b.column(VariableRef::base(VarKind::Theta, s, n), lo, up, 0.0, t);
        }
        for k in 0..case.branches.len() {
            b.column(VariableRef::base(VarKind::Flow, s, k), f64::NEG_INFINITY, f64::INFINITY, 0.0, None);
        }
    }
}

/// Terms of `sum injections + sum inflows - sum outflows` at every bus, for
/// the flow family `flow(k)`.
fn balance_terms(b: &Builder, s: usize, flow: impl Fn(usize) -> VariableRef) -> Vec<Vec<(usize, f64)>> {
    let case = b.case;
    let mut terms = vec![Vec::new(); case.buses.len()];
    for g in case.online_units() {
        let n = case.bus_index(case.thermal_units[g].bus).expect("validated");
        terms[n].push((b.col(VariableRef::base(VarKind::P, s, g)), 1.0));
    }
    for (i, r) in case.renewable_units.iter().enumerate() {
        let n = case.bus_index(r.bus).expect("validated");
        terms[n].push((b.col(VariableRef::base(VarKind::PIr, s, i)), 1.0));
    }
    for (k, br) in case.branches.iter().enumerate() {
        let j = b.col(flow(k));
        terms[case.bus_index(br.to_bus).expect("validated")].push((j, 1.0));
        terms[case.bus_index(br.from_bus).expect("validated")].push((j, -1.0));
    }
    terms
}

/// `flow - theta_from / x + theta_to / x`
fn flow_terms(b: &Builder, k: usize, flow: usize, theta: impl Fn(usize) -> usize) -> Vec<(usize, f64)> {
    let case = b.case;
    let br = &case.branches[k];
    let i = case.bus_index(br.from_bus).expect("validated");
    let j = case.bus_index(br.to_bus).expect("validated");
    vec![(flow, 1.0), (theta(i), -1.0 / br.reactance), (theta(j), 1.0 / br.reactance)]
}

/// Balance, ramping, renewable split, flow definition and reserve rows of
/// every scenario.
pub fn add_base_constraints(lp: &mut LinearProgram, case: &PowerSystemCase, opts: &BuildOptions) {
    let base = case.base_mva;
    let units = case.online_units();
    let ignore_ramp = opts.ignore_ramp || case.ignore_ramp;
    let mut b = Builder { lp, case };
    for s in 0..case.scenario_set.len() {
        let balance = balance_terms(&b, s, |k| VariableRef::base(VarKind::Flow, s, k));
        for (n, terms) in balance.into_iter().enumerate() {
            b.row(terms, Sense::Eq, case.buses[n].load / base, tag(Equation::Balance, s, None, Element::Bus(n)));
        }
        if !ignore_ramp {
            for &g in &units {
                let u = &case.thermal_units[g];
                let p0 = u.p_initial.unwrap_or(0.0);
                let p = b.col(VariableRef::base(VarKind::P, s, g));
                let t = tag(Equation::Ramp, s, None, Element::Thermal(g));
                b.row(vec![(p, 1.0)], Sense::Ge, (p0 - u.ramp_interval) / base, sided(t, Side::Lower));
                b.row(vec![(p, 1.0)], Sense::Le, (p0 + u.ramp_interval) / base, sided(t, Side::Upper));
            }
        }
        for i in 0..case.renewable_units.len() {
            let terms = vec![
                (b.col(VariableRef::base(VarKind::PIr, s, i)), 1.0),
                (b.col(VariableRef::base(VarKind::CIr, s, i)), 1.0),
            ];
            b.row(terms, Sense::Eq, case.forecast(s, i) / base, tag(Equation::RenewableSplit, s, None, Element::Renewable(i)));
        }
        for k in 0..case.branches.len() {
            let f = b.col(VariableRef::base(VarKind::Flow, s, k));
            let terms = flow_terms(&b, k, f, |n| b.col(VariableRef::base(VarKind::Theta, s, n)));
            b.row(terms, Sense::Eq, 0.0, tag(Equation::FlowDefinition, s, None, Element::Branch(k)));
        }
        if !opts.enable_reserve {
            continue;
        }
        let reserves: Vec<usize> = units.iter().map(|&g| b.col(VariableRef::base(VarKind::R, s, g))).collect();
        for (&g, &r) in units.iter().zip(&reserves) {
            let p = b.col(VariableRef::base(VarKind::P, s, g));
            let cap = case.thermal_units[g].p_max / base;
            b.row(vec![(p, 1.0), (r, 1.0)], Sense::Le, cap, tag(Equation::Capacity, s, None, Element::Thermal(g)));
        }
        for (&g, &r) in units.iter().zip(&reserves) {
            let p = b.col(VariableRef::base(VarKind::P, s, g));
            let mut terms: Vec<(usize, f64)> = reserves.iter().map(|&m| (m, 1.0)).collect();
            terms.push((p, -1.0));
            terms.push((r, -1.0));
            b.row(terms, Sense::Ge, 0.0, tag(Equation::UnitReserve, s, None, Element::Thermal(g)));
        }
        for i in 0..case.renewable_units.len() {
            let mut terms: Vec<(usize, f64)> = reserves.iter().map(|&m| (m, 1.0)).collect();
            terms.push((b.col(VariableRef::base(VarKind::PIr, s, i)), -1.0));
            b.row(terms, Sense::Ge, 0.0, tag(Equation::RenewableReserve, s, None, Element::Renewable(i)));
        }
    }
}

/// Bounds every base-case flow by the normal rating.
pub fn add_thermal_limit_rows(lp: &mut LinearProgram, case: &PowerSystemCase) {
    for s in 0..case.scenario_set.len() {
        for (k, br) in case.branches.iter().enumerate() {
            let j = lp.column_of(&VariableRef::base(VarKind::Flow, s, k)).expect("flow columns exist");
            let limit = br.limit_normal / case.base_mva;
            let col = &mut lp.columns[j];
            col.lower = -limit;
            col.upper = limit;
            col.bound_tag = Some(Equation::ThermalLimit);
        }
    }
}

/// Post-contingency networks for every (scenario, contingency) pair.
///
/// In a switching model (`lp.kind` has switching) the flows of switchable
/// lines get the `±LimitC` bounds under the switched-limit tag and no flow
/// definition row; [`add_reconfiguration_constraints`] supplies the switched
/// rows. Branches listed in `openings` are out of service in their copy.
pub fn add_contingency_constraints(
    lp: &mut LinearProgram,
    case: &PowerSystemCase,
    opts: &BuildOptions,
    openings: &[Opening],
) -> Result<(), FormulationError> {
    let base = case.base_mva;
    let switching = lp.kind.has_switching();
    let outaged = case.contingency_branches();
    for o in openings {
        if o.contingency >= outaged.len() {
            return Err(FormulationError::UnknownContingency(o.contingency));
        }
    }
    let mut b = Builder { lp, case };
    for s in 0..case.scenario_set.len() {
        for (c, &out) in outaged.iter().enumerate() {
            for n in 0..case.buses.len() {
                let (lo, up, t) = b.angle_bounds(opts, n);
                b.column(VariableRef::post(VarKind::ThetaC, s, c, n), lo, up, 0.0, t);
            }
            let opened = |k: usize| openings.iter().any(|o| o.scenario == s && o.contingency == c && o.branch == k);
            for (k, br) in case.branches.iter().enumerate() {
                let limit = br.limit_emergency / base;
                let var = VariableRef::post(VarKind::FlowC, s, c, k);
                if k == out {
                    b.column(var, 0.0, 0.0, 0.0, Some(Equation::OutageFlow));
                } else if opened(k) {
                    b.column(var, 0.0, 0.0, 0.0, Some(Equation::SwitchedLimit));
                } else if switching && br.switchable {
                    b.column(var, -limit, limit, 0.0, Some(Equation::SwitchedLimit));
                } else {
                    b.column(var, -limit, limit, 0.0, Some(Equation::EmergencyLimit));
                }
            }
            let balance = balance_terms(&b, s, |k| VariableRef::post(VarKind::FlowC, s, c, k));
            for (n, terms) in balance.into_iter().enumerate() {
                b.row(terms, Sense::Eq, case.buses[n].load / base, tag(Equation::ContingencyBalance, s, Some(c), Element::Bus(n)));
            }
            for (k, br) in case.branches.iter().enumerate() {
                if k == out || opened(k) || (switching && br.switchable) {
                    continue;
                }
                let f = b.col(VariableRef::post(VarKind::FlowC, s, c, k));
                let terms = flow_terms(&b, k, f, |n| b.col(VariableRef::post(VarKind::ThetaC, s, c, n)));
                b.row(terms, Sense::Eq, 0.0, tag(Equation::ContingencyFlow, s, Some(c), Element::Branch(k)));
            }
        }
    }
    Ok(())
}

/// Line-status binaries with switched limits, big-M flow equations and the
/// per-contingency switching budget.
pub fn add_reconfiguration_constraints(
    lp: &mut LinearProgram,
    case: &PowerSystemCase,
    opts: &BuildOptions,
) -> Result<(), FormulationError> {
    let base = case.base_mva;
    let outaged = case.contingency_branches();
    let mut b = Builder { lp, case };
    for s in 0..case.scenario_set.len() {
        for (c, &out) in outaged.iter().enumerate() {
            let mut budget = Vec::new();
            let mut switchable = 0usize;
            for (k, br) in case.branches.iter().enumerate() {
                if k == out || !br.switchable {
                    continue;
                }
                let m = big_m_in_network(case, out, k, opts)?;
                let limit = br.limit_emergency / base;
                let var = VariableRef::post(VarKind::Z, s, c, k);
                let name = column_name(case, &var);
                let z = b.lp.add_column(Column { var, lower: 0.0, upper: 1.0, cost: 0.0, integer: true, bound_tag: None, name });
                let f = b.col(VariableRef::post(VarKind::FlowC, s, c, k));
                let t = tag(Equation::SwitchedLimit, s, Some(c), Element::Branch(k));
                b.row(vec![(f, 1.0), (z, limit)], Sense::Ge, 0.0, sided(t, Side::Lower));
                b.row(vec![(f, 1.0), (z, -limit)], Sense::Le, 0.0, sided(t, Side::Upper));
                // (1 - z) M moved to the right-hand side
                let mut lower = flow_terms(&b, k, f, |n| b.col(VariableRef::post(VarKind::ThetaC, s, c, n)));
                let mut upper = lower.clone();
                lower.push((z, -m));
                upper.push((z, m));
                b.row(lower, Sense::Ge, -m, tag(Equation::BigMLower, s, Some(c), Element::Branch(k)));
                b.row(upper, Sense::Le, m, tag(Equation::BigMUpper, s, Some(c), Element::Branch(k)));
                budget.push((z, 1.0));
                switchable += 1;
            }
            if switchable > 0 {
                // sum (1 - z) <= z_max
                let rhs = switchable as f64 - case.z_max as f64;
                b.row(budget, Sense::Ge, rhs, tag(Equation::SwitchBudget, s, Some(c), Element::System));
            }
        }
    }
    Ok(())
}
