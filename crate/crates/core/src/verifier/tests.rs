use super::*;
use crate::formulation::{build_model, tests::TRIANGLE, BuildOptions, ModelKind::*};
use crate::net_model::load_case;
use crate::solver::tests::{plain, two_bus};
use crate::solver::{fix_and_resolve, solve_milp};

pub(crate) const TOY4: &str = include_str!("../../data/toy4.json");

fn solve(case: &PowerSystemCase, kind: ModelKind, opts: &BuildOptions) -> DispatchResult {
    let lp = build_model(case, kind, opts).unwrap();
    let sol = if kind.has_switching() {
        solve_milp(&lp, &SolveOptions::default()).unwrap().lp
    } else {
        solve_lp(&lp, &SolveOptions::default()).unwrap()
    };
    assert_eq!(sol.status, SolveStatus::Optimal, "{kind}");
    DispatchResult::decode(case, &lp, &sol.primal, sol.objective)
}

#[test]
fn optimal_outputs_pass() {
    for text in [TRIANGLE, TOY4] {
        let case = load_case(text).unwrap();
        for kind in ModelKind::ALL {
            let opts = BuildOptions::default();
            let d = solve(&case, kind, &opts);
            let r = check_dispatch(&case, &d, kind, &opts).unwrap();
            assert!(r.is_clean(), "{kind}: {:?}", r.entries);
        }
    }
}

#[test]
fn five_megawatt_overload_is_one_entry() {
    let case = load_case(&two_bus(60.0)).unwrap();
    let mut d = DispatchResult::zeros(&case, NSopf);
    let sc = &mut d.scenarios[0];
    sc.thermal = vec![65.0, 35.0];
    sc.flows = vec![65.0];
    // flow = (theta1 - theta2) / x * base with theta1 = 0
    sc.angles = vec![0.0, -0.065];
    let r = check_dispatch(&case, &d, NSopf, &plain()).unwrap();
    assert_eq!(r.entries.len(), 1, "{:?}", r.entries);
    assert_eq!(r.entries[0].tag, Equation::ThermalLimit);
    assert!((r.entries[0].residual - 5.0).abs() < 1e-9);
    assert!(check_dispatch(&case, &d, RSopf, &plain()).unwrap().is_clean());
    let csv = r.to_csv();
    assert_eq!(csv.lines().next(), Some("tag,scenario,contingency,element,residual,tolerance"));
    assert!(csv.lines().nth(1).unwrap().starts_with("eq08,0,,branch 1,5"));
}

#[test]
fn coverage_gaps_are_errors() {
    let case = load_case(TRIANGLE).unwrap();
    let mut d = DispatchResult::zeros(&case, NSopf);
    assert!(matches!(check_dispatch(&case, &d, ESopf, &BuildOptions::default()), Err(VerifyError::Coverage(_))));
    d.scenarios[1].flows.pop();
    assert!(matches!(check_dispatch(&case, &d, NSopf, &BuildOptions::default()), Err(VerifyError::Coverage(_))));
}

/// Every value of the dispatch except reserves, which may sit strictly
/// inside their feasible range, flagged when it is an angle.
fn perturbable(d: &mut DispatchResult) -> Vec<(&mut f64, bool)> {
    let mut out: Vec<(&mut f64, bool)> = Vec::new();
    for sc in &mut d.scenarios {
        out.extend(sc.thermal.iter_mut().map(|v| (v, false)));
        out.extend(sc.renewable.iter_mut().map(|v| (v, false)));
        out.extend(sc.curtailment.iter_mut().map(|v| (v, false)));
        out.extend(sc.angles.iter_mut().map(|v| (v, true)));
        out.extend(sc.flows.iter_mut().map(|v| (v, false)));
        for cd in &mut sc.contingencies {
            out.extend(cd.angles.iter_mut().map(|v| (v, true)));
            out.extend(cd.flows.iter_mut().map(|v| (v, false)));
        }
    }
    out
}

#[test]
fn single_value_perturbations_are_caught() {
    for text in [TRIANGLE, TOY4] {
        let case = load_case(text).unwrap();
        let opts = BuildOptions::default();
        for kind in ModelKind::ALL {
            let d = solve(&case, kind, &opts);
            let n = perturbable(&mut d.clone()).len();
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    let mut p = d.clone();
                    let (v, angle) = perturbable(&mut p).into_iter().nth(i).unwrap();
                    *v += sign * 10.0 * if angle { TOL_PU } else { TOL_PU * case.base_mva };
                    let r = check_dispatch(&case, &p, kind, &opts).unwrap();
                    assert!(!r.is_clean(), "{kind}: value {i} perturbed by {sign}");
                }
            }
        }
    }
}

#[test]
fn base_case_flows_without_outage() {
    let case = load_case(TRIANGLE).unwrap();
    let d = solve(&case, NSopf, &BuildOptions::default());
    for s in 0..2 {
        let f = recompute_contingency_flows(&case, &d, s, None, &[]).unwrap();
        for (a, b) in f.iter().zip(&d.scenarios[s].flows) {
            assert!((a - b).abs() < 1e-6, "{f:?}");
        }
    }
}

#[test]
fn triangle_outage_matches_hand_solve() {
    // injections 100 MW at bus 1, 50 at bus 2, -150 at bus 3; branch 1-2 out.
    // Radial remainder: 2-3 carries 50, 1-3 carries 100.
    let case = load_case(TRIANGLE).unwrap();
    let mut d = DispatchResult::zeros(&case, ESopf);
    d.scenarios[0].thermal = vec![100.0, 50.0];
    let f = recompute_contingency_flows(&case, &d, 0, Some(1), &[]).unwrap();
    assert!(f[0] == 0.0 && (f[1] - 50.0).abs() < 1e-9 && (f[2] - 100.0).abs() < 1e-9, "{f:?}");
    // Meshed network, theta_1 = 0: [20 -10; -10 15] (theta_2, theta_3) = (0.5, -1.5)
    // gives theta_2 = -0.0375, theta_3 = -0.125 and flows 37.5, 87.5, 62.5 MW.
    let f = recompute_contingency_flows(&case, &d, 0, None, &[]).unwrap();
    assert!((f[0] - 37.5).abs() < 1e-9 && (f[1] - 87.5).abs() < 1e-9 && (f[2] - 62.5).abs() < 1e-9, "{f:?}");
}

#[test]
fn islanding_is_an_error() {
    let case = load_case(TRIANGLE).unwrap();
    let d = DispatchResult::zeros(&case, ESopf);
    assert_eq!(recompute_contingency_flows(&case, &d, 0, Some(1), &[2]), Err(VerifyError::Islanded(vec![1, 2])));
    assert_eq!(recompute_contingency_flows(&case, &d, 0, Some(9), &[]), Err(VerifyError::UnknownBranch(9)));
}

#[test]
fn security_holds_under_independent_load_flow() {
    for text in [TRIANGLE, TOY4] {
        let case = load_case(text).unwrap();
        for kind in [ESopf, ESopfNr] {
            let d = solve(&case, kind, &BuildOptions::default());
            let worst = worst_post_contingency_overload(&case, &d).unwrap();
            assert!(worst <= 1e-6, "{kind}: {worst}");
        }
    }
}

#[test]
fn zero_budget_oracle_is_the_secure_optimum() {
    let case = load_case(TOY4).unwrap().with_z_max(0);
    let opts = BuildOptions::default();
    let o = enumerate_switching_oracle(&case, &opts, &SolveOptions::default(), &OracleLimits::default()).unwrap();
    let e = solve(&case, ESopf, &opts);
    assert_eq!(o.programs, 1);
    assert!(o.openings.is_empty());
    assert!((o.objective - e.objective).abs() <= 1e-9 * e.objective.abs());
}

#[test]
fn four_bus_oracle_matches_branch_and_bound() {
    let case = load_case(TOY4).unwrap();
    let opts = BuildOptions::default();
    let o = enumerate_switching_oracle(&case, &opts, &SolveOptions::default(), &OracleLimits::default()).unwrap();
    // two scenarios, one contingency, four candidate lines plus none
    assert_eq!(o.programs, 25);
    let lp = build_model(&case, ESopfNr, &opts).unwrap();
    let m = solve_milp(&lp, &SolveOptions::default()).unwrap();
    assert!((m.objective() - o.objective).abs() <= 1e-6 * o.objective.abs(), "{} vs {}", m.objective(), o.objective);
    let e = solve(&case, ESopf, &opts);
    assert!(o.objective < e.objective - 1.0, "switching should pay: {} vs {}", o.objective, e.objective);
    // after losing 2-4, opening either 1-2 or 2-3 removes the parallel path
    // that overloads 2-3; the first candidate in enumeration order wins the tie
    assert_eq!(o.openings.len(), 2, "{:?}", o.openings);
    assert!(o.openings.iter().all(|op| [1, 5].contains(&case.branches[op.branch].id)));
    // 150 MW of load served from bus 1 at 10 $/MWh once 100 or 60 MW of wind is used
    assert!((o.objective - (0.5 * 50.0 * 10.0 + 0.5 * 90.0 * 10.0)).abs() < 1e-6);
    let fixed = fix_and_resolve(&lp, &m.binaries, &SolveOptions::default()).unwrap();
    assert!((fixed.objective - m.objective()).abs() <= 1e-6 * m.objective().abs());
}

#[test]
fn triangle_where_opening_cannot_help() {
    let case = load_case(TRIANGLE).unwrap();
    let opts = BuildOptions::default();
    let o = enumerate_switching_oracle(&case, &opts, &SolveOptions::default(), &OracleLimits::default()).unwrap();
    let e = solve(&case, ESopf, &opts);
    assert!((o.objective - e.objective).abs() <= 1e-6 * e.objective.abs());
    assert!(o.openings.is_empty(), "{:?}", o.openings);
}

#[test]
fn oracle_refuses_large_instances() {
    let case = load_case(TOY4).unwrap();
    let limits = OracleLimits { max_programs: 10 };
    let r = enumerate_switching_oracle(&case, &BuildOptions::default(), &SolveOptions::default(), &limits);
    assert_eq!(r, Err(VerifyError::TooLarge { needed: 25, limit: 10 }));
}

#[test]
fn subsets_smallest_first() {
    assert_eq!(subsets(&[4, 7, 9], 2), vec![vec![], vec![4], vec![7], vec![9], vec![4, 7], vec![4, 9], vec![7, 9]]);
    assert_eq!(subsets(&[4, 7], 0), vec![Vec::<usize>::new()]);
}
