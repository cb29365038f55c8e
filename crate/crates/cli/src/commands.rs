use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use sopf_core::economics::{emit_reports, SettlementReport};
use sopf_core::formulation::{build_model, DispatchResult, ModelKind};
use sopf_core::solver::{export_mps, export_solution, import_solution, SolveStatus};
use sopf_core::verifier::check_dispatch;

use crate::config::{Format, RunConfig};
use crate::pipeline::{run_model, ModelRun, RunError, SearchSummary};

/// Process exit status. Usage errors exit with 2 through the argument parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exit {
    Clean = 0,
    /// verification found violations, or the model ordering failed
    Violations = 1,
    SolveFailed = 3,
    Input = 4,
}

/// Writes through a temporary file so readers never see a partial artifact.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("")));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))
}

#[derive(Serialize)]
struct SolveRecord<'a> {
    model: ModelKind,
    status: SolveStatus,
    objective: f64,
    search: Option<&'a SearchSummary>,
    settlement: &'a SettlementReport,
    dispatch: &'a DispatchResult,
}

fn file_stem(kind: ModelKind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_else(|| kind.short().to_string())
}

/// Opened lines per scenario and contingency, one line each.
pub fn switching_summary(run: &ModelRun) -> String {
    let mut out = String::new();
    for (s, sc) in run.dispatch.scenarios.iter().enumerate() {
        for cd in &sc.contingencies {
            if !cd.opened.is_empty() {
                let list: Vec<String> = cd.opened.iter().map(u32::to_string).collect();
                let _ = writeln!(out, "  scenario {s}, outage of branch {}: open {}", cd.outage, list.join(", "));
            }
        }
    }
    out
}

fn write_model_artifacts(cfg: &RunConfig, run: &ModelRun, log: &mut String) -> Result<()> {
    let stem = file_stem(run.kind);
    let record = SolveRecord {
        model: run.kind,
        status: run.status,
        objective: run.objective(),
        search: run.search.as_ref(),
        settlement: &run.settlement,
        dispatch: &run.dispatch,
    };
    write_atomic(&cfg.out_dir.join(format!("{stem}_dispatch.json")), &(serde_json::to_string_pretty(&record)? + "\n"))?;
    write_atomic(&cfg.out_dir.join(format!("{stem}_lmp.csv")), &emit_reports(&[run.report()]).lmp_csv)?;
    write_atomic(&cfg.out_dir.join(format!("{stem}_violations.csv")), &run.violations.to_csv())?;
    write_atomic(&cfg.out_dir.join(format!("{stem}_solution.txt")), &export_solution(&run.lp, &run.priced.primal))?;
    let _ = writeln!(log, "{}: solved in {:.3?}", run.kind, run.elapsed);
    Ok(())
}

fn describe(run: &ModelRun) -> String {
    let mut line = format!(
        "{:<10} {:<14} objective {:>14.2}  violations {}",
        run.kind.label(),
        format!("{:?}", run.status),
        run.objective(),
        run.violations.entries.len()
    );
    if let Some(s) = &run.search {
        let _ = write!(line, "  bound {:.2} gap {:.2e} nodes {}", s.bound, s.gap, s.node_count);
    }
    line
}

fn solve_all(cfg: &RunConfig, parallel: bool) -> Vec<(ModelKind, Result<ModelRun, RunError>)> {
    let one = |k: ModelKind| (k, run_model(&cfg.case, k, &cfg.build, &cfg.solve));
    if !parallel {
        return cfg.models.iter().map(|&k| one(k)).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfg.models.iter().map(|&k| scope.spawn(move || one(k))).collect();
        handles.into_iter().map(|h| h.join().expect("model thread panicked")).collect()
    })
}

/// Classifies a failed run: bad input versus a solve that did not finish.
fn failure_exit(e: &RunError) -> Exit {
    match e {
        RunError::NoSolution { .. } | RunError::Solver(_) => Exit::SolveFailed,
        _ => Exit::Input,
    }
}

fn run_exit(run: &ModelRun) -> Exit {
    if !run.status.is_optimal() {
        Exit::SolveFailed
    } else if !run.violations.is_clean() {
        Exit::Violations
    } else {
        Exit::Clean
    }
}

fn finish_runs(cfg: &RunConfig, results: &[(ModelKind, Result<ModelRun, RunError>)], out: &mut String) -> Result<(Exit, String)> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let mut exit = Exit::Clean;
    let mut log = String::new();
    for (kind, r) in results {
        match r {
            Ok(run) => {
                write_model_artifacts(cfg, run, &mut log)?;
                let _ = writeln!(out, "{}", describe(run));
                out.push_str(&switching_summary(run));
                exit = exit.max(run_exit(run));
            }
            Err(e) => {
                let _ = writeln!(out, "{:<10} failed: {e}", kind.label());
                let _ = writeln!(log, "{kind}: failed: {e}");
                exit = exit.max(failure_exit(e));
            }
        }
    }
    Ok((exit, log))
}

pub fn cmd_solve(cfg: &RunConfig, out: &mut String) -> Result<Exit> {
    let results = solve_all(cfg, false);
    let (exit, log) = finish_runs(cfg, &results, out)?;
    write_atomic(&cfg.out_dir.join("run.log"), &log)?;
    Ok(exit)
}

/// Whether `chain` (totals in model order R, N, E-with-switching, E) is
/// non-decreasing within `tol`.
pub fn ordering_holds(r: f64, n: f64, enr: f64, e: f64, tol: f64) -> bool {
    n - r >= -tol && enr - n >= -tol && e - enr >= -tol
}

pub fn cmd_compare(cfg: &RunConfig, out: &mut String) -> Result<Exit> {
    let results = solve_all(cfg, true);
    let (mut exit, log) = finish_runs(cfg, &results, out)?;
    let runs: Vec<&ModelRun> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let reports: Vec<_> = runs.iter().map(|r| r.report()).collect();
    if !reports.is_empty() {
        let t = emit_reports(&reports);
        let (costs, market, ext) = match cfg.format {
            Format::Csv => (&t.cost_csv, &t.market_csv, "csv"),
            Format::Text => (&t.cost_text, &t.market_text, "txt"),
        };
        write_atomic(&cfg.out_dir.join(format!("costs.{ext}")), costs)?;
        write_atomic(&cfg.out_dir.join(format!("market.{ext}")), market)?;
        write_atomic(&cfg.out_dir.join("lmps.csv"), &t.lmp_csv)?;
        let _ = write!(out, "\n{}\n{}", t.cost_text, t.market_text);
    }
    let tc = |k: ModelKind| runs.iter().find(|r| r.kind == k).map(|r| r.objective());
    if let (Some(r), Some(n), Some(enr), Some(e)) =
        (tc(ModelKind::RSopf), tc(ModelKind::NSopf), tc(ModelKind::ESopfNr), tc(ModelKind::ESopf))
    {
        let ok = ordering_holds(r, n, enr, e, 1e-6 * r.abs());
        let _ = writeln!(out, "\nordering R-SOPF <= N-SOPF <= E-SOPFwNR <= E-SOPF: {}", if ok { "pass" } else { "FAIL" });
        if !ok {
            exit = exit.max(Exit::Violations);
        }
    }
    write_atomic(&cfg.out_dir.join("run.log"), &log)?;
    Ok(exit)
}

pub fn cmd_export(cfg: &RunConfig, out: &mut String) -> Result<Exit> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    for &k in &cfg.models {
        let lp = build_model(&cfg.case, k, &cfg.build)?;
        let path = cfg.out_dir.join(format!("{}.mps", file_stem(k)));
        write_atomic(&path, &export_mps(&lp))?;
        let _ = writeln!(out, "{}: {} columns, {} rows -> {}", k.label(), lp.columns.len(), lp.rows.len(), path.display());
    }
    Ok(Exit::Clean)
}

pub fn cmd_verify(cfg: &RunConfig, solution: &Path, out: &mut String) -> Result<Exit> {
    let [kind] = cfg.models[..] else { bail!("verify needs exactly one --model") };
    let lp = build_model(&cfg.case, kind, &cfg.build)?;
    let text = fs::read_to_string(solution).with_context(|| format!("reading solution {}", solution.display()))?;
    let imported = import_solution(&text, &lp).with_context(|| format!("importing {}", solution.display()))?;
    let sol = imported.lp();
    let dispatch = DispatchResult::decode(&cfg.case, &lp, &sol.primal, sol.objective);
    let report = check_dispatch(&cfg.case, &dispatch, kind, &cfg.build)?;
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let csv = report.to_csv();
    write_atomic(&cfg.out_dir.join(format!("{}_violations.csv", file_stem(kind))), &csv)?;
    let _ = writeln!(out, "{}: objective {:.6} recomputed from {} values", kind.label(), sol.objective, sol.primal.len());
    if report.is_clean() {
        let _ = writeln!(out, "no violations");
        Ok(Exit::Clean)
    } else {
        out.push_str(&csv);
        Ok(Exit::Violations)
    }
}
