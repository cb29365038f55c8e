//! MPS export, a reader for the same dialect, and solution import.
//!
//! Sections follow the fixed-format layout, but names are the program's
//! provenance tags and can exceed eight characters, so fields are separated
//! by whitespace (readable by any free-format MPS reader).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use super::{LpSolution, MilpSolution, SolveStatus, SolverError};
use crate::formulation::{LinearProgram, Sense};

const OBJECTIVE_ROW: &str = "COST";

fn unique_names<'a>(names: impl Iterator<Item = &'a str>, taken: &mut HashSet<String>) -> Vec<String> {
    names
        .map(|name| {
            let mut candidate = name.to_string();
            let mut k = 1;
            while taken.contains(&candidate) {
                k += 1;
                candidate = format!("{name}~{k}");
            }
            taken.insert(candidate.clone());
            candidate
        })
        .collect()
}

/// Column and row names as written to MPS: the program's names, with
/// collisions resolved by a `~k` suffix in order of appearance.
pub fn mps_names(lp: &LinearProgram) -> (Vec<String>, Vec<String>) {
    let mut taken = HashSet::new();
    taken.insert(OBJECTIVE_ROW.to_string());
    let rows = unique_names(lp.rows.iter().map(|r| r.name.as_str()), &mut taken);
    let mut taken = HashSet::new();
    let cols = unique_names(lp.columns.iter().map(|c| c.name.as_str()), &mut taken);
    (cols, rows)
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn field_line(out: &mut String, a: &str, b: &str, c: &str) {
    let _ = writeln!(out, "    {a:<8}  {b:<8}  {c:>12}");
}

pub fn export_mps(lp: &LinearProgram) -> String {
    let (cols, rows) = mps_names(lp);
    let mut out = String::new();
    let _ = writeln!(out, "NAME          {}", lp.kind.label());
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N  {OBJECTIVE_ROW}");
    for (r, name) in lp.rows.iter().zip(&rows) {
        let t = match r.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        let _ = writeln!(out, " {t}  {name}");
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.columns.len()];
    for (i, r) in lp.rows.iter().enumerate() {
        for &(j, v) in &r.coeffs {
            by_col[j].push((i, v));
        }
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    for (j, c) in lp.columns.iter().enumerate() {
        let general_int = c.integer && !(c.lower >= 0.0 && c.upper <= 1.0);
        if general_int != in_int {
            let marker = if general_int { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    MARKER    'MARKER'  {marker}");
            in_int = general_int;
        }
        if c.cost != 0.0 {
            field_line(&mut out, &cols[j], OBJECTIVE_ROW, &num(c.cost));
        }
        for &(i, v) in &by_col[j] {
            field_line(&mut out, &cols[j], &rows[i], &num(v));
        }
        if c.cost == 0.0 && by_col[j].is_empty() {
            // keep the column declared
            field_line(&mut out, &cols[j], OBJECTIVE_ROW, "0");
        }
    }
    if in_int {
        let _ = writeln!(out, "    MARKER    'MARKER'  'INTEND'");
    }

    out.push_str("RHS\n");
    for (r, name) in lp.rows.iter().zip(&rows) {
        if r.rhs != 0.0 {
            field_line(&mut out, "RHS", name, &num(r.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for (c, name) in lp.columns.iter().zip(&cols) {
        let bound = |out: &mut String, kind: &str, v: Option<f64>| {
            let _ = match v {
                Some(v) => writeln!(out, " {kind} BND       {name:<8}  {:>12}", num(v)),
                None => writeln!(out, " {kind} BND       {name}"),
            };
        };
        let (l, u) = (c.lower, c.upper);
        if c.integer && l == 0.0 && u == 1.0 {
            bound(&mut out, "BV", None);
        } else if l == u {
            bound(&mut out, "FX", Some(l));
        } else if l == f64::NEG_INFINITY && u == f64::INFINITY {
            bound(&mut out, "FR", None);
        } else {
            if l == f64::NEG_INFINITY {
                bound(&mut out, "MI", None);
            } else if l != 0.0 {
                bound(&mut out, "LO", Some(l));
            }
            if u.is_finite() {
                bound(&mut out, "UP", Some(u));
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

/// A program read back from MPS, in the reader's own indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsModel {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<String>,
    pub senses: Vec<Sense>,
    pub rhs: Vec<f64>,
    /// per row, `(column, coefficient)`
    pub coeffs: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
}

impl MpsModel {
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> SolverError {
    SolverError::Parse { line, message: message.into() }
}

fn parse_num(line: usize, s: &str) -> Result<f64, SolverError> {
    s.parse().map_err(|_| parse_err(line, format!("bad number {s:?}")))
}

/// Reads the whitespace-separated MPS dialect written by [`export_mps`]
/// (no RANGES, no negative upper bounds without a lower bound).
pub fn parse_mps(text: &str) -> Result<MpsModel, SolverError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Rows,
        Columns,
        Rhs,
        Bounds,
    }
    let mut m = MpsModel {
        name: String::new(),
        columns: Vec::new(),
        rows: Vec::new(),
        senses: Vec::new(),
        rhs: Vec::new(),
        coeffs: Vec::new(),
        cost: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        integer: Vec::new(),
    };
    let mut objective = None;
    let mut row_of: HashMap<String, usize> = HashMap::new();
    let mut col_of: HashMap<String, usize> = HashMap::new();
    let mut section = Section::None;
    let mut in_int = false;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let f: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') {
            section = match f[0] {
                "NAME" => {
                    m.name = f.get(1).unwrap_or(&"").to_string();
                    Section::None
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => break,
                other => return Err(parse_err(line, format!("unsupported section {other}"))),
            };
            continue;
        }
        match section {
            Section::Rows => {
                let [t, name] = f[..] else { return Err(parse_err(line, "expected row type and name")) };
                let sense = match t {
                    "N" => {
                        if objective.is_none() {
                            objective = Some(name.to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    _ => return Err(parse_err(line, format!("bad row type {t}"))),
                };
                row_of.insert(name.to_string(), m.rows.len());
                m.rows.push(name.to_string());
                m.senses.push(sense);
                m.rhs.push(0.0);
                m.coeffs.push(Vec::new());
            }
            Section::Columns => {
                if f.get(1) == Some(&"'MARKER'") {
                    in_int = f.get(2) == Some(&"'INTORG'");
                    continue;
                }
                if f.len().is_multiple_of(2) {
                    return Err(parse_err(line, "expected column name and row/value pairs"));
                }
                let j = *col_of.entry(f[0].to_string()).or_insert_with(|| {
                    m.columns.push(f[0].to_string());
                    m.cost.push(0.0);
                    m.lower.push(0.0);
                    m.upper.push(f64::INFINITY);
                    m.integer.push(in_int);
                    m.columns.len() - 1
                });
                for pair in f[1..].chunks(2) {
                    let v = parse_num(line, pair[1])?;
                    if Some(pair[0]) == objective.as_deref() {
                        m.cost[j] += v;
                    } else {
                        let &i = row_of.get(pair[0]).ok_or_else(|| parse_err(line, format!("unknown row {}", pair[0])))?;
                        m.coeffs[i].push((j, v));
                    }
                }
            }
            Section::Rhs => {
                for pair in f[1..].chunks(2) {
                    let [row, v] = pair else { return Err(parse_err(line, "dangling RHS field")) };
                    if Some(*row) == objective.as_deref() {
                        continue;
                    }
                    let &i = row_of.get(*row).ok_or_else(|| parse_err(line, format!("unknown row {row}")))?;
                    m.rhs[i] = parse_num(line, v)?;
                }
            }
            Section::Bounds => {
                if f.len() < 3 {
                    return Err(parse_err(line, "short BOUNDS line"));
                }
                let &j = col_of.get(f[2]).ok_or_else(|| parse_err(line, format!("unknown column {}", f[2])))?;
                let value = || f.get(3).ok_or_else(|| parse_err(line, "missing bound value")).and_then(|v| parse_num(line, v));
                match f[0] {
                    "UP" => m.upper[j] = value()?,
                    "LO" => m.lower[j] = value()?,
                    "FX" => {
                        let v = value()?;
                        m.lower[j] = v;
                        m.upper[j] = v;
                    }
                    "FR" => {
                        m.lower[j] = f64::NEG_INFINITY;
                        m.upper[j] = f64::INFINITY;
                    }
                    "MI" => m.lower[j] = f64::NEG_INFINITY,
                    "PL" => m.upper[j] = f64::INFINITY,
                    "BV" => {
                        m.lower[j] = 0.0;
                        m.upper[j] = 1.0;
                        m.integer[j] = true;
                    }
                    other => return Err(parse_err(line, format!("unsupported bound type {other}"))),
                }
            }
            Section::None => return Err(parse_err(line, "data outside a section")),
        }
    }
    Ok(m)
}

/// A solution read from a `name value` document.
#[derive(Debug, Clone, PartialEq)]
pub enum ImportedSolution {
    Lp(LpSolution),
    Milp(MilpSolution),
}

impl ImportedSolution {
    pub fn lp(&self) -> &LpSolution {
        match self {
            ImportedSolution::Lp(s) => s,
            ImportedSolution::Milp(s) => &s.lp,
        }
    }
}

/// The values of `x` as `name value` lines, readable by [`import_solution`].
pub fn export_solution(lp: &LinearProgram, x: &[f64]) -> String {
    let (cols, _) = mps_names(lp);
    let mut out = String::new();
    for (n, v) in cols.iter().zip(x) {
        let _ = writeln!(out, "{n} {}", num(*v));
    }
    out
}

/// Binds `name value` lines (`#` starts a comment) to the columns of `lp`
/// by their MPS names. Unlisted continuous columns are zero; every binary
/// must be listed. The objective is recomputed from the values.
pub fn import_solution(text: &str, lp: &LinearProgram) -> Result<ImportedSolution, SolverError> {
    let (cols, _) = mps_names(lp);
    let index: HashMap<&str, usize> = cols.iter().enumerate().map(|(j, n)| (n.as_str(), j)).collect();
    let mut x = vec![0.0; lp.columns.len()];
    let mut seen = vec![false; lp.columns.len()];
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let f: Vec<&str> = content.split_whitespace().collect();
        let [name, value] = f[..] else { return Err(parse_err(line, "expected `name value`")) };
        let &j = index.get(name).ok_or_else(|| SolverError::UnknownVariable { line, name: name.to_string() })?;
        x[j] = parse_num(line, value)?;
        seen[j] = true;
    }
    let objective = lp.objective_value(&x);
    let sol = LpSolution {
        status: SolveStatus::Optimal,
        objective,
        primal: x,
        duals: Vec::new(),
        reduced_costs: Vec::new(),
        iterations: 0,
    };
    if lp.num_binaries() == 0 {
        return Ok(ImportedSolution::Lp(sol));
    }
    let mut binaries = BTreeMap::new();
    for (j, c) in lp.columns.iter().enumerate() {
        if c.integer {
            if !seen[j] {
                return Err(SolverError::MissingBinary(cols[j].clone()));
            }
            binaries.insert(c.var, if sol.primal[j] > 0.5 { 1 } else { 0 });
        }
    }
    Ok(ImportedSolution::Milp(MilpSolution { bound: objective, gap: 0.0, node_count: 0, binaries, lp: sol }))
}
