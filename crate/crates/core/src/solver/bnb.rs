//! Best-bound branch-and-bound over binary columns.
//!
//! The final incumbent is polished: each binary at zero is raised to one
//! when that does not increase the objective, so a switching decision only
//! opens lines that pay for themselves.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::rc::Rc;
use std::time::Instant;

use super::simplex::{Basis, StandardLp};
use crate::formulation::Sense;
use super::{check_options, solve_standard, to_standard, LpSolution, MilpSolution, SolveOptions, SolveStatus, SolverError};
use crate::formulation::{LinearProgram, VariableRef};

const INT_TOL: f64 = 1e-6;
const HEURISTIC_INTERVAL: usize = 25;

struct Node {
    bound: f64,
    depth: usize,
    id: usize,
    fixes: Vec<(usize, f64)>,
    basis: Option<Rc<Basis>>,
}

// BinaryHeap is a max-heap: the "greatest" node is the one to expand next,
// i.e. lowest bound, then deepest, then earliest created.
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

/// Binaries of which at most one may leave `default`: rows `sum x <= 1`
/// (default 0) or `sum x >= n - 1` (default 1).
struct Group {
    cols: Vec<usize>,
    default: f64,
}

/// Groups of three or more binaries, and the group of every column.
fn groups(lp: &LinearProgram) -> (Vec<Group>, Vec<Option<usize>>) {
    let mut out = Vec::new();
    let mut member = vec![None; lp.columns.len()];
    for r in &lp.rows {
        let n = r.coeffs.len();
        if n < 3 || !r.coeffs.iter().all(|&(j, v)| v == 1.0 && lp.columns[j].integer) {
            continue;
        }
        let default = match r.sense {
            Sense::Le if r.rhs == 1.0 => 0.0,
            Sense::Ge if r.rhs == (n - 1) as f64 => 1.0,
            _ => continue,
        };
        let mut cols: Vec<usize> = r.coeffs.iter().map(|c| c.0).collect();
        cols.sort_by_key(|&j| lp.columns[j].var);
        for &j in &cols {
            member[j].get_or_insert(out.len());
        }
        out.push(Group { cols, default });
    }
    (out, member)
}

struct Search<'a> {
    lp: &'a LinearProgram,
    std: StandardLp,
    opts: &'a SolveOptions,
    deadline: Option<Instant>,
    binaries: Vec<usize>,
    groups: Vec<Group>,
    member: Vec<Option<usize>>,
    incumbent: Option<(LpSolution, Option<Basis>)>,
}

impl Search<'_> {
    fn overrides(&self, fixes: &[(usize, f64)]) -> Vec<(usize, f64, f64)> {
        fixes.iter().map(|&(j, v)| (j, v, v)).collect()
    }

    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((inc, _)) => inc.objective - self.opts.mip_gap * inc.objective.abs().max(1.0),
            None => f64::INFINITY,
        }
    }

    /// Most fractional binary; ties go to the smallest variable reference.
    fn branching_column(&self, x: &[f64]) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for &j in &self.binaries {
            let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
            if frac <= INT_TOL {
                continue;
            }
            let better = match best {
                None => true,
                Some((f, b)) => frac > f + 1e-12 || ((frac - f).abs() <= 1e-12 && self.lp.columns[j].var < self.lp.columns[b].var),
            };
            if better {
                best = Some((frac, j));
            }
        }
        best.map(|(_, j)| j)
    }

    fn offer(&mut self, sol: LpSolution, basis: Option<Basis>) {
        if sol.objective < self.incumbent.as_ref().map_or(f64::INFINITY, |i| i.0.objective) {
            log::debug!("new incumbent {}", sol.objective);
            self.incumbent = Some((sol, basis));
        }
    }

    /// Splits the unfixed members of `j`'s group so that each side carries
    /// part of the fractional mass; each child pins one side at the default.
    fn group_split(&self, j: usize, x: &[f64], fixes: &[(usize, f64)]) -> Option<[Vec<(usize, f64)>; 2]> {
        let g = &self.groups[self.member[j]?];
        let free: Vec<usize> = g.cols.iter().copied().filter(|c| !fixes.iter().any(|f| f.0 == *c)).collect();
        let mass: Vec<f64> = free.iter().map(|&c| (x[c] - g.default).abs()).collect();
        let heavy: Vec<usize> = (0..free.len()).filter(|&i| mass[i] > INT_TOL).collect();
        if heavy.len() < 2 {
            return None;
        }
        let total: f64 = mass.iter().sum();
        let mut cum = 0.0;
        let mut cut = heavy[heavy.len() - 2];
        for &i in &heavy[..heavy.len() - 1] {
            cum += mass[i];
            if cum >= total / 2.0 {
                cut = i;
                break;
            }
        }
        let pin = |cols: &[usize]| cols.iter().map(|&c| (c, g.default)).collect();
        Some([pin(&free[..=cut]), pin(&free[cut + 1..])])
    }

    fn polish(&mut self) {
        let Some((mut inc, mut basis)) = self.incumbent.take() else { return };
        let mut fixes: Vec<(usize, f64)> =
            self.binaries.iter().map(|&j| (j, if inc.primal[j] > 0.5 { 1.0 } else { 0.0 })).collect();
        for i in 0..fixes.len() {
            if fixes[i].1 == 1.0 {
                continue;
            }
            fixes[i].1 = 1.0;
            // a few warm-started solves; runs even past the search deadline
            let (sol, b) = solve_standard(&self.std, &self.overrides(&fixes), basis.as_ref(), self.opts, None);
            let slack = self.opts.optimality_tol * inc.objective.abs().max(1.0);
            if sol.status.is_optimal() && sol.objective <= inc.objective + slack {
                inc = sol;
                basis = b;
            } else {
                fixes[i].1 = 0.0;
            }
        }
        self.incumbent = Some((inc, basis));
    }

    /// Rounds the binaries of `x` and solves the resulting LP; falls back to
    /// rounding every fractional value up.
    fn round(&mut self, x: &[f64], fixes: &[(usize, f64)], basis: Option<&Basis>) {
        // nearest, then up, then every free binary at one
        for pass in 0..3 {
            let mut all: Vec<(usize, f64)> = fixes.to_vec();
            for &j in &self.binaries {
                if fixes.iter().any(|f| f.0 == j) {
                    continue;
                }
                let v = match pass {
                    0 => x[j].round().clamp(0.0, 1.0),
                    1 if x[j] > INT_TOL => 1.0,
                    1 => x[j].round().clamp(0.0, 1.0),
                    _ => 1.0,
                };
                all.push((j, v));
            }
            let (sol, b) = solve_standard(&self.std, &self.overrides(&all), basis, self.opts, self.deadline);
            if sol.status.is_optimal() {
                self.offer(sol, b);
                return;
            }
        }
    }
}

fn binary_map(lp: &LinearProgram, binaries: &[usize], x: &[f64]) -> BTreeMap<VariableRef, u8> {
    binaries.iter().map(|&j| (lp.columns[j].var, if x[j] > 0.5 { 1 } else { 0 })).collect()
}

/// Groups columns into independent blocks: two columns share a block when
/// some row couples them. Blocks are ordered by their first column.
/// Blocks without binaries, or without rows, are merged into one.
fn components(lp: &LinearProgram) -> Vec<Vec<usize>> {
    let n = lp.columns.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for r in &lp.rows {
        if let Some(&(first, _)) = r.coeffs.first() {
            for &(j, _) in &r.coeffs[1..] {
                let (a, b) = (find(&mut parent, first), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut touched = vec![false; n];
    for r in &lp.rows {
        for &(j, _) in &r.coeffs {
            touched[j] = true;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for j in 0..n {
        let root = find(&mut parent, j);
        groups.entry(root).or_default().push(j);
    }
    // blocks without binaries or rows need no search of their own
    let (mut out, rest): (Vec<Vec<usize>>, Vec<Vec<usize>>) =
        groups.into_values().partition(|g| g.iter().any(|&j| lp.columns[j].integer) && touched[g[0]]);
    let mut rest: Vec<usize> = rest.into_iter().flatten().collect();
    if !rest.is_empty() {
        rest.sort_unstable();
        out.push(rest);
        out.sort_by_key(|g| g[0]);
    }
    out
}

/// Restriction of `lp` to `cols` and the rows that touch them.
fn restrict(lp: &LinearProgram, cols: &[usize]) -> (LinearProgram, Vec<usize>) {
    let mut local = vec![usize::MAX; lp.columns.len()];
    let mut sub = LinearProgram::new(lp.kind, lp.base_mva);
    for (k, &j) in cols.iter().enumerate() {
        local[j] = k;
        sub.add_column(lp.columns[j].clone());
    }
    let mut rows = Vec::new();
    for (i, r) in lp.rows.iter().enumerate() {
        if r.coeffs.first().is_some_and(|&(j, _)| local[j] != usize::MAX) {
            sub.add_row(r.coeffs.iter().map(|&(j, v)| (local[j], v)), r.sense, r.rhs, r.tag, r.name.clone());
            rows.push(i);
        }
    }
    (sub, rows)
}

/// Solves a program with binary columns to within `opts.mip_gap`.
///
/// Independent blocks (e.g. scenarios that share no variable) are searched
/// separately and recombined, which keeps the trees additive rather than
/// multiplicative.
pub fn solve_milp(lp: &LinearProgram, opts: &SolveOptions) -> Result<MilpSolution, SolverError> {
    check_options(opts)?;
    let start = Instant::now();
    let deadline = opts.time_limit.map(|d| start + d);
    let blocks = components(lp);
    if blocks.len() <= 1 || lp.rows.iter().any(|r| r.coeffs.is_empty()) {
        return Ok(solve_block(lp, opts, deadline, opts.node_limit));
    }
    let mut primal = vec![0.0; lp.columns.len()];
    let mut duals = vec![0.0; lp.rows.len()];
    let mut reduced = vec![0.0; lp.columns.len()];
    let (mut objective, mut bound, mut nodes, mut iterations) = (0.0, 0.0, 0usize, 0usize);
    let mut status = SolveStatus::Optimal;
    let mut binaries = BTreeMap::new();
    for (b, cols) in blocks.iter().enumerate() {
        let (sub, rows) = restrict(lp, cols);
        let budget = opts.node_limit.map(|l| l.saturating_sub(nodes) / (blocks.len() - b));
        // share the remaining time evenly among the remaining blocks
        let share = deadline.map(|d| {
            let now = Instant::now();
            now + d.saturating_duration_since(now) / (blocks.len() - b) as u32
        });
        let sol = solve_block(&sub, opts, share, budget);
        nodes += sol.node_count;
        iterations += sol.lp.iterations;
        match sol.lp.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible | SolveStatus::Unbounded => {
                return Ok(MilpSolution { lp: LpSolution::failed(sol.lp.status, iterations), binaries: BTreeMap::new(), bound: sol.bound, gap: f64::INFINITY, node_count: nodes })
            }
            other if sol.lp.primal.is_empty() => {
                return Ok(MilpSolution { lp: LpSolution::failed(other, iterations), binaries: BTreeMap::new(), bound: f64::NEG_INFINITY, gap: f64::INFINITY, node_count: nodes })
            }
            other => status = other,
        }
        objective += sol.lp.objective;
        bound += sol.bound;
        for (k, &j) in cols.iter().enumerate() {
            primal[j] = sol.lp.primal[k];
            reduced[j] = sol.lp.reduced_costs[k];
        }
        for (k, &i) in rows.iter().enumerate() {
            duals[i] = sol.lp.duals[k];
        }
        binaries.extend(sol.binaries);
    }
    let gap = (objective - bound).max(0.0) / f64::abs(objective).max(1.0);
    log::info!("branch-and-bound: {} blocks, {nodes} nodes in {:.2?}", blocks.len(), start.elapsed());
    Ok(MilpSolution {
        lp: LpSolution { status, objective, primal, duals, reduced_costs: reduced, iterations },
        binaries,
        bound,
        gap,
        node_count: nodes,
    })
}

fn solve_block(lp: &LinearProgram, opts: &SolveOptions, deadline: Option<Instant>, node_limit: Option<usize>) -> MilpSolution {
    let start = Instant::now();
    let binaries: Vec<usize> = (0..lp.columns.len()).filter(|&j| lp.columns[j].integer).collect();
    let (groups, member) = groups(lp);
    let mut search = Search { lp, std: to_standard(lp), opts, deadline, binaries, groups, member, incumbent: None };

    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, depth: 0, id: 0, fixes: Vec::new(), basis: None });
    let mut next_id = 1;
    let mut nodes = 0usize;
    let mut stop = SolveStatus::Optimal;
    let mut root_status = None;

    while let Some(node) = heap.pop() {
        if node.bound >= search.cutoff() {
            continue;
        }
        if node_limit.is_some_and(|lim| nodes >= lim) {
            heap.push(node);
            stop = SolveStatus::NodeLimit;
            break;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            heap.push(node);
            stop = SolveStatus::TimeLimit;
            break;
        }
        nodes += 1;
        let (sol, basis) =
            solve_standard(&search.std, &search.overrides(&node.fixes), node.basis.as_deref(), opts, deadline);
        if root_status.is_none() {
            root_status = Some(sol.status);
        }
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded if search.binaries.is_empty() || nodes == 1 => {
                return MilpSolution {
                    lp: sol,
                    binaries: BTreeMap::new(),
                    bound: f64::NEG_INFINITY,
                    gap: f64::INFINITY,
                    node_count: nodes,
                }
            }
            other => {
                heap.push(node);
                stop = other;
                break;
            }
        }
        if sol.objective >= search.cutoff() {
            continue;
        }
        let Some(j) = search.branching_column(&sol.primal) else {
            search.offer(sol, basis);
            continue;
        };
        if nodes == 1 || nodes.is_multiple_of(HEURISTIC_INTERVAL) {
            search.round(&sol.primal, &node.fixes, basis.as_ref());
        }
        let basis = basis.map(Rc::new);
        let children = search.group_split(j, &sol.primal, &node.fixes).unwrap_or_else(|| [vec![(j, 0.0)], vec![(j, 1.0)]]);
        for extra in children {
            let mut fixes = node.fixes.clone();
            fixes.extend(extra);
            heap.push(Node { bound: sol.objective, depth: node.depth + 1, id: next_id, fixes, basis: basis.clone() });
            next_id += 1;
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    log::debug!("block search: {nodes} nodes in {:.2?}", start.elapsed());
    search.polish();
    match search.incumbent.take().map(|(inc, _)| inc) {
        Some(mut inc) => {
            let bound = open_bound.min(inc.objective);
            let gap = (inc.objective - bound) / inc.objective.abs().max(1.0);
            inc.status = if gap <= opts.mip_gap { SolveStatus::Optimal } else { stop };
            let binaries = binary_map(lp, &search.binaries, &inc.primal);
            MilpSolution { lp: inc, binaries, bound, gap, node_count: nodes }
        }
        None => {
            let status = if stop == SolveStatus::Optimal { SolveStatus::Infeasible } else { stop };
            let status = if root_status == Some(SolveStatus::Infeasible) { SolveStatus::Infeasible } else { status };
            MilpSolution {
                lp: LpSolution::failed(status, 0),
                binaries: BTreeMap::new(),
                bound: open_bound,
                gap: f64::INFINITY,
                node_count: nodes,
            }
        }
    }
}
