//! Bounded-variable revised simplex (dual and primal) over the internal form
//!
//! ```text
//!     min c'x   s.t.   A x - y = 0,   l <= x <= u,   rl <= y <= ru
//! ```
//!
//! Every row owns a logical variable `y_i` whose bounds are the row bounds, so
//! the all-logical basis is always available as a starting point. Values are
//! held in the geometrically scaled space and unscaled on the way out.

use std::time::Instant;

use super::lu::{BasisFactor, Singular};

const NIL: usize = usize::MAX;
const REFACTOR_INTERVAL: usize = 100;
const PIVOT_TOL: f64 = 1e-9;
const STALL_THRESHOLD: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Basic,
    Lower,
    Upper,
    /// Free nonbasic variable held at zero.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
}

/// Snapshot of a basis, used to warm start related problems.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Basis {
    pub head: Vec<usize>,
    pub status: Vec<Status>,
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexOptions {
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub iteration_limit: usize,
    pub deadline: Option<Instant>,
}

/// Scaled sparse problem in internal form.
#[derive(Debug, Clone)]
pub(crate) struct StandardLp {
    pub n: usize,
    pub m: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    row_start: Vec<usize>,
    row_col: Vec<usize>,
    row_val: Vec<f64>,
    cost: Vec<f64>,
    /// Bounds of structurals followed by logicals, in scaled units.
    lower: Vec<f64>,
    upper: Vec<f64>,
    col_scale: Vec<f64>,
    row_scale: Vec<f64>,
}

fn pow2_round(v: f64) -> f64 {
    if !v.is_finite() || v <= 0.0 {
        return 1.0;
    }
    2f64.powi(v.log2().round() as i32)
}

impl StandardLp {
    /// `rows[i]` holds `(column, coefficient)` pairs; `bounds` holds `(lower,
    /// upper)` for the `n` structurals and `row_bounds` for the `m` rows.
    pub(crate) fn new(
        n: usize,
        rows: &[Vec<(usize, f64)>],
        cost: &[f64],
        bounds: &[(f64, f64)],
        row_bounds: &[(f64, f64)],
        scale: bool,
    ) -> Self {
        let m = rows.len();
        let mut row_scale = vec![1.0; m];
        let mut col_scale = vec![1.0; n];
        if scale {
            for _pass in 0..6 {
                for (i, row) in rows.iter().enumerate() {
                    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
                    for &(j, v) in row {
                        let a = (v * col_scale[j]).abs();
                        if a > 0.0 {
                            lo = lo.min(a);
                            hi = hi.max(a);
                        }
                    }
                    if hi > 0.0 {
                        row_scale[i] = 1.0 / (lo * hi).sqrt();
                    }
                }
                let mut lo = vec![f64::INFINITY; n];
                let mut hi = vec![0.0f64; n];
                for (i, row) in rows.iter().enumerate() {
                    for &(j, v) in row {
                        let a = (v * row_scale[i]).abs();
                        if a > 0.0 {
                            lo[j] = lo[j].min(a);
                            hi[j] = hi[j].max(a);
                        }
                    }
                }
                for j in 0..n {
                    if hi[j] > 0.0 {
                        col_scale[j] = 1.0 / (lo[j] * hi[j]).sqrt();
                    }
                }
            }
            row_scale.iter_mut().for_each(|s| *s = pow2_round(*s));
            col_scale.iter_mut().for_each(|s| *s = pow2_round(*s));
        }

        let mut row_start = vec![0];
        let mut row_col = Vec::new();
        let mut row_val = Vec::new();
        let mut col_count = vec![0usize; n + 1];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                if v != 0.0 {
                    row_col.push(j);
                    row_val.push(v * row_scale[i] * col_scale[j]);
                    col_count[j + 1] += 1;
                }
            }
            row_start.push(row_col.len());
        }
        for j in 0..n {
            col_count[j + 1] += col_count[j];
        }
        let col_start = col_count.clone();
        let mut fill = col_count;
        let mut col_row = vec![0; row_col.len()];
        let mut col_val = vec![0.0; row_col.len()];
        for i in 0..m {
            for e in row_start[i]..row_start[i + 1] {
                let j = row_col[e];
                col_row[fill[j]] = i;
                col_val[fill[j]] = row_val[e];
                fill[j] += 1;
            }
        }

        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        for j in 0..n {
            lower.push(bounds[j].0 / col_scale[j]);
            upper.push(bounds[j].1 / col_scale[j]);
        }
        for i in 0..m {
            lower.push(row_bounds[i].0 * row_scale[i]);
            upper.push(row_bounds[i].1 * row_scale[i]);
        }
        let cost = (0..n).map(|j| cost[j] * col_scale[j]).collect();
        StandardLp { n, m, col_start, col_row, col_val, row_start, row_col, row_val, cost, lower, upper, col_scale, row_scale }
    }

    fn cost_of(&self, j: usize) -> f64 {
        if j < self.n {
            self.cost[j]
        } else {
            0.0
        }
    }

    /// Scale factor mapping a scaled value of variable `j` back to user units.
    pub(crate) fn value_scale(&self, j: usize) -> f64 {
        if j < self.n {
            self.col_scale[j]
        } else {
            1.0 / self.row_scale[j - self.n]
        }
    }

    pub(crate) fn scale_bound(&self, j: usize, v: f64) -> f64 {
        v / self.value_scale(j)
    }

    fn scatter_column(&self, j: usize, out: &mut [f64]) {
        if j < self.n {
            for e in self.col_start[j]..self.col_start[j + 1] {
                out[self.col_row[e]] += self.col_val[e];
            }
        } else {
            out[j - self.n] -= 1.0;
        }
    }

    fn column_entries(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.n {
            (self.col_start[j]..self.col_start[j + 1]).map(|e| (self.col_row[e], self.col_val[e])).collect()
        } else {
            vec![(j - self.n, -1.0)]
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            (self.col_start[j]..self.col_start[j + 1]).map(|e| self.col_val[e] * y[self.col_row[e]]).sum()
        } else {
            -y[j - self.n]
        }
    }
}

pub(crate) struct Simplex<'a> {
    lp: &'a StandardLp,
    opts: SimplexOptions,
    lower: Vec<f64>,
    upper: Vec<f64>,
    head: Vec<usize>,
    pos_of: Vec<usize>,
    status: Vec<Status>,
    x: Vec<f64>,
    d: Vec<f64>,
    factor: BasisFactor,
    pub(crate) iterations: usize,
    bland: bool,
    stall: usize,
    // scratch
    work_m: Vec<f64>,
    alpha_row: Vec<f64>,
    touched: Vec<usize>,
    in_touched: Vec<bool>,
}

impl<'a> Simplex<'a> {
    pub(crate) fn new(lp: &'a StandardLp, opts: SimplexOptions) -> Self {
        let (n, m) = (lp.n, lp.m);
        let total = n + m;
        let mut s = Simplex {
            lp,
            opts,
            lower: lp.lower.clone(),
            upper: lp.upper.clone(),
            head: (n..total).collect(),
            pos_of: vec![NIL; total],
            status: vec![Status::Lower; total],
            x: vec![0.0; total],
            d: vec![0.0; total],
            factor: BasisFactor::default(),
            iterations: 0,
            bland: false,
            stall: 0,
            work_m: vec![0.0; m],
            alpha_row: vec![0.0; total],
            touched: Vec::new(),
            in_touched: vec![false; total],
        };
        for (p, &j) in s.head.iter().enumerate() {
            s.pos_of[j] = p;
            s.status[j] = Status::Basic;
        }
        for j in 0..n {
            let c = lp.cost[j];
            s.status[j] = s.cold_status(j, c);
        }
        s
    }

    fn cold_status(&self, j: usize, dj: f64) -> Status {
        let (l, u) = (self.lower[j], self.upper[j]);
        let (lf, uf) = (l.is_finite(), u.is_finite());
        if dj > 0.0 {
            if lf {
                Status::Lower
            } else if uf {
                Status::Upper
            } else {
                Status::Zero
            }
        } else if dj < 0.0 {
            if uf {
                Status::Upper
            } else if lf {
                Status::Lower
            } else {
                Status::Zero
            }
        } else {
            match (lf, uf) {
                (true, true) => {
                    if l.abs() <= u.abs() {
                        Status::Lower
                    } else {
                        Status::Upper
                    }
                }
                (true, false) => Status::Lower,
                (false, true) => Status::Upper,
                (false, false) => Status::Zero,
            }
        }
    }

    pub(crate) fn basis(&self) -> Basis {
        Basis { head: self.head.clone(), status: self.status.clone() }
    }

    pub(crate) fn load_basis(&mut self, basis: &Basis) {
        self.head = basis.head.clone();
        self.status = basis.status.clone();
        self.pos_of.iter_mut().for_each(|p| *p = NIL);
        for (p, &j) in self.head.iter().enumerate() {
            self.pos_of[j] = p;
            self.status[j] = Status::Basic;
        }
    }

    /// Changes the bounds of variable `j` (user units are handled by the caller).
    pub(crate) fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            Status::Lower => self.lower[j],
            Status::Upper => self.upper[j],
            Status::Zero | Status::Basic => 0.0,
        }
    }

    /// Makes every nonbasic status consistent with the current bounds.
    fn sanitize_nonbasic(&mut self) {
        for j in 0..self.status.len() {
            let st = self.status[j];
            if st == Status::Basic {
                continue;
            }
            let (lf, uf) = (self.lower[j].is_finite(), self.upper[j].is_finite());
            let ok = match st {
                Status::Lower => lf,
                Status::Upper => uf,
                Status::Zero => !lf && !uf,
                Status::Basic => true,
            };
            if !ok {
                self.status[j] = self.cold_status(j, self.d[j]);
            }
            self.x[j] = self.nonbasic_value(j);
        }
    }

    fn refactor(&mut self) -> Result<(), ()> {
        let m = self.lp.m;
        for _attempt in 0..3 {
            let cols: Vec<Vec<(usize, f64)>> = self.head.iter().map(|&j| self.lp.column_entries(j)).collect();
            match BasisFactor::factorize(m, cols) {
                Ok(f) => {
                    self.factor = f;
                    return Ok(());
                }
                Err(Singular { positions, rows }) => {
                    log::debug!("basis repair: {} singular positions", positions.len());
                    for (&p, &r) in positions.iter().zip(&rows) {
                        let old = self.head[p];
                        let logical = self.lp.n + r;
                        self.pos_of[old] = NIL;
                        self.status[old] = self.cold_status(old, self.d[old]);
                        self.x[old] = self.nonbasic_value(old);
                        self.head[p] = logical;
                        self.pos_of[logical] = p;
                        self.status[logical] = Status::Basic;
                    }
                }
            }
        }
        Err(())
    }

    fn compute_primal(&mut self) {
        let m = self.lp.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.status.len() {
            if self.status[j] != Status::Basic {
                let v = self.nonbasic_value(j);
                self.x[j] = v;
                if v != 0.0 {
                    if j < self.lp.n {
                        for e in self.lp.col_start[j]..self.lp.col_start[j + 1] {
                            rhs[self.lp.col_row[e]] -= self.lp.col_val[e] * v;
                        }
                    } else {
                        rhs[j - self.lp.n] += v;
                    }
                }
            }
        }
        self.factor.ftran(&mut rhs);
        for p in 0..m {
            self.x[self.head[p]] = rhs[p];
        }
    }

    fn compute_duals_with(&mut self, basic_cost: impl Fn(usize) -> f64, nonbasic_cost: impl Fn(usize) -> f64) {
        let m = self.lp.m;
        let mut y = vec![0.0; m];
        for p in 0..m {
            y[p] = basic_cost(self.head[p]);
        }
        self.factor.btran(&mut y);
        for j in 0..self.status.len() {
            self.d[j] = if self.status[j] == Status::Basic { 0.0 } else { nonbasic_cost(j) - self.lp.dot_column(j, &y) };
        }
        self.work_m = y;
    }

    fn compute_duals(&mut self) {
        let lp = self.lp;
        self.compute_duals_with(|j| lp.cost_of(j), |j| lp.cost_of(j));
    }

    fn reinvert(&mut self) -> Result<(), ()> {
        self.refactor()?;
        self.compute_primal();
        self.compute_duals();
        Ok(())
    }

    fn primal_infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lower[j] - self.opts.primal_tol {
            self.lower[j] - v
        } else if v > self.upper[j] + self.opts.primal_tol {
            v - self.upper[j]
        } else {
            0.0
        }
    }

    fn dual_infeasibility(&self, j: usize) -> f64 {
        let dj = self.d[j];
        let tol = self.opts.dual_tol;
        if self.lower[j] == self.upper[j] {
            return 0.0;
        }
        match self.status[j] {
            Status::Basic => 0.0,
            Status::Lower => (-dj - tol).max(0.0),
            Status::Upper => (dj - tol).max(0.0),
            Status::Zero => (dj.abs() - tol).max(0.0),
        }
    }

    fn is_dual_feasible(&self) -> bool {
        (0..self.status.len()).all(|j| self.dual_infeasibility(j) == 0.0)
    }

    fn is_primal_feasible(&self) -> bool {
        self.head.iter().all(|&j| self.primal_infeasibility(j) == 0.0)
    }

    fn out_of_budget(&self) -> Option<Outcome> {
        if self.iterations >= self.opts.iteration_limit {
            return Some(Outcome::IterationLimit);
        }
        if self.iterations.is_multiple_of(64) {
            if let Some(dl) = self.opts.deadline {
                if Instant::now() >= dl {
                    return Some(Outcome::TimeLimit);
                }
            }
        }
        None
    }

    /// Solves from the current basis, choosing the dual algorithm whenever the
    /// basis is dual feasible.
    pub(crate) fn solve(&mut self) -> Outcome {
        if self.reinvert().is_err() {
            return Outcome::IterationLimit;
        }
        self.sanitize_nonbasic();
        self.compute_primal();
        // boxed variables can always be made dual feasible by a bound flip
        for j in 0..self.status.len() {
            if self.status[j] != Status::Basic && self.dual_infeasibility(j) > 0.0 {
                let (lf, uf) = (self.lower[j].is_finite(), self.upper[j].is_finite());
                if lf && uf {
                    self.status[j] = if self.d[j] >= 0.0 { Status::Lower } else { Status::Upper };
                }
            }
        }
        self.compute_primal();

        for _round in 0..4 {
            let outcome = if self.is_dual_feasible() { self.dual_simplex() } else { self.primal_simplex() };
            if outcome != Outcome::Optimal {
                return outcome;
            }
            if self.reinvert().is_err() {
                return Outcome::IterationLimit;
            }
            if self.is_primal_feasible() && self.is_dual_feasible() {
                return Outcome::Optimal;
            }
            log::debug!("simplex cleanup round after refactor");
        }
        Outcome::Optimal
    }

    fn note_progress(&mut self, step: f64) {
        if step.abs() <= 1e-12 {
            self.stall += 1;
            if self.stall > STALL_THRESHOLD && !self.bland {
                log::debug!("engaging Bland's rule after {} degenerate pivots", self.stall);
                self.bland = true;
            }
        } else {
            self.stall = 0;
            self.bland = false;
        }
    }

    fn compute_pivot_row(&mut self, rho: &[f64]) {
        for &j in &self.touched {
            self.alpha_row[j] = 0.0;
            self.in_touched[j] = false;
        }
        self.touched.clear();
        let n = self.lp.n;
        for (i, &r) in rho.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            for e in self.lp.row_start[i]..self.lp.row_start[i + 1] {
                let j = self.lp.row_col[e];
                if self.status[j] == Status::Basic {
                    continue;
                }
                if !self.in_touched[j] {
                    self.in_touched[j] = true;
                    self.touched.push(j);
                }
                self.alpha_row[j] += r * self.lp.row_val[e];
            }
            let lj = n + i;
            if self.status[lj] != Status::Basic {
                if !self.in_touched[lj] {
                    self.in_touched[lj] = true;
                    self.touched.push(lj);
                }
                self.alpha_row[lj] -= r;
            }
        }
    }

    fn pivot(&mut self, p: usize, q: usize, alpha_col: &[f64], leaving_status: Status) {
        let leaving = self.head[p];
        self.head[p] = q;
        self.pos_of[q] = p;
        self.status[q] = Status::Basic;
        self.pos_of[leaving] = NIL;
        self.status[leaving] = leaving_status;
        self.x[leaving] = self.nonbasic_value(leaving);
        self.d[q] = 0.0;
        self.factor.update(p, alpha_col);
    }

    fn needs_refactor(&self) -> bool {
        self.factor.num_updates() >= REFACTOR_INTERVAL || self.factor.eta_nnz() > 2 * self.factor.lu_nnz() + 10 * self.lp.m
    }

    fn dual_simplex(&mut self) -> Outcome {
        let m = self.lp.m;
        let mut alpha_col = vec![0.0; m];
        let mut rho = vec![0.0; m];
        loop {
            if let Some(o) = self.out_of_budget() {
                return o;
            }
            if self.needs_refactor() && self.reinvert().is_err() {
                return Outcome::IterationLimit;
            }

            // pricing: leaving row
            let mut p = NIL;
            let mut best = 0.0;
            for (pos, &j) in self.head.iter().enumerate() {
                let inf = self.primal_infeasibility(j);
                if inf > 0.0 {
                    if self.bland {
                        if p == NIL || j < self.head[p] {
                            p = pos;
                        }
                    } else if inf > best {
                        best = inf;
                        p = pos;
                    }
                }
            }
            if p == NIL {
                return Outcome::Optimal;
            }
            let leaving = self.head[p];
            let to_lower = self.x[leaving] < self.lower[leaving];
            let s = if to_lower { 1.0 } else { -1.0 };

            rho.iter_mut().for_each(|v| *v = 0.0);
            rho[p] = 1.0;
            self.factor.btran(&mut rho);
            self.compute_pivot_row(&rho);

            // Harris ratio test
            let tol = self.opts.dual_tol;
            let mut t_max = f64::INFINITY;
            for &j in &self.touched {
                if self.lower[j] == self.upper[j] {
                    continue;
                }
                let a = s * self.alpha_row[j];
                if let Some((slack, rate)) = self.dual_ratio_term(j, a) {
                    t_max = t_max.min((slack + tol) / rate);
                }
            }
            if !t_max.is_finite() {
                return Outcome::Infeasible;
            }
            let mut q = NIL;
            let mut best_rate = 0.0;
            let mut best_ratio = f64::INFINITY;
            for &j in &self.touched {
                if self.lower[j] == self.upper[j] {
                    continue;
                }
                let a = s * self.alpha_row[j];
                if let Some((slack, rate)) = self.dual_ratio_term(j, a) {
                    let ratio = slack / rate;
                    if self.bland {
                        if ratio < best_ratio - 1e-12 || ((ratio - best_ratio).abs() <= 1e-12 && j < q) {
                            best_ratio = ratio;
                            q = j;
                        }
                    } else if ratio <= t_max && rate > best_rate {
                        best_rate = rate;
                        q = j;
                    }
                }
            }
            if q == NIL {
                return Outcome::Infeasible;
            }
            let aq = s * self.alpha_row[q];
            let t = (self.d[q] / -aq).max(0.0);
            let t = if self.status[q] == Status::Zero { self.d[q] / -aq } else { t };

            alpha_col.iter_mut().for_each(|v| *v = 0.0);
            self.lp.scatter_column(q, &mut alpha_col);
            self.factor.ftran(&mut alpha_col);
            let apq = alpha_col[p];
            let arq = self.alpha_row[q];
            if (apq - arq).abs() > 1e-7 * (1.0 + apq.abs()) || apq.abs() < PIVOT_TOL {
                log::debug!("dual simplex: pivot mismatch {apq} vs {arq}, refactoring");
                if self.factor.num_updates() == 0 {
                    // the row pivot is unusable even with fresh factors; skip by perturbing choice
                    if apq.abs() < PIVOT_TOL {
                        return Outcome::IterationLimit;
                    }
                } else {
                    if self.reinvert().is_err() {
                        return Outcome::IterationLimit;
                    }
                    continue;
                }
            }

            // dual update
            for &j in &self.touched {
                self.d[j] += t * s * self.alpha_row[j];
            }
            self.d[leaving] = s * t;

            // primal update
            let bound = if to_lower { self.lower[leaving] } else { self.upper[leaving] };
            let theta = (self.x[leaving] - bound) / apq;
            for pos in 0..m {
                let a = alpha_col[pos];
                if a != 0.0 {
                    self.x[self.head[pos]] -= theta * a;
                }
            }
            self.x[q] += theta;
            self.note_progress(t);
            self.pivot(p, q, &alpha_col, if to_lower { Status::Lower } else { Status::Upper });
            self.iterations += 1;
        }
    }

    /// For nonbasic `j` with signed pivot-row entry `a`, returns the dual slack
    /// and rate if `j` restricts the dual step.
    fn dual_ratio_term(&self, j: usize, a: f64) -> Option<(f64, f64)> {
        match self.status[j] {
            Status::Lower if a < -PIVOT_TOL => Some((self.d[j], -a)),
            Status::Upper if a > PIVOT_TOL => Some((-self.d[j], a)),
            Status::Zero if a.abs() > PIVOT_TOL => Some((self.d[j] * (-a).signum(), a.abs())),
            _ => None,
        }
    }

    fn primal_simplex(&mut self) -> Outcome {
        let m = self.lp.m;
        let mut alpha_col = vec![0.0; m];
        let tol = self.opts.primal_tol;
        loop {
            if let Some(o) = self.out_of_budget() {
                return o;
            }
            if self.needs_refactor() && self.refactor().is_err() {
                return Outcome::IterationLimit;
            }
            if self.factor.num_updates() == 0 {
                self.compute_primal();
            }
            let phase_one = !self.is_primal_feasible();
            if phase_one {
                let (lower, upper, x) = (self.lower.clone(), self.upper.clone(), self.x.clone());
                self.compute_duals_with(
                    |j| {
                        if x[j] < lower[j] - tol {
                            -1.0
                        } else if x[j] > upper[j] + tol {
                            1.0
                        } else {
                            0.0
                        }
                    },
                    |_| 0.0,
                );
            } else {
                self.compute_duals();
            }

            // pricing
            let mut q = NIL;
            let mut best = 0.0;
            for j in 0..self.status.len() {
                let inf = self.dual_infeasibility(j);
                if inf > 0.0 {
                    if self.bland {
                        q = j;
                        break;
                    }
                    if inf > best {
                        best = inf;
                        q = j;
                    }
                }
            }
            if q == NIL {
                return if phase_one { Outcome::Infeasible } else { Outcome::Optimal };
            }
            let dir = if self.d[q] < 0.0 { 1.0 } else { -1.0 };

            alpha_col.iter_mut().for_each(|v| *v = 0.0);
            self.lp.scatter_column(q, &mut alpha_col);
            self.factor.ftran(&mut alpha_col);

            // Harris two-pass ratio test; leaving candidates carry their target bound
            let limit_of = |s: &Self, pos: usize, slack_tol: f64| -> Option<(f64, Status)> {
                let a = alpha_col[pos];
                if a.abs() <= PIVOT_TOL {
                    return None;
                }
                let j = s.head[pos];
                let rate = -dir * a;
                let (v, l, u) = (s.x[j], s.lower[j], s.upper[j]);
                if v < l - tol {
                    (rate > 0.0).then(|| ((l - v + slack_tol) / rate, Status::Lower))
                } else if v > u + tol {
                    (rate < 0.0).then(|| ((v - u + slack_tol) / -rate, Status::Upper))
                } else if rate < 0.0 && l.is_finite() {
                    Some(((v - l + slack_tol) / -rate, Status::Lower))
                } else if rate > 0.0 && u.is_finite() {
                    Some(((u - v + slack_tol) / rate, Status::Upper))
                } else {
                    None
                }
            };
            let mut t_max = f64::INFINITY;
            for pos in 0..m {
                if let Some((r, _)) = limit_of(self, pos, tol) {
                    t_max = t_max.min(r);
                }
            }
            let flip = self.upper[q] - self.lower[q];
            let mut p = NIL;
            let mut p_status = Status::Lower;
            let mut p_step = f64::INFINITY;
            let mut best_abs = 0.0;
            for pos in 0..m {
                let Some((r, st)) = limit_of(self, pos, 0.0) else { continue };
                if self.bland {
                    if r < p_step - 1e-12 || (r <= p_step + 1e-12 && p != NIL && self.head[pos] < self.head[p]) {
                        p = pos;
                        p_status = st;
                        p_step = r;
                    }
                } else if r <= t_max && alpha_col[pos].abs() > best_abs {
                    best_abs = alpha_col[pos].abs();
                    p = pos;
                    p_status = st;
                    p_step = r;
                }
            }
            if flip.is_finite() && flip <= p_step {
                // bound flip of the entering variable
                for pos in 0..m {
                    if alpha_col[pos] != 0.0 {
                        self.x[self.head[pos]] -= dir * flip * alpha_col[pos];
                    }
                }
                self.status[q] = if dir > 0.0 { Status::Upper } else { Status::Lower };
                self.x[q] = self.nonbasic_value(q);
                self.note_progress(flip);
                self.iterations += 1;
                continue;
            }
            if p == NIL {
                if phase_one {
                    log::debug!("primal phase one found no blocking row; refactoring");
                    if self.reinvert().is_err() {
                        return Outcome::IterationLimit;
                    }
                    self.iterations += 1;
                    continue;
                }
                return Outcome::Unbounded;
            }
            let step = p_step.max(0.0);
            for pos in 0..m {
                if alpha_col[pos] != 0.0 {
                    self.x[self.head[pos]] -= dir * step * alpha_col[pos];
                }
            }
            self.x[q] += dir * step;
            self.note_progress(step);
            self.pivot(p, q, &alpha_col, p_status);
            self.iterations += 1;
        }
    }

    // --- results in user units -------------------------------------------

    /// Values of all `n + m` variables (structurals then row activities).
    pub(crate) fn values(&self) -> Vec<f64> {
        (0..self.x.len()).map(|j| self.x[j] * self.lp.value_scale(j)).collect()
    }

    /// Row duals, i.e. the sensitivity of the objective to each row bound.
    pub(crate) fn row_duals(&self) -> Vec<f64> {
        let n = self.lp.n;
        (0..self.lp.m).map(|i| self.d[n + i] * self.lp.row_scale[i]).collect()
    }

    pub(crate) fn reduced_costs(&self) -> Vec<f64> {
        (0..self.lp.n).map(|j| self.d[j] / self.lp.col_scale[j]).collect()
    }

    pub(crate) fn objective(&self) -> f64 {
        (0..self.lp.n).map(|j| self.lp.cost[j] * self.x[j]).sum()
    }
}
