//! Sparse LU factorization of simplex basis matrices with product-form updates.
//!
//! The factorization is a right-looking Gaussian elimination that picks pivots
//! by Markowitz count under threshold partial pivoting. Column and row count
//! buckets make singleton detection free, which matters because simplex bases
//! of network problems are mostly triangular.

const PIVOT_THRESHOLD: f64 = 0.1;
const PIVOT_ABS_TOL: f64 = 1e-11;
const SEARCH_LIMIT: usize = 4;

/// Basis positions and rows that could not be pivoted.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LuFactors {
    m: usize,
    piv_row: Vec<usize>,
    piv_col: Vec<usize>,
    piv_val: Vec<f64>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    // U by basis position: (pivot step, value)
    ucol_start: Vec<usize>,
    ucol_step: Vec<usize>,
    ucol_val: Vec<f64>,
}

/// Intrusive doubly linked lists of items keyed by their current count.
struct Buckets {
    head: Vec<usize>,
    next: Vec<usize>,
    prev: Vec<usize>,
    count: Vec<usize>,
}

const NIL: usize = usize::MAX;

impl Buckets {
    fn new(max_count: usize, items: usize) -> Self {
        Buckets {
            head: vec![NIL; max_count + 2],
            next: vec![NIL; items],
            prev: vec![NIL; items],
            count: vec![0; items],
        }
    }

    fn insert(&mut self, item: usize, count: usize) {
        let count = count.min(self.head.len() - 1);
        self.count[item] = count;
        self.prev[item] = NIL;
        self.next[item] = self.head[count];
        if self.head[count] != NIL {
            self.prev[self.head[count]] = item;
        }
        self.head[count] = item;
    }

    fn remove(&mut self, item: usize) {
        let c = self.count[item];
        if self.prev[item] != NIL {
            self.next[self.prev[item]] = self.next[item];
        } else {
            self.head[c] = self.next[item];
        }
        if self.next[item] != NIL {
            self.prev[self.next[item]] = self.prev[item];
        }
        self.next[item] = NIL;
        self.prev[item] = NIL;
    }

    fn iter(&self, count: usize) -> BucketIter<'_> {
        BucketIter { buckets: self, cur: self.head.get(count).copied().unwrap_or(NIL) }
    }
}

struct BucketIter<'a> {
    buckets: &'a Buckets,
    cur: usize,
}

impl Iterator for BucketIter<'_> {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        if self.cur == NIL {
            return None;
        }
        let item = self.cur;
        self.cur = self.buckets.next[item];
        Some(item)
    }
}

fn col_abs_max(col: &[(usize, f64)]) -> f64 {
    col.iter().fold(0.0, |acc, &(_, v)| acc.max(v.abs()))
}

impl LuFactors {
    /// Factorizes the `m x m` matrix whose columns (basis positions) are given
    /// as sparse `(row, value)` lists.
    pub(crate) fn factorize(m: usize, columns: Vec<Vec<(usize, f64)>>) -> Result<Self, (Self, Singular)> {
        debug_assert_eq!(columns.len(), m);
        let mut cols = columns;
        let mut row_cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (j, col) in cols.iter_mut().enumerate() {
            col.retain(|&(_, v)| v != 0.0);
            for &(i, _) in col.iter() {
                row_cols[i].push(j);
            }
        }

        let mut col_b = Buckets::new(m, m);
        let mut row_b = Buckets::new(m, m);
        for j in 0..m {
            col_b.insert(j, cols[j].len());
        }
        for i in 0..m {
            row_b.insert(i, row_cols[i].len());
        }
        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];

        let mut f = LuFactors {
            m,
            l_start: vec![0],
            u_start: vec![0],
            ..Default::default()
        };
        let mut pos = vec![NIL; m];
        let mut lmult: Vec<(usize, f64)> = Vec::new();
        let mut touched_rows: Vec<usize> = Vec::new();

        for _step in 0..m {
            let Some((r, c)) = Self::find_pivot(m, &cols, &row_cols, &col_b, &row_b) else {
                break;
            };
            let pv = cols[c].iter().find(|&&(i, _)| i == r).map(|&(_, v)| v).unwrap();

            // multipliers from the pivot column, and drop column c from row patterns
            lmult.clear();
            touched_rows.clear();
            for &(i, v) in &cols[c] {
                if let Some(p) = row_cols[i].iter().position(|&j| j == c) {
                    row_cols[i].swap_remove(p);
                }
                if i != r {
                    lmult.push((i, v / pv));
                    touched_rows.push(i);
                }
            }
            col_b.remove(c);
            col_active[c] = false;
            cols[c].clear();
            row_b.remove(r);
            row_active[r] = false;

            for &(i, l) in &lmult {
                f.l_idx.push(i);
                f.l_val.push(l);
            }
            f.l_start.push(f.l_idx.len());

            let pivot_row = std::mem::take(&mut row_cols[r]);
            for &j in &pivot_row {
                let col = &mut cols[j];
                let Some(p) = col.iter().position(|&(i, _)| i == r) else {
                    continue;
                };
                let (_, arj) = col.swap_remove(p);
                f.u_idx.push(j);
                f.u_val.push(arj);
                if !lmult.is_empty() {
                    for (idx, &(i, _)) in col.iter().enumerate() {
                        pos[i] = idx;
                    }
                    for &(i, l) in &lmult {
                        let delta = -l * arj;
                        if pos[i] != NIL {
                            col[pos[i]].1 += delta;
                        } else {
                            col.push((i, delta));
                            row_cols[i].push(j);
                        }
                    }
                    for &(i, _) in col.iter() {
                        pos[i] = NIL;
                    }
                }
                col_b.remove(j);
                col_b.insert(j, col.len());
            }
            f.u_start.push(f.u_idx.len());
            for &i in &touched_rows {
                row_b.remove(i);
                row_b.insert(i, row_cols[i].len());
            }

            f.piv_row.push(r);
            f.piv_col.push(c);
            f.piv_val.push(pv);
        }

        f.build_ucols();
        if f.piv_row.len() < m {
            let singular = Singular {
                positions: (0..m).filter(|&j| col_active[j]).collect(),
                rows: (0..m).filter(|&i| row_active[i]).collect(),
            };
            return Err((f, singular));
        }
        Ok(f)
    }

    fn find_pivot(
        m: usize,
        cols: &[Vec<(usize, f64)>],
        row_cols: &[Vec<usize>],
        col_b: &Buckets,
        row_b: &Buckets,
    ) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        let mut best_mc = usize::MAX;
        let mut best_abs = 0.0;
        let mut searched = 0;
        for cnt in 1..=m {
            for j in col_b.iter(cnt) {
                let col = &cols[j];
                let cmax = col_abs_max(col);
                for &(i, v) in col {
                    let a = v.abs();
                    if a < PIVOT_ABS_TOL || a < PIVOT_THRESHOLD * cmax {
                        continue;
                    }
                    let mc = (row_cols[i].len() - 1) * (cnt - 1);
                    if mc < best_mc || (mc == best_mc && a > best_abs) {
                        best = Some((i, j));
                        best_mc = mc;
                        best_abs = a;
                    }
                }
                searched += 1;
                if best.is_some() && (best_mc <= (cnt - 1) * (cnt - 1) || searched >= SEARCH_LIMIT) {
                    return best;
                }
            }
            for i in row_b.iter(cnt) {
                for &j in &row_cols[i] {
                    let col = &cols[j];
                    let Some(&(_, v)) = col.iter().find(|&&(ii, _)| ii == i) else {
                        continue;
                    };
                    let a = v.abs();
                    if a < PIVOT_ABS_TOL || a < PIVOT_THRESHOLD * col_abs_max(col) {
                        continue;
                    }
                    let mc = (cnt - 1) * (col.len() - 1);
                    if mc < best_mc || (mc == best_mc && a > best_abs) {
                        best = Some((i, j));
                        best_mc = mc;
                        best_abs = a;
                    }
                }
                searched += 1;
                if best.is_some() && (best_mc <= cnt * (cnt - 1) || searched >= SEARCH_LIMIT) {
                    return best;
                }
            }
            if best.is_some() && best_mc <= cnt * cnt {
                return best;
            }
        }
        best
    }

    fn build_ucols(&mut self) {
        let m = self.m;
        let mut counts = vec![0usize; m + 1];
        for &j in &self.u_idx {
            counts[j + 1] += 1;
        }
        for j in 0..m {
            counts[j + 1] += counts[j];
        }
        let mut fill = counts.clone();
        self.ucol_step = vec![0; self.u_idx.len()];
        self.ucol_val = vec![0.0; self.u_idx.len()];
        for k in 0..self.piv_row.len() {
            for e in self.u_start[k]..self.u_start[k + 1] {
                let j = self.u_idx[e];
                let slot = fill[j];
                self.ucol_step[slot] = k;
                self.ucol_val[slot] = self.u_val[e];
                fill[j] += 1;
            }
        }
        self.ucol_start = counts;
    }

    pub(crate) fn nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len() + self.piv_row.len()
    }

    /// Solves `B x = b`. `rhs` is indexed by row on entry; `out` receives the
    /// solution indexed by basis position.
    pub(crate) fn ftran(&self, rhs: &mut [f64], out: &mut [f64]) {
        let steps = self.piv_row.len();
        for k in 0..steps {
            let v = rhs[self.piv_row[k]];
            if v != 0.0 {
                for e in self.l_start[k]..self.l_start[k + 1] {
                    rhs[self.l_idx[e]] -= self.l_val[e] * v;
                }
            }
        }
        out.iter_mut().for_each(|x| *x = 0.0);
        for k in (0..steps).rev() {
            let c = self.piv_col[k];
            let v = rhs[self.piv_row[k]] / self.piv_val[k];
            rhs[self.piv_row[k]] = 0.0;
            out[c] = v;
            if v != 0.0 {
                for e in self.ucol_start[c]..self.ucol_start[c + 1] {
                    let kk = self.ucol_step[e];
                    rhs[self.piv_row[kk]] -= self.ucol_val[e] * v;
                }
            }
        }
    }

    /// Solves `B^T y = d`. `rhs` is indexed by basis position on entry; `out`
    /// receives the solution indexed by row.
    pub(crate) fn btran(&self, rhs: &mut [f64], out: &mut [f64]) {
        let steps = self.piv_row.len();
        out.iter_mut().for_each(|x| *x = 0.0);
        for k in 0..steps {
            let c = self.piv_col[k];
            let v = rhs[c] / self.piv_val[k];
            rhs[c] = 0.0;
            out[self.piv_row[k]] = v;
            if v != 0.0 {
                for e in self.u_start[k]..self.u_start[k + 1] {
                    rhs[self.u_idx[e]] -= self.u_val[e] * v;
                }
            }
        }
        for k in (0..steps).rev() {
            let r = self.piv_row[k];
            let mut s = out[r];
            for e in self.l_start[k]..self.l_start[k + 1] {
                s -= self.l_val[e] * out[self.l_idx[e]];
            }
            out[r] = s;
        }
    }
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    idx: Vec<usize>,
    val: Vec<f64>,
}

/// LU factors plus a product-form eta file of column replacements.
#[derive(Debug, Clone, Default)]
pub(crate) struct BasisFactor {
    lu: LuFactors,
    etas: Vec<Eta>,
    eta_nnz: usize,
    work: Vec<f64>,
}

impl BasisFactor {
    pub(crate) fn factorize(m: usize, columns: Vec<Vec<(usize, f64)>>) -> Result<Self, Singular> {
        match LuFactors::factorize(m, columns) {
            Ok(lu) => Ok(BasisFactor { lu, etas: Vec::new(), eta_nnz: 0, work: vec![0.0; m] }),
            Err((_, s)) => Err(s),
        }
    }

    pub(crate) fn num_updates(&self) -> usize {
        self.etas.len()
    }

    pub(crate) fn eta_nnz(&self) -> usize {
        self.eta_nnz
    }

    pub(crate) fn lu_nnz(&self) -> usize {
        self.lu.nnz()
    }

    /// In place `x <- B^{-1} x`; input indexed by row, output by basis position.
    pub(crate) fn ftran(&mut self, x: &mut [f64]) {
        self.lu.ftran(x, &mut self.work);
        x.copy_from_slice(&self.work);
        for eta in &self.etas {
            let xp = x[eta.pos] / eta.pivot;
            x[eta.pos] = xp;
            if xp != 0.0 {
                for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                    x[i] -= a * xp;
                }
            }
        }
    }

    /// In place `y <- B^{-T} y`; input indexed by basis position, output by row.
    pub(crate) fn btran(&mut self, y: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut s = y[eta.pos];
            for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                s -= a * y[i];
            }
            y[eta.pos] = s / eta.pivot;
        }
        self.lu.btran(y, &mut self.work);
        y.copy_from_slice(&self.work);
    }

    /// Records the replacement of basis position `pos` by a column whose
    /// FTRAN image is `alpha`.
    pub(crate) fn update(&mut self, pos: usize, alpha: &[f64]) {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, &a) in alpha.iter().enumerate() {
            if i != pos && a.abs() > 1e-14 {
                idx.push(i);
                val.push(a);
            }
        }
        self.eta_nnz += idx.len() + 1;
        self.etas.push(Eta { pos, pivot: alpha[pos], idx, val });
    }
}
