//! Dense bounded-variable simplex on an explicit tableau.
//!
//! Every row owns an artificial column. Artificials start as the phase-one
//! basis and are fixed at zero afterwards, but their tableau columns are
//! kept up to date: column `art(i)` always holds `B^-1 e_i` (up to the
//! artificial's sign), which gives duals and cheap right-hand-side updates
//! without refactoring. That is what makes warm re-solves possible after
//! bound changes, right-hand-side changes and row additions.

use super::{LpError, LpStatus, FEAS_TOL, OPT_TOL, PIVOT_TOL};

const DEGENERATE_PIVOTS_BEFORE_BLAND: usize = 50;
const STEP_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ColKind {
    Structural,
    Artificial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Place {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free column; its value is whatever is stored in `x`.
    Free,
}

/// Row sense for rows added after construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSense {
    Eq,
    Le,
    Ge,
}

#[derive(Clone, Debug)]
pub struct Simplex {
    m: usize,
    ncols: usize,
    stride: usize,
    // original data, by column
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    rhs: Vec<f64>,
    kind: Vec<ColKind>,
    art_of_row: Vec<usize>,
    art_sign: Vec<f64>,
    // user-facing structural column ids -> internal column
    structural: Vec<usize>,
    // tableau state
    tab: Vec<f64>,
    d: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    place: Vec<Place>,
    x: Vec<f64>,
    active: Vec<usize>,
    active_dirty: bool,
    // columns skipped by pivots while fixed and nonbasic
    stale: Vec<bool>,
    phase_one: bool,
    solved: bool,
    pub(crate) pivots: usize,
}

fn col_is_fixed(lo: f64, hi: f64) -> bool {
    lo == hi
}

impl Simplex {
    /// Builds the solver from sparse columns. `cols[j]` lists `(row, coef)`.
    pub fn from_columns(
        m: usize,
        cols: Vec<Vec<(usize, f64)>>,
        cost: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        rhs: Vec<f64>,
    ) -> Self {
        let n = cols.len();
        let mut s = Simplex {
            m,
            ncols: 0,
            stride: 0,
            cols,
            cost,
            lo,
            hi,
            rhs,
            kind: vec![ColKind::Structural; n],
            art_of_row: Vec::with_capacity(m),
            art_sign: vec![1.0; m],
            structural: (0..n).collect(),
            tab: Vec::new(),
            d: Vec::new(),
            basis: Vec::new(),
            row_of: Vec::new(),
            place: Vec::new(),
            x: Vec::new(),
            active: Vec::new(),
            active_dirty: true,
            stale: Vec::new(),
            phase_one: false,
            solved: false,
            pivots: 0,
        };
        for i in 0..m {
            let c = s.cols.len();
            s.cols.push(vec![(i, 1.0)]);
            s.cost.push(0.0);
            s.lo.push(0.0);
            s.hi.push(0.0);
            s.kind.push(ColKind::Artificial);
            s.art_of_row.push(c);
        }
        s.ncols = s.cols.len();
        s
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn num_structural(&self) -> usize {
        self.structural.len()
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.tab[i * self.stride + j]
    }

    fn nonbasic_start(lo: f64, hi: f64) -> (Place, f64) {
        if lo.is_finite() {
            (Place::Lower, lo)
        } else if hi.is_finite() {
            (Place::Upper, hi)
        } else {
            (Place::Free, 0.0)
        }
    }

    /// Rebuilds the tableau from the original data with a crash basis made of
    /// singleton columns where possible and artificials elsewhere.
    fn cold_start(&mut self) {
        let m = self.m;
        let n = self.ncols;
        self.stride = n + n / 4 + 8;
        self.tab = vec![0.0; m * self.stride];
        self.d = vec![0.0; n];
        self.basis = vec![usize::MAX; m];
        self.row_of = vec![usize::MAX; n];
        self.place = vec![Place::Lower; n];
        self.x = vec![0.0; n];
        self.stale = vec![false; n];
        self.pivots = 0;

        for j in 0..n {
            if self.kind[j] == ColKind::Artificial {
                self.lo[j] = 0.0;
                self.hi[j] = 0.0;
                self.place[j] = Place::Lower;
                self.x[j] = 0.0;
            } else {
                let (p, v) = Self::nonbasic_start(self.lo[j], self.hi[j]);
                self.place[j] = p;
                self.x[j] = v;
            }
        }

        // residual of each row given nonbasic starting values
        let mut resid = self.rhs.clone();
        for j in 0..n {
            if self.kind[j] == ColKind::Structural && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    resid[i] -= a * self.x[j];
                }
            }
        }

        // crash: singleton structural columns that can absorb the residual
        let mut row_scale = vec![1.0; m];
        let mut taken = vec![false; m];
        for j in 0..n {
            if self.kind[j] != ColKind::Structural || self.cols[j].len() != 1 {
                continue;
            }
            let (i, a) = self.cols[j][0];
            if taken[i] || a.abs() < 1e-6 || col_is_fixed(self.lo[j], self.hi[j]) {
                continue;
            }
            let v = (resid[i] + a * self.x[j]) / a;
            if v >= self.lo[j] - FEAS_TOL && v <= self.hi[j] + FEAS_TOL {
                taken[i] = true;
                row_scale[i] = 1.0 / a;
                self.basis[i] = j;
                self.row_of[j] = i;
                self.place[j] = Place::Basic;
                self.x[j] = v.clamp(self.lo[j], self.hi[j]);
                self.art_sign[i] = 1.0;
            }
        }
        let mut any_art = false;
        for i in 0..m {
            if taken[i] {
                continue;
            }
            let sign = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
            let a = self.art_of_row[i];
            self.art_sign[i] = sign;
            self.cols[a] = vec![(i, sign)];
            row_scale[i] = sign;
            self.basis[i] = a;
            self.row_of[a] = i;
            self.place[a] = Place::Basic;
            self.x[a] = resid[i].abs();
            self.hi[a] = f64::INFINITY;
            any_art = true;
        }
        for i in 0..m {
            if taken[i] {
                let a = self.art_of_row[i];
                self.cols[a] = vec![(i, 1.0)];
            }
        }
        for j in 0..n {
            for &(i, a) in &self.cols[j] {
                self.tab[i * self.stride + j] = a * row_scale[i];
            }
        }
        self.phase_one = any_art;
        self.active_dirty = true;
        self.solved = false;
        self.recompute_reduced_costs();
    }

    fn phase_cost(&self, j: usize) -> f64 {
        if self.phase_one {
            if self.kind[j] == ColKind::Artificial {
                1.0
            } else {
                0.0
            }
        } else {
            self.cost[j]
        }
    }

    /// Entry (k, i) of B^-1.
    #[inline]
    fn binv(&self, k: usize, i: usize) -> f64 {
        self.at(k, self.art_of_row[i]) * self.art_sign[i]
    }

    /// Simplex multipliers y = c_B^T B^-1 for the current phase costs.
    fn multipliers(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for k in 0..self.m {
            let cb = self.phase_cost(self.basis[k]);
            if cb == 0.0 {
                continue;
            }
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += cb * self.binv(k, i);
            }
        }
        y
    }

    fn recompute_reduced_costs(&mut self) {
        let y = self.multipliers();
        for j in 0..self.ncols {
            if self.place[j] == Place::Basic {
                self.d[j] = 0.0;
                continue;
            }
            let mut dj = self.phase_cost(j);
            for &(i, a) in &self.cols[j] {
                dj -= y[i] * a;
            }
            self.d[j] = dj;
        }
    }

    /// Recomputes basic values from scratch: x_B = B^-1 (b - N x_N).
    fn recompute_basic_values(&mut self) {
        let mut r = self.rhs.clone();
        for j in 0..self.ncols {
            if self.place[j] != Place::Basic && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    r[i] -= a * self.x[j];
                }
            }
        }
        for k in 0..self.m {
            let mut v = 0.0;
            for (i, ri) in r.iter().enumerate() {
                if *ri != 0.0 {
                    v += self.binv(k, i) * ri;
                }
            }
            self.x[self.basis[k]] = v;
        }
    }

    /// Recomputes the tableau column of `j` as B^-1 A_j.
    fn refresh_column(&mut self, j: usize) {
        self.stale[j] = false;
        let col = self.cols[j].clone();
        for k in 0..self.m {
            let mut v = 0.0;
            for &(i, a) in &col {
                v += self.binv(k, i) * a;
            }
            self.tab[k * self.stride + j] = v;
        }
    }

    fn rebuild_active(&mut self) {
        self.active.clear();
        for j in 0..self.ncols {
            let fixed_nonbasic = self.place[j] != Place::Basic
                && self.kind[j] == ColKind::Structural
                && col_is_fixed(self.lo[j], self.hi[j]);
            if fixed_nonbasic {
                self.stale[j] = true;
            } else {
                self.active.push(j);
            }
        }
        self.active_dirty = false;
    }

    fn pivot(&mut self, r: usize, q: usize) {
        if self.active_dirty {
            self.rebuild_active();
        }
        let stride = self.stride;
        let piv = self.tab[r * stride + q];
        let inv = 1.0 / piv;
        {
            let row_r = &mut self.tab[r * stride..r * stride + stride];
            for &j in &self.active {
                row_r[j] *= inv;
            }
            row_r[q] = 1.0;
        }
        let (before, rest) = self.tab.split_at_mut(r * stride);
        let (row_r, after) = rest.split_at_mut(stride);
        let row_r: &[f64] = row_r;
        let active = &self.active;
        let update = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for &j in active {
                    row[j] -= f * row_r[j];
                }
                row[q] = 0.0;
            }
        };
        for row in before.chunks_mut(stride) {
            update(row);
        }
        for row in after.chunks_mut(stride).take(self.m - r - 1) {
            update(row);
        }
        let dq = self.d[q];
        if dq != 0.0 {
            for &j in active {
                self.d[j] -= dq * row_r[j];
            }
        }
        self.d[q] = 0.0;

        let leaving = self.basis[r];
        self.row_of[leaving] = usize::MAX;
        self.basis[r] = q;
        self.row_of[q] = r;
        self.place[q] = Place::Basic;
        self.pivots += 1;
        if self.kind[leaving] == ColKind::Structural && col_is_fixed(self.lo[leaving], self.hi[leaving]) {
            self.active_dirty = true;
        }
    }

    fn is_entering_candidate(&self, j: usize) -> Option<f64> {
        // returns direction (+1 increase, -1 decrease) if attractive
        if self.place[j] == Place::Basic || col_is_fixed(self.lo[j], self.hi[j]) {
            return None;
        }
        let dj = self.d[j];
        match self.place[j] {
            Place::Lower if dj < -OPT_TOL => Some(1.0),
            Place::Upper if dj > OPT_TOL => Some(-1.0),
            Place::Free if dj < -OPT_TOL => Some(1.0),
            Place::Free if dj > OPT_TOL => Some(-1.0),
            _ => None,
        }
    }

    fn primal_loop(&mut self, max_iter: usize) -> Result<LpStatus, LpError> {
        let mut degenerate = 0usize;
        let mut iter = 0usize;
        loop {
            iter += 1;
            if iter > max_iter {
                return Err(LpError::IterationLimit(max_iter));
            }
            if self.active_dirty {
                self.rebuild_active();
            }
            let bland = degenerate >= DEGENERATE_PIVOTS_BEFORE_BLAND;
            let mut entering = None;
            let mut best = 0.0;
            for &j in &self.active {
                if let Some(dir) = self.is_entering_candidate(j) {
                    if bland {
                        entering = Some((j, dir));
                        break;
                    }
                    let score = self.d[j].abs();
                    if score > best {
                        best = score;
                        entering = Some((j, dir));
                    }
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(LpStatus::Optimal);
            };

            // ratio test
            let mut step = f64::INFINITY;
            let mut leave_row = usize::MAX;
            let mut leave_to_upper = false;
            if self.lo[q].is_finite() && self.hi[q].is_finite() {
                step = self.hi[q] - self.lo[q];
            }
            for i in 0..self.m {
                let alpha = self.at(i, q);
                if alpha.abs() < PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let rate = -dir * alpha;
                let (limit, to_upper) = if rate < 0.0 {
                    if !self.lo[b].is_finite() {
                        continue;
                    }
                    (((self.x[b] - self.lo[b]) / -rate).max(0.0), false)
                } else {
                    if !self.hi[b].is_finite() {
                        continue;
                    }
                    (((self.hi[b] - self.x[b]) / rate).max(0.0), true)
                };
                let better = limit < step - STEP_EPS
                    || (limit <= step + STEP_EPS
                        && leave_row != usize::MAX
                        && b < self.basis[leave_row]);
                if better {
                    step = limit;
                    leave_row = i;
                    leave_to_upper = to_upper;
                }
            }
            if step.is_infinite() {
                return Ok(LpStatus::Unbounded);
            }
            if step < STEP_EPS {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            // move
            if step > 0.0 {
                for i in 0..self.m {
                    let alpha = self.at(i, q);
                    if alpha != 0.0 {
                        let b = self.basis[i];
                        self.x[b] -= dir * step * alpha;
                    }
                }
                self.x[q] += dir * step;
            }
            if leave_row == usize::MAX {
                // bound flip
                if dir > 0.0 {
                    self.place[q] = Place::Upper;
                    self.x[q] = self.hi[q];
                } else {
                    self.place[q] = Place::Lower;
                    self.x[q] = self.lo[q];
                }
                continue;
            }
            let leaving = self.basis[leave_row];
            self.pivot(leave_row, q);
            if self.kind[leaving] == ColKind::Artificial {
                self.hi[leaving] = 0.0;
            }
            if leave_to_upper {
                self.place[leaving] = Place::Upper;
                self.x[leaving] = self.hi[leaving];
            } else {
                self.place[leaving] = Place::Lower;
                self.x[leaving] = self.lo[leaving];
            }
        }
    }

    fn primal_infeasibility(&self, b: usize) -> f64 {
        let v = self.x[b];
        if v < self.lo[b] - FEAS_TOL {
            self.lo[b] - v
        } else if v > self.hi[b] + FEAS_TOL {
            v - self.hi[b]
        } else {
            0.0
        }
    }

    fn is_primal_feasible(&self) -> bool {
        (0..self.m).all(|i| self.primal_infeasibility(self.basis[i]) == 0.0)
    }

    fn is_dual_feasible(&self) -> bool {
        (0..self.ncols).all(|j| {
            if self.place[j] == Place::Basic || col_is_fixed(self.lo[j], self.hi[j]) {
                return true;
            }
            let dj = self.d[j];
            match self.place[j] {
                Place::Lower => dj >= -OPT_TOL * 10.0,
                Place::Upper => dj <= OPT_TOL * 10.0,
                Place::Free => dj.abs() <= OPT_TOL * 10.0,
                Place::Basic => true,
            }
        })
    }

    fn dual_loop(&mut self, max_iter: usize) -> Result<LpStatus, LpError> {
        let mut iter = 0usize;
        loop {
            iter += 1;
            if iter > max_iter {
                return Err(LpError::IterationLimit(max_iter));
            }
            if self.active_dirty {
                self.rebuild_active();
            }
            // leaving row: largest infeasibility, ties to lowest column
            let mut r = usize::MAX;
            let mut worst = 0.0;
            for i in 0..self.m {
                let inf = self.primal_infeasibility(self.basis[i]);
                if inf > worst || (inf > 0.0 && inf == worst && self.basis[i] < self.basis[r]) {
                    worst = inf;
                    r = i;
                }
            }
            if r == usize::MAX {
                return Ok(LpStatus::Optimal);
            }
            let b = self.basis[r];
            let below = self.x[b] < self.lo[b];
            let target = if below { self.lo[b] } else { self.hi[b] };
            // x_b changes by -alpha_rj * dx_j; need increase if below
            let mut q = usize::MAX;
            let mut best_ratio = f64::INFINITY;
            let mut best_alpha = 0.0;
            for &j in &self.active {
                if self.place[j] == Place::Basic || col_is_fixed(self.lo[j], self.hi[j]) {
                    continue;
                }
                let alpha = self.at(r, j);
                if alpha.abs() < PIVOT_TOL * 10.0 {
                    continue;
                }
                let eligible = match self.place[j] {
                    Place::Lower => (below && alpha < 0.0) || (!below && alpha > 0.0),
                    Place::Upper => (below && alpha > 0.0) || (!below && alpha < 0.0),
                    Place::Free => true,
                    Place::Basic => false,
                };
                if !eligible {
                    continue;
                }
                let ratio = (self.d[j] / alpha).abs();
                // ties go to the larger pivot, then to the lower index
                let better = ratio < best_ratio - STEP_EPS
                    || (ratio <= best_ratio + STEP_EPS && alpha.abs() > best_alpha);
                if better {
                    best_ratio = ratio;
                    best_alpha = alpha.abs();
                    q = j;
                }
            }
            if q == usize::MAX {
                return Ok(LpStatus::Infeasible);
            }
            let alpha_rq = self.at(r, q);
            let dx = (self.x[b] - target) / alpha_rq;
            for i in 0..self.m {
                let a = self.at(i, q);
                if a != 0.0 {
                    let bi = self.basis[i];
                    self.x[bi] -= a * dx;
                }
            }
            self.x[q] += dx;
            self.pivot(r, q);
            self.x[b] = target;
            self.place[b] = if below { Place::Lower } else { Place::Upper };
        }
    }

    fn max_iter(&self) -> usize {
        50 * (self.m + self.ncols) + 1000
    }

    fn finish_phase_one(&mut self) -> Result<bool, LpError> {
        let status = self.primal_loop(self.max_iter())?;
        debug_assert_ne!(status, LpStatus::Unbounded);
        let infeas: f64 = (0..self.ncols)
            .filter(|&j| self.kind[j] == ColKind::Artificial)
            .map(|j| self.x[j])
            .sum();
        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeas > FEAS_TOL * scale {
            return Ok(false);
        }
        for j in 0..self.ncols {
            if self.kind[j] == ColKind::Artificial {
                self.hi[j] = 0.0;
                if self.place[j] != Place::Basic {
                    self.place[j] = Place::Lower;
                    self.x[j] = 0.0;
                }
            }
        }
        self.phase_one = false;
        self.recompute_reduced_costs();
        Ok(true)
    }

    /// Solves from scratch.
    pub fn solve(&mut self) -> Result<LpStatus, LpError> {
        self.cold_start();
        if self.phase_one && !self.finish_phase_one()? {
            return Ok(LpStatus::Infeasible);
        }
        self.phase_one = false;
        let status = self.primal_loop(self.max_iter())?;
        self.solved = status == LpStatus::Optimal;
        Ok(status)
    }

    /// Re-optimizes after data changes, reusing the current basis when it is
    /// primal or dual feasible; otherwise falls back to a cold solve.
    pub fn resolve(&mut self) -> Result<LpStatus, LpError> {
        if !self.solved {
            return self.solve();
        }
        self.recompute_reduced_costs();
        if self.is_primal_feasible() {
            let status = self.primal_loop(self.max_iter())?;
            self.solved = status == LpStatus::Optimal;
            return Ok(status);
        }
        if self.is_dual_feasible() {
            match self.dual_loop(self.max_iter())? {
                LpStatus::Optimal => {
                    // clean up tiny dual infeasibilities
                    let status = self.primal_loop(self.max_iter())?;
                    self.solved = status == LpStatus::Optimal;
                    return Ok(status);
                }
                LpStatus::Infeasible => {
                    self.solved = false;
                    return Ok(LpStatus::Infeasible);
                }
                LpStatus::Unbounded => unreachable!(),
            }
        }
        self.solve()
    }

    /// Changes the right-hand side of row `i`.
    pub fn set_rhs(&mut self, i: usize, value: f64) {
        let delta = value - self.rhs[i];
        if delta == 0.0 {
            return;
        }
        self.rhs[i] = value;
        if self.solved {
            for k in 0..self.m {
                let v = self.binv(k, i);
                if v != 0.0 {
                    let b = self.basis[k];
                    self.x[b] += v * delta;
                }
            }
        }
    }

    pub fn rhs(&self, i: usize) -> f64 {
        self.rhs[i]
    }

    /// Changes the bounds of user column `j`.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        let c = self.structural[j];
        self.lo[c] = lo;
        self.hi[c] = hi;
        self.active_dirty = true;
        if !self.solved || self.place[c] == Place::Basic {
            return;
        }
        if self.stale[c] {
            self.refresh_column(c);
            let y = self.multipliers();
            let mut dj = self.cost[c];
            for &(i, a) in &self.cols[c] {
                dj -= y[i] * a;
            }
            self.d[c] = dj;
        }
        let old = self.x[c];
        let dj = self.d[c];
        let (place, new) = if lo == hi || (lo.is_finite() && (dj >= 0.0 || !hi.is_finite())) {
            (Place::Lower, lo)
        } else if hi.is_finite() {
            (Place::Upper, hi)
        } else {
            (Place::Free, old)
        };
        self.place[c] = place;
        self.x[c] = new;
        let delta = new - old;
        if delta != 0.0 {
            for k in 0..self.m {
                let a = self.at(k, c);
                if a != 0.0 {
                    let b = self.basis[k];
                    self.x[b] -= a * delta;
                }
            }
        }
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        let c = self.structural[j];
        (self.lo[c], self.hi[c])
    }

    /// Widens the tableau to at least `needed` columns, keeping the first
    /// `rows` rows and `cols` columns.
    fn grow_stride(&mut self, needed: usize, rows: usize, cols: usize) {
        if needed <= self.stride {
            return;
        }
        let new_stride = needed + needed / 2 + 8;
        let mut tab = vec![0.0; rows * new_stride];
        for i in 0..rows {
            tab[i * new_stride..i * new_stride + cols]
                .copy_from_slice(&self.tab[i * self.stride..i * self.stride + cols]);
        }
        self.tab = tab;
        self.stride = new_stride;
    }

    /// Adds a row `coeffs · x (sense) rhs` over user columns. Inequalities get
    /// a new slack column, which is returned. The new row starts with its
    /// slack (or its artificial) basic; call [`Simplex::resolve`] afterwards.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: RowSense, rhs: f64) -> Option<usize> {
        let row = self.m;
        let mut new_cols = 1; // artificial
        if sense != RowSense::Eq {
            new_cols += 1;
        }
        let slack_user = if sense != RowSense::Eq {
            let c = self.ncols;
            let sign = if sense == RowSense::Le { 1.0 } else { -1.0 };
            self.cols.push(vec![(row, sign)]);
            self.cost.push(0.0);
            self.lo.push(0.0);
            self.hi.push(f64::INFINITY);
            self.kind.push(ColKind::Structural);
            self.structural.push(c);
            Some(self.structural.len() - 1)
        } else {
            None
        };
        let art = self.cols.len();
        self.cols.push(vec![(row, 1.0)]);
        self.cost.push(0.0);
        self.lo.push(0.0);
        self.hi.push(0.0);
        self.kind.push(ColKind::Artificial);
        self.art_of_row.push(art);
        self.art_sign.push(1.0);
        let internal: Vec<(usize, f64)> = coeffs.iter().map(|&(j, a)| (self.structural[j], a)).collect();
        for &(c, a) in &internal {
            self.cols[c].push((row, a));
        }
        self.rhs.push(rhs);
        self.m += 1;
        let old_ncols = self.ncols;
        self.ncols += new_cols;

        if !self.solved {
            return slack_user;
        }

        self.grow_stride(self.ncols, row, old_ncols);
        self.tab.resize(self.m * self.stride, 0.0);
        self.d.resize(self.ncols, 0.0);
        self.row_of.resize(self.ncols, usize::MAX);
        self.place.resize(self.ncols, Place::Lower);
        self.x.resize(self.ncols, 0.0);
        self.stale.resize(self.ncols, false);

        // new row in tableau space: a - sum_k a_{B_k} * row_k
        let stride = self.stride;
        let mut new_row = vec![0.0; stride];
        for &(c, a) in &internal {
            new_row[c] += a;
        }
        let basic_coefs: Vec<(usize, f64)> = internal
            .iter()
            .filter(|&&(c, _)| self.place[c] == Place::Basic)
            .map(|&(c, a)| (self.row_of[c], a))
            .collect();
        for (k, a) in basic_coefs {
            let src = &self.tab[k * stride..k * stride + old_ncols];
            for (dst, s) in new_row[..old_ncols].iter_mut().zip(src) {
                *dst -= a * s;
            }
            new_row[self.basis[k]] = 0.0;
        }
        let basic_col = match slack_user {
            Some(_) => old_ncols,
            None => art,
        };
        new_row[art] = 1.0;
        if slack_user.is_some() {
            let sign = self.cols[old_ncols][0].1;
            new_row[old_ncols] = sign;
            // normalise so the slack column is a unit column
            for v in new_row.iter_mut() {
                *v *= sign;
            }
        }
        self.tab[row * stride..row * stride + stride].copy_from_slice(&new_row);

        // values
        let mut lhs = 0.0;
        for &(c, a) in &internal {
            lhs += a * self.x[c];
        }
        for c in old_ncols..self.ncols {
            self.x[c] = 0.0;
            self.d[c] = 0.0;
            self.place[c] = Place::Lower;
        }
        self.basis.push(basic_col);
        self.row_of[basic_col] = row;
        self.place[basic_col] = Place::Basic;
        self.x[basic_col] = match slack_user {
            Some(_) => {
                let sign = self.cols[old_ncols][0].1;
                (rhs - lhs) / sign
            }
            None => rhs - lhs,
        };
        self.active_dirty = true;
        slack_user
    }

    /// Adds a structural column, returned as a user index. Only valid before
    /// the first solve.
    pub fn add_column(&mut self, entries: &[(usize, f64)], cost: f64, lo: f64, hi: f64) -> usize {
        assert!(!self.solved, "columns can only be added before solving");
        let c = self.cols.len();
        self.cols.push(entries.to_vec());
        self.cost.push(cost);
        self.lo.push(lo);
        self.hi.push(hi);
        self.kind.push(ColKind::Structural);
        self.structural.push(c);
        self.ncols += 1;
        self.structural.len() - 1
    }

    pub fn value(&self, j: usize) -> f64 {
        self.x[self.structural[j]]
    }

    pub fn values(&self) -> Vec<f64> {
        self.structural.iter().map(|&c| self.x[c]).collect()
    }

    pub fn objective(&self) -> f64 {
        self.structural.iter().map(|&c| self.cost[c] * self.x[c]).sum()
    }

    /// Equality-row multipliers y with c - A^T y = reduced costs.
    pub fn duals(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for k in 0..self.m {
            let cb = self.cost[self.basis[k]];
            if cb == 0.0 {
                continue;
            }
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += cb * self.binv(k, i);
            }
        }
        y
    }

    pub fn reduced_costs(&self) -> Vec<f64> {
        let y = self.duals();
        self.structural
            .iter()
            .map(|&c| {
                let mut dj = self.cost[c];
                for &(i, a) in &self.cols[c] {
                    dj -= y[i] * a;
                }
                dj
            })
            .collect()
    }

    /// Recomputes the tableau from the original data for the current basis.
    /// Cleans up accumulated rounding after long warm-started sequences.
    pub fn refactor(&mut self) -> Result<(), LpError> {
        if !self.solved {
            return Ok(());
        }
        let m = self.m;
        // dense B, then Gauss-Jordan for B^-1
        let mut bmat = vec![0.0; m * m];
        for (k, &c) in self.basis.iter().enumerate() {
            for &(i, a) in &self.cols[c] {
                bmat[i * m + k] = a;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut p = col;
            let mut best = bmat[col * m + col].abs();
            for r in col + 1..m {
                let v = bmat[r * m + col].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best < 1e-13 {
                return Err(LpError::Numerical("singular basis during refactor".into()));
            }
            if p != col {
                for j in 0..m {
                    bmat.swap(col * m + j, p * m + j);
                    inv.swap(col * m + j, p * m + j);
                }
            }
            let piv = 1.0 / bmat[col * m + col];
            for j in 0..m {
                bmat[col * m + j] *= piv;
                inv[col * m + j] *= piv;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = bmat[r * m + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..m {
                    bmat[r * m + j] -= f * bmat[col * m + j];
                    inv[r * m + j] -= f * inv[col * m + j];
                }
            }
        }
        // tab = B^-1 A
        let stride = self.stride;
        for v in self.tab.iter_mut() {
            *v = 0.0;
        }
        for j in 0..self.ncols {
            for &(i, a) in &self.cols[j] {
                for k in 0..m {
                    let b = inv[k * m + i];
                    if b != 0.0 {
                        self.tab[k * stride + j] += b * a;
                    }
                }
            }
        }
        for (k, &c) in self.basis.iter().enumerate() {
            for r in 0..m {
                self.tab[r * stride + c] = if r == k { 1.0 } else { 0.0 };
            }
        }
        self.stale.iter_mut().for_each(|s| *s = false);
        self.recompute_basic_values();
        self.recompute_reduced_costs();
        self.active_dirty = true;
        Ok(())
    }

    /// Largest violation of `A x = rhs` over all rows, using the original data.
    pub fn max_residual(&self) -> f64 {
        let mut r = self.rhs.clone();
        for (c, col) in self.cols.iter().enumerate() {
            let v = self.x.get(c).copied().unwrap_or(0.0);
            if v != 0.0 {
                for &(i, a) in col {
                    r[i] -= a * v;
                }
            }
        }
        r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_solved(&self) -> bool {
        self.solved
    }
}
