//! Dense bounded-variable primal simplex.
//!
//! Solves `min c'x` subject to linear rows and per-variable bounds. Built for
//! the node relaxations of the branch-and-cut solver: models are desk scale
//! (at most a few thousand variables), so a dense two-phase tableau with
//! bound-flip handling wins on auditability and determinism over anything
//! sparse. The tableau is refactorized from the original data at a fixed
//! pivot cadence and whenever a result fails verification, which keeps
//! accumulated elimination error from leaking into answers. Degenerate
//! stretches fall back to Bland's rule. The leaving choice takes the
//! largest pivot among minimum-ratio ties and then the lowest variable
//! index, so a given model always pivots the same way.

use thiserror::Error;

/// Relation of a linear row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    /// Minimized cost vector, one entry per structural variable.
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    /// Inclusive `[lo, hi]` per structural variable; infinities allowed.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (meaningful only when optimal).
    pub x: Vec<f64>,
    pub obj: f64,
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("pivot limit of {0} reached")]
    IterationLimit(usize),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Reduced-cost optimality threshold.
const DUAL_TOL: f64 = 1e-9;
/// Tableau entries at or below this are treated as zero in the ratio test.
const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
const PHASE1_FEAS_TOL: f64 = 1e-7;
const MAX_ITERATIONS: usize = 100_000;
/// Verified-state residual accepted as clean.
const VERIFY_TOL: f64 = 1e-8;
/// Verification-repair rounds before the attempt is abandoned.
const MAX_REPAIRS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free variable resting at zero.
    FreeZero,
}

struct Tableau {
    m: usize,
    cols: usize,
    /// Current eliminated tableau, `B^-1 A`.
    t: Vec<f64>,
    /// Original (sign-adjusted) equality system `A x = b`.
    orig: Vec<f64>,
    orig_b: Vec<f64>,
    xb: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    d: Vec<f64>, // reduced costs
    cost: Vec<f64>,
    iterations: usize,
    pivots_since_refactor: usize,
    refactor_every: usize,
    bland: bool,
    degenerate_run: usize,
    bland_trigger: usize,
}

impl Tableau {
    fn value_of(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::Basic(i) => self.xb[i],
            VarState::AtLower => self.lo[j],
            VarState::AtUpper => self.hi[j],
            VarState::FreeZero => 0.0,
        }
    }

    fn full_point(&self) -> Vec<f64> {
        (0..self.cols).map(|j| self.value_of(j)).collect()
    }

    /// Worst violation of the original equality system at the current point.
    fn residual(&self) -> f64 {
        let x = self.full_point();
        let mut worst = 0.0_f64;
        for i in 0..self.m {
            let row = &self.orig[i * self.cols..(i + 1) * self.cols];
            let mut acc = -self.orig_b[i];
            for (a, v) in row.iter().zip(&x) {
                acc += a * v;
            }
            worst = worst.max(acc.abs() / (1.0 + self.orig_b[i].abs()));
        }
        // basic variables must respect their bounds
        for i in 0..self.m {
            let bv = self.basis[i];
            worst = worst.max(self.lo[bv] - self.xb[i]).max(self.xb[i] - self.hi[bv]);
        }
        worst
    }

    /// Rebuilds the eliminated tableau, basic values, and reduced costs from
    /// the original data for the current basis and nonbasic states. Returns
    /// false if the basis matrix is numerically singular.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let cols = self.cols;
        let mut aug = self.orig.clone();
        // rhs adjusted by the nonbasic point: B xb = b - N xN
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            let row = &aug[i * cols..(i + 1) * cols];
            let mut acc = self.orig_b[i];
            for (j, a) in row.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                match self.state[j] {
                    VarState::AtLower => acc -= a * self.lo[j],
                    VarState::AtUpper => acc -= a * self.hi[j],
                    _ => {}
                }
            }
            rhs[i] = acc;
        }

        // Gauss-Jordan elimination on the basis columns, choosing the
        // largest remaining pivot per column for stability.
        let basis_cols: Vec<usize> = self.basis.clone();
        let mut row_of_col: Vec<usize> = vec![usize::MAX; basis_cols.len()];
        let mut used = vec![false; m];
        for (k, &col) in basis_cols.iter().enumerate() {
            let mut best_row = usize::MAX;
            let mut best_val = 0.0_f64;
            for r in 0..m {
                if used[r] {
                    continue;
                }
                let v = aug[r * cols + col].abs();
                if v > best_val {
                    best_val = v;
                    best_row = r;
                }
            }
            if best_row == usize::MAX || best_val < 1e-11 {
                return false;
            }
            used[best_row] = true;
            row_of_col[k] = best_row;
            let inv = 1.0 / aug[best_row * cols + col];
            {
                let row = &mut aug[best_row * cols..(best_row + 1) * cols];
                for v in row.iter_mut() {
                    *v *= inv;
                }
                row[col] = 1.0;
            }
            rhs[best_row] *= inv;
            let pivot_row: Vec<f64> = aug[best_row * cols..(best_row + 1) * cols].to_vec();
            let pivot_rhs = rhs[best_row];
            for r in 0..m {
                if r == best_row {
                    continue;
                }
                let f = aug[r * cols + col];
                if f == 0.0 {
                    continue;
                }
                let row = &mut aug[r * cols..(r + 1) * cols];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[col] = 0.0;
                rhs[r] -= f * pivot_rhs;
            }
        }

        // permute rows so basis[i] corresponds to row i
        let mut new_t = vec![0.0; m * cols];
        let mut new_xb = vec![0.0; m];
        let mut new_basis = vec![0usize; m];
        for (k, &col) in basis_cols.iter().enumerate() {
            let r = row_of_col[k];
            new_t[k * cols..(k + 1) * cols].copy_from_slice(&aug[r * cols..(r + 1) * cols]);
            new_xb[k] = rhs[r];
            new_basis[k] = col;
            self.state[col] = VarState::Basic(k);
        }
        self.t = new_t;
        self.xb = new_xb;
        self.basis = new_basis;
        self.pivots_since_refactor = 0;
        self.rebuild_reduced_costs();
        true
    }

    /// One priced entering candidate: `(column, direction)`.
    fn choose_entering(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None; // (col, dir, score)
        for j in 0..self.cols {
            if self.lo[j] == self.hi[j] {
                continue; // fixed variable, can never move
            }
            let dj = self.d[j];
            let dir = match self.state[j] {
                VarState::Basic(_) => continue,
                VarState::AtLower => {
                    if dj < -DUAL_TOL {
                        1.0
                    } else {
                        continue;
                    }
                }
                VarState::AtUpper => {
                    if dj > DUAL_TOL {
                        -1.0
                    } else {
                        continue;
                    }
                }
                VarState::FreeZero => {
                    if dj < -DUAL_TOL {
                        1.0
                    } else if dj > DUAL_TOL {
                        -1.0
                    } else {
                        continue;
                    }
                }
            };
            if self.bland {
                return Some((j, dir));
            }
            let score = dj.abs();
            match best {
                Some((_, _, s)) if s >= score => {}
                _ => best = Some((j, dir, score)),
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Two-pass (Harris) leaving choice for entering column `j` moving in
    /// `dir`: pass one finds the tightest step with bounds relaxed by a tiny
    /// feasibility band, pass two picks the largest pivot entry among rows
    /// whose true ratio fits under it (ties by lowest basic variable index).
    /// Returns `(step, Some((row, hits_upper)))`, `(step, None)` for a bound
    /// flip, or `step = f64::INFINITY` for an unbounded ray.
    fn ratio_test(&self, j: usize, dir: f64) -> (f64, Option<(usize, bool)>) {
        const FEAS_BAND: f64 = 1e-9;
        let own_span = (self.hi[j] - self.lo[j]).max(0.0); // may be infinite

        let mut theta_max = own_span;
        for i in 0..self.m {
            let a = self.t[i * self.cols + j];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let delta = dir * a;
            let bv = self.basis[i];
            let relaxed = if delta > 0.0 {
                if self.lo[bv] == f64::NEG_INFINITY {
                    continue;
                }
                (self.xb[i] - self.lo[bv] + FEAS_BAND) / delta
            } else {
                if self.hi[bv] == f64::INFINITY {
                    continue;
                }
                (self.hi[bv] - self.xb[i] + FEAS_BAND) / -delta
            };
            theta_max = theta_max.min(relaxed.max(0.0));
        }
        if theta_max == f64::INFINITY {
            return (f64::INFINITY, None);
        }

        let mut best: Option<(usize, bool)> = None;
        let mut best_step = own_span;
        let mut best_pivot = 0.0_f64;
        let mut best_var = usize::MAX;
        for i in 0..self.m {
            let a = self.t[i * self.cols + j];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let delta = dir * a;
            let bv = self.basis[i];
            let (allowed, hits_upper) = if delta > 0.0 {
                if self.lo[bv] == f64::NEG_INFINITY {
                    continue;
                }
                (((self.xb[i] - self.lo[bv]) / delta).max(0.0), false)
            } else {
                if self.hi[bv] == f64::INFINITY {
                    continue;
                }
                (((self.hi[bv] - self.xb[i]) / -delta).max(0.0), true)
            };
            if allowed > theta_max {
                continue;
            }
            let replace = match best {
                None => true,
                Some(_) => {
                    a.abs() > 4.0 * best_pivot
                        || (4.0 * a.abs() >= best_pivot && bv < best_var)
                }
            };
            if replace {
                best = Some((i, hits_upper));
                best_step = allowed;
                best_pivot = a.abs();
                best_var = bv;
            }
        }
        match best {
            Some(choice) => (best_step, Some(choice)),
            // no blocking row fits under the band: flip the entering
            // variable to its opposite bound
            None => (own_span, None),
        }
    }

    fn apply_bound_flip(&mut self, j: usize, dir: f64, step: f64) {
        for i in 0..self.m {
            let a = self.t[i * self.cols + j];
            if a != 0.0 {
                self.xb[i] -= dir * step * a;
            }
        }
        self.state[j] = match self.state[j] {
            VarState::AtLower => VarState::AtUpper,
            VarState::AtUpper => VarState::AtLower,
            other => other,
        };
    }

    fn pivot(&mut self, j: usize, dir: f64, step: f64, leave_row: usize, hits_upper: bool) {
        let entering_value = self.value_of(j) + dir * step;
        for i in 0..self.m {
            if i == leave_row {
                continue;
            }
            let a = self.t[i * self.cols + j];
            if a != 0.0 {
                self.xb[i] -= dir * step * a;
            }
        }
        let leaving = self.basis[leave_row];
        self.state[leaving] = if hits_upper {
            VarState::AtUpper
        } else {
            VarState::AtLower
        };

        let cols = self.cols;
        let piv = self.t[leave_row * cols + j];
        let inv = 1.0 / piv;
        {
            let row = &mut self.t[leave_row * cols..(leave_row + 1) * cols];
            for v in row.iter_mut() {
                *v *= inv;
            }
            row[j] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[leave_row * cols..(leave_row + 1) * cols].to_vec();
        for i in 0..self.m {
            if i == leave_row {
                continue;
            }
            let f = self.t[i * cols + j];
            if f.abs() <= 1e-13 {
                self.t[i * cols + j] = 0.0;
                continue;
            }
            let row = &mut self.t[i * cols..(i + 1) * cols];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[j] = 0.0;
        }
        let f = self.d[j];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.d[j] = 0.0;
        }

        self.basis[leave_row] = j;
        self.state[j] = VarState::Basic(leave_row);
        self.xb[leave_row] = entering_value;
    }

    /// Runs simplex iterations until optimality, unboundedness, or the pivot
    /// limit. Returns `None` on optimality.
    fn iterate(&mut self) -> Result<Option<LpStatus>, LpError> {
        loop {
            if self.pivots_since_refactor >= self.refactor_every {
                if !self.refactor() {
                    return Err(LpError::Numerical("singular basis on refactor".into()));
                }
            }
            let Some((j, dir)) = self.choose_entering() else {
                return Ok(None);
            };
            let (step, leave) = self.ratio_test(j, dir);
            if step == f64::INFINITY {
                return Ok(Some(LpStatus::Unbounded));
            }
            self.iterations += 1;
            self.pivots_since_refactor += 1;
            if self.iterations > MAX_ITERATIONS {
                return Err(LpError::IterationLimit(MAX_ITERATIONS));
            }
            if step <= DEGENERATE_STEP {
                self.degenerate_run += 1;
                if self.degenerate_run >= self.bland_trigger {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }
            match leave {
                None => self.apply_bound_flip(j, dir, step),
                Some((row, hits_upper)) => self.pivot(j, dir, step, row, hits_upper),
            }
        }
    }

    fn rebuild_reduced_costs(&mut self) {
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = self.t[i * self.cols..(i + 1) * self.cols].to_vec();
            for (dv, rv) in self.d.iter_mut().zip(&row) {
                *dv -= cb * rv;
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        self.cost = cost;
        self.rebuild_reduced_costs();
    }

    /// Iterate with verification: every claimed terminal state is re-checked
    /// on a freshly refactorized tableau (exact for the current basis), and
    /// iteration resumes if the refactorization exposes further progress.
    /// A state that stays inconsistent is a numerical failure; the caller
    /// restarts the whole solve with more conservative settings.
    fn iterate_verified(&mut self) -> Result<Option<LpStatus>, LpError> {
        for _ in 0..=MAX_REPAIRS {
            let outcome = self.iterate()?;
            if !self.refactor() {
                return Err(LpError::Numerical("singular basis on refactor".into()));
            }
            if outcome.is_some() {
                // unboundedness must survive a fresh factorization
                let confirm = self.iterate()?;
                if confirm.is_some() {
                    return Ok(confirm);
                }
                continue;
            }
            if self.residual() > VERIFY_TOL {
                // exact recomputation says the basic point is out of bounds;
                // the pivots that led here were corrupt
                return Err(LpError::Numerical("basic point left its bounds".into()));
            }
            if self.choose_entering().is_none() {
                return Ok(None);
            }
            // refactorization revealed more reduced-cost progress; continue
        }
        Err(LpError::Numerical(
            "result failed verification repeatedly".into(),
        ))
    }
}

fn validate(lp: &LinearProgram) -> Result<(), LpError> {
    let n = lp.objective.len();
    if lp.bounds.len() != n {
        return Err(LpError::InvalidProgram(format!(
            "{} objective entries but {} bound pairs",
            n,
            lp.bounds.len()
        )));
    }
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(LpError::InvalidProgram(format!(
                "variable {j} has invalid bounds [{lo}, {hi}]"
            )));
        }
    }
    if lp.objective.iter().any(|c| !c.is_finite()) {
        return Err(LpError::InvalidProgram("non-finite objective".into()));
    }
    for (i, row) in lp.rows.iter().enumerate() {
        if row.coeffs.len() != n {
            return Err(LpError::InvalidProgram(format!(
                "row {i} has {} coefficients, expected {n}",
                row.coeffs.len()
            )));
        }
        if !row.rhs.is_finite() || row.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(LpError::InvalidProgram(format!("row {i} is not finite")));
        }
    }
    Ok(())
}

/// Two-phase bounded-variable primal simplex.
///
/// A verification failure (corrupt pivots on a hard instance) triggers one
/// deterministic retry under Bland's rule with a short refactorization
/// cadence before an error is surfaced.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    validate(lp)?;
    match solve_attempt(lp, false) {
        Err(LpError::Numerical(_)) => solve_attempt(lp, true),
        other => other,
    }
}

fn solve_attempt(lp: &LinearProgram, conservative: bool) -> Result<LpSolution, LpError> {
    let n = lp.objective.len();
    let m = lp.rows.len();
    let n_slack = lp
        .rows
        .iter()
        .filter(|r| r.relation != Relation::Eq)
        .count();
    let cols = n + n_slack + m;

    let mut lo = vec![0.0; cols];
    let mut hi = vec![0.0; cols];
    for j in 0..n {
        lo[j] = lp.bounds[j].0;
        hi[j] = lp.bounds[j].1;
    }
    for j in n..cols {
        lo[j] = 0.0;
        hi[j] = f64::INFINITY;
    }

    // initial nonbasic placement
    let mut state = vec![VarState::AtLower; cols];
    for j in 0..cols {
        state[j] = if lo[j].is_finite() {
            VarState::AtLower
        } else if hi[j].is_finite() {
            VarState::AtUpper
        } else {
            VarState::FreeZero
        };
    }

    let mut t = vec![0.0; m * cols];
    let mut orig_b = vec![0.0; m];
    let mut slack_idx = n;
    for (i, row) in lp.rows.iter().enumerate() {
        t[i * cols..i * cols + n].copy_from_slice(&row.coeffs);
        orig_b[i] = row.rhs;
        match row.relation {
            Relation::Le => {
                t[i * cols + slack_idx] = 1.0;
                slack_idx += 1;
            }
            Relation::Ge => {
                t[i * cols + slack_idx] = -1.0;
                slack_idx += 1;
            }
            Relation::Eq => {}
        }
    }

    // residuals at the initial nonbasic point decide artificial signs
    let mut basis = vec![0usize; m];
    let mut xb = vec![0.0; m];
    for i in 0..m {
        let mut ax = 0.0;
        for j in 0..(n + n_slack) {
            let a = t[i * cols + j];
            if a == 0.0 {
                continue;
            }
            ax += a
                * match state[j] {
                    VarState::AtLower => lo[j],
                    VarState::AtUpper => hi[j],
                    _ => 0.0,
                };
        }
        let r = lp.rows[i].rhs - ax;
        let art = n + n_slack + i;
        if r < 0.0 {
            // flip the stored equation so the artificial basis is +1
            for v in &mut t[i * cols..(i + 1) * cols] {
                *v = -*v;
            }
            orig_b[i] = -orig_b[i];
        }
        t[i * cols + art] = 1.0;
        basis[i] = art;
        state[art] = VarState::Basic(i);
        xb[i] = r.abs();
    }

    let mut phase1_cost = vec![0.0; cols];
    for slot in phase1_cost.iter_mut().skip(n + n_slack) {
        *slot = 1.0;
    }

    let mut tab = Tableau {
        m,
        cols,
        orig: t.clone(),
        orig_b,
        t,
        xb,
        basis,
        state,
        lo,
        hi,
        d: vec![0.0; cols],
        cost: Vec::new(),
        iterations: 0,
        pivots_since_refactor: 0,
        refactor_every: if conservative { 64 } else { 256 },
        bland: conservative,
        degenerate_run: 0,
        bland_trigger: 5 * (m + cols),
    };

    // phase 1: minimize the artificial sum
    tab.set_cost(phase1_cost);
    if let Some(status) = tab.iterate_verified()? {
        debug_assert!(status != LpStatus::Unbounded, "phase 1 reported unbounded");
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: vec![0.0; n],
            obj: 0.0,
            iterations: tab.iterations,
        });
    }
    let art_sum: f64 = (0..cols).skip(n + n_slack).map(|j| tab.value_of(j)).sum();
    if art_sum > phase1_feasibility_tol(lp) {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: vec![0.0; n],
            obj: 0.0,
            iterations: tab.iterations,
        });
    }

    // lock artificials at zero; basic ones are pinned there by their bounds
    for j in (n + n_slack)..cols {
        tab.lo[j] = 0.0;
        tab.hi[j] = 0.0;
        if !matches!(tab.state[j], VarState::Basic(_)) {
            tab.state[j] = VarState::AtLower;
        }
    }

    // phase 2: the real objective
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    tab.set_cost(cost);
    tab.bland = conservative;
    tab.degenerate_run = 0;
    if let Some(status) = tab.iterate_verified()? {
        return Ok(LpSolution {
            status,
            x: vec![0.0; n],
            obj: f64::NEG_INFINITY,
            iterations: tab.iterations,
        });
    }

    let x: Vec<f64> = (0..n).map(|j| tab.value_of(j)).collect();
    let obj = lp
        .objective
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum::<f64>();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        obj,
        iterations: tab.iterations,
    })
}

/// Infeasibility is declared only when the phase-1 optimum exceeds this,
/// scaled by the largest right-hand side.
fn phase1_feasibility_tol(lp: &LinearProgram) -> f64 {
    let scale = lp
        .rows
        .iter()
        .map(|r| r.rhs.abs())
        .fold(1.0_f64, f64::max);
    PHASE1_FEAS_TOL * scale
}
