//! Branch-and-cut for 0-1 second-order-cone bin-packing models.
//!
//! Node relaxations are plain LPs over the simplex core: the cone rows are
//! enforced by outer-approximation (OA) cuts, i.e. supporting hyperplanes of
//! `mu' y + sqrt(y' Lambda y)` at points the search visits. Fractional points
//! are additionally cut by extended polymatroid inequalities, separated on a
//! submodular view of each cone (the cone function itself when its matrix
//! qualifies, its relaxed matrix approximation otherwise, or the lifted pair
//! reformulation) and coupled with the bin-open variable so closed bins
//! satisfy them trivially. Integer LP points are accepted as incumbents only
//! after evaluating every cone exactly; a violated integer point is cut off
//! by the OA cut at that point, which is tight there.
//!
//! Everything is deterministic: node selection is best-bound with ties by
//! node id, branching is most-fractional with ties by lowest variable index,
//! and the cut pool deduplicates on a rounded-coefficient key.

use crate::binpack::Solution;
use crate::linalg::Mat;
use crate::moments::SocRow;
use crate::sdp;
use crate::simplex::{lp_solve, LinearProgram, LpError, LpRow, LpStatus, Relation};
use crate::submodular::{
    self, greedy_separate_with_threshold, lift_soc, CutSpace, LiftedForm, SqrtQuadratic,
};
use serde::{Deserialize, Serialize};
use std::collections::{BinaryHeap, HashSet};
use std::io::Write;
use std::time::Instant;
use thiserror::Error;

const INT_TOL: f64 = 1e-6;
const ROW_FEAS_TOL: f64 = 1e-7;
const EXACT_CONE_TOL: f64 = 1e-9;
const CUT_DROP_SLACK: f64 = 1e-6;

/// Role of a model variable; the index layout is bins, then assignments,
/// then pair products, then scenario indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    /// `z_i`: bin `i` is open.
    Open { bin: usize },
    /// `y_ij`: item `j` assigned to bin `i`.
    Assign { bin: usize, item: usize },
    /// `w_ijk = y_ij * y_ik` for `j < k` (continuous under McCormick rows).
    Pair {
        bin: usize,
        item_a: usize,
        item_b: usize,
    },
    /// SAA indicator: scenario `n` may violate bin `i`'s capacity.
    Scenario { bin: usize, scenario: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarDef {
    pub kind: VarKind,
    pub lo: f64,
    pub hi: f64,
    pub integer: bool,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowRelation {
    Le,
    Eq,
    Ge,
}

/// Sparse linear row over the model variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinRow {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: RowRelation,
    pub rhs: f64,
}

impl LinRow {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, c)| c * x[j]).sum()
    }

    /// Positive when the row is violated at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.value(x);
        match self.relation {
            RowRelation::Le => v - self.rhs,
            RowRelation::Ge => self.rhs - v,
            RowRelation::Eq => (v - self.rhs).abs(),
        }
    }
}

/// One cone row attached to a bin's assignment block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinCone {
    pub bin: usize,
    pub row: SocRow,
}

/// Scenario data for sample-average models; kept structured so exactness can
/// be checked by counting violated scenarios rather than through big-M rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaaData {
    pub alpha: f64,
    pub n_scenarios: usize,
    /// Per bin: `n_scenarios x J` matrix of sampled loads.
    pub loads: Vec<Mat>,
}

impl SaaData {
    /// Scenario-violation budget per bin.
    pub fn budget(&self) -> usize {
        (self.alpha * self.n_scenarios as f64).floor() as usize
    }
}

/// A bin-packing model in solver form; see `binpack::build_model` and
/// `binpack::build_saa_model`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelIr {
    pub num_bins: usize,
    pub num_items: usize,
    pub vars: Vec<VarDef>,
    /// Rows always present in node LPs: assignment logic, scenario rows, and
    /// the linear part `mu' y <= T` of each cone.
    pub core_rows: Vec<LinRow>,
    /// Valid rows enforced lazily on violation: McCormick envelopes of the
    /// pair variables.
    pub mccormick_rows: Vec<LinRow>,
    /// Valid rows enforced lazily on violation: closed-form strengthening of
    /// the lifted formulation.
    pub static_rows: Vec<LinRow>,
    pub cones: Vec<BinCone>,
    pub saa: Option<SaaData>,
    /// Pair variables present (lifted formulation).
    pub lifted: bool,
}

impl ModelIr {
    pub fn z_index(&self, bin: usize) -> usize {
        bin
    }

    pub fn y_index(&self, bin: usize, item: usize) -> usize {
        self.num_bins + bin * self.num_items + item
    }

    pub fn pair_offset(&self) -> usize {
        self.num_bins + self.num_bins * self.num_items
    }

    /// Stored pair variable for `j < k`.
    pub fn pair_index(&self, bin: usize, j: usize, k: usize) -> usize {
        debug_assert!(j < k);
        let per_bin = self.num_items * (self.num_items - 1) / 2;
        let pos = j * self.num_items - j * (j + 1) / 2 + (k - j - 1);
        self.pair_offset() + bin * per_bin + pos
    }

    pub fn scenario_offset(&self) -> usize {
        if self.lifted {
            let per_bin = self.num_items * (self.num_items - 1) / 2;
            self.pair_offset() + self.num_bins * per_bin
        } else {
            self.pair_offset()
        }
    }

    pub fn scenario_index(&self, bin: usize, scenario: usize) -> usize {
        let n = self
            .saa
            .as_ref()
            .map(|s| s.n_scenarios)
            .expect("model has no scenario block");
        self.scenario_offset() + bin * n + scenario
    }

    /// Assignment values of one bin at an LP point, clamped to the unit box.
    pub fn y_values(&self, x: &[f64], bin: usize) -> Vec<f64> {
        (0..self.num_items)
            .map(|j| x[self.y_index(bin, j)].clamp(0.0, 1.0))
            .collect()
    }

    /// Lifted point `v = [y; w]` of one bin at an LP point, with `w_jj`
    /// read from the assignment variable and `w_jk = w_kj` from the stored
    /// pair variable.
    pub fn lifted_point(&self, x: &[f64], bin: usize) -> Vec<f64> {
        let j_dim = self.num_items;
        let mut v = Vec::with_capacity(j_dim + j_dim * j_dim);
        for j in 0..j_dim {
            v.push(x[self.y_index(bin, j)].clamp(0.0, 1.0));
        }
        for j in 0..j_dim {
            for k in 0..j_dim {
                let value = if j == k {
                    x[self.y_index(bin, j)]
                } else {
                    let (a, b) = if j < k { (j, k) } else { (k, j) };
                    x[self.pair_index(bin, a, b)]
                };
                v.push(value.clamp(0.0, 1.0));
            }
        }
        v
    }

    /// Exact objective of a point (only open/assignment variables carry
    /// cost).
    pub fn objective_of(&self, x: &[f64]) -> f64 {
        self.vars
            .iter()
            .enumerate()
            .map(|(j, def)| def.cost * x[j])
            .sum()
    }
}

/// Polymatroid cut family used at fractional points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutMode {
    /// Outer approximation only.
    None,
    /// Original-space cuts on the cone function or its relaxed submodular
    /// approximation.
    Relax,
    /// Lifted-space cuts on the pair reformulation.
    Lifted,
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Relative optimality gap at which the search stops.
    pub gap_tol: f64,
    pub time_limit_secs: Option<f64>,
    pub cut_mode: CutMode,
    /// Enforce the closed-form lifted strengthening rows.
    pub static_inequalities: bool,
    /// Minimum violation for a separated cut to be added.
    pub violation_threshold: f64,
    pub max_cut_rounds: usize,
    /// Per-node trace (node id, bound, incumbent, cuts) streamed as CSV.
    pub trace_path: Option<std::path::PathBuf>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            gap_tol: 1e-4,
            time_limit_secs: None,
            cut_mode: CutMode::None,
            static_inequalities: false,
            violation_threshold: submodular::VIOLATION_THRESHOLD,
            max_cut_rounds: 50,
            trace_path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    GapLimit,
    TimeLimit,
    Infeasible,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CutCounts {
    pub outer_approximation: usize,
    pub polymatroid: usize,
    pub lifted: usize,
    /// Lazily activated model rows (McCormick and static strengthening).
    pub model_rows: usize,
}

impl CutCounts {
    pub fn total(&self) -> usize {
        self.outer_approximation + self.polymatroid + self.lifted
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveStats {
    pub status: SolveStatus,
    pub nodes: usize,
    pub cuts: CutCounts,
    /// Relative gap `(ub - lb) / max(|ub|, 1e-9)` at termination.
    pub gap: f64,
    pub bound: f64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("model is infeasible")]
    Infeasible(Box<SolveStats>),
    #[error("time limit reached with no incumbent")]
    TimeLimit(Box<SolveStats>),
    #[error("outer approximation requested at a point with zero cone norm")]
    ZeroPoint,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("relaxed matrix approximation failed: {0}")]
    Approximation(#[from] sdp::SdpError),
}

/// Supporting hyperplane of the cone `mu' y + sqrt(y' Lambda y) <= T` at
/// `y_hat`: the norm term is positively homogeneous, so it linearizes with
/// zero offset, giving `mu' y + (Lambda y_hat)' y / sqrt(y_hat' Lambda
/// y_hat) <= T`. Tight at `y_hat`, valid everywhere on the cone region.
pub fn oa_cut(row: &SocRow, y_hat: &[f64]) -> Result<(Vec<f64>, f64), SolverError> {
    let quad = row.lambda.quad_form(y_hat);
    if quad <= 1e-12 {
        return Err(SolverError::ZeroPoint);
    }
    let norm = quad.sqrt();
    let grad = row.lambda.mat_vec(y_hat);
    let coeffs = row
        .mu
        .iter()
        .zip(&grad)
        .map(|(m, g)| m + g / norm)
        .collect();
    Ok((coeffs, row.cap))
}

/// Appends the closed-form lifted strengthening rows to the model: per-pair
/// linkage across bins, pair lower bounds against the open indicator,
/// per-item pair budgets, the per-bin pair-count lower bound, and
/// `sum_j y_ij >= z_i` so open bins are nonempty (loses no optimal solution
/// since opening costs are nonnegative).
pub fn add_static_inequalities(model: &mut ModelIr) {
    assert!(model.lifted, "static strengthening needs pair variables");
    let (bins, items) = (model.num_bins, model.num_items);
    let mut rows = Vec::new();

    // w_ijk >= y_ij + y_ik + sum_{l != i} w_ljk - 1   for j < k
    for i in 0..bins {
        for j in 0..items {
            for k in (j + 1)..items {
                let mut coeffs = vec![
                    (model.pair_index(i, j, k), 1.0),
                    (model.y_index(i, j), -1.0),
                    (model.y_index(i, k), -1.0),
                ];
                for l in 0..bins {
                    if l != i {
                        coeffs.push((model.pair_index(l, j, k), -1.0));
                    }
                }
                rows.push(LinRow {
                    coeffs,
                    relation: RowRelation::Ge,
                    rhs: -1.0,
                });
            }
        }
    }
    // w_ijk >= y_ij + y_ik - z_i   for j < k
    for i in 0..bins {
        for j in 0..items {
            for k in (j + 1)..items {
                rows.push(LinRow {
                    coeffs: vec![
                        (model.pair_index(i, j, k), 1.0),
                        (model.y_index(i, j), -1.0),
                        (model.y_index(i, k), -1.0),
                        (model.z_index(i), 1.0),
                    ],
                    relation: RowRelation::Ge,
                    rhs: 0.0,
                });
            }
        }
    }
    // sum_{j != k} w_ijk <= sum_j y_ij - z_i   per bin and item k
    for i in 0..bins {
        for k in 0..items {
            let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(2 * items);
            for j in 0..items {
                if j != k {
                    let (a, b) = if j < k { (j, k) } else { (k, j) };
                    coeffs.push((model.pair_index(i, a, b), 1.0));
                }
            }
            for j in 0..items {
                coeffs.push((model.y_index(i, j), -1.0));
            }
            coeffs.push((model.z_index(i), 1.0));
            rows.push(LinRow {
                coeffs,
                relation: RowRelation::Le,
                rhs: 0.0,
            });
        }
    }
    // sum_{j < k} w_ijk >= sum_j y_ij - z_i   per bin
    for i in 0..bins {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for j in 0..items {
            for k in (j + 1)..items {
                coeffs.push((model.pair_index(i, j, k), 1.0));
            }
        }
        for j in 0..items {
            coeffs.push((model.y_index(i, j), -1.0));
        }
        coeffs.push((model.z_index(i), 1.0));
        rows.push(LinRow {
            coeffs,
            relation: RowRelation::Ge,
            rhs: 0.0,
        });
    }
    // open bins hold at least one item
    for i in 0..bins {
        let mut coeffs: Vec<(usize, f64)> =
            (0..items).map(|j| (model.y_index(i, j), 1.0)).collect();
        coeffs.push((model.z_index(i), -1.0));
        rows.push(LinRow {
            coeffs,
            relation: RowRelation::Ge,
            rhs: 0.0,
        });
    }

    model.static_rows = rows;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum CutFamily {
    OuterApprox,
    Polymatroid,
    Lifted,
}

struct PoolCut {
    row: LinRow,
}

/// Rounded-coefficient key (1e-9 grid) so identical cuts are never
/// resubmitted.
fn cut_key(row: &LinRow) -> Vec<(usize, i64)> {
    let mut key: Vec<(usize, i64)> = row
        .coeffs
        .iter()
        .map(|&(j, c)| (j, (c / 1e-9).round() as i64))
        .filter(|&(_, c)| c != 0)
        .collect();
    key.sort_unstable();
    key.push((usize::MAX, (row.rhs / 1e-9).round() as i64));
    key
}

struct Node {
    id: usize,
    bound: f64,
    /// `(var, lo, hi)` overrides relative to the model bounds.
    fixings: Vec<(usize, f64, f64)>,
    active_cuts: Vec<usize>,
}

struct HeapEntry {
    bound: f64,
    id: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap pops the maximum; invert so the smallest bound (then
        // the smallest id) comes out first.
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Per-bin separation function for original-space polymatroid cuts.
enum RelaxSeparator {
    /// The cone function itself qualifies as submodular.
    Exact(SqrtQuadratic),
    /// Submodular surrogate from the relaxed matrix projection.
    Approximate(SqrtQuadratic),
    /// Degenerate cone, nothing to separate.
    Skip,
}

struct Search<'a> {
    model: &'a ModelIr,
    cfg: &'a SolveConfig,
    pool: Vec<PoolCut>,
    seen: HashSet<Vec<(usize, i64)>>,
    counts: CutCounts,
    relax_separators: Vec<RelaxSeparator>,
    lifted_forms: Vec<LiftedForm>,
    incumbent: Option<(Vec<f64>, f64)>,
    nodes_processed: usize,
    next_id: usize,
    start: Instant,
    trace: Option<std::io::BufWriter<std::fs::File>>,
    mccormick_active: Vec<bool>,
    static_active: Vec<bool>,
}

enum NodeOutcome {
    Pruned,
    Branch { x: Vec<f64>, bound: f64 },
}

impl<'a> Search<'a> {
    fn new(model: &'a ModelIr, cfg: &'a SolveConfig) -> Result<Self, SolverError> {
        let mut relax_separators = Vec::new();
        if cfg.cut_mode == CutMode::Relax {
            for cone in &model.cones {
                let lambda = &cone.row.lambda;
                let sep = if lambda.frobenius_norm() <= 1e-12 {
                    RelaxSeparator::Skip
                } else if submodular::sufficient_condition_holds(lambda) {
                    RelaxSeparator::Exact(SqrtQuadratic::from_row(&cone.row))
                } else {
                    // the projection runs once per bin, up front
                    let approx = sdp::project_relaxed(lambda)?;
                    RelaxSeparator::Approximate(SqrtQuadratic::with_matrix(
                        &cone.row,
                        approx.delta,
                    ))
                };
                relax_separators.push(sep);
            }
        }
        let lifted_forms = if cfg.cut_mode == CutMode::Lifted && model.lifted {
            model.cones.iter().map(|c| lift_soc(&c.row)).collect()
        } else {
            Vec::new()
        };
        let trace = match &cfg.trace_path {
            Some(path) => {
                let file = std::fs::File::create(path).map_err(|e| {
                    SolverError::Lp(LpError::InvalidProgram(format!(
                        "cannot open trace file: {e}"
                    )))
                })?;
                let mut w = std::io::BufWriter::new(file);
                writeln!(w, "node,bound,incumbent,cuts").ok();
                Some(w)
            }
            None => None,
        };
        Ok(Search {
            model,
            cfg,
            pool: Vec::new(),
            seen: HashSet::new(),
            counts: CutCounts::default(),
            relax_separators,
            lifted_forms,
            incumbent: None,
            nodes_processed: 0,
            next_id: 0,
            start: Instant::now(),
            trace,
            mccormick_active: vec![false; model.mccormick_rows.len()],
            static_active: vec![false; model.static_rows.len()],
        })
    }

    fn push_cut(&mut self, row: LinRow, family: CutFamily) -> Option<usize> {
        let key = cut_key(&row);
        if !self.seen.insert(key) {
            return None;
        }
        match family {
            CutFamily::OuterApprox => self.counts.outer_approximation += 1,
            CutFamily::Polymatroid => self.counts.polymatroid += 1,
            CutFamily::Lifted => self.counts.lifted += 1,
        }
        self.pool.push(PoolCut { row });
        Some(self.pool.len() - 1)
    }

    /// Initial OA cuts: one supporting hyperplane per unit vector per cone,
    /// so single-item loads are priced from the root on.
    fn seed_unit_cuts(&mut self) {
        let mut seeds = Vec::new();
        for cone in &self.model.cones {
            let dim = cone.row.dim();
            for j in 0..dim {
                if cone.row.lambda[(j, j)] <= 1e-12 {
                    continue;
                }
                let mut e = vec![0.0; dim];
                e[j] = 1.0;
                if let Ok((coeffs, rhs)) = oa_cut(&cone.row, &e) {
                    seeds.push((cone.bin, coeffs, rhs));
                }
            }
        }
        for (bin, coeffs, rhs) in seeds {
            let row = self.cone_cut_row(bin, &coeffs, rhs);
            self.push_cut(row, CutFamily::OuterApprox);
        }
    }

    fn cone_cut_row(&self, bin: usize, y_coeffs: &[f64], rhs: f64) -> LinRow {
        let coeffs = y_coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > 1e-12)
            .map(|(j, &c)| (self.model.y_index(bin, j), c))
            .collect();
        LinRow {
            coeffs,
            relation: RowRelation::Le,
            rhs,
        }
    }

    fn build_lp(&self, node: &Node) -> LinearProgram {
        let model = self.model;
        let n = model.vars.len();
        let mut bounds: Vec<(f64, f64)> = model.vars.iter().map(|v| (v.lo, v.hi)).collect();
        for &(j, lo, hi) in &node.fixings {
            bounds[j] = (lo, hi);
        }
        let objective: Vec<f64> = model.vars.iter().map(|v| v.cost).collect();

        let mut rows = Vec::new();
        let mut add_row = |r: &LinRow| {
            let mut coeffs = vec![0.0; n];
            let mut scale = 0.0_f64;
            for &(j, c) in &r.coeffs {
                coeffs[j] += c;
                scale = scale.max(c.abs());
            }
            if scale <= 0.0 {
                scale = 1.0;
            }
            for c in &mut coeffs {
                *c /= scale;
            }
            rows.push(LpRow {
                coeffs,
                relation: match r.relation {
                    RowRelation::Le => Relation::Le,
                    RowRelation::Eq => Relation::Eq,
                    RowRelation::Ge => Relation::Ge,
                },
                rhs: r.rhs / scale,
            });
        };
        for r in &model.core_rows {
            add_row(r);
        }
        for (i, r) in model.mccormick_rows.iter().enumerate() {
            if self.mccormick_active[i] {
                add_row(r);
            }
        }
        if self.cfg.static_inequalities {
            for (i, r) in model.static_rows.iter().enumerate() {
                if self.static_active[i] {
                    add_row(r);
                }
            }
        }
        for &ci in &node.active_cuts {
            add_row(&self.pool[ci].row);
        }
        LinearProgram {
            objective,
            rows,
            bounds,
        }
    }

    /// Activates lazily enforced model rows violated at `x`.
    fn activate_model_rows(&mut self, x: &[f64]) -> usize {
        let mut activated = 0;
        for (i, row) in self.model.mccormick_rows.iter().enumerate() {
            if !self.mccormick_active[i] && row.violation(x) > ROW_FEAS_TOL {
                self.mccormick_active[i] = true;
                activated += 1;
            }
        }
        if self.cfg.static_inequalities {
            for (i, row) in self.model.static_rows.iter().enumerate() {
                if !self.static_active[i] && row.violation(x) > ROW_FEAS_TOL {
                    self.static_active[i] = true;
                    activated += 1;
                }
            }
        }
        self.counts.model_rows += activated;
        activated
    }

    /// Reactivates pool cuts violated at `x` that the node is not carrying.
    fn reactivate_pool(&self, node: &mut Node, x: &[f64]) -> usize {
        let carried: HashSet<usize> = node.active_cuts.iter().copied().collect();
        let mut added = 0;
        for (ci, cut) in self.pool.iter().enumerate() {
            if carried.contains(&ci) {
                continue;
            }
            if cut.row.violation(x) > self.cfg.violation_threshold {
                node.active_cuts.push(ci);
                added += 1;
            }
        }
        added
    }

    fn most_fractional(&self, x: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (j, def) in self.model.vars.iter().enumerate() {
            if !def.integer {
                continue;
            }
            let frac = (x[j] - x[j].round()).abs();
            if frac <= INT_TOL {
                continue;
            }
            match best {
                Some((_, b)) if b >= frac => {}
                _ => best = Some((j, frac)),
            }
        }
        best.map(|(j, _)| j)
    }

    /// Separates OA cuts at a fractional LP point.
    fn separate_oa(&mut self, x: &[f64]) -> Vec<usize> {
        let mut pending = Vec::new();
        for cone in &self.model.cones {
            let y = self.model.y_values(x, cone.bin);
            if cone.row.lhs(&y) > cone.row.cap + self.cfg.violation_threshold {
                if let Ok((coeffs, rhs)) = oa_cut(&cone.row, &y) {
                    pending.push((cone.bin, coeffs, rhs));
                }
            }
        }
        let mut new_cuts = Vec::new();
        for (bin, coeffs, rhs) in pending {
            let row = self.cone_cut_row(bin, &coeffs, rhs);
            if let Some(ci) = self.push_cut(row, CutFamily::OuterApprox) {
                new_cuts.push(ci);
            }
        }
        new_cuts
    }

    fn separate_polymatroid(&mut self, x: &[f64]) -> Vec<usize> {
        let mut pending = Vec::new();
        match self.cfg.cut_mode {
            CutMode::Relax => {
                for (cone, sep) in self.model.cones.iter().zip(&self.relax_separators) {
                    let h: &SqrtQuadratic = match sep {
                        RelaxSeparator::Exact(h) | RelaxSeparator::Approximate(h) => h,
                        RelaxSeparator::Skip => continue,
                    };
                    let y = self.model.y_values(x, cone.bin);
                    let z = x[self.model.z_index(cone.bin)].clamp(0.0, 1.0);
                    let t_hat = cone.row.cap * z;
                    if let Some(cut) = greedy_separate_with_threshold(
                        h,
                        &y,
                        t_hat,
                        self.cfg.violation_threshold,
                        CutSpace::Original,
                    ) {
                        // couple with the open indicator: pi' y <= T z
                        let mut coeffs: Vec<(usize, f64)> = cut
                            .pi
                            .iter()
                            .enumerate()
                            .filter(|(_, c)| c.abs() > 1e-12)
                            .map(|(j, &c)| (self.model.y_index(cone.bin, j), c))
                            .collect();
                        coeffs.push((self.model.z_index(cone.bin), -cone.row.cap));
                        pending.push((
                            LinRow {
                                coeffs,
                                relation: RowRelation::Le,
                                rhs: 0.0,
                            },
                            CutFamily::Polymatroid,
                        ));
                    }
                }
            }
            CutMode::Lifted => {
                for (cone, lf) in self.model.cones.iter().zip(&self.lifted_forms) {
                    let v = self.model.lifted_point(x, cone.bin);
                    let z = x[self.model.z_index(cone.bin)].clamp(0.0, 1.0);
                    let t_hat = lf.rhs() * z;
                    if let Some(cut) = greedy_separate_with_threshold(
                        lf,
                        &v,
                        t_hat,
                        self.cfg.violation_threshold,
                        CutSpace::Lifted,
                    ) {
                        pending.push((self.fold_lifted_cut(cone, &cut.pi), CutFamily::Lifted));
                    }
                }
            }
            CutMode::None => {}
        }
        let mut new_cuts = Vec::new();
        for (row, family) in pending {
            if let Some(ci) = self.push_cut(row, family) {
                new_cuts.push(ci);
            }
        }
        new_cuts
    }

    /// Maps lifted-space coefficients back onto model variables: diagonal
    /// pair coordinates fold onto the assignment variables, off-diagonal
    /// pairs onto the stored `j < k` products; coupled with `T^2 z_i`.
    fn fold_lifted_cut(&self, cone: &BinCone, pi: &[f64]) -> LinRow {
        let j_dim = self.model.num_items;
        let mut y_coeff = vec![0.0; j_dim];
        let mut w_coeff = vec![vec![0.0; j_dim]; j_dim];
        for (j, value) in y_coeff.iter_mut().enumerate() {
            *value += pi[j];
        }
        for j in 0..j_dim {
            for k in 0..j_dim {
                let c = pi[j_dim + j * j_dim + k];
                if c == 0.0 {
                    continue;
                }
                if j == k {
                    y_coeff[j] += c;
                } else {
                    let (a, b) = if j < k { (j, k) } else { (k, j) };
                    w_coeff[a][b] += c;
                }
            }
        }
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for (j, &c) in y_coeff.iter().enumerate() {
            if c.abs() > 1e-12 {
                coeffs.push((self.model.y_index(cone.bin, j), c));
            }
        }
        for j in 0..j_dim {
            for k in (j + 1)..j_dim {
                let c = w_coeff[j][k];
                if c.abs() > 1e-12 {
                    coeffs.push((self.model.pair_index(cone.bin, j, k), c));
                }
            }
        }
        coeffs.push((self.model.z_index(cone.bin), -cone.row.cap * cone.row.cap));
        LinRow {
            coeffs,
            relation: RowRelation::Le,
            rhs: 0.0,
        }
    }

    /// Cone indices violated by the rounded integer point.
    fn violated_cones(&self, x: &[f64]) -> Vec<usize> {
        let mut violated = Vec::new();
        for (idx, cone) in self.model.cones.iter().enumerate() {
            let y: Vec<f64> = (0..self.model.num_items)
                .map(|j| x[self.model.y_index(cone.bin, j)].round())
                .collect();
            if cone.row.lhs(&y) > cone.row.cap + EXACT_CONE_TOL {
                violated.push(idx);
            }
        }
        violated
    }

    fn is_integral(&self, x: &[f64]) -> bool {
        self.model
            .vars
            .iter()
            .enumerate()
            .all(|(j, def)| !def.integer || (x[j] - x[j].round()).abs() <= INT_TOL)
    }

    fn process_node(&mut self, node: &mut Node, cutoff: f64) -> Result<NodeOutcome, SolverError> {
        for round in 0..=self.cfg.max_cut_rounds {
            let lp = self.build_lp(node);
            let sol = lp_solve(&lp)?;
            match sol.status {
                LpStatus::Infeasible => return Ok(NodeOutcome::Pruned),
                LpStatus::Unbounded => {
                    return Err(SolverError::Lp(LpError::InvalidProgram(
                        "node relaxation unbounded; model bounds are missing".into(),
                    )))
                }
                LpStatus::Optimal => {}
            }
            let x = sol.x;
            let bound = sol.obj;
            node.bound = node.bound.max(bound);
            if bound >= cutoff {
                return Ok(NodeOutcome::Pruned);
            }

            // enforce lazily handled model rows and pooled cuts first
            let activated = self.activate_model_rows(&x) + self.reactivate_pool(node, &x);
            if activated > 0 && round < self.cfg.max_cut_rounds {
                continue;
            }

            if self.is_integral(&x) {
                let violated = self.violated_cones(&x);
                if violated.is_empty() {
                    let rounded: Vec<f64> = x
                        .iter()
                        .zip(&self.model.vars)
                        .map(|(&v, def)| if def.integer { v.round() } else { v })
                        .collect();
                    let obj = self.model.objective_of(&rounded);
                    if self
                        .incumbent
                        .as_ref()
                        .map_or(true, |(_, best)| obj < best - 1e-9)
                    {
                        self.incumbent = Some((rounded, obj));
                    }
                    return Ok(NodeOutcome::Pruned);
                }
                // cut the violated integer point off with exact supports
                let mut pending = Vec::new();
                for idx in violated {
                    let cone = &self.model.cones[idx];
                    let y: Vec<f64> = (0..self.model.num_items)
                        .map(|j| x[self.model.y_index(cone.bin, j)].round())
                        .collect();
                    if let Ok((coeffs, rhs)) = oa_cut(&cone.row, &y) {
                        pending.push((cone.bin, coeffs, rhs));
                    }
                }
                let mut added = 0;
                for (bin, coeffs, rhs) in pending {
                    let row = self.cone_cut_row(bin, &coeffs, rhs);
                    if let Some(ci) = self.push_cut(row, CutFamily::OuterApprox) {
                        node.active_cuts.push(ci);
                        added += 1;
                    }
                }
                if added == 0 || round == self.cfg.max_cut_rounds {
                    return Ok(NodeOutcome::Branch { x, bound });
                }
                continue;
            }

            if round == self.cfg.max_cut_rounds {
                return Ok(NodeOutcome::Branch { x, bound });
            }
            let mut added = Vec::new();
            added.extend(self.separate_oa(&x));
            added.extend(self.separate_polymatroid(&x));
            if added.is_empty() {
                // drop slack cuts so children start lean
                node.active_cuts.retain(|&ci| {
                    self.pool[ci].row.violation(&x) > -CUT_DROP_SLACK
                });
                return Ok(NodeOutcome::Branch { x, bound });
            }
            node.active_cuts.extend(added);
        }
        unreachable!("cut loop exits via branch or prune");
    }

    fn trace_node(&mut self, id: usize, bound: f64) {
        let incumbent = self
            .incumbent
            .as_ref()
            .map(|(_, obj)| format!("{obj:.6}"))
            .unwrap_or_default();
        let cuts = self.counts.total();
        if let Some(w) = &mut self.trace {
            writeln!(w, "{id},{bound:.6},{incumbent},{cuts}").ok();
        }
    }
}

/// Branch-and-cut entry point. Returns the optimal (or tolerance-optimal)
/// solution and search statistics; infeasible models and timeouts without an
/// incumbent surface as errors carrying the statistics.
pub fn solve(model: &ModelIr, cfg: &SolveConfig) -> Result<(Solution, SolveStats), SolverError> {
    let mut search = Search::new(model, cfg)?;
    search.seed_unit_cuts();
    let root_actives: Vec<usize> = (0..search.pool.len()).collect();

    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();
    let mut nodes: Vec<Option<Node>> = Vec::new();
    nodes.push(Some(Node {
        id: 0,
        bound: f64::NEG_INFINITY,
        fixings: Vec::new(),
        active_cuts: root_actives,
    }));
    heap.push(HeapEntry {
        bound: f64::NEG_INFINITY,
        id: 0,
    });
    search.next_id = 1;

    let mut timed_out = false;
    while let Some(entry) = heap.pop() {
        let Some(mut node) = nodes[entry.id].take() else {
            continue;
        };
        let ub = search.incumbent.as_ref().map_or(f64::INFINITY, |(_, o)| *o);
        let cutoff = ub - (1e-9_f64).max(cfg.gap_tol * ub.abs());
        if node.bound >= cutoff {
            continue;
        }
        if let Some(limit) = cfg.time_limit_secs {
            if search.start.elapsed().as_secs_f64() > limit {
                timed_out = true;
                heap.push(HeapEntry {
                    bound: node.bound,
                    id: node.id,
                });
                nodes[entry.id] = Some(node);
                break;
            }
        }
        search.nodes_processed += 1;

        match search.process_node(&mut node, cutoff)? {
            NodeOutcome::Pruned => {
                search.trace_node(node.id, node.bound);
            }
            NodeOutcome::Branch { x, bound } => {
                search.trace_node(node.id, bound);
                let Some(branch_var) = search.most_fractional(&x) else {
                    // integral point that could not be accepted or separated;
                    // cannot happen for well-formed models, prune defensively
                    continue;
                };
                for &(lo, hi) in &[(0.0, 0.0), (1.0, 1.0)] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((branch_var, lo, hi));
                    let child_id = search.next_id;
                    search.next_id += 1;
                    let child = Node {
                        id: child_id,
                        bound,
                        fixings,
                        active_cuts: node.active_cuts.clone(),
                    };
                    heap.push(HeapEntry {
                        bound,
                        id: child_id,
                    });
                    if nodes.len() <= child_id {
                        nodes.resize_with(child_id + 1, || None);
                    }
                    nodes[child_id] = Some(child);
                }
            }
        }
    }

    let lb = heap
        .iter()
        .map(|e| e.bound)
        .fold(f64::INFINITY, f64::min);
    finish(search, model, lb, timed_out)
}

fn finish(
    mut search: Search,
    model: &ModelIr,
    open_lb: f64,
    timed_out: bool,
) -> Result<(Solution, SolveStats), SolverError> {
    let wall = search.start.elapsed().as_secs_f64();
    match search.incumbent.take() {
        Some((x, obj)) => {
            let lb = open_lb.min(obj);
            let gap = ((obj - lb) / obj.abs().max(1e-9)).max(0.0);
            let status = if timed_out {
                SolveStatus::TimeLimit
            } else if gap <= 1e-9 {
                SolveStatus::Optimal
            } else {
                SolveStatus::GapLimit
            };
            let stats = SolveStats {
                status,
                nodes: search.nodes_processed,
                cuts: search.counts,
                gap,
                bound: lb,
                wall_time_secs: wall,
            };
            Ok((extract_solution(model, &x, obj), stats))
        }
        None => {
            let stats = SolveStats {
                status: if timed_out {
                    SolveStatus::TimeLimit
                } else {
                    SolveStatus::Infeasible
                },
                nodes: search.nodes_processed,
                cuts: search.counts,
                gap: f64::INFINITY,
                bound: open_lb,
                wall_time_secs: wall,
            };
            if timed_out {
                Err(SolverError::TimeLimit(Box::new(stats)))
            } else {
                Err(SolverError::Infeasible(Box::new(stats)))
            }
        }
    }
}

fn extract_solution(model: &ModelIr, x: &[f64], objective: f64) -> Solution {
    let z: Vec<bool> = (0..model.num_bins)
        .map(|i| x[model.z_index(i)] > 0.5)
        .collect();
    let y: Vec<Vec<bool>> = (0..model.num_bins)
        .map(|i| {
            (0..model.num_items)
                .map(|j| x[model.y_index(i, j)] > 0.5)
                .collect()
        })
        .collect();
    let soc_slack: Vec<f64> = model
        .cones
        .iter()
        .map(|cone| {
            let yv: Vec<f64> = (0..model.num_items)
                .map(|j| if y[cone.bin][j] { 1.0 } else { 0.0 })
                .collect();
            cone.row.slack(&yv)
        })
        .collect();
    Solution {
        z,
        y,
        objective,
        soc_slack,
    }
}

/// Does a binary model point satisfy every row, cone, and scenario budget?
/// Used by the enumeration oracle and cut-safety tests.
pub fn binary_point_feasible(model: &ModelIr, x: &[f64]) -> bool {
    for row in model
        .core_rows
        .iter()
        .chain(&model.mccormick_rows)
        .chain(&model.static_rows)
    {
        if row.violation(x) > 1e-7 {
            return false;
        }
    }
    for cone in &model.cones {
        let y: Vec<f64> = (0..model.num_items)
            .map(|j| x[model.y_index(cone.bin, j)])
            .collect();
        if cone.row.lhs(&y) > cone.row.cap + EXACT_CONE_TOL {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    fn unit_cone(dim: usize, cap: f64) -> SocRow {
        SocRow {
            mu: vec![1.0; dim],
            lambda: Mat::identity(dim),
            cap,
            omega: 1.0,
        }
    }

    #[test]
    fn oa_cut_at_unit_vector() {
        let row = SocRow {
            mu: vec![2.0, 3.0],
            lambda: Mat::from_rows(&[vec![4.0, 1.0], vec![1.0, 9.0]]),
            cap: 10.0,
            omega: 1.0,
        };
        let (coeffs, rhs) = oa_cut(&row, &[1.0, 0.0]).unwrap();
        // gradient of the norm at e_0 is Lambda e_0 / sqrt(Lambda_00)
        assert!((coeffs[0] - (2.0 + 4.0 / 2.0)).abs() < 1e-12);
        assert!((coeffs[1] - (3.0 + 1.0 / 2.0)).abs() < 1e-12);
        assert_eq!(rhs, 10.0);
        // tight at the expansion point
        assert!((dot(&coeffs, &[1.0, 0.0]) - row.lhs(&[1.0, 0.0])).abs() < 1e-12);
    }

    #[test]
    fn oa_cut_rejects_zero_norm() {
        let row = unit_cone(2, 5.0);
        assert!(matches!(
            oa_cut(&row, &[0.0, 0.0]),
            Err(SolverError::ZeroPoint)
        ));
    }

    #[test]
    fn oa_cut_never_cuts_cone_points() {
        let row = SocRow {
            mu: vec![1.0, 2.0, 0.5],
            lambda: Mat::from_rows(&[
                vec![2.0, 0.3, -0.1],
                vec![0.3, 1.5, 0.2],
                vec![-0.1, 0.2, 1.0],
            ]),
            cap: 4.0,
            omega: 1.0,
        };
        let points = [
            vec![1.0, 0.0, 0.0],
            vec![0.3, 0.7, 0.2],
            vec![1.0, 1.0, 1.0],
            vec![0.1, 0.0, 0.9],
        ];
        for p in &points {
            let Ok((coeffs, rhs)) = oa_cut(&row, p) else {
                continue;
            };
            for mask in 0..8u32 {
                let y: Vec<f64> = (0..3)
                    .map(|j| if mask & (1 << j) != 0 { 1.0 } else { 0.0 })
                    .collect();
                if row.lhs(&y) <= row.cap + 1e-12 {
                    assert!(
                        dot(&coeffs, &y) <= rhs + 1e-9,
                        "feasible point cut off at mask {mask}"
                    );
                }
            }
        }
    }
}
