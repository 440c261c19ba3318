//! Brute-force enumeration references for desk-scale verification.
//!
//! [`enumerate_solve`] walks every assignment of items to bins, derives the
//! open indicators (a bin is open iff it holds an item, which loses nothing
//! since opening costs are nonnegative), checks the cone rows or the
//! scenario budget exactly, and reports the optimum. It is the ground truth
//! the branch-and-cut solver is compared against, so it shares no code with
//! the solver's LP path.

use crate::linalg::dot;
use crate::solver::{ModelIr, VarKind};
use thiserror::Error;

/// Largest assignment space the enumerator will walk.
pub const MAX_ASSIGNMENTS: u64 = 20_000_000;
/// Largest `I * J` for the lifted-point enumerator.
pub const MAX_LIFTED_CELLS: usize = 12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("assignment space {0} exceeds the enumeration guard")]
    TooLarge(u64),
}

/// Result of exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct EnumerationReport {
    pub best_objective: Option<f64>,
    /// Host bin per item for the first optimum in lexicographic order
    /// (so ties prefer low-index bins).
    pub best_assignment: Option<Vec<usize>>,
    pub best_open: Option<Vec<bool>>,
    pub feasible_count: u64,
    /// True only when every assignment was checked.
    pub exhaustive: bool,
}

/// Admissibility of assigning `item` to `bin` under the model bounds.
fn admissible(model: &ModelIr, bin: usize, item: usize) -> bool {
    model.vars[model.y_index(bin, item)].hi >= 1.0
}

/// Capacity of bin `i` as used by the scenario rows. Cone models carry it on
/// the cone; scenario models store it as the big-M rows' right-hand side.
fn bin_cap(model: &ModelIr, bin: usize) -> f64 {
    if let Some(cone) = model.cones.iter().find(|c| c.bin == bin) {
        return cone.row.cap;
    }
    for row in &model.core_rows {
        let mut has_scenario = false;
        let mut has_assign_of_bin = false;
        for &(j, _) in &row.coeffs {
            match model.vars[j].kind {
                VarKind::Scenario { bin: b, .. } if b == bin => has_scenario = true,
                VarKind::Assign { bin: b, .. } if b == bin => has_assign_of_bin = true,
                _ => {}
            }
        }
        if has_scenario && has_assign_of_bin {
            return row.rhs;
        }
    }
    f64::INFINITY
}

/// Exhaustively solves a bin-packing model. Assignments are scanned in
/// lexicographic order with item 0 as the most significant digit; only a
/// strictly better objective replaces the stored best, so the reported
/// solution uses the lowest-index bins among ties.
pub fn enumerate_solve(model: &ModelIr) -> Result<EnumerationReport, OracleError> {
    let bins = model.num_bins;
    let items = model.num_items;
    let space = (bins as u64).checked_pow(items as u32).unwrap_or(u64::MAX);
    if space > MAX_ASSIGNMENTS {
        return Err(OracleError::TooLarge(space));
    }

    let open_cost: Vec<f64> = (0..bins)
        .map(|i| model.vars[model.z_index(i)].cost)
        .collect();
    let assign_cost: Vec<Vec<f64>> = (0..bins)
        .map(|i| {
            (0..items)
                .map(|j| model.vars[model.y_index(i, j)].cost)
                .collect()
        })
        .collect();
    let caps: Vec<f64> = (0..bins).map(|i| bin_cap(model, i)).collect();
    let budget = model.saa.as_ref().map(|s| s.budget());

    let mut report = EnumerationReport {
        best_objective: None,
        best_assignment: None,
        best_open: None,
        feasible_count: 0,
        exhaustive: false,
    };

    let mut assignment = vec![0usize; items];
    let mut y = vec![0.0f64; items]; // scratch indicator per bin
    'outer: for code in 0..space {
        // decode with item 0 as the most significant digit
        let mut c = code;
        for j in (0..items).rev() {
            assignment[j] = (c % bins as u64) as usize;
            c /= bins as u64;
        }
        for (j, &host) in assignment.iter().enumerate() {
            if !admissible(model, host, j) {
                continue 'outer;
            }
        }

        // per-bin feasibility: cone rows exactly, or scenario counting
        let mut feasible = true;
        for i in 0..bins {
            for (j, slot) in y.iter_mut().enumerate() {
                *slot = if assignment[j] == i { 1.0 } else { 0.0 };
            }
            if y.iter().all(|&v| v == 0.0) {
                continue;
            }
            for cone in model.cones.iter().filter(|c| c.bin == i) {
                if cone.row.lhs(&y) > cone.row.cap + 1e-9 {
                    feasible = false;
                    break;
                }
            }
            if feasible {
                if let (Some(saa), Some(budget)) = (&model.saa, budget) {
                    let loads = &saa.loads[i];
                    let mut violations = 0usize;
                    for n in 0..saa.n_scenarios {
                        if dot(loads.row(n), &y) > caps[i] + 1e-9 {
                            violations += 1;
                            if violations > budget {
                                feasible = false;
                                break;
                            }
                        }
                    }
                }
            }
            if !feasible {
                break;
            }
        }
        if !feasible {
            continue;
        }
        report.feasible_count += 1;

        let mut objective = 0.0;
        let mut open = vec![false; bins];
        for (j, &host) in assignment.iter().enumerate() {
            objective += assign_cost[host][j];
            open[host] = true;
        }
        for (i, &o) in open.iter().enumerate() {
            if o {
                objective += open_cost[i];
            }
        }
        if report
            .best_objective
            .map_or(true, |best| objective < best - 1e-12)
        {
            report.best_objective = Some(objective);
            report.best_assignment = Some(assignment.clone());
            report.best_open = Some(open);
        }
    }
    report.exhaustive = true;
    Ok(report)
}

/// One point of the lifted feasible set: open indicators, assignments, and
/// the consistent pair products `w_ijk = y_ij * y_ik`.
#[derive(Debug, Clone)]
pub struct LiftedPoint {
    pub z: Vec<bool>,
    /// `I x J`.
    pub y: Vec<Vec<bool>>,
    /// `I x J x J` full product tensor.
    pub w: Vec<Vec<Vec<bool>>>,
}

/// Enumerates every assignment of `items` to `bins` (restricted by the
/// admissibility mask when given), expanded with consistent pair products
/// and open indicators. Open bins are exactly the nonempty ones, so the
/// wasteful open-empty-bin points are excluded.
pub fn enumerate_feasible_lifted(
    bins: usize,
    items: usize,
    rho: Option<&[Vec<u8>]>,
) -> Result<Vec<LiftedPoint>, OracleError> {
    if bins * items > MAX_LIFTED_CELLS {
        return Err(OracleError::TooLarge((bins * items) as u64));
    }
    let space = (bins as u64).pow(items as u32);
    let mut out = Vec::new();
    let mut assignment = vec![0usize; items];
    'outer: for code in 0..space {
        let mut c = code;
        for j in (0..items).rev() {
            assignment[j] = (c % bins as u64) as usize;
            c /= bins as u64;
        }
        if let Some(mask) = rho {
            for (j, &host) in assignment.iter().enumerate() {
                if mask[host][j] == 0 {
                    continue 'outer;
                }
            }
        }
        let mut y = vec![vec![false; items]; bins];
        let mut z = vec![false; bins];
        for (j, &host) in assignment.iter().enumerate() {
            y[host][j] = true;
            z[host] = true;
        }
        let w: Vec<Vec<Vec<bool>>> = (0..bins)
            .map(|i| {
                (0..items)
                    .map(|j| (0..items).map(|k| y[i][j] && y[i][k]).collect())
                    .collect()
            })
            .collect();
        out.push(LiftedPoint { z, y, w });
    }
    Ok(out)
}

impl LiftedPoint {
    /// Flattens to a model-variable vector (pair block included when the
    /// model is lifted; any scenario block stays zero).
    pub fn to_model_point(&self, model: &ModelIr) -> Vec<f64> {
        let mut x = vec![0.0; model.vars.len()];
        for (i, &zi) in self.z.iter().enumerate() {
            x[model.z_index(i)] = if zi { 1.0 } else { 0.0 };
        }
        for i in 0..model.num_bins {
            for j in 0..model.num_items {
                x[model.y_index(i, j)] = if self.y[i][j] { 1.0 } else { 0.0 };
            }
        }
        if model.lifted {
            for i in 0..model.num_bins {
                for j in 0..model.num_items {
                    for k in (j + 1)..model.num_items {
                        x[model.pair_index(i, j, k)] = if self.w[i][j][k] { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binpack::{build_model, BinPackInstance};
    use crate::linalg::Mat;
    use crate::moments::{AmbiguitySpec, MomentData};

    fn hand_instance() -> BinPackInstance {
        // one bin, one item, near-deterministic load 10, cap 20
        BinPackInstance {
            num_bins: 1,
            num_items: 1,
            caps: vec![20.0],
            open_costs: vec![5.0],
            assign_costs: vec![vec![1.0]],
            rho: vec![vec![1]],
            moments: vec![MomentData::new(vec![10.0], Mat::diag(&[1e-6])).unwrap()],
            samples: None,
            seed: 0,
        }
    }

    #[test]
    fn single_item_hand_arithmetic() {
        let spec = AmbiguitySpec::gaussian(0.5).unwrap(); // degenerate cone
        let model = build_model(&hand_instance(), &spec, false).unwrap();
        let report = enumerate_solve(&model).unwrap();
        assert_eq!(report.feasible_count, 1);
        assert!((report.best_objective.unwrap() - 6.0).abs() < 1e-12);
        assert!(report.exhaustive);
    }

    #[test]
    fn ties_prefer_low_index_bins() {
        let mut inst = hand_instance();
        inst.num_bins = 2;
        inst.caps = vec![20.0, 20.0];
        inst.open_costs = vec![5.0, 5.0];
        inst.assign_costs = vec![vec![1.0], vec![1.0]];
        inst.rho = vec![vec![1], vec![1]];
        inst.moments = vec![inst.moments[0].clone(), inst.moments[0].clone()];
        let spec = AmbiguitySpec::gaussian(0.5).unwrap();
        let model = build_model(&inst, &spec, false).unwrap();
        let report = enumerate_solve(&model).unwrap();
        assert_eq!(report.best_assignment.unwrap(), vec![0]);
        assert_eq!(report.best_open.unwrap(), vec![true, false]);
    }

    #[test]
    fn cone_too_tight_for_single_item_is_infeasible() {
        let mut inst = hand_instance();
        inst.caps = vec![9.0]; // below the deterministic load
        let spec = AmbiguitySpec::d1(0.05).unwrap();
        let model = build_model(&inst, &spec, false).unwrap();
        let report = enumerate_solve(&model).unwrap();
        assert_eq!(report.feasible_count, 0);
        assert!(report.best_objective.is_none());
    }

    #[test]
    fn enumeration_is_invariant_under_item_relabeling() {
        let inst = crate::binpack::generate_instance(&crate::binpack::GenerateConfig {
            num_bins: 2,
            num_items: 4,
            num_samples: 30,
            cov_mode: crate::binpack::CovMode::General,
            seed: 77,
        })
        .unwrap();
        let spec = AmbiguitySpec::d2(0.1, 1.0, 2.0).unwrap();
        let base = enumerate_solve(&build_model(&inst, &spec, false).unwrap()).unwrap();

        // swap items 0 and 3 everywhere
        let perm = [3usize, 1, 2, 0];
        let mut permuted = inst.clone();
        for i in 0..permuted.num_bins {
            permuted.assign_costs[i] = perm.iter().map(|&p| inst.assign_costs[i][p]).collect();
        }
        permuted.moments = permuted
            .moments
            .iter()
            .map(|md| {
                let mean: Vec<f64> = perm.iter().map(|&p| md.mean()[p]).collect();
                let mut cov = Mat::zeros(4, 4);
                for a in 0..4 {
                    for b in 0..4 {
                        cov[(a, b)] = md.cov()[(perm[a], perm[b])];
                    }
                }
                MomentData::new(mean, cov).unwrap()
            })
            .collect();
        permuted.samples = None;
        let swapped = enumerate_solve(&build_model(&permuted, &spec, false).unwrap()).unwrap();
        assert!((base.best_objective.unwrap() - swapped.best_objective.unwrap()).abs() < 1e-9);
        assert_eq!(base.feasible_count, swapped.feasible_count);
    }

    #[test]
    fn lifted_enumeration_pairs_are_consistent() {
        let points = enumerate_feasible_lifted(2, 2, None).unwrap();
        assert_eq!(points.len(), 4);
        for p in &points {
            for i in 0..2 {
                // open bins are exactly the nonempty ones
                assert_eq!(p.z[i], p.y[i].iter().any(|&v| v));
                for j in 0..2 {
                    for k in 0..2 {
                        assert_eq!(p.w[i][j][k], p.y[i][j] && p.y[i][k]);
                    }
                }
            }
        }
        assert!(matches!(
            enumerate_feasible_lifted(4, 4, None),
            Err(OracleError::TooLarge(_))
        ));
    }
}
