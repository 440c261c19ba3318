//! Chance-constrained bin packing: instance generation, model building, and
//! out-of-sample evaluation.
//!
//! An instance has `I` bins with capacities `T_i` (minutes) and `J` items
//! with random loads; opening bin `i` costs `c^z_i` and assigning item `j`
//! to it costs `c^y_ij`. The model minimizes total cost subject to each item
//! being assigned exactly once, assignments only to open (and admissible)
//! bins, and a per-bin chance constraint on the total load, reformulated as
//! a cone row from the bin's sample moments. A sample-average surrogate
//! (scenario MILP with big-M rows) is also available for comparison runs.

use crate::linalg::{inv_std_normal_cdf, Mat};
use crate::moments::{build_soc_row, estimate_moments, AmbiguitySpec, MomentData, MomentError};
use crate::solver::{BinCone, LinRow, ModelIr, RowRelation, SaaData, VarDef, VarKind};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BinPackError {
    #[error(transparent)]
    Moments(#[from] MomentError),
    #[error("instance is invalid: {0}")]
    InvalidInstance(String),
    #[error("scenario count {requested} exceeds stored samples {available}")]
    NotEnoughSamples { requested: usize, available: usize },
    #[error("instance stores no raw samples")]
    NoSamples,
}

/// A bin-packing instance. Serializes to the on-disk JSON format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinPackInstance {
    #[serde(rename = "I")]
    pub num_bins: usize,
    #[serde(rename = "J")]
    pub num_items: usize,
    /// Capacities `T_i`, minutes.
    pub caps: Vec<f64>,
    pub open_costs: Vec<f64>,
    /// `I x J` assignment costs.
    pub assign_costs: Vec<Vec<f64>>,
    /// `I x J` admissibility mask (1 = item may go in bin).
    pub rho: Vec<Vec<u8>>,
    /// Per-bin load moments.
    pub moments: Vec<MomentData>,
    /// Optional raw sample tensor, `samples[n][i][j]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Vec<Vec<f64>>>>,
    pub seed: u64,
}

impl BinPackInstance {
    pub fn validate(&self) -> Result<(), BinPackError> {
        let (bins, items) = (self.num_bins, self.num_items);
        let err = |msg: String| Err(BinPackError::InvalidInstance(msg));
        if self.caps.len() != bins || self.open_costs.len() != bins {
            return err("caps/open_costs length must equal the bin count".into());
        }
        if self.caps.iter().any(|&t| !(t > 0.0)) {
            return err("capacities must be positive".into());
        }
        if self.open_costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return err("open costs must be finite and nonnegative".into());
        }
        if self.assign_costs.len() != bins
            || self.assign_costs.iter().any(|r| r.len() != items)
            || self.assign_costs.iter().flatten().any(|c| !c.is_finite())
        {
            return err("assign_costs must be a finite I x J matrix".into());
        }
        if self.rho.len() != bins || self.rho.iter().any(|r| r.len() != items) {
            return err("rho must be an I x J mask".into());
        }
        for j in 0..items {
            if (0..bins).all(|i| self.rho[i][j] == 0) {
                return err(format!("item {j} is assignable to no bin"));
            }
        }
        if self.moments.len() != bins {
            return err("one moment block per bin is required".into());
        }
        for (i, md) in self.moments.iter().enumerate() {
            if md.dim() != items {
                return err(format!("moment block {i} has wrong dimension"));
            }
        }
        if let Some(samples) = &self.samples {
            if samples
                .iter()
                .any(|s| s.len() != bins || s.iter().any(|b| b.len() != items))
            {
                return err("sample tensor must be N x I x J".into());
            }
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        self.samples.as_ref().map_or(0, |s| s.len())
    }

    /// Marginal load standard deviation of item `j` in bin `i`.
    pub fn std_dev(&self, i: usize, j: usize) -> f64 {
        self.moments[i].std_dev(j)
    }
}

/// Item archetype mix: means alternate high/low, coefficients of variation
/// alternate high/low, assigned round-robin by item index.
const TYPE_MEANS: [f64; 4] = [25.0, 25.0, 12.5, 12.5];
const TYPE_CV: [f64; 4] = [1.0, 0.3, 1.0, 0.3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovMode {
    /// Keep only per-item variances from the sample covariance.
    Diagonal,
    /// Full sample covariance.
    General,
}

#[derive(Debug, Clone)]
pub struct GenerateConfig {
    pub num_bins: usize,
    pub num_items: usize,
    pub num_samples: usize,
    pub cov_mode: CovMode,
    pub seed: u64,
}

/// Generates an instance in the standard layout: capacities uniform on
/// [420, 540] minutes, opening cost `T^2/3600 + 3T/60`, assignment costs
/// uniform on [0, 18], and `N` Gaussian load samples per bin-item pair with
/// the archetype mean and standard deviation. Moments are estimated from the
/// samples; negative sample values are kept as drawn.
pub fn generate_instance(cfg: &GenerateConfig) -> Result<BinPackInstance, BinPackError> {
    let (bins, items, n) = (cfg.num_bins, cfg.num_items, cfg.num_samples);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let caps: Vec<f64> = (0..bins).map(|_| 420.0 + 120.0 * rng.gen::<f64>()).collect();
    let open_costs: Vec<f64> = caps.iter().map(|t| t * t / 3600.0 + 3.0 * t / 60.0).collect();
    let assign_costs: Vec<Vec<f64>> = (0..bins)
        .map(|_| (0..items).map(|_| 18.0 * rng.gen::<f64>()).collect())
        .collect();
    let rho = vec![vec![1u8; items]; bins];

    let mut samples = vec![vec![vec![0.0; items]; bins]; n];
    for sample in samples.iter_mut() {
        for bin_row in sample.iter_mut() {
            for (j, slot) in bin_row.iter_mut().enumerate() {
                let kind = j % 4;
                let mean = TYPE_MEANS[kind];
                let sd = TYPE_CV[kind] * mean;
                *slot = mean + sd * standard_normal(&mut rng);
            }
        }
    }

    let mut moments = Vec::with_capacity(bins);
    for i in 0..bins {
        let data = Mat::from_rows(
            &samples
                .iter()
                .map(|s| s[i].clone())
                .collect::<Vec<Vec<f64>>>(),
        );
        let md = estimate_moments(&data)?;
        let md = match cfg.cov_mode {
            CovMode::General => md,
            CovMode::Diagonal => {
                let variances: Vec<f64> = (0..items).map(|j| md.cov()[(j, j)]).collect();
                MomentData::new(md.mean().to_vec(), Mat::diag(&variances))?
            }
        };
        moments.push(md);
    }

    let inst = BinPackInstance {
        num_bins: bins,
        num_items: items,
        caps,
        open_costs,
        assign_costs,
        rho,
        moments,
        samples: Some(samples),
        seed: cfg.seed,
    };
    inst.validate()?;
    Ok(inst)
}

/// Standard Gaussian draw through the inverse quantile; keeps the stream a
/// pure function of the generator state.
pub(crate) fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // open interval keeps the quantile finite
    let u = loop {
        let u = rng.gen::<f64>();
        if u > 0.0 && u < 1.0 {
            break u;
        }
    };
    inv_std_normal_cdf(u)
}

/// A feasible assignment: which bins are open and which bin hosts each item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub z: Vec<bool>,
    /// `I x J` assignment indicators.
    pub y: Vec<Vec<bool>>,
    pub objective: f64,
    /// Exact cone slack per cone row of the model that produced this
    /// solution (empty for scenario models).
    pub soc_slack: Vec<f64>,
}

impl Solution {
    /// Checks the packing logic: every item in exactly one bin, only open
    /// admissible bins used, and every stored cone slack nonnegative.
    pub fn validate(&self, inst: &BinPackInstance) -> Result<(), BinPackError> {
        let err = |msg: String| Err(BinPackError::InvalidInstance(msg));
        if self.z.len() != inst.num_bins || self.y.len() != inst.num_bins {
            return err("solution shape mismatch".into());
        }
        for j in 0..inst.num_items {
            let hosts: Vec<usize> = (0..inst.num_bins).filter(|&i| self.y[i][j]).collect();
            if hosts.len() != 1 {
                return err(format!("item {j} assigned {} times", hosts.len()));
            }
            let host = hosts[0];
            if !self.z[host] {
                return err(format!("item {j} in closed bin {host}"));
            }
            if inst.rho[host][j] == 0 {
                return err(format!("item {j} not admissible in bin {host}"));
            }
        }
        if self.soc_slack.iter().any(|&s| s < -1e-9) {
            return err("cone row violated".into());
        }
        Ok(())
    }

    /// Items hosted by bin `i`.
    pub fn items_in(&self, i: usize) -> Vec<usize> {
        (0..self.y[i].len()).filter(|&j| self.y[i][j]).collect()
    }
}

fn base_vars(inst: &BinPackInstance) -> Vec<VarDef> {
    let mut vars = Vec::with_capacity(inst.num_bins * (1 + inst.num_items));
    for i in 0..inst.num_bins {
        vars.push(VarDef {
            kind: VarKind::Open { bin: i },
            lo: 0.0,
            hi: 1.0,
            integer: true,
            cost: inst.open_costs[i],
        });
    }
    for i in 0..inst.num_bins {
        for j in 0..inst.num_items {
            // inadmissible assignments are fixed to zero
            let hi = if inst.rho[i][j] == 1 { 1.0 } else { 0.0 };
            vars.push(VarDef {
                kind: VarKind::Assign { bin: i, item: j },
                lo: 0.0,
                hi,
                integer: true,
                cost: inst.assign_costs[i][j],
            });
        }
    }
    vars
}

fn packing_rows(model: &ModelIr, inst: &BinPackInstance) -> Vec<LinRow> {
    let mut rows = Vec::new();
    // y_ij <= z_i for admissible pairs
    for i in 0..inst.num_bins {
        for j in 0..inst.num_items {
            if inst.rho[i][j] == 1 {
                rows.push(LinRow {
                    coeffs: vec![(model.y_index(i, j), 1.0), (model.z_index(i), -1.0)],
                    relation: RowRelation::Le,
                    rhs: 0.0,
                });
            }
        }
    }
    // each item appears exactly once
    for j in 0..inst.num_items {
        rows.push(LinRow {
            coeffs: (0..inst.num_bins)
                .map(|i| (model.y_index(i, j), 1.0))
                .collect(),
            relation: RowRelation::Eq,
            rhs: 1.0,
        });
    }
    rows
}

/// Builds the cone-constrained model for an instance under the given
/// ambiguity model. With `lifted` set, pair variables with their McCormick
/// envelopes and the closed-form strengthening rows are added.
pub fn build_model(
    inst: &BinPackInstance,
    spec: &AmbiguitySpec,
    lifted: bool,
) -> Result<ModelIr, BinPackError> {
    build_model_with_omega(inst, spec, lifted, None)
}

/// As [`build_model`], but optionally forcing the cone width multiplier
/// (used for width-sweep experiments).
pub fn build_model_with_omega(
    inst: &BinPackInstance,
    spec: &AmbiguitySpec,
    lifted: bool,
    omega_override: Option<f64>,
) -> Result<ModelIr, BinPackError> {
    inst.validate()?;
    let mut vars = base_vars(inst);
    if lifted {
        for i in 0..inst.num_bins {
            for j in 0..inst.num_items {
                for k in (j + 1)..inst.num_items {
                    vars.push(VarDef {
                        kind: VarKind::Pair {
                            bin: i,
                            item_a: j,
                            item_b: k,
                        },
                        lo: 0.0,
                        hi: 1.0,
                        integer: false,
                        cost: 0.0,
                    });
                }
            }
        }
    }
    let mut model = ModelIr {
        num_bins: inst.num_bins,
        num_items: inst.num_items,
        vars,
        core_rows: Vec::new(),
        mccormick_rows: Vec::new(),
        static_rows: Vec::new(),
        cones: Vec::new(),
        saa: None,
        lifted,
    };
    model.core_rows = packing_rows(&model, inst);

    for i in 0..inst.num_bins {
        let mut row = build_soc_row(&inst.moments[i], spec, inst.caps[i])?;
        if let Some(omega) = omega_override {
            row.lambda = inst.moments[i].cov().scaled(omega * omega);
            row.omega = omega;
        }
        // the linear part mu' y <= T is implied by the cone and kept as a
        // core row so degenerate (omega = 0) cones stay exact
        model.core_rows.push(LinRow {
            coeffs: row
                .mu
                .iter()
                .enumerate()
                .filter(|(_, &m)| m.abs() > 1e-12)
                .map(|(j, &m)| (model.y_index(i, j), m))
                .collect(),
            relation: RowRelation::Le,
            rhs: row.cap,
        });
        model.cones.push(BinCone { bin: i, row });
    }

    if lifted {
        let mut rows = Vec::new();
        for i in 0..inst.num_bins {
            for j in 0..inst.num_items {
                for k in (j + 1)..inst.num_items {
                    let w = model.pair_index(i, j, k);
                    let yj = model.y_index(i, j);
                    let yk = model.y_index(i, k);
                    rows.push(LinRow {
                        coeffs: vec![(w, 1.0), (yj, -1.0)],
                        relation: RowRelation::Le,
                        rhs: 0.0,
                    });
                    rows.push(LinRow {
                        coeffs: vec![(w, 1.0), (yk, -1.0)],
                        relation: RowRelation::Le,
                        rhs: 0.0,
                    });
                    rows.push(LinRow {
                        coeffs: vec![(w, 1.0), (yj, -1.0), (yk, -1.0)],
                        relation: RowRelation::Ge,
                        rhs: -1.0,
                    });
                }
            }
        }
        model.mccormick_rows = rows;
        crate::solver::add_static_inequalities(&mut model);
    }
    Ok(model)
}

/// Builds the scenario MILP surrogate: per bin `i` and scenario `n`, a
/// binary `s_in` relaxes the capacity row `sum_j t^n_ij y_ij <= T_i +
/// M_in s_in`, and at most `floor(alpha N)` scenarios per bin may be
/// relaxed. `M_in = max(0, sum_j max(t^n_ij, 0) - T_i)` keeps the row
/// redundant whenever `s_in = 1`. Uses the first `n_scen` stored samples.
pub fn build_saa_model(
    inst: &BinPackInstance,
    alpha: f64,
    n_scen: usize,
) -> Result<ModelIr, BinPackError> {
    inst.validate()?;
    let samples = inst.samples.as_ref().ok_or(BinPackError::NoSamples)?;
    if n_scen > samples.len() || n_scen == 0 {
        return Err(BinPackError::NotEnoughSamples {
            requested: n_scen,
            available: samples.len(),
        });
    }
    let mut vars = base_vars(inst);
    for i in 0..inst.num_bins {
        for n in 0..n_scen {
            vars.push(VarDef {
                kind: VarKind::Scenario { bin: i, scenario: n },
                lo: 0.0,
                hi: 1.0,
                integer: true,
                cost: 0.0,
            });
        }
    }
    let loads: Vec<Mat> = (0..inst.num_bins)
        .map(|i| {
            Mat::from_rows(
                &samples[..n_scen]
                    .iter()
                    .map(|s| s[i].clone())
                    .collect::<Vec<Vec<f64>>>(),
            )
        })
        .collect();

    let mut model = ModelIr {
        num_bins: inst.num_bins,
        num_items: inst.num_items,
        vars,
        core_rows: Vec::new(),
        mccormick_rows: Vec::new(),
        static_rows: Vec::new(),
        cones: Vec::new(),
        saa: Some(SaaData {
            alpha,
            n_scenarios: n_scen,
            loads: loads.clone(),
        }),
        lifted: false,
    };
    model.core_rows = packing_rows(&model, inst);

    let budget = (alpha * n_scen as f64).floor();
    for i in 0..inst.num_bins {
        for n in 0..n_scen {
            let t_row = loads[i].row(n);
            let big_m = (t_row.iter().map(|&t| t.max(0.0)).sum::<f64>() - inst.caps[i]).max(0.0);
            let mut coeffs: Vec<(usize, f64)> = t_row
                .iter()
                .enumerate()
                .filter(|(_, &t)| t.abs() > 1e-12)
                .map(|(j, &t)| (model.y_index(i, j), t))
                .collect();
            coeffs.push((model.scenario_index(i, n), -big_m));
            model.core_rows.push(LinRow {
                coeffs,
                relation: RowRelation::Le,
                rhs: inst.caps[i],
            });
        }
        model.core_rows.push(LinRow {
            coeffs: (0..n_scen)
                .map(|n| (model.scenario_index(i, n), 1.0))
                .collect(),
            relation: RowRelation::Le,
            rhs: budget,
        });
    }
    Ok(model)
}

/// Out-of-sample load generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sampler", rename_all = "snake_case")]
pub enum Sampler {
    /// Two-point distribution matching each load's mean and standard
    /// deviation: `mu + (1-p)/sqrt(p(1-p)) * sigma` with probability `p`,
    /// `mu - sqrt(p(1-p))/(1-p) * sigma` otherwise.
    TwoPoint { p: f64 },
    /// One standard-Gaussian factor per bin and scenario, applied to every
    /// item: `t_ij = mu_ij + rho_i * sigma_ij`.
    CommonFactorGaussian,
}

impl Sampler {
    /// High/low atoms of the two-point distribution for `(mu, sigma)`.
    pub fn two_point_atoms(p: f64, mu: f64, sigma: f64) -> (f64, f64) {
        let hi = mu + (1.0 - p) / (p * (1.0 - p)).sqrt() * sigma;
        let lo = mu - (p * (1.0 - p)).sqrt() / (1.0 - p) * sigma;
        (hi, lo)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinReliability {
    pub bin: usize,
    /// Fraction of scenarios in which the assigned load fits the capacity.
    pub reliability: f64,
}

/// Monte-Carlo reliability of a solution, per open bin: the fraction of `n`
/// freshly sampled scenarios in which `sum_j t_ij y_ij <= T_i`.
pub fn evaluate_out_of_sample(
    sol: &Solution,
    inst: &BinPackInstance,
    sampler: Sampler,
    n: usize,
    seed: u64,
) -> Result<Vec<BinReliability>, BinPackError> {
    inst.validate()?;
    sol.validate(inst)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let open_bins: Vec<usize> = (0..inst.num_bins).filter(|&i| sol.z[i]).collect();
    let items: Vec<Vec<usize>> = open_bins.iter().map(|&i| sol.items_in(i)).collect();
    let mut hits = vec![0usize; open_bins.len()];

    for _ in 0..n {
        for (slot, (&i, item_list)) in open_bins.iter().zip(&items).enumerate() {
            let mean = inst.moments[i].mean();
            let mut load = 0.0;
            match sampler {
                Sampler::TwoPoint { p } => {
                    for &j in item_list {
                        let (hi, lo) = Sampler::two_point_atoms(p, mean[j], inst.std_dev(i, j));
                        load += if rng.gen::<f64>() < p { hi } else { lo };
                    }
                }
                Sampler::CommonFactorGaussian => {
                    let factor = standard_normal(&mut rng);
                    for &j in item_list {
                        load += mean[j] + factor * inst.std_dev(i, j);
                    }
                }
            }
            if load <= inst.caps[i] {
                hits[slot] += 1;
            }
        }
    }
    Ok(open_bins
        .into_iter()
        .zip(hits)
        .map(|(bin, h)| BinReliability {
            bin,
            reliability: h as f64 / n as f64,
        })
        .collect())
}
