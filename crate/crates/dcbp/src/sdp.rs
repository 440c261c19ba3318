//! Submodular matrix approximations of a cone matrix via projection.
//!
//! A 0-1 second-order-cone row `mu' y + sqrt(y' Lambda y) <= T` has a
//! submodular left-hand side whenever `Lambda` has nonpositive off-diagonal
//! entries and weakly diagonally dominated rows (`2 * sum_s Lambda_rs >=
//! Lambda_rr`). For a general `Lambda` this module computes the nearest
//! (Frobenius) matrices that restore those conditions:
//!
//! - relaxed `Delta^L`: nearest matrix with `0 <= Delta <= Lambda` in the
//!   semidefinite order, giving a submodular under-approximation of the cone;
//! - conservative `Delta^U`: nearest matrix with `Delta >= Lambda`, giving a
//!   submodular over-approximation.
//!
//! Both feasible sets are intersections of a spectral set, `J` halfspaces,
//! and a sign box, so the projections are computed with Dykstra's alternating
//! projection scheme. The spectral projections use an in-house cyclic Jacobi
//! eigendecomposition; no external solver is involved.

use crate::linalg::Mat;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("projection did not converge: residual {residual:.3e} after {iterations} cycles")]
    NoConvergence { residual: f64, iterations: usize },
}

/// Which of the two approximation problems a result solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApproxKind {
    /// `0 <= Delta <= Lambda`: under-approximates the cone.
    Relaxed,
    /// `Delta >= Lambda`: over-approximates the cone.
    Conservative,
}

/// Outcome of a projection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxResult {
    pub kind: ApproxKind,
    pub delta: Mat,
    /// Dykstra cycles performed.
    pub iterations: usize,
    /// Frobenius change of the iterate over the final cycle.
    pub residual: f64,
    /// `||delta - lambda||_F`.
    pub distance: f64,
}

/// Stopping parameters for the alternating-projection loop.
///
/// `tol` is applied relative to `1 + ||Lambda||_F` so that large cone
/// matrices (entries of order `Omega^2 * minutes^2`) stop at a sensible
/// scale. The default is tighter than the 1e-8 feasibility tolerance the
/// results are checked against.
#[derive(Debug, Clone, Copy)]
pub struct DykstraConfig {
    pub tol: f64,
    pub max_cycles: usize,
}

impl Default for DykstraConfig {
    fn default() -> Self {
        DykstraConfig {
            tol: 1e-10,
            max_cycles: 20_000,
        }
    }
}

const SYM_TOL: f64 = 1e-10;

fn require_symmetric(m: &Mat) -> Result<(), SdpError> {
    let asym = m.asymmetry();
    let scale = 1.0 + m.frobenius_norm();
    if asym > SYM_TOL * scale {
        return Err(SdpError::NotSymmetric(asym));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns of the second element, so that `m = Q D Q'`.
pub fn eigh_symmetric(m: &Mat) -> Result<(Vec<f64>, Mat), SdpError> {
    require_symmetric(m)?;
    let n = m.nrows();
    let mut a = m.clone();
    a.symmetrize();
    let mut q = Mat::identity(n);

    let scale = 1.0 + a.frobenius_norm();
    let tol = 1e-15 * scale;
    const MAX_SWEEPS: usize = 100;

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0_f64;
        for p in 0..n {
            for r in (p + 1)..n {
                off += a[(p, r)].abs();
            }
        }
        if off < tol {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for r in (p + 1)..n {
                let apr = a[(p, r)];
                if apr.abs() <= tol / (n * n) as f64 {
                    continue;
                }
                // Jacobi rotation annihilating a[(p, r)].
                let theta = 0.5 * (a[(r, r)] - a[(p, p)]) / apr;
                let t = if theta.abs() > 1e154 {
                    0.5 / theta
                } else {
                    let s = theta.signum();
                    s / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apr;

                a[(p, p)] -= h;
                a[(r, r)] += h;
                a[(p, r)] = 0.0;
                a[(r, p)] = 0.0;
                for j in 0..n {
                    if j != p && j != r {
                        let ajp = a[(j, p)];
                        let ajr = a[(j, r)];
                        let np = ajp - s * (ajr + tau * ajp);
                        let nr = ajr + s * (ajp - tau * ajr);
                        a[(j, p)] = np;
                        a[(p, j)] = np;
                        a[(j, r)] = nr;
                        a[(r, j)] = nr;
                    }
                }
                for j in 0..n {
                    let qjp = q[(j, p)];
                    let qjr = q[(j, r)];
                    q[(j, p)] = qjp - s * (qjr + tau * qjp);
                    q[(j, r)] = qjr + s * (qjp - tau * qjr);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, new_col)] = q[(row, old_col)];
        }
    }
    Ok((values, vectors))
}

/// Frobenius projection onto the positive semidefinite cone: negative
/// eigenvalues are clipped to zero.
pub fn psd_project(m: &Mat) -> Result<Mat, SdpError> {
    let (values, q) = eigh_symmetric(m)?;
    let n = m.nrows();
    let mut out = Mat::zeros(n, n);
    for (k, &v) in values.iter().enumerate() {
        if v <= 0.0 {
            continue;
        }
        for i in 0..n {
            let qi = q[(i, k)];
            if qi == 0.0 {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += v * qi * q[(j, k)];
            }
        }
    }
    out.symmetrize();
    Ok(out)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Mat) -> Result<f64, SdpError> {
    let (values, _) = eigh_symmetric(m)?;
    Ok(values.first().copied().unwrap_or(0.0))
}

// One constraint set of the Dykstra cycle.
enum ProjSet<'a> {
    Psd,
    DominatedBy(&'a Mat),
    Dominating(&'a Mat),
    /// `2 sum_s Delta_rs >= Delta_rr` for one row r.
    Halfspace(usize),
    NonposOffDiag,
}

impl ProjSet<'_> {
    fn project(&self, x: &Mat) -> Result<Mat, SdpError> {
        match self {
            ProjSet::Psd => psd_project(x),
            ProjSet::DominatedBy(lam) => {
                // Delta <= Lambda  <=>  Lambda - Delta >= 0.
                let gap = psd_project(&lam.sub(x))?;
                Ok(lam.sub(&gap))
            }
            ProjSet::Dominating(lam) => {
                let gap = psd_project(&x.sub(lam))?;
                Ok(lam.add(&gap))
            }
            ProjSet::Halfspace(r) => {
                let n = x.nrows();
                let r = *r;
                // f(X) = <G, X> with symmetric gradient G: G_rr = 1,
                // G_rs = G_sr = 1 for s != r; constraint f(X) >= 0.
                let mut f = x[(r, r)];
                for s in 0..n {
                    if s != r {
                        f += 2.0 * x[(r, s)];
                    }
                }
                if f >= 0.0 {
                    return Ok(x.clone());
                }
                let g_norm_sq = 1.0 + 2.0 * (n as f64 - 1.0);
                let step = f / g_norm_sq;
                let mut out = x.clone();
                out[(r, r)] -= step;
                for s in 0..n {
                    if s != r {
                        out[(r, s)] -= step;
                        out[(s, r)] -= step;
                    }
                }
                Ok(out)
            }
            ProjSet::NonposOffDiag => {
                let n = x.nrows();
                let mut out = x.clone();
                for i in 0..n {
                    for j in 0..n {
                        if i != j && out[(i, j)] > 0.0 {
                            out[(i, j)] = 0.0;
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

fn dykstra(
    lambda: &Mat,
    kind: ApproxKind,
    cfg: &DykstraConfig,
) -> Result<ApproxResult, SdpError> {
    require_symmetric(lambda)?;
    let n = lambda.nrows();

    let mut sets: Vec<ProjSet> = Vec::new();
    match kind {
        ApproxKind::Relaxed => {
            sets.push(ProjSet::Psd);
            sets.push(ProjSet::DominatedBy(lambda));
        }
        ApproxKind::Conservative => {
            sets.push(ProjSet::Dominating(lambda));
        }
    }
    for r in 0..n {
        sets.push(ProjSet::Halfspace(r));
    }
    sets.push(ProjSet::NonposOffDiag);

    let scale = 1.0 + lambda.frobenius_norm();
    let stop = cfg.tol * scale;

    let mut x = lambda.clone();
    let mut increments: Vec<Mat> = (0..sets.len()).map(|_| Mat::zeros(n, n)).collect();
    let mut residual = f64::INFINITY;
    let mut cycles = 0;

    while cycles < cfg.max_cycles {
        cycles += 1;
        let before = x.clone();
        for (set, inc) in sets.iter().zip(increments.iter_mut()) {
            let shifted = x.add(inc);
            let projected = set.project(&shifted)?;
            *inc = shifted.sub(&projected);
            x = projected;
        }
        residual = x.sub(&before).frobenius_norm();
        if residual < stop {
            break;
        }
    }

    if residual >= 1e-6 * scale {
        return Err(SdpError::NoConvergence {
            residual,
            iterations: cycles,
        });
    }

    let distance = x.sub(lambda).frobenius_norm();
    Ok(ApproxResult {
        kind,
        delta: x,
        iterations: cycles,
        residual,
        distance,
    })
}

/// Nearest (Frobenius) matrix `Delta` with `0 <= Delta <= Lambda`, nonpositive
/// off-diagonal entries, and `2 sum_s Delta_rs >= Delta_rr` per row.
pub fn project_relaxed(lambda: &Mat) -> Result<ApproxResult, SdpError> {
    project_relaxed_with(lambda, &DykstraConfig::default())
}

pub fn project_relaxed_with(
    lambda: &Mat,
    cfg: &DykstraConfig,
) -> Result<ApproxResult, SdpError> {
    dykstra(lambda, ApproxKind::Relaxed, cfg)
}

/// Nearest (Frobenius) matrix `Delta >= Lambda` with the same sign and
/// row-sum conditions as [`project_relaxed`].
pub fn project_conservative(lambda: &Mat) -> Result<ApproxResult, SdpError> {
    project_conservative_with(lambda, &DykstraConfig::default())
}

pub fn project_conservative_with(
    lambda: &Mat,
    cfg: &DykstraConfig,
) -> Result<ApproxResult, SdpError> {
    dykstra(lambda, ApproxKind::Conservative, cfg)
}

/// Worst feasibility violation of `delta` for the given problem: the most
/// negative of the required eigenvalues, halfspace slacks, and sign bounds
/// (0 when fully feasible).
pub fn feasibility_violation(delta: &Mat, lambda: &Mat, kind: ApproxKind) -> Result<f64, SdpError> {
    let n = delta.nrows();
    let mut worst = 0.0_f64;
    match kind {
        ApproxKind::Relaxed => {
            worst = worst.min(min_eigenvalue(delta)?);
            worst = worst.min(min_eigenvalue(&lambda.sub(delta))?);
        }
        ApproxKind::Conservative => {
            worst = worst.min(min_eigenvalue(&delta.sub(lambda))?);
        }
    }
    for r in 0..n {
        let mut f = delta[(r, r)];
        for s in 0..n {
            if s != r {
                f += 2.0 * delta[(r, s)];
            }
        }
        worst = worst.min(f);
    }
    for i in 0..n {
        for j in 0..n {
            if i != j {
                worst = worst.min(-delta[(i, j)]);
            }
        }
    }
    Ok(worst)
}

/// Checks the variational inequality characterizing a Frobenius projection:
/// `<Lambda - Delta*, F - Delta*> <= tol` for sampled feasible `F`.
///
/// Samples are random convex combinations of known feasible points plus
/// symmetric perturbations repaired by plain alternating projections; each
/// sample is verified feasible before use. Returns `false` as soon as one
/// sample violates the inequality.
pub fn projection_optimality_check(
    result: &ApproxResult,
    lambda: &Mat,
    n_samples: usize,
    seed: u64,
) -> Result<bool, SdpError> {
    let n = lambda.nrows();
    let (eigs, _) = eigh_symmetric(lambda)?;
    let lam_min = eigs.first().copied().unwrap_or(0.0).max(0.0);
    let lam_max = eigs.last().copied().unwrap_or(0.0).max(0.0);

    let mut anchors: Vec<Mat> = vec![result.delta.clone()];
    match result.kind {
        ApproxKind::Relaxed => {
            anchors.push(Mat::zeros(n, n));
            anchors.push(Mat::identity(n).scaled(lam_min));
        }
        ApproxKind::Conservative => {
            anchors.push(Mat::identity(n).scaled(lam_max));
            anchors.push(Mat::identity(n).scaled(1.5 * lam_max + 1.0));
        }
    }

    let mut sets: Vec<ProjSet> = Vec::new();
    match result.kind {
        ApproxKind::Relaxed => {
            sets.push(ProjSet::Psd);
            sets.push(ProjSet::DominatedBy(lambda));
        }
        ApproxKind::Conservative => sets.push(ProjSet::Dominating(lambda)),
    }
    for r in 0..n {
        sets.push(ProjSet::Halfspace(r));
    }
    sets.push(ProjSet::NonposOffDiag);

    let scale = 1.0 + lambda.frobenius_norm();
    let tol = 1e-6 * (1.0 + lambda.frobenius_norm().powi(2));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for sample in 0..n_samples {
        // Alternate three probe families: steps from the candidate towards
        // the projected point, random perturbations of the candidate, and
        // perturbed convex combinations of the anchors. The first family is
        // what exposes a candidate that stopped short of the projection.
        let mut f = match sample % 3 {
            0 => {
                let t = 0.5 * rng.gen::<f64>();
                result
                    .delta
                    .add(&lambda.sub(&result.delta).scaled(t))
            }
            1 => result.delta.clone(),
            _ => {
                let mut weights: Vec<f64> =
                    (0..anchors.len()).map(|_| rng.gen::<f64>()).collect();
                let total: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= total;
                }
                let mut combo = Mat::zeros(n, n);
                for (w, anchor) in weights.iter().zip(&anchors) {
                    combo = combo.add(&anchor.scaled(*w));
                }
                combo
            }
        };
        // Symmetric perturbation on a log magnitude scale, then repair by
        // plain alternating projections until verified feasible.
        let magnitude = 0.3 * scale * 10f64.powf(-3.0 * rng.gen::<f64>());
        for i in 0..n {
            for j in i..n {
                let e = magnitude * (rng.gen::<f64>() - 0.5);
                f[(i, j)] += e;
                f[(j, i)] = f[(i, j)];
            }
        }
        let mut feasible = false;
        for _ in 0..300 {
            for set in &sets {
                f = set.project(&f)?;
            }
            if feasibility_violation(&f, lambda, result.kind)? > -1e-10 * scale {
                feasible = true;
                break;
            }
        }
        if !feasible {
            // Repair failed; fall back to an anchor which is feasible by
            // construction. Keeps the sample count honest.
            f = anchors[1].clone();
        }

        let mut inner = 0.0;
        for i in 0..n {
            for j in 0..n {
                inner += (lambda[(i, j)] - result.delta[(i, j)]) * (f[(i, j)] - result.delta[(i, j)]);
            }
        }
        if inner > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::submodular;

    fn example_lambda() -> Mat {
        Mat::from_rows(&[
            vec![0.6, -0.2, 0.2],
            vec![-0.2, 0.7, 0.1],
            vec![0.2, 0.1, 0.6],
        ])
    }

    #[test]
    fn eigh_three_by_three_correlated() {
        let (values, q) = eigh_symmetric(&example_lambda()).unwrap();
        let expected = [0.2881, 0.7432, 0.8687];
        for (v, e) in values.iter().zip(expected) {
            assert!((v - e).abs() < 1e-3, "eigenvalue {v} vs {e}");
        }
        // Reconstruction Q D Q' = A.
        let d = Mat::diag(&values);
        let rec = q.mat_mul(&d).mat_mul(&q.transpose());
        let err = rec.sub(&example_lambda()).frobenius_norm();
        assert!(err <= 1e-9 * (1.0 + example_lambda().frobenius_norm()));
    }

    #[test]
    fn eigh_identity_and_permuted_diagonal() {
        let (values, _) = eigh_symmetric(&Mat::identity(3)).unwrap();
        assert!(values.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let (values, _) = eigh_symmetric(&Mat::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert!((values[0] - 1.0).abs() < 1e-12);
        assert!((values[1] - 2.0).abs() < 1e-12);
        assert!((values[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eigh_rejects_asymmetric_input() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert!(matches!(eigh_symmetric(&m), Err(SdpError::NotSymmetric(_))));
    }

    #[test]
    fn psd_projection_examples() {
        let psd = Mat::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let p = psd_project(&psd).unwrap();
        assert!(p.max_abs_diff(&psd) < 1e-10);

        let p = psd_project(&Mat::diag(&[1.0, -2.0])).unwrap();
        assert!(p.max_abs_diff(&Mat::diag(&[1.0, 0.0])) < 1e-12);

        let flip = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let p = psd_project(&flip).unwrap();
        let expected = Mat::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert!(p.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn relaxed_projection_of_feasible_matrix_is_identity() {
        let lam = Mat::diag(&[0.4, 0.9, 1.3]);
        let res = project_relaxed(&lam).unwrap();
        assert!(res.distance <= 1e-8);
        assert!(res.delta.max_abs_diff(&lam) < 1e-7);
    }

    #[test]
    fn conservative_projection_of_feasible_matrix_is_identity() {
        let lam = Mat::from_rows(&[vec![1.0, -0.2], vec![-0.2, 0.8]]);
        assert!(submodular::sufficient_condition_holds(&lam));
        let res = project_conservative(&lam).unwrap();
        assert!(res.distance <= 1e-8);
    }

    #[test]
    fn relaxed_projection_matches_reference_solver() {
        // Reference values computed with an interior-point SDP solver on the
        // same Frobenius projection problem.
        let res = project_relaxed(&example_lambda()).unwrap();
        let reference = Mat::from_rows(&[
            vec![0.431344005, -0.215672002, 0.0],
            vec![-0.215672002, 0.574596814, 0.0],
            vec![0.0, 0.0, 0.309352532],
        ]);
        assert!(
            res.delta.max_abs_diff(&reference) < 1e-5,
            "max diff {}",
            res.delta.max_abs_diff(&reference)
        );
        assert!((res.distance - 0.478683589).abs() < 1e-5);
        assert!(feasibility_violation(&res.delta, &example_lambda(), ApproxKind::Relaxed).unwrap() > -1e-8);
        assert!(submodular::sufficient_condition_holds_tol(&res.delta, 1e-8));
    }

    #[test]
    fn conservative_projection_matches_reference_solver() {
        let res = project_conservative(&example_lambda()).unwrap();
        let reference = Mat::from_rows(&[
            vec![0.778885438, -0.110557281, 0.0],
            vec![-0.110557281, 0.744721360, 0.0],
            vec![0.0, 0.0, 0.823606798],
        ]);
        assert!(
            res.delta.max_abs_diff(&reference) < 1e-5,
            "max diff {}",
            res.delta.max_abs_diff(&reference)
        );
        assert!((res.distance - 0.447213595).abs() < 1e-5);
        assert!(
            feasibility_violation(&res.delta, &example_lambda(), ApproxKind::Conservative)
                .unwrap()
                > -1e-8
        );
    }

    #[test]
    fn variational_inequality_detects_suboptimal_point() {
        let lam = example_lambda();
        let res = project_relaxed(&lam).unwrap();
        assert!(projection_optimality_check(&res, &lam, 200, 7).unwrap());

        // Move the candidate towards a feasible point: the inequality must fail.
        let zero = Mat::zeros(3, 3);
        let mut bad = res.clone();
        bad.delta = res.delta.scaled(0.9).add(&zero.scaled(0.1));
        assert!(!projection_optimality_check(&bad, &lam, 500, 7).unwrap());
    }

    #[test]
    fn sandwich_spectra_hold() {
        let lam = example_lambda();
        let lo = project_relaxed(&lam).unwrap().delta;
        let hi = project_conservative(&lam).unwrap().delta;
        assert!(min_eigenvalue(&lo).unwrap() > -1e-8);
        assert!(min_eigenvalue(&lam.sub(&lo)).unwrap() > -1e-8);
        assert!(min_eigenvalue(&hi.sub(&lam)).unwrap() > -1e-8);
    }
}
