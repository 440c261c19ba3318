//! Moment estimation and second-order-cone reformulation of distributionally
//! robust chance constraints.
//!
//! Given sample data for a random row `t~' y <= T`, the chance constraint
//! `P{t~' y <= T} >= 1 - alpha` is replaced by a deterministic cone row
//! `mu' y + Omega * sqrt(y' Sigma y) <= T`, where `Omega` depends on what is
//! assumed about the distribution:
//!
//! - `Gaussian`: `Omega = Phi^-1(1 - alpha)`;
//! - `D1` (all distributions matching the moments exactly):
//!   `Omega = sqrt((1 - alpha) / alpha)`;
//! - `D2` (moments known only up to estimation error, scaled by `gamma1`,
//!   `gamma2`): `Omega = sqrt(gamma1) + sqrt(((1 - alpha)/alpha) *
//!   (gamma2 - gamma1))` when `gamma1/gamma2 <= alpha`, and
//!   `Omega = sqrt(gamma2 / alpha)` otherwise.

use crate::linalg::{inv_std_normal_cdf, Mat};
use crate::sdp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest admissible eigenvalue for a covariance matrix.
pub const PSD_TOL: f64 = 1e-10;
/// Elementwise symmetry tolerance for covariance input.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MomentError {
    #[error("covariance is degenerate: smallest eigenvalue {0:.3e} <= 1e-10 (insufficient or collinear data)")]
    DegenerateCovariance(f64),
    #[error("covariance is not symmetric (max asymmetry {0:.3e})")]
    AsymmetricCovariance(f64),
    #[error("need at least 2 samples to estimate moments, got {0}")]
    TooFewSamples(usize),
    #[error("risk level alpha must lie in (0, 0.5], got {0}")]
    InvalidAlpha(f64),
    #[error("D2 parameters must satisfy gamma1 > 0 and gamma2 > max(gamma1, 1), got gamma1 = {0}, gamma2 = {1}")]
    InvalidGamma(f64, f64),
    #[error("capacity must be positive, got {0}")]
    InvalidCapacity(f64),
    #[error("dimension mismatch: mean has length {mean}, covariance is {cov}x{cov}")]
    DimensionMismatch { mean: usize, cov: usize },
}

/// Mean vector and covariance matrix of one random row, in minutes and
/// minutes squared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentData {
    mean: Vec<f64>,
    cov: Mat,
}

impl MomentData {
    /// Validates symmetry (1e-12 elementwise) and positive definiteness
    /// (smallest eigenvalue > 1e-10). Failing matrices are rejected, never
    /// repaired.
    pub fn new(mean: Vec<f64>, cov: Mat) -> Result<Self, MomentError> {
        if cov.nrows() != mean.len() || !cov.is_square() {
            return Err(MomentError::DimensionMismatch {
                mean: mean.len(),
                cov: cov.nrows(),
            });
        }
        let asym = cov.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(MomentError::AsymmetricCovariance(asym));
        }
        let min_eig = sdp::min_eigenvalue(&cov)
            .map_err(|_| MomentError::AsymmetricCovariance(asym))?;
        if min_eig <= PSD_TOL {
            return Err(MomentError::DegenerateCovariance(min_eig));
        }
        Ok(MomentData { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Mat {
        &self.cov
    }

    pub fn std_dev(&self, j: usize) -> f64 {
        self.cov[(j, j)].sqrt()
    }
}

/// Distributional assumption for a chance constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AmbiguityKind {
    /// Gaussian with the estimated moments.
    Gaussian,
    /// Every distribution matching the estimated moments exactly.
    D1,
    /// Moments within the estimation-error envelope scaled by `gamma1`
    /// (mean ellipsoid) and `gamma2` (covariance bound).
    D2 { gamma1: f64, gamma2: f64 },
}

/// Ambiguity model plus risk level for one chance constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySpec {
    pub kind: AmbiguityKind,
    pub alpha: f64,
}

impl AmbiguitySpec {
    pub fn gaussian(alpha: f64) -> Result<Self, MomentError> {
        let spec = AmbiguitySpec {
            kind: AmbiguityKind::Gaussian,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn d1(alpha: f64) -> Result<Self, MomentError> {
        let spec = AmbiguitySpec {
            kind: AmbiguityKind::D1,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn d2(alpha: f64, gamma1: f64, gamma2: f64) -> Result<Self, MomentError> {
        let spec = AmbiguitySpec {
            kind: AmbiguityKind::D2 { gamma1, gamma2 },
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Risk levels above 0.5 would make some cone widths negative and break
    /// the one-sided tail bound, so they are rejected rather than silently
    /// extrapolated.
    pub fn validate(&self) -> Result<(), MomentError> {
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(MomentError::InvalidAlpha(self.alpha));
        }
        if let AmbiguityKind::D2 { gamma1, gamma2 } = self.kind {
            validate_gammas(gamma1, gamma2)?;
        }
        Ok(())
    }
}

fn validate_gammas(gamma1: f64, gamma2: f64) -> Result<(), MomentError> {
    if !(gamma1 > 0.0 && gamma2 > gamma1.max(1.0)) {
        return Err(MomentError::InvalidGamma(gamma1, gamma2));
    }
    Ok(())
}

/// One 0-1 second-order-cone row `mu' y + sqrt(y' Lambda y) <= cap` with
/// `Lambda = omega^2 * Sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocRow {
    pub mu: Vec<f64>,
    pub lambda: Mat,
    pub cap: f64,
    pub omega: f64,
}

impl SocRow {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Left-hand side `mu' y + sqrt(y' Lambda y)` at a (possibly fractional)
    /// point.
    pub fn lhs(&self, y: &[f64]) -> f64 {
        crate::linalg::dot(&self.mu, y) + self.lambda.quad_form(y).max(0.0).sqrt()
    }

    /// `cap - lhs(y)`; negative when the row is violated.
    pub fn slack(&self, y: &[f64]) -> f64 {
        self.cap - self.lhs(y)
    }
}

/// Sample mean and sample covariance with `1/N` normalization, one sample
/// per row of `samples`.
pub fn estimate_moments(samples: &Mat) -> Result<MomentData, MomentError> {
    let n = samples.nrows();
    let d = samples.ncols();
    if n < 2 {
        return Err(MomentError::TooFewSamples(n));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += samples[(i, j)];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = Mat::zeros(d, d);
    for i in 0..n {
        let row = samples.row(i);
        for j in 0..d {
            let dj = row[j] - mean[j];
            for k in j..d {
                cov[(j, k)] += dj * (row[k] - mean[k]);
            }
        }
    }
    for j in 0..d {
        for k in j..d {
            let v = cov[(j, k)] / n as f64;
            cov[(j, k)] = v;
            cov[(k, j)] = v;
        }
    }
    MomentData::new(mean, cov)
}

/// Cone width multiplier for the given ambiguity model and risk level.
pub fn omega_coefficient(spec: &AmbiguitySpec) -> Result<f64, MomentError> {
    spec.validate()?;
    let alpha = spec.alpha;
    Ok(match spec.kind {
        AmbiguityKind::Gaussian => inv_std_normal_cdf(1.0 - alpha),
        AmbiguityKind::D1 => ((1.0 - alpha) / alpha).sqrt(),
        AmbiguityKind::D2 { gamma1, gamma2 } => {
            if gamma1 / gamma2 <= alpha {
                gamma1.sqrt() + ((1.0 - alpha) / alpha * (gamma2 - gamma1)).sqrt()
            } else {
                (gamma2 / alpha).sqrt()
            }
        }
    })
}

/// Worst-case probability `inf P{t~' y <= T}` over the moment-error ambiguity
/// set, as a function of the standardized slack `kappa = (T - mu' y) /
/// sqrt(y' Sigma y)`.
pub fn worst_case_probability(kappa: f64, gamma1: f64, gamma2: f64) -> Result<f64, MomentError> {
    validate_gammas(gamma1, gamma2)?;
    let sq1 = gamma1.sqrt();
    Ok(if kappa <= sq1 {
        0.0
    } else if kappa <= gamma2 / sq1 {
        let ratio = (gamma2 - gamma1).sqrt() / (kappa - sq1);
        1.0 / (ratio * ratio + 1.0)
    } else {
        (kappa * kappa - gamma2) / (kappa * kappa)
    })
}

/// One-sided tail bound for a random variable with mean `mu1` and standard
/// deviation `sigma1`: the smallest possible `P{xi <= b}`.
pub fn cantelli_bound(mu1: f64, sigma1: f64, b: f64) -> f64 {
    assert!(sigma1 >= 0.0, "standard deviation must be nonnegative");
    if b < mu1 {
        return 0.0;
    }
    let d = b - mu1;
    if sigma1 == 0.0 {
        return 1.0;
    }
    d * d / (sigma1 * sigma1 + d * d)
}

/// Builds the cone row for the given moments, ambiguity model, and capacity:
/// `mu = mean`, `lambda = omega^2 * cov`.
pub fn build_soc_row(
    md: &MomentData,
    spec: &AmbiguitySpec,
    cap: f64,
) -> Result<SocRow, MomentError> {
    if !(cap > 0.0) {
        return Err(MomentError::InvalidCapacity(cap));
    }
    let omega = omega_coefficient(spec)?;
    Ok(SocRow {
        mu: md.mean().to_vec(),
        lambda: md.cov().scaled(omega * omega),
        cap,
        omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[Vec<f64>]) -> Mat {
        Mat::from_rows(rows)
    }

    #[test]
    fn two_collinear_points_are_degenerate() {
        let samples = mat(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        match estimate_moments(&samples) {
            Err(MomentError::DegenerateCovariance(_)) => {}
            other => panic!("expected degenerate covariance, got {other:?}"),
        }
    }

    #[test]
    fn square_corners_give_identity_covariance() {
        let samples = mat(&[
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![2.0, 2.0],
        ]);
        let md = estimate_moments(&samples).unwrap();
        assert_eq!(md.mean(), &[1.0, 1.0]);
        assert!(md.cov().max_abs_diff(&Mat::identity(2)) < 1e-12);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let samples = mat(&[vec![3.0, 1.0], vec![3.0, 2.0], vec![3.0, 5.0]]);
        assert!(matches!(
            estimate_moments(&samples),
            Err(MomentError::DegenerateCovariance(_))
        ));
    }

    #[test]
    fn omega_reference_values() {
        let g = omega_coefficient(&AmbiguitySpec::gaussian(0.05).unwrap()).unwrap();
        assert!((g - 1.6449).abs() < 1e-4);
        let d1 = omega_coefficient(&AmbiguitySpec::d1(0.05).unwrap()).unwrap();
        assert!((d1 - 4.3589).abs() < 1e-4);
        let d2 = omega_coefficient(&AmbiguitySpec::d2(0.05, 1.0, 2.0).unwrap()).unwrap();
        assert!((d2 - 6.3246).abs() < 1e-4);
        // boundary risk level: D1 width collapses to 1
        let d1h = omega_coefficient(&AmbiguitySpec::d1(0.5).unwrap()).unwrap();
        assert!((d1h - 1.0).abs() < 1e-12);
        // small-gamma1 branch: sqrt(0.05) + sqrt(19 * 1.95)
        let d2b = omega_coefficient(&AmbiguitySpec::d2(0.05, 0.05, 2.0).unwrap()).unwrap();
        let expected = 0.05_f64.sqrt() + (19.0_f64 * 1.95).sqrt();
        assert!((d2b - expected).abs() < 1e-12);
        assert!((d2b - 6.310478).abs() < 1e-4);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(matches!(
            AmbiguitySpec::gaussian(0.6),
            Err(MomentError::InvalidAlpha(_))
        ));
        assert!(matches!(
            AmbiguitySpec::gaussian(0.0),
            Err(MomentError::InvalidAlpha(_))
        ));
        assert!(matches!(
            AmbiguitySpec::d2(0.05, 0.0, 2.0),
            Err(MomentError::InvalidGamma(..))
        ));
        assert!(matches!(
            AmbiguitySpec::d2(0.05, 1.5, 1.2),
            Err(MomentError::InvalidGamma(..))
        ));
        assert!(matches!(
            worst_case_probability(1.0, -1.0, 2.0),
            Err(MomentError::InvalidGamma(..))
        ));
    }

    #[test]
    fn worst_case_probability_cases() {
        // wide slack: kappa = sqrt(40) falls in the quadratic-tail case
        let p = worst_case_probability(40f64.sqrt(), 1.0, 2.0).unwrap();
        assert!((p - 0.95).abs() < 1e-12);
        // boundary of the first case
        assert_eq!(worst_case_probability(1.0, 1.0, 2.0).unwrap(), 0.0);
        // both middle and tail formulas agree at kappa = gamma2 / sqrt(gamma1)
        let p_mid = worst_case_probability(2.0, 1.0, 2.0).unwrap();
        assert!((p_mid - 0.5).abs() < 1e-12);
        let tail = (4.0 - 2.0) / 4.0;
        assert!((p_mid - tail).abs() < 1e-12);
    }

    #[test]
    fn cantelli_examples() {
        assert!((cantelli_bound(0.0, 1.0, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(cantelli_bound(1.0, 1.0, 0.0), 0.0);
        assert_eq!(cantelli_bound(0.0, 0.0, 1.0), 1.0);
    }

    #[test]
    fn cantelli_attained_by_two_point_distribution() {
        // Two atoms with exact mean and variance, the upper one strictly
        // above b; the left-tail mass approaches the bound as the upper atom
        // approaches b from above.
        let cases: [(f64, f64, f64); 3] = [(0.0, 1.0, 1.0), (2.0, 0.5, 3.0), (-1.0, 2.0, 4.0)];
        for &(mu, sigma, b) in &cases {
            let t = b - mu;
            let d = t * (1.0 + 1e-10);
            let hi = mu + d;
            let lo = mu - sigma * sigma / d;
            let p_hi = sigma * sigma / (sigma * sigma + d * d);
            let p_lo = 1.0 - p_hi;
            // moment identities hold exactly
            let mean = p_hi * hi + p_lo * lo;
            let var = p_hi * (hi - mu).powi(2) + p_lo * (lo - mu).powi(2);
            assert!((mean - mu).abs() < 1e-9);
            assert!((var - sigma * sigma).abs() < 1e-9);
            assert!(hi > b);
            // P{xi <= b} = mass on the low atom
            assert!((p_lo - cantelli_bound(mu, sigma, b)).abs() < 1e-9);
        }
    }

    #[test]
    fn soc_row_construction() {
        let sigma = mat(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let md = MomentData::new(vec![0.0, 0.0], sigma.clone()).unwrap();
        let spec = AmbiguitySpec::d2(0.05, 1.0, 2.0).unwrap();
        let row = build_soc_row(&md, &spec, 10.0).unwrap();
        assert!(row.lambda.max_abs_diff(&sigma.scaled(40.0)) < 1e-9);
        assert!((row.omega * row.omega - 40.0).abs() < 1e-9);

        // Gaussian at alpha = 0.5 degenerates to the linear row.
        let spec = AmbiguitySpec::gaussian(0.5).unwrap();
        let row = build_soc_row(&md, &spec, 10.0).unwrap();
        assert!(row.omega.abs() < 1e-12);
        assert!(row.lambda.frobenius_norm() < 1e-12);
        assert!((row.lhs(&[1.0, 1.0]) - 0.0).abs() < 1e-12);

        // D1 at alpha = 0.2 doubles the unit covariance.
        let md = MomentData::new(vec![1.0, 1.0], Mat::identity(2)).unwrap();
        let spec = AmbiguitySpec::d1(0.2).unwrap();
        let row = build_soc_row(&md, &spec, 10.0).unwrap();
        assert!(row.lambda.max_abs_diff(&Mat::identity(2).scaled(4.0)) < 1e-9);

        assert!(matches!(
            build_soc_row(&md, &spec, 0.0),
            Err(MomentError::InvalidCapacity(_))
        ));
    }

    #[test]
    fn cone_boundary_attains_target_probability() {
        // If T sits exactly on the cone boundary, the worst-case probability
        // equals 1 - alpha for the moment-error model.
        let sigma = mat(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let md = MomentData::new(vec![5.0, 3.0], sigma).unwrap();
        for &(g1, g2, alpha) in &[(1.0, 2.0, 0.05), (0.05, 2.0, 0.05), (0.5, 3.0, 0.25)] {
            let spec = AmbiguitySpec::d2(alpha, g1, g2).unwrap();
            let omega = omega_coefficient(&spec).unwrap();
            let y = [1.0, 1.0];
            let mu_y = 8.0;
            let std = md.cov().quad_form(&y).sqrt();
            let cap = mu_y + omega * std;
            let kappa = (cap - mu_y) / std;
            let p = worst_case_probability(kappa, g1, g2).unwrap();
            assert!(
                (p - (1.0 - alpha)).abs() < 1e-9,
                "boundary probability {p} vs {}",
                1.0 - alpha
            );
        }
    }

    #[test]
    fn omega_width_ordering() {
        for i in 1..=50 {
            let alpha = 0.5 * i as f64 / 50.0;
            let g = omega_coefficient(&AmbiguitySpec::gaussian(alpha).unwrap()).unwrap();
            let d1 = omega_coefficient(&AmbiguitySpec::d1(alpha).unwrap()).unwrap();
            assert!(g <= d1 + 1e-9, "alpha {alpha}: {g} vs {d1}");
            for &g2 in &[1.0 + 1e-9, 1.5, 2.0, 10.0] {
                // moment-error cone is widest whenever gamma2 >= 1
                let d2 = (g2 / alpha).sqrt();
                assert!(d1 <= d2 + 1e-9);
            }
        }
    }

    #[test]
    fn d2_width_is_continuous_across_case_boundary() {
        for &alpha in &[0.05_f64, 0.1, 0.25, 0.5] {
            for &g2 in &[1.5_f64, 2.0, 4.0, 8.0] {
                let g1 = alpha * g2;
                if !(g1 > 0.0 && g2 > g1.max(1.0)) {
                    continue;
                }
                let left = g1.sqrt() + ((1.0 - alpha) / alpha * (g2 - g1)).sqrt();
                let right = (g2 / alpha).sqrt();
                assert!(
                    (left - right).abs() < 1e-9,
                    "branches disagree at gamma1 = alpha * gamma2"
                );
            }
        }
    }

    #[test]
    fn estimation_and_row_building_are_deterministic() {
        let samples = mat(&[
            vec![1.5, 2.5, 0.5],
            vec![2.0, 1.0, 1.5],
            vec![0.5, 3.0, 2.5],
            vec![3.5, 2.0, 1.0],
        ]);
        let spec = AmbiguitySpec::d2(0.1, 1.0, 2.0).unwrap();
        let a = build_soc_row(&estimate_moments(&samples).unwrap(), &spec, 9.0).unwrap();
        let b = build_soc_row(&estimate_moments(&samples).unwrap(), &spec, 9.0).unwrap();
        assert_eq!(a, b);
    }
}
