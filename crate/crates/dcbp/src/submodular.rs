//! Submodularity tests, greedy separation of extended polymatroid
//! inequalities, and the lifted-space view of a 0-1 second-order-cone row.
//!
//! A set function `h` on subsets of `[d]` is submodular when marginal gains
//! shrink: `h(R + j) - h(R) >= h(S + j) - h(S)` for `R <= S`, `j` outside
//! `S`. For submodular `h` with `h(empty) = 0`, every `pi` in the extended
//! polymatroid `EP_h = { pi : pi(R) <= h(R) for all R }` yields an inequality
//! `pi' y <= t` valid for the epigraph of `h`, and a maximally violated `pi`
//! at a fractional point is found by a sort-and-marginals greedy pass.
//!
//! The cone function `g(y) = mu' y + sqrt(y' Lambda y)` is submodular when
//! `Lambda` has nonpositive off-diagonal entries and `2 sum_s Lambda_rs >=
//! Lambda_rr` per row. When it is not, [`lift_soc`] rewrites the squared row
//! over pair variables `w_jk = y_j y_k`, where the quadratic always is.

use crate::linalg::{dot, Mat};
use crate::moments::SocRow;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cut violation threshold: a separated inequality is only reported when the
/// query point violates it by more than this.
pub const VIOLATION_THRESHOLD: f64 = 1e-4;

/// Enumeration guard for the brute-force subset routines.
pub const MAX_BRUTEFORCE_DIM: usize = 14;

const TIGHT_TOL: f64 = 1e-9;
const SIGN_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SubmodularError {
    #[error("dimension {dim} too large for subset enumeration (max {max})")]
    DimensionTooLarge { dim: usize, max: usize },
}

/// A deterministic set function evaluated through binary indicator vectors.
pub trait SetFunction {
    fn dim(&self) -> usize;
    fn eval(&self, members: &[bool]) -> f64;
    /// Whether `h(empty) = 0`; required for valid epigraph inequalities.
    fn is_normalized(&self) -> bool {
        true
    }
}

/// `g(y) = mu' y + sqrt(y' Lambda y)`.
#[derive(Debug, Clone)]
pub struct SqrtQuadratic {
    mu: Vec<f64>,
    lambda: Mat,
}

impl SqrtQuadratic {
    pub fn new(mu: Vec<f64>, lambda: Mat) -> Self {
        assert!(lambda.is_square() && lambda.nrows() == mu.len());
        SqrtQuadratic { mu, lambda }
    }

    pub fn from_row(row: &SocRow) -> Self {
        SqrtQuadratic::new(row.mu.clone(), row.lambda.clone())
    }

    /// Same row with the quadratic matrix replaced (used for submodular
    /// approximations of the cone).
    pub fn with_matrix(row: &SocRow, lambda: Mat) -> Self {
        SqrtQuadratic::new(row.mu.clone(), lambda)
    }
}

impl SetFunction for SqrtQuadratic {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn eval(&self, members: &[bool]) -> f64 {
        let mut linear = 0.0;
        let mut quad = 0.0;
        for (j, &m_j) in members.iter().enumerate() {
            if !m_j {
                continue;
            }
            linear += self.mu[j];
            let row = self.lambda.row(j);
            for (k, &m_k) in members.iter().enumerate() {
                if m_k {
                    quad += row[k];
                }
            }
        }
        linear + quad.max(0.0).sqrt()
    }
}

/// Set function defined by a closure, mostly for tests and experiments.
pub struct FnSetFunction<F: Fn(&[bool]) -> f64> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[bool]) -> f64> FnSetFunction<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnSetFunction { dim, f }
    }
}

impl<F: Fn(&[bool]) -> f64> SetFunction for FnSetFunction<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, members: &[bool]) -> f64 {
        (self.f)(members)
    }
}

/// Which variable space a polymatroid inequality lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutSpace {
    Original,
    Lifted,
}

/// An extended polymatroid inequality `pi' y <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolymatroidCut {
    pub pi: Vec<f64>,
    pub rhs: f64,
    pub space: CutSpace,
}

impl PolymatroidCut {
    pub fn violation(&self, point: &[f64]) -> f64 {
        dot(&self.pi, point) - self.rhs
    }
}

/// True iff every off-diagonal entry of the symmetric matrix is nonpositive
/// (within 1e-12), the exact condition for `y' Lambda y` to be submodular.
pub fn quad_offdiag_submodular(lambda: &Mat) -> bool {
    assert!(lambda.is_square());
    let n = lambda.nrows();
    for r in 0..n {
        for s in 0..n {
            if r != s && lambda[(r, s)] > SIGN_TOL {
                return false;
            }
        }
    }
    true
}

/// True iff both submodularity conditions hold for the cone function
/// `g(y) = mu' y + sqrt(y' Lambda y)`:
/// (i) `2 sum_s Lambda_rs >= Lambda_rr` for every row `r`, and
/// (ii) every off-diagonal entry is nonpositive.
pub fn sufficient_condition_holds(lambda: &Mat) -> bool {
    sufficient_condition_holds_tol(lambda, SIGN_TOL)
}

pub fn sufficient_condition_holds_tol(lambda: &Mat, tol: f64) -> bool {
    assert!(lambda.is_square());
    let n = lambda.nrows();
    for r in 0..n {
        let row_sum: f64 = lambda.row(r).iter().sum();
        if 2.0 * row_sum < lambda[(r, r)] - tol {
            return false;
        }
        for s in 0..n {
            if r != s && lambda[(r, s)] > tol {
                return false;
            }
        }
    }
    true
}

/// A triple violating the diminishing-returns definition: the marginal gain
/// of `item` at `subset` is smaller than at the larger `superset`.
/// Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmodularityViolation {
    pub subset: Vec<usize>,
    pub superset: Vec<usize>,
    pub item: usize,
}

fn mask_to_members(mask: u32, dim: usize, buf: &mut [bool]) {
    for (j, slot) in buf.iter_mut().enumerate().take(dim) {
        *slot = mask & (1 << j) != 0;
    }
}

fn mask_to_indices(mask: u32, dim: usize) -> Vec<usize> {
    (0..dim).filter(|j| mask & (1 << j) != 0).collect()
}

/// Checks the diminishing-returns definition over every `R <= S`, `j`
/// outside `S` (tolerance 1e-9). Returns the first violating triple in
/// ascending subset order, or `None` when the function is submodular.
pub fn is_submodular_bruteforce(
    h: &dyn SetFunction,
) -> Result<Option<SubmodularityViolation>, SubmodularError> {
    let d = h.dim();
    if d > MAX_BRUTEFORCE_DIM {
        return Err(SubmodularError::DimensionTooLarge {
            dim: d,
            max: MAX_BRUTEFORCE_DIM,
        });
    }
    let table = eval_table(h);
    let full: u32 = if d == 32 { u32::MAX } else { (1 << d) - 1 };

    let mut subs: Vec<u32> = Vec::new();
    for s_mask in 0..=full {
        // submasks of s_mask in ascending order
        subs.clear();
        let mut sub = s_mask;
        loop {
            subs.push(sub);
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & s_mask;
        }
        subs.reverse();
        for j in 0..d {
            let bit = 1u32 << j;
            if s_mask & bit != 0 {
                continue;
            }
            let gain_s = table[(s_mask | bit) as usize] - table[s_mask as usize];
            for &r_mask in &subs {
                let gain_r = table[(r_mask | bit) as usize] - table[r_mask as usize];
                if gain_r < gain_s - TIGHT_TOL {
                    return Ok(Some(SubmodularityViolation {
                        subset: mask_to_indices(r_mask, d),
                        superset: mask_to_indices(s_mask, d),
                        item: j,
                    }));
                }
            }
        }
    }
    Ok(None)
}

fn eval_table(h: &dyn SetFunction) -> Vec<f64> {
    let d = h.dim();
    let mut buf = vec![false; d];
    (0..(1u32 << d))
        .map(|mask| {
            mask_to_members(mask, d, &mut buf);
            h.eval(&buf)
        })
        .collect()
}

/// Greedy separation of an extended polymatroid inequality at the fractional
/// point `(y_hat, t_hat)` with the default violation threshold.
///
/// Entries of `y_hat` are sorted in descending order (ties broken by lowest
/// index), the coefficient vector is read off the chain of marginal gains,
/// and the inequality `pi' y <= t_hat` is returned iff `y_hat` violates it by
/// more than the threshold.
pub fn greedy_separate(
    h: &dyn SetFunction,
    y_hat: &[f64],
    t_hat: f64,
) -> Option<PolymatroidCut> {
    greedy_separate_with_threshold(h, y_hat, t_hat, VIOLATION_THRESHOLD, CutSpace::Original)
}

pub fn greedy_separate_with_threshold(
    h: &dyn SetFunction,
    y_hat: &[f64],
    t_hat: f64,
    threshold: f64,
    space: CutSpace,
) -> Option<PolymatroidCut> {
    let d = h.dim();
    assert_eq!(y_hat.len(), d, "query point has wrong dimension");
    debug_assert!(
        y_hat.iter().all(|&v| (-1e-7..=1.0 + 1e-7).contains(&v)),
        "query point outside the unit box"
    );

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| y_hat[b].total_cmp(&y_hat[a]).then(a.cmp(&b)));

    let mut members = vec![false; d];
    let mut pi = vec![0.0; d];
    let mut prev = 0.0; // h(empty) = 0 for normalized h
    for &j in &order {
        members[j] = true;
        let value = h.eval(&members);
        pi[j] = value - prev;
        prev = value;
    }

    let violation = dot(&pi, y_hat) - t_hat;
    if violation > threshold {
        Some(PolymatroidCut {
            pi,
            rhs: t_hat,
            space,
        })
    } else {
        None
    }
}

/// A 0-1 cone row rewritten over the lifted space `v = [y; w]`,
/// `w_jk = y_j y_k`:
///
/// ```text
/// mu' y <= T           (kept as a linear side row)
/// a' v + v' B_N v <= T^2
/// ```
///
/// where `a` stacks `2 T mu` over the positive part of `Lambda - mu mu'`
/// (vectorized row-major over the `J^2` pair coordinates) and `B_N` holds the
/// nonpositive part. Only the `J x J` leading block of `B_N` can be nonzero,
/// so just that block is stored. The quadratic left-hand side is submodular
/// in `v` for any positive definite `Lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedForm {
    dim_y: usize,
    a: Vec<f64>,
    bn: Mat,
    rhs: f64,
    linear_mu: Vec<f64>,
    linear_cap: f64,
}

impl LiftedForm {
    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    /// Dimension of the lifted space, `J + J^2`.
    pub fn dim(&self) -> usize {
        self.dim_y + self.dim_y * self.dim_y
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Nonpositive quadratic block over the `y` coordinates.
    pub fn bn(&self) -> &Mat {
        &self.bn
    }

    pub fn rhs(&self) -> f64 {
        self.rhs
    }

    pub fn linear_mu(&self) -> &[f64] {
        &self.linear_mu
    }

    pub fn linear_cap(&self) -> f64 {
        self.linear_cap
    }

    /// Index of the pair coordinate `w_jk` inside the lifted vector.
    pub fn pair_index(&self, j: usize, k: usize) -> usize {
        self.dim_y + j * self.dim_y + k
    }

    /// Left-hand side `a' v + v' B_N v` at a fractional lifted point.
    pub fn lhs(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.dim());
        let mut acc = dot(&self.a, v);
        for j in 0..self.dim_y {
            let row = self.bn.row(j);
            for k in 0..self.dim_y {
                if row[k] != 0.0 {
                    acc += row[k] * v[j] * v[k];
                }
            }
        }
        acc
    }
}

impl SetFunction for LiftedForm {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn eval(&self, members: &[bool]) -> f64 {
        let mut acc = 0.0;
        for (idx, &m) in members.iter().enumerate() {
            if m {
                acc += self.a[idx];
            }
        }
        for j in 0..self.dim_y {
            if !members[j] {
                continue;
            }
            let row = self.bn.row(j);
            for k in 0..self.dim_y {
                if members[k] {
                    acc += row[k];
                }
            }
        }
        acc
    }
}

/// Rewrites a cone row over the lifted pair space: `Lambda - mu mu'` is split
/// into its positive part (into `a`) and nonpositive part (into `B_N`), and
/// the right-hand side becomes `T^2`.
pub fn lift_soc(row: &SocRow) -> LiftedForm {
    let j_dim = row.dim();
    let mut a = vec![0.0; j_dim + j_dim * j_dim];
    let mut bn = Mat::zeros(j_dim, j_dim);
    for (j, &mu_j) in row.mu.iter().enumerate() {
        a[j] = 2.0 * row.cap * mu_j;
    }
    for j in 0..j_dim {
        for k in 0..j_dim {
            let q = row.lambda[(j, k)] - row.mu[j] * row.mu[k];
            if q > 0.0 {
                a[j_dim + j * j_dim + k] = q;
            } else {
                bn[(j, k)] = q;
            }
        }
    }
    LiftedForm {
        dim_y: j_dim,
        a,
        bn,
        rhs: row.cap * row.cap,
        linear_mu: row.mu.clone(),
        linear_cap: row.cap,
    }
}

/// Expands a point in the original space to the lifted space with
/// `w_jk = y_j * y_k`.
pub fn lift_point(y: &[f64]) -> Vec<f64> {
    let d = y.len();
    let mut v = Vec::with_capacity(d + d * d);
    v.extend_from_slice(y);
    for j in 0..d {
        for k in 0..d {
            v.push(y[j] * y[k]);
        }
    }
    v
}

/// Greedy separation in the lifted space against the rewritten row's own
/// right-hand side `T^2`.
pub fn greedy_separate_lifted(lf: &LiftedForm, v_hat: &[f64]) -> Option<PolymatroidCut> {
    greedy_separate_with_threshold(lf, v_hat, lf.rhs(), VIOLATION_THRESHOLD, CutSpace::Lifted)
}

/// Exhaustive membership test `pi(R) <= h(R)` over every subset (tolerance
/// 1e-9); the defining property of the extended polymatroid `EP_h`.
pub fn ep_membership_check(
    cut: &PolymatroidCut,
    h: &dyn SetFunction,
) -> Result<bool, SubmodularError> {
    let d = h.dim();
    if d > MAX_BRUTEFORCE_DIM {
        return Err(SubmodularError::DimensionTooLarge {
            dim: d,
            max: MAX_BRUTEFORCE_DIM,
        });
    }
    assert_eq!(cut.pi.len(), d);
    let mut buf = vec![false; d];
    for mask in 0..(1u32 << d) {
        mask_to_members(mask, d, &mut buf);
        let mut pi_sum = 0.0;
        for (j, &m) in buf.iter().enumerate() {
            if m {
                pi_sum += cut.pi[j];
            }
        }
        if pi_sum > h.eval(&buf) + TIGHT_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example_lambda() -> Mat {
        Mat::from_rows(&[
            vec![0.6, -0.2, 0.2],
            vec![-0.2, 0.7, 0.1],
            vec![0.2, 0.1, 0.6],
        ])
    }

    fn relaxed_lambda() -> Mat {
        Mat::from_rows(&[
            vec![0.35, -0.15, 0.0],
            vec![-0.15, 0.37, 0.0],
            vec![0.0, 0.0, 0.38],
        ])
    }

    fn example_row() -> SocRow {
        SocRow {
            mu: vec![0.0; 3],
            lambda: example_lambda(),
            cap: 0.8,
            omega: 1.0,
        }
    }

    fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> Mat {
        let mut b = Mat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                b[(i, j)] = rng.gen::<f64>() - 0.5;
            }
        }
        let mut m = b.mat_mul(&b.transpose());
        for i in 0..d {
            m[(i, i)] += 0.1;
        }
        m
    }

    #[test]
    fn offdiagonal_sign_test() {
        assert!(!quad_offdiag_submodular(&example_lambda()));
        assert!(quad_offdiag_submodular(&Mat::diag(&[1.0, 2.0, 3.0])));
        assert!(quad_offdiag_submodular(&Mat::from_rows(&[
            vec![1.0, -0.1],
            vec![-0.1, 1.0],
        ])));
    }

    #[test]
    fn sufficient_condition_cases() {
        assert!(sufficient_condition_holds(&relaxed_lambda()));
        assert!(sufficient_condition_holds(&Mat::diag(&[0.5, 1.5])));
        assert!(!sufficient_condition_holds(&example_lambda()));
        // condition (i) fails: strongly negative off-diagonal
        let heavy = Mat::from_rows(&[vec![1.0, -2.0], vec![-2.0, 1.0]]);
        assert!(!sufficient_condition_holds(&heavy));
    }

    #[test]
    fn bruteforce_finds_known_witness() {
        let g = SqrtQuadratic::new(vec![0.0; 3], example_lambda());
        let witness = is_submodular_bruteforce(&g).unwrap().unwrap();
        assert_eq!(witness.subset, vec![0]);
        assert_eq!(witness.superset, vec![0, 1]);
        assert_eq!(witness.item, 2);
    }

    #[test]
    fn bruteforce_accepts_submodular_functions() {
        let g = SqrtQuadratic::new(vec![0.3, 0.1, 0.2], Mat::diag(&[0.6, 0.7, 0.6]));
        assert!(is_submodular_bruteforce(&g).unwrap().is_none());

        let linear = FnSetFunction::new(4, |members: &[bool]| {
            let c = [1.0, -2.0, 3.0, 0.5];
            members
                .iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(j, _)| c[j])
                .sum()
        });
        assert!(is_submodular_bruteforce(&linear).unwrap().is_none());
    }

    #[test]
    fn bruteforce_guards_dimension() {
        let big = FnSetFunction::new(15, |_: &[bool]| 0.0);
        assert!(matches!(
            is_submodular_bruteforce(&big),
            Err(SubmodularError::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn greedy_reproduces_reference_cut() {
        let g_l = SqrtQuadratic::new(vec![0.0; 3], relaxed_lambda());
        let y_hat = [1.0, 0.5, 0.9];
        let cut = greedy_separate(&g_l, &y_hat, 0.8).expect("violated point must yield a cut");
        assert!((cut.pi[0] - 0.59).abs() < 0.005);
        assert!((cut.pi[1] - 0.04).abs() < 0.005);
        assert!((cut.pi[2] - 0.26).abs() < 0.005);
        assert_eq!(cut.rhs, 0.8);
        assert!(cut.violation(&y_hat) > VIOLATION_THRESHOLD);
        assert!(ep_membership_check(&cut, &g_l).unwrap());
    }

    #[test]
    fn greedy_skips_satisfied_points() {
        let g_l = SqrtQuadratic::new(vec![0.0; 3], relaxed_lambda());
        assert!(greedy_separate(&g_l, &[0.0; 3], 0.5).is_none());
        // integer point with g(y) <= t produces the tight-but-satisfied chain
        let y = [1.0, 0.0, 1.0];
        let mut members = [true, false, true];
        members[1] = false;
        let value = g_l.eval(&members);
        assert!(greedy_separate(&g_l, &y, value + 0.01).is_none());
    }

    #[test]
    fn lifted_form_matches_reference_coefficients() {
        let lf = lift_soc(&example_row());
        assert_eq!(lf.dim(), 12);
        let mut expected_a = vec![0.0; 12];
        expected_a[3] = 0.6; // w11
        expected_a[5] = 0.2; // w13
        expected_a[7] = 0.7; // w22
        expected_a[8] = 0.1; // w23
        expected_a[9] = 0.2; // w31
        expected_a[10] = 0.1; // w32
        expected_a[11] = 0.6; // w33
        for (got, want) in lf.a().iter().zip(&expected_a) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((lf.bn()[(0, 1)] + 0.2).abs() < 1e-12);
        assert!((lf.bn()[(1, 0)] + 0.2).abs() < 1e-12);
        assert!((lf.rhs() - 0.64).abs() < 1e-12);
    }

    #[test]
    fn lifted_greedy_reproduces_reference_cut() {
        let lf = lift_soc(&example_row());
        let v_hat = lift_point(&[1.0, 0.5, 0.9]);
        let cut = greedy_separate_lifted(&lf, &v_hat).expect("violated lifted point");
        let mut expected = vec![0.0; 12];
        expected[3] = 0.6;
        expected[5] = 0.2;
        expected[9] = 0.2;
        expected[11] = 0.6;
        expected[1] = -0.4;
        expected[8] = 0.1;
        expected[10] = 0.1;
        expected[7] = 0.7;
        for (idx, (got, want)) in cut.pi.iter().zip(&expected).enumerate() {
            assert!(
                (got - want).abs() < 1e-9,
                "coefficient {idx}: {got} vs {want}"
            );
        }
        assert!((cut.rhs - 0.64).abs() < 1e-12);
        assert_eq!(cut.space, CutSpace::Lifted);
        assert!(greedy_separate_lifted(&lf, &vec![0.0; 12]).is_none());
    }

    #[test]
    fn lifted_identity_holds_on_binary_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let lambda = random_psd(&mut rng, 3);
            let mu: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let cap = 1.0 + rng.gen::<f64>();
            let row = SocRow {
                mu: mu.clone(),
                lambda: lambda.clone(),
                cap,
                omega: 1.0,
            };
            let lf = lift_soc(&row);
            for mask in 0..8u32 {
                let y: Vec<f64> = (0..3)
                    .map(|j| if mask & (1 << j) != 0 { 1.0 } else { 0.0 })
                    .collect();
                let v = lift_point(&y);
                let mu_y = dot(&mu, &y);
                let direct = 2.0 * cap * mu_y + lambda.quad_form(&y) - mu_y * mu_y;
                assert!((lf.lhs(&v) - direct).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lifted_row_is_equivalent_on_binary_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let d = 2 + (rng.gen::<u32>() % 4) as usize; // up to 5
            let lambda = random_psd(&mut rng, d);
            let mu: Vec<f64> = (0..d).map(|_| 2.0 * rng.gen::<f64>()).collect();
            let cap = 1.0 + 2.0 * rng.gen::<f64>();
            let row = SocRow {
                mu: mu.clone(),
                lambda: lambda.clone(),
                cap,
                omega: 1.0,
            };
            let g = SqrtQuadratic::from_row(&row);
            let lf = lift_soc(&row);
            for mask in 0..(1u32 << d) {
                let members: Vec<bool> = (0..d).map(|j| mask & (1 << j) != 0).collect();
                let y: Vec<f64> = members.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
                let original = g.eval(&members) <= cap + 1e-12;
                let lifted =
                    dot(&mu, &y) <= cap + 1e-12 && lf.lhs(&lift_point(&y)) <= lf.rhs() + 1e-12;
                assert_eq!(original, lifted, "mask {mask}");
            }
        }
    }

    #[test]
    fn greedy_cuts_are_tight_valid_and_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let d = 3 + (rng.gen::<u32>() % 4) as usize; // up to 6
            // random submodular cone matrix: nonpositive off-diagonal,
            // diagonally dominant rows
            let mut lambda = Mat::zeros(d, d);
            for i in 0..d {
                for j in (i + 1)..d {
                    let v = -0.2 * rng.gen::<f64>() / d as f64;
                    lambda[(i, j)] = v;
                    lambda[(j, i)] = v;
                }
            }
            for i in 0..d {
                let off: f64 = (0..d).filter(|&j| j != i).map(|j| lambda[(i, j)]).sum();
                lambda[(i, i)] = 2.0 * off.abs() + 0.2 + rng.gen::<f64>();
            }
            assert!(sufficient_condition_holds(&lambda));
            let mu: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let g = SqrtQuadratic::new(mu, lambda);

            let y_hat: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let t_hat = 0.3 + rng.gen::<f64>();
            let Some(cut) = greedy_separate(&g, &y_hat, t_hat) else {
                continue;
            };
            // separation soundness
            assert!(cut.violation(&y_hat) > VIOLATION_THRESHOLD);
            // tight on every chain set of the sorting permutation
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| y_hat[b].total_cmp(&y_hat[a]).then(a.cmp(&b)));
            let mut members = vec![false; d];
            let mut pi_sum = 0.0;
            for &j in &order {
                members[j] = true;
                pi_sum += cut.pi[j];
                assert!((pi_sum - g.eval(&members)).abs() < 1e-9);
            }
            // membership and validity: no binary point below the epigraph is cut
            assert!(ep_membership_check(&cut, &g).unwrap());
            let mut buf = vec![false; d];
            for mask in 0..(1u32 << d) {
                mask_to_members(mask, d, &mut buf);
                if g.eval(&buf) <= cut.rhs {
                    let y: Vec<f64> = buf.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
                    assert!(cut.violation(&y) <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn membership_fails_for_scaled_cut() {
        let g_l = SqrtQuadratic::new(vec![0.0; 3], relaxed_lambda());
        let cut = greedy_separate(&g_l, &[1.0, 0.5, 0.9], 0.8).unwrap();
        let mut scaled = cut.clone();
        for c in &mut scaled.pi {
            *c *= 2.0;
        }
        assert!(!ep_membership_check(&scaled, &g_l).unwrap());
    }

    #[test]
    fn sufficient_condition_implies_bruteforce_submodularity() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let mut tested = 0;
        while tested < 15 {
            let d = 3 + (rng.gen::<u32>() % 6) as usize; // up to 8
            let mut lambda = random_psd(&mut rng, d);
            // push towards the sufficient condition by flipping positive
            // off-diagonals and inflating the diagonal
            for i in 0..d {
                for j in 0..d {
                    if i != j && lambda[(i, j)] > 0.0 {
                        lambda[(i, j)] = -lambda[(i, j)];
                    }
                }
            }
            for i in 0..d {
                let off: f64 = (0..d).filter(|&j| j != i).map(|j| lambda[(i, j)]).sum();
                lambda[(i, i)] = lambda[(i, i)].max(2.0 * off.abs() + 0.05);
            }
            if !sufficient_condition_holds(&lambda) {
                continue;
            }
            let mu: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let g = SqrtQuadratic::new(mu, lambda);
            assert!(is_submodular_bruteforce(&g).unwrap().is_none());
            tested += 1;
        }
    }
}
