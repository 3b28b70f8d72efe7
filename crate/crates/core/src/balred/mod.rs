//! Balanced realization and truncation of stable LTI models.
//!
//! Balancing uses the square-root method: factor both Gramians, take the SVD
//! of the cross product of the factors, and build the transform from the
//! singular vectors. The Gramian product is never formed explicitly.
//!
//! The reduced feedthrough is corrected so the static gain of the reduced
//! model equals that of the original one.

mod lyapunov;

pub use lyapunov::{lyapunov_residual, solve_lyapunov};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statespace::{dc_gain, dc_gain_unchecked, is_stable, StateSpaceModel};

/// Hankel singular values below this fraction of the largest one mark
/// directions that cannot be balanced reliably.
pub const MINIMALITY_RTOL: f64 = 1e-12;

/// Relative gap under which neighbouring Hankel singular values are one cluster.
pub const CLUSTER_RTOL: f64 = 1e-10;

/// Attached to a [`BalancedRealization`] whose input-output map needs fewer
/// states than the model has.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalityWarning {
    /// Directions dropped because their Hankel singular value is negligible.
    pub dropped: usize,
    /// Largest dropped Hankel singular value.
    pub largest_dropped: f64,
}

/// A model in balanced coordinates.
///
/// `balanced` has one state per reliable direction; `transform` (`n x r`) maps
/// balanced states back to original ones and `inverse` (`r x n`) is its left
/// inverse, so `balanced.a = inverse * A * transform`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedRealization {
    pub balanced: StateSpaceModel,
    pub transform: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// All `n` Hankel singular values, non-increasing.
    pub hsv: Vec<f64>,
    pub minimality: Option<MinimalityWarning>,
}

impl BalancedRealization {
    pub fn order(&self) -> usize {
        self.balanced.order()
    }
}

/// Reduced model `(Ar, Br, Cr, Dr)` with its a-priori H-infinity error bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub model: StateSpaceModel,
    pub nr: usize,
    pub full_order: usize,
    pub bound: f64,
    pub hsv: Vec<f64>,
    /// Maps an original state onto reduced coordinates (`nr x n`).
    pub projection: DMatrix<f64>,
}

impl ReducedModel {
    pub fn ar(&self) -> &DMatrix<f64> {
        &self.model.a
    }
    pub fn br(&self) -> &DMatrix<f64> {
        &self.model.b
    }
    pub fn cr(&self) -> &DMatrix<f64> {
        &self.model.c
    }
    pub fn dr(&self) -> &DMatrix<f64> {
        &self.model.d
    }
}

/// Controllability and observability Gramians `(Wc, Wo)`.
pub fn gramians(model: &StateSpaceModel) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a = &model.a;
    let wc = solve_lyapunov(a, &(&model.b * model.b.transpose()))?;
    let wo = solve_lyapunov(&a.transpose(), &(model.c.transpose() * &model.c))?;
    Ok((wc, wo))
}

/// `L` with `L L^T = W` for a (numerically) positive semidefinite `W`.
fn psd_factor(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = w.clone().symmetric_eigen();
    let mut l = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    l
}

/// Balances a stable model by the square-root method.
pub fn balance(model: &StateSpaceModel) -> Result<BalancedRealization> {
    let n = model.order();
    if n == 0 {
        return Err(Error::Argument("cannot balance an empty model".into()));
    }
    let (wc, wo) = gramians(model)?;
    let lc = psd_factor(&wc);
    let lo = psd_factor(&wo);
    let svd = (lo.transpose() * &lc).svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let hsv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();

    let sigma1 = hsv[0];
    if sigma1 <= 0.0 {
        return Err(Error::Argument(
            "model has no controllable and observable direction (all Hankel singular values are zero)".into(),
        ));
    }
    let r = hsv.iter().take_while(|&&s| s > MINIMALITY_RTOL * sigma1).count();
    let minimality = (r < n).then(|| MinimalityWarning { dropped: n - r, largest_dropped: hsv[r] });

    let mut transform = DMatrix::zeros(n, r);
    let mut inverse = DMatrix::zeros(r, n);
    for (k, &idx) in order.iter().take(r).enumerate() {
        let scale = 1.0 / hsv[k].sqrt();
        // T = Lc V S^{-1/2},  T^{-1} = S^{-1/2} U^T Lo^T
        let tk = &lc * v_t.row(idx).transpose() * scale;
        transform.column_mut(k).copy_from(&tk);
        let ik = (lo.clone() * u.column(idx)).transpose() * scale;
        inverse.row_mut(k).copy_from(&ik);
    }

    let a = &inverse * &model.a * &transform;
    let b = &inverse * &model.b;
    let c = &model.c * &transform;
    let labels = (0..r).map(|i| format!("z{i}")).collect();
    let balanced =
        StateSpaceModel::with_labels(a, b, c, model.d.clone(), labels, model.input_labels.clone())?;
    Ok(BalancedRealization { balanced, transform, inverse, hsv, minimality })
}

/// Number of Hankel singular values that can be kept reliably.
fn reliable_count(hsv: &[f64]) -> usize {
    let sigma1 = hsv.first().copied().unwrap_or(0.0);
    hsv.iter().take_while(|&&s| s > MINIMALITY_RTOL * sigma1).count()
}

/// Reduced order `max{i : sigma_i > eps}`, at least 1; `eps = 0` keeps all `n`.
///
/// A cut falling inside a cluster of (nearly) equal values is moved past the
/// cluster, and for `eps > 0` negligible values are never kept.
pub fn select_order(hsv: &[f64], eps: f64) -> Result<usize> {
    if hsv.is_empty() {
        return Err(Error::Argument("empty Hankel singular value list".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::Argument(format!("tolerance must be non-negative, got {eps}")));
    }
    if hsv.windows(2).any(|w| w[1] > w[0]) || hsv.iter().any(|&s| s < 0.0) {
        return Err(Error::Argument("Hankel singular values must be non-negative and non-increasing".into()));
    }
    let n = hsv.len();
    if eps == 0.0 {
        return Ok(n);
    }
    let mut nr = hsv.iter().take_while(|&&s| s > eps).count().max(1);
    let tie = CLUSTER_RTOL * hsv[0];
    while nr < n && (hsv[nr - 1] - hsv[nr]).abs() < tie && hsv[nr] > MINIMALITY_RTOL * hsv[0] {
        nr += 1;
    }
    Ok(nr.min(reliable_count(hsv)).max(1))
}

/// Twice the sum of the discarded Hankel singular values.
pub fn error_bound(hsv: &[f64], nr: usize) -> Result<f64> {
    if nr == 0 || nr > hsv.len() {
        return Err(Error::Argument(format!("reduced order {nr} outside 1..={}", hsv.len())));
    }
    Ok(2.0 * hsv[nr..].iter().sum::<f64>())
}

/// Reduced model of order `nr` from a balanced realization; `Dr` is set so the
/// static gain equals that of `model`.
pub fn truncate(bal: &BalancedRealization, model: &StateSpaceModel, nr: usize) -> Result<ReducedModel> {
    let n = model.order();
    if nr == 0 || nr > n {
        return Err(Error::Argument(format!("reduced order {nr} outside 1..={n}")));
    }
    if nr > bal.order() {
        return Err(Error::Argument(format!(
            "reduced order {nr} exceeds the {} reliably balanced directions",
            bal.order()
        )));
    }
    let (ar, br, cr) = residualize(&bal.balanced, nr)?;
    if !is_stable(&ar)? {
        return Err(Error::Split { nr });
    }

    let g0 = dc_gain(model)?;
    let zero_d = DMatrix::zeros(cr.nrows(), br.ncols());
    let gr_strict = dc_gain_unchecked(&ar, &br, &cr, &zero_d)?;
    let dr = g0 - gr_strict;

    let labels = (0..nr).map(|i| format!("z{i}")).collect();
    let reduced = StateSpaceModel::with_labels(ar, br, cr, dr, labels, model.input_labels.clone())?;
    Ok(ReducedModel {
        model: reduced,
        nr,
        full_order: n,
        bound: error_bound(&bal.hsv, nr)?,
        hsv: bal.hsv.clone(),
        projection: bal.inverse.rows(0, nr).into_owned(),
    })
}

/// Eliminates balanced states `nr..` at their quasi-steady state.
///
/// With `x = (x1, x2)` and `dx2/dt = 0`, the kept block becomes
/// `A11 - A12 A22^{-1} A21`, `B1 - A12 A22^{-1} B2`, `C1 - C2 A22^{-1} A21`.
/// Keeping the balanced leading block unchanged and only correcting `D` would
/// match the static gain but can double the H-infinity error; eliminating the
/// tail keeps both the static gain and the `2 * sum(tail)` bound.
fn residualize(
    bal: &StateSpaceModel,
    nr: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let r = bal.order();
    let a11 = bal.a.view((0, 0), (nr, nr)).into_owned();
    let b1 = bal.b.rows(0, nr).into_owned();
    let c1 = bal.c.columns(0, nr).into_owned();
    if nr == r {
        return Ok((a11, b1, c1));
    }
    let k = r - nr;
    let a12 = bal.a.view((0, nr), (nr, k));
    let a21 = bal.a.view((nr, 0), (k, nr));
    let a22 = bal.a.view((nr, nr), (k, k)).into_owned();
    let b2 = bal.b.rows(nr, k);
    let c2 = bal.c.columns(nr, k);

    let lu = a22.lu();
    let x_a = lu.solve(&a21.into_owned()).ok_or(Error::Split { nr })?;
    let x_b = lu.solve(&b2.into_owned()).ok_or(Error::Split { nr })?;
    let ar = a11 - a12 * &x_a;
    let br = b1 - a12 * &x_b;
    let cr = c1 - c2 * &x_a;
    Ok((ar, br, cr))
}

/// Balance, select the order for tolerance `eps`, truncate.
pub fn reduce(model: &StateSpaceModel, eps: f64) -> Result<ReducedModel> {
    if !is_stable(&model.a)? {
        return Err(Error::Unstable("only stable models can be reduced".into()));
    }
    let bal = balance(model)?;
    let nr = select_order(&bal.hsv, eps)?;
    if nr > bal.order() {
        // Only reachable at eps = 0 on a numerically non-minimal model.
        return Ok(unreduced(model, bal.hsv));
    }
    truncate(&bal, model, nr)
}

/// `model` itself in the reduced-model wrapper: full order, zero bound.
fn unreduced(model: &StateSpaceModel, hsv: Vec<f64>) -> ReducedModel {
    let n = model.order();
    ReducedModel {
        model: model.clone(),
        nr: n,
        full_order: n,
        bound: 0.0,
        hsv,
        projection: DMatrix::identity(n, n),
    }
}

/// Reduces to a fixed order instead of a tolerance.
pub fn reduce_to_order(model: &StateSpaceModel, nr: usize) -> Result<ReducedModel> {
    let bal = balance(model)?;
    truncate(&bal, model, nr)
}

/// Frequency response `G(jw) = C (jwI - A)^{-1} B + D` as a complex matrix.
pub fn frequency_response(model: &StateSpaceModel, omega: f64) -> Result<DMatrix<nalgebra::Complex<f64>>> {
    use nalgebra::Complex;
    let n = model.order();
    let mut m = model.a.map(|v| Complex::new(-v, 0.0));
    for i in 0..n {
        m[(i, i)] += Complex::new(0.0, omega);
    }
    let b = model.b.map(|v| Complex::new(v, 0.0));
    let x = m
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Value(format!("jwI - A singular at w = {omega}")))?;
    let c = model.c.map(|v| Complex::new(v, 0.0));
    let d = model.d.map(|v| Complex::new(v, 0.0));
    Ok(c * x + d)
}

/// Largest singular value of `G1(jw) - G2(jw)` over the given frequencies.
pub fn sweep_error(g1: &StateSpaceModel, g2: &StateSpaceModel, omegas: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &w in omegas {
        let e = frequency_response(g1, w)? - frequency_response(g2, w)?;
        let s = e.singular_values().iter().copied().fold(0.0, f64::max);
        worst = worst.max(s);
    }
    Ok(worst)
}

/// `count` log-spaced frequencies in `[lo, hi]` (rad/s), plus `w = 0`.
pub fn log_frequency_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (l0, l1) = (lo.log10(), hi.log10());
    let mut grid = vec![0.0];
    grid.extend((0..count).map(|k| 10f64.powf(l0 + (l1 - l0) * k as f64 / (count.max(2) - 1) as f64)));
    grid
}

/// Frequency band that brackets the spectrum of `a`.
pub fn spectral_band(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    let eig = crate::statespace::eigenvalues(a)?;
    let mags: Vec<f64> = eig.iter().map(|&(re, im)| (re * re + im * im).sqrt()).collect();
    let lo = mags.iter().copied().fold(f64::INFINITY, f64::min).max(f64::MIN_POSITIVE);
    let hi = mags.iter().copied().fold(0.0, f64::max).max(lo);
    Ok((lo * 1e-2, hi * 1e2))
}

/// Projects a full state onto reduced coordinates of `reduced`.
pub fn project_state(reduced: &ReducedModel, x: &DVector<f64>) -> DVector<f64> {
    &reduced.projection * x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn siso(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> StateSpaceModel {
        let d = DMatrix::zeros(c.nrows(), b.ncols());
        StateSpaceModel::new(a, b, c, d).unwrap()
    }

    #[test]
    fn scalar_gramians() {
        let m = siso(dmatrix![-1.0], dmatrix![1.0], dmatrix![1.0]);
        let (wc, wo) = gramians(&m).unwrap();
        assert_relative_eq!(wc[(0, 0)], 0.5);
        assert_relative_eq!(wo[(0, 0)], 0.5);
    }

    #[test]
    fn zero_b_or_c_gives_zero_gramian() {
        let a = dmatrix![-1.0, 0.5; 0.0, -2.0];
        let m = siso(a.clone(), DMatrix::zeros(2, 1), dmatrix![1.0, 1.0]);
        assert_eq!(gramians(&m).unwrap().0.amax(), 0.0);
        let m = siso(a, dmatrix![1.0; 1.0], DMatrix::zeros(1, 2));
        assert_eq!(gramians(&m).unwrap().1.amax(), 0.0);
    }

    #[test]
    fn scalar_hsv() {
        let m = siso(dmatrix![-1.0], dmatrix![2.0], dmatrix![3.0]);
        let bal = balance(&m).unwrap();
        assert_relative_eq!(bal.hsv[0], 3.0, epsilon = 1e-14);
        assert!(bal.minimality.is_none());
    }

    #[test]
    fn already_balanced_is_a_fixed_point() {
        // Diagonal A with B = C = I: both Gramians equal diag(1 / (2|a_i|)).
        let m = siso(dmatrix![-1.0, 0.0; 0.0, -2.0], DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        let (wc, wo) = gramians(&m).unwrap();
        assert_relative_eq!(wc, wo, epsilon = 1e-15);
        let bal = balance(&m).unwrap();
        let direct: Vec<f64> = {
            let mut v: Vec<f64> = (wc.clone() * &wo).symmetric_eigenvalues().iter().map(|l| l.sqrt()).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        };
        for (s, d) in bal.hsv.iter().zip(&direct) {
            assert_relative_eq!(*s, *d, epsilon = 1e-12);
        }
        let (wcb, wob) = gramians(&bal.balanced).unwrap();
        let diag = DMatrix::from_diagonal(&DVector::from_vec(bal.hsv.clone()));
        assert_relative_eq!(wcb, diag, epsilon = 1e-12);
        assert_relative_eq!(wob, diag, epsilon = 1e-12);
        assert_relative_eq!(bal.hsv[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(bal.hsv[1], 0.25, epsilon = 1e-14);
        // M is the identity up to the sign of each column
        let t = &bal.transform;
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(t[(i, j)].abs(), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn select_order_examples() {
        assert_eq!(select_order(&[5.0, 1.0, 0.1], 0.2).unwrap(), 2);
        assert_eq!(select_order(&[5.0, 1.0, 0.1], 0.0).unwrap(), 3);
        assert_eq!(select_order(&[0.05, 0.01], 0.2).unwrap(), 1);
        assert!(matches!(select_order(&[], 0.2), Err(Error::Argument(_))));
        assert!(matches!(select_order(&[1.0, 2.0], 0.2), Err(Error::Argument(_))));
    }

    #[test]
    fn select_order_keeps_clusters_whole() {
        let hsv = [4.0, 1.0, 1.0 - 1e-12, 0.1];
        assert_eq!(select_order(&hsv, 0.999_999_999_999_5).unwrap(), 3);
    }

    #[test]
    fn select_order_drops_negligible_values() {
        assert_eq!(select_order(&[1.0, 1e-3, 1e-14], 1e-20).unwrap(), 2);
        assert_eq!(select_order(&[1.0, 1e-3, 1e-14], 0.0).unwrap(), 3);
    }

    #[test]
    fn zero_eps_keeps_non_minimal_models_whole() {
        let m = siso(dmatrix![-1.0, 0.0; 0.0, -2.0], dmatrix![1.0; 0.0], dmatrix![1.0, 0.0]);
        let r = reduce(&m, 0.0).unwrap();
        assert_eq!((r.nr, r.bound), (2, 0.0));
        assert_eq!(r.model.a, m.a);
    }

    #[test]
    fn error_bound_examples() {
        assert_relative_eq!(error_bound(&[3.0, 1.0, 0.5], 1).unwrap(), 3.0);
        assert_relative_eq!(error_bound(&[3.0, 1.0, 0.5], 2).unwrap(), 1.0);
        assert_eq!(error_bound(&[3.0, 1.0, 0.5], 3).unwrap(), 0.0);
        assert!(error_bound(&[3.0, 1.0, 0.5], 0).is_err());
        assert!(error_bound(&[3.0, 1.0, 0.5], 4).is_err());
    }

    #[test]
    fn full_order_truncation_is_exact() {
        let m = StateSpaceModel::new(
            dmatrix![-1.0, 0.4, 0.0; 0.1, -2.0, 0.3; 0.0, 0.2, -0.5],
            dmatrix![1.0, 0.0; 0.5, 1.0; 0.0, 2.0],
            dmatrix![1.0, 0.0, 1.0],
            dmatrix![0.0, 0.1],
        )
        .unwrap();
        let r = reduce(&m, 0.0).unwrap();
        assert_eq!(r.nr, 3);
        assert_eq!(r.bound, 0.0);
        assert!((r.dr() - &m.d).amax() < 1e-10);
        let grid = log_frequency_grid(1e-3, 1e3, 50);
        assert!(sweep_error(&m, &r.model, &grid).unwrap() < 1e-8);
    }

    #[test]
    fn truncation_preserves_dc_gain() {
        let m = StateSpaceModel::new(
            dmatrix![-1.0, 0.4, 0.0, 0.0; 0.1, -2.0, 0.3, 0.0; 0.0, 0.2, -5.0, 1.0; 0.0, 0.0, 0.5, -9.0],
            dmatrix![1.0; 0.5; 0.2; 0.1],
            dmatrix![1.0, 0.0, 0.0, 1.0],
            dmatrix![0.0],
        )
        .unwrap();
        let g0 = dc_gain(&m).unwrap();
        for nr in 1..=4 {
            let r = reduce_to_order(&m, nr).unwrap();
            let gr = dc_gain(&r.model).unwrap();
            assert_relative_eq!(gr[(0, 0)], g0[(0, 0)], max_relative = 1e-10);
        }
    }

    #[test]
    fn reduce_rejects_unstable() {
        let m = siso(dmatrix![0.5], dmatrix![1.0], dmatrix![1.0]);
        assert!(matches!(reduce(&m, 0.1), Err(Error::Unstable(_))));
    }

    #[test]
    fn truncate_order_range() {
        let m = siso(dmatrix![-1.0, 0.0; 0.0, -3.0], dmatrix![1.0; 1.0], dmatrix![1.0, 2.0]);
        let bal = balance(&m).unwrap();
        assert!(matches!(truncate(&bal, &m, 0), Err(Error::Argument(_))));
        assert!(matches!(truncate(&bal, &m, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn non_minimal_directions_are_flagged() {
        // Second state is neither excited nor observed.
        let m = siso(dmatrix![-1.0, 0.0; 0.0, -2.0], dmatrix![1.0; 0.0], dmatrix![1.0, 0.0]);
        let bal = balance(&m).unwrap();
        assert_eq!(bal.order(), 1);
        assert_eq!(bal.minimality.as_ref().unwrap().dropped, 1);
        assert_eq!(reduce(&m, 1e-6).unwrap().nr, 1);
    }
}
