//! Estimating functions and Z-estimation.
//!
//! A parameter is defined as the root of `E[φ(outcome, X; θ)] = 0` and is
//! estimated by the root of the sample sum over a chosen subset of rows. The
//! same machinery produces the labeled-only estimate (true outcomes on the
//! labeled rows) and the prediction-based estimates on labeled, unlabeled or
//! all rows.
//!
//! Regularity of `φ` (identifiability, smoothness, moment bounds) is assumed
//! and not checked at runtime.

use crate::error::{Error, Result};
use crate::numerics::{dot, norm2, norm_inf, solve_linear, Mat};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

const MAX_NEWTON_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 20;
const SEPARATION_BOUND: f64 = 30.0;

/// Partially labeled data: outcome `y` (absent on unlabeled rows), prediction
/// `yhat` and a design matrix whose first column is the intercept.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    y: Vec<Option<T>>,
    yhat: Vec<T>,
    x: Mat<T>,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(y: Vec<Option<T>>, yhat: Vec<T>, x: Mat<T>) -> Result<Self> {
        let n = yhat.len();
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: y.len() });
        }
        if x.rows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: x.rows() });
        }
        if x.cols() == 0 {
            return Err(Error::InvalidDataset("design matrix has no columns".into()));
        }
        if let Some(i) = (0..n).find(|&i| x[(i, 0)] != T::one()) {
            return Err(Error::InvalidDataset(format!("row {i}: first design column must be the intercept 1")));
        }
        if !x.is_finite() {
            return Err(Error::InvalidDataset("non-finite covariate".into()));
        }
        if let Some(i) = yhat.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("row {i}: non-finite prediction")));
        }
        if let Some(i) = y.iter().position(|v| v.is_some_and(|v| !v.is_finite())) {
            return Err(Error::InvalidDataset(format!("row {i}: non-finite outcome")));
        }
        let (labeled, unlabeled): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| y[i].is_some());
        if labeled.len() < x.cols() + 1 {
            return Err(Error::InvalidDataset(format!(
                "{} labeled rows; at least {} required",
                labeled.len(),
                x.cols() + 1
            )));
        }
        Ok(Dataset { y, yhat, x, labeled, unlabeled })
    }

    /// Builds a dataset whose first `y_labeled.len()` rows are labeled.
    pub fn from_parts(y_labeled: &[T], yhat: Vec<T>, x: Mat<T>) -> Result<Self> {
        let y = (0..yhat.len()).map(|i| y_labeled.get(i).copied()).collect();
        Self::new(y, yhat, x)
    }

    /// Intercept-only dataset for the mean family.
    pub fn intercept_only(y_labeled: &[T], yhat: Vec<T>) -> Result<Self> {
        let n = yhat.len();
        let x = Mat::from_row_major(n, 1, vec![T::one(); n])?;
        Self::from_parts(y_labeled, yhat, x)
    }

    pub fn n(&self) -> usize {
        self.yhat.len()
    }

    pub fn n_lab(&self) -> usize {
        self.labeled.len()
    }

    pub fn n_unlab(&self) -> usize {
        self.unlabeled.len()
    }

    /// `n_lab / n`; the labeling fraction is always estimated, never supplied.
    pub fn pi_hat(&self) -> T {
        T::count(self.n_lab()) / T::count(self.n())
    }

    pub fn x(&self) -> &Mat<T> {
        &self.x
    }

    pub fn x_row(&self, i: usize) -> &[T] {
        self.x.row(i)
    }

    pub fn yhat(&self, i: usize) -> T {
        self.yhat[i]
    }

    pub fn predictions(&self) -> &[T] {
        &self.yhat
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.y[i].is_some()
    }

    /// True outcome of a labeled row.
    ///
    /// # Panics
    /// Panics if row `i` is unlabeled: unlabeled outcome slots are never read.
    pub fn y(&self, i: usize) -> T {
        self.y[i].expect("attempted to read the outcome of an unlabeled row")
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    fn indices(&self, rows: RowSet) -> Vec<usize> {
        match rows {
            RowSet::Labeled => self.labeled.clone(),
            RowSet::Unlabeled => self.unlabeled.clone(),
            RowSet::All => (0..self.n()).collect(),
        }
    }

    /// `(outcome, x)` pairs for a row subset.
    pub fn rows(&self, rows: RowSet, outcome: Outcome) -> Vec<(T, &[T])> {
        assert!(
            !(outcome == Outcome::Observed && rows != RowSet::Labeled),
            "observed outcomes exist only on labeled rows"
        );
        self.indices(rows)
            .into_iter()
            .map(|i| {
                let v = match outcome {
                    Outcome::Observed => self.y(i),
                    Outcome::Predicted => self.yhat[i],
                };
                (v, self.x.row(i))
            })
            .collect()
    }

    /// Z-estimate on a row subset, tagged with the subset used.
    pub fn solve(&self, ef: &EstimatingFunction, rows: RowSet, outcome: Outcome) -> Result<ZEstimate<T>> {
        let mut est = solve_z(ef, &self.rows(rows, outcome))?;
        est.subset = Some(Subset { rows, outcome });
        Ok(est)
    }

    /// Checks family-specific constraints (binary outcomes for logistic).
    pub fn check_family(&self, family: Family) -> Result<()> {
        if family == Family::Logistic {
            if let Some(&i) = self.labeled.iter().find(|&&i| {
                let y = self.y(i);
                y != T::zero() && y != T::one()
            }) {
                return Err(Error::InvalidDataset(format!("row {i}: logistic outcome must be 0 or 1")));
            }
            if let Some(i) = self.yhat.iter().position(|&p| p < T::zero() || p > T::one()) {
                return Err(Error::InvalidDataset(format!("row {i}: logistic prediction must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowSet {
    Labeled,
    Unlabeled,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// The gold-standard outcome `Y`.
    Observed,
    /// The prediction `Ŷ`.
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subset {
    pub rows: RowSet,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mean,
    Linear,
    Logistic,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Mean => "mean",
            Family::Linear => "linear",
            Family::Logistic => "logistic",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Family::Mean),
            "linear" => Ok(Family::Linear),
            "logistic" => Ok(Family::Logistic),
            other => Err(Error::InvalidArgument(format!("unknown family '{other}'"))),
        }
    }
}

/// Estimating function `φ(y, x; θ)` of one of the supported families.
///
/// * mean: `y − θ`
/// * linear: `x (y − xᵀθ)`
/// * logistic: `x (y − expit(xᵀθ))`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimatingFunction {
    family: Family,
    dim: usize,
}

impl EstimatingFunction {
    /// `covariates` counts the design columns including the intercept; it is
    /// ignored for the mean family.
    pub fn new(family: Family, covariates: usize) -> Self {
        let dim = if family == Family::Mean { 1 } else { covariates };
        EstimatingFunction { family, dim }
    }

    /// Binds the family to a dataset after validating family constraints.
    pub fn for_dataset<T: Scalar>(family: Family, ds: &Dataset<T>) -> Result<Self> {
        ds.check_family(family)?;
        Ok(Self::new(family, ds.x().cols()))
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check<T>(&self, x: &[T], theta: &[T]) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: theta.len() });
        }
        if self.family != Family::Mean && x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        Ok(())
    }

    pub fn phi<T: Scalar>(&self, y: T, x: &[T], theta: &[T]) -> Result<Vec<T>> {
        self.check(x, theta)?;
        let mut out = vec![T::zero(); self.dim];
        self.phi_into(y, x, theta, &mut out);
        Ok(out)
    }

    /// Writes `φ(y, x; θ)` into `out` (length `dim`).
    pub fn phi_into<T: Scalar>(&self, y: T, x: &[T], theta: &[T], out: &mut [T]) {
        match self.family {
            Family::Mean => out[0] = y - theta[0],
            Family::Linear => {
                let r = y - dot(x, theta);
                out.iter_mut().zip(x).for_each(|(o, &xi)| *o = xi * r);
            }
            Family::Logistic => {
                let r = y - expit(dot(x, theta));
                out.iter_mut().zip(x).for_each(|(o, &xi)| *o = xi * r);
            }
        }
    }

    pub fn jacobian<T: Scalar>(&self, y: T, x: &[T], theta: &[T]) -> Result<Mat<T>> {
        self.check(x, theta)?;
        let mut acc = Mat::zeros(self.dim, self.dim);
        self.jacobian_add_into(y, x, theta, T::one(), &mut acc);
        Ok(acc)
    }

    /// `acc += scale · ∂φ(y, x; θ)/∂θ`.
    pub fn jacobian_add_into<T: Scalar>(&self, _y: T, x: &[T], theta: &[T], scale: T, acc: &mut Mat<T>) {
        match self.family {
            Family::Mean => acc[(0, 0)] -= scale,
            Family::Linear => acc.add_outer(x, x, -scale),
            Family::Logistic => {
                let p = expit(dot(x, theta));
                acc.add_outer(x, x, -scale * p * (T::one() - p));
            }
        }
    }

    /// Mean of `φ` over the rows.
    pub fn mean_phi<T: Scalar>(&self, rows: &[(T, &[T])], theta: &[T]) -> Vec<T> {
        let mut sum = vec![T::zero(); self.dim];
        let mut buf = vec![T::zero(); self.dim];
        for &(y, x) in rows {
            self.phi_into(y, x, theta, &mut buf);
            sum.iter_mut().zip(&buf).for_each(|(s, &b)| *s += b);
        }
        let n = T::count(rows.len());
        sum.iter_mut().for_each(|s| *s /= n);
        sum
    }

    /// Mean of `∂φ/∂θ` over the rows.
    pub fn mean_jacobian<T: Scalar>(&self, rows: &[(T, &[T])], theta: &[T]) -> Mat<T> {
        let mut acc = Mat::zeros(self.dim, self.dim);
        let w = T::one() / T::count(rows.len());
        for &(y, x) in rows {
            self.jacobian_add_into(y, x, theta, w, &mut acc);
        }
        acc
    }
}

pub fn expit<T: Scalar>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

/// Root of the summed estimating equation over a row subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ZEstimate<T> {
    pub theta: Vec<T>,
    pub subset: Option<Subset>,
    pub converged: bool,
    pub iterations: usize,
    /// `‖n⁻¹Σφ‖₂` at the start and after every accepted Newton step (logistic only).
    pub residual_norms: Vec<T>,
}

/// Solves `Σ φ(outcome_i, x_i; θ) = 0`.
///
/// The mean family returns the sample mean and the linear family the
/// least-squares solution of the normal equations; the logistic family runs
/// Newton's method from zero with step halving on `‖n⁻¹Σφ‖₂`.
pub fn solve_z<T: Scalar>(ef: &EstimatingFunction, rows: &[(T, &[T])]) -> Result<ZEstimate<T>> {
    if rows.len() < ef.dim {
        return Err(Error::InvalidDataset(format!("{} rows for a {}-dimensional parameter", rows.len(), ef.dim)));
    }
    if ef.family != Family::Mean {
        if let Some((_, x)) = rows.iter().find(|(_, x)| x.len() != ef.dim) {
            return Err(Error::DimensionMismatch { expected: ef.dim, found: x.len() });
        }
    }
    match ef.family {
        Family::Mean => {
            let mean = rows.iter().map(|r| r.0).sum::<T>() / T::count(rows.len());
            Ok(ZEstimate { theta: vec![mean], subset: None, converged: true, iterations: 1, residual_norms: Vec::new() })
        }
        Family::Linear => solve_linear_family(ef, rows),
        Family::Logistic => solve_logistic(ef, rows),
    }
}

fn solve_linear_family<T: Scalar>(ef: &EstimatingFunction, rows: &[(T, &[T])]) -> Result<ZEstimate<T>> {
    let d = ef.dim;
    let mut gram = Mat::zeros(d, d);
    let mut xty = vec![T::zero(); d];
    for &(y, x) in rows {
        gram.add_outer(x, x, T::one());
        xty.iter_mut().zip(x).for_each(|(s, &xi)| *s += xi * y);
    }
    let mut theta = solve_linear(&gram, &xty)?;
    // one refinement pass on the estimating equation itself
    let n = T::count(rows.len());
    let g = ef.mean_phi(rows, &theta);
    let rhs: Vec<T> = g.iter().map(|&v| v * n).collect();
    let delta = solve_linear(&gram, &rhs)?;
    theta.iter_mut().zip(delta).for_each(|(t, dlt)| *t += dlt);
    let converged = norm_inf(&ef.mean_phi(rows, &theta)) <= T::tolerance(1e-8);
    Ok(ZEstimate { theta, subset: None, converged, iterations: 2, residual_norms: Vec::new() })
}

fn max_abs_linear_predictor<T: Scalar>(rows: &[(T, &[T])], theta: &[T]) -> T {
    rows.iter().fold(T::zero(), |m, (_, x)| m.max(dot(x, theta).abs()))
}

fn solve_logistic<T: Scalar>(ef: &EstimatingFunction, rows: &[(T, &[T])]) -> Result<ZEstimate<T>> {
    let first = rows[0].0;
    if rows.iter().all(|r| r.0 == first) {
        return Err(Error::SeparationDetected);
    }
    let tol = T::tolerance(1e-10);
    let step_tol = T::tolerance(1e-12);
    let bound = T::lit(SEPARATION_BOUND);
    let mut theta = vec![T::zero(); ef.dim];
    let mut g = ef.mean_phi(rows, &theta);
    let mut gnorm = norm2(&g);
    let mut history = vec![gnorm];
    for iter in 1..=MAX_NEWTON_ITERATIONS {
        if norm_inf(&g) <= tol {
            return Ok(ZEstimate { theta, subset: None, converged: true, iterations: iter - 1, residual_norms: history });
        }
        let jac = ef.mean_jacobian(rows, &theta);
        let neg_g: Vec<T> = g.iter().map(|&v| -v).collect();
        let dir = solve_linear(&jac, &neg_g)?;
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<T> = theta.iter().zip(&dir).map(|(&a, &b)| a + t * b).collect();
            let cg = ef.mean_phi(rows, &cand);
            let cn = norm2(&cg);
            if cn < gnorm {
                accepted = Some((cand, cg, cn));
                break;
            }
            t *= T::lit(0.5);
        }
        let step_norm = norm2(&dir) * t;
        match accepted {
            Some((cand, cg, cn)) => {
                theta = cand;
                g = cg;
                gnorm = cn;
                history.push(cn);
                if max_abs_linear_predictor(rows, &theta) > bound {
                    return Err(Error::SeparationDetected);
                }
                if step_norm <= step_tol {
                    return Ok(ZEstimate { theta, subset: None, converged: true, iterations: iter, residual_norms: history });
                }
            }
            None => {
                // no decrease possible: the iterate sits at machine precision
                if norm_inf(&g) <= T::tolerance(1e-8) {
                    return Ok(ZEstimate { theta, subset: None, converged: true, iterations: iter, residual_norms: history });
                }
                return Err(Error::DidNotConverge { iterations: iter });
            }
        }
    }
    Err(Error::DidNotConverge { iterations: MAX_NEWTON_ITERATIONS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_jacobian;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn phi_examples() {
        let mean = EstimatingFunction::new(Family::Mean, 1);
        assert_eq!(mean.phi(3.0, &[1.0], &[3.0]).unwrap(), vec![0.0]);
        let lin = EstimatingFunction::new(Family::Linear, 2);
        assert_eq!(lin.phi(5.0, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        let logit = EstimatingFunction::new(Family::Logistic, 1);
        assert_eq!(logit.phi(1.0, &[1.0], &[0.0]).unwrap(), vec![0.5]);
        assert!(matches!(lin.phi(1.0, &[1.0], &[0.0, 0.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(lin.phi(1.0, &[1.0, 2.0], &[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn jacobian_examples() {
        let mean = EstimatingFunction::new(Family::Mean, 3);
        assert_eq!(mean.jacobian(7.0, &[1.0, 2.0, 3.0], &[0.1]).unwrap()[(0, 0)], -1.0);
        let lin = EstimatingFunction::new(Family::Linear, 2);
        let j = lin.jacobian(0.0, &[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(j.to_rows(), vec![vec![-1.0, -2.0], vec![-2.0, -4.0]]);
        let logit = EstimatingFunction::new(Family::Logistic, 1);
        assert_eq!(logit.jacobian(1.0, &[1.0], &[0.0]).unwrap()[(0, 0)], -0.25);
    }

    #[test]
    fn solve_z_examples() {
        let mean = EstimatingFunction::new(Family::Mean, 1);
        let x = [1.0];
        let z = solve_z(&mean, &[(1.0, &x[..]), (3.0, &x[..])]).unwrap();
        assert_eq!(z.theta, vec![2.0]);

        let lin = EstimatingFunction::new(Family::Linear, 2);
        let (a, b) = ([1.0, 0.0], [1.0, 1.0]);
        let z = solve_z(&lin, &[(0.0, &a[..]), (1.0, &b[..])]).unwrap();
        assert!(close(z.theta[0], 0.0, 1e-14) && close(z.theta[1], 1.0, 1e-14));
        assert!(z.converged);

        let logit = EstimatingFunction::new(Family::Logistic, 1);
        let rows: Vec<(f64, &[f64])> = (0..10).map(|i| ((i % 2) as f64, &x[..])).collect();
        let z = solve_z(&logit, &rows).unwrap();
        assert!(z.theta[0].abs() < 1e-12);
    }

    #[test]
    fn logistic_matches_logit_of_rate() {
        let logit = EstimatingFunction::new(Family::Logistic, 1);
        let x = [1.0];
        let rows: Vec<(f64, &[f64])> = (0..10).map(|i| (if i < 7 { 1.0 } else { 0.0 }, &x[..])).collect();
        let z = solve_z(&logit, &rows).unwrap();
        assert!(close(z.theta[0], (0.7f64 / 0.3).ln(), 1e-10));
    }

    #[test]
    fn logistic_separation_is_reported() {
        let logit = EstimatingFunction::new(Family::Logistic, 2);
        let xs: Vec<[f64; 2]> = (0..8).map(|i| [1.0, i as f64 - 3.5]).collect();
        let rows: Vec<(f64, &[f64])> = xs.iter().map(|x| (if x[1] > 0.0 { 1.0 } else { 0.0 }, &x[..])).collect();
        assert_eq!(solve_z(&logit, &rows), Err(Error::SeparationDetected));
        let same: Vec<(f64, &[f64])> = xs.iter().map(|x| (1.0, &x[..])).collect();
        assert_eq!(solve_z(&logit, &same), Err(Error::SeparationDetected));
    }

    #[test]
    fn too_few_rows() {
        let lin = EstimatingFunction::new(Family::Linear, 3);
        let x = [1.0, 0.0, 0.0];
        assert!(matches!(solve_z(&lin, &[(1.0, &x[..])]), Err(Error::InvalidDataset(_))));
    }

    #[test]
    fn dataset_validation() {
        let x = Mat::from_f64_rows(&[&[1.0, 0.0], &[1.0, 1.0], &[1.0, 2.0], &[1.0, 3.0]]).unwrap();
        let ok = Dataset::new(vec![Some(1.0), None, Some(2.0), Some(0.0)], vec![0.0; 4], x.clone()).unwrap();
        assert_eq!((ok.n(), ok.n_lab(), ok.n_unlab()), (4, 3, 1));
        assert_eq!(ok.pi_hat(), 0.75);
        assert_eq!(ok.unlabeled(), &[1]);
        // too few labeled rows for 2 columns
        assert!(Dataset::new(vec![Some(1.0), None, None, Some(0.0)], vec![0.0; 4], x.clone()).is_err());
        let bad_intercept = Mat::from_f64_rows(&[&[2.0], &[1.0], &[1.0]]).unwrap();
        assert!(Dataset::new(vec![Some(1.0); 3], vec![0.0; 3], bad_intercept).is_err());
        assert!(Dataset::new(vec![Some(1.0), Some(1.0), Some(f64::NAN), None], vec![0.0; 4], x.clone()).is_err());
        let d = Dataset::new(vec![Some(0.5), None, Some(1.0), Some(0.0)], vec![0.0; 4], x).unwrap();
        assert!(d.check_family(Family::Logistic).is_err());
        assert!(d.check_family(Family::Linear).is_ok());
    }

    #[test]
    #[should_panic(expected = "unlabeled")]
    fn unlabeled_outcomes_are_never_read() {
        let d = Dataset::intercept_only(&[1.0, 2.0], vec![0.0, 0.0, 0.0]).unwrap();
        let _ = d.y(2);
    }

    fn linear_rows() -> impl Strategy<Value = Vec<(f64, [f64; 3])>> {
        proptest::collection::vec((-3.0f64..3.0, -2.0f64..2.0, -2.0f64..2.0), 8..40)
            .prop_map(|v| v.into_iter().map(|(e, a, b)| (0.5 + a - 2.0 * b + e, [1.0, a, b])).collect())
    }

    fn logistic_rows() -> impl Strategy<Value = Vec<(f64, [f64; 2])>> {
        proptest::collection::vec((0.0f64..1.0, -2.0f64..2.0), 30..80).prop_map(|v| {
            let mut rows: Vec<(f64, [f64; 2])> =
                v.into_iter().map(|(u, a)| (if u < expit(0.3 + 0.8 * a) { 1.0 } else { 0.0 }, [1.0, a])).collect();
            // guarantee overlap so the MLE exists
            rows.push((1.0, [1.0, -1.5]));
            rows.push((0.0, [1.0, 1.5]));
            rows.push((1.0, [1.0, 0.0]));
            rows.push((0.0, [1.0, 0.0]));
            rows
        })
    }

    proptest! {
        #[test]
        fn analytic_jacobian_matches_finite_differences(
            family in prop_oneof![Just(Family::Mean), Just(Family::Linear), Just(Family::Logistic)],
            y in -2.0f64..2.0, x1 in -2.0f64..2.0, x2 in -2.0f64..2.0,
            t in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let ef = EstimatingFunction::new(family, 3);
            let x = [1.0, x1, x2];
            let theta = &t[..ef.dim()];
            let analytic = ef.jacobian(y, &x, theta).unwrap();
            let fd = finite_diff_jacobian(|th: &[f64]| ef.phi(y, &x, th).unwrap(), theta, 1e-6).unwrap();
            for i in 0..ef.dim() {
                for j in 0..ef.dim() {
                    let a = analytic[(i, j)];
                    prop_assert!((a - fd[(i, j)]).abs() <= 1e-4 * (1.0 + a.abs()));
                }
            }
        }

        #[test]
        fn linear_solution_is_least_squares_and_permutation_invariant(rows in linear_rows(), seed in 0u64..1000) {
            let ef = EstimatingFunction::new(Family::Linear, 3);
            let pairs: Vec<(f64, &[f64])> = rows.iter().map(|(y, x)| (*y, &x[..])).collect();
            let z = solve_z(&ef, &pairs).unwrap();
            prop_assert!(norm_inf(&ef.mean_phi(&pairs, &z.theta)) <= 1e-8);
            // closed form through an independent route: normal equations by explicit inverse
            let mut g = Mat::zeros(3, 3);
            let mut xy = vec![0.0; 3];
            for (y, x) in &rows {
                g.add_outer(x, x, 1.0);
                for k in 0..3 { xy[k] += x[k] * y; }
            }
            let ls = g.inverse().unwrap().mul_vec(&xy);
            for k in 0..3 { prop_assert!((ls[k] - z.theta[k]).abs() <= 1e-10 * (1.0 + ls[k].abs())); }
            let mut perm = pairs.clone();
            let len = perm.len();
            perm.rotate_left((seed as usize) % len);
            perm.reverse();
            let zp = solve_z(&ef, &perm).unwrap();
            for k in 0..3 { prop_assert!((zp.theta[k] - z.theta[k]).abs() <= 1e-10 * (1.0 + z.theta[k].abs())); }
        }

        #[test]
        fn logistic_root_and_permutation_invariance(rows in logistic_rows()) {
            let ef = EstimatingFunction::new(Family::Logistic, 2);
            let pairs: Vec<(f64, &[f64])> = rows.iter().map(|(y, x)| (*y, &x[..])).collect();
            let z = solve_z(&ef, &pairs).unwrap();
            prop_assert!(z.converged);
            prop_assert!(norm_inf(&ef.mean_phi(&pairs, &z.theta)) <= 1e-8);
            prop_assert!(z.residual_norms.windows(2).all(|w| w[1] < w[0]));
            let mut rev = pairs.clone();
            rev.reverse();
            let zr = solve_z(&ef, &rev).unwrap();
            for k in 0..2 { prop_assert!((zr.theta[k] - z.theta[k]).abs() <= 1e-8); }
        }
    }
}
