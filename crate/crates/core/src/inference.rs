//! Influence-function covariance and efficiency diagnostics.

use crate::error::{Error, Result};
use crate::estimands::{Dataset, Family};
use crate::estimators::{correlation, MomentSet, PbContext};
use crate::numerics::{dot, invert_with_ridge_retry, Mat};
use crate::scalar::Scalar;

/// `n⁻¹ Σ IF_i IF_iᵀ`, symmetrized.
pub fn if_covariance<T: Scalar>(if_rows: &Mat<T>) -> Result<Mat<T>> {
    let (n, d) = (if_rows.rows(), if_rows.cols());
    if n == 0 || d == 0 {
        return Err(Error::EmptyInfluence);
    }
    let mut cov = Mat::zeros(d, d);
    let inv_n = T::one() / T::count(n);
    for i in 0..n {
        let r = if_rows.row(i);
        cov.add_outer(r, r, inv_n);
    }
    Ok(cov.symmetrize())
}

fn check_weight<T: Scalar>(m: &MomentSet<T>, w: &Mat<T>) -> Result<()> {
    let d = m.dim();
    if w.rows() != d || w.cols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: if w.rows() != d { w.rows() } else { w.cols() } });
    }
    Ok(())
}

/// Plug-in asymptotic covariance of `β̂_lab − W(γ̂_lab − γ̂_all)`:
///
/// ```text
/// (1/π)·A·C11·Aᵀ − (1/π − 1)·[sym(2·W·B·C12ᵀ·Aᵀ) − W·B·C22·Bᵀ·Wᵀ]
/// ```
pub fn avar_of_weight<T: Scalar>(m: &MomentSet<T>, w: &Mat<T>) -> Result<Mat<T>> {
    check_weight(m, w)?;
    let at = m.a.transpose();
    let bt = m.b.transpose();
    let lab = (&(&m.a * &m.c11) * &at).scale(T::one() / m.pi_hat);
    let wb = w * &m.b;
    let cross = (&(&wb * &m.c12.transpose()) * &at).scale(T::lit(2.0)).symmetrize();
    let quad = &(&(&wb * &m.c22) * &bt) * &w.transpose();
    let gain = (&cross - &quad).scale(m.odds_unlabeled());
    Ok((&lab - &gain).symmetrize())
}

/// Variance reduction of PPI_a over the labeled-only estimator,
/// `(1/π − 1)·[sym(2·B·C21·Aᵀ) − B·C22·Bᵀ]`. Positive diagonal entries mark
/// coordinates where PPI_a is more efficient.
pub fn delta_avar_ppia<T: Scalar>(m: &MomentSet<T>) -> Mat<T> {
    let bt = m.b.transpose();
    let cross = (&(&m.b * &m.c12.transpose()) * &m.a.transpose()).scale(T::lit(2.0)).symmetrize();
    let quad = &(&m.b * &m.c22) * &bt;
    (&cross - &quad).scale(m.odds_unlabeled()).symmetrize()
}

/// Variance reduction of CC over the labeled-only estimator,
/// `(1/π − 1)·A·C12·C22⁻¹·C12ᵀ·Aᵀ`; positive semi-definite by construction.
pub fn delta_avar_cc<T: Scalar>(m: &MomentSet<T>) -> Result<Mat<T>> {
    let c22_inv = invert_with_ridge_retry(&m.c22)?;
    let ac12 = &m.a * &m.c12;
    let core = &(&ac12 * &c22_inv.symmetrize()) * &ac12.transpose();
    Ok(core.scale(m.odds_unlabeled()).symmetrize())
}

/// Asymptotic covariance of one method together with its gain over the
/// labeled-only estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct AvarReport<T> {
    pub method: String,
    pub avar: Mat<T>,
    pub delta_vs_lab: Mat<T>,
    pub efficient_vs_lab: Vec<bool>,
}

impl<T: Scalar> AvarReport<T> {
    /// Builds the report from a delta matrix (`avar(lab) − avar(method)`).
    pub fn from_delta(method: &str, m: &MomentSet<T>, delta: Mat<T>) -> Result<Self> {
        let lab = avar_of_weight(m, &Mat::zeros(m.dim(), m.dim()))?;
        let avar = (&lab - &delta).symmetrize();
        let efficient_vs_lab = delta.diag().into_iter().map(|v| v > T::zero()).collect();
        Ok(AvarReport { method: method.to_string(), avar, delta_vs_lab: delta, efficient_vs_lab })
    }

    pub fn for_weight(method: &str, m: &MomentSet<T>, w: &Mat<T>) -> Result<Self> {
        let lab = avar_of_weight(m, &Mat::zeros(m.dim(), m.dim()))?;
        let avar = avar_of_weight(m, w)?;
        let delta = (&lab - &avar).symmetrize();
        let efficient_vs_lab = delta.diag().into_iter().map(|v| v > T::zero()).collect();
        Ok(AvarReport { method: method.to_string(), avar, delta_vs_lab: delta, efficient_vs_lab })
    }
}

/// Residual scales and partial correlation of `Y` and `Ŷ` given `X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomoskedasticSummary<T> {
    pub sigma_y: T,
    pub sigma_yhat: T,
    pub rho: T,
    pub threshold: T,
}

impl<T: Scalar> HomoskedasticSummary<T> {
    pub fn new(sigma_y: T, sigma_yhat: T, rho: T) -> Result<Self> {
        if !(sigma_y > T::zero() && sigma_yhat > T::zero()) {
            return Err(Error::ZeroVariance);
        }
        if !(rho.abs() <= T::one() + T::epsilon().sqrt()) {
            return Err(Error::InvalidArgument(format!("correlation {rho} outside [-1, 1]")));
        }
        let rho = rho.max(-T::one()).min(T::one());
        Ok(HomoskedasticSummary { sigma_y, sigma_yhat, rho, threshold: T::lit(0.5) * sigma_yhat / sigma_y })
    }

    /// PPI_a improves on the labeled-only estimator iff `ρ` exceeds the threshold.
    pub fn ppi_a_beats_lab(&self) -> bool {
        self.rho > self.threshold
    }
}

/// Labeled-row residual summary at `β̂_lab` and `γ̂_lab`.
pub fn homoskedastic_summary<T: Scalar>(ctx: &PbContext<'_, T>) -> Result<HomoskedasticSummary<T>> {
    let family = ctx.estimating_function().family();
    if family == Family::Logistic {
        return Err(Error::FamilyUnsupported { method: "homoskedastic_summary", family: family.name() });
    }
    let ds: &Dataset<T> = ctx.dataset();
    let beta = &ctx.beta_lab().theta;
    let gamma = &ctx.gamma_lab().theta;
    let fitted = |x: &[T], coef: &[T]| if family == Family::Mean { coef[0] } else { dot(x, coef) };
    let (ey, eyh): (Vec<T>, Vec<T>) = ds
        .labeled()
        .iter()
        .map(|&i| {
            let x = ds.x_row(i);
            (ds.y(i) - fitted(x, beta), ds.yhat(i) - fitted(x, gamma))
        })
        .unzip();
    let n = T::count(ey.len());
    let sigma_y = (dot(&ey, &ey) / n).sqrt();
    let sigma_yhat = (dot(&eyh, &eyh) / n).sqrt();
    HomoskedasticSummary::new(sigma_y, sigma_yhat, correlation(&ey, &eyh))
}
