//! Prediction-based point estimators, their weights and per-row influence
//! functions.
//!
//! Every estimator has the augmentation form
//!
//! ```text
//! β̂ = β̂_lab − W (γ̂_lab − γ̂_ref)
//! ```
//!
//! where `γ̂_ref` is the prediction-based estimate on all rows (PPI_a, CC,
//! PPI++, PSPA, SUR) or on the unlabeled rows only (PPI, POP), and `W` is the
//! method's weight. Point estimates, weights and influence functions are all
//! assembled from one [`PbContext`] per dataset so a method grid shares the
//! three Z-solves and the moment estimates.

use crate::error::{Error, Result};
use crate::estimands::{Dataset, EstimatingFunction, Family, Outcome, RowSet, ZEstimate};
use crate::inference::if_covariance;
use crate::numerics::{dot, invert_with_ridge_retry, Mat};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::fmt;
use std::str::FromStr;

/// Denominators below this are treated as zero when forming PPI++/PSPA weights.
const ZERO_DENOMINATOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "lab")]
    Lab,
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "ppi")]
    Ppi,
    #[serde(rename = "ppi_a")]
    PpiA,
    #[serde(rename = "cc")]
    Cc,
    #[serde(rename = "ppipp")]
    PpiPlusPlus,
    #[serde(rename = "pspa")]
    Pspa,
    #[serde(rename = "sur")]
    Sur,
    #[serde(rename = "pop")]
    Pop,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Lab,
        Method::Naive,
        Method::Ppi,
        Method::PpiA,
        Method::Cc,
        Method::PpiPlusPlus,
        Method::Pspa,
        Method::Sur,
        Method::Pop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lab => "lab",
            Method::Naive => "naive",
            Method::Ppi => "ppi",
            Method::PpiA => "ppi_a",
            Method::Cc => "cc",
            Method::PpiPlusPlus => "ppipp",
            Method::Pspa => "pspa",
            Method::Sur => "sur",
            Method::Pop => "pop",
        }
    }

    /// SUR and POP are defined for linear regression only.
    pub fn supports(self, family: Family) -> bool {
        !matches!(self, Method::Sur | Method::Pop) || family == Family::Linear
    }

    /// Methods that augment with the unlabeled-only estimate.
    pub fn needs_unlabeled(self) -> bool {
        matches!(self, Method::Ppi | Method::Pop)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Plug-in moments of the labeled and prediction-based estimating functions.
///
/// `a` and `b` are the inverses of the mean Jacobians of `φ(Y, X; ·)` at
/// `β̂_lab` (labeled rows) and of `φ(Ŷ, X; ·)` at `γ̂_all` (all rows).
/// `c11` and `c12` are labeled-row second moments; `c22` estimates
/// `Var[φ_Ŷ]` as chosen by [`MomentPlugin`]. The residual matrices are
/// populated for the linear family.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet<T> {
    pub a: Mat<T>,
    pub b: Mat<T>,
    pub c11: Mat<T>,
    pub c12: Mat<T>,
    pub c22: Mat<T>,
    pub pi_hat: T,
    pub sigma_y_yhat: Option<Mat<T>>,
    pub sigma_yhat_yhat: Option<Mat<T>>,
}

impl<T: Scalar> MomentSet<T> {
    pub fn new(a: Mat<T>, b: Mat<T>, c11: Mat<T>, c12: Mat<T>, c22: Mat<T>, pi_hat: T) -> Result<Self> {
        let d = a.rows();
        for m in [&a, &b, &c11, &c12, &c22] {
            if m.rows() != d || m.cols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: m.rows().max(m.cols()) });
            }
        }
        if !(pi_hat > T::zero() && pi_hat <= T::one()) {
            return Err(Error::InvalidArgument("pi_hat must lie in (0, 1]".into()));
        }
        Ok(MomentSet { a, b, c11, c12, c22, pi_hat, sigma_y_yhat: None, sigma_yhat_yhat: None })
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    /// `1/π̂ − 1`.
    pub fn odds_unlabeled(&self) -> T {
        T::one() / self.pi_hat - T::one()
    }
}

/// Rows and root used for the prediction-side second moments `C12` and `C22`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentPlugin {
    /// `C12` and `C22` both from labeled rows with `φ_Ŷ` at `γ̂_all`, `C22`
    /// centered at its labeled mean, so that `C12·C22⁻¹` is a within-sample
    /// regression coefficient.
    #[default]
    Labeled,
    /// `C12` from labeled rows and `C22` from all rows, with `φ_Ŷ` at `γ̂_all`.
    Pooled,
}

/// Computes the plug-in [`MomentSet`] from converged labeled and all-row fits.
pub fn estimate_moments<T: Scalar>(
    ds: &Dataset<T>,
    ef: &EstimatingFunction,
    beta_lab: &[T],
    gamma_all: &[T],
) -> Result<MomentSet<T>> {
    estimate_moments_with(ds, ef, beta_lab, gamma_all, MomentPlugin::default())
}

pub fn estimate_moments_with<T: Scalar>(
    ds: &Dataset<T>,
    ef: &EstimatingFunction,
    beta_lab: &[T],
    gamma_all: &[T],
    plugin: MomentPlugin,
) -> Result<MomentSet<T>> {
    let d = ef.dim();
    for v in [beta_lab, gamma_all] {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: v.len() });
        }
    }
    let inv_lab = T::one() / T::count(ds.n_lab());
    let inv_n = T::one() / T::count(ds.n());
    let linear = ef.family() == Family::Linear;
    let fitted = |x: &[T], coef: &[T]| if ef.family() == Family::Mean { coef[0] } else { dot(x, coef) };
    let mut jac_y = Mat::zeros(d, d);
    let mut jac_yhat = Mat::zeros(d, d);
    let (mut c11, mut c12, mut c22) = (Mat::zeros(d, d), Mat::zeros(d, d), Mat::zeros(d, d));
    let (mut s_yyh, mut s_yhyh) = (Mat::zeros(d, d), Mat::zeros(d, d));
    let mut py = vec![T::zero(); d];
    let mut ph = vec![T::zero(); d];
    let mut ph_mean = vec![T::zero(); d];
    let mut eyh_x_mean = vec![T::zero(); d];
    for &i in ds.labeled() {
        let (x, y, yh) = (ds.x_row(i), ds.y(i), ds.yhat(i));
        ef.jacobian_add_into(y, x, beta_lab, inv_lab, &mut jac_y);
        ef.phi_into(y, x, beta_lab, &mut py);
        ef.phi_into(yh, x, gamma_all, &mut ph);
        c11.add_outer(&py, &py, inv_lab);
        c12.add_outer(&py, &ph, inv_lab);
        if plugin == MomentPlugin::Labeled {
            c22.add_outer(&ph, &ph, inv_lab);
            ph_mean.iter_mut().zip(&ph).for_each(|(m, &v)| *m += v * inv_lab);
        }
        if linear {
            let ey = y - fitted(x, beta_lab);
            let eyh = yh - fitted(x, gamma_all);
            s_yyh.add_outer(x, x, ey * eyh * inv_lab);
            if plugin == MomentPlugin::Labeled {
                s_yhyh.add_outer(x, x, eyh * eyh * inv_lab);
                eyh_x_mean.iter_mut().zip(x).for_each(|(m, &v)| *m += v * eyh * inv_lab);
            }
        }
    }
    for i in 0..ds.n() {
        let (x, yh) = (ds.x_row(i), ds.yhat(i));
        ef.jacobian_add_into(yh, x, gamma_all, inv_n, &mut jac_yhat);
        if plugin == MomentPlugin::Pooled {
            ef.phi_into(yh, x, gamma_all, &mut ph);
            c22.add_outer(&ph, &ph, inv_n);
            if linear {
                let eyh = yh - fitted(x, gamma_all);
                s_yhyh.add_outer(x, x, eyh * eyh * inv_n);
            }
        }
    }
    if plugin == MomentPlugin::Labeled {
        c22.add_outer(&ph_mean, &ph_mean, -T::one());
        if linear {
            s_yhyh.add_outer(&eyh_x_mean, &eyh_x_mean, -T::one());
        }
    }
    let a = invert_with_ridge_retry(&jac_y)?;
    let b = invert_with_ridge_retry(&jac_yhat)?;
    let mut m = MomentSet::new(a, b, c11.symmetrize(), c12, c22.symmetrize(), ds.pi_hat())?;
    if linear {
        m.sigma_y_yhat = Some(s_yyh);
        m.sigma_yhat_yhat = Some(s_yhyh.symmetrize());
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    /// Unit weight of PPI and PPI_a.
    Identity,
    Cc,
    Ppipp,
    Pspa,
    Sur,
    Pop,
}

/// Weight matrix multiplying the augmentation term.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec<T> {
    pub kind: WeightKind,
    pub w: Mat<T>,
}

/// `W^CC = A·C12·C22⁻¹·B⁻¹`.
pub fn cc_weight<T: Scalar>(m: &MomentSet<T>) -> Result<WeightSpec<T>> {
    let c22_inv = invert_with_ridge_retry(&m.c22)?;
    let b_inv = invert_with_ridge_retry(&m.b)?;
    let w = &(&(&m.a * &m.c12) * &c22_inv) * &b_inv;
    Ok(WeightSpec { kind: WeightKind::Cc, w })
}

/// `A·C12·Bᵀ` (symmetrized) and `B·C22·Bᵀ`: the cross and quadratic terms of
/// the plug-in variance of `β̂_lab − W(γ̂_lab − γ̂_all)`.
fn cross_and_quadratic<T: Scalar>(m: &MomentSet<T>) -> (Mat<T>, Mat<T>) {
    let bt = m.b.transpose();
    let cross = (&(&m.a * &m.c12) * &bt).symmetrize();
    let quad = &(&m.b * &m.c22) * &bt;
    (cross, quad)
}

/// PPI++ weight `λ̂·I` with `λ̂` minimizing the trace of the plug-in
/// variance over scalar multiples of the identity, clipped to `[0, 1]`.
pub fn ppipp_weight<T: Scalar>(m: &MomentSet<T>) -> WeightSpec<T> {
    let (cross, quad) = cross_and_quadratic(m);
    let den = quad.trace();
    let lambda =
        if den.abs() < T::lit(ZERO_DENOMINATOR) { T::zero() } else { clip_unit(cross.trace() / den) };
    WeightSpec { kind: WeightKind::Ppipp, w: Mat::identity(m.dim()).scale(lambda) }
}

/// PSPA weight `diag(v̂)` with each entry minimizing the matching diagonal
/// entry of the plug-in variance, clipped to `[0, 1]`.
pub fn pspa_weight<T: Scalar>(m: &MomentSet<T>) -> WeightSpec<T> {
    let (cross, quad) = cross_and_quadratic(m);
    let v: Vec<T> = (0..m.dim())
        .map(|j| {
            let den = quad[(j, j)];
            if den.abs() < T::lit(ZERO_DENOMINATOR) {
                T::zero()
            } else {
                clip_unit(cross[(j, j)] / den)
            }
        })
        .collect();
    WeightSpec { kind: WeightKind::Pspa, w: Mat::from_diag(&v) }
}

fn clip_unit<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

/// Labeled residuals `y − xᵀβ̂_lab` and `ŷ − xᵀγ̂_lab`.
fn labeled_residuals<T: Scalar>(ds: &Dataset<T>, beta_lab: &[T], gamma_lab: &[T]) -> (Vec<T>, Vec<T>) {
    ds.labeled()
        .iter()
        .map(|&i| {
            let x = ds.x_row(i);
            (ds.y(i) - dot(x, beta_lab), ds.yhat(i) - dot(x, gamma_lab))
        })
        .unzip()
}

/// SUR weight: ratio of the labeled residual cross-product to the residual
/// sum of squares of the prediction, times the identity.
pub fn sur_weight<T: Scalar>(
    ds: &Dataset<T>,
    ef: &EstimatingFunction,
    beta_lab: &[T],
    gamma_lab: &[T],
) -> Result<WeightSpec<T>> {
    if ef.family() != Family::Linear {
        return Err(Error::FamilyUnsupported { method: "sur", family: ef.family().name() });
    }
    let (ey, eyh) = labeled_residuals(ds, beta_lab, gamma_lab);
    let num = dot(&ey, &eyh);
    let den = dot(&eyh, &eyh);
    let ratio = if den.abs() < T::lit(ZERO_DENOMINATOR) { T::zero() } else { num / den };
    Ok(WeightSpec { kind: WeightKind::Sur, w: Mat::identity(ef.dim()).scale(ratio) })
}

/// POP-GWAS weight `(n_unlab/n)·corr(ε̂_Y, ε̂_Ŷ)` from labeled residuals.
pub fn pop_weight<T: Scalar>(
    ds: &Dataset<T>,
    ef: &EstimatingFunction,
    beta_lab: &[T],
    gamma_lab: &[T],
) -> Result<WeightSpec<T>> {
    if ef.family() != Family::Linear {
        return Err(Error::FamilyUnsupported { method: "pop", family: ef.family().name() });
    }
    let (ey, eyh) = labeled_residuals(ds, beta_lab, gamma_lab);
    let corr = correlation(&ey, &eyh);
    let frac = T::count(ds.n_unlab()) / T::count(ds.n());
    Ok(WeightSpec { kind: WeightKind::Pop, w: Mat::identity(ef.dim()).scale(frac * corr) })
}

/// Sample Pearson correlation; zero when either side has no variation.
pub(crate) fn correlation<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = T::count(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let den = (saa * sbb).sqrt();
    if den > T::zero() {
        sab / den
    } else {
        T::zero()
    }
}

/// Control-variate estimate of `E[Y]` using `Z` with known mean `mu_z`.
/// Returns the estimate `n⁻¹Σ[y_i − λ̂(z_i − μ_Z)]` and `λ̂ = Ĉov(Y,Z)/V̂ar(Z)`.
pub fn control_variate_mean<T: Scalar>(y: &[T], z: &[T], mu_z: T) -> Result<(T, T)> {
    if y.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), found: z.len() });
    }
    if y.len() < 2 {
        return Err(Error::InvalidArgument("control variate needs at least two draws".into()));
    }
    let n = T::count(y.len());
    let my = y.iter().copied().sum::<T>() / n;
    let mz = z.iter().copied().sum::<T>() / n;
    let (mut syz, mut szz) = (T::zero(), T::zero());
    for (&a, &b) in y.iter().zip(z) {
        syz += (a - my) * (b - mz);
        szz += (b - mz) * (b - mz);
    }
    if !(szz > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    let lambda = syz / szz;
    let est = y.iter().zip(z).map(|(&a, &b)| a - lambda * (b - mu_z)).sum::<T>() / n;
    Ok((est, lambda))
}

/// Fitted estimator with influence-function covariance and Wald intervals.
///
/// `cov` is the `n`-scaled asymptotic covariance `n⁻¹ΣIF·IFᵀ`, so
/// `se_j = sqrt(cov_jj / n)`.
#[derive(Debug, Clone)]
pub struct PbFit<T> {
    pub method: Method,
    pub theta: Vec<T>,
    pub weight: Option<WeightSpec<T>>,
    pub if_rows: Mat<T>,
    pub cov: Mat<T>,
    pub se: Vec<T>,
    pub ci_lower: Vec<T>,
    pub ci_upper: Vec<T>,
    pub level: f64,
}

impl<T: Scalar> PbFit<T> {
    pub fn n(&self) -> usize {
        self.if_rows.rows()
    }
}

/// Two-sided normal quantile for a confidence level, e.g. 1.959964 for 0.95.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} outside (0, 1)")));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(0.5 + level / 2.0))
}

/// Standard errors and Wald intervals from an `n`-scaled covariance.
pub fn wald_interval<T: Scalar>(theta: &[T], cov: &Mat<T>, n: usize, level: f64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let z = T::lit(normal_quantile(level)?);
    let nn = T::count(n);
    let se: Vec<T> = cov.diag().into_iter().map(|v| (v.max(T::zero()) / nn).sqrt()).collect();
    let lo = theta.iter().zip(&se).map(|(&t, &s)| t - z * s).collect();
    let hi = theta.iter().zip(&se).map(|(&t, &s)| t + z * s).collect();
    Ok((se, lo, hi))
}

/// Shared per-dataset state: the Z-estimates, plug-in moments and per-row
/// `A·φ_Y` and `B·φ_Ŷ` terms every method is assembled from.
#[derive(Debug, Clone)]
pub struct PbContext<'a, T> {
    ds: &'a Dataset<T>,
    ef: EstimatingFunction,
    beta_lab: ZEstimate<T>,
    gamma_lab: ZEstimate<T>,
    gamma_all: ZEstimate<T>,
    gamma_unlab: Result<ZEstimate<T>>,
    moments: MomentSet<T>,
    /// Row `i` holds `A·φ(Y_i, X_i; β̂_lab)` on labeled rows and zeros elsewhere.
    a_phi_y: Mat<T>,
    /// Row `i` holds `B·φ(Ŷ_i, X_i; γ̂_all)`.
    b_phi_yhat: Mat<T>,
}

impl<'a, T: Scalar> PbContext<'a, T> {
    pub fn new(ds: &'a Dataset<T>, family: Family) -> Result<Self> {
        Self::with_plugin(ds, family, MomentPlugin::default())
    }

    pub fn with_plugin(ds: &'a Dataset<T>, family: Family, plugin: MomentPlugin) -> Result<Self> {
        let ef = EstimatingFunction::for_dataset(family, ds)?;
        let beta_lab = ds.solve(&ef, RowSet::Labeled, Outcome::Observed)?;
        let gamma_lab = ds.solve(&ef, RowSet::Labeled, Outcome::Predicted)?;
        let gamma_all = ds.solve(&ef, RowSet::All, Outcome::Predicted)?;
        let gamma_unlab = if ds.n_unlab() >= ef.dim().max(1) {
            ds.solve(&ef, RowSet::Unlabeled, Outcome::Predicted)
        } else {
            Err(Error::InsufficientUnlabeled { method: "ppi", required: ef.dim().max(1), found: ds.n_unlab() })
        };
        let moments = estimate_moments_with(ds, &ef, &beta_lab.theta, &gamma_all.theta, plugin)?;
        let d = ef.dim();
        let mut a_phi_y = Mat::zeros(ds.n(), d);
        let mut b_phi_yhat = Mat::zeros(ds.n(), d);
        let mut buf = vec![T::zero(); d];
        for &i in ds.labeled() {
            ef.phi_into(ds.y(i), ds.x_row(i), &beta_lab.theta, &mut buf);
            moments.a.mul_vec_into(&buf, a_phi_y.row_mut(i));
        }
        for i in 0..ds.n() {
            ef.phi_into(ds.yhat(i), ds.x_row(i), &gamma_all.theta, &mut buf);
            moments.b.mul_vec_into(&buf, b_phi_yhat.row_mut(i));
        }
        Ok(PbContext { ds, ef, beta_lab, gamma_lab, gamma_all, gamma_unlab, moments, a_phi_y, b_phi_yhat })
    }

    pub fn dataset(&self) -> &Dataset<T> {
        self.ds
    }

    pub fn estimating_function(&self) -> &EstimatingFunction {
        &self.ef
    }

    pub fn moments(&self) -> &MomentSet<T> {
        &self.moments
    }

    pub fn beta_lab(&self) -> &ZEstimate<T> {
        &self.beta_lab
    }

    pub fn gamma_lab(&self) -> &ZEstimate<T> {
        &self.gamma_lab
    }

    pub fn gamma_all(&self) -> &ZEstimate<T> {
        &self.gamma_all
    }

    pub fn gamma_unlab(&self) -> Result<&ZEstimate<T>> {
        self.gamma_unlab.as_ref().map_err(Clone::clone)
    }

    fn check_supported(&self, method: Method) -> Result<()> {
        if !method.supports(self.ef.family()) {
            return Err(Error::FamilyUnsupported { method: method.name(), family: self.ef.family().name() });
        }
        Ok(())
    }

    fn unlabeled_fit(&self, method: Method) -> Result<&ZEstimate<T>> {
        self.gamma_unlab.as_ref().map_err(|e| match e {
            Error::InsufficientUnlabeled { required, found, .. } => {
                Error::InsufficientUnlabeled { method: method.name(), required: *required, found: *found }
            }
            other => other.clone(),
        })
    }

    /// Weight used by `method`, or `None` for the unweighted lab/naive baselines.
    pub fn weight(&self, method: Method) -> Result<Option<WeightSpec<T>>> {
        self.check_supported(method)?;
        let d = self.ef.dim();
        Ok(match method {
            Method::Lab | Method::Naive => None,
            Method::Ppi | Method::PpiA => Some(WeightSpec { kind: WeightKind::Identity, w: Mat::identity(d) }),
            Method::Cc => Some(cc_weight(&self.moments)?),
            Method::PpiPlusPlus => Some(ppipp_weight(&self.moments)),
            Method::Pspa => Some(pspa_weight(&self.moments)),
            Method::Sur => Some(sur_weight(self.ds, &self.ef, &self.beta_lab.theta, &self.gamma_lab.theta)?),
            Method::Pop => Some(pop_weight(self.ds, &self.ef, &self.beta_lab.theta, &self.gamma_lab.theta)?),
        })
    }

    /// `β̂_lab − W (γ̂_lab − γ̂_all)` for an arbitrary weight.
    pub fn augmented_all(&self, w: &Mat<T>) -> Vec<T> {
        let diff: Vec<T> =
            self.gamma_lab.theta.iter().zip(&self.gamma_all.theta).map(|(&a, &b)| a - b).collect();
        let adj = w.mul_vec(&diff);
        self.beta_lab.theta.iter().zip(adj).map(|(&b, a)| b - a).collect()
    }

    fn augmented_unlabeled(&self, w: &Mat<T>, method: Method) -> Result<Vec<T>> {
        let gu = self.unlabeled_fit(method)?;
        let diff: Vec<T> = self.gamma_lab.theta.iter().zip(&gu.theta).map(|(&a, &b)| a - b).collect();
        let adj = w.mul_vec(&diff);
        Ok(self.beta_lab.theta.iter().zip(adj).map(|(&b, a)| b - a).collect())
    }

    /// Point estimate only, without influence functions.
    pub fn point(&self, method: Method) -> Result<Vec<T>> {
        let weight = self.weight(method)?;
        self.point_with(method, weight.as_ref())
    }

    fn point_with(&self, method: Method, weight: Option<&WeightSpec<T>>) -> Result<Vec<T>> {
        match (method, weight) {
            (Method::Lab, _) => Ok(self.beta_lab.theta.clone()),
            (Method::Naive, _) => Ok(self.gamma_all.theta.clone()),
            (m, Some(ws)) if m.needs_unlabeled() => self.augmented_unlabeled(&ws.w, m),
            (_, Some(ws)) => Ok(self.augmented_all(&ws.w)),
            (m, None) => unreachable!("weighted method {m} without weight"),
        }
    }

    /// Influence rows of `β̂_lab − W(γ̂_lab − γ̂_all)`:
    /// `IF_i = −[A·φ_Y,i·R_i/π̂ + W·B·φ_Ŷ,i·(π̂ − R_i)/π̂]`.
    pub fn influence_all(&self, w: &Mat<T>) -> Mat<T> {
        let d = self.ef.dim();
        let pi = self.ds.pi_hat();
        let mut out = Mat::zeros(self.ds.n(), d);
        let mut wv = vec![T::zero(); d];
        for i in 0..self.ds.n() {
            w.mul_vec_into(self.b_phi_yhat.row(i), &mut wv);
            let r = if self.ds.is_labeled(i) { T::one() } else { T::zero() };
            let (ca, cb) = (r / pi, (pi - r) / pi);
            let u = self.a_phi_y.row(i);
            for (k, o) in out.row_mut(i).iter_mut().enumerate() {
                *o = -(ca * u[k] + cb * wv[k]);
            }
        }
        out
    }

    /// Influence rows of `β̂_lab − W(γ̂_lab − γ̂_unlab)` from the two-sample
    /// decomposition: labeled rows carry `−(A·φ_Y − W·B·φ_Ŷ)/π̂`, unlabeled
    /// rows `−W·B·φ_Ŷ/(1 − π̂)`, with `φ_Ŷ` evaluated at each sample's own root.
    fn influence_unlabeled(&self, w: &Mat<T>, method: Method) -> Result<Mat<T>> {
        let gu = self.unlabeled_fit(method)?;
        let d = self.ef.dim();
        let pi = self.ds.pi_hat();
        let b = &self.moments.b;
        let mut out = Mat::zeros(self.ds.n(), d);
        let (mut phi, mut bphi, mut wv) = (vec![T::zero(); d], vec![T::zero(); d], vec![T::zero(); d]);
        for i in 0..self.ds.n() {
            let x = self.ds.x_row(i);
            let labeled = self.ds.is_labeled(i);
            let gamma = if labeled { &self.gamma_lab.theta } else { &gu.theta };
            self.ef.phi_into(self.ds.yhat(i), x, gamma, &mut phi);
            b.mul_vec_into(&phi, &mut bphi);
            w.mul_vec_into(&bphi, &mut wv);
            let row = out.row_mut(i);
            if labeled {
                let u = self.a_phi_y.row(i);
                for k in 0..d {
                    row[k] = -(u[k] - wv[k]) / pi;
                }
            } else {
                for k in 0..d {
                    row[k] = -wv[k] / (T::one() - pi);
                }
            }
        }
        Ok(out)
    }

    pub fn influence(&self, method: Method, weight: Option<&WeightSpec<T>>) -> Result<Mat<T>> {
        match (method, weight) {
            (Method::Lab, _) => Ok(self.influence_all(&Mat::zeros(self.ef.dim(), self.ef.dim()))),
            (Method::Naive, _) => Ok(self.b_phi_yhat.scale(-T::one())),
            (m, Some(ws)) if m.needs_unlabeled() => self.influence_unlabeled(&ws.w, m),
            (_, Some(ws)) => Ok(self.influence_all(&ws.w)),
            (m, None) => unreachable!("weighted method {m} without weight"),
        }
    }

    /// Full fit: point estimate, weight, influence rows, covariance and CIs.
    pub fn fit(&self, method: Method, level: f64) -> Result<PbFit<T>> {
        let weight = self.weight(method)?;
        let theta = self.point_with(method, weight.as_ref())?;
        let if_rows = self.influence(method, weight.as_ref())?;
        let cov = if_covariance(&if_rows)?;
        let (se, ci_lower, ci_upper) = wald_interval(&theta, &cov, self.ds.n(), level)?;
        if theta.iter().chain(&se).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("estimator output"));
        }
        Ok(PbFit { method, theta, weight, if_rows, cov, se, ci_lower, ci_upper, level })
    }
}

fn fit_default<T: Scalar>(ds: &Dataset<T>, family: Family, method: Method) -> Result<PbFit<T>> {
    PbContext::new(ds, family)?.fit(method, 0.95)
}

pub fn estimate_lab<T: Scalar>(ds: &Dataset<T>, family: Family) -> Result<PbFit<T>> {
    fit_default(ds, family, Method::Lab)
}

pub fn estimate_naive<T: Scalar>(ds: &Dataset<T>, family: Family) -> Result<PbFit<T>> {
    fit_default(ds, family, Method::Naive)
}

pub fn estimate_ppi<T: Scalar>(ds: &Dataset<T>, family: Family) -> Result<PbFit<T>> {
    fit_default(ds, family, Method::Ppi)
}

pub fn estimate_ppi_a<T: Scalar>(ds: &Dataset<T>, family: Family) -> Result<PbFit<T>> {
    fit_default(ds, family, Method::PpiA)
}

pub fn estimate_cc<T: Scalar>(ds: &Dataset<T>, family: Family) -> Result<PbFit<T>> {
    fit_default(ds, family, Method::Cc)
}

pub fn estimate_ppipp<T: Scalar>(ds: &Dataset<T>, family: Family) -> Result<PbFit<T>> {
    fit_default(ds, family, Method::PpiPlusPlus)
}

pub fn estimate_pspa<T: Scalar>(ds: &Dataset<T>, family: Family) -> Result<PbFit<T>> {
    fit_default(ds, family, Method::Pspa)
}

pub fn estimate_sur<T: Scalar>(ds: &Dataset<T>, family: Family) -> Result<PbFit<T>> {
    fit_default(ds, family, Method::Sur)
}

pub fn estimate_pop<T: Scalar>(ds: &Dataset<T>, family: Family) -> Result<PbFit<T>> {
    fit_default(ds, family, Method::Pop)
}
