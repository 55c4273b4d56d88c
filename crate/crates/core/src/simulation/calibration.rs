//! Calibration of prediction-noise parameters to a target quality.
//!
//! Quality is squared Pearson correlation between `Ŷ` and `Y` for linear
//! outcomes and overall accuracy `P(Ŷ = Y)` for binary outcomes. Moments of
//! the signal are estimated once from a fixed calibration draw; the noise
//! contributions enter analytically, and the noise parameter is found by
//! bisection.

use super::dgp::{flip_probability, gen_covariates, signal, stream_rng, OUTCOME_NOISE_SD};
use super::ErrorType;
use crate::error::{Error, Result};
use crate::estimands::expit;
use std::sync::OnceLock;

pub const CALIBRATION_SEED: u64 = 0x0CA1_1B8A_7E5E_ED01;
pub const CALIBRATION_DRAWS: usize = 1_000_000;
/// Bisection bracket for the linear noise scale.
pub const SIGMA_BRACKET: (f64, f64) = (0.0, 50.0);

#[derive(Debug, Clone, Copy)]
struct SignalMoments {
    var_h: f64,
    mean_w2_sq: f64,
    /// `E[expit h]`.
    p_one: f64,
    /// Expected flip probability per unit `p_error` under covariate-dependent error.
    covdep_rate: f64,
}

fn moments() -> &'static SignalMoments {
    static MOMENTS: OnceLock<SignalMoments> = OnceLock::new();
    MOMENTS.get_or_init(|| {
        let w = gen_covariates(&mut stream_rng(CALIBRATION_SEED, 0, 0), CALIBRATION_DRAWS);
        let n = CALIBRATION_DRAWS as f64;
        let (mut sh, mut shh, mut sw2, mut sp, mut sc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..w.rows() {
            let wi = w.row(i);
            let h = signal(wi);
            let p = expit(h);
            sh += h;
            shh += h * h;
            sw2 += wi[1] * wi[1];
            sp += p;
            sc += p * flip_probability(ErrorType::CovariateDependent, 1.0, true, wi[3])
                + (1.0 - p) * flip_probability(ErrorType::CovariateDependent, 1.0, false, wi[3]);
        }
        let mean_h = sh / n;
        SignalMoments {
            var_h: shh / n - mean_h * mean_h,
            mean_w2_sq: sw2 / n,
            p_one: sp / n,
            covdep_rate: sc / n,
        }
    })
}

/// Variance of the signal `h(W)` on the calibration draw.
pub fn signal_variance() -> f64 {
    moments().var_h
}

/// `corr²(Ŷ, Y)` for the linear DGP at noise scale `sigma`.
///
/// Under covariate-dependent error the `b|W₂|` bias term is left out, so the
/// quality measured is that of the noisy part `h + c|W₂|z`. With the bias
/// included no choice of `c` reaches the usual targets.
pub fn linear_quality(error_type: ErrorType, sigma: f64) -> f64 {
    let m = moments();
    let var_y = m.var_h + OUTCOME_NOISE_SD * OUTCOME_NOISE_SD;
    let noise = match error_type {
        ErrorType::Random | ErrorType::Nonrandom => sigma * sigma,
        ErrorType::CovariateDependent => sigma * sigma * m.mean_w2_sq,
    };
    m.var_h * m.var_h / (var_y * (m.var_h + noise))
}

/// Expected accuracy `1 − E[flip probability]` for the logistic DGP.
pub fn logistic_accuracy(error_type: ErrorType, p_error: f64) -> f64 {
    let m = moments();
    let rate = match error_type {
        ErrorType::Random => 1.0,
        ErrorType::Nonrandom => m.p_one + (1.0 - m.p_one) / 20.0,
        ErrorType::CovariateDependent => m.covdep_rate,
    };
    1.0 - p_error * rate
}

/// Root of a decreasing function `f(x) = target` on `[lo, hi]`.
fn bisect_decreasing(f: impl Fn(f64) -> f64, target: f64, (mut lo, mut hi): (f64, f64), what: &str) -> Result<f64> {
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(f_lo >= target && f_hi <= target) {
        return Err(Error::CalibrationFailed(format!(
            "{what}: target {target} outside achievable range [{f_hi:.6}, {f_lo:.6}]"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Noise scale (`σ_τ`, or `c` for covariate-dependent error) giving the target `corr²(Ŷ, Y)`.
pub fn calibrate_sigma_tau(error_type: ErrorType, target_r2: f64) -> Result<f64> {
    if !(target_r2 > 0.0 && target_r2 < 1.0) {
        return Err(Error::CalibrationFailed(format!("target R² {target_r2} outside (0, 1)")));
    }
    bisect_decreasing(|s| linear_quality(error_type, s), target_r2, SIGMA_BRACKET, "sigma_tau")
}

/// Flip probability giving the target overall accuracy.
pub fn calibrate_p_error(error_type: ErrorType, target_accuracy: f64) -> Result<f64> {
    if !(target_accuracy > 0.0 && target_accuracy < 1.0) {
        return Err(Error::CalibrationFailed(format!("target accuracy {target_accuracy} outside (0, 1)")));
    }
    match error_type {
        ErrorType::Random => Ok(1.0 - target_accuracy),
        ErrorType::Nonrandom => {
            bisect_decreasing(|p| logistic_accuracy(error_type, p), target_accuracy, (0.0, 1.0), "p_error")
        }
        // Keeps the largest flip probability 3·p_error within [0, 1].
        ErrorType::CovariateDependent => {
            bisect_decreasing(|p| logistic_accuracy(error_type, p), target_accuracy, (0.0, 1.0 / 3.0), "p_error")
        }
    }
}
