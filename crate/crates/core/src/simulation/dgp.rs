//! Data-generating processes for the simulation study.

use super::calibration::{calibrate_p_error, calibrate_sigma_tau};
use super::{ErrorType, SimScenario};
use crate::error::{Error, Result};
use crate::estimands::{expit, Dataset, Family};
use crate::numerics::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::OnceLock;

/// Pairwise correlation of the latent covariates.
pub const COVARIATE_CORRELATION: f64 = 0.4;
/// Standard deviation of the outcome noise in the linear DGP.
pub const OUTCOME_NOISE_SD: f64 = 0.75;
pub const NONRANDOM_SHIFT: f64 = -2.0;
pub const COVARIATE_SLOPE: f64 = -3.5;

/// Random stream identifiers within one replicate.
pub const STREAM_COVARIATES: u64 = 0;
pub const STREAM_OUTCOME: u64 = 1;
pub const STREAM_PREDICTION: u64 = 2;

/// Generator keyed by `(seed, replicate, stream)`; each key addresses an
/// independent ChaCha stream so replicates can be generated in any order.
pub fn stream_rng(seed: u64, replicate: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replicate << 16) | stream);
    rng
}

fn covariate_factor() -> &'static Mat<f64> {
    static FACTOR: OnceLock<Mat<f64>> = OnceLock::new();
    FACTOR.get_or_init(|| {
        let mut s = Mat::from_diag(&[1.0 - COVARIATE_CORRELATION; 4]);
        for i in 0..4 {
            for j in 0..4 {
                s[(i, j)] += COVARIATE_CORRELATION;
            }
        }
        s.cholesky().expect("compound-symmetric covariance is positive definite")
    })
}

/// `n` iid rows of `W ~ N(0, Σ)` with unit variances and pairwise correlation 0.4.
pub fn gen_covariates<R: Rng>(rng: &mut R, n: usize) -> Mat<f64> {
    let l = covariate_factor();
    let mut w = Mat::zeros(n, 4);
    let mut z = [0.0; 4];
    for i in 0..n {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        l.mul_vec_into(&z, w.row_mut(i));
    }
    w
}

/// `h(W) = 1 + 0.1·exp(W₁) + sin(W₂) + W₃ + W₃² + I(W₄ > 0)`.
pub fn signal(w: &[f64]) -> f64 {
    1.0 + 0.1 * w[0].exp() + w[1].sin() + w[2] + w[2] * w[2] + indicator(w[3])
}

fn indicator(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Working-model design `[1, W₁, W₃, I(W₄ > 0)]`.
pub fn design_row(w: &[f64]) -> [f64; 4] {
    [1.0, w[0], w[2], indicator(w[3])]
}

fn design(w: &Mat<f64>) -> Mat<f64> {
    let mut x = Mat::zeros(w.rows(), 4);
    for i in 0..w.rows() {
        x.row_mut(i).copy_from_slice(&design_row(w.row(i)));
    }
    x
}

/// Prediction-error parameters of the linear DGP:
/// `Ŷ = h(W) + a + b|W₂| + s(W)·z` with `s = sigma` or `s = sigma·|W₂|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearErrorModel {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub scale_by_w2: bool,
}

impl LinearErrorModel {
    pub fn new(error_type: ErrorType, sigma: f64) -> Self {
        match error_type {
            ErrorType::Random => LinearErrorModel { a: 0.0, b: 0.0, sigma, scale_by_w2: false },
            ErrorType::Nonrandom => LinearErrorModel { a: NONRANDOM_SHIFT, b: 0.0, sigma, scale_by_w2: false },
            ErrorType::CovariateDependent => {
                LinearErrorModel { a: 0.0, b: COVARIATE_SLOPE, sigma, scale_by_w2: true }
            }
        }
    }

    pub fn predict(&self, h: f64, w2: f64, z: f64) -> f64 {
        let sd = if self.scale_by_w2 { self.sigma * w2.abs() } else { self.sigma };
        h + self.a + self.b * w2.abs() + sd * z
    }
}

/// Label-flip probabilities of the logistic DGP for given `Y` and `W₄`.
pub fn flip_probability(error_type: ErrorType, p_error: f64, y: bool, w4: f64) -> f64 {
    match error_type {
        ErrorType::Random => p_error,
        ErrorType::Nonrandom => {
            if y {
                p_error
            } else {
                p_error / 20.0
            }
        }
        ErrorType::CovariateDependent => match (w4 > 0.0, y) {
            (true, _) => p_error / 4.0,
            (false, true) => 3.0 * p_error,
            (false, false) => 2.0 * p_error,
        },
    }
}

/// Linear-outcome replicate with an explicit error model.
pub fn gen_linear_with(seed: u64, replicate: u64, n: usize, n_lab: usize, model: &LinearErrorModel) -> Result<Dataset<f64>> {
    let w = gen_covariates(&mut stream_rng(seed, replicate, STREAM_COVARIATES), n);
    let mut ry = stream_rng(seed, replicate, STREAM_OUTCOME);
    let mut rp = stream_rng(seed, replicate, STREAM_PREDICTION);
    let mut y = Vec::with_capacity(n);
    let mut yhat = Vec::with_capacity(n);
    for i in 0..n {
        let wi = w.row(i);
        let h = signal(wi);
        let e: f64 = ry.sample(StandardNormal);
        let z: f64 = rp.sample(StandardNormal);
        y.push((i < n_lab).then_some(h + OUTCOME_NOISE_SD * e));
        yhat.push(model.predict(h, wi[1], z));
    }
    Dataset::new(y, yhat, design(&w))
}

/// Logistic-outcome replicate with predictions formed by flipping labels.
pub fn gen_logistic_with(
    seed: u64,
    replicate: u64,
    n: usize,
    n_lab: usize,
    error_type: ErrorType,
    p_error: f64,
) -> Result<Dataset<f64>> {
    let w = gen_covariates(&mut stream_rng(seed, replicate, STREAM_COVARIATES), n);
    let mut ry = stream_rng(seed, replicate, STREAM_OUTCOME);
    let mut rp = stream_rng(seed, replicate, STREAM_PREDICTION);
    let mut y = Vec::with_capacity(n);
    let mut yhat = Vec::with_capacity(n);
    for i in 0..n {
        let wi = w.row(i);
        let yi = ry.random::<f64>() < expit(signal(wi));
        let flip = rp.random::<f64>() < flip_probability(error_type, p_error, yi, wi[3]);
        let v = |b: bool| if b { 1.0 } else { 0.0 };
        y.push((i < n_lab).then_some(v(yi)));
        yhat.push(v(yi != flip));
    }
    Dataset::new(y, yhat, design(&w))
}

fn check_family(scenario: &SimScenario, expected: Family) -> Result<()> {
    if scenario.family != expected {
        return Err(Error::InvalidArgument(format!(
            "scenario family {} where {} was expected",
            scenario.family, expected
        )));
    }
    Ok(())
}

/// Replicate 0 of a linear scenario.
pub fn gen_linear(scenario: &SimScenario) -> Result<Dataset<f64>> {
    check_family(scenario, Family::Linear)?;
    replicate_dataset(scenario, 0)
}

/// Replicate 0 of a logistic scenario.
pub fn gen_logistic(scenario: &SimScenario) -> Result<Dataset<f64>> {
    check_family(scenario, Family::Logistic)?;
    replicate_dataset(scenario, 0)
}

/// Regenerates replicate `r` of a scenario exactly as the harness sees it.
pub fn replicate_dataset(scenario: &SimScenario, r: u64) -> Result<Dataset<f64>> {
    scenario.validate()?;
    match scenario.family {
        Family::Linear => {
            let sigma = calibrate_sigma_tau(scenario.error_type, scenario.quality.target_r2())?;
            let model = LinearErrorModel::new(scenario.error_type, sigma);
            gen_linear_with(scenario.seed, r, scenario.n, scenario.n_lab, &model)
        }
        Family::Logistic => {
            let p = calibrate_p_error(scenario.error_type, scenario.quality.target_accuracy())?;
            gen_logistic_with(scenario.seed, r, scenario.n, scenario.n_lab, scenario.error_type, p)
        }
        Family::Mean => Err(Error::FamilyUnsupported { method: "simulation", family: "mean" }),
    }
}

/// Linear model with jointly normal homoskedastic errors:
/// `Y = Xβ + ε_Y`, `Ŷ = Xγ + ε_Ŷ`, `Corr(ε_Y, ε_Ŷ) = ρ`, where
/// `X = [1, W₁, W₂, W₃]` from the compound-symmetric covariate generator.
#[derive(Debug, Clone, PartialEq)]
pub struct HomoskedasticDgp {
    pub beta: [f64; 4],
    pub gamma: [f64; 4],
    pub sigma_y: f64,
    pub sigma_yhat: f64,
    pub rho: f64,
    pub n: usize,
    pub n_lab: usize,
}

impl HomoskedasticDgp {
    pub fn generate(&self, seed: u64, replicate: u64) -> Result<Dataset<f64>> {
        let (n, n_lab) = (self.n, self.n_lab);
        let w = gen_covariates(&mut stream_rng(seed, replicate, STREAM_COVARIATES), n);
        let mut rng = stream_rng(seed, replicate, STREAM_OUTCOME);
        let tail = (1.0 - self.rho * self.rho).max(0.0).sqrt();
        let mut x = Mat::zeros(n, 4);
        let mut y = Vec::with_capacity(n);
        let mut yhat = Vec::with_capacity(n);
        for i in 0..n {
            let wi = w.row(i);
            let xi = [1.0, wi[0], wi[1], wi[2]];
            x.row_mut(i).copy_from_slice(&xi);
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let ey = self.sigma_y * z1;
            let eyh = self.sigma_yhat * (self.rho * z1 + tail * z2);
            let mu_y: f64 = xi.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
            let mu_h: f64 = xi.iter().zip(&self.gamma).map(|(a, b)| a * b).sum();
            y.push((i < n_lab).then_some(mu_y + ey));
            yhat.push(mu_h + eyh);
        }
        Dataset::new(y, yhat, x)
    }

    /// Population `E[XXᵀ]` for `X = [1, W₁, W₂, W₃]`.
    pub fn design_second_moment() -> Mat<f64> {
        let mut m = Mat::identity(4);
        for i in 1..4 {
            for j in 1..4 {
                if i != j {
                    m[(i, j)] = COVARIATE_CORRELATION;
                }
            }
        }
        m
    }
}
