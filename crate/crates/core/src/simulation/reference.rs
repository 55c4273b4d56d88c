//! Population targets of the working regressions.
//!
//! The working models are misspecified, so the target is the probability
//! limit of the Z-estimate. It is computed on a large reference draw with the
//! outcome replaced by its conditional mean given `W` (`h` for linear,
//! `expit h` for logistic), which leaves the root unchanged and removes
//! outcome noise.

use super::dgp::{design_row, gen_covariates, signal, stream_rng};
use crate::error::{Error, Result};
use crate::estimands::{expit, Family};
use crate::numerics::{dot, norm_inf, solve_linear, Mat};
use rayon::prelude::*;
use std::sync::OnceLock;

pub const REFERENCE_SEED: u64 = 0x8E5E_7F3D_0000_BE7A;
pub const REFERENCE_DRAWS: usize = 10_000_000;
const CHUNK: usize = 1_000_000;
const WARM_START_DRAWS: usize = 100_000;
const DIM: usize = 4;

/// Sums `f(x, h)` outer products and vectors over one chunk of the draw.
fn chunk_sums(chunk: u64, len: usize, beta: Option<&[f64]>) -> (Mat<f64>, Vec<f64>) {
    let w = gen_covariates(&mut stream_rng(REFERENCE_SEED, chunk, 0), len);
    let mut h_mat = Mat::zeros(DIM, DIM);
    let mut g = vec![0.0; DIM];
    for i in 0..len {
        let x = design_row(w.row(i));
        let h = signal(w.row(i));
        match beta {
            None => {
                h_mat.add_outer(&x, &x, 1.0);
                g.iter_mut().zip(&x).for_each(|(gi, xi)| *gi += xi * h);
            }
            Some(b) => {
                let p = expit(dot(&x, b));
                h_mat.add_outer(&x, &x, p * (1.0 - p));
                let r = expit(h) - p;
                g.iter_mut().zip(&x).for_each(|(gi, xi)| *gi += xi * r);
            }
        }
    }
    (h_mat, g)
}

/// Chunked sums over `draws` rows, reduced in chunk order.
fn reduce(draws: usize, beta: Option<&[f64]>) -> (Mat<f64>, Vec<f64>) {
    let chunks = draws.div_ceil(CHUNK);
    let parts: Vec<_> = (0..chunks)
        .into_par_iter()
        .map(|k| chunk_sums(k as u64, CHUNK.min(draws - k * CHUNK), beta))
        .collect();
    let mut h = Mat::zeros(DIM, DIM);
    let mut g = vec![0.0; DIM];
    for (ph, pg) in parts {
        h = &h + &ph;
        g.iter_mut().zip(pg).for_each(|(a, b)| *a += b);
    }
    let n = draws as f64;
    (h.scale(1.0 / n), g.into_iter().map(|v| v / n).collect())
}

fn logistic_root(draws: usize, start: Vec<f64>) -> Result<Vec<f64>> {
    let mut beta = start;
    for _ in 0..50 {
        let (info, score) = reduce(draws, Some(&beta));
        let step = solve_linear(&info, &score)?;
        beta.iter_mut().zip(&step).for_each(|(b, s)| *b += s);
        if norm_inf(&step) < 1e-11 {
            return Ok(beta);
        }
    }
    Err(Error::DidNotConverge { iterations: 50 })
}

/// Population coefficients of `Y` on `[1, W₁, W₃, I(W₄ > 0)]` computed from
/// `draws` reference rows.
pub fn reference_coefficients(family: Family, draws: usize) -> Result<Vec<f64>> {
    match family {
        Family::Linear => {
            let (xx, xh) = reduce(draws, None);
            solve_linear(&xx, &xh)
        }
        Family::Logistic => {
            let warm = logistic_root(WARM_START_DRAWS.min(draws), vec![0.0; DIM])?;
            logistic_root(draws, warm)
        }
        Family::Mean => Err(Error::FamilyUnsupported { method: "reference", family: "mean" }),
    }
}

/// Cached population target on the full reference draw.
pub fn beta_star(family: Family) -> Result<Vec<f64>> {
    static LINEAR: OnceLock<Result<Vec<f64>>> = OnceLock::new();
    static LOGISTIC: OnceLock<Result<Vec<f64>>> = OnceLock::new();
    let cell = match family {
        Family::Linear => &LINEAR,
        Family::Logistic => &LOGISTIC,
        Family::Mean => return Err(Error::FamilyUnsupported { method: "reference", family: "mean" }),
    };
    cell.get_or_init(|| reference_coefficients(family, REFERENCE_DRAWS)).clone()
}
