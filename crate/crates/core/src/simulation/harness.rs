//! Replicate loop and aggregation into per-method, per-coefficient metrics.

use super::dgp::replicate_dataset;
use super::reference::beta_star;
use super::report::{SimReport, SimRow};
use super::SimScenario;
use crate::error::{Error, Result};
use crate::estimators::{Method, PbContext};
use rayon::prelude::*;

const LEVEL: f64 = 0.95;

/// Estimates and standard errors of every method on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub estimates: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub ci_lower: Vec<Vec<f64>>,
    pub ci_upper: Vec<Vec<f64>>,
}

/// All replicates of a scenario, in replicate order. A replicate on which any
/// method fails is recorded as `None`.
#[derive(Debug, Clone)]
pub struct ReplicateSet {
    pub scenario: SimScenario,
    pub methods: Vec<Method>,
    pub beta_star: Vec<f64>,
    pub outcomes: Vec<Option<ReplicateOutcome>>,
}

impl ReplicateSet {
    pub fn n_failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_none()).count()
    }

    pub fn completed(&self) -> impl Iterator<Item = &ReplicateOutcome> {
        self.outcomes.iter().flatten()
    }

    /// Per-replicate estimates of `method` at coefficient `coef`.
    pub fn estimates(&self, method: Method, coef: usize) -> Vec<f64> {
        let k = self.method_index(method);
        self.completed().map(|o| o.estimates[k][coef]).collect()
    }

    fn method_index(&self, method: Method) -> usize {
        self.methods.iter().position(|&m| m == method).unwrap_or_else(|| panic!("method {method} not run"))
    }
}

fn run_replicate(scenario: &SimScenario, r: u64, methods: &[Method]) -> Result<ReplicateOutcome> {
    let ds = replicate_dataset(scenario, r)?;
    let ctx = PbContext::new(&ds, scenario.family)?;
    let mut out = ReplicateOutcome { estimates: vec![], se: vec![], ci_lower: vec![], ci_upper: vec![] };
    for &m in methods {
        let fit = ctx.fit(m, LEVEL)?;
        out.estimates.push(fit.theta);
        out.se.push(fit.se);
        out.ci_lower.push(fit.ci_lower);
        out.ci_upper.push(fit.ci_upper);
    }
    Ok(out)
}

/// Runs every replicate of a scenario in parallel. Methods that do not apply
/// to the scenario's family are dropped.
pub fn run_replicates(scenario: &SimScenario, methods: &[Method]) -> Result<ReplicateSet> {
    scenario.validate()?;
    let methods: Vec<Method> = methods.iter().copied().filter(|m| m.supports(scenario.family)).collect();
    if methods.is_empty() {
        return Err(Error::InvalidArgument(format!("no requested method applies to {}", scenario.family)));
    }
    let beta_star = beta_star(scenario.family)?;
    // Fail fast on calibration problems rather than per replicate.
    replicate_dataset(scenario, 0)?;
    let outcomes = (0..scenario.replicates as u64)
        .into_par_iter()
        .map(|r| run_replicate(scenario, r, &methods).ok())
        .collect();
    Ok(ReplicateSet { scenario: scenario.clone(), methods, beta_star, outcomes })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Delta-method Monte Carlo standard error of `mean(a)/mean(b)`.
fn ratio_mcse(a: &[f64], b: &[f64]) -> f64 {
    let r = a.len() as f64;
    if a.len() < 2 {
        return 0.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        vaa += (x - ma) * (x - ma);
        vbb += (y - mb) * (y - mb);
        vab += (x - ma) * (y - mb);
    }
    let d = r - 1.0;
    let (vaa, vbb, vab) = (vaa / d, vbb / d, vab / d);
    let var = vaa / (mb * mb) - 2.0 * ma * vab / (mb * mb * mb) + ma * ma * vbb / (mb * mb * mb * mb);
    (var.max(0.0) / r).sqrt()
}

/// Aggregates replicates into bias, coverage, relative efficiency, ASE and ESE.
pub fn summarize(set: &ReplicateSet) -> SimReport {
    let s = &set.scenario;
    let n_failures = set.n_failures();
    let used = set.outcomes.len() - n_failures;
    let dim = set.beta_star.len();
    let lab_k = set.methods.iter().position(|&m| m == Method::Lab);
    let mut rows = Vec::new();
    for (k, &method) in set.methods.iter().enumerate() {
        for j in 0..dim {
            let target = set.beta_star[j];
            let est: Vec<f64> = set.completed().map(|o| o.estimates[k][j]).collect();
            let se: Vec<f64> = set.completed().map(|o| o.se[k][j]).collect();
            let covered = set.completed().filter(|o| o.ci_lower[k][j] <= target && target <= o.ci_upper[k][j]).count();
            let sq: Vec<f64> = est.iter().map(|e| (e - target) * (e - target)).collect();
            let (re, re_mcse) = match lab_k {
                Some(l) => {
                    let lab_sq: Vec<f64> =
                        set.completed().map(|o| (o.estimates[l][j] - target).powi(2)).collect();
                    if l == k {
                        (1.0, 0.0)
                    } else {
                        (mean(&lab_sq) / mean(&sq), ratio_mcse(&lab_sq, &sq))
                    }
                }
                None => (f64::NAN, f64::NAN),
            };
            let coverage = covered as f64 / used.max(1) as f64;
            rows.push(SimRow {
                scenario_id: s.id(),
                family: s.family.to_string(),
                error_type: s.error_type.to_string(),
                quality: s.quality.to_string(),
                n: s.n,
                n_lab: s.n_lab,
                method: method.to_string(),
                coef: j,
                pct_bias: 100.0 * (mean(&est) - target) / target.abs(),
                coverage,
                coverage_mcse: (coverage * (1.0 - coverage) / used.max(1) as f64).sqrt(),
                re,
                re_mcse,
                ase: mean(&se),
                ese: sample_sd(&est),
                n_failures,
            });
        }
    }
    SimReport { scenario: s.clone(), beta_star: set.beta_star.clone(), replicates_used: used, n_failures, rows }
}

/// Runs a scenario and aggregates it. Fails when more than 1% of replicates
/// could not be fitted.
pub fn run_scenario(scenario: &SimScenario, methods: &[Method]) -> Result<SimReport> {
    let set = run_replicates(scenario, methods)?;
    let failures = set.n_failures();
    if failures * 100 > scenario.replicates || failures == scenario.replicates {
        return Err(Error::FailureBudgetExceeded {
            scenario: scenario.id(),
            failures,
            replicates: scenario.replicates,
        });
    }
    Ok(summarize(&set))
}
