//! `analyze` and `diagnose`: estimators applied to a user CSV file.

use super::config::{split_list, FlatConfig};
use super::{emit, AnalyzeArgs, CliError, EXIT_SOLVER, EXIT_TOO_FEW_LABELED};
use crate::estimands::{Dataset, Family};
use crate::estimators::{normal_quantile, Method, PbContext, PbFit};
use crate::inference::{delta_avar_cc, delta_avar_ppia, homoskedastic_summary, AvarReport};
use crate::numerics::Mat;
use crate::simulation::round_sig;
use serde::Serialize;
use std::path::PathBuf;
use std::str::FromStr;

const CONFIG_KEYS: [&str; 9] =
    ["input", "outcome", "prediction", "covariates", "family", "methods", "level", "out", "format"];
const DIGITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(CliError::schema(format!("unknown format '{other}' (expected json or csv)"))),
        }
    }
}

/// Resolved settings for `analyze` and `diagnose`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeConfig {
    pub input: PathBuf,
    pub outcome: String,
    pub prediction: String,
    pub covariates: Vec<String>,
    pub family: Family,
    pub methods: Vec<Method>,
    pub level: f64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

fn parse_with<T: FromStr<Err = crate::Error>>(s: &str) -> Result<T, CliError> {
    s.parse().map_err(|e: crate::Error| CliError::schema(e.to_string()))
}

impl AnalyzeConfig {
    /// Merges flags over the optional config file; flags win.
    pub fn resolve(args: &AnalyzeArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FlatConfig::load(p, &CONFIG_KEYS)?,
            None => FlatConfig::default(),
        };
        let pick = |flag: &Option<String>, key: &str| -> Result<Option<String>, CliError> {
            Ok(match flag {
                Some(v) => Some(v.clone()),
                None => file.string(key)?,
            })
        };
        let required = |v: Option<String>, key: &str| {
            v.ok_or_else(|| CliError::schema(format!("missing required setting --{key}")))
        };
        let input = match &args.input {
            Some(p) => p.clone(),
            None => PathBuf::from(required(file.string("input")?, "input")?),
        };
        let outcome = required(pick(&args.outcome, "outcome")?, "outcome")?;
        let prediction = required(pick(&args.prediction, "prediction")?, "prediction")?;
        let family: Family = parse_with(&required(pick(&args.family, "family")?, "family")?)?;
        let covariates = match &args.covariates {
            Some(s) => split_list(s),
            None => file.list("covariates")?.unwrap_or_default(),
        };
        let methods = match &args.methods {
            Some(s) => Some(split_list(s)),
            None => file.list("methods")?,
        };
        let methods: Vec<Method> = match methods {
            Some(names) => names.iter().map(|m| parse_with(m)).collect::<Result<_, _>>()?,
            None => Method::ALL.into_iter().filter(|m| m.supports(family)).collect(),
        };
        let level = match args.level {
            Some(l) => l,
            None => file.f64("level")?.unwrap_or(0.95),
        };
        let out = match &args.out {
            Some(p) => Some(p.clone()),
            None => file.string("out")?.map(PathBuf::from),
        };
        let format = pick(&args.format, "format")?.as_deref().unwrap_or("json").parse()?;
        let cfg = AnalyzeConfig { input, outcome, prediction, covariates, family, methods, level, out, format };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.methods.is_empty() {
            return Err(CliError::schema("no methods requested"));
        }
        if let Some(m) = self.methods.iter().find(|m| !m.supports(self.family)) {
            return Err(CliError::schema(format!("method {m} is not available for the {} family", self.family)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::schema(format!("level {} must lie in (0, 1)", self.level)));
        }
        if self.family == Family::Mean && !self.covariates.is_empty() {
            return Err(CliError::schema("the mean family takes no covariates"));
        }
        let mut cols = vec![&self.outcome, &self.prediction];
        cols.extend(self.covariates.iter());
        for (i, c) in cols.iter().enumerate() {
            if cols[..i].contains(c) {
                return Err(CliError::schema(format!("column '{c}' is used more than once")));
            }
        }
        Ok(())
    }

    /// Coefficient labels in output order.
    pub fn coefficient_names(&self) -> Vec<String> {
        if self.family == Family::Mean {
            return vec!["mean".to_string()];
        }
        std::iter::once("(intercept)".to_string()).chain(self.covariates.iter().cloned()).collect()
    }
}

fn parse_cell(cell: &str, column: &str, line: u64) -> Result<f64, CliError> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| CliError::schema(format!("line {line}: column '{column}': '{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::schema(format!("line {line}: column '{column}': value must be finite")));
    }
    Ok(v)
}

/// Reads the CSV into a dataset with an intercept column prepended.
pub fn load_dataset(cfg: &AnalyzeConfig) -> Result<Dataset<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&cfg.input)
        .map_err(|e| CliError::schema(format!("cannot read {}: {e}", cfg.input.display())))?;
    let headers = reader.headers().map_err(|e| CliError::schema(format!("line 1: {e}")))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::schema(format!("line 1: column '{name}' not found in header")))
    };
    let yi = column(&cfg.outcome)?;
    let pi = column(&cfg.prediction)?;
    let xi: Vec<usize> = cfg.covariates.iter().map(|c| column(c)).collect::<Result<_, _>>()?;
    let logistic = cfg.family == Family::Logistic;
    let (mut y, mut yhat, mut x) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::schema(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| record.get(i).unwrap_or("");
        let outcome = cell(yi).trim();
        let yv = if outcome.is_empty() { None } else { Some(parse_cell(outcome, &cfg.outcome, line)?) };
        if logistic && yv.is_some_and(|v| v != 0.0 && v != 1.0) {
            return Err(CliError::schema(format!("line {line}: logistic outcome must be 0 or 1")));
        }
        let p = cell(pi);
        if p.trim().is_empty() {
            return Err(CliError::schema(format!("line {line}: missing prediction in column '{}'", cfg.prediction)));
        }
        let pv = parse_cell(p, &cfg.prediction, line)?;
        if logistic && !(0.0..=1.0).contains(&pv) {
            return Err(CliError::schema(format!("line {line}: logistic prediction must lie in [0, 1]")));
        }
        x.push(1.0);
        for (&k, name) in xi.iter().zip(&cfg.covariates) {
            let c = cell(k);
            if c.trim().is_empty() {
                return Err(CliError::schema(format!("line {line}: missing covariate in column '{name}'")));
            }
            x.push(parse_cell(c, name, line)?);
        }
        y.push(yv);
        yhat.push(pv);
    }
    if yhat.is_empty() {
        return Err(CliError::schema(format!("{}: no data rows", cfg.input.display())));
    }
    let n_lab = y.iter().filter(|v| v.is_some()).count();
    let p = cfg.covariates.len();
    if n_lab < p + 2 {
        return Err(CliError::new(
            EXIT_TOO_FEW_LABELED,
            format!("{n_lab} labeled rows; at least {} needed for {p} covariates", p + 2),
        ));
    }
    let x = Mat::from_row_major(yhat.len(), p + 1, x).map_err(|e| CliError::schema(e.to_string()))?;
    Dataset::new(y, yhat, x).map_err(|e| CliError::schema(e.to_string()))
}

fn context<'a>(ds: &'a Dataset<f64>, cfg: &AnalyzeConfig) -> Result<PbContext<'a, f64>, CliError> {
    PbContext::new(ds, cfg.family).map_err(|e| {
        let names: Vec<&str> = cfg.methods.iter().map(|m| m.name()).collect();
        CliError::new(EXIT_SOLVER, format!("estimation failed for methods {}: {e}", names.join(",")))
    })
}

fn fit(ctx: &PbContext<'_, f64>, method: Method, level: f64) -> Result<PbFit<f64>, CliError> {
    ctx.fit(method, level).map_err(|e| CliError::new(EXIT_SOLVER, format!("method {method}: {e}")))
}

#[derive(Debug, Serialize)]
struct Record {
    method: String,
    coef: String,
    estimate: f64,
    se: f64,
    ci_lower: f64,
    ci_upper: f64,
    re_vs_lab: f64,
}

#[derive(Debug, Serialize)]
struct MethodCovariance {
    method: String,
    cov: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct AnalyzeOutput {
    family: String,
    n: usize,
    n_lab: usize,
    level: f64,
    records: Vec<Record>,
    covariance: Vec<MethodCovariance>,
}

fn round_mat(m: &Mat<f64>) -> Mat<f64> {
    let data = m.as_slice().iter().map(|&v| round_sig(v, DIGITS)).collect();
    Mat::from_row_major(m.rows(), m.cols(), data).expect("same shape")
}

pub fn cmd_analyze(cfg: &AnalyzeConfig) -> Result<(), CliError> {
    let ds = load_dataset(cfg)?;
    let ctx = context(&ds, cfg)?;
    let n = ds.n() as f64;
    let z = normal_quantile(cfg.level).map_err(|e| CliError::schema(e.to_string()))?;
    let lab_cov = round_mat(&fit(&ctx, Method::Lab, cfg.level)?.cov);
    let names = cfg.coefficient_names();
    let mut records = Vec::new();
    let mut covariance = Vec::new();
    for &method in &cfg.methods {
        let f = fit(&ctx, method, cfg.level)?;
        let cov = round_mat(&f.cov);
        for (j, name) in names.iter().enumerate() {
            let estimate = round_sig(f.theta[j], DIGITS);
            let se = round_sig((cov[(j, j)] / n).sqrt(), DIGITS);
            let re = if method == Method::Lab { 1.0 } else { round_sig(lab_cov[(j, j)] / cov[(j, j)], DIGITS) };
            let rec = Record {
                method: method.to_string(),
                coef: name.clone(),
                estimate,
                se,
                ci_lower: round_sig(estimate - z * se, DIGITS),
                ci_upper: round_sig(estimate + z * se, DIGITS),
                re_vs_lab: re,
            };
            if ![rec.estimate, rec.se, rec.ci_lower, rec.ci_upper, rec.re_vs_lab].iter().all(|v| v.is_finite()) {
                return Err(CliError::new(EXIT_SOLVER, format!("method {method}: non-finite output for {name}")));
            }
            records.push(rec);
        }
        covariance.push(MethodCovariance { method: method.to_string(), cov: cov.to_rows() });
    }
    let bytes = match cfg.format {
        OutputFormat::Json => {
            let out = AnalyzeOutput {
                family: cfg.family.to_string(),
                n: ds.n(),
                n_lab: ds.n_lab(),
                level: cfg.level,
                records,
                covariance,
            };
            let mut s = serde_json::to_string_pretty(&out).map_err(|e| CliError::io(e.to_string()))?;
            s.push('\n');
            s.into_bytes()
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &records {
                w.serialize(r).map_err(|e| CliError::io(e.to_string()))?;
            }
            w.into_inner().map_err(|e| CliError::io(e.to_string()))?
        }
    };
    emit(cfg.out.as_ref(), &bytes)
}

#[derive(Debug, Serialize)]
struct EfficiencyFlags {
    delta_diag: Vec<f64>,
    efficient_vs_lab: Vec<bool>,
}

#[derive(Debug, Serialize)]
struct DiagnoseOutput {
    family: String,
    n: usize,
    n_lab: usize,
    coefficients: Vec<String>,
    sigma_y: f64,
    sigma_yhat: f64,
    rho: f64,
    threshold: f64,
    ppi_a: EfficiencyFlags,
    cc: EfficiencyFlags,
    recommendation: String,
    reason: String,
}

fn flags(report: &AvarReport<f64>, scale: &[f64]) -> EfficiencyFlags {
    // Gains below this fraction of the labeled-only variance count as ties.
    const TIE: f64 = 1e-10;
    let delta_diag: Vec<f64> = report.delta_vs_lab.diag().into_iter().map(|v| round_sig(v, DIGITS)).collect();
    let efficient_vs_lab = delta_diag.iter().zip(scale).map(|(&d, &s)| d > TIE * s.abs()).collect();
    EfficiencyFlags { delta_diag, efficient_vs_lab }
}

pub fn cmd_diagnose(cfg: &AnalyzeConfig) -> Result<(), CliError> {
    if cfg.family == Family::Logistic {
        return Err(CliError::schema("diagnose supports the mean and linear families only"));
    }
    let ds = load_dataset(cfg)?;
    let ctx = context(&ds, cfg)?;
    let summary = homoskedastic_summary(&ctx).map_err(|e| CliError::new(EXIT_SOLVER, e.to_string()))?;
    let m = ctx.moments();
    let solver = |e: crate::Error| CliError::new(EXIT_SOLVER, e.to_string());
    let ppia = AvarReport::from_delta("ppi_a", m, delta_avar_ppia(m)).map_err(solver)?;
    let cc = AvarReport::from_delta("cc", m, delta_avar_cc(m).map_err(solver)?).map_err(solver)?;
    let lab_diag = (&ppia.avar + &ppia.delta_vs_lab).diag();
    let ppia_flags = flags(&ppia, &lab_diag);
    let cc_flags = flags(&cc, &lab_diag);
    let (recommendation, reason) = if !cc_flags.efficient_vs_lab.iter().any(|&b| b) {
        ("lab", "the predictions carry no usable information beyond the covariates; CC reduces to the labeled-only fit")
    } else if ppia_flags.efficient_vs_lab.iter().all(|&b| b) {
        ("cc", "PPI_a improves on the labeled-only fit for every coefficient, and CC is at least as efficient as PPI_a")
    } else {
        ("cc", "PPI_a is less efficient than the labeled-only fit for some coefficients; CC never is")
    };
    let out = DiagnoseOutput {
        family: cfg.family.to_string(),
        n: ds.n(),
        n_lab: ds.n_lab(),
        coefficients: cfg.coefficient_names(),
        sigma_y: round_sig(summary.sigma_y, DIGITS),
        sigma_yhat: round_sig(summary.sigma_yhat, DIGITS),
        rho: round_sig(summary.rho, DIGITS),
        threshold: round_sig(summary.threshold, DIGITS),
        ppi_a: ppia_flags,
        cc: cc_flags,
        recommendation: recommendation.to_string(),
        reason: reason.to_string(),
    };
    let mut s = serde_json::to_string_pretty(&out).map_err(|e| CliError::io(e.to_string()))?;
    s.push('\n');
    emit(cfg.out.as_ref(), s.as_bytes())
}
