//! `simulate`: the Monte Carlo grid.

use super::config::{split_list, FlatConfig};
use super::{emit, CliError, OutputFormat, SimulateArgs, EXIT_FAILURE_BUDGET, EXIT_SOLVER};
use crate::error::Error;
use crate::estimands::Family;
use crate::estimators::Method;
use crate::simulation::{
    run_scenario, scenario_grid, write_csv, write_json, ErrorType, Quality, SimScenario, DESK_N, DESK_N_LAB,
    DESK_REPLICATES, FULL_N, FULL_N_LAB, FULL_REPLICATES, SIM_FAMILIES,
};
use std::path::PathBuf;
use std::str::FromStr;

const CONFIG_KEYS: [&str; 11] = [
    "out", "format", "full_scale", "families", "error_types", "qualities", "n_lab", "n", "replicates", "seed",
    "methods",
];

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_261_015;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "PBINFER_THREADS";

/// Resolved settings for `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub scenarios: Vec<SimScenario>,
    pub methods: Vec<Method>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

fn parse_all<T: FromStr<Err = Error>>(names: &[String]) -> Result<Vec<T>, CliError> {
    names.iter().map(|s| s.parse().map_err(|e: Error| CliError::schema(e.to_string()))).collect()
}

fn list(flag: &Option<String>, file: &FlatConfig, key: &str) -> Result<Option<Vec<String>>, CliError> {
    match flag {
        Some(s) => Ok(Some(split_list(s))),
        None => file.list(key),
    }
}

fn usize_of(v: Option<u64>) -> Option<usize> {
    v.map(|x| x as usize)
}

impl SimulateConfig {
    /// Merges flags over the optional config file; flags win.
    pub fn resolve(args: &SimulateArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FlatConfig::load(p, &CONFIG_KEYS)?,
            None => FlatConfig::default(),
        };
        let full = args.full_scale || file.bool("full_scale")?.unwrap_or(false);
        let families: Vec<Family> = match list(&args.families, &file, "families")? {
            Some(v) => parse_all(&v)?,
            None => SIM_FAMILIES.to_vec(),
        };
        if families.contains(&Family::Mean) {
            return Err(CliError::schema("simulation families are linear and logistic"));
        }
        let error_types: Vec<ErrorType> = match list(&args.error_types, &file, "error_types")? {
            Some(v) => parse_all(&v)?,
            None => ErrorType::ALL.to_vec(),
        };
        let qualities: Vec<Quality> = match list(&args.qualities, &file, "qualities")? {
            Some(v) => parse_all(&v)?,
            None => Quality::ALL.to_vec(),
        };
        let n_labs: Vec<usize> = match list(&args.n_lab, &file, "n_lab")? {
            Some(v) => v
                .iter()
                .map(|s| s.parse().map_err(|_| CliError::schema(format!("n_lab '{s}' is not an integer"))))
                .collect::<Result<_, _>>()?,
            None if full => FULL_N_LAB.to_vec(),
            None => vec![DESK_N_LAB],
        };
        let n = args.n.or(usize_of(file.u64("n")?)).unwrap_or(if full { FULL_N } else { DESK_N });
        let replicates = args
            .replicates
            .or(usize_of(file.u64("replicates")?))
            .unwrap_or(if full { FULL_REPLICATES } else { DESK_REPLICATES });
        let seed = args.seed.or(file.u64("seed")?).unwrap_or(DEFAULT_SEED);
        let methods: Vec<Method> = match list(&args.methods, &file, "methods")? {
            Some(v) => parse_all(&v)?,
            None => Method::ALL.to_vec(),
        };
        if methods.is_empty() {
            return Err(CliError::schema("no methods requested"));
        }
        let out = match &args.out {
            Some(p) => Some(p.clone()),
            None => file.string("out")?.map(PathBuf::from),
        };
        let format = match &args.format {
            Some(f) => f.clone(),
            None => file.string("format")?.unwrap_or_else(|| "csv".into()),
        }
        .parse()?;
        let scenarios = scenario_grid(&families, &error_types, &qualities, &n_labs, n, replicates, seed);
        if scenarios.is_empty() {
            return Err(CliError::schema("the scenario grid is empty"));
        }
        for s in &scenarios {
            s.validate().map_err(|e| CliError::schema(format!("{}: {e}", s.id())))?;
        }
        Ok(SimulateConfig { scenarios, methods, out, format })
    }
}

fn thread_count() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(CliError::schema(format!("{THREADS_ENV}='{v}' must be a positive integer"))),
        },
    }
}

fn run_all(cfg: &SimulateConfig) -> Result<Vec<crate::simulation::SimReport>, CliError> {
    let mut reports = Vec::with_capacity(cfg.scenarios.len());
    for s in &cfg.scenarios {
        let report = run_scenario(s, &cfg.methods).map_err(|e| match e {
            Error::FailureBudgetExceeded { .. } => CliError::new(EXIT_FAILURE_BUDGET, e.to_string()),
            other => CliError::new(EXIT_SOLVER, format!("{}: {other}", s.id())),
        })?;
        eprintln!("{}", report.summary_line());
        reports.push(report);
    }
    Ok(reports)
}

pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<(), CliError> {
    let reports = match thread_count()? {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::io(format!("cannot start thread pool: {e}")))?;
            pool.install(|| run_all(cfg))?
        }
        None => run_all(cfg)?,
    };
    let mut bytes = Vec::new();
    let written = match cfg.format {
        OutputFormat::Csv => write_csv(&reports, &mut bytes),
        OutputFormat::Json => write_json(&reports, &mut bytes),
    };
    written.map_err(|e| CliError::io(e.to_string()))?;
    emit(cfg.out.as_ref(), &bytes)
}
