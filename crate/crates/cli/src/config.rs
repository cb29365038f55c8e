use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, ValueEnum};
use serde::Deserialize;

use sopf_core::formulation::{BigMMode, BuildOptions, ModelKind};
use sopf_core::net_model::{load_case, load_scenarios, BranchId, PowerSystemCase};
use sopf_core::solver::SolveOptions;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SOPF_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Text,
}

/// Flags shared by every command. A JSON config file may set any of them
/// under the same kebab-case names; the command line wins.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct Flags {
    /// JSON file with defaults for any flag
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// case document
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// scenario overlay replacing the case's scenarios
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// models to run: r, n, e, enr (comma separated or repeated)
    #[arg(long, value_delimiter = ',')]
    pub model: Vec<String>,
    /// outaged branch ids replacing the case's contingency set
    #[arg(long, value_delimiter = ',')]
    pub contingencies: Option<Vec<BranchId>>,
    /// switching budget per scenario and contingency
    #[arg(long)]
    pub z_max: Option<u32>,
    /// bus angle bound in radians
    #[arg(long)]
    pub angle_bound: Option<f64>,
    /// big-M of the switched flow rows: tight, path, or a constant in per unit
    #[arg(long)]
    pub big_m: Option<String>,
    #[arg(long, action = ArgAction::Set)]
    pub enable_reserve: Option<bool>,
    #[arg(long, action = ArgAction::Set)]
    pub ignore_ramp: Option<bool>,
    #[arg(long)]
    pub feasibility_tol: Option<f64>,
    #[arg(long)]
    pub optimality_tol: Option<f64>,
    #[arg(long)]
    pub mip_gap: Option<f64>,
    #[arg(long)]
    pub node_limit: Option<usize>,
    /// seconds
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub iteration_limit: Option<usize>,
    /// output directory [default: $SOPF_OUT_DIR or .]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// table format
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

macro_rules! prefer {
    ($a:ident, $b:ident, $($f:ident),*) => { $( if $a.$f.is_none() { $a.$f = $b.$f.take(); } )* };
}

impl Flags {
    /// Fills unset flags from the config file, if any.
    pub fn merged(mut self) -> Result<Flags> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
        let mut file: Flags = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // relative paths in the config file are relative to the file
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for p in [&mut file.case, &mut file.scenarios, &mut file.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        prefer!(
            self, file, case, scenarios, contingencies, z_max, angle_bound, big_m, enable_reserve, ignore_ramp,
            feasibility_tol, optimality_tol, mip_gap, node_limit, time_limit, iteration_limit, out_dir, format
        );
        if self.model.is_empty() {
            self.model = file.model;
        }
        Ok(self)
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: PowerSystemCase,
    pub models: Vec<ModelKind>,
    pub build: BuildOptions,
    pub solve: SolveOptions,
    pub out_dir: PathBuf,
    pub format: Format,
}

pub fn parse_big_m(s: &str) -> Result<BigMMode> {
    match s {
        "tight" => Ok(BigMMode::PerLineTight),
        "path" => Ok(BigMMode::ShortestPath),
        v => match v.parse::<f64>() {
            Ok(x) => Ok(BigMMode::Constant(x)),
            Err(_) => bail!("--big-m expects tight, path or a number, got {v:?}"),
        },
    }
}

pub fn parse_models(names: &[String]) -> Result<Vec<ModelKind>> {
    let mut out = Vec::new();
    for n in names {
        let k = ModelKind::from_short(n.trim()).with_context(|| format!("unknown model {n:?}; expected r, n, e or enr"))?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out.sort();
    Ok(out)
}

impl RunConfig {
    /// `default_models` applies when no model is selected.
    pub fn resolve(flags: Flags, default_models: &[ModelKind]) -> Result<RunConfig> {
        let flags = flags.merged()?;
        let path = flags.case.as_ref().context("--case is required")?;
        let text = std::fs::read_to_string(path).with_context(|| format!("reading case {}", path.display()))?;
        let mut case = load_case(&text).with_context(|| format!("loading case {}", path.display()))?;
        if let Some(p) = &flags.scenarios {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading scenarios {}", p.display()))?;
            let set = load_scenarios(&text).with_context(|| format!("loading scenarios {}", p.display()))?;
            case = case.with_scenarios(set)?;
        }
        if let Some(c) = &flags.contingencies {
            case = case.with_contingencies(c.clone())?;
        }
        if let Some(z) = flags.z_max {
            case = case.with_z_max(z);
        }
        let mut models = parse_models(&flags.model)?;
        if models.is_empty() {
            models = default_models.to_vec();
        }
        if models.is_empty() {
            bail!("select at least one model with --model");
        }
        let mut build = BuildOptions::default();
        if let Some(a) = flags.angle_bound {
            build.angle_bound = Some(a);
        }
        if let Some(m) = &flags.big_m {
            build.big_m = parse_big_m(m)?;
        }
        if let Some(v) = flags.enable_reserve {
            build.enable_reserve = v;
        }
        if let Some(v) = flags.ignore_ramp {
            build.ignore_ramp = v;
        }
        let mut solve = SolveOptions::default();
        if let Some(v) = flags.feasibility_tol {
            solve.feasibility_tol = v;
        }
        if let Some(v) = flags.optimality_tol {
            solve.optimality_tol = v;
        }
        if let Some(v) = flags.mip_gap {
            solve.mip_gap = v;
        }
        if let Some(v) = flags.iteration_limit {
            solve.iteration_limit = v;
        }
        solve.node_limit = flags.node_limit;
        if let Some(t) = flags.time_limit {
            if !(t > 0.0) {
                bail!("--time-limit must be positive");
            }
            solve.time_limit = Some(Duration::from_secs_f64(t));
        }
        let out_dir = flags
            .out_dir
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(RunConfig { case, models, build, solve, out_dir, format: flags.format.unwrap_or_default() })
    }
}
