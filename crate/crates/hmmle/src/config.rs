//! Experiment and model configuration.
//!
//! Both files use a flat `key = value` format with `#` comments. Experiment
//! keys carry a section prefix (`model.`, `run.`, `output.`); the model
//! description file uses bare keys (`family`, `dim`, `h`, `theta_min`,
//! `theta_max`, `nu`, and for the affine family `base` and `slope`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::model::{Family, ParamModel, SimplexVec};
use crate::{Error, Result};

/// Experiment commands accepted by the runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Filter,
    Estimate,
    Fisher,
    Profile,
    StudyConsistency,
    StudyNormality,
    StudyMoments,
    StudyLln,
    StabilitySuite,
    Identifiability,
}

impl Command {
    pub fn parse(name: &str) -> Result<Command> {
        Ok(match name {
            "simulate" => Command::Simulate,
            "filter" => Command::Filter,
            "estimate" => Command::Estimate,
            "fisher" => Command::Fisher,
            "profile" => Command::Profile,
            "study-consistency" => Command::StudyConsistency,
            "study-normality" => Command::StudyNormality,
            "study-moments" => Command::StudyMoments,
            "study-lln" => Command::StudyLln,
            "stability-suite" => Command::StabilitySuite,
            "identifiability" => Command::Identifiability,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown command `{other}`"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Filter => "filter",
            Command::Estimate => "estimate",
            Command::Fisher => "fisher",
            Command::Profile => "profile",
            Command::StudyConsistency => "study-consistency",
            Command::StudyNormality => "study-normality",
            Command::StudyMoments => "study-moments",
            Command::StudyLln => "study-lln",
            Command::StabilitySuite => "stability-suite",
            Command::Identifiability => "identifiability",
        }
    }
}

/// Parse flat `key = value` text. Later occurrences of a key override
/// earlier ones.
pub fn parse_kv(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.display().to_string(),
                msg: format!("line {}: expected `key = value`, got `{line}`", lineno + 1),
            });
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Numeric run parameters with per-command defaults applied at parse time.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub t: f64,
    pub dt: f64,
    pub m: usize,
    pub theta: f64,
    pub theta0: f64,
    pub t_list: Vec<f64>,
    pub theta_list: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub grid_size: usize,
    pub refine_tol: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub u_points: usize,
    pub n_samples: usize,
    pub p_list: Vec<u32>,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            t: 400.0,
            dt: 1e-3,
            m: 300,
            theta: 1.5,
            theta0: 1.0,
            t_list: vec![100.0, 200.0, 400.0],
            theta_list: vec![1.1, 1.2, 1.4],
            theta_grid: vec![1.25, 1.5, 2.0, 3.0],
            grid_size: 64,
            refine_tol: 1e-6,
            u_min: -5.0,
            u_max: 5.0,
            u_points: 21,
            n_samples: 10_000,
            p_list: vec![1, 2, 4],
        }
    }
}

/// A fully validated experiment: command, model, parameters, seed, output.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Command,
    pub model_path: PathBuf,
    pub model: ParamModel,
    pub run: RunParams,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    /// Raw key-value pairs as parsed, for manifest snapshots.
    pub raw: BTreeMap<String, String>,
}

fn parse_scalar<T: std::str::FromStr>(path: &Path, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        msg: format!("key `{key}`: cannot parse `{value}`"),
    })
}

fn parse_list<T: std::str::FromStr>(path: &Path, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| parse_scalar(path, key, s.trim()))
        .collect()
}

/// Parse and validate an experiment configuration file. The model file path
/// is resolved relative to the configuration file's directory.
pub fn load_experiment(
    command: Command,
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
    workers: Option<usize>,
) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Error::io(config_path.display().to_string(), e))?;
    let map = parse_kv(&text, config_path)?;

    let mut run = RunParams::default();
    let mut model_file: Option<String> = None;
    let mut master_seed: Option<u64> = seed_override;
    let mut out_dir: Option<PathBuf> = None;

    for (key, value) in &map {
        match key.as_str() {
            "model.file" => model_file = Some(value.clone()),
            "run.t" => run.t = parse_scalar(config_path, key, value)?,
            "run.dt" => run.dt = parse_scalar(config_path, key, value)?,
            "run.m" => run.m = parse_scalar(config_path, key, value)?,
            "run.theta" => run.theta = parse_scalar(config_path, key, value)?,
            "run.theta0" => run.theta0 = parse_scalar(config_path, key, value)?,
            "run.t_list" => run.t_list = parse_list(config_path, key, value)?,
            "run.theta_list" => run.theta_list = parse_list(config_path, key, value)?,
            "run.theta_grid" => run.theta_grid = parse_list(config_path, key, value)?,
            "run.grid_size" => run.grid_size = parse_scalar(config_path, key, value)?,
            "run.refine_tol" => run.refine_tol = parse_scalar(config_path, key, value)?,
            "run.u_min" => run.u_min = parse_scalar(config_path, key, value)?,
            "run.u_max" => run.u_max = parse_scalar(config_path, key, value)?,
            "run.u_points" => run.u_points = parse_scalar(config_path, key, value)?,
            "run.n_samples" => run.n_samples = parse_scalar(config_path, key, value)?,
            "run.p_list" => run.p_list = parse_list(config_path, key, value)?,
            "run.master_seed" => {
                let parsed = parse_scalar(config_path, key, value)?;
                if master_seed.is_none() {
                    master_seed = Some(parsed);
                }
            }
            "output.dir" => out_dir = Some(PathBuf::from(value)),
            other => {
                return Err(Error::Parse {
                    path: config_path.display().to_string(),
                    msg: format!("unknown key `{other}`"),
                })
            }
        }
    }

    let model_file = model_file.ok_or_else(|| Error::Config(format!(
        "{}: missing required key `model.file`",
        config_path.display()
    )))?;
    let master_seed = master_seed.ok_or_else(|| Error::Config(format!(
        "{}: missing required key `run.master_seed` (no time-based default)",
        config_path.display()
    )))?;
    if !(run.dt > 0.0) {
        return Err(Error::Config(format!("run.dt must be positive: {}", run.dt)));
    }
    if !(run.t > 0.0) {
        return Err(Error::Config(format!("run.t must be positive: {}", run.t)));
    }

    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let model_path = base.join(&model_file);
    if !model_path.is_file() {
        return Err(Error::Config(format!(
            "model file not found: {}",
            model_path.display()
        )));
    }
    let model = load_model(&model_path)?;

    let out_dir = out_override
        .map(Path::to_path_buf)
        .or(out_dir)
        .unwrap_or_else(|| PathBuf::from("out"));

    Ok(ExperimentConfig {
        command,
        model_path,
        model,
        run,
        master_seed,
        out_dir,
        workers,
        raw: map,
    })
}

/// Parse a model description file into a validated `ParamModel`.
pub fn load_model(path: &Path) -> Result<ParamModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let map = parse_kv(&text, path)?;
    let get = |key: &str| -> Result<&String> {
        map.get(key).ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            msg: format!("missing required key `{key}`"),
        })
    };

    let family_name = get("family")?.as_str();
    let theta_min: f64 = parse_scalar(path, "theta_min", get("theta_min")?)?;
    let theta_max: f64 = parse_scalar(path, "theta_max", get("theta_max")?)?;
    let nu_entries: Vec<f64> = parse_list(path, "nu", get("nu")?)?;
    let nu = SimplexVec::new(nu_entries)?;

    match family_name {
        "two_state" => {
            if let Some(dim) = map.get("dim") {
                let d: usize = parse_scalar(path, "dim", dim)?;
                if d != 2 {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        msg: format!("two_state family requires dim = 2, got {d}"),
                    });
                }
            }
            if let Some(h) = map.get("h") {
                let h: Vec<f64> = parse_list(path, "h", h)?;
                if h != [0.0, 1.0] {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        msg: format!("two_state family fixes h = 0, 1; got {h:?}"),
                    });
                }
            }
            crate::model::two_state_model((theta_min, theta_max), nu)
        }
        "affine" => {
            let dim: usize = parse_scalar(path, "dim", get("dim")?)?;
            let h: Vec<f64> = parse_list(path, "h", get("h")?)?;
            let base = parse_matrix(path, "base", get("base")?, dim)?;
            let slope = parse_matrix(path, "slope", get("slope")?, dim)?;
            let family = Family::Affine { dim, base, slope };
            ParamModel::new(family, h, (theta_min, theta_max), nu)
        }
        other => Err(Error::Parse {
            path: path.display().to_string(),
            msg: format!("unknown family `{other}` (expected two_state or affine)"),
        }),
    }
}

/// Matrices are written row-major with `;` separating rows:
/// `base = -1, 1; 1, -1`.
fn parse_matrix(path: &Path, key: &str, value: &str, dim: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(dim * dim);
    let rows: Vec<&str> = value.split(';').collect();
    if rows.len() != dim {
        return Err(Error::Parse {
            path: path.display().to_string(),
            msg: format!("key `{key}`: expected {dim} rows, got {}", rows.len()),
        });
    }
    for row in rows {
        let entries: Vec<f64> = parse_list(path, key, row)?;
        if entries.len() != dim {
            return Err(Error::Parse {
                path: path.display().to_string(),
                msg: format!(
                    "key `{key}`: expected {dim} entries per row, got {}",
                    entries.len()
                ),
            });
        }
        out.extend(entries);
    }
    Ok(out)
}
