//! Experiment configuration: JSON file, command-line overrides, defaults.
//!
//! Precedence is flags > file > defaults. Everything is validated before any
//! computation starts.

use std::path::{Path, PathBuf};

use mimo_bc::linalg::{CMat, C64};
use mimo_bc::{CorrelationModel, SystemProfile};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Table1,
    RateLoss,
    Curves,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelModel {
    /// i.i.d. CN(0,1) entries, then the correlation model.
    Gaussian,
    /// Users occupy orthonormal column blocks of a Haar unitary, so the
    /// rate loss vanishes; the correlation model is still applied.
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CorrelationSpec {
    Identity {},
    /// One path-loss gain per user, `C_k = g_k I`.
    Scalar { gains: Vec<f64> },
    /// One Hermitian matrix per user; entries are `[re, im]` pairs.
    Matrices { blocks: Vec<Vec<Vec<[f64; 2]>>> },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraProfile {
    pub antennas: Vec<usize>,
    /// Base-station antenna counts; defaults to the table columns.
    #[serde(default)]
    pub base_antennas: Option<Vec<usize>>,
}

/// Raw contents of a config file; every field optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: Option<Experiment>,
    pub base_antennas: Option<usize>,
    pub antennas: Option<Vec<usize>>,
    pub weights: Option<Vec<f64>>,
    pub correlation: Option<CorrelationSpec>,
    pub channel_model: Option<ChannelModel>,
    pub ptx_grid_db: Option<String>,
    pub reference_ptx_db: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub monte_carlo: Option<bool>,
    pub extra_profiles: Option<Vec<ExtraProfile>>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub validation_channels: Option<usize>,
}

/// Scalar overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub ptx_grid_db: Option<String>,
    pub monte_carlo: bool,
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub profile: SystemProfile,
    pub correlation: CorrelationModel,
    pub channel_model: ChannelModel,
    pub grid_db: Vec<f64>,
    pub reference_ptx_db: f64,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub monte_carlo: bool,
    pub extra_profiles: Vec<(Vec<usize>, Vec<usize>)>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub validation_channels: usize,
}

pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses `start:step:stop` into an ascending grid including `stop`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("power grid '{spec}' is not start:step:stop"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [start, step, stop] = parts[..] else {
        return Err(bad());
    };
    if !(start.is_finite() && step.is_finite() && stop.is_finite()) || step <= 0.0 || stop < start {
        return Err(CliError::Config(format!(
            "power grid '{spec}' needs finite values, step > 0 and stop >= start"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 10_000 {
        return Err(CliError::Config(format!("power grid '{spec}' has more than 10000 points")));
    }
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

fn build_correlation(profile: &SystemProfile, spec: &CorrelationSpec) -> Result<CorrelationModel, CliError> {
    let model = match spec {
        CorrelationSpec::Identity {} => CorrelationModel::identity(profile),
        CorrelationSpec::Scalar { gains } => CorrelationModel::scalar(profile, gains)?,
        CorrelationSpec::Matrices { blocks } => {
            let mats = blocks
                .iter()
                .enumerate()
                .map(|(k, rows)| {
                    let n = rows.len();
                    if rows.iter().any(|row| row.len() != n) {
                        return Err(CliError::Config(format!("correlation block {k} is not square")));
                    }
                    Ok(CMat::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
                })
                .collect::<Result<Vec<_>, _>>()?;
            CorrelationModel::from_matrices(profile, mats)?
        }
    };
    Ok(model)
}

impl ExperimentConfig {
    /// Merges defaults, file and flags for `experiment` and validates the result.
    pub fn resolve(experiment: Experiment, file: FileConfig, flags: Overrides) -> Result<Self, CliError> {
        if let Some(e) = file.experiment {
            if e != experiment {
                return Err(CliError::Config(format!(
                    "config is for experiment {e:?} but {experiment:?} was requested"
                )));
            }
        }
        let profile = SystemProfile::new(
            file.base_antennas.unwrap_or(5),
            file.antennas.unwrap_or_else(|| vec![2, 2]),
            file.weights,
        )?;
        let default_corr = CorrelationSpec::Scalar {
            gains: if profile.users() == 2 {
                vec![1.0, 2.0]
            } else {
                vec![1.0; profile.users()]
            },
        };
        let correlation = build_correlation(&profile, file.correlation.as_ref().unwrap_or(&default_corr))?;
        let grid_spec = flags.ptx_grid_db.or(file.ptx_grid_db).unwrap_or_else(|| "0:5:40".into());
        let grid_db = parse_grid(&grid_spec)?;

        let reference_ptx_db = file.reference_ptx_db.unwrap_or(30.0);
        if !reference_ptx_db.is_finite() {
            return Err(CliError::Config("reference_ptx_db must be finite".into()));
        }
        let trials = flags.trials.or(file.trials).unwrap_or(1000);
        if trials == 0 {
            return Err(CliError::Config("trials must be positive".into()));
        }
        let min_trials = match experiment {
            Experiment::RateLoss => 1,
            _ => 2,
        };
        if trials < min_trials {
            return Err(CliError::Config(format!("{experiment:?} needs at least {min_trials} trials")));
        }
        let tolerance = file.tolerance.unwrap_or(mimo_bc::baseline::DEFAULT_TOLERANCE);
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(CliError::Config(format!("tolerance must be positive, got {tolerance}")));
        }
        let max_iterations = file.max_iterations.unwrap_or(mimo_bc::baseline::DEFAULT_MAX_ITERATIONS);
        if max_iterations == 0 {
            return Err(CliError::Config("max_iterations must be positive".into()));
        }
        let validation_channels = file.validation_channels.unwrap_or(1000);
        if validation_channels == 0 {
            return Err(CliError::Config("validation_channels must be positive".into()));
        }
        let extra_profiles = file
            .extra_profiles
            .unwrap_or_default()
            .into_iter()
            .map(|p| {
                let columns = p.base_antennas.unwrap_or_else(|| mimo_bc::ergodic::TABLE_COLUMNS.collect());
                // validate shape once at the largest column
                let n = columns.iter().copied().max().unwrap_or(0).max(p.antennas.iter().sum());
                SystemProfile::new(n, p.antennas.clone(), None)?;
                Ok((p.antennas, columns))
            })
            .collect::<Result<Vec<_>, CliError>>()?;

        Ok(Self {
            experiment,
            profile,
            correlation,
            channel_model: file.channel_model.unwrap_or(ChannelModel::Gaussian),
            grid_db,
            reference_ptx_db,
            trials,
            seed: flags.seed.or(file.seed).unwrap_or(1),
            output: flags.output.or(file.output),
            format: flags.format.or(file.format).unwrap_or(Format::Csv),
            monte_carlo: flags.monte_carlo || file.monte_carlo.unwrap_or(false),
            extra_profiles,
            tolerance,
            max_iterations,
            validation_channels,
        })
    }
}
