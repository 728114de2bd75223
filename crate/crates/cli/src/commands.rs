//! The four experiments. Each renders its full output as a string so the
//! caller decides where it goes; identical configs give identical bytes.

use mimo_bc::baseline::{db_to_linear, generate_curves_with};
use mimo_bc::ergodic::{self, TABLE_ROWS};
use mimo_bc::linalg;
use mimo_bc::mac;
use mimo_bc::system::trial_rng;
use mimo_bc::validation::{run_suite, SuiteConfig};
use mimo_bc::{ChannelRealization, CorrelationModel, SystemProfile};
use serde_json::{json, Map, Value};

use crate::config::{ChannelModel, ExperimentConfig, Format};
use crate::error::CliError;
use crate::output::{cell, csv, fmt_g, json_document, num, opt_num};

/// Rendered output plus whether a validation property failed.
pub struct Report {
    pub body: String,
    pub failed: bool,
}

impl Report {
    fn ok(body: String) -> Self {
        Self { body, failed: false }
    }
}

fn profile_label(antennas: &[usize]) -> String {
    antennas.iter().map(usize::to_string).collect::<Vec<_>>().join("+")
}

struct TableLine {
    antennas: Vec<usize>,
    n: usize,
    closed_form: Option<f64>,
    mc: Option<ergodic::MonteCarloEstimate>,
}

fn table_line(antennas: Vec<usize>, n: usize, config: &ExperimentConfig) -> Result<TableLine, CliError> {
    let r: usize = antennas.iter().sum();
    if n < r {
        return Ok(TableLine {
            antennas,
            n,
            closed_form: None,
            mc: None,
        });
    }
    let profile = SystemProfile::new(n, antennas.clone(), None)?;
    let closed_form = ergodic::ergodic_rate_loss(&profile)?;
    let mc = if config.monte_carlo {
        let trials = ergodic::scaled_trials(&profile, config.trials);
        Some(ergodic::monte_carlo_rate_loss(
            &profile,
            &CorrelationModel::identity(&profile),
            trials,
            config.seed,
        )?)
    } else {
        None
    };
    Ok(TableLine {
        antennas,
        n,
        closed_form: Some(closed_form),
        mc,
    })
}

pub fn run_table1(config: &ExperimentConfig) -> Result<Report, CliError> {
    let mut lines = Vec::new();
    for row in TABLE_ROWS {
        let antennas = row.antennas();
        for n in ergodic::TABLE_COLUMNS {
            lines.push(table_line(antennas.clone(), n, config)?);
        }
    }
    for (antennas, columns) in &config.extra_profiles {
        for &n in columns {
            lines.push(table_line(antennas.clone(), n, config)?);
        }
    }
    let body = match config.format {
        Format::Csv => csv(
            &["profile", "N", "closed_form_bits", "mc_mean_bits", "mc_stderr"].map(String::from),
            &lines
                .iter()
                .map(|l| {
                    vec![
                        profile_label(&l.antennas),
                        l.n.to_string(),
                        cell(l.closed_form),
                        cell(l.mc.as_ref().map(|m| m.mean)),
                        cell(l.mc.as_ref().map(|m| m.std_error)),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
        Format::Json => {
            let cells: Vec<Value> = lines
                .iter()
                .map(|l| {
                    json!({
                        "profile": profile_label(&l.antennas),
                        "antennas": l.antennas,
                        "N": l.n,
                        "closed_form_bits": opt_num(l.closed_form),
                        "mc_mean_bits": opt_num(l.mc.as_ref().map(|m| m.mean)),
                        "mc_stderr": opt_num(l.mc.as_ref().map(|m| m.std_error)),
                        "mc_trials": l.mc.as_ref().map(|m| m.trials),
                        "mc_discarded": l.mc.as_ref().map(|m| m.discarded),
                    })
                })
                .collect();
            let mut body = Map::new();
            body.insert("seed".into(), json!(config.seed));
            body.insert("monte_carlo".into(), json!(config.monte_carlo));
            body.insert("trials".into(), json!(config.trials));
            body.insert("cells".into(), Value::Array(cells));
            json_document("table1", body)
        }
    };
    Ok(Report::ok(body))
}

fn draw_channel(config: &ExperimentConfig, seed: u64) -> mimo_bc::Result<ChannelRealization> {
    let profile = &config.profile;
    match config.channel_model {
        ChannelModel::Gaussian => mimo_bc::sample_channel(profile, &config.correlation, seed),
        ChannelModel::Orthogonal => {
            let u = linalg::random_unitary(profile.base_antennas(), &mut trial_rng(seed, 0));
            let h = u.columns(0, profile.total_antennas()).into_owned();
            ChannelRealization::from_composite(h, profile.antennas())?.correlated(&config.correlation)
        }
    }
}

struct RateLossRow {
    seed: u64,
    outcome: Result<(f64, Vec<f64>, f64), mimo_bc::Error>,
}

fn rate_loss_row(config: &ExperimentConfig, seed: u64) -> RateLossRow {
    let power = db_to_linear(config.reference_ptx_db);
    let outcome = draw_channel(config, seed).and_then(|h| {
        let loss = mac::instantaneous_rate_loss(&h)?;
        let rates = mac::asymptotic_rates(&h, &config.profile, power)?.rates;
        let dpc = mac::dpc_asymptotic_sum_rate(&h, power)?;
        Ok((loss, rates, dpc))
    });
    RateLossRow { seed, outcome }
}

fn status(e: &mimo_bc::Error) -> &'static str {
    match e {
        mimo_bc::Error::NumericalRank { .. } => "numerical_rank",
        _ => "error",
    }
}

pub fn run_rate_loss(config: &ExperimentConfig) -> Result<Report, CliError> {
    let rows: Vec<RateLossRow> = (0..config.trials as u64)
        .map(|i| rate_loss_row(config, config.seed.wrapping_add(i)))
        .collect();
    // anything but a rank defect is a hard failure
    for row in &rows {
        if let Err(e) = &row.outcome {
            if !matches!(e, mimo_bc::Error::NumericalRank { .. }) {
                return Err(e.clone().into());
            }
        }
    }
    let users = config.profile.users();
    let body = match config.format {
        Format::Csv => {
            let mut header = vec!["seed".to_string(), "status".into(), "delta_r".into()];
            header.extend((0..users).map(|k| format!("rate_user_{k}")));
            header.push("dpc_asymptote".into());
            let lines: Vec<Vec<String>> = rows
                .iter()
                .map(|row| {
                    let mut line = vec![row.seed.to_string()];
                    match &row.outcome {
                        Ok((loss, rates, dpc)) => {
                            line.push("ok".into());
                            line.push(fmt_g(*loss));
                            line.extend(rates.iter().map(|&x| fmt_g(x)));
                            line.push(fmt_g(*dpc));
                        }
                        Err(e) => {
                            line.push(status(e).into());
                            line.extend(std::iter::repeat_n(String::new(), users + 2));
                        }
                    }
                    line
                })
                .collect();
            csv(&header, &lines)
        }
        Format::Json => {
            let items: Vec<Value> = rows
                .iter()
                .map(|row| match &row.outcome {
                    Ok((loss, rates, dpc)) => json!({
                        "seed": row.seed,
                        "status": "ok",
                        "delta_r": num(*loss),
                        "user_rates": rates.iter().map(|&x| num(x)).collect::<Vec<_>>(),
                        "dpc_asymptote": num(*dpc),
                    }),
                    Err(e) => json!({
                        "seed": row.seed,
                        "status": status(e),
                        "delta_r": Value::Null,
                        "user_rates": Value::Null,
                        "dpc_asymptote": Value::Null,
                    }),
                })
                .collect();
            let mut body = Map::new();
            body.insert("base_antennas".into(), json!(config.profile.base_antennas()));
            body.insert("antennas".into(), json!(config.profile.antennas()));
            body.insert("reference_ptx_db".into(), num(config.reference_ptx_db));
            body.insert("rows".into(), Value::Array(items));
            json_document("rate-loss", body)
        }
    };
    Ok(Report::ok(body))
}

pub fn run_curves(config: &ExperimentConfig) -> Result<Report, CliError> {
    let curves = generate_curves_with(
        &config.profile,
        &config.correlation,
        &config.grid_db,
        config.trials,
        config.seed,
        config.tolerance,
        config.max_iterations,
    )?;
    let body = match config.format {
        Format::Csv => csv(
            &[
                "P_dB",
                "dpc_exact",
                "linear_exact",
                "dpc_affine",
                "linear_affine",
                "dpc_stderr",
                "linear_stderr",
            ]
            .map(String::from),
            &curves
                .points
                .iter()
                .map(|p| {
                    [
                        p.power_db,
                        p.dpc_sum_capacity,
                        p.linear_bd_sum_rate,
                        p.dpc_affine,
                        p.linear_affine,
                        p.dpc_stderr,
                        p.linear_stderr,
                    ]
                    .iter()
                    .map(|&x| fmt_g(x))
                    .collect()
                })
                .collect::<Vec<_>>(),
        ),
        Format::Json => {
            let points: Vec<Value> = curves
                .points
                .iter()
                .map(|p| {
                    json!({
                        "P_dB": num(p.power_db),
                        "dpc_exact": num(p.dpc_sum_capacity),
                        "linear_exact": num(p.linear_bd_sum_rate),
                        "dpc_affine": num(p.dpc_affine),
                        "linear_affine": num(p.linear_affine),
                        "dpc_stderr": num(p.dpc_stderr),
                        "linear_stderr": num(p.linear_stderr),
                        "dpc_gap": num(p.dpc_gap),
                        "dpc_gap_stderr": num(p.dpc_gap_stderr),
                        "linear_gap": num(p.linear_gap),
                        "linear_gap_stderr": num(p.linear_gap_stderr),
                    })
                })
                .collect();
            let mut body = Map::new();
            body.insert("trials".into(), json!(curves.trials));
            body.insert("seed".into(), json!(curves.seed));
            body.insert("non_converged".into(), json!(curves.non_converged));
            body.insert("discarded".into(), json!(curves.discarded));
            body.insert("rate_loss_bits".into(), num(curves.closed_form.rate_loss));
            body.insert("points".into(), Value::Array(points));
            json_document("curves", body)
        }
    };
    Ok(Report::ok(body))
}

pub fn run_validate(config: &ExperimentConfig) -> Result<Report, CliError> {
    let mut suite = SuiteConfig::new(config.profile.clone(), config.correlation.clone());
    suite.channels = config.validation_channels;
    suite.trials = config.trials;
    suite.seed = config.seed;
    let results = run_suite(&suite);
    let failed = results.iter().any(|r| !r.passed);
    let body = match config.format {
        Format::Csv => csv(
            &["property", "status", "measured", "threshold", "margin", "detail"].map(String::from),
            &results
                .iter()
                .map(|r| {
                    vec![
                        r.name.clone(),
                        if r.passed { "pass" } else { "fail" }.into(),
                        fmt_g(r.measured),
                        fmt_g(r.threshold),
                        fmt_g(r.margin),
                        r.detail.clone(),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
        Format::Json => {
            let items: Vec<Value> = results
                .iter()
                .map(|r| {
                    json!({
                        "property": r.name,
                        "passed": r.passed,
                        "measured": num(r.measured),
                        "threshold": num(r.threshold),
                        "margin": num(r.margin),
                        "detail": r.detail,
                    })
                })
                .collect();
            let mut body = Map::new();
            body.insert("passed".into(), json!(!failed));
            body.insert("seed".into(), json!(config.seed));
            body.insert("properties".into(), Value::Array(items));
            json_document("validate", body)
        }
    };
    Ok(Report { body, failed })
}
