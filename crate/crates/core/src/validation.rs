//! Property checks over random channels, reported with measured margins.
//!
//! Each check records the worst observed value of its statistic against a
//! fixed threshold; `margin = threshold - measured` is positive on success.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baseline::{dual_mac_sum_capacity, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::bc::{self, BcSolution};
use crate::ergodic;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::mac::{self, MacCovarianceSet};
use crate::system::{sample_channel_with, trial_rng, CorrelationModel, SystemProfile};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub margin: f64,
    pub detail: String,
}

impl PropertyResult {
    /// Passes when `measured <= threshold`.
    fn at_most(name: &str, measured: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: measured <= threshold,
            measured,
            threshold,
            margin: threshold - measured,
            detail,
        }
    }

    /// Passes when `measured >= threshold`.
    fn at_least(name: &str, measured: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: measured >= threshold,
            measured,
            threshold,
            margin: measured - threshold,
            detail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub profile: SystemProfile,
    pub correlation: CorrelationModel,
    /// Random channels per deterministic property.
    pub channels: usize,
    /// Base Monte Carlo trial count (scaled up for `N = r`).
    pub trials: usize,
    pub seed: u64,
    /// Extra `N = r` profile for the Monte Carlo check.
    pub stress_profile: Option<SystemProfile>,
    /// Transmit powers (linear) for the finite-power checks.
    pub powers: Vec<f64>,
}

impl SuiteConfig {
    pub fn new(profile: SystemProfile, correlation: CorrelationModel) -> Self {
        let stress = SystemProfile::new(profile.total_antennas(), profile.antennas().to_vec(), None).ok();
        Self {
            profile,
            correlation,
            channels: 1000,
            trials: 10_000,
            seed: 1,
            stress_profile: stress,
            powers: vec![1e2, 1e3, 1e4, 1e6],
        }
    }
}

type Check = fn(&SuiteConfig) -> Result<Vec<PropertyResult>>;

/// Runs every property; numerical failures inside a check become failed results.
pub fn run_suite(config: &SuiteConfig) -> Vec<PropertyResult> {
    let mut results = Vec::new();
    let checks: [(&str, Check); 9] = [
        ("rate_forms", check_rate_forms),
        ("block_diagonalization", check_block_diagonalization),
        ("rate_loss", check_rate_loss),
        ("power_split", check_power_split),
        ("closed_forms", check_closed_forms),
        ("monte_carlo", check_monte_carlo),
        ("sum_capacity", check_sum_capacity),
        ("convergence", check_convergence),
        ("eigenbasis", check_eigenbasis),
    ];
    for (group, check) in checks {
        match check(config) {
            Ok(mut r) => results.append(&mut r),
            Err(e) => results.push(PropertyResult {
                name: group.into(),
                passed: false,
                measured: f64::NAN,
                threshold: f64::NAN,
                margin: f64::NAN,
                detail: e.to_string(),
            }),
        }
    }
    results
}

fn channels(config: &SuiteConfig, stream: u64) -> impl Iterator<Item = Result<crate::ChannelRealization>> + '_ {
    (0..config.channels as u64).map(move |i| {
        let mut rng = trial_rng(config.seed ^ stream, i);
        sample_channel_with(&config.profile, &config.correlation, &mut rng)
    })
}

fn check_rate_forms(config: &SuiteConfig) -> Result<Vec<PropertyResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut worst: f64 = 0.0;
    let count = config.channels.max(100);
    for i in 0..count as u64 {
        let h = sample_channel_with(&config.profile, &config.correlation, &mut trial_rng(config.seed ^ 0x11, i))?;
        let factors: Vec<CMat> = h
            .antennas()
            .iter()
            .map(|&a| linalg::complex_gaussian(a, a, &mut rng).scale(10f64.powf(rng.random_range(-1.0..2.0))))
            .collect();
        let q = MacCovarianceSet::from_factors(&factors)?;
        for k in 0..h.users() {
            let a = mac::exact_user_rate(&h, &q, k)?;
            let b = mac::exact_user_rate_gram_form(&h, &factors, k)?;
            worst = worst.max((a - b).abs());
        }
    }
    Ok(vec![PropertyResult::at_most(
        "mac_rate_determinant_forms_agree",
        worst,
        1e-10,
        format!("{count} random covariance sets"),
    )])
}

fn check_block_diagonalization(config: &SuiteConfig) -> Result<Vec<PropertyResult>> {
    let power = 100.0;
    let r = config.profile.total_antennas() as f64;
    let n = config.profile.base_antennas();
    let (mut residual, mut column, mut spectrum, mut total, mut idempotent): (f64, f64, f64, f64, f64) =
        (0.0, 0.0, 0.0, 0.0, 0.0);
    for h in channels(config, 0x22) {
        let h = h?;
        let sol = BcSolution::new(&h, power)?;
        residual = residual.max(bc::block_diagonalization_residual(&h, &sol.precoders));
        let mut trace = 0.0;
        for (k, s) in sol.covariances.iter().enumerate() {
            for c in sol.precoders[k].column_iter() {
                column = column.max((c.norm() - (power / r).sqrt()).abs());
            }
            let exact = bc::bc_covariance(&h, power, k)?;
            let ev = linalg::hermitian_eigenvalues(&exact);
            let zeros = n - h.antennas()[k];
            for (i, v) in ev.iter().enumerate() {
                let target = if i < zeros { 0.0 } else { power / r };
                spectrum = spectrum.max((v - target).abs());
            }
            let proj = exact.scale(r / power);
            idempotent = idempotent.max((&proj * &proj - &proj).norm());
            trace += s.trace().re;
        }
        total = total.max((trace - power).abs());
    }
    let detail = format!("{} channels at P = {power}", config.channels);
    Ok(vec![
        PropertyResult::at_most("bd_residual", residual, 1e-9, detail.clone()),
        PropertyResult::at_most("precoder_column_norm", column, 1e-10 * (power / r).sqrt().max(1.0), detail.clone()),
        PropertyResult::at_most("covariance_spectrum", spectrum, 1e-8 * power, detail.clone()),
        PropertyResult::at_most("total_power", total, 1e-8 * power, detail.clone()),
        PropertyResult::at_most("projector_idempotent", idempotent, 1e-9, detail),
    ])
}

fn check_rate_loss(config: &SuiteConfig) -> Result<Vec<PropertyResult>> {
    let gains: Vec<f64> = (1..=config.profile.users()).map(|k| k as f64).collect();
    let near_far = CorrelationModel::scalar(&config.profile, &gains)?;
    let mut lowest = f64::INFINITY;
    let mut invariance: f64 = 0.0;
    for h in channels(config, 0x33) {
        let h = h?;
        let loss = mac::instantaneous_rate_loss(&h)?;
        lowest = lowest.min(loss);
        for corr in [&config.correlation, &near_far] {
            let shifted = h.correlated(corr)?;
            invariance = invariance.max((mac::instantaneous_rate_loss(&shifted)? - loss).abs());
        }
    }
    let detail = format!("{} channels", config.channels);
    Ok(vec![
        PropertyResult::at_least("rate_loss_nonnegative", lowest, -1e-10, detail.clone()),
        PropertyResult::at_most("rate_loss_correlation_invariant", invariance, 1e-9, detail),
    ])
}

fn check_power_split(config: &SuiteConfig) -> Result<Vec<PropertyResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x44);
    let power = 1e3;
    let profile = &config.profile;
    let mut worst = f64::NEG_INFINITY;
    for (i, h) in channels(config, 0x44).take(10).enumerate() {
        let h = h?;
        let weights: Vec<f64> = if i == 0 {
            profile.weights().to_vec()
        } else {
            (0..profile.users()).map(|_| rng.random_range(0.1..3.0)).collect()
        };
        let p = SystemProfile::new(profile.base_antennas(), profile.antennas().to_vec(), Some(weights))?;
        let best = mac::asymptotic_weighted_sum_rate(&h, &p, power)?;
        let split = mac::optimal_power_split(&p, power)?;
        for _ in 0..10 {
            // random feasible direction: keep sum r_k lambda_k fixed
            let mut levels: Vec<f64> = split
                .levels
                .iter()
                .map(|l| l * rng.random_range(0.5..1.5))
                .collect();
            let used: f64 = levels.iter().zip(p.antennas()).map(|(l, &a)| l * a as f64).sum();
            levels.iter_mut().for_each(|l| *l *= power / used);
            let value = mac::asymptotic_weighted_sum_rate_at(&h, p.weights(), &levels)?;
            worst = worst.max(value - best);
        }
    }
    Ok(vec![PropertyResult::at_most(
        "power_split_optimal",
        worst,
        1e-9,
        "100 feasible perturbations".into(),
    )])
}

fn check_closed_forms(_config: &SuiteConfig) -> Result<Vec<PropertyResult>> {
    let mut equal: f64 = 0.0;
    let mut single: f64 = 0.0;
    for k in 1..=4 {
        for rbar in 1..=3 {
            for n in (k * rbar)..=14 {
                let a = ergodic::ergodic_rate_loss_equal(k, rbar, n)?;
                let p = SystemProfile::new(n, vec![rbar; k], None)?;
                equal = equal.max((a - ergodic::ergodic_rate_loss(&p)?).abs());
                if rbar == 1 {
                    single = single.max((ergodic::ergodic_rate_loss_single(k, n)? - a).abs());
                }
            }
        }
    }
    // strictly decreasing in N for every table row
    let mut increase = f64::NEG_INFINITY;
    for row in ergodic::TABLE_ROWS {
        let values: Vec<f64> = (1..=14).filter_map(|n| row.rate_loss(n)).collect();
        for w in values.windows(2) {
            increase = increase.max(w[1] - w[0]);
        }
    }
    let ratio = ergodic::ergodic_rate_loss_equal(2, 3, 6)? / ergodic::ergodic_rate_loss_equal(3, 2, 6)?;
    Ok(vec![
        PropertyResult::at_most("equal_antenna_formula", equal, 1e-12, "K<=4, rbar<=3, N<=14".into()),
        PropertyResult::at_most("single_antenna_formula", single, 0.0, "exact".into()),
        PropertyResult::at_most("rate_loss_decreasing_in_n", increase, 0.0, "table rows, N<=14".into()),
        PropertyResult::at_most(
            "fewer_users_lose_less",
            (ratio - 0.65).abs(),
            0.01,
            format!("ratio {ratio:.4}"),
        ),
    ])
}

fn mc_check(name: &str, profile: &SystemProfile, correlation: &CorrelationModel, base: usize, seed: u64) -> Result<PropertyResult> {
    let trials = ergodic::scaled_trials(profile, base);
    let closed = ergodic::ergodic_rate_loss(profile)?;
    let est = ergodic::monte_carlo_rate_loss(profile, correlation, trials, seed)?;
    Ok(PropertyResult::at_most(
        name,
        est.z_score(closed),
        3.0,
        format!(
            "N={} r_k={:?}: MC {:.4} +- {:.4} ({} trials, {} redraws) vs closed form {:.4}",
            profile.base_antennas(),
            profile.antennas(),
            est.mean,
            est.std_error,
            trials,
            est.discarded,
            closed
        ),
    ))
}

fn check_monte_carlo(config: &SuiteConfig) -> Result<Vec<PropertyResult>> {
    let mut out = vec![mc_check(
        "monte_carlo_rate_loss",
        &config.profile,
        &config.correlation,
        config.trials,
        config.seed,
    )?];
    if let Some(stress) = &config.stress_profile {
        out.push(mc_check(
            "monte_carlo_rate_loss_square",
            stress,
            &CorrelationModel::identity(stress),
            config.trials,
            config.seed,
        )?);
    }
    Ok(out)
}

fn check_sum_capacity(config: &SuiteConfig) -> Result<Vec<PropertyResult>> {
    let mut decrease = f64::NEG_INFINITY;
    let mut dominance = f64::INFINITY;
    let mut non_converged = 0usize;
    let count = (config.channels / 20).max(5);
    for h in channels(config, 0x55).take(count) {
        let h = h?;
        for &p in &config.powers {
            let cap = dual_mac_sum_capacity(&h, p, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)?;
            non_converged += usize::from(!cap.converged);
            for w in cap.history.windows(2) {
                decrease = decrease.max(w[0] - w[1]);
            }
            let linear = BcSolution::new(&h, p)?.sum_rate();
            dominance = dominance.min(cap.sum_rate - linear);
        }
    }
    let detail = format!("{count} channels x {} powers, {non_converged} not converged", config.powers.len());
    Ok(vec![
        PropertyResult::at_most("waterfilling_monotone", decrease.max(0.0), 0.0, detail.clone()),
        PropertyResult::at_least("dpc_dominates_linear", dominance, -1e-9, detail),
    ])
}

fn check_convergence(config: &SuiteConfig) -> Result<Vec<PropertyResult>> {
    let mut powers = config.powers.clone();
    powers.sort_by(f64::total_cmp);
    let top = *powers.last().ok_or_else(|| Error::Validation("no powers configured".into()))?;
    let r = config.profile.total_antennas() as f64;
    let mut violations = 0usize;
    let mut final_gap: f64 = 0.0;
    let count = (config.channels / 20).max(5);
    for h in channels(config, 0x66).take(count) {
        let h = h?;
        let (mut prev_bc, mut prev_mac) = (f64::INFINITY, f64::INFINITY);
        for &p in &powers {
            let asym = mac::linear_asymptotic_sum_rate(&h, p)?;
            let bc_gap = (BcSolution::new(&h, p)?.sum_rate() - asym).abs();
            let q = MacCovarianceSet::scaled_identity(h.antennas(), &vec![p / r; h.users()])?;
            let mac_gap = (mac::exact_rates(&h, &q, &vec![1.0; h.users()])?.sum - asym).abs();
            violations += usize::from(bc_gap >= prev_bc) + usize::from(mac_gap >= prev_mac);
            prev_bc = bc_gap;
            prev_mac = mac_gap;
            if p == top {
                final_gap = final_gap.max(bc_gap).max(mac_gap);
            }
        }
    }
    Ok(vec![
        PropertyResult::at_most(
            "asymptotic_gap_monotone",
            violations as f64,
            0.0,
            format!("{count} channels, powers {powers:?}"),
        ),
        PropertyResult::at_most(
            "asymptotic_gap_at_top_power",
            final_gap,
            if top >= 1e6 { 1e-2 } else { f64::INFINITY },
            format!("P = {top}"),
        ),
    ])
}

fn check_eigenbasis(config: &SuiteConfig) -> Result<Vec<PropertyResult>> {
    let mut slack = f64::INFINITY;
    let mut at_eigenbasis: f64 = 0.0;
    for (i, h) in channels(config, 0x77).take(10).enumerate() {
        let h = h?;
        for k in 0..h.users() {
            let c = bc::eigenbasis_optimality_check(&h, k, 100, config.seed.wrapping_add(i as u64))?;
            slack = slack.min(c.min_slack);
            at_eigenbasis = at_eigenbasis.max(c.eigenbasis_slack.abs());
        }
    }
    Ok(vec![
        PropertyResult::at_least("hadamard_slack_nonnegative", slack, -1e-9, "10 channels x 100 unitaries".into()),
        PropertyResult::at_most("eigenbasis_attains_equality", at_eigenbasis, 1e-9, "10 channels".into()),
    ])
}
