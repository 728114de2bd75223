//! Finite-power DPC sum capacity and the ergodic rate curves.
//!
//! The DPC sum capacity equals the sum capacity of the dual MAC under a sum
//! power constraint. It is computed with sum-power iterative waterfilling
//! (averaged update), whose objective never decreases.

use nalgebra::DVector;
use serde::Serialize;

use crate::bc::BcSolution;
use crate::ergodic::{sample_trials, ErgodicClosedForm};
use crate::error::{Error, Result};
use crate::linalg::{self, real, CMat};
use crate::mac::{self, MacCovarianceSet};
use crate::system::{ChannelRealization, CorrelationModel, SystemProfile};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;

/// Waterfilling over parallel channels with power gains `gains`:
/// `p_i = (mu - 1/g_i)^+` with `sum p_i = power`.
pub fn waterfill(gains: &[f64], power: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let mut alloc = vec![0.0; gains.len()];
    if order.is_empty() || power <= 0.0 {
        return alloc;
    }
    let mut active = order.len();
    let mut mu;
    loop {
        let inv_sum: f64 = order[..active].iter().map(|&i| 1.0 / gains[i]).sum();
        mu = (power + inv_sum) / active as f64;
        if mu - 1.0 / gains[order[active - 1]] > 0.0 || active == 1 {
            break;
        }
        active -= 1;
    }
    for &i in &order[..active] {
        alloc[i] = (mu - 1.0 / gains[i]).max(0.0);
    }
    alloc
}

/// `log2 |I + sum_k H_k Q_k H_k^H|`.
pub fn mac_sum_rate(channel: &ChannelRealization, covariances: &[CMat]) -> Result<f64> {
    let mut x = linalg::identity(channel.base_antennas());
    for (h, q) in channel.user_channels().iter().zip(covariances) {
        x += h * q * h.adjoint();
    }
    linalg::log2_det_hpd(&x)
}

#[derive(Debug, Clone)]
pub struct SumCapacity {
    pub covariances: MacCovarianceSet,
    pub sum_rate: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after initialization and after every iteration.
    pub history: Vec<f64>,
}

/// Maximizes `log2 |I + sum_k H_k Q_k H_k^H|` over `Q_k >= 0` with
/// `sum_k tr Q_k <= P`.
///
/// Starts from `Q_k = P/r I`. Each iteration waterfills every user against
/// the others' current interference with the full power budget, then moves
/// `1/K` of the way to that point. Stops when an iteration gains less than
/// `tolerance` bits.
pub fn dual_mac_sum_capacity(
    channel: &ChannelRealization,
    total_power: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<SumCapacity> {
    if !(total_power > 0.0 && total_power.is_finite()) {
        return Err(Error::Validation(format!("transmit power {total_power} must be positive")));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
    if !(tolerance > 0.0) {
        return Err(Error::Validation(format!("tolerance {tolerance} must be positive")));
    }
    let users = channel.users();
    let r = channel.total_antennas() as f64;
    let mut q: Vec<CMat> = channel
        .antennas()
        .iter()
        .map(|&a| linalg::identity(a).scale(total_power / r))
        .collect();
    let mut objective = mac_sum_rate(channel, &q)?;
    let mut history = vec![objective];
    let mut converged = false;
    let mut iterations = 0;
    let step = 1.0 / users as f64;

    while iterations < max_iterations {
        iterations += 1;
        let mut total = linalg::identity(channel.base_antennas());
        for (h, qk) in channel.user_channels().iter().zip(&q) {
            total += h * qk * h.adjoint();
        }
        // effective single-user channels H_k^H Z_k^{-1} H_k
        let mut eigs = Vec::with_capacity(users);
        for (h, qk) in channel.user_channels().iter().zip(&q) {
            let z = linalg::hermitian_part(&(&total - h * qk * h.adjoint()));
            let chol = linalg::cholesky(&z)?;
            let m = h.adjoint() * chol.solve(h);
            eigs.push(linalg::hermitian_eigen(&m));
        }
        let gains: Vec<f64> = eigs.iter().flat_map(|(v, _)| v.iter().copied()).collect();
        let powers = waterfill(&gains, total_power);
        let mut offset = 0;
        let candidate: Vec<CMat> = eigs
            .iter()
            .zip(&q)
            .map(|((values, vectors), qk)| {
                let p = DVector::from_iterator(values.len(), powers[offset..offset + values.len()].iter().map(|&x| real(x)));
                offset += values.len();
                let s = vectors * CMat::from_diagonal(&p) * vectors.adjoint();
                linalg::hermitian_part(&(s.scale(step) + qk.scale(1.0 - step)))
            })
            .collect();
        let next = mac_sum_rate(channel, &candidate)?;
        if next < objective {
            // only possible through rounding once converged
            converged = objective - next < tolerance;
            break;
        }
        let gain = next - objective;
        q = candidate;
        objective = next;
        history.push(objective);
        if gain < tolerance {
            converged = true;
            break;
        }
    }
    Ok(SumCapacity {
        covariances: MacCovarianceSet::new(q)?,
        sum_rate: objective,
        iterations,
        converged,
        history,
    })
}

/// One grid point of the ergodic rate curves (bits/s/Hz).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub power_db: f64,
    pub power: f64,
    pub dpc_sum_capacity: f64,
    pub dpc_stderr: f64,
    pub linear_bd_sum_rate: f64,
    pub linear_stderr: f64,
    pub dpc_affine: f64,
    pub linear_affine: f64,
    /// Mean of per-trial `exact - instantaneous asymptote` for DPC. The
    /// asymptote averages to the affine line, so this estimates the curve's
    /// distance from it with far lower variance than the plain difference.
    pub dpc_gap: f64,
    pub dpc_gap_stderr: f64,
    /// Same for the linear curve.
    pub linear_gap: f64,
    pub linear_gap_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curves {
    pub points: Vec<CurvePoint>,
    pub trials: usize,
    pub seed: u64,
    /// Waterfilling runs that hit the iteration cap.
    pub non_converged: usize,
    pub discarded: usize,
    pub closed_form: ErgodicClosedForm,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Ergodic DPC sum capacity and linear (block-diagonalization) sum rate over
/// `trials` channel draws, with the closed-form affine approximations.
pub fn generate_curves(
    profile: &SystemProfile,
    correlation: &CorrelationModel,
    grid_db: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Curves> {
    generate_curves_with(
        profile,
        correlation,
        grid_db,
        trials,
        seed,
        DEFAULT_TOLERANCE,
        DEFAULT_MAX_ITERATIONS,
    )
}

pub fn generate_curves_with(
    profile: &SystemProfile,
    correlation: &CorrelationModel,
    grid_db: &[f64],
    trials: usize,
    seed: u64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<Curves> {
    if grid_db.is_empty() {
        return Err(Error::Validation("power grid is empty".into()));
    }
    if grid_db.windows(2).any(|w| w[0] >= w[1]) || grid_db.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("power grid must be finite and ascending".into()));
    }
    if trials < 2 {
        return Err(Error::Validation("at least two trials are required".into()));
    }
    let closed_form = ErgodicClosedForm::new(profile, correlation)?;
    let powers: Vec<f64> = grid_db.iter().map(|&db| db_to_linear(db)).collect();

    // per trial and grid point: (dpc, linear, non-converged, dpc gap, linear gap)
    let (samples, discarded) = sample_trials(profile, correlation, trials, seed, |channel| {
        channel.inverse_gram()?;
        powers
            .iter()
            .map(|&p| {
                let dpc = dual_mac_sum_capacity(channel, p, tolerance, max_iterations)?;
                let linear = BcSolution::new(channel, p)?.sum_rate();
                let dpc_gap = dpc.sum_rate - mac::dpc_asymptotic_sum_rate(channel, p)?;
                let linear_gap = linear - mac::linear_asymptotic_sum_rate(channel, p)?;
                Ok((dpc.sum_rate, linear, !dpc.converged, dpc_gap, linear_gap))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let r = profile.total_antennas();
    let mut non_converged = 0;
    let points = grid_db
        .iter()
        .zip(&powers)
        .enumerate()
        .map(|(g, (&db, &p))| {
            non_converged += samples.iter().filter(|s| s[g].2).count();
            let (dpc, dpc_stderr) = mean_and_stderr(samples.iter().map(|s| s[g].0), trials);
            let (lin, linear_stderr) = mean_and_stderr(samples.iter().map(|s| s[g].1), trials);
            let (dpc_gap, dpc_gap_stderr) = mean_and_stderr(samples.iter().map(|s| s[g].3), trials);
            let (linear_gap, linear_gap_stderr) = mean_and_stderr(samples.iter().map(|s| s[g].4), trials);
            CurvePoint {
                power_db: db,
                power: p,
                dpc_sum_capacity: dpc,
                dpc_stderr,
                linear_bd_sum_rate: lin,
                linear_stderr,
                dpc_affine: closed_form.dpc_affine(r, p),
                linear_affine: closed_form.linear_affine(r, p),
                dpc_gap,
                dpc_gap_stderr,
                linear_gap,
                linear_gap_stderr,
            }
        })
        .collect();
    Ok(Curves {
        points,
        trials,
        seed,
        non_converged,
        discarded,
        closed_form,
    })
}
