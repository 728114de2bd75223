//! Rates in the dual multiple access channel (MAC).
//!
//! Exact rates are evaluated for arbitrary transmit covariances. The
//! asymptotic (high-power) rates depend on the channel only through the
//! diagonal blocks of `(H^H H)^{-1}`, which makes the optimal power split,
//! the DPC asymptote and the rate loss of linear filtering closed-form.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::system::{select_block, ChannelRealization, SystemProfile};

/// Per-user transmit covariances `Q_k = T_k T_k^H` in the dual MAC.
#[derive(Debug, Clone, PartialEq)]
pub struct MacCovarianceSet {
    covariances: Vec<CMat>,
}

impl MacCovarianceSet {
    pub fn new(covariances: Vec<CMat>) -> Result<Self> {
        for (k, q) in covariances.iter().enumerate() {
            if q.nrows() != q.ncols() {
                return Err(Error::Validation(format!("covariance of user {k} is not square")));
            }
            if linalg::hermitian_defect(q) > 1e-12 {
                return Err(Error::Validation(format!("covariance of user {k} is not Hermitian")));
            }
            let lo = linalg::hermitian_eigenvalues(q).first().copied().unwrap_or(0.0);
            if lo < -1e-12 * q.norm().max(1.0) {
                return Err(Error::Validation(format!(
                    "covariance of user {k} is not positive semidefinite"
                )));
            }
        }
        Ok(Self { covariances })
    }

    /// `Q_k = T_k T_k^H`.
    pub fn from_factors(factors: &[CMat]) -> Result<Self> {
        Self::new(
            factors
                .iter()
                .map(|t| linalg::hermitian_part(&(t * t.adjoint())))
                .collect(),
        )
    }

    /// `Q_k = levels[k] * I_{r_k}`.
    pub fn scaled_identity(antennas: &[usize], levels: &[f64]) -> Result<Self> {
        if antennas.len() != levels.len() {
            return Err(Error::Validation("one power level per user is required".into()));
        }
        Self::new(
            antennas
                .iter()
                .zip(levels)
                .map(|(&a, &l)| linalg::identity(a).scale(l))
                .collect(),
        )
    }

    pub fn covariances(&self) -> &[CMat] {
        &self.covariances
    }

    /// Hermitian square roots, one valid choice of `T_k`.
    pub fn factors(&self) -> Result<Vec<CMat>> {
        self.covariances.iter().map(linalg::sqrtm_psd).collect()
    }

    pub fn total_power(&self) -> f64 {
        self.covariances.iter().map(|q| q.trace().re).sum()
    }

    fn check_against(&self, channel: &ChannelRealization) -> Result<()> {
        check_dims(channel, self.covariances.iter().map(|q| (q.nrows(), q.ncols())))
    }
}

fn check_dims(
    channel: &ChannelRealization,
    shapes: impl ExactSizeIterator<Item = (usize, usize)>,
) -> Result<()> {
    if shapes.len() != channel.users() {
        return Err(Error::Validation(format!(
            "{} covariances for {} users",
            shapes.len(),
            channel.users()
        )));
    }
    for (k, ((rows, cols), &a)) in shapes.zip(channel.antennas()).enumerate() {
        if rows != a || cols != a {
            return Err(Error::Validation(format!(
                "user {k}: expected {a}x{a}, got {rows}x{cols}"
            )));
        }
    }
    Ok(())
}

/// Asymptotically optimal dual-MAC powers `Q_k = lambda_k I`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacAsymptoticSolution {
    pub levels: Vec<f64>,
    pub total_power: f64,
}

impl MacAsymptoticSolution {
    pub fn covariances(&self, antennas: &[usize]) -> Result<MacCovarianceSet> {
        MacCovarianceSet::scaled_identity(antennas, &self.levels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    Exact,
    /// High-power affine approximation; may be negative at low power.
    Asymptotic,
}

/// Per-user rates in bits/s/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rates: Vec<f64>,
    pub sum: f64,
    pub weighted_sum: f64,
    pub kind: RateKind,
}

impl RateReport {
    fn new(rates: Vec<f64>, weights: &[f64], kind: RateKind) -> Self {
        let sum = rates.iter().sum();
        let weighted_sum = rates
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w != 0.0)
            .map(|(r, w)| r * w)
            .sum();
        Self {
            rates,
            sum,
            weighted_sum,
            kind,
        }
    }
}

/// `I_N + sum_{l in users} H_l Q_l H_l^H`
fn interference_plus_noise<'a>(
    channel: &ChannelRealization,
    terms: impl Iterator<Item = (&'a CMat, &'a CMat)>,
) -> CMat {
    let mut x = linalg::identity(channel.base_antennas());
    for (h, q) in terms {
        x += h * q * h.adjoint();
    }
    linalg::hermitian_part(&x)
}

/// Rate of user `k` treating all other users as noise:
/// `log2 |I + (I + sum_{l != k} H_l Q_l H_l^H)^{-1} H_k Q_k H_k^H|`.
pub fn exact_user_rate(
    channel: &ChannelRealization,
    covariances: &MacCovarianceSet,
    k: usize,
) -> Result<f64> {
    covariances.check_against(channel)?;
    channel.user(k)?;
    let all = channel.user_channels().iter().zip(covariances.covariances());
    let with_k = interference_plus_noise(channel, all.clone());
    let without_k = interference_plus_noise(
        channel,
        all.enumerate().filter(|(l, _)| *l != k).map(|(_, t)| t),
    );
    let rate = linalg::log2_det_hpd(&with_k)? - linalg::log2_det_hpd(&without_k)?;
    Ok(rate.max(0.0))
}

pub fn exact_rates(
    channel: &ChannelRealization,
    covariances: &MacCovarianceSet,
    weights: &[f64],
) -> Result<RateReport> {
    let rates = (0..channel.users())
        .map(|k| exact_user_rate(channel, covariances, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(RateReport::new(rates, weights, RateKind::Exact))
}

/// The same rate written through the Gram matrix:
/// `-log2 |E_k^T (I_b + T^H H^H H T)^{-1} E_k|` with `T = blockdiag{T_k}`.
pub fn exact_user_rate_gram_form(
    channel: &ChannelRealization,
    factors: &[CMat],
    k: usize,
) -> Result<f64> {
    check_dims(channel, factors.iter().map(|t| (t.nrows(), t.ncols())))?;
    let range = channel.block_range(k)?;
    let t = linalg::block_diagonal(factors);
    let m = linalg::identity(t.ncols()) + t.adjoint() * channel.gram() * &t;
    let inv = linalg::inverse_hpd(&m)?;
    Ok(-linalg::log2_det_hpd(&select_block(&inv, &range))?)
}

/// `log2 |E_k^T (H^H H)^{-1} E_k|` for every user.
pub fn block_log2_dets(channel: &ChannelRealization) -> Result<Vec<f64>> {
    let inv = channel.inverse_gram()?;
    block_log2_dets_of(&inv, channel)
}

pub(crate) fn block_log2_dets_of(inverse_gram: &CMat, channel: &ChannelRealization) -> Result<Vec<f64>> {
    (0..channel.users())
        .map(|k| {
            let range = channel.block_range(k)?;
            linalg::log2_det_hpd(&select_block(inverse_gram, &range))
        })
        .collect()
}

/// `r_k log2(lambda_k) - log2 |E_k^T (H^H H)^{-1} E_k|`.
///
/// Depends on no other user's covariance.
pub fn asymptotic_user_rate(channel: &ChannelRealization, level: f64, k: usize) -> Result<f64> {
    if !(level > 0.0 && level.is_finite()) {
        return Err(Error::Validation(format!("power level {level} must be positive")));
    }
    let range = channel.block_range(k)?;
    let inv = channel.inverse_gram()?;
    let block = linalg::log2_det_hpd(&select_block(&inv, &range))?;
    Ok(range.len() as f64 * level.log2() - block)
}

/// `lambda_k = w_k P / sum_l w_l r_l`.
pub fn optimal_power_split(profile: &SystemProfile, total_power: f64) -> Result<MacAsymptoticSolution> {
    if !(total_power > 0.0 && total_power.is_finite()) {
        return Err(Error::Validation(format!("transmit power {total_power} must be positive")));
    }
    let denom: f64 = profile
        .weights()
        .iter()
        .zip(profile.antennas())
        .map(|(w, &a)| w * a as f64)
        .sum();
    if denom <= 0.0 {
        return Err(Error::Validation("all weights are zero".into()));
    }
    Ok(MacAsymptoticSolution {
        levels: profile.weights().iter().map(|w| w * total_power / denom).collect(),
        total_power,
    })
}

/// Asymptotic weighted sum rate for arbitrary levels. Users with zero weight
/// contribute nothing, even when their level is zero.
pub fn asymptotic_weighted_sum_rate_at(
    channel: &ChannelRealization,
    weights: &[f64],
    levels: &[f64],
) -> Result<f64> {
    let blocks = block_log2_dets(channel)?;
    let mut total = 0.0;
    for (k, (&w, &l)) in weights.iter().zip(levels).enumerate() {
        if w == 0.0 {
            continue;
        }
        if l <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        total += w * (channel.antennas()[k] as f64 * l.log2() - blocks[k]);
    }
    Ok(total)
}

/// Weighted sum rate at the optimal split, `sum_k w_k R_k`.
pub fn asymptotic_weighted_sum_rate(
    channel: &ChannelRealization,
    profile: &SystemProfile,
    total_power: f64,
) -> Result<f64> {
    check_profile(channel, profile)?;
    let split = optimal_power_split(profile, total_power)?;
    asymptotic_weighted_sum_rate_at(channel, profile.weights(), &split.levels)
}

/// Per-user asymptotic rates at the optimal split.
pub fn asymptotic_rates(
    channel: &ChannelRealization,
    profile: &SystemProfile,
    total_power: f64,
) -> Result<RateReport> {
    check_profile(channel, profile)?;
    let split = optimal_power_split(profile, total_power)?;
    let blocks = block_log2_dets(channel)?;
    let rates = split
        .levels
        .iter()
        .zip(profile.antennas())
        .zip(&blocks)
        .map(|((&l, &a), b)| if l > 0.0 { a as f64 * l.log2() - b } else { 0.0 })
        .collect();
    Ok(RateReport::new(rates, profile.weights(), RateKind::Asymptotic))
}

/// Equal-weight linear sum rate asymptote
/// `r log2 P - r log2 r - sum_k log2 |E_k^T (H^H H)^{-1} E_k|`.
pub fn linear_asymptotic_sum_rate(channel: &ChannelRealization, total_power: f64) -> Result<f64> {
    let r = channel.total_antennas() as f64;
    let blocks: f64 = block_log2_dets(channel)?.iter().sum();
    Ok(r * total_power.log2() - r * r.log2() - blocks)
}

/// `r log2 P - r log2 r + log2 |H^H H|`.
pub fn dpc_asymptotic_sum_rate(channel: &ChannelRealization, total_power: f64) -> Result<f64> {
    linalg::check_conditioning(channel.gram())?;
    let r = channel.total_antennas() as f64;
    Ok(r * total_power.log2() - r * r.log2() + linalg::log2_det_hpd(channel.gram())?)
}

/// Power-independent loss of optimal linear filtering against DPC:
/// `sum_k log2 |E_k^T (H^H H)^{-1} E_k| - log2 |(H^H H)^{-1}|`.
///
/// Nonnegative by the block Hadamard inequality; zero iff the Gram matrix is
/// block diagonal.
pub fn instantaneous_rate_loss(channel: &ChannelRealization) -> Result<f64> {
    let inv = channel.inverse_gram()?;
    let blocks: f64 = block_log2_dets_of(&inv, channel)?.iter().sum();
    Ok(blocks - linalg::log2_det_hpd(&inv)?)
}

fn check_profile(channel: &ChannelRealization, profile: &SystemProfile) -> Result<()> {
    if channel.antennas() != profile.antennas() || channel.base_antennas() != profile.base_antennas() {
        return Err(Error::Validation("channel does not match the profile".into()));
    }
    Ok(())
}
