//! Ergodic rate expressions for the correlated near-far Gaussian model and
//! the Monte Carlo estimators that check them.
//!
//! With `H_k = Hbar_k C_k^{1/2}`, `Hbar^H Hbar` is complex Wishart with `N`
//! degrees of freedom and each diagonal block of its inverse is inverse
//! Wishart with `N - r + r_k` degrees of freedom. The expected log-determinants
//! are then finite sums of the digamma function at integer arguments.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mac;
use crate::system::{sample_channel_with, trial_rng, ChannelRealization, CorrelationModel, SystemProfile};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `psi(n) = -gamma + sum_{j=1}^{n-1} 1/j` for integer `n >= 1`.
pub fn digamma_int(n: i64) -> Result<f64> {
    if n < 1 {
        return Err(Error::Domain(format!("digamma argument {n} must be a positive integer")));
    }
    Ok((1..n).fold(-EULER_GAMMA, |acc, j| acc + 1.0 / j as f64))
}

fn check_antennas(n: usize, r: usize) -> Result<()> {
    if n < r {
        return Err(Error::Domain(format!(
            "closed forms need N >= r (N = {n}, r = {r})"
        )));
    }
    Ok(())
}

/// `E[log2 |H^H H|] = 1/ln2 sum_{l=0}^{r-1} psi(N - l) + sum_k log2 |C_k|`.
pub fn ergodic_dpc_logdet(profile: &SystemProfile, correlation: &CorrelationModel) -> Result<f64> {
    let n = profile.base_antennas() as i64;
    let r = profile.total_antennas() as i64;
    check_antennas(n as usize, r as usize)?;
    let psi_sum = (0..r).map(|l| digamma_int(n - l)).sum::<Result<f64>>()?;
    Ok(psi_sum / LN_2 + correlation.log2_dets().iter().sum::<f64>())
}

/// `E[log2 |E_k^T (H^H H)^{-1} E_k|]
///   = -log2 |C_k| - 1/ln2 sum_{l=0}^{r_k-1} psi(N - r + r_k - l)`.
pub fn ergodic_block_logdet(
    profile: &SystemProfile,
    correlation: &CorrelationModel,
    k: usize,
) -> Result<f64> {
    let rk = profile.block_range(k)?.len() as i64;
    let n = profile.base_antennas() as i64;
    let r = profile.total_antennas() as i64;
    check_antennas(n as usize, r as usize)?;
    let psi_sum = (0..rk).map(|l| digamma_int(n - r + rk - l)).sum::<Result<f64>>()?;
    Ok(-correlation.log2_dets()[k] - psi_sum / LN_2)
}

/// All ergodic log-determinant terms for one profile and correlation model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicClosedForm {
    pub dpc_logdet: f64,
    pub block_logdets: Vec<f64>,
    pub rate_loss: f64,
}

impl ErgodicClosedForm {
    pub fn new(profile: &SystemProfile, correlation: &CorrelationModel) -> Result<Self> {
        let dpc_logdet = ergodic_dpc_logdet(profile, correlation)?;
        let block_logdets = (0..profile.users())
            .map(|k| ergodic_block_logdet(profile, correlation, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rate_loss: ergodic_rate_loss(profile)?,
            dpc_logdet,
            block_logdets,
        })
    }

    /// Ergodic DPC affine approximation `r log2 P - r log2 r + E[log2|H^H H|]`.
    pub fn dpc_affine(&self, total_antennas: usize, total_power: f64) -> f64 {
        let r = total_antennas as f64;
        r * total_power.log2() - r * r.log2() + self.dpc_logdet
    }

    /// Ergodic linear affine approximation
    /// `r log2 P - r log2 r - sum_k E[log2|E_k^T (H^H H)^{-1} E_k|]`.
    pub fn linear_affine(&self, total_antennas: usize, total_power: f64) -> f64 {
        let r = total_antennas as f64;
        r * total_power.log2() - r * r.log2() - self.block_logdets.iter().sum::<f64>()
    }
}

/// Expected asymptotic rate loss of linear filtering for arbitrary antenna
/// counts. Correlations and path losses cancel, hence no correlation input.
pub fn ergodic_rate_loss(profile: &SystemProfile) -> Result<f64> {
    rate_loss_for(profile.base_antennas(), profile.antennas())
}

pub(crate) fn rate_loss_for(n: usize, antennas: &[usize]) -> Result<f64> {
    let r: usize = antennas.iter().sum();
    check_antennas(n, r)?;
    let (n, r) = (n as i64, r as i64);
    let dpc = (0..r).map(|l| digamma_int(n - l)).sum::<Result<f64>>()?;
    let mut linear = 0.0;
    for &rk in antennas {
        let rk = rk as i64;
        for l in 0..rk {
            linear += digamma_int(n - r + rk - l)?;
        }
    }
    Ok((dpc - linear) / LN_2)
}

/// Equal-antenna case `r_k = rbar` for all `K` users:
/// `1/ln2 [sum_{l=1}^{(K-1) rbar} l/(N-l) + sum_{l=1}^{rbar-1} (K-1) l/(N-K rbar+l)]`.
pub fn ergodic_rate_loss_equal(users: usize, antennas_per_user: usize, n: usize) -> Result<f64> {
    if users == 0 || antennas_per_user == 0 {
        return Err(Error::Domain("need at least one user with one antenna".into()));
    }
    let r = users * antennas_per_user;
    check_antennas(n, r)?;
    let (k, rbar, n) = (users as f64, antennas_per_user, n as f64);
    let first: f64 = (1..=(users - 1) * rbar)
        .map(|l| l as f64 / (n - l as f64))
        .sum();
    let second: f64 = (1..rbar)
        .map(|l| (k - 1.0) * l as f64 / (n - k * rbar as f64 + l as f64))
        .sum();
    Ok((first + second) / LN_2)
}

/// Single-antenna users: `1/ln2 sum_{l=1}^{K-1} l/(N-l)`.
pub fn ergodic_rate_loss_single(users: usize, n: usize) -> Result<f64> {
    ergodic_rate_loss_equal(users, 1, n)
}

/// `(Delta R / r) * 10 log10(2)` dB: horizontal distance between two parallel
/// affine rate curves of slope `r` that are `Delta R` bits apart.
pub fn power_offset_db(rate_loss_bits: f64, total_antennas: usize) -> Result<f64> {
    if total_antennas == 0 {
        return Err(Error::Domain("multiplexing gain must be positive".into()));
    }
    Ok(rate_loss_bits / total_antennas as f64 * 10.0 * 2f64.log10())
}

/// Sample mean of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(trials)`.
    pub std_error: f64,
    pub trials: usize,
    pub seed: u64,
    /// Numerically singular draws that were replaced.
    pub discarded: usize,
}

impl MonteCarloEstimate {
    /// Mean and standard error of samples given in trial order.
    pub fn from_samples(samples: &[f64], seed: u64, discarded: usize) -> Result<Self> {
        let trials = samples.len();
        if trials < 2 {
            return Err(Error::Validation("at least two trials are required".into()));
        }
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        Ok(Self {
            mean,
            std_error: (var / trials as f64).sqrt(),
            trials,
            seed,
            discarded,
        })
    }

    /// `|mean - value|` in units of the standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.mean - value).abs() / self.std_error
    }
}

/// Maximum number of redraws for a run of `trials` trials (0.1%, at least one).
pub fn max_discards(trials: usize) -> usize {
    trials.div_ceil(1000).max(1)
}

/// Runs `eval` on one channel per trial. A draw whose Gram matrix is
/// numerically singular is replaced by the next draw from the same trial
/// stream. Results come back in trial order together with the redraw count.
pub fn sample_trials<T, F>(
    profile: &SystemProfile,
    correlation: &CorrelationModel,
    trials: usize,
    seed: u64,
    eval: F,
) -> Result<(Vec<T>, usize)>
where
    T: Send,
    F: Fn(&ChannelRealization) -> Result<T> + Sync,
{
    let cap = max_discards(trials);
    let outcomes: Vec<Result<(T, usize)>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let mut redraws = 0;
            loop {
                let channel = sample_channel_with(profile, correlation, &mut rng)?;
                match eval(&channel) {
                    Ok(v) => return Ok((v, redraws)),
                    Err(Error::NumericalRank { .. }) if redraws < cap => redraws += 1,
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();
    let mut values = Vec::with_capacity(trials);
    let mut discarded = 0;
    for o in outcomes {
        let (v, d) = o?;
        values.push(v);
        discarded += d;
    }
    if discarded > cap {
        return Err(Error::Numerical(format!(
            "{discarded} singular draws in {trials} trials exceed the cap of {cap}"
        )));
    }
    Ok((values, discarded))
}

/// Monte Carlo mean of the instantaneous rate loss.
///
/// Deterministic for a given seed and independent of the thread count.
pub fn monte_carlo_rate_loss(
    profile: &SystemProfile,
    correlation: &CorrelationModel,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if trials < 2 {
        return Err(Error::Validation("at least two trials are required".into()));
    }
    let (values, discarded) = sample_trials(profile, correlation, trials, seed, mac::instantaneous_rate_loss)?;
    MonteCarloEstimate::from_samples(&values, seed, discarded)
}

/// Monte Carlo mean of an arbitrary per-channel statistic.
pub fn monte_carlo_mean<F>(
    profile: &SystemProfile,
    correlation: &CorrelationModel,
    trials: usize,
    seed: u64,
    statistic: F,
) -> Result<MonteCarloEstimate>
where
    F: Fn(&ChannelRealization) -> Result<f64> + Sync,
{
    let (values, discarded) = sample_trials(profile, correlation, trials, seed, statistic)?;
    MonteCarloEstimate::from_samples(&values, seed, discarded)
}

/// Trial count for Monte Carlo runs: ten times `base` when `N = r`, where the
/// log-moments of the inverse-Wishart blocks have heavy tails.
pub fn scaled_trials(profile: &SystemProfile, base: usize) -> usize {
    if profile.base_antennas() == profile.total_antennas() {
        base * 10
    } else {
        base
    }
}

/// Row label of the rate-loss table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TableRow {
    /// `K` users with `rbar` antennas each.
    Equal { users: usize, antennas: usize },
    /// Two users with `r1` and `r2` antennas.
    Pair { first: usize, second: usize },
}

impl TableRow {
    pub fn antennas(&self) -> Vec<usize> {
        match *self {
            TableRow::Equal { users, antennas } => vec![antennas; users],
            TableRow::Pair { first, second } => vec![first, second],
        }
    }

    /// Closed form at `n` base-station antennas, `None` when `N < r`.
    pub fn rate_loss(&self, n: usize) -> Option<f64> {
        match *self {
            TableRow::Equal { users, antennas: 1 } => ergodic_rate_loss_single(users, n).ok(),
            TableRow::Equal { users, antennas } => ergodic_rate_loss_equal(users, antennas, n).ok(),
            TableRow::Pair { first, second } => rate_loss_for(n, &[first, second]).ok(),
        }
    }
}

/// Rows of the rate-loss table in print order.
pub const TABLE_ROWS: [TableRow; 13] = [
    TableRow::Equal { users: 2, antennas: 1 },
    TableRow::Equal { users: 3, antennas: 1 },
    TableRow::Equal { users: 4, antennas: 1 },
    TableRow::Equal { users: 5, antennas: 1 },
    TableRow::Equal { users: 6, antennas: 1 },
    TableRow::Equal { users: 2, antennas: 2 },
    TableRow::Equal { users: 2, antennas: 3 },
    TableRow::Equal { users: 3, antennas: 2 },
    TableRow::Pair { first: 1, second: 2 },
    TableRow::Pair { first: 1, second: 3 },
    TableRow::Pair { first: 1, second: 4 },
    TableRow::Pair { first: 2, second: 3 },
    TableRow::Pair { first: 2, second: 4 },
];

/// Base-station antenna counts of the table columns.
pub const TABLE_COLUMNS: std::ops::RangeInclusive<usize> = 2..=6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub row: TableRow,
    pub base_antennas: usize,
    /// `None` for the unpopulated cells with `N < r`.
    pub rate_loss: Option<f64>,
}

/// Every cell of the rate-loss table, row-major.
pub fn rate_loss_table() -> Vec<TableCell> {
    TABLE_ROWS
        .iter()
        .flat_map(|&row| {
            TABLE_COLUMNS.map(move |n| TableCell {
                row,
                base_antennas: n,
                rate_loss: row.rate_loss(n),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force harmonic sum in extended steps, independent of the fold.
    fn harmonic(n: u32) -> f64 {
        let mut terms: Vec<f64> = (1..=n).map(|j| 1.0 / j as f64).collect();
        terms.reverse();
        terms.iter().sum()
    }

    #[test]
    fn digamma_values() {
        assert!((digamma_int(1).unwrap() + 0.577_215_664_9).abs() < 1e-10);
        assert!((digamma_int(2).unwrap() - (1.0 - EULER_GAMMA)).abs() < 1e-15);
        assert!((digamma_int(10).unwrap() - 2.251_752_589_066_721).abs() < 1e-12);
        assert!((digamma_int(10).unwrap() - (harmonic(9) - EULER_GAMMA)).abs() < 1e-14);
        assert!(matches!(digamma_int(0), Err(Error::Domain(_))));
        assert!(digamma_int(-3).is_err());
    }

    #[test]
    fn dpc_logdet_examples() {
        let p = SystemProfile::new(2, vec![1], None).unwrap();
        let v = ergodic_dpc_logdet(&p, &CorrelationModel::identity(&p)).unwrap();
        assert!((v - (1.0 - EULER_GAMMA) / LN_2).abs() < 1e-14);
        assert!((v - 0.609948).abs() < 1e-6);

        let p = SystemProfile::new(5, vec![2, 2], None).unwrap();
        let plain = ergodic_dpc_logdet(&p, &CorrelationModel::identity(&p)).unwrap();
        let scaled = ergodic_dpc_logdet(&p, &CorrelationModel::scalar(&p, &[1.0, 2.0]).unwrap()).unwrap();
        assert!((scaled - plain - 2.0).abs() < 1e-12);
    }

    #[test]
    fn block_logdet_examples() {
        let p = SystemProfile::new(2, vec![1, 1], None).unwrap();
        let c = CorrelationModel::identity(&p);
        let v = ergodic_block_logdet(&p, &c, 1).unwrap();
        assert!((v - EULER_GAMMA / LN_2).abs() < 1e-14);
        assert!((v - 0.8328).abs() < 1e-4);

        let p = SystemProfile::new(5, vec![3], None).unwrap();
        let c = CorrelationModel::scalar(&p, &[1.5]).unwrap();
        let block = ergodic_block_logdet(&p, &c, 0).unwrap();
        let full = ergodic_dpc_logdet(&p, &c).unwrap();
        assert!((block + full).abs() < 1e-12);
        assert!(ergodic_block_logdet(&p, &c, 1).is_err());
    }

    #[test]
    fn correlation_cancels() {
        let p = SystemProfile::new(6, vec![1, 2, 3], None).unwrap();
        let id = CorrelationModel::identity(&p);
        let c = CorrelationModel::scalar(&p, &[0.3, 2.0, 5.0]).unwrap();
        let a = ErgodicClosedForm::new(&p, &id).unwrap();
        let b = ErgodicClosedForm::new(&p, &c).unwrap();
        let shift: f64 = c.log2_dets().iter().sum();
        assert!((b.dpc_logdet - a.dpc_logdet - shift).abs() < 1e-12);
        let lin_a: f64 = -a.block_logdets.iter().sum::<f64>();
        let lin_b: f64 = -b.block_logdets.iter().sum::<f64>();
        assert!((lin_b - lin_a - shift).abs() < 1e-12);
        assert!(((b.dpc_logdet - lin_b) - (a.dpc_logdet - lin_a)).abs() < 1e-12);
        assert!((b.dpc_affine(6, 10.0) - b.linear_affine(6, 10.0) - b.rate_loss).abs() < 1e-12);
    }

    #[test]
    fn general_rate_loss_examples() {
        let cases = [(3, vec![1, 2], 2.164), (6, vec![2, 4], 4.857), (5, vec![2, 3], 4.208)];
        for (n, a, v) in cases {
            let p = SystemProfile::new(n, a, None).unwrap();
            assert!((ergodic_rate_loss(&p).unwrap() - v).abs() < 5e-4);
        }
        assert!(matches!(rate_loss_for(3, &[2, 2]), Err(Error::Domain(_))));
    }

    #[test]
    fn equal_and_single_examples() {
        assert!((ergodic_rate_loss_equal(2, 2, 5).unwrap() - 2.044).abs() < 5e-4);
        assert!((ergodic_rate_loss_equal(3, 2, 6).unwrap() - 8.223).abs() < 5e-4);
        assert!((ergodic_rate_loss_equal(2, 3, 6).unwrap() - 5.338).abs() < 5e-4);
        assert!((ergodic_rate_loss_single(2, 2).unwrap() - 1.0 / LN_2).abs() < 1e-15);
        assert!((ergodic_rate_loss_single(6, 6).unwrap() - 12.551).abs() < 5e-4);
        assert!((ergodic_rate_loss_single(2, 101).unwrap() - 0.01 / LN_2).abs() < 1e-15);
        assert!(ergodic_rate_loss_equal(2, 2, 3).is_err());
        assert!(ergodic_rate_loss_single(3, 2).is_err());
    }

    #[test]
    fn special_cases_agree_with_general() {
        for k in 1..=4 {
            for rbar in 1..=3 {
                for n in (k * rbar)..=14 {
                    let eq = ergodic_rate_loss_equal(k, rbar, n).unwrap();
                    let gen = rate_loss_for(n, &vec![rbar; k]).unwrap();
                    assert!((eq - gen).abs() < 1e-12, "K={k} rbar={rbar} N={n}");
                }
            }
        }
        for k in 1..=6 {
            for n in k..=14 {
                assert_eq!(ergodic_rate_loss_single(k, n).unwrap(), ergodic_rate_loss_equal(k, 1, n).unwrap());
            }
        }
    }

    #[test]
    fn power_offset_examples() {
        assert!((power_offset_db(2.044, 4).unwrap() - 1.538).abs() < 1e-3);
        assert_eq!(power_offset_db(0.0, 3).unwrap(), 0.0);
        assert!((power_offset_db(5.0, 5).unwrap() - 3.0103).abs() < 1e-4);
        assert!(power_offset_db(1.0, 0).is_err());
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let p = SystemProfile::new(4, vec![2, 2], None).unwrap();
        let c = CorrelationModel::identity(&p);
        let a = monte_carlo_rate_loss(&p, &c, 2, 77).unwrap();
        let b = monte_carlo_rate_loss(&p, &c, 2, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials, 2);
        assert!(monte_carlo_rate_loss(&p, &c, 1, 77).is_err());

        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c1 = single.install(|| monte_carlo_rate_loss(&p, &c, 500, 5).unwrap());
        let c2 = monte_carlo_rate_loss(&p, &c, 500, 5).unwrap();
        assert_eq!(c1.mean.to_bits(), c2.mean.to_bits());
    }

    #[test]
    fn estimate_statistics() {
        let e = MonteCarloEstimate::from_samples(&[1.0, 3.0], 0, 0).unwrap();
        assert_eq!(e.mean, 2.0);
        assert!((e.std_error - 1.0).abs() < 1e-15);
        assert!((e.z_score(4.0) - 2.0).abs() < 1e-15);
        assert_eq!(max_discards(10_000), 10);
        assert_eq!(max_discards(2), 1);
    }

    #[test]
    fn table_layout() {
        let cells = rate_loss_table();
        assert_eq!(cells.len(), 13 * 5);
        assert_eq!(cells.iter().filter(|c| c.rate_loss.is_some()).count(), 32);
        let find = |row: TableRow, n: usize| {
            cells
                .iter()
                .find(|c| c.row == row && c.base_antennas == n)
                .unwrap()
                .rate_loss
        };
        assert!((find(TableRow::Equal { users: 4, antennas: 1 }, 4).unwrap() - 6.252).abs() < 5e-4);
        assert!((find(TableRow::Pair { first: 1, second: 4 }, 5).unwrap() - 3.006).abs() < 5e-4);
        assert!((find(TableRow::Equal { users: 2, antennas: 1 }, 6).unwrap() - 0.289).abs() < 5e-4);
        assert_eq!(find(TableRow::Equal { users: 3, antennas: 2 }, 5), None);
    }

    #[test]
    fn scaled_trial_counts() {
        let square = SystemProfile::new(4, vec![2, 2], None).unwrap();
        let slack = SystemProfile::new(5, vec![2, 2], None).unwrap();
        assert_eq!(scaled_trials(&square, 100), 1000);
        assert_eq!(scaled_trials(&slack, 100), 100);
    }
}
