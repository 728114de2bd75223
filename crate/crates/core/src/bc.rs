//! Broadcast-channel (BC) precoders obtained from the asymptotically optimal
//! dual-MAC solution `Q_k = P/r I`.
//!
//! The dual-MAC receivers become scaled rows of the pseudo-inverse, so the
//! resulting precoders block-diagonalize the downlink: `H_l^H P_k = 0` for
//! `l != k`. The decorrelation basis `W_k` is the eigenbasis of
//! `E_k^T (H^H H)^{-1} E_k`, which maximizes the asymptotic BC rate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, real, CMat};
use crate::system::{select_block, ChannelRealization};

fn check_power(total_power: f64) -> Result<()> {
    if total_power > 0.0 && total_power.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("transmit power {total_power} must be positive")))
    }
}

/// `H^+ = (H^H H)^{-1} H^H`, computed with a Cholesky solve.
pub fn pseudo_inverse(channel: &ChannelRealization) -> Result<CMat> {
    linalg::check_conditioning(channel.gram())?;
    let chol = linalg::cholesky(channel.gram())?;
    Ok(chol.solve(&channel.composite().adjoint()))
}

/// Exact dual-MAC MMSE receiver `G_k = E_k^T T^H H^H (I + H T T^H H^H)^{-1}`.
pub fn mmse_receiver_exact(channel: &ChannelRealization, factors: &[CMat], k: usize) -> Result<CMat> {
    if factors.len() != channel.users()
        || factors
            .iter()
            .zip(channel.antennas())
            .any(|(t, &a)| t.nrows() != a || t.ncols() != a)
    {
        return Err(Error::Validation("precoder factors do not match the channel".into()));
    }
    let range = channel.block_range(k)?;
    let t = linalg::block_diagonal(factors);
    let ht = channel.composite() * &t;
    let x = linalg::identity(channel.base_antennas()) + &ht * ht.adjoint();
    let xinv = linalg::inverse_hpd(&x)?;
    let full = ht.adjoint() * xinv;
    Ok(full.rows(range.start, range.len()).into_owned())
}

/// High-power limit `sqrt(r/P) E_k^T H^+`.
pub fn asymptotic_receiver(channel: &ChannelRealization, total_power: f64, k: usize) -> Result<CMat> {
    check_power(total_power)?;
    let range = channel.block_range(k)?;
    let pinv = pseudo_inverse(channel)?;
    let scale = (channel.total_antennas() as f64 / total_power).sqrt();
    Ok(pinv.rows(range.start, range.len()).scale(scale))
}

/// Unitary eigenbasis of `E_k^T (H^H H)^{-1} E_k`, ascending eigenvalues.
pub fn decorrelation_basis(channel: &ChannelRealization, k: usize) -> Result<CMat> {
    let range = channel.block_range(k)?;
    let inv = channel.inverse_gram()?;
    Ok(linalg::hermitian_eigen(&select_block(&inv, &range)).1)
}

/// Diagonal of `D_k`: `sqrt(e_i^T W^H B_k W e_i)` with `B_k` the Gram-inverse block.
fn scaling_diagonal(block: &CMat, basis: &CMat) -> Result<Vec<f64>> {
    let projected = basis.adjoint() * block * basis;
    (0..basis.ncols())
        .map(|i| {
            let d = projected[(i, i)].re;
            if d > 0.0 {
                Ok(d.sqrt())
            } else {
                Err(Error::Degenerate(format!("scaling entry {i} is {d:e}")))
            }
        })
        .collect()
}

/// `alpha_{k,i} = sqrt(P/r) / ||g'_{k,i}||` with `g'_{k,i}` the rows of
/// `W_k^H G_k` for the asymptotic receiver `G_k`.
pub fn scaling_factors(channel: &ChannelRealization, total_power: f64, k: usize) -> Result<Vec<f64>> {
    let receiver = asymptotic_receiver(channel, total_power, k)?;
    let basis = decorrelation_basis(channel, k)?;
    let rotated = basis.adjoint() * receiver;
    let target = (total_power / channel.total_antennas() as f64).sqrt();
    (0..rotated.nrows())
        .map(|i| {
            let norm = rotated.row(i).norm();
            if norm > 0.0 {
                Ok(target / norm)
            } else {
                Err(Error::Degenerate(format!("receiver row {i} of user {k} vanishes")))
            }
        })
        .collect()
}

/// `P_k = sqrt(P/r) H (H^H H)^{-1} E_k W_k D_k^{-1}` with the eigenbasis `W_k`.
pub fn bc_precoder(channel: &ChannelRealization, total_power: f64, k: usize) -> Result<CMat> {
    let basis = decorrelation_basis(channel, k)?;
    precoder_with_basis(channel, total_power, k, &basis)
}

/// The block-diagonalizing precoder for an arbitrary unitary `W_k`.
pub fn precoder_with_basis(
    channel: &ChannelRealization,
    total_power: f64,
    k: usize,
    basis: &CMat,
) -> Result<CMat> {
    check_power(total_power)?;
    let range = channel.block_range(k)?;
    if basis.nrows() != range.len() || basis.ncols() != range.len() {
        return Err(Error::Validation("decorrelation basis has the wrong size".into()));
    }
    let inv = channel.inverse_gram()?;
    let d = scaling_diagonal(&select_block(&inv, &range), basis)?;
    let directions = channel.composite() * inv.columns(range.start, range.len()) * basis;
    let scale = (total_power / channel.total_antennas() as f64).sqrt();
    let mut p = directions;
    for (i, di) in d.iter().enumerate() {
        let col = p.column(i).scale(scale / di);
        p.set_column(i, &col);
    }
    Ok(p)
}

/// `S_k = P/r * H^{+H} E_k (E_k^T (H^H H)^{-1} E_k)^{-1} E_k^T H^+`, a scaled
/// orthogonal projector of rank `r_k`.
pub fn bc_covariance(channel: &ChannelRealization, total_power: f64, k: usize) -> Result<CMat> {
    check_power(total_power)?;
    let range = channel.block_range(k)?;
    let inv = channel.inverse_gram()?;
    let pinv = pseudo_inverse(channel)?;
    let rows = pinv.rows(range.start, range.len()).into_owned();
    let middle = linalg::inverse_hpd(&select_block(&inv, &range))?;
    let s = rows.adjoint() * middle * rows;
    Ok(linalg::hermitian_part(&s).scale(total_power / channel.total_antennas() as f64))
}

/// BC rate of user `k` treating the other users' signals as noise:
/// `log2 |I + (I + sum_{l != k} H_k^H S_l H_k)^{-1} H_k^H S_k H_k|`.
pub fn bc_exact_user_rate(channel: &ChannelRealization, precoders: &[CMat], k: usize) -> Result<f64> {
    if precoders.len() != channel.users()
        || precoders.iter().any(|p| p.nrows() != channel.base_antennas())
    {
        return Err(Error::Validation("precoders do not match the channel".into()));
    }
    let hk = channel.user(k)?;
    let a = hk.ncols();
    let mut with_k = linalg::identity(a);
    let mut without_k = linalg::identity(a);
    for (l, p) in precoders.iter().enumerate() {
        let e = hk.adjoint() * p;
        let term = &e * e.adjoint();
        if l != k {
            without_k += &term;
        }
        with_k += term;
    }
    let rate = linalg::log2_det_hpd(&with_k)? - linalg::log2_det_hpd(&without_k)?;
    Ok(rate.max(0.0))
}

/// Largest relative leakage `||H_l^H P_k||_F / (||H_l||_F ||P_k||_F)` over `l != k`.
pub fn block_diagonalization_residual(channel: &ChannelRealization, precoders: &[CMat]) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, p) in precoders.iter().enumerate() {
        for (l, h) in channel.user_channels().iter().enumerate() {
            if l != k {
                let leak = (h.adjoint() * p).norm() / (h.norm() * p.norm()).max(f64::MIN_POSITIVE);
                worst = worst.max(leak);
            }
        }
    }
    worst
}

/// Complete BC solution for the asymptotically optimal dual-MAC strategy.
#[derive(Debug, Clone)]
pub struct BcSolution {
    pub total_power: f64,
    pub precoders: Vec<CMat>,
    pub bases: Vec<CMat>,
    /// Diagonals of `D_k`.
    pub scalings: Vec<Vec<f64>>,
    pub covariances: Vec<CMat>,
    pub alphas: Vec<Vec<f64>>,
    /// Exact BC rates with the precoders above.
    pub rates: Vec<f64>,
}

impl BcSolution {
    pub fn new(channel: &ChannelRealization, total_power: f64) -> Result<Self> {
        check_power(total_power)?;
        let inv = channel.inverse_gram()?;
        let r = channel.total_antennas() as f64;
        let scale = (total_power / r).sqrt();
        let directions = channel.composite() * &inv;
        let mut sol = Self {
            total_power,
            precoders: Vec::new(),
            bases: Vec::new(),
            scalings: Vec::new(),
            covariances: Vec::new(),
            alphas: Vec::new(),
            rates: Vec::new(),
        };
        for k in 0..channel.users() {
            let range = channel.block_range(k)?;
            let block = select_block(&inv, &range);
            let basis = linalg::hermitian_eigen(&block).1;
            let d = scaling_diagonal(&block, &basis)?;
            let mut p = directions.columns(range.start, range.len()) * &basis;
            for (i, di) in d.iter().enumerate() {
                let col = p.column(i).scale(scale / di);
                p.set_column(i, &col);
            }
            sol.covariances.push(linalg::hermitian_part(&(&p * p.adjoint())));
            sol.alphas.push(d.iter().map(|di| total_power / r / di).collect());
            sol.precoders.push(p);
            sol.bases.push(basis);
            sol.scalings.push(d);
        }
        sol.rates = (0..channel.users())
            .map(|k| bc_exact_user_rate(channel, &sol.precoders, k))
            .collect::<Result<_>>()?;
        Ok(sol)
    }

    pub fn sum_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Interference-free rate `log2 |I + P/r W_k D_k^{-2} W_k^H|`.
    pub fn interference_free_rate(&self, k: usize, total_antennas: usize) -> Result<f64> {
        let basis = self.bases.get(k).ok_or(Error::Index {
            index: k,
            users: self.bases.len(),
        })?;
        let inv_d2 = nalgebra::DVector::from_iterator(
            self.scalings[k].len(),
            self.scalings[k].iter().map(|d| real(self.total_power / total_antennas as f64 / (d * d))),
        );
        let m = linalg::identity(basis.nrows()) + basis * CMat::from_diagonal(&inv_d2) * basis.adjoint();
        linalg::log2_det_hpd(&m)
    }
}

/// Outcome of [`eigenbasis_optimality_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityCheck {
    pub passed: bool,
    /// Smallest `log2|D_k^2(W)| - log2|B_k|` over the random unitaries.
    pub min_slack: f64,
    /// The same slack for the eigenbasis; zero up to rounding.
    pub eigenbasis_slack: f64,
}

/// Checks the Hadamard inequality `prod_i [W^H B_k W]_{ii} >= |B_k|` for
/// `trials` Haar unitaries, with equality at the eigenbasis.
pub fn eigenbasis_optimality_check(
    channel: &ChannelRealization,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<OptimalityCheck> {
    if trials == 0 {
        return Err(Error::Validation("at least one trial is required".into()));
    }
    let range = channel.block_range(k)?;
    let inv = channel.inverse_gram()?;
    let block = select_block(&inv, &range);
    let log_det = linalg::log2_det_hpd(&block)?;
    let slack = |w: &CMat| -> Result<f64> {
        let d = scaling_diagonal(&block, w)?;
        Ok(d.iter().map(|x| 2.0 * x.log2()).sum::<f64>() - log_det)
    };
    let eigenbasis_slack = slack(&linalg::hermitian_eigen(&block).1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_slack = f64::INFINITY;
    for _ in 0..trials {
        let w = linalg::random_unitary(range.len(), &mut rng);
        min_slack = min_slack.min(slack(&w)?);
    }
    Ok(OptimalityCheck {
        passed: min_slack >= -1e-9 && eigenbasis_slack.abs() <= 1e-9,
        min_slack,
        eigenbasis_slack,
    })
}
