//! Antenna/user profiles and the correlated near-far Gaussian channel model.
//!
//! User indices are zero-based throughout the crate.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Base-station antenna count, per-user antenna counts and rate weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemProfile {
    base_antennas: usize,
    antennas: Vec<usize>,
    weights: Vec<f64>,
}

impl SystemProfile {
    /// Validates `N >= r = sum(r_k)`; weights default to all ones.
    pub fn new(base_antennas: usize, antennas: Vec<usize>, weights: Option<Vec<f64>>) -> Result<Self> {
        if antennas.is_empty() {
            return Err(Error::Validation("at least one user is required".into()));
        }
        if let Some(k) = antennas.iter().position(|&a| a == 0) {
            return Err(Error::Validation(format!("user {k} has no antennas")));
        }
        if base_antennas == 0 {
            return Err(Error::Validation("base station needs at least one antenna".into()));
        }
        let total: usize = antennas.iter().sum();
        if base_antennas < total {
            return Err(Error::Dimension {
                base_antennas,
                terminal_antennas: total,
            });
        }
        let weights = match weights {
            None => vec![1.0; antennas.len()],
            Some(w) => {
                if w.len() != antennas.len() {
                    return Err(Error::Validation(format!(
                        "{} weights given for {} users",
                        w.len(),
                        antennas.len()
                    )));
                }
                if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::Validation("weights must be finite and nonnegative".into()));
                }
                if w.iter().all(|&x| x == 0.0) {
                    return Err(Error::Validation("at least one weight must be positive".into()));
                }
                w
            }
        };
        Ok(Self {
            base_antennas,
            antennas,
            weights,
        })
    }

    /// `N`
    pub fn base_antennas(&self) -> usize {
        self.base_antennas
    }

    /// `K`
    pub fn users(&self) -> usize {
        self.antennas.len()
    }

    pub fn antennas(&self) -> &[usize] {
        &self.antennas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `r`, the total number of terminal antennas.
    pub fn total_antennas(&self) -> usize {
        self.antennas.iter().sum()
    }

    /// `b`, the total number of streams. Every user multiplexes `B_k = r_k`
    /// streams, so this always equals [`total_antennas`](Self::total_antennas).
    pub fn total_streams(&self) -> usize {
        self.stream_counts().iter().sum()
    }

    pub fn stream_counts(&self) -> Vec<usize> {
        self.antennas.clone()
    }

    /// Rows/columns of user `k`'s block within an `r x r` composite matrix,
    /// i.e. the index set selected by the block unit matrix `E_k`.
    pub fn block_range(&self, k: usize) -> Result<Range<usize>> {
        block_range(&self.antennas, k)
    }
}

pub(crate) fn block_range(antennas: &[usize], k: usize) -> Result<Range<usize>> {
    if k >= antennas.len() {
        return Err(Error::Index {
            index: k,
            users: antennas.len(),
        });
    }
    let start: usize = antennas[..k].iter().sum();
    Ok(start..start + antennas[k])
}

/// `E_k^T M E_k` as an owned matrix.
pub fn select_block(m: &CMat, range: &Range<usize>) -> CMat {
    m.view((range.start, range.start), (range.len(), range.len()))
        .into_owned()
}

/// Per-user transmit correlation matrices `C_k` (Hermitian, positive definite).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationModel {
    blocks: Vec<CMat>,
    roots: Vec<CMat>,
    log2_dets: Vec<f64>,
}

impl CorrelationModel {
    /// `C_k = I` for every user.
    pub fn identity(profile: &SystemProfile) -> Self {
        let blocks: Vec<CMat> = profile.antennas().iter().map(|&a| linalg::identity(a)).collect();
        Self {
            roots: blocks.clone(),
            log2_dets: vec![0.0; blocks.len()],
            blocks,
        }
    }

    /// Pure near-far model `C_k = c_k I` with inverse path losses `c_k > 0`.
    pub fn scalar(profile: &SystemProfile, gains: &[f64]) -> Result<Self> {
        if gains.len() != profile.users() {
            return Err(Error::Validation(format!(
                "{} path gains given for {} users",
                gains.len(),
                profile.users()
            )));
        }
        if let Some(c) = gains.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::Validation(format!("path gain {c} must be positive")));
        }
        let blocks = profile
            .antennas()
            .iter()
            .zip(gains)
            .map(|(&a, &c)| linalg::identity(a).scale(c))
            .collect();
        Self::from_matrices(profile, blocks)
    }

    /// Arbitrary Hermitian positive-definite `C_k`.
    pub fn from_matrices(profile: &SystemProfile, blocks: Vec<CMat>) -> Result<Self> {
        if blocks.len() != profile.users() {
            return Err(Error::Validation(format!(
                "{} correlation matrices given for {} users",
                blocks.len(),
                profile.users()
            )));
        }
        let mut roots = Vec::with_capacity(blocks.len());
        let mut log2_dets = Vec::with_capacity(blocks.len());
        for (k, (c, &a)) in blocks.iter().zip(profile.antennas()).enumerate() {
            if c.nrows() != a || c.ncols() != a {
                return Err(Error::Validation(format!(
                    "correlation of user {k} is {}x{}, expected {a}x{a}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            if linalg::hermitian_defect(c) > 1e-12 {
                return Err(Error::Validation(format!("correlation of user {k} is not Hermitian")));
            }
            roots.push(linalg::sqrtm_psd(c)?);
            let ld = linalg::log2_det_hpd(c).map_err(|_| {
                Error::Validation(format!("correlation of user {k} is not positive definite"))
            })?;
            log2_dets.push(ld);
        }
        Ok(Self {
            blocks,
            roots,
            log2_dets,
        })
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    /// Hermitian principal roots `C_k^{1/2}`.
    pub fn roots(&self) -> &[CMat] {
        &self.roots
    }

    /// `log2 |C_k|` per user.
    pub fn log2_dets(&self) -> &[f64] {
        &self.log2_dets
    }

    /// `C = blockdiag{C_k}`.
    pub fn composite(&self) -> CMat {
        linalg::block_diagonal(&self.blocks)
    }

    fn check_matches(&self, antennas: &[usize]) -> Result<()> {
        let ok = self.blocks.len() == antennas.len()
            && self.blocks.iter().zip(antennas).all(|(c, &a)| c.nrows() == a);
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(
                "correlation blocks do not match the antenna profile".into(),
            ))
        }
    }
}

/// One draw of the per-user channels `H_k` (N x r_k) with the composite
/// `H = [H_1, ..., H_K]` and its Gram matrix `H^H H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    antennas: Vec<usize>,
    users: Vec<CMat>,
    composite: CMat,
    gram: CMat,
}

impl ChannelRealization {
    pub fn from_blocks(users: Vec<CMat>) -> Result<Self> {
        let Some(first) = users.first() else {
            return Err(Error::Validation("at least one user is required".into()));
        };
        let n = first.nrows();
        if users.iter().any(|h| h.nrows() != n || h.ncols() == 0) {
            return Err(Error::Validation(
                "user channels must share the base-station dimension and be non-empty".into(),
            ));
        }
        let antennas: Vec<usize> = users.iter().map(|h| h.ncols()).collect();
        let mut composite = CMat::zeros(n, antennas.iter().sum());
        let mut c0 = 0;
        for h in &users {
            composite.view_mut((0, c0), (n, h.ncols())).copy_from(h);
            c0 += h.ncols();
        }
        let gram = linalg::hermitian_part(&(composite.adjoint() * &composite));
        Ok(Self {
            antennas,
            users,
            composite,
            gram,
        })
    }

    /// Splits a composite `N x r` matrix into user blocks.
    pub fn from_composite(h: CMat, antennas: &[usize]) -> Result<Self> {
        if antennas.iter().sum::<usize>() != h.ncols() {
            return Err(Error::Validation(format!(
                "composite channel has {} columns, profile needs {}",
                h.ncols(),
                antennas.iter().sum::<usize>()
            )));
        }
        let mut blocks = Vec::with_capacity(antennas.len());
        let mut c0 = 0;
        for &a in antennas {
            blocks.push(h.columns(c0, a).into_owned());
            c0 += a;
        }
        Self::from_blocks(blocks)
    }

    pub fn base_antennas(&self) -> usize {
        self.composite.nrows()
    }

    pub fn users(&self) -> usize {
        self.users.len()
    }

    pub fn antennas(&self) -> &[usize] {
        &self.antennas
    }

    pub fn total_antennas(&self) -> usize {
        self.composite.ncols()
    }

    pub fn user(&self, k: usize) -> Result<&CMat> {
        self.users.get(k).ok_or(Error::Index {
            index: k,
            users: self.users.len(),
        })
    }

    pub fn user_channels(&self) -> &[CMat] {
        &self.users
    }

    pub fn composite(&self) -> &CMat {
        &self.composite
    }

    pub fn gram(&self) -> &CMat {
        &self.gram
    }

    pub fn block_range(&self, k: usize) -> Result<Range<usize>> {
        block_range(&self.antennas, k)
    }

    /// `(H^H H)^{-1}`, after checking the Gram condition number.
    pub fn inverse_gram(&self) -> Result<CMat> {
        linalg::check_conditioning(&self.gram)?;
        linalg::inverse_hpd(&self.gram)
    }

    /// `H_k C_k^{1/2}` for every user.
    pub fn correlated(&self, correlation: &CorrelationModel) -> Result<Self> {
        correlation.check_matches(&self.antennas)?;
        Self::from_blocks(
            self.users
                .iter()
                .zip(correlation.roots())
                .map(|(h, root)| h * root)
                .collect(),
        )
    }
}

/// RNG for trial `index` of a Monte Carlo run with the given master seed.
///
/// Each trial owns a separate ChaCha stream, so results do not depend on how
/// trials are scheduled across threads.
pub fn trial_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draws `H_k = Hbar_k C_k^{1/2}` with i.i.d. CN(0, 1) entries in `Hbar_k`.
pub fn sample_channel(
    profile: &SystemProfile,
    correlation: &CorrelationModel,
    seed: u64,
) -> Result<ChannelRealization> {
    sample_channel_with(profile, correlation, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_channel_with<R: Rng + ?Sized>(
    profile: &SystemProfile,
    correlation: &CorrelationModel,
    rng: &mut R,
) -> Result<ChannelRealization> {
    correlation.check_matches(profile.antennas())?;
    let n = profile.base_antennas();
    let users = profile
        .antennas()
        .iter()
        .zip(correlation.roots())
        .map(|(&a, root)| linalg::complex_gaussian(n, a, rng) * root)
        .collect();
    ChannelRealization::from_blocks(users)
}
