//! System configuration, spatial correlation, and random channel draws with
//! MMSE estimation-error structure.
//!
//! Channels are stored in downlink orientation: `h_hat[k]` is the `M_k x N`
//! matrix mapping BS antennas to the receive antennas of user `k`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_defect, hermitian_eigen, hermitian_solve, hermitian_sqrt, identity, CMat, C64};

/// Dimensions, error statistics, correlation coefficients and noise
/// covariances of a downlink with one BS and `K` mobile stations.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// BS antennas.
    pub n: usize,
    /// Receive antennas per user.
    pub m: Vec<usize>,
    /// Data streams per user.
    pub s: Vec<usize>,
    /// Estimation-error variance per user.
    pub sigma_e2: Vec<f64>,
    /// BS-side exponential correlation coefficient per user.
    pub rho_b: Vec<f64>,
    /// MS-side exponential correlation coefficient per user.
    pub rho_m: Vec<f64>,
    /// Receiver noise covariance per user (`M_k x M_k`).
    pub noise_cov: Vec<CMat>,
}

impl SystemConfig {
    /// Two users with two antennas and two streams each, a four-antenna BS,
    /// and the low-correlation parameter set. Noise is unit-variance white.
    pub fn reference() -> Self {
        SystemConfig {
            n: 4,
            m: vec![2, 2],
            s: vec![2, 2],
            sigma_e2: vec![0.01, 0.02],
            rho_b: vec![0.1, 0.12],
            rho_m: vec![0.05, 0.2],
            noise_cov: vec![identity(2), identity(2)],
        }
    }

    pub fn users(&self) -> usize {
        self.m.len()
    }

    pub fn total_symbols(&self) -> usize {
        self.s.iter().sum()
    }

    /// Index of the first global symbol belonging to each user.
    pub fn symbol_offsets(&self) -> Vec<usize> {
        self.s
            .iter()
            .scan(0, |acc, &s| {
                let at = *acc;
                *acc += s;
                Some(at)
            })
            .collect()
    }

    /// User owning global symbol `l` (both zero-based).
    pub fn symbol_owner(&self, l: usize) -> usize {
        let mut acc = 0;
        for (k, &s) in self.s.iter().enumerate() {
            acc += s;
            if l < acc {
                return k;
            }
        }
        panic!("symbol index {l} out of range for {acc} symbols");
    }

    pub fn with_noise(&self, noise_cov: Vec<CMat>) -> Self {
        SystemConfig { noise_cov, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.users();
        if k == 0 {
            return Err(Error::Config("at least one user is required".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("at least one BS antenna is required".into()));
        }
        for (name, len) in [
            ("symbol counts", self.s.len()),
            ("error variances", self.sigma_e2.len()),
            ("BS correlations", self.rho_b.len()),
            ("MS correlations", self.rho_m.len()),
            ("noise covariances", self.noise_cov.len()),
        ] {
            if len != k {
                return Err(Error::Config(format!("{name}: expected {k} entries, got {len}")));
            }
        }
        for u in 0..k {
            if self.s[u] == 0 || self.s[u] > self.m[u] {
                return Err(Error::Config(format!(
                    "user {u}: need 1 <= S_k <= M_k, got S_k={} M_k={}",
                    self.s[u], self.m[u]
                )));
            }
            if !(self.sigma_e2[u] >= 0.0) || !self.sigma_e2[u].is_finite() {
                return Err(Error::Config(format!("user {u}: error variance must be >= 0")));
            }
            for rho in [self.rho_b[u], self.rho_m[u]] {
                if !(0.0..1.0).contains(&rho) {
                    return Err(Error::Config(format!("user {u}: correlation {rho} outside [0, 1)")));
                }
            }
            let rn = &self.noise_cov[u];
            if rn.nrows() != self.m[u] || rn.ncols() != self.m[u] {
                return Err(Error::Config(format!("user {u}: noise covariance must be {0}x{0}", self.m[u])));
            }
            if hermitian_defect(rn) > 1e-12 {
                return Err(Error::Config(format!("user {u}: noise covariance is not Hermitian")));
            }
            let (eig, _) = hermitian_eigen(rn);
            if eig[0] < -1e-10 {
                return Err(Error::Config(format!(
                    "user {u}: noise covariance is not PSD (eigenvalue {:.3e})",
                    eig[0]
                )));
            }
        }
        Ok(())
    }
}

/// `dim x dim` matrix with entries `rho^|i-j|`.
pub fn exp_correlation(dim: usize, rho: f64) -> Result<CMat> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("correlation coefficient {rho} outside [0, 1)")));
    }
    Ok(CMat::from_fn(dim, dim, |i, j| c(rho.powi(i.abs_diff(j) as i32))))
}

/// Effective error correlation `(I + sigma_e2 * R~^-1)^-1` at the receiver.
///
/// Evaluated as `R~ (R~ + sigma_e2 I)^-1`, which avoids inverting `R~`.
pub fn effective_rx_correlation(r_tilde: &CMat, sigma_e2: f64) -> Result<CMat> {
    if sigma_e2 < 0.0 {
        return Err(Error::Domain("error variance must be >= 0".into()));
    }
    let (eig, _) = hermitian_eigen(r_tilde);
    if eig.first().copied().unwrap_or(0.0) <= 1e-12 {
        return Err(Error::Singular("receive correlation matrix is rank deficient".into()));
    }
    let dim = r_tilde.nrows();
    let shifted = r_tilde + identity(dim) * c(sigma_e2);
    // R~ and (R~ + s I) commute, so R~ (R~ + s I)^-1 = (R~ + s I)^-1 R~.
    let out = hermitian_solve(&shifted, r_tilde)
        .ok_or_else(|| Error::Singular("receive correlation matrix is rank deficient".into()))?;
    Ok(crate::linalg::symmetrize(&out))
}

/// A seedable family of independent random streams.
///
/// Streams are addressed by a path of integer keys so that, for example, the
/// draw for (trial 7, user 1) does not depend on how many other trials ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    key: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { key: splitmix64(seed ^ 0x6a09_e667_f3bc_c908) }
    }

    pub fn child(self, index: u64) -> Self {
        RngStream { key: splitmix64(self.key.rotate_left(17) ^ splitmix64(index.wrapping_add(0x9e37_79b9))) }
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Circularly symmetric complex Gaussian sample with total variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let scale = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * scale, im * scale)
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    // Column-major fill order, fixed so draws are reproducible.
    let mut out = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            out[(i, j)] = complex_gaussian(rng, var);
        }
    }
    out
}

/// One channel realization for every user, together with the correlation
/// matrices it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Estimated downlink channels `M_k x N`.
    pub h_hat: Vec<CMat>,
    /// True downlink channels `M_k x N`.
    pub h_true: Vec<CMat>,
    /// Colored estimation errors `M_k x N`.
    pub error: Vec<CMat>,
    pub r_b: Vec<CMat>,
    pub r_m_tilde: Vec<CMat>,
    /// Effective error correlation at each receiver.
    pub r_m: Vec<CMat>,
}

/// Per-user correlation matrices and their square roots.
#[derive(Debug, Clone)]
pub struct Correlations {
    pub r_b: Vec<CMat>,
    pub r_m_tilde: Vec<CMat>,
    pub r_m: Vec<CMat>,
    r_b_sqrt: Vec<CMat>,
    r_m_tilde_sqrt: Vec<CMat>,
    r_m_sqrt: Vec<CMat>,
}

impl Correlations {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        let k = config.users();
        let mut out = Correlations {
            r_b: Vec::with_capacity(k),
            r_m_tilde: Vec::with_capacity(k),
            r_m: Vec::with_capacity(k),
            r_b_sqrt: Vec::with_capacity(k),
            r_m_tilde_sqrt: Vec::with_capacity(k),
            r_m_sqrt: Vec::with_capacity(k),
        };
        for u in 0..k {
            let r_b = exp_correlation(config.n, config.rho_b[u])?;
            let r_mt = exp_correlation(config.m[u], config.rho_m[u])?;
            let r_m = effective_rx_correlation(&r_mt, config.sigma_e2[u])?;
            out.r_b_sqrt.push(hermitian_sqrt(&r_b)?);
            out.r_m_tilde_sqrt.push(hermitian_sqrt(&r_mt)?);
            out.r_m_sqrt.push(hermitian_sqrt(&r_m)?);
            out.r_b.push(r_b);
            out.r_m_tilde.push(r_mt);
            out.r_m.push(r_m);
        }
        Ok(out)
    }
}

/// Draws one channel realization.
///
/// User `k` consumes only `stream.child(k)`. The estimate is
/// `R~_m^1/2 H_w R_b^1/2` with a unit-variance white `H_w`; the error is
/// `R_m^1/2 E_w R_b^1/2` with `E_w` entries of variance `sigma_e2[k]`.
pub fn realize_channel(config: &SystemConfig, stream: RngStream) -> Result<ChannelSet> {
    config.validate()?;
    let corr = Correlations::new(config)?;
    Ok(realize_with(config, &corr, stream))
}

pub fn realize_with(config: &SystemConfig, corr: &Correlations, stream: RngStream) -> ChannelSet {
    let k = config.users();
    let mut h_hat = Vec::with_capacity(k);
    let mut h_true = Vec::with_capacity(k);
    let mut error = Vec::with_capacity(k);
    for u in 0..k {
        let mut rng = stream.child(u as u64).rng();
        let white = complex_gaussian_matrix(&mut rng, config.m[u], config.n, 1.0);
        let white_err = complex_gaussian_matrix(&mut rng, config.m[u], config.n, config.sigma_e2[u]);
        let est = &corr.r_m_tilde_sqrt[u] * white * &corr.r_b_sqrt[u];
        let err = if config.sigma_e2[u] == 0.0 {
            CMat::zeros(config.m[u], config.n)
        } else {
            &corr.r_m_sqrt[u] * white_err * &corr.r_b_sqrt[u]
        };
        h_true.push(&est + &err);
        h_hat.push(est);
        error.push(err);
    }
    ChannelSet { h_hat, h_true, error, r_b: corr.r_b.clone(), r_m_tilde: corr.r_m_tilde.clone(), r_m: corr.r_m.clone() }
}

/// How much the designer knows about the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DesignMode {
    /// Uses the estimate and the true error statistics.
    Robust,
    /// Treats the estimate as exact.
    Naive,
    /// Knows the true channel.
    Perfect,
}

impl DesignMode {
    pub const ALL: [DesignMode; 3] = [DesignMode::Robust, DesignMode::Naive, DesignMode::Perfect];

    pub fn name(self) -> &'static str {
        match self {
            DesignMode::Robust => "robust",
            DesignMode::Naive => "naive",
            DesignMode::Perfect => "perfect",
        }
    }
}

impl std::str::FromStr for DesignMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "robust" => Ok(DesignMode::Robust),
            "naive" => Ok(DesignMode::Naive),
            "perfect" => Ok(DesignMode::Perfect),
            other => Err(Error::Parse(format!("unknown design mode '{other}'"))),
        }
    }
}

/// Everything the AMSE expressions need about one user's link: the channel
/// the designer works with, its error statistics, and the noise covariance.
#[derive(Debug, Clone)]
pub struct UserLink {
    /// Downlink channel `M_k x N`.
    pub h: CMat,
    pub sigma_e2: f64,
    pub r_b: CMat,
    pub r_m: CMat,
    pub r_n: CMat,
}

/// Channel knowledge used by the AMSE routines, one entry per user.
#[derive(Debug, Clone)]
pub struct LinkModel {
    pub n: usize,
    pub users: Arc<[UserLink]>,
}

impl LinkModel {
    /// Estimated channel with the configured error statistics.
    pub fn estimated(channel: &ChannelSet, config: &SystemConfig) -> Self {
        Self::build(config, |u| (channel.h_hat[u].clone(), config.sigma_e2[u]), channel)
    }

    /// Estimated channel treated as exact.
    pub fn naive(channel: &ChannelSet, config: &SystemConfig) -> Self {
        Self::build(config, |u| (channel.h_hat[u].clone(), 0.0), channel)
    }

    /// True channel, no error.
    pub fn perfect(channel: &ChannelSet, config: &SystemConfig) -> Self {
        Self::build(config, |u| (channel.h_true[u].clone(), 0.0), channel)
    }

    /// Knowledge the designer has in `mode`.
    pub fn for_design(mode: DesignMode, channel: &ChannelSet, config: &SystemConfig) -> Self {
        match mode {
            DesignMode::Robust => Self::estimated(channel, config),
            DesignMode::Naive => Self::naive(channel, config),
            DesignMode::Perfect => Self::perfect(channel, config),
        }
    }

    fn build(config: &SystemConfig, pick: impl Fn(usize) -> (CMat, f64), channel: &ChannelSet) -> Self {
        let users = (0..config.users())
            .map(|u| {
                let (h, sigma_e2) = pick(u);
                UserLink {
                    h,
                    sigma_e2,
                    r_b: channel.r_b[u].clone(),
                    r_m: channel.r_m[u].clone(),
                    r_n: config.noise_cov[u].clone(),
                }
            })
            .collect();
        LinkModel { n: config.n, users }
    }

    /// Builds a link directly from per-user pieces; mostly for tests.
    pub fn from_users(n: usize, users: Vec<UserLink>) -> Self {
        LinkModel { n, users: users.into() }
    }

    pub fn k(&self) -> usize {
        self.users.len()
    }

    /// Same link with every error variance multiplied by `factor`.
    pub fn scale_error(&self, factor: f64) -> Self {
        let users = self.users.iter().map(|u| UserLink { sigma_e2: u.sigma_e2 * factor, ..u.clone() }).collect();
        LinkModel { n: self.n, users }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_diff;

    fn real(rows: usize, cols: usize, data: &[f64]) -> CMat {
        CMat::from_row_slice(rows, cols, &data.iter().map(|&x| c(x)).collect::<Vec<_>>())
    }

    #[test]
    fn exp_correlation_examples() {
        assert_eq!(exp_correlation(3, 0.0).unwrap(), identity(3));
        assert_eq!(exp_correlation(2, 0.5).unwrap(), real(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        let r = exp_correlation(4, 0.12).unwrap();
        assert!((r[(0, 3)].re - 0.12f64.powi(3)).abs() < 1e-15);
        assert_eq!(r[(2, 1)], r[(1, 2)]);
        assert!(matches!(exp_correlation(2, 1.0), Err(Error::Domain(_))));
        assert!(matches!(exp_correlation(2, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn exp_correlation_is_psd_on_grid() {
        for dim in 1..=16 {
            for step in 0..10 {
                let rho = step as f64 / 10.0;
                let (eig, _) = hermitian_eigen(&exp_correlation(dim, rho).unwrap());
                assert!(eig[0] >= -1e-10, "dim {dim} rho {rho}: {}", eig[0]);
            }
        }
    }

    #[test]
    fn effective_correlation_examples() {
        let r = exp_correlation(3, 0.4).unwrap();
        assert!(rel_diff(&effective_rx_correlation(&r, 0.0).unwrap(), &identity(3)) < 1e-14);
        let got = effective_rx_correlation(&identity(2), 0.01).unwrap();
        assert!(rel_diff(&got, &(identity(2) * c(1.0 / 1.01))) < 1e-14);
    }

    #[test]
    fn effective_correlation_matches_dense_inverse() {
        // 2x2 oracle: (I + s R^-1)^-1 with R^-1 from the adjugate formula.
        let r = exp_correlation(2, 0.2).unwrap();
        let det = 1.0 - 0.04;
        let r_inv = real(2, 2, &[1.0 / det, -0.2 / det, -0.2 / det, 1.0 / det]);
        let m = identity(2) + r_inv * c(0.02);
        let (a, b, d) = (m[(0, 0)].re, m[(0, 1)].re, m[(1, 1)].re);
        let mdet = a * d - b * b;
        let expected = real(2, 2, &[d / mdet, -b / mdet, -b / mdet, a / mdet]);
        let got = effective_rx_correlation(&r, 0.02).unwrap();
        assert!(rel_diff(&got, &expected) < 1e-14);
        let (eig, _) = hermitian_eigen(&got);
        assert!(eig.iter().all(|&e| e > 0.0 && e <= 1.0));
    }

    #[test]
    fn effective_correlation_eigenvalue_map() {
        for &(rho, s) in &[(0.3, 0.05), (0.8, 0.5), (0.5, 2.0)] {
            let r = exp_correlation(4, rho).unwrap();
            let (lam, vecs) = hermitian_eigen(&r);
            let mapped: Vec<C64> = lam.iter().map(|&l| c(1.0 / (1.0 + s / l))).collect();
            let expected = &vecs * CMat::from_diagonal(&nalgebra::DVector::from_vec(mapped)) * vecs.adjoint();
            let got = effective_rx_correlation(&r, s).unwrap();
            assert!(rel_diff(&got, &expected) < 1e-10);
        }
    }

    #[test]
    fn effective_correlation_rejects_singular() {
        let sing = real(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(effective_rx_correlation(&sing, 0.1), Err(Error::Singular(_))));
    }

    #[test]
    fn validation_catches_bad_configs() {
        assert!(SystemConfig::reference().validate().is_ok());
        let mut c1 = SystemConfig::reference();
        c1.s[0] = 3;
        assert!(c1.validate().is_err());
        let mut c2 = SystemConfig::reference();
        c2.rho_b[1] = 1.0;
        assert!(c2.validate().is_err());
        let mut c3 = SystemConfig::reference();
        c3.noise_cov[0] = real(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(c3.validate().is_err());
        let mut c4 = SystemConfig::reference();
        c4.sigma_e2.pop();
        assert!(c4.validate().is_err());
    }

    #[test]
    fn symbol_owner_scans_cumulative_counts() {
        let mut cfg = SystemConfig::reference();
        assert_eq!((0..4).map(|l| cfg.symbol_owner(l)).collect::<Vec<_>>(), vec![0, 0, 1, 1]);
        cfg.m = vec![1, 2, 1];
        cfg.s = vec![1, 2, 1];
        assert_eq!(cfg.symbol_owner(1), 1);
        assert_eq!(cfg.symbol_owner(3), 2);
        assert_eq!(cfg.symbol_offsets(), vec![0, 1, 3]);
    }

    #[test]
    fn perfect_csi_has_zero_error() {
        let mut cfg = SystemConfig::reference();
        cfg.sigma_e2 = vec![0.0, 0.0];
        let ch = realize_channel(&cfg, RngStream::new(3)).unwrap();
        for u in 0..2 {
            assert_eq!(ch.error[u], CMat::zeros(2, 4));
            assert_eq!(ch.h_true[u], ch.h_hat[u]);
        }
    }

    #[test]
    fn realization_is_deterministic_and_additive() {
        let cfg = SystemConfig::reference();
        let a = realize_channel(&cfg, RngStream::new(11).child(4)).unwrap();
        let b = realize_channel(&cfg, RngStream::new(11).child(4)).unwrap();
        assert_eq!(a, b);
        let other = realize_channel(&cfg, RngStream::new(11).child(5)).unwrap();
        assert_ne!(a.h_hat, other.h_hat);
        for u in 0..2 {
            assert_eq!(a.h_hat[u].shape(), (2, 4));
            assert!(crate::linalg::max_abs(&(&a.h_hat[u] + &a.error[u] - &a.h_true[u])) < 1e-12);
        }
    }
}
