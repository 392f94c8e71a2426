//! Average MSE in the downlink and in the virtual uplink / interference
//! channels, together with the MAMSE receivers of each channel.
//!
//! Filters are passed per user: `b[k]` is `N x S_k`, `w[k]` is `M_k x S_k`,
//! `v[k]` is `M_k x S_k` and `t[k]` is `N x S_k`.

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_solve, identity, re_trace, CMat};
use crate::model::LinkModel;

/// Downlink precoders/decoders and the virtual-channel pair they were last
/// exchanged with.
#[derive(Debug, Clone, PartialEq)]
pub struct Transceiver {
    pub b: Vec<CMat>,
    pub w: Vec<CMat>,
    pub v: Vec<CMat>,
    pub t: Vec<CMat>,
}

impl Transceiver {
    pub fn downlink(b: Vec<CMat>, w: Vec<CMat>) -> Self {
        Transceiver { b, w, v: Vec::new(), t: Vec::new() }
    }
}

/// Noise model of the virtual channel.
///
/// Per-symbol weights use the global symbol order (user-major).
#[derive(Debug, Clone, PartialEq)]
pub enum DualityNoise {
    /// White uplink noise `sigma2 I`.
    Uplink { sigma2: f64 },
    /// Diagonal uplink noise `diag(psi)`.
    PerAntenna { psi: Vec<f64> },
    /// Interference channel with noise `mu_k I` at user `k`'s receivers.
    PerUser { mu: Vec<f64> },
    /// Interference channel with noise `mu_ks I` per symbol receiver.
    PerSymbol { mu: Vec<f64> },
}

impl DualityNoise {
    fn check(&self, link: &LinkModel, symbols: usize) -> Result<()> {
        let (values, expected) = match self {
            DualityNoise::Uplink { sigma2 } => (std::slice::from_ref(sigma2), 1),
            DualityNoise::PerAntenna { psi } => (psi.as_slice(), link.n),
            DualityNoise::PerUser { mu } => (mu.as_slice(), link.k()),
            DualityNoise::PerSymbol { mu } => (mu.as_slice(), symbols),
        };
        if values.len() != expected {
            return Err(Error::Dimension(format!("virtual noise has {} entries, expected {expected}", values.len())));
        }
        if let DualityNoise::Uplink { sigma2 } = self {
            if !(*sigma2 > 0.0) || !sigma2.is_finite() {
                return Err(Error::Domain(format!("uplink noise variance must be positive, got {sigma2}")));
            }
        } else if let Some(bad) = values.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain(format!("virtual noise entries must be nonnegative, got {bad}")));
        }
        Ok(())
    }

    /// Scalar noise level seen by symbol `s` of user `k`; `None` for the
    /// per-antenna case.
    fn level(&self, k: usize, global: usize) -> Option<f64> {
        match self {
            DualityNoise::Uplink { sigma2 } => Some(*sigma2),
            DualityNoise::PerAntenna { .. } => None,
            DualityNoise::PerUser { mu } => Some(mu[k]),
            DualityNoise::PerSymbol { mu } => Some(mu[global]),
        }
    }
}

pub(crate) fn check_filters(link: &LinkModel, tx: &[CMat], rx: &[CMat], tx_rows_bs: bool) -> Result<()> {
    let k = link.k();
    if tx.len() != k || rx.len() != k {
        return Err(Error::Dimension(format!("expected {k} users, got {} and {} filters", tx.len(), rx.len())));
    }
    for (u, user) in link.users.iter().enumerate() {
        let m = user.h.nrows();
        let (bs, ms) = if tx_rows_bs { (&tx[u], &rx[u]) } else { (&rx[u], &tx[u]) };
        if bs.nrows() != link.n || ms.nrows() != m || bs.ncols() != ms.ncols() {
            return Err(Error::Dimension(format!(
                "user {u}: filter shapes {:?} / {:?} do not fit N={} M_k={m}",
                bs.shape(),
                ms.shape(),
                link.n
            )));
        }
    }
    Ok(())
}

/// `sum_k B_k B_k^H`.
pub fn tx_covariance(b: &[CMat], n: usize) -> CMat {
    b.iter().fold(CMat::zeros(n, n), |acc, bk| acc + bk * bk.adjoint())
}

fn gamma_dl_with_cov(k: usize, q: &CMat, link: &LinkModel) -> CMat {
    let u = &link.users[k];
    let mut g = &u.h * q * u.h.adjoint() + &u.r_n;
    if u.sigma_e2 != 0.0 {
        g += &u.r_m * c(u.sigma_e2 * re_trace(&(&u.r_b * q)));
    }
    g
}

/// Receive covariance of user `k` averaged over the estimation error:
/// `H_k B B^H H_k^H + sigma_ek^2 tr(R_bk B B^H) R_mk + R_nk`.
pub fn gamma_dl(k: usize, b: &[CMat], link: &LinkModel) -> CMat {
    gamma_dl_with_cov(k, &tx_covariance(b, link.n), link)
}

/// AMSE matrix of user `k`.
pub fn amse_user_dl(k: usize, b: &[CMat], w: &[CMat], link: &LinkModel) -> CMat {
    let g = gamma_dl(k, b, link);
    amse_user_from_gamma(k, &g, b, w, link)
}

fn amse_user_from_gamma(k: usize, g: &CMat, b: &[CMat], w: &[CMat], link: &LinkModel) -> CMat {
    let cross = w[k].adjoint() * &link.users[k].h * &b[k];
    identity(b[k].ncols()) + w[k].adjoint() * g * &w[k] - &cross - cross.adjoint()
}

/// Total downlink sum AMSE.
pub fn sum_amse_dl(b: &[CMat], w: &[CMat], link: &LinkModel) -> f64 {
    let q = tx_covariance(b, link.n);
    (0..link.k()).map(|k| re_trace(&amse_user_from_gamma(k, &gamma_dl_with_cov(k, &q, link), b, w, link))).sum()
}

/// Downlink MAMSE receivers `W_k = Gamma_k^-1 H_k B_k`.
pub fn mamse_receiver_dl(b: &[CMat], link: &LinkModel) -> Result<Vec<CMat>> {
    let q = tx_covariance(b, link.n);
    (0..link.k())
        .map(|k| {
            let g = gamma_dl_with_cov(k, &q, link);
            hermitian_solve(&g, &(&link.users[k].h * &b[k]))
                .ok_or_else(|| Error::Singular(format!("downlink receive covariance of user {k}")))
        })
        .collect()
}

/// Virtual-channel interference-plus-error covariance
/// `sum_i (H_i^H V_i V_i^H H_i + sigma_ei^2 tr(R_mi V_i V_i^H) R_bi)`.
pub fn gamma_c(v: &[CMat], link: &LinkModel) -> CMat {
    let mut g = CMat::zeros(link.n, link.n);
    for (u, vi) in link.users.iter().zip(v) {
        let hv = u.h.adjoint() * vi;
        g += &hv * hv.adjoint();
        if u.sigma_e2 != 0.0 {
            g += &u.r_b * c(u.sigma_e2 * re_trace(&(&u.r_m * vi * vi.adjoint())));
        }
    }
    g
}

/// Sum AMSE of the virtual channel under any of the supported noise models.
pub fn sum_amse_virtual(v: &[CMat], t: &[CMat], noise: &DualityNoise, link: &LinkModel) -> f64 {
    let gc = gamma_c(v, link);
    let mut total = 0.0;
    let mut global = 0;
    for (k, u) in link.users.iter().enumerate() {
        let hv = u.h.adjoint() * &v[k];
        let tk = &t[k];
        total += re_trace(&(tk.adjoint() * &gc * tk)) - 2.0 * re_trace(&(tk.adjoint() * hv));
        for s in 0..tk.ncols() {
            let col = tk.column(s);
            total += 1.0;
            total += match noise.level(k, global + s) {
                Some(level) => level * col.norm_squared(),
                None => match noise {
                    DualityNoise::PerAntenna { psi } => col.iter().zip(psi).map(|(x, p)| p * x.norm_sqr()).sum(),
                    _ => unreachable!(),
                },
            };
        }
        global += tk.ncols();
    }
    total
}

/// Uplink sum AMSE with white noise `sigma2 I`.
pub fn sum_amse_ul(v: &[CMat], t: &[CMat], sigma2: f64, link: &LinkModel) -> f64 {
    sum_amse_virtual(v, t, &DualityNoise::Uplink { sigma2 }, link)
}

/// Uplink sum AMSE with diagonal noise `diag(psi)`.
pub fn sum_amse_ul2(v: &[CMat], t: &[CMat], psi: &[f64], link: &LinkModel) -> f64 {
    sum_amse_virtual(v, t, &DualityNoise::PerAntenna { psi: psi.to_vec() }, link)
}

/// Interference-channel weights: one level per user or one per symbol.
#[derive(Debug, Clone, PartialEq)]
pub enum InterferenceWeights {
    PerUser(Vec<f64>),
    PerSymbol(Vec<f64>),
}

/// Interference-channel sum AMSE.
pub fn sum_amse_interf(v: &[CMat], t: &[CMat], weights: &InterferenceWeights, link: &LinkModel) -> f64 {
    let noise = match weights {
        InterferenceWeights::PerUser(mu) => DualityNoise::PerUser { mu: mu.clone() },
        InterferenceWeights::PerSymbol(mu) => DualityNoise::PerSymbol { mu: mu.clone() },
    };
    sum_amse_virtual(v, t, &noise, link)
}

/// MAMSE decoders of the virtual channel for precoders `v`.
///
/// Uplink noise gives `(Gamma_c + sigma2 I)^-1 H V`, per-antenna noise
/// `(Gamma_c + Psi)^-1 H V`, and the interference models solve one
/// regularized system per user or per symbol.
pub fn mamse_receiver_virtual(v: &[CMat], noise: &DualityNoise, link: &LinkModel) -> Result<Vec<CMat>> {
    let symbols: usize = v.iter().map(|x| x.ncols()).sum();
    noise.check(link, symbols)?;
    if v.len() != link.k() {
        return Err(Error::Dimension(format!("expected {} precoders, got {}", link.k(), v.len())));
    }
    let gc = gamma_c(v, link);
    let n = link.n;
    let singular = |what: String| Error::Singular(format!("virtual receive covariance ({what})"));
    match noise {
        DualityNoise::Uplink { sigma2 } => {
            let m = &gc + identity(n) * c(*sigma2);
            solve_per_user(&m, v, link).ok_or_else(|| singular("uplink".into()))
        }
        DualityNoise::PerAntenna { psi } => {
            let mut m = gc.clone();
            for (i, p) in psi.iter().enumerate() {
                m[(i, i)] += c(*p);
            }
            solve_per_user(&m, v, link).ok_or_else(|| singular("per-antenna".into()))
        }
        DualityNoise::PerUser { mu } => link
            .users
            .iter()
            .zip(v)
            .enumerate()
            .map(|(k, (u, vk))| {
                let m = &gc + identity(n) * c(mu[k]);
                hermitian_solve(&m, &(u.h.adjoint() * vk)).ok_or_else(|| singular(format!("user {k}")))
            })
            .collect(),
        DualityNoise::PerSymbol { mu } => {
            let mut global = 0;
            let mut out = Vec::with_capacity(v.len());
            for (k, (u, vk)) in link.users.iter().zip(v).enumerate() {
                let hv = u.h.adjoint() * vk;
                let mut tk = CMat::zeros(n, vk.ncols());
                for s in 0..vk.ncols() {
                    let m = &gc + identity(n) * c(mu[global + s]);
                    let col = hermitian_solve(&m, &hv.columns(s, 1).into_owned())
                        .ok_or_else(|| singular(format!("user {k} symbol {s}")))?;
                    tk.set_column(s, &col.column(0));
                }
                global += vk.ncols();
                out.push(tk);
            }
            Ok(out)
        }
    }
}

fn solve_per_user(m: &CMat, v: &[CMat], link: &LinkModel) -> Option<Vec<CMat>> {
    let chol = crate::linalg::hermitian_factor(m)?;
    Some(link.users.iter().zip(v).map(|(u, vk)| chol.solve(&(u.h.adjoint() * vk))).collect())
}

/// Per-symbol transmit powers `||b_ks||^2` in global order.
pub fn symbol_powers(b: &[CMat]) -> Vec<f64> {
    b.iter().flat_map(|bk| (0..bk.ncols()).map(move |s| bk.column(s).norm_squared())).collect()
}

/// Per-user transmit powers `tr(B_k B_k^H)`.
pub fn user_powers(b: &[CMat]) -> Vec<f64> {
    b.iter().map(|bk| bk.norm_squared()).collect()
}

/// Per-antenna transmit powers `[B B^H]_{n,n}`.
pub fn antenna_powers(b: &[CMat], n: usize) -> Vec<f64> {
    (0..n).map(|row| b.iter().map(|bk| bk.row(row).norm_squared()).sum()).collect()
}

pub fn total_power(b: &[CMat]) -> f64 {
    b.iter().map(|bk| bk.norm_squared()).sum()
}

/// Decoder-weighted noise power `sum_k tr(W_k^H R_nk W_k)`.
pub fn weighted_noise(w: &[CMat], link: &LinkModel) -> f64 {
    link.users.iter().zip(w).map(|(u, wk)| re_trace(&(wk.adjoint() * &u.r_n * wk))).sum()
}
