//! AMSE-conserving transfers between the downlink and the virtual uplink /
//! interference channels, and the fixed-point solvers that pick the virtual
//! noise levels so that the returning transfer meets a power constraint.
//!
//! Every fixed point here has the same shape. With a budget `tau`, limits
//! `l_i` and nonnegative usage weights `q_i(x)`,
//!
//! ```text
//! x_i = (tau / l_i) * x_i q_i(x) / sum_j x_j q_j(x)
//! ```
//!
//! Any solution satisfies `sum_i x_i l_i = tau`, and the downlink power the
//! returning transfer assigns to entity `i` is exactly `l_i`.

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, hermitian_factor, identity, max_abs, re_trace, CMat};
use crate::model::LinkModel;
use crate::mse::{antenna_powers, check_filters, weighted_noise, DualityNoise};

/// Quantities of the virtual channel that only depend on the downlink
/// decoders (which become the virtual precoders).
#[derive(Debug, Clone)]
pub struct DualityState {
    /// `sum_k H_k^H W_k W_k^H H_k`.
    pub a: CMat,
    /// `sum_i sigma_ei^2 tr(R_mi W_i W_i^H) R_bi`.
    pub upsilon: CMat,
    pub a_user: Vec<CMat>,
    /// Per-symbol terms in global symbol order.
    pub a_symbol: Vec<CMat>,
    /// `sum_k tr(W_k^H R_nk W_k)`.
    pub tau: f64,
}

impl DualityState {
    pub fn new(w: &[CMat], link: &LinkModel) -> Self {
        let n = link.n;
        let mut a_user = Vec::with_capacity(link.k());
        let mut a_symbol = Vec::new();
        let mut upsilon = CMat::zeros(n, n);
        for (u, wk) in link.users.iter().zip(w) {
            let hw = u.h.adjoint() * wk;
            for s in 0..hw.ncols() {
                let col = hw.column(s);
                a_symbol.push(col * col.adjoint());
            }
            a_user.push(&hw * hw.adjoint());
            if u.sigma_e2 != 0.0 {
                upsilon += &u.r_b * c(u.sigma_e2 * re_trace(&(&u.r_m * wk * wk.adjoint())));
            }
        }
        let a = a_user.iter().fold(CMat::zeros(n, n), |acc, x| acc + x);
        DualityState { a, upsilon, a_user, a_symbol, tau: weighted_noise(w, link) }
    }

    fn base(&self) -> CMat {
        &self.a + &self.upsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Newton steps allowed.
    pub max_iter: usize,
    /// Required `||x - F(x)||_inf / ||x||_inf` at the returned point.
    pub tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { max_iter: 500, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Value, gradient and Hessian of a convex potential whose negative gradient
/// is the usage vector `q(x)`; `None` outside its domain.
type Potential<'a> = dyn Fn(&[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> + 'a;

/// Solves the budget fixed point through its variational form.
///
/// With `q = -grad f` for a convex `f`, the fixed points of the budget map are
/// the KKT points of
///
/// ```text
/// minimize f(x)  s.t.  sum_i l_i x_i = tau,  x >= 0
/// ```
///
/// with multiplier `nu = q_i / l_i` on every positive entry and
/// `q_i <= nu l_i` on the zero entries. This is solved by an active-set
/// Newton method from the uniform split `x_0,i = tau / (len * l_i)`.
fn budget_fixed_point<Q>(
    tau: f64,
    limits: &[f64],
    potential: &Potential<'_>,
    usage: Q,
    opts: &FixedPointOptions,
) -> Result<FixedPoint>
where
    Q: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("fixed point needs a positive noise budget, got {tau}")));
    }
    if limits.is_empty() {
        return Err(Error::Dimension("fixed point needs at least one limit".into()));
    }
    if let Some(bad) = limits.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::Domain(format!("power limits must be positive, got {bad}")));
    }
    let n = limits.len();
    let mut x: Vec<f64> = limits.iter().map(|&l| tau / (n as f64 * l)).collect();
    let mut free = vec![true; n];
    let (mut f, mut g, mut h) =
        potential(&x).ok_or_else(|| Error::Singular("virtual receive covariance at the uniform split".into()))?;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let (d, nu) = equality_newton(&idx, &g, &h, limits);
        let decrement = -idx.iter().zip(d.iter()).map(|(&i, di)| g[i] * di).sum::<f64>();
        let q: Vec<f64> = g.iter().map(|v| -v).collect();
        let local = map_residual_parts(tau, limits, &x, &q).map_or(f64::INFINITY, |(a, _)| a);
        if local <= FACE_TOL * opts.tol || d.amax() == 0.0 {
            // Optimal on this face; release the bound entry whose multiplier
            // has the wrong sign, if any.
            let scale = g.amax().max(f64::MIN_POSITIVE);
            let release = (0..n)
                .filter(|&i| !free[i])
                .map(|i| (i, g[i] + nu * limits[i]))
                .filter(|&(_, kappa)| kappa < -MULTIPLIER_TOL * scale)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let Some((i, kappa)) = release else {
                break;
            };
            // Shift budget uniformly from the other entries into entry i;
            // the slope along this direction is kappa / l_i < 0.
            let mut dir = DVector::from_fn(n, |j, _| -x[j] / tau);
            dir[i] += 1.0 / limits[i];
            let slope = kappa / limits[i];
            let curv = dir.dot(&(&h * &dir));
            let mut step = if curv > 0.0 { (-slope / curv).min(tau) } else { tau };
            let accepted = loop {
                let cand: Vec<f64> = (0..n).map(|j| (x[j] + step * dir[j]).max(0.0)).collect();
                if let Some((fc, gc, hc)) = potential(&cand) {
                    if fc <= f + ARMIJO * step * slope {
                        break Some((cand, fc, gc, hc));
                    }
                }
                step *= 0.5;
                if step < 1e-16 * tau {
                    break None;
                }
            };
            let Some((cand, fc, gc, hc)) = accepted else {
                break;
            };
            free[i] = true;
            x = cand;
            (f, g, h) = (fc, gc, hc);
            continue;
        }
        // Below the resolution of f the Armijo test is meaningless.
        let undamped = decrement <= NOISE_FLOOR * f.abs().max(1.0);
        // Longest step keeping every free entry nonnegative.
        let mut max_step = f64::INFINITY;
        let mut blocking = None;
        for (&i, di) in idx.iter().zip(d.iter()) {
            if *di < 0.0 && -x[i] / di < max_step {
                max_step = -x[i] / di;
                blocking = Some(i);
            }
        }
        let mut step = max_step.min(1.0);
        let accepted = loop {
            let mut cand = x.clone();
            for (&i, di) in idx.iter().zip(d.iter()) {
                cand[i] = (cand[i] + step * di).max(0.0);
            }
            if step == max_step {
                if let Some(b) = blocking {
                    cand[b] = 0.0;
                }
            }
            if let Some((fc, gc, hc)) = potential(&cand) {
                if undamped || fc <= f - ARMIJO * step * decrement {
                    break Some((cand, fc, gc, hc));
                }
            }
            step *= 0.5;
            if step < 1e-16 {
                break None;
            }
        };
        let Some((cand, fc, gc, hc)) = accepted else {
            break;
        };
        if step == max_step {
            if let Some(b) = blocking {
                free[b] = false;
            }
        }
        x = cand;
        (f, g, h) = (fc, gc, hc);
    }
    let q = usage(&x)?;
    let residual = map_residual(tau, limits, &x, &q)
        .ok_or_else(|| Error::DegenerateTransfer("virtual decoders carry no signal".into()))?;
    if residual > opts.tol {
        return Err(Error::FixedPointNotConverged { iterations, residual });
    }
    debug!("budget fixed point solved in {iterations} Newton steps (residual {residual:.2e})");
    Ok(FixedPoint { values: x, iterations, residual })
}

const FACE_TOL: f64 = 1e-3;
const NOISE_FLOOR: f64 = 1e-13;
const MULTIPLIER_TOL: f64 = 1e-12;
const ARMIJO: f64 = 0.3;

/// Newton direction on the free entries subject to `sum_i l_i d_i = 0`,
/// together with the multiplier estimate `nu`.
fn equality_newton(idx: &[usize], g: &DVector<f64>, h: &DMatrix<f64>, limits: &[f64]) -> (DVector<f64>, f64) {
    let m = idx.len();
    let mut kkt = DMatrix::zeros(m + 1, m + 1);
    let mut rhs = DVector::zeros(m + 1);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            kkt[(a, b)] = h[(i, j)];
        }
        kkt[(a, m)] = limits[i];
        kkt[(m, a)] = limits[i];
        rhs[a] = -g[i];
    }
    let scale = (0..m).map(|a| kkt[(a, a)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    loop {
        let mut k = kkt.clone();
        for a in 0..m {
            k[(a, a)] += ridge;
        }
        if let Some(sol) = k.lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                return (sol.rows(0, m).into_owned(), sol[m]);
            }
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
    }
}

/// Residual of the budget map `F(x)_i = (tau / l_i) x_i q_i / sum_j x_j q_j`
/// as `(||x - F(x)||_inf / ||x||_inf, excess)`, where `excess` is the largest
/// relative amount `tau q_i / (l_i sum_j x_j q_j) - 1` by which a zero entry
/// would be pushed above its limit.
fn map_residual_parts(tau: f64, limits: &[f64], x: &[f64], q: &[f64]) -> Option<(f64, f64)> {
    let denom: f64 = x.iter().zip(q).map(|(a, b)| a * b).sum();
    if !(denom > 0.0) || !denom.is_finite() {
        return None;
    }
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let (mut active, mut excess) = (0.0_f64, 0.0_f64);
    for ((xi, qi), li) in x.iter().zip(q).zip(limits) {
        let ratio = tau * qi / (li * denom);
        if *xi == 0.0 {
            excess = excess.max(ratio - 1.0);
        } else {
            active = active.max(xi * (1.0 - ratio).abs() / scale);
        }
    }
    Some((active, excess))
}

fn map_residual(tau: f64, limits: &[f64], x: &[f64], q: &[f64]) -> Option<f64> {
    map_residual_parts(tau, limits, x, q).map(|(a, e)| a.max(e))
}

/// Per-antenna usage `[X^-1 A X^-1]_{nn}` with `X = A + Upsilon + diag(psi)`,
/// i.e. the squared row norms of the MAMSE decoder matrix.
pub fn antenna_usage(state: &DualityState, psi: &[f64]) -> Result<Vec<f64>> {
    let mut x = state.base();
    for (i, p) in psi.iter().enumerate() {
        x[(i, i)] += c(*p);
    }
    let chol = hermitian_factor(&x).ok_or_else(|| Error::Singular("A + Upsilon + Psi".into()))?;
    let inv = chol.inverse();
    let m = &inv * &state.a * &inv;
    Ok((0..psi.len()).map(|i| m[(i, i)].re.max(0.0)).collect())
}

/// `tr(X^-1 A)` with its derivatives in `psi`; the gradient is minus the
/// antenna usage.
fn antenna_potential(state: &DualityState, psi: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
    let mut x = state.base();
    for (i, p) in psi.iter().enumerate() {
        x[(i, i)] += c(*p);
    }
    let inv = hermitian_factor(&x)?.inverse();
    let m = &inv * &state.a * &inv;
    let n = psi.len();
    let f = (&inv * &state.a).trace().re;
    let g = DVector::from_fn(n, |i, _| -m[(i, i)].re);
    let h = DMatrix::from_fn(n, n, |i, j| 2.0 * (m[(i, j)] * inv[(j, i)]).re);
    Some((f, g, h))
}

/// Eigenbasis of `A + Upsilon`, used to evaluate `tr((A + Upsilon + mu I)^-k A_i)`
/// for many `mu` cheaply.
struct ShiftedTraces {
    eig: Vec<f64>,
    /// Diagonals of `U^H A_i U`.
    diags: Vec<Vec<f64>>,
}

impl ShiftedTraces {
    fn new(base: &CMat, parts: &[CMat]) -> Self {
        let (eig, vecs) = hermitian_eigen(base);
        let diags = parts
            .iter()
            .map(|p| {
                let r = vecs.adjoint() * p * &vecs;
                (0..eig.len()).map(|j| r[(j, j)].re.max(0.0)).collect()
            })
            .collect();
        ShiftedTraces { eig, diags }
    }

    fn power(&self, i: usize, mu: f64, k: i32) -> f64 {
        self.diags[i].iter().zip(&self.eig).filter(|(d, _)| **d > 0.0).map(|(d, l)| d / (l.max(0.0) + mu).powi(k)).sum()
    }

    fn trace(&self, i: usize, mu: f64) -> f64 {
        self.power(i, mu, 2)
    }

    /// Separable potential `sum_i tr((A + Upsilon + mu_i I)^-1 A_i)`.
    fn potential(&self, mu: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let n = mu.len();
        let f: f64 = (0..n).map(|i| self.power(i, mu[i], 1)).sum();
        if !f.is_finite() {
            return None;
        }
        let g = DVector::from_fn(n, |i, _| -self.power(i, mu[i], 2));
        let h = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 * self.power(i, mu[i], 3) } else { 0.0 });
        Some((f, g, h))
    }
}

/// Diagonal uplink noise making the returning transfer spend exactly
/// `p_limits[n]` on every antenna with `psi_n > 0` and at most that on the
/// others.
pub fn solve_psi_fixed_point(state: &DualityState, p_limits: &[f64], opts: &FixedPointOptions) -> Result<FixedPoint> {
    if p_limits.len() != state.a.nrows() {
        return Err(Error::Dimension(format!("{} antenna limits for {} antennas", p_limits.len(), state.a.nrows())));
    }
    budget_fixed_point(state.tau, p_limits, &|psi| antenna_potential(state, psi), |psi| antenna_usage(state, psi), opts)
}

/// Per-antenna fixed point against the current antenna powers, used by the
/// power-minimization variant so that no antenna power grows.
pub fn solve_psi_fixed_point_power_min(
    state: &DualityState,
    p_targets: &[f64],
    opts: &FixedPointOptions,
) -> Result<FixedPoint> {
    solve_psi_fixed_point(state, p_targets, opts)
}

fn separable_fixed_point(
    state: &DualityState,
    parts: &[CMat],
    p_limits: &[f64],
    opts: &FixedPointOptions,
) -> Result<FixedPoint> {
    let traces = ShiftedTraces::new(&state.base(), parts);
    budget_fixed_point(
        state.tau,
        p_limits,
        &|mu| traces.potential(mu),
        |mu| Ok(mu.iter().enumerate().map(|(k, &m)| traces.trace(k, m)).collect()),
        opts,
    )
}

/// Per-user interference noise levels.
pub fn solve_mu_fixed_point(state: &DualityState, p_limits: &[f64], opts: &FixedPointOptions) -> Result<FixedPoint> {
    if p_limits.len() != state.a_user.len() {
        return Err(Error::Dimension(format!("{} user limits for {} users", p_limits.len(), state.a_user.len())));
    }
    separable_fixed_point(state, &state.a_user, p_limits, opts)
}

/// Per-symbol interference noise levels.
pub fn solve_mu_tilde_fixed_point(
    state: &DualityState,
    p_limits: &[f64],
    opts: &FixedPointOptions,
) -> Result<FixedPoint> {
    if p_limits.len() != state.a_symbol.len() {
        return Err(Error::Dimension(format!("{} symbol limits for {} symbols", p_limits.len(), state.a_symbol.len())));
    }
    separable_fixed_point(state, &state.a_symbol, p_limits, opts)
}

/// Residual `||x - F(x)||_inf / ||x||_inf` of a candidate solution.
pub fn fixed_point_residual(state: &DualityState, noise: &DualityNoise, limits: &[f64]) -> Result<f64> {
    let (x, q) = match noise {
        DualityNoise::PerAntenna { psi } => (psi.clone(), antenna_usage(state, psi)?),
        DualityNoise::PerUser { mu } => {
            let tr = ShiftedTraces::new(&state.base(), &state.a_user);
            (mu.clone(), mu.iter().enumerate().map(|(k, &m)| tr.trace(k, m)).collect())
        }
        DualityNoise::PerSymbol { mu } => {
            let tr = ShiftedTraces::new(&state.base(), &state.a_symbol);
            (mu.clone(), mu.iter().enumerate().map(|(l, &m)| tr.trace(l, m)).collect())
        }
        DualityNoise::Uplink { .. } => {
            return Err(Error::Domain("white uplink noise has no fixed point".into()));
        }
    };
    map_residual(state.tau, limits, &x, &q)
        .ok_or_else(|| Error::DegenerateTransfer("virtual decoders carry no signal".into()))
}

fn scale_all(m: &[CMat], f: f64) -> Vec<CMat> {
    m.iter().map(|x| x * c(f)).collect()
}

/// Downlink to uplink with white uplink noise `sigma2 I`:
/// `V = beta W`, `T = B / beta`, `beta^2 = sigma2 tr(B^H B) / tr(W^H R_n W)`.
pub fn transfer_dl_to_ul_p1(
    b: &[CMat],
    w: &[CMat],
    link: &LinkModel,
    sigma2: f64,
) -> Result<(Vec<CMat>, Vec<CMat>, f64)> {
    check_filters(link, b, w, true)?;
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("uplink noise variance must be positive, got {sigma2}")));
    }
    let tau = weighted_noise(w, link);
    let p = crate::mse::total_power(b);
    if !(tau > 0.0) || !(p > 0.0) {
        return Err(Error::DegenerateTransfer(format!("tr(W^H R_n W) = {tau:.3e}, tr(B^H B) = {p:.3e}")));
    }
    let beta = (sigma2 * p / tau).sqrt();
    Ok((scale_all(w, beta), scale_all(b, 1.0 / beta), beta))
}

/// Uplink back to downlink: `B = beta T`, `W = V / beta`,
/// `beta^2 = tr(V^H R_n V) / (sigma2 tr(T^H T))`.
pub fn transfer_ul_to_dl_p1(
    v: &[CMat],
    t: &[CMat],
    link: &LinkModel,
    sigma2: f64,
) -> Result<(Vec<CMat>, Vec<CMat>, f64)> {
    check_filters(link, t, v, true)?;
    let tau = weighted_noise(v, link);
    let tt = crate::mse::total_power(t);
    if !(tau > 0.0) || !(tt > 0.0) {
        return Err(Error::DegenerateTransfer(format!("tr(V^H R_n V) = {tau:.3e}, tr(T^H T) = {tt:.3e}")));
    }
    let beta = (tau / (sigma2 * tt)).sqrt();
    Ok((scale_all(t, beta), scale_all(v, 1.0 / beta), beta))
}

/// Noise variance shared by all users when every `R_nk = sigma^2 I`.
pub fn common_white_noise(link: &LinkModel) -> Option<f64> {
    let first = link.users.first()?.r_n[(0, 0)].re;
    let white = link.users.iter().all(|u| {
        let m = u.r_n.nrows();
        max_abs(&(&u.r_n - identity(m) * c(first))) <= 1e-14 * first.abs().max(1.0)
    });
    white.then_some(first)
}

/// Classical transfer for white, equal receiver noise: the uplink sees the
/// same noise variance and the same total power as the downlink,
/// `beta^2 = tr(B^H B) / tr(W^H W)`.
pub fn transfer_dl_to_ul_white(b: &[CMat], w: &[CMat], link: &LinkModel) -> Result<(Vec<CMat>, Vec<CMat>, f64, f64)> {
    check_filters(link, b, w, true)?;
    let noise = common_white_noise(link)
        .ok_or_else(|| Error::Domain("white transfer needs R_nk = sigma^2 I for every user".into()))?;
    let (p, ww) = (crate::mse::total_power(b), crate::mse::total_power(w));
    if !(p > 0.0) || !(ww > 0.0) {
        return Err(Error::DegenerateTransfer("zero precoder or decoder".into()));
    }
    let beta = (p / ww).sqrt();
    Ok((scale_all(w, beta), scale_all(b, 1.0 / beta), beta, noise))
}

/// Inverse of [`transfer_dl_to_ul_white`]: `beta^2 = tr(V^H V) / tr(T^H T)`.
pub fn transfer_ul_to_dl_white(v: &[CMat], t: &[CMat], link: &LinkModel) -> Result<(Vec<CMat>, Vec<CMat>, f64)> {
    check_filters(link, t, v, true)?;
    let (pv, tt) = (crate::mse::total_power(v), crate::mse::total_power(t));
    if !(pv > 0.0) || !(tt > 0.0) {
        return Err(Error::DegenerateTransfer("zero precoder or decoder".into()));
    }
    let beta = (pv / tt).sqrt();
    Ok((scale_all(t, beta), scale_all(v, 1.0 / beta), beta))
}

/// Downlink to uplink / interference channel for the fixed-point dualities:
/// the virtual precoders are the downlink decoders and vice versa.
pub fn transfer_dl_to_virtual(b: &[CMat], w: &[CMat]) -> (Vec<CMat>, Vec<CMat>) {
    (w.to_vec(), b.to_vec())
}

/// Virtual channel back to downlink for diagonal / interference noise:
/// `B = beta T`, `W = V / beta` with
/// `beta^2 = tr(V^H R_n V) / sum(noise-weighted ||t||^2)`.
pub fn transfer_virtual_to_dl(
    v: &[CMat],
    t: &[CMat],
    noise: &DualityNoise,
    link: &LinkModel,
) -> Result<(Vec<CMat>, Vec<CMat>, f64)> {
    check_filters(link, t, v, true)?;
    let tau = weighted_noise(v, link);
    let weighted = match noise {
        DualityNoise::Uplink { sigma2 } => sigma2 * crate::mse::total_power(t),
        DualityNoise::PerAntenna { psi } => antenna_powers(t, link.n).iter().zip(psi).map(|(p, w)| p * w).sum(),
        DualityNoise::PerUser { mu } => t.iter().zip(mu).map(|(tk, m)| m * tk.norm_squared()).sum(),
        DualityNoise::PerSymbol { mu } => crate::mse::symbol_powers(t).iter().zip(mu).map(|(p, m)| p * m).sum(),
    };
    if !(tau > 0.0) || !(weighted > 0.0) {
        return Err(Error::DegenerateTransfer(format!(
            "noise budget {tau:.3e} against weighted decoder power {weighted:.3e}"
        )));
    }
    let beta = (tau / weighted).sqrt();
    Ok((scale_all(t, beta), scale_all(v, 1.0 / beta), beta))
}

/// Per-antenna return transfer.
pub fn transfer_ul_to_dl_p2(
    v: &[CMat],
    t: &[CMat],
    psi: &[f64],
    link: &LinkModel,
) -> Result<(Vec<CMat>, Vec<CMat>, f64)> {
    transfer_virtual_to_dl(v, t, &DualityNoise::PerAntenna { psi: psi.to_vec() }, link)
}

/// Per-user return transfer.
pub fn transfer_interf_to_dl_p3(
    v: &[CMat],
    t: &[CMat],
    mu: &[f64],
    link: &LinkModel,
) -> Result<(Vec<CMat>, Vec<CMat>, f64)> {
    transfer_virtual_to_dl(v, t, &DualityNoise::PerUser { mu: mu.to_vec() }, link)
}

/// Per-symbol return transfer.
pub fn transfer_interf_to_dl_p4(
    v: &[CMat],
    t: &[CMat],
    mu: &[f64],
    link: &LinkModel,
) -> Result<(Vec<CMat>, Vec<CMat>, f64)> {
    transfer_virtual_to_dl(v, t, &DualityNoise::PerSymbol { mu: mu.to_vec() }, link)
}

/// Slack `tau - sum_i x_i p_i` of the transfer condition for current
/// powers `p`; negative means the virtual channel would see more AMSE than
/// the downlink.
pub fn budget_slack(tau: f64, powers: &[f64], levels: &[f64]) -> f64 {
    tau - powers.iter().zip(levels).map(|(p, x)| p * x).sum::<f64>()
}
