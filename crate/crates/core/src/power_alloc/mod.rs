//! Splitting precoders and decoders into unit-norm directions, powers and
//! receiver scalings, the per-symbol AMSE as a posynomial in the powers, and
//! the geometric programs built from it.
//!
//! For symbol `l` of user `k`,
//!
//! ```text
//! b_l = g_l sqrt(p_l),   w_l = u_l alpha_l / sqrt(p_l)
//! xi_l = D_l + (alpha_l^2 / p_l) (sum_{j != l} Phi[j][l] p_j + u_l^H R_nk u_l)
//! ```
//!
//! where `Phi[l][j]` is the coupling of transmit direction `g_l` into receive
//! direction `u_j`. Receiver `l` therefore sees column `l` of `Phi`, scaled by
//! its own `alpha_l^2`.

pub mod gp;

pub use gp::{gp_solve, GpOptions, GpProblem, GpSolution, LogSumExp, Monomial, Posynomial};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_solve, quad_form, CMat, CVec};
use crate::model::LinkModel;
use crate::mse::gamma_dl;
use crate::problem::{ConstraintFamily, PowerLimits, Problem};

/// Directions, powers and receiver scalings of every symbol, in global
/// (user-major) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Unit transmit directions, `N x S`.
    pub g: CMat,
    /// Unit receive directions, one per symbol, of length `M_f(l)`.
    pub u: Vec<CVec>,
    pub alpha: Vec<f64>,
    pub p: Vec<f64>,
    /// Owning user of each symbol.
    pub owner: Vec<usize>,
}

impl Decomposition {
    pub fn symbols(&self) -> usize {
        self.p.len()
    }

    /// Same directions and scalings with new powers.
    pub fn with_powers(&self, p: Vec<f64>) -> Self {
        assert_eq!(p.len(), self.p.len());
        Decomposition { p, ..self.clone() }
    }

    /// Symbols per user.
    pub fn counts(&self) -> Vec<usize> {
        let users = self.owner.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0; users];
        for &k in &self.owner {
            counts[k] += 1;
        }
        counts
    }
}

/// Owning user (0-based) of global symbol `i` (0-based) for symbol counts
/// `s`: the smallest `k` with `s_0 + ... + s_k > i`.
pub fn f_map(i: usize, s: &[usize]) -> usize {
    let mut acc = 0;
    for (k, &sk) in s.iter().enumerate() {
        acc += sk;
        if acc > i {
            return k;
        }
    }
    panic!("symbol {i} out of range for {} symbols", acc);
}

/// Splits `B` and `W` into directions, powers and scalings.
pub fn decompose(b: &[CMat], w: &[CMat]) -> Result<Decomposition> {
    if b.len() != w.len() {
        return Err(Error::Dimension(format!("{} precoders and {} decoders", b.len(), w.len())));
    }
    let n = b.first().map_or(0, |x| x.nrows());
    let total: usize = b.iter().map(|x| x.ncols()).sum();
    let mut g = CMat::zeros(n, total);
    let (mut u, mut alpha, mut p, mut owner) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut l = 0;
    for (k, (bk, wk)) in b.iter().zip(w).enumerate() {
        if bk.ncols() != wk.ncols() || bk.nrows() != n {
            return Err(Error::Dimension(format!("user {k}: precoder {:?}, decoder {:?}", bk.shape(), wk.shape())));
        }
        for s in 0..bk.ncols() {
            let (bn, wn) = (bk.column(s).norm(), wk.column(s).norm());
            if !(bn > 0.0) || !(wn > 0.0) {
                return Err(Error::DegenerateDecomposition { symbol: l });
            }
            g.set_column(l, &(bk.column(s) / c(bn)));
            u.push(wk.column(s) / c(wn));
            p.push(bn * bn);
            alpha.push(wn * bn);
            owner.push(k);
            l += 1;
        }
    }
    Ok(Decomposition { g, u, alpha, p, owner })
}

/// `B_k = G_k P_k^{1/2}` and `W_k = U_k alpha_k P_k^{-1/2}`.
pub fn reconstruct(dec: &Decomposition) -> (Vec<CMat>, Vec<CMat>) {
    let counts = dec.counts();
    let n = dec.g.nrows();
    let mut b = Vec::with_capacity(counts.len());
    let mut w = Vec::with_capacity(counts.len());
    let mut l = 0;
    for &sk in &counts {
        let m = dec.u[l].len();
        let mut bk = CMat::zeros(n, sk);
        let mut wk = CMat::zeros(m, sk);
        for s in 0..sk {
            let root = dec.p[l + s].sqrt();
            bk.set_column(s, &(dec.g.column(l + s) * c(root)));
            wk.set_column(s, &(&dec.u[l + s] * c(dec.alpha[l + s] / root)));
        }
        l += sk;
        b.push(bk);
        w.push(wk);
    }
    (b, w)
}

fn check_link(dec: &Decomposition, link: &LinkModel) -> Result<()> {
    if dec.g.nrows() != link.n {
        return Err(Error::Dimension(format!("{} transmit antennas, link has {}", dec.g.nrows(), link.n)));
    }
    for (l, (&k, u)) in dec.owner.iter().zip(&dec.u).enumerate() {
        if k >= link.k() || link.users[k].h.nrows() != u.len() {
            return Err(Error::Dimension(format!("symbol {l} does not fit user {k}")));
        }
    }
    Ok(())
}

/// `Phi[l][j] = sigma_e^2 (u_j^H R_m u_j)(g_l^H R_b g_l) + |u_j^H H g_l|^2`
/// with the link of user `f(j)`, and zero diagonal.
pub fn phi_matrix(dec: &Decomposition, link: &LinkModel) -> Result<DMatrix<f64>> {
    check_link(dec, link)?;
    let s = dec.symbols();
    let mut phi = DMatrix::zeros(s, s);
    for j in 0..s {
        let user = &link.users[dec.owner[j]];
        let uj = &dec.u[j];
        let eff = user.h.adjoint() * uj;
        let err = if user.sigma_e2 != 0.0 { user.sigma_e2 * quad_form(&user.r_m, uj) } else { 0.0 };
        for l in 0..s {
            if l == j {
                continue;
            }
            let gl = dec.g.column(l).into_owned();
            let mut v = eff.dotc(&gl).norm_sqr();
            if err != 0.0 {
                v += err * quad_form(&user.r_b, &gl);
            }
            phi[(l, j)] = v;
        }
    }
    Ok(phi)
}

/// Self terms `D_l = alpha_l^2 (|u_l^H H g_l|^2 + sigma_e^2 (u_l^H R_m u_l)(g_l^H R_b g_l))
/// - 2 alpha_l Re(u_l^H H g_l) + 1`.
pub fn d_matrix(dec: &Decomposition, link: &LinkModel) -> Result<Vec<f64>> {
    check_link(dec, link)?;
    Ok((0..dec.symbols())
        .map(|l| {
            let user = &link.users[dec.owner[l]];
            let (ul, gl) = (&dec.u[l], dec.g.column(l).into_owned());
            let gain = ul.dotc(&(&user.h * &gl));
            let mut energy = gain.norm_sqr();
            if user.sigma_e2 != 0.0 {
                energy += user.sigma_e2 * quad_form(&user.r_m, ul) * quad_form(&user.r_b, &gl);
            }
            let a = dec.alpha[l];
            a * a * energy - 2.0 * a * gain.re + 1.0
        })
        .collect())
}

/// Receiver noise `u_l^H R_n u_l` of every symbol.
pub fn noise_terms(dec: &Decomposition, link: &LinkModel) -> Vec<f64> {
    dec.u.iter().zip(&dec.owner).map(|(u, &k)| quad_form(&link.users[k].r_n, u)).collect()
}

/// AMSE of symbol `l` at the decomposition's powers.
pub fn symbol_amse(dec: &Decomposition, phi: &DMatrix<f64>, d: &[f64], link: &LinkModel, l: usize) -> f64 {
    let noise = quad_form(&link.users[dec.owner[l]].r_n, &dec.u[l]);
    let interference: f64 = (0..dec.symbols()).filter(|&j| j != l).map(|j| phi[(j, l)] * dec.p[j]).sum();
    d[l] + dec.alpha[l].powi(2) * (interference + noise) / dec.p[l]
}

/// Sum AMSE `sum_l xi_l` as a posynomial in the powers.
pub fn amse_posynomial(dec: &Decomposition, phi: &DMatrix<f64>, d: &[f64], link: &LinkModel) -> Posynomial {
    let s = dec.symbols();
    let noise = noise_terms(dec, link);
    let mut poly = Posynomial::new(s);
    let constant: f64 = d.iter().map(|v| v.max(0.0)).sum();
    poly.push(constant, vec![0.0; s]);
    for l in 0..s {
        let a2 = dec.alpha[l].powi(2);
        poly.push_sparse(a2 * noise[l], &[(l, -1.0)]);
        for j in (0..s).filter(|&j| j != l) {
            poly.push_sparse(a2 * phi[(j, l)], &[(j, 1.0), (l, -1.0)]);
        }
    }
    poly
}

fn power_constraints(dec: &Decomposition, limits: &PowerLimits) -> Vec<Posynomial> {
    let s = dec.symbols();
    let n = dec.g.nrows();
    let row_weight = |row: usize, l: usize| dec.g[(row, l)].norm_sqr();
    match limits {
        PowerLimits::Total(pmax) => {
            let mut poly = Posynomial::new(s);
            for l in 0..s {
                poly.push_sparse(1.0 / pmax, &[(l, 1.0)]);
            }
            vec![poly]
        }
        PowerLimits::PerAntenna(lim) => (0..n)
            .map(|row| {
                let mut poly = Posynomial::new(s);
                for l in 0..s {
                    poly.push_sparse(row_weight(row, l) / lim[row], &[(l, 1.0)]);
                }
                poly
            })
            .collect(),
        PowerLimits::PerUser(lim) => lim
            .iter()
            .enumerate()
            .map(|(k, cap)| {
                let mut poly = Posynomial::new(s);
                for l in (0..s).filter(|&l| dec.owner[l] == k) {
                    poly.push_sparse(1.0 / cap, &[(l, 1.0)]);
                }
                poly
            })
            .collect(),
        PowerLimits::PerSymbol(lim) => lim
            .iter()
            .enumerate()
            .map(|(l, cap)| {
                let mut poly = Posynomial::new(s);
                poly.push_sparse(1.0 / cap, &[(l, 1.0)]);
                poly
            })
            .collect(),
        PowerLimits::PerEntry(lim) => (0..s)
            .flat_map(|l| (0..n).map(move |row| (l, row)))
            .map(|(l, row)| {
                let mut poly = Posynomial::new(s);
                poly.push_sparse(row_weight(row, l) / lim[l * n + row], &[(l, 1.0)]);
                poly
            })
            .collect(),
    }
}

fn check_limits(problem: Problem, dec: &Decomposition, limits: &PowerLimits) -> Result<()> {
    if limits.family() != problem.family() {
        return Err(Error::Config(format!("{problem} needs {:?} limits, got {:?}", problem.family(), limits.family())));
    }
    let expected = match limits.family() {
        ConstraintFamily::Total => 1,
        ConstraintFamily::PerAntenna => dec.g.nrows(),
        ConstraintFamily::PerUser => dec.counts().len(),
        ConstraintFamily::PerSymbol => dec.symbols(),
        ConstraintFamily::PerEntry => dec.symbols() * dec.g.nrows(),
    };
    let v = limits.values();
    if v.len() != expected {
        return Err(Error::Dimension(format!("expected {expected} limits, got {}", v.len())));
    }
    if let Some(bad) = v.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("power limits must be positive, got {bad}")));
    }
    Ok(())
}

/// Power-allocation GP of a sum-AMSE problem: minimize `sum_l xi_l(p)`
/// subject to the problem's power constraints for fixed directions.
pub fn build_gp(
    problem: Problem,
    dec: &Decomposition,
    phi: &DMatrix<f64>,
    d: &[f64],
    link: &LinkModel,
    limits: &PowerLimits,
) -> Result<GpProblem> {
    if problem.is_power_min() {
        return Err(Error::Config(format!("{problem} is a power-minimization problem")));
    }
    build_capped_amse_gp(problem, dec, phi, d, link, limits)
}

/// Sum-AMSE GP under the power caps of `problem`, which may be a
/// power-minimization problem.
pub fn build_capped_amse_gp(
    problem: Problem,
    dec: &Decomposition,
    phi: &DMatrix<f64>,
    d: &[f64],
    link: &LinkModel,
    limits: &PowerLimits,
) -> Result<GpProblem> {
    check_limits(problem, dec, limits)?;
    Ok(GpProblem {
        objective: amse_posynomial(dec, phi, d, link),
        constraints: power_constraints(dec, limits),
        var_count: dec.symbols(),
        amse_target: None,
    })
}

/// Power-minimization GP: minimize `sum_l p_l` subject to
/// `sum_l xi_l(p) <= eps_t` and the problem's power caps.
pub fn build_power_min_gp(
    problem: Problem,
    dec: &Decomposition,
    phi: &DMatrix<f64>,
    d: &[f64],
    link: &LinkModel,
    limits: &PowerLimits,
    eps_t: f64,
) -> Result<GpProblem> {
    if !problem.is_power_min() {
        return Err(Error::Config(format!("{problem} is a sum-AMSE problem")));
    }
    if !(eps_t > 0.0) || !eps_t.is_finite() {
        return Err(Error::Domain(format!("sum-AMSE target must be positive, got {eps_t}")));
    }
    check_limits(problem, dec, limits)?;
    let s = dec.symbols();
    let mut objective = Posynomial::new(s);
    for l in 0..s {
        objective.push_sparse(1.0, &[(l, 1.0)]);
    }
    let mut constraints = vec![amse_posynomial(dec, phi, d, link).scaled(1.0 / eps_t)];
    constraints.extend(power_constraints(dec, limits));
    Ok(GpProblem { objective, constraints, var_count: s, amse_target: Some(eps_t) })
}

/// Scaled MAMSE receivers for fixed directions and powers:
/// `U_k alpha_k = Gamma_k^-1 H_k G_k P_k`, with unit-norm columns of `U`.
pub fn mamse_scaled_receiver(g: &CMat, p: &[f64], owner: &[usize], link: &LinkModel) -> Result<(Vec<CVec>, Vec<f64>)> {
    if p.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Domain("scaled receiver needs positive powers".into()));
    }
    let probe = Decomposition {
        g: g.clone(),
        u: owner.iter().map(|&k| CVec::zeros(link.users[k].h.nrows())).collect(),
        alpha: vec![0.0; p.len()],
        p: p.to_vec(),
        owner: owner.to_vec(),
    };
    check_link(&probe, link)?;
    let (b, _) = reconstruct(&Decomposition { alpha: vec![1.0; p.len()], ..probe });
    let mut u = Vec::with_capacity(p.len());
    let mut alpha = Vec::with_capacity(p.len());
    let mut l = 0;
    for (k, bk) in b.iter().enumerate() {
        let gamma = gamma_dl(k, &b, link);
        let mut rhs = &link.users[k].h * bk;
        for s in 0..bk.ncols() {
            let root = p[l + s].sqrt();
            rhs.column_mut(s).scale_mut(root);
        }
        let m = hermitian_solve(&gamma, &rhs)
            .ok_or_else(|| Error::Singular(format!("downlink receive covariance of user {k}")))?;
        for s in 0..bk.ncols() {
            let col = m.column(s).into_owned();
            let a = col.norm();
            if !(a > 0.0) {
                return Err(Error::DegenerateDecomposition { symbol: l + s });
            }
            u.push(col / c(a));
            alpha.push(a);
        }
        l += bk.ncols();
    }
    Ok((u, alpha))
}
