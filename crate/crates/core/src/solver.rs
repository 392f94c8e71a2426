//! Alternating transceiver design through the virtual-channel dualities.
//!
//! Every outer iteration moves the current downlink design to the virtual
//! channel, replaces the virtual receivers by their MAMSE versions, moves the
//! result back, optionally re-allocates the symbol powers with a geometric
//! program, and finally refreshes the downlink receivers. Each step keeps the
//! active power constraints and cannot increase the sum AMSE.

use log::{debug, warn};

use crate::duality::{
    solve_mu_fixed_point, solve_mu_tilde_fixed_point, solve_psi_fixed_point, transfer_dl_to_ul_p1,
    transfer_dl_to_ul_white, transfer_dl_to_virtual, transfer_ul_to_dl_p1, transfer_ul_to_dl_white,
    transfer_virtual_to_dl, DualityState, FixedPoint, FixedPointOptions,
};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::model::{ChannelSet, DesignMode, LinkModel, SystemConfig};
use crate::mse::{
    mamse_receiver_dl, mamse_receiver_virtual, sum_amse_dl, sum_amse_virtual, total_power, DualityNoise, Transceiver,
};
use crate::power_alloc::{
    build_capped_amse_gp, build_gp, build_power_min_gp, d_matrix, decompose, gp_solve, mamse_scaled_receiver,
    phi_matrix, reconstruct, Decomposition, GpOptions,
};
use crate::problem::{ConstraintFamily, PowerLimits, PowerReport, Problem};

/// How the total-power problems move between downlink and uplink.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TotalPowerTransfer {
    /// Uplink noise `sigma2_ul I` with decoder-weighted receiver noise.
    General,
    /// Classical transfer for white, equal receiver noise without channel
    /// error; rejected for any other link.
    White,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub problem: Problem,
    pub design_mode: DesignMode,
    pub limits: PowerLimits,
    /// Sum-AMSE target of the power-minimization problems.
    pub eps_t: Option<f64>,
    pub max_outer_iter: usize,
    pub amse_tol: f64,
    /// Run the power-allocation GP in every iteration.
    pub use_gp_step: bool,
    pub sigma2_ul: f64,
    pub total_power_transfer: TotalPowerTransfer,
    pub fixed_point: FixedPointOptions,
    pub gp_tol: f64,
}

impl SolveOptions {
    pub fn new(problem: Problem, limits: PowerLimits) -> Self {
        SolveOptions {
            problem,
            design_mode: DesignMode::Robust,
            limits,
            eps_t: None,
            max_outer_iter: 200,
            amse_tol: 1e-6,
            use_gp_step: true,
            sigma2_ul: 1.0,
            total_power_transfer: TotalPowerTransfer::General,
            fixed_point: FixedPointOptions::default(),
            gp_tol: 1e-10,
        }
    }

    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        if self.limits.family() != self.problem.family() {
            return Err(Error::Config(format!(
                "{} needs {:?} limits, got {:?}",
                self.problem,
                self.problem.family(),
                self.limits.family()
            )));
        }
        self.limits.validate(config)?;
        if self.problem.is_power_min() {
            match self.eps_t {
                Some(e) if e > 0.0 && e.is_finite() => {}
                other => return Err(Error::Config(format!("{} needs a positive eps_t, got {other:?}", self.problem))),
            }
            if !self.use_gp_step {
                return Err(Error::Config("power minimization needs the GP step".into()));
            }
        } else if self.problem.family() == ConstraintFamily::PerEntry {
            return Err(Error::Config("per-entry limits only exist for power minimization".into()));
        }
        if !(self.sigma2_ul > 0.0) {
            return Err(Error::Config(format!("sigma2_ul must be positive, got {}", self.sigma2_ul)));
        }
        if !(self.amse_tol > 0.0) || self.max_outer_iter == 0 {
            return Err(Error::Config("amse_tol must be positive and max_outer_iter nonzero".into()));
        }
        Ok(())
    }
}

/// Sum AMSE at each stage of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationDiagnostics {
    /// Downlink before the iteration.
    pub dl_start: f64,
    /// Virtual channel right after the forward transfer.
    pub virtual_start: f64,
    /// Virtual channel after the receiver update.
    pub virtual_updated: f64,
    /// Downlink right after the return transfer.
    pub dl_transferred: f64,
    /// Relative violation of the active constraints after the return transfer.
    pub transfer_violation: f64,
    /// Noise budget minus the noise-weighted current powers before the
    /// forward transfer; negative would let the virtual AMSE exceed the
    /// downlink one.
    pub budget_slack: f64,
    /// Fixed-point statistics, if the family needs one.
    pub fixed_point: Option<FixedPoint>,
    /// Whether the GP output was kept.
    pub gp_accepted: bool,
    /// Whether the GP lowered the sum AMSE because the target was out of
    /// reach for the current directions.
    pub recovering: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub transceiver: Transceiver,
    /// Design-time sum AMSE, starting with the initial design.
    pub amse_trace: Vec<f64>,
    /// Total transmit power, aligned with `amse_trace`.
    pub power_trace: Vec<f64>,
    pub power_usage: PowerReport,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Vec<IterationDiagnostics>,
}

impl SolveResult {
    pub fn final_amse(&self) -> f64 {
        *self.amse_trace.last().expect("trace starts with the initial design")
    }
}

fn unit(n: usize, i: usize, scale: f64) -> Vec<crate::linalg::C64> {
    (0..n).map(|r| if r == i { c(scale) } else { c(0.0) }).collect()
}

/// Deterministic starting precoders meeting the active constraint with
/// equality (per-entry caps: every entry at its cap).
pub fn init_precoders(config: &SystemConfig, limits: &PowerLimits) -> Result<Vec<CMat>> {
    limits.validate(config)?;
    let n = config.n;
    let total = config.total_symbols();
    let offsets = config.symbol_offsets();
    let phase = |row: usize, l: usize| {
        crate::linalg::C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (row * l) as f64 / n as f64)
    };
    let b = config
        .s
        .iter()
        .enumerate()
        .map(|(k, &sk)| {
            let mut bk = CMat::zeros(n, sk);
            for s in 0..sk {
                let l = offsets[k] + s;
                let col: Vec<_> = match limits {
                    PowerLimits::Total(p) => unit(n, l % n, (p / total as f64).sqrt()),
                    PowerLimits::PerUser(p) => unit(n, l % n, (p[k] / sk as f64).sqrt()),
                    PowerLimits::PerSymbol(p) => unit(n, l % n, p[l].sqrt()),
                    PowerLimits::PerAntenna(p) => {
                        (0..n).map(|row| phase(row, l) * (p[row] / total as f64).sqrt()).collect()
                    }
                    PowerLimits::PerEntry(p) => (0..n).map(|row| phase(row, l) * p[l * n + row].sqrt()).collect(),
                };
                bk.set_column(s, &crate::linalg::CVec::from_vec(col));
            }
            bk
        })
        .collect();
    Ok(b)
}

/// Per-family usage of `b`, floored at a tiny positive value, used as the
/// limits of the power-minimization transfers so that no quantity grows.
fn current_limits(family: ConstraintFamily, b: &[CMat], n: usize) -> PowerLimits {
    let floor = |v: Vec<f64>| -> Vec<f64> {
        let top = v.iter().fold(0.0_f64, |m, x| m.max(*x));
        v.into_iter().map(|x| x.max(1e-12 * top.max(1e-300))).collect()
    };
    match family {
        ConstraintFamily::Total => PowerLimits::Total(total_power(b)),
        ConstraintFamily::PerAntenna | ConstraintFamily::PerEntry => {
            PowerLimits::PerAntenna(floor(crate::mse::antenna_powers(b, n)))
        }
        ConstraintFamily::PerUser => PowerLimits::PerUser(floor(crate::mse::user_powers(b))),
        ConstraintFamily::PerSymbol => PowerLimits::PerSymbol(floor(crate::mse::symbol_powers(b))),
    }
}

struct Forward {
    v: Vec<CMat>,
    t: Vec<CMat>,
    noise: DualityNoise,
    fixed_point: Option<FixedPoint>,
    slack: f64,
}

fn forward_transfer(
    b: &[CMat],
    w: &[CMat],
    link: &LinkModel,
    transfer_limits: &PowerLimits,
    opts: &SolveOptions,
) -> Result<Forward> {
    if let PowerLimits::Total(_) = transfer_limits {
        let (v, t, noise) = match opts.total_power_transfer {
            TotalPowerTransfer::General => {
                let (v, t, _) = transfer_dl_to_ul_p1(b, w, link, opts.sigma2_ul)?;
                (v, t, opts.sigma2_ul)
            }
            TotalPowerTransfer::White => {
                if link.users.iter().any(|u| u.sigma_e2 != 0.0) {
                    return Err(Error::Config("white transfer needs an error-free link".into()));
                }
                let (v, t, _, noise) = transfer_dl_to_ul_white(b, w, link)?;
                (v, t, noise)
            }
        };
        return Ok(Forward { v, t, noise: DualityNoise::Uplink { sigma2: noise }, fixed_point: None, slack: 0.0 });
    }
    let state = DualityState::new(w, link);
    let limits = transfer_limits.values();
    let (fp, noise, usage) = match transfer_limits {
        PowerLimits::PerAntenna(_) => {
            let fp = solve_psi_fixed_point(&state, limits, &opts.fixed_point)?;
            let noise = DualityNoise::PerAntenna { psi: fp.values.clone() };
            (fp, noise, crate::mse::antenna_powers(b, link.n))
        }
        PowerLimits::PerUser(_) => {
            let fp = solve_mu_fixed_point(&state, limits, &opts.fixed_point)?;
            let noise = DualityNoise::PerUser { mu: fp.values.clone() };
            (fp, noise, crate::mse::user_powers(b))
        }
        PowerLimits::PerSymbol(_) => {
            let fp = solve_mu_tilde_fixed_point(&state, limits, &opts.fixed_point)?;
            let noise = DualityNoise::PerSymbol { mu: fp.values.clone() };
            (fp, noise, crate::mse::symbol_powers(b))
        }
        PowerLimits::Total(_) | PowerLimits::PerEntry(_) => unreachable!("handled by the caller"),
    };
    let slack = crate::duality::budget_slack(state.tau, &usage, &fp.values);
    if slack < -1e-9 * state.tau {
        warn!("noise budget below the weighted powers before the transfer (slack {slack:.3e})");
    }
    let (v, t) = transfer_dl_to_virtual(b, w);
    Ok(Forward { v, t, noise, fixed_point: Some(fp), slack })
}

fn return_transfer(fwd: &Forward, t: &[CMat], link: &LinkModel, opts: &SolveOptions) -> Result<(Vec<CMat>, Vec<CMat>)> {
    let (b, w, _) = match (&fwd.noise, opts.total_power_transfer) {
        (DualityNoise::Uplink { .. }, TotalPowerTransfer::White) => transfer_ul_to_dl_white(&fwd.v, t, link)?,
        (DualityNoise::Uplink { sigma2 }, TotalPowerTransfer::General) => {
            transfer_ul_to_dl_p1(&fwd.v, t, link, *sigma2)?
        }
        (noise, _) => transfer_virtual_to_dl(&fwd.v, t, noise, link)?,
    };
    Ok((b, w))
}

struct GpStep {
    b: Vec<CMat>,
    w: Vec<CMat>,
    accepted: bool,
    recovering: bool,
}

/// Power re-allocation for fixed directions. A power-minimization target
/// that these directions cannot meet switches to lowering the sum AMSE.
fn gp_step(b: &[CMat], w: &[CMat], link: &LinkModel, opts: &SolveOptions) -> Result<GpStep> {
    let dec = decompose(b, w)?;
    let phi = phi_matrix(&dec, link)?;
    let d = d_matrix(&dec, link)?;
    let gp_opts = |initial: Vec<f64>| GpOptions { tol: opts.gp_tol, initial: Some(initial), ..GpOptions::default() };
    // Start just inside the feasible set the transfer left us on.
    let initial: Vec<f64> = dec.p.iter().map(|p| p * (1.0 - 1e-7)).collect();
    let mut recovering = false;
    let (prob, sol) = if opts.problem.is_power_min() {
        let target = opts.eps_t.unwrap_or(f64::NAN);
        let prob = build_power_min_gp(opts.problem, &dec, &phi, &d, link, &opts.limits, target)?;
        match gp_solve(&prob, &gp_opts(initial.clone())) {
            Ok(sol) => (prob, sol),
            Err(Error::GpInfeasible { .. }) => {
                debug!("sum-AMSE target out of reach, lowering the AMSE instead");
                recovering = true;
                let prob = build_capped_amse_gp(opts.problem, &dec, &phi, &d, link, &opts.limits)?;
                let sol = gp_solve(&prob, &gp_opts(initial))?;
                (prob, sol)
            }
            Err(e) => return Err(e),
        }
    } else {
        let prob = build_gp(opts.problem, &dec, &phi, &d, link, &opts.limits)?;
        let sol = gp_solve(&prob, &gp_opts(initial))?;
        (prob, sol)
    };
    let before = prob.objective.eval(&dec.p);
    let feasible = prob.constraints.iter().all(|c| c.eval(&sol.p) <= 1.0 + 1e-9);
    if !feasible || sol.objective > before {
        debug!("GP step rejected ({} -> {})", before, sol.objective);
        return Ok(GpStep { b: b.to_vec(), w: w.to_vec(), accepted: false, recovering });
    }
    let (u, alpha) = mamse_scaled_receiver(&dec.g, &sol.p, &dec.owner, link)?;
    let (b_new, w_new) = reconstruct(&Decomposition { u, alpha, p: sol.p, ..dec });
    Ok(GpStep { b: b_new, w: w_new, accepted: true, recovering })
}

/// Runs the alternating design on the link the designer sees.
pub fn solve_link(link: &LinkModel, config: &SystemConfig, opts: &SolveOptions) -> Result<SolveResult> {
    opts.validate(config)?;
    let mut b = init_precoders(config, &opts.limits)?;
    let mut w = mamse_receiver_dl(&b, link)?;
    let mut amse = sum_amse_dl(&b, &w, link);
    let mut amse_trace = vec![amse];
    let mut power_trace = vec![total_power(&b)];
    let mut diagnostics = Vec::new();
    let mut converged = false;
    let mut last = (Vec::new(), Vec::new());

    for iter in 0..opts.max_outer_iter {
        let step = || -> Result<_> {
            let transfer_limits = if opts.problem.is_power_min() {
                current_limits(opts.problem.family(), &b, link.n)
            } else {
                opts.limits.clone()
            };
            let fwd = forward_transfer(&b, &w, link, &transfer_limits, opts)?;
            let virtual_start = sum_amse_virtual(&fwd.v, &fwd.t, &fwd.noise, link);
            let t = mamse_receiver_virtual(&fwd.v, &fwd.noise, link)?;
            let virtual_updated = sum_amse_virtual(&fwd.v, &t, &fwd.noise, link);
            let (b1, w1) = return_transfer(&fwd, &t, link, opts)?;
            let dl_transferred = sum_amse_dl(&b1, &w1, link);
            let transfer_violation = transfer_limits.max_violation(&b1, link.n);
            if transfer_violation > 1e-6 {
                warn!("return transfer violates the power constraints by {transfer_violation:.3e}");
            }
            let gp = if opts.use_gp_step {
                gp_step(&b1, &w1, link, opts)?
            } else {
                let w = mamse_receiver_dl(&b1, link)?;
                GpStep { b: b1.clone(), w, accepted: false, recovering: false }
            };
            let diag = IterationDiagnostics {
                dl_start: amse,
                virtual_start,
                virtual_updated,
                dl_transferred,
                transfer_violation,
                budget_slack: fwd.slack,
                fixed_point: fwd.fixed_point,
                gp_accepted: gp.accepted,
                recovering: gp.recovering,
            };
            Ok((gp.b, gp.w, fwd.v, t, diag))
        };
        let (b_new, w_new, v, t, diag) = step().map_err(|e| e.at(iter))?;
        b = b_new;
        w = w_new;
        last = (v, t);
        let next = sum_amse_dl(&b, &w, link);
        let power = total_power(&b);
        let recovering = diag.recovering;
        diagnostics.push(diag);
        let change = if opts.problem.is_power_min() && !recovering {
            (power - power_trace.last().unwrap()).abs() / power.max(1e-300)
        } else {
            (next - amse).abs()
        };
        if recovering && change < opts.amse_tol {
            return Err(Error::TargetUnreachable { target: opts.eps_t.unwrap_or(f64::NAN), best: next });
        }
        amse = next;
        amse_trace.push(amse);
        power_trace.push(power);
        if change < opts.amse_tol {
            converged = true;
            break;
        }
    }
    let iterations = diagnostics.len();
    debug!("{} finished after {iterations} iterations (converged: {converged})", opts.problem);
    Ok(SolveResult {
        power_usage: PowerReport::new(&b, link.n),
        transceiver: Transceiver { b, w, v: last.0, t: last.1 },
        amse_trace,
        power_trace,
        iterations,
        converged,
        diagnostics,
    })
}

/// Designs a transceiver for one channel realization in the requested mode.
pub fn solve(config: &SystemConfig, channel: &ChannelSet, opts: &SolveOptions) -> Result<SolveResult> {
    let link = LinkModel::for_design(opts.design_mode, channel, config);
    solve_link(&link, config, opts)
}

/// Link a design of `mode` is judged on: the estimated link with its true
/// error statistics, or the true channel for perfect knowledge.
pub fn evaluation_link(mode: DesignMode, channel: &ChannelSet, config: &SystemConfig) -> LinkModel {
    match mode {
        DesignMode::Robust | DesignMode::Naive => LinkModel::estimated(channel, config),
        DesignMode::Perfect => LinkModel::perfect(channel, config),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub sum_amse: f64,
    pub power: PowerReport,
}

/// Sum AMSE of a fixed design on `link` and its power usage.
pub fn evaluate(tx: &Transceiver, link: &LinkModel) -> Evaluation {
    Evaluation { sum_amse: sum_amse_dl(&tx.b, &tx.w, link), power: PowerReport::new(&tx.b, link.n) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;
    use crate::model::{realize_channel, RngStream, UserLink};
    use crate::mse::antenna_powers;

    fn reference(seed: u64, noise: f64) -> (SystemConfig, ChannelSet) {
        let cfg = SystemConfig::reference().with_noise(vec![identity(2) * c(noise), identity(2) * c(2.0 * noise)]);
        let ch = realize_channel(&cfg, RngStream::new(seed)).unwrap();
        (cfg, ch)
    }

    #[test]
    fn initial_precoders_meet_limits_with_equality() {
        let cfg = SystemConfig::reference();
        let b = init_precoders(&cfg, &PowerLimits::Total(10.0)).unwrap();
        for bk in &b {
            for s in 0..2 {
                assert!((bk.column(s).norm_squared() - 2.5).abs() < 1e-14);
            }
        }
        let b = init_precoders(&cfg, &PowerLimits::PerSymbol(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert!((b[1].column(1).norm_squared() - 4.0).abs() < 1e-14);
        let lim = vec![2.5, 1.0, 2.0, 3.0];
        let b = init_precoders(&cfg, &PowerLimits::PerAntenna(lim.clone())).unwrap();
        for (p, l) in antenna_powers(&b, 4).iter().zip(&lim) {
            assert!((p - l).abs() < 1e-12);
        }
        let b = init_precoders(&cfg, &PowerLimits::PerUser(vec![5.0, 3.0])).unwrap();
        assert!((b[1].norm_squared() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn decoupled_channel_matches_scalar_water_filling() {
        // Two single-antenna users on orthogonal unit-gain antennas, unit
        // noise, no error. With P = 4 split evenly each stream has AMSE
        // 1 / (1 + 2), and symmetry makes that optimal.
        let users = (0..2)
            .map(|k| UserLink {
                h: CMat::from_fn(1, 2, |_, j| c(if j == k { 1.0 } else { 0.0 })),
                sigma_e2: 0.0,
                r_b: identity(2),
                r_m: identity(1),
                r_n: identity(1),
            })
            .collect();
        let link = LinkModel::from_users(2, users);
        let cfg = SystemConfig {
            n: 2,
            m: vec![1, 1],
            s: vec![1, 1],
            sigma_e2: vec![0.0, 0.0],
            rho_b: vec![0.0, 0.0],
            rho_m: vec![0.0, 0.0],
            noise_cov: vec![identity(1), identity(1)],
        };
        let res = solve_link(&link, &cfg, &SolveOptions::new(Problem::P1, PowerLimits::Total(4.0))).unwrap();
        assert!((res.final_amse() - 2.0 / 3.0).abs() < 1e-6, "{}", res.final_amse());
    }

    #[test]
    fn unequal_gains_match_water_filling_oracle() {
        // Gains 1 and 4, unit noise, P = 3: the AMSE-optimal split is
        // p_i = (sqrt(1/ (g_i nu)) - 1/g_i)^+ with the multiplier nu fixed
        // by the budget. Bisect it as the oracle.
        let gains = [1.0, 4.0];
        let users = (0..2)
            .map(|k| UserLink {
                h: CMat::from_fn(1, 2, |_, j| c(if j == k { gains[k] } else { 0.0 })),
                sigma_e2: 0.0,
                r_b: identity(2),
                r_m: identity(1),
                r_n: identity(1),
            })
            .collect();
        let link = LinkModel::from_users(2, users);
        let cfg = SystemConfig {
            n: 2,
            m: vec![1, 1],
            s: vec![1, 1],
            sigma_e2: vec![0.0, 0.0],
            rho_b: vec![0.0, 0.0],
            rho_m: vec![0.0, 0.0],
            noise_cov: vec![identity(1), identity(1)],
        };
        let g2: Vec<f64> = gains.iter().map(|g| g * g).collect();
        let alloc = |nu: f64| -> Vec<f64> { g2.iter().map(|g| ((1.0 / (g * nu)).sqrt() - 1.0 / g).max(0.0)).collect() };
        let (mut lo, mut hi) = (1e-9_f64, 1e3_f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if alloc(mid).iter().sum::<f64>() > 3.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let p = alloc(hi);
        let oracle: f64 = p.iter().zip(&g2).map(|(p, g)| 1.0 / (1.0 + g * p)).sum();
        let res = solve_link(&link, &cfg, &SolveOptions::new(Problem::P1, PowerLimits::Total(3.0))).unwrap();
        assert!((res.final_amse() - oracle).abs() < 1e-6, "{} vs {oracle}", res.final_amse());
    }

    #[test]
    fn p2_respects_antenna_limits_and_is_monotone() {
        let (cfg, ch) = reference(11, 0.5);
        let opts = SolveOptions::new(Problem::P2, PowerLimits::PerAntenna(vec![2.5; 4]));
        let res = solve(&cfg, &ch, &opts).unwrap();
        for d in &res.diagnostics {
            assert!(d.transfer_violation <= 1e-6);
            assert!(d.virtual_start <= d.dl_start + 1e-9);
            assert!((d.virtual_updated - d.dl_transferred).abs() <= 1e-9 * d.dl_transferred);
        }
        for pair in res.amse_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-8);
        }
        assert!(res.power_usage.per_antenna.iter().all(|&p| p <= 2.5 * (1.0 + 1e-6)));
    }

    #[test]
    fn white_transfer_matches_general_path() {
        let (mut cfg, _) = reference(3, 0.7);
        cfg.noise_cov = vec![identity(2) * c(0.7); 2];
        let ch = realize_channel(&cfg, RngStream::new(3)).unwrap();
        let link = LinkModel::naive(&ch, &cfg);
        let mut opts = SolveOptions::new(Problem::P1, PowerLimits::Total(10.0));
        opts.max_outer_iter = 30;
        let general = solve_link(&link, &cfg, &opts).unwrap();
        opts.total_power_transfer = TotalPowerTransfer::White;
        let white = solve_link(&link, &cfg, &opts).unwrap();
        assert_eq!(general.amse_trace.len(), white.amse_trace.len());
        for (a, b) in general.amse_trace.iter().zip(&white.amse_trace) {
            assert!((a - b).abs() <= 1e-9 * a);
        }
        // The white path refuses links with channel error.
        let robust = LinkModel::estimated(&ch, &cfg);
        assert!(solve_link(&robust, &cfg, &opts).is_err());
    }

    #[test]
    fn perfect_design_evaluates_to_its_objective() {
        let (cfg, ch) = reference(5, 0.5);
        let mut opts = SolveOptions::new(Problem::P3, PowerLimits::PerUser(vec![5.0, 5.0]));
        opts.design_mode = DesignMode::Perfect;
        let res = solve(&cfg, &ch, &opts).unwrap();
        let eval = evaluate(&res.transceiver, &evaluation_link(DesignMode::Perfect, &ch, &cfg));
        assert!((eval.sum_amse - res.final_amse()).abs() < 1e-12);
        assert_eq!(eval.power, res.power_usage);
    }

    #[test]
    fn options_are_validated() {
        let cfg = SystemConfig::reference();
        let bad = SolveOptions::new(Problem::P2, PowerLimits::Total(10.0));
        assert!(bad.validate(&cfg).is_err());
        let no_target = SolveOptions::new(Problem::P6, PowerLimits::Total(10.0));
        assert!(no_target.validate(&cfg).is_err());
    }

    #[test]
    fn power_min_reaches_target_with_less_power() {
        let (cfg, ch) = reference(2, 0.1);
        let base = solve(&cfg, &ch, &SolveOptions::new(Problem::P1, PowerLimits::Total(10.0))).unwrap();
        let mut opts = SolveOptions::new(Problem::P6, PowerLimits::Total(10.0));
        opts.eps_t = Some(base.final_amse() * 1.5);
        let res = solve(&cfg, &ch, &opts).unwrap();
        let link = LinkModel::estimated(&ch, &cfg);
        assert!(sum_amse_dl(&res.transceiver.b, &res.transceiver.w, &link) <= opts.eps_t.unwrap() * (1.0 + 1e-6));
        assert!(res.power_usage.total < 10.0);
        for pair in res.power_trace.windows(2).skip(1) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-6));
        }
    }

    #[test]
    fn power_min_recovers_from_an_unreachable_start() {
        let (cfg, ch) = reference(3, 0.1);
        let best = solve(&cfg, &ch, &SolveOptions::new(Problem::P1, PowerLimits::Total(10.0))).unwrap().final_amse();
        let mut opts = SolveOptions::new(Problem::P6, PowerLimits::Total(10.0));
        opts.eps_t = Some(best * 1.02);
        let res = solve(&cfg, &ch, &opts).unwrap();
        assert!(res.diagnostics[0].recovering);
        assert!(res.converged);
        assert!(res.final_amse() <= best * 1.02 * (1.0 + 1e-6));

        opts.eps_t = Some(best * 0.9);
        match solve(&cfg, &ch, &opts) {
            Err(Error::TargetUnreachable { best: got, .. }) => assert!(got >= best * 0.9),
            other => panic!("expected an unreachable target, got {other:?}"),
        }
    }
}
