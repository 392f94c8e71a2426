//! Property suite behind `mimo-duality verify`: duality conservation, power
//! feasibility, fixed-point identities, posynomial consistency and monotone
//! convergence on random instances.

use rand::Rng;

use crate::duality::{
    fixed_point_residual, solve_mu_fixed_point, solve_mu_tilde_fixed_point, solve_psi_fixed_point,
    solve_psi_fixed_point_power_min, transfer_dl_to_ul_p1, transfer_dl_to_virtual, transfer_ul_to_dl_p1,
    transfer_virtual_to_dl, DualityState, FixedPoint, FixedPointOptions,
};
use crate::error::Result;
use crate::linalg::{c, identity, CMat};
use crate::model::{complex_gaussian_matrix, realize_channel, LinkModel, RngStream, SystemConfig};
use crate::mse::{
    antenna_powers, mamse_receiver_dl, mamse_receiver_virtual, sum_amse_dl, sum_amse_virtual, DualityNoise,
};
use crate::power_alloc::{amse_posynomial, d_matrix, decompose, phi_matrix};
use crate::problem::{PowerLimits, Problem};
use crate::solver::{solve_link, SolveOptions, TotalPowerTransfer};

/// A random instance with the reference dimensions, error statistics and
/// correlations, at an SNR between 0 and 20 dB.
pub fn random_instance(seed: u64) -> Result<(SystemConfig, LinkModel)> {
    let stream = RngStream::new(seed);
    let snr_db = 5.0 * (seed % 5) as f64;
    let sigma_av = 10.0 / (2.0 * 10f64.powf(snr_db / 10.0));
    let cfg = SystemConfig::reference()
        .with_noise(vec![identity(2) * c(2.0 * sigma_av / 3.0), identity(2) * c(4.0 * sigma_av / 3.0)]);
    let ch = realize_channel(&cfg, stream.child(0))?;
    let link = LinkModel::estimated(&ch, &cfg);
    Ok((cfg, link))
}

/// Reference limits of each sum-AMSE problem.
pub fn reference_limits(problem: Problem) -> PowerLimits {
    match problem {
        Problem::P2 => PowerLimits::PerAntenna(vec![2.5; 4]),
        Problem::P3 => PowerLimits::PerUser(vec![5.0; 2]),
        Problem::P4 => PowerLimits::PerSymbol(vec![2.5; 4]),
        _ => PowerLimits::Total(10.0),
    }
}

/// Random precoders meeting every constraint of `limits` with equality.
pub fn equality_precoders<R: Rng + ?Sized>(config: &SystemConfig, limits: &PowerLimits, rng: &mut R) -> Vec<CMat> {
    let mut b: Vec<CMat> = config.s.iter().map(|&s| complex_gaussian_matrix(rng, config.n, s, 1.0)).collect();
    match limits {
        PowerLimits::Total(p) => {
            let f = (p / crate::mse::total_power(&b)).sqrt();
            b.iter_mut().for_each(|bk| *bk *= c(f));
        }
        PowerLimits::PerAntenna(p) => {
            let rows = antenna_powers(&b, config.n);
            for bk in &mut b {
                for n in 0..config.n {
                    let f = (p[n] / rows[n]).sqrt();
                    bk.row_mut(n).iter_mut().for_each(|z| *z *= f);
                }
            }
        }
        PowerLimits::PerUser(p) => {
            for (bk, pk) in b.iter_mut().zip(p) {
                let f = (pk / bk.norm_squared()).sqrt();
                *bk *= c(f);
            }
        }
        PowerLimits::PerSymbol(p) => {
            let mut l = 0;
            for bk in &mut b {
                for s in 0..bk.ncols() {
                    let f = (p[l] / bk.column(s).norm_squared()).sqrt();
                    bk.column_mut(s).iter_mut().for_each(|z| *z *= f);
                    l += 1;
                }
            }
        }
        PowerLimits::PerEntry(p) => {
            let mut l = 0;
            for bk in &mut b {
                for s in 0..bk.ncols() {
                    for n in 0..config.n {
                        let z = bk[(n, s)];
                        bk[(n, s)] = z * (p[l * config.n + n] / z.norm_sqr()).sqrt();
                    }
                    l += 1;
                }
            }
        }
    }
    b
}

/// Errors observed on one downlink -> virtual -> downlink round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferCheck {
    /// Relative sum-AMSE change across the forward transfer.
    pub forward: f64,
    /// Relative sum-AMSE change across the return transfer.
    pub back: f64,
    /// Relative power-constraint violation after the return transfer.
    pub violation: f64,
    /// Fixed-point map residual, zero for the total-power duality.
    pub residual: f64,
    /// Relative error of the budget identity `sum_i x_i l_i = tau`.
    pub budget: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn solve_fixed_point(problem: Problem, state: &DualityState, limits: &[f64]) -> Result<(FixedPoint, DualityNoise)> {
    let opts = FixedPointOptions::default();
    Ok(match problem {
        Problem::P2 => {
            let fp = solve_psi_fixed_point(state, limits, &opts)?;
            let noise = DualityNoise::PerAntenna { psi: fp.values.clone() };
            (fp, noise)
        }
        Problem::P3 => {
            let fp = solve_mu_fixed_point(state, limits, &opts)?;
            let noise = DualityNoise::PerUser { mu: fp.values.clone() };
            (fp, noise)
        }
        _ => {
            let fp = solve_mu_tilde_fixed_point(state, limits, &opts)?;
            let noise = DualityNoise::PerSymbol { mu: fp.values.clone() };
            (fp, noise)
        }
    })
}

/// One full transfer round for `problem` on instance `seed`, with precoders
/// meeting the constraints with equality and either MAMSE or random
/// decoders.
pub fn check_transfers(problem: Problem, seed: u64) -> Result<TransferCheck> {
    let (cfg, link) = random_instance(seed)?;
    let limits = reference_limits(problem);
    let mut rng = RngStream::new(seed).child(1).rng();
    let b = equality_precoders(&cfg, &limits, &mut rng);
    let w = if seed.is_multiple_of(2) {
        mamse_receiver_dl(&b, &link)?
    } else {
        cfg.m.iter().zip(&cfg.s).map(|(&m, &s)| complex_gaussian_matrix(&mut rng, m, s, 1.0)).collect()
    };
    let dl = sum_amse_dl(&b, &w, &link);
    if problem == Problem::P1 {
        let sigma2 = 1.0;
        let noise = DualityNoise::Uplink { sigma2 };
        let (v, t, _) = transfer_dl_to_ul_p1(&b, &w, &link, sigma2)?;
        let forward = rel(sum_amse_virtual(&v, &t, &noise, &link), dl);
        let t = mamse_receiver_virtual(&v, &noise, &link)?;
        let ul = sum_amse_virtual(&v, &t, &noise, &link);
        let (b1, w1, _) = transfer_ul_to_dl_p1(&v, &t, &link, sigma2)?;
        return Ok(TransferCheck {
            forward,
            back: rel(sum_amse_dl(&b1, &w1, &link), ul),
            violation: limits.max_violation(&b1, cfg.n),
            ..Default::default()
        });
    }
    let state = DualityState::new(&w, &link);
    let (fp, noise) = solve_fixed_point(problem, &state, limits.values())?;
    let residual = fixed_point_residual(&state, &noise, limits.values())?;
    let weighted: f64 = fp.values.iter().zip(limits.values()).map(|(x, l)| x * l).sum();
    let (v, t) = transfer_dl_to_virtual(&b, &w);
    let forward = rel(sum_amse_virtual(&v, &t, &noise, &link), dl);
    let t = mamse_receiver_virtual(&v, &noise, &link)?;
    let ul = sum_amse_virtual(&v, &t, &noise, &link);
    let (b1, w1, _) = transfer_virtual_to_dl(&v, &t, &noise, &link)?;
    Ok(TransferCheck {
        forward,
        back: rel(sum_amse_dl(&b1, &w1, &link), ul),
        violation: limits.max_violation(&b1, cfg.n),
        residual,
        budget: rel(weighted, state.tau),
    })
}

/// Fixed point of the per-antenna power-minimization duality, solved against
/// the current antenna powers of random precoders. Returns the map residual
/// and the budget-identity error.
pub fn check_power_min_fixed_point(seed: u64) -> Result<(f64, f64)> {
    let (cfg, link) = random_instance(seed)?;
    let mut rng = RngStream::new(seed).child(2).rng();
    let b: Vec<CMat> = cfg.s.iter().map(|&s| complex_gaussian_matrix(&mut rng, cfg.n, s, 1.0)).collect();
    let w = mamse_receiver_dl(&b, &link)?;
    let targets = antenna_powers(&b, cfg.n);
    let state = DualityState::new(&w, &link);
    let fp = solve_psi_fixed_point_power_min(&state, &targets, &FixedPointOptions::default())?;
    let noise = DualityNoise::PerAntenna { psi: fp.values.clone() };
    let residual = fixed_point_residual(&state, &noise, &targets)?;
    let weighted: f64 = fp.values.iter().zip(&targets).map(|(x, l)| x * l).sum();
    Ok((residual, rel(weighted, state.tau)))
}

/// Relative gap between the posynomial sum AMSE of a random decomposition
/// and the direct expression.
pub fn check_posynomial(seed: u64) -> Result<f64> {
    let (cfg, link) = random_instance(seed)?;
    let mut rng = RngStream::new(seed).child(3).rng();
    let b: Vec<CMat> = cfg.s.iter().map(|&s| complex_gaussian_matrix(&mut rng, cfg.n, s, 1.0)).collect();
    let w: Vec<CMat> = cfg.m.iter().zip(&cfg.s).map(|(&m, &s)| complex_gaussian_matrix(&mut rng, m, s, 1.0)).collect();
    let dec = decompose(&b, &w)?;
    let phi = phi_matrix(&dec, &link)?;
    let d = d_matrix(&dec, &link)?;
    let posy = amse_posynomial(&dec, &phi, &d, &link).eval(&dec.p);
    Ok(rel(posy, sum_amse_dl(&b, &w, &link)))
}

/// Outcome of a full solve used by the convergence checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCheck {
    pub converged: bool,
    pub iterations: usize,
    /// Largest increase between consecutive sum-AMSE values.
    pub worst_increase: f64,
    /// Largest relative constraint violation after any return transfer.
    pub worst_violation: f64,
}

pub fn check_convergence(problem: Problem, seed: u64) -> Result<ConvergenceCheck> {
    let (cfg, link) = random_instance(seed)?;
    let res = solve_link(&link, &cfg, &SolveOptions::new(problem, reference_limits(problem)))?;
    Ok(ConvergenceCheck {
        converged: res.converged,
        iterations: res.iterations,
        worst_increase: res.amse_trace.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max),
        worst_violation: res.diagnostics.iter().map(|d| d.transfer_violation).fold(0.0, f64::max),
    })
}

/// Largest relative gap between the generalized total-power path and the
/// classical white-noise path on error-free links with equal white noise.
pub fn check_white_reduction(seed: u64) -> Result<f64> {
    let (cfg, link) = random_instance(seed)?;
    let sigma = link.users[0].r_n[(0, 0)].re;
    let users = link
        .users
        .iter()
        .map(|u| crate::model::UserLink { sigma_e2: 0.0, r_n: identity(u.r_n.nrows()) * c(sigma), ..u.clone() })
        .collect();
    let white_link = LinkModel::from_users(link.n, users);
    let mut opts = SolveOptions::new(Problem::P1, PowerLimits::Total(10.0));
    let general = solve_link(&white_link, &cfg, &opts)?;
    opts.total_power_transfer = TotalPowerTransfer::White;
    let white = solve_link(&white_link, &cfg, &opts)?;
    let trace_gap = general.amse_trace.iter().zip(&white.amse_trace).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
    let len_gap = if general.amse_trace.len() == white.amse_trace.len() { 0.0 } else { f64::INFINITY };
    Ok(trace_gap.max(len_gap))
}

/// One named check of the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: impl Into<String>, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.into(), passed, detail }
}

fn worst<T>(seeds: impl Iterator<Item = u64>, f: impl Fn(u64) -> Result<T>, key: impl Fn(&T) -> f64) -> (f64, usize) {
    let mut max = 0.0_f64;
    let mut failures = 0;
    for s in seeds {
        match f(s) {
            Ok(v) => max = max.max(key(&v)),
            Err(_) => failures += 1,
        }
    }
    (max, failures)
}

/// Runs the whole suite on `instances` random instances per check, starting
/// at `seed`.
pub fn run_suite(instances: usize, seed: u64) -> Vec<CheckOutcome> {
    let seeds = || seed..seed + instances as u64;
    let mut out = Vec::new();
    for problem in Problem::SUM_AMSE {
        let results: Vec<Result<TransferCheck>> = seeds().map(|s| check_transfers(problem, s)).collect();
        let errors = results.iter().filter(|r| r.is_err()).count();
        let ok: Vec<&TransferCheck> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        let max = |f: fn(&TransferCheck) -> f64| ok.iter().map(|c| f(c)).fold(0.0, f64::max);
        let (fwd, back) = (max(|c| c.forward), max(|c| c.back));
        out.push(outcome(
            format!("{problem} transfer conservation"),
            errors == 0 && fwd <= 1e-9 && back <= 1e-9,
            format!("forward {fwd:.2e}, return {back:.2e}, errors {errors}"),
        ));
        let viol = max(|c| c.violation);
        out.push(outcome(
            format!("{problem} power feasibility"),
            errors == 0 && viol <= 1e-6,
            format!("violation {viol:.2e}"),
        ));
        if problem != Problem::P1 {
            let (res, budget) = (max(|c| c.residual), max(|c| c.budget));
            out.push(outcome(
                format!("{problem} fixed point"),
                errors == 0 && res <= 1e-8 && budget <= 1e-6,
                format!("residual {res:.2e}, budget {budget:.2e}"),
            ));
        }
    }
    let results: Vec<Result<(f64, f64)>> = seeds().map(check_power_min_fixed_point).collect();
    let errors = results.iter().filter(|r| r.is_err()).count();
    let (res, budget) = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .fold((0.0_f64, 0.0_f64), |(a, b), (r, g)| (a.max(*r), b.max(*g)));
    out.push(outcome(
        "p7 fixed point",
        errors == 0 && res <= 1e-8 && budget <= 1e-6,
        format!("residual {res:.2e}, budget {budget:.2e}, errors {errors}"),
    ));
    let (gap, errors) = worst(seeds(), check_posynomial, |g| *g);
    out.push(outcome("posynomial consistency", errors == 0 && gap <= 1e-9, format!("gap {gap:.2e}")));
    let solves = instances.clamp(1, 10) as u64;
    for problem in Problem::SUM_AMSE {
        let runs: Vec<Result<ConvergenceCheck>> =
            (seed..seed + solves).map(|s| check_convergence(problem, s)).collect();
        let ok: Vec<&ConvergenceCheck> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
        let conv = ok.iter().filter(|c| c.converged).count();
        let inc = ok.iter().map(|c| c.worst_increase).fold(0.0, f64::max);
        out.push(outcome(
            format!("{problem} monotone convergence"),
            ok.len() == runs.len() && inc <= 1e-8 && conv * 100 >= 95 * runs.len(),
            format!("{conv}/{} converged, worst increase {inc:.2e}", runs.len()),
        ));
    }
    let (gap, errors) = worst(seed..seed + solves, check_white_reduction, |g| *g);
    out.push(outcome("white-noise reduction", errors == 0 && gap <= 1e-9, format!("gap {gap:.2e}")));
    out
}
