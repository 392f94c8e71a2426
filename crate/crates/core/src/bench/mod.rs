//! Monte-Carlo experiment harness: SNR sweeps over channel realizations,
//! design modes and problems, with ASER measurement and result emission.

mod aser;
mod config;
mod emit;
pub mod verify;

use log::{info, warn};
use rayon::prelude::*;

pub use aser::{aser_qpsk, qpsk_decide, qpsk_symbol};
pub use config::{parse_spec, KEYS};
pub use emit::{emit_csv, emit_plots, format_float, read_csv, write_csv, CSV_HEADER};

use crate::error::{Error, Result};
use crate::linalg::{c, identity, CMat};
use crate::model::{realize_with, ChannelSet, Correlations, DesignMode, RngStream, SystemConfig};
use crate::problem::{PowerLimits, Problem};
use crate::solver::{evaluate, evaluation_link, solve, SolveOptions, SolveResult};

/// A full SNR sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Dimensions, error statistics and correlations; the noise covariances
    /// are overwritten per SNR point.
    pub base: SystemConfig,
    /// Relative noise variances of the users, normalized to mean one.
    pub noise_weights: Vec<f64>,
    pub snr_grid_db: Vec<f64>,
    pub n_realizations: usize,
    pub problems: Vec<Problem>,
    pub design_modes: Vec<DesignMode>,
    pub seed: u64,
    /// QPSK symbol vectors sent per trial for the ASER estimate.
    pub aser_symbols: usize,
    pub p_max: f64,
    pub antenna_limit: f64,
    pub user_limit: f64,
    pub symbol_limit: f64,
    pub entry_limit: f64,
    /// Sum-AMSE target of the power-minimization problems.
    pub amse_target: Option<f64>,
    pub use_gp_step: bool,
    pub max_outer_iter: usize,
    pub amse_tol: f64,
    pub sigma2_ul: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            base: SystemConfig::reference(),
            noise_weights: vec![1.0, 2.0],
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            n_realizations: 20,
            problems: vec![Problem::P1],
            design_modes: DesignMode::ALL.to_vec(),
            seed: 1,
            aser_symbols: 10_000,
            p_max: 10.0,
            antenna_limit: 2.5,
            user_limit: 5.0,
            symbol_limit: 2.5,
            entry_limit: 2.5,
            amse_target: None,
            use_gp_step: true,
            max_outer_iter: 200,
            amse_tol: 1e-6,
            sigma2_ul: 1.0,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let base = self.base.with_noise(self.base.m.iter().map(|&m| identity(m)).collect());
        base.validate()?;
        if self.noise_weights.len() != self.base.users() {
            return Err(Error::Config(format!(
                "{} noise weights for {} users",
                self.noise_weights.len(),
                self.base.users()
            )));
        }
        if self.noise_weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("noise weights must be positive".into()));
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("the SNR grid must be a nonempty list of finite values".into()));
        }
        if self.n_realizations == 0 {
            return Err(Error::Config("at least one realization is needed".into()));
        }
        if self.problems.is_empty() || self.design_modes.is_empty() {
            return Err(Error::Config("problems and design modes must be nonempty".into()));
        }
        if self.problems.iter().any(|p| p.is_power_min()) && self.amse_target.is_none() {
            return Err(Error::Config("power-minimization problems need amse_target".into()));
        }
        if self.aser_symbols < 100 {
            warn!("{} QPSK symbols per trial give a high-variance ASER estimate", self.aser_symbols);
        }
        for &p in &self.problems {
            let opts = self.solve_options(p, DesignMode::Robust);
            opts.validate(&base)?;
        }
        Ok(())
    }

    /// Power limits used for `problem`.
    pub fn limits_for(&self, problem: Problem) -> PowerLimits {
        let cfg = &self.base;
        match problem.family() {
            crate::problem::ConstraintFamily::Total => PowerLimits::Total(self.p_max),
            crate::problem::ConstraintFamily::PerAntenna => PowerLimits::PerAntenna(vec![self.antenna_limit; cfg.n]),
            crate::problem::ConstraintFamily::PerUser => PowerLimits::PerUser(vec![self.user_limit; cfg.users()]),
            crate::problem::ConstraintFamily::PerSymbol => {
                PowerLimits::PerSymbol(vec![self.symbol_limit; cfg.total_symbols()])
            }
            crate::problem::ConstraintFamily::PerEntry => {
                PowerLimits::PerEntry(vec![self.entry_limit; cfg.total_symbols() * cfg.n])
            }
        }
    }

    pub fn solve_options(&self, problem: Problem, mode: DesignMode) -> SolveOptions {
        let mut opts = SolveOptions::new(problem, self.limits_for(problem));
        opts.design_mode = mode;
        opts.eps_t = if problem.is_power_min() { self.amse_target } else { None };
        opts.use_gp_step = self.use_gp_step;
        opts.max_outer_iter = self.max_outer_iter;
        opts.amse_tol = self.amse_tol;
        opts.sigma2_ul = self.sigma2_ul;
        opts
    }

    /// System configuration at one SNR point.
    pub fn config_at(&self, snr_db: f64, p_sum: f64) -> Result<SystemConfig> {
        let noise = snr_to_noise(&self.base, &self.noise_weights, snr_db, p_sum)?;
        Ok(self.base.with_noise(noise))
    }
}

/// Outcome of one (SNR, realization, problem, mode) trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub snr_db: f64,
    pub realization: usize,
    pub problem: Problem,
    pub design_mode: DesignMode,
    pub sum_amse: f64,
    pub aser: f64,
    pub total_power: f64,
    /// Largest relative violation of the problem's power constraints.
    pub max_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Mean of the trials sharing an (SNR, problem, mode) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub snr_db: f64,
    pub problem: Problem,
    pub design_mode: DesignMode,
    pub sum_amse: f64,
    pub aser: f64,
    pub total_power: f64,
    pub max_violation: f64,
    pub iterations: f64,
}

/// Per-user noise covariances `sigma_k^2 I` for an SNR of
/// `p_sum / (K sigma_av^2)`, with `sigma_k^2` proportional to `weights[k]`
/// and averaging to `sigma_av^2`.
pub fn snr_to_noise(config: &SystemConfig, weights: &[f64], snr_db: f64, p_sum: f64) -> Result<Vec<CMat>> {
    let k = config.users();
    if weights.len() != k {
        return Err(Error::Dimension(format!("{} noise weights for {k} users", weights.len())));
    }
    if !(p_sum > 0.0) || !snr_db.is_finite() {
        return Err(Error::Domain(format!("need a positive power and finite SNR, got {p_sum} and {snr_db}")));
    }
    let sigma_av = p_sum / (k as f64 * 10f64.powf(snr_db / 10.0));
    let mean = weights.iter().sum::<f64>() / k as f64;
    Ok(config.m.iter().zip(weights).map(|(&m, w)| identity(m) * c(sigma_av * w / mean)).collect())
}

fn mode_index(mode: DesignMode) -> u64 {
    match mode {
        DesignMode::Robust => 0,
        DesignMode::Naive => 1,
        DesignMode::Perfect => 2,
    }
}

fn problem_index(problem: Problem) -> u64 {
    problem.name()[1..].parse().expect("problem names are p<digit>")
}

/// Random streams of a trial: the channel depends only on the realization so
/// that every SNR, problem and mode sees the same draws.
fn channel_stream(seed: u64, realization: usize) -> RngStream {
    RngStream::new(seed).child(0).child(realization as u64)
}

fn aser_stream(seed: u64, snr: usize, realization: usize, problem: Problem, mode: DesignMode) -> RngStream {
    RngStream::new(seed)
        .child(1)
        .child(snr as u64)
        .child(realization as u64)
        .child(problem_index(problem))
        .child(mode_index(mode))
}

/// Total power of the perfect-knowledge design, used to place P2 and above
/// on the SNR axis. One refinement pass: design at the nominal budget,
/// then re-place the noise using the power actually spent.
fn reference_power(spec: &ExperimentSpec, problem: Problem, snr_db: f64, channel: &ChannelSet) -> Result<f64> {
    if problem == Problem::P1 {
        return Ok(spec.p_max);
    }
    let cfg = spec.config_at(snr_db, spec.limits_for(problem).budget())?;
    let opts = spec.solve_options(problem, DesignMode::Perfect);
    let res = solve(&cfg, channel, &opts)?;
    Ok(res.power_usage.total)
}

/// Solves and scores one trial.
pub fn run_trial(
    spec: &ExperimentSpec,
    snr_index: usize,
    realization: usize,
    problem: Problem,
    mode: DesignMode,
    channel: &ChannelSet,
    p_sum: f64,
) -> Result<(TrialRecord, SolveResult)> {
    let snr_db = spec.snr_grid_db[snr_index];
    let cfg = spec.config_at(snr_db, p_sum)?;
    let opts = spec.solve_options(problem, mode);
    let res = solve(&cfg, channel, &opts)?;
    let eval = evaluate(&res.transceiver, &evaluation_link(mode, channel, &cfg));
    let mut rng = aser_stream(spec.seed, snr_index, realization, problem, mode).rng();
    let aser = aser_qpsk(&res.transceiver, &channel.h_true, &cfg.noise_cov, spec.aser_symbols, &mut rng)?;
    let record = TrialRecord {
        snr_db,
        realization,
        problem,
        design_mode: mode,
        sum_amse: eval.sum_amse,
        aser,
        total_power: eval.power.total,
        max_violation: opts.limits.max_violation(&res.transceiver.b, cfg.n),
        iterations: res.iterations,
        converged: res.converged,
    };
    Ok((record, res))
}

/// Runs every trial of `spec` on `jobs` worker threads. The records come back
/// in canonical order (SNR, realization, problem, mode) and do not depend on
/// `jobs`.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let corr = Correlations::new(&spec.base)?;
    let items: Vec<(usize, usize, Problem)> = (0..spec.snr_grid_db.len())
        .flat_map(|s| (0..spec.n_realizations).flat_map(move |r| spec.problems.iter().map(move |&p| (s, r, p))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    info!("running {} trial groups on {} workers", items.len(), jobs.max(1));
    let groups: Vec<Result<Vec<TrialRecord>>> = pool.install(|| {
        items
            .par_iter()
            .map(|&(s, r, problem)| {
                let channel = realize_with(&spec.base, &corr, channel_stream(spec.seed, r));
                let snr_db = spec.snr_grid_db[s];
                let p_sum = reference_power(spec, problem, snr_db, &channel).map_err(|e| Error::InTrial {
                    trial: format!("{problem} power reference at {snr_db} dB, realization {r}"),
                    inner: Box::new(e),
                })?;
                spec.design_modes
                    .iter()
                    .map(|&mode| {
                        run_trial(spec, s, r, problem, mode, &channel, p_sum).map(|(rec, _)| rec).map_err(|e| {
                            Error::InTrial {
                                trial: format!("{problem} {} at {snr_db} dB, realization {r}", mode.name()),
                                inner: Box::new(e),
                            }
                        })
                    })
                    .collect()
            })
            .collect()
    });
    let mut records = Vec::new();
    for g in groups {
        records.extend(g?);
    }
    let failed = records.iter().filter(|r| !r.converged).count();
    if failed > 0 {
        warn!("{failed} of {} trials hit the iteration cap", records.len());
    }
    Ok(records)
}

/// Averages records over realizations. Rows follow the order in which each
/// (SNR, problem, mode) triple first appears.
pub fn aggregate(records: &[TrialRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(f64, Problem, DesignMode)> = Vec::new();
    for r in records {
        let key = (r.snr_db, r.problem, r.design_mode);
        if !keys.iter().any(|k| k.0.to_bits() == key.0.to_bits() && k.1 == key.1 && k.2 == key.2) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(snr_db, problem, design_mode)| {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| {
                    r.snr_db.to_bits() == snr_db.to_bits() && r.problem == problem && r.design_mode == design_mode
                })
                .collect();
            let n = group.len() as f64;
            let mean = |f: &dyn Fn(&TrialRecord) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            AggregateRow {
                snr_db,
                problem,
                design_mode,
                sum_amse: mean(&|r| r.sum_amse),
                aser: mean(&|r| r.aser),
                total_power: mean(&|r| r.total_power),
                max_violation: group.iter().map(|r| r.max_violation).fold(0.0, f64::max),
                iterations: mean(&|r| r.iterations as f64),
            }
        })
        .collect()
}
