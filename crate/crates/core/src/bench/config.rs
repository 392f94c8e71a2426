use std::collections::HashSet;
use std::str::FromStr;

use super::ExperimentSpec;
use crate::error::{Error, Result};
use crate::linalg::identity;
use crate::model::DesignMode;
use crate::problem::Problem;

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("bs_antennas", "number of BS antennas N"),
    ("ms_antennas", "receive antennas per user, comma separated"),
    ("streams", "data streams per user, comma separated"),
    ("sigma_e2", "estimation-error variance per user"),
    ("rho_b", "BS-side exponential correlation coefficient per user"),
    ("rho_m", "MS-side exponential correlation coefficient per user"),
    ("noise_weights", "relative noise variance per user (normalized to mean one)"),
    ("snr_db", "SNR grid in dB"),
    ("realizations", "channel realizations per SNR point"),
    ("problems", "problems to run: p1..p4, p6..p10"),
    ("design_modes", "robust, naive and/or perfect"),
    ("seed", "64-bit master seed"),
    ("aser_symbols", "QPSK symbol vectors per trial for the ASER estimate"),
    ("p_max", "total BS power limit"),
    ("antenna_limit", "per-antenna power limit"),
    ("user_limit", "per-user power limit"),
    ("symbol_limit", "per-symbol power limit"),
    ("entry_limit", "per precoder entry power limit"),
    ("amse_target", "sum-AMSE target for the power-minimization problems"),
    ("gp_step", "true for the GP power step, false for plain alternation"),
    ("max_outer_iter", "outer iteration cap"),
    ("amse_tol", "convergence threshold on the sum-AMSE change"),
    ("sigma2_ul", "virtual uplink noise variance of the total-power duality"),
];

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{}'", value.trim())))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| scalar(key, s)).collect()
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected true or false, got '{other}'"))),
    }
}

/// Parses a flat `key = value` configuration on top of the defaults.
/// Blank lines and text after `#` are ignored; unknown or repeated keys are
/// errors. The result is validated.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    let mut seen = HashSet::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
        let key = key.trim();
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("line {}: unknown key '{key}'", no + 1)));
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!("line {}: '{key}' given twice", no + 1)));
        }
        let at = |e: Error| Error::Config(format!("line {}: {e}", no + 1));
        match key {
            "bs_antennas" => spec.base.n = scalar(key, value).map_err(at)?,
            "ms_antennas" => spec.base.m = list(key, value).map_err(at)?,
            "streams" => spec.base.s = list(key, value).map_err(at)?,
            "sigma_e2" => spec.base.sigma_e2 = list(key, value).map_err(at)?,
            "rho_b" => spec.base.rho_b = list(key, value).map_err(at)?,
            "rho_m" => spec.base.rho_m = list(key, value).map_err(at)?,
            "noise_weights" => spec.noise_weights = list(key, value).map_err(at)?,
            "snr_db" => spec.snr_grid_db = list(key, value).map_err(at)?,
            "realizations" => spec.n_realizations = scalar(key, value).map_err(at)?,
            "problems" => spec.problems = list::<Problem>(key, value).map_err(at)?,
            "design_modes" => spec.design_modes = list::<DesignMode>(key, value).map_err(at)?,
            "seed" => spec.seed = scalar(key, value).map_err(at)?,
            "aser_symbols" => spec.aser_symbols = scalar(key, value).map_err(at)?,
            "p_max" => spec.p_max = scalar(key, value).map_err(at)?,
            "antenna_limit" => spec.antenna_limit = scalar(key, value).map_err(at)?,
            "user_limit" => spec.user_limit = scalar(key, value).map_err(at)?,
            "symbol_limit" => spec.symbol_limit = scalar(key, value).map_err(at)?,
            "entry_limit" => spec.entry_limit = scalar(key, value).map_err(at)?,
            "amse_target" => spec.amse_target = Some(scalar(key, value).map_err(at)?),
            "gp_step" => spec.use_gp_step = boolean(key, value).map_err(at)?,
            "max_outer_iter" => spec.max_outer_iter = scalar(key, value).map_err(at)?,
            "amse_tol" => spec.amse_tol = scalar(key, value).map_err(at)?,
            "sigma2_ul" => spec.sigma2_ul = scalar(key, value).map_err(at)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    spec.base.noise_cov = spec.base.m.iter().map(|&m| identity(m)).collect();
    if !seen.contains("noise_weights") && spec.base.users() != spec.noise_weights.len() {
        // Users at twice the noise of their predecessor.
        spec.noise_weights = (0..spec.base.users()).map(|k| 2f64.powi(k as i32)).collect();
    }
    spec.validate().map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })?;
    Ok(spec)
}
