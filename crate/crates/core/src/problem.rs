//! Problem identities and their power-constraint families.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::model::SystemConfig;
use crate::mse::{antenna_powers, symbol_powers, total_power, user_powers};

/// Sum-AMSE minimization (`P1`-`P4`) and transmit-power minimization under a
/// sum-AMSE target (`P6`-`P10`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Problem {
    /// Total BS power.
    P1,
    /// Per BS antenna power.
    P2,
    /// Per user power.
    P3,
    /// Per symbol power.
    P4,
    /// Minimum power, total BS power cap.
    P6,
    /// Minimum power, per-antenna caps.
    P7,
    /// Minimum power, per-user caps.
    P8,
    /// Minimum power, per-symbol caps.
    P9,
    /// Minimum power, per precoder entry caps.
    P10,
}

/// Which quantity a power constraint bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintFamily {
    Total,
    PerAntenna,
    PerUser,
    PerSymbol,
    PerEntry,
}

impl Problem {
    pub const SUM_AMSE: [Problem; 4] = [Problem::P1, Problem::P2, Problem::P3, Problem::P4];

    pub fn family(self) -> ConstraintFamily {
        match self {
            Problem::P1 | Problem::P6 => ConstraintFamily::Total,
            Problem::P2 | Problem::P7 => ConstraintFamily::PerAntenna,
            Problem::P3 | Problem::P8 => ConstraintFamily::PerUser,
            Problem::P4 | Problem::P9 => ConstraintFamily::PerSymbol,
            Problem::P10 => ConstraintFamily::PerEntry,
        }
    }

    pub fn is_power_min(self) -> bool {
        matches!(self, Problem::P6 | Problem::P7 | Problem::P8 | Problem::P9 | Problem::P10)
    }

    pub fn name(self) -> &'static str {
        match self {
            Problem::P1 => "p1",
            Problem::P2 => "p2",
            Problem::P3 => "p3",
            Problem::P4 => "p4",
            Problem::P6 => "p6",
            Problem::P7 => "p7",
            Problem::P8 => "p8",
            Problem::P9 => "p9",
            Problem::P10 => "p10",
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "p1" => Problem::P1,
            "p2" => Problem::P2,
            "p3" => Problem::P3,
            "p4" => Problem::P4,
            "p6" => Problem::P6,
            "p7" => Problem::P7,
            "p8" => Problem::P8,
            "p9" => Problem::P9,
            "p10" => Problem::P10,
            other => return Err(Error::Parse(format!("unknown problem '{other}'"))),
        })
    }
}

/// Power limits of one constraint family.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerLimits {
    Total(f64),
    /// One limit per BS antenna.
    PerAntenna(Vec<f64>),
    /// One limit per user.
    PerUser(Vec<f64>),
    /// One limit per symbol, global order.
    PerSymbol(Vec<f64>),
    /// Limit on `|b_{l,n}|^2`, indexed `[l * N + n]`.
    PerEntry(Vec<f64>),
}

impl PowerLimits {
    pub fn family(&self) -> ConstraintFamily {
        match self {
            PowerLimits::Total(_) => ConstraintFamily::Total,
            PowerLimits::PerAntenna(_) => ConstraintFamily::PerAntenna,
            PowerLimits::PerUser(_) => ConstraintFamily::PerUser,
            PowerLimits::PerSymbol(_) => ConstraintFamily::PerSymbol,
            PowerLimits::PerEntry(_) => ConstraintFamily::PerEntry,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            PowerLimits::Total(v) => std::slice::from_ref(v),
            PowerLimits::PerAntenna(v)
            | PowerLimits::PerUser(v)
            | PowerLimits::PerSymbol(v)
            | PowerLimits::PerEntry(v) => v,
        }
    }

    /// Checks positivity and that the vector length fits `config`.
    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        let expected = match self {
            PowerLimits::Total(_) => 1,
            PowerLimits::PerAntenna(_) => config.n,
            PowerLimits::PerUser(_) => config.users(),
            PowerLimits::PerSymbol(_) => config.total_symbols(),
            PowerLimits::PerEntry(_) => config.total_symbols() * config.n,
        };
        let v = self.values();
        if v.len() != expected {
            return Err(Error::Dimension(format!(
                "{:?} limits: expected {expected} values, got {}",
                self.family(),
                v.len()
            )));
        }
        if let Some(bad) = v.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Domain(format!("power limits must be positive, got {bad}")));
        }
        Ok(())
    }

    /// Sum of the limits, i.e. the largest total power they allow (for
    /// `PerEntry` this is an upper bound).
    pub fn budget(&self) -> f64 {
        self.values().iter().sum()
    }

    /// Current usage of each constrained quantity, aligned with `values()`.
    pub fn usage(&self, b: &[CMat], n: usize) -> Vec<f64> {
        match self {
            PowerLimits::Total(_) => vec![total_power(b)],
            PowerLimits::PerAntenna(_) => antenna_powers(b, n),
            PowerLimits::PerUser(_) => user_powers(b),
            PowerLimits::PerSymbol(_) => symbol_powers(b),
            PowerLimits::PerEntry(_) => entry_powers(b),
        }
    }

    /// Largest relative violation `max(0, usage / limit - 1)`.
    pub fn max_violation(&self, b: &[CMat], n: usize) -> f64 {
        self.usage(b, n).iter().zip(self.values()).map(|(u, l)| (u / l - 1.0).max(0.0)).fold(0.0, f64::max)
    }
}

/// `|b_{l,n}|^2` for every symbol `l` and antenna `n`, indexed `[l * N + n]`.
pub fn entry_powers(b: &[CMat]) -> Vec<f64> {
    b.iter()
        .flat_map(|bk| (0..bk.ncols()).flat_map(move |s| bk.column(s).iter().map(|z| z.norm_sqr()).collect::<Vec<_>>()))
        .collect()
}

/// Power usage of a precoder under all four standard families at once.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerReport {
    pub total: f64,
    pub per_antenna: Vec<f64>,
    pub per_user: Vec<f64>,
    pub per_symbol: Vec<f64>,
}

impl PowerReport {
    pub fn new(b: &[CMat], n: usize) -> Self {
        PowerReport {
            total: total_power(b),
            per_antenna: antenna_powers(b, n),
            per_user: user_powers(b),
            per_symbol: symbol_powers(b),
        }
    }
}
