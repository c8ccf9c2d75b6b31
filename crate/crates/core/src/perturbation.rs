//! Dissipation coefficient sequences `a_n` and their interpolations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sequence of positive dissipation coefficients `a_1, a_2, ...`.
///
/// The same sequence is used for every time step `τ`; the interpolation
/// `a^τ(t) = a_{⌈t/τ⌉}` is provided by [`Schedule::interpolate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub enum Schedule {
    Constant(f64),
    Periodic(Vec<f64>),
    /// Finite list followed by a constant tail.
    Explicit { values: Vec<f64>, tail: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawSchedule {
    Constant { value: f64 },
    Periodic { values: Vec<f64> },
    Explicit { values: Vec<f64>, tail: f64 },
}

impl TryFrom<RawSchedule> for Schedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        match raw {
            RawSchedule::Constant { value } => Schedule::constant(value),
            RawSchedule::Periodic { values } => Schedule::periodic(values),
            RawSchedule::Explicit { values, tail } => Schedule::explicit(values, tail),
        }
    }
}

impl From<Schedule> for RawSchedule {
    fn from(s: Schedule) -> Self {
        match s {
            Schedule::Constant(value) => RawSchedule::Constant { value },
            Schedule::Periodic(values) => RawSchedule::Periodic { values },
            Schedule::Explicit { values, tail } => RawSchedule::Explicit { values, tail },
        }
    }
}

fn check_positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} is not a positive finite number")))
    }
}

impl Schedule {
    pub fn constant(c: f64) -> Result<Self> {
        check_positive("schedule.value", c)?;
        Ok(Schedule::Constant(c))
    }

    pub fn periodic(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("schedule.values", "periodic list is empty"));
        }
        for &v in &values {
            check_positive("schedule.values", v)?;
        }
        Ok(Schedule::Periodic(values))
    }

    pub fn explicit(values: Vec<f64>, tail: f64) -> Result<Self> {
        for &v in &values {
            check_positive("schedule.values", v)?;
        }
        check_positive("schedule.tail", tail)?;
        Ok(Schedule::Explicit { values, tail })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Schedule::Constant(_) => "constant",
            Schedule::Periodic(_) => "periodic",
            Schedule::Explicit { .. } => "explicit",
        }
    }

    /// `a_n` for `n ≥ 1`.
    pub fn at(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::invalid("n", "coefficients are indexed from 1"));
        }
        Ok(self.at_unchecked(n))
    }

    pub(crate) fn at_unchecked(&self, n: usize) -> f64 {
        match self {
            Schedule::Constant(c) => *c,
            Schedule::Periodic(v) => v[(n - 1) % v.len()],
            Schedule::Explicit { values, tail } => values.get(n - 1).copied().unwrap_or(*tail),
        }
    }

    /// `a^τ(t) = a_{⌈t/τ⌉}`; at grid points `t = kτ` this is `a_k`.
    pub fn interpolate(&self, t: f64, tau: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid("t", format!("{t} must be positive")));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::invalid("tau", format!("{tau} must be positive")));
        }
        Ok(self.at_unchecked(grid_index(t, tau)))
    }

    /// Period length `N` (1 for constant schedules, `None` for explicit ones).
    pub fn period(&self) -> Option<usize> {
        match self {
            Schedule::Constant(_) => Some(1),
            Schedule::Periodic(v) => Some(v.len()),
            Schedule::Explicit { .. } => None,
        }
    }

    /// Values over one period.
    pub fn period_values(&self) -> Result<Vec<f64>> {
        match self {
            Schedule::Constant(c) => Ok(vec![*c]),
            Schedule::Periodic(v) => Ok(v.clone()),
            Schedule::Explicit { .. } => Err(Error::UnsupportedSchedule { kind: "explicit" }),
        }
    }

    /// Harmonic mean `a*` with `1/a* = (1/N) Σ 1/a_i`.
    pub fn harmonic_limit(&self) -> Result<f64> {
        let values = self.period_values()?;
        let inv_mean = values.iter().map(|a| 1.0 / a).sum::<f64>() / values.len() as f64;
        Ok(1.0 / inv_mean)
    }

    /// Smallest coefficient `α` (over one period, or over the list and tail).
    pub fn min_alpha(&self) -> f64 {
        self.values_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values_iter().fold(0.0, f64::max)
    }

    fn values_iter(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            Schedule::Constant(c) => Box::new(std::iter::once(*c)),
            Schedule::Periodic(v) => Box::new(v.iter().copied()),
            Schedule::Explicit { values, tail } => {
                Box::new(values.iter().copied().chain(std::iter::once(*tail)))
            }
        }
    }

    /// `(1/M) Σ_{n=1..M} 1/a_n`.
    pub fn reciprocal_mean(&self, m: usize) -> f64 {
        if m == 0 {
            return 0.0;
        }
        if let Schedule::Periodic(v) = self {
            let n = v.len();
            let full = m / n;
            let per_period: f64 = v.iter().map(|a| 1.0 / a).sum();
            let rest: f64 = v[..m % n].iter().map(|a| 1.0 / a).sum();
            return (full as f64 * per_period + rest) / m as f64;
        }
        (1..=m).map(|n| 1.0 / self.at_unchecked(n)).sum::<f64>() / m as f64
    }

    /// `∫_s^t 1/a^τ(ξ) dξ`, exact on the piecewise-constant interpolation.
    pub fn reciprocal_integral(&self, s: f64, t: f64, tau: f64) -> Result<f64> {
        if s > t {
            return Err(Error::invalid("s", format!("s = {s} exceeds t = {t}")));
        }
        if s < 0.0 {
            return Err(Error::invalid("s", "must be nonnegative"));
        }
        if !(tau > 0.0) {
            return Err(Error::invalid("tau", "must be positive"));
        }
        if s == t {
            return Ok(0.0);
        }
        let first = (s / tau).floor() as usize + 1;
        let last = ((t / tau).ceil() as usize).max(first);
        let mut total = 0.0;
        for n in first..=last {
            let lo = ((n - 1) as f64 * tau).max(s);
            let hi = (n as f64 * tau).min(t);
            if hi > lo {
                total += (hi - lo) / self.at_unchecked(n);
            }
        }
        Ok(total)
    }

    /// Finite-sample version of the continuity modulus
    /// `θ(t, s) = (sup_τ ∫_s^t 1/a^τ)^{1/2}`.
    ///
    /// The supremum is taken over the supplied `tau_samples` only, so the
    /// result is a lower bound of the true modulus.
    pub fn theta_modulus(&self, s: f64, t: f64, tau_samples: &[f64]) -> Result<f64> {
        if tau_samples.is_empty() {
            return Err(Error::invalid("tau_samples", "at least one sample is required"));
        }
        let mut best: f64 = 0.0;
        for &tau in tau_samples {
            best = best.max(self.reciprocal_integral(s, t, tau)?);
        }
        Ok(best.sqrt())
    }
}

/// `⌈t/τ⌉`, with `t/τ` within relative `10⁻⁹` of an integer snapped to it
/// so that rounding in `kτ` does not skip a cell.
pub(crate) fn grid_index(t: f64, tau: f64) -> usize {
    let x = t / tau;
    let r = x.round();
    let n = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    n.max(1.0) as usize
}
