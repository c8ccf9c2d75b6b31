//! Descent of `φ(u) = -u` restricted to `εℤ` or to a residue sub-lattice.
//!
//! On the full lattice the step is explicit,
//! `u_n = u_{n-1} + ε ⌊1/(a_n γ) + 1/2⌋` with `γ = ε/τ`, so a periodic
//! schedule moves with velocity `γ · mean_i ⌊1/(a_i γ) + 1/2⌋`. On
//! `ε(pℤ + R)` the step is the admissible point nearest to
//! `u_{n-1} + τ/a_n`. Positions are tracked as integer lattice indices and
//! converted with `index as f64 * ε`.

use std::collections::HashMap;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::{num, Table};
use crate::perturbation::Schedule;
use crate::scheme::{step_count, ResiduePattern, Trajectory};
use crate::BIFURCATION_REL_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeFlowConfig {
    pub gamma: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub schedule: Schedule,
    #[serde(default)]
    pub u0: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub pattern: ResiduePattern,
}

fn default_tau() -> f64 {
    1e-3
}

fn default_horizon() -> f64 {
    1.0
}

impl LatticeFlowConfig {
    pub fn new(gamma: f64, tau: f64, schedule: Schedule) -> Self {
        LatticeFlowConfig {
            gamma,
            tau,
            schedule,
            u0: 0.0,
            horizon: 1.0,
            pattern: ResiduePattern::full(),
        }
    }

    pub fn eps(&self) -> f64 {
        self.gamma * self.tau
    }

    /// All violated constraints, as `(field, reason)` pairs.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        for (field, v) in [
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("horizon", self.horizon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                out.push((field, format!("must be positive and finite, got {v}")));
            }
        }
        if out.is_empty() && self.start_index().is_err() {
            out.push((
                "u0",
                format!("{} is not an admissible lattice point", self.u0),
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some((field, reason)) => Err(Error::invalid(field, reason)),
            None => Ok(()),
        }
    }

    fn start_index(&self) -> Result<i64> {
        let x = self.u0 / self.eps();
        let i = x.round();
        if (x - i).abs() > 1e-9 * i.abs().max(1.0) || !self.pattern.admits(i as i64) {
            return Err(Error::invalid("u0", "not an admissible lattice point"));
        }
        Ok(i as i64)
    }
}

/// Number of cells moved from index `i` when `1/(aγ)` is `ratio`.
///
/// Ties (`ratio ∈ ℤ + 1/2` on the full lattice, equidistant admissible
/// points otherwise) are reported as [`Error::Bifurcation`] in index units.
pub fn step_index(i: i64, ratio: f64, pattern: &ResiduePattern) -> Result<i64> {
    if pattern.p() == 1 {
        let x = ratio + 0.5;
        let j = x.round();
        if j >= 1.0 && (x - j).abs() <= BIFURCATION_REL_TOL * (j - 0.5) {
            return Err(Error::Bifurcation {
                lower: (i + j as i64 - 1) as f64,
                upper: (i + j as i64) as f64,
            });
        }
        return Ok(i + x.floor() as i64);
    }
    let target = i as f64 + ratio;
    let p = pattern.p() as i64;
    let base = target.floor() as i64;
    let mut best: Option<(i64, f64)> = None;
    let mut second: Option<(i64, f64)> = None;
    for k in (base - p)..=(base + p + 1) {
        if !pattern.admits(k) {
            continue;
        }
        let d = (k as f64 - target).abs();
        match best {
            Some((_, bd)) if d >= bd => {
                if second.map_or(true, |(_, sd)| d < sd) {
                    second = Some((k, d));
                }
            }
            _ => {
                second = best;
                best = Some((k, d));
            }
        }
    }
    let (k, d) = best.expect("every window of p+1 integers has an admissible point");
    if let Some((k2, d2)) = second {
        if d2 - d <= BIFURCATION_REL_TOL * ratio.max(1.0) {
            let (lo, hi) = if k < k2 { (k, k2) } else { (k2, k) };
            return Err(Error::Bifurcation {
                lower: lo as f64,
                upper: hi as f64,
            });
        }
    }
    Ok(k)
}

fn index_bifurcation_to_position(e: Error, eps: f64) -> Error {
    match e {
        Error::Bifurcation { lower, upper } => Error::Bifurcation {
            lower: lower * eps,
            upper: upper * eps,
        },
        other => other,
    }
}

/// One step of the closed-form recursion from the lattice point `u_prev`.
pub fn lattice_step(u_prev: f64, a: f64, cfg: &LatticeFlowConfig) -> Result<f64> {
    let eps = cfg.eps();
    let x = u_prev / eps;
    let i = x.round();
    if (x - i).abs() > 1e-9 * i.abs().max(1.0) {
        return Err(Error::invalid("u_prev", format!("{u_prev} is not a lattice point")));
    }
    let next = step_index(i as i64, 1.0 / (a * cfg.gamma), &cfg.pattern)
        .map_err(|e| index_bifurcation_to_position(e, eps))?;
    Ok(next as f64 * eps)
}

/// Lattice indices `i_0..i_M` of the closed-form orbit.
pub fn run_lattice_indices(cfg: &LatticeFlowConfig) -> Result<Vec<i64>> {
    cfg.validate()?;
    let steps = step_count(cfg.horizon, cfg.tau);
    let mut out = Vec::with_capacity(steps + 1);
    let mut i = cfg.start_index()?;
    out.push(i);
    for n in 1..=steps {
        let a = cfg.schedule.at_unchecked(n);
        i = step_index(i, 1.0 / (a * cfg.gamma), &cfg.pattern)
            .map_err(|e| index_bifurcation_to_position(e, cfg.eps()).at_step(n))?;
        out.push(i);
    }
    Ok(out)
}

pub fn run_lattice(cfg: &LatticeFlowConfig) -> Result<Trajectory> {
    let idx = run_lattice_indices(cfg)?;
    let eps = cfg.eps();
    let mut traj = Trajectory::new(cfg.tau, idx[0] as f64 * eps);
    for (n, &i) in idx.iter().enumerate().skip(1) {
        traj.push(i as f64 * eps, cfg.schedule.at_unchecked(n));
    }
    Ok(traj)
}

/// `(i, j)` pairs where `γ` is within relative `10⁻⁹` of `γ_j = 2/((2j-1) a_i)`;
/// `i` is 1-based.
fn offending_pairs(values: &[f64], gamma: f64) -> Vec<(usize, i64)> {
    values
        .iter()
        .enumerate()
        .filter_map(|(i, &a)| {
            let x = 1.0 / (a * gamma) + 0.5;
            let j = x.round();
            (j >= 1.0 && (x - j).abs() <= BIFURCATION_REL_TOL * (j - 0.5))
                .then_some((i + 1, j as i64))
        })
        .collect()
}

/// `1/a_γ = γ · mean_i ⌊1/(a_i γ) + 1/2⌋`.
pub fn effective_velocity(schedule: &Schedule, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", "must be positive"));
    }
    let values = schedule.period_values()?;
    let offending = offending_pairs(&values, gamma);
    if !offending.is_empty() {
        return Err(Error::BifurcationValue { gamma, offending });
    }
    let total: f64 = values
        .iter()
        .map(|&a| (1.0 / (a * gamma) + 0.5).floor())
        .sum();
    Ok(gamma * total / values.len() as f64)
}

/// Exact staircase value for rational data; bifurcations are detected
/// exactly.
pub fn effective_velocity_exact(values: &[Rational64], gamma: Rational64) -> Result<Rational64> {
    if values.is_empty() {
        return Err(Error::invalid("schedule.values", "must be nonempty"));
    }
    if gamma <= Rational64::zero() {
        return Err(Error::invalid("gamma", "must be positive"));
    }
    if values.iter().any(|a| *a <= Rational64::zero()) {
        return Err(Error::invalid("schedule.values", "must be positive"));
    }
    let half = Rational64::new(1, 2);
    let mut offending = Vec::new();
    let mut total = 0i64;
    for (i, a) in values.iter().enumerate() {
        let x = (a * gamma).recip() + half;
        if x.is_integer() {
            offending.push((i + 1, x.to_integer()));
        }
        total += x.floor().to_integer();
    }
    if !offending.is_empty() {
        return Err(Error::BifurcationValue {
            gamma: gamma.to_f64().unwrap_or(f64::NAN),
            offending,
        });
    }
    Ok(gamma * Rational64::new(total, values.len() as i64))
}

/// Parse `"9/10"`, `"0.9"` or `"3"` as an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational64> {
    let s = text.trim();
    let bad = || Error::invalid("rational", format!("cannot parse `{text}`"));
    if let Some((n, d)) = s.split_once('/') {
        let n = i64::from_str(n.trim()).map_err(|_| bad())?;
        let d = i64::from_str(d.trim()).map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Rational64::new(n, d));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 17 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let negative = int.starts_with('-');
    let digits = format!("{}{}", int.trim_start_matches(['-', '+']), frac);
    let mantissa = i64::from_str(&digits).map_err(|_| bad())?;
    let denom = 10i64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
    let r = Rational64::new(mantissa, denom);
    Ok(if negative { -r } else { r })
}

/// Jump locations `2/((2j-1) a_i)` for `j = 1..=j_max`, descending, with
/// duplicates (relative `10⁻¹²`) merged.
pub fn bifurcation_values(schedule: &Schedule, j_max: usize) -> Result<Vec<f64>> {
    if j_max == 0 {
        return Err(Error::invalid("j_max", "must be at least 1"));
    }
    let mut out: Vec<f64> = schedule
        .period_values()?
        .iter()
        .flat_map(|&a| (1..=j_max).map(move |j| 2.0 / ((2 * j - 1) as f64 * a)))
        .collect();
    out.sort_by(|x, y| y.total_cmp(x));
    out.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs());
    Ok(out)
}

/// `sup_γ 1/a_γ` for the alternating schedule `[α, β]`, with the jump value
/// it is approached from below.
pub fn sup_velocity(alpha: f64, beta: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha", "must be positive"));
    }
    if !(alpha < beta) {
        return Err(Error::invalid("alpha", "must be smaller than beta"));
    }
    if alpha <= beta / 2.0 {
        Ok((1.0 / alpha, 2.0 / alpha))
    } else {
        Ok((2.0 / beta, 2.0 / beta))
    }
}

/// Measure of `I(t) = {ξ ∈ [0, t] : a^τ(ξ) ≤ 2/γ}` on the trajectory's grid.
pub fn pinning_fraction(traj: &Trajectory, schedule: &Schedule, gamma: f64, t: f64) -> Result<f64> {
    let tau = traj.tau;
    let horizon = traj.steps() as f64 * tau;
    if t < 0.0 || t > horizon * (1.0 + 1e-12) {
        return Err(Error::invalid("t", format!("must lie in [0, {horizon}]")));
    }
    let threshold = 2.0 / gamma;
    let full = (t / tau).floor() as usize;
    let mut measure: f64 = (1..=full)
        .filter(|&n| schedule.at_unchecked(n) <= threshold)
        .count() as f64
        * tau;
    let rest = t - full as f64 * tau;
    if rest > 0.0 && schedule.at_unchecked(full + 1) <= threshold {
        measure += rest;
    }
    Ok(measure)
}

/// Long-run velocity on `ε(pℤ + R)`, measured on the first exact cycle of
/// `(index mod p, n mod N)` after the burn-in.
pub fn residue_flow_velocity(pattern: &ResiduePattern, schedule: &Schedule, gamma: f64) -> Result<f64> {
    Ok(residue_cycle(pattern, schedule, gamma)?.velocity(gamma))
}

/// Displacement (in cells) over one cycle of the residue recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidueCycle {
    pub start: usize,
    pub length: usize,
    pub displacement: i64,
}

impl ResidueCycle {
    pub fn velocity(&self, gamma: f64) -> f64 {
        gamma * self.displacement as f64 / self.length as f64
    }
}

const MAX_CYCLE_STEPS: usize = 1_000_000;

pub fn residue_cycle(
    pattern: &ResiduePattern,
    schedule: &Schedule,
    gamma: f64,
) -> Result<ResidueCycle> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", "must be positive"));
    }
    let values = schedule.period_values()?;
    let period = values.len();
    let p = pattern.p() as i64;
    let burn_in = (10 * period * p as usize).max(100);
    let mut i: i64 = *pattern.residues().first().expect("nonempty") as i64;
    let mut seen: HashMap<(i64, usize), (usize, i64)> = HashMap::new();
    for n in 0..MAX_CYCLE_STEPS {
        if n >= burn_in {
            let key = (i.rem_euclid(p), n % period);
            if let Some(&(n0, i0)) = seen.get(&key) {
                return Ok(ResidueCycle {
                    start: n0,
                    length: n - n0,
                    displacement: i - i0,
                });
            }
            seen.insert(key, (n, i));
        }
        let a = values[n % period];
        i = step_index(i, 1.0 / (a * gamma), pattern).map_err(|e| e.at_step(n + 1))?;
    }
    Err(Error::NoCycle {
        steps: MAX_CYCLE_STEPS,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseRow {
    pub gamma: f64,
    pub inv_a_gamma: f64,
    pub inv_a_star: f64,
    pub pinned: bool,
    pub note: String,
}

/// `γ ↦ 1/a_γ` on a grid, nudging grid points that hit a jump.
pub fn staircase_sweep(schedule: &Schedule, grid: &[f64]) -> Result<Vec<StaircaseRow>> {
    let inv_a_star = 1.0 / schedule.harmonic_limit()?;
    let alpha = schedule.min_alpha();
    grid.iter()
        .map(|&g0| {
            let mut gamma = g0;
            let mut nudges = 0;
            let v = loop {
                match effective_velocity(schedule, gamma) {
                    Ok(v) => break v,
                    Err(Error::BifurcationValue { .. }) if nudges < 100 => {
                        gamma *= 1.0 + 1e-9;
                        nudges += 1;
                    }
                    Err(e) => return Err(e),
                }
            };
            let note = if nudges > 0 {
                format!("nudged from {} ({nudges}x1e-9 rel)", num(g0))
            } else {
                String::new()
            };
            Ok(StaircaseRow {
                gamma,
                inv_a_gamma: v,
                inv_a_star,
                pinned: gamma > 2.0 / alpha,
                note,
            })
        })
        .collect()
}

pub fn staircase_table(rows: &[StaircaseRow]) -> Table {
    let mut t = Table::new(["gamma", "inv_a_gamma", "inv_a_star", "pinned_flag", "note"]);
    for r in rows {
        t.push(vec![
            num(r.gamma),
            num(r.inv_a_gamma),
            num(r.inv_a_star),
            (r.pinned as u8).to_string(),
            r.note.clone(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic(v: &[f64]) -> Schedule {
        Schedule::periodic(v.to_vec()).unwrap()
    }

    #[test]
    fn single_steps() {
        let cfg = LatticeFlowConfig::new(1.0, 0.1, Schedule::constant(1.0).unwrap());
        assert_eq!(lattice_step(0.0, 1.0, &cfg).unwrap(), 0.1);
        for k in [-3.0, 0.0, 7.0] {
            let u = k * cfg.eps();
            assert_eq!(lattice_step(u, 3.0, &cfg).unwrap(), u);
        }
    }

    #[test]
    fn residue_step_example() {
        let mut cfg = LatticeFlowConfig::new(0.7, 0.1, Schedule::constant(1.0).unwrap());
        cfg.pattern = ResiduePattern::new(3, vec![0, 1]).unwrap();
        for k in -4i64..6 {
            let u = (3 * k + 1) as f64 * cfg.eps();
            let v = lattice_step(u, 1.0, &cfg).unwrap();
            assert_eq!(v, (3 * k + 3) as f64 * cfg.eps());
        }
    }

    #[test]
    fn full_lattice_tie_is_reported() {
        // 1/(aγ) = 1/2
        let err = step_index(0, 0.5, &ResiduePattern::full()).unwrap_err();
        assert_eq!(
            err,
            Error::Bifurcation {
                lower: 0.0,
                upper: 1.0
            }
        );
    }

    #[test]
    fn residue_tie_is_reported() {
        // from index 1 the target 2 sits between admissible 1 and 3
        let pat = ResiduePattern::new(3, vec![0, 1]).unwrap();
        assert!(matches!(
            step_index(1, 1.0, &pat),
            Err(Error::Bifurcation { .. })
        ));
    }

    #[test]
    fn staircase_examples() {
        let s = periodic(&[1.0, 3.0]);
        assert!((effective_velocity(&s, 0.9).unwrap() - 0.45).abs() < 1e-15);
        assert_eq!(effective_velocity(&s, 2.5).unwrap(), 0.0);
        let c = Schedule::constant(1.0).unwrap();
        assert!((effective_velocity(&c, 0.9).unwrap() - 0.9).abs() < 1e-15);
        assert!((effective_velocity(&s, 2.0 - 1e-6).unwrap() - (2.0 - 1e-6) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn exact_mode() {
        let v = [Rational64::from_integer(1), Rational64::from_integer(3)];
        let r = effective_velocity_exact(&v, parse_rational("0.9").unwrap()).unwrap();
        assert_eq!(r, Rational64::new(9, 20));
        let err = effective_velocity_exact(&v, Rational64::new(2, 3)).unwrap_err();
        match err {
            Error::BifurcationValue { offending, .. } => {
                assert_eq!(offending, vec![(1, 2), (2, 1)])
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn float_bifurcation_detected() {
        let s = periodic(&[1.0, 3.0]);
        let err = effective_velocity(&s, 2.0 / 3.0).unwrap_err();
        assert!(err.is_degenerate());
        assert!(effective_velocity(&s, 2.0 / 3.0 * (1.0 + 1e-7)).is_ok());
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("9/10").unwrap(), Rational64::new(9, 10));
        assert_eq!(parse_rational("-1.25").unwrap(), Rational64::new(-5, 4));
        assert_eq!(parse_rational("3").unwrap(), Rational64::from_integer(3));
        assert!(parse_rational("x").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn bifurcation_lists() {
        let b = bifurcation_values(&periodic(&[1.0, 3.0]), 2).unwrap();
        assert_eq!(b.len(), 3);
        for (x, y) in b.iter().zip([2.0, 2.0 / 3.0, 2.0 / 9.0]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(bifurcation_values(&Schedule::constant(2.0).unwrap(), 1).unwrap(), vec![1.0]);
        assert_eq!(bifurcation_values(&periodic(&[1.0, 2.0]), 1).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn bifurcations_are_staircase_jumps() {
        let s = periodic(&[1.0, 3.0]);
        for g in bifurcation_values(&s, 4).unwrap() {
            let below = effective_velocity(&s, g * (1.0 - 1e-6)).unwrap();
            let above = effective_velocity(&s, g * (1.0 + 1e-6)).unwrap();
            assert!(below - above > 0.1 * g, "no jump at {g}");
        }
    }

    #[test]
    fn sup_velocity_cases() {
        assert_eq!(sup_velocity(1.0, 3.0).unwrap(), (1.0, 2.0));
        let (v, g) = sup_velocity(2.0, 3.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15 && (g - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(sup_velocity(1.0, 2.0).unwrap().0, 1.0);
        assert!(sup_velocity(3.0, 3.0).is_err());
    }

    #[test]
    fn pinning_fraction_examples() {
        let tau = 0.1;
        for (sched, expected) in [
            (Schedule::constant(3.0).unwrap(), 0.0),
            (Schedule::constant(1.0).unwrap(), 1.0),
            (periodic(&[1.0, 3.0]), 0.5),
        ] {
            let mut cfg = LatticeFlowConfig::new(1.0, tau, sched.clone());
            cfg.horizon = 1.0;
            let traj = run_lattice(&cfg).unwrap();
            let m = pinning_fraction(&traj, &sched, 1.0, 1.0).unwrap();
            assert!((m - expected).abs() < 1e-12, "{m} vs {expected}");
        }
    }

    #[test]
    fn residue_golden_values() {
        let pat = ResiduePattern::new(3, vec![0, 1]).unwrap();
        let v = residue_flow_velocity(&pat, &periodic(&[1.0, 2.0]), 0.7).unwrap();
        assert!((v - 1.05).abs() < 1e-12);
        let v = residue_flow_velocity(&pat, &periodic(&[1.0, 1.0, 2.0, 2.0]), 0.7).unwrap();
        assert!((v - 0.525).abs() < 1e-12);
        let v = residue_flow_velocity(&ResiduePattern::full(), &periodic(&[1.0, 3.0]), 0.9).unwrap();
        assert!((v - 0.45).abs() < 1e-12);
    }

    #[test]
    fn staircase_sweep_nudges() {
        let s = periodic(&[1.0, 3.0]);
        let rows = staircase_sweep(&s, &[2.0 / 3.0, 3.0, 1e-4]).unwrap();
        assert!(rows[0].gamma > 2.0 / 3.0 && !rows[0].note.is_empty());
        assert!(rows[1].pinned && rows[1].inv_a_gamma == 0.0);
        assert!((rows[2].inv_a_gamma - 2.0 / 3.0).abs() < 1e-3);
        assert!(rows[2].note.is_empty());
        let csv = staircase_table(&rows).to_csv_string();
        assert!(csv.starts_with("gamma,inv_a_gamma,inv_a_star,pinned_flag,note\n"));
    }

    #[test]
    fn config_json_defaults() {
        let cfg: LatticeFlowConfig =
            serde_json::from_str(r#"{"gamma": 0.9, "schedule": {"kind": "periodic", "values": [1, 3]}}"#)
                .unwrap();
        assert_eq!(cfg.tau, 1e-3);
        assert_eq!(cfg.horizon, 1.0);
        assert!(cfg.pattern.is_full());
        let bad = serde_json::from_str::<LatticeFlowConfig>(r#"{"gamma": 1, "schedule": {"kind": "constant", "value": 1}, "typo": 1}"#);
        assert!(bad.is_err());
    }
}
