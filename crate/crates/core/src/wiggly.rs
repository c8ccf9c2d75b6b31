//! Perturbed minimizing movements along `φ_ε(u) = εW(u/ε) + Tu`.
//!
//! With `ε = γτ` and `y = u/ε` the scheme becomes the `τ`-free recursion
//!
//! ```text
//! y_n ∈ argmin_y  W(y) + T y + (a_n γ / 2) (y - y_{n-1})²
//! ```
//!
//! whose long-run drift `f_γ(T, {a_n}) = lim (y_0 - y_n)/n` gives the limit
//! motion `u(t) = u_0 - γ f_γ t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minimize::minimize_on_window;
use crate::output::{num, Table};
use crate::perturbation::Schedule;
use crate::potential::Potential;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverTolerances {
    /// Grid spacing is `1 / (grid_factor · (lip W' + aγ))`; at least 4.
    pub grid_factor: f64,
    /// Relative bisection tolerance for stationary points.
    pub refine_tol: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        SolverTolerances {
            grid_factor: 4.0,
            refine_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WigglyConfig {
    #[serde(rename = "T", alias = "tilt")]
    pub tilt: f64,
    pub gamma: f64,
    pub schedule: Schedule,
    #[serde(default)]
    pub y0: f64,
    #[serde(default)]
    pub potential: Potential,
    /// Time step used only to unrescale, `u_n = γτ y_n`.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub solver: SolverTolerances,
}

fn default_tau() -> f64 {
    1e-3
}

impl WigglyConfig {
    pub fn new(tilt: f64, gamma: f64, schedule: Schedule) -> Self {
        WigglyConfig {
            tilt,
            gamma,
            schedule,
            y0: 0.0,
            potential: Potential::Cosine,
            tau: default_tau(),
            solver: SolverTolerances::default(),
        }
    }

    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        for (field, v) in [("T", self.tilt), ("gamma", self.gamma), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                out.push((field, format!("must be positive and finite, got {v}")));
            }
        }
        if !self.y0.is_finite() {
            out.push(("y0", "must be finite".to_string()));
        }
        if !(self.solver.grid_factor >= 4.0) {
            out.push(("solver.grid_factor", "must be at least 4".to_string()));
        }
        if !(self.solver.refine_tol > 0.0 && self.solver.refine_tol <= 1e-6) {
            out.push(("solver.refine_tol", "must lie in (0, 1e-6]".to_string()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some((field, reason)) => Err(Error::invalid(field, reason)),
            None => Ok(()),
        }
    }

    fn with_tilt(&self, tilt: f64) -> Self {
        WigglyConfig {
            tilt,
            ..self.clone()
        }
    }
}

/// Global minimizer of the rescaled step from `y_prev` with coefficient `a`.
pub fn rescaled_step(y_prev: f64, a: f64, cfg: &WigglyConfig) -> Result<f64> {
    let w = &cfg.potential;
    let t = cfg.tilt;
    let k = a * cfg.gamma;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid("a_n", "a_n γ must be positive"));
    }
    // stationary points satisfy k (y - y_prev) = -(T + W'(y)) with
    // |W'| ≤ 1, so they all lie in this bracket; the grid then has at most
    // 2 grid_factor (lip/k + 1) cells whatever the size of k
    let spacing = 1.0 / (cfg.solver.grid_factor * (w.derivative_lipschitz() + k));
    let lo = y_prev - (t + 1.0) / k - 2.0 * spacing;
    let hi = y_prev + (1.0 - t) / k + 2.0 * spacing;
    let m = minimize_on_window(
        |y| w.value(y) + t * y + 0.5 * k * (y - y_prev).powi(2),
        |y| w.derivative(y) + t + k * (y - y_prev),
        lo,
        hi,
        spacing,
        cfg.solver.refine_tol,
    );
    if let Some(other) = m.tie() {
        let (lower, upper) = if other.x < m.best.x {
            (other.x, m.best.x)
        } else {
            (m.best.x, other.x)
        };
        return Err(Error::Bifurcation { lower, upper });
    }
    Ok(m.best.x)
}

/// `y_0, ..., y_steps` of the rescaled recursion.
pub fn run_rescaled(cfg: &WigglyConfig, steps: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut ys = Vec::with_capacity(steps + 1);
    let mut y = cfg.y0;
    ys.push(y);
    for n in 1..=steps {
        y = rescaled_step(y, cfg.schedule.at_unchecked(n), cfg).map_err(|e| e.at_step(n))?;
        ys.push(y);
    }
    Ok(ys)
}

/// First `(n, k)` with `y_{n+k} > y_{n-1} + 1 + slack`, if any.
pub fn well_confinement_violation(ys: &[f64], slack: f64) -> Option<(usize, usize)> {
    // running maximum from the right: y_{n+k} for k ≥ 0
    let mut suffix_max = vec![f64::NEG_INFINITY; ys.len() + 1];
    for i in (0..ys.len()).rev() {
        suffix_max[i] = suffix_max[i + 1].max(ys[i]);
    }
    (1..ys.len()).find_map(|n| {
        (suffix_max[n] > ys[n - 1] + 1.0 + slack).then(|| {
            let k = (n..ys.len())
                .find(|&j| ys[j] > ys[n - 1] + 1.0 + slack)
                .expect("suffix max is attained")
                - n;
            (n, k)
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEstimate {
    pub value: f64,
    /// Half-width from the block sandwich `y_i + y_{kN} - 1 ≤ y_{kN+i} ≤ y_i + y_{kN} + 1`.
    pub bound: f64,
    pub burn_in: usize,
    pub steps: usize,
}

/// `(y_m - y_n)/(n - m)` with `m = 100 N`; `n` defaults to `10⁴ N`.
pub fn homogenized_velocity(cfg: &WigglyConfig, n_steps: Option<usize>) -> Result<VelocityEstimate> {
    let period = cfg.schedule.period_values()?.len();
    let n = n_steps.unwrap_or(10_000 * period);
    let m = 100 * period;
    if n % period != 0 {
        return Err(Error::invalid(
            "n_steps",
            format!("{n} is not a multiple of the period {period}"),
        ));
    }
    if n <= m {
        return Err(Error::invalid("n_steps", format!("must exceed the burn-in {m}")));
    }
    let ys = run_rescaled(cfg, n)?;
    let span = (n - m) as f64;
    Ok(VelocityEstimate {
        value: (ys[m] - ys[n]) / span,
        bound: 2.0 / span,
        burn_in: m,
        steps: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub gamma: f64,
    pub alpha: f64,
    pub period: usize,
    pub threshold: f64,
    pub tol: f64,
    /// Steps per pinning test.
    pub steps: usize,
}

impl ThresholdResult {
    pub fn table(rows: &[ThresholdResult]) -> Table {
        let mut t = Table::new(["gamma", "alpha", "N", "threshold", "tol", "steps"]);
        for r in rows {
            t.push(vec![
                num(r.gamma),
                num(r.alpha),
                r.period.to_string(),
                num(r.threshold),
                num(r.tol),
                r.steps.to_string(),
            ]);
        }
        t
    }
}

const PIN_SLACK: f64 = 1e-6;

/// Whether the orbit from `cfg.y0` stays within one well for `steps` steps.
pub fn is_pinned(cfg: &WigglyConfig, steps: usize) -> Result<bool> {
    let mut y = cfg.y0;
    for n in 1..=steps {
        y = rescaled_step(y, cfg.schedule.at_unchecked(n), cfg).map_err(|e| e.at_step(n))?;
        if cfg.y0 - y >= 1.0 + PIN_SLACK {
            return Ok(false);
        }
    }
    Ok(true)
}

fn is_pinned_robust(cfg: &WigglyConfig, steps: usize) -> Result<bool> {
    // a tie at this exact tilt is not informative; probe a neighbour
    let mut tilt = cfg.tilt;
    for _ in 0..8 {
        match is_pinned(&cfg.with_tilt(tilt), steps) {
            Err(e) if e.is_degenerate() => tilt *= 1.0 + 1e-9,
            other => return other,
        }
    }
    is_pinned(&cfg.with_tilt(tilt), steps)
}

/// `T_γ({a_n}) = sup{T : f_γ(T) = 0}` by bisection on the pinning test.
///
/// `cfg.tilt` is ignored. `tol` is the final bracket width.
pub fn pinning_threshold(cfg: &WigglyConfig, t_max: f64, tol: f64) -> Result<ThresholdResult> {
    cfg.with_tilt(1.0).validate()?;
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::invalid("T_max", "must be positive"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let period = cfg.schedule.period_values()?.len();
    let steps = 1000 * period;
    if is_pinned_robust(&cfg.with_tilt(t_max), steps)? {
        return Err(Error::IncreaseTMax { t_max });
    }
    let (mut lo, mut hi) = (0.0, t_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if is_pinned_robust(&cfg.with_tilt(mid), steps)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThresholdResult {
        gamma: cfg.gamma,
        alpha: cfg.schedule.min_alpha(),
        period,
        threshold: 0.5 * (lo + hi),
        tol,
        steps,
    })
}

const FAST_TARGET: f64 = 1e-9;
const FAST_REFUSE: f64 = 1e-6;

/// Adaptive double-exponential quadrature: pieces whose error estimate
/// exceeds their share of `abs_tol` are bisected.
fn adaptive_integral<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, abs_tol: f64, depth: u32) -> (f64, f64) {
    let out = quadrature::double_exponential::integrate(f, a, b, abs_tol);
    if out.error_estimate <= abs_tol || depth == 0 {
        return (out.integral, out.error_estimate);
    }
    let mid = 0.5 * (a + b);
    let (l, el) = adaptive_integral(f, a, mid, 0.5 * abs_tol, depth - 1);
    let (r, er) = adaptive_integral(f, mid, b, 0.5 * abs_tol, depth - 1);
    (l + r, el + er)
}

/// `f(T) = (∫_0^1 ds / (T + W'(s)))⁻¹` for `T > 1`, and 0 otherwise.
pub fn fast_limit_velocity(t: f64, potential: &Potential) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("T", "must be positive"));
    }
    if t <= 1.0 {
        return Ok(0.0);
    }
    if t <= 1.0 + 1e-9 {
        return Err(Error::NearSingular { t });
    }
    // one period starting at the minimum of W', so the peak of the
    // integrand sits at both endpoints
    let s0 = potential.argmin_derivative();
    let g = |s: f64| 1.0 / (t + potential.derivative(s));
    // the integral is at least 1/(T+1)
    let scale = 1.0 / (t + 1.0);
    let (value, err) = adaptive_integral(g, s0, s0 + 1.0, FAST_TARGET * scale, 40);
    let rel = err / value.abs();
    if !(rel <= FAST_REFUSE) {
        return Err(Error::Quadrature {
            target: FAST_TARGET,
            achieved: rel,
        });
    }
    Ok(1.0 / value)
}

/// The two fast-regime limits sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FastLimitCurves {
    pub t: Vec<f64>,
    /// `u⁰(t) = u_0 - T t / a*`
    pub slow: Vec<f64>,
    /// `u^∞(t) = u_0 - f(T) t / a*`
    pub fast: Vec<f64>,
}

impl FastLimitCurves {
    pub fn table(&self) -> Table {
        let mut tab = Table::new(["t", "u_zero", "u_infinity"]);
        for i in 0..self.t.len() {
            tab.push(vec![num(self.t[i]), num(self.slow[i]), num(self.fast[i])]);
        }
        tab
    }
}

pub fn fast_limit_curves(
    t_tilt: f64,
    schedule: &Schedule,
    potential: &Potential,
    u0: f64,
    horizon: f64,
    samples: usize,
) -> Result<FastLimitCurves> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon", "must be positive"));
    }
    if samples < 2 {
        return Err(Error::invalid("samples", "need at least 2"));
    }
    let inv_a_star = 1.0 / schedule.harmonic_limit()?;
    let f = fast_limit_velocity(t_tilt, potential)?;
    let t: Vec<f64> = (0..samples)
        .map(|i| horizon * i as f64 / (samples - 1) as f64)
        .collect();
    Ok(FastLimitCurves {
        slow: t.iter().map(|&s| u0 - t_tilt * s * inv_a_star).collect(),
        fast: t.iter().map(|&s| u0 - f * s * inv_a_star).collect(),
        t,
    })
}

/// Affine limit `u(t) = u_0 - γ f_γ t` plus the unrescaled orbit at the
/// reference step `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitMotion {
    pub intercept: f64,
    pub slope: f64,
    pub velocity: VelocityEstimate,
    pub eps: f64,
    /// `(nτ, ε y_n)` for `n = 0..=⌈horizon/τ⌉`.
    pub samples: Vec<(f64, f64)>,
}

impl LimitMotion {
    pub fn table(&self) -> Table {
        let mut tab = Table::new(["t", "u_discrete", "u_limit"]);
        for &(t, u) in &self.samples {
            tab.push(vec![num(t), num(u), num(self.intercept + self.slope * t)]);
        }
        tab
    }
}

pub fn limit_motion(cfg: &WigglyConfig, horizon: f64) -> Result<LimitMotion> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon", "must be positive"));
    }
    let velocity = homogenized_velocity(cfg, None)?;
    let eps = cfg.gamma * cfg.tau;
    let steps = crate::scheme::step_count(horizon, cfg.tau);
    let ys = run_rescaled(cfg, steps)?;
    let samples = ys
        .iter()
        .enumerate()
        .map(|(n, &y)| (n as f64 * cfg.tau, eps * y))
        .collect();
    Ok(LimitMotion {
        intercept: eps * cfg.y0,
        slope: -cfg.gamma * velocity.value,
        velocity,
        eps,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(t: f64, gamma: f64, values: &[f64]) -> WigglyConfig {
        WigglyConfig::new(t, gamma, Schedule::periodic(values.to_vec()).unwrap())
    }

    #[test]
    fn step_is_stationary_global_minimizer() {
        let c = cfg(0.5, 10.0, &[1.0]);
        let y = rescaled_step(0.0, 1.0, &c).unwrap();
        assert!((-0.35..=0.0).contains(&y), "{y}");
        let residual = Potential::Cosine.derivative(y) + 0.5 + 10.0 * y;
        assert!(residual.abs() <= 1e-10, "{residual}");
    }

    #[test]
    fn large_dissipation_pins() {
        let c = cfg(3.0, 1e9, &[1.0]);
        let y = rescaled_step(0.3, 1.0, &c).unwrap();
        assert!((y - 0.3).abs() < 1e-8);
    }

    #[test]
    fn integer_shift_equivariance() {
        let c = cfg(1.3, 0.7, &[1.0, 2.5]);
        for y in [-0.4, 0.1, 0.77] {
            for l in [-3.0, 1.0, 5.0] {
                let a = rescaled_step(y, 1.0, &c).unwrap();
                let b = rescaled_step(y + l, 1.0, &c).unwrap();
                assert!((b - a - l).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fast_limit_values() {
        let w = Potential::Cosine;
        assert!((fast_limit_velocity(2.0, &w).unwrap() - 3f64.sqrt()).abs() < 1e-9);
        assert_eq!(fast_limit_velocity(0.8, &w).unwrap(), 0.0);
        let big = fast_limit_velocity(1e3, &w).unwrap();
        assert!((big / 1e3 - 1.0).abs() < 1e-3);
        assert!(matches!(
            fast_limit_velocity(1.0 + 1e-10, &w),
            Err(Error::NearSingular { .. })
        ));
        for t in [1.0 + 1e-6, 1.01, 1.5, 4.0] {
            let f = fast_limit_velocity(t, &w).unwrap();
            let exact = (t * t - 1.0f64).sqrt();
            assert!((f - exact).abs() <= 1e-8 * exact.max(1e-3), "T={t}: {f} vs {exact}");
        }
    }

    #[test]
    fn fast_limit_curves_examples() {
        let c = fast_limit_curves(2.0, &Schedule::constant(1.0).unwrap(), &Potential::Cosine, 0.0, 1.0, 11)
            .unwrap();
        assert!((c.slow[10] + 2.0).abs() < 1e-15);
        assert!((c.fast[10] + 3f64.sqrt()).abs() < 1e-9);
        let p = fast_limit_curves(0.5, &Schedule::periodic(vec![1.0, 3.0]).unwrap(), &Potential::Cosine, 0.2, 1.0, 5)
            .unwrap();
        assert!(p.fast.iter().all(|&u| u == 0.2));
    }

    #[test]
    fn pinned_below_and_moving_above() {
        let v = homogenized_velocity(&cfg(0.3, 1.0, &[1.0]), Some(2_000)).unwrap();
        assert!(v.value.abs() <= v.bound);
        let v = homogenized_velocity(&cfg(2.0, 1.0, &[1.0]), Some(2_000)).unwrap();
        assert!(v.value > 0.5);
    }

    #[test]
    fn constant_schedule_scales_gamma() {
        let a = homogenized_velocity(&cfg(1.2, 1.0, &[2.0]), Some(5_000)).unwrap();
        let b = homogenized_velocity(&cfg(1.2, 2.0, &[1.0]), Some(5_000)).unwrap();
        assert!((a.value - b.value).abs() <= 2.0 * (a.bound + b.bound));
    }

    #[test]
    fn threshold_is_below_one_and_increases_with_dissipation() {
        let base = cfg(1.0, 1.0, &[1.0]);
        let lo = pinning_threshold(&base, 3.0, 1e-2).unwrap();
        let hi = pinning_threshold(&cfg(1.0, 20.0, &[1.0]), 3.0, 1e-2).unwrap();
        assert!(lo.threshold < hi.threshold + 1e-2);
        assert!(hi.threshold <= 1.0 + 1e-2);
        assert_eq!(lo.steps, 1000);
        let err = pinning_threshold(&base, 0.01, 1e-3).unwrap_err();
        assert!(matches!(err, Error::IncreaseTMax { .. }));
    }

    #[test]
    fn limit_motion_matches_velocity() {
        let mut c = cfg(1.5, 2.0, &[1.0, 2.0]);
        c.tau = 1e-3;
        let m = limit_motion(&c, 2.0).unwrap();
        let u1 = m.samples[1000].1;
        let u2 = m.samples[2000].1;
        let window = 1000.0;
        assert!(((u2 - u1) - m.slope).abs() <= 3.0 * c.gamma / window);
    }

    #[test]
    fn well_confinement_checker() {
        assert_eq!(well_confinement_violation(&[0.0, -0.5, 0.4, -1.0], 0.0), None);
        assert_eq!(well_confinement_violation(&[0.0, -0.5, 0.6], 0.0), Some((2, 0)));
    }

    #[test]
    fn config_json() {
        let c: WigglyConfig = serde_json::from_str(
            r#"{"T": 1.2, "gamma": 1, "schedule": {"kind": "periodic", "values": [1, 2]}}"#,
        )
        .unwrap();
        assert_eq!(c.tilt, 1.2);
        assert_eq!(c.potential, Potential::Cosine);
        assert_eq!(c.solver, SolverTolerances::default());
    }
}
