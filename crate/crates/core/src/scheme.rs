//! Generic perturbed Euler iterated minimization for scalar problems.
//!
//! Each step solves
//!
//! ```text
//! u_n ∈ argmin_u  φ(u) + a_n (u - u_{n-1})² / (2τ)
//! ```
//!
//! globally over the energy's domain (the real line, `εℤ`, or a residue
//! sub-lattice `ε(pℤ + R)`). The search is confined to the window where the
//! quadratic pull can balance the slope of `φ`, which is finite and
//! complete once every energy declares a slope bound.

use std::cell::Cell;
use std::io::Write;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minimize::minimize_on_window;
use crate::output::{num, Table};
use crate::perturbation::Schedule;
use crate::potential::Potential;
use crate::TIE_REL_TOL;

/// Admissible residues `R ⊆ {0..p-1}` of a sub-lattice `ε(pℤ + R)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPattern")]
pub struct ResiduePattern {
    p: u32,
    residues: Vec<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPattern {
    p: u32,
    residues: Vec<u32>,
}

impl TryFrom<RawPattern> for ResiduePattern {
    type Error = Error;
    fn try_from(r: RawPattern) -> Result<Self> {
        ResiduePattern::new(r.p, r.residues)
    }
}

impl Default for ResiduePattern {
    fn default() -> Self {
        ResiduePattern::full()
    }
}

impl ResiduePattern {
    pub fn new(p: u32, mut residues: Vec<u32>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("pattern.p", "must be at least 1"));
        }
        residues.sort_unstable();
        residues.dedup();
        if residues.is_empty() {
            return Err(Error::invalid("pattern.residues", "must be nonempty"));
        }
        if let Some(r) = residues.iter().find(|&&r| r >= p) {
            return Err(Error::invalid(
                "pattern.residues",
                format!("residue {r} is not below p = {p}"),
            ));
        }
        Ok(ResiduePattern { p, residues })
    }

    /// The whole lattice `εℤ`.
    pub fn full() -> Self {
        ResiduePattern {
            p: 1,
            residues: vec![0],
        }
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn residues(&self) -> &[u32] {
        &self.residues
    }

    pub fn is_full(&self) -> bool {
        self.residues.len() == self.p as usize
    }

    pub fn admits(&self, index: i64) -> bool {
        let r = index.rem_euclid(self.p as i64) as u32;
        self.residues.binary_search(&r).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Line,
    /// `ε(pℤ + R)`; the full lattice `εℤ` is `p = 1, R = {0}`.
    Lattice { eps: f64, pattern: ResiduePattern },
}

impl Domain {
    pub fn lattice(eps: f64) -> Self {
        Domain::Lattice {
            eps,
            pattern: ResiduePattern::full(),
        }
    }

    /// Lattice index of `u`, if `u` is (up to rounding) a point of the
    /// domain.
    pub fn index_of(&self, u: f64) -> Option<i64> {
        match self {
            Domain::Line => None,
            Domain::Lattice { eps, pattern } => {
                let x = u / eps;
                let i = x.round();
                ((x - i).abs() <= 1e-9 * i.abs().max(1.0) && pattern.admits(i as i64))
                    .then_some(i as i64)
            }
        }
    }

    pub fn contains(&self, u: f64) -> bool {
        match self {
            Domain::Line => u.is_finite(),
            Domain::Lattice { .. } => self.index_of(u).is_some(),
        }
    }
}

/// A proper energy `φ: ℝ → (-∞, +∞]`, finite exactly on its domain.
pub trait Energy: Send + Sync {
    fn domain(&self) -> Domain;

    /// `φ(u)` for `u` in the domain.
    fn value(&self, u: f64) -> f64;

    /// Bound on `|φ'|` over every point a step from `u_prev` can reach.
    /// On lattices this bounds difference quotients instead.
    fn slope_bound(&self, u_prev: f64) -> f64;

    /// `φ'`, required for whole-line domains.
    fn derivative(&self, _u: f64) -> f64 {
        f64::NAN
    }

    /// Lipschitz constant of `φ'` (whole-line domains).
    fn curvature_bound(&self) -> f64 {
        0.0
    }

    /// `φ(u)` with `+∞` off the domain.
    fn extended_value(&self, u: f64) -> f64 {
        if self.domain().contains(u) {
            self.value(u)
        } else {
            f64::INFINITY
        }
    }
}

/// `φ(u) = slope · u` on any domain; `slope = -1` is the descent
/// prototype on lattices.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEnergy {
    pub slope: f64,
    pub domain: Domain,
}

impl LinearEnergy {
    pub fn descent(domain: Domain) -> Self {
        LinearEnergy {
            slope: -1.0,
            domain,
        }
    }
}

impl Energy for LinearEnergy {
    fn domain(&self) -> Domain {
        self.domain.clone()
    }
    fn value(&self, u: f64) -> f64 {
        self.slope * u
    }
    fn slope_bound(&self, _: f64) -> f64 {
        self.slope.abs()
    }
    fn derivative(&self, _: f64) -> f64 {
        self.slope
    }
}

/// `φ(u) = k (u - c)² / 2` on the line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticEnergy {
    pub stiffness: f64,
    pub center: f64,
}

impl Energy for QuadraticEnergy {
    fn domain(&self) -> Domain {
        Domain::Line
    }
    fn value(&self, u: f64) -> f64 {
        0.5 * self.stiffness * (u - self.center).powi(2)
    }
    fn slope_bound(&self, u_prev: f64) -> f64 {
        // the minimizer lies between the center and u_prev
        self.stiffness.abs() * (u_prev - self.center).abs()
    }
    fn derivative(&self, u: f64) -> f64 {
        self.stiffness * (u - self.center)
    }
    fn curvature_bound(&self) -> f64 {
        self.stiffness.abs()
    }
}

/// `φ_ε(u) = ε W(u/ε) + T u` on the line.
#[derive(Debug, Clone, PartialEq)]
pub struct WigglyEnergy {
    pub eps: f64,
    pub tilt: f64,
    pub potential: Potential,
}

impl Energy for WigglyEnergy {
    fn domain(&self) -> Domain {
        Domain::Line
    }
    fn value(&self, u: f64) -> f64 {
        self.eps * self.potential.value(u / self.eps) + self.tilt * u
    }
    fn slope_bound(&self, _: f64) -> f64 {
        self.tilt.abs() + 1.0
    }
    fn derivative(&self, u: f64) -> f64 {
        self.potential.derivative(u / self.eps) + self.tilt
    }
    fn curvature_bound(&self) -> f64 {
        self.potential.derivative_lipschitz() / self.eps
    }
}

/// What to do when a step has two global minimizers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    #[default]
    Error,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub minimizer: f64,
    /// Second global minimizer, when the step is a tie.
    pub tie: Option<f64>,
}

/// One global minimization step.
pub fn euler_step<E: Energy + ?Sized>(
    energy: &E,
    u_prev: f64,
    a: f64,
    tau: f64,
) -> Result<StepResult> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid("a_n", format!("{a} must be positive")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", format!("{tau} must be positive")));
    }
    let slope = energy.slope_bound(u_prev);
    if !slope.is_finite() {
        return Err(Error::Diverged { near: u_prev });
    }
    let reach = slope * tau / a;
    let objective = |u: f64| energy.value(u) + a * (u - u_prev).powi(2) / (2.0 * tau);

    match energy.domain() {
        Domain::Line => {
            if reach == 0.0 {
                return Ok(StepResult {
                    minimizer: u_prev,
                    tie: None,
                });
            }
            let pad = 0.1 * reach + 1e-12 * u_prev.abs().max(1.0);
            let (lo, hi) = (u_prev - reach - pad, u_prev + reach + pad);
            let spacing = 1.0 / (4.0 * (energy.curvature_bound() + a / tau));
            let deriv = |u: f64| energy.derivative(u) + a * (u - u_prev) / tau;
            let m = minimize_on_window(objective, deriv, lo, hi, spacing, 1e-12);
            if m.at_boundary {
                return Err(Error::Diverged { near: m.best.x });
            }
            Ok(StepResult {
                minimizer: m.best.x,
                tie: m.tie().map(|c| c.x),
            })
        }
        Domain::Lattice { eps, pattern } => {
            let lo = ((u_prev - reach) / eps).floor() as i64 - 1;
            let hi = ((u_prev + reach) / eps).ceil() as i64 + 1;
            let mut best: Option<(i64, f64)> = None;
            let mut second: Option<(i64, f64)> = None;
            for i in lo..=hi {
                if !pattern.admits(i) {
                    continue;
                }
                let v = objective(i as f64 * eps);
                match best {
                    Some((_, bv)) if v >= bv => {
                        if second.map_or(true, |(_, sv)| v < sv) {
                            second = Some((i, v));
                        }
                    }
                    _ => {
                        second = best;
                        best = Some((i, v));
                    }
                }
            }
            let (bi, bv) = best.ok_or(Error::Diverged { near: u_prev })?;
            // a pattern may leave the window edges inadmissible
            let edge_lo = (lo..=hi).find(|&i| pattern.admits(i));
            let edge_hi = (lo..=hi).rev().find(|&i| pattern.admits(i));
            if Some(bi) == edge_lo || Some(bi) == edge_hi {
                if reach > 0.0 || pattern.p() > 1 {
                    // residue gaps can legitimately push the nearest admissible
                    // point to the padded edge; widen once before giving up
                    return lattice_step_wide(energy, u_prev, a, tau, eps, &pattern, reach);
                }
            }
            let tie = second
                .filter(|&(_, sv)| sv - bv <= TIE_REL_TOL * bv.abs().max(1.0))
                .map(|(si, _)| si as f64 * eps);
            Ok(StepResult {
                minimizer: bi as f64 * eps,
                tie,
            })
        }
    }
}

fn lattice_step_wide<E: Energy + ?Sized>(
    energy: &E,
    u_prev: f64,
    a: f64,
    tau: f64,
    eps: f64,
    pattern: &ResiduePattern,
    reach: f64,
) -> Result<StepResult> {
    let pad = 2 * pattern.p() as i64 + 1;
    let lo = ((u_prev - reach) / eps).floor() as i64 - pad;
    let hi = ((u_prev + reach) / eps).ceil() as i64 + pad;
    let mut cands: Vec<(i64, f64)> = (lo..=hi)
        .filter(|&i| pattern.admits(i))
        .map(|i| {
            let u = i as f64 * eps;
            (i, energy.value(u) + a * (u - u_prev).powi(2) / (2.0 * tau))
        })
        .collect();
    cands.sort_by(|x, y| x.1.total_cmp(&y.1));
    let (bi, bv) = cands[0];
    if bi - lo < pattern.p() as i64 || hi - bi < pattern.p() as i64 {
        return Err(Error::Diverged { near: bi as f64 * eps });
    }
    let tie = cands
        .get(1)
        .filter(|&&(_, sv)| sv - bv <= TIE_REL_TOL * bv.abs().max(1.0))
        .map(|&(si, _)| si as f64 * eps);
    Ok(StepResult {
        minimizer: bi as f64 * eps,
        tie,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieEvent {
    pub step: usize,
    pub lower: f64,
    pub upper: f64,
    pub chosen: f64,
}

/// Discrete orbit `u_0, ..., u_M` on the grid `t_n = nτ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tau: f64,
    pub values: Vec<f64>,
    /// `a_1, ..., a_M` as used by each step.
    pub coefficients: Vec<f64>,
    pub ties: Vec<TieEvent>,
}

impl Trajectory {
    pub fn new(tau: f64, u0: f64) -> Self {
        Trajectory {
            tau,
            values: vec![u0],
            coefficients: Vec::new(),
            ties: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("trajectory is nonempty")
    }

    pub fn push(&mut self, u: f64, a: f64) {
        self.values.push(u);
        self.coefficients.push(a);
    }

    /// Piecewise-constant interpolation `u(t) = u_{⌈t/τ⌉}`, clamped to the
    /// last computed step.
    pub fn at_time(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.values[0];
        }
        let n = (t / self.tau - 1e-9).ceil().max(0.0) as usize;
        self.values[n.min(self.steps())]
    }

    /// `|u_n - u_{n-1}| / τ`, constant on `((n-1)τ, nτ]`, for `n = 1..M`.
    pub fn increments(&self) -> Vec<f64> {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() / self.tau)
            .collect()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(["n", "t", "u", "increment", "a_n"]);
        let inc = self.increments();
        for (n, &u) in self.values.iter().enumerate() {
            let (incr, a) = if n == 0 {
                (num(0.0), String::new())
            } else {
                (num(inc[n - 1]), num(self.coefficients[n - 1]))
            };
            t.push(vec![n.to_string(), num(n as f64 * self.tau), num(u), incr, a]);
        }
        t
    }

    /// CSV with header `n,t,u,increment,a_n`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.table().write_csv(w)
    }
}

/// Number of steps `⌈T/τ⌉` covering the horizon.
pub fn step_count(horizon: f64, tau: f64) -> usize {
    let x = horizon / tau;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

pub(crate) fn resolve_tie(
    step: usize,
    res: StepResult,
    policy: TiePolicy,
    ties: &mut Vec<TieEvent>,
) -> Result<f64> {
    let Some(other) = res.tie else {
        return Ok(res.minimizer);
    };
    let (lower, upper) = if other < res.minimizer {
        (other, res.minimizer)
    } else {
        (res.minimizer, other)
    };
    let chosen = match policy {
        TiePolicy::Error => return Err(Error::Bifurcation { lower, upper }.at_step(step)),
        TiePolicy::Lower => lower,
        TiePolicy::Upper => upper,
    };
    ties.push(TieEvent {
        step,
        lower,
        upper,
        chosen,
    });
    Ok(chosen)
}

/// Iterate [`euler_step`] for `n = 1..⌈T/τ⌉`.
pub fn run_scheme<E: Energy + ?Sized>(
    energy: &E,
    u0: f64,
    schedule: &Schedule,
    tau: f64,
    horizon: f64,
    policy: TiePolicy,
) -> Result<Trajectory> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon", "must be positive"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", "must be positive"));
    }
    if !energy.domain().contains(u0) {
        return Err(Error::invalid("u0", format!("{u0} is outside the energy domain")));
    }
    let steps = step_count(horizon, tau);
    let mut traj = Trajectory::new(tau, u0);
    let mut u = u0;
    for n in 1..=steps {
        let a = schedule.at_unchecked(n);
        let res = euler_step(energy, u, a, tau).map_err(|e| e.at_step(n))?;
        u = resolve_tie(n, res, policy, &mut traj.ties)?;
        traj.push(u, a);
    }
    Ok(traj)
}

/// Both sides of the discrete energy identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceReport {
    /// `½ ∫ a^τ |u'|²`
    pub kinetic: f64,
    /// `½ ∫ (1/a^τ) G²`, by quadrature.
    pub slope: f64,
    pub lhs: f64,
    /// `φ(u_0) - φ(u_M)`
    pub rhs: f64,
    /// `|lhs - rhs| / max(1, |rhs|)`
    pub residual: f64,
}

/// Evaluate the discrete energy identity along `traj`.
///
/// On step `n` the variational interpolant `ũ(δ)` minimizes
/// `φ(u) + a_n |u - u_{n-1}|² / (2δ)` and `G(δ) = a_n |ũ(δ) - u_{n-1}| / δ`.
/// The identity
/// `½∫a|u'|² + ½∫(1/a)G² = φ(u_0) - φ(u_M)` holds exactly for exact
/// minimizers, so the residual measures the quadrature (and solver) error.
/// The `δ`-integral on each step uses `nodes`-point Gauss-Legendre.
pub fn energy_balance<E: Energy + ?Sized>(
    energy: &E,
    traj: &Trajectory,
    nodes: usize,
) -> Result<BalanceReport> {
    let nodes = NonZeroUsize::new(nodes)
        .ok_or_else(|| Error::invalid("quadrature_points", "must be positive"))?;
    let rule = GaussLegendre::new(nodes);
    let tau = traj.tau;
    let mut kinetic = 0.0;
    let mut slope = 0.0;
    for n in 1..=traj.steps() {
        let a = traj.coefficients[n - 1];
        let (prev, cur) = (traj.values[n - 1], traj.values[n]);
        kinetic += a * (cur - prev).powi(2) / (2.0 * tau);

        let failure: Cell<Option<Error>> = Cell::new(None);
        let step_integral = rule.integrate(0.0, tau, |delta| match euler_step(energy, prev, a, delta)
        {
            Ok(r) => a * (r.minimizer - prev).powi(2) / (2.0 * delta * delta),
            Err(e) => {
                failure.set(Some(Error::BalanceQuadrature {
                    step: n,
                    delta,
                    reason: e.to_string(),
                }));
                0.0
            }
        });
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        slope += step_integral;
    }
    let lhs = kinetic + slope;
    let rhs = energy.value(traj.values[0]) - energy.value(traj.last());
    Ok(BalanceReport {
        kinetic,
        slope,
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / rhs.abs().max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn descent(eps: f64) -> LinearEnergy {
        LinearEnergy::descent(Domain::lattice(eps))
    }

    #[test]
    fn lattice_step_moves_one_cell() {
        let r = euler_step(&descent(0.1), 0.0, 1.0, 0.1).unwrap();
        assert_eq!(r.minimizer, 0.1);
        assert!(r.tie.is_none());
    }

    #[test]
    fn quadratic_step_closed_form() {
        let q = QuadraticEnergy {
            stiffness: 1.0,
            center: 0.0,
        };
        let r = euler_step(&q, 1.0, 1.0, 1.0).unwrap();
        assert!((r.minimizer - 0.5).abs() < 1e-11);
    }

    #[test]
    fn half_integer_ratio_is_a_tie() {
        let r = euler_step(&descent(0.1), 0.0, 1.0, 0.05).unwrap();
        let mut pair = [r.minimizer, r.tie.expect("tie flagged")];
        pair.sort_by(f64::total_cmp);
        assert_eq!(pair, [0.0, 0.1]);
    }

    #[test]
    fn tie_policies() {
        let e = descent(0.1);
        let s = Schedule::constant(1.0).unwrap();
        let err = run_scheme(&e, 0.0, &s, 0.05, 0.1, TiePolicy::Error).unwrap_err();
        assert!(matches!(err, Error::Step { step: 1, .. }));
        assert!(err.is_degenerate());
        let lo = run_scheme(&e, 0.0, &s, 0.05, 0.1, TiePolicy::Lower).unwrap();
        assert_eq!(lo.values, vec![0.0, 0.0, 0.0]);
        assert_eq!(lo.ties.len(), 2);
        let up = run_scheme(&e, 0.0, &s, 0.05, 0.1, TiePolicy::Upper).unwrap();
        assert_eq!(up.values.len(), 3);
        assert!((up.last() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn constant_descent_run() {
        let s = Schedule::constant(1.0).unwrap();
        let t = run_scheme(&descent(0.1), 0.0, &s, 0.1, 0.5, TiePolicy::Error).unwrap();
        let expected: Vec<f64> = (0..=5).map(|i| i as f64 * 0.1).collect();
        assert_eq!(t.values, expected);
    }

    #[test]
    fn pinned_run() {
        let s = Schedule::constant(3.0).unwrap();
        let t = run_scheme(&descent(0.1), 0.0, &s, 0.1, 0.5, TiePolicy::Error).unwrap();
        assert!(t.values.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn quadratic_proximal_recursion() {
        let q = QuadraticEnergy {
            stiffness: 1.0,
            center: 0.0,
        };
        let s = Schedule::constant(1.0).unwrap();
        let tau = 0.1;
        let t = run_scheme(&q, 1.0, &s, tau, 1.0, TiePolicy::Error).unwrap();
        for (n, &u) in t.values.iter().enumerate() {
            let exact = (1.0 + tau).powi(-(n as i32));
            assert!((u - exact).abs() < 1e-10, "n={n}: {u} vs {exact}");
        }
    }

    #[test]
    fn off_domain_start_rejected() {
        let s = Schedule::constant(1.0).unwrap();
        assert!(run_scheme(&descent(0.1), 0.05, &s, 0.1, 1.0, TiePolicy::Error).is_err());
    }

    struct Broken;
    impl Energy for Broken {
        fn domain(&self) -> Domain {
            Domain::Line
        }
        fn value(&self, u: f64) -> f64 {
            -u * u
        }
        fn slope_bound(&self, _: f64) -> f64 {
            1.0
        }
        fn derivative(&self, u: f64) -> f64 {
            -2.0 * u
        }
        fn curvature_bound(&self) -> f64 {
            2.0
        }
    }

    #[test]
    fn slope_bound_violation_detected() {
        // -u² with a half-strength penalty is unbounded below
        let err = euler_step(&Broken, 3.0, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
        let mut infinite = QuadraticEnergy {
            stiffness: f64::INFINITY,
            center: 0.0,
        };
        infinite.center = 0.0;
        assert!(matches!(
            euler_step(&infinite, 1.0, 1.0, 1.0),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn residue_lattice_projection() {
        let pat = ResiduePattern::new(3, vec![0, 1]).unwrap();
        let eps = 0.07;
        let gamma = 0.7;
        let tau = eps / gamma;
        let e = LinearEnergy::descent(Domain::Lattice {
            eps,
            pattern: pat,
        });
        // from ε(3k+1) the target (3k+1+1/0.7)ε projects to ε(3k+3)
        for k in [-2i64, 0, 5] {
            let r = euler_step(&e, (3 * k + 1) as f64 * eps, 1.0, tau).unwrap();
            assert_eq!(r.minimizer, (3 * k + 3) as f64 * eps);
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let s = Schedule::periodic(vec![1.0, 3.0]).unwrap();
        let t = run_scheme(&descent(0.1), 0.0, &s, 0.1, 0.2, TiePolicy::Error).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,t,u,increment,a_n");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,0.0000000000000000e0,"));
        assert!(lines[2].ends_with(",1.0000000000000000e0"));
    }

    #[test]
    fn balance_on_quadratic() {
        let q = QuadraticEnergy {
            stiffness: 1.0,
            center: 0.0,
        };
        let s = Schedule::periodic(vec![1.0, 2.5]).unwrap();
        let t = run_scheme(&q, 1.0, &s, 0.1, 0.5, TiePolicy::Error).unwrap();
        let r = energy_balance(&q, &t, 64).unwrap();
        assert!(r.residual <= 1e-3, "{r:?}");
    }

    #[test]
    fn balance_on_pinned_lattice() {
        let s = Schedule::constant(3.0).unwrap();
        let t = run_scheme(&descent(0.1), 0.0, &s, 0.1, 0.5, TiePolicy::Error).unwrap();
        let r = energy_balance(&descent(0.1), &t, 16).unwrap();
        assert_eq!(r.kinetic, 0.0);
        assert_eq!(r.slope, 0.0);
        assert_eq!(r.rhs, 0.0);
    }

    #[test]
    fn balance_residual_decreases_with_nodes() {
        let q = QuadraticEnergy {
            stiffness: 4.0,
            center: 0.0,
        };
        let s = Schedule::constant(0.5).unwrap();
        let t = run_scheme(&q, 1.0, &s, 0.5, 0.5, TiePolicy::Error).unwrap();
        let res: Vec<f64> = [1, 2, 4, 8]
            .iter()
            .map(|&m| energy_balance(&q, &t, m).unwrap().residual)
            .collect();
        for w in res.windows(2) {
            assert!(w[1] < w[0] || w[1] < 1e-12, "{res:?}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn energy_never_increases(
                values in prop::collection::vec(0.2f64..5.0, 1..4),
                u0 in -3.0f64..3.0,
                gamma in 0.5f64..20.0,
                tilt in 0.0f64..3.0,
            ) {
                let tau = 0.01;
                let e = WigglyEnergy { eps: gamma * tau, tilt, potential: Potential::Cosine };
                let s = Schedule::periodic(values).unwrap();
                let t = run_scheme(&e, u0, &s, tau, 0.2, TiePolicy::Lower).unwrap();
                for w in t.values.windows(2) {
                    prop_assert!(e.value(w[1]) <= e.value(w[0]) + 1e-12);
                }
            }

            #[test]
            fn lattice_translation(k in -50i64..50, a in 0.3f64..4.0) {
                let eps = 0.1;
                let tau = 0.13;
                let e = descent(eps);
                let base = euler_step(&e, 0.0, a, tau).unwrap();
                let shifted = euler_step(&e, k as f64 * eps, a, tau).unwrap();
                prop_assume!(base.tie.is_none());
                let d = (shifted.minimizer - base.minimizer) / eps;
                prop_assert!((d - k as f64).abs() < 1e-9);
            }
        }
    }
}
