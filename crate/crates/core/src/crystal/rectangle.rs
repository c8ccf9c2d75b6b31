//! Side-length recursion for coordinate rectangles and its regimes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::{num, Table};
use crate::perturbation::Schedule;
use crate::scheme::step_count;
use crate::BIFURCATION_REL_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectangleState {
    pub l1: f64,
    pub l2: f64,
}

impl RectangleState {
    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        if !(l1 > 0.0 && l1.is_finite()) {
            return Err(Error::invalid("L1", "must be positive"));
        }
        if !(l2 > 0.0 && l2.is_finite()) {
            return Err(Error::invalid("L2", "must be positive"));
        }
        Ok(RectangleState { l1, l2 })
    }

    pub fn is_alive(&self) -> bool {
        self.l1 > 0.0 && self.l2 > 0.0
    }

    pub fn area(&self) -> f64 {
        self.l1 * self.l2
    }

    pub fn swapped(&self) -> Self {
        RectangleState {
            l1: self.l2,
            l2: self.l1,
        }
    }
}

/// Handling of floor arguments within `10⁻⁹` of an integer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegeneratePolicy {
    #[default]
    Reject,
    /// Take the plain floor of the (rounded) argument.
    Floor,
}

fn near_integer(x: f64) -> Option<f64> {
    let r = x.round();
    ((x - r).abs() <= BIFURCATION_REL_TOL * x.abs().max(1.0)).then_some(r)
}

/// `⌊2/(γ a L)⌋`, the number of layers peeled per step from each of the two
/// sides of length `L`.
pub fn layer_count(gamma: f64, a: f64, l: f64, policy: DegeneratePolicy) -> Result<i64> {
    let x = 2.0 / (gamma * a * l);
    if let Some(r) = near_integer(x) {
        return match policy {
            DegeneratePolicy::Reject => Err(Error::Degenerate(format!(
                "2/(γ a L) = {x} is within 1e-9 of the integer {r} (γ = {gamma}, a = {a}, L = {l})"
            ))),
            DegeneratePolicy::Floor => Ok(r as i64),
        };
    }
    Ok(x.floor() as i64)
}

/// One simultaneous update of both sides; floors read the previous state.
pub fn rectangle_step(
    state: RectangleState,
    a: f64,
    gamma: f64,
    tau: f64,
    policy: DegeneratePolicy,
) -> Result<RectangleState> {
    let k1 = layer_count(gamma, a, state.l2, policy)?;
    let k2 = layer_count(gamma, a, state.l1, policy)?;
    Ok(RectangleState {
        l1: state.l1 - 2.0 * gamma * tau * k1 as f64,
        l2: state.l2 - 2.0 * gamma * tau * k2 as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RectangleTrajectory {
    pub tau: f64,
    pub states: Vec<RectangleState>,
    /// First step at which a side reached zero or below.
    pub extinct_at: Option<usize>,
}

impl RectangleTrajectory {
    pub fn table(&self, regime: Option<Regime>) -> Table {
        let mut t = Table::new(["t", "L1", "L2", "regime"]);
        let label = regime.map(|r| r.label()).unwrap_or("");
        for (n, s) in self.states.iter().enumerate() {
            t.push(vec![
                num(n as f64 * self.tau),
                num(s.l1.max(0.0)),
                num(s.l2.max(0.0)),
                label.to_string(),
            ]);
        }
        t
    }
}

/// Iterate [`rectangle_step`] over `⌈horizon/τ⌉` steps or until extinction.
pub fn run_rectangle(
    state0: RectangleState,
    schedule: &Schedule,
    gamma: f64,
    tau: f64,
    horizon: f64,
    policy: DegeneratePolicy,
) -> Result<RectangleTrajectory> {
    if !(gamma > 0.0 && tau > 0.0 && horizon > 0.0) {
        return Err(Error::invalid("gamma/tau/horizon", "must be positive"));
    }
    let steps = step_count(horizon, tau);
    let mut states = vec![state0];
    let mut s = state0;
    let mut extinct_at = None;
    for n in 1..=steps {
        s = rectangle_step(s, schedule.at_unchecked(n), gamma, tau, policy)
            .map_err(|e| e.at_step(n))?;
        states.push(s);
        if !s.is_alive() {
            extinct_at = Some(n);
            break;
        }
    }
    Ok(RectangleTrajectory {
        tau,
        states,
        extinct_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    TotalPinning,
    Shrinking,
    PartialPinningThenShrinking,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::TotalPinning => "total_pinning",
            Regime::Shrinking => "shrinking",
            Regime::PartialPinningThenShrinking => "partial_pinning",
        }
    }
}

/// Regime of the limit motion from `state0`, with threshold `2/(γα)`.
pub fn classify_regime(state0: RectangleState, schedule: &Schedule, gamma: f64) -> Result<Regime> {
    let alpha = schedule.min_alpha();
    let c = 2.0 / (gamma * alpha);
    for (name, l) in [("L1", state0.l1), ("L2", state0.l2)] {
        if (l - c).abs() <= BIFURCATION_REL_TOL * c {
            return Err(Error::Degenerate(format!(
                "{name} = {l} equals the pinning threshold 2/(γα) = {c}"
            )));
        }
        for a in schedule.period_values()? {
            let x = 2.0 / (gamma * a * l);
            if near_integer(x).is_some() {
                return Err(Error::Degenerate(format!(
                    "2/(γ a L) = {x} is integral for a = {a}, {name} = {l}"
                )));
            }
        }
    }
    Ok(match (state0.l1 > c, state0.l2 > c) {
        (true, true) => Regime::TotalPinning,
        (false, false) => Regime::Shrinking,
        _ => Regime::PartialPinningThenShrinking,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(l1: f64, l2: f64) -> RectangleState {
        RectangleState::new(l1, l2).unwrap()
    }

    #[test]
    fn step_examples() {
        let tau = 1e-3;
        let pinned = rectangle_step(st(3.0, 3.0), 1.0, 1.0, tau, DegeneratePolicy::Reject).unwrap();
        assert_eq!(pinned, st(3.0, 3.0));

        // the documented examples sit exactly on integer floor arguments
        assert!(rectangle_step(st(3.0, 1.0), 1.0, 1.0, tau, DegeneratePolicy::Reject)
            .unwrap_err()
            .is_degenerate());
        let partial = rectangle_step(st(3.0, 1.0), 1.0, 1.0, tau, DegeneratePolicy::Floor).unwrap();
        assert!((partial.l1 - (3.0 - 4.0 * tau)).abs() < 1e-15);
        assert_eq!(partial.l2, 1.0);
        let shrink = rectangle_step(st(1.0, 1.0), 1.0, 1.0, tau, DegeneratePolicy::Floor).unwrap();
        assert!((shrink.l1 - (1.0 - 4.0 * tau)).abs() < 1e-15);
        assert_eq!(shrink.l1, shrink.l2);
    }

    #[test]
    fn regimes() {
        let s = Schedule::constant(1.0).unwrap();
        assert_eq!(classify_regime(st(3.0, 3.0), &s, 1.0).unwrap(), Regime::TotalPinning);
        assert_eq!(classify_regime(st(1.5, 1.5), &s, 1.0).unwrap(), Regime::Shrinking);
        assert_eq!(
            classify_regime(st(3.0, 1.5), &s, 1.0).unwrap(),
            Regime::PartialPinningThenShrinking
        );
        assert!(classify_regime(st(2.0, 1.5), &s, 1.0).is_err());
        assert!(classify_regime(st(3.0, 1.0), &s, 1.0).is_err());
    }

    #[test]
    fn square_stays_square_and_sides_never_grow() {
        let s = Schedule::periodic(vec![1.0, 2.7, 0.6]).unwrap();
        let traj = run_rectangle(st(0.83, 0.83), &s, 1.3, 1e-3, 1.0, DegeneratePolicy::Floor).unwrap();
        for w in traj.states.windows(2) {
            assert_eq!(w[1].l1, w[1].l2);
            assert!(w[1].l1 <= w[0].l1);
        }
        assert!(traj.extinct_at.is_some());
    }

    #[test]
    fn exchange_symmetry() {
        let s = Schedule::periodic(vec![1.0, 2.0]).unwrap();
        let a = run_rectangle(st(1.7, 0.9), &s, 0.8, 1e-3, 0.5, DegeneratePolicy::Floor).unwrap();
        let b = run_rectangle(st(0.9, 1.7), &s, 0.8, 1e-3, 0.5, DegeneratePolicy::Floor).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert_eq!(*x, y.swapped());
        }
    }

    #[test]
    fn tau_small_against_eps_pins() {
        // τ = ε² so that γ = 1/ε: floors vanish for moderate sides
        let eps = 0.01;
        let gamma = eps / (eps * eps);
        let s = Schedule::periodic(vec![1.0, 3.0]).unwrap();
        let step = rectangle_step(st(0.5, 0.7), 1.0, gamma, eps * eps, DegeneratePolicy::Reject).unwrap();
        assert_eq!(step, st(0.5, 0.7));
        let traj = run_rectangle(st(0.5, 0.7), &s, gamma, eps * eps, 1e-2, DegeneratePolicy::Reject).unwrap();
        assert!(traj.states.iter().all(|x| *x == st(0.5, 0.7)));
    }
}
