//! Continuum limits of the rectangle recursion: the piecewise-constant
//! system driven by a periodic schedule, and the flat flow.

use ode_solvers::{Dopri5, System, Vector2};

use super::rectangle::RectangleState;
use crate::error::{Error, Result};
use crate::output::{num, Table};
use crate::perturbation::Schedule;

const MAX_EVENTS: usize = 1_000_000;
const TAIL_REL_TOL: f64 = 1e-9;

/// Piecewise-linear solution; `knots` are the event times and states.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub knots: Vec<(f64, RectangleState)>,
    pub extinction: Option<f64>,
    pub events: usize,
}

impl OdeSolution {
    /// State at time `t`, interpolated between knots and clamped to zero
    /// after extinction.
    pub fn at(&self, t: f64) -> RectangleState {
        let zero = RectangleState { l1: 0.0, l2: 0.0 };
        if let Some(te) = self.extinction {
            if t >= te {
                return zero;
            }
        }
        let k = self.knots.partition_point(|(s, _)| *s <= t);
        if k == 0 {
            return self.knots[0].1;
        }
        let (t0, s0) = self.knots[k - 1];
        if k == self.knots.len() {
            // past the last knot: either pinned, or in the extinction tail
            return match self.extinction {
                Some(te) => lerp(s0, zero, (t - t0) / (te - t0)),
                None => s0,
            };
        }
        let (t1, s1) = self.knots[k];
        lerp(s0, s1, (t - t0) / (t1 - t0))
    }

    pub fn table(&self, times: &[f64]) -> Table {
        let mut t = Table::new(["t", "L1", "L2"]);
        for &s in times {
            let st = self.at(s);
            t.push(vec![num(s), num(st.l1), num(st.l2)]);
        }
        t
    }
}

fn lerp(a: RectangleState, b: RectangleState, w: f64) -> RectangleState {
    let w = w.clamp(0.0, 1.0);
    RectangleState {
        l1: a.l1 + w * (b.l1 - a.l1),
        l2: a.l2 + w * (b.l2 - a.l2),
    }
}

/// Floor taking the right-limit along decreasing `L`: arguments within
/// `10⁻¹²` of an integer count as having reached it.
fn floor_right(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

struct Side<'a> {
    gamma: f64,
    values: &'a [f64],
}

impl Side<'_> {
    /// Rate of change of the side opposite to one of length `l`.
    fn rate(&self, l: f64) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .map(|&a| floor_right(2.0 / (self.gamma * a * l)))
            .sum();
        -2.0 * self.gamma * s / self.values.len() as f64
    }

    /// Largest length below `l` at which some floor argument reaches the
    /// next integer.
    fn next_threshold(&self, l: f64) -> f64 {
        self.values
            .iter()
            .map(|&a| {
                let k = floor_right(2.0 / (self.gamma * a * l));
                2.0 / (self.gamma * a * (k + 1.0))
            })
            .fold(0.0, f64::max)
    }
}

/// Event-driven exact solution of the piecewise-constant system for a
/// periodic schedule, up to `horizon` (which may be infinite) or extinction.
///
/// Near extinction the rates blow up and events accumulate; the remaining
/// time is then bracketed through the area and the midpoint is reported.
pub fn integrate_limit_ode(
    state0: RectangleState,
    schedule: &Schedule,
    gamma: f64,
    horizon: f64,
) -> Result<OdeSolution> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", "must be positive"));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon", "must be positive"));
    }
    let values = schedule.period_values()?;
    let a_star = schedule.harmonic_limit()?;
    let side = Side {
        gamma,
        values: &values,
    };

    let mut t = 0.0;
    let mut s = state0;
    let mut knots = vec![(t, s)];
    let mut events = 0;
    loop {
        let r1 = side.rate(s.l2);
        let r2 = side.rate(s.l1);
        if r1 == 0.0 && r2 == 0.0 {
            if horizon.is_finite() {
                knots.push((horizon, s));
            }
            return Ok(OdeSolution {
                knots,
                extinction: None,
                events,
            });
        }

        // extinction tail: A' ∈ [-8/a*, -8/a* + 2γ(L1 + L2)]
        let area = s.area();
        let slow = 8.0 / a_star - 2.0 * gamma * (s.l1 + s.l2);
        if slow > 0.0 {
            let lo = area * a_star / 8.0;
            let hi = area / slow;
            if hi - lo <= TAIL_REL_TOL * (t + lo).max(1.0) {
                let te = t + 0.5 * (lo + hi);
                if te > horizon {
                    // the horizon falls inside the tail; treat it as reached
                    knots.push((horizon, s));
                    return Ok(OdeSolution {
                        knots,
                        extinction: None,
                        events,
                    });
                }
                return Ok(OdeSolution {
                    knots,
                    extinction: Some(te),
                    events,
                });
            }
        }

        // time until each side crosses its next threshold, or zero
        let dt_side = |l: f64, r: f64, thr: f64| {
            if r < 0.0 {
                (l - thr) / -r
            } else {
                f64::INFINITY
            }
        };
        let thr2 = side.next_threshold(s.l2);
        let thr1 = side.next_threshold(s.l1);
        let d2 = dt_side(s.l2, r2, thr2);
        let d1 = dt_side(s.l1, r1, thr1);
        // extinction of a side before its next threshold is impossible since
        // thresholds are positive
        let dt = d1.min(d2);
        if t + dt >= horizon {
            let h = horizon - t;
            knots.push((
                horizon,
                RectangleState {
                    l1: s.l1 + r1 * h,
                    l2: s.l2 + r2 * h,
                },
            ));
            return Ok(OdeSolution {
                knots,
                extinction: None,
                events,
            });
        }
        t += dt;
        let mut l1 = s.l1 + r1 * dt;
        let mut l2 = s.l2 + r2 * dt;
        // snap whichever sides reached their threshold
        if d1 <= dt * (1.0 + 1e-14) && r1 < 0.0 {
            l1 = thr1;
        }
        if d2 <= dt * (1.0 + 1e-14) && r2 < 0.0 {
            l2 = thr2;
        }
        s = RectangleState { l1, l2 };
        knots.push((t, s));
        events += 1;
        if events > MAX_EVENTS {
            return Err(Error::Runaway(events));
        }
    }
}

/// Sampled flat-flow curves.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatFlow {
    pub times: Vec<f64>,
    pub states: Vec<RectangleState>,
    pub extinction: f64,
}

impl FlatFlow {
    pub fn table(&self) -> Table {
        let mut t = Table::new(["t", "L1", "L2"]);
        for (s, st) in self.times.iter().zip(&self.states) {
            t.push(vec![num(*s), num(st.l1), num(st.l2)]);
        }
        t
    }
}

struct FlatSystem {
    a_star: f64,
}

/// The flat flow written for the squared sides `q_i = L_i²`, whose right-hand
/// side stays bounded up to extinction.
impl System<f64, Vector2<f64>> for FlatSystem {
    fn system(&self, _t: f64, q: &Vector2<f64>, dq: &mut Vector2<f64>) {
        let r = (q[0].max(0.0) / q[1].max(f64::MIN_POSITIVE)).sqrt();
        dq[0] = -4.0 * r / self.a_star;
        dq[1] = -4.0 / (r.max(f64::MIN_POSITIVE) * self.a_star);
    }
}

/// `L₁' = -2/(a* L₂)`, `L₂' = -2/(a* L₁)` sampled on `samples + 1` points
/// of `[0, min(horizon, t*)]`.
///
/// The area decreases at the constant rate `4/a*`, so the extinction time
/// is `t* = a* L₁ L₂ / 4`. Squares use the closed form; other data are
/// integrated with an adaptive Dormand–Prince scheme in the squared sides up
/// to just before `t*`.
pub fn flat_flow(
    state0: RectangleState,
    a_star: f64,
    horizon: f64,
    samples: usize,
) -> Result<FlatFlow> {
    if !(a_star > 0.0 && a_star.is_finite()) {
        return Err(Error::invalid("a_star", "must be positive"));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon", "must be positive"));
    }
    let samples = samples.max(1);
    let extinction = a_star * state0.area() / 4.0;
    let end = horizon.min(extinction);
    let times: Vec<f64> = (0..=samples)
        .map(|k| end * k as f64 / samples as f64)
        .collect();

    if state0.l1 == state0.l2 {
        let l0 = state0.l1;
        let states = times
            .iter()
            .map(|&t| {
                let l = (l0 * l0 - 4.0 * t / a_star).max(0.0).sqrt();
                RectangleState { l1: l, l2: l }
            })
            .collect();
        return Ok(FlatFlow {
            times,
            states,
            extinction,
        });
    }

    // the sides vanish like a square root at t*; stop short and close with zeros
    let stop = end.min(extinction * (1.0 - 1e-9));
    let dx = stop / samples as f64;
    let mut solver = Dopri5::new(
        FlatSystem { a_star },
        0.0,
        stop,
        dx,
        Vector2::new(state0.l1 * state0.l1, state0.l2 * state0.l2),
        1e-8,
        1e-12,
    );
    solver
        .integrate()
        .map_err(|e| Error::Ode(format!("{e:?}")))?;
    let xs = solver.x_out();
    let ys = solver.y_out();
    let mut out_t = Vec::with_capacity(xs.len() + 1);
    let mut states = Vec::with_capacity(xs.len() + 1);
    for (x, y) in xs.iter().zip(ys) {
        out_t.push(*x);
        states.push(RectangleState {
            l1: y[0].max(0.0).sqrt(),
            l2: y[1].max(0.0).sqrt(),
        });
    }
    if end >= extinction {
        out_t.push(extinction);
        states.push(RectangleState { l1: 0.0, l2: 0.0 });
    }
    Ok(FlatFlow {
        times: out_t,
        states,
        extinction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::rectangle::{run_rectangle, DegeneratePolicy};

    fn st(l1: f64, l2: f64) -> RectangleState {
        RectangleState::new(l1, l2).unwrap()
    }

    #[test]
    fn pinned_data_stay_constant() {
        let s = Schedule::constant(1.0).unwrap();
        let sol = integrate_limit_ode(st(3.0, 3.0), &s, 1.0, 5.0).unwrap();
        assert_eq!(sol.extinction, None);
        assert_eq!(sol.at(4.0), st(3.0, 3.0));
        let sol = integrate_limit_ode(st(3.0, 3.0), &s, 1.0, f64::INFINITY).unwrap();
        assert_eq!(sol.at(1e9), st(3.0, 3.0));
    }

    #[test]
    fn unit_square_cascade() {
        let s = Schedule::constant(1.0).unwrap();
        let sol = integrate_limit_ode(st(1.0, 1.0), &s, 1.0, 10.0).unwrap();
        // rate 4 until L = 2/3, then rate 6 until L = 1/2
        let (t1, s1) = sol.knots[1];
        assert!((t1 - 1.0 / 12.0).abs() < 1e-15);
        assert!((s1.l1 - 2.0 / 3.0).abs() < 1e-15);
        let (t2, s2) = sol.knots[2];
        assert!((t2 - 1.0 / 12.0 - 1.0 / 36.0).abs() < 1e-15);
        assert!((s2.l2 - 0.5).abs() < 1e-15);
        // between thresholds L_k = 2/k the rate is 2k, so the extinction
        // time is Σ_{k≥2} (2/k - 2/(k+1))/(2k) = π²/6 - 3/2
        let exact = std::f64::consts::PI.powi(2) / 6.0 - 1.5;
        assert!((sol.extinction.unwrap() - exact).abs() < 1e-8);
    }

    #[test]
    fn recursion_tracks_ode() {
        let s = Schedule::periodic(vec![1.0, 3.0]).unwrap();
        let gamma = 0.7;
        let l0 = st(1.13, 0.81);
        let sol = integrate_limit_ode(l0, &s, gamma, 0.1).unwrap();
        let tau = 1e-4;
        let rec = run_rectangle(l0, &s, gamma, tau, 0.1, DegeneratePolicy::Floor).unwrap();
        for (n, x) in rec.states.iter().enumerate() {
            let y = sol.at(n as f64 * tau);
            assert!((x.l1 - y.l1).abs() < 1e-2 && (x.l2 - y.l2).abs() < 1e-2, "n = {n}");
        }
    }

    #[test]
    fn flat_flow_examples() {
        let f = flat_flow(st(1.0, 1.0), 1.5, 1.0, 10).unwrap();
        assert!((f.extinction - 0.375).abs() < 1e-15);
        let f = flat_flow(st(1.0, 1.0), 1.0, 0.125, 4).unwrap();
        assert!((f.states.last().unwrap().l1 - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn flat_flow_keeps_side_ratio() {
        let f = flat_flow(st(2.0, 0.5), 1.2, 10.0, 50).unwrap();
        assert!((f.extinction - 0.3).abs() < 1e-15);
        for (t, s) in f.times.iter().zip(&f.states) {
            if s.l2 > 0.0 {
                assert!((s.l1 / s.l2 - 4.0).abs() < 1e-6, "t = {t}");
                let area = 1.0 - 4.0 * t / 1.2;
                assert!((s.area() - area).abs() < 1e-6, "t = {t}: {} vs {area}", s.area());
            }
        }
    }
}
