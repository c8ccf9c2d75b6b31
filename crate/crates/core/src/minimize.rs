//! Global minimization of one-dimensional objectives on a bounded window.
//!
//! The window is scanned on a uniform grid for sign changes of the
//! derivative; every `- → +` crossing is refined by bisection and the
//! resulting local minima (plus boundary minima) are compared by value.
//! With a grid spacing of at most `1 / (4 L)`, where `L` bounds the
//! Lipschitz constant of the derivative, no well deep enough to matter is
//! skipped between grid points.

use crate::TIE_REL_TOL;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowMinimum {
    pub best: Candidate,
    /// Best local minimum at a different location, if any.
    pub runner_up: Option<Candidate>,
    /// The best point is one of the window endpoints.
    pub at_boundary: bool,
}

impl WindowMinimum {
    /// The runner-up when it ties with the best candidate.
    pub fn tie(&self) -> Option<Candidate> {
        let r = self.runner_up?;
        let gap = r.value - self.best.value;
        (gap <= TIE_REL_TOL * self.best.value.abs().max(1.0)).then_some(r)
    }
}

// Distinct local minima closer than this are merged.
const MERGE_TOL: f64 = 1e-9;

fn bisect_root<D: Fn(f64) -> f64>(df: &D, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    // invariant: df(lo) < 0 <= df(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol * mid.abs().max(1.0) || mid <= lo || mid >= hi {
            break;
        }
        if df(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimize `f` over `[lo, hi]` given its derivative `df`; stationary
/// points are located to relative precision `xtol`.
pub fn minimize_on_window<F, D>(
    f: F,
    df: D,
    lo: f64,
    hi: f64,
    spacing: f64,
    xtol: f64,
) -> WindowMinimum
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    assert!(hi >= lo && spacing > 0.0);
    let cells = (((hi - lo) / spacing).ceil() as usize).max(1);
    let h = (hi - lo) / cells as f64;
    let grid: Vec<f64> = (0..=cells).map(|k| lo + k as f64 * h).collect();
    let slopes: Vec<f64> = grid.iter().map(|&x| df(x)).collect();

    let mut points: Vec<f64> = Vec::new();
    if slopes[0] >= 0.0 {
        points.push(lo);
    }
    for k in 0..cells {
        if slopes[k] < 0.0 && slopes[k + 1] >= 0.0 {
            points.push(bisect_root(&df, grid[k], grid[k + 1], xtol));
        }
    }
    if slopes[cells] < 0.0 {
        points.push(hi);
    }

    let mut cands: Vec<Candidate> = points
        .into_iter()
        .map(|x| Candidate { x, value: f(x) })
        .collect();
    cands.sort_by(|a, b| a.value.total_cmp(&b.value));

    let best = cands[0];
    let runner_up = cands
        .iter()
        .skip(1)
        .find(|c| (c.x - best.x).abs() > MERGE_TOL * best.x.abs().max(1.0))
        .copied();
    WindowMinimum {
        best,
        runner_up,
        at_boundary: best.x == lo || best.x == hi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let m = minimize_on_window(|x| (x - 0.3).powi(2), |x| 2.0 * (x - 0.3), -1.0, 1.0, 0.1, 1e-12);
        assert!((m.best.x - 0.3).abs() < 1e-11);
        assert!(m.runner_up.is_none());
        assert!(!m.at_boundary);
    }

    #[test]
    fn double_well_picks_deeper_and_reports_tie() {
        // (x^2 - 1)^2 + c x
        let f = |c: f64| move |x: f64| (x * x - 1.0).powi(2) + c * x;
        let df = |c: f64| move |x: f64| 4.0 * x * (x * x - 1.0) + c;
        let m = minimize_on_window(f(0.1), df(0.1), -2.0, 2.0, 0.01, 1e-12);
        assert!(m.best.x < 0.0);
        assert!(m.runner_up.unwrap().x > 0.0);
        assert!(m.tie().is_none());

        let sym = minimize_on_window(f(0.0), df(0.0), -2.0, 2.0, 0.01, 1e-12);
        assert!(sym.tie().is_some());
    }

    #[test]
    fn boundary_minimum() {
        let m = minimize_on_window(|x| -x, |_| -1.0, 0.0, 1.0, 0.25, 1e-12);
        assert_eq!(m.best.x, 1.0);
        assert!(m.at_boundary);
    }
}
