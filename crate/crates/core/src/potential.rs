//! 1-periodic even potentials `W` with `‖W'‖∞ = 1` and zero average.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialSpec", into = "PotentialSpec")]
pub enum Potential {
    /// `W(s) = -cos(2πs) / (2π)`, so `W'(s) = sin(2πs)`.
    Cosine,
    /// Periodic cubic spline through uniform samples on `[0, 1)`.
    Table(PeriodicSpline),
}

/// JSON form of a potential.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialSpec {
    Cosine,
    Table {
        samples: Vec<f64>,
        #[serde(default)]
        normalize: bool,
    },
}

impl TryFrom<PotentialSpec> for Potential {
    type Error = Error;

    fn try_from(spec: PotentialSpec) -> Result<Self> {
        match spec {
            PotentialSpec::Cosine => Ok(Potential::Cosine),
            PotentialSpec::Table { samples, normalize } => {
                if normalize {
                    Potential::table_normalized(&samples)
                } else {
                    Potential::table(&samples)
                }
            }
        }
    }
}

impl From<Potential> for PotentialSpec {
    fn from(p: Potential) -> Self {
        match p {
            Potential::Cosine => PotentialSpec::Cosine,
            Potential::Table(s) => PotentialSpec::Table {
                samples: s.values,
                normalize: false,
            },
        }
    }
}

const SUP_TOL: f64 = 1e-6;
const MEAN_TOL: f64 = 1e-9;
const SUP_SAMPLES: usize = 100_000;

impl Default for Potential {
    fn default() -> Self {
        Potential::Cosine
    }
}

impl Potential {
    /// Spline potential through `samples` taken at `j / n`; the constraints
    /// are checked, not enforced.
    pub fn table(samples: &[f64]) -> Result<Self> {
        let p = Potential::Table(PeriodicSpline::new(samples)?);
        p.validate()?;
        Ok(p)
    }

    /// Like [`Potential::table`], after shifting to zero mean and scaling so
    /// that `‖W'‖∞ = 1`.
    pub fn table_normalized(samples: &[f64]) -> Result<Self> {
        let raw = PeriodicSpline::new(samples)?;
        let mean = raw.integral();
        let sup = Potential::Table(raw.clone()).sup_derivative();
        if !(sup > 0.0) {
            return Err(Error::invalid("potential.samples", "constant samples"));
        }
        let scaled: Vec<f64> = samples.iter().map(|w| (w - mean) / sup).collect();
        Potential::table(&scaled)
    }

    pub fn value(&self, s: f64) -> f64 {
        match self {
            Potential::Cosine => -(TAU * s).cos() / TAU,
            Potential::Table(sp) => sp.value(s),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            Potential::Cosine => (TAU * s).sin(),
            Potential::Table(sp) => sp.derivative(s),
        }
    }

    /// Lipschitz constant of `W'`.
    pub fn derivative_lipschitz(&self) -> f64 {
        match self {
            Potential::Cosine => TAU,
            Potential::Table(sp) => sp.second_derivative_bound(),
        }
    }

    /// `∫_0^1 W`.
    pub fn mean(&self) -> f64 {
        match self {
            Potential::Cosine => 0.0,
            Potential::Table(sp) => sp.integral(),
        }
    }

    /// Dense-sampling estimate of `‖W'‖∞`.
    pub fn sup_derivative(&self) -> f64 {
        match self {
            Potential::Cosine => 1.0,
            Potential::Table(_) => (0..SUP_SAMPLES)
                .map(|k| self.derivative(k as f64 / SUP_SAMPLES as f64).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Location in `[0, 1)` where `W'` attains its minimum `-1`.
    pub fn argmin_derivative(&self) -> f64 {
        match self {
            Potential::Cosine => 0.75,
            Potential::Table(_) => {
                let mut best = (0.0, f64::INFINITY);
                for k in 0..SUP_SAMPLES {
                    let s = k as f64 / SUP_SAMPLES as f64;
                    let d = self.derivative(s);
                    if d < best.1 {
                        best = (s, d);
                    }
                }
                best.0
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Potential::Table(sp) = self else {
            return Ok(());
        };
        let sup = self.sup_derivative();
        if (sup - 1.0).abs() > SUP_TOL {
            return Err(Error::invalid(
                "potential",
                format!("sup |W'| = {sup}, expected 1"),
            ));
        }
        let mean = sp.integral();
        if mean.abs() > MEAN_TOL {
            return Err(Error::invalid(
                "potential",
                format!("mean of W is {mean:e}, expected 0"),
            ));
        }
        let n = sp.values.len();
        for j in 1..n {
            let (a, b) = (sp.values[j], sp.values[n - j]);
            if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                return Err(Error::invalid(
                    "potential",
                    format!("samples are not even: W[{j}] = {a}, W[{}] = {b}", n - j),
                ));
            }
        }
        Ok(())
    }
}

/// Periodic cubic spline with uniform knots `j / n`, `j = 0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSpline {
    values: Vec<f64>,
    // second derivatives at the knots
    moments: Vec<f64>,
}

impl PeriodicSpline {
    pub fn new(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 4 {
            return Err(Error::invalid("potential.samples", "need at least 4 samples"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("potential.samples", "non-finite sample"));
        }
        let h = 1.0 / n as f64;
        let rhs: Vec<f64> = (0..n)
            .map(|j| {
                let prev = samples[(j + n - 1) % n];
                let next = samples[(j + 1) % n];
                6.0 * (next - 2.0 * samples[j] + prev) / (h * h)
            })
            .collect();
        // Cyclic system M_{j-1} + 4 M_j + M_{j+1} = rhs_j is strictly
        // diagonally dominant; Gauss-Seidel contracts by at least 1/2.
        let mut m = vec![0.0; n];
        for _ in 0..500 {
            let mut change: f64 = 0.0;
            for j in 0..n {
                let new = (rhs[j] - m[(j + n - 1) % n] - m[(j + 1) % n]) / 4.0;
                change = change.max((new - m[j]).abs());
                m[j] = new;
            }
            let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
            if change <= 1e-15 * scale {
                break;
            }
        }
        Ok(PeriodicSpline {
            values: samples.to_vec(),
            moments: m,
        })
    }

    fn locate(&self, s: f64) -> (usize, usize, f64, f64) {
        let n = self.values.len();
        let h = 1.0 / n as f64;
        let x = s.rem_euclid(1.0) * n as f64;
        let j = (x.floor() as usize).min(n - 1);
        let t = (x - j as f64) * h; // distance from left knot
        (j, (j + 1) % n, t, h)
    }

    pub fn value(&self, s: f64) -> f64 {
        let (j, k, t, h) = self.locate(s);
        let (mj, mk) = (self.moments[j], self.moments[k]);
        let (wj, wk) = (self.values[j], self.values[k]);
        let r = h - t;
        mj * r.powi(3) / (6.0 * h)
            + mk * t.powi(3) / (6.0 * h)
            + (wj - mj * h * h / 6.0) * r / h
            + (wk - mk * h * h / 6.0) * t / h
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let (j, k, t, h) = self.locate(s);
        let (mj, mk) = (self.moments[j], self.moments[k]);
        let (wj, wk) = (self.values[j], self.values[k]);
        let r = h - t;
        -mj * r * r / (2.0 * h) + mk * t * t / (2.0 * h) + (wk - wj) / h - (mk - mj) * h / 6.0
    }

    /// `W''` is piecewise linear, so its sup is attained at a knot.
    pub fn second_derivative_bound(&self) -> f64 {
        self.moments.iter().fold(0.0, |acc, m| acc.max(m.abs()))
    }

    /// Exact integral over one period.
    pub fn integral(&self) -> f64 {
        let n = self.values.len();
        let h = 1.0 / n as f64;
        (0..n)
            .map(|j| {
                let k = (j + 1) % n;
                h * (self.values[j] + self.values[k]) / 2.0
                    - h.powi(3) * (self.moments[j] + self.moments[k]) / 24.0
            })
            .sum()
    }
}
