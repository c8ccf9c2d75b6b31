//! Exhaustive minimization of the crystalline step over concentric
//! coordinate rectangles.

use rayon::prelude::*;

use super::lattice_set::{DistanceMap, LatticeSet};
use crate::error::{Error, Result};
use crate::output::{num, Table};
use crate::TIE_REL_TOL;

/// Centred `w × h` rectangle of cells (odd counts) and the step data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleInput {
    pub cells_w: i64,
    pub cells_h: i64,
    pub eps: f64,
    pub a: f64,
    pub tau: f64,
    /// Largest inward change of each half-side, in cells.
    pub search_radius: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// Change of each half-side in cells; negative values shrink.
    pub delta: (i64, i64),
    pub perimeter: f64,
    pub dissipation: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best: Candidate,
    pub candidates: Vec<Candidate>,
    pub eps: f64,
}

impl OracleResult {
    /// Decrements of the side lengths `(L1, L2)` at the optimum.
    pub fn side_decrements(&self) -> (f64, f64) {
        (
            -2.0 * self.eps * self.best.delta.0 as f64,
            -2.0 * self.eps * self.best.delta.1 as f64,
        )
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(["d1", "d2", "perimeter", "dissipation", "objective", "optimal"]);
        for c in &self.candidates {
            t.push(vec![
                c.delta.0.to_string(),
                c.delta.1.to_string(),
                num(c.perimeter),
                num(c.dissipation),
                num(c.objective),
                u8::from(c.delta == self.best.delta).to_string(),
            ]);
        }
        t
    }
}

/// Minimize `P_ε(F) + (a/τ) D_ε(F, E)` over concentric rectangles `F`
/// whose half-sides differ from those of `E` by `-K..=2` cells.
pub fn rectangle_oracle(input: &OracleInput) -> Result<OracleResult> {
    let OracleInput {
        cells_w: w,
        cells_h: h,
        eps,
        a,
        tau,
        search_radius: k,
    } = *input;
    if w < 1 || h < 1 || w % 2 == 0 || h % 2 == 0 {
        return Err(Error::invalid("cells", "cell counts must be positive and odd"));
    }
    if k < 0 || k > w.min(h) {
        return Err(Error::invalid("search_radius", "must lie in 0..=min(cells_w, cells_h)"));
    }
    if !(a > 0.0 && tau > 0.0) {
        return Err(Error::invalid("a/tau", "must be positive"));
    }
    let e = LatticeSet::centered_rectangle(eps, w, h)?;
    let (hw, hh) = (w / 2, h / 2);
    let cover = ((-hw - 3, -hh - 3), (hw + 3, hh + 3));
    let map = DistanceMap::new(&e, Some(cover))?;
    let weight = a / tau;

    let grid: Vec<(i64, i64)> = (-k..=2)
        .flat_map(|d1| (-k..=2).map(move |d2| (d1, d2)))
        .filter(|&(d1, d2)| w + 2 * d1 >= 1 && h + 2 * d2 >= 1)
        .collect();
    let candidates: Vec<Candidate> = grid
        .par_iter()
        .map(|&(d1, d2)| {
            let (fw, fh) = (hw + d1, hh + d2);
            let perimeter = 2.0 * eps * ((2 * fw + 1) + (2 * fh + 1)) as f64;
            let dissipation = concentric_dissipation(&map, eps, (hw, hh), (fw, fh));
            Candidate {
                delta: (d1, d2),
                perimeter,
                dissipation,
                objective: perimeter + weight * dissipation,
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| candidates[i].objective.total_cmp(&candidates[j].objective));
    let best = candidates[order[0]];
    if let Some(&second) = order.get(1) {
        let gap = candidates[second].objective - best.objective;
        if gap <= TIE_REL_TOL * best.objective.abs().max(1.0) {
            return Err(Error::RectangleTie {
                first: best.delta,
                second: candidates[second].delta,
            });
        }
    }
    Ok(OracleResult {
        best,
        candidates,
        eps,
    })
}

/// `D_ε` between centred rectangles with half-widths `e` and `f` (in cells),
/// walking the symmetric difference directly.
fn concentric_dissipation(map: &DistanceMap, eps: f64, e: (i64, i64), f: (i64, i64)) -> f64 {
    let (mx, my) = (e.0.max(f.0), e.1.max(f.1));
    let mut total: u64 = 0;
    for x in -mx..=mx {
        for y in -my..=my {
            let in_e = x.abs() <= e.0 && y.abs() <= e.1;
            let in_f = x.abs() <= f.0 && y.abs() <= f.1;
            if in_e != in_f {
                total += map.steps((x, y)).expect("map covers both rectangles") as u64;
            }
        }
    }
    eps.powi(3) * total as f64
}
