//! Finite unions of lattice squares `Q_ε(i)` and their perimeter and
//! dissipation functionals.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

pub type Cell = (i64, i64);

const NEIGHBOURS4: [Cell; 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeSet {
    eps_bits: u64,
    cells: BTreeSet<Cell>,
}

impl LatticeSet {
    pub fn new(eps: f64, cells: impl IntoIterator<Item = Cell>) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid("eps", "must be positive"));
        }
        Ok(LatticeSet {
            eps_bits: eps.to_bits(),
            cells: cells.into_iter().collect(),
        })
    }

    /// `w × h` cells with lower-left cell `origin`.
    pub fn rectangle(eps: f64, origin: Cell, w: i64, h: i64) -> Result<Self> {
        if w < 0 || h < 0 {
            return Err(Error::invalid("rectangle", "negative cell count"));
        }
        let cells = (0..w).flat_map(move |x| (0..h).map(move |y| (origin.0 + x, origin.1 + y)));
        LatticeSet::new(eps, cells)
    }

    /// Rectangle of `w × h` cells centred at the origin cell (odd counts).
    pub fn centered_rectangle(eps: f64, w: i64, h: i64) -> Result<Self> {
        if w % 2 == 0 || h % 2 == 0 {
            return Err(Error::invalid("rectangle", "cell counts must be odd to be centred"));
        }
        LatticeSet::rectangle(eps, (-(w / 2), -(h / 2)), w, h)
    }

    pub fn eps(&self) -> f64 {
        f64::from_bits(self.eps_bits)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, c: Cell) -> bool {
        self.cells.contains(&c)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells.iter().copied()
    }

    pub fn translate(&self, d: Cell) -> Self {
        LatticeSet {
            eps_bits: self.eps_bits,
            cells: self.cells.iter().map(|c| (c.0 + d.0, c.1 + d.1)).collect(),
        }
    }

    /// Inclusive bounding box `(min, max)`, `None` for the empty set.
    pub fn bbox(&self) -> Option<(Cell, Cell)> {
        let mut it = self.cells.iter();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), &(x, y)| {
            ((lo.0.min(x), lo.1.min(y)), (hi.0.max(x), hi.1.max(y)))
        }))
    }

    /// `ε · #{(i, j) : i ∈ I, j ∉ I, |i - j| = ε}`.
    pub fn perimeter(&self) -> f64 {
        let exposed = self
            .cells
            .iter()
            .flat_map(|&(x, y)| NEIGHBOURS4.iter().map(move |d| (x + d.0, y + d.1)))
            .filter(|c| !self.cells.contains(c))
            .count();
        self.eps() * exposed as f64
    }

    /// `(ε/4) Σ |u_i - u_j|²` over unordered nearest-neighbour pairs, with
    /// `u = +1` on the set and `-1` off it.
    pub fn spin_energy(&self) -> f64 {
        // only mixed pairs contribute, each with |1 - (-1)|² = 4, and each
        // has exactly one end in the set
        let mixed = self
            .cells
            .iter()
            .flat_map(|&(x, y)| NEIGHBOURS4.iter().map(move |d| (x + d.0, y + d.1)))
            .filter(|c| !self.cells.contains(c))
            .count();
        self.eps() / 4.0 * 4.0 * mixed as f64
    }

    fn check_same_eps(&self, other: &LatticeSet) -> Result<()> {
        if self.eps_bits != other.eps_bits {
            return Err(Error::invalid(
                "eps",
                format!("mismatched cell sizes {} and {}", self.eps(), other.eps()),
            ));
        }
        Ok(())
    }
}

/// Chebyshev distance, in cells, from each cell of a box to the nearest
/// cell of the opposite phase of `E`.
///
/// Computed by two breadth-first passes on the 8-neighbourhood grid: one
/// seeded from the complement (distances of cells in `E`) and one seeded
/// from `E` (distances of cells outside).
#[derive(Debug, Clone)]
pub struct DistanceMap {
    origin: Cell,
    width: usize,
    height: usize,
    steps: Vec<u32>,
}

impl DistanceMap {
    /// Map over the bounding box of `e` and `cover`, grown by one cell so
    /// that every cell of `e` sees some complement cell.
    pub fn new(e: &LatticeSet, cover: Option<(Cell, Cell)>) -> Result<Self> {
        let (mut lo, mut hi) = e
            .bbox()
            .ok_or_else(|| Error::invalid("E", "distance to the boundary of an empty set"))?;
        if let Some((clo, chi)) = cover {
            lo = (lo.0.min(clo.0), lo.1.min(clo.1));
            hi = (hi.0.max(chi.0), hi.1.max(chi.1));
        }
        let origin = (lo.0 - 1, lo.1 - 1);
        let width = (hi.0 - lo.0 + 3) as usize;
        let height = (hi.1 - lo.1 + 3) as usize;
        let idx = |x: usize, y: usize| y * width + x;
        let inside: Vec<bool> = (0..width * height)
            .map(|k| {
                let (x, y) = (k % width, k / width);
                e.contains((origin.0 + x as i64, origin.1 + y as i64))
            })
            .collect();

        let mut steps = vec![u32::MAX; width * height];
        for phase in [true, false] {
            // seeds: cells of the opposite phase to the ones being measured
            let mut dist = vec![u32::MAX; width * height];
            let mut queue = VecDeque::new();
            for k in 0..width * height {
                if inside[k] != phase {
                    dist[k] = 0;
                    queue.push_back(k);
                }
            }
            while let Some(k) = queue.pop_front() {
                let (x, y) = ((k % width) as i64, (k / width) as i64);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                            continue;
                        }
                        let n = idx(nx as usize, ny as usize);
                        if dist[n] == u32::MAX {
                            dist[n] = dist[k] + 1;
                            queue.push_back(n);
                        }
                    }
                }
            }
            for k in 0..width * height {
                if inside[k] == phase {
                    steps[k] = dist[k];
                }
            }
        }
        Ok(DistanceMap {
            origin,
            width,
            height,
            steps,
        })
    }

    /// Distance in cells, `None` outside the mapped box.
    pub fn steps(&self, c: Cell) -> Option<u32> {
        let x = c.0 - self.origin.0;
        let y = c.1 - self.origin.1;
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        Some(self.steps[y as usize * self.width + x as usize])
    }
}

/// `d∞^ε(c, ∂E) = ε ·` (Chebyshev cell distance from `c` to the opposite
/// phase), a multiple of `ε` equal to `ε/2` plus the distance from the
/// centre of `c` to `∂E`.
pub fn boundary_distance(map: &DistanceMap, eps: f64, c: Cell) -> Option<f64> {
    map.steps(c).map(|k| k as f64 * eps)
}

/// `D_ε(F, E) = ∫_{E△F} d∞^ε(x, ∂E) dx`.
pub fn dissipation(f: &LatticeSet, e: &LatticeSet) -> Result<f64> {
    e.check_same_eps(f)?;
    if e.is_empty() {
        return Err(Error::invalid("E", "dissipation from an empty set"));
    }
    let map = DistanceMap::new(e, f.bbox())?;
    Ok(dissipation_with(&map, f, e))
}

/// [`dissipation`] against a precomputed map of `E` that covers `F`.
pub fn dissipation_with(map: &DistanceMap, f: &LatticeSet, e: &LatticeSet) -> f64 {
    let total: u64 = f
        .cells()
        .filter(|&c| !e.contains(c))
        .chain(e.cells().filter(|&c| !f.contains(c)))
        .map(|c| map.steps(c).expect("map covers E and F") as u64)
        .sum();
    let eps = e.eps();
    eps.powi(3) * total as f64
}
