//! Perturbed crystalline motion of lattice sets, restricted to coordinate
//! rectangles.

mod lattice_set;
mod ode;
mod oracle;
mod rectangle;

pub use lattice_set::{boundary_distance, dissipation, dissipation_with, Cell, DistanceMap, LatticeSet};
pub use ode::{flat_flow, integrate_limit_ode, FlatFlow, OdeSolution};
pub use oracle::{rectangle_oracle, Candidate, OracleInput, OracleResult};
pub use rectangle::{
    classify_regime, layer_count, rectangle_step, run_rectangle, DegeneratePolicy, RectangleState,
    RectangleTrajectory, Regime,
};
