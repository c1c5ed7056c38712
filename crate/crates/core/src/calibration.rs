//! Equivalent radius of a single grid node.
//!
//! A node held at 1 with zero data on a far sphere stores the same energy as
//! a ball of some radius `ρ_h = c h`. The factor `c` depends on `p`, `n` and
//! the mesh only, so it is measured once on a reference grid and reused for
//! every spacing.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::capacity::{distance, PExponent};
use crate::error::{Error, Result};
use crate::mesh::{Grid, HoleStrategy, NodeCalibration};
use crate::scalar::Real;
use crate::solver::{assemble, minimize, ConstraintSpec, EnergySpec, SolverConfig};

/// Outer radius of the reference condenser (in a unit box centred at 1/2).
pub const REFERENCE_RADIUS: f64 = 0.45;

/// Reference grid size per dimension.
pub fn reference_cells(n: usize) -> usize {
    if n == 2 {
        128
    } else {
        32
    }
}

/// Discrete capacity of the centre node of `Grid(n, cells)` relative to the
/// sphere of radius [`REFERENCE_RADIUS`].
pub fn node_capacity<T: Real>(pe: &PExponent<T>, cells: usize) -> Result<T> {
    if cells % 2 != 0 {
        return Err(Error::config("cells", "reference grid needs an even cell count"));
    }
    let grid = Grid::shared(pe.n(), cells)?;
    let n = pe.n();
    let center = vec![T::lit(0.5); n];
    let mid = grid.node_index(&vec![cells / 2; n]);
    let outer = T::lit(REFERENCE_RADIUS);
    let mut cons = ConstraintSpec::free(grid.node_count());
    for node in 0..grid.node_count() {
        if grid.is_boundary(node) || distance(&grid.coords::<T>(node), &center) >= outer {
            cons.set_fixed(node, T::zero());
        }
    }
    cons.set_fixed(mid, T::one());
    let obj = assemble(&EnergySpec::dirichlet(*pe), &grid);
    let (u, report) = minimize(&obj, &cons, &SolverConfig::default(), None)?;
    report.require_converged()?;
    Ok(u.w1p_seminorm(pe.p()).powf(pe.p()))
}

/// Inverts the condenser capacity `cap(B_ρ, B_R) = c` for `ρ`.
pub fn condenser_inner_radius<T: Real>(capacity: T, outer: T, pe: &PExponent<T>) -> Result<T> {
    if !(capacity > T::zero()) {
        return Err(Error::domain("capacity must be positive"));
    }
    let (p, n) = (pe.p(), pe.dim());
    let area = pe.sphere_area();
    if pe.is_critical() {
        let gap = (capacity / area).powf(T::one() / (T::one() - n));
        return Ok(outer * (-gap).exp());
    }
    let m = pe.singular_power();
    let scaled = capacity / (area * (-m).powf(p - T::one()));
    let rho_m = outer.powf(m) + scaled.powf(T::one() / (T::one() - p));
    Ok(rho_m.powf(T::one() / m))
}

/// Measures the radius factor on `Grid(n, cells)`.
pub fn measure_node_calibration<T: Real>(pe: &PExponent<T>, cells: usize) -> Result<NodeCalibration<T>> {
    let c = node_capacity(pe, cells)?;
    let rho = condenser_inner_radius(c, T::lit(REFERENCE_RADIUS), pe)?;
    Ok(NodeCalibration { radius_factor: rho * T::from_count(cells) })
}

static CACHE: Mutex<Option<HashMap<(u64, usize), f64>>> = Mutex::new(None);

/// [`measure_node_calibration`] on the reference grid, memoised per `(p, n)`.
pub fn node_calibration<T: Real>(pe: &PExponent<T>) -> Result<NodeCalibration<T>> {
    let key = (pe.p().to_f64_lossy().to_bits(), pe.n());
    if let Some(&c) = CACHE.lock().expect("calibration cache").get_or_insert_with(HashMap::new).get(&key) {
        return Ok(NodeCalibration { radius_factor: T::lit(c) });
    }
    let cal = measure_node_calibration(pe, reference_cells(pe.n()))?;
    CACHE
        .lock()
        .expect("calibration cache")
        .get_or_insert_with(HashMap::new)
        .insert(key, cal.radius_factor.to_f64_lossy());
    Ok(cal)
}

/// Hole strategy by name (`resolved`, `nearest_node` or `subgrid`), with the
/// node calibration measured where the strategy uses it.
pub fn hole_strategy<T: Real>(name: &str, pe: &PExponent<T>) -> Result<HoleStrategy<T>> {
    match name {
        "resolved" => Ok(HoleStrategy::Resolved),
        "nearest_node" => Ok(HoleStrategy::NearestNode { calibration: Some(node_calibration(pe)?) }),
        "subgrid" => Ok(HoleStrategy::Subgrid { calibration: node_calibration(pe)? }),
        other => Err(Error::config("strategy", format!("unknown hole strategy `{other}`"))),
    }
}
