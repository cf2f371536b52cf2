use super::{Coord, EmpiricalMeasure};
use crate::error::{Error, Result};
use crate::tolerances;

/// Discrete slab-mass target `ceil(N * slab_mass) / N`.
pub(crate) fn slab_target(n_particles: usize, slab_mass: f64) -> f64 {
    let n = n_particles as f64;
    (n * slab_mass - 1e-9).ceil().max(0.0) / n
}

/// Particle indices sorted by `(coordinate, index)`.
pub(crate) fn sorted_by_coord(mu: &EmpiricalMeasure, c: Coord) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..mu.len()).collect();
    idx.sort_by(|&a, &b| mu.coord(a, c).total_cmp(&mu.coord(b, c)).then(a.cmp(&b)));
    idx
}

/// Splits the marginal along `axis` into `n` slabs of (discrete) mass
/// `slab_mass`.
///
/// Returns `n + 1` points. The first is the left edge of the support, the last
/// the right edge. Each interior point is the smallest particle coordinate at
/// which the slab opened by the previous point reaches the target mass
/// `ceil(N * slab_mass) / N`. The first slab is closed on the left, later
/// slabs are `(x[i-1], x[i]]`. When the mass runs out early the remaining
/// points collapse onto the right edge.
pub fn quantile_partition(
    mu: &EmpiricalMeasure,
    axis: Coord,
    slab_mass: f64,
    n: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Input("slab count must be positive".into()));
    }
    if !(slab_mass > 0.0 && slab_mass <= 1.0) {
        return Err(Error::Input(format!("slab mass {slab_mass} outside (0, 1]")));
    }
    if slab_mass * (n - 1) as f64 > 1.0 + tolerances::MASS_COMPARE {
        return Err(Error::InfeasiblePartition { slab_mass, intervals: n - 1 });
    }
    let order: Vec<usize> =
        sorted_by_coord(mu, axis).into_iter().filter(|&i| mu.weights()[i] > 0.0).collect();
    let left = mu.coord(order[0], axis);
    let right = mu.coord(*order.last().unwrap(), axis);
    let target = slab_target(mu.len(), slab_mass);

    let mut points = Vec::with_capacity(n + 1);
    points.push(left);
    let mut cursor = 0;
    for _ in 1..n {
        let mut acc = 0.0;
        let mut found = None;
        while cursor < order.len() {
            let i = order[cursor];
            acc += mu.weights()[i];
            cursor += 1;
            // Absorb ties so the slab boundary is a coordinate value.
            let here = mu.coord(i, axis);
            while cursor < order.len() && mu.coord(order[cursor], axis) == here {
                acc += mu.weights()[order[cursor]];
                cursor += 1;
            }
            if acc >= target - tolerances::MASS_COMPARE {
                found = Some(here);
                break;
            }
        }
        points.push(found.unwrap_or(right));
    }
    points.push(right);
    Ok(points)
}
