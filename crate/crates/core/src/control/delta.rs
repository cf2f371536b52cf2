use crate::error::{Error, Result};
use crate::measures::{Coord, EmpiricalMeasure};
use crate::tolerances;

/// Largest `delta` such that every open widened slab
/// `(x[i-1] - 3 delta, x[i] + 3 delta)` carries mass at most `c`.
///
/// The widened mass is a step function of the half-width `D = 3 delta`: it
/// counts particles whose distance to the slab is below `D`. For each slab the
/// supremum is therefore the smallest particle distance at which the mass of
/// the closed ball exceeds `c`. Returns 0 when the slab itself already holds
/// more than `c`, and `cap` when no widening ever exceeds `c`.
pub fn compute_delta(mu: &EmpiricalMeasure, partition: &[f64], c: f64, axis: usize, cap: f64) -> Result<f64> {
    if partition.len() < 2 {
        return Err(Error::Input("partition needs at least two points".into()));
    }
    if axis >= mu.dim() {
        return Err(Error::Input(format!("axis {axis} out of range for dimension {}", mu.dim())));
    }
    let coord = Coord::Position(axis);
    let limit = c + tolerances::MASS_COMPARE;
    let mut best = f64::INFINITY;
    let mut dist: Vec<(f64, f64)> = Vec::with_capacity(mu.len());
    for slab in partition.windows(2) {
        let (a, b) = (slab[0], slab[1]);
        dist.clear();
        dist.extend(mu.marginal(coord).filter(|&(_, w)| w > 0.0).map(|(x, w)| ((a - x).max(x - b).max(0.0), w)));
        dist.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut acc = 0.0;
        let mut k = 0;
        while k < dist.len() {
            let here = dist[k].0;
            while k < dist.len() && dist[k].0 == here {
                acc += dist[k].1;
                k += 1;
            }
            if acc > limit {
                best = best.min(here);
                break;
            }
        }
        if best == 0.0 {
            return Ok(0.0);
        }
    }
    Ok((best / 3.0).min(cap))
}
