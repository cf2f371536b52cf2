use super::partition::sorted_by_coord;
use super::{Coord, EmpiricalMeasure};
use crate::error::{Error, Result};

/// Exact W1 between the one-dimensional marginals of `mu` and `nu` along
/// `coord`.
///
/// Both quantile functions are walked in lockstep; the monotone coupling is
/// optimal in one dimension, so the accumulated `mass * |gap|` is exactly the
/// L1 distance between the quantile functions.
pub fn wasserstein1_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, coord: Coord) -> f64 {
    let a = sorted_by_coord(mu, coord);
    let b = sorted_by_coord(nu, coord);
    let (mut i, mut j) = (0, 0);
    let mut ra = a.first().map_or(0.0, |&k| mu.weights()[k]);
    let mut rb = b.first().map_or(0.0, |&k| nu.weights()[k]);
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        cost += m * (mu.coord(a[i], coord) - nu.coord(b[j], coord)).abs();
        ra -= m;
        rb -= m;
        // Advance whichever side is exhausted; the final leftovers are
        // rounding noise of order 1e-16.
        if ra <= rb {
            i += 1;
            if i < a.len() {
                ra = mu.weights()[a[i]];
            }
        } else {
            j += 1;
            if j < b.len() {
                rb = nu.weights()[b[j]];
            }
        }
    }
    cost
}

const LP_MAX_ATOMS: usize = 64;

/// W1 by solving the transference-plan linear program directly, with the
/// Euclidean ground metric over the selected coordinates.
///
/// Intended for small instances (a few atoms per side) in any dimension.
pub fn wasserstein1_lp(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, coords: &[Coord]) -> Result<f64> {
    if mu.len() > LP_MAX_ATOMS || nu.len() > LP_MAX_ATOMS {
        return Err(Error::Input(format!(
            "transport LP limited to {LP_MAX_ATOMS} atoms per side, got {} and {}",
            mu.len(),
            nu.len()
        )));
    }
    if coords.is_empty() {
        return Err(Error::Input("no coordinates selected".into()));
    }
    let (na, nb) = (mu.len(), nu.len());
    let nvar = na * nb;
    let mut cost = vec![0.0; nvar];
    for i in 0..na {
        for j in 0..nb {
            let d2: f64 = coords.iter().map(|&c| (mu.coord(i, c) - nu.coord(j, c)).powi(2)).sum();
            cost[i * nb + j] = d2.sqrt();
        }
    }
    let mut rows = Vec::with_capacity(na + nb);
    let mut rhs = Vec::with_capacity(na + nb);
    for i in 0..na {
        let mut r = vec![0.0; nvar];
        r[i * nb..(i + 1) * nb].iter_mut().for_each(|e| *e = 1.0);
        rows.push(r);
        rhs.push(mu.weights()[i]);
    }
    for j in 0..nb {
        let mut r = vec![0.0; nvar];
        (0..na).for_each(|i| r[i * nb + j] = 1.0);
        rows.push(r);
        rhs.push(nu.weights()[j]);
    }
    simplex_min(&cost, &rows, &rhs)
}

const PIVOT_EPS: f64 = 1e-12;

/// Two-phase dense simplex with Bland's rule for `min c.x, A x = b, x >= 0`
/// with `b >= 0`. Returns the optimal objective.
fn simplex_min(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<f64> {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let rhs = width - 1;
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|r| {
            let mut row = vec![0.0; width];
            row[..n].copy_from_slice(&a[r]);
            row[n + r] = 1.0;
            row[rhs] = b[r];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase one: drive the artificials to zero.
    let phase1_cost: Vec<f64> = (0..n + m).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
    run_simplex(&mut t, &mut basis, &phase1_cost, n + m)?;
    let infeas: f64 = basis.iter().zip(&t).filter(|(&bj, _)| bj >= n).map(|(_, row)| row[rhs]).sum();
    if infeas > 1e-9 {
        return Err(Error::Invariant(format!("transport LP infeasible (residual {infeas})")));
    }
    // Pivot remaining artificials out, dropping redundant rows.
    let mut r = 0;
    while r < t.len() {
        if basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| t[r][j].abs() > PIVOT_EPS) {
                pivot(&mut t, &mut basis, r, j);
            } else {
                t.remove(r);
                basis.remove(r);
                continue;
            }
        }
        r += 1;
    }
    let phase2_cost: Vec<f64> = (0..n + m).map(|j| if j < n { c[j] } else { 0.0 }).collect();
    run_simplex(&mut t, &mut basis, &phase2_cost, n)?;
    Ok(basis.iter().zip(&t).map(|(&bj, row)| phase2_cost[bj] * row[rhs]).sum())
}

fn run_simplex(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) -> Result<()> {
    let rhs = t.first().map_or(0, |r| r.len() - 1);
    for _ in 0..100_000 {
        let entering = (0..allowed).find(|&j| {
            let z: f64 = basis.iter().zip(t.iter()).map(|(&bj, row)| cost[bj] * row[j]).sum();
            cost[j] - z < -1e-12
        });
        let Some(j) = entering else { return Ok(()) };
        let mut leave: Option<(usize, f64)> = None;
        for (r, row) in t.iter().enumerate() {
            if row[j] > PIVOT_EPS {
                let ratio = row[rhs] / row[j];
                let better = match leave {
                    None => true,
                    Some((lr, best)) => {
                        ratio < best - 1e-15 || ((ratio - best).abs() <= 1e-15 && basis[r] < basis[lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((r, _)) = leave else {
            return Err(Error::Invariant("transport LP unbounded".into()));
        };
        pivot(t, basis, r, j);
    }
    Err(Error::Invariant("simplex iteration limit reached".into()))
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, j: usize) {
    let p = t[r][j];
    t[r].iter_mut().for_each(|e| *e /= p);
    let prow = t[r].clone();
    for (k, row) in t.iter_mut().enumerate() {
        if k != r && row[j] != 0.0 {
            let f = row[j];
            row.iter_mut().zip(&prow).for_each(|(e, pe)| *e -= f * pe);
        }
    }
    basis[r] = j;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn atoms(xs: &[f64], ws: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::new(1, xs.to_vec(), vec![0.0; xs.len()], ws.to_vec()).unwrap()
    }

    const X: Coord = Coord::Position(0);

    #[test]
    fn identical_measures() {
        let mu = atoms(&[0.1, 0.7, 0.3], &[0.2, 0.5, 0.3]);
        assert_eq!(wasserstein1_1d(&mu, &mu, X), 0.0);
    }

    #[test]
    fn unit_shift() {
        assert_eq!(wasserstein1_1d(&atoms(&[0.0], &[1.0]), &atoms(&[1.0], &[1.0]), X), 1.0);
    }

    #[test]
    fn split_atom_against_midpoint() {
        let mu = atoms(&[0.0, 1.0], &[0.5, 0.5]);
        let nu = atoms(&[0.5], &[1.0]);
        assert!((wasserstein1_lp(&mu, &nu, &[X]).unwrap() - 0.5).abs() < 1e-12);
        assert!((wasserstein1_1d(&mu, &nu, X) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lp_in_two_dimensions() {
        // Two unit-distance diagonal swaps: the optimal plan pairs nearest atoms.
        let mu = EmpiricalMeasure::uniform(2, vec![0.0, 0.0, 3.0, 0.0], vec![0.0; 4]).unwrap();
        let nu = EmpiricalMeasure::uniform(2, vec![3.0, 1.0, 0.0, 1.0], vec![0.0; 4]).unwrap();
        let all = [Coord::Position(0), Coord::Position(1)];
        assert!((wasserstein1_lp(&mu, &nu, &all).unwrap() - 1.0).abs() < 1e-12);
    }

    fn weighted(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(-2.0f64..2.0, len),
            proptest::collection::vec(0.05f64..1.0, len),
        )
            .prop_map(|(xs, ws)| {
                let s: f64 = ws.iter().sum();
                let mut ws: Vec<f64> = ws.iter().map(|w| w / s).collect();
                let head: f64 = ws[1..].iter().sum();
                ws[0] = 1.0 - head;
                (xs, ws)
            })
    }

    proptest! {
        #[test]
        fn agrees_with_lp((xa, wa) in (1usize..=6).prop_flat_map(weighted),
                          (xb, wb) in (1usize..=6).prop_flat_map(weighted)) {
            let mu = atoms(&xa, &wa);
            let nu = atoms(&xb, &wb);
            let q = wasserstein1_1d(&mu, &nu, X);
            let lp = wasserstein1_lp(&mu, &nu, &[X]).unwrap();
            prop_assert!((q - lp).abs() < 1e-9, "quantile {} lp {}", q, lp);
        }

        #[test]
        fn metric_properties((xa, wa) in (1usize..=8).prop_flat_map(weighted),
                             (xb, wb) in (1usize..=8).prop_flat_map(weighted),
                             (xc, wc) in (1usize..=8).prop_flat_map(weighted),
                             shift in -3.0f64..3.0) {
            let (a, b, c) = (atoms(&xa, &wa), atoms(&xb, &wb), atoms(&xc, &wc));
            let ab = wasserstein1_1d(&a, &b, X);
            prop_assert!((ab - wasserstein1_1d(&b, &a, X)).abs() < 1e-12);
            prop_assert!(ab <= wasserstein1_1d(&a, &c, X) + wasserstein1_1d(&c, &b, X) + 1e-10);
            let xs_a: Vec<f64> = xa.iter().map(|x| x + shift).collect();
            let xs_b: Vec<f64> = xb.iter().map(|x| x + shift).collect();
            let shifted = wasserstein1_1d(&atoms(&xs_a, &wa), &atoms(&xs_b, &wb), X);
            prop_assert!((shifted - ab).abs() < 1e-12);
        }
    }
}
