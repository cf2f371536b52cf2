use super::*;
use crate::dynamics::{ConstantControl, InteractionKernel};

fn spec(n: usize) -> GridSpec {
    GridSpec::new(-1.0, 2.0, -1.0, 2.0, n, n).unwrap()
}

fn unit_box(n: usize) -> PhaseGrid {
    PhaseGrid::from_uniform_box(spec(n), (0.0, 1.0), (0.0, 1.0)).unwrap()
}

fn boxed(x: (f64, f64), v: (f64, f64), nx: usize, nv: usize) -> PhaseGrid {
    let s = GridSpec::new(x.0, x.1, v.0, v.1, nx, nv).unwrap();
    PhaseGrid::from_uniform_box(s, (0.0, 1.0), (0.0, 1.0)).unwrap()
}

fn free() -> InteractionKernel {
    InteractionKernel::constant(0.0).unwrap()
}

#[test]
fn exact_overlap_initial_density() {
    let s = GridSpec::new(0.0, 1.0, 0.0, 1.0, 10, 10).unwrap();
    let g = PhaseGrid::from_uniform_box(s, (0.05, 0.55), (0.2, 0.7)).unwrap();
    assert!((g.total_mass() - 1.0).abs() < 1e-14);
    // Cell 0 in x overlaps the box on [0.05, 0.1]: half its width.
    let full = 1.0 / 0.25;
    assert!((g.density(0, 3) - 0.5 * full).abs() < 1e-12);
    assert!((g.density(2, 3) - full).abs() < 1e-12);
    assert_eq!(g.density(6, 3), 0.0);
    assert!(PhaseGrid::from_uniform_box(s, (0.5, 1.5), (0.2, 0.7)).is_err());
}

#[test]
fn bad_specs_rejected() {
    assert!(GridSpec::new(1.0, 0.0, 0.0, 1.0, 10, 10).is_err());
    assert!(GridSpec::new(0.0, 1.0, 0.0, 1.0, 3, 10).is_err());
    assert!(PhaseGrid::from_cells(spec(8), vec![0.0; 3]).is_err());
    let mut d = vec![0.0; 64];
    d[9] = -1.0;
    assert!(matches!(PhaseGrid::from_cells(spec(8), d), Err(Error::NegativeDensity { i: 1, j: 1, .. })));
}

#[test]
fn free_transport_leaves_velocity_marginal_alone() {
    let g0 = boxed((-2.0, 5.0), (-0.5, 1.5), 70, 40);
    let run = grid_advance(&g0, &free(), None, 0.0, 0.4, &GridRunConfig::default()).unwrap();
    for (a, b) in g0.v_marginal().iter().zip(run.grid.v_marginal()) {
        assert!((a - b).abs() < 1e-14);
    }
    assert!(run.steps > 10);
}

#[test]
fn constant_deceleration_translates_velocity_marginal() {
    let g0 = boxed((-2.0, 3.0), (-2.0, 1.5), 50, 140);
    let u = ConstantControl(vec![-1.0]);
    let tau = 0.3;
    let run = grid_advance(&g0, &free(), Some(&u), 0.0, tau, &GridRunConfig::default()).unwrap();
    // Oracle: the initial cell-centre atoms shifted by -tau.
    let shifted = g0.to_measure().unwrap().translated(&[0.0], &[-tau], 0.0);
    let atoms = run.grid.to_measure().unwrap();
    let w = wasserstein1_1d(&atoms, &shifted, Coord::Velocity(0));
    assert!(w <= g0.spec().dv(), "{w}");
    let mean: f64 = atoms.marginal(Coord::Velocity(0)).map(|(v, m)| v * m).sum();
    assert!((mean - (0.5 - tau)).abs() < 1e-10, "{mean}");
}

#[test]
fn mass_conserved_over_a_thousand_steps() {
    let s = GridSpec::new(-6.0, 14.0, -3.0, 4.0, 80, 56).unwrap();
    let mut g = PhaseGrid::from_uniform_box(s, (-0.5, 0.5), (0.0, 1.0)).unwrap();
    let k = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
    let u = ConstantControl(vec![-0.2]);
    let m0 = g.total_mass();
    for n in 0..1000 {
        g = grid_step(&g, &k, Some(&u), n as f64 * 2e-3, 2e-3).unwrap();
        assert!(g.min_density() >= 0.0);
    }
    assert!(!g.near_boundary());
    assert!((g.total_mass() - m0).abs() < 1e-12, "{}", g.total_mass() - m0);
    assert!((m0 - 1.0).abs() < 1e-12);
    assert!(g.outflow().abs() < 1e-12);
}

#[test]
fn cfl_violation_is_an_error() {
    let g = unit_box(40);
    assert!(matches!(grid_step(&g, &free(), None, 0.0, 1.0), Err(Error::Cfl { .. })));
    assert!(grid_step(&g, &free(), None, 0.0, 0.0).is_err());
}

#[test]
fn boundary_contact_aborts() {
    let s = GridSpec::new(0.0, 1.2, 0.0, 1.2, 24, 24).unwrap();
    let g = PhaseGrid::from_uniform_box(s, (0.2, 0.8), (0.3, 1.0)).unwrap();
    let err = grid_advance(&g, &free(), None, 0.0, 1.0, &GridRunConfig::default()).unwrap_err();
    assert!(matches!(err, Error::BoundaryReached { .. }));
}

#[test]
fn velocity_support_spreads_at_most_one_cell_per_step() {
    let s = GridSpec::new(-3.0, 4.0, -1.5, 2.5, 56, 64).unwrap();
    let mut g = PhaseGrid::from_uniform_box(s, (0.0, 1.0), (0.0, 1.0)).unwrap();
    let k = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
    let (_, _, mut lo, mut hi) = g.occupied().unwrap();
    for n in 0..150 {
        g = grid_step(&g, &k, None, n as f64 * 5e-3, 5e-3).unwrap();
        let (_, _, l, h) = g.occupied().unwrap();
        assert!(l + 1 >= lo && h <= hi + 1, "step {n}: [{l}, {h}] from [{lo}, {hi}]");
        lo = l;
        hi = h;
    }
}

#[test]
fn radial_field_matches_direct_sum() {
    let s = GridSpec::new(-1.0, 2.0, -1.0, 2.0, 18, 14).unwrap();
    let g = PhaseGrid::from_uniform_box(s, (0.1, 0.9), (0.2, 0.7)).unwrap();
    let k = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
    let custom = InteractionKernel::custom("same", |dx, _| 1.0 / (1.0 + dx[0] * dx[0]), k.lipschitz()).unwrap();
    let a = interaction_field(&g, &k).unwrap();
    let b = interaction_field(&g, &custom).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-13, "{p} {q}");
    }
}

#[test]
fn quota_sample_is_within_a_cell_of_the_grid() {
    let g = unit_box(64);
    let p = g.quota_sample(5000).unwrap();
    assert_eq!(p.len(), 5000);
    let d = grid_vs_particle(&g, 0.0, &p, 0.0).unwrap();
    assert!(d.w1_x <= g.spec().dx() && d.w1_v <= g.spec().dv(), "{d:?}");
    assert!(grid_vs_particle(&g, 0.0, &p, 0.5).is_err());
}

#[test]
fn free_streaming_grid_tracks_particles() {
    let g0 = boxed((-1.0, 4.0), (-0.5, 1.5), 160, 64);
    let dt = 0.5 * g0.spec().dx() / 1.5;
    let cfg = GridRunConfig { cfl: 0.9, dt_max: dt };
    let run = grid_advance(&g0, &free(), None, 0.0, 1.0, &cfg).unwrap();
    let p0 = g0.quota_sample(20_000).unwrap();
    // Exact free streaming of the particles.
    let xs: Vec<f64> = (0..p0.len()).map(|k| p0.position(k)[0] + p0.velocity(k)[0]).collect();
    let p1 = EmpiricalMeasure::uniform(1, xs, p0.velocities().to_vec()).unwrap();
    let d = grid_vs_particle(&run.grid, run.t, &p1, 1.0).unwrap();
    let bound = 2.0 * (g0.spec().dx() + dt);
    assert!(d.max() <= bound, "{d:?} vs {bound}");
}

/// W1 between the grid's x-marginal (piecewise constant within cells) and
/// the free-streaming x-marginal of the uniform unit box at time `t`.
fn free_streaming_error(n: usize, t: f64) -> f64 {
    let g0 = boxed((-1.5, 4.5), (-0.25, 1.25), n, n / 4);
    let cfg = GridRunConfig { cfl: 0.9, dt_max: 0.4 * g0.spec().dx() / 1.25 };
    let run = grid_advance(&g0, &free(), None, 0.0, t, &cfg).unwrap();
    let s = *run.grid.spec();
    let col = run.grid.x_marginal();
    // Exact CDF: F(x) = int_0^1 clamp(x - v t, 0, 1) dv.
    let exact = |x: f64| {
        let k = 400;
        (0..k).map(|m| ((x - (m as f64 + 0.5) / k as f64 * t).clamp(0.0, 1.0)) / k as f64).sum::<f64>()
    };
    let sub = 16;
    let h = s.dx() / sub as f64;
    let mut cdf = 0.0;
    let mut err = 0.0;
    for (i, m) in col.iter().enumerate() {
        for q in 0..sub {
            let x = s.x_lo + i as f64 * s.dx() + (q as f64 + 0.5) * h;
            let fg = cdf + m * (q as f64 + 0.5) / sub as f64;
            err += (fg - exact(x)).abs() * h;
        }
        cdf += m;
    }
    err
}

#[test]
fn first_order_convergence_in_w1() {
    let e: Vec<f64> = [96, 192, 384].iter().map(|&n| free_streaming_error(n, 0.5)).collect();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..=2.4).contains(&ratio), "errors {e:?}");
    }
}

#[test]
fn snapshot_csv_layout() {
    let s = GridSpec::new(0.0, 1.0, 0.0, 1.0, 5, 6).unwrap();
    let g = PhaseGrid::from_uniform_box(s, (0.2, 0.8), (0.2, 0.8)).unwrap();
    let mut buf = Vec::new();
    g.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "i,j,x_center,v_center,density");
    assert_eq!(lines.len(), 31);
    assert!(lines[1].starts_with("0,0,1.0000000000000001e-1,"));
}

#[test]
fn deposit_and_step_grid() {
    let s = GridSpec::new(-1.0, 2.0, -1.0, 2.0, 30, 30).unwrap();
    let mu = EmpiricalMeasure::uniform(1, vec![0.15, 0.55], vec![0.25, 0.45]).unwrap();
    let g = PhaseGrid::deposit(s, &mu).unwrap();
    assert!((g.total_mass() - 1.0).abs() < 1e-14);
    assert!(g.density(11, 12) > 0.0);
    let far = EmpiricalMeasure::uniform(1, vec![5.0], vec![0.0]).unwrap();
    assert!(PhaseGrid::deposit(s, &far).is_err());
}
