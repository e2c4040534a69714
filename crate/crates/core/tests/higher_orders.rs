use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use tiered_core::bath::{DampedMode, Environment, Thermal};
use tiered_core::higher_orders::{theta_series, MomentIndex, MomentSolver};
use tiered_core::influence::{evolve, theta_quadrature, TimeGrid};
use tiered_core::oracle::{lindblad_evolve, FockConfig};
use tiered_core::su_basis::PVector;
use tiered_core::system::SystemModel;

fn weak_mode() -> (SystemModel, DampedMode, Thermal) {
    let delta = std::f64::consts::FRAC_PI_2;
    (SystemModel::spin_boson(0.0, delta), DampedMode::new(1.05 * delta, 0.1, 0.001), Thermal::from_kt(6.546).unwrap())
}

fn max_norm(a: &[DMatrix<C64>]) -> f64 {
    a.iter().map(|m| m.iter().map(|z| z.norm()).fold(0.0, f64::max)).fold(0.0, f64::max)
}

#[test]
fn second_moment_equals_quadrature_theta() {
    let (model, mode, th) = weak_mode();
    let grid = TimeGrid::new(0.01, 20.0).unwrap();
    let series = theta_series(&[mode], &model, &th, &grid, 2).unwrap();
    let env = Environment::single_mode(mode, th);
    let samples = env.kernel().unwrap().sample_uniform(grid.dt, grid.len);
    let quad = theta_quadrature(&model, &samples, &grid).unwrap();
    let diff = series.theta2.max_abs_diff(&quad);
    assert!(diff <= 1e-6, "{diff}");
}

#[test]
fn fourth_order_is_relatively_small_at_weak_coupling() {
    let model = SystemModel::spin_boson(0.0, 1.0);
    let th = Thermal::from_kt(1.0).unwrap();
    let grid = TimeGrid::new(0.02, 5.0).unwrap();
    let ratio = |g: f64| {
        let s = theta_series(&[DampedMode::new(1.2, g, 0.3)], &model, &th, &grid, 4).unwrap();
        let k = grid.len - 1;
        s.theta4.unwrap().theta[k].norm() / s.theta2.theta[k].norm()
    };
    let (r1, r2) = (ratio(0.01), ratio(0.02));
    assert!(r1 < 1e-2);
    // O(g^2): doubling g quadruples the ratio
    assert!((r2 / r1 - 4.0).abs() < 1e-6, "{}", r2 / r1);
}

#[test]
fn fourth_order_is_not_additive_over_modes() {
    let model = SystemModel::spin_boson(0.2, 1.0);
    let th = Thermal::from_kt(1.0).unwrap();
    let grid = TimeGrid::new(0.02, 4.0).unwrap();
    let a = DampedMode::new(0.9, 0.2, 0.2);
    let b = DampedMode::new(1.3, 0.15, 0.1);
    let sa = theta_series(&[a], &model, &th, &grid, 4).unwrap();
    let sb = theta_series(&[b], &model, &th, &grid, 4).unwrap();
    let sab = theta_series(&[a, b], &model, &th, &grid, 4).unwrap();
    assert!(sab.theta2.max_abs_diff(&sa.theta2.add(&sb.theta2).unwrap()) < 1e-12);
    let sum4 = sa.theta4.unwrap().add(sb.theta4.as_ref().unwrap()).unwrap();
    let cross = sab.theta4.unwrap().max_abs_diff(&sum4);
    assert!(cross > 1e-6, "{cross}");
}

#[test]
fn odd_orders_vanish_for_weak_mode_mode() {
    let (model, mode, th) = weak_mode();
    let grid = TimeGrid::new(0.01, 10.0).unwrap();
    let mut s = MomentSolver::new(&model, &[mode], &th, &grid).unwrap();
    for n in [1, 3] {
        let m = s.chi(n, &MomentIndex::zero(1)).unwrap();
        assert!(m.map_or(0.0, |v| max_norm(&v)) <= 1e-14);
    }
}

#[test]
fn fourth_order_moves_toward_the_oracle() {
    let model = SystemModel::spin_boson(0.0, 1.0);
    let th = Thermal::from_kt(1.0).unwrap();
    let mode = DampedMode::new(1.0, 0.12, 0.4);
    let grid = TimeGrid::new(0.02, 8.0).unwrap();
    let rho0 = PVector::from_expectations(2, &[0.0, 0.0, 1.0]).unwrap();
    let s = theta_series(&[mode], &model, &th, &grid, 4).unwrap();
    let t2 = evolve(&model, &s.theta2, &rho0).unwrap();
    let t4 = evolve(&model, &s.total(), &rho0).unwrap();
    let mut cfg = FockConfig::new(vec![mode], 14);
    cfg.rtol = 1e-10;
    cfg.atol = 1e-12;
    let ex = lindblad_evolve(&model, &cfg, &th, &rho0, &grid.times()).unwrap();
    let dev = |tr: &tiered_core::influence::ReducedTrajectory| {
        (0..grid.len)
            .flat_map(|k| (0..3).map(move |i| (k, i)))
            .map(|(k, i)| (tr.states[k].coeffs[i] - ex.states[k].coeffs[i]).abs())
            .fold(0.0, f64::max)
    };
    let (d2, d4) = (dev(&t2), dev(&t4));
    println!("second order {d2:.3e}, fourth order {d4:.3e}");
    assert!(d4 < d2);
}
