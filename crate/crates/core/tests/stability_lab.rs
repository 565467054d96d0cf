use hibler_core::discretization::{assemble_hibler, Grid};
use hibler_core::dynamics::StepperConfig;
use hibler_core::rheology::RheologyParams;
use hibler_core::stability::{
    assemble_a0, decay_experiment, delta_sweep, kernel_residual, semisimplicity, spectrum,
    DecayConfig, Equilibrium, StabilityError,
};
use hibler_core::verify::{discrete_strain_norm_sq, korn_check, scaled_equilibrium, scaled_params};

#[test]
fn korn_bound_holds_for_random_fields() {
    let r = korn_check(17, 20, 3);
    assert!(r.passed(), "{r:?}");
    assert!(r.min_relative_margin > 0.0);
}

#[test]
fn korn_bound_is_attained_in_the_centred_limit() {
    // a single shear bubble saturates neither inequality, but the ratio
    // form / (k‖ε‖²) must stay ≥ 1 and bounded
    let params = scaled_params();
    let eq = scaled_equilibrium();
    let grid = Grid::new(21, 21, 1.0, 1.0).unwrap();
    let op = assemble_hibler(&eq.state(&grid), &grid, &params, 0.0).unwrap();
    let n = grid.n();
    let mut u = vec![0.0; 2 * n];
    for p in 0..n {
        let (x, y) = (grid.x(p % 21), grid.y(p / 21));
        u[p] = (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin();
    }
    let au = op.apply(&u);
    let form = grid.inner(&au[..n], &u[..n]) + grid.inner(&au[n..], &u[n..]);
    let k = eq.pressure(&params).value / (2.0 * params.delta.sqrt()) * 2.0 / (params.e * params.e);
    let ratio = form / (k * discrete_strain_norm_sq(&grid, &u[..n], &u[n..]));
    assert!((1.0..10.0).contains(&ratio), "{ratio}");
}

#[test]
fn velocity_block_spectrum_is_real_and_positive() {
    let params = scaled_params();
    let eq = scaled_equilibrium();
    let grid = Grid::new(9, 8, 1.0, 0.8).unwrap();
    let op = assemble_hibler(&eq.state(&grid), &grid, &params, 0.0).unwrap();
    let rep = spectrum(&op, true).unwrap();
    assert_eq!(rep.eigenvalues.len(), 2 * 7 * 6);
    assert_eq!(rep.kernel_dim, 0);
    assert!(rep.min_real > 0.0);
    assert!(rep.max_imag <= 1e-8 * rep.spectral_radius);
}

#[test]
fn linearisation_has_two_dimensional_semisimple_kernel() {
    let params = scaled_params();
    let eq = scaled_equilibrium();
    let grid = Grid::new(9, 9, 1.0, 1.0).unwrap();
    let a0 = assemble_a0(&eq, &grid, &params).unwrap();
    let rep = spectrum(&a0, true).unwrap();
    assert_eq!(rep.eigenvalues.len(), 4 * 81 - 2 * 32);
    assert_eq!(rep.kernel_dim, 2);
    assert!(rep.gap > 0.0);
    assert!(rep.max_imag <= 1e-8 * rep.spectral_radius);
    assert!(kernel_residual(&a0) <= 1e-12);
    let ss = semisimplicity(&a0).unwrap();
    assert!(ss.passes(1e-10), "{ss:?}");
}

#[test]
fn rotation_keeps_spectrum_in_closed_right_half_plane() {
    let params = RheologyParams {
        c_cor: 2.0,
        ..scaled_params()
    };
    let eq = Equilibrium::new(0.8, 0.5, &params).unwrap();
    let grid = Grid::new(8, 8, 1.0, 1.0).unwrap();
    let a0 = assemble_a0(&eq, &grid, &params).unwrap();
    let rep = spectrum(&a0, true).unwrap();
    assert!(rep.min_real >= -1e-10, "{}", rep.min_real);
    assert!(kernel_residual(&a0) <= 1e-12);
}

#[test]
fn delta_threshold_is_stable_under_refinement() {
    let params = scaled_params();
    let eq = scaled_equilibrium();
    let deltas: Vec<f64> = (-10..=2).map(|k| 10f64.powi(k)).collect();
    let index = |n: usize| {
        let grid = Grid::new(n, n, 1.0, 1.0).unwrap();
        let sweep = delta_sweep(&eq, &grid, &params, &deltas).unwrap();
        let t = sweep.threshold.expect("some δ is stable");
        deltas.iter().position(|d| *d == t).unwrap() as i64
    };
    assert!((index(7) - index(11)).abs() <= 1);
}

#[test]
fn decay_conserves_means_and_matches_gap() {
    let params = scaled_params();
    let eq = scaled_equilibrium();
    let grid = Grid::new(9, 9, 1.0, 1.0).unwrap();
    let cfg = DecayConfig {
        perturbation_scale: 1e-3,
        stepper: StepperConfig {
            dt: 2e-3,
            ..Default::default()
        },
        ..Default::default()
    };
    let r = decay_experiment(&eq, &grid, &params, &cfg).unwrap();
    let rate = r.fitted_rate.unwrap();
    assert!(((rate - r.predicted_gap) / r.predicted_gap).abs() < 0.2);
    assert!(r.limit_mismatch < 1e-8);
    // the perturbation norm decreases along the trajectory
    let d: Vec<f64> = r.trajectory.iter().map(|p| p.1).collect();
    assert!(d.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
}

#[test]
fn short_runs_fail_the_fit() {
    let params = scaled_params();
    let eq = scaled_equilibrium();
    let grid = Grid::new(6, 6, 1.0, 1.0).unwrap();
    let cfg = DecayConfig {
        stepper: StepperConfig {
            dt: 0.1,
            ..Default::default()
        },
        ..Default::default()
    };
    assert!(matches!(
        decay_experiment(&eq, &grid, &params, &cfg),
        Err(StabilityError::FitFailure { .. })
    ));
}
