use std::f64::consts::PI;

use hibler_core::discretization::{FieldSet, Grid};
use hibler_core::dynamics::{composite_distance, run, ForcingInputs, NoObserver, StepperConfig};
use hibler_core::rheology::RheologyParams;
use hibler_core::verify::scaled_params;

fn initial(grid: &Grid<f64>) -> FieldSet<f64> {
    let mut v = FieldSet::equilibrium(grid, 1.0, 0.9);
    v.u1 = grid.sample(|x, y| 0.05 * (PI * x).sin() * (PI * y).sin());
    v.u2 = grid.sample(|x, y| -0.03 * (PI * x).sin() * (2.0 * PI * y).sin());
    v.h = grid.sample(|x, y| 1.0 + 0.05 * (PI * x).cos() + 0.02 * (PI * y).cos());
    v.a = grid.sample(|x, _| 0.9 + 0.03 * (PI * x).cos());
    v.enforce_dirichlet(grid);
    v
}

fn final_state(grid: &Grid<f64>, params: &RheologyParams<f64>, dt: f64) -> FieldSet<f64> {
    let cfg = StepperConfig {
        dt,
        t_end: 0.08,
        ..Default::default()
    };
    run(
        &initial(grid),
        grid,
        &ForcingInputs::none(grid),
        params,
        &cfg,
        None,
        &mut NoObserver,
    )
    .unwrap()
    .final_state
}

#[test]
fn backward_euler_is_first_order_in_time() {
    let params = RheologyParams {
        delta: 1e-2,
        c_cor: 1.0,
        ..scaled_params()
    };
    let grid = Grid::new(11, 11, 1.0, 1.0).unwrap();
    let dt = 0.01;
    let reference = final_state(&grid, &params, dt / 64.0);
    let e1 = composite_distance(&grid, &final_state(&grid, &params, dt), &reference);
    let e2 = composite_distance(&grid, &final_state(&grid, &params, dt / 2.0), &reference);
    let e4 = composite_distance(&grid, &final_state(&grid, &params, dt / 4.0), &reference);
    // the reference carries an O(dt/64) error of its own
    let order = (e1 / e2).log2();
    assert!((order - 1.0).abs() < 0.2, "errors {e1:e} {e2:e} {e4:e}");
    assert!(e4 < e2);
}
