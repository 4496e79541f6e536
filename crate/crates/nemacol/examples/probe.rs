use nemacol::solver::{Scenario, Solver};
use std::time::Instant;

fn main() {
    let mut sc = Scenario::small_swirl();
    sc.t_end = 0.01; // 50 steps at dt 2e-4
    let mut solver = Solver::<f64>::new(&sc).unwrap();
    let mut s = solver.initial_state().unwrap();
    let t0 = Instant::now();
    for _ in 0..50 {
        s = solver.step(&s).unwrap();
    }
    let el = t0.elapsed();
    println!("50 steps on {}x{}: {:?} total, {:?} per step", sc.n_r, sc.n_theta, el, el / 50);
    let row = nemacol::diagnostics::row(&solver, &s).unwrap();
    println!("E {:.4e} div_max {:.3e} p_mean {:.3e}", row.e, row.div_max, row.p_mean);
}
