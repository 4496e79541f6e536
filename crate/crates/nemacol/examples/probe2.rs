use nemacol::solver::{Scenario, Solver};
fn main() {
    let mut sc = Scenario::small_swirl();
    sc.t_end = 0.01;
    let mut solver = Solver::<f64>::new(&sc).unwrap();
    let g = nemacol::Grid::new(sc.body_radius, sc.r_outer, sc.n_r, sc.n_theta).unwrap();
    let mut s = solver.initial_state().unwrap();
    for k in 0..200 {
        s = solver.step(&s).unwrap();
        if k % 40 == 39 { println!("step {}: pmean {:.3e} pmax {:.3e}", k, g.integrate(&s.p).unwrap() / g.area(), s.p.max_abs()); }
    }
    let m = g.integrate(&s.p).unwrap() / g.area();
    let mut p2 = s.p.clone();
    for v in p2.0.iter_mut() { *v -= m; }
    let m2 = g.integrate(&p2).unwrap() / g.area();
    println!("mean before recenter: {m:.3e}, after: {m2:.3e}, |p| {:.3e}", s.p.max_abs());
    println!("area analytic {:.15e} vs integrate(1) {:.15e}", g.area(),
        g.integrate(&nemacol::grid::ScalarField(vec![1.0; g.n_nodes()])).unwrap());
}
