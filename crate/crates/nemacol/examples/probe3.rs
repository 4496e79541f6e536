use nemacol::solver::Scenario;
use nemacol::Solver;
fn main() {
    let mut sc = Scenario::small_swirl();
    sc.t_end = 1.0;
    let mut solver = Solver::new(&sc).unwrap();
    let g = nemacol::Grid::new(sc.body_radius, sc.r_outer, sc.n_r, sc.n_theta).unwrap();
    let mut s = solver.initial_state().unwrap();
    for k in 0..1000 {
        s = solver.step(&s).unwrap();
        if k % 100 == 99 {
            println!("step {}: pmean {:.3e} pmax {:.3e}", k + 1,
                g.integrate(&s.p).unwrap() / g.area(), s.p.max_abs());
        }
    }
}
