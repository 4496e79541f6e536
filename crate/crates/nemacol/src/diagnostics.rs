//! Scalar functionals of the system state: energy and its components,
//! dissipation, director norm drift, distance-to-equilibrium residual,
//! exponential decay-rate fitting, and the particle-boundary gap.

use crate::grid::{AnnulusGrid, DirectorField, ScalarField};
use crate::operators;
use crate::real::Real;
use crate::solver::{Solver, SystemState};
use crate::Error;

/// One time-series sample. Field order matches [`CSV_HEADER`].
#[derive(Clone, Copy, Debug)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub e: f64,
    pub e_kin: f64,
    pub e_pot: f64,
    pub e_trans: f64,
    pub e_rot: f64,
    pub dissipation: f64,
    pub director_drift: f64,
    pub eq_residual: f64,
    pub l_norm: f64,
    pub omega_norm: f64,
    pub h_norm: f64,
    pub gap: f64,
    pub div_max: f64,
    pub p_mean: f64,
}

pub const CSV_HEADER: &str = "t,E,E_kin,E_pot,E_trans,E_rot,dissipation,director_drift,eq_residual,l_norm,omega_norm,h_norm,gap,div_max,p_mean";

impl DiagnosticsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.t,
            self.e,
            self.e_kin,
            self.e_pot,
            self.e_trans,
            self.e_rot,
            self.dissipation,
            self.director_drift,
            self.eq_residual,
            self.l_norm,
            self.omega_norm,
            self.h_norm,
            self.gap,
            self.div_max,
            self.p_mean,
        )
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.e,
            self.e_kin,
            self.e_pot,
            self.e_trans,
            self.e_rot,
            self.dissipation,
            self.director_drift,
            self.eq_residual,
            self.l_norm,
            self.omega_norm,
            self.h_norm,
            self.gap,
            self.div_max,
            self.p_mean,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Total energy and its four components. The kinetic term is evaluated in
/// the physical representation `u = J_X v` (the volume element is trivial
/// because the change of variables preserves volume); the elastic term is
/// the metric-weighted Dirichlet energy of the director, which equals the
/// physical Dirichlet energy for the same reason.
pub fn energy<R: Real>(
    solver: &Solver<R>,
    s: &SystemState<R>,
) -> Result<(f64, f64, f64, f64, f64), Error> {
    let g = &solver.grid;
    let n = g.n_nodes();
    let half = R::of(0.5);
    let mut kin = vec![R::zero(); n];
    for i in 0..n {
        let u = s.transform.j_x[i] * nalgebra::Vector2::new(s.v.x[i], s.v.y[i]);
        kin[i] = half * (u.x * u.x + u.y * u.y);
    }
    let e_kin = g.integrate(&ScalarField(kin))?;
    let mut pot = vec![R::zero(); n];
    for l in 0..3 {
        let (dx, dy) = g.dx_dy(&s.d.c[l]);
        for i in 0..n {
            let gu = s.transform.g_up[i];
            pot[i] += gu[(0, 0)] * dx[i] * dx[i]
                + R::of(2.0) * gu[(0, 1)] * dx[i] * dy[i]
                + gu[(1, 1)] * dy[i] * dy[i];
        }
    }
    let e_pot = half * solver.params.lambda * g.integrate(&ScalarField(pot))?;
    let e_trans = half * solver.body.mass * s.rigid.ell.norm_squared();
    let e_rot = half * solver.body.inertia * s.rigid.omega * s.rigid.omega;
    let (e_kin, e_pot, e_trans, e_rot) = (
        e_kin.to_f64_lossy(),
        e_pot.to_f64_lossy(),
        e_trans.to_f64_lossy(),
        e_rot.to_f64_lossy(),
    );
    Ok((e_kin + e_pot + e_trans + e_rot, e_kin, e_pot, e_trans, e_rot))
}

/// Instantaneous dissipation rate: the viscous term `mu * |grad u|^2`
/// (physical velocity gradient reconstructed through the transform) plus
/// the relaxational term `(lambda^2/gamma) * |Lap d + |grad d|^2 d|^2`
/// evaluated with the transformed operators.
pub fn dissipation<R: Real>(solver: &Solver<R>, s: &SystemState<R>) -> Result<f64, Error> {
    let g = &solver.grid;
    let n = g.n_nodes();
    // physical u = J_X v as grid fields, then grad u pulled back:
    // d(u_i)/dx_k = sum_j d(u_i)/dy_j (J_X^{-1})_{jk}
    let mut ux = vec![R::zero(); n];
    let mut uy = vec![R::zero(); n];
    for i in 0..n {
        let u = s.transform.j_x[i] * nalgebra::Vector2::new(s.v.x[i], s.v.y[i]);
        ux[i] = u.x;
        uy[i] = u.y;
    }
    let (uxx, uxy) = g.dx_dy(&ux);
    let (uyx, uyy) = g.dx_dy(&uy);
    let mut visc = vec![R::zero(); n];
    for i in 0..n {
        let ji = s.transform.j_x_inv[i];
        let rows = [[uxx[i], uxy[i]], [uyx[i], uyy[i]]];
        for row in rows {
            for k in 0..2 {
                let gik = row[0] * ji[(0, k)] + row[1] * ji[(1, k)];
                visc[i] += gik * gik;
            }
        }
    }
    let viscous = solver.params.mu * g.integrate(&ScalarField(visc))?;
    let relax = director_residual_norm_sq(solver, s)?;
    let coeff = solver.params.lambda * solver.params.lambda / solver.params.gamma;
    Ok((viscous + coeff * relax).to_f64_lossy())
}

/// `int |L2 d + |grad d|^2_g (d + d_star)|^2` — the squared residual of the
/// transformed harmonic-map equation.
fn director_residual_norm_sq<R: Real>(
    solver: &Solver<R>,
    s: &SystemState<R>,
) -> Result<R, Error> {
    let g = &solver.grid;
    let n = g.n_nodes();
    let l2d = operators::l2(g, &s.transform, &s.d)?;
    let mut w = vec![R::zero(); n];
    let mut derivs = Vec::with_capacity(3);
    for l in 0..3 {
        let d = g.dx_dy(&s.d.c[l]);
        for i in 0..n {
            let gu = s.transform.g_up[i];
            w[i] += gu[(0, 0)] * d.0[i] * d.0[i]
                + R::of(2.0) * gu[(0, 1)] * d.0[i] * d.1[i]
                + gu[(1, 1)] * d.1[i] * d.1[i];
        }
        derivs.push(d);
    }
    let ds = solver.d_star_components();
    let mut sq = vec![R::zero(); n];
    for l in 0..3 {
        for i in 0..n {
            let res = l2d.c[l][i] + w[i] * (s.d.c[l][i] + ds[l]);
            sq[i] += res * res;
        }
    }
    g.integrate(&ScalarField(sq))
}

/// Maximum deviation of the physical director norm from 1.
pub fn director_drift<R: Real>(solver: &Solver<R>, d: &DirectorField<R>) -> f64 {
    let ds = solver.d_star_components();
    let mut drift = R::zero();
    for i in 0..d.c[0].len() {
        let mut nn = R::zero();
        for l in 0..3 {
            let b = d.c[l][i] + ds[l];
            nn += b * b;
        }
        drift = num_traits::Float::max(
            drift,
            num_traits::Float::abs(num_traits::Float::sqrt(nn) - R::one()),
        );
    }
    drift.to_f64_lossy()
}

/// Distance to the equilibria set: L2 norm of the harmonic-map residual,
/// plus the boundary normal-derivative residual of the director, plus the
/// fluid and rigid velocity norms.
pub fn equilibrium_residual<R: Real>(
    solver: &Solver<R>,
    s: &SystemState<R>,
) -> Result<f64, Error> {
    let g = &solver.grid;
    let harmonic = num_traits::Float::sqrt(director_residual_norm_sq(solver, s)?);
    let mut neumann = R::zero();
    let mut count = 0usize;
    for l in 0..3 {
        let dr = g.dr_of(&s.d.c[l]);
        for j in 0..g.n_theta {
            let a = dr[g.idx(0, j)];
            let b = dr[g.idx(g.n_r, j)];
            neumann += a * a + b * b;
            count += 2;
        }
    }
    let neumann = num_traits::Float::sqrt(neumann / R::from_usize_lossy(count));
    let vx = g.l2_norm(&s.v.x);
    let vy = g.l2_norm(&s.v.y);
    let vnorm = num_traits::Float::sqrt(vx * vx + vy * vy);
    let rigid = s.rigid.ell.norm() + num_traits::Float::abs(s.rigid.omega);
    Ok((harmonic + neumann + vnorm + rigid).to_f64_lossy())
}

/// Result of an exponential fit `y(t) ~ c * exp(-eta * t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub c: f64,
    pub eta: f64,
    /// true when nonpositive samples forced the fit onto a positive prefix
    pub truncated: bool,
}

/// Least-squares log-linear fit over the tail of the series (last
/// `tail_fraction` of the time window; 0.5 by default use). Nonpositive
/// tail values restrict the fit to the positive prefix of the tail.
pub fn decay_fit(series: &[(f64, f64)], tail_fraction: f64) -> Result<DecayFit, Error> {
    if series.len() < 2 {
        return Err(Error::Validation(
            "decay fit needs at least two samples".into(),
        ));
    }
    let t0 = series[0].0;
    let t1 = series[series.len() - 1].0;
    let cut = t1 - tail_fraction.clamp(0.0, 1.0) * (t1 - t0);
    let tail: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| t >= cut).collect();
    let mut truncated = false;
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(tail.len());
    for (t, y) in tail {
        if y <= 0.0 {
            truncated = true;
            break;
        }
        pts.push((t, y.ln()));
    }
    if pts.len() < 2 {
        return Err(Error::Validation(
            "decay fit: fewer than two positive tail samples".into(),
        ));
    }
    let n = pts.len() as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for &(t, ly) in &pts {
        st += t;
        sy += ly;
        stt += t * t;
        sty += t * ly;
    }
    let denom = n * stt - st * st;
    if denom.abs() < f64::EPSILON * n * stt.max(1.0) {
        return Err(Error::Validation(
            "decay fit: degenerate time samples".into(),
        ));
    }
    let slope = (n * sty - st * sy) / denom;
    let intercept = (sy - slope * st) / n;
    Ok(DecayFit {
        c: intercept.exp(),
        eta: -slope,
        truncated,
    })
}

/// Particle-boundary distance for the concentric-start disk geometry.
pub fn gap<R: Real>(r_outer: R, body_radius: R, h: nalgebra::Vector2<R>) -> f64 {
    (r_outer - (h.norm() + body_radius)).to_f64_lossy()
}

/// Split a director field into its area average and the mean-zero
/// remainder.
pub fn mean_split<R: Real>(
    grid: &AnnulusGrid<R>,
    d: &DirectorField<R>,
) -> Result<(DirectorField<R>, [R; 3]), Error> {
    let area = grid.area();
    let mut avg = [R::zero(); 3];
    let mut d_m = d.clone();
    for l in 0..3 {
        avg[l] = grid.integrate(&ScalarField(d.c[l].clone()))? / area;
        for v in d_m.c[l].iter_mut() {
            *v -= avg[l];
        }
    }
    Ok((d_m, avg))
}

/// Assemble the full diagnostics row for one state.
pub fn row<R: Real>(solver: &Solver<R>, s: &SystemState<R>) -> Result<DiagnosticsRow, Error> {
    let g = &solver.grid;
    let (e, e_kin, e_pot, e_trans, e_rot) = energy(solver, s)?;
    let diss = dissipation(solver, s)?;
    let drift = director_drift(solver, &s.d);
    let eq = equilibrium_residual(solver, s)?;
    let div = g.div(&s.v)?;
    let mut div_max = R::zero();
    for i in 1..g.n_r {
        for j in 0..g.n_theta {
            div_max = num_traits::Float::max(
                div_max,
                num_traits::Float::abs(div.0[g.idx(i, j)]),
            );
        }
    }
    let p_mean = g.integrate(&s.p)? / g.area();
    let gap_v = gap(g.r_outer, R::of(solver.scenario.body_radius), s.rigid.h);
    let row = DiagnosticsRow {
        t: s.t.to_f64_lossy(),
        e,
        e_kin,
        e_pot,
        e_trans,
        e_rot,
        dissipation: diss,
        director_drift: drift,
        eq_residual: eq,
        l_norm: s.rigid.ell.norm().to_f64_lossy(),
        omega_norm: num_traits::Float::abs(s.rigid.omega).to_f64_lossy(),
        h_norm: s.rigid.h.norm().to_f64_lossy(),
        gap: gap_v,
        div_max: div_max.to_f64_lossy(),
        p_mean: p_mean.to_f64_lossy(),
    };
    if !row.is_finite() {
        return Err(Error::Solver(format!(
            "non-finite diagnostics at t = {}",
            row.t
        )));
    }
    if row.gap <= 0.0 {
        return Err(Error::GapViolation(format!(
            "particle touched the wall: gap {} at t = {}",
            row.gap, row.t
        )));
    }
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Scenario;

    fn equilibrium_solver() -> Solver<f64> {
        Solver::new(&Scenario::equilibrium()).unwrap()
    }

    #[test]
    fn equilibrium_energy_and_dissipation_vanish() {
        let solver = equilibrium_solver();
        let s = solver.initial_state().unwrap();
        let (e, k, p, tr, ro) = energy(&solver, &s).unwrap();
        assert_eq!((e, k, p, tr, ro), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(dissipation(&solver, &s).unwrap(), 0.0);
        assert!(equilibrium_residual(&solver, &s).unwrap() < 1e-14);
        assert_eq!(director_drift(&solver, &s.d), 0.0);
    }

    #[test]
    fn translational_energy_of_rigid_motion() {
        let solver = equilibrium_solver();
        let mut s = solver.initial_state().unwrap();
        let a = 0.3;
        s.rigid.ell.x = a;
        let (_, _, _, e_trans, e_rot) = energy(&solver, &s).unwrap();
        let m = std::f64::consts::PI * 0.25_f64.powi(2);
        assert!((e_trans - 0.5 * m * a * a).abs() < 1e-14);
        assert_eq!(e_rot, 0.0);
    }

    #[test]
    fn elastic_energy_matches_closed_form() {
        // planar profile d1 = sin(a(r)), d3 = cos(a(r)) - 1 about
        // d_star = e3, with a depending on r only:
        // |grad dbar|^2 = a'(r)^2, so E_pot = (lambda/2) * 2pi
        // int a'(r)^2 r dr. Take a(r) = eps * (r - R_S)^2 (cheap closed form;
        // profile need not satisfy the Neumann condition for this check).
        let solver = equilibrium_solver();
        let g = &solver.grid;
        let eps = 0.1;
        let mut s = solver.initial_state().unwrap();
        for i in 0..=g.n_r {
            let r = g.r[i];
            let a = eps * (r - g.r_inner).powi(2);
            for j in 0..g.n_theta {
                let n = g.idx(i, j);
                s.d.c[0][n] = a.sin();
                s.d.c[2][n] = a.cos() - 1.0;
            }
        }
        let (_, _, e_pot, _, _) = energy(&solver, &s).unwrap();
        // int (2 eps (r - ri))^2 r dr over the annulus
        let (ri, ro) = (g.r_inner, g.r_outer);
        let exact = {
            let f = |r: f64| {
                4.0 * eps * eps
                    * (r.powi(4) / 4.0 - 2.0 * ri * r.powi(3) / 3.0 + ri * ri * r * r / 2.0)
            };
            std::f64::consts::PI * (f(ro) - f(ri))
        };
        let rel = (e_pot - exact).abs() / exact;
        assert!(rel < 1e-3, "e_pot {e_pot:.6e} exact {exact:.6e} rel {rel:.2e}");
    }

    #[test]
    fn scaled_director_has_matching_drift() {
        let solver = equilibrium_solver();
        let g = &solver.grid;
        let mut d = crate::grid::DirectorField::zeros(g);
        // physical director 1.01 * d_star
        for v in d.c[2].iter_mut() {
            *v = 0.01;
        }
        assert!((director_drift(&solver, &d) - 0.01).abs() < 1e-14);
    }

    #[test]
    fn nonequilibrium_director_dissipates() {
        let solver = equilibrium_solver();
        let mut s = solver.initial_state().unwrap();
        let g = &solver.grid;
        for i in 0..g.n_nodes() {
            let [x, _] = [g.node(i / g.n_theta, i % g.n_theta)[0], 0.0];
            s.d.c[0][i] = 0.05 * (x * 0.7).sin();
        }
        assert!(dissipation(&solver, &s).unwrap() > 0.0);
    }

    #[test]
    fn decay_fit_recovers_exact_exponential() {
        let series: Vec<(f64, f64)> = (0..200)
            .map(|k| {
                let t = 0.05 * k as f64;
                (t, 3.0 * (-0.7 * t).exp())
            })
            .collect();
        let fit = decay_fit(&series, 0.5).unwrap();
        assert!((fit.c - 3.0).abs() < 1e-10, "c = {}", fit.c);
        assert!((fit.eta - 0.7).abs() < 1e-10, "eta = {}", fit.eta);
        assert!(!fit.truncated);
    }

    #[test]
    fn decay_fit_of_constant_series_is_zero_rate() {
        let series: Vec<(f64, f64)> =
            (0..50).map(|k| (0.1 * k as f64, 2.5)).collect();
        let fit = decay_fit(&series, 0.5).unwrap();
        assert!(fit.eta.abs() < 1e-12);
        assert!((fit.c - 2.5).abs() < 1e-12);
    }

    #[test]
    fn decay_fit_is_scale_equivariant() {
        let series: Vec<(f64, f64)> = (0..100)
            .map(|k| {
                let t = 0.1 * k as f64;
                (t, (-0.3 * t).exp() * (1.0 + 0.05 * (5.0 * t).sin()))
            })
            .collect();
        let scaled: Vec<(f64, f64)> =
            series.iter().map(|&(t, y)| (t, 4.0 * y)).collect();
        let f1 = decay_fit(&series, 0.5).unwrap();
        let f2 = decay_fit(&scaled, 0.5).unwrap();
        assert!((f2.eta - f1.eta).abs() < 1e-12);
        assert!((f2.c / f1.c - 4.0).abs() < 1e-10);
    }

    #[test]
    fn decay_fit_flags_nonpositive_tail() {
        let mut series: Vec<(f64, f64)> = (0..40)
            .map(|k| {
                let t = 0.1 * k as f64;
                (t, (-0.5 * t).exp())
            })
            .collect();
        series[35].1 = 0.0;
        let fit = decay_fit(&series, 0.5).unwrap();
        assert!(fit.truncated);
        assert!(fit.eta > 0.0);
    }

    #[test]
    fn gap_for_concentric_and_touching_configurations() {
        assert!((gap(3.0_f64, 0.5, nalgebra::Vector2::zeros()) - 2.5).abs() < 1e-15);
        assert!(gap(3.0_f64, 0.5, nalgebra::Vector2::new(2.5, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn mean_split_is_a_projection() {
        let solver = equilibrium_solver();
        let g = &solver.grid;
        let d = crate::grid::DirectorField::from_fn(g, |x, y| {
            [0.3 + 0.1 * (x).sin(), -0.2 + 0.05 * y, 0.7]
        });
        let (dm, avg) = mean_split(g, &d).unwrap();
        for l in 0..3 {
            let m = g
                .integrate(&crate::grid::ScalarField(dm.c[l].clone()))
                .unwrap();
            assert!(m.abs() < 1e-12, "component {l} mean {m:.2e}");
        }
        // applying the split to the mean-zero part returns (d_m, 0)
        let (dm2, avg2) = mean_split(g, &dm).unwrap();
        for l in 0..3 {
            assert!(avg2[l].abs() < 1e-13);
            for i in 0..g.n_nodes() {
                assert!((dm2.c[l][i] - dm.c[l][i]).abs() < 1e-12);
            }
        }
        // constant field: d_m = 0, avg = the constant
        let c = crate::grid::DirectorField::from_fn(g, |_, _| [0.4, -0.1, 0.9]);
        let (cm, cavg) = mean_split(g, &c).unwrap();
        assert!((cavg[0] - 0.4).abs() < 1e-13 && (cavg[2] - 0.9).abs() < 1e-13);
        for l in 0..3 {
            assert!(cm.c[l].iter().all(|v| v.abs() < 1e-12));
        }
        let _ = avg;
    }
}
