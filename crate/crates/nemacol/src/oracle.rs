//! Independent brute-force references: an analytic field catalog with exact
//! derivatives, finite-difference checks of the grid operators, and the
//! pullback-identity convergence suite that validates every transformed
//! operator (including the Christoffel convention) against the physical
//! operator composed with the flow map.

use crate::grid::{AnnulusGrid, DirectorField, ScalarField, VectorField};
use crate::operators;
use crate::rigid::RigidState2D;
use crate::transform::{CutoffSpec, LiftField2D, TransformField};
use crate::Error;

/// Closed-form scalar profiles with exact derivatives up to second order.
#[derive(Clone, Copy, Debug)]
pub enum ScalarEntry {
    /// `c`
    Const(f64),
    /// `cx*x + cy*y`
    Linear { cx: f64, cy: f64 },
    /// `axx x^2 + axy x y + ayy y^2`
    Quadratic { axx: f64, axy: f64, ayy: f64 },
    /// `amp * sin(ax x) cos(by y)`
    SinCos { amp: f64, ax: f64, by: f64 },
    /// `amp * cos(a x)`
    CosX { amp: f64, a: f64 },
}

impl ScalarEntry {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match *self {
            ScalarEntry::Const(c) => c,
            ScalarEntry::Linear { cx, cy } => cx * x + cy * y,
            ScalarEntry::Quadratic { axx, axy, ayy } => axx * x * x + axy * x * y + ayy * y * y,
            ScalarEntry::SinCos { amp, ax, by } => amp * (ax * x).sin() * (by * y).cos(),
            ScalarEntry::CosX { amp, a } => amp * (a * x).cos(),
        }
    }

    pub fn grad(&self, x: f64, y: f64) -> [f64; 2] {
        match *self {
            ScalarEntry::Const(_) => [0.0, 0.0],
            ScalarEntry::Linear { cx, cy } => [cx, cy],
            ScalarEntry::Quadratic { axx, axy, ayy } => {
                [2.0 * axx * x + axy * y, axy * x + 2.0 * ayy * y]
            }
            ScalarEntry::SinCos { amp, ax, by } => [
                amp * ax * (ax * x).cos() * (by * y).cos(),
                -amp * by * (ax * x).sin() * (by * y).sin(),
            ],
            ScalarEntry::CosX { amp, a } => [-amp * a * (a * x).sin(), 0.0],
        }
    }

    /// Hessian as `[fxx, fxy, fyy]`.
    pub fn hess(&self, x: f64, y: f64) -> [f64; 3] {
        match *self {
            ScalarEntry::Const(_) | ScalarEntry::Linear { .. } => [0.0, 0.0, 0.0],
            ScalarEntry::Quadratic { axx, axy, ayy } => [2.0 * axx, axy, 2.0 * ayy],
            ScalarEntry::SinCos { amp, ax, by } => [
                -amp * ax * ax * (ax * x).sin() * (by * y).cos(),
                -amp * ax * by * (ax * x).cos() * (by * y).sin(),
                -amp * by * by * (ax * x).sin() * (by * y).cos(),
            ],
            ScalarEntry::CosX { amp, a } => [-amp * a * a * (a * x).cos(), 0.0, 0.0],
        }
    }

    pub fn laplacian(&self, x: f64, y: f64) -> f64 {
        let h = self.hess(x, y);
        h[0] + h[2]
    }
}

/// Max relative defect between the stored derivatives of every catalog shape
/// and central finite differences; used as an assembly-time self check.
pub fn catalog_self_check() -> f64 {
    let entries = [
        ScalarEntry::Const(1.3),
        ScalarEntry::Linear { cx: 0.7, cy: -0.4 },
        ScalarEntry::Quadratic {
            axx: 0.3,
            axy: -0.2,
            ayy: 0.5,
        },
        ScalarEntry::SinCos {
            amp: 0.8,
            ax: 1.1,
            by: 0.9,
        },
        ScalarEntry::CosX { amp: 0.6, a: 1.4 },
    ];
    let pts = [(0.9, 0.3), (-1.2, 0.8), (0.2, -1.7)];
    let eps = 1e-5;
    let mut worst = 0.0_f64;
    for e in entries {
        for &(x, y) in &pts {
            let g = e.grad(x, y);
            let fdx = (e.value(x + eps, y) - e.value(x - eps, y)) / (2.0 * eps);
            let fdy = (e.value(x, y + eps) - e.value(x, y - eps)) / (2.0 * eps);
            worst = worst.max((g[0] - fdx).abs()).max((g[1] - fdy).abs());
            let h = e.hess(x, y);
            let gxp = e.grad(x + eps, y);
            let gxm = e.grad(x - eps, y);
            let gyp = e.grad(x, y + eps);
            let gym = e.grad(x, y - eps);
            worst = worst
                .max((h[0] - (gxp[0] - gxm[0]) / (2.0 * eps)).abs())
                .max((h[1] - (gxp[1] - gxm[1]) / (2.0 * eps)).abs())
                .max((h[2] - (gyp[1] - gym[1]) / (2.0 * eps)).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Finite-difference checks of the grid operators
// ---------------------------------------------------------------------------

/// Grid operator under test in `fd_check`.
#[derive(Clone, Copy, Debug)]
pub enum FieldOp {
    Grad,
    Div,
    Laplacian,
}

/// Max-norm error of a grid operator against the exact derivatives of a
/// catalog entry (for `Div`, the entry is used as a stream function, so the
/// exact divergence is zero).
pub fn fd_check(op: FieldOp, f: ScalarEntry, grid: &AnnulusGrid<f64>) -> Result<f64, Error> {
    match op {
        FieldOp::Grad => {
            let s = ScalarField::from_fn(grid, |x, y| f.value(x, y));
            let g = grid.grad(&s)?;
            let mut worst = 0.0_f64;
            for i in 0..=grid.n_r {
                for j in 0..grid.n_theta {
                    let [x, y] = grid.node(i, j);
                    let e = f.grad(x, y);
                    let n = grid.idx(i, j);
                    worst = worst.max((g.x[n] - e[0]).abs()).max((g.y[n] - e[1]).abs());
                }
            }
            Ok(worst)
        }
        FieldOp::Div => {
            let u = VectorField::from_fn(grid, |x, y| {
                let g = f.grad(x, y);
                [-g[1], g[0]]
            });
            Ok(grid.div(&u)?.max_abs())
        }
        FieldOp::Laplacian => {
            let s = ScalarField::from_fn(grid, |x, y| f.value(x, y));
            let l = grid.laplacian(&s)?;
            let mut worst = 0.0_f64;
            for i in 0..=grid.n_r {
                for j in 0..grid.n_theta {
                    let [x, y] = grid.node(i, j);
                    let n = grid.idx(i, j);
                    worst = worst.max((l.0[n] - f.laplacian(x, y)).abs());
                }
            }
            Ok(worst)
        }
    }
}

// ---------------------------------------------------------------------------
// Pullback identities
// ---------------------------------------------------------------------------

/// Transformed operator under test in `pullback_check`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpId {
    L1,
    L2,
    Gop,
    Nop,
    Bop,
    Mop,
}

impl OpId {
    pub fn name(&self) -> &'static str {
        match self {
            OpId::L1 => "L1",
            OpId::L2 => "L2",
            OpId::Gop => "G",
            OpId::Nop => "N",
            OpId::Bop => "B",
            OpId::Mop => "M",
        }
    }
}

/// One row of a pullback convergence table.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRow {
    pub h: f64,
    pub max_error: f64,
}

/// Geometry of the oracle runs.
#[derive(Clone, Copy, Debug)]
pub struct OracleGeometry {
    pub r_inner: f64,
    pub r_outer: f64,
    pub cutoff_width: f64,
}

impl Default for OracleGeometry {
    fn default() -> Self {
        Self {
            r_inner: 0.5,
            r_outer: 3.0,
            cutoff_width: 2.0,
        }
    }
}

/// Fixed analytic inputs of the pullback suite.
fn u_bar() -> [ScalarEntry; 2] {
    [
        ScalarEntry::SinCos {
            amp: 0.7,
            ax: 1.0,
            by: 0.8,
        },
        ScalarEntry::CosX { amp: 0.5, a: 0.9 },
    ]
}

fn d_bar() -> [ScalarEntry; 3] {
    [
        ScalarEntry::SinCos {
            amp: 1.0,
            ax: 1.0,
            by: 1.0,
        },
        ScalarEntry::Const(0.0),
        ScalarEntry::CosX { amp: 0.4, a: 0.7 },
    ]
}

fn pi_bar() -> ScalarEntry {
    ScalarEntry::CosX { amp: 1.0, a: 1.0 }
}

/// Exact `[B(d)h]` at a physical point, from catalog derivatives.
fn b_exact(d: &[ScalarEntry; 3], h: &[ScalarEntry; 3], x: f64, y: f64) -> [f64; 2] {
    let mut out = [0.0; 2];
    for l in 0..3 {
        let gd = d[l].grad(x, y);
        let hh = h[l].hess(x, y);
        let lap = hh[0] + hh[2];
        out[0] += gd[0] * lap + gd[0] * hh[0] + gd[1] * hh[1];
        out[1] += gd[1] * lap + gd[0] * hh[1] + gd[1] * hh[2];
    }
    out
}

/// Advance the flow of the frozen rigid motion to time `t` on `grid`.
fn flow_to(
    grid: &AnnulusGrid<f64>,
    b: &LiftField2D<f64>,
    t: f64,
    n_steps: usize,
) -> Result<TransformField<f64>, Error> {
    let mut tf = TransformField::identity(grid);
    let dt = t / n_steps as f64;
    for _ in 0..n_steps {
        tf = tf.advance_flow(grid, b, dt)?;
    }
    Ok(tf)
}

fn pull_velocity(
    grid: &AnnulusGrid<f64>,
    tf: &TransformField<f64>,
    u: &[ScalarEntry; 2],
) -> VectorField<f64> {
    let mut v = VectorField::zeros(grid);
    for n in 0..grid.n_nodes() {
        let (xx, xy) = (tf.x_map[0][n], tf.x_map[1][n]);
        let uv = [u[0].value(xx, xy), u[1].value(xx, xy)];
        let ji = tf.j_x_inv[n];
        v.x[n] = ji[(0, 0)] * uv[0] + ji[(0, 1)] * uv[1];
        v.y[n] = ji[(1, 0)] * uv[0] + ji[(1, 1)] * uv[1];
    }
    v
}

fn pull_director(
    grid: &AnnulusGrid<f64>,
    tf: &TransformField<f64>,
    d: &[ScalarEntry; 3],
) -> DirectorField<f64> {
    let mut out = DirectorField::zeros(grid);
    for n in 0..grid.n_nodes() {
        let (xx, xy) = (tf.x_map[0][n], tf.x_map[1][n]);
        for l in 0..3 {
            out.c[l][n] = d[l].value(xx, xy);
        }
    }
    out
}

/// Run the pullback identity for one operator on one grid; returns the
/// max-norm error against the exact physical operator composed with `X`.
fn pullback_error(
    op: OpId,
    grid: &AnnulusGrid<f64>,
    b: &LiftField2D<f64>,
    t: f64,
) -> Result<f64, Error> {
    let n_steps = 64;
    let mut tf = flow_to(grid, b, t, n_steps)?;
    tf.fill_tensors(grid, Some(b))?;
    let n = grid.n_nodes();
    let vec_err = |got: &VectorField<f64>, exact_phys: &dyn Fn(f64, f64) -> [f64; 2]| -> f64 {
        let mut worst = 0.0_f64;
        for nd in 0..n {
            let (xx, xy) = (tf.x_map[0][nd], tf.x_map[1][nd]);
            let e = exact_phys(xx, xy);
            let ji = tf.j_x_inv[nd];
            let rx = ji[(0, 0)] * e[0] + ji[(0, 1)] * e[1];
            let ry = ji[(1, 0)] * e[0] + ji[(1, 1)] * e[1];
            worst = worst.max((got.x[nd] - rx).abs()).max((got.y[nd] - ry).abs());
        }
        worst
    };
    match op {
        OpId::L1 => {
            let u = u_bar();
            let v = pull_velocity(grid, &tf, &u);
            let got = operators::l1(grid, &tf, &v)?;
            Ok(vec_err(&got, &|x, y| {
                [u[0].laplacian(x, y), u[1].laplacian(x, y)]
            }))
        }
        OpId::L2 => {
            let d = d_bar();
            let dd = pull_director(grid, &tf, &d);
            let got = operators::l2(grid, &tf, &dd)?;
            let mut worst = 0.0_f64;
            for nd in 0..n {
                let (xx, xy) = (tf.x_map[0][nd], tf.x_map[1][nd]);
                for l in 0..3 {
                    worst = worst.max((got.c[l][nd] - d[l].laplacian(xx, xy)).abs());
                }
            }
            Ok(worst)
        }
        OpId::Gop => {
            let p = pi_bar();
            let mut ps = ScalarField::from_fn(grid, |_, _| 0.0);
            for nd in 0..n {
                ps.0[nd] = p.value(tf.x_map[0][nd], tf.x_map[1][nd]);
            }
            let got = operators::gop(grid, &tf, &ps)?;
            Ok(vec_err(&got, &|x, y| p.grad(x, y)))
        }
        OpId::Nop => {
            let u = u_bar();
            let v = pull_velocity(grid, &tf, &u);
            let got = operators::nop(grid, &tf, &v)?;
            Ok(vec_err(&got, &|x, y| {
                let uv = [u[0].value(x, y), u[1].value(x, y)];
                let g0 = u[0].grad(x, y);
                let g1 = u[1].grad(x, y);
                [
                    uv[0] * g0[0] + uv[1] * g0[1],
                    uv[0] * g1[0] + uv[1] * g1[1],
                ]
            }))
        }
        OpId::Bop => {
            let d = d_bar();
            let dd = pull_director(grid, &tf, &d);
            let got = operators::bop(grid, &tf, &dd, &dd)?;
            Ok(vec_err(&got, &|x, y| b_exact(&d, &d, x, y)))
        }
        OpId::Mop => {
            // For a static physical field, the pullback identity for the
            // material derivative reads d_t v + M v = 0; compare M v against
            // the centered time difference of the pulled-back field.
            let u = u_bar();
            let delta = 1e-4;
            let tf_m = flow_to(grid, b, t - delta, n_steps)?;
            let tf_p = tf_m
                .advance_flow(grid, b, delta)?
                .advance_flow(grid, b, delta)?;
            let v_m = pull_velocity(grid, &tf_m, &u);
            let v_p = pull_velocity(grid, &tf_p, &u);
            let v_0 = pull_velocity(grid, &tf, &u);
            let got = operators::mop(grid, &tf, &v_0)?;
            let mut worst = 0.0_f64;
            for nd in 0..n {
                let dtx = (v_p.x[nd] - v_m.x[nd]) / (2.0 * delta);
                let dty = (v_p.y[nd] - v_m.y[nd]) / (2.0 * delta);
                worst = worst
                    .max((got.x[nd] + dtx).abs())
                    .max((got.y[nd] + dty).abs());
            }
            Ok(worst)
        }
    }
}

/// Pullback convergence table for one operator across grid resolutions
/// `(n_r, n_theta)`; the motion is the frozen rigid state advanced to `t`.
pub fn pullback_check(
    op: OpId,
    motion: &RigidState2D<f64>,
    t: f64,
    grids: &[(usize, usize)],
    geom: &OracleGeometry,
) -> Result<Vec<ConvergenceRow>, Error> {
    let spec = CutoffSpec::new(geom.r_outer, geom.cutoff_width)?;
    let b = LiftField2D::from_state(spec, geom.r_inner, motion)?;
    let mut rows = Vec::new();
    for &(n_r, n_theta) in grids {
        let grid = AnnulusGrid::<f64>::new(geom.r_inner, geom.r_outer, n_r, n_theta)?;
        let err = pullback_error(op, &grid, &b, t)?;
        rows.push(ConvergenceRow {
            h: grid.dr,
            max_error: err,
        });
    }
    Ok(rows)
}

/// Observed order from the last two rows of a convergence table.
pub fn observed_order(rows: &[ConvergenceRow]) -> f64 {
    let k = rows.len();
    assert!(k >= 2, "need at least two resolutions");
    let a = &rows[k - 2];
    let b = &rows[k - 1];
    (a.max_error / b.max_error).ln() / (a.h / b.h).ln()
}

/// CSV table (`h,op,max_error,observed_order`) for a set of operators.
pub fn convergence_csv(
    ops: &[OpId],
    motion: &RigidState2D<f64>,
    t: f64,
    grids: &[(usize, usize)],
    geom: &OracleGeometry,
) -> Result<String, Error> {
    let mut out = String::from("h,op,max_error,observed_order\n");
    for &op in ops {
        let rows = pullback_check(op, motion, t, grids, geom)?;
        for (k, r) in rows.iter().enumerate() {
            let order = if k == 0 {
                f64::NAN
            } else {
                (rows[k - 1].max_error / r.max_error).ln() / (rows[k - 1].h / r.h).ln()
            };
            out.push_str(&format!("{},{},{:.6e},{:.3}\n", r.h, op.name(), r.max_error, order));
        }
    }
    Ok(out)
}
