//! Localized volume-preserving change of variables.
//!
//! A cutoff `chi` (equal to 1 away from the container wall, 0 at the wall)
//! localizes the rigid velocity into a globally defined, exactly
//! divergence-free field `b = curl(chi * A)`, where `A` is the explicit
//! stream function (2D) or vector potential (3D) of the rigid velocity.
//! The flow map `X` of `b` carries the moving-domain problem back to the
//! fixed reference annulus; its inverse `Y`, Jacobians, metric tensors and
//! Christoffel symbols supply the variable coefficients of the transformed
//! operators.

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::grid::AnnulusGrid;
use crate::real::Real;
use crate::rigid::RigidState2D;
use crate::Error;

/// Degree-13 polynomial smoothstep (six vanishing derivatives at each
/// plateau junction, so the step is C^6) and its first two derivatives.
/// The C^6 regularity keeps every stencil chain built on the cutoff — flow
/// maps, metric, Christoffel symbols and their grid derivatives — within
/// the classical truncation-error regime across the transition ring, while
/// the polynomial keeps the higher-derivative constants moderate.
pub(crate) fn smoothstep_c6<R: Real>(u: R) -> (R, R, R) {
    let zero = R::zero();
    let one = R::one();
    if u <= zero {
        return (zero, zero, zero);
    }
    if u >= one {
        return (one, zero, zero);
    }
    // S_6(u) = 1716 u^7 - 9009 u^8 + 20020 u^9 - 24024 u^10
    //        + 16380 u^11 - 6006 u^12 + 924 u^13
    const C: [f64; 7] = [1716.0, -9009.0, 20020.0, -24024.0, 16380.0, -6006.0, 924.0];
    let mut s = R::zero();
    let mut s1 = R::zero();
    let mut s2 = R::zero();
    for (k, &c) in C.iter().enumerate() {
        let p = (7 + k) as f64;
        let up = num_traits::Float::powi(u, (5 + k) as i32);
        s2 = s2 + R::of(c * p * (p - 1.0)) * up;
        s1 = s1 + R::of(c * p) * up * u;
        s = s + R::of(c) * up * u * u;
    }
    (s, s1, s2)
}

/// Cutoff specification: the container is the ball of radius `r_outer`
/// centered at the origin; `chi = 1` where the distance to the wall is at
/// least `width`, `chi = 0` where it is at most `width / 2`.
#[derive(Clone, Copy, Debug)]
pub struct CutoffSpec<R: Real> {
    pub r_outer: R,
    pub width: R,
}

impl<R: Real> CutoffSpec<R> {
    pub fn new(r_outer: R, width: R) -> Result<Self, Error> {
        if !(width > R::zero() && width < r_outer) {
            return Err(Error::Transform(format!(
                "cutoff width must satisfy 0 < width < r_outer, got {width} and {r_outer}"
            )));
        }
        Ok(Self { r_outer, width })
    }

    /// chi and its first two radial derivatives as a function of `rho = |x|`.
    pub fn chi_radial(&self, rho: R) -> (R, R, R) {
        let zero = R::zero();
        let dist = self.r_outer - rho;
        let half = self.width * R::of(0.5);
        if dist >= self.width {
            (R::one(), zero, zero)
        } else if dist <= half {
            (zero, zero, zero)
        } else {
            let u = (dist - half) / half;
            let (s, s1, s2) = smoothstep_c6(u);
            let du = -R::one() / half;
            (s, s1 * du, s2 * du * du)
        }
    }

    /// chi, its gradient and Hessian at a 2D point.
    pub fn chi_with_derivs(&self, x: [R; 2]) -> (R, [R; 2], Matrix2<R>) {
        let rho = num_traits::Float::sqrt(x[0] * x[0] + x[1] * x[1]);
        let (c, c1, c2) = self.chi_radial(rho);
        if c1 == R::zero() && c2 == R::zero() {
            return (c, [R::zero(); 2], Matrix2::zeros());
        }
        // transition zone: rho >= r_outer - width > 0, safe to normalize
        let n = [x[0] / rho, x[1] / rho];
        let grad = [c1 * n[0], c1 * n[1]];
        let mut hess = Matrix2::zeros();
        for a in 0..2 {
            for b in 0..2 {
                let delta = if a == b { R::one() } else { R::zero() };
                hess[(a, b)] = c2 * n[a] * n[b] + c1 * (delta - n[a] * n[b]) / rho;
            }
        }
        (c, grad, hess)
    }

    pub fn chi(&self, x: [R; 2]) -> R {
        let rho = num_traits::Float::sqrt(x[0] * x[0] + x[1] * x[1]);
        self.chi_radial(rho).0
    }
}

// ---------------------------------------------------------------------------
// Divergence-free lift of the rigid velocity (2D)
// ---------------------------------------------------------------------------

/// `b = perp-grad(chi * psi)` where `psi` is the stream function of the rigid
/// velocity: `perp-grad psi = h' + omega (x - h)^perp`. Exactly solenoidal;
/// equals the rigid velocity on `{chi = 1}` and vanishes on `{chi = 0}`.
#[derive(Clone, Copy, Debug)]
pub struct LiftField2D<R: Real> {
    pub spec: CutoffSpec<R>,
    pub h: [R; 2],
    pub h_dot: [R; 2],
    pub omega: R,
}

impl<R: Real> LiftField2D<R> {
    /// Build the lift for the given rigid state, first checking the gap:
    /// the particle (radius `body_radius`) must stay out of the cutoff
    /// transition zone, i.e. the whole disk must remain in `{chi = 1}`.
    pub fn from_state(
        spec: CutoffSpec<R>,
        body_radius: R,
        s: &RigidState2D<R>,
    ) -> Result<Self, Error> {
        let dist_center = num_traits::Float::sqrt(s.h.x * s.h.x + s.h.y * s.h.y);
        let reach = dist_center + body_radius;
        if reach > spec.r_outer - spec.width {
            return Err(Error::GapViolation(format!(
                "particle reach {reach} exceeds {}",
                spec.r_outer - spec.width
            )));
        }
        let hd = s.h_dot();
        Ok(Self {
            spec,
            h: [s.h.x, s.h.y],
            h_dot: [hd.x, hd.y],
            omega: s.omega,
        })
    }

    pub fn resting(spec: CutoffSpec<R>) -> Self {
        Self {
            spec,
            h: [R::zero(); 2],
            h_dot: [R::zero(); 2],
            omega: R::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.h_dot[0] == R::zero() && self.h_dot[1] == R::zero() && self.omega == R::zero()
    }

    /// Stream function of the rigid velocity, its gradient, and Hessian
    /// (the Hessian is `omega * Id`).
    fn psi_with_derivs(&self, x: [R; 2]) -> (R, [R; 2], Matrix2<R>) {
        let rx = x[0] - self.h[0];
        let ry = x[1] - self.h[1];
        let half = R::of(0.5);
        let psi = self.h_dot[1] * x[0] - self.h_dot[0] * x[1]
            + self.omega * half * (rx * rx + ry * ry);
        let grad = [
            self.h_dot[1] + self.omega * rx,
            -self.h_dot[0] + self.omega * ry,
        ];
        let hess = Matrix2::identity() * self.omega;
        (psi, grad, hess)
    }

    /// b(x).
    pub fn eval(&self, x: [R; 2]) -> [R; 2] {
        let (c, cg, _) = self.spec.chi_with_derivs(x);
        let (psi, pg, _) = self.psi_with_derivs(x);
        // b = perp-grad(chi psi) = (-(chi psi)_y, (chi psi)_x)
        let phix = cg[0] * psi + c * pg[0];
        let phiy = cg[1] * psi + c * pg[1];
        [-phiy, phix]
    }

    /// b(x) together with its gradient `(grad b)_{kj} = d b_k / d x_j`.
    pub fn eval_with_grad(&self, x: [R; 2]) -> ([R; 2], Matrix2<R>) {
        let (c, cg, ch) = self.spec.chi_with_derivs(x);
        let (psi, pg, ph) = self.psi_with_derivs(x);
        let phix = cg[0] * psi + c * pg[0];
        let phiy = cg[1] * psi + c * pg[1];
        let mut phess = Matrix2::zeros();
        for a in 0..2 {
            for b in 0..2 {
                phess[(a, b)] =
                    ch[(a, b)] * psi + cg[a] * pg[b] + cg[b] * pg[a] + c * ph[(a, b)];
            }
        }
        // b1 = -phi_y, b2 = phi_x
        let grad = Matrix2::new(
            -phess[(0, 1)],
            -phess[(1, 1)],
            phess[(0, 0)],
            phess[(0, 1)],
        );
        ([-phiy, phix], grad)
    }

    /// Rigid velocity field (no cutoff), for plateau identities.
    pub fn rigid_velocity(&self, x: [R; 2]) -> [R; 2] {
        let rx = x[0] - self.h[0];
        let ry = x[1] - self.h[1];
        [
            self.h_dot[0] - self.omega * ry,
            self.h_dot[1] + self.omega * rx,
        ]
    }
}

// ---------------------------------------------------------------------------
// 3D pointwise kernels (no 3D field solver; tested pointwise)
// ---------------------------------------------------------------------------

/// Vector potential of the rigid velocity: `curl A = h' + omega x (x - h)`.
pub fn vector_potential_3d<R: Real>(
    x: Vector3<R>,
    h: Vector3<R>,
    h_dot: Vector3<R>,
    omega: Vector3<R>,
) -> Vector3<R> {
    let r = x - h;
    h_dot.cross(&r) * R::of(0.5) + r * omega.dot(&r)
}

/// Cutoff in 3D: same radial profile, container ball of radius `spec.r_outer`.
pub fn chi_3d<R: Real>(x: Vector3<R>, spec: &CutoffSpec<R>) -> (R, Vector3<R>) {
    let rho = x.norm();
    let (c, c1, _) = spec.chi_radial(rho);
    if c1 == R::zero() {
        (c, Vector3::zeros())
    } else {
        (c, x * (c1 / rho))
    }
}

/// `b = curl(chi A) = grad chi x A + chi curl A`, exactly solenoidal.
pub fn lift_3d<R: Real>(
    x: Vector3<R>,
    h: Vector3<R>,
    h_dot: Vector3<R>,
    omega: Vector3<R>,
    spec: &CutoffSpec<R>,
) -> Vector3<R> {
    let (c, cg) = chi_3d(x, spec);
    let a = vector_potential_3d(x, h, h_dot, omega);
    let rigid = h_dot + omega.cross(&(x - h));
    cg.cross(&a) + rigid * c
}

// ---------------------------------------------------------------------------
// TransformField
// ---------------------------------------------------------------------------

/// Per-node transform data on the reference annulus.
///
/// All quantities indexed by a reference node `y`:
/// `x_map = X(y)`, `j_x = J_X(y)`, `j_x_inv = J_X(y)^{-1} = (J_Y o X)(y)`,
/// `y_map = Y(x)` at the node coordinate `x` (inverse map sampled on the
/// same grid), metric tensors of the pullback, Christoffel symbols
/// `gamma[i][j][k] = Gamma^i_{jk}`, `delta_y[i] = (Laplacian Y_i) o X`,
/// `d2y[i][(m,k)] = (d_m d_k Y_i) o X`, `dt_y = -J_X^{-1} b(X)`, and
/// `dt_dx[(k,j)] = d_t d_j X_k = (grad b o X) J_X`.
#[derive(Clone)]
pub struct TransformField<R: Real> {
    pub x_map: [Vec<R>; 2],
    pub y_map: [Vec<R>; 2],
    pub j_x: Vec<Matrix2<R>>,
    pub j_x_inv: Vec<Matrix2<R>>,
    pub det_j_x: Vec<R>,
    pub g_up: Vec<Matrix2<R>>,
    pub g_down: Vec<Matrix2<R>>,
    pub gamma: Vec<[[[R; 2]; 2]; 2]>,
    pub delta_y: [Vec<R>; 2],
    pub d2y: [Vec<Matrix2<R>>; 2],
    pub dt_y: [Vec<R>; 2],
    pub dt_dx: Vec<Matrix2<R>>,
    /// True while the transform is the exact identity datum.
    pub is_identity: bool,
}

impl<R: Real> TransformField<R> {
    /// Exact identity datum.
    pub fn identity(grid: &AnnulusGrid<R>) -> Self {
        let n = grid.n_nodes();
        let mut x0 = vec![R::zero(); n];
        let mut x1 = vec![R::zero(); n];
        for i in 0..=grid.n_r {
            for j in 0..grid.n_theta {
                let [px, py] = grid.node(i, j);
                x0[grid.idx(i, j)] = px;
                x1[grid.idx(i, j)] = py;
            }
        }
        Self {
            y_map: [x0.clone(), x1.clone()],
            x_map: [x0, x1],
            j_x: vec![Matrix2::identity(); n],
            j_x_inv: vec![Matrix2::identity(); n],
            det_j_x: vec![R::one(); n],
            g_up: vec![Matrix2::identity(); n],
            g_down: vec![Matrix2::identity(); n],
            gamma: vec![[[[R::zero(); 2]; 2]; 2]; n],
            delta_y: [vec![R::zero(); n], vec![R::zero(); n]],
            d2y: [vec![Matrix2::zeros(); n], vec![Matrix2::zeros(); n]],
            dt_y: [vec![R::zero(); n], vec![R::zero(); n]],
            dt_dx: vec![Matrix2::zeros(); n],
            is_identity: true,
        }
    }

    /// Advance the flow one step: per-node RK4 on `X' = b(X)` together with
    /// the variational equation `J_X' = (grad b o X) J_X`, then restore the
    /// inverse map by warm-started Newton inversion.
    pub fn advance_flow(
        &self,
        grid: &AnnulusGrid<R>,
        b: &LiftField2D<R>,
        dt: R,
    ) -> Result<Self, Error> {
        if dt <= R::zero() {
            return Err(Error::Transform("dt must be positive".into()));
        }
        if b.is_zero() && self.is_identity {
            return Ok(self.clone());
        }
        let n = grid.n_nodes();
        let mut out = self.clone();
        out.is_identity = false;
        let half = R::of(0.5);
        let sixth = R::of(1.0 / 6.0);
        let two = R::of(2.0);
        for node in 0..n {
            let x0 = Vector2::new(self.x_map[0][node], self.x_map[1][node]);
            let j0 = self.j_x[node];
            let f = |x: &Vector2<R>, j: &Matrix2<R>| -> (Vector2<R>, Matrix2<R>) {
                let (bv, gb) = b.eval_with_grad([x.x, x.y]);
                (Vector2::new(bv[0], bv[1]), gb * j)
            };
            let (k1x, k1j) = f(&x0, &j0);
            let (k2x, k2j) = f(&(x0 + k1x * (dt * half)), &(j0 + k1j * (dt * half)));
            let (k3x, k3j) = f(&(x0 + k2x * (dt * half)), &(j0 + k2j * (dt * half)));
            let (k4x, k4j) = f(&(x0 + k3x * dt), &(j0 + k3j * dt));
            let x1 = x0 + (k1x + k2x * two + k3x * two + k4x) * (dt * sixth);
            let j1 = j0 + (k1j + k2j * two + k3j * two + k4j) * (dt * sixth);
            out.x_map[0][node] = x1.x;
            out.x_map[1][node] = x1.y;
            out.j_x[node] = j1;
            out.det_j_x[node] = j1.determinant();
            out.j_x_inv[node] = j1.try_inverse().ok_or_else(|| {
                Error::Transform(format!("singular flow Jacobian at node {node}"))
            })?;
        }
        out.invert_map(grid)?;
        Ok(out)
    }

    /// Bilinear interpolation (linear in r with extrapolation at the rims,
    /// periodic linear in theta) of the displacement `X - id`, plus identity.
    pub fn eval_x(&self, grid: &AnnulusGrid<R>, p: [R; 2]) -> [R; 2] {
        let (w, nodes) = interp_weights(grid, p);
        let mut ux = R::zero();
        let mut uy = R::zero();
        for q in 0..4 {
            let nd = nodes[q];
            let [gx, gy] = node_coords(grid, nd);
            ux += w[q] * (self.x_map[0][nd] - gx);
            uy += w[q] * (self.x_map[1][nd] - gy);
        }
        [p[0] + ux, p[1] + uy]
    }

    /// Exact Jacobian of the piecewise-bilinear interpolant `eval_x` at `p`
    /// (within the current cell), used as the Newton derivative so that the
    /// iteration converges on the interpolant itself.
    fn eval_x_jac(&self, grid: &AnnulusGrid<R>, p: [R; 2]) -> Matrix2<R> {
        let (w, nodes, dw) = interp_weights_with_grad(grid, p);
        let _ = w;
        let mut m = Matrix2::identity();
        for q in 0..4 {
            let nd = nodes[q];
            let [gx, gy] = node_coords(grid, nd);
            let ux = self.x_map[0][nd] - gx;
            let uy = self.x_map[1][nd] - gy;
            m[(0, 0)] += ux * dw[q][0];
            m[(0, 1)] += ux * dw[q][1];
            m[(1, 0)] += uy * dw[q][0];
            m[(1, 1)] += uy * dw[q][1];
        }
        m
    }

    /// Newton inversion: for each node coordinate `x`, solve `X(y) = x` for
    /// `y`, warm-started at the previous `y_map`.
    fn invert_map(&mut self, grid: &AnnulusGrid<R>) -> Result<(), Error> {
        let tol = R::of(1e-12);
        let budget = 40;
        for i in 0..=grid.n_r {
            for j in 0..grid.n_theta {
                let node = grid.idx(i, j);
                let target = grid.node(i, j);
                let scale =
                    R::one() + num_traits::Float::abs(target[0]) + num_traits::Float::abs(target[1]);
                let mut y = [self.y_map[0][node], self.y_map[1][node]];
                let mut best = y;
                let mut best_res = R::infinity();
                let mut ok = false;
                for _ in 0..budget {
                    let xv = self.eval_x(grid, y);
                    let rx = xv[0] - target[0];
                    let ry = xv[1] - target[1];
                    let res = num_traits::Float::sqrt(rx * rx + ry * ry);
                    if res < best_res {
                        best_res = res;
                        best = y;
                    }
                    if res <= tol * scale {
                        ok = true;
                        break;
                    }
                    let jm = self.eval_x_jac(grid, y);
                    let inv = jm.try_inverse().ok_or_else(|| {
                        Error::Transform("singular Jacobian in Newton inversion".into())
                    })?;
                    let mut sx = inv[(0, 0)] * rx + inv[(0, 1)] * ry;
                    let mut sy = inv[(1, 0)] * rx + inv[(1, 1)] * ry;
                    // trust region of one cell: keeps the iteration from
                    // tunneling through cells with strongly deformed Jacobians
                    let slen = num_traits::Float::sqrt(sx * sx + sy * sy);
                    let cap = grid.dr;
                    if slen > cap {
                        sx *= cap / slen;
                        sy *= cap / slen;
                    }
                    // backtracking: the interpolant's derivative kinks at cell
                    // edges can make the full step overshoot; halve until the
                    // residual actually decreases
                    let mut lambda = R::one();
                    let mut accepted = [y[0] - sx, y[1] - sy];
                    for _ in 0..8 {
                        let xt = self.eval_x(grid, accepted);
                        let tx = xt[0] - target[0];
                        let ty = xt[1] - target[1];
                        if num_traits::Float::sqrt(tx * tx + ty * ty) < res {
                            break;
                        }
                        lambda *= R::of(0.5);
                        accepted = [y[0] - lambda * sx, y[1] - lambda * sy];
                    }
                    y = accepted;
                }
                // the piecewise-bilinear interpolant of X has derivative kinks
                // at cell edges; Newton may cycle there without reducing the
                // residual below the kink scale, so accept the best iterate if
                // it is already far below discretization error
                if !ok && best_res > R::of(1e-8) * scale {
                    return Err(Error::NonConvergence(format!(
                        "Newton inversion of the flow map stalled at node ({i},{j}), residual {best_res}"
                    )));
                }
                let y = if ok { y } else { best };
                self.y_map[0][node] = y[0];
                self.y_map[1][node] = y[1];
            }
        }
        Ok(())
    }

    /// Fill metric tensors, Christoffel symbols, second derivatives of `Y`,
    /// and the time-derivative coefficients (zero when `b` is `None`).
    pub fn fill_tensors(
        &mut self,
        grid: &AnnulusGrid<R>,
        b: Option<&LiftField2D<R>>,
    ) -> Result<(), Error> {
        let n = grid.n_nodes();
        grid.check_conforms(self.x_map[0].len())?;
        for node in 0..n {
            let jx = self.j_x[node];
            let ji = self.j_x_inv[node];
            self.g_down[node] = jx.transpose() * jx;
            self.g_up[node] = ji * ji.transpose();
        }
        // y-derivatives of the entries of J_X^{-1}, by grid stencils
        let dji: [[(Vec<R>, Vec<R>); 2]; 2] = std::array::from_fn(|a| {
            std::array::from_fn(|c| {
                let vals: Vec<R> = (0..n).map(|nd| self.j_x_inv[nd][(a, c)]).collect();
                grid.dx_dy(&vals)
            })
        });
        for node in 0..n {
            let ji = self.j_x_inv[node];
            for i in 0..2 {
                let mut hess = Matrix2::zeros();
                for m in 0..2 {
                    for k in 0..2 {
                        // d_m d_k Y_i o X = sum_j d_{y_j}[(J_X^{-1})_{ik}] (J_X^{-1})_{jm}
                        let d0 = dji[i][k].0[node];
                        let d1 = dji[i][k].1[node];
                        hess[(m, k)] = d0 * ji[(0, m)] + d1 * ji[(1, m)];
                    }
                }
                self.d2y[i][node] = hess;
                self.delta_y[i][node] = hess[(0, 0)] + hess[(1, 1)];
            }
        }
        // Christoffel symbols of the pullback metric (second kind)
        let dg: [[(Vec<R>, Vec<R>); 2]; 2] = std::array::from_fn(|a| {
            std::array::from_fn(|c| {
                let vals: Vec<R> = (0..n).map(|nd| self.g_down[nd][(a, c)]).collect();
                grid.dx_dy(&vals)
            })
        });
        let half = R::of(0.5);
        for node in 0..n {
            let gu = self.g_up[node];
            let dpart = |j: usize, l: usize, k: usize| -> R {
                if j == 0 {
                    dg[l][k].0[node]
                } else {
                    dg[l][k].1[node]
                }
            };
            let mut gm = [[[R::zero(); 2]; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        let mut s = R::zero();
                        for l in 0..2 {
                            s += gu[(i, l)]
                                * (dpart(j, l, k) + dpart(k, l, j) - dpart(l, j, k));
                        }
                        gm[i][j][k] = half * s;
                    }
                }
            }
            self.gamma[node] = gm;
        }
        // time-derivative coefficients
        match b {
            Some(bf) if !bf.is_zero() => {
                for node in 0..n {
                    let xv = [self.x_map[0][node], self.x_map[1][node]];
                    let (bv, gb) = bf.eval_with_grad(xv);
                    let ji = self.j_x_inv[node];
                    self.dt_y[0][node] = -(ji[(0, 0)] * bv[0] + ji[(0, 1)] * bv[1]);
                    self.dt_y[1][node] = -(ji[(1, 0)] * bv[0] + ji[(1, 1)] * bv[1]);
                    self.dt_dx[node] = gb * self.j_x[node];
                }
            }
            _ => {
                for node in 0..n {
                    self.dt_y[0][node] = R::zero();
                    self.dt_y[1][node] = R::zero();
                    self.dt_dx[node] = Matrix2::zeros();
                }
            }
        }
        Ok(())
    }

    /// Maximum invariant violations, for verification output.
    pub fn checks(&self, grid: &AnnulusGrid<R>) -> TransformChecks<R> {
        let n = grid.n_nodes();
        let mut det_drift = R::zero();
        let mut jac = R::zero();
        let mut metric = R::zero();
        let mut inv_res = R::zero();
        for node in 0..n {
            det_drift = num_traits::Float::max(
                det_drift,
                num_traits::Float::abs(self.det_j_x[node] - R::one()),
            );
            let e = self.j_x[node] * self.j_x_inv[node] - Matrix2::identity();
            let m = self.g_up[node] * self.g_down[node] - Matrix2::identity();
            for a in 0..2 {
                for c in 0..2 {
                    jac = num_traits::Float::max(jac, num_traits::Float::abs(e[(a, c)]));
                    metric = num_traits::Float::max(metric, num_traits::Float::abs(m[(a, c)]));
                }
            }
        }
        for i in 0..=grid.n_r {
            for j in 0..grid.n_theta {
                let node = grid.idx(i, j);
                let target = grid.node(i, j);
                let xv = self.eval_x(grid, [self.y_map[0][node], self.y_map[1][node]]);
                let r = num_traits::Float::sqrt(
                    (xv[0] - target[0]) * (xv[0] - target[0])
                        + (xv[1] - target[1]) * (xv[1] - target[1]),
                );
                inv_res = num_traits::Float::max(inv_res, r);
            }
        }
        TransformChecks {
            det_drift,
            inversion_residual: inv_res,
            jacobian_consistency: jac,
            metric_consistency: metric,
        }
    }
}

/// Maximum per-node invariant violations of a TransformField.
#[derive(Clone, Copy, Debug)]
pub struct TransformChecks<R: Real> {
    pub det_drift: R,
    pub inversion_residual: R,
    pub jacobian_consistency: R,
    pub metric_consistency: R,
}

fn node_coords<R: Real>(grid: &AnnulusGrid<R>, node: usize) -> [R; 2] {
    let i = node / grid.n_theta;
    let j = node % grid.n_theta;
    grid.node(i, j)
}

/// Bilinear cell weights at an arbitrary point: linear in r (extrapolating
/// past the rims), periodic linear in theta. Returns weights and node ids.
fn interp_weights<R: Real>(grid: &AnnulusGrid<R>, p: [R; 2]) -> ([R; 4], [usize; 4]) {
    let (w, nodes, _) = interp_weights_with_grad(grid, p);
    (w, nodes)
}

/// As `interp_weights`, additionally returning the Cartesian gradient of each
/// weight (constant cell indices; valid within the current cell).
fn interp_weights_with_grad<R: Real>(
    grid: &AnnulusGrid<R>,
    p: [R; 2],
) -> ([R; 4], [usize; 4], [[R; 2]; 4]) {
    let rho = num_traits::Float::sqrt(p[0] * p[0] + p[1] * p[1]);
    let theta = num_traits::Float::atan2(p[1], p[0]);
    let two_pi = R::of(std::f64::consts::TAU);
    let theta = if theta < R::zero() { theta + two_pi } else { theta };

    let sr = (rho - grid.r_inner) / grid.dr;
    let max_cell = R::from_usize_lossy(grid.n_r - 1);
    let cell_r = num_traits::Float::min(
        num_traits::Float::max(num_traits::Float::floor(sr), R::zero()),
        max_cell,
    );
    let i0 = cell_r.to_f64_lossy() as usize;
    let tr = sr - cell_r; // may lie outside [0,1]: linear extrapolation

    let st = theta / grid.dtheta;
    let mut j0 = num_traits::Float::floor(st).to_f64_lossy() as usize;
    let mut tt = st - R::from_usize_lossy(j0);
    if j0 >= grid.n_theta {
        j0 = grid.n_theta - 1;
        tt = R::one();
    }
    let j1 = (j0 + 1) % grid.n_theta;

    let one = R::one();
    let w = [
        (one - tr) * (one - tt),
        (one - tr) * tt,
        tr * (one - tt),
        tr * tt,
    ];
    let nodes = [
        grid.idx(i0, j0),
        grid.idx(i0, j1),
        grid.idx(i0 + 1, j0),
        grid.idx(i0 + 1, j1),
    ];
    // gradients of the fractional coordinates: tr via rho, tt via theta
    let inv_rho = R::one() / rho;
    let dtr = [p[0] * inv_rho / grid.dr, p[1] * inv_rho / grid.dr];
    let dtt = [
        -p[1] * inv_rho * inv_rho / grid.dtheta,
        p[0] * inv_rho * inv_rho / grid.dtheta,
    ];
    let dw = [
        [
            -(one - tt) * dtr[0] - (one - tr) * dtt[0],
            -(one - tt) * dtr[1] - (one - tr) * dtt[1],
        ],
        [
            -tt * dtr[0] + (one - tr) * dtt[0],
            -tt * dtr[1] + (one - tr) * dtt[1],
        ],
        [
            (one - tt) * dtr[0] - tr * dtt[0],
            (one - tt) * dtr[1] - tr * dtt[1],
        ],
        [tt * dtr[0] + tr * dtt[0], tt * dtr[1] + tr * dtt[1]],
    ];
    (w, nodes, dw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigid::RigidState2D;
    use nalgebra::Vector2 as V2;

    fn grid() -> AnnulusGrid<f64> {
        AnnulusGrid::new(0.5, 3.0, 24, 48).unwrap()
    }

    fn spec() -> CutoffSpec<f64> {
        CutoffSpec::new(3.0, 1.0).unwrap()
    }

    #[test]
    fn chi_plateaus_and_smoothness() {
        let s = spec();
        // dist = width -> 1; dist = width/2 -> 0
        assert_eq!(s.chi([2.0, 0.0]), 1.0);
        assert_eq!(s.chi([0.0, 2.5]), 0.0);
        assert_eq!(s.chi([0.0, 3.0]), 0.0);
        let c = s.chi([2.25, 0.0]);
        assert!(c > 0.0 && c < 1.0);
        // gradient vanishes on both plateaus
        let (_, g, _) = s.chi_with_derivs([1.5, 0.7]);
        assert_eq!(g, [0.0, 0.0]);
        // analytic gradient matches finite differences in the transition zone
        let p = [2.3, 0.4];
        let (_, g, h) = s.chi_with_derivs(p);
        let eps = 1e-6;
        for a in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[a] += eps;
            pm[a] -= eps;
            let fd = (s.chi(pp) - s.chi(pm)) / (2.0 * eps);
            assert!((fd - g[a]).abs() < 1e-8, "grad chi component {a}");
            for bx in 0..2 {
                let (_, gp, _) = s.chi_with_derivs(pp);
                let (_, gm, _) = s.chi_with_derivs(pm);
                let fd2 = (gp[bx] - gm[bx]) / (2.0 * eps);
                assert!((fd2 - h[(bx, a)]).abs() < 1e-6, "hess chi ({bx},{a})");
            }
        }
    }

    fn moving_state() -> RigidState2D<f64> {
        RigidState2D {
            h: V2::new(0.05, -0.02),
            angle: 0.1,
            ell: V2::new(0.12, 0.07),
            omega: 0.3,
        }
    }

    #[test]
    fn lift_matches_rigid_velocity_on_plateau_and_vanishes_at_wall() {
        let b = LiftField2D::from_state(spec(), 0.5, &moving_state()).unwrap();
        for p in [[0.6, 0.0], [0.0, -1.2], [1.4, 0.8]] {
            let v = b.eval(p);
            let rv = b.rigid_velocity(p);
            assert!((v[0] - rv[0]).abs() < 1e-14 && (v[1] - rv[1]).abs() < 1e-14);
        }
        for p in [[2.6, 0.0], [0.0, 2.9], [-2.95, 0.1]] {
            let v = b.eval(p);
            assert_eq!(v, [0.0, 0.0]);
        }
        // zero motion -> zero lift
        let b0 = LiftField2D::from_state(spec(), 0.5, &RigidState2D::rest()).unwrap();
        assert!(b0.is_zero());
        assert_eq!(b0.eval([2.3, 0.1]), [0.0, 0.0]);
    }

    #[test]
    fn lift_gradient_is_tracefree_and_matches_fd() {
        let b = LiftField2D::from_state(spec(), 0.5, &moving_state()).unwrap();
        let p = [2.2, -0.7]; // transition zone
        let (_, g) = b.eval_with_grad(p);
        // analytic divergence of a perp-gradient is identically zero
        assert!((g[(0, 0)] + g[(1, 1)]).abs() < 1e-13);
        let eps = 1e-6;
        for a in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[a] += eps;
            pm[a] -= eps;
            let vp = b.eval(pp);
            let vm = b.eval(pm);
            for k in 0..2 {
                let fd = (vp[k] - vm[k]) / (2.0 * eps);
                assert!((fd - g[(k, a)]).abs() < 1e-7, "grad b ({k},{a})");
            }
        }
    }

    #[test]
    fn gap_violation_is_detected() {
        let s = RigidState2D {
            h: V2::new(1.7, 0.0),
            ..RigidState2D::rest()
        };
        match LiftField2D::from_state(spec(), 0.5, &s) {
            Err(Error::GapViolation(_)) => {}
            other => panic!("expected GapViolation, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn discrete_divergence_of_lift_is_small() {
        // the analytic divergence is exactly zero; the grid divergence of
        // nodal samples carries only discretization error, which scales
        // linearly with the rigid speed and quadratically with the mesh.
        // Checked at the speed scale the coupled solver operates in.
        let amp = 5e-5;
        let s = RigidState2D {
            h: V2::new(0.01, -0.005),
            angle: 0.0,
            ell: V2::new(amp, 0.6 * amp),
            omega: 2.0 * amp,
        };
        let sp = CutoffSpec::new(3.0, 2.0).unwrap();
        let b = LiftField2D::from_state(sp, 0.5, &s).unwrap();
        let mut errs = Vec::new();
        for n_r in [64usize, 128] {
            let g = AnnulusGrid::<f64>::new(0.5, 3.0, n_r, 256).unwrap();
            let u = crate::grid::VectorField::from_fn(&g, |x, y| b.eval([x, y]));
            errs.push(g.div(&u).unwrap().max_abs());
        }
        assert!(errs[1] < 1e-6, "max |div b| = {}", errs[1]);
        assert!(errs[0] / errs[1] > 3.0, "convergence {:?}", errs);
    }

    #[test]
    fn identity_transform_is_exact() {
        let g = grid();
        let t = TransformField::identity(&g);
        let c = t.checks(&g);
        assert_eq!(c.det_drift, 0.0);
        assert_eq!(c.jacobian_consistency, 0.0);
        assert_eq!(c.metric_consistency, 0.0);
        assert!(c.inversion_residual < 1e-13);
        // advancing with a zero lift keeps the identity datum exactly
        let b0 = LiftField2D::resting(spec());
        let t1 = t.advance_flow(&g, &b0, 0.01).unwrap();
        assert!(t1.is_identity);
    }

    #[test]
    fn pure_translation_is_exact_on_plateau_nodes() {
        let g = grid();
        let s = RigidState2D {
            ell: V2::new(0.2, -0.1),
            ..RigidState2D::rest()
        };
        let b = LiftField2D::from_state(spec(), 0.5, &s).unwrap();
        let mut t = TransformField::identity(&g);
        let dt = 0.01;
        for _ in 0..10 {
            t = t.advance_flow(&g, &b, dt).unwrap();
        }
        // node well inside {chi = 1} whose whole trajectory stays there
        let node = g.idx(4, 7);
        let [px, py] = node_coords(&g, node);
        assert!((t.x_map[0][node] - (px + 0.2 * 0.1)).abs() < 1e-13);
        assert!((t.x_map[1][node] - (py - 0.1 * 0.1)).abs() < 1e-13);
        // J_X stays the identity under a translation
        assert!((t.j_x[node] - Matrix2::identity()).abs().max() < 1e-13);
    }

    #[test]
    fn generic_motion_preserves_volume_and_inverts() {
        let g = grid();
        let s = RigidState2D {
            h: V2::new(0.005, -0.002),
            angle: 0.01,
            ell: V2::new(0.012, 0.007),
            omega: 0.03,
        };
        let b = LiftField2D::from_state(spec(), 0.5, &s).unwrap();
        let mut t = TransformField::identity(&g);
        let dt = 1e-3;
        for _ in 0..1000 {
            t = t.advance_flow(&g, &b, dt).unwrap();
        }
        t.fill_tensors(&g, Some(&b)).unwrap();
        let c = t.checks(&g);
        assert!(c.det_drift < 1e-6, "det drift {}", c.det_drift);
        assert!(c.jacobian_consistency < 1e-12);
        assert!(c.metric_consistency < 1e-8);
        assert!(c.inversion_residual < 1e-8, "inversion {}", c.inversion_residual);
    }

    #[test]
    fn rigid_region_metric_is_flat() {
        let g = grid();
        let b = LiftField2D::from_state(spec(), 0.5, &moving_state()).unwrap();
        let mut t = TransformField::identity(&g);
        // short horizon: the transition-zone displacement must stay below a
        // cell for the bilinear inversion; flatness on the rigid plateau is
        // independent of the motion size
        for _ in 0..50 {
            t = t.advance_flow(&g, &b, 1e-3).unwrap();
        }
        t.fill_tensors(&g, Some(&b)).unwrap();
        // inner nodes stay deep inside {chi = 1}; the map there is rigid,
        // so the pullback metric is the identity and Gamma vanishes
        for j in 0..g.n_theta {
            let node = g.idx(1, j);
            let gd = t.g_down[node] - Matrix2::identity();
            assert!(gd.abs().max() < 1e-10, "metric defect {}", gd.abs().max());
            for i in 0..2 {
                for a in 0..2 {
                    for bx in 0..2 {
                        assert!(t.gamma[node][i][a][bx].abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn vector_potential_3d_reproduces_rigid_velocity() {
        let h = Vector3::new(0.1, -0.2, 0.05);
        let hd = Vector3::new(0.3, 0.1, -0.2);
        let w = Vector3::new(0.2, -0.4, 0.7);
        let x = Vector3::new(0.8, 0.5, -0.3);
        // finite-difference curl of A
        let eps = 1e-6;
        let mut curl = Vector3::zeros();
        let a_at = |p: Vector3<f64>| vector_potential_3d(p, h, hd, w);
        let d = |k: usize| {
            let mut pp = x;
            let mut pm = x;
            pp[k] += eps;
            pm[k] -= eps;
            (a_at(pp) - a_at(pm)) / (2.0 * eps)
        };
        let (dx, dy, dz) = (d(0), d(1), d(2));
        curl.x = dy.z - dz.y;
        curl.y = dz.x - dx.z;
        curl.z = dx.y - dy.x;
        let rigid = hd + w.cross(&(x - h));
        assert!((curl - rigid).norm() < 1e-8);
        // lift equals rigid velocity on the chi = 1 plateau
        let sp = spec();
        let bv = lift_3d(x, h, hd, w, &sp);
        assert!((bv - rigid).norm() < 1e-14);
        // and vanishes at the wall
        let wall = Vector3::new(0.0, 0.0, 2.9);
        assert!(lift_3d(wall, h, hd, w, &sp).norm() == 0.0);
    }

    #[test]
    fn lift_3d_is_divergence_free() {
        let h = Vector3::new(0.05, 0.0, -0.1);
        let hd = Vector3::new(0.2, -0.1, 0.15);
        let w = Vector3::new(0.3, 0.25, -0.2);
        let sp = spec();
        let x = Vector3::new(1.6, 1.2, 0.9); // |x| ~ 2.17: transition zone
        let eps = 1e-5;
        let mut div = 0.0;
        for k in 0..3 {
            let mut pp = x;
            let mut pm = x;
            pp[k] += eps;
            pm[k] -= eps;
            div += (lift_3d(pp, h, hd, w, &sp)[k] - lift_3d(pm, h, hd, w, &sp)[k]) / (2.0 * eps);
        }
        // central differences at eps = 1e-5 leave O(eps^2 * third-derivative)
        // truncation; the steep step profile puts that near 1e-8 here
        assert!(div.abs() < 1e-7, "div = {div}");
    }
}
