//! Rigid body state, kinematics and Newton-Euler dynamics.
//!
//! The coupled solver runs the 2D reduction (scalar angular velocity,
//! scalar moment of inertia, no gyroscopic torque); the 3D kernels are kept
//! as standalone, pointwise-tested machinery.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::real::Real;
use crate::Error;

/// One-step integrator used for rigid updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    Rk2,
    Rk4,
}

/// Disk (2D) or ball-like (3D) particle of unit density.
#[derive(Clone, Debug)]
pub struct RigidBody<R: Real> {
    pub radius: R,
    pub mass: R,
    /// Scalar moment of inertia of the 2D disk about its center.
    pub inertia: R,
}

impl<R: Real> RigidBody<R> {
    /// Unit-density disk: `m = pi R^2`, `J0 = pi R^4 / 2`.
    pub fn disk(radius: R) -> Result<Self, Error> {
        if radius <= R::zero() {
            return Err(Error::Rigid(format!("radius must be positive, got {radius}")));
        }
        let pi = R::of(std::f64::consts::PI);
        Ok(Self {
            radius,
            mass: pi * radius * radius,
            inertia: pi * radius * radius * radius * radius / R::of(2.0),
        })
    }
}

/// 2D rigid state; velocities are body-frame (`ell`, `omega`), the spatial
/// pair is derived on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidState2D<R: Real> {
    /// Center of mass.
    pub h: Vector2<R>,
    /// Orientation angle (radians, unwrapped).
    pub angle: R,
    /// Body-frame translational velocity.
    pub ell: Vector2<R>,
    /// Angular velocity (frame-independent scalar in 2D).
    pub omega: R,
}

impl<R: Real> RigidState2D<R> {
    pub fn rest() -> Self {
        Self {
            h: Vector2::zeros(),
            angle: R::zero(),
            ell: Vector2::zeros(),
            omega: R::zero(),
        }
    }

    /// Rotation matrix of the current orientation, as column pairs.
    pub fn rotation(&self) -> [[R; 2]; 2] {
        let (s, c) = (
            num_traits::Float::sin(self.angle),
            num_traits::Float::cos(self.angle),
        );
        [[c, -s], [s, c]]
    }

    /// Spatial translational velocity `h' = Q ell`.
    pub fn h_dot(&self) -> Vector2<R> {
        let q = self.rotation();
        Vector2::new(
            q[0][0] * self.ell.x + q[0][1] * self.ell.y,
            q[1][0] * self.ell.x + q[1][1] * self.ell.y,
        )
    }

    pub fn is_finite(&self) -> bool {
        let fin = |v: R| num_traits::Float::is_finite(v);
        fin(self.h.x) && fin(self.h.y) && fin(self.angle) && fin(self.ell.x) && fin(self.ell.y) && fin(self.omega)
    }
}

/// 3D rigid state with explicit rotation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidState3D<R: Real> {
    pub h: Vector3<R>,
    pub q: Matrix3<R>,
    pub ell: Vector3<R>,
    pub omega: Vector3<R>,
}

impl<R: Real> RigidState3D<R> {
    pub fn rest() -> Self {
        Self {
            h: Vector3::zeros(),
            q: Matrix3::identity(),
            ell: Vector3::zeros(),
            omega: Vector3::zeros(),
        }
    }

    pub fn orthogonality_defect(&self) -> R {
        let e = self.q.transpose() * self.q - Matrix3::identity();
        let mut worst = R::zero();
        for v in e.iter() {
            worst = num_traits::Float::max(worst, num_traits::Float::abs(*v));
        }
        worst
    }
}

/// Velocity of the rigid motion at a spatial point (2D): `h' + Omega (x-h)^perp`.
pub fn rigid_velocity_2d<R: Real>(x: [R; 2], s: &RigidState2D<R>) -> [R; 2] {
    let hd = s.h_dot();
    let rx = x[0] - s.h.x;
    let ry = x[1] - s.h.y;
    [hd.x - s.omega * ry, hd.y + s.omega * rx]
}

/// Velocity of the rigid motion at a spatial point (3D): `h' + Omega x (x-h)`.
pub fn rigid_velocity_3d<R: Real>(x: Vector3<R>, s: &RigidState3D<R>) -> Vector3<R> {
    let h_dot = s.q * s.ell;
    let omega_sp = s.q * s.omega;
    h_dot + omega_sp.cross(&(x - s.h))
}

fn check_finite<R: Real>(vals: &[R], what: &str) -> Result<(), Error> {
    for v in vals {
        if !num_traits::Float::is_finite(*v) {
            return Err(Error::Rigid(format!("non-finite {what}")));
        }
    }
    Ok(())
}

/// Advance the 2D body-frame equations
/// `m ell' = -m omega ell^perp + F`, `J0 omega' = T`
/// together with `h' = Q ell`, `angle' = omega`, with force and torque
/// frozen over the step.
pub fn newton_euler_step_2d<R: Real>(
    body: &RigidBody<R>,
    s: &RigidState2D<R>,
    force: [R; 2],
    torque: R,
    dt: R,
    method: Integrator,
) -> Result<RigidState2D<R>, Error> {
    if dt <= R::zero() {
        return Err(Error::Rigid("dt must be positive".into()));
    }
    check_finite(&[force[0], force[1], torque], "force/torque")?;

    // state vector: [hx, hy, angle, lx, ly, omega]
    let f = |y: &[R; 6]| -> [R; 6] {
        let (sin_a, cos_a) = (num_traits::Float::sin(y[2]), num_traits::Float::cos(y[2]));
        let (lx, ly, om) = (y[3], y[4], y[5]);
        [
            cos_a * lx - sin_a * ly,
            sin_a * lx + cos_a * ly,
            om,
            -om * (-ly) + force[0] / body.mass,
            -om * lx + force[1] / body.mass,
            torque / body.inertia,
        ]
    };
    let y0 = [s.h.x, s.h.y, s.angle, s.ell.x, s.ell.y, s.omega];
    let y1 = match method {
        Integrator::Rk2 => rk2_step(&f, y0, dt),
        Integrator::Rk4 => rk4_step(&f, y0, dt),
    };
    Ok(RigidState2D {
        h: Vector2::new(y1[0], y1[1]),
        angle: y1[2],
        ell: Vector2::new(y1[3], y1[4]),
        omega: y1[5],
    })
}

fn rk2_step<R: Real, const N: usize>(f: &impl Fn(&[R; N]) -> [R; N], y: [R; N], dt: R) -> [R; N] {
    let k1 = f(&y);
    let mut ymid = y;
    for i in 0..N {
        ymid[i] += k1[i] * dt * R::of(0.5);
    }
    let k2 = f(&ymid);
    let mut out = y;
    for i in 0..N {
        out[i] += k2[i] * dt;
    }
    out
}

fn rk4_step<R: Real, const N: usize>(f: &impl Fn(&[R; N]) -> [R; N], y: [R; N], dt: R) -> [R; N] {
    let half = R::of(0.5);
    let k1 = f(&y);
    let mut y2 = y;
    for i in 0..N {
        y2[i] += k1[i] * dt * half;
    }
    let k2 = f(&y2);
    let mut y3 = y;
    for i in 0..N {
        y3[i] += k2[i] * dt * half;
    }
    let k3 = f(&y3);
    let mut y4 = y;
    for i in 0..N {
        y4[i] += k3[i] * dt;
    }
    let k4 = f(&y4);
    let sixth = R::of(1.0 / 6.0);
    let two = R::of(2.0);
    let mut out = y;
    for i in 0..N {
        out[i] += dt * sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
    }
    out
}

/// Advance the 3D body-frame Newton-Euler equations
/// `m ell' = -m (omega x ell) + F`, `J0 omega' = omega x (J0 omega) + T`,
/// plus `h' = Q ell` and `Q' = Q M(omega)`.
pub fn newton_euler_step_3d<R: Real>(
    mass: R,
    j0: &Matrix3<R>,
    s: &RigidState3D<R>,
    force: Vector3<R>,
    torque: Vector3<R>,
    dt: R,
    method: Integrator,
) -> Result<RigidState3D<R>, Error> {
    if dt <= R::zero() {
        return Err(Error::Rigid("dt must be positive".into()));
    }
    check_finite(
        &[force.x, force.y, force.z, torque.x, torque.y, torque.z],
        "force/torque",
    )?;
    let j0_inv = j0
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Rigid("singular inertia tensor".into()))?;

    // state vector: h (3) | Q row-major (9) | ell (3) | omega (3)
    let pack = |s: &RigidState3D<R>| -> [R; 18] {
        let mut y = [R::zero(); 18];
        for i in 0..3 {
            y[i] = s.h[i];
        }
        for r in 0..3 {
            for c in 0..3 {
                y[3 + 3 * r + c] = s.q[(r, c)];
            }
        }
        for i in 0..3 {
            y[12 + i] = s.ell[i];
            y[15 + i] = s.omega[i];
        }
        y
    };
    let unpack = |y: &[R; 18]| -> RigidState3D<R> {
        let mut q = Matrix3::zeros();
        for r in 0..3 {
            for c in 0..3 {
                q[(r, c)] = y[3 + 3 * r + c];
            }
        }
        RigidState3D {
            h: Vector3::new(y[0], y[1], y[2]),
            q,
            ell: Vector3::new(y[12], y[13], y[14]),
            omega: Vector3::new(y[15], y[16], y[17]),
        }
    };
    let f = |y: &[R; 18]| -> [R; 18] {
        let st = unpack(y);
        let h_dot = st.q * st.ell;
        let m_hat = skew(&st.omega);
        let q_dot = st.q * m_hat;
        let ell_dot = -st.omega.cross(&st.ell) + force / mass;
        let omega_dot = j0_inv * (st.omega.cross(&(j0 * st.omega)) + torque);
        let mut dy = [R::zero(); 18];
        for i in 0..3 {
            dy[i] = h_dot[i];
        }
        for r in 0..3 {
            for c in 0..3 {
                dy[3 + 3 * r + c] = q_dot[(r, c)];
            }
        }
        for i in 0..3 {
            dy[12 + i] = ell_dot[i];
            dy[15 + i] = omega_dot[i];
        }
        dy
    };
    let y0 = pack(s);
    let y1 = match method {
        Integrator::Rk2 => rk2_step(&f, y0, dt),
        Integrator::Rk4 => rk4_step(&f, y0, dt),
    };
    Ok(unpack(&y1))
}

fn skew<R: Real>(w: &Vector3<R>) -> Matrix3<R> {
    Matrix3::new(
        R::zero(),
        -w.z,
        w.y,
        w.z,
        R::zero(),
        -w.x,
        -w.y,
        w.x,
        R::zero(),
    )
}

/// Frame recovery from body-frame velocity samples: integrate
/// `Q' = Q M(omega)` by RK4 (omega linearly interpolated between samples),
/// then `h'(t) = Q(t) ell(t)` and `h` by the trapezoid rule.
pub struct RecoveredFrame<R: Real> {
    pub q: Vec<Matrix3<R>>,
    pub h_dot: Vec<Vector3<R>>,
    pub omega_spatial: Vec<Vector3<R>>,
    pub h: Vec<Vector3<R>>,
}

pub fn recover_frame<R: Real>(
    ell: &[Vector3<R>],
    omega: &[Vector3<R>],
    dt: R,
    orthonormalize: bool,
) -> Result<RecoveredFrame<R>, Error> {
    if ell.is_empty() || ell.len() != omega.len() {
        return Err(Error::Rigid("empty or mismatched velocity series".into()));
    }
    let n = ell.len();
    let mut q = Vec::with_capacity(n);
    q.push(Matrix3::<R>::identity());
    let half = R::of(0.5);
    for k in 0..n - 1 {
        let w0 = omega[k];
        let w1 = omega[k + 1];
        let wm = (w0 + w1) * half;
        let qk = q[k];
        // RK4 on Q' = Q M with M piecewise-linear in t
        let k1 = qk * skew(&w0);
        let k2 = (qk + k1 * (dt * half)) * skew(&wm);
        let k3 = (qk + k2 * (dt * half)) * skew(&wm);
        let k4 = (qk + k3 * dt) * skew(&w1);
        let mut qn =
            qk + (k1 + k2 * R::of(2.0) + k3 * R::of(2.0) + k4) * (dt / R::of(6.0));
        if orthonormalize {
            qn = gram_schmidt(&qn);
        }
        q.push(qn);
    }
    let h_dot: Vec<Vector3<R>> = (0..n).map(|k| q[k] * ell[k]).collect();
    let omega_spatial: Vec<Vector3<R>> = (0..n).map(|k| q[k] * omega[k]).collect();
    let mut h = Vec::with_capacity(n);
    h.push(Vector3::zeros());
    for k in 0..n - 1 {
        let prev = h[k];
        h.push(prev + (h_dot[k] + h_dot[k + 1]) * (dt * half));
    }
    Ok(RecoveredFrame {
        q,
        h_dot,
        omega_spatial,
        h,
    })
}

fn gram_schmidt<R: Real>(m: &Matrix3<R>) -> Matrix3<R> {
    let mut c0: Vector3<R> = m.column(0).into();
    c0 /= c0.norm();
    let mut c1: Vector3<R> = m.column(1).into();
    c1 -= c0 * c0.dot(&c1);
    c1 /= c1.norm();
    let c2 = c0.cross(&c1);
    Matrix3::from_columns(&[c0, c1, c2])
}

/// Spatial inertia tensor `J(t) = Q J0 Q^T`.
pub fn inertia_spatial<R: Real>(j0: &Matrix3<R>, q: &Matrix3<R>) -> Matrix3<R> {
    q * j0 * q.transpose()
}
