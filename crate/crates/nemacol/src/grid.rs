//! Discrete calculus on a fixed polar annulus.
//!
//! The reference fluid domain is the annulus between the particle circle
//! `r = r_inner` and the container circle `r = r_outer`. Nodes are
//! collocated, uniformly spaced in `r` and `theta`. Radial derivatives use
//! second order finite differences (one-sided at the two circles), azimuthal
//! derivatives are spectral, so fields that are polynomial in `r` and
//! band-limited in `theta` are differentiated exactly.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::real::Real;
use crate::Error;

/// Which boundary circle of the annulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Circle {
    Inner,
    Outer,
}

/// Polar grid on the annulus `r_inner <= r <= r_outer`.
///
/// Nodes: `(n_r + 1) * n_theta`, row-major in `(i_r, j_theta)` with
/// `r_i = r_inner + i * dr` and `theta_j = j * dtheta`.
pub struct AnnulusGrid<R: Real> {
    pub r_inner: R,
    pub r_outer: R,
    pub n_r: usize,
    pub n_theta: usize,
    pub dr: R,
    pub dtheta: R,
    pub r: Vec<R>,
    pub theta: Vec<R>,
    cos_t: Vec<R>,
    sin_t: Vec<R>,
    fft_fwd: Arc<dyn Fft<R>>,
    fft_inv: Arc<dyn Fft<R>>,
}

impl<R: Real> AnnulusGrid<R> {
    pub fn new(r_inner: R, r_outer: R, n_r: usize, n_theta: usize) -> Result<Self, Error> {
        if !(r_inner > R::zero() && r_inner < r_outer) {
            return Err(Error::Grid(format!(
                "radii must satisfy 0 < r_inner < r_outer, got {r_inner} and {r_outer}"
            )));
        }
        if n_r < 8 {
            return Err(Error::Grid(format!("n_r must be >= 8, got {n_r}")));
        }
        if n_theta < 16 || n_theta % 2 != 0 {
            return Err(Error::Grid(format!(
                "n_theta must be even and >= 16, got {n_theta}"
            )));
        }
        let dr = (r_outer - r_inner) / R::from_usize_lossy(n_r);
        let two_pi = R::of(std::f64::consts::TAU);
        let dtheta = two_pi / R::from_usize_lossy(n_theta);
        let r: Vec<R> = (0..=n_r)
            .map(|i| r_inner + dr * R::from_usize_lossy(i))
            .collect();
        let theta: Vec<R> = (0..n_theta)
            .map(|j| dtheta * R::from_usize_lossy(j))
            .collect();
        let cos_t = theta.iter().map(|&t| num_traits::Float::cos(t)).collect();
        let sin_t = theta.iter().map(|&t| num_traits::Float::sin(t)).collect();
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(n_theta);
        let fft_inv = planner.plan_fft_inverse(n_theta);
        Ok(Self {
            r_inner,
            r_outer,
            n_r,
            n_theta,
            dr,
            dtheta,
            r,
            theta,
            cos_t,
            sin_t,
            fft_fwd,
            fft_inv,
        })
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        (self.n_r + 1) * self.n_theta
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }

    /// Cartesian coordinates of node `(i, j)`.
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> [R; 2] {
        [self.r[i] * self.cos_t[j], self.r[i] * self.sin_t[j]]
    }

    #[inline]
    pub fn cos_sin(&self, j: usize) -> (R, R) {
        (self.cos_t[j], self.sin_t[j])
    }

    pub fn check_conforms(&self, len: usize) -> Result<(), Error> {
        if len != self.n_nodes() {
            return Err(Error::NonConforming {
                expected: self.n_nodes(),
                got: len,
            });
        }
        Ok(())
    }

    /// Integer azimuthal wavenumber of FFT bin `j` (negative for the upper half).
    fn wavenumber(&self, j: usize) -> i64 {
        if j <= self.n_theta / 2 {
            j as i64
        } else {
            j as i64 - self.n_theta as i64
        }
    }

    /// Forward FFT of every radial ring; `spectra[i]` holds ring `i`.
    pub fn rings_to_spectra(&self, f: &[R]) -> Vec<Vec<Complex<R>>> {
        let n = self.n_theta;
        (0..=self.n_r)
            .map(|i| {
                let mut buf: Vec<Complex<R>> = (0..n)
                    .map(|j| Complex::new(f[self.idx(i, j)], R::zero()))
                    .collect();
                self.fft_fwd.process(&mut buf);
                buf
            })
            .collect()
    }

    /// Forward FFT of a single ring of `n_theta` samples.
    pub fn ring_spectrum(&self, ring: &[R]) -> Vec<Complex<R>> {
        let mut buf: Vec<Complex<R>> = ring
            .iter()
            .map(|&v| Complex::new(v, R::zero()))
            .collect();
        self.fft_fwd.process(&mut buf);
        buf
    }

    /// Azimuthal wavenumber of FFT bin `j` (negative branch above Nyquist).
    pub fn bin_wavenumber(&self, j: usize) -> i64 {
        self.wavenumber(j)
    }

    pub fn spectra_to_rings(&self, spectra: &[Vec<Complex<R>>], out: &mut [R]) {
        let n = self.n_theta;
        let scale = R::one() / R::from_usize_lossy(n);
        for (i, ring) in spectra.iter().enumerate() {
            let mut buf = ring.clone();
            self.fft_inv.process(&mut buf);
            for j in 0..n {
                out[self.idx(i, j)] = buf[j].re * scale;
            }
        }
    }

    /// Spectral azimuthal derivatives: returns `(df/dtheta, d2f/dtheta2)`.
    pub fn dtheta_both(&self, f: &[R]) -> (Vec<R>, Vec<R>) {
        let n = self.n_theta;
        let scale = R::one() / R::from_usize_lossy(n);
        let mut d1 = vec![R::zero(); f.len()];
        let mut d2 = vec![R::zero(); f.len()];
        for i in 0..=self.n_r {
            let mut buf: Vec<Complex<R>> = (0..n)
                .map(|j| Complex::new(f[self.idx(i, j)], R::zero()))
                .collect();
            self.fft_fwd.process(&mut buf);
            let mut b1 = vec![Complex::new(R::zero(), R::zero()); n];
            let mut b2 = vec![Complex::new(R::zero(), R::zero()); n];
            for j in 0..n {
                let k = self.wavenumber(j);
                let kr = R::of(k as f64);
                // first derivative: i*k, Nyquist mode dropped (odd derivative)
                if 2 * j != n {
                    b1[j] = Complex::new(R::zero(), kr) * buf[j];
                }
                b2[j] = buf[j] * (-kr * kr);
            }
            self.fft_inv.process(&mut b1);
            self.fft_inv.process(&mut b2);
            for j in 0..n {
                d1[self.idx(i, j)] = b1[j].re * scale;
                d2[self.idx(i, j)] = b2[j].re * scale;
            }
        }
        (d1, d2)
    }

    pub fn dtheta(&self, f: &[R]) -> Vec<R> {
        self.dtheta_both(f).0
    }

    /// Radial derivative, second order; one-sided at both circles.
    pub fn dr_of(&self, f: &[R]) -> Vec<R> {
        let nt = self.n_theta;
        let nr = self.n_r;
        let h2 = R::of(2.0) * self.dr;
        let mut out = vec![R::zero(); f.len()];
        for j in 0..nt {
            out[self.idx(0, j)] = (-R::of(3.0) * f[self.idx(0, j)]
                + R::of(4.0) * f[self.idx(1, j)]
                - f[self.idx(2, j)])
                / h2;
            out[self.idx(nr, j)] = (R::of(3.0) * f[self.idx(nr, j)]
                - R::of(4.0) * f[self.idx(nr - 1, j)]
                + f[self.idx(nr - 2, j)])
                / h2;
            for i in 1..nr {
                out[self.idx(i, j)] = (f[self.idx(i + 1, j)] - f[self.idx(i - 1, j)]) / h2;
            }
        }
        out
    }

    /// Second radial derivative; 4-point one-sided rows at the circles.
    pub fn d2r_of(&self, f: &[R]) -> Vec<R> {
        let nt = self.n_theta;
        let nr = self.n_r;
        let h2 = self.dr * self.dr;
        let mut out = vec![R::zero(); f.len()];
        for j in 0..nt {
            out[self.idx(0, j)] = (R::of(2.0) * f[self.idx(0, j)]
                - R::of(5.0) * f[self.idx(1, j)]
                + R::of(4.0) * f[self.idx(2, j)]
                - f[self.idx(3, j)])
                / h2;
            out[self.idx(nr, j)] = (R::of(2.0) * f[self.idx(nr, j)]
                - R::of(5.0) * f[self.idx(nr - 1, j)]
                + R::of(4.0) * f[self.idx(nr - 2, j)]
                - f[self.idx(nr - 3, j)])
                / h2;
            for i in 1..nr {
                out[self.idx(i, j)] =
                    (f[self.idx(i + 1, j)] - R::of(2.0) * f[self.idx(i, j)] + f[self.idx(i - 1, j)])
                        / h2;
            }
        }
        out
    }
}

/// All polar derivatives of a scalar sample set up to second order.
pub struct PolarDerivs<R: Real> {
    pub fr: Vec<R>,
    pub ft: Vec<R>,
    pub frr: Vec<R>,
    pub frt: Vec<R>,
    pub ftt: Vec<R>,
}

/// First and second Cartesian derivatives of a scalar field.
pub struct CartesianDerivs<R: Real> {
    pub fx: Vec<R>,
    pub fy: Vec<R>,
    pub fxx: Vec<R>,
    pub fxy: Vec<R>,
    pub fyy: Vec<R>,
}

impl<R: Real> AnnulusGrid<R> {
    pub fn polar_derivs(&self, f: &[R]) -> PolarDerivs<R> {
        let (ft, ftt) = self.dtheta_both(f);
        let fr = self.dr_of(f);
        let frr = self.d2r_of(f);
        let frt = self.dr_of(&ft);
        PolarDerivs { fr, ft, frr, frt, ftt }
    }

    /// First Cartesian derivatives only.
    pub fn dx_dy(&self, f: &[R]) -> (Vec<R>, Vec<R>) {
        let (ft, _) = self.dtheta_both(f);
        let fr = self.dr_of(f);
        let mut fx = vec![R::zero(); f.len()];
        let mut fy = vec![R::zero(); f.len()];
        for i in 0..=self.n_r {
            let inv_r = R::one() / self.r[i];
            for j in 0..self.n_theta {
                let (c, s) = self.cos_sin(j);
                let n = self.idx(i, j);
                fx[n] = c * fr[n] - s * inv_r * ft[n];
                fy[n] = s * fr[n] + c * inv_r * ft[n];
            }
        }
        (fx, fy)
    }

    /// First and second Cartesian derivatives through the polar chain rule.
    pub fn cartesian_derivs(&self, f: &[R]) -> CartesianDerivs<R> {
        let p = self.polar_derivs(f);
        let len = f.len();
        let mut out = CartesianDerivs {
            fx: vec![R::zero(); len],
            fy: vec![R::zero(); len],
            fxx: vec![R::zero(); len],
            fxy: vec![R::zero(); len],
            fyy: vec![R::zero(); len],
        };
        for i in 0..=self.n_r {
            let r = self.r[i];
            let ir = R::one() / r;
            let ir2 = ir * ir;
            for j in 0..self.n_theta {
                let (c, s) = self.cos_sin(j);
                let n = self.idx(i, j);
                let (fr, ft, frr, frt, ftt) = (p.fr[n], p.ft[n], p.frr[n], p.frt[n], p.ftt[n]);
                out.fx[n] = c * fr - s * ir * ft;
                out.fy[n] = s * fr + c * ir * ft;
                let cs = c * s;
                out.fxx[n] = c * c * frr - R::of(2.0) * cs * ir * frt
                    + s * s * ir2 * ftt
                    + s * s * ir * fr
                    + R::of(2.0) * cs * ir2 * ft;
                out.fyy[n] = s * s * frr + R::of(2.0) * cs * ir * frt
                    + c * c * ir2 * ftt
                    + c * c * ir * fr
                    - R::of(2.0) * cs * ir2 * ft;
                out.fxy[n] = cs * frr + (c * c - s * s) * ir * frt - cs * ir2 * ftt - cs * ir * fr
                    - (c * c - s * s) * ir2 * ft;
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<R: Real>(pub Vec<R>);

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<R: Real> {
    pub x: Vec<R>,
    pub y: Vec<R>,
}

/// Three-component director samples over the 2D annulus.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectorField<R: Real> {
    pub c: [Vec<R>; 3],
}

impl<R: Real> ScalarField<R> {
    pub fn zeros(g: &AnnulusGrid<R>) -> Self {
        Self(vec![R::zero(); g.n_nodes()])
    }
    pub fn from_fn(g: &AnnulusGrid<R>, mut f: impl FnMut(R, R) -> R) -> Self {
        let mut v = vec![R::zero(); g.n_nodes()];
        for i in 0..=g.n_r {
            for j in 0..g.n_theta {
                let [x, y] = g.node(i, j);
                v[g.idx(i, j)] = f(x, y);
            }
        }
        Self(v)
    }
    pub fn max_abs(&self) -> R {
        self.0
            .iter()
            .fold(R::zero(), |m, &v| num_traits::Float::max(m, num_traits::Float::abs(v)))
    }
}

impl<R: Real> VectorField<R> {
    pub fn zeros(g: &AnnulusGrid<R>) -> Self {
        Self {
            x: vec![R::zero(); g.n_nodes()],
            y: vec![R::zero(); g.n_nodes()],
        }
    }
    pub fn from_fn(g: &AnnulusGrid<R>, mut f: impl FnMut(R, R) -> [R; 2]) -> Self {
        let mut out = Self::zeros(g);
        for i in 0..=g.n_r {
            for j in 0..g.n_theta {
                let [x, y] = g.node(i, j);
                let v = f(x, y);
                out.x[g.idx(i, j)] = v[0];
                out.y[g.idx(i, j)] = v[1];
            }
        }
        out
    }
    pub fn max_abs(&self) -> R {
        let mx = self
            .x
            .iter()
            .chain(self.y.iter())
            .fold(R::zero(), |m, &v| num_traits::Float::max(m, num_traits::Float::abs(v)));
        mx
    }
}

impl<R: Real> DirectorField<R> {
    pub fn zeros(g: &AnnulusGrid<R>) -> Self {
        Self {
            c: [
                vec![R::zero(); g.n_nodes()],
                vec![R::zero(); g.n_nodes()],
                vec![R::zero(); g.n_nodes()],
            ],
        }
    }
    pub fn constant(g: &AnnulusGrid<R>, d: [R; 3]) -> Self {
        Self {
            c: [
                vec![d[0]; g.n_nodes()],
                vec![d[1]; g.n_nodes()],
                vec![d[2]; g.n_nodes()],
            ],
        }
    }
    pub fn from_fn(g: &AnnulusGrid<R>, mut f: impl FnMut(R, R) -> [R; 3]) -> Self {
        let mut out = Self::zeros(g);
        for i in 0..=g.n_r {
            for j in 0..g.n_theta {
                let [x, y] = g.node(i, j);
                let d = f(x, y);
                for k in 0..3 {
                    out.c[k][g.idx(i, j)] = d[k];
                }
            }
        }
        out
    }
    /// max over nodes of | |d| - 1 |.
    pub fn norm_drift(&self) -> R {
        let mut worst = R::zero();
        for n in 0..self.c[0].len() {
            let mag = num_traits::Float::sqrt(
                self.c[0][n] * self.c[0][n] + self.c[1][n] * self.c[1][n] + self.c[2][n] * self.c[2][n],
            );
            worst = num_traits::Float::max(worst, num_traits::Float::abs(mag - R::one()));
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// Differential operators
// ---------------------------------------------------------------------------

impl<R: Real> AnnulusGrid<R> {
    pub fn grad(&self, f: &ScalarField<R>) -> Result<VectorField<R>, Error> {
        self.check_conforms(f.0.len())?;
        let (fx, fy) = self.dx_dy(&f.0);
        Ok(VectorField { x: fx, y: fy })
    }

    pub fn div(&self, u: &VectorField<R>) -> Result<ScalarField<R>, Error> {
        self.check_conforms(u.x.len())?;
        self.check_conforms(u.y.len())?;
        let (uxx, _) = self.dx_dy(&u.x);
        let (_, uyy) = self.dx_dy(&u.y);
        Ok(ScalarField(
            uxx.iter().zip(uyy.iter()).map(|(&a, &b)| a + b).collect(),
        ))
    }

    fn laplacian_component(&self, f: &[R]) -> Vec<R> {
        let (_, ftt) = self.dtheta_both(f);
        let fr = self.dr_of(f);
        let frr = self.d2r_of(f);
        let mut out = vec![R::zero(); f.len()];
        for i in 0..=self.n_r {
            let ir = R::one() / self.r[i];
            for j in 0..self.n_theta {
                let n = self.idx(i, j);
                out[n] = frr[n] + ir * fr[n] + ir * ir * ftt[n];
            }
        }
        out
    }

    pub fn laplacian(&self, f: &ScalarField<R>) -> Result<ScalarField<R>, Error> {
        self.check_conforms(f.0.len())?;
        Ok(ScalarField(self.laplacian_component(&f.0)))
    }

    pub fn laplacian_vec(&self, u: &VectorField<R>) -> Result<VectorField<R>, Error> {
        self.check_conforms(u.x.len())?;
        Ok(VectorField {
            x: self.laplacian_component(&u.x),
            y: self.laplacian_component(&u.y),
        })
    }

    pub fn laplacian_dir(&self, d: &DirectorField<R>) -> Result<DirectorField<R>, Error> {
        self.check_conforms(d.c[0].len())?;
        Ok(DirectorField {
            c: [
                self.laplacian_component(&d.c[0]),
                self.laplacian_component(&d.c[1]),
                self.laplacian_component(&d.c[2]),
            ],
        })
    }

    /// Area integral with weight `r dr dtheta`; trapezoid in `r`, rectangle in `theta`.
    pub fn integrate(&self, f: &ScalarField<R>) -> Result<R, Error> {
        self.check_conforms(f.0.len())?;
        let mut total = R::zero();
        for i in 0..=self.n_r {
            let wr = if i == 0 || i == self.n_r {
                R::of(0.5)
            } else {
                R::one()
            };
            let mut ring = R::zero();
            for j in 0..self.n_theta {
                ring += f.0[self.idx(i, j)];
            }
            total += wr * self.r[i] * ring;
        }
        Ok(total * self.dr * self.dtheta)
    }

    pub fn area(&self) -> R {
        R::of(std::f64::consts::PI) * (self.r_outer * self.r_outer - self.r_inner * self.r_inner)
    }

    /// Periodic trapezoid rule over one of the two circles.
    pub fn boundary_integral(&self, circle: Circle, ring: &[R]) -> Result<R, Error> {
        if ring.len() != self.n_theta {
            return Err(Error::NonConforming {
                expected: self.n_theta,
                got: ring.len(),
            });
        }
        let radius = match circle {
            Circle::Inner => self.r_inner,
            Circle::Outer => self.r_outer,
        };
        let sum: R = ring.iter().copied().sum();
        Ok(sum * radius * self.dtheta)
    }

    /// Extract the node values of a scalar sample set on a boundary circle.
    pub fn ring_of(&self, circle: Circle, f: &[R]) -> Vec<R> {
        let i = match circle {
            Circle::Inner => 0,
            Circle::Outer => self.n_r,
        };
        (0..self.n_theta).map(|j| f[self.idx(i, j)]).collect()
    }

    /// L2 norm sqrt(integrate(f^2)).
    pub fn l2_norm(&self, f: &[R]) -> R {
        let sq = ScalarField(f.iter().map(|&v| v * v).collect());
        num_traits::Float::sqrt(num_traits::Float::max(self.integrate(&sq).unwrap(), R::zero()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> AnnulusGrid<f64> {
        AnnulusGrid::new(1.0, 3.0, 32, 64).unwrap()
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn construction_validates() {
        assert!(AnnulusGrid::<f64>::new(-1.0, 3.0, 32, 64).is_err());
        assert!(AnnulusGrid::<f64>::new(3.0, 1.0, 32, 64).is_err());
        assert!(AnnulusGrid::<f64>::new(1.0, 3.0, 4, 64).is_err());
        assert!(AnnulusGrid::<f64>::new(1.0, 3.0, 32, 63).is_err());
    }

    #[test]
    fn gradient_exact_on_low_degree_polynomials() {
        let g = grid();
        // f = x  ->  grad = (1, 0)
        let f = ScalarField::from_fn(&g, |x, _| x);
        let gr = g.grad(&f).unwrap();
        assert!(max_err(&gr.x, &vec![1.0; g.n_nodes()]) < 1e-12);
        assert!(max_err(&gr.y, &vec![0.0; g.n_nodes()]) < 1e-12);
        // f = x*y  ->  grad = (y, x)
        let f = ScalarField::from_fn(&g, |x, y| x * y);
        let gr = g.grad(&f).unwrap();
        let ex = ScalarField::from_fn(&g, |_, y| y);
        let ey = ScalarField::from_fn(&g, |x, _| x);
        assert!(max_err(&gr.x, &ex.0) < 1e-11);
        assert!(max_err(&gr.y, &ey.0) < 1e-11);
    }

    #[test]
    fn divergence_of_rigid_rotation_vanishes() {
        let g = grid();
        let u = VectorField::from_fn(&g, |x, y| [-y, x]);
        let d = g.div(&u).unwrap();
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_exact_on_quadratics() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |x, y| x * x + y * y);
        let l = g.laplacian(&f).unwrap();
        assert!(max_err(&l.0, &vec![4.0; g.n_nodes()]) < 1e-10);
        let h = ScalarField::from_fn(&g, |x, y| x * x - y * y);
        let lh = g.laplacian(&h).unwrap();
        assert!(lh.max_abs() < 1e-10);
    }

    #[test]
    fn cartesian_second_derivatives_exact_on_quadratics() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |x, y| 2.0 * x * x + 3.0 * x * y - y * y);
        let d = g.cartesian_derivs(&f.0);
        let n = g.n_nodes();
        assert!(max_err(&d.fxx, &vec![4.0; n]) < 1e-10);
        assert!(max_err(&d.fxy, &vec![3.0; n]) < 1e-10);
        assert!(max_err(&d.fyy, &vec![-2.0; n]) < 1e-10);
    }

    #[test]
    fn laplacian_second_order_in_r() {
        // f = sin(r) cos(theta): smooth, band-limited azimuthally, so the
        // error is purely radial and must fall ~4x per refinement.
        let exact = |r: f64, t: f64| (-r.sin() + r.cos() / r - r.sin() / (r * r)) * t.cos();
        let mut errs = Vec::new();
        for n_r in [32usize, 64, 128] {
            let g = AnnulusGrid::<f64>::new(1.0, 3.0, n_r, 32).unwrap();
            let mut f = vec![0.0; g.n_nodes()];
            let mut ex = vec![0.0; g.n_nodes()];
            for i in 0..=g.n_r {
                for j in 0..g.n_theta {
                    f[g.idx(i, j)] = g.r[i].sin() * g.theta[j].cos();
                    ex[g.idx(i, j)] = exact(g.r[i], g.theta[j]);
                }
            }
            let l = g.laplacian(&ScalarField(f)).unwrap();
            errs.push(max_err(&l.0, &ex));
        }
        assert!(errs[0] / errs[1] > 3.3, "ratios {:?}", errs);
        assert!(errs[1] / errs[2] > 3.3, "ratios {:?}", errs);
    }

    #[test]
    fn integrate_matches_area_and_moments() {
        let g = grid();
        let one = ScalarField::from_fn(&g, |_, _| 1.0);
        assert!((g.integrate(&one).unwrap() - g.area()).abs() < 1e-12);
        // integral of x over a centered annulus vanishes
        let x = ScalarField::from_fn(&g, |x, _| x);
        assert!(g.integrate(&x).unwrap().abs() < 1e-12);
        // integral of r^2 = 2 pi (R_O^4 - R_S^4)/4 ; integrand r^3 is cubic in r,
        // so the radial trapezoid carries an O(dr^2) error.
        let r2 = ScalarField::from_fn(&g, |x, y| x * x + y * y);
        let exact = std::f64::consts::TAU * (81.0 - 1.0) / 4.0;
        assert!((g.integrate(&r2).unwrap() - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn boundary_integral_is_spectrally_accurate() {
        let g = grid();
        let ring: Vec<f64> = g.theta.iter().map(|t| 1.0 + t.cos().powi(2)).collect();
        // integral over circle radius 3 of (1 + cos^2) = 3 * (2pi + pi)
        let exact = 3.0 * 3.0 * std::f64::consts::PI;
        assert!((g.boundary_integral(Circle::Outer, &ring).unwrap() - exact).abs() < 1e-12);
        assert!(g.boundary_integral(Circle::Inner, &ring[..5]).is_err());
    }

    #[test]
    fn nonconforming_fields_are_rejected() {
        let g = grid();
        let bad = ScalarField(vec![0.0; 7]);
        match g.laplacian(&bad) {
            Err(Error::NonConforming { expected, got }) => {
                assert_eq!(expected, g.n_nodes());
                assert_eq!(got, 7);
            }
            other => panic!("expected NonConforming, got {other:?}"),
        }
    }

    #[test]
    fn f32_smoke() {
        let g = AnnulusGrid::<f32>::new(1.0, 3.0, 16, 32).unwrap();
        let f = ScalarField::from_fn(&g, |x, _| x);
        let gr = g.grad(&f).unwrap();
        let e: f32 = gr
            .x
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f32::max);
        assert!(e < 1e-4);
        assert!((g.integrate(&ScalarField::from_fn(&g, |_, _| 1.0f32)).unwrap() - g.area()).abs() < 1e-3);
    }
}
