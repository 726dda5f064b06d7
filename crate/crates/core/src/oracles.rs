//! Closed-form radial solutions: exact ground truth for the solver and the
//! auditors.
//!
//! Euclidean: `u(x) = ∫_{|x-x0|}^R g'(s/N) ds` solves `L_f u = -1` in the ball.
//! Space forms: `u = (H(R) − H(d)) / (N ḣ(R))` solves `Δu + NKu = -1`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ConeSection, SpaceForm};
use crate::profiles::OperatorProfile;
use crate::quadrature;

const QUAD_TOL: f64 = 1e-12;

/// Radial profile of a solution about its center: values and derivatives in
/// the distance `d`, plus the distance map in the polar chart of the section.
pub trait RadialOracle: Send + Sync {
    fn dimension(&self) -> usize;
    fn radius(&self) -> f64;
    /// Curvature of the ambient model.
    fn curvature(&self) -> f64;
    fn u(&self, d: f64) -> Result<f64>;
    fn du(&self, d: f64) -> Result<f64>;
    fn d2u(&self, d: f64) -> Result<f64>;
    /// `c` such that `∂_ν u = −c` on the spherical part of the boundary.
    fn overdetermined_constant(&self) -> Result<f64>;
    /// Distance from the center to the point with polar coordinates `(r, θ)`.
    fn distance_polar(&self, r: f64, theta: f64) -> f64;
    /// Pointwise residual of the radial equation at distance `d`.
    fn residual(&self, d: f64) -> Result<f64>;
}

fn check_distance(d: f64, radius: f64) -> Result<()> {
    if !(d >= 0.0) || d > radius * (1.0 + 1e-14) {
        return Err(Error::out_of_domain("distance", d, format!("[0, {radius}]")));
    }
    Ok(())
}

/// Radial solution of `L_f u = -1` in a Euclidean ball of radius `R`.
#[derive(Debug, Clone)]
pub struct RadialSolutionEuclidean {
    pub profile: OperatorProfile,
    pub dimension: usize,
    pub radius: f64,
    pub center: Vec<f64>,
}

impl RadialSolutionEuclidean {
    pub fn new(profile: OperatorProfile, dimension: usize, radius: f64, center: Vec<f64>) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidGeometry(format!("dimension {dimension} < 2")));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::out_of_domain("radius", radius, "(0, inf)"));
        }
        if center.len() != dimension {
            return Err(Error::InvalidGeometry(format!(
                "center has {} coordinates, expected {dimension}",
                center.len()
            )));
        }
        // g' must be defined on [0, R/N]; for mean curvature this is R < N.
        if radius / dimension as f64 >= profile.f_prime_sup() {
            return Err(Error::out_of_domain(
                "R/N (must stay below sup f')",
                radius / dimension as f64,
                format!("[0, {})", profile.f_prime_sup()),
            ));
        }
        Ok(Self {
            profile,
            dimension,
            radius,
            center,
        })
    }

    /// Centered at the vertex of the cone.
    pub fn at_origin(profile: OperatorProfile, dimension: usize, radius: f64) -> Result<Self> {
        Self::new(profile, dimension, radius, vec![0.0; dimension])
    }

    fn n(&self) -> f64 {
        self.dimension as f64
    }

    /// `u(ρ) = ∫_ρ^R g'(s/N) ds`; closed form `(R²−ρ²)/(2N)` for the Laplacian.
    pub fn euclid_u(&self, rho: f64) -> Result<f64> {
        check_distance(rho, self.radius)?;
        let rho = rho.min(self.radius);
        if self.profile.is_laplacian() {
            return Ok((self.radius * self.radius - rho * rho) / (2.0 * self.n()));
        }
        let n = self.n();
        Ok(quadrature::integrate(
            |s| self.profile.g_prime(s / n).unwrap_or(f64::NAN),
            rho,
            self.radius,
            QUAD_TOL,
        ))
    }

    /// Value at a point `x ∈ ℝᴺ`.
    pub fn u_at(&self, x: &[f64]) -> Result<f64> {
        self.euclid_u(self.distance(x))
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `∇u = −g'(ρ/N) (x−x0)/ρ` and the analytic Hessian
    /// `−w'(ρ) e eᵀ − (w/ρ)(I − e eᵀ)` with `w = g'(ρ/N)`.
    pub fn euclid_gradient_hessian(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if x.len() != self.dimension {
            return Err(Error::InvalidGeometry("point dimension mismatch".into()));
        }
        let n = self.dimension;
        let rho = self.distance(x);
        check_distance(rho, self.radius)?;
        if rho == 0.0 {
            if self.profile.is_laplacian() {
                return Ok((DVector::zeros(n), -DMatrix::identity(n, n) / self.n()));
            }
            return Err(Error::out_of_domain(
                "distance (Hessian at the center is only defined for the Laplacian)",
                rho,
                "(0, R]",
            ));
        }
        let e = DVector::from_iterator(n, x.iter().zip(&self.center).map(|(a, b)| (a - b) / rho));
        let w = -self.du(rho)?;
        let dw = -self.d2u(rho)?;
        let eet = &e * e.transpose();
        let hess = -dw * &eet - (w / rho) * (DMatrix::identity(n, n) - &eet);
        Ok((-w * e, hess))
    }

    /// `L_f u + 1` evaluated as `Tr(∇²_ξV(∇u) ∇²u) + 1` from the analytic
    /// gradient and Hessian.
    pub fn pde_residual_euclid(&self, x: &[f64]) -> Result<f64> {
        let (grad, hess) = self.euclid_gradient_hessian(x)?;
        let v_hess = v_hessian(&self.profile, &grad);
        Ok((v_hess * hess).trace() + 1.0)
    }

    /// Checks that the center is the vertex, or a wall point whose half ball
    /// of radius `R` lies over the flat wall (2-D sections only).
    pub fn check_center_in_cone(&self, cone: &ConeSection) -> Result<()> {
        if self.center.iter().all(|&c| c == 0.0) {
            return Ok(());
        }
        if self.dimension != 2 || cone.dimension != 2 {
            return Err(Error::Unsupported(
                "off-vertex centers are only validated in dimension 2".into(),
            ));
        }
        let (x, y) = (self.center[0], self.center[1]);
        let a = x.hypot(y);
        let theta = y.atan2(x).rem_euclid(2.0 * PI);
        let on_first = y.abs() <= 1e-12 * a && x > 0.0;
        let on_second = (theta - cone.alpha).abs() <= 1e-12;
        if !(on_first || on_second) {
            return Err(Error::InvalidGeometry(
                "center is neither the vertex nor on a wall".into(),
            ));
        }
        let fits = a >= self.radius && (cone.alpha >= PI || a * cone.alpha.sin() >= self.radius);
        if !fits {
            return Err(Error::InvalidGeometry(
                "half ball about the wall center leaves the cone".into(),
            ));
        }
        Ok(())
    }
}

/// `V_{ξiξj}(ξ) = f''(|ξ|) ξiξj/|ξ|² − f'(|ξ|) ξiξj/|ξ|³ + f'(|ξ|) δij/|ξ|`.
pub fn v_hessian(profile: &OperatorProfile, xi: &DVector<f64>) -> DMatrix<f64> {
    let n = xi.len();
    let t = xi.norm();
    if t == 0.0 {
        return DMatrix::identity(n, n) * profile.flux_coefficient(0.0);
    }
    let fp = profile.f_prime(t);
    let fpp = profile.f_second(t);
    let outer = xi * xi.transpose() / (t * t);
    outer * (fpp - fp / t) + DMatrix::identity(n, n) * (fp / t)
}

impl RadialOracle for RadialSolutionEuclidean {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn radius(&self) -> f64 {
        self.radius
    }
    fn curvature(&self) -> f64 {
        0.0
    }
    fn u(&self, d: f64) -> Result<f64> {
        self.euclid_u(d)
    }
    fn du(&self, d: f64) -> Result<f64> {
        check_distance(d, self.radius)?;
        Ok(-self.profile.g_prime(d / self.n())?)
    }
    fn d2u(&self, d: f64) -> Result<f64> {
        check_distance(d, self.radius)?;
        if d == 0.0 && !self.profile.is_laplacian() {
            return Err(Error::out_of_domain("distance", d, "(0, R]"));
        }
        Ok(-self.profile.g_second(d / self.n())? / self.n())
    }
    fn overdetermined_constant(&self) -> Result<f64> {
        self.profile.g_prime(self.radius / self.n())
    }
    fn distance_polar(&self, r: f64, theta: f64) -> f64 {
        let mut p = vec![0.0; self.dimension];
        p[0] = r * theta.cos();
        p[1] = r * theta.sin();
        self.distance(&p)
    }
    fn residual(&self, d: f64) -> Result<f64> {
        let mut x = self.center.clone();
        x[0] += d;
        self.pde_residual_euclid(&x)
    }
}

/// Radial solution of `Δu + NKu = -1` in a geodesic ball of a space form.
///
/// The center is given in polar coordinates `(r0, θ0)` of the section's
/// chart: the pole, or a point on a wall.
#[derive(Debug, Clone)]
pub struct RadialSolutionSpaceForm {
    pub space_form: SpaceForm,
    pub dimension: usize,
    pub radius: f64,
    pub center: (f64, f64),
}

impl RadialSolutionSpaceForm {
    pub fn new(space_form: SpaceForm, dimension: usize, radius: f64, center: (f64, f64)) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidGeometry(format!("dimension {dimension} < 2")));
        }
        let strict = SpaceForm {
            boundary_inclusive: false,
            ..space_form
        };
        if !(radius > 0.0) || !strict.contains(radius) {
            return Err(Error::out_of_domain(
                "radius",
                radius,
                format!("(0, {})", space_form.r_max()),
            ));
        }
        Ok(Self {
            space_form,
            dimension,
            radius,
            center,
        })
    }

    pub fn at_pole(space_form: SpaceForm, dimension: usize, radius: f64) -> Result<Self> {
        Self::new(space_form, dimension, radius, (0.0, 0.0))
    }

    fn n(&self) -> f64 {
        self.dimension as f64
    }

    fn denom(&self) -> f64 {
        self.n() * self.space_form.h_dot(self.radius)
    }

    pub fn spaceform_u(&self, d: f64) -> Result<f64> {
        check_distance(d, self.radius)?;
        let sf = &self.space_form;
        Ok((sf.big_h(self.radius) - sf.big_h(d.min(self.radius))) / self.denom())
    }

    /// `u'' + (N−1)(ḣ/h) u' + NKu + 1` at distance `d ∈ (0, R)`.
    pub fn pde_residual_spaceform(&self, d: f64) -> Result<f64> {
        check_distance(d, self.radius)?;
        if d == 0.0 {
            return Err(Error::out_of_domain("distance", d, "(0, R)"));
        }
        let w = self.space_form.warping_unchecked(d);
        let n = self.n();
        let k = self.space_form.curvature();
        Ok(self.d2u(d)? + (n - 1.0) * (w.h_dot / w.h) * self.du(d)? + n * k * self.spaceform_u(d)? + 1.0)
    }
}

impl RadialOracle for RadialSolutionSpaceForm {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn radius(&self) -> f64 {
        self.radius
    }
    fn curvature(&self) -> f64 {
        self.space_form.curvature()
    }
    fn u(&self, d: f64) -> Result<f64> {
        self.spaceform_u(d)
    }
    fn du(&self, d: f64) -> Result<f64> {
        check_distance(d, self.radius)?;
        Ok(-self.space_form.h(d) / self.denom())
    }
    fn d2u(&self, d: f64) -> Result<f64> {
        check_distance(d, self.radius)?;
        Ok(-self.space_form.h_dot(d) / self.denom())
    }
    fn overdetermined_constant(&self) -> Result<f64> {
        Ok(self.space_form.h(self.radius) / self.denom())
    }
    fn distance_polar(&self, r: f64, theta: f64) -> f64 {
        self.space_form.distance((r, theta), self.center)
    }
    fn residual(&self, d: f64) -> Result<f64> {
        self.pde_residual_spaceform(d)
    }
}

/// One row of an oracle table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleRow {
    pub d: f64,
    pub u: f64,
    pub du: f64,
    pub residual: f64,
    pub c: f64,
}

/// Samples `samples` equispaced distances in `(0, R]`.
pub fn oracle_table(oracle: &dyn RadialOracle, samples: usize) -> Result<Vec<OracleRow>> {
    let c = oracle.overdetermined_constant()?;
    let r = oracle.radius();
    (1..=samples)
        .map(|i| {
            let d = r * i as f64 / samples as f64;
            // The residual needs an interior point.
            let d_res = if i == samples {
                r * (1.0 - 0.5 / samples as f64)
            } else {
                d
            };
            Ok(OracleRow {
                d,
                u: oracle.u(d)?,
                du: oracle.du(d)?,
                residual: oracle.residual(d_res)?,
                c,
            })
        })
        .collect()
}
