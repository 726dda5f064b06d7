//! Boundary-fitted curvilinear grids over sector-like domains
//! `Ω = {(r, θ) : 0 < r < R(θ), 0 < θ < α}`.
//!
//! Cells are indexed in logical coordinates `(s, θ) ∈ (0,1) × (0,α)` with
//! `r = s R(θ)`, so every angular line ends exactly on `Γ₀`. Radial nodes
//! are cell-centered and never touch the vertex.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{ConeSection, Model, SpaceForm};

/// `R(θ) = R₀ (1 + ε cos(kθ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRadius {
    pub r0: f64,
    pub epsilon: f64,
    pub k: u32,
}

impl BoundaryRadius {
    pub fn constant(r0: f64) -> Self {
        Self { r0, epsilon: 0.0, k: 2 }
    }

    pub fn perturbed(r0: f64, epsilon: f64, k: u32) -> Self {
        Self { r0, epsilon, k }
    }

    pub fn value(&self, theta: f64) -> f64 {
        if self.epsilon == 0.0 {
            return self.r0;
        }
        self.r0 * (1.0 + self.epsilon * (self.k as f64 * theta).cos())
    }

    pub fn d1(&self, theta: f64) -> f64 {
        if self.epsilon == 0.0 {
            return 0.0;
        }
        let k = self.k as f64;
        -self.r0 * self.epsilon * k * (k * theta).sin()
    }

    pub fn d2(&self, theta: f64) -> f64 {
        if self.epsilon == 0.0 {
            return 0.0;
        }
        let k = self.k as f64;
        -self.r0 * self.epsilon * k * k * (k * theta).cos()
    }

    pub fn max_value(&self) -> f64 {
        self.r0 * (1.0 + self.epsilon.abs())
    }

    pub fn min_value(&self) -> f64 {
        self.r0 * (1.0 - self.epsilon.abs())
    }
}

/// Which part of `∂Ω` a face belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryTag {
    /// Relative boundary inside the cone (Dirichlet).
    Gamma0,
    /// Cone walls (Neumann).
    Gamma1,
}

/// Boundary face. Outer faces are indexed by angular cell `j`; wall faces by
/// radial cell `i` and wall side (0 at `θ = 0`, 1 at `θ = α`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Outer { j: usize },
    Wall { side: u8, i: usize },
}

impl Face {
    pub fn tag(&self) -> BoundaryTag {
        match self {
            Face::Outer { .. } => BoundaryTag::Gamma0,
            Face::Wall { .. } => BoundaryTag::Gamma1,
        }
    }
}

/// Metric of `dr² + h(r)² dθ²` pulled back to `(s, θ)`, in the flux-ready
/// form `T = √G · G⁻¹` together with `√G`.
#[derive(Debug, Clone, Copy)]
pub struct LogicalMetric {
    pub sqrt_g: f64,
    pub t_ss: f64,
    pub t_st: f64,
    pub t_tt: f64,
}

impl LogicalMetric {
    pub fn inv_ss(&self) -> f64 {
        self.t_ss / self.sqrt_g
    }
    pub fn inv_st(&self) -> f64 {
        self.t_st / self.sqrt_g
    }
    pub fn inv_tt(&self) -> f64 {
        self.t_tt / self.sqrt_g
    }
    /// `|∇u|²` from logical derivatives.
    pub fn grad_norm_sq(&self, us: f64, ut: f64) -> f64 {
        (self.t_ss * us * us + 2.0 * self.t_st * us * ut + self.t_tt * ut * ut) / self.sqrt_g
    }
}

/// Serializable grid description: `{space_form, alpha, R0, epsilon, k, Nr, Nt}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub space_form: Model,
    pub alpha: f64,
    pub r0: f64,
    pub epsilon: f64,
    pub k: u32,
    pub nr: usize,
    pub nt: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<SectorGrid> {
        let cone = ConeSection::new(SpaceForm::new(self.space_form), self.alpha, 2)?;
        build_grid(
            cone,
            self.nr,
            self.nt,
            BoundaryRadius::perturbed(self.r0, self.epsilon, self.k),
        )
    }
}

#[derive(Debug, Clone)]
pub struct SectorGrid {
    pub cone: ConeSection,
    pub nr: usize,
    pub nt: usize,
    pub boundary: BoundaryRadius,
    pub ds: f64,
    pub dtheta: f64,
}

pub fn build_grid(cone: ConeSection, nr: usize, nt: usize, boundary: BoundaryRadius) -> Result<SectorGrid> {
    if nr < 8 || nt < 8 {
        return Err(Error::InvalidGrid(format!("need Nr, Nt >= 8, got {nr}x{nt}")));
    }
    if cone.dimension != 2 {
        return Err(Error::InvalidGrid("grids are two-dimensional".into()));
    }
    if !(boundary.r0 > 0.0) || !boundary.r0.is_finite() {
        return Err(Error::InvalidGrid(format!("R0 must be positive, got {}", boundary.r0)));
    }
    if !(boundary.epsilon.abs() < 1.0) {
        return Err(Error::InvalidGrid(format!(
            "perturbation amplitude {} would make R(θ) vanish",
            boundary.epsilon
        )));
    }
    if boundary.epsilon != 0.0 && boundary.k == 0 {
        return Err(Error::InvalidGrid("perturbation mode k must be >= 1".into()));
    }
    let rmax = boundary.max_value();
    let strict = SpaceForm {
        boundary_inclusive: false,
        ..cone.space_form
    };
    if !strict.contains(rmax) {
        return Err(Error::InvalidGrid(format!(
            "boundary radius up to {rmax} exceeds the radial interval of the {} model",
            cone.space_form.model
        )));
    }
    Ok(SectorGrid {
        cone,
        nr,
        nt,
        boundary,
        ds: 1.0 / nr as f64,
        dtheta: cone.alpha / nt as f64,
    })
}

impl SectorGrid {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            space_form: self.cone.space_form.model,
            alpha: self.cone.alpha,
            r0: self.boundary.r0,
            epsilon: self.boundary.epsilon,
            k: self.boundary.k,
            nr: self.nr,
            nt: self.nt,
        }
    }

    pub fn space_form(&self) -> &SpaceForm {
        &self.cone.space_form
    }

    pub fn curvature(&self) -> f64 {
        self.cone.space_form.curvature()
    }

    pub fn len(&self) -> usize {
        self.nr * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell ordering: radial index fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i + self.nr * j
    }

    #[inline]
    pub fn s(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.ds
    }

    #[inline]
    pub fn theta(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dtheta
    }

    #[inline]
    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.s(i) * self.boundary.value(self.theta(j))
    }

    /// Constant boundary radius: the grid is orthogonal and exactly polar.
    pub fn is_polar(&self) -> bool {
        self.boundary.epsilon == 0.0
    }

    /// Whether `Γ₀` meets both walls orthogonally (`R'(0) = R'(α) = 0`).
    pub fn corners_orthogonal(&self) -> bool {
        let tol = 1e-12 * self.boundary.r0;
        self.boundary.d1(0.0).abs() <= tol && self.boundary.d1(self.cone.alpha).abs() <= tol
    }

    /// Metric factors at logical point `(s, θ)`.
    pub fn metric(&self, s: f64, theta: f64) -> LogicalMetric {
        let big_r = self.boundary.value(theta);
        let dr = self.boundary.d1(theta);
        let h = self.cone.space_form.h(s * big_r);
        LogicalMetric {
            sqrt_g: big_r * h,
            t_ss: (s * s * dr * dr + h * h) / (big_r * h),
            t_st: -s * dr / h,
            t_tt: big_r / h,
        }
    }

    pub fn cell_metric(&self, i: usize, j: usize) -> LogicalMetric {
        self.metric(self.s(i), self.theta(j))
    }

    /// Cell area `h(r) Δr Δθ` with `Δr = R(θ) Δs` (midpoint rule).
    pub fn cell_volume(&self, i: usize, j: usize) -> f64 {
        let theta = self.theta(j);
        let big_r = self.boundary.value(theta);
        big_r * self.cone.space_form.h(self.s(i) * big_r) * self.ds * self.dtheta
    }

    pub fn volumes(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        for j in 0..self.nt {
            for i in 0..self.nr {
                v[self.idx(i, j)] = self.cell_volume(i, j);
            }
        }
        v
    }

    /// Length of outer face `j`: `√(R'² + h(R)²) Δθ`.
    pub fn gamma0_weight(&self, j: usize) -> f64 {
        let theta = self.theta(j);
        let big_r = self.boundary.value(theta);
        let dr = self.boundary.d1(theta);
        (dr * dr + self.cone.space_form.h(big_r).powi(2)).sqrt() * self.dtheta
    }

    /// Length of wall face `i` on `side`: `R(θ_wall) Δs`.
    pub fn wall_weight(&self, side: u8) -> f64 {
        self.boundary.value(self.wall_angle(side)) * self.ds
    }

    pub fn wall_angle(&self, side: u8) -> f64 {
        if side == 0 {
            0.0
        } else {
            self.cone.alpha
        }
    }

    /// All boundary faces: `Nt` outer faces followed by `Nr` faces per wall.
    pub fn faces(&self) -> Vec<Face> {
        let mut out: Vec<Face> = (0..self.nt).map(|j| Face::Outer { j }).collect();
        for side in 0..2u8 {
            out.extend((0..self.nr).map(|i| Face::Wall { side, i }));
        }
        out
    }

    pub fn face_measure(&self, face: Face) -> f64 {
        match face {
            Face::Outer { j } => self.gamma0_weight(j),
            Face::Wall { side, .. } => self.wall_weight(side),
        }
    }

    /// Outward unit normal in the orthonormal `(e_r, e_θ/h)` frame.
    pub fn outward_normal(&self, face: Face) -> [f64; 2] {
        match face {
            Face::Wall { side: 0, .. } => [0.0, -1.0],
            Face::Wall { .. } => [0.0, 1.0],
            Face::Outer { j } => {
                let theta = self.theta(j);
                let big_r = self.boundary.value(theta);
                let dr = self.boundary.d1(theta);
                let h = self.cone.space_form.h(big_r);
                let norm = (h * h + dr * dr).sqrt();
                [h / norm, -dr / norm]
            }
        }
    }

    /// `(|Ω|, 𝓗₁(Γ₀))` by midpoint quadrature.
    pub fn boundary_measures(&self) -> (f64, f64) {
        let area: f64 = self.volumes().iter().sum();
        let length: f64 = (0..self.nt).map(|j| self.gamma0_weight(j)).sum();
        (area, length)
    }

    /// Total wall length `𝓗₁(Γ₁)`.
    pub fn gamma1_length(&self) -> f64 {
        (self.wall_weight(0) + self.wall_weight(1)) * self.nr as f64
    }

    /// Characteristic mesh width: the larger of the radial and arc spacings.
    pub fn mesh_width(&self) -> f64 {
        let rmax = self.boundary.max_value();
        (rmax * self.ds).max(self.cone.space_form.h(rmax) * self.dtheta)
    }

    /// Cartesian position of a point with polar coordinates `(r, θ)` in the
    /// chart (Euclidean model).
    pub fn cartesian(r: f64, theta: f64) -> [f64; 2] {
        [r * theta.cos(), r * theta.sin()]
    }

    /// `∂(x, y)/∂(s, θ)` of the Euclidean chart, row-major.
    pub fn jacobian(&self, s: f64, theta: f64) -> [[f64; 2]; 2] {
        let big_r = self.boundary.value(theta);
        let dr = self.boundary.d1(theta);
        let (sn, cs) = theta.sin_cos();
        [
            [big_r * cs, s * dr * cs - s * big_r * sn],
            [big_r * sn, s * dr * sn + s * big_r * cs],
        ]
    }

    /// Stable digest of the grid description.
    pub fn grid_hash(&self) -> String {
        let spec = self.spec();
        let text = format!(
            "{}|{:.17e}|{:.17e}|{:.17e}|{}|{}|{}",
            spec.space_form, spec.alpha, spec.r0, spec.epsilon, spec.k, spec.nr, spec.nt
        );
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Exact area of the constant-radius sector.
    pub fn exact_sector_area(&self) -> Option<f64> {
        self.is_polar()
            .then(|| self.cone.alpha * self.cone.space_form.big_h(self.boundary.r0))
    }

    pub fn is_convex(&self) -> bool {
        self.cone.alpha <= PI
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_8};

    fn quarter(model: Model, eps: f64, n: usize) -> SectorGrid {
        GridSpec {
            space_form: model,
            alpha: FRAC_PI_2,
            r0: 1.0,
            epsilon: eps,
            k: 2,
            nr: n,
            nt: n,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn face_counts() {
        let g = quarter(Model::Euclidean, 0.0, 16);
        assert_eq!(g.len(), 256);
        let faces = g.faces();
        assert_eq!(faces.iter().filter(|f| f.tag() == BoundaryTag::Gamma0).count(), 16);
        assert_eq!(faces.iter().filter(|f| f.tag() == BoundaryTag::Gamma1).count(), 32);
        let (area, len) = g.boundary_measures();
        assert!(area > 0.0 && len > 0.0 && g.gamma1_length() > 0.0);
    }

    #[test]
    fn zero_perturbation_matches_constant_radius() {
        let cone = ConeSection::new(SpaceForm::euclidean(), FRAC_PI_2, 2).unwrap();
        let a = build_grid(cone, 16, 12, BoundaryRadius::constant(1.0)).unwrap();
        let b = build_grid(cone, 16, 12, BoundaryRadius::perturbed(1.0, 0.0, 3)).unwrap();
        assert_eq!(a.volumes(), b.volumes());
        for j in 0..12 {
            assert_eq!(a.gamma0_weight(j).to_bits(), b.gamma0_weight(j).to_bits());
            for i in 0..16 {
                assert_eq!(a.r(i, j).to_bits(), b.r(i, j).to_bits());
            }
        }
    }

    #[test]
    fn measures_at_64() {
        let g = quarter(Model::Euclidean, 0.0, 64);
        let (area, len) = g.boundary_measures();
        assert!((area / (PI / 4.0) - 1.0).abs() < 5e-3);
        assert!((len / FRAC_PI_2 - 1.0).abs() < 5e-3);
        let g = quarter(Model::Hyperbolic, 0.0, 64);
        let (area, len) = g.boundary_measures();
        assert!((area / (FRAC_PI_2 * (1f64.cosh() - 1.0)) - 1.0).abs() < 5e-3);
        assert!((len / (FRAC_PI_2 * 1f64.sinh()) - 1.0).abs() < 5e-3);
        assert!((FRAC_PI_2 * (1f64.cosh() - 1.0) - 0.85306).abs() < 1e-5);
        assert!((FRAC_PI_2 * 1f64.sinh() - 1.846002).abs() < 1e-6);
    }

    #[test]
    fn perturbation_lengthens_gamma0() {
        for model in [Model::Euclidean, Model::Hyperbolic, Model::Sphere] {
            let (_, l0) = quarter(model, 0.0, 32).boundary_measures();
            let (_, l1) = quarter(model, 0.1, 32).boundary_measures();
            assert!(l1 > l0, "{model}");
        }
    }

    #[test]
    fn normals() {
        let g = quarter(Model::Euclidean, 0.0, 16);
        assert_eq!(g.outward_normal(Face::Wall { side: 0, i: 3 }), [0.0, -1.0]);
        assert_eq!(g.outward_normal(Face::Outer { j: 5 }), [1.0, 0.0]);
        let spec = GridSpec {
            space_form: Model::Euclidean,
            alpha: FRAC_PI_2,
            r0: 1.0,
            epsilon: 0.1,
            k: 2,
            nr: 8,
            nt: 8,
        };
        let g = spec.build().unwrap();
        // Cell j = 1 of 8 over π/2 is centered at θ = 3π/32; pick the face nearest π/8.
        let j = (0..8)
            .min_by(|&a, &b| {
                (g.theta(a) - FRAC_PI_8)
                    .abs()
                    .partial_cmp(&(g.theta(b) - FRAC_PI_8).abs())
                    .unwrap()
            })
            .unwrap();
        let n = g.outward_normal(Face::Outer { j });
        let dr = g.boundary.d1(g.theta(j));
        assert!(n[1] != 0.0 && n[1].signum() == -dr.signum());
        assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn walls_are_radial() {
        // x·ν = 0 on Γ₁: the wall normal has no radial component.
        let g = quarter(Model::Hyperbolic, 0.2, 16);
        for f in g.faces() {
            if let Face::Wall { .. } = f {
                assert_eq!(g.outward_normal(f)[0], 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let cone = ConeSection::new(SpaceForm::euclidean(), FRAC_PI_2, 2).unwrap();
        assert!(build_grid(cone, 4, 16, BoundaryRadius::constant(1.0)).is_err());
        let sphere = ConeSection::new(SpaceForm::sphere(), FRAC_PI_2, 2).unwrap();
        assert!(build_grid(sphere, 16, 16, BoundaryRadius::constant(1.6)).is_err());
        assert!(build_grid(sphere, 16, 16, BoundaryRadius::perturbed(1.4, 0.2, 2)).is_err());
        assert!(build_grid(sphere, 16, 16, BoundaryRadius::constant(1.0)).is_ok());
    }

    #[test]
    fn metric_determinant() {
        let g = quarter(Model::Sphere, 0.15, 16);
        for (s, t) in [(0.3, 0.2), (0.9, 1.1)] {
            let m = g.metric(s, t);
            // det(G⁻¹) = 1/det(G) = 1/√G².
            let det_inv = m.inv_ss() * m.inv_tt() - m.inv_st() * m.inv_st();
            assert!((det_inv * m.sqrt_g * m.sqrt_g - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn area_and_length_converge_at_second_order() {
        for model in [Model::Euclidean, Model::Hyperbolic, Model::Sphere] {
            let vals: Vec<(f64, f64)> = [16, 32, 64]
                .iter()
                .map(|&n| quarter(model, 0.0, n).boundary_measures())
                .collect();
            if model == Model::Euclidean {
                // h(r) = r is linear in s, so the midpoint rule is exact.
                for v in &vals {
                    assert!((v.0 - PI / 4.0).abs() < 1e-13);
                }
            } else {
                let area_order = ((vals[0].0 - vals[1].0) / (vals[1].0 - vals[2].0)).log2();
                assert!(area_order >= 1.8, "{model}: area order {area_order}");
            }
            // Constant radius: arc length is exact at every level.
            let exact = FRAC_PI_2 * SpaceForm::new(model).h(1.0);
            for v in &vals {
                assert!((v.1 - exact).abs() < 1e-12);
            }
        }
        // The k = 2 integrand is even about both walls, so the midpoint rule
        // converges spectrally; compare against a fine reference.
        let reference = quarter(Model::Euclidean, 0.1, 512).boundary_measures().1;
        let err: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| (quarter(Model::Euclidean, 0.1, n).boundary_measures().1 - reference).abs())
            .collect();
        assert!(err[1] <= err[0] / 4.0 || err[1] < 1e-13);
        assert!(err[2] < 1e-12, "perturbed length error {err:?}");
    }
}
