//! Warped-product space forms `dr² + h(r)² g_{S^{N-1}}` and cone sections.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model of constant curvature `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Euclidean,
    Hyperbolic,
    Sphere,
}

impl Model {
    pub fn curvature(self) -> i32 {
        match self {
            Model::Euclidean => 0,
            Model::Hyperbolic => -1,
            Model::Sphere => 1,
        }
    }

    pub fn from_curvature(k: i32) -> Result<Self> {
        match k {
            0 => Ok(Model::Euclidean),
            -1 => Ok(Model::Hyperbolic),
            1 => Ok(Model::Sphere),
            _ => Err(Error::InvalidGeometry(format!("curvature must be -1, 0 or 1, got {k}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Euclidean => "euclidean",
            Model::Hyperbolic => "hyperbolic",
            Model::Sphere => "sphere",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "euclidean" => Ok(Model::Euclidean),
            "hyperbolic" => Ok(Model::Hyperbolic),
            "sphere" => Ok(Model::Sphere),
            other => Err(Error::InvalidGeometry(format!("unknown space form {other:?}"))),
        }
    }
}

/// Warping data `(h, ḣ, H)` at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Warping {
    pub h: f64,
    pub h_dot: f64,
    /// `H(r) = ∫₀ʳ h`.
    pub big_h: f64,
}

/// Space form with radial interval `I = [0, r_max)`. The hemisphere stops
/// strictly before the equator unless `boundary_inclusive` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceForm {
    pub model: Model,
    pub boundary_inclusive: bool,
}

impl SpaceForm {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            boundary_inclusive: false,
        }
    }

    pub fn euclidean() -> Self {
        Self::new(Model::Euclidean)
    }
    pub fn hyperbolic() -> Self {
        Self::new(Model::Hyperbolic)
    }
    pub fn sphere() -> Self {
        Self::new(Model::Sphere)
    }

    /// Admit the closed endpoint `r = π/2` of the hemisphere.
    pub fn inclusive(mut self) -> Self {
        self.boundary_inclusive = true;
        self
    }

    pub fn curvature(&self) -> f64 {
        self.model.curvature() as f64
    }

    pub fn r_max(&self) -> f64 {
        match self.model {
            Model::Sphere => FRAC_PI_2,
            _ => f64::INFINITY,
        }
    }

    pub fn contains(&self, r: f64) -> bool {
        let rm = self.r_max();
        r >= 0.0 && (r < rm || (self.boundary_inclusive && r == rm))
    }

    /// `h`, `ḣ`, `H` without range checks (also valid past `r_max`).
    pub fn warping_unchecked(&self, r: f64) -> Warping {
        match self.model {
            Model::Euclidean => Warping {
                h: r,
                h_dot: 1.0,
                big_h: 0.5 * r * r,
            },
            Model::Hyperbolic => {
                let s = (0.5 * r).sinh();
                Warping {
                    h: r.sinh(),
                    h_dot: r.cosh(),
                    big_h: 2.0 * s * s,
                }
            }
            Model::Sphere => {
                let s = (0.5 * r).sin();
                // cos(π/2) is not exactly 0 in floating point.
                let h_dot = if r == FRAC_PI_2 { 0.0 } else { r.cos() };
                Warping {
                    h: r.sin(),
                    h_dot,
                    big_h: 2.0 * s * s,
                }
            }
        }
    }

    pub fn warping_eval(&self, r: f64) -> Result<Warping> {
        if !self.contains(r) {
            let range = if self.boundary_inclusive {
                format!("[0, {}]", self.r_max())
            } else {
                format!("[0, {})", self.r_max())
            };
            return Err(Error::out_of_domain("radius", r, range));
        }
        Ok(self.warping_unchecked(r))
    }

    pub fn h(&self, r: f64) -> f64 {
        self.warping_unchecked(r).h
    }
    pub fn h_dot(&self, r: f64) -> f64 {
        self.warping_unchecked(r).h_dot
    }
    pub fn big_h(&self, r: f64) -> f64 {
        self.warping_unchecked(r).big_h
    }
    /// `ḧ = −K h`.
    pub fn h_ddot(&self, r: f64) -> f64 {
        -self.curvature() * self.h(r)
    }

    /// Geodesic distance between two points given in polar coordinates `(r, θ)`
    /// of the same 2-plane through the pole.
    pub fn distance(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let (r1, t1) = a;
        let (r2, t2) = b;
        let c = (t1 - t2).cos();
        match self.model {
            Model::Euclidean => (r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * c).max(0.0).sqrt(),
            Model::Hyperbolic => {
                let ch = r1.cosh() * r2.cosh() - r1.sinh() * r2.sinh() * c;
                ch.max(1.0).acosh()
            }
            Model::Sphere => {
                let cs = r1.cos() * r2.cos() + r1.sin() * r2.sin() * c;
                cs.clamp(-1.0, 1.0).acos()
            }
        }
    }
}

/// Maximum over samples of `|ḣ(r) + K H(r) − 1|`.
pub fn first_integral_check(sf: &SpaceForm, r_samples: &[f64]) -> f64 {
    let k = sf.curvature();
    r_samples
        .iter()
        .map(|&r| {
            let w = sf.warping_unchecked(r);
            (w.h_dot + k * w.big_h - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// Section of a cone: opening angle `alpha` over the space form, in
/// dimension `dimension`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeSection {
    pub space_form: SpaceForm,
    pub alpha: f64,
    pub dimension: usize,
}

impl ConeSection {
    /// `alpha = 2π` is admitted as the slit disk (both walls on one ray).
    pub fn new(space_form: SpaceForm, alpha: f64, dimension: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0 * PI) {
            return Err(Error::InvalidGeometry(format!("opening angle {alpha} outside (0, 2π]")));
        }
        if dimension < 2 {
            return Err(Error::InvalidGeometry(format!("dimension {dimension} < 2")));
        }
        Ok(Self {
            space_form,
            alpha,
            dimension,
        })
    }

    /// Planar sections have totally geodesic walls (`II ≡ 0`), so the region
    /// is convex exactly when `alpha ≤ π`.
    pub fn is_convex(&self) -> Result<bool> {
        cone_convexity(self)
    }
}

pub fn cone_convexity(cs: &ConeSection) -> Result<bool> {
    if cs.dimension != 2 {
        return Err(Error::Unsupported(format!(
            "cone convexity is only decided for 2-D sections, got N = {}",
            cs.dimension
        )));
    }
    Ok(cs.alpha <= PI)
}
