//! Convex scalar profiles `f` and the operators `L_f` they generate.
//!
//! Every profile ships analytic `f`, `f'`, `f''` and the inverse `g' = (f')⁻¹`
//! of its derivative (the derivative of the Fenchel conjugate `g`). The
//! conjugate itself is never stored: `g(f'(t)) = t f'(t) − f(t)`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature;

/// Analytic description of a profile. Implement this to register a new family.
pub trait ScalarProfile: Send + Sync {
    /// Stable identifier, e.g. `"p-laplacian:3"`.
    fn id(&self) -> String;
    fn f(&self, t: f64) -> f64;
    fn f_prime(&self, t: f64) -> f64;
    fn f_second(&self, t: f64) -> f64;
    /// Inverse of `f'`; errors outside the range of `f'`.
    fn g_prime(&self, s: f64) -> Result<f64>;
    /// `p` for power profiles.
    fn degeneracy_exponent(&self) -> Option<f64> {
        None
    }
    /// `sup f'` (the range of `f'` is `[0, sup)`).
    fn f_prime_sup(&self) -> f64 {
        f64::INFINITY
    }
}

/// `f(t) = t^p / p`.
#[derive(Debug, Clone, Copy)]
pub struct PowerProfile {
    p: f64,
}

impl ScalarProfile for PowerProfile {
    fn id(&self) -> String {
        if self.p == 2.0 {
            "laplacian".to_string()
        } else {
            format!("p-laplacian:{}", self.p)
        }
    }

    fn f(&self, t: f64) -> f64 {
        if self.p == 2.0 {
            0.5 * t * t
        } else {
            t.powf(self.p) / self.p
        }
    }

    fn f_prime(&self, t: f64) -> f64 {
        if self.p == 2.0 {
            t
        } else if t == 0.0 {
            0.0
        } else {
            t.powf(self.p - 1.0)
        }
    }

    fn f_second(&self, t: f64) -> f64 {
        if self.p == 2.0 {
            1.0
        } else {
            (self.p - 1.0) * t.powf(self.p - 2.0)
        }
    }

    fn g_prime(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::out_of_domain("g'", s, "[0, inf)"));
        }
        Ok(if self.p == 2.0 {
            s
        } else if self.p == 3.0 {
            s.sqrt()
        } else if s == 0.0 {
            0.0
        } else {
            s.powf(1.0 / (self.p - 1.0))
        })
    }

    fn degeneracy_exponent(&self) -> Option<f64> {
        Some(self.p)
    }
}

/// Mean-curvature profile `f(t) = √(1+t²) − 1`, shifted so that `f(0) = 0`.
#[derive(Debug, Clone, Copy)]
pub struct MeanCurvatureProfile;

impl ScalarProfile for MeanCurvatureProfile {
    fn id(&self) -> String {
        "mean-curvature".to_string()
    }

    fn f(&self, t: f64) -> f64 {
        // √(1+t²) − 1 without cancellation.
        t * t / ((1.0 + t * t).sqrt() + 1.0)
    }

    fn f_prime(&self, t: f64) -> f64 {
        t / (1.0 + t * t).sqrt()
    }

    fn f_second(&self, t: f64) -> f64 {
        (1.0 + t * t).powf(-1.5)
    }

    fn g_prime(&self, s: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&s) {
            return Err(Error::out_of_domain("g' (mean curvature)", s, "[0, 1)"));
        }
        Ok(s / ((1.0 - s) * (1.0 + s)).sqrt())
    }

    fn f_prime_sup(&self) -> f64 {
        1.0
    }
}

/// Shared handle to a profile; cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct OperatorProfile {
    inner: Arc<dyn ScalarProfile>,
}

impl fmt::Debug for OperatorProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("OperatorProfile").field(&self.id()).finish()
    }
}

impl OperatorProfile {
    pub fn new(profile: impl ScalarProfile + 'static) -> Self {
        Self {
            inner: Arc::new(profile),
        }
    }

    /// Parses `"laplacian"`, `"p-laplacian:<p>"` or `"mean-curvature"`.
    pub fn from_id(id: &str) -> Result<Self> {
        ProfileRegistry::with_builtins().resolve(id)
    }

    pub fn id(&self) -> String {
        self.inner.id()
    }
    pub fn f(&self, t: f64) -> f64 {
        self.inner.f(t)
    }
    pub fn f_prime(&self, t: f64) -> f64 {
        self.inner.f_prime(t)
    }
    pub fn f_second(&self, t: f64) -> f64 {
        self.inner.f_second(t)
    }
    pub fn g_prime(&self, s: f64) -> Result<f64> {
        self.inner.g_prime(s)
    }
    pub fn degeneracy_exponent(&self) -> Option<f64> {
        self.inner.degeneracy_exponent()
    }
    pub fn f_prime_sup(&self) -> f64 {
        self.inner.f_prime_sup()
    }

    /// True for `f(t) = t²/2`, where `L_f` is the Laplacian.
    pub fn is_laplacian(&self) -> bool {
        self.degeneracy_exponent() == Some(2.0)
    }

    /// `g''(s) = 1 / f''(g'(s))`.
    pub fn g_second(&self, s: f64) -> Result<f64> {
        let t = self.g_prime(s)?;
        Ok(1.0 / self.f_second(t))
    }

    /// Fenchel conjugate value `g(y)` through `g(f'(t)) = t f'(t) − f(t)`.
    pub fn conjugate(&self, y: f64) -> Result<f64> {
        let t = self.g_prime(y)?;
        Ok(t * y - self.f(t))
    }

    /// `g(f'(t))` recovered independently by integrating `g'` from 0.
    pub fn conjugate_by_quadrature(&self, y: f64) -> Result<f64> {
        self.g_prime(y)?;
        let failed = std::cell::RefCell::new(None);
        let v = quadrature::integrate(
            |s| match self.g_prime(s) {
                Ok(v) => v,
                Err(e) => {
                    failed.borrow_mut().get_or_insert(e.to_string());
                    f64::NAN
                }
            },
            0.0,
            y,
            1e-14 * y.max(1.0),
        );
        match failed.into_inner() {
            Some(msg) => Err(Error::InvalidProfile(msg)),
            None => Ok(v),
        }
    }

    /// Coefficient `f'(t)/t` of the frozen linear operator, with its
    /// limit `f''(0⁺)` at `t = 0` when it exists.
    pub fn flux_coefficient(&self, t: f64) -> f64 {
        if t > 0.0 {
            self.f_prime(t) / t
        } else {
            self.f_second(0.0)
        }
    }

    pub fn regularize(&self, epsilon: f64) -> Result<RegularizedProfile> {
        regularize(self, epsilon)
    }
}

/// Power profile `t^p/p`; `p = 2` is the Laplacian.
pub fn make_power_profile(p: f64) -> Result<OperatorProfile> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidProfile(format!(
            "power profile needs p > 1 (superlinearity), got {p}"
        )));
    }
    Ok(OperatorProfile::new(PowerProfile { p }))
}

pub fn make_mean_curvature_profile() -> OperatorProfile {
    OperatorProfile::new(MeanCurvatureProfile)
}

/// `f_ε(t) = f(√(ε²+t²)) − f(ε)`, the smooth approximation used near
/// critical points of `u`.
#[derive(Debug, Clone)]
pub struct RegularizedProfile {
    pub base: OperatorProfile,
    pub epsilon: f64,
}

impl RegularizedProfile {
    pub fn f_eps(&self, t: f64) -> f64 {
        let e = self.epsilon;
        self.base.f((e * e + t * t).sqrt()) - self.base.f(e)
    }

    pub fn f_eps_prime(&self, t: f64) -> f64 {
        let e = self.epsilon;
        let q = (e * e + t * t).sqrt();
        self.base.f_prime(q) * t / q
    }

    /// `a_ε(t) = f_ε'(t)/t = f'(√(ε²+t²))/√(ε²+t²)`, continuous at `t = 0`.
    pub fn coefficient(&self, t: f64) -> f64 {
        let e = self.epsilon;
        let q = (e * e + t * t).sqrt();
        self.base.f_prime(q) / q
    }
}

pub fn regularize(profile: &OperatorProfile, epsilon: f64) -> Result<RegularizedProfile> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::out_of_domain("epsilon", epsilon, "(0, inf)"));
    }
    Ok(RegularizedProfile {
        base: profile.clone(),
        epsilon,
    })
}

/// Constructor for a registered profile family; receives the text after `':'`.
pub type ProfileConstructor = Arc<dyn Fn(Option<&str>) -> Result<OperatorProfile> + Send + Sync>;

/// Maps profile ids to constructors. Built-ins plus programmatic registrations.
#[derive(Clone)]
pub struct ProfileRegistry {
    families: BTreeMap<String, ProfileConstructor>,
}

impl ProfileRegistry {
    pub fn empty() -> Self {
        Self {
            families: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("laplacian", |arg| match arg {
            None => make_power_profile(2.0),
            Some(a) => Err(Error::InvalidProfile(format!("laplacian takes no argument, got {a:?}"))),
        });
        reg.register("p-laplacian", |arg| {
            let text = arg.ok_or_else(|| Error::InvalidProfile("p-laplacian needs ':<p>'".into()))?;
            let p: f64 = text
                .trim()
                .parse()
                .map_err(|_| Error::InvalidProfile(format!("bad exponent {text:?}")))?;
            make_power_profile(p)
        });
        reg.register("mean-curvature", |arg| match arg {
            None => Ok(make_mean_curvature_profile()),
            Some(a) => Err(Error::InvalidProfile(format!(
                "mean-curvature takes no argument, got {a:?}"
            ))),
        });
        reg
    }

    pub fn register<F>(&mut self, family: &str, ctor: F)
    where
        F: Fn(Option<&str>) -> Result<OperatorProfile> + Send + Sync + 'static,
    {
        self.families.insert(family.to_string(), Arc::new(ctor));
    }

    pub fn resolve(&self, id: &str) -> Result<OperatorProfile> {
        let (family, arg) = match id.split_once(':') {
            Some((fam, arg)) => (fam.trim(), Some(arg)),
            None => (id.trim(), None),
        };
        let ctor = self
            .families
            .get(family)
            .ok_or_else(|| Error::InvalidProfile(format!("unknown profile {id:?}")))?;
        ctor(arg)
    }
}

/// One clause of the admissibility check.
#[derive(Debug, Clone, Serialize)]
pub struct ClauseVerdict {
    pub clause: String,
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Worst violation per admissibility clause. Failures are warnings: oracles
/// and solvers accept any strictly convex profile.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub profile: String,
    pub samples: usize,
    pub clauses: Vec<ClauseVerdict>,
}

impl AdmissibilityReport {
    pub fn all_pass(&self) -> bool {
        self.clauses.iter().all(|c| c.pass)
    }

    pub fn clause(&self, name: &str) -> Option<&ClauseVerdict> {
        self.clauses.iter().find(|c| c.clause == name)
    }
}

/// Logarithmic grid of `n` points spanning `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

const ROUND_TRIP_TOL: f64 = 1e-9;
/// Minimal log-log slope of `f(s)/s` over the last sampled decade.
const SUPERLINEAR_SLOPE: f64 = 1e-2;

pub fn check_admissibility(profile: &OperatorProfile, sample_count: usize) -> Result<AdmissibilityReport> {
    if sample_count < 8 {
        return Err(Error::InvalidProfile(format!(
            "admissibility needs at least 8 samples, got {sample_count}"
        )));
    }
    let samples = log_grid(1e-6, 1e3, sample_count);
    let mut clauses = Vec::new();

    let origin = profile.f(0.0).abs().max(profile.f_prime(0.0).abs());
    clauses.push(ClauseVerdict {
        clause: "vanishing_at_origin".into(),
        worst: origin,
        tolerance: 1e-14,
        pass: origin <= 1e-14,
    });

    let min_second = samples
        .iter()
        .map(|&s| profile.f_second(s))
        .fold(f64::INFINITY, f64::min);
    clauses.push(ClauseVerdict {
        clause: "strict_convexity".into(),
        worst: min_second,
        tolerance: 0.0,
        pass: min_second > 0.0,
    });

    let mut worst_trip = 0.0_f64;
    for &s in &samples {
        let y = profile.f_prime(s);
        let err = match profile.g_prime(y) {
            Ok(back) => (back - s).abs() / s.max(1.0),
            Err(_) => f64::INFINITY,
        };
        worst_trip = worst_trip.max(err);
    }
    clauses.push(ClauseVerdict {
        clause: "inverse_round_trip".into(),
        worst: worst_trip,
        tolerance: ROUND_TRIP_TOL,
        pass: worst_trip <= ROUND_TRIP_TOL,
    });

    // f(s)/s must increase along the grid and keep growing over the last
    // decade; the measured slope is reported as the clause value.
    let ratios: Vec<f64> = samples.iter().map(|&s| profile.f(s) / s).collect();
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    let hi = *samples.last().unwrap();
    let lo = hi / 10.0;
    let slope = ((profile.f(hi) / hi).ln() - (profile.f(lo) / lo).ln()) / 10f64.ln();
    clauses.push(ClauseVerdict {
        clause: "superlinearity".into(),
        worst: slope,
        tolerance: SUPERLINEAR_SLOPE,
        pass: increasing && slope >= SUPERLINEAR_SLOPE,
    });

    Ok(AdmissibilityReport {
        profile: profile.id(),
        samples: sample_count,
        clauses,
    })
}
