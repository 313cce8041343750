//! Geometry and potentials of the model problem on the unit disk.
//!
//! The Green's function is normalized by `-Δ_x G(x, y) = 8π δ_y` with zero
//! boundary values, which on the disk gives the image formula
//! `G(x, y) = 4 log(|1 - x ȳ| / |x - y|)` and regular part
//! `H(x, y) = G(x, y) - 4 log(1/|x - y|) = 4 log|1 - x ȳ|`.

use serde::{Deserialize, Serialize};

use crate::bessel;
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Points within this distance outside the unit circle are still accepted
/// as boundary points.
const BOUNDARY_SLACK: f64 = 1e-12;

/// The unit disk centered at the origin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiskDomain;

impl DiskDomain {
    pub const RADIUS: f64 = 1.0;

    pub fn contains(&self, x: Point) -> bool {
        x.norm() < Self::RADIUS
    }

    pub fn contains_closed(&self, x: Point) -> bool {
        x.norm() <= Self::RADIUS + BOUNDARY_SLACK
    }

    /// 8π-normalized Dirichlet Green's function.
    pub fn green(&self, x: Point, y: Point) -> Result<f64> {
        self.check_pole(y)?;
        self.check_point(x)?;
        if (x - y).norm_sq() == 0.0 {
            return Err(Error::Domain(format!(
                "Green's function evaluated at its pole {y:?}"
            )));
        }
        Ok(green_raw(x, y))
    }

    /// Regular part `H(x, y)`, smooth in `x` including the diagonal.
    pub fn regular_part(&self, x: Point, y: Point) -> Result<f64> {
        self.check_pole(y)?;
        self.check_point(x)?;
        Ok(regular_part_raw(x, y))
    }

    /// First Dirichlet eigenpair, normalized to 1 at the center.
    pub fn eigenpair(&self) -> EigenPair {
        let j = bessel::j0_first_zero();
        EigenPair {
            lambda1: j * j,
            root: j,
        }
    }

    /// The lift `ρ = (-Δ)^{-1} h` with zero boundary data and the weight
    /// `k = exp(-ρ - (α/2) H(·, p))`.
    pub fn lift_h(&self, h: &HSpec, alpha: f64, p: Point) -> Result<PotentialData> {
        h.validate()?;
        self.check_pole(p)?;
        Ok(PotentialData {
            h: h.clone(),
            alpha,
            p,
        })
    }

    fn check_pole(&self, y: Point) -> Result<()> {
        if !y.is_finite() || y.norm() >= Self::RADIUS {
            return Err(Error::Domain(format!(
                "pole {y:?} must lie in the open unit disk"
            )));
        }
        Ok(())
    }

    fn check_point(&self, x: Point) -> Result<()> {
        if !x.is_finite() || !self.contains_closed(x) {
            return Err(Error::Domain(format!(
                "evaluation point {x:?} lies outside the closed unit disk"
            )));
        }
        Ok(())
    }
}

/// `|1 - x ȳ|^2 = 1 - 2 x·y + |x|^2 |y|^2`
fn image_factor(x: Point, y: Point) -> f64 {
    1.0 - 2.0 * x.dot(y) + x.norm_sq() * y.norm_sq()
}

pub(crate) fn green_raw(x: Point, y: Point) -> f64 {
    2.0 * image_factor(x, y).ln() - 2.0 * (x - y).norm_sq().ln()
}

pub(crate) fn regular_part_raw(x: Point, y: Point) -> f64 {
    2.0 * image_factor(x, y).ln()
}

/// Gradient of `H(·, y)` at `x`.
pub(crate) fn regular_part_grad_x(x: Point, y: Point) -> Point {
    let q = image_factor(x, y);
    (x * (2.0 * y.norm_sq()) - y * 2.0) * (2.0 / q)
}

/// Gradient of `y ↦ H(y, y)`; on the disk `H(y, y) = 4 log(1 - |y|^2)`.
pub(crate) fn regular_part_diag_grad(y: Point) -> Point {
    y * (-8.0 / (1.0 - y.norm_sq()))
}

/// Gradient of `G(·, y)` at `x`.
pub fn green_grad_x(x: Point, y: Point) -> Point {
    let d = x - y;
    regular_part_grad_x(x, y) - d * (4.0 / d.norm_sq())
}

/// First Dirichlet eigenpair of the unit disk: `λ₁ = j₀,₁²`,
/// `φ₁(x) = J₀(j₀,₁ |x|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda1: f64,
    root: f64,
}

impl EigenPair {
    pub fn phi1(&self, x: Point) -> f64 {
        bessel::j0(self.root * x.norm())
    }

    pub fn phi1_radial(&self, r: f64) -> f64 {
        bessel::j0(self.root * r)
    }

    pub fn grad_phi1(&self, x: Point) -> Point {
        let r = x.norm();
        if r == 0.0 {
            return Point::ORIGIN;
        }
        x * (-self.root * bessel::j1(self.root * r) / r)
    }

    /// Radius at which `φ₁` drops to `level` (for `level` in `(0, 1]`).
    pub fn radius_at_level(&self, level: f64) -> f64 {
        if level >= 1.0 {
            return 0.0;
        }
        if level <= 0.0 {
            return 1.0;
        }
        // φ₁ is strictly decreasing in r on [0, 1]
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.phi1_radial(mid) > level {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Supported forcing terms `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "coeffs", rename_all = "snake_case")]
pub enum HSpec {
    Zero,
    Constant(f64),
    /// `h(x) = Σ_i a_i |x|^{2i}`
    RadialPoly(Vec<f64>),
}

impl HSpec {
    fn coefficients(&self) -> Vec<f64> {
        match self {
            HSpec::Zero => vec![],
            HSpec::Constant(c) => vec![*c],
            HSpec::RadialPoly(a) => a.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            HSpec::RadialPoly(a) if a.is_empty() => Err(Error::Config(
                "radial_poly forcing needs at least one coefficient".into(),
            )),
            _ if self.coefficients().iter().any(|c| !c.is_finite()) => Err(Error::Config(
                "forcing coefficients must be finite".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Forcing `h`, its lift `ρ` and the weight `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialData {
    pub h: HSpec,
    pub alpha: f64,
    pub p: Point,
}

impl PotentialData {
    pub fn h(&self, x: Point) -> f64 {
        let r2 = x.norm_sq();
        self.h
            .coefficients()
            .iter()
            .rev()
            .fold(0.0, |acc, a| acc * r2 + a)
    }

    /// `ρ(x) = Σ_i a_i (1 - |x|^{2i+2}) / (2i+2)^2`, since
    /// `-Δ |x|^{2i+2} = -(2i+2)^2 |x|^{2i}`.
    pub fn rho(&self, x: Point) -> f64 {
        let r2 = x.norm_sq();
        self.h
            .coefficients()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let n = 2.0 * i as f64 + 2.0;
                a * (1.0 - r2.powi(i as i32 + 1)) / (n * n)
            })
            .sum()
    }

    pub fn grad_rho(&self, x: Point) -> Point {
        let r2 = x.norm_sq();
        // d/dx (r^{2i+2}) = (2i+2) r^{2i} x
        let s: f64 = self
            .h
            .coefficients()
            .iter()
            .enumerate()
            .map(|(i, a)| -a * r2.powi(i as i32) / (2.0 * i as f64 + 2.0))
            .sum();
        x * s
    }

    pub fn log_k(&self, x: Point) -> f64 {
        -self.rho(x) - 0.5 * self.alpha * regular_part_raw(x, self.p)
    }

    pub fn k(&self, x: Point) -> f64 {
        self.log_k(x).exp()
    }

    pub fn grad_log_k(&self, x: Point) -> Point {
        -self.grad_rho(x) - regular_part_grad_x(x, self.p) * (0.5 * self.alpha)
    }
}
