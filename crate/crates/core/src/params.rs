//! Problem data, the admissible configuration space and the explicit
//! concentration parameters of the bubbles.

use serde::{Deserialize, Serialize};

use crate::domain::{green_raw, regular_part_raw, DiskDomain, HSpec, PotentialData};
use crate::error::{Error, Result};
use crate::geometry::Point;

/// α within this distance of a positive integer is rejected.
pub const INTEGER_ALPHA_GUARD: f64 = 1e-9;

pub const DEFAULT_BALL_RADIUS: f64 = 0.3;
pub const DEFAULT_CUTOFF_RADIUS: f64 = 10.0;

/// `β = (m+1)(m+1+α)/2`
pub fn beta_of(m: usize, alpha: f64) -> f64 {
    let m1 = m as f64 + 1.0;
    m1 * (m1 + alpha) / 2.0
}

/// Checks `α ∈ (−1, ∞)` away from the positive integers.
pub fn validate_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha <= -1.0 {
        return Err(Error::Config(format!(
            "alpha = {alpha} outside (-1, inf): α ∈ (−1,∞)\\ℕ required"
        )));
    }
    let nearest = alpha.round();
    if nearest >= 1.0 && (alpha - nearest).abs() <= INTEGER_ALPHA_GUARD {
        return Err(Error::Config(format!(
            "alpha = {alpha} is a positive integer: α ∈ (−1,∞)\\ℕ required"
        )));
    }
    Ok(())
}

/// Midpoint of the admissible interval `(−1, min(α, −2/3))`.
pub fn default_alpha_hat(alpha: f64) -> f64 {
    0.5 * (-1.0 + alpha.min(-2.0 / 3.0))
}

/// Scalar data of one problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub m: usize,
    pub t: f64,
    pub p: Point,
    /// Radius of the ball around `p` holding the bubble centers.
    pub d: f64,
    pub beta: f64,
    pub alpha_hat: f64,
    /// Inner radius of the kernel cutoffs.
    pub r0: f64,
    pub h: HSpec,
}

impl ProblemSpec {
    pub fn new(alpha: f64, m: usize, t: f64, h: HSpec) -> Result<Self> {
        validate_alpha(alpha)?;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Config(format!("t = {t} must be positive")));
        }
        Ok(ProblemSpec {
            alpha,
            m,
            t,
            p: Point::ORIGIN,
            d: DEFAULT_BALL_RADIUS,
            beta: beta_of(m, alpha),
            alpha_hat: default_alpha_hat(alpha),
            r0: DEFAULT_CUTOFF_RADIUS,
            h,
        })
    }

    pub fn with_t(&self, t: f64) -> Result<Self> {
        let mut s = self.clone();
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Config(format!("t = {t} must be positive")));
        }
        s.t = t;
        Ok(s)
    }

    pub fn with_alpha_hat(mut self, alpha_hat: f64) -> Result<Self> {
        if !(alpha_hat > -1.0 && alpha_hat < self.alpha.min(-2.0 / 3.0)) {
            return Err(Error::Config(format!(
                "alpha_hat = {alpha_hat} must lie in (-1, min(alpha, -2/3))"
            )));
        }
        self.alpha_hat = alpha_hat;
        Ok(self)
    }

    pub fn with_ball_radius(mut self, d: f64) -> Result<Self> {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::Config(format!("ball radius d = {d} must lie in (0, 1)")));
        }
        self.d = d;
        Ok(self)
    }

    pub fn with_cutoff_radius(mut self, r0: f64) -> Result<Self> {
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(Error::Config(format!("cutoff radius R0 = {r0} must be positive")));
        }
        self.r0 = r0;
        Ok(self)
    }

    /// `1 + α`, the cone exponent of the singular bubble.
    pub fn kappa(&self) -> f64 {
        1.0 + self.alpha
    }

    /// Minimal separation `t^{−β}`.
    pub fn separation(&self) -> f64 {
        self.t.powf(-self.beta)
    }

    pub fn potential(&self, dom: &DiskDomain) -> Result<PotentialData> {
        dom.lift_h(&self.h, self.alpha, self.p)
    }
}

fn check_centers(spec: &ProblemSpec, xi: &[Point]) -> Result<()> {
    if xi.len() != spec.m {
        return Err(Error::Config(format!(
            "expected {} bubble centers, got {}",
            spec.m,
            xi.len()
        )));
    }
    for (i, &x) in xi.iter().enumerate() {
        if !x.is_finite() || x.norm() >= DiskDomain::RADIUS {
            return Err(Error::Config(format!("center {} = {x:?} is not interior", i + 1)));
        }
        if x == spec.p {
            return Err(Error::Config(format!("center {} coincides with p", i + 1)));
        }
        for (j, &y) in xi.iter().enumerate().skip(i + 1) {
            if x == y {
                return Err(Error::Config(format!(
                    "centers {} and {} coincide",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// Heights `μ₀` and `μ_i` selected so that the leading-order mismatch of the
/// ansatz near every center cancels; explicit in `ξ`.
pub fn concentration_params(
    spec: &ProblemSpec,
    xi: &[Point],
    dom: &DiskDomain,
) -> Result<(f64, Vec<f64>)> {
    check_centers(spec, xi)?;
    let pot = spec.potential(dom)?;
    let (alpha, kappa, p) = (spec.alpha, spec.kappa(), spec.p);

    let rhs0 = kappa * regular_part_raw(p, p) + xi.iter().map(|&x| green_raw(p, x)).sum::<f64>();
    let mu0 = (pot.k(p) / (8.0 * kappa * kappa)).sqrt() * (0.5 * rhs0).exp();

    let mu = xi
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let rhs = regular_part_raw(x, x)
                + kappa * green_raw(x, p)
                + xi
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &y)| green_raw(x, y))
                    .sum::<f64>();
            let log_weight = pot.log_k(x) + alpha * (x - p).norm_sq().ln();
            (0.5 * (log_weight - 8f64.ln() + rhs)).exp()
        })
        .collect();
    Ok((mu0, mu))
}

/// Bubble centers together with every derived scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleConfig {
    pub alpha: f64,
    pub t: f64,
    pub p: Point,
    pub xi: Vec<Point>,
    pub mu0: f64,
    pub mu: Vec<f64>,
    pub eps0: f64,
    pub eps: Vec<f64>,
    pub rho0: f64,
    pub v0: f64,
    pub gamma: Vec<f64>,
}

impl BubbleConfig {
    pub fn m(&self) -> usize {
        self.xi.len()
    }

    pub fn kappa(&self) -> f64 {
        1.0 + self.alpha
    }

    /// Core width of the singular bubble in `x`, `ρ₀v₀ = (ε₀μ₀)^{1/(1+α)}`.
    pub fn width0(&self) -> f64 {
        self.rho0 * self.v0
    }

    /// Core width of bubble `i` (0-based) in `x`, `ε_iμ_i`.
    pub fn width(&self, i: usize) -> f64 {
        self.eps[i] * self.mu[i]
    }

    /// Widths of all m+1 bubbles, singular bubble first.
    pub fn widths(&self) -> Vec<f64> {
        std::iter::once(self.width0())
            .chain((0..self.m()).map(|i| self.width(i)))
            .collect()
    }

    /// Centers of all m+1 bubbles, `p` first.
    pub fn centers(&self) -> Vec<Point> {
        std::iter::once(self.p).chain(self.xi.iter().copied()).collect()
    }
}

pub fn build_config(spec: &ProblemSpec, xi: &[Point], dom: &DiskDomain) -> Result<BubbleConfig> {
    let (mu0, mu) = concentration_params(spec, xi, dom)?;
    let eig = dom.eigenpair();
    let kappa = spec.kappa();
    let eps0 = (-0.5 * spec.t).exp();
    let eps: Vec<f64> = xi
        .iter()
        .map(|&x| (-0.5 * spec.t * eig.phi1(x)).exp())
        .collect();
    let gamma = eps.iter().zip(&mu).map(|(e, m)| e * m / eps0).collect();
    Ok(BubbleConfig {
        alpha: spec.alpha,
        t: spec.t,
        p: spec.p,
        xi: xi.to_vec(),
        mu0,
        mu,
        eps0,
        eps,
        rho0: eps0.powf(1.0 / kappa),
        v0: mu0.powf(1.0 / kappa),
        gamma,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// `|ξ_i − p| ≤ d`
    Ball,
    /// `|ξ_i − p| ≥ t^{−β}`
    CenterSeparation,
    /// `|ξ_i − ξ_j| ≥ t^{−β}`
    PairwiseSeparation,
    /// `1 − φ₁(ξ_i) ≤ 1/√t`
    EigenLevel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintStatus {
    pub constraint: Constraint,
    /// 1-based indices of the centers involved.
    pub centers: Vec<usize>,
    /// Signed slack, negative when violated.
    pub slack: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub admissible: bool,
    pub violated: Vec<ConstraintStatus>,
    /// Constraints holding with equality up to the relative tolerance.
    pub on_boundary: Vec<ConstraintStatus>,
}

impl MembershipReport {
    pub fn interior(&self) -> bool {
        self.admissible && self.on_boundary.is_empty()
    }
}

/// Membership of `ξ` in the closure of the configuration space. Constraints
/// met with equality up to `rel_tol` count as satisfied and are listed in
/// `on_boundary`.
pub fn in_configuration_space_tol(
    spec: &ProblemSpec,
    xi: &[Point],
    dom: &DiskDomain,
    rel_tol: f64,
) -> MembershipReport {
    let eig = dom.eigenpair();
    let sep = spec.separation();
    let level = 1.0 / spec.t.sqrt();
    let mut report = MembershipReport::default();
    // (constraint, centers, value, bound, value must be ≤ bound)
    let mut push = |c: Constraint, centers: Vec<usize>, value: f64, bound: f64, upper: bool| {
        let slack = if upper { bound - value } else { value - bound };
        let scale = value.abs().max(bound.abs()).max(f64::MIN_POSITIVE);
        let status = ConstraintStatus {
            constraint: c,
            centers,
            slack,
        };
        if slack.abs() <= rel_tol * scale {
            report.on_boundary.push(status);
        } else if slack < 0.0 || slack.is_nan() {
            report.violated.push(status);
        }
    };
    for (i, &x) in xi.iter().enumerate() {
        let r = (x - spec.p).norm();
        push(Constraint::Ball, vec![i + 1], r, spec.d, true);
        push(Constraint::CenterSeparation, vec![i + 1], r, sep, false);
        for (j, &y) in xi.iter().enumerate().skip(i + 1) {
            push(
                Constraint::PairwiseSeparation,
                vec![i + 1, j + 1],
                (x - y).norm(),
                sep,
                false,
            );
        }
        push(Constraint::EigenLevel, vec![i + 1], 1.0 - eig.phi1(x), level, true);
    }
    report.admissible = report.violated.is_empty();
    report
}

pub fn in_configuration_space(spec: &ProblemSpec, xi: &[Point], dom: &DiskDomain) -> MembershipReport {
    in_configuration_space_tol(spec, xi, dom, 1e-12)
}

/// Height ratios whose boundedness along a t-ladder reflects the a priori
/// bounds `1/C ≤ μ₀ ≤ C t^{2mβ}` and `1/C ≤ μ_i ≤ C t^{(2m+α)β}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightBounds {
    pub mu0_ratio: f64,
    pub mu_ratios: Vec<f64>,
    pub min_mu: f64,
}

pub fn theorem_bounds_check(cfg: &BubbleConfig, spec: &ProblemSpec) -> HeightBounds {
    let m = spec.m as f64;
    let mu0_ratio = cfg.mu0 * spec.t.powf(-2.0 * m * spec.beta);
    let mu_ratios = cfg
        .mu
        .iter()
        .map(|mu| mu * spec.t.powf(-(2.0 * m + spec.alpha) * spec.beta))
        .collect();
    let min_mu = cfg.mu.iter().copied().fold(cfg.mu0, f64::min);
    HeightBounds {
        mu0_ratio,
        mu_ratios,
        min_mu,
    }
}
