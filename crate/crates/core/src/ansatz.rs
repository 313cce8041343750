//! The explicit approximate solution: bubble profiles, harmonic boundary
//! corrections, the density `Ŵ`, the residual `Ê`, the approximate kernel
//! functions and the weighted sup norm.
//!
//! Everything is evaluated in the original variable `x ∈ Ω`. The rescaled
//! picture `y = x/ε₀` is related by `W(y) = ε₀² Ŵ(x)`, `E(y) = ε₀² Ê(x)` and
//! `V(y) = U(x) − 2t`.
//!
//! Bubble index 0 is the singular bubble at `p`; index `i ≥ 1` is the bubble
//! at `ξ_i`. Locations near a center should be passed as anchored [`Loc`]s,
//! since core widths can be far below the spacing of doubles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{regular_part_raw, DiskDomain, EigenPair, PotentialData};
use crate::error::{Error, Result};
use crate::geometry::{log_add_exp, Loc, Point};
use crate::harmonic::HarmonicSeries;
use crate::params::{BubbleConfig, ProblemSpec};

pub const DEFAULT_BOUNDARY_NODES: usize = 512;
const MAX_BOUNDARY_NODES: usize = 16384;
const SPECTRAL_TAIL_TOL: f64 = 1e-13;

/// Which harmonic correction the ansatz uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HMode {
    /// Harmonic extension of the exact boundary trace; `U = 0` on `∂Ω`.
    #[default]
    Exact,
    /// Leading-order closed form built from the regular part `H`.
    Closed,
}

#[derive(Clone, Debug)]
struct Bubble {
    center: Point,
    kappa: f64,
    /// `log a`, with `a = ε²μ² = width^{2κ}`.
    log_a: f64,
    /// `log(8μ²κ²/K)` with `K = k(p)` or `K = k(ξ_i)|ξ_i − p|^{2α}`.
    log_height: f64,
    /// Exact minus closed correction.
    delta: HarmonicSeries,
}

impl Bubble {
    /// `log(a + |x − c|^{2κ})`
    fn lse(&self, index: usize, loc: &Loc) -> f64 {
        let d2 = loc.dist_sq_to(index, self.center);
        log_add_exp(self.log_a, self.kappa * d2.ln())
    }

    /// `log(−Δu)`, the log of the bubble density.
    fn log_density(&self, index: usize, loc: &Loc) -> f64 {
        let d2 = loc.dist_sq_to(index, self.center);
        let mut v = (8.0 * self.kappa * self.kappa).ln() + self.log_a - 2.0 * self.lse(index, loc);
        if self.kappa != 1.0 {
            v += (self.kappa - 1.0) * d2.ln();
        }
        v
    }

    fn closed(&self, index: usize, loc: &Loc) -> f64 {
        self.kappa * regular_part_raw(loc.x, self.center) - 2.0 * self.lse(index, loc)
    }
}

/// Evaluators for the ansatz of one configuration.
#[derive(Clone, Debug)]
pub struct AnsatzFields {
    pub cfg: BubbleConfig,
    pub spec: ProblemSpec,
    pot: PotentialData,
    eig: EigenPair,
    bubbles: Vec<Bubble>,
    /// Accuracy warnings raised while building the corrections.
    pub warnings: Vec<String>,
}

impl AnsatzFields {
    pub fn new(spec: &ProblemSpec, cfg: &BubbleConfig, dom: &DiskDomain) -> Result<Self> {
        Self::with_boundary_nodes(spec, cfg, dom, DEFAULT_BOUNDARY_NODES)
    }

    pub fn with_boundary_nodes(
        spec: &ProblemSpec,
        cfg: &BubbleConfig,
        dom: &DiskDomain,
        nodes: usize,
    ) -> Result<Self> {
        if cfg.m() != spec.m || cfg.t != spec.t || cfg.alpha != spec.alpha {
            return Err(Error::Config(
                "bubble configuration does not match the problem data".into(),
            ));
        }
        let pot = spec.potential(dom)?;
        let eig = dom.eigenpair();
        let mut bubbles = Vec::with_capacity(cfg.m() + 1);
        let kappa = cfg.kappa();
        bubbles.push(Bubble {
            center: cfg.p,
            kappa,
            log_a: 2.0 * (cfg.eps0 * cfg.mu0).ln(),
            log_height: (8.0 * cfg.mu0 * cfg.mu0 * kappa * kappa).ln() - pot.log_k(cfg.p),
            delta: HarmonicSeries::zero(),
        });
        for (i, &xi) in cfg.xi.iter().enumerate() {
            bubbles.push(Bubble {
                center: xi,
                kappa: 1.0,
                log_a: 2.0 * cfg.width(i).ln(),
                log_height: (8.0 * cfg.mu[i] * cfg.mu[i]).ln()
                    - pot.log_k(xi)
                    - cfg.alpha * (xi - cfg.p).norm_sq().ln(),
                delta: HarmonicSeries::zero(),
            });
        }
        let mut warnings = Vec::new();
        for (j, b) in bubbles.iter_mut().enumerate() {
            // On |x| = 1 the closed form equals −u_j − 2 log(1 + a/|x − c|^{2κ}),
            // so the exact correction adds the extension of that logarithm.
            let (center, kappa, log_a) = (b.center, b.kappa, b.log_a);
            let g = |th: f64| {
                let d2 = (Point::polar(1.0, th) - center).norm_sq();
                2.0 * (log_a - kappa * d2.ln()).exp().ln_1p()
            };
            if center == Point::ORIGIN {
                b.delta = HarmonicSeries::constant(g(0.0));
                continue;
            }
            let (series, ok) = HarmonicSeries::fit(g, nodes, MAX_BOUNDARY_NODES, SPECTRAL_TAIL_TOL);
            if !ok {
                warnings.push(format!(
                    "boundary correction of bubble {j} not resolved with {} nodes (tail {:.1e})",
                    series.nodes, series.tail
                ));
            }
            b.delta = series;
        }
        Ok(AnsatzFields {
            cfg: cfg.clone(),
            spec: spec.clone(),
            pot,
            eig,
            bubbles,
            warnings,
        })
    }

    pub fn bubble_count(&self) -> usize {
        self.bubbles.len()
    }

    pub fn potential(&self) -> &PotentialData {
        &self.pot
    }

    pub fn eigen(&self) -> &EigenPair {
        &self.eig
    }

    /// The profile `u_j`.
    pub fn bubble_value(&self, which: usize, x: impl Into<Loc>) -> f64 {
        let b = &self.bubbles[which];
        b.log_height - 2.0 * b.lse(which, &x.into())
    }

    /// `−Δu_j`, the bubble density appearing in `−ΔU`.
    pub fn bubble_density(&self, which: usize, x: impl Into<Loc>) -> f64 {
        self.bubbles[which].log_density(which, &x.into()).exp()
    }

    pub fn log_bubble_density(&self, which: usize, x: impl Into<Loc>) -> f64 {
        self.bubbles[which].log_density(which, &x.into())
    }

    /// Closed-form correction `κ_j H(x, c_j) − log(8μ_j²κ_j²/K_j)`.
    pub fn harmonic_correction_closed(&self, which: usize, x: Point) -> f64 {
        let b = &self.bubbles[which];
        b.kappa * regular_part_raw(x, b.center) - b.log_height
    }

    /// Exact correction: the harmonic function equal to `−u_j` on `∂Ω`.
    pub fn harmonic_correction_exact(&self, which: usize, x: Point) -> f64 {
        self.harmonic_correction_closed(which, x) + self.bubbles[which].delta.eval(x)
    }

    /// Exact minus closed correction, computed without cancellation.
    pub fn correction_gap(&self, which: usize, x: Point) -> f64 {
        self.bubbles[which].delta.eval(x)
    }

    /// Independent route to the exact correction: Fourier extension of the
    /// boundary trace of `−u_j` itself.
    pub fn direct_extension(&self, which: usize, nodes: usize) -> (HarmonicSeries, bool) {
        HarmonicSeries::fit(
            |th| -self.bubble_value(which, Point::polar(1.0, th)),
            nodes,
            MAX_BOUNDARY_NODES,
            SPECTRAL_TAIL_TOL,
        )
    }

    /// `U_j = u_j + H_j`.
    pub fn component(&self, which: usize, x: impl Into<Loc>, mode: HMode) -> f64 {
        let loc = x.into();
        let b = &self.bubbles[which];
        let v = b.closed(which, &loc);
        match mode {
            HMode::Exact => v + b.delta.eval(loc.x),
            HMode::Closed => v,
        }
    }

    /// The ansatz `U = Σ_j (u_j + H_j)`.
    pub fn ansatz_u(&self, x: impl Into<Loc>, mode: HMode) -> f64 {
        let loc = x.into();
        (0..self.bubbles.len()).map(|j| self.component(j, loc, mode)).sum()
    }

    /// `log Ŵ`; `+∞` at `p` when `α < 0`.
    pub fn log_w_hat(&self, x: impl Into<Loc>) -> f64 {
        let loc = x.into();
        let mut v = self.pot.log_k(loc.x) - self.spec.t * self.eig.phi1(loc.x)
            + self.ansatz_u(loc, HMode::Exact);
        if self.cfg.alpha != 0.0 {
            v += self.cfg.alpha * loc.dist_sq_to(0, self.cfg.p).ln();
        }
        v
    }

    /// `Ŵ = |x − p|^{2α} k e^{−tφ₁} e^U`.
    pub fn w_hat(&self, x: impl Into<Loc>) -> f64 {
        self.log_w_hat(x).exp()
    }

    fn check_singular_point(&self, loc: &Loc) -> Result<()> {
        if self.cfg.alpha < 0.0 && loc.dist_sq_to(0, self.cfg.p) == 0.0 {
            return Err(Error::Domain(
                "density evaluated at the singular point with α < 0".into(),
            ));
        }
        Ok(())
    }

    pub fn density_w(&self, x: impl Into<Loc>) -> Result<f64> {
        let loc = x.into();
        self.check_singular_point(&loc)?;
        Ok(self.w_hat(loc))
    }

    /// `Ê = ΔU + Ŵ = Ŵ − Σ_j (−Δu_j)`, with the dominant density cancelled in
    /// relative form.
    pub fn e_hat(&self, x: impl Into<Loc>) -> f64 {
        let loc = x.into();
        let log_w = self.log_w_hat(loc);
        let logs: Vec<f64> = (0..self.bubbles.len())
            .map(|j| self.bubbles[j].log_density(j, &loc))
            .collect();
        let (dom, &log_d) = logs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one bubble");
        let others: f64 = logs
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != dom)
            .map(|(_, l)| l.exp())
            .sum();
        if log_d == f64::NEG_INFINITY {
            return log_w.exp() - others;
        }
        log_d.exp() * (log_w - log_d).exp_m1() - others
    }

    pub fn residual_e(&self, x: impl Into<Loc>) -> Result<f64> {
        let loc = x.into();
        self.check_singular_point(&loc)?;
        Ok(self.e_hat(loc))
    }

    /// `N(φ) = Ŵ (e^φ − 1 − φ)`.
    pub fn nonlinear_n(&self, x: impl Into<Loc>, phi: f64) -> f64 {
        self.w_hat(x) * exp_remainder(phi)
    }

    /// `V(y) = U(ε₀y) − 2t`.
    pub fn v_y(&self, y: Point) -> f64 {
        self.ansatz_u(y * self.cfg.eps0, HMode::Exact) - 2.0 * self.cfg.t
    }

    /// `W(y) = ε₀² Ŵ(ε₀y)`.
    pub fn w_y(&self, y: Point) -> f64 {
        self.cfg.eps0 * self.cfg.eps0 * self.w_hat(y * self.cfg.eps0)
    }

    /// `E(y) = ε₀² Ê(ε₀y)`.
    pub fn e_y(&self, y: Point) -> f64 {
        self.cfg.eps0 * self.cfg.eps0 * self.e_hat(y * self.cfg.eps0)
    }

    fn scaled_offset(&self, which: usize, loc: &Loc) -> Point {
        let b = &self.bubbles[which];
        let w = (0.5 * b.log_a / b.kappa).exp();
        loc.offset_from(which, b.center) * (1.0 / w)
    }

    /// Width of bubble `which` in `x`.
    pub fn width(&self, which: usize) -> f64 {
        let b = &self.bubbles[which];
        (0.5 * b.log_a / b.kappa).exp()
    }

    /// `Z_p = (ε₀/(ρ₀v₀)) 𝒵_p((x − p)/(ρ₀v₀))`, the rescaled-picture kernel
    /// written in `x`.
    pub fn kernel_p(&self, x: impl Into<Loc>) -> f64 {
        let z = self.scaled_offset(0, &x.into());
        self.cfg.eps0 / self.width(0) * model_kernel_p(z, self.cfg.alpha)
    }

    /// `Z_ij = (1/γ_i) 𝒵_j((x − ξ_i)/(ε_iμ_i))` for `i` in `1..=m`, `j` in `0..=2`.
    pub fn kernel(&self, i: usize, j: usize, x: impl Into<Loc>) -> f64 {
        let z = self.scaled_offset(i, &x.into());
        model_kernel(j, z) / self.cfg.gamma[i - 1]
    }

    pub fn chi_p(&self, x: impl Into<Loc>) -> f64 {
        cutoff(self.scaled_offset(0, &x.into()).norm(), self.spec.r0)
    }

    /// `χ_i` for `i` in `1..=m`.
    pub fn chi(&self, i: usize, x: impl Into<Loc>) -> f64 {
        cutoff(self.scaled_offset(i, &x.into()).norm(), self.spec.r0)
    }

    /// `log ŵ`, where `ε₀² ŵ(x)` is the weight of the star norm at `y = x/ε₀`.
    pub fn log_star_weight(&self, x: impl Into<Loc>) -> f64 {
        let loc = x.into();
        let (alpha, ah) = (self.cfg.alpha, self.spec.alpha_hat);
        let mut acc = 0.0_f64;
        let r0 = self.scaled_offset(0, &loc).norm();
        let mut term0 = -2.0 * self.width(0).ln() - (4.0 + 2.0 * ah + 2.0 * alpha) * r0.ln_1p();
        if alpha != 0.0 {
            term0 += 2.0 * alpha * r0.ln();
        }
        acc = log_add_exp(acc, term0);
        for i in 1..self.bubbles.len() {
            let r = self.scaled_offset(i, &loc).norm();
            acc = log_add_exp(acc, -2.0 * self.width(i).ln() - (4.0 + 2.0 * ah) * r.ln_1p());
        }
        acc
    }

    pub fn star_weight(&self, x: impl Into<Loc>) -> f64 {
        self.log_star_weight(x).exp()
    }

    /// Structured sample set for the star norm: `angles × shells` log-spaced
    /// circles around each center, from `10⁻³` core widths out to the
    /// boundary, plus `far` seeded uniform points in the disk.
    pub fn star_samples(&self, angles: usize, shells: usize, far: usize, seed: u64) -> Vec<Loc> {
        let mut out = Vec::with_capacity(self.bubbles.len() * angles * shells + far);
        for (j, b) in self.bubbles.iter().enumerate() {
            let w = self.width(j);
            let r_max = 1.0 - b.center.norm();
            let (l0, l1) = ((1e-3 * w).ln(), r_max.ln());
            for s in 0..shells {
                let r = (l0 + (l1 - l0) * s as f64 / (shells - 1).max(1) as f64).exp();
                for a in 0..angles {
                    let th = 2.0 * std::f64::consts::PI * (a as f64 + 0.5) / angles as f64;
                    out.push(Loc::anchored(j, b.center, Point::polar(r, th)));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..far {
            let r = rng.gen::<f64>().sqrt();
            let th = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
            out.push(Loc::free(Point::polar(r, th)));
        }
        out
    }

    pub fn default_star_samples(&self, seed: u64) -> Vec<Loc> {
        self.star_samples(64, 80, 2048, seed)
    }

    /// `sup |f| / ŵ` over `samples`: the star norm of `y ↦ ε₀² f(ε₀y)`.
    pub fn star_norm(&self, f: impl Fn(&Loc) -> f64, samples: &[Loc]) -> Result<f64> {
        let mut sup = 0.0_f64;
        for (n, loc) in samples.iter().enumerate() {
            let v = f(loc);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    patch: "star-norm samples".into(),
                    node: n,
                    x: loc.x,
                    value: v,
                });
            }
            sup = sup.max((v.abs().ln() - self.log_star_weight(*loc)).exp());
        }
        Ok(sup)
    }
}

/// `e^φ − 1 − φ`, by its series for small `|φ|`.
pub fn exp_remainder(phi: f64) -> f64 {
    if phi.abs() < 1e-3 {
        let p2 = phi * phi;
        p2 * (0.5 + phi * (1.0 / 6.0 + phi * (1.0 / 24.0 + phi / 120.0)))
    } else {
        phi.exp_m1() - phi
    }
}

/// `𝒵_p(z) = (|z|^{2(1+α)} − 1)/(|z|^{2(1+α)} + 1) = tanh((1+α) log|z|)`.
pub fn model_kernel_p(z: Point, alpha: f64) -> f64 {
    (0.5 * (1.0 + alpha) * z.norm_sq().ln()).tanh()
}

/// `𝒵₀(z) = (|z|² − 1)/(|z|² + 1)` and `𝒵_j(z) = 4z_j/(|z|² + 1)`.
pub fn model_kernel(j: usize, z: Point) -> f64 {
    match j {
        0 => model_kernel_p(z, 0.0),
        1 => 4.0 * z.x / (z.norm_sq() + 1.0),
        2 => 4.0 * z.y / (z.norm_sq() + 1.0),
        _ => panic!("kernel index {j} out of range 0..=2"),
    }
}

/// Radial cutoff: 1 up to `r0`, 0 from `r0 + 1`, quintic smoothstep between
/// (twice continuously differentiable).
pub fn cutoff(r: f64, r0: f64) -> f64 {
    let s = (r - r0).clamp(0.0, 1.0);
    1.0 - s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::HSpec;
    use crate::params::build_config;

    const D: DiskDomain = DiskDomain;

    fn fields(alpha: f64, xi: &[Point], t: f64) -> AnsatzFields {
        let spec = ProblemSpec::new(alpha, xi.len(), t, HSpec::Zero).unwrap();
        let cfg = build_config(&spec, xi, &D).unwrap();
        AnsatzFields::new(&spec, &cfg, &D).unwrap()
    }

    fn fd_laplacian(f: impl Fn(Point) -> f64, x: Point, h: f64) -> f64 {
        (f(x + Point::new(h, 0.0)) + f(x - Point::new(h, 0.0)) + f(x + Point::new(0.0, h))
            + f(x - Point::new(0.0, h))
            - 4.0 * f(x))
            / (h * h)
    }

    #[test]
    fn profile_at_center() {
        let a = fields(0.5, &[Point::new(0.2, 0.1)], 12.0);
        let c = &a.cfg;
        let k = 1.5;
        let want = (8.0 * c.mu0 * c.mu0 * k * k / (c.eps0.powi(4) * c.mu0.powi(4))).ln();
        assert!((a.bubble_value(0, Point::ORIGIN) - want).abs() < 1e-12);
    }

    #[test]
    fn profiles_solve_their_equations() {
        let a = fields(0.5, &[Point::new(0.2, 0.1)], 3.0);
        for x in [Point::new(0.3, -0.2), Point::new(0.25, 0.1), Point::new(-0.1, 0.05)] {
            for j in 0..2 {
                let lap = fd_laplacian(|z| a.bubble_value(j, z), x, 1e-4);
                let d = a.bubble_density(j, x);
                assert!((lap + d).abs() < 1e-5 * d.max(1.0), "bubble {j}: {lap} vs {d}");
            }
        }
    }

    #[test]
    fn exact_ansatz_vanishes_on_boundary() {
        let a = fields(0.5, &[Point::new(0.25, 0.0), Point::new(-0.1, 0.2)], 10.0);
        for k in 0..97 {
            let x = Point::polar(1.0, 0.3 + k as f64 * 0.0647);
            assert!(a.ansatz_u(x, HMode::Exact).abs() < 1e-9);
        }
        assert!(a.warnings.is_empty());
    }

    #[test]
    fn exact_and_direct_corrections_agree() {
        let a = fields(0.0, &[Point::new(0.45, 0.0)], 4.0);
        for j in 0..2 {
            let (direct, ok) = a.direct_extension(j, DEFAULT_BOUNDARY_NODES);
            assert!(ok);
            for x in [Point::ORIGIN, Point::new(0.3, 0.4), Point::polar(1.0, 2.5)] {
                let d = direct.eval(x) - a.harmonic_correction_exact(j, x);
                assert!(d.abs() < 1e-12, "bubble {j}: {d}");
            }
        }
    }

    #[test]
    fn closed_correction_is_harmonic() {
        let a = fields(0.5, &[Point::new(0.25, 0.0)], 10.0);
        for x in [Point::new(0.3, 0.3), Point::new(-0.5, 0.1)] {
            for j in 0..2 {
                let lap = fd_laplacian(|z| a.harmonic_correction_closed(j, z), x, 1e-3);
                assert!(lap.abs() < 1e-5);
            }
        }
    }

    #[test]
    fn residual_matches_difference_of_laplacian() {
        let a = fields(0.5, &[Point::new(0.25, 0.0)], 3.0);
        for x in [Point::new(0.6, 0.3), Point::new(-0.4, -0.5), Point::new(0.1, 0.7)] {
            let h = 2e-3;
            // fourth-order Laplacian
            let f = |z: Point| a.ansatz_u(z, HMode::Exact);
            let lap = (4.0 * fd_laplacian(f, x, h) - fd_laplacian(f, x, 2.0 * h)) / 3.0;
            let e = a.e_hat(x);
            assert!((lap + a.w_hat(x) - e).abs() < 1e-6, "{} vs {e}", lap + a.w_hat(x));
        }
    }

    #[test]
    fn picture_substitutions() {
        let a = fields(0.5, &[Point::new(0.2, -0.1)], 9.0);
        let eps0 = a.cfg.eps0;
        let pot = a.potential();
        for x in [Point::new(0.3, 0.2), Point::new(0.21, -0.09), Point::new(-0.05, 0.01)] {
            let y = x * (1.0 / eps0);
            let v = a.v_y(y);
            let q = pot.k(x) * (-a.spec.t * (a.eigen().phi1(x) - 1.0)).exp();
            let w = x.norm().powf(2.0 * a.cfg.alpha) * q * v.exp();
            assert!((a.w_y(y) / w - 1.0).abs() < 1e-10);
            assert!((a.e_y(y) / (eps0 * eps0 * a.e_hat(x)) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_point_is_a_domain_error_only_for_negative_alpha() {
        let neg = fields(-0.5, &[Point::new(0.2, 0.0)], 5.0);
        assert!(matches!(neg.density_w(Point::ORIGIN), Err(Error::Domain(_))));
        assert!(neg.residual_e(Point::ORIGIN).is_err());
        assert!(neg.bubble_value(0, Point::ORIGIN).is_finite());
        let pos = fields(0.5, &[Point::new(0.2, 0.0)], 5.0);
        assert_eq!(pos.density_w(Point::ORIGIN).unwrap(), 0.0);
    }

    #[test]
    fn nonlinearity() {
        let a = fields(0.0, &[], 5.0);
        let x = Point::new(0.01, 0.0);
        assert_eq!(a.nonlinear_n(x, 0.0), 0.0);
        for phi in [1e-4_f64, -7e-4, 9.99e-4] {
            let gap = a.nonlinear_n(x, phi) / a.w_hat(x) - phi * phi / 2.0;
            assert!(gap.abs() <= 1.01 * phi.abs().powi(3) / 6.0);
            assert!(gap.signum() == phi.signum());
        }
        // the series branch agrees with the direct formula at the switch
        let phi = 0.999e-3_f64;
        let direct = phi.exp_m1() - phi;
        assert!((exp_remainder(phi) / direct - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_examples() {
        let a = fields(0.5, &[Point::new(0.2, 0.0)], 10.0);
        assert_eq!(model_kernel_p(Point::ORIGIN, 0.5), -1.0);
        let zp = a.kernel_p(Point::ORIGIN);
        assert!((zp + a.cfg.eps0 / (a.cfg.rho0 * a.cfg.v0)).abs() < 1e-14 * zp.abs());
        assert!((model_kernel(1, Point::new(1.0, 0.0)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(3.0, 10.0), 1.0);
        assert_eq!(cutoff(10.0, 10.0), 1.0);
        assert_eq!(cutoff(11.0, 10.0), 0.0);
        assert!((cutoff(10.5, 10.0) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for k in 0..=100 {
            let c = cutoff(10.0 + k as f64 / 100.0, 10.0);
            assert!(c <= prev && (0.0..=1.0).contains(&c));
            prev = c;
        }
    }

    #[test]
    fn star_norm_of_weight_and_zero() {
        let a = fields(0.5, &[Point::new(0.2, 0.0)], 8.0);
        let s = a.default_star_samples(0);
        assert_eq!(s.len(), 2 * 64 * 80 + 2048);
        let n = a.star_norm(|l| a.star_weight(*l), &s).unwrap();
        assert!((n - 1.0).abs() < 1e-12);
        assert_eq!(a.star_norm(|_| 0.0, &s).unwrap(), 0.0);
        let err = a.star_norm(|_| f64::NAN, &s).unwrap_err();
        assert!(matches!(err, Error::NonFinite { node: 0, .. }));
    }

    #[test]
    fn tiny_cores_resolved_through_anchors() {
        let xi = Point::new(0.08, 0.0);
        let a = fields(0.0, &[xi], 160.0);
        let w = a.width(1);
        assert!(w < 1e-30);
        let loc = Loc::anchored(1, xi, Point::new(w, 0.0));
        // density at one core width is 8/(4 w²)
        let d = a.bubble_density(1, loc);
        assert!((d * w * w / 2.0 - 1.0).abs() < 1e-12);
        assert!(a.w_hat(loc).is_finite());
        assert!((a.w_hat(loc) / d - 1.0).abs() < 1e-2);
    }
}
