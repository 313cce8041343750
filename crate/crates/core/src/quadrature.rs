//! Quadrature on the unit disk for integrands that are singular at `p` and
//! sharply peaked at the bubble cores.
//!
//! The background rule is polar around the origin (`p = 0`): composite
//! Gauss–Legendre panels in `log r`, graded toward the singular core, refined
//! across the rings occupied by the bubble patches and toward the boundary
//! layer of `e^{−tφ₁}`, times a trapezoidal rule in the angle. Each bubble at
//! `ξ_i` gets its own polar patch in `log|x − ξ_i|` whose nodes are anchored at
//! the center. The two are glued by a smooth partition of unity: patch nodes
//! carry the weight factor `ψ_i` and background nodes `1 − Σ ψ_i`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Loc, Point};
use crate::params::BubbleConfig;

/// Core variable range `s = (r/width)^κ ∈ [S_MIN, S_MAX]` resolved by log panels.
const S_MIN: f64 = 1e-9;
/// Smallest radius the background rule descends to.
const R_FLOOR: f64 = 1e-300;
const MAX_PATCH_RADIUS: f64 = 0.1;

/// Length scales an integrand family is known to have.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub p: Point,
    pub kappa: f64,
    /// Core width of the singular bubble.
    pub width0: f64,
    /// Centers and core widths of the regular bubbles.
    pub bubbles: Vec<(Point, f64)>,
    /// Width of the boundary layer, or 0 for none.
    pub boundary_layer: f64,
}

impl Layout {
    pub fn from_config(cfg: &BubbleConfig) -> Self {
        Layout {
            p: cfg.p,
            kappa: cfg.kappa(),
            width0: cfg.width0(),
            bubbles: cfg.xi.iter().enumerate().map(|(i, &x)| (x, cfg.width(i))).collect(),
            // |∇φ₁| on the unit circle is j₀,₁ J₁(j₀,₁) ≈ 1.2484
            boundary_layer: 1.0 / (1.2484 * cfg.t),
        }
    }

    /// Radius of the patch around bubble `i`: at most half the distance to any
    /// other center (including `p`), half the distance to the boundary and 0.1.
    pub fn patch_radius(&self, i: usize) -> f64 {
        let c = self.bubbles[i].0;
        let mut r = MAX_PATCH_RADIUS.min(0.5 * (c - self.p).norm()).min(0.5 * (1.0 - c.norm()));
        for (j, &(o, _)) in self.bubbles.iter().enumerate() {
            if j != i {
                r = r.min(0.5 * (c - o).norm());
            }
        }
        r
    }

    /// Radius of the region attributed to the singular bubble.
    pub fn p_region_radius(&self) -> f64 {
        self.bubbles
            .iter()
            .map(|&(c, _)| 0.5 * (c - self.p).norm())
            .fold(MAX_PATCH_RADIUS, f64::min)
    }
}

/// Resolution parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    /// Largest panel width in the core log variable.
    pub log_panel: f64,
    /// Largest radial panel width in the background away from the core.
    pub linear_panel: f64,
    /// Angular nodes of the background rule.
    pub angles: usize,
    /// Angular nodes of each bubble patch.
    pub patch_angles: usize,
}

impl Default for QuadParams {
    fn default() -> Self {
        QuadParams {
            order: 10,
            log_panel: 1.0,
            linear_panel: 0.05,
            angles: 256,
            patch_angles: 64,
        }
    }
}

impl QuadParams {
    /// Angular resolution scaled to a node budget (about 800 background
    /// nodes per angle).
    pub fn for_budget(budget: usize) -> Self {
        let angles = (budget / 800).clamp(64, 2048).div_ceil(8) * 8;
        QuadParams {
            angles,
            ..QuadParams::default()
        }
    }

    /// Half the resolution in every direction, for error estimates.
    pub fn coarsened(&self) -> Self {
        QuadParams {
            order: self.order,
            log_panel: self.log_panel * 2.0,
            linear_panel: self.linear_panel * 2.0,
            angles: (self.angles / 2).max(16),
            patch_angles: (self.patch_angles / 2).max(16),
        }
    }

    pub fn refined(&self) -> Self {
        QuadParams {
            order: self.order,
            log_panel: self.log_panel / 2.0,
            linear_panel: self.linear_panel / 2.0,
            angles: self.angles * 2,
            patch_angles: self.patch_angles * 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub loc: Loc,
    pub weight: f64,
    /// 0 for the background rule, `i` for the patch of bubble `i`.
    pub patch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchInfo {
    pub name: String,
    pub center: Point,
    pub inner_scale: f64,
    pub outer_radius: f64,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
}

#[derive(Clone, Debug)]
pub struct QuadratureScheme {
    pub layout: Layout,
    pub params: QuadParams,
    pub nodes: Vec<Node>,
    pub patches: Vec<PatchInfo>,
    pub warnings: Vec<String>,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Smooth step: 1 for `ρ ≤ R/2`, 0 for `ρ ≥ R`, infinitely differentiable.
pub fn bump(rho: f64, radius: f64) -> f64 {
    let s = 2.0 * rho / radius - 1.0;
    if s <= 0.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let g = |u: f64| (-1.0 / u).exp();
    let (a, b) = (g(1.0 - s), g(s));
    a / (a + b)
}

/// Composite Gauss–Legendre rule in `u = ln r` over `breaks`, each interval
/// split so that its width in `u` is at most `max_du(r_mid)` and in `r` at
/// most `max_dr(r_mid)`. Returns `(r, weight for r dr)` pairs.
fn radial_rule(
    breaks: &[f64],
    order: usize,
    max_du: impl Fn(f64) -> f64,
    max_dr: impl Fn(f64) -> f64,
) -> Vec<(f64, f64)> {
    let (gx, gw) = gauss_legendre(order);
    let mut out = Vec::new();
    for win in breaks.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b <= a {
            continue;
        }
        let (ua, ub) = (a.ln(), b.ln());
        let mid = (a * b).sqrt();
        let n = (((ub - ua) / max_du(mid)).ceil())
            .max(((b - a) / max_dr(mid)).ceil())
            .max(1.0) as usize;
        // panels uniform in u for log-dominated intervals, in r otherwise
        let log_spaced = (ub - ua) / max_du(mid) >= (b - a) / max_dr(mid);
        for k in 0..n {
            let (pa, pb) = if log_spaced {
                let h = (ub - ua) / n as f64;
                ((ua + h * k as f64).exp(), (ua + h * (k + 1) as f64).exp())
            } else {
                let h = (b - a) / n as f64;
                (a + h * k as f64, a + h * (k + 1) as f64)
            };
            let (la, lb) = (pa.ln(), pb.ln());
            let half = 0.5 * (lb - la);
            for (x, w) in gx.iter().zip(&gw) {
                let r = (0.5 * (la + lb) + half * x).exp();
                out.push((r, w * half * r * r));
            }
        }
    }
    out
}

impl QuadratureScheme {
    pub fn for_config(cfg: &BubbleConfig, budget: usize) -> Result<Self> {
        Self::build(&Layout::from_config(cfg), &QuadParams::for_budget(budget))
    }

    pub fn build(layout: &Layout, params: &QuadParams) -> Result<Self> {
        if layout.p != Point::ORIGIN {
            return Err(Error::Config("quadrature requires p at the origin".into()));
        }
        if !(layout.width0 > 0.0 && layout.kappa > 0.0) || layout.bubbles.iter().any(|b| b.1 <= 0.0) {
            return Err(Error::Config("bubble widths must be positive".into()));
        }
        let mut warnings = Vec::new();
        let kappa = layout.kappa;
        let radii: Vec<f64> = (0..layout.bubbles.len()).map(|i| layout.patch_radius(i)).collect();
        for (i, (&(c, w), &r)) in layout.bubbles.iter().zip(&radii).enumerate() {
            if r < 1e3 * w {
                warnings.push(format!(
                    "patch {} at {c:?} has radius {r:.2e}, only {:.1} core widths",
                    i + 1,
                    r / w
                ));
            }
        }

        // background radial breakpoints
        let r_min = (layout.width0 * S_MIN.powf(1.0 / kappa)).max(R_FLOOR);
        let r_lo = layout
            .bubbles
            .iter()
            .zip(&radii)
            .map(|(&(c, _), &r)| 0.01 * (c.norm() - r))
            .fold(0.01, f64::min);
        let mut breaks = vec![r_min, r_lo, 1.0];
        for (&(c, _), &rad) in layout.bubbles.iter().zip(&radii) {
            let rc = c.norm();
            for f in [-1.0, -0.75, -0.5, 0.5, 0.75, 1.0] {
                breaks.push(rc + f * rad);
            }
        }
        if layout.boundary_layer > 0.0 {
            let mut d = layout.boundary_layer / 4.0;
            while d < 0.5 {
                breaks.push(1.0 - d);
                d *= 2.0;
            }
        }
        breaks.retain(|&r| r >= r_min && r <= 1.0);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        let rings: Vec<(f64, f64)> = layout
            .bubbles
            .iter()
            .zip(&radii)
            .map(|(&(c, _), &r)| (c.norm(), r))
            .collect();
        let layer = layout.boundary_layer;
        let max_du = |r: f64| {
            if r < r_lo {
                params.log_panel / kappa
            } else {
                params.log_panel / kappa.max(1.0)
            }
        };
        let max_dr = |r: f64| {
            let mut h = params.linear_panel;
            for &(rc, rad) in &rings {
                if (r - rc).abs() < rad {
                    h = h.min(params.linear_panel * rad / 0.4);
                }
            }
            if layer > 0.0 {
                h = h.min(params.linear_panel * ((1.0 - r) / 0.05).max(layer / 0.05 / 4.0));
            }
            h
        };
        let radial = radial_rule(&breaks, params.order, max_du, max_dr);

        // angular resolution of the rings: sixteen nodes per half patch radius
        let mut angles = params.angles;
        for &(rc, rad) in &rings {
            let need = (64.0 * PI * rc / rad).ceil() as usize;
            angles = angles.max(need.div_ceil(8) * 8);
        }
        let inner_angles = (angles / 8).max(16);

        let mut nodes = Vec::new();
        let mut bg_radial = 0;
        for &(r, wr) in &radial {
            let na = if r < r_lo { inner_angles } else { angles };
            bg_radial += 1;
            let wa = 2.0 * PI / na as f64;
            for a in 0..na {
                let th = wa * (a as f64 + 0.5);
                let off = Point::polar(r, th);
                let loc = Loc::anchored(0, layout.p, off);
                let mut psi = 0.0;
                for (&(c, _), &rad) in layout.bubbles.iter().zip(&radii) {
                    psi += bump((off - c).norm(), rad);
                }
                let weight = wr * wa * (1.0 - psi);
                if weight > 0.0 {
                    nodes.push(Node {
                        loc,
                        weight,
                        patch: 0,
                    });
                }
            }
        }
        let mut patches = vec![PatchInfo {
            name: "background".into(),
            center: layout.p,
            inner_scale: r_min,
            outer_radius: 1.0,
            radial_nodes: bg_radial,
            angular_nodes: angles,
        }];

        for (i, (&(c, w), &rad)) in layout.bubbles.iter().zip(&radii).enumerate() {
            let rho_min = w * S_MIN;
            let mut pb = vec![rho_min, 0.5 * rad, 0.625 * rad, 0.75 * rad, 0.875 * rad, rad];
            pb.retain(|&x| x >= rho_min);
            let prad = radial_rule(&pb, params.order, |_| params.log_panel, |_| f64::INFINITY);
            let na = params.patch_angles;
            let wa = 2.0 * PI / na as f64;
            for &(rho, wr) in &prad {
                let psi = bump(rho, rad);
                if psi <= 0.0 {
                    continue;
                }
                for a in 0..na {
                    let off = Point::polar(rho, wa * (a as f64 + 0.5));
                    nodes.push(Node {
                        loc: Loc::anchored(i + 1, c, off),
                        weight: wr * wa * psi,
                        patch: i + 1,
                    });
                }
            }
            patches.push(PatchInfo {
                name: format!("bubble {}", i + 1),
                center: c,
                inner_scale: rho_min,
                outer_radius: rad,
                radial_nodes: prad.len(),
                angular_nodes: na,
            });
        }

        Ok(QuadratureScheme {
            layout: layout.clone(),
            params: *params,
            nodes,
            patches,
            warnings,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted sums of a vector-valued integrand, evaluated in parallel and
    /// accumulated in node order with compensated summation.
    pub fn integrate_n<const N: usize, F>(&self, f: F) -> Result<[f64; N]>
    where
        F: Fn(&Loc) -> [f64; N] + Sync,
    {
        let values: Vec<[f64; N]> = self.nodes.par_iter().map(|n| f(&n.loc)).collect();
        let mut acc = [Neumaier::default(); N];
        for (node_index, (node, v)) in self.nodes.iter().zip(&values).enumerate() {
            for k in 0..N {
                if !v[k].is_finite() {
                    return Err(self.non_finite(node_index, v[k]));
                }
                acc[k].add(node.weight * v[k]);
            }
        }
        Ok(acc.map(|a| a.sum()))
    }

    /// Like [`QuadratureScheme::integrate_n`] with a runtime length; `f`
    /// writes the `len` integrand values of a node into its output slice.
    pub fn integrate_many<F>(&self, len: usize, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&Loc, &mut [f64]) + Sync,
    {
        let mut values = vec![0.0; self.nodes.len() * len];
        values
            .par_chunks_mut(len.max(1))
            .zip(self.nodes.par_iter())
            .for_each(|(out, n)| f(&n.loc, out));
        let mut acc = vec![Neumaier::default(); len];
        for (node_index, (node, v)) in self.nodes.iter().zip(values.chunks(len.max(1))).enumerate() {
            for k in 0..len {
                if !v[k].is_finite() {
                    return Err(self.non_finite(node_index, v[k]));
                }
                acc[k].add(node.weight * v[k]);
            }
        }
        Ok(acc.iter().map(Neumaier::sum).collect())
    }

    pub fn integrate<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&Loc) -> f64 + Sync,
    {
        Ok(self.integrate_n(|l| [f(l)])?[0])
    }

    fn non_finite(&self, node_index: usize, value: f64) -> Error {
        let node = &self.nodes[node_index];
        Error::NonFinite {
            patch: self.patches[node.patch].name.clone(),
            node: node_index,
            x: node.loc.x,
            value,
        }
    }

    /// Region of a node: 0 for the disk of radius [`Layout::p_region_radius`]
    /// around `p`, `i` for the patch disk of bubble `i`, `m + 1` for the rest.
    pub fn region(&self, node: &Node) -> usize {
        if node.patch > 0 {
            return node.patch;
        }
        let loc = &node.loc;
        if loc.dist_sq_to(0, self.layout.p).sqrt() < self.layout.p_region_radius() {
            return 0;
        }
        for (i, &(c, _)) in self.layout.bubbles.iter().enumerate() {
            if (loc.x - c).norm() < self.layout.patch_radius(i) {
                return i + 1;
            }
        }
        self.layout.bubbles.len() + 1
    }

    /// Integral of `f` split by [`QuadratureScheme::region`].
    pub fn integrate_regions<F>(&self, f: F) -> Result<RegionSplit>
    where
        F: Fn(&Loc) -> f64 + Sync,
    {
        let m = self.layout.bubbles.len();
        let values: Vec<f64> = self.nodes.par_iter().map(|n| f(&n.loc)).collect();
        let mut acc = vec![Neumaier::default(); m + 2];
        for (k, (node, v)) in self.nodes.iter().zip(&values).enumerate() {
            if !v.is_finite() {
                return Err(self.non_finite(k, *v));
            }
            acc[self.region(node)].add(node.weight * v);
        }
        let sums: Vec<f64> = acc.iter().map(Neumaier::sum).collect();
        Ok(RegionSplit {
            p_region: sums[0],
            bubble_regions: sums[1..=m].to_vec(),
            far: sums[m + 1],
            total: acc.iter().fold(Neumaier::default(), |mut t, a| {
                t.add(a.sum);
                t.add(a.comp);
                t
            })
            .sum(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSplit {
    pub p_region: f64,
    pub bubble_regions: Vec<f64>,
    pub far: f64,
    pub total: f64,
}

/// Outcome of [`refine_until`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refined {
    pub value: f64,
    /// Relative change between the last two levels.
    pub achieved_tol: f64,
    pub converged: bool,
    pub levels: usize,
    pub nodes: usize,
}

/// Refines the scheme (halving panels, doubling angles) until successive
/// values agree to `rel_tol` or the node cap is reached.
pub fn refine_until<F>(f: F, layout: &Layout, start: &QuadParams, rel_tol: f64, node_cap: usize) -> Result<Refined>
where
    F: Fn(&Loc) -> f64 + Sync,
{
    if rel_tol < 1e-12 {
        return Err(Error::Config(format!("rel_tol = {rel_tol} below 1e-12")));
    }
    let mut params = *start;
    let scheme = QuadratureScheme::build(layout, &params)?;
    let mut prev = scheme.integrate(&f)?;
    let mut levels = 1;
    loop {
        params = params.refined();
        let scheme = QuadratureScheme::build(layout, &params)?;
        let value = scheme.integrate(&f)?;
        levels += 1;
        let achieved = (value - prev).abs() / value.abs().max(f64::MIN_POSITIVE);
        let converged = achieved <= rel_tol;
        if converged || scheme.len() * 4 > node_cap {
            return Ok(Refined {
                value,
                achieved_tol: achieved,
                converged,
                levels,
                nodes: scheme.len(),
            });
        }
        prev = value;
    }
}

/// Mass of the singular bubble density outside the unit disk,
/// `8πκ a/(1 + a)` with `a = width^{2κ}`.
pub fn exterior_tail_singular(kappa: f64, width: f64) -> f64 {
    let a = width.powf(2.0 * kappa);
    8.0 * PI * kappa * a / (1.0 + a)
}

/// Mass of `8a/(a + |x − c|²)²` outside the unit disk, with `a = width²`.
pub fn exterior_tail_regular(center: Point, width: f64) -> f64 {
    let a = width * width;
    let c2 = center.norm_sq();
    let q = (1.0 + 2.0 * (a - c2) + (a + c2) * (a + c2)).sqrt();
    16.0 * PI * a / (q * (q + 1.0 - a - c2))
}

#[derive(Clone, Copy, Debug, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(kappa: f64, width0: f64, bubbles: Vec<(Point, f64)>) -> Layout {
        Layout {
            p: Point::ORIGIN,
            kappa,
            width0,
            bubbles,
            boundary_layer: 0.0,
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in [1, 2, 5, 10, 16] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn bump_is_a_partition_profile() {
        assert_eq!(bump(0.0, 1.0), 1.0);
        assert_eq!(bump(0.5, 1.0), 1.0);
        assert_eq!(bump(1.0, 1.0), 0.0);
        assert!((bump(0.75, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tails_match_closed_forms() {
        // singular tail at κ=1 equals the regular tail centered at the origin
        let w = 0.37;
        let a = exterior_tail_singular(1.0, w);
        let b = exterior_tail_regular(Point::ORIGIN, w);
        assert!((a - b).abs() < 1e-14);
        // small-width limit 8πa/(1 − |c|²)²
        let c = Point::new(0.3, 0.4);
        let t = exterior_tail_regular(c, 1e-5);
        assert!((t / (8.0 * PI * 1e-10 / 0.75f64.powi(2)) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn area_and_moments() {
        let l = layout(1.0, 1e-3, vec![(Point::new(0.3, 0.1), 1e-4)]);
        let s = QuadratureScheme::build(&l, &QuadParams::default()).unwrap();
        assert!((s.integrate(|_| 1.0).unwrap() - PI).abs() < 1e-10);
        assert!(s.nodes.iter().all(|n| n.weight > 0.0));
        for alpha in [-0.5, 0.5, 1.5] {
            let l = layout(1.0 + alpha, 1e-3, vec![]);
            let s = QuadratureScheme::build(&l, &QuadParams::default()).unwrap();
            let v = s.integrate(|loc| loc.dist_sq_to(0, Point::ORIGIN).powf(alpha)).unwrap();
            assert!((v / (PI / (1.0 + alpha)) - 1.0).abs() < 1e-8, "alpha {alpha}: {v}");
        }
    }

    #[test]
    fn nan_names_the_patch() {
        let l = layout(1.0, 1e-2, vec![(Point::new(0.3, 0.0), 1e-3)]);
        let s = QuadratureScheme::build(&l, &QuadParams::default()).unwrap();
        let err = s
            .integrate(|loc| if loc.dist_sq_to(1, Point::new(0.3, 0.0)) < 1e-8 { f64::NAN } else { 1.0 })
            .unwrap_err();
        match err {
            Error::NonFinite { patch, .. } => assert_eq!(patch, "bubble 1"),
            e => panic!("unexpected {e}"),
        }
    }
}
