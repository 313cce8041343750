//! Reduced variational machinery: the energy of the ansatz by quadrature,
//! its explicit leading-order expansion in the bubble centers (the
//! surrogate), the maximization of the surrogate over the configuration
//! space and the regular-polygon comparison configurations.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzFields, HMode};
use crate::domain::{regular_part_diag_grad, regular_part_grad_x, regular_part_raw, DiskDomain};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::params::{build_config, in_configuration_space_tol, ConstraintStatus, ProblemSpec};
use crate::quadrature::{QuadParams, QuadratureScheme};

const EIGHT_PI: f64 = 8.0 * PI;

/// Relative tolerance used to decide whether a constraint is active at a
/// maximizer.
pub const ACTIVE_REL_TOL: f64 = 1e-9;

/// The four explicit terms of the expansion
/// `8πκt + 8πtΣφ₁(ξ_i) + 16π(2+α)Σlog|ξ_i−p| + 16πΣ_{i≠j}log|ξ_i−ξ_j|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTerms {
    pub base: f64,
    pub eigen: f64,
    pub singular_interaction: f64,
    pub mutual: f64,
    /// Sum of the four terms; `−∞` when `degenerate`.
    pub total: f64,
    /// Set when two centers coincide or a center sits at `p`.
    pub degenerate: bool,
}

/// Surrogate value; coincident points give `total = −∞` and the flag, never
/// NaN.
pub fn surrogate(spec: &ProblemSpec, xi: &[Point], dom: &DiskDomain) -> SurrogateTerms {
    let eig = dom.eigenpair();
    let t = spec.t;
    let base = EIGHT_PI * spec.kappa() * t;
    let eigen = EIGHT_PI * t * xi.iter().map(|&x| eig.phi1(x)).sum::<f64>();
    let mut degenerate = false;
    let mut log_p = 0.0;
    for &x in xi {
        let r = (x - spec.p).norm();
        degenerate |= r == 0.0;
        log_p += r.ln();
    }
    let mut log_pair = 0.0;
    for (i, &x) in xi.iter().enumerate() {
        for &y in &xi[i + 1..] {
            let r = (x - y).norm();
            degenerate |= r == 0.0;
            log_pair += 2.0 * r.ln();
        }
    }
    let singular_interaction = 16.0 * PI * (2.0 + spec.alpha) * log_p;
    let mutual = 16.0 * PI * log_pair;
    let total = if degenerate {
        f64::NEG_INFINITY
    } else {
        base + eigen + singular_interaction + mutual
    };
    SurrogateTerms {
        base,
        eigen,
        singular_interaction,
        mutual,
        total,
        degenerate,
    }
}

fn check_distinct(spec: &ProblemSpec, xi: &[Point]) -> Result<()> {
    for (i, &x) in xi.iter().enumerate() {
        if x == spec.p {
            return Err(Error::Domain(format!("center {} coincides with p", i + 1)));
        }
        for (j, &y) in xi.iter().enumerate().skip(i + 1) {
            if x == y {
                return Err(Error::Domain(format!("centers {} and {} coincide", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

/// Analytic gradient of the surrogate with respect to each center.
pub fn surrogate_gradient(spec: &ProblemSpec, xi: &[Point], dom: &DiskDomain) -> Result<Vec<Point>> {
    check_distinct(spec, xi)?;
    let eig = dom.eigenpair();
    let t = spec.t;
    let mut grad = Vec::with_capacity(xi.len());
    for (i, &x) in xi.iter().enumerate() {
        let d = x - spec.p;
        let mut g = eig.grad_phi1(x) * (EIGHT_PI * t) + d * (16.0 * PI * (2.0 + spec.alpha) / d.norm_sq());
        for (j, &y) in xi.iter().enumerate() {
            if j != i {
                let e = x - y;
                g = g + e * (32.0 * PI / e.norm_sq());
            }
        }
        grad.push(g);
    }
    Ok(grad)
}

/// Which reduced objective to maximize.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// The four-term surrogate.
    #[default]
    Surrogate,
    /// The surrogate plus its center-dependent bounded terms (regular parts
    /// of the Green function and `log k`), i.e. the full expansion of the
    /// energy up to `o(1)`.
    LeadingOrder,
}

/// Bounded part of the energy expansion:
/// `J = surrogate + leading_order_correction + o(1)`.
pub fn leading_order_correction(spec: &ProblemSpec, xi: &[Point], dom: &DiskDomain) -> Result<f64> {
    check_distinct(spec, xi)?;
    let pot = spec.potential(dom)?;
    let kappa = spec.kappa();
    let m = xi.len() as f64;
    let p = spec.p;
    let mut v = -EIGHT_PI * kappa - EIGHT_PI * m - EIGHT_PI * (m + kappa)
        - EIGHT_PI * kappa * (pot.log_k(p) - (8.0 * kappa * kappa).ln())
        - 4.0 * PI * kappa * kappa * regular_part_raw(p, p)
        + EIGHT_PI * m * 8f64.ln();
    for (i, &x) in xi.iter().enumerate() {
        v -= EIGHT_PI * pot.log_k(x) + 4.0 * PI * regular_part_raw(x, x) + EIGHT_PI * kappa * regular_part_raw(x, p);
        for &y in &xi[i + 1..] {
            v -= EIGHT_PI * regular_part_raw(x, y);
        }
    }
    Ok(v)
}

pub fn leading_order_correction_gradient(spec: &ProblemSpec, xi: &[Point], dom: &DiskDomain) -> Result<Vec<Point>> {
    check_distinct(spec, xi)?;
    let pot = spec.potential(dom)?;
    let kappa = spec.kappa();
    Ok(xi
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut g = pot.grad_log_k(x) * (-EIGHT_PI)
                + regular_part_diag_grad(x) * (-4.0 * PI)
                + regular_part_grad_x(x, spec.p) * (-EIGHT_PI * kappa);
            for (j, &y) in xi.iter().enumerate() {
                if j != i {
                    g = g + regular_part_grad_x(x, y) * (-EIGHT_PI);
                }
            }
            g
        })
        .collect())
}

/// Objective value, `−∞` for degenerate configurations.
pub fn objective_value(objective: Objective, spec: &ProblemSpec, xi: &[Point], dom: &DiskDomain) -> f64 {
    let s = surrogate(spec, xi, dom);
    if s.degenerate {
        return f64::NEG_INFINITY;
    }
    match objective {
        Objective::Surrogate => s.total,
        Objective::LeadingOrder => match leading_order_correction(spec, xi, dom) {
            Ok(c) => s.total + c,
            Err(_) => f64::NEG_INFINITY,
        },
    }
}

pub fn objective_gradient(objective: Objective, spec: &ProblemSpec, xi: &[Point], dom: &DiskDomain) -> Result<Vec<Point>> {
    let mut g = surrogate_gradient(spec, xi, dom)?;
    if objective == Objective::LeadingOrder {
        for (a, b) in g.iter_mut().zip(leading_order_correction_gradient(spec, xi, dom)?) {
            *a = *a + b;
        }
    }
    Ok(g)
}

/// Vertices of the regular `m`-gon of circumradius `t^{−1/2}` centered at `p`,
/// the first vertex on the positive x-axis.
pub fn polygon_config(spec: &ProblemSpec) -> Vec<Point> {
    let r = spec.t.sqrt().recip();
    (0..spec.m)
        .map(|i| spec.p + Point::polar(r, 2.0 * PI * i as f64 / spec.m as f64))
        .collect()
}

/// The polygon lower-bound envelope `8π(m+1+α)t − 8πm(m+1+α) log t`.
pub fn polygon_bound(spec: &ProblemSpec) -> f64 {
    let mass = spec.m as f64 + 1.0 + spec.alpha;
    EIGHT_PI * mass * spec.t - EIGHT_PI * spec.m as f64 * mass * spec.t.ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub j_quadrature: f64,
    /// `½∫|∇U|²`, computed as `½ Σ_{i,j} ∫U_j(−Δu_i)`.
    pub dirichlet: f64,
    /// `∫Ŵ`.
    pub mass: f64,
    /// `cross[i][j] = ∫U_j (−Δu_i)`, index 0 the singular bubble.
    pub cross: Vec<Vec<f64>>,
    pub surrogate_terms: SurrogateTerms,
    /// `J − surrogate`.
    pub remainder: f64,
    /// `|J(scheme) − J(coarsened scheme)|`.
    pub quadrature_tol: f64,
    pub nodes: usize,
}

fn energy_parts(fields: &AnsatzFields, scheme: &QuadratureScheme) -> Result<(Vec<Vec<f64>>, f64)> {
    let nb = fields.bubble_count();
    let len = nb * nb + 1;
    let sums = scheme.integrate_many(len, |loc, out| {
        let u: Vec<f64> = (0..nb).map(|j| fields.component(j, *loc, HMode::Exact)).collect();
        for i in 0..nb {
            let d = fields.bubble_density(i, *loc);
            for j in 0..nb {
                out[i * nb + j] = u[j] * d;
            }
        }
        out[nb * nb] = fields.w_hat(*loc);
    })?;
    let cross = (0..nb).map(|i| sums[i * nb..(i + 1) * nb].to_vec()).collect();
    Ok((cross, sums[nb * nb]))
}

/// `J(U) = ½∫|∇U|² − ∫Ŵ` for the ansatz with exact harmonic corrections.
/// The quadrature error estimate compares against a scheme of half the
/// resolution.
pub fn energy_quadrature(fields: &AnsatzFields, scheme: &QuadratureScheme) -> Result<EnergyReport> {
    let (cross, mass) = energy_parts(fields, scheme)?;
    let dirichlet = 0.5 * cross.iter().flatten().sum::<f64>();
    let j = dirichlet - mass;
    let coarse = QuadratureScheme::build(&scheme.layout, &scheme.params.coarsened())?;
    let (cross_c, mass_c) = energy_parts(fields, &coarse)?;
    let j_coarse = 0.5 * cross_c.iter().flatten().sum::<f64>() - mass_c;
    let terms = surrogate(&fields.spec, &fields.cfg.xi, &DiskDomain);
    Ok(EnergyReport {
        t: fields.spec.t,
        j_quadrature: j,
        dirichlet,
        mass,
        cross,
        surrogate_terms: terms,
        remainder: j - terms.total,
        quadrature_tol: (j - j_coarse).abs(),
        nodes: scheme.len(),
    })
}

/// Closed form of `∫_Ω U₀(−Δu₀)` for a lone singular bubble at the origin
/// with squared scale `a = ε₀²μ₀²`.
pub fn singular_self_term(kappa: f64, a: f64) -> f64 {
    let s2 = 1.0 / a;
    let v = 1.0 + s2;
    let mass = EIGHT_PI * kappa * s2 / v;
    let log_moment = EIGHT_PI * kappa * (1.0 - (1.0 + v.ln()) / v);
    2.0 * (a.ln_1p() - a.ln()) * mass - 2.0 * log_moment
}

/// One row of an expansion ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub t: f64,
    pub j_quadrature: f64,
    pub surrogate: f64,
    pub remainder: f64,
    pub remainder_over_t: f64,
    /// Remainder minus the previous row's remainder (0 for the first row).
    pub first_difference: f64,
    /// The bounded part predicted by the expansion.
    pub predicted_remainder: f64,
    pub mass: f64,
    pub quadrature_tol: f64,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub rows: Vec<LadderRow>,
    /// Least-squares slope of the remainder against `t`.
    pub remainder_slope: f64,
    /// Coefficient of `t` in the surrogate at the last ladder point,
    /// `8π(1+α) + 8πΣφ₁(ξ_i)`.
    pub surrogate_t_coefficient: f64,
}

impl GapTable {
    pub fn remainder_over_t_decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].remainder_over_t.abs() < w[0].remainder_over_t.abs())
    }

    /// `|R(t_last)|/t_last` divided by `|R(t_first)|/t_first`.
    pub fn remainder_decay(&self) -> f64 {
        let first = self.rows.first().map_or(f64::NAN, |r| r.remainder_over_t.abs());
        let last = self.rows.last().map_or(f64::NAN, |r| r.remainder_over_t.abs());
        last / first
    }

    pub fn slope_ratio(&self) -> f64 {
        self.remainder_slope.abs() / self.surrogate_t_coefficient.abs()
    }
}

/// Remainder of the expansion along a ladder of `t` values with centers
/// `path(t)`. Ladder points run in parallel.
pub fn expansion_gap(
    spec: &ProblemSpec,
    path: impl Fn(&ProblemSpec) -> Vec<Point> + Sync,
    ladder: &[f64],
    budget: usize,
) -> Result<GapTable> {
    if ladder.is_empty() {
        return Err(Error::Config("empty t ladder".into()));
    }
    let dom = DiskDomain;
    let reports: Vec<(LadderRow, f64)> = ladder
        .par_iter()
        .map(|&t| {
            let s = spec.with_t(t)?;
            let xi = path(&s);
            let cfg = build_config(&s, &xi, &dom)?;
            let fields = AnsatzFields::new(&s, &cfg, &dom)?;
            let scheme = QuadratureScheme::build(
                &crate::quadrature::Layout::from_config(&cfg),
                &QuadParams::for_budget(budget),
            )?;
            let rep = energy_quadrature(&fields, &scheme)?;
            let predicted = leading_order_correction(&s, &xi, &dom)?;
            let eig = dom.eigenpair();
            let t_coef = EIGHT_PI * s.kappa() + EIGHT_PI * xi.iter().map(|&x| eig.phi1(x)).sum::<f64>();
            Ok((
                LadderRow {
                    t,
                    j_quadrature: rep.j_quadrature,
                    surrogate: rep.surrogate_terms.total,
                    remainder: rep.remainder,
                    remainder_over_t: rep.remainder / t,
                    first_difference: 0.0,
                    predicted_remainder: predicted,
                    mass: rep.mass,
                    quadrature_tol: rep.quadrature_tol,
                    nodes: rep.nodes,
                },
                t_coef,
            ))
        })
        .collect::<Result<_>>()?;
    let coef = reports.last().map_or(f64::NAN, |r| r.1);
    let mut rows: Vec<LadderRow> = reports.into_iter().map(|r| r.0).collect();
    for k in 1..rows.len() {
        rows[k].first_difference = rows[k].remainder - rows[k - 1].remainder;
    }
    Ok(GapTable {
        remainder_slope: least_squares_slope(&rows.iter().map(|r| (r.t, r.remainder)).collect::<Vec<_>>()),
        surrogate_t_coefficient: coef,
        rows,
    })
}

pub(crate) fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

// ---------------------------------------------------------------------------
// Maximization
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximizeOptions {
    pub objective: Objective,
    /// Random admissible starts in addition to the polygon seed.
    pub random_starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stationarity target relative to the projected gradient at the seed.
    pub rel_tol: f64,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        MaximizeOptions {
            objective: Objective::Surrogate,
            random_starts: 8,
            seed: 0,
            max_iter: 5000,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub value: f64,
    pub step: f64,
    pub projected_gradient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximizerResult {
    pub xi_star: Vec<Point>,
    /// Value of the maximized objective at `xi_star`.
    pub surrogate_value: f64,
    pub interior_flag: bool,
    pub active_constraints: Vec<ConstraintStatus>,
    /// Trace of the winning start.
    pub optimizer_trace: Vec<TraceEntry>,
    /// Index of the winning start (0 is the polygon seed).
    pub start_index: usize,
    pub converged: bool,
    /// Projected gradient at `xi_star` relative to the one at its seed.
    pub stationarity: f64,
    pub used_fallback: bool,
}

/// The feasible set as the annulus `t^{−β} ≤ |ξ_i − p| ≤ r_out` in every
/// center plus pairwise separation.
struct Feasible {
    p: Point,
    r_in: f64,
    r_out: f64,
    sep: f64,
}

impl Feasible {
    fn new(spec: &ProblemSpec, dom: &DiskDomain) -> Result<Self> {
        let eig = dom.eigenpair();
        let r_eig = eig.radius_at_level(1.0 - 1.0 / spec.t.sqrt());
        let r_out = spec.d.min(r_eig);
        let r_in = spec.separation();
        if spec.p != Point::ORIGIN {
            return Err(Error::Config("maximization requires p at the origin".into()));
        }
        if !(r_in < r_out) {
            return Err(Error::Config(format!(
                "configuration space is empty: separation {r_in:e} exceeds outer radius {r_out:e}"
            )));
        }
        Ok(Feasible {
            p: spec.p,
            r_in,
            r_out,
            sep: spec.separation(),
        })
    }

    fn project(&self, xi: &[Point]) -> Vec<Point> {
        xi.iter()
            .map(|&x| {
                let d = x - self.p;
                let r = d.norm();
                if r == 0.0 {
                    return self.p + Point::new(self.r_in, 0.0);
                }
                let rc = r.clamp(self.r_in, self.r_out);
                if rc == r {
                    x
                } else {
                    self.p + d * (rc / r)
                }
            })
            .collect()
    }

    fn pairwise_ok(&self, xi: &[Point]) -> bool {
        xi.iter()
            .enumerate()
            .all(|(i, &x)| xi[i + 1..].iter().all(|&y| (x - y).norm() >= self.sep))
    }

    /// Gradient with the outward components removed at active radial bounds.
    fn projected_gradient(&self, xi: &[Point], g: &[Point]) -> Vec<Point> {
        xi.iter()
            .zip(g)
            .map(|(&x, &gi)| {
                let d = x - self.p;
                let r = d.norm();
                let e = d * (1.0 / r);
                let radial = gi.dot(e);
                let at_out = r >= self.r_out * (1.0 - ACTIVE_REL_TOL);
                let at_in = r <= self.r_in * (1.0 + ACTIVE_REL_TOL);
                if (at_out && radial > 0.0) || (at_in && radial < 0.0) {
                    gi - e * radial
                } else {
                    gi
                }
            })
            .collect()
    }
}

fn norm(v: &[Point]) -> f64 {
    v.iter().map(|p| p.norm_sq()).sum::<f64>().sqrt()
}

fn axpy(x: &[Point], s: f64, g: &[Point]) -> Vec<Point> {
    x.iter().zip(g).map(|(&a, &b)| a + b * s).collect()
}

struct Run {
    xi: Vec<Point>,
    value: f64,
    trace: Vec<TraceEntry>,
    converged: bool,
    stationarity: f64,
    used_fallback: bool,
}

fn ascend(
    spec: &ProblemSpec,
    dom: &DiskDomain,
    feas: &Feasible,
    seed: &[Point],
    opts: &MaximizeOptions,
    g_ref: Option<f64>,
) -> Option<Run> {
    let f = |xi: &[Point]| {
        if feas.pairwise_ok(xi) {
            objective_value(opts.objective, spec, xi, dom)
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut x = feas.project(seed);
    let mut fx = f(&x);
    if !fx.is_finite() {
        return None;
    }
    let mut g = objective_gradient(opts.objective, spec, &x, dom).ok()?;
    let pg0 = norm(&feas.projected_gradient(&x, &g));
    let reference = g_ref.unwrap_or(pg0).max(f64::MIN_POSITIVE);
    let mut step = 0.01 * feas.r_out / norm(&g).max(f64::MIN_POSITIVE);
    let mut trace = vec![TraceEntry {
        iter: 0,
        value: fx,
        step: 0.0,
        projected_gradient: pg0,
    }];
    let mut converged = pg0 <= opts.rel_tol * reference;
    let mut iter = 0;
    while !converged && iter < opts.max_iter {
        iter += 1;
        let mut s = step;
        let mut accepted = None;
        for _ in 0..80 {
            let xn = feas.project(&axpy(&x, s, &g));
            let fxn = f(&xn);
            let gain: f64 = x.iter().zip(&xn).zip(&g).map(|((&a, &b), &gi)| (b - a).dot(gi)).sum();
            if fxn.is_finite() && fxn >= fx + 1e-4 * gain && fxn >= fx {
                accepted = Some((xn, fxn));
                break;
            }
            s *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            break;
        };
        let gn = objective_gradient(opts.objective, spec, &xn, dom).ok()?;
        let sk: Vec<Point> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let yk: Vec<Point> = gn.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy: f64 = sk.iter().zip(&yk).map(|(a, b)| a.dot(*b)).sum();
        let ss: f64 = sk.iter().map(|a| a.norm_sq()).sum();
        step = if sy < 0.0 { (ss / -sy).clamp(1e-14, 1e2) } else { (2.0 * s).min(1e2) };
        x = xn;
        fx = fxn;
        g = gn;
        let pg = norm(&feas.projected_gradient(&x, &g));
        trace.push(TraceEntry {
            iter,
            value: fx,
            step: s,
            projected_gradient: pg,
        });
        converged = pg <= opts.rel_tol * reference;
        if ss.sqrt() <= 1e-15 * feas.r_out {
            break;
        }
    }
    let pg = trace.last().map_or(f64::NAN, |e| e.projected_gradient);
    Some(Run {
        xi: x,
        value: fx,
        trace,
        converged,
        stationarity: pg / reference,
        used_fallback: false,
    })
}

/// Nelder–Mead on the projected objective.
fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    start: &[f64],
    scale: f64,
    max_eval: usize,
) -> Vec<f64> {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), -f(start)));
    for k in 0..n {
        let mut v = start.to_vec();
        v[k] += scale;
        let fv = -f(&v);
        simplex.push((v, fv));
    }
    let mut evals = n + 1;
    let cmp = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);
    while evals < max_eval {
        simplex.sort_by(cmp);
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() <= 1e-15 * simplex[0].1.abs().max(1.0) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|s| s.0[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |c: f64| -> Vec<f64> {
            (0..n).map(|k| centroid[k] + c * (simplex[n].0[k] - centroid[k])).collect()
        };
        let xr = along(-1.0);
        let fr = -f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = -f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = along(0.5);
            let fc = -f(&xc);
            evals += 1;
            if fc < simplex[n].1 {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    for k in 0..n {
                        s.0[k] = best[k] + 0.5 * (s.0[k] - best[k]);
                    }
                    s.1 = -f(&s.0);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(cmp);
    simplex.swap_remove(0).0
}

fn flatten(xi: &[Point]) -> Vec<f64> {
    xi.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn unflatten(v: &[f64]) -> Vec<Point> {
    v.chunks(2).map(|c| Point::new(c[0], c[1])).collect()
}

/// Rotates and relabels a configuration about `p` so that one center lies
/// on the positive x-axis and the sorted angle vector is lexicographically
/// smallest.
pub fn canonicalize(xi: &[Point], p: Point) -> Vec<Point> {
    let mut best: Option<(Vec<f64>, Vec<Point>)> = None;
    for k in 0..xi.len() {
        let theta = (xi[k] - p).angle();
        let mut rotated: Vec<Point> = xi.iter().map(|&x| p + (x - p).rotate(-theta)).collect();
        rotated[k] = p + Point::new((xi[k] - p).norm(), 0.0);
        let ang = |x: &Point| (*x - p).angle().rem_euclid(2.0 * PI);
        rotated.sort_by(|a, b| ang(a).total_cmp(&ang(b)).then((*a - p).norm().total_cmp(&(*b - p).norm())));
        let key: Vec<f64> = rotated.iter().map(ang).collect();
        let better = match &best {
            None => true,
            Some((bk, _)) => key.iter().zip(bk).find(|(a, b)| a != b).is_some_and(|(a, b)| a < b),
        };
        if better {
            best = Some((key, rotated));
        }
    }
    best.map_or_else(Vec::new, |b| b.1)
}

fn random_seed(feas: &Feasible, m: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    for _ in 0..1000 {
        let xi: Vec<Point> = (0..m)
            .map(|_| {
                let r = rng.gen_range(feas.r_in..feas.r_out);
                feas.p + Point::polar(r, rng.gen_range(0.0..2.0 * PI))
            })
            .collect();
        if feas.pairwise_ok(&xi) {
            return xi;
        }
    }
    Vec::new()
}

/// Multi-start projected gradient ascent of the reduced objective over the
/// closure of the configuration space. Starts: the polygon seed (projected
/// into the feasible set) followed by `random_starts` admissible random
/// configurations. A start that stalls before stationarity is continued by
/// Nelder–Mead and polished again by gradient ascent.
pub fn maximize_reduced(spec: &ProblemSpec, dom: &DiskDomain, opts: &MaximizeOptions) -> Result<MaximizerResult> {
    if spec.m == 0 {
        return Err(Error::Config("maximization needs at least one bubble center".into()));
    }
    let feas = Feasible::new(spec, dom)?;
    let mut seeds = vec![polygon_config(spec)];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_starts {
        let s = random_seed(&feas, spec.m, &mut rng);
        if !s.is_empty() {
            seeds.push(s);
        }
    }
    let runs: Vec<Option<Run>> = seeds
        .par_iter()
        .map(|seed| {
            let mut run = ascend(spec, dom, &feas, seed, opts, None)?;
            if !run.converged {
                let reference = run.trace[0].projected_gradient;
                let f = |v: &[f64]| {
                    let xi = feas.project(&unflatten(v));
                    if feas.pairwise_ok(&xi) {
                        objective_value(opts.objective, spec, &xi, dom)
                    } else {
                        f64::NEG_INFINITY
                    }
                };
                let nm = nelder_mead(f, &flatten(&run.xi), 0.05 * feas.r_out, 4000 * spec.m);
                let polished = ascend(spec, dom, &feas, &unflatten(&nm), opts, Some(reference))?;
                if polished.value >= run.value {
                    let mut trace = run.trace;
                    let offset = trace.len();
                    trace.extend(polished.trace.into_iter().map(|mut e| {
                        e.iter += offset;
                        e
                    }));
                    run = Run {
                        trace,
                        used_fallback: true,
                        ..polished
                    };
                }
            }
            Some(run)
        })
        .collect();
    let (start_index, best) = runs
        .into_iter()
        .enumerate()
        .filter_map(|(k, r)| r.map(|r| (k, r)))
        .fold(None::<(usize, Run)>, |acc, (k, r)| match acc {
            Some((kb, b)) if b.value >= r.value => Some((kb, b)),
            _ => Some((k, r)),
        })
        .ok_or_else(|| Error::Config("all optimizer starts were infeasible".into()))?;
    let xi_star = canonicalize(&best.xi, spec.p);
    let membership = in_configuration_space_tol(spec, &xi_star, dom, ACTIVE_REL_TOL);
    Ok(MaximizerResult {
        surrogate_value: objective_value(opts.objective, spec, &xi_star, dom),
        interior_flag: membership.interior(),
        active_constraints: membership.on_boundary,
        optimizer_trace: best.trace,
        start_index,
        converged: best.converged,
        stationarity: best.stationarity,
        used_fallback: best.used_fallback,
        xi_star,
    })
}

/// Maximizer of `r ↦ 8πtJ₀(√λ₁ r) + 16π(2+α) ln r` on `[lo, hi]` by golden
/// section, the radial restriction of the surrogate for one center.
pub fn radial_maximizer(spec: &ProblemSpec, dom: &DiskDomain, lo: f64, hi: f64) -> f64 {
    let eig = dom.eigenpair();
    let f = |r: f64| EIGHT_PI * spec.t * eig.phi1_radial(r) + 16.0 * PI * (2.0 + spec.alpha) * r.ln();
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-14 * b {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::HSpec;

    fn spec(alpha: f64, m: usize, t: f64) -> ProblemSpec {
        ProblemSpec::new(alpha, m, t, HSpec::Zero).unwrap()
    }

    #[test]
    fn no_centers_gives_base_term_only() {
        let s = spec(0.5, 0, 37.0);
        let v = surrogate(&s, &[], &DiskDomain);
        assert_eq!(v.total, 8.0 * PI * 1.5 * 37.0);
        assert!(!v.degenerate);
    }

    #[test]
    fn coincident_centers_flagged_not_nan() {
        let s = spec(0.0, 2, 50.0);
        let x = Point::new(0.1, 0.0);
        let v = surrogate(&s, &[x, x], &DiskDomain);
        assert!(v.degenerate);
        assert_eq!(v.total, f64::NEG_INFINITY);
        assert!(!v.mutual.is_nan());
        assert!(surrogate_gradient(&s, &[x, x], &DiskDomain).is_err());
        let v = surrogate(&s, &[Point::ORIGIN, x], &DiskDomain);
        assert!(v.degenerate && !v.singular_interaction.is_nan());
    }

    #[test]
    fn gradients_match_central_differences() {
        let dom = DiskDomain;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for objective in [Objective::Surrogate, Objective::LeadingOrder] {
            for _ in 0..10 {
                let s = spec(0.5, 3, 60.0);
                let xi: Vec<Point> = (0..3)
                    .map(|_| Point::polar(rng.gen_range(0.05..0.3), rng.gen_range(0.0..2.0 * PI)))
                    .collect();
                let g = objective_gradient(objective, &s, &xi, &dom).unwrap();
                for i in 0..3 {
                    for (k, e) in [Point::new(1.0, 0.0), Point::new(0.0, 1.0)].into_iter().enumerate() {
                        let h = 1e-6;
                        let mut a = xi.clone();
                        let mut b = xi.clone();
                        a[i] = a[i] + e * h;
                        b[i] = b[i] - e * h;
                        let fd = (objective_value(objective, &s, &a, &dom) - objective_value(objective, &s, &b, &dom))
                            / (2.0 * h);
                        let an = if k == 0 { g[i].x } else { g[i].y };
                        assert!((fd - an).abs() <= 1e-6 * norm(&g), "{objective:?} {fd} {an}");
                    }
                }
            }
        }
    }

    #[test]
    fn singular_self_term_matches_quadrature() {
        let dom = DiskDomain;
        for (alpha, t) in [(0.0, 20.0), (0.5, 40.0), (-0.5, 30.0)] {
            let s = spec(alpha, 0, t);
            let cfg = build_config(&s, &[], &dom).unwrap();
            let fields = AnsatzFields::new(&s, &cfg, &dom).unwrap();
            let scheme = QuadratureScheme::for_config(&cfg, 100_000).unwrap();
            let rep = energy_quadrature(&fields, &scheme).unwrap();
            let a = cfg.width0().powf(2.0 * s.kappa());
            let exact = singular_self_term(s.kappa(), a);
            assert!((rep.cross[0][0] - exact).abs() <= 1e-8 * exact.abs(), "{} {}", rep.cross[0][0], exact);
        }
    }

    #[test]
    fn golden_section_finds_radial_optimum() {
        let s = spec(0.0, 1, 100.0);
        let r = radial_maximizer(&s, &DiskDomain, 1e-3, 0.9);
        let lambda = DiskDomain.eigenpair().lambda1;
        let approx = 2.0 * (2.0 / (100.0 * lambda)).sqrt();
        assert!((r / approx - 1.0).abs() < 0.1, "{r} {approx}");
    }

    #[test]
    fn canonical_form_is_rotation_and_label_free() {
        let p = Point::ORIGIN;
        let xi = vec![Point::polar(0.2, 0.3), Point::polar(0.1, 2.0), Point::polar(0.15, 4.0)];
        let c = canonicalize(&xi, p);
        for theta in [0.7, 2.9, -1.3] {
            let mut rot: Vec<Point> = xi.iter().map(|x| x.rotate(theta)).collect();
            rot.reverse();
            let d = canonicalize(&rot, p);
            for (a, b) in c.iter().zip(&d) {
                assert!((*a - *b).norm() < 1e-12);
            }
        }
        assert_eq!(c[0].y, 0.0);
    }

    #[test]
    fn polygon_is_scaled_regular_gon() {
        let s = spec(0.0, 1, 100.0);
        let xi = polygon_config(&s);
        assert!((xi[0].norm() - 0.1).abs() < 1e-15);
        let s = spec(0.0, 4, 49.0);
        let xi = polygon_config(&s);
        for w in xi.windows(2) {
            assert!(((w[0] - w[1]).norm() - 2f64.sqrt() / 7.0).abs() < 1e-14);
        }
    }

    #[test]
    fn maximizer_trace_monotone_and_stationary() {
        let s = spec(0.5, 2, 100.0);
        let r = maximize_reduced(&s, &DiskDomain, &MaximizeOptions::default()).unwrap();
        assert!(r.converged && r.stationarity <= 1e-6);
        assert!(r.optimizer_trace.windows(2).all(|w| w[1].value >= w[0].value));
        assert!(r.interior_flag);
        assert!((r.xi_star[1].angle().rem_euclid(2.0 * PI) - PI).abs() < 1e-5);
    }
}
