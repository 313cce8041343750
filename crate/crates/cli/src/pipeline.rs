//! Stage orchestration: construct → maximize → energy → verify → solve.
//!
//! Each stage records its outcome without erasing earlier results; the
//! report carries every check with its tolerance.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use bubbler_core::ansatz::{AnsatzFields, HMode};
use bubbler_core::corrector::{
    assemble, fixed_point_correct, mass_quantization, CorrectOptions, CorrectorMode, Grid, MassReport,
};
use bubbler_core::domain::DiskDomain;
use bubbler_core::energy::{expansion_gap, maximize_reduced, polygon_config, GapTable, MaximizeOptions, MaximizerResult};
use bubbler_core::params::{build_config, theorem_bounds_check, BubbleConfig, HeightBounds};
use bubbler_core::quadrature::QuadratureScheme;
use bubbler_core::{Error, Point};

use crate::config::RunConfig;

const BOUNDARY_SAMPLES: usize = 512;
/// Lattice points per axis of the field dumps.
const DUMP_POINTS: usize = 41;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Construct,
    Maximize,
    Energy,
    Verify,
    Solve,
    All,
}

impl Stage {
    /// Stages to execute, dependencies included, as
    /// `[construct, maximize, energy, verify, solve]`.
    pub fn plan(self) -> [bool; 5] {
        match self {
            Stage::Construct => [true, false, false, false, false],
            Stage::Maximize => [false, true, false, false, false],
            Stage::Energy => [false, true, true, false, false],
            Stage::Verify => [true, true, true, true, false],
            Stage::Solve => [false, true, false, false, true],
            Stage::All => [true; 5],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Skipped,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord<T> {
    pub status: Status,
    pub reason: Option<String>,
    /// Whether the failure was caused by the configuration rather than the
    /// numerics.
    pub config_error: bool,
    pub result: Option<T>,
}

impl<T> StageRecord<T> {
    fn skipped(reason: &str) -> Self {
        StageRecord {
            status: Status::Skipped,
            reason: Some(reason.into()),
            config_error: false,
            result: None,
        }
    }

    fn from_result(r: Result<T, Error>) -> Self {
        match r {
            Ok(v) => StageRecord {
                status: Status::Ok,
                reason: None,
                config_error: false,
                result: Some(v),
            },
            Err(e) => StageRecord {
                status: Status::Failed,
                config_error: matches!(e, Error::Config(_) | Error::UnderResolved { .. }),
                reason: Some(e.to_string()),
                result: None,
            },
        }
    }

    fn failed(&self) -> bool {
        self.status == Status::Failed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructPoint {
    pub t: f64,
    pub beta: f64,
    pub separation: f64,
    /// Centers used: the regular-polygon seed.
    pub xi: Vec<Point>,
    pub config: BubbleConfig,
    /// Widths in `x`, singular bubble first.
    pub widths: Vec<f64>,
    pub height_bounds: HeightBounds,
    /// `sup |U|` over the boundary samples.
    pub boundary_sup: f64,
    pub boundary_samples: usize,
    /// `sup |exact − closed-form correction|` on the boundary, per bubble.
    pub correction_gap_sup: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximizePoint {
    pub t: f64,
    pub result: MaximizerResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyStage {
    pub table: GapTable,
    /// `8π(m+1+α)`.
    pub mass_target: f64,
    pub mass_rel_err: Vec<f64>,
    pub quadrature_budget: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolvePoint {
    pub t: f64,
    pub grid_n: usize,
    pub mode: CorrectorMode,
    pub converged: bool,
    pub iterations: Vec<f64>,
    pub contraction: Vec<f64>,
    pub nonlinear_residual: f64,
    pub orthogonality_residual: f64,
    pub phi_max: f64,
    pub c: Vec<f64>,
    pub normalized_multipliers: Vec<f64>,
    pub mass: MassReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub t: f64,
    pub solution: Option<SolvePoint>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub stage: Stage,
    pub config: RunConfig,
    pub construct: StageRecord<Vec<ConstructPoint>>,
    pub maximize: StageRecord<Vec<MaximizePoint>>,
    pub energy: StageRecord<EnergyStage>,
    pub verify: StageRecord<Vec<Check>>,
    pub solve: StageRecord<Vec<SolveOutcome>>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl RunReport {
    fn stages_failed(&self) -> (bool, bool) {
        let records = [
            (self.construct.failed(), self.construct.config_error),
            (self.maximize.failed(), self.maximize.config_error),
            (self.energy.failed(), self.energy.config_error),
            (self.verify.failed(), self.verify.config_error),
            (self.solve.failed(), self.solve.config_error),
        ];
        let internal = records.iter().any(|&(f, c)| f && !c);
        let config = records.iter().any(|&(f, c)| f && c);
        (internal, config)
    }

    /// 0 all checks pass, 1 acceptance failure, 2 configuration error,
    /// 3 internal error.
    pub fn exit_code(&self) -> i32 {
        match self.stages_failed() {
            (true, _) => 3,
            (false, true) => 2,
            _ if !self.passed => 1,
            _ => 0,
        }
    }
}

/// A CSV table: header plus rows of already-formatted cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: String, header: &[&str]) -> Self {
        Table {
            name,
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| v.to_string()).collect());
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub tables: Vec<Table>,
    pub timings: Vec<Timing>,
}

fn t_label(t: f64) -> String {
    t.to_string().replace('.', "p")
}

fn fields_at(cfg: &RunConfig, t: f64, xi: &[Point]) -> Result<(AnsatzFields, BubbleConfig), Error> {
    let dom = DiskDomain;
    let spec = cfg.spec(t)?;
    let bc = build_config(&spec, xi, &dom)?;
    let fields = AnsatzFields::new(&spec, &bc, &dom)?;
    Ok((fields, bc))
}

/// Field samples on a lattice inside the disk, with `φ` when given.
fn field_dump(name: String, fields: &AnsatzFields, phi: Option<(&Grid, &[f64])>) -> Table {
    let mut header = vec!["x1", "x2", "U", "W_hat", "E_hat"];
    if phi.is_some() {
        header.push("phi");
    }
    let mut table = Table::new(name, &header);
    for i in 0..DUMP_POINTS {
        for j in 0..DUMP_POINTS {
            let x = Point::new(
                -1.0 + 2.0 * (i as f64 + 0.5) / DUMP_POINTS as f64,
                -1.0 + 2.0 * (j as f64 + 0.5) / DUMP_POINTS as f64,
            );
            if x.norm() >= 1.0 {
                continue;
            }
            let mut row = vec![x.x, x.y, fields.ansatz_u(x, HMode::Exact), fields.w_hat(x), fields.e_hat(x)];
            if let Some((g, f)) = phi {
                row.push(g.interpolate(f, x));
            }
            table.push(&row);
        }
    }
    table
}

fn construct(cfg: &RunConfig, tables: &mut Vec<Table>) -> Result<Vec<ConstructPoint>, Error> {
    let mut out = Vec::new();
    for &t in &cfg.t_ladder {
        let spec = cfg.spec(t)?;
        let xi = polygon_config(&spec);
        let (fields, bc) = fields_at(cfg, t, &xi)?;
        let boundary: Vec<Point> = (0..BOUNDARY_SAMPLES)
            .map(|k| Point::polar(1.0, 2.0 * PI * k as f64 / BOUNDARY_SAMPLES as f64))
            .collect();
        let boundary_sup = boundary
            .iter()
            .map(|&x| fields.ansatz_u(x, HMode::Exact).abs())
            .fold(0.0, f64::max);
        let correction_gap_sup = (0..=cfg.m)
            .map(|j| boundary.iter().map(|&x| fields.correction_gap(j, x).abs()).fold(0.0, f64::max))
            .collect();
        tables.push(field_dump(format!("fields_t{}", t_label(t)), &fields, None));
        out.push(ConstructPoint {
            t,
            beta: spec.beta,
            separation: spec.separation(),
            xi,
            widths: bc.widths(),
            height_bounds: theorem_bounds_check(&bc, &spec),
            config: bc,
            boundary_sup,
            boundary_samples: BOUNDARY_SAMPLES,
            correction_gap_sup,
            warnings: fields.warnings.clone(),
        });
    }
    Ok(out)
}

fn maximize(cfg: &RunConfig, tables: &mut Vec<Table>) -> Result<Vec<MaximizePoint>, Error> {
    let opts = MaximizeOptions {
        seed: cfg.seed,
        rel_tol: cfg.tolerances.maximizer_rel,
        ..MaximizeOptions::default()
    };
    let mut out = Vec::new();
    for &t in &cfg.t_ladder {
        let result = maximize_reduced(&cfg.spec(t)?, &DiskDomain, &opts)?;
        let mut table = Table::new(format!("trace_t{}", t_label(t)), &["iter", "value", "step", "projected_gradient"]);
        for e in &result.optimizer_trace {
            table.push(&[e.iter as f64, e.value, e.step, e.projected_gradient]);
        }
        tables.push(table);
        out.push(MaximizePoint { t, result });
    }
    Ok(out)
}

/// Centers at ladder point `t`: the maximizer when it ran, none for `m = 0`.
fn centers(maximized: Option<&Vec<MaximizePoint>>, t: f64) -> Option<Vec<Point>> {
    match maximized {
        Some(points) => points.iter().find(|p| p.t == t).map(|p| p.result.xi_star.clone()),
        None => Some(Vec::new()),
    }
}

fn energy(cfg: &RunConfig, maximized: Option<&Vec<MaximizePoint>>, tables: &mut Vec<Table>) -> Result<EnergyStage, Error> {
    for &t in &cfg.t_ladder {
        if centers(maximized, t).is_none() {
            return Err(Error::Config(format!("no maximizer available at t = {t}")));
        }
    }
    let spec = cfg.spec(cfg.t_ladder[0])?;
    let table = expansion_gap(
        &spec,
        |s| centers(maximized, s.t).unwrap_or_default(),
        &cfg.t_ladder,
        cfg.quadrature_budget,
    )?;
    let mass_target = 8.0 * PI * (cfg.m as f64 + 1.0 + cfg.alpha);
    let mass_rel_err: Vec<f64> = table.rows.iter().map(|r| (r.mass / mass_target - 1.0).abs()).collect();
    let mut csv = Table::new(
        "ladder".into(),
        &["t", "J_quadrature", "surrogate", "remainder", "mass", "mass_rel_err"],
    );
    for (r, e) in table.rows.iter().zip(&mass_rel_err) {
        csv.push(&[r.t, r.j_quadrature, r.surrogate, r.remainder, r.mass, *e]);
    }
    tables.push(csv);
    Ok(EnergyStage {
        table,
        mass_target,
        mass_rel_err,
        quadrature_budget: cfg.quadrature_budget,
    })
}

fn verify(
    cfg: &RunConfig,
    constructed: Option<&Vec<ConstructPoint>>,
    maximized: Option<&Vec<MaximizePoint>>,
    energy: Option<&EnergyStage>,
) -> Vec<Check> {
    let tol = &cfg.tolerances;
    let mut checks = Vec::new();
    if let Some(points) = constructed {
        let sup = points.iter().map(|p| p.boundary_sup).fold(0.0, f64::max);
        checks.push(Check {
            name: "boundary_exactness".into(),
            value: sup,
            tolerance: tol.boundary,
            pass: sup <= tol.boundary,
            provenance: format!("sup |U| over {BOUNDARY_SAMPLES} boundary samples, all ladder points"),
        });
    }
    if let Some(points) = maximized {
        for p in points {
            checks.push(Check {
                name: format!("maximizer_converged_t{}", t_label(p.t)),
                value: p.result.stationarity,
                tolerance: tol.maximizer_rel,
                pass: p.result.converged,
                provenance: format!("start {} of {} seeds", p.result.start_index, MaximizeOptions::default().random_starts + 1),
            });
        }
    }
    if let Some(e) = energy {
        let last = e.table.rows.len() - 1;
        let err = e.mass_rel_err[last];
        checks.push(Check {
            name: "mass_quantization".into(),
            value: err,
            tolerance: tol.mass_rel,
            pass: err <= tol.mass_rel,
            provenance: format!(
                "t = {}, quadrature tol {:.1e}, {} nodes",
                e.table.rows[last].t, e.table.rows[last].quadrature_tol, e.table.rows[last].nodes
            ),
        });
        if e.table.rows.len() >= 3 {
            let ratio = e.table.slope_ratio();
            checks.push(Check {
                name: "remainder_without_linear_trend".into(),
                value: ratio,
                tolerance: tol.remainder_slope,
                pass: ratio <= tol.remainder_slope,
                provenance: "least-squares slope of J − surrogate in t over the coefficient of t".into(),
            });
        }
    }
    checks
}

fn solve(cfg: &RunConfig, maximized: Option<&Vec<MaximizePoint>>, tables: &mut Vec<Table>) -> Result<Vec<SolveOutcome>, Error> {
    let opts = CorrectOptions {
        tol: cfg.tolerances.corrector_increment,
        residual_tol: cfg.tolerances.corrector_residual,
        ..CorrectOptions::default()
    };
    let mut out = Vec::new();
    for t in cfg.corrector_points() {
        let xi = centers(maximized, t).ok_or_else(|| Error::Config(format!("no maximizer available at t = {t}")))?;
        let (fields, bc) = fields_at(cfg, t, &xi)?;
        let op = assemble(&fields, Grid::new(cfg.grid_n)?)?;
        match fixed_point_correct(&op, &opts) {
            Ok(r) => {
                let scheme = QuadratureScheme::for_config(&bc, cfg.quadrature_budget)?;
                let mass = mass_quantization(&fields, Some((&op.grid, &r.phi_final)), &scheme)?;
                tables.push(field_dump(
                    format!("solution_t{}", t_label(t)),
                    &fields,
                    Some((&op.grid, &r.phi_final)),
                ));
                out.push(SolveOutcome {
                    t,
                    solution: Some(SolvePoint {
                        t,
                        grid_n: r.grid_n,
                        mode: r.mode,
                        converged: r.converged,
                        iterations: r.iterations,
                        contraction: r.contraction,
                        nonlinear_residual: r.nonlinear_residual,
                        orthogonality_residual: r.orthogonality_residual,
                        phi_max: r.phi_max,
                        c: r.c_final,
                        normalized_multipliers: r.normalized_multipliers,
                        mass,
                    }),
                    error: None,
                });
            }
            Err(e @ Error::Solver { .. }) => out.push(SolveOutcome {
                t,
                solution: None,
                error: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn solve_checks(cfg: &RunConfig, outcomes: &[SolveOutcome]) -> Vec<Check> {
    outcomes
        .iter()
        .map(|o| {
            let (value, pass, provenance) = match &o.solution {
                Some(s) => {
                    let floor = if s.converged && s.nonlinear_residual > cfg.tolerances.corrector_residual {
                        ", residual stalled at its round-off floor"
                    } else {
                        ""
                    };
                    (
                        s.nonlinear_residual,
                        s.converged,
                        format!(
                            "grid n = {}, {:?} mode, {} iterations{floor}",
                            s.grid_n,
                            s.mode,
                            s.iterations.len()
                        ),
                    )
                }
                None => (f64::MAX, false, o.error.clone().unwrap_or_default()),
            };
            Check {
                name: format!("corrector_converged_t{}", t_label(o.t)),
                value,
                tolerance: cfg.tolerances.corrector_residual,
                pass,
                provenance,
            }
        })
        .collect()
}

fn timed<T>(timings: &mut Vec<Timing>, verbose: bool, stage: &str, f: impl FnOnce() -> T) -> T {
    if verbose {
        eprintln!("[bubbler] {stage}: running");
    }
    let start = Instant::now();
    let v = f();
    let seconds = start.elapsed().as_secs_f64();
    if verbose {
        eprintln!("[bubbler] {stage}: done in {seconds:.2}s");
    }
    timings.push(Timing {
        stage: stage.into(),
        seconds,
    });
    v
}

/// Runs the stages selected by `stage` in dependency order.
pub fn run_pipeline(cfg: &RunConfig, stage: Stage, verbose: bool) -> RunOutput {
    let [do_construct, do_maximize, do_energy, do_verify, do_solve] = stage.plan();
    let mut tables = Vec::new();
    let mut timings = Vec::new();

    let construct_rec = if do_construct {
        StageRecord::from_result(timed(&mut timings, verbose, "construct", || construct(cfg, &mut tables)))
    } else {
        StageRecord::skipped("not requested")
    };
    let maximize_rec = if !do_maximize {
        StageRecord::skipped("not requested")
    } else if cfg.m == 0 {
        StageRecord::skipped("m = 0: no free centers")
    } else {
        StageRecord::from_result(timed(&mut timings, verbose, "maximize", || maximize(cfg, &mut tables)))
    };
    let maximized = maximize_rec.result.as_ref();
    let upstream_failed = maximize_rec.failed();
    let energy_rec = if !do_energy {
        StageRecord::skipped("not requested")
    } else if upstream_failed {
        StageRecord::skipped("maximize stage failed")
    } else {
        StageRecord::from_result(timed(&mut timings, verbose, "energy", || energy(cfg, maximized, &mut tables)))
    };
    let verify_rec = if do_verify {
        StageRecord::from_result(Ok(timed(&mut timings, verbose, "verify", || {
            verify(cfg, construct_rec.result.as_ref(), maximized, energy_rec.result.as_ref())
        })))
    } else {
        StageRecord::skipped("not requested")
    };
    let solve_rec = if !do_solve {
        StageRecord::skipped("not requested")
    } else if upstream_failed {
        StageRecord::skipped("maximize stage failed")
    } else if cfg.corrector_points().is_empty() {
        StageRecord::skipped("no ladder point inside the corrector window [5, 9]")
    } else {
        StageRecord::from_result(timed(&mut timings, verbose, "solve", || solve(cfg, maximized, &mut tables)))
    };

    let mut checks = verify_rec.result.clone().unwrap_or_default();
    if let Some(outcomes) = &solve_rec.result {
        checks.extend(solve_checks(cfg, outcomes));
    }
    let passed = checks.iter().all(|c| c.pass);
    let report = RunReport {
        tool: format!("bubbler {}", env!("CARGO_PKG_VERSION")),
        stage,
        config: cfg.clone(),
        construct: construct_rec,
        maximize: maximize_rec,
        energy: energy_rec,
        verify: verify_rec,
        solve: solve_rec,
        checks,
        passed,
    };
    let report_failed = report.stages_failed();
    let mut out = RunOutput { report, tables, timings };
    if report_failed.0 || report_failed.1 {
        out.report.passed = false;
    }
    out
}
