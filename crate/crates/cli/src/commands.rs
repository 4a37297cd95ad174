use crate::report::{num, PhaseTimings, RunReport, Table, Unknowns};
use crate::{Common, ConditionArg};
use anyhow::{anyhow, bail, Context};
use log::info;
use ssie2d::geometry::{Point2, Scene, SceneSpec};
use ssie2d::kernels::QuadratureOptions;
use ssie2d::linalg::{ConditionEstimate, ConditionKind, ConditionMode};
use ssie2d::operators::DsaoCache;
use ssie2d::parallel;
use ssie2d::postproc::{far_field, field_at, grid_points, near_field};
use ssie2d::presets::CircleCase;
use ssie2d::solver::{frequency_sweep, solve_scene, SolveOptions, SolveResult, SolverError, SweepMesh};
use ssie2d::validation::{validate_case, ValidationError};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_RESONANCE: u8 = 3;
pub const EXIT_VALIDATION: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    error: anyhow::Error,
}

impl CliError {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        CliError {
            code,
            error: error.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.code
    }

    /// The cause chain, skipping causes already quoted by their parent.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for cause in self.error.chain() {
            let text = cause.to_string();
            if !out.contains(&text) {
                if !out.is_empty() {
                    out.push_str(": ");
                }
                out.push_str(&text);
            }
        }
        out
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if f.alternate() {
            write!(f, "{:#}", self.error)
        } else {
            write!(f, "{}", self.error)
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        CliError::new(EXIT_FAILURE, error)
    }
}

fn input(error: impl Into<anyhow::Error>) -> CliError {
    CliError::new(EXIT_INPUT, error)
}

struct Session {
    opts: SolveOptions,
    cache: DsaoCache,
    cache_path: Option<PathBuf>,
    out: PathBuf,
}

impl Session {
    fn open(common: &Common) -> Result<Self, CliError> {
        parallel::set_threads(common.threads);
        let mut opts = SolveOptions {
            condition: match common.condition {
                ConditionArg::Auto => ConditionMode::Auto,
                ConditionArg::Svd => ConditionMode::Svd,
                ConditionArg::OneNorm => ConditionMode::OneNorm,
                ConditionArg::Off => ConditionMode::Off,
            },
            ..Default::default()
        };
        if let Some(order) = common.gauss_order {
            opts.quadrature = QuadratureOptions::with_order(order).map_err(input)?;
        }
        std::fs::create_dir_all(&common.out)
            .with_context(|| format!("cannot create {}", common.out.display()))?;
        let cache = DsaoCache::new();
        if let Some(path) = common.dsao_cache.as_ref().filter(|p| p.exists()) {
            let n = cache.load(path).with_context(|| format!("loading {}", path.display()))?;
            info!("loaded {n} DSAO blocks from {}", path.display());
        }
        Ok(Session {
            opts,
            cache,
            cache_path: common.dsao_cache.clone(),
            out: common.out.clone(),
        })
    }

    fn close(&self) -> Result<(), CliError> {
        if let Some(path) = &self.cache_path {
            self.cache.save(path).with_context(|| format!("saving {}", path.display()))?;
        }
        Ok(())
    }
}

fn read_scene(path: &Path, report: &mut RunReport) -> Result<(SceneSpec, Scene), CliError> {
    let t = Instant::now();
    let spec = SceneSpec::from_path(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input)?;
    let scene = spec.build().map_err(input)?;
    report.timings.mesh = t.elapsed().as_secs_f64();
    report.frequency_hz = Some(scene.frequency);
    report.unknowns = unknowns(&scene);
    Ok((spec, scene))
}

fn unknowns(scene: &Scene) -> Unknowns {
    let (penetrable, pec) = (scene.penetrable_unknowns(), scene.pec_unknowns());
    Unknowns {
        penetrable,
        pec,
        total: penetrable + pec,
    }
}

/// Solves and fills the report; resonance-type failures still write the
/// report before exiting with their own code.
fn run_solve(session: &Session, scene: &Scene, report: &mut RunReport) -> Result<SolveResult, CliError> {
    match solve_scene(scene, &session.cache, &session.opts) {
        Ok(result) => {
            let d = &result.diagnostics;
            report.timings.dsao = d.timings.dsao;
            report.timings.fill = d.timings.fill;
            report.timings.solve = d.timings.solve + d.timings.reconstruct;
            report.cache = session.cache.stats().into();
            report.condition = Some(d.condition.into());
            report.residual = Some(d.residual);
            info!(
                "solved {} unknowns, condition {:.3e}, residual {:.3e}",
                result.layout.dim(),
                d.condition.value,
                d.residual
            );
            Ok(result)
        }
        Err(e) => {
            report.cache = session.cache.stats().into();
            let code = match e.condition() {
                Some(c) => {
                    report.status = "resonance".into();
                    report.condition = Some(
                        ConditionEstimate {
                            value: c,
                            kind: ConditionKind::OneNorm,
                        }
                        .into(),
                    );
                    EXIT_RESONANCE
                }
                None => {
                    report.status = "error".into();
                    EXIT_FAILURE
                }
            };
            report.message = Some(e.to_string());
            report.write(&session.out).context("writing report.json")?;
            session.close()?;
            Err(CliError::new(code, e))
        }
    }
}

fn finish(session: &Session, mut report: RunReport, post: Instant) -> Result<(), CliError> {
    report.timings.post = post.elapsed().as_secs_f64();
    session.close()?;
    report.write(&session.out).context("writing report.json")?;
    Ok(())
}

fn write_boundary_fields(out: &Path, scene: &Scene, result: &SolveResult, manifest: &mut Vec<String>) -> anyhow::Result<()> {
    let mut table = Table::create(
        out,
        "boundary_fields.csv",
        &["region", "segment", "x", "y", "re_e", "im_e", "re_j", "im_j"],
        manifest,
    )?;
    for (i, region) in scene.regions.iter().enumerate() {
        let e = result.region_e(i);
        let j = result.region_current(i);
        for (n, seg) in region.mesh.segments.iter().enumerate() {
            let m = seg.midpoint();
            table.row([
                region.name.clone(),
                n.to_string(),
                num(m.x),
                num(m.y),
                num(e[n].re),
                num(e[n].im),
                num(j[n].re),
                num(j[n].im),
            ])?;
        }
    }
    table.finish()
}

pub fn solve(common: &Common, scene_path: &Path) -> Result<(), CliError> {
    let session = Session::open(common)?;
    let mut report = RunReport::new("solve");
    let (_, scene) = read_scene(scene_path, &mut report)?;
    let result = run_solve(&session, &scene, &mut report)?;
    let post = Instant::now();
    write_boundary_fields(&session.out, &scene, &result, &mut report.manifest)?;
    finish(&session, report, post)
}

/// `start:stop:step` with `stop` excluded.
pub fn parse_angles(text: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad angle range '{text}'"))?;
    let [start, stop, step] = parts[..] else {
        bail!("angle range '{text}' is not start:stop:step");
    };
    if !(step > 0.0) || !(stop > start) {
        bail!("angle range '{text}' needs step > 0 and stop > start");
    }
    let n = ((stop - start) / step - 1e-9).ceil() as usize;
    Ok((0..n).map(|i| start + step * i as f64).collect())
}

pub fn rcs(common: &Common, scene_path: &Path, angles: &str) -> Result<(), CliError> {
    let angles = parse_angles(angles).map_err(input)?;
    let session = Session::open(common)?;
    let mut report = RunReport::new("rcs");
    let (_, scene) = read_scene(scene_path, &mut report)?;
    let result = run_solve(&session, &scene, &mut report)?;
    let post = Instant::now();
    write_boundary_fields(&session.out, &scene, &result, &mut report.manifest)?;
    let pattern = far_field(&scene, &result, &angles);
    let mut table = Table::create(&session.out, "rcs.csv", &["angle_deg", "sigma_m", "sigma_db"], &mut report.manifest)?;
    for ((a, s), db) in pattern.angles_deg.iter().zip(&pattern.sigma).zip(pattern.sigma_db()) {
        table.row([num(*a), num(*s), num(db)])?;
    }
    table.finish()?;
    finish(&session, report, post)
}

/// `xmin:xmax:nx,ymin:ymax:ny`.
pub fn parse_grid(text: &str) -> anyhow::Result<((f64, f64, usize), (f64, f64, usize))> {
    let axis = |part: &str| -> anyhow::Result<(f64, f64, usize)> {
        let p: Vec<&str> = part.split(':').map(str::trim).collect();
        let [lo, hi, n] = p[..] else {
            bail!("grid axis '{part}' is not min:max:n");
        };
        let n: usize = n.parse().with_context(|| format!("bad point count in '{part}'"))?;
        if n == 0 {
            bail!("grid axis '{part}' has no points");
        }
        Ok((lo.parse()?, hi.parse()?, n))
    };
    let (x, y) = text
        .split_once(',')
        .ok_or_else(|| anyhow!("grid '{text}' is not xmin:xmax:nx,ymin:ymax:ny"))?;
    Ok((axis(x)?, axis(y)?))
}

pub fn nearfield(common: &Common, scene_path: &Path, grid: &str) -> Result<(), CliError> {
    let (gx, gy) = parse_grid(grid).map_err(input)?;
    let session = Session::open(common)?;
    let mut report = RunReport::new("nearfield");
    let (_, scene) = read_scene(scene_path, &mut report)?;
    let result = run_solve(&session, &scene, &mut report)?;
    let post = Instant::now();
    let points = grid_points(gx, gy);
    let field = near_field(&scene, &result, &points, &session.opts.quadrature).context("near field")?;
    let mut table = Table::create(
        &session.out,
        "nearfield.csv",
        &["x", "y", "region_tag", "re_e", "im_e", "abs_e"],
        &mut report.manifest,
    )?;
    for ((p, e), tag) in field.points.iter().zip(&field.values).zip(&field.tags) {
        table.row([num(p.x), num(p.y), tag.to_string(), num(e.re), num(e.im), num(e.norm())])?;
    }
    table.finish()?;
    finish(&session, report, post)
}

fn parse_point(text: &str) -> anyhow::Result<Point2> {
    let (x, y) = text
        .split_once(',')
        .ok_or_else(|| anyhow!("point '{text}' is not x,y"))?;
    Ok(Point2::new(x.trim().parse()?, y.trim().parse()?))
}

pub fn sweep(
    common: &Common,
    scene_path: &Path,
    fmin: f64,
    fmax: f64,
    steps: usize,
    mesh_frequency: Option<f64>,
    probe: &str,
) -> Result<(), CliError> {
    if steps == 0 {
        return Err(input(anyhow!("--steps must be at least 1")));
    }
    if !(fmin > 0.0) || fmax < fmin {
        return Err(input(anyhow!("need 0 < fmin <= fmax")));
    }
    let probe = parse_point(probe).map_err(input)?;
    let session = Session::open(common)?;
    let mut report = RunReport::new("sweep");
    let (spec, _) = read_scene(scene_path, &mut report)?;
    let mesh = mesh_frequency.map_or(SweepMesh::Remesh, SweepMesh::Fixed);
    let t = Instant::now();
    let points = frequency_sweep(&spec, fmin, fmax, steps, mesh, &session.cache, &session.opts).map_err(input)?;
    report.timings.solve = t.elapsed().as_secs_f64();
    let post = Instant::now();
    let mut table = Table::create(
        &session.out,
        "sweep.csv",
        &["frequency_hz", "condition_estimate", "residual", "probe_abs_e", "status"],
        &mut report.manifest,
    )?;
    let (mut worst_cond, mut worst_res) = (0.0f64, 0.0f64);
    let mut timings = PhaseTimings::default();
    for p in &points {
        worst_cond = worst_cond.max(p.condition);
        match &p.outcome {
            Ok(r) => {
                worst_res = worst_res.max(r.diagnostics.residual);
                timings.add(&PhaseTimings {
                    dsao: r.diagnostics.timings.dsao,
                    fill: r.diagnostics.timings.fill,
                    solve: r.diagnostics.timings.solve + r.diagnostics.timings.reconstruct,
                    ..Default::default()
                });
                let scene = mesh.scene_at(&spec, p.frequency).map_err(input)?;
                let e = field_at(&scene, r, probe, &session.opts.quadrature).context("probe field")?.0;
                table.row([num(p.frequency), num(p.condition), num(r.diagnostics.residual), num(e.norm()), "ok".into()])?;
            }
            Err(e) => {
                let status = if e.condition().is_some() { "resonance" } else { "error" };
                table.row([num(p.frequency), num(p.condition), num(f64::NAN), num(f64::NAN), status.into()])?;
            }
        }
    }
    table.finish()?;
    report.timings.dsao = timings.dsao;
    report.timings.fill = timings.fill;
    report.timings.solve = timings.solve;
    report.cache = session.cache.stats().into();
    report.condition = Some(
        ConditionEstimate {
            value: worst_cond,
            kind: match session.opts.condition {
                ConditionMode::Off => ConditionKind::Skipped,
                ConditionMode::OneNorm => ConditionKind::OneNorm,
                _ => ConditionKind::TwoNorm,
            },
        }
        .into(),
    );
    report.residual = Some(worst_res);
    let failed = points.iter().filter(|p| p.outcome.is_err()).count();
    if failed > 0 {
        report.message = Some(format!("{failed} of {} frequencies failed", points.len()));
    }
    finish(&session, report, post)
}

pub fn validate(common: &Common, cases: &[String], density: f64, frequency: f64) -> Result<(), CliError> {
    let cases: Vec<CircleCase> = cases
        .iter()
        .map(|c| CircleCase::from_name(c).ok_or_else(|| anyhow!("unknown validation case '{c}'")))
        .collect::<anyhow::Result<_>>()
        .map_err(input)?;
    let session = Session::open(common)?;
    let mut report = RunReport::new("validate");
    report.frequency_hz = Some(frequency);
    let t = Instant::now();
    let mut table = Table::create(
        &session.out,
        "validate.csv",
        &["case", "density", "unknowns", "metric", "value", "threshold", "pass"],
        &mut report.manifest,
    )?;
    let mut failures = Vec::new();
    for case in cases {
        match validate_case(case, frequency, density, &session.cache, &session.opts) {
            Ok(r) => {
                report.unknowns.total += r.unknowns;
                for m in &r.metrics {
                    table.row([
                        case.name().to_string(),
                        num(density),
                        r.unknowns.to_string(),
                        m.name.to_string(),
                        num(m.value),
                        num(m.threshold),
                        m.pass().to_string(),
                    ])?;
                    if !m.pass() {
                        failures.push(format!("{} {} = {:.3e} >= {:.3e}", case.name(), m.name, m.value, m.threshold));
                    }
                }
            }
            // an unbuildable (e.g. too coarse) mesh cannot meet the thresholds
            Err(ValidationError::Scene(e)) => {
                table.row([case.name().into(), num(density), "0".into(), "mesh".into(), num(f64::NAN), num(f64::NAN), "false".into()])?;
                failures.push(format!("{}: {e}", case.name()));
            }
            Err(ValidationError::Solver(e @ SolverError::Scene(_))) => {
                table.row([case.name().into(), num(density), "0".into(), "mesh".into(), num(f64::NAN), num(f64::NAN), "false".into()])?;
                failures.push(format!("{}: {e}", case.name()));
            }
            Err(e) => return Err(CliError::new(EXIT_FAILURE, e)),
        }
    }
    table.finish()?;
    report.timings.solve = t.elapsed().as_secs_f64();
    report.cache = session.cache.stats().into();
    let post = Instant::now();
    if failures.is_empty() {
        return finish(&session, report, post);
    }
    report.status = "validation_failed".into();
    report.message = Some(failures.join("; "));
    finish(&session, report, post)?;
    Err(CliError::new(EXIT_VALIDATION, anyhow!("validation failed: {}", failures.join("; "))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_ranges() {
        let a = parse_angles("0:360:1").unwrap();
        assert_eq!(a.len(), 360);
        assert_eq!(a[359], 359.0);
        assert_eq!(parse_angles("10:20:2.5").unwrap(), vec![10.0, 12.5, 15.0, 17.5]);
        assert!(parse_angles("0:360").is_err());
        assert!(parse_angles("0:360:0").is_err());
        assert!(parse_angles("5:1:1").is_err());
    }

    #[test]
    fn grid_specs() {
        let (x, y) = parse_grid("-1:1:2,0:2:3").unwrap();
        assert_eq!(x, (-1.0, 1.0, 2));
        assert_eq!(y, (0.0, 2.0, 3));
        assert!(parse_grid("-1:1:2").is_err());
        assert!(parse_grid("-1:1:0,0:1:1").is_err());
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }
}
