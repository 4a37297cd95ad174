//! Global assembly of the single-source system, plane-wave excitation, the
//! dense solve, and reconstruction of boundary `H` and equivalent currents.
//!
//! Unknowns are `[E; J_p]`: tangential `E_z` pulses on every penetrable
//! boundary followed by physical currents on every PEC boundary. With the
//! background Galerkin matrix `P` over all segments the tested field balance
//! reads
//!
//! ```text
//! [ L + P_ee Ys   P_ep ] [ E  ]   [ Einc_e ]
//! [ P_pe Ys       P_pp ] [ Jp ] = [ Einc_p ]
//! ```

use crate::geometry::{Scene, SceneError, SceneSpec, Segment};
use crate::kernels::{integrate_segment, KernelError, QuadratureOptions};
use crate::linalg::{self, CMat, ConditionEstimate, ConditionKind, ConditionMode, Lu};
use crate::operators::{self, CacheStats, DsaoCache, FillStats, OperatorError, RegionDsao};
use crate::parallel;
use num_complex::Complex64;
use std::time::Instant;

/// Gauss points per segment for the tested incident field.
pub const INCIDENT_GAUSS_ORDER: usize = 3;
/// A global system whose condition exceeds this is reported singular.
pub const SINGULAR_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Scene(#[from] SceneErrorText),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("system is singular or resonant at {frequency} Hz (condition {condition:.3e})")]
    Resonance { frequency: f64, condition: f64 },
}

/// Scene errors carry `io::Error`, which is neither `Clone` nor `PartialEq`.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct SceneErrorText(pub String);

impl From<SceneError> for SolverError {
    fn from(e: SceneError) -> Self {
        SolverError::Scene(SceneErrorText(e.to_string()))
    }
}

impl SolverError {
    /// Condition estimate attached to resonance-type failures.
    pub fn condition(&self) -> Option<f64> {
        match self {
            SolverError::Resonance { condition, .. } => Some(*condition),
            SolverError::Operator(OperatorError::InteriorResonance { condition, .. }) => Some(*condition),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub quadrature: QuadratureOptions,
    pub condition: ConditionMode,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            quadrature: QuadratureOptions::default(),
            condition: ConditionMode::Auto,
        }
    }
}

/// One region's slice of the global unknown vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionBlock {
    pub region: usize,
    pub pec: bool,
    /// First global row.
    pub row: usize,
    /// First index inside `E` (penetrable) or `J_p` (PEC).
    pub local: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Layout {
    /// Penetrable regions first, then PEC regions, each in scene order.
    pub blocks: Vec<RegionBlock>,
    pub m_tot: usize,
    pub n_tot: usize,
}

impl Layout {
    pub fn new(scene: &Scene) -> Self {
        let mut layout = Layout::default();
        let mut row = 0;
        for pec in [false, true] {
            for (i, r) in scene.regions.iter().enumerate().filter(|(_, r)| r.is_pec() == pec) {
                let local = if pec { layout.n_tot } else { layout.m_tot };
                layout.blocks.push(RegionBlock {
                    region: i,
                    pec,
                    row,
                    local,
                    len: r.mesh.len(),
                });
                row += r.mesh.len();
                if pec {
                    layout.n_tot += r.mesh.len();
                } else {
                    layout.m_tot += r.mesh.len();
                }
            }
        }
        layout
    }

    pub fn dim(&self) -> usize {
        self.m_tot + self.n_tot
    }

    pub fn block_of(&self, region: usize) -> Option<&RegionBlock> {
        self.blocks.iter().find(|b| b.region == region)
    }

    pub fn global_row(&self, region: usize, segment: usize) -> Option<usize> {
        self.block_of(region).filter(|b| segment < b.len).map(|b| b.row + segment)
    }

    /// `(region, segment)` of a global row.
    pub fn locate(&self, row: usize) -> Option<(usize, usize)> {
        self.blocks
            .iter()
            .find(|b| row >= b.row && row < b.row + b.len)
            .map(|b| (b.region, row - b.row))
    }

    /// All segments in global row order.
    pub fn segments(&self, scene: &Scene) -> Vec<Segment> {
        self.blocks
            .iter()
            .flat_map(|b| scene.regions[b.region].mesh.segments.iter().copied())
            .collect()
    }
}

/// DSAOs of every penetrable region (`None` for PEC regions), in scene order.
pub fn build_operators(
    scene: &Scene,
    cache: &DsaoCache,
    opts: &QuadratureOptions,
) -> Result<Vec<Option<RegionDsao>>, SolverError> {
    let results = parallel::map_indices(scene.regions.len(), |i| {
        let region = &scene.regions[i];
        if region.is_pec() {
            return Ok(None);
        }
        operators::dsao(region, &scene.background, scene.frequency, cache, opts).map(Some)
    });
    results.into_iter().map(|r| r.map_err(SolverError::from)).collect()
}

pub struct GlobalSystem {
    pub layout: Layout,
    /// `j w mu0 int int G0` over all segments in global order.
    pub p: CMat,
    /// Segment lengths of the penetrable rows (the diagonal of `L`).
    pub l: Vec<f64>,
    /// Per penetrable block: `(block index, Y_s, Y)` in region segment order.
    pub admittances: Vec<(usize, CMat, CMat)>,
    /// The coefficient matrix.
    pub matrix: CMat,
    pub frequency: f64,
    pub fill: FillStats,
}

impl GlobalSystem {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// `P_ee Ys` block product in the columns of one penetrable block.
    fn apply_ys_columns(p: &CMat, row0: usize, rows: usize, col0: usize, ys: &CMat) -> CMat {
        let pc = p.as_ref().submatrix(row0, col0, rows, ys.nrows()).to_owned();
        &pc * ys
    }

    /// `Ys_global E` over all penetrable rows.
    pub fn equivalent_currents(&self, e: &[Complex64]) -> Vec<Complex64> {
        self.block_apply(e, |_, ys, _| ys)
    }

    /// `Y_global E`.
    pub fn reconstruct_h(&self, e: &[Complex64]) -> Vec<Complex64> {
        self.block_apply(e, |_, _, y| y)
    }

    fn block_apply<'a>(&'a self, e: &[Complex64], pick: impl Fn(usize, &'a CMat, &'a CMat) -> &'a CMat) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.layout.m_tot];
        for (b, ys, y) in &self.admittances {
            let block = &self.layout.blocks[*b];
            let m = pick(*b, ys, y);
            let v = linalg::matvec(m, &e[block.local..block.local + block.len]);
            out[block.local..block.local + block.len].copy_from_slice(&v);
        }
        out
    }
}

/// Builds `P` over every boundary and forms the block coefficient matrix.
pub fn assemble_global(
    scene: &Scene,
    operators: &[Option<RegionDsao>],
    opts: &QuadratureOptions,
) -> Result<GlobalSystem, SolverError> {
    if operators.len() != scene.regions.len() {
        return Err(SolverError::Dimension(format!(
            "{} operator slots for {} regions",
            operators.len(),
            scene.regions.len()
        )));
    }
    let layout = Layout::new(scene);
    let segments = layout.segments(scene);
    let k0 = scene.k0();
    let jwmu0 = Complex64::new(0.0, scene.omega() * scene.background.permeability());
    let (g, _, fill) = operators::fill_kernel_matrices(&segments, k0, opts, false)?;
    let n = layout.dim();
    let p = CMat::from_fn(n, n, |i, j| g[(i, j)] * jwmu0);
    let mut matrix = p.clone();
    let mut admittances = Vec::new();
    let mut l = vec![0.0; layout.m_tot];
    for (bi, block) in layout.blocks.iter().enumerate() {
        let region = &scene.regions[block.region];
        match (&operators[block.region], block.pec) {
            (None, true) => {}
            (Some(op), false) => {
                if op.dim() != block.len {
                    return Err(SolverError::Dimension(format!(
                        "region '{}': operator {} vs mesh {}",
                        region.name,
                        op.dim(),
                        block.len
                    )));
                }
                let ys = op.ys();
                let cols = GlobalSystem::apply_ys_columns(&p, 0, n, block.row, &ys);
                for j in 0..block.len {
                    for i in 0..n {
                        matrix[(i, block.row + j)] = cols[(i, j)];
                    }
                }
                for (s, &len) in region.mesh.lengths.iter().enumerate() {
                    matrix[(block.row + s, block.row + s)] += Complex64::new(len, 0.0);
                    l[block.local + s] = len;
                }
                admittances.push((bi, ys, op.y()));
            }
            (None, false) => {
                return Err(SolverError::Dimension(format!("penetrable region '{}' has no DSAO", region.name)));
            }
            (Some(_), true) => {
                return Err(OperatorError::PecRegion(region.name.clone()).into());
            }
        }
    }
    Ok(GlobalSystem {
        layout,
        p,
        l,
        admittances,
        matrix,
        frequency: scene.frequency,
        fill,
    })
}

/// Tested incident field `int_m E_inc dl` for every segment in global order.
pub fn incident_vector(scene: &Scene) -> Vec<Complex64> {
    incident_vector_with(scene, INCIDENT_GAUSS_ORDER)
}

pub fn incident_vector_with(scene: &Scene, order: usize) -> Vec<Complex64> {
    let k0 = scene.k0();
    Layout::new(scene)
        .segments(scene)
        .iter()
        .map(|s| integrate_segment(s, order, |r| scene.excitation.field(k0, r)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timings {
    pub dsao: f64,
    pub fill: f64,
    pub solve: f64,
    pub reconstruct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub condition: ConditionEstimate,
    /// `||A x - b|| / ||b||`.
    pub residual: f64,
    pub timings: Timings,
    pub cache: CacheStats,
    pub fill: FillStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub frequency: f64,
    pub layout: Layout,
    /// `E_z` pulses on penetrable boundaries.
    pub e: Vec<Complex64>,
    /// Physical currents on PEC boundaries.
    pub j_p: Vec<Complex64>,
    /// Reconstructed `H = Y E` on penetrable boundaries.
    pub h: Vec<Complex64>,
    /// Equivalent currents `Ys E`.
    pub j_e: Vec<Complex64>,
    pub diagnostics: Diagnostics,
}

impl SolveResult {
    /// Current on every segment in global row order (`J_e` then `J_p`).
    pub fn currents(&self) -> Vec<Complex64> {
        self.j_e.iter().chain(&self.j_p).copied().collect()
    }

    /// `E` on the segments of one region (zeros for PEC).
    pub fn region_e(&self, region: usize) -> Vec<Complex64> {
        match self.layout.block_of(region) {
            Some(b) if !b.pec => self.e[b.local..b.local + b.len].to_vec(),
            Some(b) => vec![Complex64::new(0.0, 0.0); b.len],
            None => Vec::new(),
        }
    }

    pub fn region_h(&self, region: usize) -> Vec<Complex64> {
        match self.layout.block_of(region) {
            Some(b) if !b.pec => self.h[b.local..b.local + b.len].to_vec(),
            _ => Vec::new(),
        }
    }

    /// Surface current on one region: `J_e` or `J_p`.
    pub fn region_current(&self, region: usize) -> Vec<Complex64> {
        match self.layout.block_of(region) {
            Some(b) if b.pec => self.j_p[b.local..b.local + b.len].to_vec(),
            Some(b) => self.j_e[b.local..b.local + b.len].to_vec(),
            None => Vec::new(),
        }
    }
}

/// Dense LU solve of an assembled system.
pub fn solve(system: &GlobalSystem, b: &[Complex64], mode: ConditionMode) -> Result<SolveResult, SolverError> {
    let n = system.dim();
    if b.len() != n {
        return Err(SolverError::Dimension(format!("rhs {} vs system {}", b.len(), n)));
    }
    let t0 = Instant::now();
    let lu = Lu::new(&system.matrix);
    let x = lu.solve_vec(b);
    let condition = linalg::condition(&system.matrix, Some(&lu), mode);
    let ax = linalg::matvec(&system.matrix, &x);
    let diff: Vec<Complex64> = ax.iter().zip(b).map(|(a, b)| a - b).collect();
    let bn = linalg::vec_norm(b);
    let residual = if bn > 0.0 { linalg::vec_norm(&diff) / bn } else { linalg::vec_norm(&diff) };
    let solve_time = t0.elapsed().as_secs_f64();
    let singular = !x.iter().all(|v| v.re.is_finite() && v.im.is_finite())
        || (condition.kind != ConditionKind::Skipped && !(condition.value <= SINGULAR_CONDITION));
    if singular {
        let value = if condition.kind == ConditionKind::Skipped {
            lu.condition_one_norm()
        } else {
            condition.value
        };
        return Err(SolverError::Resonance {
            frequency: system.frequency,
            condition: value,
        });
    }
    let t1 = Instant::now();
    let m = system.layout.m_tot;
    let e = x[..m].to_vec();
    let j_p = x[m..].to_vec();
    let h = system.reconstruct_h(&e);
    let j_e = system.equivalent_currents(&e);
    Ok(SolveResult {
        frequency: system.frequency,
        layout: system.layout.clone(),
        e,
        j_p,
        h,
        j_e,
        diagnostics: Diagnostics {
            condition,
            residual,
            timings: Timings {
                solve: solve_time,
                reconstruct: t1.elapsed().as_secs_f64(),
                ..Timings::default()
            },
            cache: CacheStats::default(),
            fill: system.fill,
        },
    })
}

/// Operators, assembly, excitation and solve for one meshed scene.
pub fn solve_scene(scene: &Scene, cache: &DsaoCache, opts: &SolveOptions) -> Result<SolveResult, SolverError> {
    let before = cache.stats();
    let t0 = Instant::now();
    let ops = build_operators(scene, cache, &opts.quadrature)?;
    let dsao_time = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let system = assemble_global(scene, &ops, &opts.quadrature)?;
    let fill_time = t1.elapsed().as_secs_f64();
    let b = incident_vector(scene);
    let mut result = solve(&system, &b, opts.condition)?;
    result.diagnostics.timings.dsao = dsao_time;
    result.diagnostics.timings.fill = fill_time;
    let after = cache.stats();
    result.diagnostics.cache = CacheStats {
        computed: after.computed - before.computed,
        reused: after.reused - before.reused,
        loaded: after.loaded,
    };
    Ok(result)
}

/// How a sweep meshes the scene at each frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepMesh {
    /// Re-mesh at every frequency (wavelength-relative densities).
    Remesh,
    /// Mesh once at the given frequency and keep that mesh.
    Fixed(f64),
}

impl SweepMesh {
    /// The scene a sweep solves at `frequency`.
    pub fn scene_at(&self, spec: &SceneSpec, frequency: f64) -> Result<Scene, SceneError> {
        match *self {
            SweepMesh::Remesh => spec.build_at(frequency),
            SweepMesh::Fixed(f) => Ok(spec.build_at(f)?.at_frequency(frequency)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub frequency: f64,
    /// Condition estimate, also for resonance failures; NaN for other errors.
    pub condition: f64,
    pub outcome: Result<SolveResult, SolverError>,
}

/// `steps` frequencies evenly spaced over `[f_min, f_max]` (just `f_min` for
/// one step).
pub fn sweep_frequencies(f_min: f64, f_max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![f_min],
        _ => (0..steps)
            .map(|i| f_min + (f_max - f_min) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

/// Independent solves over a frequency grid; failures are recorded per point.
pub fn frequency_sweep(
    spec: &SceneSpec,
    f_min: f64,
    f_max: f64,
    steps: usize,
    mesh: SweepMesh,
    cache: &DsaoCache,
    opts: &SolveOptions,
) -> Result<Vec<SweepPoint>, SolverError> {
    if steps == 0 {
        return Err(SolverError::Dimension("sweep needs at least one step".into()));
    }
    let fixed = match mesh {
        SweepMesh::Fixed(f) => Some(spec.build_at(f)?),
        SweepMesh::Remesh => None,
    };
    let freqs = sweep_frequencies(f_min, f_max, steps);
    let run = |f: f64| -> Result<SolveResult, SolverError> {
        let scene = match &fixed {
            Some(base) => base.at_frequency(f),
            None => spec.build_at(f)?,
        };
        solve_scene(&scene, cache, opts)
    };
    // parallelism lives inside each solve
    let points = freqs
        .iter()
        .map(|&f| {
            let outcome = run(f);
            let condition = match &outcome {
                Ok(r) => r.diagnostics.condition.value,
                Err(e) => e.condition().unwrap_or(f64::NAN),
            };
            if let Err(e) = &outcome {
                log::warn!("sweep point {f} Hz failed: {e}");
            }
            SweepPoint {
                frequency: f,
                condition,
                outcome,
            }
        })
        .collect();
    Ok(points)
}
