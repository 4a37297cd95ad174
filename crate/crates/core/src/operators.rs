//! Per-region surface operators `L`, `U`, `P`, the surface admittance
//! `Y = P^-1 (U - L/2)`, and the differential operator `Y_s = Y_hat - Y`,
//! with a congruence-keyed cache.
//!
//! `H` here is `(1/jwmu) dE/dn` along the inward normal, and `Y E = H` on the
//! boundary. Physical surface current is `Y_s E`.

use crate::geometry::{canonical_form, BoundaryMesh, CongruenceSignature, Material, MaterialKey, Region, Segment};
use crate::kernels::{KernelContext, KernelError, PairIntegrator, QuadratureOptions};
use crate::linalg::{self, CMat, Lu};
use crate::parallel;
use num_complex::Complex64;
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

/// On-boundary jump factor.
pub const T_BOUNDARY: f64 = 0.5;
/// `P` with a condition estimate above this is treated as resonant.
pub const RESONANCE_CONDITION: f64 = 1e14;

const DUMP_MAGIC: &[u8; 8] = b"SSIE2DYS";
const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("PEC region '{0}' has no surface admittance")]
    PecRegion(String),
    #[error("interior resonance of region '{region}' at {frequency} Hz (cond(P) ~ {condition:.3e})")]
    InteriorResonance {
        region: String,
        frequency: f64,
        condition: f64,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("DSAO cache file: {0}")]
    CacheFile(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("geometry: {0}")]
    Geometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorRole {
    L,
    U,
    P,
    Y,
    YHat,
    Ys,
}

impl OperatorRole {
    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(tag: u8) -> Option<Self> {
        [Self::L, Self::U, Self::P, Self::Y, Self::YHat, Self::Ys]
            .into_iter()
            .find(|r| r.tag() == tag)
    }
}

/// Dense operator indexed by the segments of one boundary.
#[derive(Debug, Clone)]
pub struct SurfaceOperator {
    pub matrix: CMat,
    pub boundary_id: String,
    pub role: OperatorRole,
}

impl SurfaceOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Counters for one or more operator fills.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FillStats {
    pub pairs: usize,
    pub near_pairs: usize,
    pub quadrature_warnings: usize,
}

impl std::ops::AddAssign for FillStats {
    fn add_assign(&mut self, o: Self) {
        self.pairs += o.pairs;
        self.near_pairs += o.near_pairs;
        self.quadrature_warnings += o.quadrature_warnings;
    }
}

/// Galerkin matrices `int int G` and, optionally, `int int dG/dn'` over all
/// segment pairs of one list. Symmetric in `G`; coincident segments (also
/// from different regions) go through the self-term path.
pub fn fill_kernel_matrices(
    segments: &[Segment],
    k: Complex64,
    opts: &QuadratureOptions,
    want_dg: bool,
) -> Result<(CMat, Option<CMat>, FillStats), KernelError> {
    let n = segments.len();
    let integrator = PairIntegrator::new(k, *opts);
    let rows = parallel::map_indices(n, |i| {
        let mut g = Vec::with_capacity(n - i);
        let mut dg = Vec::with_capacity(if want_dg { 2 * (n - i) } else { 0 });
        let mut stats = FillStats::default();
        for j in i..n {
            let t = integrator.pair(&segments[i], &segments[j], want_dg)?;
            stats.pairs += 1;
            if integrator.is_near(&segments[i], &segments[j]) {
                stats.near_pairs += 1;
            }
            if !t.converged {
                stats.quadrature_warnings += 1;
            }
            g.push(t.g);
            if want_dg {
                dg.push(t.dg);
                dg.push(t.dg_swapped);
            }
        }
        Ok::<_, KernelError>((g, dg, stats))
    });
    let mut gm = linalg::zeros(n, n);
    let mut dm = if want_dg { Some(linalg::zeros(n, n)) } else { None };
    let mut stats = FillStats::default();
    for (i, row) in rows.into_iter().enumerate() {
        let (g, dg, s) = row?;
        stats += s;
        for (off, v) in g.into_iter().enumerate() {
            let j = i + off;
            gm[(i, j)] = v;
            gm[(j, i)] = v;
        }
        if let Some(d) = dm.as_mut() {
            for (off, pair) in dg.chunks_exact(2).enumerate() {
                let j = i + off;
                d[(i, j)] = pair[0];
                if j != i {
                    d[(j, i)] = pair[1];
                }
            }
        }
    }
    if stats.quadrature_warnings > 0 {
        log::warn!(
            "{} of {} pair integrals hit the adaptive depth limit",
            stats.quadrature_warnings,
            stats.pairs
        );
    }
    Ok((gm, dm, stats))
}

/// Diagonal matrix of segment lengths.
pub fn build_l(mesh: &BoundaryMesh) -> SurfaceOperator {
    let n = mesh.len();
    let mut m = linalg::zeros(n, n);
    for (i, &len) in mesh.lengths.iter().enumerate() {
        m[(i, i)] = Complex64::new(len, 0.0);
    }
    SurfaceOperator {
        matrix: m,
        boundary_id: String::new(),
        role: OperatorRole::L,
    }
}

/// `[U]_mn = int_m int_n dG/dn'`.
pub fn build_u(mesh: &BoundaryMesh, ctx: &KernelContext) -> Result<SurfaceOperator, OperatorError> {
    build_u_with(mesh, ctx, &QuadratureOptions::default())
}

pub fn build_u_with(
    mesh: &BoundaryMesh,
    ctx: &KernelContext,
    opts: &QuadratureOptions,
) -> Result<SurfaceOperator, OperatorError> {
    let (_, dg, _) = fill_kernel_matrices(&mesh.segments, ctx.k, opts, true)?;
    Ok(SurfaceOperator {
        matrix: dg.expect("normal-derivative matrix requested"),
        boundary_id: String::new(),
        role: OperatorRole::U,
    })
}

/// `[P]_mn = int_m int_n j w mu G`.
pub fn build_p(mesh: &BoundaryMesh, ctx: &KernelContext) -> Result<SurfaceOperator, OperatorError> {
    build_p_with(mesh, ctx, &QuadratureOptions::default())
}

pub fn build_p_with(
    mesh: &BoundaryMesh,
    ctx: &KernelContext,
    opts: &QuadratureOptions,
) -> Result<SurfaceOperator, OperatorError> {
    let (g, _, _) = fill_kernel_matrices(&mesh.segments, ctx.k, opts, false)?;
    Ok(SurfaceOperator {
        matrix: scale(&g, ctx.jwmu()),
        boundary_id: String::new(),
        role: OperatorRole::P,
    })
}

fn scale(m: &CMat, s: Complex64) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmittanceMedium {
    /// The region's own material: `Y`.
    Interior,
    /// The background filling the region: `Y_hat`.
    Background,
}

/// `Y = P^-1 (U - T L)` for the chosen medium. Fails on an interior
/// resonance of `P`.
pub fn surface_admittance(
    mesh: &BoundaryMesh,
    material: &Material,
    background: &Material,
    medium: AdmittanceMedium,
    frequency: f64,
    opts: &QuadratureOptions,
) -> Result<SurfaceOperator, OperatorError> {
    if material.is_pec {
        return Err(OperatorError::PecRegion(String::new()));
    }
    let (m, role) = match medium {
        AdmittanceMedium::Interior => (material, OperatorRole::Y),
        AdmittanceMedium::Background => (background, OperatorRole::YHat),
    };
    let (y, _) = admittance_matrix(mesh, m, frequency, opts, "")?;
    Ok(SurfaceOperator {
        matrix: y,
        boundary_id: String::new(),
        role,
    })
}

fn admittance_matrix(
    mesh: &BoundaryMesh,
    medium: &Material,
    frequency: f64,
    opts: &QuadratureOptions,
    region: &str,
) -> Result<(CMat, FillStats), OperatorError> {
    let ctx = KernelContext::for_material(medium, frequency)?;
    let (g, dg, stats) = fill_kernel_matrices(&mesh.segments, ctx.k, opts, true)?;
    let p = scale(&g, ctx.jwmu());
    let mut rhs = dg.expect("normal-derivative matrix requested");
    for (i, &len) in mesh.lengths.iter().enumerate() {
        rhs[(i, i)] -= Complex64::new(T_BOUNDARY * len, 0.0);
    }
    let lu = Lu::new(&p);
    let condition = lu.condition_one_norm();
    if !(condition.is_finite() && condition <= RESONANCE_CONDITION) {
        return Err(OperatorError::InteriorResonance {
            region: region.to_string(),
            frequency,
            condition,
        });
    }
    Ok((lu.solve(&rhs), stats))
}

/// Interior, background and differential admittances of one congruence
/// class, in canonical segment order.
#[derive(Debug, Clone)]
pub struct DsaoBlocks {
    pub y: CMat,
    pub y_hat: CMat,
    pub ys: CMat,
    pub hash: u64,
}

/// DSAO blocks mapped back onto a particular region's segment order.
#[derive(Debug, Clone)]
pub struct RegionDsao {
    pub blocks: Arc<DsaoBlocks>,
    pub offset: usize,
}

impl RegionDsao {
    fn canonical(&self, i: usize) -> usize {
        let n = self.blocks.ys.nrows();
        (i + n - self.offset % n) % n
    }

    fn permuted(&self, m: &CMat) -> CMat {
        let n = m.nrows();
        if self.offset % n.max(1) == 0 {
            return m.clone();
        }
        CMat::from_fn(n, n, |i, j| m[(self.canonical(i), self.canonical(j))])
    }

    pub fn ys(&self) -> CMat {
        self.permuted(&self.blocks.ys)
    }

    pub fn y(&self) -> CMat {
        self.permuted(&self.blocks.y)
    }

    pub fn y_hat(&self) -> CMat {
        self.permuted(&self.blocks.y_hat)
    }

    pub fn dim(&self) -> usize {
        self.blocks.ys.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct DsaoKey {
    signature: CongruenceSignature,
    background: MaterialKey,
    frequency: u64,
    quadrature: (usize, u64, u64, usize),
}

impl DsaoKey {
    fn hash64(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(self.signature.to_bytes());
        h.update(self.background.to_bytes());
        h.update(self.frequency.to_le_bytes());
        h.update((self.quadrature.0 as u64).to_le_bytes());
        h.update(self.quadrature.1.to_le_bytes());
        h.update(self.quadrature.2.to_le_bytes());
        h.update((self.quadrature.3 as u64).to_le_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub computed: usize,
    pub reused: usize,
    pub loaded: usize,
}

type Slot = Arc<OnceLock<Result<Arc<DsaoBlocks>, OperatorError>>>;

/// Congruence-keyed store of DSAO blocks. Concurrent requests for one key
/// compute once; everyone receives the same `Arc`.
#[derive(Debug, Default)]
pub struct DsaoCache {
    enabled: bool,
    slots: Mutex<HashMap<DsaoKey, Slot>>,
    persisted: Mutex<HashMap<u64, PersistedEntry>>,
    computed: AtomicUsize,
    reused: AtomicUsize,
    loaded: AtomicUsize,
    fill: Mutex<FillStats>,
}

#[derive(Debug, Clone, Default)]
struct PersistedEntry {
    frequency: f64,
    y: Option<CMat>,
    ys: Option<CMat>,
}

impl DsaoCache {
    pub fn new() -> Self {
        DsaoCache {
            enabled: true,
            ..Default::default()
        }
    }

    /// Every request recomputes; only the counters are kept.
    pub fn disabled() -> Self {
        DsaoCache::default()
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            computed: self.computed.load(Ordering::Relaxed),
            reused: self.reused.load(Ordering::Relaxed),
            loaded: self.loaded.load(Ordering::Relaxed),
        }
    }

    pub fn fill_stats(&self) -> FillStats {
        *self.fill.lock().expect("fill stats lock")
    }

    pub fn len(&self) -> usize {
        self.slots.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops computed entries (persisted blocks stay available).
    pub fn clear(&self) {
        self.slots.lock().expect("cache lock").clear();
    }

    fn compute(&self, key: &DsaoKey, background: &Material, frequency: f64, opts: &QuadratureOptions, name: &str) -> Result<Arc<DsaoBlocks>, OperatorError> {
        let hash = key.hash64();
        let persisted = self.persisted.lock().expect("persisted lock").get(&hash).cloned();
        if let Some(PersistedEntry {
            frequency: f,
            y: Some(y),
            ys: Some(ys),
        }) = persisted
        {
            let n = key.signature.vertices.len();
            if f.to_bits() == frequency.to_bits() && y.nrows() == n && ys.nrows() == n {
                self.loaded.fetch_add(1, Ordering::Relaxed);
                let y_hat = CMat::from_fn(n, n, |i, j| ys[(i, j)] + y[(i, j)]);
                return Ok(Arc::new(DsaoBlocks { y, y_hat, ys, hash }));
            }
        }
        let mesh = key
            .signature
            .canonical_mesh()
            .map_err(|e| OperatorError::Geometry(e.to_string()))?;
        let material = material_from_key(&key.signature.material);
        let (y, s1) = admittance_matrix(&mesh, &material, frequency, opts, name)?;
        let (y_hat, s2) = if material.key() == background.key() {
            (y.clone(), FillStats::default())
        } else {
            admittance_matrix(&mesh, background, frequency, opts, name)?
        };
        let n = mesh.len();
        let ys = CMat::from_fn(n, n, |i, j| y_hat[(i, j)] - y[(i, j)]);
        self.computed.fetch_add(1, Ordering::Relaxed);
        {
            let mut f = self.fill.lock().expect("fill stats lock");
            *f += s1;
            *f += s2;
        }
        Ok(Arc::new(DsaoBlocks { y, y_hat, ys, hash }))
    }

    /// Writes every computed block pair `(Y_s, Y)` as little-endian binary.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), OperatorError> {
        let slots = self.slots.lock().expect("cache lock");
        let mut entries: Vec<(u64, u64, Arc<DsaoBlocks>)> = slots
            .iter()
            .filter_map(|(k, slot)| match slot.get() {
                Some(Ok(b)) => Some((b.hash, k.frequency, b.clone())),
                _ => None,
            })
            .collect();
        entries.sort_by_key(|e| e.0);
        let mut buf = Vec::new();
        buf.extend_from_slice(DUMP_MAGIC);
        buf.extend_from_slice(&DUMP_VERSION.to_le_bytes());
        buf.extend_from_slice(&((2 * entries.len()) as u64).to_le_bytes());
        for (hash, freq_bits, blocks) in &entries {
            for (role, m) in [(OperatorRole::Ys, &blocks.ys), (OperatorRole::Y, &blocks.y)] {
                write_block(&mut buf, role, m, f64::from_bits(*freq_bits), *hash);
            }
        }
        let io = |e: std::io::Error| OperatorError::CacheFile(e.to_string());
        let mut file = std::fs::File::create(path).map_err(io)?;
        file.write_all(&buf).map_err(io)?;
        Ok(())
    }

    /// Makes blocks from a previous [`save`](Self::save) available; they are
    /// used when a request's key hash and frequency match.
    pub fn load(&self, path: impl AsRef<Path>) -> Result<usize, OperatorError> {
        let io = |e: std::io::Error| OperatorError::CacheFile(e.to_string());
        let mut bytes = Vec::new();
        std::fs::File::open(path).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
        let blocks = read_blocks(&bytes)?;
        let mut persisted = self.persisted.lock().expect("persisted lock");
        let count = blocks.len();
        for b in blocks {
            let e = persisted.entry(b.hash).or_default();
            e.frequency = b.frequency;
            match b.role {
                OperatorRole::Ys => e.ys = Some(b.matrix),
                OperatorRole::Y => e.y = Some(b.matrix),
                _ => {}
            }
        }
        Ok(count)
    }
}

fn material_from_key(key: &MaterialKey) -> Material {
    let bytes = key.to_bytes();
    let word = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8 bytes"));
    if word(3) == 1 {
        return Material::pec();
    }
    Material {
        eps_r: f64::from_bits(word(0)),
        mu_r: f64::from_bits(word(1)),
        sigma: f64::from_bits(word(2)),
        is_pec: false,
    }
}

/// One block of the binary dump.
#[derive(Debug, Clone)]
pub struct DumpBlock {
    pub role: OperatorRole,
    pub frequency: f64,
    pub hash: u64,
    pub matrix: CMat,
}

fn write_block(buf: &mut Vec<u8>, role: OperatorRole, m: &CMat, frequency: f64, hash: u64) {
    buf.push(role.tag());
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    buf.extend_from_slice(&frequency.to_le_bytes());
    buf.extend_from_slice(&hash.to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].re.to_le_bytes());
            buf.extend_from_slice(&m[(i, j)].im.to_le_bytes());
        }
    }
}

/// Parses a DSAO dump.
pub fn read_blocks(bytes: &[u8]) -> Result<Vec<DumpBlock>, OperatorError> {
    let bad = |what: &str| OperatorError::CacheFile(format!("corrupt dump: {what}"));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], OperatorError> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    if take(8)? != DUMP_MAGIC {
        return Err(bad("magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != DUMP_VERSION {
        return Err(bad("version"));
    }
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().expect("8 bytes"));
    let count = u64_at(take(8)?);
    let mut out = Vec::new();
    for _ in 0..count {
        let role = OperatorRole::from_tag(take(1)?[0]).ok_or_else(|| bad("role"))?;
        let rows = u64_at(take(8)?) as usize;
        let cols = u64_at(take(8)?) as usize;
        let frequency = f64::from_bits(u64_at(take(8)?));
        let hash = u64_at(take(8)?);
        let data = take(rows.checked_mul(cols).and_then(|n| n.checked_mul(16)).ok_or_else(|| bad("size"))?)?;
        let f = |k: usize| f64::from_le_bytes(data[8 * k..8 * k + 8].try_into().expect("8 bytes"));
        let matrix = CMat::from_fn(rows, cols, |i, j| {
            let k = 2 * (i * cols + j);
            Complex64::new(f(k), f(k + 1))
        });
        out.push(DumpBlock {
            role,
            frequency,
            hash,
            matrix,
        });
    }
    Ok(out)
}

/// `Y_s = Y_hat - Y` for a penetrable region, served from `cache`.
pub fn dsao(
    region: &Region,
    background: &Material,
    frequency: f64,
    cache: &DsaoCache,
    opts: &QuadratureOptions,
) -> Result<RegionDsao, OperatorError> {
    if region.material.is_pec {
        return Err(OperatorError::PecRegion(region.name.clone()));
    }
    let (signature, offset) = canonical_form(region);
    let key = DsaoKey {
        signature,
        background: background.key(),
        frequency: frequency.to_bits(),
        quadrature: (
            opts.order,
            opts.near_factor.to_bits(),
            opts.tolerance.to_bits(),
            opts.max_depth,
        ),
    };
    if !cache.enabled {
        let blocks = cache.compute(&key, background, frequency, opts, &region.name)?;
        return Ok(RegionDsao { blocks, offset });
    }
    let slot = {
        let mut slots = cache.slots.lock().expect("cache lock");
        slots.entry(key.clone()).or_default().clone()
    };
    let mut ran = false;
    let result = slot.get_or_init(|| {
        ran = true;
        cache.compute(&key, background, frequency, opts, &region.name)
    });
    if !ran {
        cache.reused.fetch_add(1, Ordering::Relaxed);
    }
    let blocks = result.clone()?;
    Ok(RegionDsao { blocks, offset })
}
