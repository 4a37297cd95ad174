//! Near fields, far-field echo width, error metrics and the optical-theorem
//! energy check.

use crate::geometry::{Point2, Scene};
use crate::kernels::{point_segment_potentials, KernelError, QuadratureOptions};
use crate::parallel;
use crate::solver::{Layout, SolveResult};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Points closer than this to a segment are classified on-boundary.
pub const BOUNDARY_BAND: f64 = 1e-9;
/// Angles used to integrate the echo width in the optical-theorem check.
pub const OPTICAL_THEOREM_ANGLES: usize = 720;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PostprocError {
    #[error("reference is identically zero; metric undefined")]
    UndefinedMetric,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("point sets differ at index {0}")]
    PointMismatch(usize),
    #[error("optical theorem needs a lossless scene")]
    LossyScene,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointTag {
    Exterior,
    Interior(usize),
    OnBoundary(usize),
}

impl std::fmt::Display for PointTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PointTag::Exterior => write!(f, "exterior"),
            PointTag::Interior(i) => write!(f, "interior:{i}"),
            PointTag::OnBoundary(i) => write!(f, "boundary:{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub points: Vec<Point2>,
    /// Total `E_z`, V/m.
    pub values: Vec<Complex64>,
    pub tags: Vec<PointTag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldPattern {
    pub angles_deg: Vec<f64>,
    /// Echo width in meters.
    pub sigma: Vec<f64>,
}

impl FarFieldPattern {
    /// `10 log10(sigma / 1 m)`.
    pub fn sigma_db(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| 10.0 * s.log10()).collect()
    }
}

/// Classifies `p` against every region of the scene.
pub fn classify(scene: &Scene, p: Point2) -> (PointTag, Option<usize>) {
    for (i, r) in scene.regions.iter().enumerate() {
        let (seg, d) = r.mesh.nearest_segment(p);
        if d <= BOUNDARY_BAND {
            return (PointTag::OnBoundary(i), Some(seg));
        }
    }
    match scene.regions.iter().position(|r| r.mesh.contains(p)) {
        Some(i) => (PointTag::Interior(i), None),
        None => (PointTag::Exterior, None),
    }
}

fn segment_value(layout: &Layout, values: &[Complex64], region: usize, seg: usize) -> Complex64 {
    match layout.block_of(region) {
        Some(b) if !b.pec => values[b.local + seg],
        _ => Complex64::new(0.0, 0.0),
    }
}

fn exterior_field(scene: &Scene, result: &SolveResult, p: Point2, opts: &QuadratureOptions) -> Result<Complex64, PostprocError> {
    let zero = Complex64::new(0.0, 0.0);
    let k0 = scene.k0();
    let jwmu0 = Complex64::new(0.0, scene.omega() * scene.background.permeability());
    let mut sum = scene.excitation.field(k0, p);
    for b in &result.layout.blocks {
        let currents = result.region_current(b.region);
        for (n, s) in scene.regions[b.region].mesh.segments.iter().enumerate() {
            if currents[n] == zero {
                continue;
            }
            let (g, _) = point_segment_potentials(k0, p, s, opts)?;
            sum -= jwmu0 * currents[n] * g;
        }
    }
    Ok(sum)
}

/// Total `E_z` at one point.
pub fn field_at(scene: &Scene, result: &SolveResult, p: Point2, opts: &QuadratureOptions) -> Result<(Complex64, PointTag), PostprocError> {
    let zero = Complex64::new(0.0, 0.0);
    let (tag, seg) = classify(scene, p);
    let value = match tag {
        PointTag::OnBoundary(i) => segment_value(&result.layout, &result.e, i, seg.expect("boundary segment")),
        PointTag::Interior(i) if scene.regions[i].is_pec() => zero,
        // a region of background material is physically absent
        PointTag::Interior(i) if scene.regions[i].material.key() == scene.background.key() => {
            exterior_field(scene, result, p, opts)?
        }
        PointTag::Interior(i) => {
            let region = &scene.regions[i];
            let k = region.material.wavenumber(scene.frequency).expect("penetrable region");
            let jwmu = Complex64::new(0.0, scene.omega() * region.material.permeability());
            let e = result.region_e(i);
            let h = result.region_h(i);
            let mut sum = zero;
            for (n, s) in region.mesh.segments.iter().enumerate() {
                let (g, dg) = point_segment_potentials(k, p, s, opts)?;
                sum += e[n] * dg - jwmu * h[n] * g;
            }
            sum
        }
        PointTag::Exterior => exterior_field(scene, result, p, opts)?,
    };
    Ok((value, tag))
}

pub fn near_field(
    scene: &Scene,
    result: &SolveResult,
    points: &[Point2],
    opts: &QuadratureOptions,
) -> Result<FieldGrid, PostprocError> {
    let evaluated = parallel::map_indices(points.len(), |i| field_at(scene, result, points[i], opts));
    let mut values = Vec::with_capacity(points.len());
    let mut tags = Vec::with_capacity(points.len());
    for v in evaluated {
        let (value, tag) = v?;
        values.push(value);
        tags.push(tag);
    }
    Ok(FieldGrid {
        points: points.to_vec(),
        values,
        tags,
    })
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Far-field amplitude `F(phi)` with `E_s ~ F e^{-jk0 rho} / sqrt(rho)`.
pub fn scattering_amplitude(scene: &Scene, result: &SolveResult, phi: f64) -> Complex64 {
    let k0 = scene.k0().re;
    let mu0 = scene.background.permeability();
    let dir = Point2::new(phi.cos(), phi.sin());
    let mut sum = Complex64::new(0.0, 0.0);
    for b in &result.layout.blocks {
        let currents = result.region_current(b.region);
        let mesh = &scene.regions[b.region].mesh;
        for (n, s) in mesh.segments.iter().enumerate() {
            let len = mesh.lengths[n];
            let phase = k0 * dir.dot(mesh.midpoints[n]);
            let taper = sinc(0.5 * k0 * len * dir.dot(s.tangent()));
            sum += currents[n] * Complex64::from_polar(len * taper, phase);
        }
    }
    let pre = -(scene.omega() * mu0 / 4.0) * (2.0 / (PI * k0)).sqrt();
    sum * Complex64::from_polar(pre, PI / 4.0)
}

/// Echo width `2 pi |F|^2 / |E0|^2` at each angle (degrees).
pub fn far_field(scene: &Scene, result: &SolveResult, angles_deg: &[f64]) -> FarFieldPattern {
    let e0 = scene.excitation.amplitude;
    let sigma = parallel::map_indices(angles_deg.len(), |i| {
        2.0 * PI * scattering_amplitude(scene, result, angles_deg[i].to_radians()).norm_sqr() / (e0 * e0)
    });
    FarFieldPattern {
        angles_deg: angles_deg.to_vec(),
        sigma,
    }
}

/// `sqrt(sum (|c| - |r|)^2 / sum |r|^2)`.
pub fn uniform_error(calc: &[Complex64], reference: &[Complex64]) -> Result<f64, PostprocError> {
    if calc.len() != reference.len() {
        return Err(PostprocError::LengthMismatch(calc.len(), reference.len()));
    }
    let den: f64 = reference.iter().map(|r| r.norm_sqr()).sum();
    if den == 0.0 {
        return Err(PostprocError::UndefinedMetric);
    }
    let num: f64 = calc.iter().zip(reference).map(|(c, r)| (c.norm() - r.norm()).powi(2)).sum();
    Ok((num / den).sqrt())
}

/// Real-valued convenience form of [`uniform_error`].
pub fn uniform_error_real(calc: &[f64], reference: &[f64]) -> Result<f64, PostprocError> {
    let c: Vec<Complex64> = calc.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let r: Vec<Complex64> = reference.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    uniform_error(&c, &r)
}

/// `|E_cal(p) - E_ref(p)| / max_q |E_ref(q)|` per point.
pub fn relative_error_field(calc: &FieldGrid, reference: &FieldGrid) -> Result<Vec<f64>, PostprocError> {
    if calc.values.len() != reference.values.len() {
        return Err(PostprocError::LengthMismatch(calc.values.len(), reference.values.len()));
    }
    if let Some(i) = calc
        .points
        .iter()
        .zip(&reference.points)
        .position(|(a, b)| a.distance(*b) > 1e-12)
    {
        return Err(PostprocError::PointMismatch(i));
    }
    let peak = reference.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(PostprocError::UndefinedMetric);
    }
    Ok(calc
        .values
        .iter()
        .zip(&reference.values)
        .map(|(c, r)| (c - r).norm() / peak)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalTheorem {
    /// `(1/2pi) int sigma dphi`, meters.
    pub scattering: f64,
    /// `-(4/k0) Re S(phi_inc)`, meters.
    pub extinction: f64,
    pub gap: f64,
}

pub fn optical_theorem_check(scene: &Scene, result: &SolveResult) -> Result<OpticalTheorem, PostprocError> {
    if !scene.is_lossless() {
        return Err(PostprocError::LossyScene);
    }
    let k0 = scene.k0().re;
    let e0 = scene.excitation.amplitude;
    let n = OPTICAL_THEOREM_ANGLES;
    let angles: Vec<f64> = (0..n).map(|i| 360.0 * i as f64 / n as f64).collect();
    let pattern = far_field(scene, result, &angles);
    // trapezoid on a periodic grid
    let scattering = pattern.sigma.iter().sum::<f64>() / n as f64;
    let forward = scattering_amplitude(scene, result, scene.excitation.angle_deg.to_radians());
    let s = forward * Complex64::from_polar((PI * k0 / 2.0).sqrt() / e0, -PI / 4.0);
    let extinction = -4.0 / k0 * s.re;
    let scale = scattering.abs().max(extinction.abs());
    let gap = if scale < 1e-300 { 0.0 } else { (extinction - scattering).abs() / scale };
    Ok(OpticalTheorem {
        scattering,
        extinction,
        gap,
    })
}

/// Uniform `nx` by `ny` grid spanning both corner coordinates.
pub fn grid_points(x: (f64, f64, usize), y: (f64, f64, usize)) -> Vec<Point2> {
    let axis = |(a, b, n): (f64, f64, usize)| -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
        }
    };
    let xs = axis(x);
    let ys = axis(y);
    ys.iter().flat_map(|&yv| xs.iter().map(move |&xv| Point2::new(xv, yv))).collect()
}
