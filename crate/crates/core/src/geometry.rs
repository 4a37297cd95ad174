//! Scene description, materials, boundary meshing and congruence signatures.
//!
//! Time convention is `exp(+jwt)`. Lossy permittivity is therefore
//! `eps0 (eps_r - j sigma / (eps0 w))` and every wavenumber has `Im(k) <= 0`.
//! Boundaries are closed counter-clockwise polylines whose inward normal is
//! the left-hand normal of each segment.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const MU0: f64 = 4.0e-7 * PI;
pub const EPS0: f64 = 1.0 / (MU0 * SPEED_OF_LIGHT * SPEED_OF_LIGHT);

/// Densities below this are rejected outright.
pub const MIN_SEGMENTS_PER_WAVELENGTH: f64 = 5.0;
/// Densities below this are accepted with a warning.
pub const RECOMMENDED_SEGMENTS_PER_WAVELENGTH: f64 = 10.0;

const CLOSURE_TOLERANCE: f64 = 1e-12;
const SIGNATURE_QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("polygon is self-intersecting (edges {0} and {1} cross)")]
    SelfIntersecting(usize, usize),
    #[error("degenerate shape: {0}")]
    Degenerate(String),
    #[error("mesh density {0} segments/wavelength is below the minimum of 5")]
    DensityTooLow(f64),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("PEC material has no interior wavenumber")]
    PecWavenumber,
    #[error("frequency must be positive and finite, got {0}")]
    InvalidFrequency(f64),
}

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("cannot read scene file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scene: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scene has no regions")]
    NoRegions,
    #[error("background medium must be penetrable")]
    PecBackground,
    #[error("unsupported excitation type '{0}'")]
    UnsupportedExcitation(String),
    #[error("region '{region}': {source}")]
    Region {
        region: String,
        #[source]
        source: GeometryError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2 { x: v[0], y: v[1] }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Rotated by +90 degrees.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Constitutive parameters of a homogeneous region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub eps_r: f64,
    pub mu_r: f64,
    /// Conductivity in S/m.
    pub sigma: f64,
    pub is_pec: bool,
}

/// Bit-exact identity of a material, usable as a hash key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MaterialKey([u64; 4]);

impl MaterialKey {
    pub fn to_bytes(self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (chunk, word) in out.chunks_exact_mut(8).zip(self.0) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        out
    }
}

impl Material {
    pub const fn vacuum() -> Self {
        Material {
            eps_r: 1.0,
            mu_r: 1.0,
            sigma: 0.0,
            is_pec: false,
        }
    }

    pub const fn dielectric(eps_r: f64) -> Self {
        Material {
            eps_r,
            mu_r: 1.0,
            sigma: 0.0,
            is_pec: false,
        }
    }

    pub const fn magnetodielectric(eps_r: f64, mu_r: f64) -> Self {
        Material {
            eps_r,
            mu_r,
            sigma: 0.0,
            is_pec: false,
        }
    }

    pub const fn lossy(eps_r: f64, sigma: f64) -> Self {
        Material {
            eps_r,
            mu_r: 1.0,
            sigma,
            is_pec: false,
        }
    }

    pub const fn pec() -> Self {
        Material {
            eps_r: 1.0,
            mu_r: 1.0,
            sigma: 0.0,
            is_pec: true,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.is_pec {
            return Ok(());
        }
        if !(self.eps_r.is_finite() && self.eps_r > 0.0) {
            return Err(GeometryError::InvalidMaterial(format!(
                "eps_r must be positive, got {}",
                self.eps_r
            )));
        }
        if !(self.mu_r.is_finite() && self.mu_r > 0.0) {
            return Err(GeometryError::InvalidMaterial(format!(
                "mu_r must be positive, got {}",
                self.mu_r
            )));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(GeometryError::InvalidMaterial(format!(
                "sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn is_lossless(&self) -> bool {
        self.is_pec || self.sigma == 0.0
    }

    pub fn permittivity(&self, omega: f64) -> Complex64 {
        EPS0 * Complex64::new(self.eps_r, -self.sigma / (EPS0 * omega))
    }

    pub fn permeability(&self) -> f64 {
        MU0 * self.mu_r
    }

    /// `w sqrt(mu eps)` on the branch with `Im(k) <= 0`.
    pub fn wavenumber(&self, frequency: f64) -> Result<Complex64, GeometryError> {
        if self.is_pec {
            return Err(GeometryError::PecWavenumber);
        }
        check_frequency(frequency)?;
        let omega = 2.0 * PI * frequency;
        let k = omega * (self.permeability() * self.permittivity(omega)).sqrt();
        // principal sqrt of a lower-half-plane number already has Im <= 0
        // and Re >= 0; normalise the sign in case of a -0.0 imaginary part.
        Ok(if k.re < 0.0 { -k } else { k })
    }

    /// Wavelength used to size mesh segments, `2 pi / Re(k)`.
    pub fn wavelength(&self, frequency: f64) -> Result<f64, GeometryError> {
        Ok(2.0 * PI / self.wavenumber(frequency)?.re)
    }

    pub fn key(&self) -> MaterialKey {
        if self.is_pec {
            return MaterialKey([0, 0, 0, 1]);
        }
        MaterialKey([
            self.eps_r.to_bits(),
            self.mu_r.to_bits(),
            self.sigma.to_bits(),
            0,
        ])
    }
}

/// Wavenumber of a penetrable material at `frequency` (Hz).
pub fn wavenumber(material: &Material, frequency: f64) -> Result<Complex64, GeometryError> {
    material.wavenumber(frequency)
}

fn check_frequency(frequency: f64) -> Result<(), GeometryError> {
    if frequency.is_finite() && frequency > 0.0 {
        Ok(())
    } else {
        Err(GeometryError::InvalidFrequency(frequency))
    }
}

/// A straight boundary element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: Point2,
    pub end: Point2,
}

impl Segment {
    pub fn new(start: Point2, end: Point2) -> Self {
        Segment { start, end }
    }

    pub fn length(&self) -> f64 {
        self.start.distance(self.end)
    }

    pub fn midpoint(&self) -> Point2 {
        (self.start + self.end) * 0.5
    }

    pub fn tangent(&self) -> Point2 {
        let d = self.end - self.start;
        d * (1.0 / d.norm())
    }

    /// Left-hand unit normal; points into the region for counter-clockwise
    /// boundaries.
    pub fn left_normal(&self) -> Point2 {
        self.tangent().perp()
    }

    /// Point at parameter `t` in `[0, 1]`.
    pub fn point_at(&self, t: f64) -> Point2 {
        self.start + (self.end - self.start) * t
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        let d = self.end - self.start;
        let len2 = d.dot(d);
        let t = ((p - self.start).dot(d) / len2).clamp(0.0, 1.0);
        p.distance(self.start + d * t)
    }
}

/// Closed, counter-clockwise, segmented boundary with per-segment data.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMesh {
    pub segments: Vec<Segment>,
    pub midpoints: Vec<Point2>,
    pub lengths: Vec<f64>,
    pub inward_normals: Vec<Point2>,
}

impl BoundaryMesh {
    /// Builds a mesh from a closed chain of segments. The chain must already
    /// be counter-clockwise.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self, GeometryError> {
        if segments.len() < 3 {
            return Err(GeometryError::Degenerate(
                "a closed boundary needs at least three segments".into(),
            ));
        }
        for (i, seg) in segments.iter().enumerate() {
            if seg.length() <= CLOSURE_TOLERANCE {
                return Err(GeometryError::Degenerate(format!("segment {i} has zero length")));
            }
            let next = &segments[(i + 1) % segments.len()];
            if seg.end.distance(next.start) > CLOSURE_TOLERANCE {
                return Err(GeometryError::Degenerate(format!(
                    "boundary is not closed after segment {i}"
                )));
            }
        }
        let midpoints = segments.iter().map(Segment::midpoint).collect();
        let lengths = segments.iter().map(Segment::length).collect();
        let inward_normals = segments.iter().map(Segment::left_normal).collect();
        Ok(BoundaryMesh {
            segments,
            midpoints,
            lengths,
            inward_normals,
        })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn perimeter(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Segment start points, in boundary order.
    pub fn vertices(&self) -> Vec<Point2> {
        self.segments.iter().map(|s| s.start).collect()
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * self
            .segments
            .iter()
            .map(|s| s.start.cross(s.end))
            .sum::<f64>()
    }

    /// Even–odd point-in-polygon test.
    pub fn contains(&self, p: Point2) -> bool {
        let mut inside = false;
        for s in &self.segments {
            let (a, b) = (s.start, s.end);
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Index of the nearest segment and the distance to it.
    pub fn nearest_segment(&self, p: Point2) -> (usize, f64) {
        self.segments
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.distance_to(p)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    }

    /// Largest segment length.
    pub fn max_length(&self) -> f64 {
        self.lengths.iter().cloned().fold(0.0, f64::max)
    }
}

/// Parametric region outline as written in scene files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Polygon {
        vertices: Vec<Point2>,
    },
    Circle {
        center: Point2,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_segments: Option<usize>,
    },
    Rect {
        center: Point2,
        width: f64,
        height: f64,
    },
    /// Ring sector between two radii, angles in degrees counter-clockwise.
    AnnularSector {
        center: Point2,
        inner_radius: f64,
        outer_radius: f64,
        start_deg: f64,
        end_deg: f64,
    },
}

impl Shape {
    pub fn rect(center: Point2, width: f64, height: f64) -> Self {
        Shape::Rect {
            center,
            width,
            height,
        }
    }

    pub fn circle(center: Point2, radius: f64) -> Self {
        Shape::Circle {
            center,
            radius,
            n_segments: None,
        }
    }

    pub fn polygon(vertices: Vec<Point2>) -> Self {
        Shape::Polygon { vertices }
    }

    pub fn annular_sector(center: Point2, inner_radius: f64, outer_radius: f64, start_deg: f64, end_deg: f64) -> Self {
        Shape::AnnularSector {
            center,
            inner_radius,
            outer_radius,
            start_deg,
            end_deg,
        }
    }
}

/// Vertices of a ring sector with arcs inscribed at no more than `max_length`
/// per chord; radial edges are left for [`mesh_polygon`] to split.
fn annular_sector_vertices(
    center: Point2,
    r_in: f64,
    r_out: f64,
    start_deg: f64,
    end_deg: f64,
    max_length: f64,
) -> Result<Vec<Point2>, GeometryError> {
    let sweep = (end_deg - start_deg).to_radians();
    if !(r_in > 0.0 && r_out > r_in && sweep > 0.0 && sweep < 2.0 * PI) {
        return Err(GeometryError::Degenerate(format!(
            "annular sector r {r_in}..{r_out}, {start_deg}..{end_deg} deg"
        )));
    }
    let a0 = start_deg.to_radians();
    let arc = |r: f64| {
        let chord = |n: usize| 2.0 * r * (0.5 * sweep / n as f64).sin();
        let mut n = ((r * sweep / max_length) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        while chord(n) > max_length {
            n += 1;
        }
        (0..=n)
            .map(|i| {
                let t = a0 + sweep * i as f64 / n as f64;
                center + Point2::new(t.cos(), t.sin()) * r
            })
            .collect::<Vec<_>>()
    };
    let mut vertices = arc(r_out);
    vertices.extend(arc(r_in).into_iter().rev());
    Ok(vertices)
}

fn polygon_signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    0.5 * (0..n)
        .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
        .sum::<f64>()
}

fn segments_cross(a0: Point2, a1: Point2, b0: Point2, b1: Point2) -> bool {
    let d1 = (a1 - a0).cross(b0 - a0);
    let d2 = (a1 - a0).cross(b1 - a0);
    let d3 = (b1 - b0).cross(a0 - b0);
    let d4 = (b1 - b0).cross(a1 - b0);
    let scale = (a1 - a0).norm() * (b1 - b0).norm();
    let eps = 1e-14 * scale;
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
    {
        return true;
    }
    // collinear overlap or touching
    let on_segment = |p: Point2, q0: Point2, q1: Point2, d: f64| {
        d.abs() <= eps
            && p.x >= q0.x.min(q1.x) - eps
            && p.x <= q0.x.max(q1.x) + eps
            && p.y >= q0.y.min(q1.y) - eps
            && p.y <= q0.y.max(q1.y) + eps
    };
    on_segment(b0, a0, a1, d1)
        || on_segment(b1, a0, a1, d2)
        || on_segment(a0, b0, b1, d3)
        || on_segment(a1, b0, b1, d4)
}

fn check_simple(vertices: &[Point2]) -> Result<(), GeometryError> {
    let n = vertices.len();
    for i in 0..n {
        let (a0, a1) = (vertices[i], vertices[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (b0, b1) = (vertices[j], vertices[(j + 1) % n]);
            if segments_cross(a0, a1, b0, b1) {
                return Err(GeometryError::SelfIntersecting(i, j));
            }
        }
    }
    Ok(())
}

/// Splits every polygon edge so no segment exceeds `max_length`.
/// Vertices are reoriented counter-clockwise.
pub fn mesh_polygon(vertices: &[Point2], max_length: f64) -> Result<BoundaryMesh, GeometryError> {
    let mut verts: Vec<Point2> = vertices.to_vec();
    if verts.len() > 1 && verts[0].distance(verts[verts.len() - 1]) <= CLOSURE_TOLERANCE {
        verts.pop();
    }
    if verts.len() < 3 {
        return Err(GeometryError::Degenerate("polygon needs at least three vertices".into()));
    }
    let area = polygon_signed_area(&verts);
    let perimeter: f64 = (0..verts.len())
        .map(|i| verts[i].distance(verts[(i + 1) % verts.len()]))
        .sum();
    if area.abs() <= 1e-12 * perimeter * perimeter {
        return Err(GeometryError::Degenerate("polygon has (near) zero area".into()));
    }
    check_simple(&verts)?;
    if area < 0.0 {
        verts.reverse();
    }
    let n = verts.len();
    let mut segments = Vec::new();
    for i in 0..n {
        let (a, b) = (verts[i], verts[(i + 1) % n]);
        let edge = a.distance(b);
        let count = ((edge / max_length) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        for s in 0..count {
            let t0 = s as f64 / count as f64;
            let t1 = (s + 1) as f64 / count as f64;
            let start = a + (b - a) * t0;
            let end = if s + 1 == count { b } else { a + (b - a) * t1 };
            segments.push(Segment::new(start, end));
        }
    }
    BoundaryMesh::from_segments(segments)
}

/// Regular inscribed polygon of `n` segments starting at angle zero.
pub fn mesh_circle(center: Point2, radius: f64, n: usize) -> Result<BoundaryMesh, GeometryError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(GeometryError::Degenerate(format!("circle radius {radius}")));
    }
    if n < 3 {
        return Err(GeometryError::Degenerate("circle needs at least three segments".into()));
    }
    let vertex = |i: usize| {
        let theta = 2.0 * PI * (i % n) as f64 / n as f64;
        center + Point2::new(theta.cos(), theta.sin()) * radius
    };
    let segments = (0..n).map(|i| Segment::new(vertex(i), vertex(i + 1))).collect();
    BoundaryMesh::from_segments(segments)
}

/// Discretizes `shape` so that no segment exceeds `lambda / density`, where
/// `lambda` is the wavelength in `medium` (the region's own material, or the
/// background for PEC regions).
pub fn mesh_boundary(
    shape: &Shape,
    density: f64,
    medium: &Material,
    frequency: f64,
) -> Result<BoundaryMesh, GeometryError> {
    if !(density.is_finite() && density >= MIN_SEGMENTS_PER_WAVELENGTH) {
        return Err(GeometryError::DensityTooLow(density));
    }
    let max_length = medium.wavelength(frequency)? / density;
    match shape {
        Shape::Polygon { vertices } => mesh_polygon(vertices, max_length),
        Shape::Rect {
            center,
            width,
            height,
        } => {
            if !(*width > 0.0 && *height > 0.0) {
                return Err(GeometryError::Degenerate(format!("rect {width} x {height}")));
            }
            let (hw, hh) = (width * 0.5, height * 0.5);
            let vertices = [
                *center + Point2::new(-hw, -hh),
                *center + Point2::new(hw, -hh),
                *center + Point2::new(hw, hh),
                *center + Point2::new(-hw, hh),
            ];
            mesh_polygon(&vertices, max_length)
        }
        Shape::Circle {
            center,
            radius,
            n_segments,
        } => {
            let n = match n_segments {
                Some(n) => *n,
                None => ((2.0 * PI * radius / max_length) * (1.0 - 1e-12)).ceil().max(3.0) as usize,
            };
            mesh_circle(*center, *radius, n)
        }
        Shape::AnnularSector {
            center,
            inner_radius,
            outer_radius,
            start_deg,
            end_deg,
        } => {
            let vertices =
                annular_sector_vertices(*center, *inner_radius, *outer_radius, *start_deg, *end_deg, max_length)?;
            mesh_polygon(&vertices, max_length)
        }
    }
}

/// A meshed homogeneous region.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    pub mesh: BoundaryMesh,
    pub material: Material,
    pub mesh_density: f64,
}

impl Region {
    pub fn is_pec(&self) -> bool {
        self.material.is_pec
    }
}

/// Plane-wave excitation `E0 exp(-j k0 d.r)`, phase referenced at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWave {
    /// Propagation direction, degrees counter-clockwise from +x.
    pub angle_deg: f64,
    /// `E0` in V/m.
    pub amplitude: f64,
}

impl PlaneWave {
    pub fn direction(&self) -> Point2 {
        let a = self.angle_deg.to_radians();
        Point2::new(a.cos(), a.sin())
    }

    pub fn field(&self, k0: Complex64, r: Point2) -> Complex64 {
        let phase = self.direction().dot(r);
        self.amplitude * (-Complex64::i() * k0 * phase).exp()
    }
}

/// A fully meshed scattering problem at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub background: Material,
    pub frequency: f64,
    pub regions: Vec<Region>,
    pub excitation: PlaneWave,
}

impl Scene {
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency
    }

    pub fn k0(&self) -> Complex64 {
        self.background
            .wavenumber(self.frequency)
            .expect("scene background is penetrable")
    }

    /// The same meshes driven at another frequency.
    pub fn at_frequency(&self, frequency: f64) -> Scene {
        Scene {
            frequency,
            ..self.clone()
        }
    }

    pub fn penetrable_unknowns(&self) -> usize {
        self.regions.iter().filter(|r| !r.is_pec()).map(|r| r.mesh.len()).sum()
    }

    pub fn pec_unknowns(&self) -> usize {
        self.regions.iter().filter(|r| r.is_pec()).map(|r| r.mesh.len()).sum()
    }

    pub fn is_lossless(&self) -> bool {
        self.background.is_lossless() && self.regions.iter().all(|r| r.material.is_lossless())
    }
}

/// Translation-invariant identity of a meshed region.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CongruenceSignature {
    pub vertices: Vec<(i64, i64)>,
    pub material: MaterialKey,
}

impl CongruenceSignature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 16 * self.vertices.len());
        out.extend_from_slice(&self.material.to_bytes());
        for (x, y) in &self.vertices {
            out.extend_from_slice(&x.to_le_bytes());
            out.extend_from_slice(&y.to_le_bytes());
        }
        out
    }
}

/// Mesh vertices relative to their mean, quantized to 1 nm and rotated so the
/// list starts at its lexicographically smallest entry.
pub fn congruence_signature(region: &Region) -> CongruenceSignature {
    canonical_form(region).0
}

/// The signature plus the rotation applied: canonical vertex `c` is the
/// region's vertex `(c + offset) % n`.
pub fn canonical_form(region: &Region) -> (CongruenceSignature, usize) {
    let vertices = region.mesh.vertices();
    let n = vertices.len() as f64;
    let centroid = vertices.iter().fold(Point2::default(), |acc, &v| acc + v) * (1.0 / n);
    let mut quantized: Vec<(i64, i64)> = vertices
        .iter()
        .map(|&v| {
            let d = v - centroid;
            (
                (d.x / SIGNATURE_QUANTUM).round() as i64,
                (d.y / SIGNATURE_QUANTUM).round() as i64,
            )
        })
        .collect();
    let offset = quantized
        .iter()
        .enumerate()
        .min_by_key(|(_, v)| **v)
        .map(|(i, _)| i)
        .unwrap_or(0);
    quantized.rotate_left(offset);
    (
        CongruenceSignature {
            vertices: quantized,
            material: region.material.key(),
        },
        offset,
    )
}

impl CongruenceSignature {
    /// Boundary rebuilt from the quantized vertices. Every region sharing this
    /// signature maps to exactly this mesh, so operators built on it are
    /// bit-identical across congruent copies.
    pub fn canonical_mesh(&self) -> Result<BoundaryMesh, GeometryError> {
        let points: Vec<Point2> = self
            .vertices
            .iter()
            .map(|&(x, y)| Point2::new(x as f64 * SIGNATURE_QUANTUM, y as f64 * SIGNATURE_QUANTUM))
            .collect();
        let n = points.len();
        let segments = (0..n).map(|i| Segment::new(points[i], points[(i + 1) % n])).collect();
        BoundaryMesh::from_segments(segments)
    }
}

// ---------------------------------------------------------------------------
// Scene file (JSON)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub eps_r: f64,
    #[serde(default = "one")]
    pub mu_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    #[serde(rename = "type")]
    pub kind: String,
    pub angle_deg: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    #[serde(default = "one")]
    pub eps_r: f64,
    #[serde(default = "one")]
    pub mu_r: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub pec: bool,
}

impl From<MaterialSpec> for Material {
    fn from(m: MaterialSpec) -> Self {
        Material {
            eps_r: m.eps_r,
            mu_r: m.mu_r,
            sigma: m.sigma,
            is_pec: m.pec,
        }
    }
}

impl From<Material> for MaterialSpec {
    fn from(m: Material) -> Self {
        MaterialSpec {
            eps_r: m.eps_r,
            mu_r: m.mu_r,
            sigma: m.sigma,
            pec: m.is_pec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub segments_per_wavelength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    pub material: MaterialSpec,
    pub shape: Shape,
    pub mesh: MeshSpec,
}

/// Un-meshed scene as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub frequency_hz: f64,
    pub background: BackgroundSpec,
    pub excitation: ExcitationSpec,
    pub regions: Vec<RegionSpec>,
}

fn one() -> f64 {
    1.0
}

impl SceneSpec {
    pub fn new(frequency_hz: f64, background: Material, angle_deg: f64, amplitude: f64) -> Self {
        SceneSpec {
            frequency_hz,
            background: BackgroundSpec {
                eps_r: background.eps_r,
                mu_r: background.mu_r,
            },
            excitation: ExcitationSpec {
                kind: "plane_wave".into(),
                angle_deg,
                amplitude,
            },
            regions: Vec::new(),
        }
    }

    pub fn with_region(
        mut self,
        name: impl Into<String>,
        material: Material,
        shape: Shape,
        segments_per_wavelength: f64,
    ) -> Self {
        self.regions.push(RegionSpec {
            name: name.into(),
            material: material.into(),
            shape,
            mesh: MeshSpec {
                segments_per_wavelength,
            },
        });
        self
    }

    pub fn from_json_str(text: &str) -> Result<Self, SceneError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene spec serializes")
    }

    pub fn background_material(&self) -> Material {
        Material::magnetodielectric(self.background.eps_r, self.background.mu_r)
    }

    /// Meshes the scene at its own frequency.
    pub fn build(&self) -> Result<Scene, SceneError> {
        self.build_at(self.frequency_hz)
    }

    /// Meshes the scene at `frequency`; densities are wavelength-relative so
    /// segment counts follow the frequency.
    pub fn build_at(&self, frequency: f64) -> Result<Scene, SceneError> {
        if self.regions.is_empty() {
            return Err(SceneError::NoRegions);
        }
        if self.excitation.kind != "plane_wave" {
            return Err(SceneError::UnsupportedExcitation(self.excitation.kind.clone()));
        }
        check_frequency(frequency)?;
        let background = self.background_material();
        background.validate()?;
        let mut regions = Vec::with_capacity(self.regions.len());
        for spec in &self.regions {
            let wrap = |source| SceneError::Region {
                region: spec.name.clone(),
                source,
            };
            let material: Material = spec.material.clone().into();
            material.validate().map_err(wrap)?;
            let density = spec.mesh.segments_per_wavelength;
            if density < RECOMMENDED_SEGMENTS_PER_WAVELENGTH {
                log::warn!(
                    "region '{}' meshed at {density} segments/wavelength (below 10)",
                    spec.name
                );
            }
            let medium = if material.is_pec { background } else { material };
            let mesh = mesh_boundary(&spec.shape, density, &medium, frequency).map_err(wrap)?;
            regions.push(Region {
                name: spec.name.clone(),
                mesh,
                material,
                mesh_density: density,
            });
        }
        Ok(Scene {
            background,
            frequency,
            regions,
            excitation: PlaneWave {
                angle_deg: self.excitation.angle_deg,
                amplitude: self.excitation.amplitude,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn unit_square_four_per_side() {
        let mesh = mesh_polygon(&unit_square(), 0.25).unwrap();
        assert_eq!(mesh.len(), 16);
        let centroid = Point2::new(0.5, 0.5);
        for i in 0..mesh.len() {
            assert!((mesh.lengths[i] - 0.25).abs() < 1e-15);
            let to_center = centroid - mesh.midpoints[i];
            assert!(to_center.dot(mesh.inward_normals[i]) > 0.0);
        }
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let mut verts = unit_square();
        verts.reverse();
        let mesh = mesh_polygon(&verts, 0.5).unwrap();
        assert!(mesh.signed_area() > 0.0);
        for (m, n) in mesh.midpoints.iter().zip(&mesh.inward_normals) {
            assert!(mesh.contains(*m + *n * 1e-6));
        }
    }

    #[test]
    fn inscribed_circle_perimeter() {
        let mesh = mesh_circle(Point2::default(), 0.5, 80).unwrap();
        let expected = 80.0 * 2.0 * 0.5 * (PI / 80.0).sin();
        assert!((mesh.perimeter() - expected).abs() < 1e-12);
        assert!((expected - 3.140_785).abs() < 1e-6);
    }

    #[test]
    fn coated_square_dimensions() {
        // outer side 1 m, inner side 0.5 m
        let outer = Shape::rect(Point2::default(), 1.0, 1.0);
        let inner = Shape::rect(Point2::default(), 0.5, 0.5);
        let m = Material::dielectric(4.0);
        let outer_mesh = mesh_boundary(&outer, 10.0, &m, 300e6).unwrap();
        let inner_mesh = mesh_boundary(&inner, 10.0, &m, 300e6).unwrap();
        assert!((outer_mesh.perimeter() - 4.0).abs() < 1e-12);
        assert!((inner_mesh.perimeter() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn segment_length_respects_density() {
        let m = Material::dielectric(4.0);
        let lambda = m.wavelength(300e6).unwrap();
        let mesh = mesh_boundary(&Shape::rect(Point2::default(), 1.0, 0.7), 12.0, &m, 300e6).unwrap();
        assert!(mesh.max_length() <= lambda / 12.0 * (1.0 + 1e-12));
    }

    #[test]
    fn self_intersecting_and_degenerate_polygons_are_rejected() {
        let bowtie = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(matches!(
            mesh_polygon(&bowtie, 0.1),
            Err(GeometryError::SelfIntersecting(_, _)) | Err(GeometryError::Degenerate(_))
        ));
        let flat = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(2.0, 0.0)];
        assert!(matches!(mesh_polygon(&flat, 0.1), Err(GeometryError::Degenerate(_))));
        let hourglass = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 2.0),
            Point2::new(2.0, 2.0),
        ];
        assert!(mesh_polygon(&hourglass, 0.1).is_err());
    }

    #[test]
    fn low_density_is_rejected() {
        let err = mesh_boundary(&Shape::rect(Point2::default(), 1.0, 1.0), 4.0, &Material::vacuum(), 3e8);
        assert_eq!(err, Err(GeometryError::DensityTooLow(4.0)));
    }

    #[test]
    fn vacuum_wavenumber_at_300_mhz() {
        let k = wavenumber(&Material::vacuum(), 3e8).unwrap();
        let expected = 2.0 * PI * 3e8 / SPEED_OF_LIGHT;
        assert!((k.re - expected).abs() < 1e-12);
        assert_eq!(k.im, 0.0);
        // 6.28319 is the round figure for c = 3e8; exact c is 0.07% slower
        assert!((expected - 6.28319).abs() / 6.28319 < 1e-3);
        let k4 = wavenumber(&Material::dielectric(4.0), 3e8).unwrap();
        assert!((k4.re - 2.0 * expected).abs() < 1e-12);
        assert!((k4.re - 12.56637).abs() / 12.56637 < 1e-3);
    }

    #[test]
    fn lossy_wavenumber_matches_direct_complex_arithmetic() {
        let f = 90e9;
        let w = 2.0 * PI * f;
        let k = wavenumber(&Material::lossy(9.0, 0.1), f).unwrap();
        // independent: k^2 = w^2 mu0 eps0 (9 - j 0.1/(eps0 w)), root with Im < 0
        let eps0 = 8.854_187_817_620_389e-12;
        let k2 = Complex64::new(w * w * MU0 * eps0 * 9.0, -w * w * MU0 * eps0 * 0.1 / (eps0 * w));
        let (r, theta) = k2.to_polar();
        let root = Complex64::from_polar(r.sqrt(), theta / 2.0);
        assert!(k.im < 0.0);
        assert!((k.im - root.im).abs() / root.im.abs() < 1e-9);
        assert!((k.re - root.re).abs() / root.re < 1e-12);
    }

    #[test]
    fn pec_has_no_wavenumber() {
        assert_eq!(wavenumber(&Material::pec(), 1e9), Err(GeometryError::PecWavenumber));
    }

    fn region_at(offset: Point2, width: f64, height: f64, material: Material) -> Region {
        let shape = Shape::rect(offset, width, height);
        Region {
            name: "u".into(),
            mesh: mesh_boundary(&shape, 10.0, &material, 90e9).unwrap(),
            material,
            mesh_density: 10.0,
        }
    }

    #[test]
    fn signatures_are_translation_invariant_only() {
        let m = Material::lossy(9.0, 0.1);
        let lambda = m.wavelength(90e9).unwrap();
        let (w, h) = (1.5 * lambda, 9.0 * lambda);
        let a = region_at(Point2::default(), w, h, m);
        let b = region_at(Point2::new(3.0 * lambda, 0.0), w, h, m);
        assert_eq!(congruence_signature(&a), congruence_signature(&b));

        let c = region_at(Point2::default(), w, h, Material::dielectric(9.0));
        assert_ne!(congruence_signature(&a), congruence_signature(&c));

        let rotated = region_at(Point2::default(), h, w, m);
        assert_ne!(congruence_signature(&a), congruence_signature(&rotated));
    }

    #[test]
    fn canonical_mesh_is_shared_by_translated_copies() {
        let m = Material::dielectric(3.0);
        let a = region_at(Point2::new(0.25, -0.5), 0.4, 0.3, m);
        let b = region_at(Point2::new(7.125, 2.0), 0.4, 0.3, m);
        let (sa, oa) = canonical_form(&a);
        let (sb, ob) = canonical_form(&b);
        assert_eq!(oa, ob);
        let ma = sa.canonical_mesh().unwrap();
        assert_eq!(ma, sb.canonical_mesh().unwrap());
        assert_eq!(ma.len(), a.mesh.len());
        for c in 0..ma.len() {
            let orig = a.mesh.lengths[(c + oa) % ma.len()];
            assert!((ma.lengths[c] - orig).abs() < 2e-9);
        }
    }

    #[test]
    fn meshing_is_deterministic() {
        let shape = Shape::circle(Point2::new(0.1, -0.2), 0.37);
        let m = Material::dielectric(2.5);
        let a = mesh_boundary(&shape, 17.0, &m, 4e8).unwrap();
        let b = mesh_boundary(&shape, 17.0, &m, 4e8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scene_json_round_trip_and_build() {
        let text = r#"{
            "frequency_hz": 3e8,
            "background": {"eps_r": 1.0, "mu_r": 1.0},
            "excitation": {"type": "plane_wave", "angle_deg": 0.0, "amplitude": 1.0},
            "regions": [
                {"name": "core", "material": {"eps_r": 4.0, "mu_r": 1.0, "sigma": 0.0, "pec": false},
                 "shape": {"circle": {"center": [0.0, 0.0], "radius": 0.3, "n_segments": 40}},
                 "mesh": {"segments_per_wavelength": 20}},
                {"name": "plate", "material": {"pec": true},
                 "shape": {"polygon": {"vertices": [[1,0],[2,0],[2,1]]}},
                 "mesh": {"segments_per_wavelength": 10}},
                {"name": "box", "material": {"eps_r": 2.0},
                 "shape": {"rect": {"center": [0, 2], "width": 0.5, "height": 0.25}},
                 "mesh": {"segments_per_wavelength": 10}}
            ]
        }"#;
        let spec = SceneSpec::from_json_str(text).unwrap();
        let again = SceneSpec::from_json_str(&spec.to_json_string()).unwrap();
        assert_eq!(spec, again);
        let scene = spec.build().unwrap();
        assert_eq!(scene.regions[0].mesh.len(), 40);
        assert!(scene.regions[1].is_pec());
        assert_eq!(scene.penetrable_unknowns(), 40 + scene.regions[2].mesh.len());
    }

    #[test]
    fn empty_scene_is_rejected() {
        let spec = SceneSpec::new(3e8, Material::vacuum(), 0.0, 1.0);
        assert!(matches!(spec.build(), Err(SceneError::NoRegions)));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn star_polygons_have_ccw_orientation_and_inward_normals(
                radii in proptest::collection::vec(0.3f64..1.0, 5..12),
                cx in -2.0f64..2.0, cy in -2.0f64..2.0, flip in any::<bool>(),
            ) {
                let n = radii.len();
                let mut verts: Vec<Point2> = radii.iter().enumerate().map(|(i, r)| {
                    let t = 2.0 * PI * i as f64 / n as f64;
                    Point2::new(cx + r * t.cos(), cy + r * t.sin())
                }).collect();
                if flip { verts.reverse(); }
                let mesh = mesh_polygon(&verts, 0.1).unwrap();
                prop_assert!(mesh.signed_area() > 0.0);
                for (m, nrm) in mesh.midpoints.iter().zip(&mesh.inward_normals) {
                    prop_assert!(mesh.contains(*m + *nrm * 1e-6));
                    prop_assert!(!mesh.contains(*m - *nrm * 1e-6));
                }
                prop_assert!(mesh.lengths.iter().all(|&l| l > 1e-12 && l <= 0.1 * (1.0 + 1e-12)));
            }

            #[test]
            fn wavenumber_branch(eps in 1.0f64..50.0, sigma in 0.0f64..5.0, f in 1e6f64..1e11) {
                let k = wavenumber(&Material::lossy(eps, sigma), f).unwrap();
                prop_assert!(k.im <= 0.0);
                prop_assert!(k.re > 0.0);
                if sigma == 0.0 { prop_assert_eq!(k.im, 0.0); }
            }
        }
    }

    #[test]
    fn annular_sector_mesh_follows_both_arcs() {
        let shape = Shape::annular_sector(Point2::new(0.0, 0.0), 0.5, 1.0, 0.0, 90.0);
        let mesh = mesh_boundary(&shape, 10.0, &Material::vacuum(), 3e8).unwrap();
        let max = SPEED_OF_LIGHT / 3e8 / 10.0;
        assert!(mesh.max_length() <= max * (1.0 + 1e-12));
        assert!(mesh.signed_area() > 0.0);
        for v in mesh.vertices() {
            let r = v.norm();
            let on_arc = (r - 0.5).abs() < 1e-12 || (r - 1.0).abs() < 1e-12;
            let on_edge = v.x.abs() < 1e-12 || v.y.abs() < 1e-12;
            assert!(on_arc || on_edge, "{v:?}");
        }
        let exact = 0.25 * PI * (1.0 - 0.25);
        assert!((mesh.signed_area() - exact).abs() < 0.01 * exact);
        let bad = Shape::annular_sector(Point2::new(0.0, 0.0), 1.0, 0.5, 0.0, 90.0);
        assert!(mesh_boundary(&bad, 10.0, &Material::vacuum(), 3e8).is_err());
    }

}
