//! Canonical scenes: the coated square, layered and concentric cylinders,
//! grids of identical units and the eight-layer slab stack.

use crate::geometry::{Material, Point2, SceneSpec, Shape, SPEED_OF_LIGHT};
use crate::oracle::CylinderSpec;
use crate::solver::SolveResult;
use crate::geometry::Scene;
use num_complex::Complex64;

/// Core side of the coated square, m.
pub const COATED_SQUARE_INNER: f64 = 0.5;
/// Outer side of the coated square, m.
pub const COATED_SQUARE_OUTER: f64 = 1.0;
/// Relative permittivities of the slab stack, top to bottom.
pub const LAYER_PERMITTIVITIES: [f64; 8] = [7.1, 3.0, 2.77, 4.2, 8.0, 2.77, 8.0, 11.7];

pub fn free_space_wavelength(frequency: f64) -> f64 {
    SPEED_OF_LIGHT / frequency
}

/// Square core (region 0) inside a square coating split into four
/// rectangles (regions 1..=4), incidence along +x. Each region is meshed at
/// `density` segments per wavelength in its own material.
pub fn coated_square(eps_coating: f64, eps_core: f64, frequency: f64, density: f64) -> SceneSpec {
    let (a, b) = (0.5 * COATED_SQUARE_INNER, 0.5 * COATED_SQUARE_OUTER);
    let coat = Material::dielectric(eps_coating);
    let o = Point2::new(0.0, 0.0);
    SceneSpec::new(frequency, Material::vacuum(), 0.0, 1.0)
        .with_region("core", Material::dielectric(eps_core), Shape::rect(o, 2.0 * a, 2.0 * a), density)
        .with_region("coat_top", coat, Shape::rect(Point2::new(0.0, 0.5 * (a + b)), 2.0 * b, b - a), density)
        .with_region("coat_bottom", coat, Shape::rect(Point2::new(0.0, -0.5 * (a + b)), 2.0 * b, b - a), density)
        .with_region("coat_left", coat, Shape::rect(Point2::new(-0.5 * (a + b), 0.0), b - a, 2.0 * a), density)
        .with_region("coat_right", coat, Shape::rect(Point2::new(0.5 * (a + b), 0.0), b - a, 2.0 * a), density)
}

/// `n` points evenly spaced along the core perimeter of the coated square,
/// offset half a step from the corners.
pub fn coated_square_samples(n: usize) -> Vec<Point2> {
    let a = 0.5 * COATED_SQUARE_INNER;
    let side = 2.0 * a;
    (0..n)
        .map(|i| {
            let s = 4.0 * side * (i as f64 + 0.5) / n as f64;
            let (edge, t) = ((s / side).floor() as usize, s % side);
            match edge.min(3) {
                0 => Point2::new(-a + t, -a),
                1 => Point2::new(a, -a + t),
                2 => Point2::new(a - t, a),
                _ => Point2::new(-a, a - t),
            }
        })
        .collect()
}

/// `E_z` of `region` at points on its boundary, interpolated linearly in arc
/// length between the pulse values at neighbouring segment midpoints.
pub fn sample_boundary(scene: &Scene, result: &SolveResult, region: usize, points: &[Point2]) -> Vec<Complex64> {
    let e = result.region_e(region);
    let segs = &scene.regions[region].mesh.segments;
    let n = segs.len();
    points
        .iter()
        .map(|&p| {
            let (i, _) = scene.regions[region].mesh.nearest_segment(p);
            let s = &segs[i];
            let len = s.length();
            let along = (p - s.start).dot(s.tangent()).clamp(0.0, len);
            let (j, gap, offset) = if along < 0.5 * len {
                let j = (i + n - 1) % n;
                (j, 0.5 * (len + segs[j].length()), 0.5 * len - along)
            } else {
                let j = (i + 1) % n;
                (j, 0.5 * (len + segs[j].length()), along - 0.5 * len)
            };
            let w = offset / gap;
            e[i] * (1.0 - w) + e[j] * w
        })
        .collect()
}

/// Reference cylinders with a closed-form solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircleCase {
    /// eps_r 4, radius 0.3 lambda0.
    Dielectric,
    /// PEC, radius 0.5 lambda0.
    Pec,
    /// eps_r 4 core of 0.2 lambda0 in an eps_r 2.25 coating to 0.35 lambda0.
    Coated,
    /// PEC core of 0.2 lambda0 in an eps_r 4 coating to 0.35 lambda0.
    PecCore,
}

impl CircleCase {
    pub const ALL: [CircleCase; 4] = [CircleCase::Dielectric, CircleCase::Pec, CircleCase::Coated, CircleCase::PecCore];

    pub fn name(self) -> &'static str {
        match self {
            CircleCase::Dielectric => "circle-dielectric",
            CircleCase::Pec => "circle-pec",
            CircleCase::Coated => "circle-coated",
            CircleCase::PecCore => "circle-pec-core",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// `(radius in lambda0, material)` from the core outward.
    pub fn layers(self) -> Vec<(f64, Material)> {
        match self {
            CircleCase::Dielectric => vec![(0.3, Material::dielectric(4.0))],
            CircleCase::Pec => vec![(0.5, Material::pec())],
            CircleCase::Coated => vec![(0.2, Material::dielectric(4.0)), (0.35, Material::dielectric(2.25))],
            CircleCase::PecCore => vec![(0.2, Material::pec()), (0.35, Material::dielectric(4.0))],
        }
    }

    pub fn cylinder(self, frequency: f64) -> CylinderSpec {
        let l0 = free_space_wavelength(frequency);
        let layers = self.layers().into_iter().map(|(r, m)| (r * l0, m)).collect();
        CylinderSpec::new(layers, Material::vacuum(), frequency)
    }

    pub fn scene(self, frequency: f64, density: f64) -> SceneSpec {
        layered_circle(&self.cylinder(frequency), density)
    }
}

/// Scene for a layered cylinder: a disc core and each coating split into four
/// quarter-ring sectors. Densities are per wavelength of the region's own
/// material, or of the surrounding layer for a PEC core.
pub fn layered_circle(spec: &CylinderSpec, density: f64) -> SceneSpec {
    let o = Point2::new(0.0, 0.0);
    let mut scene = SceneSpec::new(spec.frequency, spec.background, spec.incidence_deg, spec.amplitude);
    let (r0, m0) = spec.layers[0];
    // a PEC core has no interior wavelength; mesh it for the medium around it
    let host = spec.layers.get(1).map_or(spec.background, |l| l.1);
    let core_density = if m0.is_pec {
        density * (host.eps_r * host.mu_r).sqrt() / (spec.background.eps_r * spec.background.mu_r).sqrt()
    } else {
        density
    };
    scene = scene.with_region("core", m0, Shape::circle(o, r0), core_density);
    for i in 1..spec.layers.len() {
        let (r_in, r_out, m) = (spec.layers[i - 1].0, spec.layers[i].0, spec.layers[i].1);
        for q in 0..4 {
            let start = 90.0 * q as f64;
            scene = scene.with_region(
                format!("layer{i}_q{q}"),
                m,
                Shape::annular_sector(o, r_in, r_out, start, start + 90.0),
                density,
            );
        }
    }
    scene
}

/// `nx` by `ny` touching copies of one rectangle, centered on the origin.
pub fn unit_grid(nx: usize, ny: usize, width: f64, height: f64, material: Material, frequency: f64, density: f64) -> SceneSpec {
    let mut scene = SceneSpec::new(frequency, Material::vacuum(), 0.0, 1.0);
    for j in 0..ny {
        for i in 0..nx {
            let c = Point2::new(
                (i as f64 - 0.5 * (nx as f64 - 1.0)) * width,
                (j as f64 - 0.5 * (ny as f64 - 1.0)) * height,
            );
            scene = scene.with_region(format!("unit_{i}_{j}"), material, Shape::rect(c, width, height), density);
        }
    }
    scene
}

/// Eight stacked slabs `length` by `total_height` (lambda0 units), top layer
/// first, incidence along +y.
pub fn layered_slabs(frequency: f64, length: f64, total_height: f64, density: f64) -> SceneSpec {
    let l0 = free_space_wavelength(frequency);
    let h = total_height * l0 / LAYER_PERMITTIVITIES.len() as f64;
    let top = 0.5 * total_height * l0;
    let mut scene = SceneSpec::new(frequency, Material::vacuum(), 90.0, 1.0);
    for (i, eps) in LAYER_PERMITTIVITIES.iter().enumerate() {
        let y = top - (i as f64 + 0.5) * h;
        scene = scene.with_region(
            format!("layer{i}"),
            Material::dielectric(*eps),
            Shape::rect(Point2::new(0.0, y), length * l0, h),
            density,
        );
    }
    scene
}
