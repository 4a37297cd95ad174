//! Solver-against-oracle comparison for the reference cylinders.

use crate::geometry::Point2;
use crate::operators::DsaoCache;
use crate::oracle::{mie_fields, mie_rcs, OracleError};
use crate::postproc::{
    far_field, near_field, optical_theorem_check, relative_error_field, uniform_error, PostprocError,
};
use crate::presets::CircleCase;
use crate::solver::{solve_scene, SolveOptions, SolverError};
use std::f64::consts::PI;

pub const RCS_TOLERANCE: f64 = 0.02;
pub const BOUNDARY_UE_TOLERANCE: f64 = 0.02;
pub const NEAR_FIELD_TOLERANCE: f64 = 0.02;
pub const OPTICAL_THEOREM_TOLERANCE: f64 = 0.01;
/// Sampling points on the near-field ring.
pub const RING_POINTS: usize = 72;

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Postproc(#[from] PostprocError),
    #[error(transparent)]
    Scene(#[from] crate::geometry::SceneError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
}

impl Metric {
    pub fn pass(&self) -> bool {
        self.value < self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub case: CircleCase,
    pub density: f64,
    pub unknowns: usize,
    pub metrics: Vec<Metric>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.metrics.iter().all(Metric::pass)
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

/// Solves `case` at `density` and compares it with the series solution:
/// echo width over 360 one-degree angles (error relative to the peak),
/// boundary `E_z` magnitudes on outer segments (penetrable outer layer only), total field on a
/// ring at 1.5 times the outer radius, and the optical theorem.
pub fn validate_case(
    case: CircleCase,
    frequency: f64,
    density: f64,
    cache: &DsaoCache,
    opts: &SolveOptions,
) -> Result<ValidationReport, ValidationError> {
    let cylinder = case.cylinder(frequency);
    let scene = case.scene(frequency, density).build()?;
    let result = solve_scene(&scene, cache, opts)?;
    let mut metrics = Vec::new();

    let angles: Vec<f64> = (0..360).map(|i| i as f64).collect();
    let ours = far_field(&scene, &result, &angles);
    let reference = mie_rcs(&cylinder, &angles)?;
    let peak = reference.sigma.iter().cloned().fold(0.0, f64::max);
    let rcs_error = ours
        .sigma
        .iter()
        .zip(&reference.sigma)
        .map(|(a, b)| (a - b).abs() / peak)
        .fold(0.0, f64::max);
    metrics.push(Metric {
        name: "rcs_max_relative_error",
        value: rcs_error,
        threshold: RCS_TOLERANCE,
    });

    let a = cylinder.outer_radius();
    let outer_pec = cylinder.layers.len() == 1 && cylinder.layers[0].1.is_pec;
    if !outer_pec {
        let sol = crate::oracle::mie_solve(&cylinder)?;
        let outer_layer = cylinder.layers.len() - 1;
        let mut calc = Vec::new();
        let mut refs = Vec::new();
        // pulses on the outer circle against the series at the same angle
        for (i, r) in scene.regions.iter().enumerate() {
            let e = result.region_e(i);
            for (n, s) in r.mesh.segments.iter().enumerate() {
                if (s.start.norm() - a).abs() > 1e-9 || (s.end.norm() - a).abs() > 1e-9 {
                    continue;
                }
                let m = s.midpoint();
                let phi = m.y.atan2(m.x);
                calc.push(e[n]);
                refs.push(sol.field_in(Point2::new(a * phi.cos(), a * phi.sin()), Some(outer_layer))?);
            }
        }
        metrics.push(Metric {
            name: "boundary_ue",
            value: uniform_error(&calc, &refs)?,
            threshold: BOUNDARY_UE_TOLERANCE,
        });
    }

    let ring: Vec<Point2> = (0..RING_POINTS)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / RING_POINTS as f64;
            Point2::new(1.5 * a * phi.cos(), 1.5 * a * phi.sin())
        })
        .collect();
    let ours = near_field(&scene, &result, &ring, &opts.quadrature)?;
    let reference = mie_fields(&cylinder, &ring)?;
    let re = relative_error_field(&ours, &reference)?;
    metrics.push(Metric {
        name: "near_field_max_re",
        value: re.iter().cloned().fold(0.0, f64::max),
        threshold: NEAR_FIELD_TOLERANCE,
    });

    if scene.is_lossless() {
        let ot = optical_theorem_check(&scene, &result)?;
        metrics.push(Metric {
            name: "optical_theorem_gap",
            value: ot.gap,
            threshold: OPTICAL_THEOREM_TOLERANCE,
        });
    }
    Ok(ValidationReport {
        case,
        density,
        unknowns: scene.penetrable_unknowns() + scene.pec_unknowns(),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dielectric_case_passes_and_coarse_case_fails() {
        let opts = SolveOptions::default();
        let good = validate_case(CircleCase::Dielectric, 3e8, 20.0, &DsaoCache::new(), &opts).unwrap();
        assert!(good.pass(), "{good:?}");
        assert!(good.metric("boundary_ue").is_some());
        let coarse = validate_case(CircleCase::Dielectric, 3e8, 5.0, &DsaoCache::new(), &opts).unwrap();
        assert!(!coarse.pass(), "{coarse:?}");
    }
}
