//! Cylindrical-harmonic reference solutions for layered circular cylinders
//! under TM plane-wave incidence.
//!
//! Fields are expanded in `exp(j n (phi - phi_inc))`. The incident wave is
//! `E0 sum j^-n J_n(k0 rho)`, the scattered wave `E0 sum j^-n c_n H_n^(2)(k0 rho)`;
//! `c_n` below always means that normalized coefficient. Layers are matched
//! outward one interface at a time by carrying the pair
//! `(E, (1/mu) dE/drho)` across each layer.
//!
//! Integer-order Bessel sequences come from this module's own recurrences,
//! seeded with orders 0 and 1 only.

use crate::geometry::{Material, Point2};
use crate::postproc::{FarFieldPattern, FieldGrid, PointTag};
use crate::specfun;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Extra orders beyond `k0 a` required of every truncation.
pub const TRUNCATION_MARGIN: usize = 15;
const TAIL_TOLERANCE: f64 = 1e-12;
const BOUNDARY_BAND: f64 = 1e-9;

const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("invalid cylinder: {0}")]
    InvalidSpec(String),
    #[error("series not converged at order {order}: tail term {tail:.3e} relative")]
    Truncation { order: usize, tail: f64 },
    #[error("Bessel evaluation failed: {0}")]
    Bessel(String),
}

/// Concentric layers listed from the core outward.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderSpec {
    /// `(outer radius in m, material)`; only the first layer may be PEC.
    pub layers: Vec<(f64, Material)>,
    pub background: Material,
    pub frequency: f64,
    /// Series truncation `N`; terms `-N..=N` are summed.
    pub max_order: usize,
    /// Propagation direction of the incident wave, degrees.
    pub incidence_deg: f64,
    pub amplitude: f64,
}

impl CylinderSpec {
    /// Single-material cylinder in vacuum, incidence along +x, unit amplitude,
    /// minimal admissible truncation.
    pub fn new(layers: Vec<(f64, Material)>, background: Material, frequency: f64) -> Self {
        let mut spec = CylinderSpec {
            layers,
            background,
            frequency,
            max_order: 0,
            incidence_deg: 0.0,
            amplitude: 1.0,
        };
        spec.max_order = spec.min_order();
        spec
    }

    pub fn outer_radius(&self) -> f64 {
        self.layers.last().map(|l| l.0).unwrap_or(0.0)
    }

    /// `ceil(|k0| a) + 15`.
    pub fn min_order(&self) -> usize {
        let k0 = self.background.wavenumber(self.frequency).map(|k| k.norm()).unwrap_or(0.0);
        (k0 * self.outer_radius()).ceil() as usize + TRUNCATION_MARGIN
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::InvalidSpec(m));
        if self.layers.is_empty() {
            return bad("no layers".into());
        }
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return bad(format!("frequency {}", self.frequency));
        }
        if self.background.is_pec {
            return bad("PEC background".into());
        }
        let mut last = 0.0;
        for (i, (r, m)) in self.layers.iter().enumerate() {
            if !(r.is_finite() && *r > last) {
                return bad("radii must be positive and strictly increasing".into());
            }
            if m.is_pec && i > 0 {
                return bad("only the core may be PEC".into());
            }
            m.validate().map_err(|e| OracleError::InvalidSpec(e.to_string()))?;
            last = *r;
        }
        if self.max_order < self.min_order() {
            return bad(format!(
                "max_order {} below the truncation rule ceil(k0 a) + 15 = {}",
                self.max_order,
                self.min_order()
            ));
        }
        Ok(())
    }
}

/// `J_n(z)` for `n = 0..=n_max` by normalized downward recurrence.
pub fn bessel_j_sequence(n_max: usize, z: Complex64) -> Result<Vec<Complex64>, OracleError> {
    let zero = Complex64::new(0.0, 0.0);
    if z.norm() == 0.0 {
        let mut v = vec![zero; n_max + 1];
        v[0] = Complex64::new(1.0, 0.0);
        return Ok(v);
    }
    let start = n_max.max(z.norm().ceil() as usize) + 40 + (z.norm().sqrt() * 4.0) as usize;
    let mut v = vec![zero; start + 2];
    v[start] = Complex64::new(1.0, 0.0);
    for n in (1..=start).rev() {
        v[n - 1] = v[n] * (2.0 * n as f64) / z - v[n + 1];
        if v[n - 1].norm() > 1e250 {
            for x in v[n - 1..].iter_mut() {
                *x *= 1e-250;
            }
        }
    }
    let seed = specfun::bessel01(z).map_err(|e| OracleError::Bessel(e.to_string()))?;
    let scale = if seed.j0.norm() >= seed.j1.norm() {
        seed.j0 / v[0]
    } else {
        seed.j1 / v[1]
    };
    v.truncate(n_max + 1);
    Ok(v.into_iter().map(|x| x * scale).collect())
}

/// `Y_n(z)` for `n = 0..=n_max` by upward recurrence.
pub fn bessel_y_sequence(n_max: usize, z: Complex64) -> Result<Vec<Complex64>, OracleError> {
    let seed = specfun::bessel01(z).map_err(|e| OracleError::Bessel(e.to_string()))?;
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(seed.y0);
    if n_max >= 1 {
        out.push(seed.y1);
    }
    for n in 1..n_max {
        let v = out[n] * (2.0 * n as f64) / z - out[n - 1];
        out.push(v);
    }
    Ok(out)
}

/// Values and derivatives of `J_n`, `Y_n` for `n = 0..=n_max`.
struct BesselTable {
    j: Vec<Complex64>,
    jp: Vec<Complex64>,
    y: Vec<Complex64>,
    yp: Vec<Complex64>,
}

impl BesselTable {
    fn new(n_max: usize, z: Complex64, with_y: bool) -> Result<Self, OracleError> {
        let j = bessel_j_sequence(n_max + 1, z)?;
        let jp = derivatives(&j, z);
        let (y, yp) = if with_y {
            let y = bessel_y_sequence(n_max + 1, z)?;
            let yp = derivatives(&y, z);
            (y, yp)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(BesselTable {
            j: j[..=n_max].to_vec(),
            jp,
            y: if with_y { y[..=n_max].to_vec() } else { y },
            yp,
        })
    }

    fn h(&self, n: usize) -> Complex64 {
        self.j[n] - J * self.y[n]
    }

    fn hp(&self, n: usize) -> Complex64 {
        self.jp[n] - J * self.yp[n]
    }
}

/// `C_n'(z) = C_{n-1} - (n/z) C_n`, with `C_{-1} = -C_1`; input has `n_max + 2`
/// entries, output `n_max + 1`.
fn derivatives(c: &[Complex64], z: Complex64) -> Vec<Complex64> {
    let n_max = c.len() - 2;
    (0..=n_max)
        .map(|n| if n == 0 { -c[1] } else { c[n - 1] - c[n] * (n as f64) / z })
        .collect()
}

/// Per-order coefficients of every layer and the exterior.
#[derive(Debug, Clone)]
pub struct MieSolution {
    pub spec: CylinderSpec,
    pub k0: Complex64,
    /// Normalized scattering coefficients `c_n`, `n = 0..=N` (`c_-n = c_n`).
    pub scattering: Vec<Complex64>,
    /// Per layer and order: `(A_n, B_n)` of `A J_n(k rho) + B Y_n(k rho)`,
    /// normalized like `c_n` (multiply by `E0 j^-n`).
    pub layer_coefficients: Vec<Vec<(Complex64, Complex64)>>,
    layer_k: Vec<Complex64>,
}

/// Solves the layered matching problem.
pub fn mie_solve(spec: &CylinderSpec) -> Result<MieSolution, OracleError> {
    spec.validate()?;
    let f = spec.frequency;
    let bessel_err = |e: crate::geometry::GeometryError| OracleError::InvalidSpec(e.to_string());
    let k0 = spec.background.wavenumber(f).map_err(bessel_err)?;
    let mu0 = spec.background.permeability();
    let n_max = spec.max_order;
    let layer_k: Vec<Complex64> = spec
        .layers
        .iter()
        .map(|(_, m)| if m.is_pec { Ok(Complex64::new(0.0, 0.0)) } else { m.wavenumber(f) })
        .collect::<Result<_, _>>()
        .map_err(bessel_err)?;

    // (E, D) with D = (1/mu) dE/drho, per order, at the outer radius of each layer
    let mut state: Vec<(Complex64, Complex64)>;
    let mut raw: Vec<Vec<(Complex64, Complex64)>> = Vec::new();
    let (a0, m0) = spec.layers[0];
    if m0.is_pec {
        state = vec![(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)); n_max + 1];
        raw.push(vec![(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); n_max + 1]);
    } else {
        let k = layer_k[0];
        let t = BesselTable::new(n_max, k * a0, false)?;
        let mu = m0.permeability();
        state = (0..=n_max).map(|n| (t.j[n], k / mu * t.jp[n])).collect();
        raw.push(vec![(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)); n_max + 1]);
    }
    for i in 1..spec.layers.len() {
        let (a_in, a_out) = (spec.layers[i - 1].0, spec.layers[i].0);
        let m = spec.layers[i].1;
        let k = layer_k[i];
        let mu = m.permeability();
        let inner = BesselTable::new(n_max, k * a_in, true)?;
        let outer = BesselTable::new(n_max, k * a_out, true)?;
        let wronskian = 2.0 / (PI * k * a_in);
        let mut coeffs = Vec::with_capacity(n_max + 1);
        let mut next = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            let (e, d) = state[n];
            let dd = d * mu / k;
            let a = (e * inner.yp[n] - dd * inner.y[n]) / wronskian;
            let b = (dd * inner.j[n] - e * inner.jp[n]) / wronskian;
            // renormalize so the carried state stays O(1)
            let e_out = a * outer.j[n] + b * outer.y[n];
            let d_out = k / mu * (a * outer.jp[n] + b * outer.yp[n]);
            let s = 1.0 / e_out.norm().max(d_out.norm() * (mu / k).norm()).max(1e-300);
            coeffs.push((a * s, b * s));
            next.push((e_out * s, d_out * s));
            // earlier layers share the scale
            for layer in raw.iter_mut() {
                layer[n].0 *= s;
                layer[n].1 *= s;
            }
        }
        raw.push(coeffs);
        state = next;
    }
    let a = spec.outer_radius();
    let ext = BesselTable::new(n_max, k0 * a, true)?;
    let g = k0 / mu0;
    let mut scattering = Vec::with_capacity(n_max + 1);
    let mut layer_coefficients: Vec<Vec<(Complex64, Complex64)>> = raw.iter().map(|_| Vec::new()).collect();
    for n in 0..=n_max {
        let (e, d) = state[n];
        let c = (g * ext.jp[n] * e - ext.j[n] * d) / (ext.h(n) * d - g * ext.hp(n) * e);
        scattering.push(c);
        // field just outside: J + c H (normalized); equate to s * e or s * d
        let out_e = ext.j[n] + c * ext.h(n);
        let out_d = g * (ext.jp[n] + c * ext.hp(n));
        let s = if e.norm() >= (d / g).norm() { out_e / e } else { out_d / d };
        for (layer, dst) in raw.iter().zip(layer_coefficients.iter_mut()) {
            dst.push((layer[n].0 * s, layer[n].1 * s));
        }
    }
    let peak = scattering.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tail = scattering[n_max].norm();
    if peak > 0.0 && tail > TAIL_TOLERANCE * peak {
        return Err(OracleError::Truncation {
            order: n_max,
            tail: tail / peak,
        });
    }
    Ok(MieSolution {
        spec: spec.clone(),
        k0,
        scattering,
        layer_coefficients,
        layer_k,
    })
}

impl MieSolution {
    fn phi_inc(&self) -> f64 {
        self.spec.incidence_deg.to_radians()
    }

    /// Normalized scattering amplitude `sum_n c_n exp(j n (phi - phi_inc))`.
    pub fn amplitude(&self, phi: f64) -> Complex64 {
        let d = phi - self.phi_inc();
        let mut s = self.scattering[0];
        for (n, c) in self.scattering.iter().enumerate().skip(1) {
            s += 2.0 * c * (n as f64 * d).cos();
        }
        s
    }

    /// Echo width `(4/k0) |sum c_n exp(j n phi)|^2` in meters.
    pub fn echo_width(&self, phi: f64) -> f64 {
        4.0 / self.k0.re * self.amplitude(phi).norm_sqr()
    }

    /// Scattering width from the coefficients: `(4/k0) sum_n |c_n|^2`.
    pub fn scattering_width(&self) -> f64 {
        let s: f64 = self.scattering[0].norm_sqr()
            + 2.0 * self.scattering.iter().skip(1).map(|c| c.norm_sqr()).sum::<f64>();
        4.0 / self.k0.re * s
    }

    /// Extinction width from the forward amplitude: `-(4/k0) Re sum_n c_n`.
    pub fn extinction_width(&self) -> f64 {
        -4.0 / self.k0.re * self.amplitude(self.phi_inc()).re
    }

    fn layer_of(&self, rho: f64) -> PointTag {
        for (i, (r, _)) in self.spec.layers.iter().enumerate() {
            if (rho - r).abs() <= BOUNDARY_BAND {
                return PointTag::OnBoundary(i);
            }
        }
        match self.spec.layers.iter().position(|(r, _)| rho < *r) {
            Some(i) => PointTag::Interior(i),
            None => PointTag::Exterior,
        }
    }

    /// Total `E_z` at `p`, with the layer index used (`None` outside).
    pub fn field_at(&self, p: Point2) -> Result<Complex64, OracleError> {
        let rho = p.norm();
        let outer = self.spec.outer_radius();
        let layer = if rho >= outer { None } else { self.spec.layers.iter().position(|(r, _)| rho < *r) };
        self.field_in(p, layer)
    }

    /// Total `E_z` at `p` using the expansion of `layer` (`None` for the
    /// exterior), regardless of where `p` lies.
    pub fn field_in(&self, p: Point2, layer: Option<usize>) -> Result<Complex64, OracleError> {
        let rho = p.norm();
        let d = p.y.atan2(p.x) - self.phi_inc();
        let n_max = self.spec.max_order;
        let e0 = self.spec.amplitude;
        let dir = Point2::new(self.phi_inc().cos(), self.phi_inc().sin());
        // sum over +-n of j^-n X_n exp(j n d) with X_-n = (-1)^n X_n collapses to
        // X_0 + 2 sum_n j^-n X_n cos(n d) because (-1)^n j^n = j^-n
        let collapse = |x: &dyn Fn(usize) -> Complex64| {
            let mut s = x(0);
            let mut jn = Complex64::new(1.0, 0.0);
            for n in 1..=n_max {
                jn *= -J;
                s += 2.0 * jn * x(n) * (n as f64 * d).cos();
            }
            s
        };
        match layer {
            None => {
                let incident = e0 * (-J * self.k0 * dir.dot(p)).exp();
                if rho == 0.0 {
                    return Ok(incident);
                }
                let t = BesselTable::new(n_max, self.k0 * rho, true)?;
                Ok(incident + e0 * collapse(&|n| self.scattering[n] * t.h(n)))
            }
            Some(i) => {
                let m = self.spec.layers[i].1;
                if m.is_pec {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                let k = self.layer_k[i];
                let coeffs = &self.layer_coefficients[i];
                let with_y = i > 0;
                if rho == 0.0 {
                    return Ok(e0 * coeffs[0].0);
                }
                let t = BesselTable::new(n_max, k * rho, with_y)?;
                Ok(e0
                    * collapse(&|n| {
                        let (a, b) = coeffs[n];
                        if with_y {
                            a * t.j[n] + b * t.y[n]
                        } else {
                            a * t.j[n]
                        }
                    }))
            }
        }
    }
}

/// Total `E_z` at each point.
pub fn mie_fields(spec: &CylinderSpec, points: &[Point2]) -> Result<FieldGrid, OracleError> {
    let sol = mie_solve(spec)?;
    let mut values = Vec::with_capacity(points.len());
    let mut tags = Vec::with_capacity(points.len());
    for &p in points {
        values.push(sol.field_at(p)?);
        tags.push(sol.layer_of(p.norm()));
    }
    Ok(FieldGrid {
        points: points.to_vec(),
        values,
        tags,
    })
}

/// Echo width at each angle (degrees).
pub fn mie_rcs(spec: &CylinderSpec, angles_deg: &[f64]) -> Result<FarFieldPattern, OracleError> {
    let sol = mie_solve(spec)?;
    let sigma = angles_deg.iter().map(|a| sol.echo_width(a.to_radians())).collect();
    Ok(FarFieldPattern {
        angles_deg: angles_deg.to_vec(),
        sigma,
    })
}
