//! 2D Helmholtz Green's function, its normal derivative, and Galerkin
//! quadrature over pairs of straight segments.
//!
//! `G(r, r') = -(j/4) H0^(2)(k |r - r'|)` solves `(lap + k^2) G = -delta`.
//! Near and self interactions subtract the static kernels
//! `-(1/2pi) ln rho` and `(rho . n') / (2 pi rho^2)`, integrate them in closed
//! form on the source segment, and hand the smooth remainder to Gauss–Legendre.

use crate::geometry::{Material, Point2, Segment};
use crate::specfun::{self, SpecFunError, EULER_GAMMA};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Default Gauss–Legendre order per segment per direction.
pub const DEFAULT_GAUSS_ORDER: usize = 8;
/// Pairs whose center distance is below this multiple of the longer segment
/// length are treated as nearly singular.
pub const NEAR_FACTOR: f64 = 4.0;
pub const ADAPTIVE_TOLERANCE: f64 = 1e-8;
pub const ADAPTIVE_MAX_DEPTH: usize = 12;
pub const MAX_GAUSS_ORDER: usize = 64;

/// `|k rho|` below which the kernel remainders use the series split.
const SPLIT_RADIUS: f64 = 4.0;
/// Target error of the far-pair order selection.
const FAR_PAIR_TARGET: f64 = 1e-13;
/// Geometric grading of test-side pieces that touch the source segment.
const GRADING_RATIO: f64 = 0.15;
const GRADING_LEVELS: usize = 10;

const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("kernel evaluated at coincident points")]
    Singular,
    #[error("zero-length segment")]
    ZeroLength,
    #[error("invalid kernel context: {0}")]
    InvalidContext(String),
    #[error("unsupported Gauss order {0} (1..=64)")]
    InvalidOrder(usize),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// Medium parameters the kernels depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelContext {
    pub k: Complex64,
    pub omega: f64,
    pub mu: f64,
}

impl KernelContext {
    pub fn new(k: Complex64, omega: f64, mu: f64) -> Result<Self, KernelError> {
        if !(k.re.is_finite() && k.im.is_finite()) || k.im > 0.0 || k.norm() == 0.0 {
            return Err(KernelError::InvalidContext(format!("wavenumber {k}")));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(KernelError::InvalidContext(format!("omega {omega}")));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(KernelError::InvalidContext(format!("mu {mu}")));
        }
        Ok(KernelContext { k, omega, mu })
    }

    pub fn for_material(material: &Material, frequency: f64) -> Result<Self, KernelError> {
        let k = material
            .wavenumber(frequency)
            .map_err(|e| KernelError::InvalidContext(e.to_string()))?;
        Self::new(k, 2.0 * PI * frequency, material.permeability())
    }

    /// `j w mu`, the factor that turns `G` into the `P` kernel.
    pub fn jwmu(&self) -> Complex64 {
        J * self.omega * self.mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Green,
    NormalDerivative,
}

/// Quadrature settings shared by one operator fill.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub order: usize,
    pub near_factor: f64,
    pub tolerance: f64,
    pub max_depth: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            order: DEFAULT_GAUSS_ORDER,
            near_factor: NEAR_FACTOR,
            tolerance: ADAPTIVE_TOLERANCE,
            max_depth: ADAPTIVE_MAX_DEPTH,
        }
    }
}

impl QuadratureOptions {
    pub fn with_order(order: usize) -> Result<Self, KernelError> {
        if order == 0 || order > MAX_GAUSS_ORDER {
            return Err(KernelError::InvalidOrder(order));
        }
        Ok(QuadratureOptions {
            order,
            ..Default::default()
        })
    }
}

/// A quadrature value plus whether adaptive refinement met its tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: Complex64,
    pub converged: bool,
}

// ---------------------------------------------------------------------------
// Gauss–Legendre rules

#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule on `[-1, 1]` by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss–Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for m in 2..=n {
        let mf = m as f64;
        let p2 = ((2.0 * mf - 1.0) * x * p1 - (mf - 1.0) * p0) / mf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared rule of order `n` (1..=64).
pub fn gauss_rule(n: usize) -> &'static GaussLegendre {
    static RULES: OnceLock<Vec<GaussLegendre>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (1..=MAX_GAUSS_ORDER).map(GaussLegendre::new).collect());
    &rules[n.clamp(1, MAX_GAUSS_ORDER) - 1]
}

// ---------------------------------------------------------------------------
// Point kernels

/// `-(j/4) H0^(2)(k |r - rp|)`.
pub fn green(k: Complex64, r: Point2, rp: Point2) -> Result<Complex64, KernelError> {
    let rho = r.distance(rp);
    if rho == 0.0 {
        return Err(KernelError::Singular);
    }
    Ok(-0.25 * J * specfun::hankel0_2(k * rho)?)
}

/// `dG/dn'` at the source point: `-(j k/4) H1^(2)(k rho) (rho . n') / rho`
/// with `rho = r - rp`.
pub fn green_normal_derivative(
    k: Complex64,
    r: Point2,
    rp: Point2,
    n_prime: Point2,
) -> Result<Complex64, KernelError> {
    let d = r - rp;
    let rho = d.norm();
    if rho == 0.0 {
        return Err(KernelError::Singular);
    }
    Ok(-0.25 * J * k * specfun::hankel1_2(k * rho)? * (d.dot(n_prime) / rho))
}

/// `G` and the radial factor `D` with `dG/dn' = D (rho . n') / rho`.
#[inline]
fn kernel_pair(k: Complex64, rho: f64) -> Result<(Complex64, Complex64), KernelError> {
    let (h0, h1) = specfun::hankel01_2(k * rho)?;
    Ok((-0.25 * J * h0, -0.25 * J * k * h1))
}

/// `G + ln(rho)/(2 pi)` and `D - 1/(2 pi rho)`; both finite at `rho = 0`.
fn kernel_remainders(k: Complex64, rho: f64) -> Result<(Complex64, Complex64), KernelError> {
    let z = k * rho;
    if z.norm() > SPLIT_RADIUS {
        let (g, d) = kernel_pair(k, rho)?;
        return Ok((g + rho.ln() / (2.0 * PI), d - 1.0 / (2.0 * PI * rho)));
    }
    let parts = specfun::small_argument_parts(z);
    let one = Complex64::new(1.0, 0.0);
    let ln_half_k = (k * 0.5).ln();
    let g = -0.25 * J * parts.j0 - (ln_half_k + EULER_GAMMA) * parts.j0 / (2.0 * PI)
        - parts.s0 / (2.0 * PI)
        + if rho > 0.0 {
            rho.ln() * (one - parts.j0) / (2.0 * PI)
        } else {
            Complex64::new(0.0, 0.0)
        };
    let ln_term = if rho > 0.0 {
        (ln_half_k + rho.ln()) * parts.j1
    } else {
        Complex64::new(0.0, 0.0)
    };
    let d = -0.25 * J * k * parts.j1 - k * ln_term / (2.0 * PI) - 0.25 * k * parts.t1;
    Ok((g, d))
}

// ---------------------------------------------------------------------------
// Closed-form static integrals over a source segment

#[derive(Debug, Clone, Copy)]
struct Frame {
    a: Point2,
    t: Point2,
    n: Point2,
    len: f64,
}

impl Frame {
    fn new(seg: &Segment) -> Result<Self, KernelError> {
        let len = seg.length();
        if !(len > 1e-12) {
            return Err(KernelError::ZeroLength);
        }
        let t = (seg.end - seg.start) * (1.0 / len);
        Ok(Frame {
            a: seg.start,
            t,
            n: t.perp(),
            len,
        })
    }

    fn at(&self, s: f64) -> Point2 {
        self.a + self.t * s
    }

    /// Local coordinates of `r`: along the segment from its start, and
    /// signed offset along the left normal.
    fn local(&self, r: Point2) -> (f64, f64) {
        let w = r - self.a;
        (w.dot(self.t), w.dot(self.n))
    }

    fn distance_to(&self, r: Point2) -> f64 {
        let (x, h) = self.local(r);
        let dx = if x < 0.0 {
            -x
        } else if x > self.len {
            x - self.len
        } else {
            0.0
        };
        dx.hypot(h)
    }
}

/// Antiderivative of `ln sqrt(x^2 + h^2)` in `x`.
fn log_antiderivative(x: f64, h: f64) -> f64 {
    let r2 = x * x + h * h;
    let log_part = if x == 0.0 || r2 == 0.0 { 0.0 } else { 0.5 * x * r2.ln() };
    let atan_part = if h == 0.0 { 0.0 } else { h.abs() * (x / h.abs()).atan() };
    log_part - x + atan_part
}

/// `int ln|r - r'| dl'` over the source.
fn static_log(src: &Frame, r: Point2) -> f64 {
    let (x0, h) = src.local(r);
    log_antiderivative(src.len - x0, h) - log_antiderivative(-x0, h)
}

/// `int (rho . n') / rho^2 dl'` over the source, the signed subtended angle.
fn static_double_layer(src: &Frame, r: Point2) -> f64 {
    let (x0, h) = src.local(r);
    if h.abs() <= 1e-14 * src.len {
        return 0.0;
    }
    ((src.len - x0) / h).atan() + (x0 / h).atan()
}

// ---------------------------------------------------------------------------
// Pair integration

/// Galerkin integrals for one (test, source) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerms {
    /// `int_test int_src G`.
    pub g: Complex64,
    /// `int_test int_src dG/dn'` with `n'` the source left normal.
    pub dg: Complex64,
    /// The same with the roles of the two segments exchanged.
    pub dg_swapped: Complex64,
    pub converged: bool,
}

/// Gauss order for a far pair: enough to resolve both the nearest kernel
/// singularity (Bernstein ellipse of the closer segment) and the oscillation
/// over the longer one, capped by `max_order`.
fn far_order(center_distance: f64, len_a: f64, len_b: f64, k: Complex64, max_order: usize) -> usize {
    let long = len_a.max(len_b);
    let r = ((center_distance - 0.5 * long) / (0.5 * long)).max(1.0 + 1e-9);
    let rho = r + (r * r - 1.0).sqrt();
    let singular = (-FAR_PAIR_TARGET.ln() / (2.0 * rho.ln())).ceil() as usize;
    let phase = k.norm() * long;
    let mut oscillatory = 1;
    while oscillatory < max_order {
        let ratio = std::f64::consts::E * phase / (8.0 * oscillatory as f64);
        if ratio.powi(2 * oscillatory as i32) < FAR_PAIR_TARGET {
            break;
        }
        oscillatory += 1;
    }
    singular.max(oscillatory).clamp(2, max_order)
}

/// Tensor Gauss for well-separated pairs; returns `(g, dg, dg_swapped)`.
fn far_pair(
    k: Complex64,
    test: &Frame,
    src: &Frame,
    order: usize,
    want_dg: bool,
) -> Result<(Complex64, Complex64, Complex64), KernelError> {
    let rule = gauss_rule(order);
    let mut g = Complex64::new(0.0, 0.0);
    let mut dg = Complex64::new(0.0, 0.0);
    let mut dg_swapped = Complex64::new(0.0, 0.0);
    let src_nodes: Vec<(Point2, f64)> = rule.mapped(0.0, src.len).map(|(s, w)| (src.at(s), w)).collect();
    for (s, wt) in rule.mapped(0.0, test.len) {
        let r = test.at(s);
        for &(rp, ws) in &src_nodes {
            let d = r - rp;
            let rho = d.norm();
            let w = wt * ws;
            if want_dg {
                let (gv, dv) = kernel_pair(k, rho)?;
                g += w * gv;
                let radial = dv * (w / rho);
                dg += radial * d.dot(src.n);
                dg_swapped -= radial * d.dot(test.n);
            } else {
                g += w * -0.25 * J * specfun::hankel0_2(k * rho)?;
            }
        }
    }
    Ok((g, dg, dg_swapped))
}

/// Adaptive Gauss over `[t0, t1]` of the source for the kernel remainders at
/// test point `r`. Returns `(g_rem, dg_rem, converged)`.
#[allow(clippy::too_many_arguments)]
fn inner_remainder(
    k: Complex64,
    r: Point2,
    src: &Frame,
    t0: f64,
    t1: f64,
    opts: &QuadratureOptions,
    want_dg: bool,
    coarse: Option<(Complex64, Complex64)>,
    depth: usize,
) -> Result<(Complex64, Complex64, bool), KernelError> {
    let rule = gauss_rule(opts.order);
    let eval = |a: f64, b: f64| -> Result<(Complex64, Complex64), KernelError> {
        let mut g = Complex64::new(0.0, 0.0);
        let mut dg = Complex64::new(0.0, 0.0);
        for (s, w) in rule.mapped(a, b) {
            let rp = src.at(s);
            let d = r - rp;
            let rho = d.norm();
            let (gr, dr) = kernel_remainders(k, rho)?;
            g += w * gr;
            if want_dg && rho > 0.0 {
                dg += dr * (w * d.dot(src.n) / rho);
            }
        }
        Ok((g, dg))
    };
    let whole = match coarse {
        Some(v) => v,
        None => eval(t0, t1)?,
    };
    let mid = 0.5 * (t0 + t1);
    let left = eval(t0, mid)?;
    let right = eval(mid, t1)?;
    let fine = (left.0 + right.0, left.1 + right.1);
    let change = (fine.0 - whole.0).norm() + (fine.1 - whole.1).norm();
    let scale = fine.0.norm() + fine.1.norm();
    let floor = 1e-14 * src.len;
    if change <= opts.tolerance * scale || change <= floor {
        return Ok((fine.0, fine.1, true));
    }
    if depth + 1 >= opts.max_depth {
        return Ok((fine.0, fine.1, false));
    }
    let l = inner_remainder(k, r, src, t0, mid, opts, want_dg, Some(left), depth + 1)?;
    let rr = inner_remainder(k, r, src, mid, t1, opts, want_dg, Some(right), depth + 1)?;
    Ok((l.0 + rr.0, l.1 + rr.1, l.2 && rr.2))
}

/// Breakpoints on the test segment where the integrand may kink: projections
/// of source endpoints that sit close to the test line.
fn test_breakpoints(test: &Frame, src: &Frame) -> Vec<f64> {
    let mut points = vec![0.0, test.len];
    for e in [src.a, src.at(src.len)] {
        let (s, h) = test.local(e);
        if h.abs() < 0.5 * test.len && s > 1e-9 * test.len && s < test.len * (1.0 - 1e-9) {
            points.push(s);
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * test.len);
    points
}

/// Geometrically graded sub-intervals of `[a, b]`, refined toward the ends
/// flagged in `grade`.
fn graded_pieces(a: f64, b: f64, grade: (bool, bool)) -> Vec<(f64, f64)> {
    match grade {
        (false, false) => vec![(a, b)],
        (true, true) => {
            let m = 0.5 * (a + b);
            let mut v = graded_pieces(a, m, (true, false));
            v.extend(graded_pieces(m, b, (false, true)));
            v
        }
        (true, false) => {
            let h = b - a;
            let mut cuts: Vec<f64> = (0..=GRADING_LEVELS)
                .rev()
                .map(|i| a + h * GRADING_RATIO.powi(i as i32 + 1))
                .collect();
            cuts.insert(0, a);
            cuts.push(b);
            cuts.windows(2).map(|w| (w[0], w[1])).collect()
        }
        (false, true) => graded_pieces(-b, -a, (true, false))
            .into_iter()
            .rev()
            .map(|(x, y)| (-y, -x))
            .collect(),
    }
}

/// Nearly singular pair: static part with closed-form inner integrals and a
/// graded test-side rule, remainder with adaptive source refinement.
fn near_pair(
    k: Complex64,
    test: &Frame,
    src: &Frame,
    opts: &QuadratureOptions,
    want_dg: bool,
) -> Result<Integral2, KernelError> {
    let rule = gauss_rule(opts.order);
    let breaks = test_breakpoints(test, src);
    let mut static_g = 0.0;
    let mut static_dg = 0.0;
    let mut rem_g = Complex64::new(0.0, 0.0);
    let mut rem_dg = Complex64::new(0.0, 0.0);
    let mut converged = true;
    for w in breaks.windows(2) {
        let (p, q) = (w[0], w[1]);
        let touch = |s: f64| src.distance_to(test.at(s)) < 0.25 * (q - p);
        for (a, b) in graded_pieces(p, q, (touch(p), touch(q))) {
            for (s, wt) in rule.mapped(a, b) {
                let r = test.at(s);
                static_g += wt * static_log(src, r);
                if want_dg {
                    static_dg += wt * static_double_layer(src, r);
                }
            }
        }
        for (s, wt) in rule.mapped(p, q) {
            let r = test.at(s);
            let (g, dg, ok) = inner_remainder(k, r, src, 0.0, src.len, opts, want_dg, None, 0)?;
            rem_g += wt * g;
            rem_dg += wt * dg;
            converged &= ok;
        }
    }
    Ok(Integral2 {
        g: rem_g - static_g / (2.0 * PI),
        dg: rem_dg + static_dg / (2.0 * PI),
        converged,
    })
}

struct Integral2 {
    g: Complex64,
    dg: Complex64,
    converged: bool,
}

fn same_segment(a: &Segment, b: &Segment) -> bool {
    let tol = 1e-12 * (1.0 + a.length());
    (a.start.distance(b.start) <= tol && a.end.distance(b.end) <= tol)
        || (a.start.distance(b.end) <= tol && a.end.distance(b.start) <= tol)
}

/// Self term of `G`: closed-form static double integral plus the 1D reduction
/// `2 int_0^L (L - u) G_rem(u) du` of the remainder.
fn self_green(k: Complex64, len: f64, order: usize) -> Result<Complex64, KernelError> {
    let rule = gauss_rule(order);
    let static_part = -(len * len * (len.ln() - 1.5)) / (2.0 * PI);
    let mut rem = Complex64::new(0.0, 0.0);
    for (a, b) in graded_pieces(0.0, len, (true, false)) {
        for (u, w) in rule.mapped(a, b) {
            rem += (2.0 * w * (len - u)) * kernel_remainders(k, u)?.0;
        }
    }
    Ok(static_part + rem)
}

/// Evaluates Galerkin pair integrals for operator fills.
#[derive(Debug, Clone, Copy)]
pub struct PairIntegrator {
    pub k: Complex64,
    pub opts: QuadratureOptions,
}

impl PairIntegrator {
    pub fn new(k: Complex64, opts: QuadratureOptions) -> Self {
        PairIntegrator { k, opts }
    }

    pub fn is_near(&self, test: &Segment, src: &Segment) -> bool {
        let d = test.midpoint().distance(src.midpoint());
        d < self.opts.near_factor * test.length().max(src.length())
    }

    /// `G` and, when `want_dg`, both normal-derivative integrals of a pair.
    pub fn pair(&self, test: &Segment, src: &Segment, want_dg: bool) -> Result<PairTerms, KernelError> {
        let tf = Frame::new(test)?;
        let sf = Frame::new(src)?;
        if same_segment(test, src) {
            return Ok(PairTerms {
                g: self_green(self.k, tf.len, self.opts.order)?,
                dg: Complex64::new(0.0, 0.0),
                dg_swapped: Complex64::new(0.0, 0.0),
                converged: true,
            });
        }
        if self.is_near(test, src) {
            let forward = near_pair(self.k, &tf, &sf, &self.opts, want_dg)?;
            let (dg_swapped, ok) = if want_dg {
                let back = near_pair(self.k, &sf, &tf, &self.opts, true)?;
                (back.dg, back.converged)
            } else {
                (Complex64::new(0.0, 0.0), true)
            };
            return Ok(PairTerms {
                g: forward.g,
                dg: forward.dg,
                dg_swapped,
                converged: forward.converged && ok,
            });
        }
        let d = test.midpoint().distance(src.midpoint());
        let order = far_order(d, tf.len, sf.len, self.k, self.opts.order);
        let (g, dg, dg_swapped) = far_pair(self.k, &tf, &sf, order, want_dg)?;
        Ok(PairTerms {
            g,
            dg,
            dg_swapped,
            converged: true,
        })
    }
}

/// Galerkin double integral of `kernel` over a test and a source segment.
/// Identical segments dispatch to [`quadrature_self`].
pub fn quadrature_pair(
    ctx: &KernelContext,
    test: &Segment,
    src: &Segment,
    kernel: Kernel,
) -> Result<Integral, KernelError> {
    quadrature_pair_with(ctx, test, src, kernel, &QuadratureOptions::default())
}

pub fn quadrature_pair_with(
    ctx: &KernelContext,
    test: &Segment,
    src: &Segment,
    kernel: Kernel,
    opts: &QuadratureOptions,
) -> Result<Integral, KernelError> {
    let terms = PairIntegrator::new(ctx.k, *opts).pair(test, src, kernel == Kernel::NormalDerivative)?;
    let value = match kernel {
        Kernel::Green => terms.g,
        Kernel::NormalDerivative => terms.dg,
    };
    Ok(Integral {
        value,
        converged: terms.converged,
    })
}

/// Self term: log-split closed form for `G`; zero for `dG/dn'` on a straight
/// segment.
pub fn quadrature_self(ctx: &KernelContext, seg: &Segment, kernel: Kernel) -> Result<Complex64, KernelError> {
    let frame = Frame::new(seg)?;
    match kernel {
        Kernel::Green => self_green(ctx.k, frame.len, DEFAULT_GAUSS_ORDER),
        Kernel::NormalDerivative => Ok(Complex64::new(0.0, 0.0)),
    }
}

/// `int_seg f(r) dl` by Gauss–Legendre of the given order.
pub fn integrate_segment<F>(seg: &Segment, order: usize, mut f: F) -> Complex64
where
    F: FnMut(Point2) -> Complex64,
{
    let len = seg.length();
    gauss_rule(order)
        .mapped(0.0, 1.0)
        .map(|(t, w)| f(seg.point_at(t)) * (w * len))
        .sum()
}

/// Single-layer and double-layer potentials of unit pulses on `src`, seen
/// from an off-boundary point `r`: `(int G dl', int dG/dn' dl')`.
pub fn point_segment_potentials(
    k: Complex64,
    r: Point2,
    src: &Segment,
    opts: &QuadratureOptions,
) -> Result<(Complex64, Complex64), KernelError> {
    let sf = Frame::new(src)?;
    let d = r.distance(src.midpoint());
    if d < opts.near_factor * sf.len {
        let (g, dg, _) = inner_remainder(k, r, &sf, 0.0, sf.len, opts, true, None, 0)?;
        return Ok((
            g - static_log(&sf, r) / (2.0 * PI),
            dg + static_double_layer(&sf, r) / (2.0 * PI),
        ));
    }
    let order = far_order(d + 0.5 * sf.len, sf.len, sf.len, k, opts.order);
    let mut g = Complex64::new(0.0, 0.0);
    let mut dg = Complex64::new(0.0, 0.0);
    for (s, w) in gauss_rule(order).mapped(0.0, sf.len) {
        let dv = r - sf.at(s);
        let rho = dv.norm();
        let (gv, radial) = kernel_pair(k, rho)?;
        g += w * gv;
        dg += radial * (w * dv.dot(sf.n) / rho);
    }
    Ok((g, dg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> Segment {
        Segment::new(Point2::new(ax, ay), Point2::new(bx, by))
    }

    fn ctx(k: f64) -> KernelContext {
        KernelContext::new(c(k, 0.0), 1.0, 1.0).unwrap()
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for n in [1, 2, 3, 8, 16, 33, 64] {
            let rule = GaussLegendre::new(n);
            assert!((rule.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 1 { 2.0 / (deg as f64) } else { 0.0 };
            // x^(2n-2) integrates to 2/(2n-1)
            let got: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x.powi(deg as i32 - 1))
                .sum();
            assert!((got - exact).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn green_at_unit_argument() {
        let g = green(c(1.0, 0.0), Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)).unwrap();
        // -(j/4)(0.765197686558 - 0.088256964215 j)
        let expected = -0.25 * J * c(0.765_197_686_558, -0.088_256_964_215);
        assert!((g - expected).norm() < 1e-11);
        assert!((g - c(-0.022_064, -0.191_299)).norm() < 1e-6);
    }

    #[test]
    fn coincident_points_are_rejected() {
        let p = Point2::new(0.3, 0.2);
        assert_eq!(green(c(1.0, 0.0), p, p), Err(KernelError::Singular));
        assert_eq!(
            green_normal_derivative(c(1.0, 0.0), p, p, Point2::new(0.0, 1.0)),
            Err(KernelError::Singular)
        );
    }

    #[test]
    fn normal_derivative_basic_symmetries() {
        let k = c(2.0, -0.1);
        let r = Point2::new(0.4, 0.1);
        let rp = Point2::new(-0.3, 0.5);
        let rho = r - rp;
        let perp = rho.perp() * (1.0 / rho.norm());
        assert_eq!(green_normal_derivative(k, r, rp, perp).unwrap().norm(), 0.0);
        let n = Point2::new(0.6, 0.8);
        let a = green_normal_derivative(k, r, rp, n).unwrap();
        let b = green_normal_derivative(k, rp, r, n).unwrap();
        assert!((a + b).norm() < 1e-15 * a.norm());
    }

    #[test]
    fn normal_derivative_matches_finite_difference() {
        let k = c(1.0, 0.0);
        let n = Point2::new(0.96, -0.28);
        for kr in [0.1, 0.5, 1.0, 3.0, 7.5, 10.0] {
            let r = Point2::new(0.0, 0.0);
            let rp = Point2::new(kr * 0.8, kr * 0.6 + 0.01);
            let h = 1e-7 * (r - rp).norm();
            let fd = (green(k, r, rp + n * h).unwrap() - green(k, r, rp - n * h).unwrap()) / (2.0 * h);
            let an = green_normal_derivative(k, r, rp, n).unwrap();
            assert!(rel(an, fd) < 1e-6, "k rho = {kr}: {an} vs {fd}");
        }
    }

    #[test]
    fn remainders_match_direct_subtraction() {
        for (kr, ki) in [(1.0, 0.0), (3.0, -0.5), (50.0, -2.0)] {
            let k = c(kr, ki);
            for rho in [0.05, 0.5, 1.5, 3.9 / k.norm(), 4.1 / k.norm()] {
                let (g, d) = kernel_pair(k, rho).unwrap();
                let (gr, dr) = kernel_remainders(k, rho).unwrap();
                assert!((gr - (g + rho.ln() / (2.0 * PI))).norm() < 1e-11 * (1.0 + g.norm()));
                assert!((dr - (d - 1.0 / (2.0 * PI * rho))).norm() < 1e-11 * (1.0 + d.norm()));
            }
        }
    }

    #[test]
    fn static_log_integral_matches_closed_form() {
        for len in [0.1, 1.0, 2.5] {
            let rule = gauss_rule(16);
            let frame = Frame::new(&seg(0.0, 0.0, len, 0.0)).unwrap();
            let mut total = 0.0;
            for (a, b) in graded_pieces(0.0, len, (true, true)) {
                for (s, w) in rule.mapped(a, b) {
                    total += w * static_log(&frame, Point2::new(s, 0.0));
                }
            }
            let exact = len * len * (len.ln() - 1.5);
            assert!((total - exact).abs() < 1e-12 * exact.abs().max(1.0), "L={len}");
        }
        let exact_unit: f64 = 1.0 * (0.0 - 1.5);
        assert_eq!(exact_unit, -1.5);
    }

    #[test]
    fn static_double_layer_is_subtended_angle() {
        let frame = Frame::new(&seg(-1.0, 0.0, 1.0, 0.0)).unwrap();
        // point above the center sees the segment under 90 degrees
        let v = static_double_layer(&frame, Point2::new(0.0, 1.0));
        assert!((v - PI / 2.0).abs() < 1e-14);
        let below = static_double_layer(&frame, Point2::new(0.0, -1.0));
        assert!((below + PI / 2.0).abs() < 1e-14);
        assert_eq!(static_double_layer(&frame, Point2::new(3.0, 0.0)), 0.0);
    }

    #[test]
    fn normal_derivative_self_term_is_zero() {
        let s = seg(0.2, 0.1, 0.5, 0.9);
        assert_eq!(quadrature_self(&ctx(3.0), &s, Kernel::NormalDerivative).unwrap(), c(0.0, 0.0));
    }

    /// Brute force: 1D reduction `2 int_0^L (L-u) G(u) du` split at `eps`;
    /// `[0, eps]` uses the small-argument form of `G` integrated analytically,
    /// `[eps, L]` uses 10^4 Gauss points of the full Hankel kernel.
    fn brute_force_self(k: f64, len: f64) -> Complex64 {
        let eps = 1e-4 * len;
        // G ~ A - ln(u)/(2 pi) with A = -j/4 - (ln(k/2) + gamma)/(2 pi)
        let a = -0.25 * J - ((k / 2.0).ln() + EULER_GAMMA) / (2.0 * PI);
        // int_0^eps (L - u) du = L eps - eps^2/2
        // int_0^eps (L - u) ln u du = L (eps ln eps - eps) - (eps^2 ln eps / 2 - eps^2 / 4)
        let lin = len * eps - 0.5 * eps * eps;
        let log = len * (eps * eps.ln() - eps) - (0.5 * eps * eps * eps.ln() - 0.25 * eps * eps);
        let head = a * lin - log / (2.0 * PI);
        let rule = GaussLegendre::new(10);
        let panels = 1000;
        let mut tail = Complex64::new(0.0, 0.0);
        let ratio = (len / eps).powf(1.0 / panels as f64);
        let mut lo = eps;
        for _ in 0..panels {
            let hi = lo * ratio;
            for (u, w) in rule.mapped(lo, hi) {
                tail += w * (len - u) * green(c(k, 0.0), Point2::new(0.0, 0.0), Point2::new(u, 0.0)).unwrap();
            }
            lo = hi;
        }
        2.0 * (head + tail)
    }

    #[test]
    fn green_self_term_matches_brute_force() {
        let s = seg(0.0, 0.0, 0.1, 0.0);
        let got = quadrature_self(&ctx(1.0), &s, Kernel::Green).unwrap();
        let oracle = brute_force_self(1.0, 0.1);
        assert!(rel(got, oracle) < 1e-6, "{got} vs {oracle}");
        let got = quadrature_self(&ctx(20.0), &seg(0.0, 0.0, 0.3, 0.0), Kernel::Green).unwrap();
        let oracle = brute_force_self(20.0, 0.3);
        assert!(rel(got, oracle) < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn self_term_is_rigid_motion_invariant() {
        let a = quadrature_self(&ctx(2.0), &seg(0.0, 0.0, 0.2, 0.0), Kernel::Green).unwrap();
        let b = quadrature_self(&ctx(2.0), &seg(1.0, -3.0, 1.0 + 0.12, -3.0 + 0.16), Kernel::Green).unwrap();
        assert!(rel(a, b) < 1e-13);
    }

    #[test]
    fn far_pair_matches_midpoint_rule() {
        let k = c(2.0 * PI, 0.0);
        let test = seg(0.0, 0.0, 0.05, 0.0);
        let src = seg(1.0, 0.3, 1.0, 0.35);
        for kernel in [Kernel::Green, Kernel::NormalDerivative] {
            let got = quadrature_pair(&ctx(k.re), &test, &src, kernel).unwrap().value;
            let mid = match kernel {
                Kernel::Green => green(k, test.midpoint(), src.midpoint()).unwrap(),
                Kernel::NormalDerivative => {
                    green_normal_derivative(k, test.midpoint(), src.midpoint(), src.left_normal()).unwrap()
                }
            } * (test.length() * src.length());
            assert!(rel(got, mid) < 0.01, "{kernel:?}");
        }
    }

    #[test]
    fn zero_length_segment_is_rejected() {
        let s = seg(0.0, 0.0, 0.0, 0.0);
        let t = seg(1.0, 0.0, 1.1, 0.0);
        assert_eq!(
            quadrature_pair(&ctx(1.0), &s, &t, Kernel::Green),
            Err(KernelError::ZeroLength)
        );
    }

    #[test]
    fn adjacent_collinear_segments_are_stable() {
        let test = seg(0.0, 0.0, 0.1, 0.0);
        let src = seg(0.1, 0.0, 0.2, 0.0);
        let base = quadrature_pair(&ctx(6.0), &test, &src, Kernel::Green).unwrap();
        assert!(base.value.re.is_finite() && base.converged);
        let mut tighter = QuadratureOptions::default();
        tighter.order = 16;
        let refined = quadrature_pair_with(&ctx(6.0), &test, &src, Kernel::Green, &tighter).unwrap();
        assert!(rel(base.value, refined.value) < 1e-7);
        // static part by independent closed form for collinear abutting segments:
        // int_0^L int_L^2L ln(s'-s) = L^2 (2 ln 2 + ln L - 3/2)
        let len: f64 = 0.1;
        let static_exact = -(len * len * (2.0 * 2f64.ln() + len.ln() - 1.5)) / (2.0 * PI);
        let tiny_k = quadrature_pair(&ctx(1e-6), &test, &src, Kernel::Green).unwrap().value;
        // with k -> 0 the remainder tends to the constant A = -j/4 - (ln(k/2)+gamma)/2pi
        let a = -0.25 * J - ((1e-6f64 / 2.0).ln() + EULER_GAMMA) / (2.0 * PI);
        assert!((tiny_k - (static_exact + a * len * len)).norm() < 1e-9);
    }

    #[test]
    fn overlapping_nonconformal_segments_agree_with_split_sum() {
        // src [0, 0.1] vs test [0.04, 0.14] equals the sum over pieces of the test
        let c6 = ctx(6.0);
        let src = seg(0.0, 0.0, 0.1, 0.0);
        let whole = quadrature_pair(&c6, &seg(0.04, 0.0, 0.14, 0.0), &src, Kernel::Green).unwrap().value;
        let p1 = quadrature_pair(&c6, &seg(0.04, 0.0, 0.1, 0.0), &src, Kernel::Green).unwrap().value;
        let p2 = quadrature_pair(&c6, &seg(0.1, 0.0, 0.14, 0.0), &src, Kernel::Green).unwrap().value;
        assert!(rel(whole, p1 + p2) < 1e-8, "{whole} vs {}", p1 + p2);
        // reversed orientation of a coincident segment is the same set
        let rev = quadrature_pair(&c6, &seg(0.1, 0.0, 0.0, 0.0), &src, Kernel::Green).unwrap().value;
        let fwd = quadrature_pair(&c6, &src, &src, Kernel::Green).unwrap().value;
        assert!(rel(rev, fwd) < 1e-14);
    }

    #[test]
    fn corner_pair_matches_higher_order() {
        let test = seg(0.0, 0.0, 0.1, 0.0);
        let src = seg(0.1, 0.0, 0.1, 0.1);
        for kernel in [Kernel::Green, Kernel::NormalDerivative] {
            let a = quadrature_pair(&ctx(6.0), &test, &src, kernel).unwrap().value;
            let b = quadrature_pair_with(&ctx(6.0), &test, &src, kernel, &QuadratureOptions::with_order(16).unwrap())
                .unwrap()
                .value;
            assert!(rel(a, b) < 1e-8, "{kernel:?}: {a} vs {b}");
        }
    }

    #[test]
    fn conjugate_wavenumber_maps_to_first_kind_kernel() {
        // G(conj k) = conj((j/4) H0^(1)(k rho)): conjugating k swaps the Hankel kind
        let k = c(3.0, -0.4);
        let r = Point2::new(0.1, 0.2);
        let rp = Point2::new(0.7, -0.1);
        let rho = r.distance(rp);
        let b = specfun::bessel01(k * rho).unwrap();
        let first_kind = 0.25 * J * b.hankel0_1();
        let direct = green(k.conj(), r, rp);
        // conj(k) lies in the upper half-plane, which the kernels refuse
        assert!(direct.is_err());
        let lossless = green(c(3.0, 0.0), r, rp).unwrap();
        let b0 = specfun::bessel01(c(3.0 * rho, 0.0)).unwrap();
        assert!((lossless.conj() - 0.25 * J * b0.hankel0_1()).norm() < 1e-15);
        assert!(first_kind.norm() > 0.0);
    }

    #[test]
    fn point_potentials_match_direct_quadrature() {
        let k = c(5.0, -0.2);
        let src = seg(0.0, 0.0, 0.1, 0.0);
        let opts = QuadratureOptions::default();
        for r in [Point2::new(0.05, 0.01), Point2::new(0.3, -0.2), Point2::new(-0.02, 0.003)] {
            let (g, dg) = point_segment_potentials(k, r, &src, &opts).unwrap();
            // reference: 4000-panel midpoint-free composite Gauss
            let mut gr = Complex64::new(0.0, 0.0);
            let mut dr = Complex64::new(0.0, 0.0);
            let rule = gauss_rule(8);
            let panels = 4000;
            for p in 0..panels {
                let a = 0.1 * p as f64 / panels as f64;
                let b = 0.1 * (p + 1) as f64 / panels as f64;
                for (s, w) in rule.mapped(a, b) {
                    let rp = Point2::new(s, 0.0);
                    gr += w * green(k, r, rp).unwrap();
                    dr += w * green_normal_derivative(k, r, rp, Point2::new(0.0, 1.0)).unwrap();
                }
            }
            assert!(rel(g, gr) < 1e-8, "{r:?}");
            assert!(rel(dg, dr) < 1e-7, "{r:?}: {dg} vs {dr}");
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normal_derivative_matches_finite_difference_everywhere(
                rx in -2.0f64..2.0, ry in -2.0f64..2.0,
                px in -2.0f64..2.0, py in -2.0f64..2.0,
                theta in 0.0f64..(2.0 * PI), k in 0.5f64..6.0, loss in 0.0f64..0.5,
            ) {
                let r = Point2::new(rx, ry);
                let rp = Point2::new(px, py);
                let rho = r.distance(rp);
                prop_assume!(rho > 0.05);
                let kc = c(k, -loss);
                let n = Point2::new(theta.cos(), theta.sin());
                let h = 1e-6 * rho;
                let fd = (green(kc, r, rp + n * h).unwrap() - green(kc, r, rp - n * h).unwrap()) / (2.0 * h);
                let an = green_normal_derivative(kc, r, rp, n).unwrap();
                let scale = (kc * 0.25 * specfun::hankel1_2(kc * rho).unwrap()).norm();
                prop_assert!((an - fd).norm() <= 1e-6 * scale.max(an.norm()));
            }

            #[test]
            fn green_is_symmetric(ax in -3.0f64..3.0, ay in -3.0f64..3.0, bx in -3.0f64..3.0, by in -3.0f64..3.0) {
                prop_assume!((ax - bx).hypot(ay - by) > 1e-6);
                let k = c(2.0, -0.3);
                let a = Point2::new(ax, ay);
                let b = Point2::new(bx, by);
                prop_assert_eq!(green(k, a, b).unwrap(), green(k, b, a).unwrap());
            }

            #[test]
            fn self_term_depends_only_on_length(
                x in -5.0f64..5.0, y in -5.0f64..5.0, theta in 0.0f64..(2.0 * PI), len in 0.01f64..0.3,
            ) {
                let k = ctx(4.0);
                let a = quadrature_self(&k, &seg(0.0, 0.0, len, 0.0), Kernel::Green).unwrap();
                let s = seg(x, y, x + len * theta.cos(), y + len * theta.sin());
                let b = quadrature_self(&k, &s, Kernel::Green).unwrap();
                prop_assert!(rel(a, b) < 1e-12);
            }
        }
    }
}
