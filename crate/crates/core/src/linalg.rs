//! Dense complex linear algebra on top of `faer`: LU solves, norms and
//! condition estimates.

use faer::prelude::*;
use faer::Mat;
use num_complex::Complex64;

pub type CMat = Mat<Complex64>;

/// Systems up to this dimension get an exact SVD condition number in
/// [`ConditionMode::Auto`].
pub const SVD_CONDITION_LIMIT: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConditionMode {
    /// SVD 2-norm condition up to [`SVD_CONDITION_LIMIT`], 1-norm estimate above.
    #[default]
    Auto,
    Svd,
    OneNorm,
    /// Skip the estimate (reported as NaN).
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionEstimate {
    pub value: f64,
    pub kind: ConditionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    TwoNorm,
    OneNorm,
    Skipped,
}

impl ConditionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionKind::TwoNorm => "svd_2norm",
            ConditionKind::OneNorm => "estimate_1norm",
            ConditionKind::Skipped => "skipped",
        }
    }
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    Mat::zeros(rows, cols)
}

pub fn column(values: &[Complex64]) -> CMat {
    Mat::from_fn(values.len(), 1, |i, _| values[i])
}

pub fn to_vec(col: &CMat) -> Vec<Complex64> {
    (0..col.nrows()).map(|i| col[(i, 0)]).collect()
}

pub fn frobenius_norm(m: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Induced 1-norm (largest column sum).
pub fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn matvec(m: &CMat, x: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(m.ncols(), x.len());
    let mut y = vec![Complex64::new(0.0, 0.0); m.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += m[(i, j)] * xj;
        }
    }
    y
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    a * b
}

/// Partial-pivoting LU factorization of a square matrix.
pub struct Lu {
    inner: faer::linalg::solvers::PartialPivLu<Complex64>,
    dim: usize,
    one_norm: f64,
}

impl Lu {
    pub fn new(m: &CMat) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "LU needs a square matrix");
        Lu {
            inner: m.partial_piv_lu(),
            dim: m.nrows(),
            one_norm: one_norm(m),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, rhs: &CMat) -> CMat {
        self.inner.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        to_vec(&self.solve(&column(rhs)))
    }

    fn solve_adjoint_vec(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        to_vec(&self.inner.solve_adjoint(column(rhs)))
    }

    /// Hager–Higham estimate of `||A||_1 ||A^-1||_1`.
    pub fn condition_one_norm(&self) -> f64 {
        let n = self.dim;
        if n == 0 {
            return 0.0;
        }
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.solve_vec(&x);
            let norm_y: f64 = y.iter().map(|v| v.norm()).sum();
            if !norm_y.is_finite() {
                return f64::INFINITY;
            }
            if norm_y <= estimate {
                break;
            }
            estimate = norm_y;
            let signs: Vec<Complex64> = y
                .iter()
                .map(|v| {
                    let a = v.norm();
                    if a == 0.0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        v / a
                    }
                })
                .collect();
            let z = self.solve_adjoint_vec(&signs);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if zmax <= ztx {
                break;
            }
            x = vec![Complex64::new(0.0, 0.0); n];
            x[jmax] = Complex64::new(1.0, 0.0);
        }
        // alternative lower bound from an oscillating vector
        let alt: Vec<Complex64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::new(s * (1.0 + i as f64 / (n as f64 - 1.0).max(1.0)), 0.0)
            })
            .collect();
        let y = self.solve_vec(&alt);
        let alt_est = 2.0 * y.iter().map(|v| v.norm()).sum::<f64>() / (3.0 * n as f64);
        estimate.max(alt_est) * self.one_norm
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s = m
        .singular_values()
        .unwrap_or_else(|_| vec![f64::NAN; m.nrows().min(m.ncols())]);
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

pub fn condition_svd(m: &CMat) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&max), Some(&min)) if min > 0.0 => max / min,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 0.0,
    }
}

/// Condition number of `m` per `mode`; `lu` avoids refactoring for the
/// 1-norm estimator.
pub fn condition(m: &CMat, lu: Option<&Lu>, mode: ConditionMode) -> ConditionEstimate {
    let n = m.nrows();
    let use_svd = match mode {
        ConditionMode::Auto => n <= SVD_CONDITION_LIMIT,
        ConditionMode::Svd => true,
        ConditionMode::OneNorm => false,
        ConditionMode::Off => {
            return ConditionEstimate {
                value: f64::NAN,
                kind: ConditionKind::Skipped,
            }
        }
    };
    if use_svd {
        return ConditionEstimate {
            value: condition_svd(m),
            kind: ConditionKind::TwoNorm,
        };
    }
    let value = match lu {
        Some(lu) => lu.condition_one_norm(),
        None => Lu::new(m).condition_one_norm(),
    };
    ConditionEstimate {
        value,
        kind: ConditionKind::OneNorm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn test_matrix(n: usize) -> CMat {
        Mat::from_fn(n, n, |i, j| {
            let base = c(((i * 7 + j * 13) % 17) as f64 / 17.0, ((i * 3 + j * 5) % 11) as f64 / 11.0);
            if i == j {
                base + c(4.0, 0.0)
            } else {
                base
            }
        })
    }

    #[test]
    fn lu_solve_residual() {
        let m = test_matrix(50);
        let b: Vec<Complex64> = (0..50).map(|i| c(i as f64, -(i as f64) * 0.5)).collect();
        let x = Lu::new(&m).solve_vec(&b);
        let r = matvec(&m, &x);
        let res: Vec<Complex64> = r.iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(vec_norm(&res) / vec_norm(&b) < 1e-13);
    }

    #[test]
    fn diagonal_condition_numbers() {
        let m = Mat::from_fn(4, 4, |i, j| if i == j { c([1.0, 10.0, 0.5, 2.0][i], 0.0) } else { c(0.0, 0.0) });
        assert!((condition_svd(&m) - 20.0).abs() < 1e-12);
        let est = Lu::new(&m).condition_one_norm();
        assert!((est - 20.0).abs() < 1e-12);
        let off = condition(&m, None, ConditionMode::Off);
        assert!(off.value.is_nan());
    }

    #[test]
    fn one_norm_estimate_brackets_true_value() {
        let m = test_matrix(40);
        let lu = Lu::new(&m);
        // exact 1-norm condition from the explicit inverse
        let inv = lu.solve(&Mat::from_fn(40, 40, |i, j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }));
        let exact = one_norm(&m) * one_norm(&inv);
        let est = lu.condition_one_norm();
        assert!(est <= exact * (1.0 + 1e-12));
        assert!(est >= exact / 3.0, "{est} vs {exact}");
    }

    #[test]
    fn singular_matrix_has_infinite_or_huge_condition() {
        let m = Mat::from_fn(3, 3, |i, j| c((i + 1) as f64 * (j + 1) as f64, 0.0));
        assert!(condition_svd(&m) > 1e14);
    }
}
