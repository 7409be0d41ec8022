//! Small dense linear algebra and special functions.
//!
//! Everything here works on tiny matrices (state dimension `n <= 16`), so the
//! routines favour robustness over asymptotic speed: a cyclic Jacobi solver for
//! symmetric problems, a Schur-based spectrum for general matrices, and a
//! Lentz continued fraction for the regularized incomplete beta function.

use nalgebra::{Complex, DMatrix, SVD};

use crate::error::{Error, Result};

/// Dense real `n x n` matrix.
pub type Matrix = DMatrix<f64>;

/// Real symmetric matrix stored as its packed upper triangle (row-major).
///
/// The packed layout holds the `d = n(n+1)/2` free entries. [`SymMatrix::to_svec`]
/// maps it isometrically onto `R^d` (off-diagonal entries scaled by `sqrt(2)`), so
/// that Frobenius inner products become plain dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

/// Number of free entries of an `n x n` symmetric matrix.
pub fn sym_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

#[inline]
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // row i starts after i rows of lengths n, n-1, ..., n-i+1
    i * n - i * (i.saturating_sub(1)) / 2 + (j - i)
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; sym_dim(n)] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, c);
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds from a dense matrix, averaging the two triangles.
    pub fn from_dense(m: &Matrix) -> Self {
        assert!(m.is_square(), "symmetric matrix must be square");
        let n = m.nrows();
        let mut s = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                s.set(i, j, 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        s
    }

    /// Outer product `x x^T`.
    pub fn outer(x: &[f64]) -> Self {
        let n = x.len();
        let mut s = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                s.set(i, j, x[i] * x[j]);
            }
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[packed_index(self.n, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = packed_index(self.n, i, j);
        self.data[k] = v;
    }

    pub fn to_dense(&self) -> Matrix {
        Matrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Isometric coordinates in `R^d`.
    pub fn to_svec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for i in 0..self.n {
            for j in i..self.n {
                let v = self.get(i, j);
                out.push(if i == j { v } else { v * std::f64::consts::SQRT_2 });
            }
        }
        out
    }

    pub fn from_svec(n: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), sym_dim(n), "svec length does not match dimension");
        let mut s = Self::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                s.set(i, j, if i == j { v[k] } else { v[k] / std::f64::consts::SQRT_2 });
                k += 1;
            }
        }
        s
    }

    pub fn frobenius(&self) -> f64 {
        self.to_svec().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Quadratic form `x^T M x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            acc += self.get(i, i) * x[i] * x[i];
            for j in (i + 1)..n {
                acc += 2.0 * self.get(i, j) * x[i] * x[j];
            }
        }
        acc
    }

    /// Congruence `A^T M A`.
    pub fn congruence(&self, a: &Matrix) -> SymMatrix {
        let dense = a.transpose() * self.to_dense() * a;
        SymMatrix::from_dense(&dense)
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix { n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, other: &SymMatrix, c: f64) -> SymMatrix {
        assert_eq!(self.n, other.n);
        SymMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + c * b).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, matching `values`.
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).iter().copied().collect()
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigen-decomposition by the cyclic Jacobi method.
pub fn sym_eig(m: &SymMatrix) -> Result<SymEigen> {
    if !m.is_finite() {
        return Err(Error::Domain("non-finite entry in symmetric matrix".into()));
    }
    let n = m.dim();
    let mut a = m.to_dense();
    let mut v = Matrix::identity(n, n);
    let scale = m.frobenius();
    let mut converged = n <= 1 || scale == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure { what: "Jacobi eigensolver", iterations: JACOBI_MAX_SWEEPS });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen { values, vectors })
}

/// Reassembles `V diag(values) V^T`.
fn reassemble(vectors: &Matrix, values: &[f64]) -> SymMatrix {
    let n = values.len();
    let mut out = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let s = (0..n).map(|k| vectors[(i, k)] * values[k] * vectors[(j, k)]).sum();
            out.set(i, j, s);
        }
    }
    out
}

/// Eccentricity `sqrt(det(P) / lambda_min(P)^n)` of a positive definite matrix.
pub fn kappa(p: &SymMatrix) -> Result<f64> {
    let eig = sym_eig(p)?;
    let lmin = eig.values[0];
    if lmin <= 0.0 {
        return Err(Error::NotPositiveDefinite(lmin));
    }
    // product of lambda_i / lambda_min, accumulated in log space
    let log_ratio: f64 = eig.values.iter().map(|l| (l / lmin).ln()).sum();
    Ok((0.5 * log_ratio).exp())
}

/// Frobenius-nearest matrix with spectrum inside `[lo, hi]`.
pub fn project_spectral_box(m: &SymMatrix, lo: f64, hi: f64) -> Result<SymMatrix> {
    if lo > hi {
        return Err(Error::Domain(format!("empty spectral box [{lo}, {hi}]")));
    }
    let eig = sym_eig(m)?;
    if eig.values.iter().all(|&l| (lo..=hi).contains(&l)) {
        return Ok(m.clone());
    }
    let clamped: Vec<f64> = eig.values.iter().map(|l| l.clamp(lo, hi)).collect();
    Ok(reassemble(&eig.vectors, &clamped))
}

// ---------------------------------------------------------------------------
// General (nonsymmetric) spectra

/// Eigenvalues of a general square matrix (Hessenberg reduction + shifted QR).
///
/// # Panics
/// If the QR iteration fails to converge for every fallback shift.
pub fn eigenvalues(a: &Matrix) -> Vec<Complex<f64>> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    if a.nrows() == 1 {
        return vec![Complex::new(a[(0, 0)], 0.0)];
    }
    // Unshifted equal-modulus spectra (permutation-like adjacency matrices) can
    // stall the QR sweep; a scalar shift separates the moduli.
    let n = a.nrows();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for shift in [0.0, 0.618, -1.414, 2.5] {
        let shift = shift * scale;
        let shifted = a + Matrix::identity(n, n) * shift;
        if let Some(schur) = shifted.try_schur(f64::EPSILON, SCHUR_MAX_ITER * n) {
            return schur.complex_eigenvalues().iter().map(|z| z - shift).collect();
        }
    }
    panic!("Schur decomposition failed for every shift")
}

const SCHUR_MAX_ITER: usize = 1000;

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &Matrix) -> f64 {
    eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Condition number of an eigenvector basis, or `None` when the matrix is
/// numerically defective.
///
/// Eigenvalues closer than `1e-6 * max(1, |A|_F)` are clustered; a cluster of
/// size `k` must have a `k`-dimensional numerical null space in `A - lambda I`.
pub fn eigenvector_condition(a: &Matrix) -> Option<f64> {
    let n = a.nrows();
    if n == 0 {
        return Some(1.0);
    }
    let tol = 1e-6 * a.norm().max(1.0);
    let mut remaining = eigenvalues(a);
    let mut basis: Vec<nalgebra::DVector<Complex<f64>>> = Vec::with_capacity(n);
    let ac: DMatrix<Complex<f64>> = a.map(|v| Complex::new(v, 0.0));
    while let Some(seed) = remaining.pop() {
        let mut cluster = vec![seed];
        remaining.retain(|z| {
            if (z - seed).norm() <= tol {
                cluster.push(*z);
                false
            } else {
                true
            }
        });
        let k = cluster.len();
        let mean = cluster.iter().sum::<Complex<f64>>() / k as f64;
        let shifted = &ac - DMatrix::<Complex<f64>>::identity(n, n) * mean;
        let svd = SVD::new(shifted, false, true);
        let vt = svd.v_t.as_ref()?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        let null_dim = order.iter().take_while(|&&i| svd.singular_values[i] <= tol).count();
        if null_dim < k {
            return None;
        }
        for &i in order.iter().take(k) {
            basis.push(vt.row(i).adjoint());
        }
    }
    let v = DMatrix::from_columns(&basis);
    let sv = SVD::new(v, false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 {
        return None;
    }
    Some(smax / smin)
}

// ---------------------------------------------------------------------------
// Special functions

/// Neumaier-compensated sum; error independent of the number of terms.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

const BETA_CF_MAX_ITER: usize = 100_000;

/// Continued fraction for `I_x(a, b)` (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() <= EPS {
            return Ok(h);
        }
    }
    Err(Error::ConvergenceFailure { what: "incomplete beta continued fraction", iterations: BETA_CF_MAX_ITER })
}

/// `I_x(a,b)` evaluated directly (no symmetry), assuming `0 < x < 1`.
fn beta_front_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    let log_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    Ok(log_front.exp() * beta_cf(x, a, b)? / a)
}

fn check_beta_args(x: f64, a: f64, b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) || x.is_nan() {
        return Err(Error::Domain(format!("incomplete beta argument x = {x} outside [0, 1]")));
    }
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("incomplete beta parameters a = {a}, b = {b} must be positive")));
    }
    Ok(())
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    check_beta_args(x, a, b)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        Ok(1.0 - beta_front_cf(1.0 - x, b, a)?)
    } else {
        beta_front_cf(x, a, b)
    }
}

/// Upper tail `1 - I_x(a, b)` without cancellation for tiny results.
pub fn reg_inc_beta_upper(x: f64, a: f64, b: f64) -> Result<f64> {
    check_beta_args(x, a, b)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x == 1.0 {
        return Ok(0.0);
    }
    // 1 - I_x(a,b) = I_{1-x}(b,a)
    let y = 1.0 - x;
    if y > (b + 1.0) / (a + b + 2.0) {
        Ok(1.0 - beta_front_cf(x, a, b)?)
    } else {
        beta_front_cf(y, b, a)
    }
}

const INV_MAX_ITER: usize = 5_000;

/// Inverse of `x -> I_x(a, b)` by bisection.
///
/// The bracket is halved geometrically while it spans several orders of
/// magnitude, so tiny quantiles keep full relative precision.
pub fn reg_inc_beta_inv(p: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    check_beta_args(0.5, a, b)?;
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..INV_MAX_ITER {
        let mid = if lo == 0.0 {
            if hi > 1e-3 { 0.5 * hi } else { hi * 1e-4 }
        } else if hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if mid <= lo || mid >= hi {
            break;
        }
        let f = reg_inc_beta(mid, a, b)?;
        if f == p {
            return Ok(mid);
        }
        if f < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi {
            break;
        }
    }
    // whichever endpoint is closer in function value
    let flo = reg_inc_beta(lo, a, b)?;
    let fhi = reg_inc_beta(hi, a, b)?;
    Ok(if (flo - p).abs() <= (fhi - p).abs() { lo } else { hi })
}
