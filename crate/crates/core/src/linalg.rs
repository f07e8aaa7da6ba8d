//! Dense linear algebra used by every other module.
//!
//! All arithmetic is f64. Vectors and matrices validate finiteness on
//! construction, so downstream code can assume well-formed values.
//! The pseudoinverse goes through an SVD with a relative singular-value
//! cutoff of [`SINGULAR_CUTOFF`], which handles rank-deficient matrices
//! uniformly; for square full-rank matrices it agrees with direct inversion.

use crate::error::Error;
use crate::Result;

/// Relative singular-value cutoff: singular values below
/// `SINGULAR_CUTOFF * sigma_max` are treated as zero.
pub const SINGULAR_CUTOFF: f64 = 1e-10;

/// Relative threshold below which the condition number reports infinity.
pub const CONDITION_SINGULAR_THRESHOLD: f64 = 1e-12;

/// A dense real vector with at least one element and all values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    values: Vec<f64>,
}

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter(
                "vector must have at least one element".into(),
            ));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context: "dot",
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn scale(&self, c: f64) -> Result<Vector> {
        Vector::new(self.values.iter().map(|v| v * c).collect())
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context: "add",
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Vector::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Vector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context: "max_abs_diff",
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// A dense row-major real matrix with all values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(
                "matrix must have at least one row and one column".into(),
            ));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidParameter(format!(
                "matrix needs {} values for {}x{}, got {}",
                rows * cols,
                rows,
                cols,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidParameter(
                "all matrix rows must have equal length".into(),
            ));
        }
        Matrix::new(nrows, ncols, rows.into_iter().flatten().collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                values[j * self.rows + i] = self.get(i, j);
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &Vector) -> Result<Vector> {
        if v.dim() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "mul_vec",
                expected: self.cols,
                actual: v.dim(),
            });
        }
        let out = (0..self.rows)
            .map(|i| self.row(i).iter().zip(v.values()).map(|(m, x)| m * x).sum())
            .collect();
        Vector::new(out)
    }

    /// Matrix-matrix product.
    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "mul",
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut values = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let dst = &mut values[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Matrix::new(self.rows, other.cols, values)
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context: "max_abs_diff",
                expected: self.rows * self.cols,
                actual: other.rows * other.cols,
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `max |self * other - I|`, the residual against the identity.
    pub fn identity_residual(&self, other: &Matrix) -> Result<f64> {
        let product = self.mul(other)?;
        if product.rows != product.cols {
            return Err(Error::DimensionMismatch {
                context: "identity_residual",
                expected: product.rows,
                actual: product.cols,
            });
        }
        product.max_abs_diff(&Matrix::identity(product.rows))
    }
}

/// Magnitudes of the discrete Fourier coefficients of `row`.
///
/// Direct O(n^2) evaluation with a precomputed twiddle table; generation-time
/// use only, so no FFT is needed.
pub fn dft_magnitudes(row: &Vector) -> Result<Vector> {
    let (re, im) = dft_complex(row.values());
    Vector::new(
        re.iter()
            .zip(&im)
            .map(|(r, i)| r.hypot(*i))
            .collect::<Vec<_>>(),
    )
}

/// Full complex DFT of a real sequence. Twiddles are indexed by
/// `(j * t) mod n` so each angle is computed once.
pub(crate) fn dft_complex(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let step = -2.0 * std::f64::consts::PI / n as f64;
    let twiddle: Vec<(f64, f64)> = (0..n)
        .map(|t| {
            let angle = step * t as f64;
            (angle.cos(), angle.sin())
        })
        .collect();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for j in 0..n {
        let mut acc_re = 0.0;
        let mut acc_im = 0.0;
        for (t, &x) in values.iter().enumerate() {
            let (c, s) = twiddle[(j * t) % n];
            acc_re += x * c;
            acc_im += x * s;
        }
        re[j] = acc_re;
        im[j] = acc_im;
    }
    (re, im)
}

/// Inverse complex DFT, returning only the real part (callers pass spectra
/// with conjugate symmetry, so the imaginary part is rounding noise).
pub(crate) fn idft_real(re: &[f64], im: &[f64]) -> Vec<f64> {
    let n = re.len();
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let twiddle: Vec<(f64, f64)> = (0..n)
        .map(|t| {
            let angle = step * t as f64;
            (angle.cos(), angle.sin())
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut acc = 0.0;
            for j in 0..n {
                let (c, s) = twiddle[(j * t) % n];
                acc += re[j] * c - im[j] * s;
            }
            acc / n as f64
        })
        .collect()
}

pub(crate) struct SvdParts {
    pub u: nalgebra::DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: nalgebra::DMatrix<f64>,
}

pub(crate) fn svd_parts(m: &Matrix) -> SvdParts {
    let dm = nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.values());
    let svd = dm.svd(true, true);
    SvdParts {
        u: svd.u.expect("svd requested u"),
        singular_values: svd.singular_values.iter().copied().collect(),
        v_t: svd.v_t.expect("svd requested v_t"),
    }
}

pub(crate) fn pinv_from_svd(parts: &SvdParts) -> Matrix {
    let cutoff = SINGULAR_CUTOFF * parts.singular_values.iter().copied().fold(0.0, f64::max);
    // pinv = V * inv(Sigma) * U^T, zeroing singular values below the cutoff.
    let r = parts.singular_values.len();
    let mut sigma_inv_ut = nalgebra::DMatrix::<f64>::zeros(r, parts.u.nrows());
    for i in 0..r {
        let s = parts.singular_values[i];
        if s > cutoff {
            let inv = 1.0 / s;
            for j in 0..parts.u.nrows() {
                sigma_inv_ut[(i, j)] = inv * parts.u[(j, i)];
            }
        }
    }
    let pinv = parts.v_t.transpose() * sigma_inv_ut;
    let (rows, cols) = pinv.shape();
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            values.push(pinv[(i, j)]);
        }
    }
    Matrix::new(rows, cols, values).expect("pseudoinverse is finite")
}

/// Moore-Penrose pseudoinverse via SVD.
///
/// Singular values below `SINGULAR_CUTOFF * sigma_max` are treated as zero,
/// so rank-deficient input is handled without error. For a matrix with
/// linearly independent rows the result is a right inverse.
pub fn pseudoinverse(m: &Matrix) -> Result<Matrix> {
    Ok(pinv_from_svd(&svd_parts(m)))
}

/// Ratio of the largest to the smallest singular value; `f64::INFINITY` when
/// the smallest falls below `CONDITION_SINGULAR_THRESHOLD * sigma_max`.
pub fn condition_number(m: &Matrix) -> f64 {
    let parts = svd_parts(m);
    condition_from_singular_values(&parts.singular_values)
}

pub(crate) fn condition_from_singular_values(singular_values: &[f64]) -> f64 {
    let s_max = singular_values.iter().copied().fold(0.0, f64::max);
    let s_min = singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if s_max == 0.0 || s_min < CONDITION_SINGULAR_THRESHOLD * s_max {
        f64::INFINITY
    } else {
        s_max / s_min
    }
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "cosine",
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm("cosine"));
    }
    Ok((a.dot(b)? / (na * nb)).clamp(-1.0, 1.0))
}

/// Scale `a` to unit Euclidean norm. Divides rather than multiplying by the
/// reciprocal so exact cases (e.g. [3,4] -> [0.6, 0.8]) stay exact.
pub fn normalize(a: &Vector) -> Result<Vector> {
    let n = a.norm();
    if n == 0.0 {
        return Err(Error::ZeroNorm("normalize"));
    }
    Vector::new(a.values().iter().map(|v| v / n).collect())
}

/// Pairwise (cascade) summation: deterministic and more accurate than a
/// running sum, independent of how the inputs were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (lo, hi) = xs.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// Arithmetic mean via pairwise summation.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}
