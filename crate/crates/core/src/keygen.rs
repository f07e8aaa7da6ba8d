//! Watermark key generation.
//!
//! A key is a secret `w x n` transformation matrix. The generating row has
//! `k` nonzero entries at randomly sampled positions with U(0,1) values and
//! unit Euclidean norm; subsequent rows are right cyclic shifts, and after
//! `n` shifts a fresh row is drawn. For `w == n` the matrix is the circulant
//! of its generating row, which is nonsingular exactly when the row's DFT has
//! no zero coefficient. Candidates are screened for full rank and condition
//! number before the pseudoinverse is cached.
//!
//! The serialized key embeds the full matrix so keys are portable across
//! implementations; `(seed, rng_id)` are provenance only. The key file is the
//! entire secret: protect it like a private key (mode 0600 or equivalent).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::error::Error;
use crate::linalg::{
    self, condition_from_singular_values, dft_complex, idft_real, pinv_from_svd, svd_parts, Matrix,
    Vector,
};
use crate::Result;

/// Identifier of the deterministic generator backing seeded key generation.
pub const RNG_ID: &str = "chacha12-seed64-v1";

/// DFT magnitudes at or below this are treated as zero by [`full_rank_check`].
pub const DEFAULT_RANK_EPSILON: f64 = 1e-9;

/// Default acceptance bound on the key condition number.
pub const DEFAULT_MAX_CONDITION: f64 = 1e6;

/// Default number of candidate matrices drawn before giving up.
pub const DEFAULT_MAX_ATTEMPTS: u32 = 16;

/// The seeded stream used by [`generate_key`].
pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Generation parameters for a watermark key.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyParams {
    pub n: usize,
    pub k: usize,
    pub w: usize,
    pub seed: u64,
    pub max_condition: f64,
    pub max_attempts: u32,
}

impl KeyParams {
    pub fn new(n: usize, k: usize, w: usize, seed: u64) -> Result<Self> {
        let params = Self {
            n,
            k,
            w,
            seed,
            max_condition: DEFAULT_MAX_CONDITION,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_max_condition(mut self, max_condition: f64) -> Self {
        self.max_condition = max_condition;
        self
    }

    pub fn with_max_attempts(mut self, max_attempts: u32) -> Self {
        self.max_attempts = max_attempts;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if self.k < 1 || self.k > self.n {
            return Err(Error::InvalidParameter(format!(
                "k must be in [1, n={}], got {}",
                self.n, self.k
            )));
        }
        if self.w < 1 {
            return Err(Error::InvalidParameter("w must be at least 1".into()));
        }
        if self.max_condition.is_nan() || self.max_condition <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "max_condition must exceed 1, got {}",
                self.max_condition
            )));
        }
        if self.max_attempts < 1 {
            return Err(Error::InvalidParameter(
                "max_attempts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A generated watermark key: the secret matrix, its cached pseudoinverse,
/// and provenance.
#[derive(Debug, Clone)]
pub struct WatermarkKey {
    params: KeyParams,
    matrix: Matrix,
    pinv: Matrix,
    condition: f64,
    created_at: String,
}

impl WatermarkKey {
    /// Assemble a key from an explicit matrix without acceptance screening.
    ///
    /// Used when loading key files and for the alternative matrix
    /// constructions, which are allowed to be ill-conditioned or even
    /// rank-deficient; the pseudoinverse falls back to the SVD route
    /// whenever the circulant shortcut does not apply.
    pub fn from_matrix(params: KeyParams, matrix: Matrix) -> Result<Self> {
        params.validate()?;
        if matrix.rows() != params.w || matrix.cols() != params.n {
            return Err(Error::DimensionMismatch {
                context: "key matrix",
                expected: params.w * params.n,
                actual: matrix.rows() * matrix.cols(),
            });
        }
        let (pinv, condition) = assemble_pinv(&matrix);
        Ok(Self {
            params,
            matrix,
            pinv,
            condition,
            created_at: chrono::Utc::now().to_rfc3339(),
        })
    }

    pub fn params(&self) -> &KeyParams {
        &self.params
    }

    /// Original embedding dimension accepted by injection.
    pub fn n(&self) -> usize {
        self.params.n
    }

    /// Nonzero correlations per matrix row.
    pub fn k(&self) -> usize {
        self.params.k
    }

    /// Watermarked embedding dimension.
    pub fn w(&self) -> usize {
        self.params.w
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn pinv(&self) -> &Matrix {
        &self.pinv
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn created_at(&self) -> &str {
        &self.created_at
    }

    /// First 8 hex digits of a SHA-256 over the matrix bytes. Safe to expose:
    /// it identifies the key without revealing it.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for v in self.matrix.values() {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())[..8].to_string()
    }
}

/// A length-`n` row with exactly `k` nonzero entries at distinct sampled
/// positions, values drawn from the open interval (0, 1), then the whole row
/// scaled to unit norm.
pub fn row_gen<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vector> {
    if n == 0 || k < 1 || k > n {
        return Err(Error::InvalidParameter(format!(
            "row_gen requires 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut row = vec![0.0; n];
    let positions = rand::seq::index::sample(rng, n, k);
    for p in positions {
        // Exclude exact zero so the row keeps exactly k nonzero entries.
        row[p] = loop {
            let v: f64 = rng.random();
            if v > 0.0 {
                break v;
            }
        };
    }
    linalg::normalize(&Vector::new(row)?)
}

/// Right cyclic shift: the element at index `j` moves to `(j + 1) mod n`.
pub fn roll_right(row: &[f64]) -> Vec<f64> {
    let n = row.len();
    (0..n).map(|j| row[(j + n - 1) % n]).collect()
}

/// A `w x n` matrix whose first row comes from [`row_gen`]; each subsequent
/// row is the previous row shifted right by one, and after `n` consecutive
/// shifts a fresh generating row is drawn. For `w == n` this is exactly the
/// circulant matrix of the generating row.
pub fn matrix_gen<R: Rng + ?Sized>(n: usize, k: usize, w: usize, rng: &mut R) -> Result<Matrix> {
    if w < 1 {
        return Err(Error::InvalidParameter("w must be at least 1".into()));
    }
    let mut row = row_gen(n, k, rng)?.into_values();
    let mut cnt = 0usize;
    let mut values = Vec::with_capacity(w * n);
    for _ in 0..w {
        values.extend_from_slice(&row);
        row = roll_right(&row);
        cnt += 1;
        if cnt == n {
            row = row_gen(n, k, rng)?.into_values();
            cnt = 0;
        }
    }
    Matrix::new(w, n, values)
}

/// True when every DFT magnitude of the generating row exceeds `epsilon`,
/// which implies the `n x n` circulant of that row is nonsingular (the DFT
/// coefficients are its eigenvalues).
pub fn full_rank_check(generating_row: &Vector, epsilon: f64) -> bool {
    let (re, im) = dft_complex(generating_row.values());
    re.iter().zip(&im).all(|(r, i)| r.hypot(*i) > epsilon)
}

/// Draw candidate matrices under a stream seeded from `params.seed` and
/// accept the first that passes screening; deterministic given the seed.
pub fn generate_key(params: &KeyParams) -> Result<WatermarkKey> {
    let mut rng = seeded_rng(params.seed);
    generate_key_with_rng(params, &mut rng)
}

/// [`generate_key`] over a caller-supplied random stream.
pub fn generate_key_with_rng<R: Rng + ?Sized>(
    params: &KeyParams,
    rng: &mut R,
) -> Result<WatermarkKey> {
    params.validate()?;
    let mut best_condition = f64::INFINITY;
    for _ in 0..params.max_attempts {
        let matrix = matrix_gen(params.n, params.k, params.w, rng)?;
        match screen_candidate(params, &matrix) {
            Some((pinv, condition)) => {
                return Ok(WatermarkKey {
                    params: params.clone(),
                    matrix,
                    pinv,
                    condition,
                    created_at: chrono::Utc::now().to_rfc3339(),
                });
            }
            None => {
                let condition = candidate_condition(params, &matrix);
                if condition < best_condition {
                    best_condition = condition;
                }
            }
        }
    }
    Err(Error::GenerationFailed {
        attempts: params.max_attempts,
        best_condition,
    })
}

fn screen_candidate(params: &KeyParams, matrix: &Matrix) -> Option<(Matrix, f64)> {
    if params.w == params.n {
        let row = matrix.row(0);
        let (re, im) = dft_complex(row);
        let mags: Vec<f64> = re.iter().zip(&im).map(|(r, i)| r.hypot(*i)).collect();
        if !mags.iter().all(|&m| m > DEFAULT_RANK_EPSILON) {
            return None;
        }
        let condition = condition_from_singular_values(&mags);
        if !condition.is_finite() || condition > params.max_condition {
            return None;
        }
        Some((circulant_inverse(&re, &im), condition))
    } else {
        let parts = svd_parts(matrix);
        let condition = condition_from_singular_values(&parts.singular_values);
        if !condition.is_finite() || condition > params.max_condition {
            return None;
        }
        Some((pinv_from_svd(&parts), condition))
    }
}

fn candidate_condition(params: &KeyParams, matrix: &Matrix) -> f64 {
    if params.w == params.n {
        let (re, im) = dft_complex(matrix.row(0));
        let mags: Vec<f64> = re.iter().zip(&im).map(|(r, i)| r.hypot(*i)).collect();
        condition_from_singular_values(&mags)
    } else {
        linalg::condition_number(matrix)
    }
}

/// Pseudoinverse and condition for an arbitrary key matrix. Square matrices
/// that are circulant and nonsingular take the exact spectral route (the
/// eigenvalues of a circulant are the DFT of its generating row, so the
/// inverse is another circulant); everything else goes through the SVD.
/// Both routes agree within 1e-8 on nonsingular circulants.
fn assemble_pinv(matrix: &Matrix) -> (Matrix, f64) {
    if matrix.rows() == matrix.cols() && is_circulant(matrix) {
        let (re, im) = dft_complex(matrix.row(0));
        let mags: Vec<f64> = re.iter().zip(&im).map(|(r, i)| r.hypot(*i)).collect();
        if mags.iter().all(|&m| m > DEFAULT_RANK_EPSILON) {
            let condition = condition_from_singular_values(&mags);
            return (circulant_inverse(&re, &im), condition);
        }
    }
    let parts = svd_parts(matrix);
    let condition = condition_from_singular_values(&parts.singular_values);
    (pinv_from_svd(&parts), condition)
}

fn is_circulant(matrix: &Matrix) -> bool {
    let n = matrix.cols();
    let first = matrix.row(0);
    (1..matrix.rows()).all(|i| {
        let row = matrix.row(i);
        (0..n).all(|j| row[j] == first[(j + n - i) % n])
    })
}

/// Inverse of the nonsingular circulant with spectrum `re + i*im`: take the
/// elementwise reciprocal of the spectrum and transform back.
fn circulant_inverse(re: &[f64], im: &[f64]) -> Matrix {
    let n = re.len();
    let mut inv_re = vec![0.0; n];
    let mut inv_im = vec![0.0; n];
    for j in 0..n {
        let denom = re[j] * re[j] + im[j] * im[j];
        inv_re[j] = re[j] / denom;
        inv_im[j] = -im[j] / denom;
    }
    let d = idft_real(&inv_re, &inv_im);
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            values[i * n + j] = d[(j + n - i) % n];
        }
    }
    Matrix::new(n, n, values).expect("circulant inverse is finite")
}

#[derive(Serialize, Deserialize)]
struct KeyFile {
    version: u32,
    n: usize,
    k: usize,
    w: usize,
    seed: u64,
    rng_id: String,
    roll: String,
    matrix: Vec<Vec<f64>>,
    condition: f64,
    created_at: String,
}

/// Serialize a key to the JSON key file format. The pseudoinverse is not
/// stored; it is recomputed on load.
pub fn save_key(key: &WatermarkKey, path: impl AsRef<Path>) -> Result<()> {
    let file = KeyFile {
        version: 1,
        n: key.n(),
        k: key.k(),
        w: key.w(),
        seed: key.params.seed,
        rng_id: RNG_ID.to_string(),
        roll: "right".to_string(),
        matrix: (0..key.matrix.rows())
            .map(|i| key.matrix.row(i).to_vec())
            .collect(),
        condition: key.condition,
        created_at: key.created_at.clone(),
    };
    let out = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(out), &file)?;
    Ok(())
}

/// Load a key file, rebuilding the pseudoinverse from the embedded matrix.
pub fn load_key(path: impl AsRef<Path>) -> Result<WatermarkKey> {
    let file: KeyFile =
        serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
    if file.version != 1 {
        return Err(Error::InvalidParameter(format!(
            "unsupported key file version {}",
            file.version
        )));
    }
    if file.roll != "right" {
        return Err(Error::InvalidParameter(format!(
            "unsupported roll direction '{}'",
            file.roll
        )));
    }
    let matrix = Matrix::from_rows(file.matrix)?;
    let params = KeyParams::new(file.n, file.k, file.w, file.seed)?;
    let mut key = WatermarkKey::from_matrix(params, matrix)?;
    key.created_at = file.created_at;
    Ok(key)
}
