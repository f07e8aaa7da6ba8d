//! Alternative transformation-matrix constructions and hyperdimension
//! obfuscation analysis.
//!
//! The alternative constructions relax properties of the default rolled
//! sparse matrix (fresh weights per row, fresh positions, equal weights,
//! sequential positions, and the equal+sequential combination). They are
//! generated without the key module's acceptance screening on purpose:
//! several of them are ill-conditioned or singular, and the comparison
//! harness exists to show how that degrades verification.
//!
//! Hyperdimension obfuscation hides synthetic linearly-mixed coordinates
//! among original ones instead of transforming the whole embedding. Two
//! detectors expose it: absolute column Pearson correlation against the
//! originals, and the weights of a least-squares regression used as feature
//! importance.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::attack::{derive_seed, gaussian_perturb, NoiseConfig};
use crate::codec::{self, EmbeddingRecord};
use crate::corpus;
use crate::error::Error;
use crate::keygen::{self, matrix_gen, row_gen, seeded_rng, KeyParams, WatermarkKey};
use crate::linalg::{
    condition_from_singular_values, mean, pinv_from_svd, svd_parts, Matrix, Vector,
};
use crate::par;
use crate::verifier;
use crate::Result;

/// Absolute Pearson correlation above which a column pair is flagged.
pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.4;

/// Default ridge term for the importance regression.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// The transformation-matrix constructions under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantKind {
    /// Rolled sparse rows with random positions and weights (the default).
    #[serde(rename = "circulant-default")]
    CirculantDefault,
    /// Positions roll like the default, but every row draws fresh weights.
    #[serde(rename = "new-weights-circulant")]
    NewWeightsCirculant,
    /// Fresh positions and fresh weights for every row; nothing rolls.
    #[serde(rename = "random")]
    Random,
    /// Rolled rows whose nonzero entries are all `1/k` (not renormalized,
    /// so each row has norm `1/sqrt(k)`).
    #[serde(rename = "equal-weights-circulant")]
    EqualWeightsCirculant,
    /// Rolled rows with the nonzeros packed into the first `k` positions.
    #[serde(rename = "sequential-positions-circulant")]
    SequentialPositionsCirculant,
    /// First `k` positions and equal `1/k` weights; fully deterministic.
    #[serde(rename = "sequential-equal-circulant")]
    SequentialEqualCirculant,
}

impl VariantKind {
    pub const ALL: [VariantKind; 6] = [
        VariantKind::CirculantDefault,
        VariantKind::NewWeightsCirculant,
        VariantKind::Random,
        VariantKind::EqualWeightsCirculant,
        VariantKind::SequentialPositionsCirculant,
        VariantKind::SequentialEqualCirculant,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            VariantKind::CirculantDefault => "circulant-default",
            VariantKind::NewWeightsCirculant => "new-weights-circulant",
            VariantKind::Random => "random",
            VariantKind::EqualWeightsCirculant => "equal-weights-circulant",
            VariantKind::SequentialPositionsCirculant => "sequential-positions-circulant",
            VariantKind::SequentialEqualCirculant => "sequential-equal-circulant",
        }
    }
}

impl std::str::FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("unknown variant kind '{s}'")))
    }
}

impl std::fmt::Display for VariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Generate a `w x n` matrix under the given construction.
pub fn variant_matrix_gen<R: Rng + ?Sized>(
    kind: VariantKind,
    n: usize,
    k: usize,
    w: usize,
    rng: &mut R,
) -> Result<Matrix> {
    if n < 1 || k < 1 || k > n || w < 1 {
        return Err(Error::InvalidParameter(format!(
            "variant generation requires 1 <= k <= n and w >= 1, got n={n}, k={k}, w={w}"
        )));
    }
    match kind {
        VariantKind::CirculantDefault => matrix_gen(n, k, w, rng),
        VariantKind::Random => {
            let mut values = Vec::with_capacity(w * n);
            for _ in 0..w {
                values.extend_from_slice(row_gen(n, k, rng)?.values());
            }
            Matrix::new(w, n, values)
        }
        VariantKind::NewWeightsCirculant => {
            // The sparsity pattern rolls exactly like the default, but the
            // weights are redrawn for every row, which forfeits the
            // invertibility the rolled structure would otherwise give.
            let mut base: Vec<usize> = rand::seq::index::sample(rng, n, k).into_vec();
            let mut cnt = 0usize;
            let mut values = Vec::with_capacity(w * n);
            for _ in 0..w {
                let mut row = vec![0.0; n];
                for &p in &base {
                    row[(p + cnt) % n] = positive_unit_draw(rng);
                }
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                values.extend(row.into_iter().map(|v| v / norm));
                cnt += 1;
                if cnt == n {
                    base = rand::seq::index::sample(rng, n, k).into_vec();
                    cnt = 0;
                }
            }
            Matrix::new(w, n, values)
        }
        VariantKind::EqualWeightsCirculant => rolled_matrix(
            n,
            w,
            &mut |rng| {
                let mut row = vec![0.0; n];
                for p in rand::seq::index::sample(rng, n, k) {
                    row[p] = 1.0 / k as f64;
                }
                row
            },
            rng,
        ),
        VariantKind::SequentialPositionsCirculant => rolled_matrix(
            n,
            w,
            &mut |rng| {
                let mut row = vec![0.0; n];
                for slot in row.iter_mut().take(k) {
                    *slot = positive_unit_draw(rng);
                }
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                row.iter_mut().for_each(|v| *v /= norm);
                row
            },
            rng,
        ),
        VariantKind::SequentialEqualCirculant => rolled_matrix(
            n,
            w,
            &mut |_| {
                let mut row = vec![0.0; n];
                for slot in row.iter_mut().take(k) {
                    *slot = 1.0 / k as f64;
                }
                row
            },
            rng,
        ),
    }
}

fn positive_unit_draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            return v;
        }
    }
}

/// Roll-with-regeneration loop shared by the rolled constructions.
fn rolled_matrix<R: Rng + ?Sized>(
    n: usize,
    w: usize,
    gen_row: &mut dyn FnMut(&mut R) -> Vec<f64>,
    rng: &mut R,
) -> Result<Matrix> {
    let mut row = gen_row(rng);
    let mut cnt = 0usize;
    let mut values = Vec::with_capacity(w * n);
    for _ in 0..w {
        values.extend_from_slice(&row);
        row = keygen::roll_right(&row);
        cnt += 1;
        if cnt == n {
            row = gen_row(rng);
            cnt = 0;
        }
    }
    Matrix::new(w, n, values)
}

/// Assemble a key from a variant construction without acceptance screening;
/// rank-deficient variants get a cutoff pseudoinverse instead of an error.
pub fn variant_key(
    kind: VariantKind,
    n: usize,
    k: usize,
    w: usize,
    seed: u64,
) -> Result<WatermarkKey> {
    let mut rng = seeded_rng(seed);
    let matrix = variant_matrix_gen(kind, n, k, w, &mut rng)?;
    WatermarkKey::from_matrix(KeyParams::new(n, k, w, seed)?, matrix)
}

/// One row of the variant comparison.
#[derive(Debug, Clone, Serialize)]
pub struct VariantComparison {
    pub kind: VariantKind,
    pub n: usize,
    pub k: usize,
    pub w: usize,
    pub samples: usize,
    pub seed: u64,
    pub surrogate_noise: f64,
    pub condition: f64,
    pub avg_cos_w: f64,
    pub delta_cos: f64,
    pub auc: f64,
}

/// End-to-end verification quality per construction on a synthetic corpus.
///
/// Each kind watermarks the corpus with two independently seeded keys (the
/// second plays the contrast model); a small Gaussian perturbation models an
/// imperfect copy, which is what exposes ill-conditioned constructions —
/// with noiseless embeddings even a terribly conditioned inverse recovers
/// the original exactly. The fully deterministic sequential-equal
/// construction yields the same matrix for any seed, so its watermark and
/// contrast sets are indistinguishable by construction.
pub fn compare_variants(
    kinds: &[VariantKind],
    n: usize,
    k: usize,
    w: usize,
    samples: usize,
    seed: u64,
    surrogate_noise: f64,
) -> Result<Vec<VariantComparison>> {
    if samples < 1 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    let originals = corpus::synthetic_unit_corpus(n, samples, derive_seed(seed, &[17]), "v")?;
    kinds
        .iter()
        .map(|&kind| {
            let key_a = variant_key(kind, n, k, w, derive_seed(seed, &[kind_tag(kind), 0]))?;
            let key_b = variant_key(kind, n, k, w, derive_seed(seed, &[kind_tag(kind), 1]))?;
            let noise = NoiseConfig::new(surrogate_noise, 1, seed)?;
            let mark = |key: &WatermarkKey, salt: u64| -> Result<Vec<EmbeddingRecord>> {
                let indexed: Vec<(usize, &EmbeddingRecord)> =
                    originals.iter().enumerate().collect();
                par::map_slice(&indexed, |(i, r)| -> Result<EmbeddingRecord> {
                    let injected = codec::inject(key, &r.vector)?;
                    let mut rng = seeded_rng(derive_seed(seed, &[salt, *i as u64]));
                    let noisy = if surrogate_noise == 0.0 {
                        injected
                    } else {
                        gaussian_perturb(&injected, &noise, &mut rng)?
                    };
                    Ok(EmbeddingRecord::new(r.id.clone(), noisy))
                })
                .into_iter()
                .collect()
            };
            let suspect_w = mark(&key_a, 100)?;
            let suspect_c = mark(&key_b, 200)?;
            let report =
                verifier::verify(&key_a, &suspect_w, &originals, &suspect_c, &originals, 10.0)?;
            Ok(VariantComparison {
                kind,
                n,
                k,
                w,
                samples,
                seed,
                surrogate_noise,
                condition: key_a.condition(),
                avg_cos_w: mean(&report.cos_w),
                delta_cos: report.delta_cos,
                auc: report.auc,
            })
        })
        .collect()
}

fn kind_tag(kind: VariantKind) -> u64 {
    VariantKind::ALL.iter().position(|k| *k == kind).unwrap() as u64 + 1
}

/// CSV emitter for [`compare_variants`] rows.
pub fn write_variant_csv(rows: &[VariantComparison], writer: impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "kind",
        "n",
        "k",
        "w",
        "samples",
        "seed",
        "surrogate_noise",
        "condition",
        "avg_cos_w",
        "delta_cos",
        "auc",
    ])?;
    for r in rows {
        csv.write_record([
            r.kind.name().to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.w.to_string(),
            r.samples.to_string(),
            r.seed.to_string(),
            format!("{}", r.surrogate_noise),
            format!("{}", r.condition),
            format!("{}", r.avg_cos_w),
            format!("{}", r.delta_cos),
            format!("{}", r.auc),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Placement of synthetic hyperdimensions inside a combined embedding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObfuscationLayout {
    /// Original embedding dimension.
    pub n: usize,
    /// Number of inserted hyperdimensions.
    pub w_extra: usize,
    /// Sorted distinct indices of the hyperdimensions within the combined
    /// `(n + w_extra)`-dimensional embedding.
    pub positions: Vec<usize>,
    /// Original dimensions mixed into each hyperdimension.
    pub k: usize,
}

impl ObfuscationLayout {
    pub fn new(n: usize, w_extra: usize, positions: Vec<usize>, k: usize) -> Result<Self> {
        if n < 1 || k < 1 || k > n {
            return Err(Error::InvalidParameter(format!(
                "layout requires 1 <= k <= n, got n={n}, k={k}"
            )));
        }
        if positions.len() != w_extra {
            return Err(Error::InvalidParameter(format!(
                "layout needs {w_extra} positions, got {}",
                positions.len()
            )));
        }
        let combined = n + w_extra;
        if positions.windows(2).any(|p| p[0] >= p[1]) || positions.iter().any(|&p| p >= combined) {
            return Err(Error::InvalidParameter(
                "positions must be sorted, distinct, and within the combined dimension".into(),
            ));
        }
        Ok(Self {
            n,
            w_extra,
            positions,
            k,
        })
    }

    /// Randomly placed hyperdimensions.
    pub fn random<R: Rng + ?Sized>(
        n: usize,
        w_extra: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut positions = if w_extra == 0 {
            Vec::new()
        } else {
            rand::seq::index::sample(rng, n + w_extra, w_extra).into_vec()
        };
        positions.sort_unstable();
        Self::new(n, w_extra, positions, k)
    }

    pub fn combined_dim(&self) -> usize {
        self.n + self.w_extra
    }

    /// Indices of the original coordinates within the combined embedding.
    pub fn original_columns(&self) -> Vec<usize> {
        let mut hyper = self.positions.iter().peekable();
        (0..self.combined_dim())
            .filter(|i| {
                if hyper.peek() == Some(&i) {
                    hyper.next();
                    false
                } else {
                    true
                }
            })
            .collect()
    }
}

/// Generate the `w_extra x n` mixing matrix whose rows are built like the
/// key generator's rows (`k` sampled positions, U(0,1) weights, unit norm).
pub fn mixing_matrix_gen<R: Rng + ?Sized>(
    layout: &ObfuscationLayout,
    rng: &mut R,
) -> Result<Matrix> {
    if layout.w_extra == 0 {
        return Err(Error::InvalidParameter(
            "a layout with no hyperdimensions needs no mixing matrix".into(),
        ));
    }
    let mut values = Vec::with_capacity(layout.w_extra * layout.n);
    for _ in 0..layout.w_extra {
        values.extend_from_slice(row_gen(layout.n, layout.k, rng)?.values());
    }
    Matrix::new(layout.w_extra, layout.n, values)
}

/// Insert `mixing * e_o` values at the layout's positions, preserving the
/// original coordinates in order. With `w_extra == 0` the embedding passes
/// through unchanged and `mixing` may be `None`.
pub fn obfuscate_hyperdims(
    layout: &ObfuscationLayout,
    mixing: Option<&Matrix>,
    e_o: &Vector,
) -> Result<Vector> {
    if e_o.dim() != layout.n {
        return Err(Error::DimensionMismatch {
            context: "obfuscate_hyperdims",
            expected: layout.n,
            actual: e_o.dim(),
        });
    }
    if layout.w_extra == 0 {
        return Ok(e_o.clone());
    }
    let mixing = mixing
        .ok_or_else(|| Error::InvalidParameter("mixing matrix required when w_extra > 0".into()))?;
    if mixing.rows() != layout.w_extra || mixing.cols() != layout.n {
        return Err(Error::DimensionMismatch {
            context: "mixing matrix",
            expected: layout.w_extra * layout.n,
            actual: mixing.rows() * mixing.cols(),
        });
    }
    let synthetic = mixing.mul_vec(e_o)?;
    let mut out = vec![0.0; layout.combined_dim()];
    for (j, &pos) in layout.positions.iter().enumerate() {
        out[pos] = synthetic.values()[j];
    }
    let mut source = e_o.values().iter();
    let mut hyper = layout.positions.iter().peekable();
    for (i, slot) in out.iter_mut().enumerate() {
        if hyper.peek() == Some(&&i) {
            hyper.next();
        } else {
            *slot = *source.next().expect("slot count matches original dim");
        }
    }
    Vector::new(out)
}

/// Delete the layout's positions, recovering the original embedding exactly.
pub fn remove_hyperdims(layout: &ObfuscationLayout, e: &Vector) -> Result<Vector> {
    if e.dim() != layout.combined_dim() {
        return Err(Error::DimensionMismatch {
            context: "remove_hyperdims",
            expected: layout.combined_dim(),
            actual: e.dim(),
        });
    }
    let mut hyper = layout.positions.iter().peekable();
    let values: Vec<f64> = e
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            if hyper.peek() == Some(&i) {
                hyper.next();
                false
            } else {
                true
            }
        })
        .map(|(_, v)| *v)
        .collect();
    Vector::new(values)
}

/// Sample Pearson correlations between every hyperdimension column and every
/// original column.
#[derive(Debug, Clone)]
pub struct CorrelationReport {
    /// `w_extra x n` coefficients, indexed `[hyper][original]`; `NaN` where
    /// either column has zero variance.
    pub coefficients: Vec<Vec<f64>>,
    /// Combined-embedding indices of columns skipped for zero variance.
    pub zero_variance_columns: Vec<usize>,
    pub hyper_columns: Vec<usize>,
    pub original_columns: Vec<usize>,
}

/// A column pair whose absolute correlation exceeded the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedPair {
    /// Combined-embedding index of the hyperdimension column.
    pub hyper_column: usize,
    /// Combined-embedding index of the original column.
    pub original_column: usize,
    pub r: f64,
}

pub fn pearson_matrix(corpus: &[Vector], layout: &ObfuscationLayout) -> Result<CorrelationReport> {
    if corpus.len() < 3 {
        return Err(Error::InvalidParameter(
            "correlation analysis needs at least 3 samples".into(),
        ));
    }
    let dim = layout.combined_dim();
    if let Some(bad) = corpus.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            context: "pearson corpus",
            expected: dim,
            actual: bad.dim(),
        });
    }
    let samples = corpus.len() as f64;
    let means: Vec<f64> = (0..dim)
        .map(|c| corpus.iter().map(|v| v.values()[c]).sum::<f64>() / samples)
        .collect();
    let sq_dev: Vec<f64> = (0..dim)
        .map(|c| {
            corpus
                .iter()
                .map(|v| {
                    let d = v.values()[c] - means[c];
                    d * d
                })
                .sum::<f64>()
        })
        .collect();
    let zero_variance_columns: Vec<usize> = (0..dim).filter(|&c| sq_dev[c] == 0.0).collect();

    let hyper_columns = layout.positions.clone();
    let original_columns = layout.original_columns();
    let coefficients = par::map_slice(&hyper_columns, |&h| {
        original_columns
            .iter()
            .map(|&o| {
                if sq_dev[h] == 0.0 || sq_dev[o] == 0.0 {
                    return f64::NAN;
                }
                let cov: f64 = corpus
                    .iter()
                    .map(|v| (v.values()[h] - means[h]) * (v.values()[o] - means[o]))
                    .sum();
                cov / (sq_dev[h] * sq_dev[o]).sqrt()
            })
            .collect::<Vec<f64>>()
    });
    Ok(CorrelationReport {
        coefficients,
        zero_variance_columns,
        hyper_columns,
        original_columns,
    })
}

/// All (hyperdimension, original) column pairs with `|r| > threshold`.
/// Zero-variance columns are skipped and reported rather than failing the
/// whole analysis.
pub fn pearson_flags(
    corpus: &[Vector],
    layout: &ObfuscationLayout,
    threshold: f64,
) -> Result<(Vec<FlaggedPair>, Vec<usize>)> {
    let report = pearson_matrix(corpus, layout)?;
    let mut flags = Vec::new();
    for (hi, &h) in report.hyper_columns.iter().enumerate() {
        for (oi, &o) in report.original_columns.iter().enumerate() {
            let r = report.coefficients[hi][oi];
            if r.is_finite() && r.abs() > threshold {
                flags.push(FlaggedPair {
                    hyper_column: h,
                    original_column: o,
                    r,
                });
            }
        }
    }
    Ok((flags, report.zero_variance_columns))
}

/// CSV emitter for the correlation matrix: one row per hyperdimension,
/// one column per original dimension; zero-variance entries are blank.
pub fn write_correlation_csv(report: &CorrelationReport, writer: impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["hyper_column".to_string()];
    header.extend(report.original_columns.iter().map(|o| format!("orig_{o}")));
    csv.write_record(&header)?;
    for (hi, &h) in report.hyper_columns.iter().enumerate() {
        let mut row = vec![h.to_string()];
        row.extend(report.coefficients[hi].iter().map(|r| {
            if r.is_finite() {
                format!("{r}")
            } else {
                String::new()
            }
        }));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

/// Least-squares feature importance: the minimizer of
/// `sum (label - w . feature)^2 + ridge * ||w||^2` via the normal equations
/// and the SVD pseudoinverse.
///
/// With `ridge == 0` the system must be overdetermined and numerically
/// nonsingular; [`DEFAULT_RIDGE`] keeps the plain regression's behavior
/// while tolerating degenerate designs.
pub fn least_squares_importance(features: &[Vector], labels: &[f64], ridge: f64) -> Result<Vector> {
    if features.is_empty() {
        return Err(Error::InvalidParameter(
            "importance regression needs at least one sample".into(),
        ));
    }
    if features.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "feature and label counts differ ({} vs {})",
            features.len(),
            labels.len()
        )));
    }
    if ridge.is_nan() || ridge < 0.0 {
        return Err(Error::InvalidParameter("ridge must be non-negative".into()));
    }
    let dim = features[0].dim();
    if let Some(bad) = features.iter().find(|f| f.dim() != dim) {
        return Err(Error::DimensionMismatch {
            context: "importance features",
            expected: dim,
            actual: bad.dim(),
        });
    }
    if ridge == 0.0 && features.len() <= dim {
        return Err(Error::InvalidParameter(format!(
            "plain least squares needs more samples than features ({} <= {dim}); enable ridge",
            features.len()
        )));
    }

    // Normal equations: (X^T X + ridge I) w = X^T y.
    let mut xtx = vec![0.0; dim * dim];
    let mut xty = vec![0.0; dim];
    for (feature, &label) in features.iter().zip(labels) {
        let values = feature.values();
        for i in 0..dim {
            xty[i] += values[i] * label;
            let row = &mut xtx[i * dim..(i + 1) * dim];
            let vi = values[i];
            for (j, slot) in row.iter_mut().enumerate() {
                *slot += vi * values[j];
            }
        }
    }
    for i in 0..dim {
        xtx[i * dim + i] += ridge;
    }
    let gram = Matrix::new(dim, dim, xtx)?;
    let parts = svd_parts(&gram);
    if ridge == 0.0 && !condition_from_singular_values(&parts.singular_values).is_finite() {
        return Err(Error::DegenerateInput(
            "singular normal equations; enable ridge regularization".into(),
        ));
    }
    pinv_from_svd(&parts).mul_vec(&Vector::new(xty)?)
}

/// CSV emitter for importance weights: `column,role,weight`.
pub fn write_importance_csv(
    weights: &Vector,
    layout: &ObfuscationLayout,
    writer: impl Write,
) -> Result<()> {
    if weights.dim() != layout.combined_dim() {
        return Err(Error::DimensionMismatch {
            context: "importance weights",
            expected: layout.combined_dim(),
            actual: weights.dim(),
        });
    }
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["column", "role", "weight"])?;
    let mut hyper = layout.positions.iter().peekable();
    for (i, wgt) in weights.values().iter().enumerate() {
        let role = if hyper.peek() == Some(&&i) {
            hyper.next();
            "hyper"
        } else {
            "original"
        };
        csv.write_record([i.to_string(), role.to_string(), format!("{wgt}")])?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keygen::DEFAULT_RANK_EPSILON;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn positions_of(row: &[f64]) -> Vec<usize> {
        row.iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    fn rolled_positions(positions: &[usize], shift: usize, n: usize) -> Vec<usize> {
        let mut out: Vec<usize> = positions.iter().map(|p| (p + shift) % n).collect();
        out.sort_unstable();
        out
    }

    #[test]
    fn equal_weights_rows_have_value_one_over_k() {
        let m =
            variant_matrix_gen(VariantKind::EqualWeightsCirculant, 4, 2, 4, &mut rng(1)).unwrap();
        for i in 0..4 {
            let row = m.row(i);
            let nonzero: Vec<f64> = row.iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nonzero.len(), 2);
            assert!(nonzero.iter().all(|v| (*v - 0.5).abs() < 1e-15));
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_equal_with_k_equal_n_is_singular() {
        let m = variant_matrix_gen(VariantKind::SequentialEqualCirculant, 4, 4, 4, &mut rng(2))
            .unwrap();
        for v in m.values() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let row = Vector::new(m.row(0).to_vec()).unwrap();
        assert!(!keygen::full_rank_check(&row, DEFAULT_RANK_EPSILON));
    }

    #[test]
    fn new_weights_rows_are_not_cyclic_shifts() {
        let m = variant_matrix_gen(VariantKind::NewWeightsCirculant, 8, 3, 8, &mut rng(3)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if i == j {
                    continue;
                }
                for shift in 0..8 {
                    let rolled: Vec<f64> = (0..8).map(|c| m.get(i, (c + 8 - shift) % 8)).collect();
                    assert_ne!(m.row(j), rolled.as_slice(), "rows {i},{j} shift {shift}");
                }
            }
        }
    }

    #[test]
    fn new_weights_positions_roll_while_values_change() {
        let m = variant_matrix_gen(VariantKind::NewWeightsCirculant, 8, 3, 8, &mut rng(4)).unwrap();
        let base = positions_of(m.row(0));
        for i in 1..8 {
            assert_eq!(
                {
                    let mut p = positions_of(m.row(i));
                    p.sort_unstable();
                    p
                },
                rolled_positions(&base, i, 8),
                "row {i} positions"
            );
        }
    }

    #[test]
    fn default_variant_rolls_whole_rows() {
        let m = variant_matrix_gen(VariantKind::CirculantDefault, 6, 2, 6, &mut rng(5)).unwrap();
        let mut expect = m.row(0).to_vec();
        for i in 1..6 {
            expect = keygen::roll_right(&expect);
            assert_eq!(m.row(i), expect.as_slice());
        }
    }

    #[test]
    fn random_variant_rows_have_independent_positions() {
        let m = variant_matrix_gen(VariantKind::Random, 16, 3, 16, &mut rng(6)).unwrap();
        let base = positions_of(m.row(0));
        let all_rolled = (1..16).all(|i| {
            let mut p = positions_of(m.row(i));
            p.sort_unstable();
            p == rolled_positions(&base, i, 16)
        });
        assert!(!all_rolled);
        for i in 0..16 {
            assert_eq!(positions_of(m.row(i)).len(), 3);
            let norm = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_positions_pack_the_first_k() {
        let m = variant_matrix_gen(
            VariantKind::SequentialPositionsCirculant,
            8,
            3,
            8,
            &mut rng(7),
        )
        .unwrap();
        assert_eq!(positions_of(m.row(0)), vec![0, 1, 2]);
        let mut expect = m.row(0).to_vec();
        for i in 1..8 {
            expect = keygen::roll_right(&expect);
            assert_eq!(m.row(i), expect.as_slice());
        }
    }

    #[test]
    fn variant_kind_round_trips_through_strings() {
        for kind in VariantKind::ALL {
            let parsed: VariantKind = kind.name().parse().unwrap();
            assert_eq!(parsed, kind);
        }
        assert!("bogus".parse::<VariantKind>().is_err());
    }

    #[test]
    fn layout_validation() {
        assert!(ObfuscationLayout::new(4, 2, vec![1, 3], 2).is_ok());
        assert!(ObfuscationLayout::new(4, 2, vec![3, 1], 2).is_err());
        assert!(ObfuscationLayout::new(4, 2, vec![1, 1], 2).is_err());
        assert!(ObfuscationLayout::new(4, 2, vec![1, 6], 2).is_err());
        assert!(ObfuscationLayout::new(4, 1, vec![1, 2], 2).is_err());
    }

    #[test]
    fn obfuscation_with_no_hyperdims_is_identity() {
        let layout = ObfuscationLayout::new(3, 0, vec![], 1).unwrap();
        let e = Vector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let out = obfuscate_hyperdims(&layout, None, &e).unwrap();
        assert_eq!(out.values(), e.values());
    }

    #[test]
    fn single_hyperdim_at_position_zero() {
        let layout = ObfuscationLayout::new(3, 1, vec![0], 2).unwrap();
        let mixing = Matrix::new(1, 3, vec![0.5, 0.5, 0.0]).unwrap();
        let e = Vector::new(vec![2.0, 4.0, 6.0]).unwrap();
        let out = obfuscate_hyperdims(&layout, Some(&mixing), &e).unwrap();
        assert_eq!(out.values(), &[3.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn removal_round_trip_is_exact() {
        let mut r = rng(8);
        for trial in 0..20 {
            let n = 5 + trial % 4;
            let w_extra = trial % 4;
            let layout = ObfuscationLayout::random(n, w_extra, 2, &mut r).unwrap();
            let mixing = if w_extra > 0 {
                Some(mixing_matrix_gen(&layout, &mut r).unwrap())
            } else {
                None
            };
            let e = crate::corpus::synthetic_unit_corpus(n, 1, trial as u64, "o").unwrap()[0]
                .vector
                .clone();
            let combined = obfuscate_hyperdims(&layout, mixing.as_ref(), &e).unwrap();
            let back = remove_hyperdims(&layout, &combined).unwrap();
            assert_eq!(back.values(), e.values());
        }
    }

    #[test]
    fn pearson_flags_duplicate_and_negated_columns() {
        // Hyperdim 0 copies original column 0; hyperdim 1 negates it.
        let layout = ObfuscationLayout::new(2, 2, vec![0, 1], 1).unwrap();
        let mixing = Matrix::new(2, 2, vec![1.0, 0.0, -1.0, 0.0]).unwrap();
        let mut r = rng(9);
        let corpus: Vec<Vector> = (0..20)
            .map(|_| {
                let e = Vector::new(vec![
                    r.random::<f64>() * 2.0 - 1.0,
                    r.random::<f64>() * 2.0 - 1.0,
                ])
                .unwrap();
                obfuscate_hyperdims(&layout, Some(&mixing), &e).unwrap()
            })
            .collect();
        let (flags, skipped) = pearson_flags(&corpus, &layout, 0.4).unwrap();
        assert!(skipped.is_empty());
        let copy = flags
            .iter()
            .find(|f| f.hyper_column == 0 && f.original_column == 2)
            .expect("copied column flagged");
        assert!((copy.r - 1.0).abs() < 1e-10);
        let neg = flags
            .iter()
            .find(|f| f.hyper_column == 1 && f.original_column == 2)
            .expect("negated column flagged");
        assert!((neg.r + 1.0).abs() < 1e-10);
    }

    #[test]
    fn pearson_matches_brute_force_covariance_oracle() {
        let mut r = rng(10);
        let layout = ObfuscationLayout::random(6, 3, 3, &mut r).unwrap();
        let mixing = mixing_matrix_gen(&layout, &mut r).unwrap();
        let corpus: Vec<Vector> = crate::corpus::synthetic_unit_corpus(6, 40, 3, "p")
            .unwrap()
            .into_iter()
            .map(|rec| obfuscate_hyperdims(&layout, Some(&mixing), &rec.vector).unwrap())
            .collect();
        let report = pearson_matrix(&corpus, &layout).unwrap();

        let column = |c: usize| -> Vec<f64> { corpus.iter().map(|v| v.values()[c]).collect() };
        let oracle = |x: &[f64], y: &[f64]| -> f64 {
            let n = x.len() as f64;
            let mx = x.iter().sum::<f64>() / n;
            let my = y.iter().sum::<f64>() / n;
            let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
            let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
            cov / (vx * vy).sqrt()
        };
        for (hi, &h) in report.hyper_columns.iter().enumerate() {
            for (oi, &o) in report.original_columns.iter().enumerate() {
                let want = oracle(&column(h), &column(o));
                let got = report.coefficients[hi][oi];
                assert!((got - want).abs() < 1e-12, "({h},{o}): {got} vs {want}");
            }
        }
        let threshold = DEFAULT_CORRELATION_THRESHOLD;
        let (flags, _) = pearson_flags(&corpus, &layout, threshold).unwrap();
        let oracle_count = report
            .hyper_columns
            .iter()
            .flat_map(|&h| {
                report
                    .original_columns
                    .iter()
                    .map(move |&o| oracle(&column(h), &column(o)))
            })
            .filter(|r| r.abs() > threshold)
            .count();
        assert_eq!(flags.len(), oracle_count);
    }

    #[test]
    fn pearson_skips_zero_variance_columns_with_warning() {
        let layout = ObfuscationLayout::new(2, 1, vec![0], 1).unwrap();
        let corpus: Vec<Vector> = (0..5)
            .map(|i| Vector::new(vec![1.0, i as f64, 2.0 * i as f64]).unwrap())
            .collect();
        let (flags, skipped) = pearson_flags(&corpus, &layout, 0.4).unwrap();
        assert_eq!(skipped, vec![0]);
        assert!(flags.is_empty());
    }

    #[test]
    fn pearson_is_invariant_under_affine_rescaling() {
        let mut r = rng(11);
        let layout = ObfuscationLayout::random(5, 2, 2, &mut r).unwrap();
        let mixing = mixing_matrix_gen(&layout, &mut r).unwrap();
        let corpus: Vec<Vector> = crate::corpus::synthetic_unit_corpus(5, 25, 6, "q")
            .unwrap()
            .into_iter()
            .map(|rec| obfuscate_hyperdims(&layout, Some(&mixing), &rec.vector).unwrap())
            .collect();
        let rescaled: Vec<Vector> = corpus
            .iter()
            .map(|v| {
                let values: Vec<f64> = v
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(c, x)| 3.5 * x + c as f64)
                    .collect();
                Vector::new(values).unwrap()
            })
            .collect();
        let a = pearson_matrix(&corpus, &layout).unwrap();
        let b = pearson_matrix(&rescaled, &layout).unwrap();
        for (ra, rb) in a
            .coefficients
            .iter()
            .flatten()
            .zip(b.coefficients.iter().flatten())
        {
            assert!((ra - rb).abs() < 1e-10);
        }
    }

    #[test]
    fn importance_recovers_an_indicator_on_orthonormal_design() {
        // Features are standard basis vectors repeated; labels copy column 1.
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for rep in 0..5 {
            for i in 0..4 {
                let mut v = vec![0.0; 4];
                v[i] = 1.0;
                features.push(Vector::new(v).unwrap());
                labels.push(if i == 1 { 1.0 } else { 0.0 });
                let _ = rep;
            }
        }
        let w = least_squares_importance(&features, &labels, DEFAULT_RIDGE).unwrap();
        let want = [0.0, 1.0, 0.0, 0.0];
        for (got, want) in w.values().iter().zip(&want) {
            assert!((got - want).abs() <= 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn importance_of_zero_labels_is_zero() {
        let features: Vec<Vector> = crate::corpus::synthetic_unit_corpus(4, 12, 2, "z")
            .unwrap()
            .into_iter()
            .map(|r| r.vector)
            .collect();
        let labels = vec![0.0; 12];
        let w = least_squares_importance(&features, &labels, DEFAULT_RIDGE).unwrap();
        for v in w.values() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn importance_matches_explicit_normal_equations_oracle() {
        let features: Vec<Vector> = crate::corpus::synthetic_unit_corpus(8, 50, 4, "n")
            .unwrap()
            .into_iter()
            .map(|r| r.vector)
            .collect();
        let mut r = rng(12);
        let labels: Vec<f64> = (0..50).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
        let got = least_squares_importance(&features, &labels, 0.0).unwrap();

        // Oracle: build X^T X and X^T y explicitly and solve by elimination.
        let d = 8;
        let mut a = vec![vec![0.0f64; d + 1]; d];
        for (f, &y) in features.iter().zip(&labels) {
            for i in 0..d {
                for j in 0..d {
                    a[i][j] += f.values()[i] * f.values()[j];
                }
                a[i][d] += f.values()[i] * y;
            }
        }
        for col in 0..d {
            let pivot = (col..d)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .unwrap();
            a.swap(col, pivot);
            for row in 0..d {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for c in col..=d {
                        a[row][c] -= f * a[col][c];
                    }
                }
            }
        }
        for i in 0..d {
            let want = a[i][d] / a[i][i];
            assert!((got.values()[i] - want).abs() < 1e-8, "w[{i}]");
        }
    }

    #[test]
    fn plain_least_squares_rejects_underdetermined_systems() {
        let features: Vec<Vector> = crate::corpus::synthetic_unit_corpus(8, 4, 2, "u")
            .unwrap()
            .into_iter()
            .map(|r| r.vector)
            .collect();
        let labels = vec![1.0; 4];
        assert!(least_squares_importance(&features, &labels, 0.0).is_err());
        assert!(least_squares_importance(&features, &labels, DEFAULT_RIDGE).is_ok());
    }

    #[test]
    fn csv_emitters_produce_expected_shapes() {
        let mut r = rng(13);
        let layout = ObfuscationLayout::random(4, 2, 2, &mut r).unwrap();
        let mixing = mixing_matrix_gen(&layout, &mut r).unwrap();
        let corpus: Vec<Vector> = crate::corpus::synthetic_unit_corpus(4, 10, 8, "c")
            .unwrap()
            .into_iter()
            .map(|rec| obfuscate_hyperdims(&layout, Some(&mixing), &rec.vector).unwrap())
            .collect();
        let report = pearson_matrix(&corpus, &layout).unwrap();
        let mut out = Vec::new();
        write_correlation_csv(&report, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 2);

        let weights = Vector::new(vec![0.1; 6]).unwrap();
        let mut out = Vec::new();
        write_importance_csv(&weights, &layout, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 6);
        assert_eq!(text.matches(",hyper,").count(), 2);
    }
}
