//! Watermark injection and recovery.
//!
//! Injection multiplies an original embedding by the key matrix and
//! normalizes the product to a unit vector; the original elements are
//! discarded. Recovery multiplies a suspect embedding by the cached
//! pseudoinverse, reconstructing the original direction up to the scale
//! lost to normalization.

use crate::error::Error;
use crate::keygen::WatermarkKey;
use crate::linalg::{self, Vector};
use crate::par;
use crate::Result;

/// An embedding with its identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vector,
}

impl EmbeddingRecord {
    pub fn new(id: impl Into<String>, vector: Vector) -> Self {
        Self {
            id: id.into(),
            vector,
        }
    }
}

/// Watermark a single embedding: `normalize(T * e)`.
///
/// Scale-invariant in the input; the output always has unit norm and
/// dimension `key.w()`.
pub fn inject(key: &WatermarkKey, e_o: &Vector) -> Result<Vector> {
    if e_o.dim() != key.n() {
        return Err(Error::DimensionMismatch {
            context: "inject",
            expected: key.n(),
            actual: e_o.dim(),
        });
    }
    if e_o.norm() == 0.0 {
        return Err(Error::ZeroNorm("inject"));
    }
    let transformed = key.matrix().mul_vec(e_o)?;
    if transformed.norm() == 0.0 {
        // Only reachable with a rank-deficient key.
        return Err(Error::DegenerateInput(
            "transform mapped the embedding to zero".into(),
        ));
    }
    linalg::normalize(&transformed)
}

/// Recover the original direction from a suspect embedding: `pinv * e_p`.
///
/// For an uncorrupted injection through a full-column-rank key this returns
/// `e_o / ||T * e_o||`, so its cosine with the original is 1.
pub fn recover(key: &WatermarkKey, e_p_suspect: &Vector) -> Result<Vector> {
    if e_p_suspect.dim() != key.w() {
        return Err(Error::DimensionMismatch {
            context: "recover",
            expected: key.w(),
            actual: e_p_suspect.dim(),
        });
    }
    key.pinv().mul_vec(e_p_suspect)
}

/// Order-preserving batch injection; ids are carried through unchanged.
///
/// Fails fast on the first invalid record (in input order) carrying its id:
/// a watermarking service must never emit a mix of marked and raw
/// embeddings.
pub fn inject_batch(
    key: &WatermarkKey,
    records: &[EmbeddingRecord],
) -> Result<Vec<EmbeddingRecord>> {
    batch(records, |r| inject(key, &r.vector))
}

/// Order-preserving batch recovery with the same failure semantics as
/// [`inject_batch`].
pub fn recover_batch(
    key: &WatermarkKey,
    records: &[EmbeddingRecord],
) -> Result<Vec<EmbeddingRecord>> {
    batch(records, |r| recover(key, &r.vector))
}

fn batch<F>(records: &[EmbeddingRecord], op: F) -> Result<Vec<EmbeddingRecord>>
where
    F: Fn(&EmbeddingRecord) -> Result<Vector> + Send + Sync,
{
    let results = par::map_slice(records, |r| op(r));
    records
        .iter()
        .zip(results)
        .map(|(r, res)| match res {
            Ok(vector) => Ok(EmbeddingRecord::new(r.id.clone(), vector)),
            Err(e) => Err(Error::for_record(&r.id, e)),
        })
        .collect()
}
