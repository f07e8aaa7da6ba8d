//! Embedding corpora as JSON Lines.
//!
//! One object per line: `{"id": "<string>", "embedding": [<float>, ...]}`.
//! Readers reject lines whose dimension differs from the first record.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::codec::EmbeddingRecord;
use crate::error::Error;
use crate::linalg::{normalize, Vector};
use crate::Result;

/// Wire form of one corpus line; also reused by the proxy's verify endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub embedding: Vec<f64>,
}

impl RawRecord {
    pub fn into_record(self, line: usize) -> Result<EmbeddingRecord> {
        let vector = Vector::new(self.embedding).map_err(|e| Error::Corpus {
            line,
            message: e.to_string(),
        })?;
        Ok(EmbeddingRecord::new(self.id, vector))
    }
}

impl From<&EmbeddingRecord> for RawRecord {
    fn from(r: &EmbeddingRecord) -> Self {
        RawRecord {
            id: r.id.clone(),
            embedding: r.vector.values().to_vec(),
        }
    }
}

/// Read a JSONL corpus, enforcing a consistent dimension across records.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>> {
    read_jsonl_from(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn read_jsonl_from(reader: impl BufRead) -> Result<Vec<EmbeddingRecord>> {
    let mut records = Vec::new();
    let mut dim = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Corpus {
            line: line_no,
            message: e.to_string(),
        })?;
        let record = raw.into_record(line_no)?;
        match dim {
            None => dim = Some(record.vector.dim()),
            Some(d) if d != record.vector.dim() => {
                return Err(Error::Corpus {
                    line: line_no,
                    message: format!(
                        "dimension {} does not match first record's {}",
                        record.vector.dim(),
                        d
                    ),
                });
            }
            _ => {}
        }
        records.push(record);
    }
    Ok(records)
}

/// Write records as JSONL, one object per line.
pub fn write_jsonl(path: impl AsRef<Path>, records: &[EmbeddingRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_jsonl_to(&mut out, records)?;
    out.flush()?;
    Ok(())
}

pub fn write_jsonl_to(writer: &mut impl Write, records: &[EmbeddingRecord]) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut *writer, &RawRecord::from(record))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// One unit vector drawn uniformly on the sphere from a seed.
pub fn seeded_unit_vector(dim: usize, seed: u64) -> Result<Vector> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&Vector::new(values)?)
}

/// Deterministic synthetic corpus of unit vectors drawn uniformly on the
/// sphere (normalized Gaussians). Ids are `{prefix}{index:05}`.
pub fn synthetic_unit_corpus(
    dim: usize,
    count: usize,
    seed: u64,
    prefix: &str,
) -> Result<Vec<EmbeddingRecord>> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let values: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let vector = normalize(&Vector::new(values)?)?;
            Ok(EmbeddingRecord::new(format!("{prefix}{i:05}"), vector))
        })
        .collect()
}
