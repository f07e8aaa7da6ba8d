//! Watermark verification.
//!
//! Recovered suspects are paired with their originals in a watermark set and
//! a contrast set; the contrast set must itself be watermarked with a
//! different transformation matrix, never built from raw originals. The
//! verdict rests on two statistics over per-pair cosine similarities: the
//! gap between the set means (reported in percent) and the AUC of the two
//! score samples.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::codec::{self, EmbeddingRecord};
use crate::error::Error;
use crate::keygen::WatermarkKey;
use crate::linalg::{cosine, mean, Vector};
use crate::par;
use crate::Result;

/// Matched (recovered, original) embedding pairs.
#[derive(Debug, Clone)]
pub struct PairSet {
    pairs: Vec<(Vector, Vector)>,
}

impl PairSet {
    pub fn new(pairs: Vec<(Vector, Vector)>) -> Result<Self> {
        for (recovered, original) in &pairs {
            if recovered.dim() != original.dim() {
                return Err(Error::DimensionMismatch {
                    context: "pair set",
                    expected: original.dim(),
                    actual: recovered.dim(),
                });
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Per-pair cosine similarities, in pair order.
    pub fn cosines(&self) -> Result<Vec<f64>> {
        par::map_slice(&self.pairs, |(recovered, original)| {
            cosine(recovered, original)
        })
        .into_iter()
        .collect()
    }
}

/// Mean per-pair cosine similarity over the set.
pub fn avg_cos(set: &PairSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidParameter(
            "avg_cos requires a non-empty pair set".into(),
        ));
    }
    Ok(mean(&set.cosines()?))
}

/// Difference of set means, in percent: `100 * (avg_cos(s_w) - avg_cos(s_c))`.
pub fn delta_cos(s_w: &PairSet, s_c: &PairSet) -> Result<f64> {
    Ok(100.0 * (avg_cos(s_w)? - avg_cos(s_c)?))
}

/// AUC of watermark scores against contrast scores, computed exactly over
/// all `|W| x |C|` pairs: wins count 1, ties count 1/2 (Mann-Whitney).
pub fn auc(scores_w: &[f64], scores_c: &[f64]) -> Result<f64> {
    if scores_w.is_empty() || scores_c.is_empty() {
        return Err(Error::InvalidParameter(
            "auc requires non-empty score lists".into(),
        ));
    }
    let mut wins: u64 = 0;
    let mut ties: u64 = 0;
    for &w in scores_w {
        for &c in scores_c {
            if w > c {
                wins += 1;
            } else if w == c {
                ties += 1;
            }
        }
    }
    let total = scores_w.len() as f64 * scores_c.len() as f64;
    Ok((wins as f64 + 0.5 * ties as f64) / total)
}

/// The verification verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "watermarked")]
    Watermarked,
    #[serde(rename = "not-watermarked")]
    NotWatermarked,
}

/// Verification statistics and decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Mean-cosine gap between watermark and contrast sets, in percent.
    pub delta_cos: f64,
    pub auc: f64,
    pub n_w: usize,
    pub n_c: usize,
    pub threshold: f64,
    pub decision: Decision,
    pub cos_w: Vec<f64>,
    pub cos_c: Vec<f64>,
}

impl VerificationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV with one row per pair: `set,index,cosine`.
    pub fn write_pairs_csv(&self, writer: impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["set", "index", "cosine"])?;
        for (i, c) in self.cos_w.iter().enumerate() {
            csv.write_record(["w", &i.to_string(), &format!("{c}")])?;
        }
        for (i, c) in self.cos_c.iter().enumerate() {
            csv.write_record(["c", &i.to_string(), &format!("{c}")])?;
        }
        csv.flush()?;
        Ok(())
    }
}

fn check_alignment(
    suspects: &[EmbeddingRecord],
    originals: &[EmbeddingRecord],
    context: &'static str,
) -> Result<()> {
    if suspects.len() != originals.len() {
        return Err(Error::InvalidParameter(format!(
            "{context}: suspect and original counts differ ({} vs {})",
            suspects.len(),
            originals.len()
        )));
    }
    let mismatched: Vec<String> = suspects
        .iter()
        .zip(originals)
        .filter(|(s, o)| s.id != o.id)
        .map(|(s, o)| format!("{} != {}", s.id, o.id))
        .collect();
    if !mismatched.is_empty() {
        return Err(Error::IdMisalignment { ids: mismatched });
    }
    Ok(())
}

fn build_pair_set(
    key: &WatermarkKey,
    suspects: &[EmbeddingRecord],
    originals: &[EmbeddingRecord],
    context: &'static str,
) -> Result<PairSet> {
    check_alignment(suspects, originals, context)?;
    let recovered = codec::recover_batch(key, suspects)?;
    PairSet::new(
        recovered
            .into_iter()
            .zip(originals)
            .map(|(r, o)| (r.vector, o.vector.clone()))
            .collect(),
    )
}

/// Recover every suspect with `key`, assemble the watermark and contrast
/// pair sets, and fill a report. The decision is `Watermarked` when the
/// percent mean-cosine gap exceeds `threshold`.
pub fn verify(
    key: &WatermarkKey,
    suspect_w: &[EmbeddingRecord],
    originals_w: &[EmbeddingRecord],
    suspect_c: &[EmbeddingRecord],
    originals_c: &[EmbeddingRecord],
    threshold: f64,
) -> Result<VerificationReport> {
    let s_w = build_pair_set(key, suspect_w, originals_w, "watermark set")?;
    let s_c = build_pair_set(key, suspect_c, originals_c, "contrast set")?;
    if s_w.is_empty() || s_c.is_empty() {
        return Err(Error::InvalidParameter(
            "verification requires at least one pair per set".into(),
        ));
    }
    let cos_w = s_w.cosines()?;
    let cos_c = s_c.cosines()?;
    let delta = 100.0 * (mean(&cos_w) - mean(&cos_c));
    let auc_value = auc(&cos_w, &cos_c)?;
    let decision = if delta > threshold {
        Decision::Watermarked
    } else {
        Decision::NotWatermarked
    };
    Ok(VerificationReport {
        delta_cos: delta,
        auc: auc_value,
        n_w: cos_w.len(),
        n_c: cos_c.len(),
        threshold,
        decision,
        cos_w,
        cos_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::inject_batch;
    use crate::corpus::synthetic_unit_corpus;
    use crate::keygen::{generate_key, KeyParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn vec64(values: &[f64]) -> Vector {
        Vector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn avg_cos_of_identical_pairs_is_one() {
        let x = vec64(&[1.0, 2.0, 3.0]);
        let set = PairSet::new(vec![(x.clone(), x.clone()), (x.clone(), x.clone())]).unwrap();
        assert!((avg_cos(&set).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn avg_cos_of_opposed_pairs_cancels() {
        let x = vec64(&[1.0, 0.0]);
        let neg = vec64(&[-1.0, 0.0]);
        let set = PairSet::new(vec![(x.clone(), x.clone()), (x.clone(), neg)]).unwrap();
        assert!(avg_cos(&set).unwrap().abs() < 1e-12);
    }

    #[test]
    fn avg_cos_matches_per_pair_loop_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let pairs: Vec<(Vector, Vector)> = (0..5)
            .map(|_| {
                let a: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
                let b: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
                (vec64(&a), vec64(&b))
            })
            .collect();
        let mut total = 0.0;
        for (r, o) in &pairs {
            total += cosine(r, o).unwrap();
        }
        let oracle = total / pairs.len() as f64;
        let set = PairSet::new(pairs).unwrap();
        assert!((avg_cos(&set).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn avg_cos_rejects_empty() {
        let set = PairSet::new(vec![]).unwrap();
        assert!(avg_cos(&set).is_err());
    }

    #[test]
    fn delta_cos_examples() {
        let x = vec64(&[1.0, 0.0]);
        let y = vec64(&[0.0, 1.0]);
        let perfect = PairSet::new(vec![(x.clone(), x.clone())]).unwrap();
        let orthogonal = PairSet::new(vec![(x.clone(), y.clone())]).unwrap();
        assert!((delta_cos(&perfect, &perfect).unwrap()).abs() < 1e-12);
        assert!((delta_cos(&perfect, &orthogonal).unwrap() - 100.0).abs() < 1e-9);
        // Antisymmetry.
        assert!(
            (delta_cos(&perfect, &orthogonal).unwrap() + delta_cos(&orthogonal, &perfect).unwrap())
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.5);
        // Enumerating the six pairs gives five wins.
        let got = auc(&[0.9, 0.8, 0.4], &[0.7, 0.3]).unwrap();
        assert!((got - 5.0 / 6.0).abs() < 1e-15);
        assert!(auc(&[], &[1.0]).is_err());
        assert!(auc(&[1.0], &[]).is_err());
    }

    #[test]
    fn auc_gives_ties_half_credit() {
        assert_eq!(auc(&[1.0, 1.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(auc(&[1.0, 0.5], &[0.5]).unwrap(), 0.75);
    }

    /// Independent double-loop oracle accumulating f64 increments.
    fn auc_oracle(w: &[f64], c: &[f64]) -> f64 {
        let mut acc = 0.0f64;
        for &a in w {
            for &b in c {
                if a > b {
                    acc += 1.0;
                } else if a == b {
                    acc += 0.5;
                }
            }
        }
        acc / (w.len() as f64 * c.len() as f64)
    }

    #[test]
    fn auc_matches_brute_force_oracle_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for trial in 0..50 {
            let nw = rng.random_range(1..40);
            let nc = rng.random_range(1..40);
            let mut w: Vec<f64> = (0..nw).map(|_| rng.random::<f64>()).collect();
            let c: Vec<f64> = (0..nc).map(|_| rng.random::<f64>()).collect();
            // Force some exact ties.
            if trial % 3 == 0 && !c.is_empty() {
                w[0] = c[0];
            }
            assert_eq!(auc(&w, &c).unwrap(), auc_oracle(&w, &c));
        }
    }

    fn verified_report(seed_a: u64, seed_b: u64, samples: usize) -> VerificationReport {
        let key_a = generate_key(&KeyParams::new(16, 5, 16, seed_a).unwrap()).unwrap();
        let key_b = generate_key(&KeyParams::new(16, 5, 16, seed_b).unwrap()).unwrap();
        let originals = synthetic_unit_corpus(16, samples, 33, "v").unwrap();
        let suspect_w = inject_batch(&key_a, &originals).unwrap();
        let suspect_c = inject_batch(&key_b, &originals).unwrap();
        verify(&key_a, &suspect_w, &originals, &suspect_c, &originals, 10.0).unwrap()
    }

    #[test]
    fn end_to_end_watermarked_corpus_separates_perfectly() {
        let report = verified_report(1, 2, 40);
        assert_eq!(report.auc, 1.0);
        assert!(report.delta_cos > 60.0);
        assert_eq!(report.decision, Decision::Watermarked);
        assert_eq!(report.n_w, 40);
        assert_eq!(report.n_c, 40);
    }

    #[test]
    fn contrast_key_on_both_sides_is_not_watermarked() {
        let key_a = generate_key(&KeyParams::new(16, 5, 16, 1).unwrap()).unwrap();
        let key_b = generate_key(&KeyParams::new(16, 5, 16, 2).unwrap()).unwrap();
        let originals = synthetic_unit_corpus(16, 30, 34, "c").unwrap();
        let suspects = inject_batch(&key_b, &originals).unwrap();
        let report = verify(&key_a, &suspects, &originals, &suspects, &originals, 10.0).unwrap();
        assert!(report.delta_cos.abs() < 1e-9);
        assert_eq!(report.decision, Decision::NotWatermarked);
    }

    #[test]
    fn single_pair_sets_produce_a_valid_report() {
        let report = verified_report(5, 6, 1);
        assert_eq!(report.n_w, 1);
        assert_eq!(report.n_c, 1);
        assert_eq!(report.auc, 1.0);
        assert_eq!(report.decision, Decision::Watermarked);
    }

    #[test]
    fn id_misalignment_lists_offending_ids() {
        let key = generate_key(&KeyParams::new(8, 3, 8, 1).unwrap()).unwrap();
        let originals = synthetic_unit_corpus(8, 3, 1, "x").unwrap();
        let mut suspects = inject_batch(&key, &originals).unwrap();
        suspects[1].id = "rogue".to_string();
        match verify(&key, &suspects, &originals, &suspects, &originals, 10.0) {
            Err(Error::IdMisalignment { ids }) => {
                assert_eq!(ids.len(), 1);
                assert!(ids[0].contains("rogue"));
            }
            other => panic!("expected id misalignment, got {other:?}"),
        }
    }

    #[test]
    fn report_is_reproducible_and_serializable() {
        let a = verified_report(7, 8, 10);
        let b = verified_report(7, 8, 10);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let parsed: VerificationReport = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        assert_eq!(parsed.decision, a.decision);
        assert_eq!(parsed.cos_w, a.cos_w);

        let mut csv = Vec::new();
        a.write_pairs_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + a.n_w + a.n_c);
        assert!(text.starts_with("set,index,cosine"));
    }

    proptest! {
        #[test]
        fn auc_equals_oracle_on_random_inputs_with_ties(
            w in proptest::collection::vec(0u8..8, 1..30),
            c in proptest::collection::vec(0u8..8, 1..30),
        ) {
            // Small integer grid forces many exact ties.
            let w: Vec<f64> = w.into_iter().map(f64::from).collect();
            let c: Vec<f64> = c.into_iter().map(f64::from).collect();
            prop_assert_eq!(auc(&w, &c).unwrap(), auc_oracle(&w, &c));
        }

        #[test]
        fn delta_cos_is_antisymmetric(seed in 0u64..200) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let pairs = |rng: &mut ChaCha12Rng| {
                let make = |rng: &mut ChaCha12Rng| {
                    let v: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 0.1).collect();
                    vec64(&v)
                };
                PairSet::new((0..3).map(|_| (make(rng), make(rng))).collect()).unwrap()
            };
            let a = pairs(&mut rng);
            let b = pairs(&mut rng);
            let forward = delta_cos(&a, &b).unwrap();
            let backward = delta_cos(&b, &a).unwrap();
            prop_assert!((forward + backward).abs() < 1e-12);
        }
    }
}
