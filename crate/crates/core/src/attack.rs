//! Attack simulation and the analytical trigger-word weight model.
//!
//! The paraphrase-averaging attack queries a watermarked service with
//! several rephrasings of each input and trains on the averaged embeddings.
//! Real paraphrasers are out of scope; [`simulate_paraphrases`] stands in
//! with isotropic perturbations on the unit sphere, calibrated so simulated
//! paraphrases sit near the cosine range real ones occupy (~0.8 or higher).
//!
//! Averaging cannot remove a linear watermark: the average of normalized
//! transformed embeddings equals the transform of a pseudo-aggregation of
//! the originals, `avg_i Norm(T e_i) = T avg_i(alpha_i e_i)` with
//! `alpha_i = 1 / ||T e_i||`. [`averaging_identity_residual`] checks that identity to
//! machine precision.
//!
//! The weight model quantifies why averaging does defeat trigger-word
//! schemes: with per-token trigger probability `p_t` over `|S|` tokens, a
//! sentence triggers with probability `P_S = 1 - (1 - p_t)^|S|`; a single
//! query's normalized weight is Bernoulli(P_S) while the average of `P`
//! paraphrases is Binomial(P, P_S)/P, whose upper tail is thinner.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::codec::{self, EmbeddingRecord};
use crate::error::Error;
use crate::keygen::WatermarkKey;
use crate::linalg::{self, mean, Vector};
use crate::par;
use crate::verifier;
use crate::Result;

/// An original embedding together with the embeddings of its paraphrases.
#[derive(Debug, Clone)]
pub struct ParaphraseBundle {
    pub original: Vector,
    pub paraphrase_embeddings: Vec<Vector>,
    /// `1 / ||T e_i||` per paraphrase, populated via [`Self::with_alphas`].
    pub alphas: Option<Vec<f64>>,
}

impl ParaphraseBundle {
    pub fn new(original: Vector, paraphrase_embeddings: Vec<Vector>) -> Result<Self> {
        if paraphrase_embeddings.is_empty() {
            return Err(Error::InvalidParameter(
                "a paraphrase bundle needs at least one embedding".into(),
            ));
        }
        if let Some(bad) = paraphrase_embeddings
            .iter()
            .find(|e| e.dim() != original.dim())
        {
            return Err(Error::DimensionMismatch {
                context: "paraphrase bundle",
                expected: original.dim(),
                actual: bad.dim(),
            });
        }
        Ok(Self {
            original,
            paraphrase_embeddings,
            alphas: None,
        })
    }

    pub fn len(&self) -> usize {
        self.paraphrase_embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paraphrase_embeddings.is_empty()
    }

    /// Populate the normalization scales this bundle acquires under `key`.
    pub fn with_alphas(mut self, key: &WatermarkKey) -> Result<Self> {
        let alphas = self
            .paraphrase_embeddings
            .iter()
            .map(|e| {
                let norm = key.matrix().mul_vec(e)?.norm();
                if norm == 0.0 {
                    return Err(Error::DegenerateInput(
                        "transform mapped a paraphrase to zero".into(),
                    ));
                }
                Ok(1.0 / norm)
            })
            .collect::<Result<Vec<f64>>>()?;
        self.alphas = Some(alphas);
        Ok(self)
    }
}

/// Elementwise mean of the bundle's paraphrase embeddings.
pub fn average_embeddings(bundle: &ParaphraseBundle) -> Result<Vector> {
    let dim = bundle.original.dim();
    let mut acc = vec![0.0; dim];
    for e in &bundle.paraphrase_embeddings {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "average_embeddings",
                expected: dim,
                actual: e.dim(),
            });
        }
        for (a, v) in acc.iter_mut().zip(e.values()) {
            *a += v;
        }
    }
    let count = bundle.len() as f64;
    Vector::new(acc.into_iter().map(|v| v / count).collect())
}

/// Spread giving simulated paraphrases a mean cosine of roughly
/// `target_cos` with the original at the given dimension: perturbing a unit
/// vector by `s * g`, `g ~ N(0, I)`, lands near `1 / sqrt(1 + s^2 dim)`.
pub fn spread_for_mean_cosine(dim: usize, target_cos: f64) -> Result<f64> {
    if dim == 0 || !(target_cos > 0.0 && target_cos <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need dim >= 1 and 0 < target_cos <= 1, got dim={dim}, target={target_cos}"
        )));
    }
    Ok(((1.0 / (target_cos * target_cos) - 1.0) / dim as f64).sqrt())
}

/// `p` unit vectors obtained by perturbing `e_o` with isotropic noise of
/// scale `spread` and renormalizing; deterministic given the rng state.
pub fn simulate_paraphrases<R: Rng + ?Sized>(
    e_o: &Vector,
    p: usize,
    spread: f64,
    rng: &mut R,
) -> Result<ParaphraseBundle> {
    if p < 1 {
        return Err(Error::InvalidParameter(
            "paraphrase count must be at least 1".into(),
        ));
    }
    if spread.is_nan() || spread < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "spread must be non-negative, got {spread}"
        )));
    }
    let base = linalg::normalize(e_o)?;
    let paraphrases = if spread == 0.0 {
        vec![base.clone(); p]
    } else {
        (0..p)
            .map(|_| {
                let noise: Vec<f64> = (0..base.dim())
                    .map(|_| {
                        let g: f64 = StandardNormal.sample(rng);
                        g * spread
                    })
                    .collect();
                linalg::normalize(&base.add(&Vector::new(noise)?)?)
            })
            .collect::<Result<Vec<Vector>>>()?
    };
    ParaphraseBundle::new(e_o.clone(), paraphrases)
}

/// The embedding an averaging attacker trains on: the mean over the bundle
/// of each paraphrase's watermarked embedding.
pub fn attack_average_watermarked(key: &WatermarkKey, bundle: &ParaphraseBundle) -> Result<Vector> {
    let injected = bundle
        .paraphrase_embeddings
        .iter()
        .map(|e| codec::inject(key, e))
        .collect::<Result<Vec<Vector>>>()?;
    let stub = ParaphraseBundle::new(injected[0].clone(), injected)?;
    average_embeddings(&stub)
}

/// Max-abs difference between the two sides of the averaging identity:
/// `avg_i Norm(T e_i)` against `T avg_i(alpha_i e_i)`. Zero up to rounding
/// for any square full-rank key, whatever the bundle looks like.
pub fn averaging_identity_residual(key: &WatermarkKey, bundle: &ParaphraseBundle) -> Result<f64> {
    if key.w() != key.n() {
        return Err(Error::UnsupportedConfiguration(format!(
            "averaging identity check needs a square key, got {}x{}",
            key.w(),
            key.n()
        )));
    }
    if !key.condition().is_finite() {
        return Err(Error::UnsupportedConfiguration(
            "averaging identity check needs a full-rank key".into(),
        ));
    }
    let lhs = attack_average_watermarked(key, bundle)?;

    let dim = key.n();
    let mut acc = vec![0.0; dim];
    for e in &bundle.paraphrase_embeddings {
        let norm = key.matrix().mul_vec(e)?.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateInput(
                "transform mapped a paraphrase to zero".into(),
            ));
        }
        let alpha = 1.0 / norm;
        for (a, v) in acc.iter_mut().zip(e.values()) {
            *a += alpha * v;
        }
    }
    let count = bundle.len() as f64;
    let pseudo_avg = Vector::new(acc.into_iter().map(|v| v / count).collect())?;
    let rhs = key.matrix().mul_vec(&pseudo_avg)?;

    lhs.max_abs_diff(&rhs)
}

/// Gaussian perturbation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub lambda: f64,
    pub trials: u32,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(lambda: f64, trials: u32, seed: u64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise level must be finite and non-negative, got {lambda}"
            )));
        }
        if trials < 1 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        Ok(Self {
            lambda,
            trials,
            seed,
        })
    }
}

/// `normalize(e + lambda * g)` with `g` standard normal; with `lambda = 0`
/// this is exactly `normalize(e)`.
pub fn gaussian_perturb<R: Rng + ?Sized>(
    e: &Vector,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Result<Vector> {
    let noisy: Vec<f64> = e
        .values()
        .iter()
        .map(|v| {
            let g: f64 = StandardNormal.sample(rng);
            v + cfg.lambda * g
        })
        .collect();
    linalg::normalize(&Vector::new(noisy)?)
}

/// Parameters of the trigger-word weight model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightModel {
    /// Per-token trigger probability.
    pub p_t: f64,
    /// Sentence length in tokens.
    pub s_len: u32,
    /// Paraphrase count.
    pub p: u32,
    /// Watermark weight; scales both tails identically, so tail
    /// probabilities are reported for the normalized weights.
    pub lambda_w: f64,
}

impl WeightModel {
    pub fn new(p_t: f64, s_len: u32, p: u32, lambda_w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_t) {
            return Err(Error::InvalidParameter(format!(
                "p_t must be in [0, 1], got {p_t}"
            )));
        }
        if s_len < 1 || p < 1 {
            return Err(Error::InvalidParameter(
                "sentence length and paraphrase count must be at least 1".into(),
            ));
        }
        if lambda_w.is_nan() || lambda_w <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "watermark weight must be positive, got {lambda_w}"
            )));
        }
        Ok(Self {
            p_t,
            s_len,
            p,
            lambda_w,
        })
    }
}

/// Probability that a sentence contains at least one trigger token:
/// `1 - (1 - p_t)^|S|`.
pub fn trigger_prob(model: &WeightModel) -> f64 {
    1.0 - (1.0 - model.p_t).powi(model.s_len as i32)
}

/// Exact upper-tail comparison of the normalized watermark weight at `a`.
///
/// Returns `(p_single, p_avg)`: the single-query weight is Bernoulli(P_S),
/// so `P(Q_S > a) = P_S` for `0 <= a < 1`; the averaged weight over `P`
/// paraphrases is Binomial(P, P_S)/P, summed with the strict inequality
/// `j > a * P`.
pub fn weight_tail_compare(model: &WeightModel, a: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&a) {
        return Err(Error::InvalidParameter(format!(
            "tail point must satisfy 0 <= a < 1, got {a}"
        )));
    }
    let p_s = trigger_prob(model);
    let p_single = p_s;
    let p_avg = binomial_tail_above(model.p, p_s, a * model.p as f64);
    Ok((p_single, p_avg))
}

/// `P(X > cut)` for `X ~ Binomial(n, prob)`, summed term by term with exact
/// f64 binomial coefficients.
fn binomial_tail_above(n: u32, prob: f64, cut: f64) -> f64 {
    let mut total = 0.0;
    let mut coeff = 1.0f64;
    for j in 0..=n {
        if j > 0 {
            coeff = coeff * (n - j + 1) as f64 / j as f64;
        }
        if (j as f64) > cut {
            total += coeff * prob.powi(j as i32) * (1.0 - prob).powi((n - j) as i32);
        }
    }
    total
}

/// Attack experiment settings, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub p: u32,
    pub spread: f64,
    pub lambda_grid: Vec<f64>,
    pub trials: u32,
    pub seed: u64,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 1 || self.trials < 1 {
            return Err(Error::InvalidParameter(
                "paraphrase count and trials must be at least 1".into(),
            ));
        }
        if self.spread.is_nan() || self.spread < 0.0 {
            return Err(Error::InvalidParameter(
                "spread must be non-negative".into(),
            ));
        }
        if self.lambda_grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidParameter(
                "noise levels must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One emitted experiment row: the configuration that produced it plus the
/// verification metrics, averaged over trials.
#[derive(Debug, Clone, Serialize)]
pub struct AttackOutcome {
    pub attack: &'static str,
    pub p: u32,
    pub spread: f64,
    pub lambda: f64,
    pub trials: u32,
    pub seed: u64,
    pub mean_cos: f64,
    pub delta_cos: f64,
    pub auc: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-task seed derivation for parallel trials.
pub(crate) fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

/// Run the paraphrase-averaging attack and the Gaussian-noise grid against
/// `key`, with the contrast side watermarked by `contrast_key`, and report
/// one row per attack configuration (metrics averaged over `cfg.trials`).
pub fn run_attack_experiment(
    key: &WatermarkKey,
    contrast_key: &WatermarkKey,
    originals: &[EmbeddingRecord],
    cfg: &AttackConfig,
) -> Result<Vec<AttackOutcome>> {
    cfg.validate()?;
    if originals.is_empty() {
        return Err(Error::InvalidParameter(
            "attack experiment needs a non-empty corpus".into(),
        ));
    }
    let mut rows = Vec::new();

    // Paraphrase averaging.
    let mut metrics = Vec::new();
    for trial in 0..cfg.trials {
        metrics.push(paraphrase_trial(
            key,
            contrast_key,
            originals,
            cfg,
            trial as u64,
        )?);
    }
    rows.push(average_outcome("paraphrase-avg", cfg, 0.0, &metrics));

    // Noise grid.
    for (li, &lambda) in cfg.lambda_grid.iter().enumerate() {
        let mut metrics = Vec::new();
        for trial in 0..cfg.trials {
            metrics.push(noise_trial(
                key,
                contrast_key,
                originals,
                cfg,
                lambda,
                derive_seed(cfg.seed, &[1, li as u64, trial as u64]),
            )?);
        }
        rows.push(average_outcome("gaussian-noise", cfg, lambda, &metrics));
    }
    Ok(rows)
}

struct TrialMetrics {
    mean_cos: f64,
    delta_cos: f64,
    auc: f64,
}

fn paraphrase_trial(
    key: &WatermarkKey,
    contrast_key: &WatermarkKey,
    originals: &[EmbeddingRecord],
    cfg: &AttackConfig,
    trial: u64,
) -> Result<TrialMetrics> {
    let indexed: Vec<(usize, &EmbeddingRecord)> = originals.iter().enumerate().collect();
    let suspects = par::map_slice(&indexed, |(i, record)| -> Result<_> {
        let mut rng = seeded(derive_seed(cfg.seed, &[0, trial, *i as u64]));
        let bundle = simulate_paraphrases(&record.vector, cfg.p as usize, cfg.spread, &mut rng)?;
        let w = attack_average_watermarked(key, &bundle)?;
        let c = attack_average_watermarked(contrast_key, &bundle)?;
        Ok((
            EmbeddingRecord::new(record.id.clone(), w),
            EmbeddingRecord::new(record.id.clone(), c),
        ))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (suspect_w, suspect_c): (Vec<_>, Vec<_>) = suspects.into_iter().unzip();
    let report = verifier::verify(key, &suspect_w, originals, &suspect_c, originals, 10.0)?;
    Ok(TrialMetrics {
        mean_cos: mean(&report.cos_w),
        delta_cos: report.delta_cos,
        auc: report.auc,
    })
}

fn noise_trial(
    key: &WatermarkKey,
    contrast_key: &WatermarkKey,
    originals: &[EmbeddingRecord],
    _cfg: &AttackConfig,
    lambda: f64,
    seed: u64,
) -> Result<TrialMetrics> {
    let noise = NoiseConfig::new(lambda, 1, seed)?;
    let indexed: Vec<(usize, &EmbeddingRecord)> = originals.iter().enumerate().collect();
    let suspects = par::map_slice(&indexed, |(i, record)| -> Result<_> {
        let mut rng = seeded(derive_seed(seed, &[*i as u64]));
        let w = gaussian_perturb(&codec::inject(key, &record.vector)?, &noise, &mut rng)?;
        let c = gaussian_perturb(
            &codec::inject(contrast_key, &record.vector)?,
            &noise,
            &mut rng,
        )?;
        Ok((
            EmbeddingRecord::new(record.id.clone(), w),
            EmbeddingRecord::new(record.id.clone(), c),
        ))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (suspect_w, suspect_c): (Vec<_>, Vec<_>) = suspects.into_iter().unzip();
    let report = verifier::verify(key, &suspect_w, originals, &suspect_c, originals, 10.0)?;
    Ok(TrialMetrics {
        mean_cos: mean(&report.cos_w),
        delta_cos: report.delta_cos,
        auc: report.auc,
    })
}

fn average_outcome(
    attack: &'static str,
    cfg: &AttackConfig,
    lambda: f64,
    metrics: &[TrialMetrics],
) -> AttackOutcome {
    let n = metrics.len() as f64;
    AttackOutcome {
        attack,
        p: cfg.p,
        spread: cfg.spread,
        lambda,
        trials: cfg.trials,
        seed: cfg.seed,
        mean_cos: metrics.iter().map(|m| m.mean_cos).sum::<f64>() / n,
        delta_cos: metrics.iter().map(|m| m.delta_cos).sum::<f64>() / n,
        auc: metrics.iter().map(|m| m.auc).sum::<f64>() / n,
    }
}

fn seeded(seed: u64) -> ChaCha12Rng {
    use rand::SeedableRng;
    ChaCha12Rng::seed_from_u64(seed)
}

/// CSV emitter for experiment rows, one row per configuration.
pub fn write_attack_csv(rows: &[AttackOutcome], writer: impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "attack",
        "p",
        "spread",
        "lambda",
        "trials",
        "seed",
        "mean_cos",
        "delta_cos",
        "auc",
    ])?;
    for r in rows {
        csv.write_record([
            r.attack.to_string(),
            r.p.to_string(),
            format!("{}", r.spread),
            format!("{}", r.lambda),
            r.trials.to_string(),
            r.seed.to_string(),
            format!("{}", r.mean_cos),
            format!("{}", r.delta_cos),
            format!("{}", r.auc),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
