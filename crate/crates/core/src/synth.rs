//! Synthetic multi-rater annotations.
//!
//! A probabilistic ground truth is drawn from `Beta(p, 1 - p)`. Category-shift
//! simulation adds a per-category uniform shift and per-rater Gaussian noise
//! before thresholding at 0.5. Controlled flips replace selected probabilities
//! `μ` by `1 - μ` to inject an exact number of false negatives and false
//! positives.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaDist, ContinuousCDF};

use crate::agreement::{AgreementSums};
use crate::annotation::{
    AnnotationSet, BinaryAnnotation, Label, ProbabilitySequence, DEFAULT_SAMPLE_PERIOD, THRESHOLD,
};
use crate::error::{Error, Result};
use crate::seed;

/// Record identifier used for generated single-record sets.
pub const SYNTH_RECORD_ID: &str = "rec0";

fn default_period() -> f64 {
    DEFAULT_SAMPLE_PERIOD
}

/// Ground-truth generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthConfig {
    pub prevalence_p: f64,
    pub length_n: usize,
    pub seed: u64,
    #[serde(default = "default_period")]
    pub sample_period: f64,
}

impl GroundTruthConfig {
    pub fn new(prevalence_p: f64, length_n: usize, seed: u64) -> Self {
        Self {
            prevalence_p,
            length_n,
            seed,
            sample_period: DEFAULT_SAMPLE_PERIOD,
        }
    }

    /// Config whose thresholded ground truth has an expected `ratio : 1`
    /// negative-to-positive imbalance.
    pub fn for_imbalance(ratio: f64, length_n: usize, seed: u64) -> Result<Self> {
        Ok(Self::new(prevalence_for_imbalance(ratio)?, length_n, seed))
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prevalence_p > 0.0 && self.prevalence_p < 1.0) {
            return Err(Error::validation(
                "prevalence_p",
                format!("must lie in (0, 1), got {}", self.prevalence_p),
            ));
        }
        if self.length_n == 0 {
            return Err(Error::validation("length_n", "must be at least 1"));
        }
        if !(self.sample_period.is_finite() && self.sample_period > 0.0) {
            return Err(Error::validation("sample_period", "must be positive"));
        }
        Ok(())
    }
}

/// One rater category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterProfile {
    pub category_id: String,
    /// Maximal shift: positive for overraters, negative for underraters.
    pub shift_bound: f64,
    /// Within-category standard deviation.
    pub sigma: f64,
    pub count: usize,
}

impl RaterProfile {
    pub fn new(category_id: impl Into<String>, shift_bound: f64, sigma: f64, count: usize) -> Self {
        Self {
            category_id: category_id.into(),
            shift_bound,
            sigma,
            count,
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if self.category_id.is_empty() {
            return Err(Error::validation(format!("{path}.category_id"), "must not be empty"));
        }
        if !(self.shift_bound.is_finite() && self.shift_bound.abs() <= 1.0) {
            return Err(Error::validation(
                format!("{path}.shift_bound"),
                format!("must lie in [-1, 1], got {}", self.shift_bound),
            ));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::validation(
                format!("{path}.sigma"),
                format!("must be non-negative, got {}", self.sigma),
            ));
        }
        if self.count == 0 {
            return Err(Error::validation(format!("{path}.count"), "must be at least 1"));
        }
        Ok(())
    }

    /// Rater identifier of the `k`-th rater (0-based) of this category.
    pub fn rater_id(&self, k: usize) -> String {
        format!("{}_{:02}", self.category_id, k + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipVariation {
    /// Fixed fraction of each class flipped.
    Proportional,
    /// Fraction of positives flipped, then the same count of negatives.
    CountMatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipSpec {
    pub fn_rate: f64,
    /// Ignored by [`FlipVariation::CountMatched`].
    #[serde(default)]
    pub fp_rate: f64,
    pub variation: FlipVariation,
    pub seed: u64,
}

impl FlipSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("fn_rate", self.fn_rate), ("fp_rate", self.fp_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

fn tail_above_threshold(p: f64) -> f64 {
    let d = BetaDist::new(p, 1.0 - p).expect("shape parameters in (0, 1)");
    1.0 - d.cdf(THRESHOLD)
}

fn prevalence_cache() -> &'static Mutex<HashMap<u64, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Beta parameter `p` with `P(Beta(p, 1-p) >= 0.5) = 1 / (ratio + 1)`.
pub fn prevalence_for_imbalance(ratio: f64) -> Result<f64> {
    if !(ratio.is_finite() && ratio >= 1.0) {
        return Err(Error::validation(
            "imbalance",
            format!("ratio must be at least 1, got {ratio}"),
        ));
    }
    if ratio == 1.0 {
        return Ok(0.5);
    }
    if let Some(&p) = prevalence_cache().lock().unwrap().get(&ratio.to_bits()) {
        return Ok(p);
    }
    let target = 1.0 / (ratio + 1.0);
    // The tail probability increases with p on (0, 0.5].
    let (mut lo, mut hi) = (1e-12f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail_above_threshold(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let p = 0.5 * (lo + hi);
    prevalence_cache().lock().unwrap().insert(ratio.to_bits(), p);
    Ok(p)
}

/// Expected positive fraction of the thresholded ground truth.
pub fn expected_positive_fraction(prevalence_p: f64) -> f64 {
    tail_above_threshold(prevalence_p)
}

// Seed paths, kept stable so that adding raters never changes existing draws.
const STREAM_TRUTH: u64 = 0;
const STREAM_CATEGORY: u64 = 1;
const STREAM_RATER: u64 = 2;

pub fn generate_ground_truth(cfg: &GroundTruthConfig) -> Result<ProbabilitySequence> {
    cfg.validate()?;
    let beta = Beta::new(cfg.prevalence_p, 1.0 - cfg.prevalence_p)
        .map_err(|e| Error::validation("prevalence_p", e.to_string()))?;
    let mut rng = seed::rng(cfg.seed, &[STREAM_TRUTH]);
    let values = (0..cfg.length_n)
        .map(|_| {
            let v: f64 = beta.sample(&mut rng);
            if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }
        })
        .collect();
    Ok(ProbabilitySequence::from_clamped(values, cfg.sample_period))
}

/// Raw per-sample shift vector: `U(0, b)` for `b > 0`, `U(b, 0)` for `b < 0`,
/// zero for `b = 0`.
pub fn category_shifts(len: usize, shift_bound: f64, seed: u64) -> Vec<f64> {
    if shift_bound == 0.0 {
        return vec![0.0; len];
    }
    let mut rng = seed::rng(seed, &[]);
    (0..len)
        .map(|_| rng.random::<f64>() * shift_bound)
        .collect()
}

/// Category base sequence: ground truth plus the category shift, clamped to
/// `[0, 1]`.
pub fn sample_category_base(
    gt: &ProbabilitySequence,
    profile: &RaterProfile,
    seed: u64,
) -> ProbabilitySequence {
    if profile.shift_bound == 0.0 {
        return gt.clone();
    }
    let shifts = category_shifts(gt.len(), profile.shift_bound, seed);
    let values = gt
        .values()
        .iter()
        .zip(shifts)
        .map(|(mu, d)| (mu + d).clamp(0.0, 1.0))
        .collect();
    ProbabilitySequence::from_clamped(values, gt.sample_period())
}

/// One rater: `P_j ~ N(base_j, sigma)` clamped to `[0, 1]`, labelled positive
/// when `P_j >= 0.5`.
pub fn sample_rater(
    base: &ProbabilitySequence,
    sigma: f64,
    seed: u64,
    record_id: &str,
    rater_id: &str,
) -> Result<(ProbabilitySequence, BinaryAnnotation)> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::validation("sigma", format!("must be non-negative, got {sigma}")));
    }
    let probs = if sigma == 0.0 {
        base.clone()
    } else {
        let mut rng = seed::rng(seed, &[]);
        let values = base
            .values()
            .iter()
            .map(|&mu| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (mu + sigma * z).clamp(0.0, 1.0)
            })
            .collect();
        ProbabilitySequence::from_clamped(values, base.sample_period())
    };
    let annotation = probs.to_annotation(record_id, rater_id);
    Ok((probs, annotation))
}

fn validate_profiles(profiles: &[RaterProfile]) -> Result<()> {
    if profiles.is_empty() {
        return Err(Error::validation("profiles", "at least one rater profile is required"));
    }
    for (i, p) in profiles.iter().enumerate() {
        p.validate(&format!("profiles[{i}]"))?;
    }
    for (i, p) in profiles.iter().enumerate() {
        if profiles[..i].iter().any(|q| q.category_id == p.category_id) {
            return Err(Error::validation(
                format!("profiles[{i}].category_id"),
                format!("duplicate category `{}`", p.category_id),
            ));
        }
    }
    Ok(())
}

/// Category base seed for a category under `root`.
fn category_seed(root: u64, category_id: &str) -> u64 {
    seed::derive(root, &[STREAM_CATEGORY, seed::tag(category_id)])
}

fn rater_seed(root: u64, category_id: &str, k: usize) -> u64 {
    seed::derive(root, &[STREAM_RATER, seed::tag(category_id), k as u64])
}

/// Category-shift simulation: one ground truth, one base per category, one
/// independent Gaussian draw per rater.
pub fn generate_method_a(
    cfg: &GroundTruthConfig,
    profiles: &[RaterProfile],
) -> Result<(ProbabilitySequence, AnnotationSet)> {
    validate_profiles(profiles)?;
    let gt = generate_ground_truth(cfg)?;
    let set = method_a_from_truth(&gt, cfg.seed, profiles)?;
    Ok((gt, set))
}

/// Category-shift simulation on a given ground truth.
pub fn method_a_from_truth(
    gt: &ProbabilitySequence,
    root_seed: u64,
    profiles: &[RaterProfile],
) -> Result<AnnotationSet> {
    validate_profiles(profiles)?;
    let mut annotations = Vec::new();
    for p in profiles {
        let base = sample_category_base(gt, p, category_seed(root_seed, &p.category_id));
        for k in 0..p.count {
            let (_, a) = sample_rater(
                &base,
                p.sigma,
                rater_seed(root_seed, &p.category_id, k),
                SYNTH_RECORD_ID,
                &p.rater_id(k),
            )?;
            annotations.push(a);
        }
    }
    AnnotationSet::new(annotations)
}

/// Profiles used for agreement calibration: `n` single-rater categories
/// sharing one shift bound and one sigma, so each rater draws its own shift.
pub fn calibration_profiles(n_raters: usize, shift_bound: f64, sigma: f64) -> Vec<RaterProfile> {
    (0..n_raters)
        .map(|k| RaterProfile::new(format!("cal{k:02}"), shift_bound, sigma, 1))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub sigma: f64,
    pub achieved_kappa: f64,
}

/// Tolerance on the achieved Fleiss' κ.
pub const CALIBRATION_TOLERANCE: f64 = 0.01;
const SIGMA_MAX: f64 = 2.0;

/// Find the sigma at which the calibration panel reaches `target_kappa`.
///
/// Random numbers are held fixed across candidate sigmas, so the search sees a
/// deterministic curve; generating [`calibration_profiles`] with the returned
/// sigma and the same config reproduces `achieved_kappa` exactly.
pub fn calibrate_sigma(
    target_kappa: f64,
    n_raters: usize,
    cfg: &GroundTruthConfig,
    shift_bound: f64,
) -> Result<Calibration> {
    if !(target_kappa > 0.0 && target_kappa <= 1.0) {
        return Err(Error::validation(
            "target_kappa",
            format!("must lie in (0, 1], got {target_kappa}"),
        ));
    }
    if n_raters < 2 {
        return Err(Error::InsufficientRaters {
            required: 2,
            actual: n_raters,
        });
    }
    let probe = calibration_profiles(n_raters, shift_bound, 0.0);
    validate_profiles(&probe)?;
    let gt = generate_ground_truth(cfg)?;

    // Per rater: shifted base and the standard-normal draws used by sample_rater.
    let panel: Vec<(Vec<f64>, Vec<f64>)> = probe
        .iter()
        .map(|p| {
            let base = sample_category_base(&gt, p, category_seed(cfg.seed, &p.category_id));
            let mut rng = seed::rng(rater_seed(cfg.seed, &p.category_id, 0), &[]);
            let z = (0..gt.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            (base.values().to_vec(), z)
        })
        .collect();

    let kappa_at = |sigma: f64| -> f64 {
        let m = panel.len() as u64;
        let mut sums = AgreementSums { n_raters: m, ..Default::default() };
        for j in 0..gt.len() {
            let pos = panel
                .iter()
                .filter(|(b, z)| {
                    let v: f64 = if sigma == 0.0 { b[j] } else { (b[j] + sigma * z[j]).clamp(0.0, 1.0) };
                    v >= THRESHOLD
                })
                .count() as u64;
            sums.add(&AgreementSums::item(m, pos));
        }
        sums.fleiss().value.value().unwrap_or(f64::NAN)
    };

    let mut best = Calibration { sigma: 0.0, achieved_kappa: kappa_at(0.0) };
    let consider = |sigma: f64, kappa: f64, best: &mut Calibration| {
        if (kappa - target_kappa).abs() < (best.achieved_kappa - target_kappa).abs() {
            *best = Calibration { sigma, achieved_kappa: kappa };
        }
    };
    if best.achieved_kappa < target_kappa - CALIBRATION_TOLERANCE {
        return Err(Error::Calibration {
            target: target_kappa,
            closest: best.achieved_kappa,
            sigma: 0.0,
        });
    }
    if (best.achieved_kappa - target_kappa).abs() <= CALIBRATION_TOLERANCE / 4.0 {
        return Ok(best);
    }
    let k_max = kappa_at(SIGMA_MAX);
    consider(SIGMA_MAX, k_max, &mut best);
    if k_max > target_kappa + CALIBRATION_TOLERANCE {
        return Err(Error::Calibration {
            target: target_kappa,
            closest: best.achieved_kappa,
            sigma: best.sigma,
        });
    }

    let (mut lo, mut hi) = (0.0f64, SIGMA_MAX);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let k = kappa_at(mid);
        consider(mid, k, &mut best);
        if (k - target_kappa).abs() <= CALIBRATION_TOLERANCE / 4.0 {
            break;
        }
        if k > target_kappa {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    if (best.achieved_kappa - target_kappa).abs() <= CALIBRATION_TOLERANCE {
        Ok(best)
    } else {
        Err(Error::Calibration {
            target: target_kappa,
            closest: best.achieved_kappa,
            sigma: best.sigma,
        })
    }
}

/// Result of a controlled-flip corruption.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipOutcome {
    /// Thresholded ground truth.
    pub reference: BinaryAnnotation,
    pub corrupted: BinaryAnnotation,
    /// Ground truth with the flipped probabilities replaced by `1 - μ`.
    pub corrupted_probabilities: ProbabilitySequence,
    pub n_false_negatives: usize,
    pub n_false_positives: usize,
}

fn flipped_probability(mu: f64) -> f64 {
    // 1 - 0.5 would re-threshold to the same class.
    if mu == THRESHOLD {
        THRESHOLD.next_down()
    } else {
        1.0 - mu
    }
}

/// Controlled flips against the thresholded ground truth.
pub fn flip_annotation(gt: &ProbabilitySequence, spec: &FlipSpec) -> Result<FlipOutcome> {
    spec.validate()?;
    let ref_labels = gt.threshold();
    let positives: Vec<usize> = (0..gt.len()).filter(|&j| ref_labels[j].is_positive()).collect();
    let negatives: Vec<usize> = (0..gt.len()).filter(|&j| !ref_labels[j].is_positive()).collect();

    let n_fn = (spec.fn_rate * positives.len() as f64).floor() as usize;
    let n_fp = match spec.variation {
        FlipVariation::Proportional => (spec.fp_rate * negatives.len() as f64).floor() as usize,
        FlipVariation::CountMatched => {
            if positives.is_empty() || negatives.is_empty() {
                return Err(Error::Infeasible(
                    "count-matched flips need both classes in the ground truth".into(),
                ));
            }
            if n_fn > negatives.len() {
                return Err(Error::Infeasible(format!(
                    "{} false negatives requested but only {} negatives are available to match",
                    n_fn,
                    negatives.len()
                )));
            }
            n_fn
        }
    };

    let mut rng = seed::rng(spec.seed, &[]);
    let mut values = gt.values().to_vec();
    for i in rand::seq::index::sample(&mut rng, positives.len(), n_fn) {
        let j = positives[i];
        values[j] = flipped_probability(values[j]);
    }
    for i in rand::seq::index::sample(&mut rng, negatives.len(), n_fp) {
        let j = negatives[i];
        values[j] = flipped_probability(values[j]);
    }

    let corrupted_probabilities = ProbabilitySequence::from_clamped(values, gt.sample_period());
    Ok(FlipOutcome {
        reference: gt.to_annotation(SYNTH_RECORD_ID, "reference"),
        corrupted: corrupted_probabilities.to_annotation(SYNTH_RECORD_ID, "corrupted"),
        corrupted_probabilities,
        n_false_negatives: n_fn,
        n_false_positives: n_fp,
    })
}

/// Fraction of positive labels.
pub fn positive_fraction(labels: &[Label]) -> f64 {
    labels.iter().filter(|l| l.is_positive()).count() as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agreement::{fleiss_kappa, RecordScope};
    use crate::annotation::confusion;
    use crate::metrics::sample_metrics;

    #[test]
    fn ground_truth_is_seeded() {
        let cfg = GroundTruthConfig::new(0.3, 1000, 11);
        assert_eq!(generate_ground_truth(&cfg).unwrap(), generate_ground_truth(&cfg).unwrap());
        assert_ne!(
            generate_ground_truth(&cfg).unwrap(),
            generate_ground_truth(&cfg.with_seed(12)).unwrap()
        );
    }

    #[test]
    fn invalid_ground_truth_config() {
        assert!(generate_ground_truth(&GroundTruthConfig::new(1.0, 10, 0)).is_err());
        assert!(generate_ground_truth(&GroundTruthConfig::new(0.5, 0, 0)).is_err());
    }

    #[test]
    fn prevalence_solver_matches_scipy() {
        // brentq on scipy.stats.beta.sf(0.5, p, 1 - p) = 1 / (r + 1)
        for (r, p) in [
            (5.0, 0.197_626_316_620_826),
            (6.0, 0.172_911_073_456_089_9),
            (10.0, 0.115_864_138_953_644_4),
            (25.0, 0.052_296_664_199_868_72),
            (50.0, 0.027_404_435_647_238_86),
        ] {
            let got = prevalence_for_imbalance(r).unwrap();
            assert!((got - p).abs() < 1e-8, "r={r}: {got} vs {p}");
        }
        assert_eq!(prevalence_for_imbalance(1.0).unwrap(), 0.5);
        assert!(prevalence_for_imbalance(0.5).is_err());
    }

    #[test]
    fn heavy_imbalance_positive_fraction() {
        // scipy beta.sf(0.5, 1/51, 50/51) = 0.013905474206613448
        assert!((expected_positive_fraction(1.0 / 51.0) - 0.013_905_474_206_613_448).abs() < 1e-9);
        let cfg = GroundTruthConfig::new(1.0 / 51.0, 200_000, 21);
        let frac = positive_fraction(&generate_ground_truth(&cfg).unwrap().threshold());
        assert!((frac - 0.0139).abs() < 0.001, "{frac}");
    }

    #[test]
    fn balanced_positive_fraction() {
        let cfg = GroundTruthConfig::new(0.5, 100_000, 22);
        let frac = positive_fraction(&generate_ground_truth(&cfg).unwrap().threshold());
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn uniform_shift_mean() {
        let s = category_shifts(1_000_000, 0.3, 4);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 0.15).abs() < 0.001, "{mean}");
        assert!(s.iter().all(|&d| (0.0..0.3).contains(&d)));
    }

    #[test]
    fn zero_shift_keeps_truth() {
        let gt = generate_ground_truth(&GroundTruthConfig::new(0.5, 500, 1)).unwrap();
        let base = sample_category_base(&gt, &RaterProfile::new("e", 0.0, 0.1, 1), 5);
        assert_eq!(base, gt);
    }

    #[test]
    fn positive_shift_clamps() {
        let gt = ProbabilitySequence::new(vec![0.9; 200], 1.0).unwrap();
        let base = sample_category_base(&gt, &RaterProfile::new("o", 0.3, 0.0, 1), 3);
        assert!(base.values().iter().all(|&v| (0.9..=1.0).contains(&v)));
        assert!(base.values().iter().any(|&v| v == 1.0));
    }

    #[test]
    fn negative_shift_range() {
        let s = category_shifts(10_000, -0.3, 8);
        assert!(s.iter().all(|&d| (-0.3..=0.0).contains(&d)));
    }

    #[test]
    fn sigma_zero_thresholds_base() {
        let base = ProbabilitySequence::new(vec![0.7, 0.3, 0.5], 1.0).unwrap();
        let (p, a) = sample_rater(&base, 0.0, 1, "r", "x").unwrap();
        assert_eq!(p, base);
        assert_eq!(a.labels(), &[Label::Positive, Label::Negative, Label::Positive]);
        assert!(sample_rater(&base, -0.1, 1, "r", "x").is_err());
    }

    #[test]
    fn degenerate_method_a_reproduces_truth() {
        let cfg = GroundTruthConfig::new(0.5, 400, 2);
        let (gt, set) = generate_method_a(&cfg, &[RaterProfile::new("expert", 0.0, 0.0, 3)]).unwrap();
        let truth = gt.threshold();
        for a in set.annotations() {
            assert_eq!(a.labels(), truth.as_slice());
        }
        assert_eq!(set.rater_ids(), &["expert_01", "expert_02", "expert_03"]);
    }

    #[test]
    fn adding_a_rater_keeps_existing_draws() {
        let cfg = GroundTruthConfig::new(0.4, 300, 9);
        let (_, small) = generate_method_a(&cfg, &[RaterProfile::new("e", 0.1, 0.2, 2)]).unwrap();
        let (_, big) = generate_method_a(
            &cfg,
            &[RaterProfile::new("e", 0.1, 0.2, 3), RaterProfile::new("o", 0.3, 0.1, 1)],
        )
        .unwrap();
        for k in 0..2 {
            assert_eq!(small.annotation(0, k), big.annotation(0, k));
        }
    }

    #[test]
    fn duplicate_category_rejected() {
        let cfg = GroundTruthConfig::new(0.4, 10, 9);
        let err = generate_method_a(
            &cfg,
            &[RaterProfile::new("e", 0.0, 0.1, 1), RaterProfile::new("e", 0.0, 0.1, 1)],
        )
        .unwrap_err();
        assert!(err.to_string().contains("profiles[1].category_id"));
        let err = generate_method_a(&cfg, &[RaterProfile::new("e", 0.0, -0.1, 1)]).unwrap_err();
        assert!(err.to_string().contains("profiles[0].sigma"));
    }

    #[test]
    fn proportional_flips_hit_exact_rates() {
        let gt = generate_ground_truth(&GroundTruthConfig::new(0.5, 20_000, 4)).unwrap();
        let spec = FlipSpec { fn_rate: 0.1, fp_rate: 0.1, variation: FlipVariation::Proportional, seed: 1 };
        let out = flip_annotation(&gt, &spec).unwrap();
        let c = confusion(&out.reference, &out.corrupted).unwrap();
        let n_pos = c.actual_positives() as f64;
        let n_neg = c.actual_negatives() as f64;
        let m = sample_metrics(&c);
        assert_eq!(m.sensitivity.unwrap(), 1.0 - (0.1 * n_pos).floor() / n_pos);
        assert_eq!(m.specificity.unwrap(), 1.0 - (0.1 * n_neg).floor() / n_neg);
        assert!((m.sensitivity.unwrap() - 0.9).abs() < 1e-3);
    }

    #[test]
    fn no_flips_is_identity() {
        let gt = generate_ground_truth(&GroundTruthConfig::new(0.5, 1000, 4)).unwrap();
        let spec = FlipSpec { fn_rate: 0.0, fp_rate: 0.0, variation: FlipVariation::Proportional, seed: 1 };
        let out = flip_annotation(&gt, &spec).unwrap();
        assert_eq!(out.reference.labels(), out.corrupted.labels());
    }

    #[test]
    fn count_matched_preserves_prevalence() {
        let cfg = GroundTruthConfig::for_imbalance(50.0, 50_000, 3).unwrap();
        let gt = generate_ground_truth(&cfg).unwrap();
        let spec = FlipSpec { fn_rate: 0.2, fp_rate: 0.0, variation: FlipVariation::CountMatched, seed: 2 };
        let out = flip_annotation(&gt, &spec).unwrap();
        assert_eq!(out.reference.positives(), out.corrupted.positives());
        let c = confusion(&out.reference, &out.corrupted).unwrap();
        assert_eq!(c.fn_, c.fp);
        assert_eq!(c.fn_ as usize, out.n_false_negatives);
    }

    #[test]
    fn count_matched_infeasible() {
        // three positives, one negative
        let gt = ProbabilitySequence::new(vec![0.9, 0.8, 0.7, 0.1], 1.0).unwrap();
        let spec = FlipSpec { fn_rate: 1.0, fp_rate: 0.0, variation: FlipVariation::CountMatched, seed: 0 };
        assert!(matches!(flip_annotation(&gt, &spec), Err(Error::Infeasible(_))));
    }

    #[test]
    fn calibrate_to_one_is_zero_sigma() {
        let cfg = GroundTruthConfig::new(0.5, 5000, 5);
        let c = calibrate_sigma(1.0, 3, &cfg, 0.0).unwrap();
        assert_eq!(c.sigma, 0.0);
        assert_eq!(c.achieved_kappa, 1.0);
    }

    #[test]
    fn calibration_reproduces_with_generator() {
        let cfg = GroundTruthConfig::new(0.5, 20_000, 5);
        let c = calibrate_sigma(0.8, 3, &cfg, 0.0).unwrap();
        assert!((c.achieved_kappa - 0.8).abs() <= CALIBRATION_TOLERANCE);
        let (_, set) = generate_method_a(&cfg, &calibration_profiles(3, 0.0, c.sigma)).unwrap();
        let k = fleiss_kappa(&set, RecordScope::All).unwrap().value.unwrap();
        assert_eq!(k, c.achieved_kappa);
    }

    #[test]
    fn calibration_fails_under_strong_bias() {
        let cfg = GroundTruthConfig::new(0.5, 20_000, 5);
        match calibrate_sigma(0.99, 3, &cfg, 0.9) {
            Err(Error::Calibration { closest, .. }) => assert!(closest < 0.98),
            other => panic!("expected calibration failure, got {other:?}"),
        }
    }
}
