//! Unanimous and majority consensus annotations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agreement::{fleiss_kappa, RecordScope};
use crate::annotation::{AnnotationSet, BinaryAnnotation, Label};
use crate::error::{Error, Result};
use crate::synth::{calibrate_sigma, calibration_profiles, generate_method_a, GroundTruthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Unanimous,
    Majority,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Unanimous => "unanimous",
            Strategy::Majority => "majority",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unanimous" => Ok(Strategy::Unanimous),
            "majority" => Ok(Strategy::Majority),
            other => Err(Error::validation(
                "strategy",
                format!("unknown consensus strategy `{other}` (expected unanimous or majority)"),
            )),
        }
    }
}

/// Label assigned to an exact majority tie.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    Negative,
    Positive,
}

impl TieBreak {
    fn label(self) -> Label {
        match self {
            TieBreak::Negative => Label::Negative,
            TieBreak::Positive => Label::Positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusResult {
    pub record_id: String,
    pub strategy: Strategy,
    /// Consensus labels; [`Label::Missing`] marks an excluded sample.
    #[serde(skip)]
    pub labels: Vec<Label>,
    pub n_samples: usize,
    pub n_excluded: usize,
    pub n_total_agreement: usize,
    pub data_loss_fraction: f64,
    pub total_agreement_fraction: f64,
    /// `(positives, voters)` per sample.
    #[serde(skip)]
    pub per_sample_vote_counts: Option<Vec<(u32, u32)>>,
}

impl ConsensusResult {
    /// The consensus as an annotation track named `consensus_<strategy>`.
    pub fn to_annotation(&self, sample_period: f64) -> Result<BinaryAnnotation> {
        BinaryAnnotation::new(
            self.record_id.clone(),
            format!("consensus_{}", self.strategy.as_str()),
            self.labels.clone(),
            sample_period,
        )
    }
}

/// Per-sample `(positives, voters)` over the given tracks.
pub fn vote_counts(tracks: &[&BinaryAnnotation]) -> Vec<(u32, u32)> {
    let n = tracks.first().map_or(0, |t| t.len());
    let mut votes = vec![(0u32, 0u32); n];
    for t in tracks {
        for (v, l) in votes.iter_mut().zip(t.labels()) {
            match l {
                Label::Positive => {
                    v.0 += 1;
                    v.1 += 1;
                }
                Label::Negative => v.1 += 1,
                Label::Missing => {}
            }
        }
    }
    votes
}

fn consensus_label(positives: u32, voters: u32, strategy: Strategy, tie: TieBreak) -> Label {
    if voters < 2 {
        return Label::Missing;
    }
    match strategy {
        Strategy::Unanimous => {
            if positives == voters {
                Label::Positive
            } else if positives == 0 {
                Label::Negative
            } else {
                Label::Missing
            }
        }
        Strategy::Majority => match (2 * positives).cmp(&voters) {
            std::cmp::Ordering::Greater => Label::Positive,
            std::cmp::Ordering::Less => Label::Negative,
            std::cmp::Ordering::Equal => tie.label(),
        },
    }
}

/// Majority labels over complete tracks, ties resolved by `tie`.
pub fn majority_labels(tracks: &[&BinaryAnnotation], tie: TieBreak) -> Vec<Label> {
    vote_counts(tracks)
        .into_iter()
        .map(|(p, v)| consensus_label(p, v, Strategy::Majority, tie))
        .collect()
}

/// Consensus of the given tracks, which must share one record.
pub fn consensus_of(
    tracks: &[&BinaryAnnotation],
    strategy: Strategy,
    tie: TieBreak,
) -> Result<ConsensusResult> {
    if tracks.len() < 2 {
        return Err(Error::InsufficientRaters {
            required: 2,
            actual: tracks.len(),
        });
    }
    let votes = vote_counts(tracks);
    let labels: Vec<Label> = votes
        .iter()
        .map(|&(p, v)| consensus_label(p, v, strategy, tie))
        .collect();
    let n = labels.len();
    let n_excluded = labels.iter().filter(|l| l.is_missing()).count();
    let n_total_agreement = votes
        .iter()
        .filter(|&&(p, v)| v >= 2 && (p == 0 || p == v))
        .count();
    Ok(ConsensusResult {
        record_id: tracks[0].record_id().to_string(),
        strategy,
        labels,
        n_samples: n,
        n_excluded,
        n_total_agreement,
        data_loss_fraction: n_excluded as f64 / n as f64,
        total_agreement_fraction: n_total_agreement as f64 / n as f64,
        per_sample_vote_counts: Some(votes),
    })
}

/// Consensus of all raters on one record, majority ties resolved to 0.
pub fn build_consensus(set: &AnnotationSet, record_id: &str, strategy: Strategy) -> Result<ConsensusResult> {
    build_consensus_with(set, record_id, strategy, TieBreak::Negative)
}

pub fn build_consensus_with(
    set: &AnnotationSet,
    record_id: &str,
    strategy: Strategy,
    tie: TieBreak,
) -> Result<ConsensusResult> {
    let r = set.record_index(record_id)?;
    let tracks: Vec<&BinaryAnnotation> = set.record(r).iter().collect();
    consensus_of(&tracks, strategy, tie)
}

/// Consensus for every record of the set, in record order.
pub fn build_consensus_all(set: &AnnotationSet, strategy: Strategy, tie: TieBreak) -> Result<Vec<ConsensusResult>> {
    set.record_ids()
        .iter()
        .map(|id| build_consensus_with(set, id, strategy, tie))
        .collect()
}

/// Sample-weighted pooled `(data_loss_fraction, total_agreement_fraction)`.
pub fn pooled_fractions(results: &[ConsensusResult]) -> (f64, f64) {
    let n: usize = results.iter().map(|r| r.n_samples).sum();
    let excluded: usize = results.iter().map(|r| r.n_excluded).sum();
    let agree: usize = results.iter().map(|r| r.n_total_agreement).sum();
    (excluded as f64 / n as f64, agree as f64 / n as f64)
}

/// Grid of a consensus study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSweepConfig {
    pub n_raters: Vec<usize>,
    pub kappa_targets: Vec<f64>,
    /// Negative-to-positive ratio `r` of an `r:1` imbalance.
    pub imbalance: f64,
    pub length_n: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRow {
    pub n_raters: usize,
    pub kappa_target: f64,
    pub kappa_achieved: f64,
    pub imbalance: f64,
    pub data_loss: f64,
    pub total_agreement: f64,
    pub seed_count: usize,
}

/// One calibrated dataset's unanimous-consensus point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsensusPoint {
    pub sigma: f64,
    pub kappa_achieved: f64,
    pub data_loss: f64,
    pub total_agreement: f64,
}

/// Calibrate `n_raters` well-calibrated raters to `kappa_target`, generate the
/// set and measure unanimous-consensus data loss and total agreement.
pub fn consensus_point(
    n_raters: usize,
    kappa_target: f64,
    cfg: &GroundTruthConfig,
) -> Result<ConsensusPoint> {
    let cal = calibrate_sigma(kappa_target, n_raters, cfg, 0.0)?;
    let (_, set) = generate_method_a(cfg, &calibration_profiles(n_raters, 0.0, cal.sigma))?;
    let results = build_consensus_all(&set, Strategy::Unanimous, TieBreak::Negative)?;
    let (data_loss, total_agreement) = pooled_fractions(&results);
    let achieved = fleiss_kappa(&set, RecordScope::All)?.value.value().unwrap_or(f64::NAN);
    Ok(ConsensusPoint {
        sigma: cal.sigma,
        kappa_achieved: achieved,
        data_loss,
        total_agreement,
    })
}

/// Seed-averaged consensus statistics over the `n_raters × kappa` grid, rows
/// ordered by rater count then kappa target.
pub fn consensus_sweep(cfg: &ConsensusSweepConfig) -> Result<Vec<ConsensusRow>> {
    if cfg.n_raters.is_empty() || cfg.kappa_targets.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::validation("consensus", "n_raters, kappa_targets and seeds must be non-empty"));
    }
    if let Some(&n) = cfg.n_raters.iter().find(|&&n| n < 2) {
        return Err(Error::InsufficientRaters { required: 2, actual: n });
    }
    let p = crate::synth::prevalence_for_imbalance(cfg.imbalance)?;
    let jobs: Vec<(usize, f64, u64)> = cfg
        .n_raters
        .iter()
        .flat_map(|&n| {
            cfg.kappa_targets
                .iter()
                .flat_map(move |&k| cfg.seeds.iter().map(move |&s| (n, k, s)))
        })
        .collect();
    let points: Vec<ConsensusPoint> = jobs
        .par_iter()
        .map(|&(n, k, s)| consensus_point(n, k, &GroundTruthConfig::new(p, cfg.length_n, s)))
        .collect::<Result<_>>()?;

    let per_cell = cfg.seeds.len();
    Ok(jobs
        .chunks(per_cell)
        .zip(points.chunks(per_cell))
        .map(|(job, pts)| {
            let m = pts.len() as f64;
            ConsensusRow {
                n_raters: job[0].0,
                kappa_target: job[0].1,
                kappa_achieved: pts.iter().map(|p| p.kappa_achieved).sum::<f64>() / m,
                imbalance: cfg.imbalance,
                data_loss: pts.iter().map(|p| p.data_loss).sum::<f64>() / m,
                total_agreement: pts.iter().map(|p| p.total_agreement).sum::<f64>() / m,
                seed_count: pts.len(),
            }
        })
        .collect())
}

pub const SWEEP_CSV_HEADER: &str = "n_raters,kappa_target,kappa_achieved,imbalance,data_loss,total_agreement,seed_count";

pub fn sweep_to_csv(rows: &[ConsensusRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.n_raters, r.kappa_target, r.kappa_achieved, r.imbalance, r.data_loss, r.total_agreement, r.seed_count
        ));
    }
    out
}
