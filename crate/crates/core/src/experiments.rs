//! Simulation studies: metric behaviour under imbalance, consensus data loss,
//! agreement-coefficient collapse, and the expert/non-expert sweeps used to
//! score the equivalence tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agreement::{cohen_from_confusion, krippendorff_alpha, AgreementSums, RecordScope};
use crate::annotation::{confusion, AnnotationSet};
use crate::consensus::{consensus_point, consensus_sweep, ConsensusRow, ConsensusSweepConfig};
use crate::equivalence::{BootstrapConfig, Panel, TestId, TestOptions};
use crate::error::{Error, Result};
use crate::metrics::{auc_labels, burden_correlation, pcc, sample_metrics, Measure, DEFAULT_BURDEN_WINDOW_S};
use crate::seed;
use crate::synth::{
    flip_annotation, generate_ground_truth, generate_method_a, prevalence_for_imbalance, FlipSpec, FlipVariation,
    GroundTruthConfig, RaterProfile,
};

const STREAM_FLIP: u64 = 0xF11;

fn mean_defined(values: impl IntoIterator<Item = Measure>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .filter_map(Measure::value)
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Fig3Config {
    pub error_rate: f64,
    pub imbalances: Vec<f64>,
    pub length_n: usize,
    pub seeds: Vec<u64>,
    pub window_length_s: f64,
}

impl Default for Fig3Config {
    fn default() -> Self {
        Self {
            error_rate: 0.10,
            imbalances: vec![1.0, 5.0, 10.0, 25.0, 50.0],
            length_n: 100_000,
            seeds: vec![0, 1, 2],
            window_length_s: DEFAULT_BURDEN_WINDOW_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    pub imbalance: f64,
    pub auc: Option<f64>,
    pub mcc: Option<f64>,
    pub pcc: Option<f64>,
    pub ppv: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub fp_tp_ratio: Option<f64>,
    pub burden_correlation: Option<f64>,
    pub seed_count: usize,
}

/// Fixed-error sweep over class imbalance: proportional flips of `error_rate`
/// in both classes, metrics averaged over seeds.
pub fn run_fig3_sweep(cfg: &Fig3Config) -> Result<Vec<Fig3Row>> {
    if cfg.seeds.is_empty() || cfg.imbalances.is_empty() {
        return Err(Error::validation("fig3", "imbalances and seeds must be non-empty"));
    }
    cfg.imbalances
        .iter()
        .map(|&ratio| {
            let p = prevalence_for_imbalance(ratio)?;
            let per_seed = cfg
                .seeds
                .iter()
                .map(|&s| {
                    let gt = generate_ground_truth(&GroundTruthConfig::new(p, cfg.length_n, s))?;
                    let spec = FlipSpec {
                        fn_rate: cfg.error_rate,
                        fp_rate: cfg.error_rate,
                        variation: FlipVariation::Proportional,
                        seed: seed::derive(s, &[STREAM_FLIP, ratio.to_bits()]),
                    };
                    let out = flip_annotation(&gt, &spec)?;
                    let c = confusion(&out.reference, &out.corrupted)?;
                    let m = sample_metrics(&c);
                    let scores: Vec<f64> = out
                        .corrupted
                        .labels()
                        .iter()
                        .map(|l| if l.is_positive() { 1.0 } else { 0.0 })
                        .collect();
                    let auc = auc_labels(out.reference.labels(), &scores)?;
                    let pcc = pcc(gt.values(), out.corrupted_probabilities.values())?;
                    let burden = match burden_correlation(&out.reference, &out.corrupted, cfg.window_length_s) {
                        Ok(b) => b,
                        Err(Error::Degenerate(_)) => Measure::Undefined(crate::metrics::UndefinedReason::ZeroVariance),
                        Err(e) => return Err(e),
                    };
                    let fp_tp = Measure::ratio(c.fp, c.tp);
                    Ok([auc, m.mcc, pcc, m.ppv, m.sensitivity, m.specificity, fp_tp, burden])
                })
                .collect::<Result<Vec<_>>>()?;
            let col = |i: usize| mean_defined(per_seed.iter().map(|row| row[i]));
            Ok(Fig3Row {
                imbalance: ratio,
                auc: col(0),
                mcc: col(1),
                pcc: col(2),
                ppv: col(3),
                sensitivity: col(4),
                specificity: col(5),
                fp_tp_ratio: col(6),
                burden_correlation: col(7),
                seed_count: per_seed.len(),
            })
        })
        .collect()
}

pub fn fig3_to_csv(rows: &[Fig3Row]) -> String {
    let mut out = String::from("imbalance,auc,mcc,pcc,ppv,sensitivity,specificity,fp_tp_ratio,burden_correlation,seed_count\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.imbalance,
            fmt_opt(r.auc),
            fmt_opt(r.mcc),
            fmt_opt(r.pcc),
            fmt_opt(r.ppv),
            fmt_opt(r.sensitivity),
            fmt_opt(r.specificity),
            fmt_opt(r.fp_tp_ratio),
            fmt_opt(r.burden_correlation),
            r.seed_count
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusAnchor {
    pub label: String,
    pub n_raters: usize,
    pub kappa: f64,
    pub imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusStudyConfig {
    pub n_raters: Vec<usize>,
    pub kappa_targets: Vec<f64>,
    pub imbalances: Vec<f64>,
    pub length_n: usize,
    pub seeds: Vec<u64>,
    pub anchors: Vec<ConsensusAnchor>,
}

impl Default for ConsensusStudyConfig {
    fn default() -> Self {
        Self {
            n_raters: vec![3, 5, 9, 15],
            kappa_targets: vec![0.5, 0.7, 0.9],
            imbalances: vec![6.0, 50.0],
            length_n: 36_000,
            seeds: vec![0, 1, 2],
            anchors: vec![
                ConsensusAnchor {
                    label: "helsinki".into(),
                    n_raters: 3,
                    kappa: 0.77,
                    imbalance: 6.0,
                },
                ConsensusAnchor {
                    label: "cork".into(),
                    n_raters: 3,
                    kappa: 0.80,
                    imbalance: 50.0,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorCheck {
    pub anchor: ConsensusAnchor,
    pub kappa_achieved: f64,
    pub data_loss: f64,
    pub total_agreement: f64,
    /// Curve values linearly interpolated in kappa at the anchor's rater count.
    pub curve_data_loss: f64,
    pub curve_total_agreement: f64,
}

impl AnchorCheck {
    /// Largest absolute deviation from the curve, in percentage points.
    pub fn deviation_pp(&self) -> f64 {
        100.0
            * (self.data_loss - self.curve_data_loss)
                .abs()
                .max((self.total_agreement - self.curve_total_agreement).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusStudy {
    pub rows: Vec<ConsensusRow>,
    pub anchors: Vec<AnchorCheck>,
}

fn interpolate(xs: &[(f64, f64)], x: f64) -> Option<f64> {
    let mut pts = xs.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() == 1 {
        return Some(pts[0].1);
    }
    let i = pts.windows(2).position(|w| x <= w[1].0).unwrap_or(pts.len() - 2);
    let (x0, y0) = pts[i];
    let (x1, y1) = pts[i + 1];
    Some(y0 + (x - x0) * (y1 - y0) / (x1 - x0))
}

/// Consensus sweeps at every configured imbalance plus direct simulations at
/// the anchor coordinates.
pub fn run_consensus_study(cfg: &ConsensusStudyConfig) -> Result<ConsensusStudy> {
    let mut rows = Vec::new();
    for &imbalance in &cfg.imbalances {
        rows.extend(consensus_sweep(&ConsensusSweepConfig {
            n_raters: cfg.n_raters.clone(),
            kappa_targets: cfg.kappa_targets.clone(),
            imbalance,
            length_n: cfg.length_n,
            seeds: cfg.seeds.clone(),
        })?);
    }
    let anchors = cfg
        .anchors
        .iter()
        .map(|a| {
            let curve: Vec<&ConsensusRow> = rows
                .iter()
                .filter(|r| r.n_raters == a.n_raters && r.imbalance == a.imbalance)
                .collect();
            if curve.is_empty() {
                return Err(Error::validation(
                    format!("anchors.{}", a.label),
                    "anchor lies outside the swept rater counts and imbalances",
                ));
            }
            let loss: Vec<(f64, f64)> = curve.iter().map(|r| (r.kappa_achieved, r.data_loss)).collect();
            let agree: Vec<(f64, f64)> = curve.iter().map(|r| (r.kappa_achieved, r.total_agreement)).collect();
            let p = prevalence_for_imbalance(a.imbalance)?;
            let points = cfg
                .seeds
                .iter()
                .map(|&s| consensus_point(a.n_raters, a.kappa, &GroundTruthConfig::new(p, cfg.length_n, s)))
                .collect::<Result<Vec<_>>>()?;
            let m = points.len() as f64;
            let kappa_achieved = points.iter().map(|p| p.kappa_achieved).sum::<f64>() / m;
            Ok(AnchorCheck {
                anchor: a.clone(),
                kappa_achieved,
                data_loss: points.iter().map(|p| p.data_loss).sum::<f64>() / m,
                total_agreement: points.iter().map(|p| p.total_agreement).sum::<f64>() / m,
                curve_data_loss: interpolate(&loss, kappa_achieved).unwrap(),
                curve_total_agreement: interpolate(&agree, kappa_achieved).unwrap(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConsensusStudy { rows, anchors })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IraCollapseConfig {
    pub flip_rates: Vec<f64>,
    pub imbalances: Vec<f64>,
    pub length_n: usize,
    pub seeds: Vec<u64>,
}

impl Default for IraCollapseConfig {
    fn default() -> Self {
        Self {
            flip_rates: (0..=20).map(|i| i as f64 / 20.0).collect(),
            imbalances: vec![1.0, 5.0, 10.0, 25.0, 50.0],
            length_n: 100_000,
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IraRow {
    pub imbalance: f64,
    pub flip_rate: f64,
    pub cohen_kappa: Option<f64>,
    pub fleiss_kappa: Option<f64>,
    pub krippendorff_alpha: Option<f64>,
    pub gwet_ac1: Option<f64>,
    /// Seeds at which the count-matched corruption was feasible.
    pub feasible_seeds: usize,
    pub seed_count: usize,
}

impl IraRow {
    pub fn feasible(&self) -> bool {
        self.feasible_seeds > 0
    }
}

/// Agreement between the thresholded ground truth and a count-matched
/// corruption of it, over flip rate and imbalance.
pub fn run_ira_collapse_study(cfg: &IraCollapseConfig) -> Result<Vec<IraRow>> {
    if cfg.seeds.is_empty() {
        return Err(Error::validation("ira_collapse.seeds", "must be non-empty"));
    }
    let mut rows = Vec::new();
    for &ratio in &cfg.imbalances {
        let p = prevalence_for_imbalance(ratio)?;
        let truths = cfg
            .seeds
            .iter()
            .map(|&s| generate_ground_truth(&GroundTruthConfig::new(p, cfg.length_n, s)))
            .collect::<Result<Vec<_>>>()?;
        for &rate in &cfg.flip_rates {
            let mut values: Vec<[Measure; 4]> = Vec::new();
            for (gt, &s) in truths.iter().zip(&cfg.seeds) {
                let spec = FlipSpec {
                    fn_rate: rate,
                    fp_rate: 0.0,
                    variation: FlipVariation::CountMatched,
                    seed: seed::derive(s, &[STREAM_FLIP, ratio.to_bits(), rate.to_bits()]),
                };
                let out = match flip_annotation(gt, &spec) {
                    Ok(o) => o,
                    Err(Error::Infeasible(_)) => continue,
                    Err(e) => return Err(e),
                };
                let c = confusion(&out.reference, &out.corrupted)?;
                let sums = AgreementSums::from_confusion(&c);
                let pair = AnnotationSet::new(vec![out.reference.clone(), out.corrupted.clone()])?;
                values.push([
                    cohen_from_confusion(&c).value,
                    sums.fleiss().value,
                    krippendorff_alpha(&pair, RecordScope::All)?.value,
                    sums.gwet_ac1().value,
                ]);
            }
            let col = |i: usize| mean_defined(values.iter().map(|v| v[i]));
            rows.push(IraRow {
                imbalance: ratio,
                flip_rate: rate,
                cohen_kappa: col(0),
                fleiss_kappa: col(1),
                krippendorff_alpha: col(2),
                gwet_ac1: col(3),
                feasible_seeds: values.len(),
                seed_count: cfg.seeds.len(),
            });
        }
    }
    Ok(rows)
}

pub fn ira_to_csv(rows: &[IraRow]) -> String {
    let mut out = String::from(
        "imbalance,flip_rate,cohen_kappa,fleiss_kappa,krippendorff_alpha,gwet_ac1,feasible_seeds,seed_count\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.imbalance,
            r.flip_rate,
            fmt_opt(r.cohen_kappa),
            fmt_opt(r.fleiss_kappa),
            fmt_opt(r.krippendorff_alpha),
            fmt_opt(r.gwet_ac1),
            r.feasible_seeds,
            r.seed_count
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupId {
    D1,
    D2,
    D3,
    D4,
}

impl GroupId {
    pub const ALL: [GroupId; 4] = [GroupId::D1, GroupId::D2, GroupId::D3, GroupId::D4];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupId::D1 => "D1",
            GroupId::D2 => "D2",
            GroupId::D3 => "D3",
            GroupId::D4 => "D4",
        }
    }
}

impl std::str::FromStr for GroupId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "D1" => Ok(GroupId::D1),
            "D2" => Ok(GroupId::D2),
            "D3" => Ok(GroupId::D3),
            "D4" => Ok(GroupId::D4),
            _ => Err(Error::validation("group", format!("unknown group `{s}` (expected D1, D2, D3 or D4)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonexpertKind {
    BiasedOverUnder,
    Directionless,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub shift_bound: f64,
    pub sigma: f64,
}

impl ProfileParams {
    pub const fn new(shift_bound: f64, sigma: f64) -> Self {
        Self { shift_bound, sigma }
    }

    fn profile(&self, category: &str, count: usize) -> RaterProfile {
        RaterProfile::new(category, self.shift_bound, self.sigma, count)
    }
}

/// Heavy-imbalance ratio of the D2 and D4 groups.
pub const IMBALANCED_RATIO: f64 = 50.0;
/// The alternative ratio for D2 and D4.
pub const IMBALANCED_RATIO_ALT: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetGroupSpec {
    pub group_id: GroupId,
    pub imbalance: f64,
    pub nonexpert_kind: NonexpertKind,
    pub n_raters_total: usize,
    pub expert_counts: Vec<usize>,
    pub expert_profile: ProfileParams,
    pub overrater_profile: ProfileParams,
    pub underrater_profile: ProfileParams,
    pub directionless_profile: ProfileParams,
    pub sequence_length: usize,
    pub seeds: Vec<u64>,
}

/// Expert counts of the reduced grid.
pub const REDUCED_EXPERT_COUNTS: [usize; 7] = [1, 5, 10, 15, 20, 25, 29];

impl DatasetGroupSpec {
    /// Group definition with the default rater parameters and the full
    /// `1..=29` expert grid over 30 raters.
    pub fn standard(group_id: GroupId) -> Self {
        let (imbalance, nonexpert_kind) = match group_id {
            GroupId::D1 => (1.0, NonexpertKind::BiasedOverUnder),
            GroupId::D2 => (IMBALANCED_RATIO, NonexpertKind::BiasedOverUnder),
            GroupId::D3 => (1.0, NonexpertKind::Directionless),
            GroupId::D4 => (IMBALANCED_RATIO, NonexpertKind::Directionless),
        };
        Self {
            group_id,
            imbalance,
            nonexpert_kind,
            n_raters_total: 30,
            expert_counts: (1..30).collect(),
            expert_profile: ProfileParams::new(0.0, 0.05),
            overrater_profile: ProfileParams::new(0.3, 0.10),
            underrater_profile: ProfileParams::new(-0.3, 0.10),
            directionless_profile: ProfileParams::new(0.0, 0.25),
            sequence_length: 36_000,
            seeds: vec![0, 1, 2],
        }
    }

    pub fn reduced(group_id: GroupId) -> Self {
        Self {
            expert_counts: REDUCED_EXPERT_COUNTS.to_vec(),
            ..Self::standard(group_id)
        }
    }

    /// Ten raters over 10,000 samples, expert counts 1, 3, 5, 7 and 9.
    pub fn smoke(group_id: GroupId) -> Self {
        Self {
            n_raters_total: 10,
            expert_counts: vec![1, 3, 5, 7, 9],
            sequence_length: 10_000,
            ..Self::standard(group_id)
        }
    }

    /// Switch an imbalanced group to another ratio; balanced groups are kept.
    pub fn with_imbalanced_ratio(mut self, ratio: f64) -> Self {
        if self.imbalance != 1.0 {
            self.imbalance = ratio;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_raters_total < 4 {
            return Err(Error::validation("n_raters_total", "must be at least 4"));
        }
        if self.expert_counts.is_empty() {
            return Err(Error::validation("expert_counts", "must be non-empty"));
        }
        for (i, &e) in self.expert_counts.iter().enumerate() {
            if e < 1 || e >= self.n_raters_total {
                return Err(Error::validation(
                    format!("expert_counts[{i}]"),
                    format!("must lie in [1, {}], got {e}", self.n_raters_total - 1),
                ));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "must be non-empty"));
        }
        if self.sequence_length == 0 {
            return Err(Error::validation("sequence_length", "must be at least 1"));
        }
        prevalence_for_imbalance(self.imbalance)?;
        Ok(())
    }

    /// Category profiles and kinds for `experts` experts; `outlier` replaces
    /// one non-expert (an overrater in the biased groups).
    pub fn profiles(&self, experts: usize, outlier: Option<&ProfileParams>) -> Vec<(RaterProfile, RaterKind)> {
        let mut nonexperts = self.n_raters_total - experts;
        let mut out = vec![(self.expert_profile.profile("expert", experts), RaterKind::Expert)];
        if outlier.is_some() {
            nonexperts -= 1;
        }
        match self.nonexpert_kind {
            NonexpertKind::BiasedOverUnder => {
                let mut over = self.n_raters_total - experts;
                over = over.div_ceil(2);
                let under = self.n_raters_total - experts - over;
                if outlier.is_some() {
                    over -= 1;
                }
                out.push((self.overrater_profile.profile("over", over), RaterKind::Nonexpert));
                out.push((self.underrater_profile.profile("under", under), RaterKind::Nonexpert));
            }
            NonexpertKind::Directionless => {
                out.push((self.directionless_profile.profile("mixed", nonexperts), RaterKind::Nonexpert));
            }
        }
        if let Some(o) = outlier {
            out.push((o.profile("outlier", 1), RaterKind::Outlier));
        }
        out.retain(|(p, _)| p.count > 0);
        out
    }

    fn cell_seed(&self, seed: u64) -> u64 {
        seed::derive(seed, &[seed::tag(self.group_id.as_str())])
    }

    /// Dataset for one `(experts, seed)` cell, with the kind of each rater in
    /// rater order. The ground truth depends only on the group and seed.
    pub fn dataset(
        &self,
        experts: usize,
        seed: u64,
        outlier: Option<&ProfileParams>,
    ) -> Result<(AnnotationSet, Vec<RaterKind>)> {
        let profiles = self.profiles(experts, outlier);
        let cfg = GroundTruthConfig::new(
            prevalence_for_imbalance(self.imbalance)?,
            self.sequence_length,
            self.cell_seed(seed),
        );
        let list: Vec<RaterProfile> = profiles.iter().map(|(p, _)| p.clone()).collect();
        let (_, set) = generate_method_a(&cfg, &list)?;
        let kinds = profiles
            .iter()
            .flat_map(|(p, k)| std::iter::repeat_n(*k, p.count))
            .collect();
        Ok((set, kinds))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaterKind {
    Expert,
    Nonexpert,
    Outlier,
}

impl RaterKind {
    /// Whether passing the test is the correct outcome for this rater.
    pub fn should_pass(self) -> bool {
        self == RaterKind::Expert
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub tests: Vec<TestId>,
    pub bootstrap: BootstrapConfig,
    pub options: TestOptions,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            tests: TestId::ALL.to_vec(),
            bootstrap: BootstrapConfig {
                n_iterations: 500,
                ..Default::default()
            },
            options: TestOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterOutcome {
    pub rater_id: String,
    pub kind: RaterKind,
    /// Pass/fail per test, aligned with the sweep's test list; `None` when
    /// the test could not be evaluated (counted as a failure).
    pub passed: Vec<Option<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub expert_count: usize,
    pub seed: u64,
    pub raters: Vec<RaterOutcome>,
}

impl CellOutcome {
    /// Fraction of raters classified correctly by test `t` (index in the
    /// sweep's test list).
    pub fn accuracy(&self, t: usize) -> f64 {
        let correct = self
            .raters
            .iter()
            .filter(|r| r.passed[t].unwrap_or(false) == r.kind.should_pass())
            .count();
        correct as f64 / self.raters.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub spec: DatasetGroupSpec,
    pub settings: SweepSettings,
    pub outlier: Option<ProfileParams>,
    /// Sorted by expert count, then seed.
    pub cells: Vec<CellOutcome>,
}

impl SweepOutcome {
    fn test_index(&self, test: TestId) -> Result<usize> {
        self.settings
            .tests
            .iter()
            .position(|&t| t == test)
            .ok_or_else(|| Error::IncompleteSweep(format!("test {test} was not run")))
    }

    /// Seed-averaged accuracy at one expert count.
    pub fn accuracy(&self, expert_count: usize, test: TestId) -> Result<f64> {
        let t = self.test_index(test)?;
        let accs: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.expert_count == expert_count)
            .map(|c| c.accuracy(t))
            .collect();
        if accs.is_empty() {
            return Err(Error::IncompleteSweep(format!("no results for {expert_count} experts")));
        }
        Ok(accs.iter().sum::<f64>() / accs.len() as f64)
    }

    /// Pooled pass rate of raters of `kind`, optionally restricted to raters
    /// whose id is accepted by `keep`.
    pub fn pass_rate_where(&self, kind: RaterKind, test: TestId, keep: impl Fn(&CellOutcome, &RaterOutcome) -> bool) -> Result<Option<f64>> {
        let t = self.test_index(test)?;
        let (mut pass, mut n) = (0usize, 0usize);
        for c in &self.cells {
            for r in c.raters.iter().filter(|r| r.kind == kind && keep(c, r)) {
                n += 1;
                pass += usize::from(r.passed[t].unwrap_or(false));
            }
        }
        Ok((n > 0).then(|| pass as f64 / n as f64))
    }

    pub fn pass_rate(&self, kind: RaterKind, test: TestId) -> Result<Option<f64>> {
        self.pass_rate_where(kind, test, |_, _| true)
    }

    /// Pass rate of `kind` raters at one expert count.
    pub fn pass_rate_at(&self, kind: RaterKind, test: TestId, expert_count: usize) -> Result<Option<f64>> {
        self.pass_rate_where(kind, test, |c, _| c.expert_count == expert_count)
    }

    /// Number of test evaluations that errored.
    pub fn n_errors(&self) -> usize {
        self.cells
            .iter()
            .flat_map(|c| &c.raters)
            .flat_map(|r| &r.passed)
            .filter(|p| p.is_none())
            .count()
    }
}

/// Weighted accuracy over `(expert_count, accuracy)` rows with weights
/// proportional to the expert count, normalized to sum to one.
pub fn weighted_accuracy_from(rows: &[(usize, f64)]) -> f64 {
    let total: usize = rows.iter().map(|r| r.0).sum();
    rows.iter().map(|&(e, a)| e as f64 / total as f64 * a).sum()
}

/// Normalized weights `e / Σ e` of an expert-count grid.
pub fn expert_weights(expert_counts: &[usize]) -> Vec<f64> {
    let total: usize = expert_counts.iter().sum();
    expert_counts.iter().map(|&e| e as f64 / total as f64).collect()
}

/// Weighted accuracy of a test that passes every rater.
pub fn all_pass_baseline(expert_counts: &[usize], n_raters_total: usize) -> f64 {
    let rows: Vec<(usize, f64)> = expert_counts
        .iter()
        .map(|&e| (e, e as f64 / n_raters_total as f64))
        .collect();
    weighted_accuracy_from(&rows)
}

/// Weighted accuracy of `test` over the sweep's expert grid.
pub fn weighted_accuracy(outcome: &SweepOutcome, test: TestId) -> Result<f64> {
    let rows = outcome
        .spec
        .expert_counts
        .iter()
        .map(|&e| Ok((e, outcome.accuracy(e, test)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(weighted_accuracy_from(&rows))
}

fn evaluate_cell(
    spec: &DatasetGroupSpec,
    settings: &SweepSettings,
    experts: usize,
    seed: u64,
    outlier: Option<&ProfileParams>,
) -> Result<CellOutcome> {
    let (set, kinds) = spec.dataset(experts, seed, outlier)?;
    let bootstrap = BootstrapConfig {
        seed: seed::derive(settings.bootstrap.seed, &[seed::tag(spec.group_id.as_str()), experts as u64, seed]),
        ..settings.bootstrap
    };
    let panel = Panel::new(&set, &bootstrap, settings.options)?;
    let raters = kinds
        .iter()
        .enumerate()
        .map(|(k, &kind)| RaterOutcome {
            rater_id: set.rater_ids()[k].clone(),
            kind,
            passed: panel
                .run(k, &settings.tests)
                .into_iter()
                .map(|v| v.ok().map(|v| v.passed))
                .collect(),
        })
        .collect();
    Ok(CellOutcome {
        expert_count: experts,
        seed,
        raters,
    })
}

fn sweep(spec: &DatasetGroupSpec, settings: &SweepSettings, outlier: Option<&ProfileParams>) -> Result<SweepOutcome> {
    spec.validate()?;
    settings.bootstrap.validate()?;
    let jobs: Vec<(usize, u64)> = spec
        .expert_counts
        .iter()
        .flat_map(|&e| spec.seeds.iter().map(move |&s| (e, s)))
        .collect();
    let mut cells = jobs
        .par_iter()
        .map(|&(e, s)| evaluate_cell(spec, settings, e, s, outlier))
        .collect::<Result<Vec<_>>>()?;
    cells.sort_by_key(|c| (c.expert_count, c.seed));
    Ok(SweepOutcome {
        spec: spec.clone(),
        settings: settings.clone(),
        outlier: outlier.copied(),
        cells,
    })
}

/// Evaluate every rater of every `(expert_count, seed)` dataset as the AI
/// against the remaining raters.
pub fn run_expert_sweep(spec: &DatasetGroupSpec, settings: &SweepSettings) -> Result<SweepOutcome> {
    sweep(spec, settings, None)
}

/// Default extreme rater for the outlier study: a strong overrater.
pub const DEFAULT_OUTLIER: ProfileParams = ProfileParams::new(0.4, 0.10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierRow {
    pub test_id: TestId,
    pub nonexpert_pass_rate_control: Option<f64>,
    pub nonexpert_pass_rate_outlier: Option<f64>,
    pub expert_pass_rate_control: Option<f64>,
    pub expert_pass_rate_outlier: Option<f64>,
}

impl OutlierRow {
    /// Change in non-expert pass rate, in percentage points.
    pub fn nonexpert_change_pp(&self) -> Option<f64> {
        Some(100.0 * (self.nonexpert_pass_rate_outlier? - self.nonexpert_pass_rate_control?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub control: SweepOutcome,
    pub with_outlier: SweepOutcome,
    pub rows: Vec<OutlierRow>,
}

/// Sweep with one non-expert replaced by an extreme rater, compared with the
/// outlier-free control on the same datasets. Pass rates are compared over the
/// raters present in both runs.
pub fn run_outlier_study(
    spec: &DatasetGroupSpec,
    outlier: &ProfileParams,
    settings: &SweepSettings,
) -> Result<OutlierReport> {
    let control = sweep(spec, settings, None)?;
    let with_outlier = sweep(spec, settings, Some(outlier))?;
    let present = |other: &SweepOutcome| {
        let other = other.clone();
        move |c: &CellOutcome, r: &RaterOutcome| {
            other
                .cells
                .iter()
                .find(|o| o.expert_count == c.expert_count && o.seed == c.seed)
                .is_some_and(|o| o.raters.iter().any(|x| x.rater_id == r.rater_id))
        }
    };
    let rows = settings
        .tests
        .iter()
        .map(|&t| {
            Ok(OutlierRow {
                test_id: t,
                nonexpert_pass_rate_control: control.pass_rate_where(RaterKind::Nonexpert, t, present(&with_outlier))?,
                nonexpert_pass_rate_outlier: with_outlier.pass_rate_where(RaterKind::Nonexpert, t, present(&control))?,
                expert_pass_rate_control: control.pass_rate(RaterKind::Expert, t)?,
                expert_pass_rate_outlier: with_outlier.pass_rate(RaterKind::Expert, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OutlierReport {
        control,
        with_outlier,
        rows,
    })
}

/// Per `(expert_count, test)` pass rates and accuracy of a sweep.
pub fn pass_rate_csv(outcome: &SweepOutcome) -> Result<String> {
    let mut out = String::from("group,expert_count,test_id,expert_pass_rate,nonexpert_pass_rate,outlier_pass_rate,accuracy,seed_count\n");
    for &e in &outcome.spec.expert_counts {
        for &t in &outcome.settings.tests {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                outcome.spec.group_id.as_str(),
                e,
                t,
                fmt_opt(outcome.pass_rate_at(RaterKind::Expert, t, e)?),
                fmt_opt(outcome.pass_rate_at(RaterKind::Nonexpert, t, e)?),
                fmt_opt(outcome.pass_rate_at(RaterKind::Outlier, t, e)?),
                outcome.accuracy(e, t)?,
                outcome.spec.seeds.len()
            ));
        }
    }
    Ok(out)
}

/// Weighted accuracy of every test of every sweep, with the all-pass baseline.
pub fn weighted_accuracy_csv(outcomes: &[SweepOutcome]) -> Result<String> {
    let mut out = String::from("group,test_id,weighted_accuracy,all_pass_baseline\n");
    for o in outcomes {
        let baseline = all_pass_baseline(&o.spec.expert_counts, o.spec.n_raters_total);
        for &t in &o.settings.tests {
            out.push_str(&format!("{},{},{},{}\n", o.spec.group_id.as_str(), t, weighted_accuracy(o, t)?, baseline));
        }
    }
    Ok(out)
}

pub fn outlier_csv(report: &OutlierReport) -> String {
    let mut out = String::from(
        "test_id,nonexpert_pass_rate_control,nonexpert_pass_rate_outlier,nonexpert_change_pp,expert_pass_rate_control,expert_pass_rate_outlier\n",
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.test_id,
            fmt_opt(r.nonexpert_pass_rate_control),
            fmt_opt(r.nonexpert_pass_rate_outlier),
            fmt_opt(r.nonexpert_change_pp()),
            fmt_opt(r.expert_pass_rate_control),
            fmt_opt(r.expert_pass_rate_outlier)
        ));
    }
    out
}
