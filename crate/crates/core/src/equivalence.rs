//! Bootstrap engine and the human-expert equivalence tests.
//!
//! Three families are provided: agreement among humans against agreement of
//! the AI with the human majority consensus, multi-rater Turing tests that
//! replace one human at a time by the AI, and pairwise non-inferiority tests
//! that rotate the reference rater.
//!
//! Every bootstrap iteration draws resampling units (records or contiguous
//! blocks) with replacement from a stream addressed by the iteration index.
//! The test engine works on per-unit co-positive count matrices, so that any
//! rater subset's agreement and any rater pair's confusion table are sums over
//! the drawn units.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agreement::{AgreementSums, Coefficient};
use crate::annotation::{AnnotationSet, BinaryAnnotation, ConfusionCounts, Label};
use crate::consensus::TieBreak;
use crate::error::{Error, Result};
use crate::metrics::{auc_from_confusion, mcc, Measure};
use crate::seed;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleUnit {
    /// Records when the set has at least [`AUTO_RECORD_THRESHOLD`] records,
    /// blocks otherwise.
    #[default]
    Auto,
    Record,
    Block,
}

pub const AUTO_RECORD_THRESHOLD: usize = 10;

impl ResampleUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            ResampleUnit::Auto => "auto",
            ResampleUnit::Record => "record",
            ResampleUnit::Block => "block",
        }
    }

    fn resolve(self, n_records: usize) -> Self {
        match self {
            ResampleUnit::Auto if n_records >= AUTO_RECORD_THRESHOLD => ResampleUnit::Record,
            ResampleUnit::Auto => ResampleUnit::Block,
            other => other,
        }
    }
}

impl std::str::FromStr for ResampleUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ResampleUnit::Auto),
            "record" => Ok(ResampleUnit::Record),
            "block" => Ok(ResampleUnit::Block),
            other => Err(Error::validation(
                "resample_unit",
                format!("unknown unit `{other}` (expected auto, record or block)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub n_iterations: usize,
    pub confidence: f64,
    pub resample_unit: ResampleUnit,
    pub block_length_samples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_iterations: 1000,
            confidence: 0.95,
            resample_unit: ResampleUnit::Auto,
            block_length_samples: 3600,
            seed: 0,
        }
    }
}

/// Iteration counts below this produce a warning.
pub const MIN_RECOMMENDED_ITERATIONS: usize = 100;
/// Largest tolerated fraction of iterations with an undefined statistic.
pub const MAX_UNDEFINED_FRACTION: f64 = 0.10;

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::validation("bootstrap.n_iterations", "must be at least 1"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::validation(
                "bootstrap.confidence",
                format!("must lie in (0, 1), got {}", self.confidence),
            ));
        }
        if self.block_length_samples == 0 {
            return Err(Error::validation("bootstrap.block_length_samples", "must be at least 1"));
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.n_iterations < MIN_RECOMMENDED_ITERATIONS {
            w.push(format!(
                "{} bootstrap iterations is below the recommended minimum of {MIN_RECOMMENDED_ITERATIONS}; confidence intervals may be unreliable",
                self.n_iterations
            ));
        }
        w
    }

    fn tail(&self) -> f64 {
        (1.0 - self.confidence) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Percentile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    /// Statistic on the full data.
    pub point: f64,
    pub upper: f64,
    pub method: CiMethod,
}

/// Linearly interpolated quantile (type 7) of unsorted values, reordering
/// them in place.
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let h = (values.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let (_, &mut v_lo, rest) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || rest.is_empty() {
        return v_lo;
    }
    let v_hi = rest.iter().copied().fold(f64::INFINITY, f64::min);
    v_lo + frac * (v_hi - v_lo)
}

fn percentile_ci(values: &mut [f64], point: f64, cfg: &BootstrapConfig) -> ConfidenceInterval {
    let q = cfg.tail();
    let lower = quantile(values, q);
    let upper = quantile(values, 1.0 - q);
    ConfidenceInterval {
        lower,
        point,
        upper,
        method: CiMethod::Percentile,
    }
}

/// Contiguous span of one record used as a resampling unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UnitSpan {
    pub record: usize,
    pub start: usize,
    pub end: usize,
}

/// Resampling units of a set under `cfg`. Blocks tile each record from sample
/// 0; a trailing remainder joins the record's last block and a record shorter
/// than one block forms a single unit.
pub fn resample_units(set: &AnnotationSet, cfg: &BootstrapConfig) -> (ResampleUnit, Vec<UnitSpan>) {
    let unit = cfg.resample_unit.resolve(set.n_records());
    let mut spans = Vec::new();
    for r in 0..set.n_records() {
        let len = set.record_len(r);
        match unit {
            ResampleUnit::Block => {
                let b = cfg.block_length_samples;
                let n_blocks = (len / b).max(1);
                for i in 0..n_blocks {
                    let end = if i + 1 == n_blocks { len } else { (i + 1) * b };
                    spans.push(UnitSpan { record: r, start: i * b, end });
                }
            }
            _ => spans.push(UnitSpan { record: r, start: 0, end: len }),
        }
    }
    (unit, spans)
}

const STREAM_BOOTSTRAP: u64 = 0xB007;

/// Units drawn with replacement in iteration `iteration`.
pub fn draw_units(cfg: &BootstrapConfig, iteration: usize, n_units: usize) -> Vec<usize> {
    let mut rng = seed::rng(cfg.seed, &[STREAM_BOOTSTRAP, iteration as u64]);
    (0..n_units).map(|_| rng.random_range(0..n_units)).collect()
}

fn draw_weights(cfg: &BootstrapConfig, iteration: usize, n_units: usize) -> Vec<u32> {
    let mut w = vec![0u32; n_units];
    for u in draw_units(cfg, iteration, n_units) {
        w[u] += 1;
    }
    w
}

/// Resampled set: one record per drawn unit, named `b<k>:<record_id>:<start>`.
pub fn resampled_set(set: &AnnotationSet, spans: &[UnitSpan], draws: &[usize]) -> Result<AnnotationSet> {
    let mut annotations = Vec::with_capacity(draws.len() * set.n_raters());
    for (k, &u) in draws.iter().enumerate() {
        let s = spans[u];
        for a in set.record(s.record) {
            let id = format!("b{k}:{}:{}", a.record_id(), s.start);
            annotations.push(a.slice(s.start, s.end).with_record_id(id));
        }
    }
    AnnotationSet::new(annotations)
}

fn check_stability(undefined: usize, total: usize) -> Result<()> {
    let rate = undefined as f64 / total as f64;
    if rate > MAX_UNDEFINED_FRACTION {
        return Err(Error::UnstableStatistic {
            failure_rate: 100.0 * rate,
        });
    }
    Ok(())
}

/// Percentile bootstrap CI of an arbitrary set statistic. Degenerate-input
/// errors inside an iteration count as undefined values.
pub fn bootstrap_statistic<F>(set: &AnnotationSet, statistic: F, cfg: &BootstrapConfig) -> Result<ConfidenceInterval>
where
    F: Fn(&AnnotationSet) -> Result<Measure>,
{
    cfg.validate()?;
    let point = statistic(set)?
        .value()
        .ok_or_else(|| Error::Degenerate("statistic is undefined on the full set".into()))?;
    let (_, spans) = resample_units(set, cfg);
    let mut values = Vec::with_capacity(cfg.n_iterations);
    let mut undefined = 0;
    for i in 0..cfg.n_iterations {
        let boot = resampled_set(set, &spans, &draw_units(cfg, i, spans.len()))?;
        match statistic(&boot) {
            Ok(Measure::Defined(v)) => values.push(v),
            Ok(Measure::Undefined(_)) | Err(Error::Degenerate(_)) => undefined += 1,
            Err(e) => return Err(e),
        }
    }
    check_stability(undefined, cfg.n_iterations)?;
    Ok(percentile_ci(&mut values, point, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestId {
    IraVsConsensusAc1,
    IraVsConsensusKappa,
    TuringAverageKappa,
    TuringAverageAc1,
    TuringAll,
    TuringMajority,
    TuringAny,
    PairwiseMcc,
    PairwiseAuc,
}

impl TestId {
    pub const ALL: [TestId; 9] = [
        TestId::IraVsConsensusAc1,
        TestId::IraVsConsensusKappa,
        TestId::TuringAverageKappa,
        TestId::TuringAverageAc1,
        TestId::TuringAll,
        TestId::TuringMajority,
        TestId::TuringAny,
        TestId::PairwiseMcc,
        TestId::PairwiseAuc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestId::IraVsConsensusAc1 => "ira_vs_consensus_ac1",
            TestId::IraVsConsensusKappa => "ira_vs_consensus_kappa",
            TestId::TuringAverageKappa => "turing_average_kappa",
            TestId::TuringAverageAc1 => "turing_average_ac1",
            TestId::TuringAll => "turing_all",
            TestId::TuringMajority => "turing_majority",
            TestId::TuringAny => "turing_any",
            TestId::PairwiseMcc => "pairwise_mcc",
            TestId::PairwiseAuc => "pairwise_auc",
        }
    }

    /// Fewest human raters the test accepts.
    pub fn min_humans(self) -> usize {
        match self {
            TestId::IraVsConsensusAc1 | TestId::IraVsConsensusKappa => 2,
            _ => 3,
        }
    }
}

impl std::fmt::Display for TestId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = TestId::ALL.iter().map(|t| t.as_str()).collect();
                Error::validation("tests", format!("unknown test `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Per-replacement criterion of the all, majority and any Turing variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassRule {
    /// A replacement succeeds when its CI includes 0 or lies above it.
    #[default]
    NonInferior,
    /// A replacement succeeds only when its CI lies entirely above 0.
    Outperform,
}

impl PassRule {
    pub fn as_str(self) -> &'static str {
        match self {
            PassRule::NonInferior => "non_inferior",
            PassRule::Outperform => "outperform",
        }
    }

    pub fn accepts(self, ci: &RaterCi) -> bool {
        match self {
            PassRule::NonInferior => ci.upper >= 0.0,
            PassRule::Outperform => ci.lower > 0.0,
        }
    }
}

impl std::str::FromStr for PassRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non_inferior" | "non-inferior" => Ok(PassRule::NonInferior),
            "outperform" => Ok(PassRule::Outperform),
            other => Err(Error::validation(
                "turing_rule",
                format!("unknown rule `{other}` (expected non_inferior or outperform)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestOptions {
    pub turing_rule: PassRule,
    /// Tie rule of the human majority consensus.
    pub consensus_tie: TieBreak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterCi {
    pub rater_id: String,
    pub lower: f64,
    pub point: f64,
    pub upper: f64,
}

impl RaterCi {
    fn new(rater_id: impl Into<String>, ci: ConfidenceInterval) -> Self {
        Self {
            rater_id: rater_id.into(),
            lower: ci.lower,
            point: ci.point,
            upper: ci.upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub per_rater_ci: Vec<RaterCi>,
    pub margins: BTreeMap<String, f64>,
    pub achieved_coefficients: BTreeMap<String, f64>,
    /// Decision rule applied to the evidence.
    pub rule: String,
    pub resample_unit: ResampleUnit,
    pub n_units: usize,
    pub n_valid_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictConfig {
    pub bootstrap: BootstrapConfig,
    pub options: TestOptions,
    pub ai_rater_id: String,
    pub human_rater_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    pub test_id: TestId,
    pub passed: bool,
    pub config: VerdictConfig,
    pub evidence: Evidence,
}

const RULE_OVERLAP: &str = "ai_upper >= raters_lower";
const RULE_AVERAGE: &str = "mean_upper >= 0";
const RULE_PAIRWISE: &str = "ai_lower >= delta";

impl EquivalenceVerdict {
    /// Pass/fail decision recomputed from the evidence alone.
    pub fn recompute_passed(&self) -> bool {
        decide(self.test_id, self.config.options.turing_rule, &self.evidence)
    }
}

fn decide(test: TestId, rule: PassRule, ev: &Evidence) -> bool {
    match test {
        TestId::IraVsConsensusAc1 | TestId::IraVsConsensusKappa => ev.margins["ai_upper"] >= ev.margins["raters_lower"],
        TestId::TuringAverageKappa | TestId::TuringAverageAc1 => ev.margins["mean_upper"] >= 0.0,
        TestId::TuringAll | TestId::TuringMajority | TestId::TuringAny => {
            let n = ev.per_rater_ci.len();
            let ok = ev.per_rater_ci.iter().filter(|ci| rule.accepts(ci)).count();
            match test {
                TestId::TuringAll => ok == n,
                TestId::TuringMajority => 2 * ok > n,
                _ => ok >= 1,
            }
        }
        TestId::PairwiseMcc | TestId::PairwiseAuc => ev.margins["ai_lower"] >= ev.margins["delta"],
    }
}

/// Per-rater-set sufficient statistics: the sample count, co-positive counts
/// (row-major `R × R`) and, per rater `a`, sample counts indexed by
/// `[x_a][positives among the others]` flattened as `a * 2R + x_a * R + c`.
#[derive(Clone)]
struct Totals {
    n: u64,
    gram: Vec<u64>,
    votes: Vec<u64>,
}

impl Totals {
    fn zeros(r: usize) -> Self {
        Self {
            n: 0,
            gram: vec![0; r * r],
            votes: vec![0; r * 2 * r],
        }
    }

    fn add_weighted(&mut self, other: &Totals, w: u64) {
        self.n += w * other.n;
        for (a, b) in self.gram.iter_mut().zip(&other.gram) {
            *a += w * b;
        }
        for (a, b) in self.votes.iter_mut().zip(&other.votes) {
            *a += w * b;
        }
    }
}

/// A complete multi-rater set prepared for the equivalence tests. Any rater
/// can play the AI against the remaining ones; bootstrap draws are shared by
/// all of them.
pub struct Panel {
    rater_ids: Vec<String>,
    r: usize,
    n_units: usize,
    unit_kind: ResampleUnit,
    cfg: BootstrapConfig,
    options: TestOptions,
    full: Totals,
    draws: Vec<Totals>,
    /// Pairwise metric matrices `[full, draw 0, draw 1, …]`, NaN where undefined.
    matrices: [OnceLock<Vec<Vec<f64>>>; 2],
}

impl Panel {
    pub fn new(set: &AnnotationSet, cfg: &BootstrapConfig, options: TestOptions) -> Result<Self> {
        cfg.validate()?;
        if set.allows_missing() {
            return Err(Error::Unsupported(
                "equivalence tests need complete annotations; missing labels present".into(),
            ));
        }
        let r = set.n_raters();
        let (unit_kind, spans) = resample_units(set, cfg);
        let mut units = Vec::with_capacity(spans.len());
        let mut pos = Vec::with_capacity(r);
        for s in &spans {
            let tracks = set.record(s.record);
            let mut t = Totals::zeros(r);
            t.n = (s.end - s.start) as u64;
            for j in s.start..s.end {
                pos.clear();
                pos.extend((0..r).filter(|&k| tracks[k].labels()[j] == Label::Positive));
                for &k in &pos {
                    for &l in &pos {
                        t.gram[k * r + l] += 1;
                    }
                }
                let c = pos.len();
                for a in 0..r {
                    let x = usize::from(tracks[a].labels()[j] == Label::Positive);
                    t.votes[a * 2 * r + x * r + (c - x)] += 1;
                }
            }
            units.push(t);
        }

        let mut full = Totals::zeros(r);
        for u in &units {
            full.add_weighted(u, 1);
        }
        let draws = (0..cfg.n_iterations)
            .map(|i| {
                let mut t = Totals::zeros(r);
                for (u, &w) in units.iter().zip(&draw_weights(cfg, i, units.len())) {
                    if w > 0 {
                        t.add_weighted(u, u64::from(w));
                    }
                }
                t
            })
            .collect();
        Ok(Self {
            rater_ids: set.rater_ids().to_vec(),
            r,
            n_units: units.len(),
            unit_kind,
            cfg: *cfg,
            options,
            full,
            draws,
            matrices: [OnceLock::new(), OnceLock::new()],
        })
    }

    pub fn rater_ids(&self) -> &[String] {
        &self.rater_ids
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn rater_index(&self, rater_id: &str) -> Result<usize> {
        self.rater_ids
            .iter()
            .position(|id| id == rater_id)
            .ok_or_else(|| Error::UnknownRater(rater_id.to_string()))
    }

    fn verdict_config(&self, ai: usize) -> VerdictConfig {
        VerdictConfig {
            bootstrap: self.cfg,
            options: self.options,
            ai_rater_id: self.rater_ids[ai].clone(),
            human_rater_ids: self
                .rater_ids
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != ai)
                .map(|(_, id)| id.clone())
                .collect(),
        }
    }

    fn evidence(&self, rule: String, n_valid: usize) -> Evidence {
        Evidence {
            per_rater_ci: Vec::new(),
            margins: BTreeMap::new(),
            achieved_coefficients: BTreeMap::new(),
            rule,
            resample_unit: self.unit_kind,
            n_units: self.n_units,
            n_valid_iterations: n_valid,
        }
    }

    /// Run `tests` with rater `ai` as the AI and every other rater as a human.
    pub fn run(&self, ai: usize, tests: &[TestId]) -> Vec<Result<EquivalenceVerdict>> {
        tests.iter().map(|&t| self.run_test(ai, t)).collect()
    }

    pub fn run_test(&self, ai: usize, test: TestId) -> Result<EquivalenceVerdict> {
        if ai >= self.r {
            return Err(Error::UnknownRater(format!("index {ai}")));
        }
        let humans = self.r - 1;
        if humans < test.min_humans() {
            return Err(Error::InsufficientRaters {
                required: test.min_humans(),
                actual: humans,
            });
        }
        let evidence = match test {
            TestId::IraVsConsensusAc1 => self.ira_vs_consensus(ai, Coefficient::GwetAc1)?,
            TestId::IraVsConsensusKappa => self.ira_vs_consensus(ai, Coefficient::FleissKappa)?,
            TestId::TuringAverageKappa => self.turing(ai, Coefficient::FleissKappa, true),
            TestId::TuringAverageAc1 => self.turing(ai, Coefficient::GwetAc1, true),
            TestId::TuringAll | TestId::TuringMajority | TestId::TuringAny => {
                let mut ev = self.turing(ai, Coefficient::FleissKappa, false);
                ev.rule = format!("{} per replacement", self.options.turing_rule.as_str());
                ev
            }
            TestId::PairwiseMcc => self.pairwise(ai, PairMetric::Mcc)?,
            TestId::PairwiseAuc => self.pairwise(ai, PairMetric::Auc)?,
        };
        Ok(EquivalenceVerdict {
            test_id: test,
            passed: decide(test, self.options.turing_rule, &evidence),
            config: self.verdict_config(ai),
            evidence,
        })
    }

    /// Agreement sums of the humans (all raters but `ai`), optionally with
    /// human `swap` replaced by the AI.
    fn subset_sums(&self, t: &Totals, rows: &[u64], ai: usize, swap: Option<usize>) -> AgreementSums {
        let r = self.r;
        let g = |k: usize, l: usize| t.gram[k * r + l];
        let row_h = |k: usize| rows[k] - g(k, ai);
        let mut s: u64 = (0..r).filter(|&k| k != ai).map(row_h).sum();
        let mut p: u64 = (0..r).filter(|&k| k != ai).map(|k| g(k, k)).sum();
        if let Some(i) = swap {
            s = s + g(i, i) - 2 * row_h(i);
            s += 2 * (row_h(ai) - g(ai, i)) + g(ai, ai);
            p = p - g(i, i) + g(ai, ai);
        }
        // Σ c² = s and Σ c = p over items with c positives among m raters.
        let m = (r - 1) as u64;
        let agreeing = 2 * s + t.n * m * (m - 1) - 2 * m * p;
        AgreementSums {
            n_items: t.n,
            n_raters: m,
            agreeing_pairs: agreeing,
            positives: p,
        }
    }

    fn rows(&self, t: &Totals) -> Vec<u64> {
        t.gram.chunks(self.r).map(|row| row.iter().sum()).collect()
    }

    fn consensus_confusion(&self, t: &Totals, ai: usize) -> ConfusionCounts {
        let r = self.r;
        let voters = r - 1;
        let mut c = ConfusionCounts::default();
        for x in 0..2 {
            for pos in 0..r {
                let n = t.votes[ai * 2 * r + x * r + pos];
                if n == 0 {
                    continue;
                }
                let cons = match (2 * pos).cmp(&voters) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Less => false,
                    std::cmp::Ordering::Equal => self.options.consensus_tie == TieBreak::Positive,
                };
                // consensus is the reference, the AI the prediction
                match (cons, x == 1) {
                    (true, true) => c.tp += n,
                    (true, false) => c.fn_ += n,
                    (false, true) => c.fp += n,
                    (false, false) => c.tn += n,
                }
            }
        }
        c
    }

    fn ira_vs_consensus(&self, ai: usize, coef: Coefficient) -> Result<Evidence> {
        let stats = |t: &Totals| -> (Measure, Measure) {
            let rows = self.rows(t);
            let raters = self.subset_sums(t, &rows, ai, None).value(coef);
            let ai_cons = AgreementSums::from_confusion(&self.consensus_confusion(t, ai)).value(coef);
            (raters, ai_cons)
        };
        let (p_raters, p_ai) = match stats(&self.full) {
            (Measure::Defined(a), Measure::Defined(b)) => (a, b),
            _ => return Err(Error::Degenerate("agreement undefined on the full data".into())),
        };
        let mut v_raters = Vec::with_capacity(self.draws.len());
        let mut v_ai = Vec::with_capacity(self.draws.len());
        let mut undefined = 0;
        for t in &self.draws {
            match stats(t) {
                (Measure::Defined(a), Measure::Defined(b)) => {
                    v_raters.push(a);
                    v_ai.push(b);
                }
                _ => undefined += 1,
            }
        }
        check_stability(undefined, self.draws.len())?;
        let ci_raters = percentile_ci(&mut v_raters, p_raters, &self.cfg);
        let ci_ai = percentile_ci(&mut v_ai, p_ai, &self.cfg);
        let mut ev = self.evidence(RULE_OVERLAP.into(), self.draws.len() - undefined);
        ev.per_rater_ci.push(RaterCi::new("raters", ci_raters));
        ev.per_rater_ci.push(RaterCi::new("ai_consensus", ci_ai));
        ev.margins.insert("raters_lower".into(), ci_raters.lower);
        ev.margins.insert("raters_upper".into(), ci_raters.upper);
        ev.margins.insert("ai_lower".into(), ci_ai.lower);
        ev.margins.insert("ai_upper".into(), ci_ai.upper);
        ev.achieved_coefficients.insert(format!("{}_raters", coef.as_str()), p_raters);
        ev.achieved_coefficients.insert(format!("{}_ai_consensus", coef.as_str()), p_ai);
        Ok(ev)
    }

    /// Δ_i for every human `i` (in rater order) on one draw; returns the
    /// humans-only coefficient.
    fn deltas(&self, t: &Totals, ai: usize, coef: Coefficient, out: &mut Vec<f64>) -> f64 {
        let rows = self.rows(t);
        let base = self.subset_sums(t, &rows, ai, None).value(coef).unwrap();
        out.clear();
        for i in (0..self.r).filter(|&i| i != ai) {
            out.push(self.subset_sums(t, &rows, ai, Some(i)).value(coef).unwrap() - base);
        }
        base
    }

    fn turing(&self, ai: usize, coef: Coefficient, average: bool) -> Evidence {
        let humans: Vec<usize> = (0..self.r).filter(|&i| i != ai).collect();
        let mut d = Vec::with_capacity(humans.len());
        let base = self.deltas(&self.full, ai, coef, &mut d);
        let point_d = d.clone();
        let point_mean = mean(&d);

        let mut per: Vec<Vec<f64>> = vec![Vec::with_capacity(self.draws.len()); humans.len()];
        let mut means = Vec::with_capacity(self.draws.len());
        for t in &self.draws {
            self.deltas(t, ai, coef, &mut d);
            for (v, &x) in per.iter_mut().zip(&d) {
                v.push(x);
            }
            means.push(mean(&d));
        }

        let mut ev = self.evidence(RULE_AVERAGE.into(), self.draws.len());
        for ((&k, v), &p) in humans.iter().zip(per.iter_mut()).zip(&point_d) {
            ev.per_rater_ci.push(RaterCi::new(self.rater_ids[k].clone(), percentile_ci(v, p, &self.cfg)));
        }
        if average {
            let ci = percentile_ci(&mut means, point_mean, &self.cfg);
            ev.margins.insert("mean_lower".into(), ci.lower);
            ev.margins.insert("mean_point".into(), ci.point);
            ev.margins.insert("mean_upper".into(), ci.upper);
        }
        ev.achieved_coefficients.insert(format!("{}_raters", coef.as_str()), base);
        ev.achieved_coefficients.insert(format!("mean_delta_{}", coef.as_str()), point_mean);
        ev
    }

    fn pair_confusion(&self, t: &Totals, pred: usize, reference: usize) -> ConfusionCounts {
        let r = self.r;
        let both = t.gram[pred * r + reference];
        let p = t.gram[pred * r + pred];
        let q = t.gram[reference * r + reference];
        ConfusionCounts {
            tp: both,
            fp: p - both,
            fn_: q - both,
            tn: t.n + both - p - q,
        }
    }

    /// `m[pred * R + reference]` for every ordered pair of distinct raters.
    fn metric_matrix(&self, t: &Totals, metric: PairMetric) -> Vec<f64> {
        let r = self.r;
        let mut m = vec![f64::NAN; r * r];
        for reference in 0..r {
            for k in (0..r).filter(|&k| k != reference) {
                m[k * r + reference] = metric.eval(&self.pair_confusion(t, k, reference)).unwrap_or(f64::NAN);
            }
        }
        m
    }

    fn matrices(&self, metric: PairMetric) -> &[Vec<f64>] {
        self.matrices[metric as usize].get_or_init(|| {
            std::iter::once(&self.full)
                .chain(&self.draws)
                .map(|t| self.metric_matrix(t, metric))
                .collect()
        })
    }

    /// Margin `delta`: lower tail of the pooled human-human score differences
    /// `M(h1, r) - M(h2, r)` over references and draws. The AI statistic is the
    /// mean of `M(AI, r) - M(h, r)` over all reference/human pairs, one value
    /// per draw; its lower percentile must reach the margin.
    fn pairwise(&self, ai: usize, metric: PairMetric) -> Result<Evidence> {
        let r = self.r;
        let humans: Vec<usize> = (0..r).filter(|&i| i != ai).collect();
        let usable = |m: &[f64]| {
            humans.iter().all(|&reference| {
                (0..r).filter(|&k| k != reference).all(|k| !m[k * r + reference].is_nan())
            })
        };
        let mats = self.matrices(metric);
        let full = &mats[0];
        if !usable(full) {
            return Err(Error::Degenerate(format!("{} undefined on the full data", metric.name())));
        }

        let n_h = humans.len();
        let n_draws = self.draws.len();
        let mut human_diffs = Vec::with_capacity(n_draws * n_h * (n_h - 1) * (n_h - 2));
        let mut ai_means = Vec::with_capacity(n_draws);
        let mut per_ref: Vec<Vec<f64>> = vec![Vec::with_capacity(n_draws); n_h];
        let mut undefined = 0;
        for m in &mats[1..] {
            if !usable(m) {
                undefined += 1;
                continue;
            }
            let mut total = 0.0;
            for (ri, &reference) in humans.iter().enumerate() {
                let ai_score = m[ai * r + reference];
                let mut sum = 0.0;
                for &h1 in humans.iter().filter(|&&h| h != reference) {
                    let s1 = m[h1 * r + reference];
                    sum += ai_score - s1;
                    for &h2 in humans.iter().filter(|&&h| h != reference && h != h1) {
                        human_diffs.push(s1 - m[h2 * r + reference]);
                    }
                }
                per_ref[ri].push(sum / (n_h - 1) as f64);
                total += sum;
            }
            ai_means.push(total / (n_h * (n_h - 1)) as f64);
        }
        check_stability(undefined, n_draws)?;

        let q = self.cfg.tail();
        let delta = quantile(&mut human_diffs, q);
        let ai_lower = quantile(&mut ai_means, q);
        let mut ev = self.evidence(RULE_PAIRWISE.into(), n_draws - undefined);
        for (ri, &reference) in humans.iter().enumerate() {
            let point = humans
                .iter()
                .filter(|&&h| h != reference)
                .map(|&h| full[ai * r + reference] - full[h * r + reference])
                .sum::<f64>()
                / (n_h - 1) as f64;
            ev.per_rater_ci.push(RaterCi::new(
                self.rater_ids[reference].clone(),
                percentile_ci(&mut per_ref[ri], point, &self.cfg),
            ));
        }
        ev.margins.insert("delta".into(), delta);
        ev.margins.insert("ai_lower".into(), ai_lower);
        let ai_mean = humans.iter().map(|&reference| full[ai * r + reference]).sum::<f64>() / n_h as f64;
        let mut hh = 0.0;
        let mut n_hh = 0usize;
        for &reference in &humans {
            for &h in humans.iter().filter(|&&h| h != reference) {
                hh += full[h * r + reference];
                n_hh += 1;
            }
        }
        ev.achieved_coefficients.insert(format!("{}_ai_mean", metric.name()), ai_mean);
        ev.achieved_coefficients.insert(format!("{}_human_mean", metric.name()), hh / n_hh as f64);
        Ok(ev)
    }
}

#[derive(Debug, Clone, Copy)]
enum PairMetric {
    Mcc = 0,
    Auc = 1,
}

impl PairMetric {
    fn name(self) -> &'static str {
        match self {
            PairMetric::Mcc => "mcc",
            PairMetric::Auc => "auc",
        }
    }

    fn eval(self, c: &ConfusionCounts) -> Option<f64> {
        match self {
            PairMetric::Mcc => Some(mcc(c)),
            PairMetric::Auc => auc_from_confusion(c).value(),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Set of humans with the AI appended as the last rater.
fn with_ai(set: &AnnotationSet, ai: &[BinaryAnnotation]) -> Result<(AnnotationSet, usize)> {
    let combined = set.with_rater(ai)?;
    let idx = combined.n_raters() - 1;
    if combined.n_raters() != set.n_raters() + 1 {
        return Err(Error::Schema("AI rater id collides with a human rater".into()));
    }
    Ok((combined, idx))
}

/// Run several tests of an AI (one track per record) against the humans of `set`.
pub fn run_tests(
    set: &AnnotationSet,
    ai: &[BinaryAnnotation],
    tests: &[TestId],
    cfg: &BootstrapConfig,
    options: TestOptions,
) -> Result<Vec<Result<EquivalenceVerdict>>> {
    let (combined, idx) = with_ai(set, ai)?;
    let panel = Panel::new(&combined, cfg, options)?;
    Ok(panel.run(idx, tests))
}

fn run_single(
    set: &AnnotationSet,
    ai: &[BinaryAnnotation],
    test: TestId,
    cfg: &BootstrapConfig,
    options: TestOptions,
) -> Result<EquivalenceVerdict> {
    if set.n_raters() < test.min_humans() {
        return Err(Error::InsufficientRaters {
            required: test.min_humans(),
            actual: set.n_raters(),
        });
    }
    run_tests(set, ai, &[test], cfg, options)?.pop().unwrap()
}

pub fn test_ira_vs_consensus(
    set: &AnnotationSet,
    ai: &[BinaryAnnotation],
    coefficient: Coefficient,
    cfg: &BootstrapConfig,
) -> Result<EquivalenceVerdict> {
    let test = match coefficient {
        Coefficient::FleissKappa => TestId::IraVsConsensusKappa,
        Coefficient::GwetAc1 => TestId::IraVsConsensusAc1,
        other => {
            return Err(Error::validation(
                "coefficient",
                format!("{} is not supported by the consensus test (use fleiss_kappa or gwet_ac1)", other.as_str()),
            ))
        }
    };
    run_single(set, ai, test, cfg, TestOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuringVariant {
    AverageKappa,
    AverageAc1,
    All,
    Majority,
    Any,
}

impl TuringVariant {
    pub fn test_id(self) -> TestId {
        match self {
            TuringVariant::AverageKappa => TestId::TuringAverageKappa,
            TuringVariant::AverageAc1 => TestId::TuringAverageAc1,
            TuringVariant::All => TestId::TuringAll,
            TuringVariant::Majority => TestId::TuringMajority,
            TuringVariant::Any => TestId::TuringAny,
        }
    }
}

pub fn test_turing(
    set: &AnnotationSet,
    ai: &[BinaryAnnotation],
    variant: TuringVariant,
    cfg: &BootstrapConfig,
    options: TestOptions,
) -> Result<EquivalenceVerdict> {
    run_single(set, ai, variant.test_id(), cfg, options)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseMetric {
    Mcc,
    Auc,
}

pub fn test_pairwise(
    set: &AnnotationSet,
    ai: &[BinaryAnnotation],
    metric: PairwiseMetric,
    cfg: &BootstrapConfig,
) -> Result<EquivalenceVerdict> {
    let test = match metric {
        PairwiseMetric::Mcc => TestId::PairwiseMcc,
        PairwiseMetric::Auc => TestId::PairwiseAuc,
    };
    run_single(set, ai, test, cfg, TestOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_method_a, GroundTruthConfig, RaterProfile};

    fn small_cfg() -> BootstrapConfig {
        BootstrapConfig {
            n_iterations: 200,
            block_length_samples: 500,
            seed: 3,
            ..Default::default()
        }
    }

    fn experts(n: usize, seed: u64) -> AnnotationSet {
        let cfg = GroundTruthConfig::new(0.4, 5000, seed);
        generate_method_a(&cfg, &[RaterProfile::new("expert", 0.0, 0.05, n)]).unwrap().1
    }

    #[test]
    fn quantile_type7() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&mut v, 0.0), 1.0);
        assert_eq!(quantile(&mut v, 1.0), 4.0);
        assert!((quantile(&mut v, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&mut v, 0.025) - 1.075).abs() < 1e-12);
    }

    #[test]
    fn blocks_absorb_remainder() {
        let set = experts(2, 1);
        let cfg = BootstrapConfig {
            block_length_samples: 1500,
            resample_unit: ResampleUnit::Block,
            ..Default::default()
        };
        let (_, spans) = resample_units(&set, &cfg);
        assert_eq!(spans.len(), 3);
        assert_eq!(spans[2], UnitSpan { record: 0, start: 3000, end: 5000 });
        let cfg = BootstrapConfig { block_length_samples: 10_000, ..cfg };
        assert_eq!(resample_units(&set, &cfg).1.len(), 1);
    }

    #[test]
    fn constant_statistic_has_zero_width() {
        let set = experts(2, 1);
        let ci = bootstrap_statistic(&set, |_| Ok(Measure::Defined(0.7)), &small_cfg()).unwrap();
        assert_eq!((ci.lower, ci.point, ci.upper), (0.7, 0.7, 0.7));
    }

    #[test]
    fn unstable_statistic_reports_rate() {
        let set = experts(2, 1);
        let calls = std::cell::Cell::new(0usize);
        // the first call evaluates the full set; every fifth iteration is undefined
        let stat = |_: &AnnotationSet| {
            let i = calls.get();
            calls.set(i + 1);
            Ok(if i > 0 && i % 5 == 0 {
                Measure::Undefined(crate::metrics::UndefinedReason::DegenerateMargin)
            } else {
                Measure::Defined(1.0)
            })
        };
        match bootstrap_statistic(&set, stat, &small_cfg()) {
            Err(Error::UnstableStatistic { failure_rate }) => assert!((failure_rate - 20.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn copy_of_rater_has_zero_delta() {
        let set = experts(4, 2);
        let ai = vec![set.annotation(0, 1).clone().with_rater_id("ai")];
        for v in [TuringVariant::AverageKappa, TuringVariant::AverageAc1] {
            let verdict = test_turing(&set, &ai, v, &small_cfg(), TestOptions::default()).unwrap();
            let ci = &verdict.evidence.per_rater_ci[1];
            assert_eq!((ci.lower, ci.point, ci.upper), (0.0, 0.0, 0.0));
            assert!(verdict.passed);
        }
    }

    #[test]
    fn too_few_raters() {
        let set = experts(2, 2);
        let ai = vec![set.annotation(0, 0).clone().with_rater_id("ai")];
        assert!(matches!(
            test_turing(&set, &ai, TuringVariant::Any, &small_cfg(), TestOptions::default()),
            Err(Error::InsufficientRaters { required: 3, actual: 2 })
        ));
        assert!(test_ira_vs_consensus(&set, &ai, Coefficient::FleissKappa, &small_cfg()).is_ok());
        assert!(test_pairwise(&set, &ai, PairwiseMetric::Mcc, &small_cfg()).is_err());
    }

    #[test]
    fn constant_ai_fails_consensus_test() {
        let cfg = GroundTruthConfig::for_imbalance(50.0, 20_000, 8).unwrap();
        let set = generate_method_a(&cfg, &[RaterProfile::new("expert", 0.0, 0.05, 5)]).unwrap().1;
        let zeros = BinaryAnnotation::new("rec0", "ai", vec![Label::Negative; 20_000], 1.0).unwrap();
        let v = test_ira_vs_consensus(&set, &[zeros], Coefficient::FleissKappa, &small_cfg()).unwrap();
        assert!(!v.passed);
        assert!(v.evidence.margins["ai_upper"] < 0.05);
    }

    #[test]
    fn verdict_is_deterministic_and_recomputable() {
        let set = experts(5, 4);
        let ai = vec![set.annotation(0, 0).complement().with_rater_id("ai")];
        let cfg = small_cfg();
        let a = run_tests(&set, &ai, &TestId::ALL, &cfg, TestOptions::default()).unwrap();
        let b = run_tests(&set, &ai, &TestId::ALL, &cfg, TestOptions::default()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
            assert_eq!(x, y);
            assert_eq!(x.recompute_passed(), x.passed);
            assert!(!x.passed, "{} passed a complemented AI", x.test_id);
        }
    }

    #[test]
    fn test_id_names_round_trip() {
        for t in TestId::ALL {
            assert_eq!(t.as_str().parse::<TestId>().unwrap(), t);
            assert_eq!(serde_json::to_value(t).unwrap(), serde_json::Value::String(t.as_str().into()));
        }
        assert!("turing_some".parse::<TestId>().is_err());
    }
}
