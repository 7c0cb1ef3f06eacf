//! Sample-based and event-based performance metrics and seizure burden.

use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::annotation::{confusion, BinaryAnnotation, ConfusionCounts, Label};
use crate::error::{Error, Result};

/// Why a metric could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UndefinedReason {
    /// A confusion-table margin used as denominator is empty.
    DegenerateMargin,
    /// The reference contains only one class.
    SingleClass,
    /// An input series has zero variance.
    ZeroVariance,
    /// No reference events exist.
    NoReferenceEvents,
    /// Expected agreement equals one.
    DegenerateMarginals,
    /// No item carries enough labels to be paired.
    NoPairableItems,
}

impl UndefinedReason {
    pub fn as_str(self) -> &'static str {
        match self {
            UndefinedReason::DegenerateMargin => "degenerate-margin",
            UndefinedReason::SingleClass => "single-class",
            UndefinedReason::ZeroVariance => "zero-variance",
            UndefinedReason::NoReferenceEvents => "no-reference-events",
            UndefinedReason::DegenerateMarginals => "degenerate-marginals",
            UndefinedReason::NoPairableItems => "no-pairable-items",
        }
    }
}

impl fmt::Display for UndefinedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A metric value, or the reason it is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    Defined(f64),
    Undefined(UndefinedReason),
}

impl Measure {
    pub fn value(self) -> Option<f64> {
        match self {
            Measure::Defined(v) => Some(v),
            Measure::Undefined(_) => None,
        }
    }

    pub fn reason(self) -> Option<UndefinedReason> {
        match self {
            Measure::Defined(_) => None,
            Measure::Undefined(r) => Some(r),
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Measure::Defined(_))
    }

    /// Value, panicking with the undefined reason otherwise.
    pub fn unwrap(self) -> f64 {
        match self {
            Measure::Defined(v) => v,
            Measure::Undefined(r) => panic!("metric undefined: {r}"),
        }
    }

    pub(crate) fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Measure::Undefined(UndefinedReason::DegenerateMargin)
        } else {
            Measure::Defined(num as f64 / den as f64)
        }
    }
}

impl Serialize for Measure {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Measure", 2)?;
        s.serialize_field("value", &self.value())?;
        s.serialize_field("reason", &self.reason())?;
        s.end()
    }
}

/// Confusion-derived metrics, optionally with AUC and PCC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleMetrics {
    pub sensitivity: Measure,
    pub specificity: Measure,
    pub ppv: Measure,
    pub npv: Measure,
    pub accuracy: Measure,
    pub mcc: Measure,
    pub auc: Option<Measure>,
    pub pcc: Option<Measure>,
}

/// Matthews correlation coefficient; zero when any margin is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den.sqrt()
    }
}

/// AUC of binary predictions: the single ROC operating point joined to the
/// corners, which equals balanced accuracy.
pub fn auc_from_confusion(c: &ConfusionCounts) -> Measure {
    if c.actual_positives() == 0 || c.actual_negatives() == 0 {
        return Measure::Undefined(UndefinedReason::SingleClass);
    }
    let sens = c.tp as f64 / c.actual_positives() as f64;
    let spec = c.tn as f64 / c.actual_negatives() as f64;
    Measure::Defined((sens + spec) / 2.0)
}

pub fn sample_metrics(c: &ConfusionCounts) -> SampleMetrics {
    SampleMetrics {
        sensitivity: Measure::ratio(c.tp, c.actual_positives()),
        specificity: Measure::ratio(c.tn, c.actual_negatives()),
        ppv: Measure::ratio(c.tp, c.predicted_positives()),
        npv: Measure::ratio(c.tn, c.predicted_negatives()),
        accuracy: Measure::ratio(c.tp + c.tn, c.total()),
        mcc: Measure::Defined(mcc(c)),
        auc: None,
        pcc: None,
    }
}

/// Rank-based (Mann–Whitney) AUC of `scores` against `reference`; ties count
/// one half. Samples with a missing reference label or a NaN score are skipped.
pub fn auc(reference: &BinaryAnnotation, scores: &[f64]) -> Result<Measure> {
    auc_labels(reference.labels(), scores)
}

pub fn auc_labels(reference: &[Label], scores: &[f64]) -> Result<Measure> {
    if reference.len() != scores.len() {
        return Err(Error::Schema(format!(
            "reference has {} samples, scores have {}",
            reference.len(),
            scores.len()
        )));
    }
    let mut pairs: Vec<(f64, bool)> = reference
        .iter()
        .zip(scores)
        .filter_map(|(l, &s)| l.value().filter(|_| !s.is_nan()).map(|v| (s, v)))
        .collect();
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(Measure::Undefined(UndefinedReason::SingleClass));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        let positives = pairs[i..j].iter().filter(|p| p.1).count();
        rank_sum += midrank * positives as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(Measure::Defined(u / (n_pos as f64 * n_neg as f64)))
}

/// Pearson correlation.
pub fn pcc(x: &[f64], y: &[f64]) -> Result<Measure> {
    if x.len() != y.len() {
        return Err(Error::Schema(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("correlation needs at least two samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Measure::Undefined(UndefinedReason::ZeroVariance));
    }
    Ok(Measure::Defined((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

fn require_complete(a: &BinaryAnnotation) -> Result<()> {
    if a.has_missing() {
        Err(Error::Unsupported(format!(
            "annotation for record `{}`, rater `{}` has missing labels",
            a.record_id(),
            a.rater_id()
        )))
    } else {
        Ok(())
    }
}

/// Maximal runs of positive labels as half-open `(start, end)` intervals.
pub fn extract_events(a: &BinaryAnnotation) -> Result<Vec<(usize, usize)>> {
    require_complete(a)?;
    Ok(runs(a.labels()))
}

fn runs(labels: &[Label]) -> Vec<(usize, usize)> {
    let mut events = Vec::new();
    let mut start = None;
    for (j, l) in labels.iter().enumerate() {
        match (l.is_positive(), start) {
            (true, None) => start = Some(j),
            (false, Some(s)) => {
                events.push((s, j));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        events.push((s, labels.len()));
    }
    events
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventMetrics {
    pub event_sensitivity: Measure,
    pub fd_per_hour: f64,
    pub n_reference_events: usize,
    pub n_predicted_events: usize,
    pub n_detected_events: usize,
    pub n_false_detections: usize,
    pub duration_hours: f64,
}

/// Number of intervals in `targets` that share at least one sample with some
/// interval in `probes`. Both lists are sorted and disjoint.
fn count_overlapped(targets: &[(usize, usize)], probes: &[(usize, usize)]) -> usize {
    let mut k = 0;
    let mut hit = 0;
    for &(s, e) in targets {
        while k < probes.len() && probes[k].1 <= s {
            k += 1;
        }
        if k < probes.len() && probes[k].0 < e {
            hit += 1;
        }
    }
    hit
}

/// Event sensitivity (any-overlap) and false detections per hour.
pub fn event_metrics(reference: &BinaryAnnotation, prediction: &BinaryAnnotation) -> Result<EventMetrics> {
    if reference.len() != prediction.len() {
        return Err(Error::Schema(format!(
            "reference has {} samples, prediction has {}",
            reference.len(),
            prediction.len()
        )));
    }
    let ref_events = extract_events(reference)?;
    let pred_events = extract_events(prediction)?;
    let detected = count_overlapped(&ref_events, &pred_events);
    let matched_predictions = count_overlapped(&pred_events, &ref_events);
    let false_detections = pred_events.len() - matched_predictions;
    let duration_hours = reference.duration_s() / 3600.0;
    let event_sensitivity = if ref_events.is_empty() {
        Measure::Undefined(UndefinedReason::NoReferenceEvents)
    } else {
        Measure::Defined(detected as f64 / ref_events.len() as f64)
    };
    Ok(EventMetrics {
        event_sensitivity,
        fd_per_hour: false_detections as f64 / duration_hours,
        n_reference_events: ref_events.len(),
        n_predicted_events: pred_events.len(),
        n_detected_events: detected,
        n_false_detections: false_detections,
        duration_hours,
    })
}

/// Seizure minutes per window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BurdenSeries {
    pub window_minutes: Vec<f64>,
    pub window_length_s: f64,
    pub total_burden_min: f64,
    /// True when the final window is shorter than `window_length_s`.
    pub last_window_partial: bool,
}

impl BurdenSeries {
    /// Values of the complete windows only.
    pub fn complete_windows(&self) -> &[f64] {
        if self.last_window_partial {
            &self.window_minutes[..self.window_minutes.len() - 1]
        } else {
            &self.window_minutes
        }
    }
}

pub const DEFAULT_BURDEN_WINDOW_S: f64 = 3600.0;

fn window_samples(window_length_s: f64, sample_period: f64) -> Result<usize> {
    if !(window_length_s.is_finite() && window_length_s > 0.0) {
        return Err(Error::validation("window_length_s", "must be positive"));
    }
    let n = (window_length_s / sample_period).round();
    if n < 1.0 {
        return Err(Error::validation(
            "window_length_s",
            "window is shorter than one sample",
        ));
    }
    Ok(n as usize)
}

/// Per-window seizure burden, anchored at sample 0, without overlap.
pub fn seizure_burden(a: &BinaryAnnotation, window_length_s: f64) -> Result<BurdenSeries> {
    require_complete(a)?;
    let per_window = window_samples(window_length_s, a.sample_period())?;
    let window_minutes: Vec<f64> = a
        .labels()
        .chunks(per_window)
        .map(|w| w.iter().filter(|l| l.is_positive()).count() as f64 * a.sample_period() / 60.0)
        .collect();
    let total_burden_min = window_minutes.iter().sum();
    Ok(BurdenSeries {
        window_minutes,
        window_length_s,
        total_burden_min,
        last_window_partial: a.len() % per_window != 0,
    })
}

/// Pearson correlation of complete-window burden between two annotations.
pub fn burden_correlation(
    reference: &BinaryAnnotation,
    prediction: &BinaryAnnotation,
    window_length_s: f64,
) -> Result<Measure> {
    burden_correlation_pooled(&[(reference, prediction)], window_length_s)
}

/// Burden correlation with complete windows from several records pooled.
pub fn burden_correlation_pooled(
    pairs: &[(&BinaryAnnotation, &BinaryAnnotation)],
    window_length_s: f64,
) -> Result<Measure> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (r, p) in pairs {
        if r.len() != p.len() {
            return Err(Error::Schema(format!(
                "record `{}`: reference has {} samples, prediction has {}",
                r.record_id(),
                r.len(),
                p.len()
            )));
        }
        x.extend_from_slice(seizure_burden(r, window_length_s)?.complete_windows());
        y.extend_from_slice(seizure_burden(p, window_length_s)?.complete_windows());
    }
    if x.len() < 2 {
        return Err(Error::Degenerate(format!(
            "burden correlation needs at least two complete windows, found {}",
            x.len()
        )));
    }
    pcc(&x, &y)
}

/// Metric names understood by [`evaluate_pair`].
pub const DEFAULT_METRICS: [&str; 8] = [
    "mcc",
    "pcc",
    "sensitivity",
    "specificity",
    "ppv",
    "npv",
    "auc",
    "burden",
];

pub const ALL_METRICS: [&str; 12] = [
    "mcc",
    "pcc",
    "sensitivity",
    "specificity",
    "ppv",
    "npv",
    "accuracy",
    "auc",
    "burden",
    "total_burden_min",
    "event_sensitivity",
    "fd_per_hour",
];

/// One line of a metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub metric: String,
    pub value: Option<f64>,
    pub reason: Option<String>,
}

impl MetricEntry {
    fn from_measure(metric: &str, m: Measure) -> Self {
        Self {
            metric: metric.to_owned(),
            value: m.value(),
            reason: m.reason().map(|r| r.as_str().to_owned()),
        }
    }

    fn from_error(metric: &str, e: &Error) -> Self {
        Self {
            metric: metric.to_owned(),
            value: None,
            reason: Some(e.to_string()),
        }
    }
}

/// Metrics of one predicted track against one reference track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub record_id: String,
    pub reference_rater: String,
    pub predicted_rater: String,
    pub metrics: Vec<MetricEntry>,
}

fn binary_values(a: &BinaryAnnotation) -> Vec<f64> {
    a.labels()
        .iter()
        .map(|l| match l.value() {
            Some(true) => 1.0,
            Some(false) => 0.0,
            None => f64::NAN,
        })
        .collect()
}

/// Evaluate the named metrics, never dropping one: failures are reported with
/// their reason.
pub fn evaluate_pair(
    reference: &BinaryAnnotation,
    prediction: &BinaryAnnotation,
    metric_names: &[&str],
    window_length_s: f64,
) -> Result<MetricReport> {
    for name in metric_names {
        if !ALL_METRICS.contains(name) {
            return Err(Error::validation(
                "metrics",
                format!("unknown metric `{name}` (known: {})", ALL_METRICS.join(", ")),
            ));
        }
    }
    let counts = confusion(reference, prediction);
    let sample = counts.as_ref().ok().map(sample_metrics);
    let events = event_metrics(reference, prediction);

    let mut entries = Vec::with_capacity(metric_names.len());
    for &name in metric_names {
        let entry = match name {
            "mcc" | "sensitivity" | "specificity" | "ppv" | "npv" | "accuracy" => match (&counts, sample) {
                (Ok(_), Some(m)) => {
                    let v = match name {
                        "mcc" => m.mcc,
                        "sensitivity" => m.sensitivity,
                        "specificity" => m.specificity,
                        "ppv" => m.ppv,
                        "npv" => m.npv,
                        _ => m.accuracy,
                    };
                    MetricEntry::from_measure(name, v)
                }
                (Err(e), _) => MetricEntry::from_error(name, e),
                _ => unreachable!(),
            },
            "pcc" => {
                let (x, y): (Vec<f64>, Vec<f64>) = binary_values(reference)
                    .into_iter()
                    .zip(binary_values(prediction))
                    .filter(|(a, b)| !a.is_nan() && !b.is_nan())
                    .unzip();
                match pcc(&x, &y) {
                    Ok(m) => MetricEntry::from_measure(name, m),
                    Err(e) => MetricEntry::from_error(name, &e),
                }
            }
            "auc" => match auc(reference, &binary_values(prediction)) {
                Ok(m) => MetricEntry::from_measure(name, m),
                Err(e) => MetricEntry::from_error(name, &e),
            },
            "burden" => match burden_correlation(reference, prediction, window_length_s) {
                Ok(m) => MetricEntry::from_measure(name, m),
                Err(e) => MetricEntry::from_error(name, &e),
            },
            "total_burden_min" => match seizure_burden(prediction, window_length_s) {
                Ok(b) => MetricEntry::from_measure(name, Measure::Defined(b.total_burden_min)),
                Err(e) => MetricEntry::from_error(name, &e),
            },
            "event_sensitivity" => match &events {
                Ok(m) => MetricEntry::from_measure(name, m.event_sensitivity),
                Err(e) => MetricEntry::from_error(name, e),
            },
            "fd_per_hour" => match &events {
                Ok(m) => MetricEntry::from_measure(name, Measure::Defined(m.fd_per_hour)),
                Err(e) => MetricEntry::from_error(name, e),
            },
            _ => unreachable!("validated above"),
        };
        entries.push(entry);
    }
    Ok(MetricReport {
        record_id: reference.record_id().to_owned(),
        reference_rater: reference.rater_id().to_owned(),
        predicted_rater: prediction.rater_id().to_owned(),
        metrics: entries,
    })
}

/// Long-format CSV: one row per (record, reference, prediction, metric).
pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("record_id,reference_rater,predicted_rater,metric,value,reason\n");
    for r in reports {
        for m in &r.metrics {
            let value = m.value.map(|v| v.to_string()).unwrap_or_default();
            let reason = m.reason.as_deref().unwrap_or("").replace('"', "'");
            let reason = if reason.contains(',') {
                format!("\"{reason}\"")
            } else {
                reason
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.record_id, r.reference_rater, r.predicted_rater, m.metric, value, reason
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(bits: &[u8]) -> BinaryAnnotation {
        BinaryAnnotation::from_bits("rec", "r", bits).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn twenty_sample_table() {
        let c = ConfusionCounts { tp: 9, fn_: 1, tn: 9, fp: 1 };
        let m = sample_metrics(&c);
        for v in [m.sensitivity, m.specificity, m.ppv, m.npv] {
            assert!(close(v.unwrap(), 0.9, 1e-12));
        }
        // (81 - 1) / sqrt(10^4) = 0.8
        assert!(close(m.mcc.unwrap(), 0.8, 1e-12));
    }

    #[test]
    fn perfect_prediction() {
        let c = ConfusionCounts { tp: 12, fn_: 0, tn: 30, fp: 0 };
        let m = sample_metrics(&c);
        for v in [m.sensitivity, m.specificity, m.ppv, m.npv, m.accuracy, m.mcc] {
            assert_eq!(v.unwrap(), 1.0);
        }
    }

    #[test]
    fn ppv_collapse_at_fifty_to_one() {
        let c = ConfusionCounts { tp: 90, fn_: 10, fp: 500, tn: 4500 };
        let ppv = sample_metrics(&c).ppv.unwrap();
        let p: f64 = 1.0 / 51.0;
        let closed = 0.9 * p / (0.9 * p + 0.1 * (1.0 - p));
        assert!(close(ppv, 90.0 / 590.0, 1e-12));
        assert!(close(ppv, closed, 1e-12));
        assert!(close(ppv, 0.1525, 1e-4));
    }

    #[test]
    fn degenerate_margins() {
        let c = ConfusionCounts { tp: 0, fn_: 0, tn: 5, fp: 0 };
        let m = sample_metrics(&c);
        assert_eq!(m.sensitivity, Measure::Undefined(UndefinedReason::DegenerateMargin));
        assert_eq!(m.ppv, Measure::Undefined(UndefinedReason::DegenerateMargin));
        assert_eq!(m.mcc, Measure::Defined(0.0));
    }

    #[test]
    fn auc_cases() {
        let r = ann(&[1, 0, 1, 0, 0, 1]);
        let perfect: Vec<f64> = r.labels().iter().map(|l| l.is_positive() as u8 as f64).collect();
        assert_eq!(auc(&r, &perfect).unwrap().unwrap(), 1.0);
        assert_eq!(auc(&r, &[0.3; 6]).unwrap().unwrap(), 0.5);
        assert_eq!(
            auc(&ann(&[1, 1]), &[0.2, 0.4]).unwrap(),
            Measure::Undefined(UndefinedReason::SingleClass)
        );
    }

    #[test]
    fn auc_binary_scores_is_balanced_accuracy() {
        // 10 positives, 10 negatives, one error in each class.
        let mut reference = vec![1u8; 10];
        reference.extend([0u8; 10]);
        let mut pred = reference.clone();
        pred[0] = 0;
        pred[19] = 1;
        let r = ann(&reference);
        let p = ann(&pred);
        let scores: Vec<f64> = pred.iter().map(|&b| b as f64).collect();
        let rank = auc(&r, &scores).unwrap().unwrap();
        let c = confusion(&r, &p).unwrap();
        assert!(close(rank, 0.9, 1e-12));
        assert!(close(rank, auc_from_confusion(&c).unwrap(), 1e-12));
    }

    #[test]
    fn pcc_cases() {
        let x = [1.0, 2.0, 4.0, 8.0];
        assert!(close(pcc(&x, &x).unwrap().unwrap(), 1.0, 1e-12));
        let y: Vec<f64> = x.iter().map(|v| 3.0 - v).collect();
        assert!(close(pcc(&x, &y).unwrap().unwrap(), -1.0, 1e-12));
        assert_eq!(
            pcc(&x, &[2.0; 4]).unwrap(),
            Measure::Undefined(UndefinedReason::ZeroVariance)
        );
        assert!(pcc(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn events() {
        assert_eq!(extract_events(&ann(&[0, 1, 1, 0, 1])).unwrap(), vec![(1, 3), (4, 5)]);
        assert!(extract_events(&ann(&[0, 0, 0])).unwrap().is_empty());
        assert_eq!(extract_events(&ann(&[1, 1, 1, 1])).unwrap(), vec![(0, 4)]);
        let with_missing =
            BinaryAnnotation::new("r", "a", vec![Label::Positive, Label::Missing], 1.0).unwrap();
        assert!(matches!(extract_events(&with_missing), Err(Error::Unsupported(_))));
    }

    fn hour_track(f: impl Fn(usize) -> bool) -> BinaryAnnotation {
        let labels = (0..3600).map(|j| Label::from_bool(f(j))).collect();
        BinaryAnnotation::new("rec", "r", labels, 1.0).unwrap()
    }

    #[test]
    fn all_ones_prediction() {
        let reference = hour_track(|j| (100..160).contains(&j) || (2000..2050).contains(&j));
        let all = hour_track(|_| true);
        let m = event_metrics(&reference, &all).unwrap();
        assert_eq!(m.event_sensitivity, Measure::Defined(1.0));
        assert_eq!(m.fd_per_hour, 0.0);

        let empty = hour_track(|_| false);
        let m = event_metrics(&empty, &all).unwrap();
        assert_eq!(m.event_sensitivity, Measure::Undefined(UndefinedReason::NoReferenceEvents));
        assert!(close(m.fd_per_hour, 1.0, 1e-12));
    }

    #[test]
    fn identity_and_false_detections() {
        let reference = hour_track(|j| (10..20).contains(&j));
        let m = event_metrics(&reference, &reference).unwrap();
        assert_eq!(m.event_sensitivity, Measure::Defined(1.0));
        assert_eq!(m.fd_per_hour, 0.0);

        let empty = hour_track(|_| false);
        let three = hour_track(|j| (10..20).contains(&j) || (100..110).contains(&j) || (500..501).contains(&j));
        let m = event_metrics(&empty, &three).unwrap();
        assert!(!m.event_sensitivity.is_defined());
        assert!(close(m.fd_per_hour, 3.0, 1e-12));
    }

    #[test]
    fn burden_windows() {
        let labels: Vec<Label> = (0..7200).map(|j| Label::from_bool(j < 600)).collect();
        let a = BinaryAnnotation::new("r", "a", labels, 1.0).unwrap();
        let b = seizure_burden(&a, 3600.0).unwrap();
        assert_eq!(b.window_minutes, vec![10.0, 0.0]);
        assert_eq!(b.total_burden_min, 10.0);
        assert!(!b.last_window_partial);

        let zeros = seizure_burden(&hour_track(|_| false), 3600.0).unwrap();
        assert_eq!(zeros.total_burden_min, 0.0);
        let ones = seizure_burden(&hour_track(|_| true), 3600.0).unwrap();
        assert_eq!(ones.window_minutes, vec![60.0]);
    }

    #[test]
    fn burden_partial_window_kept_in_total() {
        let labels: Vec<Label> = (0..5400).map(|_| Label::Positive).collect();
        let a = BinaryAnnotation::new("r", "a", labels, 1.0).unwrap();
        let b = seizure_burden(&a, 3600.0).unwrap();
        assert_eq!(b.window_minutes, vec![60.0, 30.0]);
        assert!(b.last_window_partial);
        assert_eq!(b.complete_windows(), &[60.0]);
        assert_eq!(b.total_burden_min, 90.0);
    }

    #[test]
    fn burden_correlation_ignores_alignment_within_hour() {
        // per-hour minutes 5, 20, 1, 12; the prediction moves every event.
        let minutes = [5usize, 20, 1, 12];
        let reference: Vec<Label> = minutes
            .iter()
            .flat_map(|&m| (0..3600).map(move |j| Label::from_bool(j < m * 60)))
            .collect();
        let shifted: Vec<Label> = minutes
            .iter()
            .flat_map(|&m| (0..3600).map(move |j| Label::from_bool(j >= 3600 - m * 60)))
            .collect();
        let r = BinaryAnnotation::new("r", "a", reference, 1.0).unwrap();
        let p = BinaryAnnotation::new("r", "b", shifted, 1.0).unwrap();
        assert!(close(burden_correlation(&r, &r, 3600.0).unwrap().unwrap(), 1.0, 1e-12));
        assert!(close(burden_correlation(&r, &p, 3600.0).unwrap().unwrap(), 1.0, 1e-12));
        assert!(mcc(&confusion(&r, &p).unwrap()) < 0.9);
    }

    #[test]
    fn burden_correlation_needs_two_windows() {
        let a = hour_track(|j| j < 30);
        assert!(matches!(burden_correlation(&a, &a, 3600.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn report_keeps_undefined_metrics() {
        let r = ann(&[0, 0, 0, 0]);
        let p = ann(&[0, 1, 0, 0]);
        let report = evaluate_pair(&r, &p, &DEFAULT_METRICS, 3600.0).unwrap();
        assert_eq!(report.metrics.len(), DEFAULT_METRICS.len());
        let sens = report.metrics.iter().find(|m| m.metric == "sensitivity").unwrap();
        assert_eq!(sens.value, None);
        assert_eq!(sens.reason.as_deref(), Some("degenerate-margin"));
        let csv = reports_to_csv(&[report]);
        assert!(csv.lines().count() == DEFAULT_METRICS.len() + 1);
        assert!(evaluate_pair(&r, &p, &["bogus"], 3600.0).is_err());
    }
}
