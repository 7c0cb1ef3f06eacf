//! Annotation data model: probability tracks, binary label tracks, multi-rater
//! sets and confusion tallies.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sampling period: one label per second.
pub const DEFAULT_SAMPLE_PERIOD: f64 = 1.0;

/// Threshold applied to probabilities when binarising (`p >= 0.5` is positive).
pub const THRESHOLD: f64 = 0.5;

/// A single per-sample label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Negative,
    Positive,
    Missing,
}

impl Label {
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    /// `Some(true)` for positive, `Some(false)` for negative, `None` when missing.
    pub fn value(self) -> Option<bool> {
        match self {
            Label::Negative => Some(false),
            Label::Positive => Some(true),
            Label::Missing => None,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn is_missing(self) -> bool {
        self == Label::Missing
    }

    /// Swap positive and negative; missing stays missing.
    pub fn complement(self) -> Self {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
            Label::Missing => Label::Missing,
        }
    }

    fn to_json(self) -> Option<u8> {
        self.value().map(u8::from)
    }
}

fn check_period(sample_period: f64) -> Result<()> {
    if sample_period.is_finite() && sample_period > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            "sample_period",
            format!("must be a positive finite number, got {sample_period}"),
        ))
    }
}

/// Per-sample probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilitySequence {
    values: Vec<f64>,
    sample_period: f64,
}

impl ProbabilitySequence {
    pub fn new(values: Vec<f64>, sample_period: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("values", "probability sequence is empty"));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::validation(
                format!("values[{i}]"),
                format!("{v} lies outside [0, 1]"),
            ));
        }
        check_period(sample_period)?;
        Ok(Self {
            values,
            sample_period,
        })
    }

    /// Construct from values already known to lie in `[0, 1]`.
    pub(crate) fn from_clamped(values: Vec<f64>, sample_period: f64) -> Self {
        debug_assert!(!values.is_empty());
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            values,
            sample_period,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    /// Binarise with `p >= 0.5`.
    pub fn threshold(&self) -> Vec<Label> {
        self.values
            .iter()
            .map(|&p| Label::from_bool(p >= THRESHOLD))
            .collect()
    }

    /// Binarise into an annotation carrying the given identifiers.
    pub fn to_annotation(&self, record_id: &str, rater_id: &str) -> BinaryAnnotation {
        BinaryAnnotation {
            labels: self.threshold(),
            rater_id: rater_id.to_owned(),
            record_id: record_id.to_owned(),
            sample_period: self.sample_period,
        }
    }
}

/// One rater's label track for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryAnnotation {
    labels: Vec<Label>,
    rater_id: String,
    record_id: String,
    sample_period: f64,
}

impl BinaryAnnotation {
    pub fn new(
        record_id: impl Into<String>,
        rater_id: impl Into<String>,
        labels: Vec<Label>,
        sample_period: f64,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::validation("labels", "annotation is empty"));
        }
        check_period(sample_period)?;
        Ok(Self {
            labels,
            rater_id: rater_id.into(),
            record_id: record_id.into(),
            sample_period,
        })
    }

    /// Convenience constructor from 0/1 values at the default period.
    pub fn from_bits(record_id: &str, rater_id: &str, bits: &[u8]) -> Result<Self> {
        let labels = bits.iter().map(|&b| Label::from_bool(b != 0)).collect();
        Self::new(record_id, rater_id, labels, DEFAULT_SAMPLE_PERIOD)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn rater_id(&self) -> &str {
        &self.rater_id
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn has_missing(&self) -> bool {
        self.labels.iter().any(|l| l.is_missing())
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }

    /// Duration in seconds covered by the track.
    pub fn duration_s(&self) -> f64 {
        self.labels.len() as f64 * self.sample_period
    }

    pub fn complement(&self) -> Self {
        Self {
            labels: self.labels.iter().map(|l| l.complement()).collect(),
            ..self.clone()
        }
    }

    pub fn with_rater_id(mut self, rater_id: impl Into<String>) -> Self {
        self.rater_id = rater_id.into();
        self
    }

    pub fn with_record_id(mut self, record_id: impl Into<String>) -> Self {
        self.record_id = record_id.into();
        self
    }

    /// Slice `[start, end)` of the track, keeping identifiers.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            labels: self.labels[start..end].to_vec(),
            ..self.clone()
        }
    }

}

/// Multi-rater annotations, dense over `records × raters`.
///
/// A rater that did not annotate a record is stored as a fully missing track,
/// which marks the set as allowing missing data.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    rater_ids: Vec<String>,
    record_ids: Vec<String>,
    // [record][rater]
    grid: Vec<Vec<BinaryAnnotation>>,
    allows_missing: bool,
}

impl AnnotationSet {
    /// Build a set from annotations. Raters and records are ordered by first
    /// appearance.
    pub fn new(annotations: Vec<BinaryAnnotation>) -> Result<Self> {
        if annotations.is_empty() {
            return Err(Error::Schema("annotation set has no records".into()));
        }
        let mut rater_ids: Vec<String> = Vec::new();
        let mut record_ids: Vec<String> = Vec::new();
        let mut rater_pos: HashMap<String, usize> = HashMap::new();
        let mut record_pos: HashMap<String, usize> = HashMap::new();
        for a in &annotations {
            if !rater_pos.contains_key(a.rater_id()) {
                rater_pos.insert(a.rater_id().to_owned(), rater_ids.len());
                rater_ids.push(a.rater_id().to_owned());
            }
            if !record_pos.contains_key(a.record_id()) {
                record_pos.insert(a.record_id().to_owned(), record_ids.len());
                record_ids.push(a.record_id().to_owned());
            }
        }

        let mut slots: Vec<Vec<Option<BinaryAnnotation>>> =
            vec![vec![None; rater_ids.len()]; record_ids.len()];
        for a in annotations {
            let r = record_pos[a.record_id()];
            let k = rater_pos[a.rater_id()];
            if slots[r][k].is_some() {
                return Err(Error::Schema(format!(
                    "duplicate annotation for record `{}`, rater `{}`",
                    a.record_id(),
                    a.rater_id()
                )));
            }
            slots[r][k] = Some(a);
        }

        let mut allows_missing = false;
        let mut grid = Vec::with_capacity(record_ids.len());
        for (r, row) in slots.into_iter().enumerate() {
            let first = row.iter().flatten().next().expect("every record has one annotation");
            let (len, period) = (first.len(), first.sample_period());
            for a in row.iter().flatten() {
                if a.len() != len {
                    return Err(Error::Schema(format!(
                        "record `{}`: rater `{}` has {} samples, expected {}",
                        record_ids[r],
                        a.rater_id(),
                        a.len(),
                        len
                    )));
                }
                if a.sample_period() != period {
                    return Err(Error::Schema(format!(
                        "record `{}`: rater `{}` has sample period {}, expected {}",
                        record_ids[r],
                        a.rater_id(),
                        a.sample_period(),
                        period
                    )));
                }
            }
            let filled: Vec<BinaryAnnotation> = row
                .into_iter()
                .enumerate()
                .map(|(k, slot)| {
                    slot.unwrap_or_else(|| BinaryAnnotation {
                        labels: vec![Label::Missing; len],
                        rater_id: rater_ids[k].clone(),
                        record_id: record_ids[r].clone(),
                        sample_period: period,
                    })
                })
                .collect();
            allows_missing |= filled.iter().any(BinaryAnnotation::has_missing);
            grid.push(filled);
        }

        Ok(Self {
            rater_ids,
            record_ids,
            grid,
            allows_missing,
        })
    }

    pub fn rater_ids(&self) -> &[String] {
        &self.rater_ids
    }

    pub fn record_ids(&self) -> &[String] {
        &self.record_ids
    }

    pub fn n_raters(&self) -> usize {
        self.rater_ids.len()
    }

    pub fn n_records(&self) -> usize {
        self.record_ids.len()
    }

    pub fn allows_missing(&self) -> bool {
        self.allows_missing
    }

    pub fn rater_index(&self, rater_id: &str) -> Result<usize> {
        self.rater_ids
            .iter()
            .position(|r| r == rater_id)
            .ok_or_else(|| Error::UnknownRater(rater_id.to_owned()))
    }

    pub fn record_index(&self, record_id: &str) -> Result<usize> {
        self.record_ids
            .iter()
            .position(|r| r == record_id)
            .ok_or_else(|| Error::UnknownRecord(record_id.to_owned()))
    }

    /// Annotation by position.
    pub fn annotation(&self, record: usize, rater: usize) -> &BinaryAnnotation {
        &self.grid[record][rater]
    }

    pub fn get(&self, record_id: &str, rater_id: &str) -> Result<&BinaryAnnotation> {
        Ok(self.annotation(self.record_index(record_id)?, self.rater_index(rater_id)?))
    }

    /// All raters' tracks for one record, in rater order.
    pub fn record(&self, record: usize) -> &[BinaryAnnotation] {
        &self.grid[record]
    }

    pub fn record_len(&self, record: usize) -> usize {
        self.grid[record][0].len()
    }

    pub fn record_period(&self, record: usize) -> f64 {
        self.grid[record][0].sample_period()
    }

    /// Total number of samples across records.
    pub fn total_samples(&self) -> usize {
        (0..self.n_records()).map(|r| self.record_len(r)).sum()
    }

    /// Every annotation, record-major.
    pub fn annotations(&self) -> impl Iterator<Item = &BinaryAnnotation> {
        self.grid.iter().flatten()
    }

    /// Keep only the given raters, in the given order.
    pub fn select_raters(&self, raters: &[usize]) -> Result<Self> {
        let annotations = self
            .grid
            .iter()
            .flat_map(|row| raters.iter().map(move |&k| row[k].clone()))
            .collect();
        Self::new(annotations)
    }

    /// Keep only the given records, in the given order.
    pub fn select_records(&self, records: &[usize]) -> Result<Self> {
        let annotations = records
            .iter()
            .flat_map(|&r| self.grid[r].iter().cloned())
            .collect();
        Self::new(annotations)
    }

    /// Same set with one rater's tracks replaced (per record, in record order).
    pub fn replace_rater(&self, rater: usize, tracks: &[BinaryAnnotation]) -> Result<Self> {
        if tracks.len() != self.n_records() {
            return Err(Error::Schema(format!(
                "replacement has {} records, set has {}",
                tracks.len(),
                self.n_records()
            )));
        }
        let id = &self.rater_ids[rater];
        let mut annotations = Vec::with_capacity(self.n_records() * self.n_raters());
        for (row, t) in self.grid.iter().zip(tracks) {
            for (k, a) in row.iter().enumerate() {
                if k == rater {
                    annotations.push(t.clone().with_rater_id(id.clone()).with_record_id(a.record_id()));
                } else {
                    annotations.push(a.clone());
                }
            }
        }
        Self::new(annotations)
    }

    /// Same set with an additional rater appended.
    pub fn with_rater(&self, tracks: &[BinaryAnnotation]) -> Result<Self> {
        if tracks.len() != self.n_records() {
            return Err(Error::Schema(format!(
                "new rater has {} records, set has {}",
                tracks.len(),
                self.n_records()
            )));
        }
        let mut annotations: Vec<BinaryAnnotation> = Vec::new();
        for (row, t) in self.grid.iter().zip(tracks) {
            annotations.extend(row.iter().cloned());
            annotations.push(t.clone().with_record_id(row[0].record_id()));
        }
        Self::new(annotations)
    }
}

/// Supported on-disk formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guess from a file extension.
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::validation("format", format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonDocument {
    records: Vec<JsonRecord>,
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    record_id: String,
    #[serde(default = "default_period")]
    sample_period: f64,
    raters: Vec<JsonRater>,
}

#[derive(Serialize, Deserialize)]
struct JsonRater {
    rater_id: String,
    labels: Vec<Option<u8>>,
}

fn default_period() -> f64 {
    DEFAULT_SAMPLE_PERIOD
}

pub const CSV_HEADER: [&str; 4] = ["record_id", "rater_id", "sample_index", "label"];

/// Read an annotation file.
pub fn load_annotations(path: impl AsRef<std::path::Path>, format: Format) -> Result<AnnotationSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Csv => parse_csv(&text),
        Format::Json => parse_json(&text),
    }
}

/// Write an annotation file. The CSV schema carries no sample period; it is
/// read back as the default of one second.
pub fn save_annotations(
    set: &AnnotationSet,
    path: impl AsRef<std::path::Path>,
    format: Format,
) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        Format::Csv => to_csv(set)?,
        Format::Json => to_json(set)?,
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_csv(text: &str) -> Result<AnnotationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        field: "header".into(),
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            field: "header".into(),
            message: format!("expected `{}`", CSV_HEADER.join(",")),
        });
    }

    // (record, rater) -> (first line, [(index, label, line)])
    let mut order: Vec<(String, String)> = Vec::new();
    let mut cells: HashMap<(String, String), Vec<(usize, Label, usize)>> = HashMap::new();
    for (row, result) in reader.records().enumerate() {
        let line = row + 2;
        let rec = result.map_err(|e| Error::Parse {
            line,
            field: "row".into(),
            message: e.to_string(),
        })?;
        if rec.len() != 4 {
            return Err(Error::Parse {
                line,
                field: "row".into(),
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let record_id = rec[0].to_owned();
        let rater_id = rec[1].to_owned();
        if record_id.is_empty() || rater_id.is_empty() {
            return Err(Error::Parse {
                line,
                field: if record_id.is_empty() { "record_id" } else { "rater_id" }.into(),
                message: "identifier is empty".into(),
            });
        }
        let index: usize = rec[2].parse().map_err(|_| Error::Parse {
            line,
            field: "sample_index".into(),
            message: format!("`{}` is not a non-negative integer", &rec[2]),
        })?;
        let label = match &rec[3] {
            "" => Label::Missing,
            "0" => Label::Negative,
            "1" => Label::Positive,
            other => {
                return Err(Error::Parse {
                    line,
                    field: "label".into(),
                    message: format!("`{other}` is not 0, 1 or empty"),
                })
            }
        };
        let key = (record_id, rater_id);
        let entry = cells.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        entry.push((index, label, line));
    }

    let mut annotations = Vec::with_capacity(order.len());
    for key in order {
        let mut samples = cells.remove(&key).expect("key recorded on insert");
        samples.sort_by_key(|&(i, _, _)| i);
        for (expected, &(index, _, line)) in samples.iter().enumerate() {
            if index != expected {
                return Err(Error::Parse {
                    line,
                    field: "sample_index".into(),
                    message: format!(
                        "record `{}`, rater `{}`: sample indices must be contiguous from 0 (expected {}, found {})",
                        key.0, key.1, expected, index
                    ),
                });
            }
        }
        let labels = samples.into_iter().map(|(_, l, _)| l).collect();
        annotations.push(BinaryAnnotation::new(key.0, key.1, labels, DEFAULT_SAMPLE_PERIOD)?);
    }
    AnnotationSet::new(annotations)
}

pub fn parse_json(text: &str) -> Result<AnnotationSet> {
    let doc: JsonDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        field: "json".into(),
        message: e.to_string(),
    })?;
    let mut annotations = Vec::new();
    for (ri, rec) in doc.records.into_iter().enumerate() {
        for (ki, rater) in rec.raters.into_iter().enumerate() {
            let labels = rater
                .labels
                .iter()
                .enumerate()
                .map(|(j, v)| match v {
                    None => Ok(Label::Missing),
                    Some(0) => Ok(Label::Negative),
                    Some(1) => Ok(Label::Positive),
                    Some(other) => Err(Error::Parse {
                        line: 0,
                        field: format!("records[{ri}].raters[{ki}].labels[{j}]"),
                        message: format!("`{other}` is not 0, 1 or null"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            annotations.push(BinaryAnnotation::new(
                rec.record_id.clone(),
                rater.rater_id,
                labels,
                rec.sample_period,
            )?);
        }
    }
    AnnotationSet::new(annotations)
}

pub fn to_csv(set: &AnnotationSet) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let w = |e: csv::Error| Error::Schema(format!("csv write failed: {e}"));
    writer.write_record(CSV_HEADER).map_err(w)?;
    for a in set.annotations() {
        for (j, l) in a.labels().iter().enumerate() {
            let label = match l {
                Label::Negative => "0",
                Label::Positive => "1",
                Label::Missing => "",
            };
            writer
                .write_record([a.record_id(), a.rater_id(), &j.to_string(), label])
                .map_err(w)?;
        }
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Schema(format!("csv write failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn to_json(set: &AnnotationSet) -> Result<String> {
    let doc = JsonDocument {
        records: (0..set.n_records())
            .map(|r| JsonRecord {
                record_id: set.record_ids()[r].clone(),
                sample_period: set.record_period(r),
                raters: set
                    .record(r)
                    .iter()
                    .map(|a| JsonRater {
                        rater_id: a.rater_id().to_owned(),
                        labels: a.labels().iter().map(|l| l.to_json()).collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Schema(format!("json write failed: {e}")))
}

/// 2×2 confusion tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Reference-positive count.
    pub fn actual_positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn actual_negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn predicted_positives(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn predicted_negatives(&self) -> u64 {
        self.tn + self.fn_
    }

    /// Counts after complementing both inputs.
    pub fn complemented(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }

    /// Counts with reference and prediction swapped.
    pub fn transposed(&self) -> Self {
        Self {
            fp: self.fn_,
            fn_: self.fp,
            ..*self
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl fmt::Display for ConfusionCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tp={} fp={} tn={} fn={}", self.tp, self.fp, self.tn, self.fn_)
    }
}

/// Tally label slices over pairwise-complete samples.
pub fn confusion_labels(reference: &[Label], prediction: &[Label]) -> Result<ConfusionCounts> {
    if reference.len() != prediction.len() {
        return Err(Error::Schema(format!(
            "reference has {} samples, prediction has {}",
            reference.len(),
            prediction.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (r, p) in reference.iter().zip(prediction) {
        match (r.value(), p.value()) {
            (Some(true), Some(true)) => c.tp += 1,
            (Some(true), Some(false)) => c.fn_ += 1,
            (Some(false), Some(true)) => c.fp += 1,
            (Some(false), Some(false)) => c.tn += 1,
            _ => {}
        }
    }
    if c.total() == 0 {
        return Err(Error::Degenerate(
            "no pairwise-complete samples between reference and prediction".into(),
        ));
    }
    Ok(c)
}

/// Confusion counts of `prediction` against `reference`, skipping samples
/// where either side is missing.
pub fn confusion(reference: &BinaryAnnotation, prediction: &BinaryAnnotation) -> Result<ConfusionCounts> {
    confusion_labels(reference.labels(), prediction.labels())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(rater: &str, bits: &[u8]) -> BinaryAnnotation {
        BinaryAnnotation::from_bits("rec", rater, bits).unwrap()
    }

    #[test]
    fn confusion_one_of_each_cell() {
        let c = confusion(&ann("a", &[1, 1, 0, 0]), &ann("b", &[1, 0, 1, 0])).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
    }

    #[test]
    fn confusion_identity() {
        let a = ann("a", &[1, 0, 0, 1, 1, 0, 1]);
        let c = confusion(&a, &a).unwrap();
        assert_eq!(c.fp + c.fn_, 0);
        assert_eq!(c.tp + c.tn, 7);
    }

    #[test]
    fn confusion_skips_missing() {
        let r = BinaryAnnotation::new(
            "rec",
            "a",
            vec![Label::Positive, Label::Negative, Label::Missing],
            1.0,
        )
        .unwrap();
        let c = confusion(&r, &ann("b", &[1, 1, 1])).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, tn: 0, fn_: 0 });
        assert_eq!(c.total(), 2);
    }

    #[test]
    fn confusion_all_missing_is_degenerate() {
        let r = BinaryAnnotation::new("rec", "a", vec![Label::Missing; 3], 1.0).unwrap();
        assert!(matches!(confusion(&r, &ann("b", &[1, 0, 1])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn csv_with_two_raters() {
        let mut text = String::from("record_id,rater_id,sample_index,label\n");
        for rater in ["A", "B"] {
            for j in 0..10 {
                text.push_str(&format!("r1,{rater},{j},{}\n", j % 2));
            }
        }
        let set = parse_csv(&text).unwrap();
        assert_eq!(set.n_raters(), 2);
        assert_eq!(set.n_records(), 1);
        assert!(!set.allows_missing());
        assert_eq!(set.annotations().count(), 2);
    }

    #[test]
    fn csv_blank_cell_is_missing() {
        let text = "record_id,rater_id,sample_index,label\nr1,A,0,1\nr1,A,1,\nr1,B,0,0\nr1,B,1,1\n";
        let set = parse_csv(text).unwrap();
        assert!(set.allows_missing());
        let a = set.get("r1", "A").unwrap();
        assert_eq!(a.labels(), &[Label::Positive, Label::Missing]);
        let missing: usize = set
            .annotations()
            .map(|a| a.labels().iter().filter(|l| l.is_missing()).count())
            .sum();
        assert_eq!(missing, 1);
    }

    #[test]
    fn csv_length_mismatch_is_schema_error() {
        let mut text = String::from("record_id,rater_id,sample_index,label\n");
        for j in 0..10 {
            text.push_str(&format!("r1,A,{j},0\n"));
        }
        for j in 0..9 {
            text.push_str(&format!("r1,B,{j},0\n"));
        }
        assert!(matches!(parse_csv(&text), Err(Error::Schema(_))));
    }

    #[test]
    fn csv_bad_label_names_line_and_field() {
        let text = "record_id,rater_id,sample_index,label\nr1,A,0,1\nr1,A,1,7\n";
        match parse_csv(text) {
            Err(Error::Parse { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "label");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_gap_in_indices_rejected() {
        let text = "record_id,rater_id,sample_index,label\nr1,A,0,1\nr1,A,2,0\n";
        assert!(matches!(parse_csv(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn json_nulls_are_missing() {
        let text = r#"{"records":[{"record_id":"r","sample_period":0.5,"raters":[
            {"rater_id":"a","labels":[0,1,null]},{"rater_id":"b","labels":[1,1,0]}]}]}"#;
        let set = parse_json(text).unwrap();
        assert!(set.allows_missing());
        assert_eq!(set.record_period(0), 0.5);
        let out = to_json(&set).unwrap();
        assert!(out.contains("null"));
    }

    #[test]
    fn empty_set_rejected() {
        assert!(AnnotationSet::new(Vec::new()).is_err());
    }

    #[test]
    fn absent_rater_becomes_missing_track() {
        let set = AnnotationSet::new(vec![
            ann("a", &[1, 0]).with_record_id("r1"),
            ann("b", &[1, 1]).with_record_id("r1"),
            ann("a", &[0, 0, 1]).with_record_id("r2"),
        ])
        .unwrap();
        assert!(set.allows_missing());
        assert!(set.get("r2", "b").unwrap().labels().iter().all(|l| l.is_missing()));
    }

    #[test]
    fn complement_swaps_cells() {
        let a = ann("a", &[1, 1, 0, 0, 1]);
        let b = ann("b", &[1, 0, 1, 0, 0]);
        let c = confusion(&a, &b).unwrap();
        let cc = confusion(&a.complement(), &b.complement()).unwrap();
        assert_eq!(cc, c.complemented());
    }
}
