//! Chance-corrected inter-rater agreement for binary labels.
//!
//! Every coefficient is reported as `(p_o - p_e) / (1 - p_e)` together with the
//! observed and expected agreement it was built from. When `p_o == 1` the
//! value is 1 regardless of `p_e`.

use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationSet, BinaryAnnotation, ConfusionCounts};
use crate::error::{Error, Result};
use crate::metrics::{Measure, UndefinedReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    CohenKappa,
    FleissKappa,
    KrippendorffAlpha,
    GwetAc1,
}

impl Coefficient {
    pub const ALL: [Coefficient; 4] = [
        Coefficient::CohenKappa,
        Coefficient::FleissKappa,
        Coefficient::KrippendorffAlpha,
        Coefficient::GwetAc1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Coefficient::CohenKappa => "cohen_kappa",
            Coefficient::FleissKappa => "fleiss_kappa",
            Coefficient::KrippendorffAlpha => "krippendorff_alpha",
            Coefficient::GwetAc1 => "gwet_ac1",
        }
    }
}

impl std::str::FromStr for Coefficient {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Coefficient::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::validation("coefficient", format!("unknown coefficient `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgreementResult {
    pub coefficient: Coefficient,
    pub value: Measure,
    pub p_o: f64,
    pub p_e: f64,
    pub n_items: usize,
    pub n_raters: usize,
    pub dropped_items: usize,
}

fn chance_corrected(p_o: f64, p_e: f64) -> Measure {
    if p_o == 1.0 {
        Measure::Defined(1.0)
    } else if p_e >= 1.0 {
        Measure::Undefined(UndefinedReason::DegenerateMarginals)
    } else {
        Measure::Defined((p_o - p_e) / (1.0 - p_e))
    }
}

/// Sufficient statistics of complete binary multi-rater data with a fixed
/// number of raters per item. Additive over disjoint item sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgreementSums {
    pub n_items: u64,
    pub n_raters: u64,
    /// Σ over items of agreeing ordered rater pairs, `c(c-1) + (m-c)(m-c-1)`.
    pub agreeing_pairs: u64,
    /// Σ over items of positive labels.
    pub positives: u64,
}

impl AgreementSums {
    /// Contribution of one item with `positives` of `n_raters` labels positive.
    pub fn item(n_raters: u64, positives: u64) -> Self {
        let neg = n_raters - positives;
        Self {
            n_items: 1,
            n_raters,
            agreeing_pairs: positives * positives.saturating_sub(1) + neg * neg.saturating_sub(1),
            positives,
        }
    }

    /// Two-rater sums from a confusion table.
    pub fn from_confusion(c: &ConfusionCounts) -> Self {
        Self {
            n_items: c.total(),
            n_raters: 2,
            agreeing_pairs: 2 * (c.tp + c.tn),
            positives: 2 * c.tp + c.fp + c.fn_,
        }
    }

    pub fn add(&mut self, other: &Self) {
        debug_assert!(self.n_items == 0 || other.n_items == 0 || self.n_raters == other.n_raters);
        if self.n_items == 0 {
            self.n_raters = other.n_raters;
        }
        self.n_items += other.n_items;
        self.agreeing_pairs += other.agreeing_pairs;
        self.positives += other.positives;
    }

    fn observed(&self) -> f64 {
        let m = self.n_raters as f64;
        self.agreeing_pairs as f64 / (self.n_items as f64 * m * (m - 1.0))
    }

    fn prevalence(&self) -> f64 {
        self.positives as f64 / (self.n_items as f64 * self.n_raters as f64)
    }

    fn result(&self, coefficient: Coefficient, p_o: f64, p_e: f64) -> AgreementResult {
        AgreementResult {
            coefficient,
            value: chance_corrected(p_o, p_e),
            p_o,
            p_e,
            n_items: self.n_items as usize,
            n_raters: self.n_raters as usize,
            dropped_items: 0,
        }
    }

    /// Fleiss' κ: pooled class proportions.
    pub fn fleiss(&self) -> AgreementResult {
        let p_o = self.observed();
        let pi = self.prevalence();
        self.result(Coefficient::FleissKappa, p_o, pi * pi + (1.0 - pi) * (1.0 - pi))
    }

    /// Gwet's AC1 with two classes: `p_e = 2 π (1 - π)`.
    pub fn gwet_ac1(&self) -> AgreementResult {
        let p_o = self.observed();
        let pi = self.prevalence();
        self.result(Coefficient::GwetAc1, p_o, 2.0 * pi * (1.0 - pi))
    }

    /// Value of the requested multi-rater coefficient.
    pub fn value(&self, coefficient: Coefficient) -> Measure {
        match coefficient {
            Coefficient::GwetAc1 => self.gwet_ac1().value,
            _ => self.fleiss().value,
        }
    }
}

/// Which records a set-level coefficient pools over.
#[derive(Debug, Clone, Copy)]
pub enum RecordScope<'a> {
    All,
    Only(&'a [usize]),
}

impl RecordScope<'_> {
    fn records(&self, set: &AnnotationSet) -> Vec<usize> {
        match self {
            RecordScope::All => (0..set.n_records()).collect(),
            RecordScope::Only(r) => r.to_vec(),
        }
    }
}

fn require_raters(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::InsufficientRaters {
            required: 2,
            actual: n,
        })
    } else {
        Ok(())
    }
}

/// Sums over complete data; errors if any label in scope is missing.
pub fn agreement_sums(set: &AnnotationSet, scope: RecordScope<'_>) -> Result<AgreementSums> {
    require_raters(set.n_raters())?;
    let m = set.n_raters() as u64;
    let mut sums = AgreementSums {
        n_raters: m,
        ..Default::default()
    };
    for r in scope.records(set) {
        let tracks = set.record(r);
        if tracks.iter().any(BinaryAnnotation::has_missing) {
            return Err(Error::Unsupported(format!(
                "record `{}` has missing labels; Fleiss' kappa and Gwet's AC1 need complete data, use krippendorff_alpha",
                set.record_ids()[r]
            )));
        }
        for j in 0..set.record_len(r) {
            let pos = tracks.iter().filter(|a| a.labels()[j].is_positive()).count() as u64;
            sums.add(&AgreementSums::item(m, pos));
        }
    }
    Ok(sums)
}

pub fn cohen_kappa(a: &BinaryAnnotation, b: &BinaryAnnotation) -> Result<AgreementResult> {
    let c = crate::annotation::confusion(a, b)?;
    Ok(cohen_from_confusion(&c))
}

/// Cohen's κ with per-rater marginals.
pub fn cohen_from_confusion(c: &ConfusionCounts) -> AgreementResult {
    let n = c.total() as f64;
    let p_o = (c.tp + c.tn) as f64 / n;
    let a1 = c.actual_positives() as f64 / n;
    let b1 = c.predicted_positives() as f64 / n;
    let p_e = a1 * b1 + (1.0 - a1) * (1.0 - b1);
    AgreementResult {
        coefficient: Coefficient::CohenKappa,
        value: chance_corrected(p_o, p_e),
        p_o,
        p_e,
        n_items: c.total() as usize,
        n_raters: 2,
        dropped_items: 0,
    }
}

pub fn fleiss_kappa(set: &AnnotationSet, scope: RecordScope<'_>) -> Result<AgreementResult> {
    Ok(agreement_sums(set, scope)?.fleiss())
}

pub fn gwet_ac1(set: &AnnotationSet, scope: RecordScope<'_>) -> Result<AgreementResult> {
    Ok(agreement_sums(set, scope)?.gwet_ac1())
}

/// Krippendorff's α for nominal data via the coincidence matrix. Items with
/// fewer than two labels are dropped.
pub fn krippendorff_alpha(set: &AnnotationSet, scope: RecordScope<'_>) -> Result<AgreementResult> {
    require_raters(set.n_raters())?;
    // Coincidences o_00, o_11 and o_01 (= o_10).
    let (mut o00, mut o11, mut o01) = (0.0f64, 0.0f64, 0.0f64);
    let (mut kept, mut dropped) = (0usize, 0usize);
    for r in scope.records(set) {
        let tracks = set.record(r);
        for j in 0..set.record_len(r) {
            let (mut pos, mut neg) = (0u64, 0u64);
            for a in tracks {
                match a.labels()[j].value() {
                    Some(true) => pos += 1,
                    Some(false) => neg += 1,
                    None => {}
                }
            }
            let m = pos + neg;
            if m < 2 {
                dropped += 1;
                continue;
            }
            kept += 1;
            let w = 1.0 / (m - 1) as f64;
            o11 += (pos * pos.saturating_sub(1)) as f64 * w;
            o00 += (neg * neg.saturating_sub(1)) as f64 * w;
            o01 += (pos * neg) as f64 * w;
        }
    }
    if kept == 0 {
        return Ok(AgreementResult {
            coefficient: Coefficient::KrippendorffAlpha,
            value: Measure::Undefined(UndefinedReason::NoPairableItems),
            p_o: f64::NAN,
            p_e: f64::NAN,
            n_items: 0,
            n_raters: set.n_raters(),
            dropped_items: dropped,
        });
    }
    let n1 = o11 + o01;
    let n0 = o00 + o01;
    let n = n0 + n1;
    let p_o = (o00 + o11) / n;
    let p_e = (n0 * (n0 - 1.0) + n1 * (n1 - 1.0)) / (n * (n - 1.0));
    Ok(AgreementResult {
        coefficient: Coefficient::KrippendorffAlpha,
        value: chance_corrected(p_o, p_e),
        p_o,
        p_e,
        n_items: kept,
        n_raters: set.n_raters(),
        dropped_items: dropped,
    })
}

/// Compute a coefficient over a set. Cohen's κ needs exactly two raters.
pub fn compute(set: &AnnotationSet, coefficient: Coefficient, scope: RecordScope<'_>) -> Result<AgreementResult> {
    match coefficient {
        Coefficient::CohenKappa => {
            if set.n_raters() != 2 {
                return Err(Error::validation(
                    "coefficient",
                    format!("cohen_kappa compares exactly two raters, set has {}", set.n_raters()),
                ));
            }
            let mut c = ConfusionCounts::default();
            for r in scope.records(set) {
                let t = set.record(r);
                c += crate::annotation::confusion(&t[0], &t[1])?;
            }
            Ok(cohen_from_confusion(&c))
        }
        Coefficient::FleissKappa => fleiss_kappa(set, scope),
        Coefficient::GwetAc1 => gwet_ac1(set, scope),
        Coefficient::KrippendorffAlpha => krippendorff_alpha(set, scope),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::Label;

    fn set_of(rows: &[&[u8]]) -> AnnotationSet {
        AnnotationSet::new(
            rows.iter()
                .enumerate()
                .map(|(k, bits)| BinaryAnnotation::from_bits("rec", &format!("r{k}"), bits).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_raters_give_one() {
        let s = set_of(&[&[1, 0, 0, 1, 0], &[1, 0, 0, 1, 0], &[1, 0, 0, 1, 0]]);
        for c in [Coefficient::FleissKappa, Coefficient::GwetAc1, Coefficient::KrippendorffAlpha] {
            assert_eq!(compute(&s, c, RecordScope::All).unwrap().value, Measure::Defined(1.0));
        }
        let k = cohen_kappa(s.annotation(0, 0), s.annotation(0, 1)).unwrap();
        assert_eq!(k.value, Measure::Defined(1.0));
    }

    #[test]
    fn complement_gives_minus_one() {
        let a = BinaryAnnotation::from_bits("r", "a", &[1, 0, 1, 0]).unwrap();
        let k = cohen_kappa(&a, &a.complement()).unwrap();
        // p_o = 0, p_e = 0.5
        assert_eq!(k.p_o, 0.0);
        assert_eq!(k.p_e, 0.5);
        assert_eq!(k.value, Measure::Defined(-1.0));
    }

    #[test]
    fn ac1_total_disagreement_balanced() {
        let s = set_of(&[&[1, 0, 1, 0], &[0, 1, 0, 1]]);
        let r = gwet_ac1(&s, RecordScope::All).unwrap();
        assert_eq!(r.p_o, 0.0);
        assert_eq!(r.p_e, 0.5);
        assert_eq!(r.value, Measure::Defined(-1.0));
    }

    #[test]
    fn constant_labels_everywhere() {
        let s = set_of(&[&[0, 0, 0], &[0, 0, 0]]);
        for c in Coefficient::ALL {
            assert_eq!(compute(&s, c, RecordScope::All).unwrap().value, Measure::Defined(1.0));
        }
    }

    #[test]
    fn fleiss_known_value() {
        // Items: (2 of 3 positive), (3), (0), (1). Hand computation:
        // agreeing ordered pairs 2+6+6+2 = 16 of 4*6 = 24 -> p_o = 2/3,
        // positives 6 of 12 -> p_e = 0.5, kappa = 1/3.
        let s = set_of(&[&[1, 1, 0, 0], &[1, 1, 0, 1], &[0, 1, 0, 0]]);
        let r = fleiss_kappa(&s, RecordScope::All).unwrap();
        assert!((r.p_o - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.p_e - 0.5).abs() < 1e-12);
        assert!((r.value.unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fleiss_rejects_missing() {
        let s = AnnotationSet::new(vec![
            BinaryAnnotation::new("r", "a", vec![Label::Positive, Label::Missing], 1.0).unwrap(),
            BinaryAnnotation::from_bits("r", "b", &[1, 0]).unwrap(),
        ])
        .unwrap();
        let err = fleiss_kappa(&s, RecordScope::All).unwrap_err();
        assert!(err.to_string().contains("krippendorff"));
    }

    #[test]
    fn krippendorff_ignores_absent_rater() {
        // 10 items; rater 3 entirely missing.
        let a: &[u8] = &[1, 1, 0, 0, 1, 0, 1, 0, 0, 0];
        let b: &[u8] = &[1, 0, 0, 0, 1, 0, 1, 1, 0, 0];
        let two = set_of(&[a, b]);
        let three = AnnotationSet::new(vec![
            BinaryAnnotation::from_bits("rec", "r0", a).unwrap(),
            BinaryAnnotation::from_bits("rec", "r1", b).unwrap(),
            BinaryAnnotation::new("rec", "r2", vec![Label::Missing; 10], 1.0).unwrap(),
        ])
        .unwrap();
        let x = krippendorff_alpha(&two, RecordScope::All).unwrap();
        let y = krippendorff_alpha(&three, RecordScope::All).unwrap();
        assert_eq!(x.value, y.value);
        // Coincidence oracle: o00=10, o11=6, o01=o10=2, n0=12, n1=8, n=20.
        // alpha = 1 - (n-1) * (o01+o10) / (2 n0 n1) = 1 - 19*4/192
        let expected = 1.0 - 19.0 * 4.0 / 192.0;
        assert!((x.value.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn krippendorff_drops_single_label_items() {
        let s = AnnotationSet::new(vec![
            BinaryAnnotation::new("r", "a", vec![Label::Positive, Label::Missing, Label::Negative], 1.0).unwrap(),
            BinaryAnnotation::new("r", "b", vec![Label::Positive, Label::Positive, Label::Negative], 1.0).unwrap(),
        ])
        .unwrap();
        let r = krippendorff_alpha(&s, RecordScope::All).unwrap();
        assert_eq!(r.n_items, 2);
        assert_eq!(r.dropped_items, 1);

        let none = AnnotationSet::new(vec![
            BinaryAnnotation::new("r", "a", vec![Label::Positive, Label::Missing], 1.0).unwrap(),
            BinaryAnnotation::new("r", "b", vec![Label::Missing, Label::Negative], 1.0).unwrap(),
        ])
        .unwrap();
        assert_eq!(
            krippendorff_alpha(&none, RecordScope::All).unwrap().value,
            Measure::Undefined(UndefinedReason::NoPairableItems)
        );
    }

    #[test]
    fn sums_from_confusion_match_fleiss_on_two_raters() {
        let s = set_of(&[&[1, 1, 0, 0, 1, 0, 1], &[1, 0, 0, 1, 1, 0, 0]]);
        let direct = fleiss_kappa(&s, RecordScope::All).unwrap();
        let c = crate::annotation::confusion(s.annotation(0, 0), s.annotation(0, 1)).unwrap();
        let via = AgreementSums::from_confusion(&c).fleiss();
        assert_eq!(direct.value, via.value);
    }

    #[test]
    fn single_rater_rejected() {
        let s = set_of(&[&[1, 0]]);
        assert!(matches!(
            fleiss_kappa(&s, RecordScope::All),
            Err(Error::InsufficientRaters { .. })
        ));
    }
}
