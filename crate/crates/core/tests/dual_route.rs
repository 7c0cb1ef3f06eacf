//! The equivalence panel works on cached count totals. These tests recompute
//! its margins the slow way, by materializing every bootstrap replicate as an
//! annotation set and calling the public metric and agreement functions.

use annoteval::agreement::{compute, Coefficient, RecordScope};
use annoteval::annotation::confusion;
use annoteval::consensus::{build_consensus_all, Strategy};
use annoteval::equivalence::{
    bootstrap_statistic, draw_units, quantile, resample_units, resampled_set, BootstrapConfig, EquivalenceVerdict,
    Panel, ResampleUnit, TestId, TestOptions,
};
use annoteval::metrics::{auc_from_confusion, mcc};
use annoteval::synth::{generate_method_a, GroundTruthConfig, RaterProfile};
use annoteval::{AnnotationSet, BinaryAnnotation, Measure, Result};

const TOL: f64 = 1e-12;

struct Fixture {
    set: AnnotationSet,
    ai: usize,
    humans: Vec<usize>,
    cfg: BootstrapConfig,
}

/// Two records of 1000 samples, five humans and one slightly biased AI.
fn fixture() -> Fixture {
    let profiles = [
        RaterProfile::new("h", 0.0, 0.12, 5),
        RaterProfile::new("ai", 0.08, 0.15, 1),
    ];
    let mut tracks = Vec::new();
    for (rec, seed) in [("rec_a", 11u64), ("rec_b", 12)] {
        let (_, s) = generate_method_a(&GroundTruthConfig::new(0.35, 1000, seed), &profiles).unwrap();
        tracks.extend(s.annotations().map(|a| a.clone().with_record_id(rec)));
    }
    let set = AnnotationSet::new(tracks).unwrap();
    let ai = set.n_raters() - 1;
    Fixture {
        humans: (0..ai).collect(),
        ai,
        cfg: BootstrapConfig {
            n_iterations: 200,
            confidence: 0.95,
            resample_unit: ResampleUnit::Block,
            block_length_samples: 200,
            seed: 99,
        },
        set,
    }
}

fn verdict(f: &Fixture, test: TestId) -> EquivalenceVerdict {
    let panel = Panel::new(&f.set, &f.cfg, TestOptions::default()).unwrap();
    panel.run_test(f.ai, test).unwrap()
}

fn close(name: &str, fast: f64, slow: f64) {
    assert!((fast - slow).abs() < TOL, "{name}: panel {fast} generic {slow}");
}

fn ai_tracks(set: &AnnotationSet, ai: usize) -> Vec<BinaryAnnotation> {
    (0..set.n_records()).map(|r| set.annotation(r, ai).clone()).collect()
}

fn fleiss(set: &AnnotationSet) -> Result<Measure> {
    Ok(compute(set, Coefficient::FleissKappa, RecordScope::All)?.value)
}

/// Mean over humans of κ(humans with that human replaced by the AI) − κ(humans).
fn mean_delta(f: &Fixture, set: &AnnotationSet) -> Result<Measure> {
    let humans = set.select_raters(&f.humans)?;
    let Some(base) = fleiss(&humans)?.value() else {
        return Ok(Measure::Undefined(annoteval::UndefinedReason::DegenerateMarginals));
    };
    let ai = ai_tracks(set, f.ai);
    let mut total = 0.0;
    for i in 0..humans.n_raters() {
        total += fleiss(&humans.replace_rater(i, &ai)?)?.value().unwrap() - base;
    }
    Ok(Measure::Defined(total / humans.n_raters() as f64))
}

#[test]
fn turing_average_margins_match_generic_bootstrap() {
    let f = fixture();
    let v = verdict(&f, TestId::TuringAverageKappa);
    let ci = bootstrap_statistic(&f.set, |s| mean_delta(&f, s), &f.cfg).unwrap();
    let m = &v.evidence.margins;
    close("mean_lower", m["mean_lower"], ci.lower);
    close("mean_point", m["mean_point"], ci.point);
    close("mean_upper", m["mean_upper"], ci.upper);
    assert_eq!(v.passed, ci.upper >= 0.0);
}

#[test]
fn consensus_margins_match_generic_bootstrap() {
    let f = fixture();
    let v = verdict(&f, TestId::IraVsConsensusKappa);
    let raters = bootstrap_statistic(&f.set, |s| fleiss(&s.select_raters(&f.humans)?), &f.cfg).unwrap();
    let ai_vs_consensus = |s: &AnnotationSet| -> Result<Measure> {
        let humans = s.select_raters(&f.humans)?;
        let cons = build_consensus_all(&humans, Strategy::Majority, TestOptions::default().consensus_tie)?;
        let mut pair = Vec::new();
        for (r, c) in cons.iter().enumerate() {
            let ai = s.annotation(r, f.ai);
            pair.push(BinaryAnnotation::new(ai.record_id(), "consensus", c.labels.clone(), ai.sample_period())?);
            pair.push(ai.clone());
        }
        fleiss(&AnnotationSet::new(pair)?)
    };
    let ai = bootstrap_statistic(&f.set, ai_vs_consensus, &f.cfg).unwrap();
    let m = &v.evidence.margins;
    close("raters_lower", m["raters_lower"], raters.lower);
    close("raters_upper", m["raters_upper"], raters.upper);
    close("ai_lower", m["ai_lower"], ai.lower);
    close("ai_upper", m["ai_upper"], ai.upper);
    assert_eq!(v.passed, ai.upper >= raters.lower);
}

fn pairwise_route(f: &Fixture, test: TestId, metric: impl Fn(&BinaryAnnotation, &BinaryAnnotation) -> f64) {
    let v = verdict(f, test);
    let (unit, spans) = resample_units(&f.set, &f.cfg);
    assert_eq!(unit, ResampleUnit::Block);
    assert_eq!(spans.len(), 10);

    // one record after concatenation keeps the metric a pooled statistic
    let score = |s: &AnnotationSet, pred: usize, reference: usize| {
        let join = |k: usize| {
            let labels = (0..s.n_records()).flat_map(|r| s.annotation(r, k).labels().to_vec()).collect();
            BinaryAnnotation::new("all", s.rater_ids()[k].clone(), labels, 1.0).unwrap()
        };
        metric(&join(reference), &join(pred))
    };
    let mut human_diffs = Vec::new();
    let mut ai_means = Vec::new();
    for i in 0..f.cfg.n_iterations {
        let b = resampled_set(&f.set, &spans, &draw_units(&f.cfg, i, spans.len())).unwrap();
        let mut total = 0.0;
        let mut n = 0;
        for &reference in &f.humans {
            let ai_score = score(&b, f.ai, reference);
            for &h1 in f.humans.iter().filter(|&&h| h != reference) {
                let s1 = score(&b, h1, reference);
                total += ai_score - s1;
                n += 1;
                for &h2 in f.humans.iter().filter(|&&h| h != reference && h != h1) {
                    human_diffs.push(s1 - score(&b, h2, reference));
                }
            }
        }
        ai_means.push(total / n as f64);
    }
    let delta = quantile(&mut human_diffs, 0.025);
    let ai_lower = quantile(&mut ai_means, 0.025);
    let m = &v.evidence.margins;
    close("delta", m["delta"], delta);
    close("ai_lower", m["ai_lower"], ai_lower);
    assert_eq!(v.passed, ai_lower >= delta);
}

#[test]
fn pairwise_mcc_margins_match_materialized_replicates() {
    pairwise_route(&fixture(), TestId::PairwiseMcc, |r, p| mcc(&confusion(r, p).unwrap()));
}

#[test]
fn pairwise_auc_margins_match_materialized_replicates() {
    pairwise_route(&fixture(), TestId::PairwiseAuc, |r, p| {
        auc_from_confusion(&confusion(r, p).unwrap()).value().unwrap()
    });
}

#[test]
fn block_resampling_keeps_record_lengths() {
    let f = fixture();
    let (_, spans) = resample_units(&f.set, &f.cfg);
    let b = resampled_set(&f.set, &spans, &draw_units(&f.cfg, 3, spans.len())).unwrap();
    assert_eq!(b.total_samples(), f.set.total_samples());
    assert_eq!(b.rater_ids(), f.set.rater_ids());
}
