use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::json;

use annoteval::agreement::{compute, AgreementResult, Coefficient, RecordScope};
use annoteval::annotation::{load_annotations, to_csv, to_json, AnnotationSet, Format};
use annoteval::config::{Config, Grid};
use annoteval::consensus::{build_consensus_with, sweep_to_csv, Strategy, TieBreak};
use annoteval::equivalence::{BootstrapConfig, Panel, PassRule, ResampleUnit, TestId, TestOptions};
use annoteval::experiments::{
    fig3_to_csv, ira_to_csv, outlier_csv, pass_rate_csv, run_consensus_study, run_expert_sweep,
    run_fig3_sweep, run_ira_collapse_study, run_outlier_study, weighted_accuracy, weighted_accuracy_csv,
    all_pass_baseline, GroupId, RaterKind, SweepOutcome,
};
use annoteval::metrics::{evaluate_pair, reports_to_csv, MetricReport, DEFAULT_METRICS};
use annoteval::synth::{flip_annotation, generate_ground_truth, generate_method_a};
use annoteval::{Error, ProbabilitySequence};

use crate::output::{digest_file, now, FileDigest, OutputDir, RunManifest, CONFIG_SNAPSHOT, MANIFEST_FILE};
use crate::svg::{line_chart, Series};
use crate::{
    core_exit_code, AgreementArgs, Cli, CliError, Command, EquivalenceArgs, EvaluateArgs, ExperimentArgs, GridArg,
    InputArgs, InputFormat, OutFormat, RerunArgs, RuleArg, SimulateArgs, Study, TieArg, UnitArg,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli, argv: Vec<String>) -> Result<u8> {
    match cli.command {
        Command::Simulate(a) => simulate(a, argv),
        Command::Evaluate(a) => evaluate(a, argv),
        Command::Agreement(a) => agreement(a, argv),
        Command::Equivalence(a) => equivalence(a, argv),
        Command::Experiment(a) => experiment(a, argv),
        Command::Rerun(a) => rerun(a),
    }
}

struct Session {
    out: OutputDir,
    manifest: RunManifest,
}

impl Session {
    fn start(command: &str, argv: Vec<String>, dir: &Path) -> Result<Self> {
        Ok(Self {
            out: OutputDir::create(dir)?,
            manifest: RunManifest {
                command_line: argv,
                command: command.to_owned(),
                toolkit_version: env!("CARGO_PKG_VERSION").to_owned(),
                root_seed: None,
                config: serde_json::Value::Null,
                started_at: now(),
                finished_at: String::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: digest_file(path)?,
        });
        Ok(())
    }

    fn snapshot(&mut self, cfg: &Config) -> Result<()> {
        self.manifest.config = serde_json::to_value(cfg).expect("config serializes");
        self.out.write(CONFIG_SNAPSHOT, cfg.to_toml_string().as_bytes())?;
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let path = self.out.finish(self.manifest)?;
        println!("manifest: {}", path.display());
        Ok(())
    }
}

fn load_set(input: &InputArgs) -> Result<AnnotationSet> {
    let format = match input.input_format {
        Some(InputFormat::Csv) => Format::Csv,
        Some(InputFormat::Json) => Format::Json,
        None => Format::from_path(&input.annotations).ok_or_else(|| {
            CliError::Usage(format!(
                "cannot infer the format of {}; pass --input-format csv|json",
                input.annotations.display()
            ))
        })?,
    };
    Ok(load_annotations(&input.annotations, format)?)
}

fn rater_indices(set: &AnnotationSet, ids: &[String]) -> Result<Vec<usize>> {
    Ok(ids.iter().map(|id| set.rater_index(id)).collect::<annoteval::Result<_>>()?)
}

fn report_formats(out: &crate::OutArgs) -> Result<Vec<OutFormat>> {
    let f = out.formats(&[OutFormat::Csv, OutFormat::Json]);
    if f.contains(&OutFormat::Svg) {
        return Err(CliError::Usage("svg output is only available for `experiment`".into()));
    }
    Ok(f)
}

fn ground_truth_csv(gt: &ProbabilitySequence) -> String {
    let mut s = String::with_capacity(gt.len() * 20 + 12);
    s.push_str("probability\n");
    for v in gt.values() {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}

fn write_set(session: &mut Session, stem: &str, set: &AnnotationSet, formats: &[OutFormat]) -> Result<()> {
    for f in formats {
        match f {
            OutFormat::Csv => session.out.write(&format!("{stem}.csv"), to_csv(set)?.as_bytes())?,
            OutFormat::Json => session.out.write(&format!("{stem}.json"), to_json(set)?.as_bytes())?,
            OutFormat::Svg => unreachable!("rejected earlier"),
        };
    }
    Ok(())
}

fn simulate(a: SimulateArgs, argv: Vec<String>) -> Result<u8> {
    let mut cfg = Config::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.override_seed(s);
        cfg.validate()?;
    }
    if cfg.profiles.is_empty() && cfg.flip.is_none() {
        return Err(Error::Validation {
            path: "profiles".into(),
            message: "the configuration defines neither rater profiles nor a [flip] section".into(),
        }
        .into());
    }
    let formats = a.out.formats(&[OutFormat::Csv]);
    if formats.contains(&OutFormat::Svg) {
        return Err(CliError::Usage("simulate writes csv or json annotations".into()));
    }
    let gt_cfg = cfg.ground_truth.resolve()?;

    let mut session = Session::start("simulate", argv, &a.out.out)?;
    session.input(&a.config)?;
    session.manifest.root_seed = Some(gt_cfg.seed);
    session.snapshot(&cfg)?;

    let gt = generate_ground_truth(&gt_cfg)?;
    session.out.write("ground_truth.csv", ground_truth_csv(&gt).as_bytes())?;
    if !cfg.profiles.is_empty() {
        let (_, set) = generate_method_a(&gt_cfg, &cfg.profiles)?;
        write_set(&mut session, "annotations", &set, &formats)?;
        println!(
            "method A: {} raters x {} samples (positive fraction of truth {:.4})",
            set.n_raters(),
            set.record_len(0),
            gt.threshold().iter().filter(|l| l.is_positive()).count() as f64 / gt.len() as f64
        );
    }
    if let Some(flip) = &cfg.flip {
        let o = flip_annotation(&gt, flip)?;
        let set = AnnotationSet::new(vec![o.reference.clone(), o.corrupted.clone()])?;
        write_set(&mut session, "flip_annotations", &set, &formats)?;
        session.out.write_json(
            "flip_summary.json",
            &json!({
                "n_false_negatives": o.n_false_negatives,
                "n_false_positives": o.n_false_positives,
                "variation": flip.variation,
            }),
        )?;
        println!(
            "method B: {} false negatives, {} false positives",
            o.n_false_negatives, o.n_false_positives
        );
    }
    session.finish()?;
    Ok(0)
}

fn evaluate(a: EvaluateArgs, argv: Vec<String>) -> Result<u8> {
    let formats = report_formats(&a.out)?;
    let set = load_set(&a.input)?;
    let metrics: Vec<&str> = if a.metrics.is_empty() {
        DEFAULT_METRICS.to_vec()
    } else {
        a.metrics.iter().map(String::as_str).collect()
    };
    let all: Vec<usize> = (0..set.n_raters()).collect();
    let mut reports: Vec<MetricReport> = Vec::new();
    let consensus = match a.reference.as_str() {
        "consensus-majority" => Some(Strategy::Majority),
        "consensus-unanimous" => Some(Strategy::Unanimous),
        _ => None,
    };
    if let Some(strategy) = consensus {
        let predicted = if a.predicted.is_empty() { all.clone() } else { rater_indices(&set, &a.predicted)? };
        let pool: Vec<usize> = if a.predicted.is_empty() {
            all.clone()
        } else {
            all.iter().copied().filter(|i| !predicted.contains(i)).collect()
        };
        if pool.len() < 2 {
            return Err(Error::InsufficientRaters {
                required: 2,
                actual: pool.len(),
            }
            .into());
        }
        let voters = set.select_raters(&pool)?;
        for (rec, rec_id) in set.record_ids().iter().enumerate() {
            let c = build_consensus_with(&voters, rec_id, strategy, TieBreak::Negative)?;
            let reference = c.to_annotation(set.record_period(rec))?;
            for &p in &predicted {
                reports.push(evaluate_pair(&reference, set.annotation(rec, p), &metrics, a.window_s)?);
            }
        }
    } else {
        let r = set.rater_index(&a.reference)?;
        let predicted = if a.predicted.is_empty() {
            all.iter().copied().filter(|&i| i != r).collect()
        } else {
            rater_indices(&set, &a.predicted)?
        };
        for rec in 0..set.n_records() {
            for &p in &predicted {
                reports.push(evaluate_pair(set.annotation(rec, r), set.annotation(rec, p), &metrics, a.window_s)?);
            }
        }
    }

    let mut session = Session::start("evaluate", argv, &a.out.out)?;
    session.input(&a.input.annotations)?;
    session.manifest.config = json!({ "reference": a.reference, "metrics": metrics, "window_s": a.window_s });
    for f in &formats {
        match f {
            OutFormat::Csv => session.out.write("metrics.csv", reports_to_csv(&reports).as_bytes())?,
            _ => session.out.write_json("metrics.json", &reports)?,
        };
    }
    for r in &reports {
        let cells: Vec<String> = r
            .metrics
            .iter()
            .map(|m| match (m.value, &m.reason) {
                (Some(v), _) => format!("{}={v:.4}", m.metric),
                (None, Some(reason)) => format!("{}=undefined ({reason})", m.metric),
                (None, None) => format!("{}=undefined", m.metric),
            })
            .collect();
        println!("{} {} vs {}: {}", r.record_id, r.predicted_rater, r.reference_rater, cells.join(", "));
    }
    session.finish()?;
    Ok(0)
}

fn agreement_csv(results: &[AgreementResult]) -> String {
    let mut s = String::from("coefficient,value,reason,p_o,p_e,n_items,n_raters,dropped_items\n");
    for r in results {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.coefficient.as_str(),
            r.value.value().map(|v| v.to_string()).unwrap_or_default(),
            r.value.reason().map(|x| x.as_str()).unwrap_or(""),
            r.p_o,
            r.p_e,
            r.n_items,
            r.n_raters,
            r.dropped_items
        ));
    }
    s
}

fn agreement(a: AgreementArgs, argv: Vec<String>) -> Result<u8> {
    let formats = report_formats(&a.out)?;
    let mut set = load_set(&a.input)?;
    if !a.raters.is_empty() {
        let idx = rater_indices(&set, &a.raters)?;
        set = set.select_raters(&idx)?;
    }
    let records: Vec<usize> = a
        .records
        .iter()
        .map(|r| set.record_index(r))
        .collect::<annoteval::Result<_>>()?;
    let scope = if records.is_empty() { RecordScope::All } else { RecordScope::Only(&records) };
    let coefficients: Vec<Coefficient> = if a.coefficient.is_empty() {
        Coefficient::ALL
            .into_iter()
            .filter(|&c| c != Coefficient::CohenKappa || set.n_raters() == 2)
            .collect()
    } else {
        a.coefficient.iter().map(|c| c.parse()).collect::<annoteval::Result<_>>()?
    };
    let results = coefficients
        .iter()
        .map(|&c| compute(&set, c, scope))
        .collect::<annoteval::Result<Vec<_>>>()?;

    let mut session = Session::start("agreement", argv, &a.out.out)?;
    session.input(&a.input.annotations)?;
    session.manifest.config = json!({ "coefficients": coefficients, "raters": a.raters, "records": a.records });
    for f in &formats {
        match f {
            OutFormat::Csv => session.out.write("agreement.csv", agreement_csv(&results).as_bytes())?,
            _ => session.out.write_json("agreement.json", &results)?,
        };
    }
    for r in &results {
        match r.value.value() {
            Some(v) => println!("{}: {v:.6} (p_o {:.6}, p_e {:.6})", r.coefficient.as_str(), r.p_o, r.p_e),
            None => println!("{}: undefined ({})", r.coefficient.as_str(), r.value.reason().unwrap().as_str()),
        }
    }
    session.finish()?;
    Ok(0)
}

fn bootstrap_settings(a: &EquivalenceArgs) -> Result<(BootstrapConfig, TestOptions)> {
    let (mut boot, mut options) = match &a.config {
        Some(p) => {
            let c = Config::load(p)?;
            (c.bootstrap, c.tests)
        }
        None => (BootstrapConfig::default(), TestOptions::default()),
    };
    let b = &a.bootstrap;
    if let Some(n) = b.iterations {
        boot.n_iterations = n;
    }
    if let Some(c) = b.confidence {
        boot.confidence = c;
    }
    if let Some(u) = b.resample_unit {
        boot.resample_unit = match u {
            UnitArg::Auto => ResampleUnit::Auto,
            UnitArg::Record => ResampleUnit::Record,
            UnitArg::Block => ResampleUnit::Block,
        };
    }
    if let Some(l) = b.block_length {
        boot.block_length_samples = l;
    }
    if let Some(s) = b.seed {
        boot.seed = s;
    }
    if let Some(r) = b.turing_rule {
        options.turing_rule = match r {
            RuleArg::NonInferior => PassRule::NonInferior,
            RuleArg::Outperform => PassRule::Outperform,
        };
    }
    if let Some(t) = b.consensus_tie {
        options.consensus_tie = match t {
            TieArg::Negative => TieBreak::Negative,
            TieArg::Positive => TieBreak::Positive,
        };
    }
    boot.validate()?;
    Ok((boot, options))
}

fn parse_tests(names: &[String]) -> Result<Vec<TestId>> {
    if names.iter().any(|n| n == "all") {
        return Ok(TestId::ALL.to_vec());
    }
    Ok(names.iter().map(|n| n.parse()).collect::<annoteval::Result<_>>()?)
}

fn equivalence(a: EquivalenceArgs, argv: Vec<String>) -> Result<u8> {
    let formats = report_formats(&a.out)?;
    let tests = parse_tests(&a.tests)?;
    let (boot, options) = bootstrap_settings(&a)?;
    for w in boot.warnings() {
        eprintln!("warning: {w}");
    }
    let set = load_set(&a.input)?;
    let ai = set.rater_index(&a.ai)?;
    let mut order: Vec<usize> = if a.humans.is_empty() {
        (0..set.n_raters()).filter(|&i| i != ai).collect()
    } else {
        let h = rater_indices(&set, &a.humans)?;
        if h.contains(&ai) {
            return Err(CliError::Usage(format!("`{}` is both the AI and a human rater", a.ai)));
        }
        h
    };
    order.push(ai);
    let panel_set = set.select_raters(&order)?;
    let panel = Panel::new(&panel_set, &boot, options)?;
    let results = panel.run(order.len() - 1, &tests);

    let mut session = Session::start("equivalence", argv, &a.out.out)?;
    session.input(&a.input.annotations)?;
    if let Some(p) = &a.config {
        session.input(p)?;
    }
    session.manifest.root_seed = Some(boot.seed);
    session.manifest.config = json!({ "bootstrap": boot, "options": options, "tests": tests, "ai": a.ai });

    let mut exit = 0u8;
    let mut entries = Vec::new();
    let mut csv = String::from("test_id,passed,error\n");
    for (t, r) in tests.iter().zip(&results) {
        match r {
            Ok(v) => {
                println!("{t}: {}", if v.passed { "PASS" } else { "FAIL" });
                csv.push_str(&format!("{t},{},\n", v.passed));
                entries.push(serde_json::to_value(v).expect("verdict serializes"));
            }
            Err(e) => {
                let code = core_exit_code(e);
                if exit == 0 {
                    exit = code;
                }
                println!("{t}: ERROR {e}");
                csv.push_str(&format!("{t},,\"{}\"\n", e.to_string().replace('"', "'")));
                entries.push(json!({ "test_id": t, "error": e.to_string(), "exit_code": code }));
            }
        }
    }
    for f in &formats {
        match f {
            OutFormat::Csv => session.out.write("verdicts.csv", csv.as_bytes())?,
            _ => session.out.write_json("verdicts.json", &entries)?,
        };
    }
    session.finish()?;
    Ok(exit)
}

fn experiment_config(a: &ExperimentArgs) -> Result<Config> {
    let mut cfg = match &a.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = a.seed {
        cfg.override_seed(s);
    }
    let sweep = &mut cfg.experiment.expert_sweep;
    if !a.group.is_empty() {
        let groups = a.group.iter().map(|g| g.parse()).collect::<annoteval::Result<Vec<GroupId>>>()?;
        if a.study == Study::Outlier {
            if groups.len() != 1 {
                return Err(CliError::Usage("the outlier study takes a single --group".into()));
            }
            cfg.experiment.outlier.group = groups[0];
        }
        sweep.groups = groups;
    }
    if let Some(g) = a.grid {
        sweep.grid = match g {
            GridArg::Standard => Grid::Standard,
            GridArg::Reduced => Grid::Reduced,
            GridArg::Smoke => Grid::Smoke,
        };
    }
    if a.reduced {
        sweep.grid = Grid::Reduced;
    }
    if a.full {
        sweep.grid = Grid::Standard;
        sweep.n_iterations = sweep.n_iterations.max(1000);
    }
    if let Some(r) = a.ratio {
        sweep.imbalanced_ratio = r;
    }
    if let Some(i) = a.iterations {
        sweep.n_iterations = i;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(a: ExperimentArgs, argv: Vec<String>) -> Result<u8> {
    let cfg = experiment_config(&a)?;
    let formats = a.out.formats(&[OutFormat::Csv, OutFormat::Json]);
    let csv = formats.contains(&OutFormat::Csv);
    let js = formats.contains(&OutFormat::Json);
    let svg = formats.contains(&OutFormat::Svg);
    let name = match a.study {
        Study::Fig3 => "fig3",
        Study::Consensus => "consensus",
        Study::IraCollapse => "ira-collapse",
        Study::ExpertSweep => "expert-sweep",
        Study::Outlier => "outlier",
    };
    let mut session = Session::start(&format!("experiment {name}"), argv, &a.out.out)?;
    if let Some(p) = &a.config {
        session.input(p)?;
    }
    session.snapshot(&cfg)?;
    let e = &cfg.experiment;
    let out = &mut session.out;
    match a.study {
        Study::Fig3 => {
            let rows = run_fig3_sweep(&e.fig3)?;
            if csv {
                out.write("fig3.csv", fig3_to_csv(&rows).as_bytes())?;
            }
            if js {
                out.write_json("fig3.json", &rows)?;
            }
            if svg {
                let col = |f: &dyn Fn(&annoteval::experiments::Fig3Row) -> Option<f64>| {
                    rows.iter().map(|r| (r.imbalance, f(r).unwrap_or(f64::NAN))).collect::<Vec<_>>()
                };
                let series = vec![
                    Series::new("AUC", col(&|r| r.auc)),
                    Series::new("MCC", col(&|r| r.mcc)),
                    Series::new("PCC", col(&|r| r.pcc)),
                    Series::new("PPV", col(&|r| r.ppv)),
                    Series::new("sensitivity", col(&|r| r.sensitivity)),
                    Series::new("specificity", col(&|r| r.specificity)),
                    Series::new("burden r", col(&|r| r.burden_correlation)),
                ];
                out.write("fig3.svg", line_chart("Metrics under class imbalance", "negatives per positive", "value", &series).as_bytes())?;
            }
            println!("imbalance  auc     mcc     ppv     fp/tp");
            for r in &rows {
                println!(
                    "{:>9}  {:.4}  {:.4}  {:.4}  {:.3}",
                    r.imbalance,
                    r.auc.unwrap_or(f64::NAN),
                    r.mcc.unwrap_or(f64::NAN),
                    r.ppv.unwrap_or(f64::NAN),
                    r.fp_tp_ratio.unwrap_or(f64::NAN)
                );
            }
        }
        Study::Consensus => {
            let study = run_consensus_study(&e.consensus)?;
            if csv {
                out.write("consensus_sweep.csv", sweep_to_csv(&study.rows).as_bytes())?;
                let mut a4 = String::from("imbalance,n_raters,kappa_target,kappa_achieved,data_loss\n");
                let mut b4 = String::from("imbalance,n_raters,kappa_target,kappa_achieved,total_agreement\n");
                for r in &study.rows {
                    a4.push_str(&format!("{},{},{},{},{}\n", r.imbalance, r.n_raters, r.kappa_target, r.kappa_achieved, r.data_loss));
                    b4.push_str(&format!(
                        "{},{},{},{},{}\n",
                        r.imbalance, r.n_raters, r.kappa_target, r.kappa_achieved, r.total_agreement
                    ));
                }
                out.write("fig4a.csv", a4.as_bytes())?;
                out.write("fig4b.csv", b4.as_bytes())?;
                let mut anchors = String::from(
                    "label,n_raters,kappa,imbalance,kappa_achieved,data_loss,total_agreement,curve_data_loss,curve_total_agreement,deviation_pp\n",
                );
                for c in &study.anchors {
                    anchors.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{}\n",
                        c.anchor.label,
                        c.anchor.n_raters,
                        c.anchor.kappa,
                        c.anchor.imbalance,
                        c.kappa_achieved,
                        c.data_loss,
                        c.total_agreement,
                        c.curve_data_loss,
                        c.curve_total_agreement,
                        c.deviation_pp()
                    ));
                }
                out.write("consensus_anchors.csv", anchors.as_bytes())?;
            }
            if js {
                out.write_json("consensus.json", &study)?;
            }
            if svg {
                let mut loss = Vec::new();
                let mut agree = Vec::new();
                for &imb in &e.consensus.imbalances {
                    for &n in &e.consensus.n_raters {
                        let pts: Vec<_> = study.rows.iter().filter(|r| r.n_raters == n && r.imbalance == imb).collect();
                        let label = format!("{n} raters, {imb}:1");
                        loss.push(Series::new(&label, pts.iter().map(|r| (r.kappa_achieved, 100.0 * r.data_loss)).collect()));
                        agree.push(Series::new(&label, pts.iter().map(|r| (r.kappa_achieved, 100.0 * r.total_agreement)).collect()));
                    }
                }
                out.write("fig4a.svg", line_chart("Unanimous consensus data loss", "Fleiss kappa", "% excluded", &loss).as_bytes())?;
                out.write("fig4b.svg", line_chart("Total agreement", "Fleiss kappa", "% samples", &agree).as_bytes())?;
            }
            println!("n_raters kappa  imbalance data_loss total_agreement");
            for r in &study.rows {
                println!(
                    "{:>8} {:.3} {:>9} {:>9.4} {:>15.4}",
                    r.n_raters, r.kappa_achieved, r.imbalance, r.data_loss, r.total_agreement
                );
            }
            for c in &study.anchors {
                println!("anchor {}: deviation from curve {:.2} pp", c.anchor.label, c.deviation_pp());
            }
        }
        Study::IraCollapse => {
            let rows = run_ira_collapse_study(&e.ira_collapse)?;
            if csv {
                out.write("ira_collapse.csv", ira_to_csv(&rows).as_bytes())?;
            }
            if js {
                out.write_json("ira_collapse.json", &rows)?;
            }
            if svg {
                let mut kappa = Vec::new();
                let mut ac1 = Vec::new();
                for &imb in &e.ira_collapse.imbalances {
                    let pts: Vec<_> = rows.iter().filter(|r| r.imbalance == imb).collect();
                    let label = format!("{imb}:1");
                    kappa.push(Series::new(&label, pts.iter().map(|r| (100.0 * r.flip_rate, r.cohen_kappa.unwrap_or(f64::NAN))).collect()));
                    ac1.push(Series::new(&label, pts.iter().map(|r| (100.0 * r.flip_rate, r.gwet_ac1.unwrap_or(f64::NAN))).collect()));
                }
                out.write("fig_a1a.svg", line_chart("Kappa metrics", "% positives flipped", "coefficient", &kappa).as_bytes())?;
                out.write("fig_a1b.svg", line_chart("Gwet's AC1", "% positives flipped", "coefficient", &ac1).as_bytes())?;
            }
            let infeasible = rows.iter().filter(|r| r.feasible_seeds < r.seed_count).count();
            println!("{} grid points, {infeasible} with infeasible seeds", rows.len());
        }
        Study::ExpertSweep => {
            let settings = e.expert_sweep.settings(&cfg.bootstrap, cfg.tests);
            let mut outcomes = Vec::new();
            for &g in &e.expert_sweep.groups {
                let spec = e.expert_sweep.group_spec(g);
                let o = run_expert_sweep(&spec, &settings)?;
                write_sweep(out, &o, "", csv, js, svg)?;
                outcomes.push(o);
            }
            if csv {
                out.write("weighted_accuracy.csv", weighted_accuracy_csv(&outcomes)?.as_bytes())?;
            }
            print_weighted_accuracy(&outcomes)?;
        }
        Study::Outlier => {
            let settings = e.expert_sweep.settings(&cfg.bootstrap, cfg.tests);
            let spec = e.expert_sweep.group_spec(e.outlier.group);
            let report = run_outlier_study(&spec, &e.outlier.outlier, &settings)?;
            write_sweep(out, &report.control, "control_", csv, js, svg)?;
            write_sweep(out, &report.with_outlier, "outlier_", csv, js, svg)?;
            if csv {
                out.write("outlier.csv", outlier_csv(&report).as_bytes())?;
            }
            if js {
                out.write_json("outlier.json", &report.rows)?;
            }
            println!("test_id                  non-expert pass rate: control -> outlier");
            for r in &report.rows {
                println!(
                    "{:<24} {:.4} -> {:.4} ({:+.2} pp)",
                    r.test_id.as_str(),
                    r.nonexpert_pass_rate_control.unwrap_or(f64::NAN),
                    r.nonexpert_pass_rate_outlier.unwrap_or(f64::NAN),
                    r.nonexpert_change_pp().unwrap_or(f64::NAN)
                );
            }
        }
    }
    session.finish()?;
    Ok(0)
}

fn write_sweep(out: &mut OutputDir, o: &SweepOutcome, prefix: &str, csv: bool, js: bool, svg: bool) -> Result<()> {
    let g = o.spec.group_id.as_str();
    if csv {
        out.write(&format!("{prefix}pass_rates_{g}.csv"), pass_rate_csv(o)?.as_bytes())?;
    }
    if js {
        out.write_json(&format!("{prefix}sweep_{g}.json"), o)?;
    }
    if svg {
        for (suffix, kind, title) in [
            ("a", RaterKind::Nonexpert, "non-experts passing"),
            ("b", RaterKind::Expert, "experts passing"),
        ] {
            let series = o
                .settings
                .tests
                .iter()
                .map(|&t| {
                    let pts = o
                        .spec
                        .expert_counts
                        .iter()
                        .map(|&e| (e as f64, 100.0 * o.pass_rate_at(kind, t, e).ok().flatten().unwrap_or(f64::NAN)))
                        .collect();
                    Series::new(t.as_str(), pts)
                })
                .collect::<Vec<_>>();
            out.write(
                &format!("{prefix}pass_rates_{g}_{suffix}.svg"),
                line_chart(&format!("{g}: {title}"), "number of experts", "% passing", &series).as_bytes(),
            )?;
        }
    }
    Ok(())
}

fn print_weighted_accuracy(outcomes: &[SweepOutcome]) -> Result<()> {
    let Some(first) = outcomes.first() else { return Ok(()) };
    print!("{:<24}", "test_id");
    for o in outcomes {
        print!(" {:>6}", o.spec.group_id.as_str());
    }
    println!();
    for &t in &first.settings.tests {
        print!("{:<24}", t.as_str());
        for o in outcomes {
            print!(" {:>6.3}", weighted_accuracy(o, t)?);
        }
        println!();
    }
    print!("{:<24}", "all-pass baseline");
    for o in outcomes {
        print!(" {:>6.3}", all_pass_baseline(&o.spec.expert_counts, o.spec.n_raters_total));
    }
    println!();
    Ok(())
}

fn rerun(a: RerunArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&a.manifest).map_err(|e| CliError::io(&a.manifest, e))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Core(Error::Schema(format!("{}: {e}", a.manifest.display()))))?;
    let dir = a.manifest.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let snapshot = dir.join(CONFIG_SNAPSHOT);
    for input in &manifest.inputs {
        let path = Path::new(&input.path);
        // The configuration is replaced by the snapshot, so only data inputs must match.
        if path.extension().is_some_and(|x| x == "toml") {
            continue;
        }
        if digest_file(path)? != input.sha256 {
            return Err(Error::Schema(format!("input {} changed since the recorded run", input.path)).into());
        }
    }
    let mut args: Vec<String> = Vec::with_capacity(manifest.command_line.len() + 4);
    let mut it = manifest.command_line.iter().cloned();
    args.push(it.next().unwrap_or_else(|| "annoteval".into()));
    let mut saw_config = false;
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--out" | "--seed" | "--config" => {
                it.next();
                if arg == "--config" {
                    saw_config = true;
                }
            }
            s if s.starts_with("--out=") || s.starts_with("--seed=") => {}
            s if s.starts_with("--config=") => saw_config = true,
            _ => args.push(arg),
        }
    }
    let needs_snapshot = saw_config || manifest.command == "simulate" || manifest.command.starts_with("experiment");
    if needs_snapshot && snapshot.exists() {
        args.push("--config".into());
        args.push(snapshot.display().to_string());
    }
    args.push("--out".into());
    args.push(a.out.display().to_string());
    if a.out.join(MANIFEST_FILE) == a.manifest {
        return Err(CliError::Usage("rerun output directory must differ from the recorded one".into()));
    }
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError::Usage(e.to_string()))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(CliError::Usage("a manifest cannot record a rerun".into()));
    }
    run(cli, args)
}
