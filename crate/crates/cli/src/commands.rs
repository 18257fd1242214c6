use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use dcheck_core::checklist::{
    expression_for, load_dataset, run_checklist, summary_table, ChecklistConfig, ChecklistReport, DataProvenance,
    FamilySetting, LoadedData, TestStatus,
};
use dcheck_core::dataset::{self, PreferenceTask, Schema, SplitDataset, PREFERENCE_TEMPLATE};
use dcheck_core::families::{FamilyConfig, PredictiveFamily};
use dcheck_core::filtering::{apply_filter, flag_suspect_labels, read_pvi_csv, write_pvi_csv, FilterMode, FilterSpec, PviMap};
use dcheck_core::info::{Estimator, Expression, ExpressionKind, PredictorCache};
use serde_json::{json, Value};

use crate::output::{self, file_stem, histogram_csv, pvi_stats, OutputDir};
use crate::{
    AtStage, DataArgs, FilterArgs, PviArgs, ReportArgs, ReportFormat, RunArgs, Stage, StageError, EXIT_ERROR,
    EXIT_FAIL, EXIT_PASS,
};

type CmdResult = Result<i32, StageError>;

struct Prepared {
    cfg: ChecklistConfig,
    family: FamilyConfig,
    data: LoadedData,
    split: SplitDataset,
    estimator: Estimator,
}

fn prepare(config: Option<&Path>, args: &DataArgs) -> Result<Prepared, StageError> {
    let mut cfg = match config {
        Some(path) => ChecklistConfig::load(path).at(Stage::Config)?,
        None => ChecklistConfig::default(),
    };
    if let Some(name) = &args.family {
        cfg.family = FamilySetting::Name(name.clone());
    }
    if let Some(cmd) = &args.adapter_cmd {
        let passthrough = match cfg.family.resolve() {
            Ok(FamilyConfig::External { config, .. }) => config,
            _ => Value::Null,
        };
        cfg.family = FamilySetting::Config(FamilyConfig::External {
            adapter_cmd: Some(cmd.clone()),
            config: passthrough,
        });
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.split.seed = seed;
    }
    if let Some(schema) = args.schema {
        cfg.data.schema = Some(schema.into());
    }
    let family = cfg.family.resolve().at(Stage::Config)?;

    let data = load_dataset(&args.data, &cfg.data).at(Stage::Data)?;
    let eval = args
        .eval
        .as_deref()
        .map(|p| load_dataset(p, &cfg.data))
        .transpose()
        .at(Stage::Data)?;
    let split = data.split(&cfg.split, eval.as_ref()).at(Stage::Data)?;

    let mut estimator = Estimator::new(PredictiveFamily::new(family.clone()).at(Stage::Family)?)
        .with_layout(data.layout.clone())
        .with_tokenizer(cfg.tokenizer)
        .with_seed(cfg.seed);
    if let Some(dir) = &args.cache {
        estimator = estimator.with_cache(PredictorCache::new(dir));
    }
    Ok(Prepared {
        cfg,
        family,
        data,
        split,
        estimator,
    })
}

fn shutdown(p: &Prepared) {
    if let Some(client) = p.estimator.family().adapter() {
        let _ = client.shutdown();
    }
}

fn provenance(args: &DataArgs, split: &SplitDataset) -> DataProvenance {
    DataProvenance::new(
        args.data.display().to_string(),
        args.eval.as_ref().map(|p| p.display().to_string()),
        split,
    )
}

pub fn cmd_run(args: &RunArgs) -> CmdResult {
    let p = prepare(Some(&args.config), &args.data)?;
    let result = run_prepared(args, &p);
    shutdown(&p);
    result
}

fn run_prepared(args: &RunArgs, p: &Prepared) -> CmdResult {
    let specs = p.cfg.test_specs().at(Stage::Config)?;
    let run = run_checklist(&specs, &p.estimator, &p.split).at(Stage::Estimation)?;

    let template = (p.data.schema == Schema::Preference && p.cfg.data.task == PreferenceTask::PreferenceModeling)
        .then(|| PREFERENCE_TEMPLATE.to_string());
    let config = serde_json::to_value(&p.cfg).at(Stage::Output)?;
    let report = ChecklistReport::new(
        &run,
        p.family.clone(),
        p.cfg.tokenizer,
        p.data.layout.clone(),
        template,
        provenance(&args.data, &p.split),
        config,
    );

    let summary = summary_table(&run.results);
    (|| -> anyhow::Result<()> {
        let mut out = OutputDir::create(&args.data.out, "run")?;
        out.json("config.json", &p.cfg)?;
        out.json("report.json", &report)?;
        let mut stems = BTreeSet::new();
        for r in run.results.iter().filter(|r| r.status != TestStatus::Error) {
            let stem = file_stem(&r.spec.test_id);
            if !stems.insert(stem.clone()) {
                return Err(anyhow!("test ids collide as file name `{stem}`"));
            }
            let rel = format!("pvi/{stem}.csv");
            write_pvi_csv(&out.path(&rel)?, &r.pvi_records)?;
            out.record(&rel)?;
        }
        out.bytes("summary.txt", summary.as_bytes())?;
        out.volatile_json("timings.json", &run.timings)?;
        out.finish()
    })()
    .at(Stage::Output)?;

    print!("{summary}");
    let (failed, errored) = (run.count(TestStatus::Fail), run.count(TestStatus::Error));
    println!("{} passed, {failed} failed, {errored} errored", run.count(TestStatus::Pass));
    for r in run.results.iter().filter(|r| r.status == TestStatus::Error) {
        eprintln!("dcheck: test `{}` errored: {}", r.spec.test_id, r.error.as_deref().unwrap_or("unknown error"));
    }
    Ok(if errored > 0 && args.strict {
        EXIT_ERROR
    } else if failed + errored > 0 {
        EXIT_FAIL
    } else {
        EXIT_PASS
    })
}

fn parse_kind(name: &str) -> anyhow::Result<ExpressionKind> {
    serde_json::from_value(Value::String(name.into())).map_err(|_| anyhow!("unknown expression kind `{name}`"))
}

pub fn cmd_pvi(args: &PviArgs) -> CmdResult {
    let p = prepare(args.config.as_deref(), &args.data)?;
    let result = pvi_prepared(args, &p);
    shutdown(&p);
    result
}

fn pvi_prepared(args: &PviArgs, p: &Prepared) -> CmdResult {
    let selection = p.cfg.pvi.clone().unwrap_or_default();
    let from_test = |id: &str| -> anyhow::Result<(String, ExpressionKind, Option<_>)> {
        let specs = p.cfg.test_specs()?;
        let spec = specs
            .into_iter()
            .find(|s| s.test_id == id)
            .ok_or_else(|| anyhow!("no test `{id}` in the checklist"))?;
        Ok((spec.test_id, expression_for(spec.test_type).0, spec.feature))
    };
    let chosen = if let Some(id) = &args.test {
        from_test(id)
    } else if let Some(kind) = &args.expression {
        parse_kind(kind).map(|k| (k.as_str().to_string(), k, selection.feature.clone()))
    } else if let Some(id) = &selection.test {
        from_test(id)
    } else {
        let k = selection.expression.unwrap_or(ExpressionKind::Standard);
        Ok((k.as_str().to_string(), k, selection.feature.clone()))
    };
    let (label, kind, feature) = chosen.at(Stage::Config)?;
    let feature = feature.map(|f| p.estimator.feature(f)).transpose().at(Stage::Config)?;
    let expr = Expression::new(kind, feature).at(Stage::Config)?;
    let est = p.estimator.estimate(&expr, &p.split).at(Stage::Estimation)?;

    let values: Vec<f64> = est.pvi_records.iter().map(|(_, v)| *v).collect();
    let stats = pvi_stats(&values);
    let summary = json!({
        "selection": label,
        "expression_kind": kind,
        "formula": kind.formula(),
        "estimate_bits": est.value_bits,
        "base_entropy_bits": est.base_entropy_bits,
        "cond_entropy_bits": est.cond_entropy_bits,
        "model_keys": [est.null_model_key, est.cond_model_key],
        "data": provenance(&args.data, &p.split),
        "stats": stats,
    });
    let bins = args.bins.unwrap_or(selection.bins);
    let suspects = match args.flag {
        Some(k) => {
            let ids: Vec<&str> = p.split.eval.iter().map(|i| i.id.as_str()).collect();
            let map: PviMap = est.pvi_records.iter().cloned().collect();
            Some(flag_suspect_labels(&ids, &map, k).at(Stage::Estimation)?)
        }
        None => None,
    };
    (|| -> anyhow::Result<()> {
        let mut out = OutputDir::create(&args.data.out, "pvi")?;
        out.json("config.json", &p.cfg)?;
        write_pvi_csv(&out.path("pvi.csv")?, &est.pvi_records)?;
        out.record("pvi.csv")?;
        out.json("summary.json", &summary)?;
        out.bytes("histogram.csv", histogram_csv(&values, bins).as_bytes())?;
        if let Some(suspects) = &suspects {
            let rel = "suspects.csv";
            let mut w = csv::Writer::from_path(out.path(rel)?)?;
            w.write_record(["id", "pvi_bits", "input", "output"])?;
            for (id, pvi) in suspects {
                let inst = p.split.eval.iter().find(|i| &i.id == id).expect("suspects come from the eval split");
                w.write_record([id.as_str(), &pvi.to_string(), &inst.input_text, &inst.output_text])?;
            }
            w.flush()?;
            drop(w);
            out.record(rel)?;
        }
        out.finish()
    })()
    .at(Stage::Output)?;
    println!("{label}: {:.4} bits over {} eval instances", est.value_bits, values.len());
    Ok(EXIT_PASS)
}

fn parse_mode(name: &str) -> anyhow::Result<FilterMode> {
    serde_json::from_value(Value::String(name.into())).map_err(|_| anyhow!("unknown filter mode `{name}`"))
}

fn filter_spec(args: &FilterArgs) -> anyhow::Result<FilterSpec> {
    let mut spec = if let Some(path) = &args.spec {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        FilterSpec::parse(&text, &path.display().to_string())?
    } else {
        let kind = args.kind.as_deref().ok_or_else(|| anyhow!("give --spec or --kind"))?;
        let mode = || parse_mode(args.mode.as_deref().unwrap_or("remove_below"));
        match kind {
            "pvi_threshold" => FilterSpec::PviThreshold {
                source_test_id: None,
                mode: mode()?,
                threshold: args.threshold.ok_or_else(|| anyhow!("pvi_threshold needs --threshold"))?,
            },
            "pvi_percentile" => FilterSpec::PviPercentile {
                source_test_id: None,
                mode: mode()?,
                percentile: args.percentile.ok_or_else(|| anyhow!("pvi_percentile needs --percentile"))?,
            },
            "length_ratio" => FilterSpec::LengthRatio {
                ratio: args.ratio.ok_or_else(|| anyhow!("length_ratio needs --ratio"))?,
            },
            other => return Err(anyhow!("unknown filter kind `{other}`")),
        }
    };
    if let Some(test) = &args.source_test {
        match &mut spec {
            FilterSpec::PviThreshold { source_test_id, .. } | FilterSpec::PviPercentile { source_test_id, .. } => {
                *source_test_id = Some(test.clone());
            }
            FilterSpec::LengthRatio { .. } => {}
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_filter(args: &FilterArgs) -> CmdResult {
    let spec = filter_spec(args).at(Stage::Config)?;
    let schema = match args.schema {
        Some(s) => s.into(),
        None => Schema::detect(&args.data).at(Stage::Data)?,
    };
    let records = dataset::load_jsonl(&args.data, schema).at(Stage::Data)?;
    let pvis = if spec.needs_pvi() {
        let path = args.pvi.as_deref().ok_or_else(|| anyhow!("PVI filters need --pvi")).at(Stage::Config)?;
        let path = if path.is_dir() {
            let test = spec
                .source_test_id()
                .ok_or_else(|| anyhow!("--pvi is a directory; name the test with --source-test"))
                .at(Stage::Config)?;
            path.join("pvi").join(format!("{}.csv", file_stem(test)))
        } else {
            path.to_path_buf()
        };
        Some(read_pvi_csv(&path).at(Stage::Data)?)
    } else {
        None
    };
    let (kept, manifest) = apply_filter(&spec, &records, pvis.as_ref()).at(Stage::Filter)?;
    (|| -> anyhow::Result<()> {
        let mut out = OutputDir::create(&args.out, "filter")?;
        kept.write_jsonl(&out.path("filtered.jsonl")?)?;
        out.record("filtered.jsonl")?;
        out.json("removal_manifest.json", &manifest)?;
        out.finish()
    })()
    .at(Stage::Output)?;
    println!("kept {}, removed {}", manifest.kept_count, manifest.removed_count);
    Ok(EXIT_PASS)
}

pub fn cmd_report(args: &ReportArgs) -> CmdResult {
    output::verify(&args.out).at(Stage::Report)?;
    let path = args.out.join("report.json");
    let report: ChecklistReport = fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))
        .and_then(|t| serde_json::from_str(&t).with_context(|| format!("parsing {}", path.display())))
        .at(Stage::Report)?;
    match args.format {
        ReportFormat::Text => {
            print!("{}", summary_table(&report.results));
            let s = &report.summary;
            println!("{} passed, {} failed, {} errored", s.passed, s.failed, s.errored);
        }
        ReportFormat::Csv => {
            println!("test,type,feature,estimate_bits,epsilon,verdict");
            for r in &report.results {
                println!(
                    "{},{},{},{},{},{}",
                    r.spec.test_id,
                    r.spec.test_type.as_str(),
                    r.spec.feature.as_ref().map_or("", |f| f.kind.as_str()),
                    r.estimate_bits.map_or(String::new(), |e| e.to_string()),
                    r.spec.epsilon,
                    r.status.as_str()
                );
            }
        }
        ReportFormat::Json => {
            let text = serde_json::to_string_pretty(&report.summary).at(Stage::Report)?;
            println!("{text}");
        }
    }
    Ok(EXIT_PASS)
}
