//! `score`: per-instance metrics, aggregate tables and error curves.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use calconf_core::environment::EpisodeTrace;
use calconf_core::metrics::{aggregate, instance_metrics, AggregateReport, MetricsReport, CHECKPOINTS};
use calconf_core::ConflictDataset;
use plotters::prelude::*;
use serde::Serialize;

use crate::config::{required, ScoreConfig};
use crate::data::DataDir;
use crate::error::{Classify, CliError, CliResult};
use crate::layout;
use crate::manifest::{write_atomic, write_json, Manifest, MANIFEST_FILE};

/// A trace file together with the name it is reported under.
pub struct LoadedTrace {
    pub rel: String,
    pub trace: EpisodeTrace,
}

/// Traces from a single file, a `run` output directory (digest-checked
/// against its manifest) or, failing that, every `*.jsonl` in the directory
/// or its `traces/` subdirectory.
pub fn load_traces(dir: &Path) -> anyhow::Result<(Vec<LoadedTrace>, Option<String>)> {
    let mut out = Vec::new();
    if dir.is_file() {
        let file = std::fs::File::open(dir).with_context(|| format!("opening {}", dir.display()))?;
        let trace = EpisodeTrace::read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", dir.display()))?;
        out.push(LoadedTrace {
            rel: dir.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            trace,
        });
        return Ok((out, None));
    }
    if dir.join(MANIFEST_FILE).exists() {
        let manifest = Manifest::load(dir)?;
        if manifest.kind != "run" {
            bail!("{} holds a {:?} manifest, not a run", dir.display(), manifest.kind);
        }
        for rel in manifest.files.keys().filter(|k| k.ends_with(".jsonl") && k.starts_with(layout::TRACE_DIR)) {
            let bytes = manifest.read_verified(dir, rel)?;
            let trace = EpisodeTrace::read_jsonl(BufReader::new(&bytes[..])).with_context(|| format!("reading {rel}"))?;
            out.push(LoadedTrace { rel: rel.clone(), trace });
        }
        return Ok((out, Some(Manifest::digest_of(dir)?)));
    }
    let sub = dir.join(layout::TRACE_DIR);
    let scan = if sub.is_dir() { sub } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&scan)
        .with_context(|| format!("listing {}", scan.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl") && !p.to_string_lossy().ends_with(".requests.jsonl"))
        .collect();
    paths.sort();
    for p in paths {
        let file = std::fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
        let trace = EpisodeTrace::read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", p.display()))?;
        out.push(LoadedTrace {
            rel: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            trace,
        });
    }
    Ok((out, None))
}

/// Truth for one trace, refusing traces produced on a different dataset.
pub fn truth_for(data: &DataDir, trace: &EpisodeTrace) -> anyhow::Result<ConflictDataset> {
    let user = &trace.header.user_id;
    let truth = data.truth(user).with_context(|| format!("no truth for user {user}"))?;
    if truth.dataset_digest != trace.header.dataset_digest {
        bail!(
            "trace for {user} was produced on dataset {} but the truth file belongs to {}",
            trace.header.dataset_digest,
            truth.dataset_digest
        );
    }
    let ds = data.dataset(user)?;
    if trace.header.n_rounds > ds.n() {
        bail!("trace for {user} claims {} rounds, dataset has {}", trace.header.n_rounds, ds.n());
    }
    Ok(ds.truncated(trace.header.n_rounds))
}

#[derive(Debug, Clone, Default)]
pub struct ScoreSummary {
    pub out: PathBuf,
    pub scored: usize,
    pub skipped: Vec<(String, String)>,
    pub aggregates: BTreeMap<String, AggregateReport>,
}

#[derive(Serialize)]
struct InstanceRow<'a> {
    agent: &'a str,
    user_id: &'a str,
    rollout_id: &'a str,
    n_rounds: usize,
    invalid_rounds: usize,
    aer: f64,
    avg_ord: Option<f64>,
    err: f64,
    q1_error: f64,
    q4_error: f64,
}

#[derive(Serialize)]
struct RoundRow<'a> {
    agent: &'a str,
    user_id: &'a str,
    rollout_id: &'a str,
    round_index: usize,
    round_id: &'a str,
    valid: bool,
    correct: u8,
    ord: Option<f64>,
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| anyhow!("{e}"))
}

fn serialize_csv<T: Serialize>(rows: &[T]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| anyhow!("{e}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Table-style summary: one row per agent, mean prefix AER at each checkpoint.
pub fn aggregate_table(aggs: &BTreeMap<String, AggregateReport>) -> anyhow::Result<Vec<u8>> {
    let mut header = vec!["agent".to_string(), "instances".into(), "total_rounds".into()];
    header.extend(CHECKPOINTS.iter().map(|n| format!("aer_n{n}")));
    header.extend(["aer".into(), "avg_ord".into(), "err".into()]);
    let rows = aggs.iter().map(|(agent, a)| {
        let mut row = vec![agent.clone(), a.n_instances.to_string(), a.total_rounds.to_string()];
        row.extend(CHECKPOINTS.iter().map(|n| opt(a.checkpoints.iter().find(|c| c.n == *n).map(|c| c.aer))));
        row.extend([a.mean_aer.to_string(), opt(a.mean_avg_ord), a.mean_err.to_string()]);
        row
    });
    csv_bytes(&header.iter().map(String::as_str).collect::<Vec<_>>(), rows)
}

/// Cumulative error (prefix AER) against decision rounds, one line per agent.
pub fn error_curve_svg(aggs: &BTreeMap<String, AggregateReport>) -> anyhow::Result<String> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (900, 540)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
        let max_n = aggs.values().map(|a| a.error_curve.len()).max().unwrap_or(1).max(2);
        let mut chart = ChartBuilder::on(&root)
            .caption("Error vs. decision rounds", ("sans-serif", 22))
            .margin(16)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(1f64..max_n as f64, 0f64..1f64)
            .map_err(|e| anyhow!("{e}"))?;
        chart
            .configure_mesh()
            .x_desc("rounds N")
            .y_desc("AER over the first N rounds")
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
        for (i, (agent, a)) in aggs.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            let mut sum = 0.0;
            let points: Vec<(f64, f64)> = a
                .error_curve
                .iter()
                .enumerate()
                .map(|(t, e)| {
                    sum += e;
                    ((t + 1) as f64, sum / (t + 1) as f64)
                })
                .collect();
            chart
                .draw_series(LineSeries::new(points, color.stroke_width(2)))
                .map_err(|e| anyhow!("{e}"))?
                .label(agent.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
        root.present().map_err(|e| anyhow!("{e}"))?;
    }
    Ok(svg)
}

pub fn score(cfg: &ScoreConfig) -> CliResult<ScoreSummary> {
    let traces_dir = required(&cfg.traces, "traces").usage_err()?;
    let data_root = required(&cfg.data, "data").usage_err()?;
    let out = required(&cfg.out, "out").usage_err()?;
    let data = DataDir::open(&data_root).data_err()?;
    let (traces, traces_manifest) = load_traces(&traces_dir).data_err()?;
    if traces.is_empty() {
        return Err(CliError::data(anyhow!("no traces found in {}", traces_dir.display())));
    }

    let mut summary = ScoreSummary {
        out: out.clone(),
        ..ScoreSummary::default()
    };
    let mut reports: Vec<(String, String, MetricsReport)> = Vec::new();
    for LoadedTrace { rel, trace } in &traces {
        if !trace.is_complete() {
            summary.skipped.push((rel.clone(), "trace is incomplete".into()));
            continue;
        }
        let ds = truth_for(&data, trace).with_context(|| format!("scoring {rel}")).data_err()?;
        let report = instance_metrics(trace, &ds).with_context(|| format!("scoring {rel}")).data_err()?;
        let stem = rel.rsplit('/').next().unwrap_or(rel).trim_end_matches(".jsonl").to_string();
        reports.push((stem, trace.header.agent.clone(), report));
    }
    summary.scored = reports.len();

    let mut manifest = Manifest::new("score", None, serde_json::json!({}));
    manifest.inputs.insert("data".into(), data.manifest_digest.clone());
    if let Some(d) = traces_manifest {
        manifest.inputs.insert("traces".into(), d);
    }
    let mut by_agent: BTreeMap<String, Vec<MetricsReport>> = BTreeMap::new();
    let mut instance_rows = Vec::new();
    let mut round_rows = Vec::new();
    for (stem, agent, r) in &reports {
        let path = out.join(format!("reports/{stem}.json"));
        write_json(&path, r).data_err()?;
        manifest.record(&out, &path).data_err()?;
        instance_rows.push(InstanceRow {
            agent,
            user_id: &r.user_id,
            rollout_id: &r.rollout_id,
            n_rounds: r.n_rounds,
            invalid_rounds: r.invalid_rounds,
            aer: r.aer,
            avg_ord: r.avg_ord,
            err: r.err,
            q1_error: r.quarter_errors.q1,
            q4_error: r.quarter_errors.q4,
        });
        round_rows.extend(r.per_round.iter().map(|m| RoundRow {
            agent,
            user_id: &r.user_id,
            rollout_id: &r.rollout_id,
            round_index: m.round_index,
            round_id: &m.round_id,
            valid: m.valid,
            correct: m.correct,
            ord: m.ord,
        }));
        by_agent.entry(agent.clone()).or_default().push(r.clone());
    }
    for (agent, rs) in &by_agent {
        summary.aggregates.insert(agent.clone(), aggregate(rs).data_err()?);
    }
    let mut put = |rel: &str, bytes: &[u8]| -> CliResult<()> {
        let path = out.join(rel);
        write_atomic(&path, bytes).data_err()?;
        manifest.record(&out, &path).data_err()
    };

    put("instances.csv", &serialize_csv(&instance_rows).data_err()?)?;
    put("per_round.csv", &serialize_csv(&round_rows).data_err()?)?;
    let mut agg_json = serde_json::to_vec_pretty(&summary.aggregates).data_err()?;
    agg_json.push(b'\n');
    put("aggregate.json", &agg_json)?;
    put("aggregate.csv", &aggregate_table(&summary.aggregates).data_err()?)?;
    put("error_curve.svg", error_curve_svg(&summary.aggregates).data_err()?.as_bytes())?;
    manifest.write(&out).data_err()?;
    Ok(summary)
}
