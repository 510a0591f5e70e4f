//! CSV and JSON artifacts.
//!
//! Trace CSV header: `run_id,iter,f_estimate,grad_norm,error_metric,mu_0..mu_{c-1},shots_used`.
//! Sweep traces prepend `parameter,value`. Floats use 17 significant digits
//! in scientific notation; a missing error metric is an empty field.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use qthermo::optimize::IterationRecord;

use crate::error::{CliError, CliResult};
use crate::experiment::{Prepared, RunOutcome, RunResult, SweepResult};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

pub fn trace_header(num_charges: usize) -> Vec<String> {
    let mut h: Vec<String> = ["run_id", "iter", "f_estimate", "grad_norm", "error_metric"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..num_charges).map(|i| format!("mu_{i}")));
    h.push("shots_used".into());
    h
}

fn trace_row(run_id: usize, r: &IterationRecord) -> Vec<String> {
    let mut row = vec![
        run_id.to_string(),
        r.iter.to_string(),
        float(r.f_estimate),
        float(r.grad_norm),
        opt_float(r.error_metric),
    ];
    row.extend(r.mu.iter().map(|&m| float(m)));
    row.push(r.shots.to_string());
    row
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| CliError::Core(qthermo::Error::Resource(format!("csv encoding: {e}")));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Core(qthermo::Error::Resource(format!("csv encoding: {e}"))))
}

pub fn trace_csv(num_charges: usize, runs: &[RunOutcome]) -> CliResult<Vec<u8>> {
    let rows = runs.iter().flat_map(|run| {
        run.trace
            .iter()
            .flat_map(move |t| t.records.iter().map(move |r| trace_row(run.run_id, r)))
    });
    csv_bytes(&trace_header(num_charges), rows)
}

/// Mean and sample standard deviation per iteration across runs. Runs that
/// stopped early contribute their final record to later iterations.
pub fn aggregate_csv(runs: &[RunOutcome]) -> CliResult<Vec<u8>> {
    let traces: Vec<_> = runs.iter().filter_map(|r| r.trace.as_ref()).collect();
    let len = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
    let header: Vec<String> = [
        "iter",
        "runs_active",
        "f_estimate_mean",
        "f_estimate_std",
        "grad_norm_mean",
        "grad_norm_std",
        "error_metric_mean",
        "error_metric_std",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = (0..len).map(|i| {
        fn at(t: &qthermo::optimize::Trace, i: usize) -> &IterationRecord {
            &t.records[i.min(t.records.len() - 1)]
        }
        let active = traces.iter().filter(|t| i < t.records.len()).count();
        let f: Vec<f64> = traces.iter().map(|t| at(t, i).f_estimate).collect();
        let g: Vec<f64> = traces.iter().map(|t| at(t, i).grad_norm).collect();
        let e: Option<Vec<f64>> = traces.iter().map(|t| at(t, i).error_metric).collect();
        let (fm, fs) = mean_std(&f);
        let (gm, gs) = mean_std(&g);
        let (em, es) = match e {
            Some(e) => {
                let (m, s) = mean_std(&e);
                (float(m), float(s))
            }
            None => (String::new(), String::new()),
        };
        vec![i.to_string(), active.to_string(), float(fm), float(fs), float(gm), float(gs), em, es]
    });
    csv_bytes(&header, rows)
}

pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn sweep_trace_csv(result: &SweepResult) -> CliResult<Vec<u8>> {
    let c = result.prepared.model.system.num_charges();
    let mut header = vec!["parameter".to_string(), "value".to_string()];
    header.extend(trace_header(c));
    let name = result.sweep.parameter.name();
    let rows = result.points.iter().flat_map(|p| {
        p.runs.iter().flat_map(move |run| {
            run.trace.iter().flat_map(move |t| {
                t.records.iter().map(move |r| {
                    let mut row = vec![name.to_string(), float(p.value)];
                    row.extend(trace_row(run.run_id, r));
                    row
                })
            })
        })
    });
    csv_bytes(&header, rows)
}

pub fn sweep_summary_csv(result: &SweepResult) -> CliResult<Vec<u8>> {
    let header: Vec<String> = [
        "parameter",
        "value",
        "run_id",
        "status",
        "iterations",
        "final_output",
        "final_grad_norm",
        "final_error_metric",
        "exact_error_metric",
        "fidelity",
        "shots_used",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let name = result.sweep.parameter.name();
    let rows = result.points.iter().flat_map(|p| {
        p.runs.iter().map(move |run| {
            let mut row = vec![name.to_string(), float(p.value), run.run_id.to_string()];
            match &run.trace {
                Some(t) => row.extend([
                    if t.converged { "converged" } else { "not_converged" }.to_string(),
                    t.iterations().to_string(),
                    float(t.final_output()),
                    float(t.last().grad_norm),
                    opt_float(t.last().error_metric),
                    opt_float(run.exact_error_metric),
                    opt_float(run.fidelity),
                    t.total_shots().to_string(),
                ]),
                None => row.extend([
                    "rejected".to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]),
            }
            row
        })
    });
    csv_bytes(&header, rows)
}

fn run_json(run: &RunOutcome) -> Value {
    match &run.trace {
        Some(t) => json!({
            "run_id": run.run_id,
            "seed": run.seed,
            "converged": t.converged,
            "iterations": t.iterations(),
            "final_output": t.final_output(),
            "final_grad_norm": t.last().grad_norm,
            "final_error_metric": t.last().error_metric,
            "exact_error_metric": run.exact_error_metric,
            "final_mu": t.final_mu(),
            "shots_used": t.total_shots(),
            "fidelity": run.fidelity,
        }),
        None => json!({
            "run_id": run.run_id,
            "seed": run.seed,
            "converged": false,
            "rejected": run.rejection,
        }),
    }
}

fn header_json(command: &str, prep: &Prepared, first: Option<&RunOutcome>) -> Value {
    let trace = first.and_then(|r| r.trace.as_ref());
    json!({
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "command": command,
        "model": prep.model.system.label(),
        "num_qubits": prep.model.system.num_qubits(),
        "targets": prep.model.system.targets(),
        "variant": prep.variant.name(),
        "seed": prep.config.seed,
        "repetitions": prep.repetitions,
        "temperature": trace.map(|t| t.temperature),
        "smoothness_l": trace.map(|t| t.lipschitz),
        "eta": trace.map(|t| t.eta),
        "delta": trace.map(|t| t.delta),
        "reference_energy": prep.reference_energy,
        "oracle": prep.oracle.as_ref().map(|o| json!({
            "value": o.value,
            "upper_bound": if o.upper_bound.is_finite() { Some(o.upper_bound) } else { None },
            "mu_star": o.mu_star,
            "ground_multiplicity": o.ground_multiplicity,
            "low_confidence": o.low_confidence,
            "evaluations": o.evaluations,
        })),
        "config": serde_json::to_value(&prep.config).expect("config serializes"),
    })
}

pub fn run_summary(result: &RunResult) -> Value {
    let mut v = header_json("run", &result.prepared, result.runs.first());
    let obj = v.as_object_mut().expect("object");
    obj.insert(
        "converged".into(),
        json!(result.runs.iter().all(RunOutcome::converged)),
    );
    obj.insert("wall_time_s".into(), json!(result.wall_time));
    obj.insert(
        "runs".into(),
        Value::Array(result.runs.iter().map(run_json).collect()),
    );
    v
}

pub fn sweep_summary(result: &SweepResult) -> Value {
    let first = result.points.first().and_then(|p| p.runs.first());
    let mut v = header_json("sweep", &result.prepared, first);
    let obj = v.as_object_mut().expect("object");
    obj.insert("parameter".into(), json!(result.sweep.parameter.name()));
    obj.insert("wall_time_s".into(), json!(result.wall_time));
    let points: Vec<Value> = result
        .points
        .iter()
        .map(|p| {
            let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| mean_std(&xs).0);
            let mean_error = mean(p.runs.iter().filter_map(RunOutcome::final_error_metric).collect());
            let mean_exact = mean(p.runs.iter().filter_map(RunOutcome::exact_error_metric).collect());
            json!({
                "value": p.value,
                "converged": p.runs.iter().all(RunOutcome::converged),
                "mean_final_error_metric": mean_error,
                "mean_exact_error_metric": mean_exact,
                "runs": p.runs.iter().map(run_json).collect::<Vec<_>>(),
            })
        })
        .collect();
    obj.insert("points".into(), Value::Array(points));
    v
}

/// Files written by one command, kept in memory until every run has finished.
#[derive(Debug, Default)]
pub struct ArtifactSet {
    files: Vec<(String, Vec<u8>)>,
}

impl ArtifactSet {
    pub fn push(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn push_json(&mut self, name: impl Into<String>, value: &Value) {
        let mut text = serde_json::to_string_pretty(value).expect("json serializes");
        text.push('\n');
        self.push(name, text.into_bytes());
    }

    pub fn write(&self, dir: &Path, prefix: &str) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        self.files
            .iter()
            .map(|(name, bytes)| {
                let path = dir.join(format!("{prefix}{name}"));
                fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}

pub fn run_artifacts(result: &RunResult) -> CliResult<ArtifactSet> {
    let mut set = ArtifactSet::default();
    let c = result.prepared.model.system.num_charges();
    set.push("trace.csv", trace_csv(c, &result.runs)?);
    if result.runs.len() > 1 {
        set.push("aggregate.csv", aggregate_csv(&result.runs)?);
    }
    set.push_json("summary.json", &run_summary(result));
    Ok(set)
}

pub fn sweep_artifacts(result: &SweepResult) -> CliResult<ArtifactSet> {
    let mut set = ArtifactSet::default();
    set.push("sweep_trace.csv", sweep_trace_csv(result)?);
    set.push("sweep_summary.csv", sweep_summary_csv(result)?);
    set.push_json("summary.json", &sweep_summary(result));
    Ok(set)
}
