//! CSV tables. Every subcommand has a fixed column set; wall-clock timings go
//! to their own table so that result tables are reproducible byte for byte.

use std::io::Write;

use anyhow::Result;
use pkd::stats::mean_ci;

use crate::pipeline::RunReport;

/// Columns of `run` results, in order.
pub const RUN_COLUMNS: [&str; 30] = [
    "generator",
    "task_generator",
    "n_dims",
    "n_workers",
    "n_tasks",
    "epsilon",
    "tau",
    "threshold",
    "l_bins",
    "depth_h",
    "key_bits",
    "subvolume_ratio",
    "task_weight_bits",
    "mock_crypto",
    "seed",
    "quality",
    "quality_raw",
    "precision_pir",
    "precision_spam",
    "recall",
    "max_tasks",
    "buckets",
    "bucket_bytes",
    "msg_to_platform",
    "msg_by_platform",
    "msg_per_worker_avg",
    "skipped_medians",
    "mse_raw",
    "mse_post",
    "messages_reconciled",
];

pub const TIMING_COLUMNS: [&str; 8] = ["seed", "keygen_s", "build_s", "post_process_s", "tasks_s", "pack_s", "fetch_s", "metrics_s"];

fn lower<T: std::fmt::Debug>(v: T) -> String {
    format!("{v:?}").to_lowercase()
}

pub fn run_record(r: &RunReport) -> Vec<String> {
    let c = &r.config;
    let m = &r.messages_measured;
    vec![
        lower(c.generator),
        lower(c.task_generator),
        c.n_dims.to_string(),
        c.n_workers.to_string(),
        c.n_tasks.to_string(),
        c.epsilon.to_string(),
        c.tau.to_string(),
        c.threshold.to_string(),
        c.l_bins.to_string(),
        c.depth_h.to_string(),
        c.key_bits.to_string(),
        c.subvolume_ratio.to_string(),
        c.task_weight_bits.to_string(),
        c.mock_crypto.to_string(),
        r.seed.to_string(),
        r.quality.to_string(),
        r.quality_raw.to_string(),
        r.precision_pir.to_string(),
        r.precision_spam.to_string(),
        r.recall.to_string(),
        r.max_tasks.to_string(),
        r.buckets.to_string(),
        r.bucket_bytes.to_string(),
        m.to_platform.to_string(),
        m.by_platform.to_string(),
        m.per_worker_avg.to_string(),
        r.skipped_medians.to_string(),
        r.mse_raw.to_string(),
        r.mse_post.to_string(),
        (r.messages_measured == r.messages_formula).to_string(),
    ]
}

pub fn timing_record(r: &RunReport) -> Vec<String> {
    let t = &r.timings;
    std::iter::once(r.seed.to_string())
        .chain([t.keygen, t.build, t.post_process, t.tasks, t.pack, t.fetch, t.metrics].map(|v| v.to_string()))
        .collect()
}

pub fn write_runs<W: Write>(out: W, reports: &[RunReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_COLUMNS)?;
    for r in reports {
        w.write_record(run_record(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings<W: Write>(out: W, reports: &[RunReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMING_COLUMNS)?;
    for r in reports {
        w.write_record(timing_record(r))?;
    }
    w.flush()?;
    Ok(())
}

/// `axis,value` followed by the run columns.
pub fn write_sweep<W: Write>(out: W, axis: &str, rows: &[(f64, RunReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["axis", "value"].into_iter().chain(RUN_COLUMNS))?;
    for (value, r) in rows {
        w.write_record([axis.to_owned(), value.to_string()].into_iter().chain(run_record(r)))?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and 95% confidence half-width of one metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub ci95: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    let (mean, ci95) = mean_ci(values, 0.95);
    Summary { mean, ci95 }
}

/// Human-readable digest of several repetitions of one configuration.
pub fn describe(reports: &[RunReport]) -> String {
    let col = |f: fn(&RunReport) -> f64| summarize(&reports.iter().map(f).collect::<Vec<_>>());
    let line = |name: &str, s: Summary| format!("{name:<16}{:.6} ± {:.6}\n", s.mean, s.ci95);
    let mut s = format!("{} repetition(s)\n", reports.len());
    s += &line("quality", col(|r| r.quality));
    s += &line("quality (raw)", col(|r| r.quality_raw));
    s += &line("precision pir", col(|r| r.precision_pir));
    s += &line("precision spam", col(|r| r.precision_spam));
    s += &line("recall", col(|r| r.recall));
    s += &line("max tasks", col(|r| r.max_tasks as f64));
    s += &line("mse raw", col(|r| r.mse_raw));
    s += &line("mse post", col(|r| r.mse_post));
    if let Some(r) = reports.first() {
        let m = &r.messages_measured;
        s += &format!(
            "messages        to platform {}, by platform {}, per worker {} (formula agrees: {})\n",
            m.to_platform,
            m.by_platform,
            m.per_worker_avg,
            reports.iter().all(|r| r.messages_measured == r.messages_formula)
        );
    }
    s
}
