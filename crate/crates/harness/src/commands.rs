//! Subcommand bodies, separate from argument parsing so tests can call them.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use pkd::crypto::{keygen, KeyMaterial, KeyShare, PrivateKey, PublicKey};
use pkd::ingest::{build_profiles, parse_dumps, render_profiles, tag_frequency_csv, DEFAULT_TAGS};
use pkd::metrics::{max_tasks, message_counts_with_skips, reconcile};
use pkd::packing::{check_packing, pkd_pir_packing};
use pkd::pir::bench_answer;
use pkd::protocol::{EncryptedBackend, PlaintextBackend, SumBackend};
use pkd::stats::{linear_fit, LinearFit};
use pkd::tree::{build_pkd, post_process, PkdTree};
use pkd::workload::{read_tasks, read_workers, write_tasks, write_workers};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::pipeline::{self, phase_rng, Phase, RunReport};
use crate::plot::{plot_series, Series};
use crate::report::{self, describe, summarize};

const PUBLIC_KEY_FILE: &str = "public.key";
const DEALER_KEY_FILE: &str = "dealer.key";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn share_file(index: u32) -> String {
    format!("share-{index}.key")
}

/// Dealer keys for `cfg`: the public key, one file per share and the
/// dealer's factorisation (needed only to check decryptions offline).
pub fn keygen_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<KeyMaterial> {
    cfg.validate()?;
    let (public, shares, private) = keygen(cfg.key_bits, cfg.key_shares, cfg.threshold, &mut phase_rng(cfg.seed, Phase::Keys))?;
    write(&out.join(PUBLIC_KEY_FILE), public.to_text())?;
    for s in &shares {
        write(&out.join(share_file(s.index())), s.to_text())?;
    }
    write(&out.join(DEALER_KEY_FILE), private.to_text())?;
    Ok(KeyMaterial { public, shares })
}

pub fn load_keys(dir: &Path) -> Result<KeyMaterial> {
    let public = PublicKey::from_text(&read(&dir.join(PUBLIC_KEY_FILE))?)?;
    let shares = (1..=public.n_shares() as u32)
        .map(|i| Ok(KeyShare::from_text(&read(&dir.join(share_file(i)))?)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(KeyMaterial { public, shares })
}

pub fn load_dealer_key(dir: &Path) -> Result<PrivateKey> {
    Ok(PrivateKey::from_text(&read(&dir.join(DEALER_KEY_FILE))?)?)
}

/// Writes `workers.tsv` and `tasks.tsv`. SUBVOLUME tasks need `tree`.
pub fn gen_data_cmd(cfg: &ExperimentConfig, tree: Option<&Path>, out: &Path) -> Result<()> {
    cfg.validate()?;
    let workers = pipeline::generate_workers(cfg, cfg.seed)?;
    let tree = tree.map(|p| Ok::<_, anyhow::Error>(PkdTree::from_json(&read(p)?)?)).transpose()?;
    let tasks = pipeline::generate_tasks(cfg, cfg.seed, &workers, tree.as_ref())?;
    write(&out.join("workers.tsv"), write_workers(&workers))?;
    write(&out.join("tasks.tsv"), write_tasks(&tasks))?;
    Ok(())
}

/// Tag dimensions: the whitelist in its given order, or every tag of the
/// Tags dump in file order.
pub fn ingest_cmd(posts: &Path, votes: &Path, tags: &Path, whitelist: Option<Vec<String>>, out: &Path) -> Result<usize> {
    let (records, dump_tags) = parse_dumps(posts, votes, tags)?;
    let dims = whitelist.unwrap_or(dump_tags);
    ensure!(!dims.is_empty(), "no tags to project onto");
    let allowed: BTreeSet<String> = dims.iter().cloned().collect();
    let table = build_profiles(&records, Some(&allowed));
    let (profiles, manifest) = render_profiles(&table, &dims);
    write(&out.join("profiles.tsv"), profiles)?;
    write(&out.join("tags.json"), manifest)?;
    write(&out.join("tag_frequency.csv"), tag_frequency_csv(&table, &dims))?;
    Ok(table.len())
}

pub fn default_whitelist() -> Vec<String> {
    DEFAULT_TAGS.iter().map(|t| t.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub workers: usize,
    pub leaves: usize,
    pub to_platform: u64,
    pub by_platform: u64,
    pub per_worker_avg: f64,
    pub reconciled: bool,
    pub skipped_medians: usize,
}

/// Builds and post-processes a tree over a worker file. Without a key
/// directory, real crypto uses fresh dealer keys from the config seed.
pub fn build_pkd_cmd(cfg: &ExperimentConfig, workers: &Path, keys: Option<&Path>, raw: bool, out: &Path) -> Result<BuildSummary> {
    let workers = read_workers(&read(workers)?)?;
    let cfg = ExperimentConfig {
        n_workers: workers.len(),
        n_dims: workers.first().map_or(cfg.n_dims, |w| w.dims()),
        ..cfg.clone()
    };
    cfg.validate()?;
    let material = match (cfg.mock_crypto, keys) {
        (true, _) => None,
        (false, Some(dir)) => Some(load_keys(dir)?),
        (false, None) => Some(pipeline::dealer_keys(&cfg, cfg.seed)?),
    };
    let backend: Box<dyn SumBackend + '_> = match &material {
        Some(k) => {
            ensure!(k.public.threshold() == cfg.threshold, "key threshold {} differs from config {}", k.public.threshold(), cfg.threshold);
            Box::new(EncryptedBackend::new(k))
        }
        None => Box::new(PlaintextBackend::new(cfg.threshold)),
    };
    let build = build_pkd(&workers, &pipeline::tree_params(&cfg), backend.as_ref(), &mut phase_rng(cfg.seed, Phase::Tree))?;
    let formula = message_counts_with_skips(
        workers.len() as u64,
        cfg.threshold as u64,
        cfg.depth_h as u32,
        cfg.l_bins as u64,
        build.skipped_medians as u64,
    );
    let reconciled = reconcile(&build.log, &formula);
    ensure!(reconciled, "message counts do not reconcile with the closed form {formula:?}");
    let tree = if raw { build.tree } else { post_process(build.tree) };
    write(out, tree.to_json())?;
    Ok(BuildSummary {
        workers: workers.len(),
        leaves: tree.num_leaves(),
        to_platform: build.log.to_platform(),
        by_platform: build.log.by_platform(),
        per_worker_avg: build.log.per_worker_average(),
        reconciled,
        skipped_medians: build.skipped_medians,
    })
}

/// Packs a task file on a tree and writes the bucket manifest. Fails on any
/// packing-condition violation.
pub fn pack_cmd(tree: &Path, tasks: &Path, out: &Path) -> Result<(usize, usize)> {
    let tree = PkdTree::from_json(&read(tree)?)?;
    let tasks = read_tasks(&read(tasks)?)?;
    let packing = pkd_pir_packing(&tree, &tasks);
    if let Some(v) = check_packing(&packing, &tasks).first() {
        bail!("packing violates {:?}: {v:?}", v.condition());
    }
    write(out, serde_json::to_string_pretty(&packing.manifest())? + "\n")?;
    Ok((packing.len(), max_tasks(&packing)))
}

/// Runs `cfg.repetitions` seeds starting at `cfg.seed`.
pub fn run_reports(cfg: &ExperimentConfig) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    (0..cfg.repetitions as u64)
        .into_par_iter()
        .map(|i| pipeline::run_once(cfg, cfg.seed + i).with_context(|| format!("seed {} of config:\n{}", cfg.seed + i, cfg.to_toml())))
        .collect()
}

pub fn run_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let reports = run_reports(cfg)?;
    fs::create_dir_all(out)?;
    report::write_runs(fs::File::create(out.join("runs.csv"))?, &reports)?;
    report::write_timings(fs::File::create(out.join("timings.csv"))?, &reports)?;
    write(&out.join("config.toml"), cfg.to_toml())?;
    Ok(describe(&reports))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Depth,
    Epsilon,
    Bins,
    Workers,
    Ratio,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Depth => "depth",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Bins => "bins",
            SweepAxis::Workers => "workers",
            SweepAxis::Ratio => "ratio",
        }
    }

    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let whole = || {
            ensure!(value >= 1.0 && value.fract() == 0.0, "{} values must be positive integers, got {value}", self.name());
            Ok(value as usize)
        };
        let mut c = cfg.clone();
        match self {
            SweepAxis::Depth => c.depth_h = whole()?,
            SweepAxis::Epsilon => c.epsilon = value,
            SweepAxis::Bins => c.l_bins = whole()?,
            SweepAxis::Workers => c.n_workers = whole()?,
            SweepAxis::Ratio => c.subvolume_ratio = value,
        }
        c.validate()?;
        Ok(c)
    }
}

/// One row per (value, seed) and a plot of the per-value means. Ratio
/// sweeps plot precision; the others plot quality.
pub fn sweep_cmd(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64], out: &Path) -> Result<Vec<(f64, RunReport)>> {
    ensure!(!values.is_empty(), "no sweep values");
    let mut rows = Vec::new();
    for &v in values {
        let c = axis.apply(cfg, v)?;
        rows.extend(run_reports(&c)?.into_iter().map(|r| (v, r)));
    }
    fs::create_dir_all(out)?;
    let stem = format!("sweep_{}", axis.name());
    report::write_sweep(fs::File::create(out.join(format!("{stem}.csv")))?, axis.name(), &rows)?;
    report::write_timings(fs::File::create(out.join(format!("{stem}_timings.csv")))?, &rows.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>())?;

    let series = |label: &str, f: fn(&RunReport) -> f64| Series {
        label: label.to_owned(),
        points: values
            .iter()
            .map(|&v| {
                let s = summarize(&rows.iter().filter(|(x, _)| *x == v).map(|(_, r)| f(r)).collect::<Vec<_>>());
                (v, s.mean, s.ci95)
            })
            .collect(),
    };
    let log_x = matches!(axis, SweepAxis::Epsilon | SweepAxis::Workers);
    let plot_path = out.join(format!("{stem}.svg"));
    if axis == SweepAxis::Ratio {
        let pir = series("pkd packing", |r| r.precision_pir.log10());
        let spam = series("spamming", |r| r.precision_spam.log10());
        plot_series(&plot_path, "precision", "ratio", "log10(precision)", &[pir, spam], false)?;
    } else {
        let q = series("post-processed", |r| r.quality);
        let raw = series("raw", |r| r.quality_raw);
        plot_series(&plot_path, "quality", axis.name(), "mean relative error", &[q, raw], log_x)?;
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PirBench {
    pub points: Vec<pkd::pir::BenchPoint>,
    pub fit: LinearFit,
    /// Slope of the fit in seconds per MB (10^6 bytes).
    pub scan_rate: f64,
}

pub fn bench_pir_cmd(key_bits: u64, sizes: &[usize], items: usize, trials: usize, seed: u64, out: Option<&Path>) -> Result<PirBench> {
    ensure!(sizes.len() >= 2, "need at least two library sizes for a fit");
    let rng = &mut phase_rng(seed, Phase::Fetch);
    let (pk, _) = pkd::crypto::client_keygen(key_bits, rng)?;
    let points = bench_answer(&pk, sizes, items, trials, rng)?;
    let xs: Vec<f64> = points.iter().map(|p| p.library_bytes as f64 / 1e6).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds).collect();
    let fit = linear_fit(&xs, &ys);
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        let mut w = csv::Writer::from_path(out.join("bench_pir.csv"))?;
        w.write_record(["library_bytes", "items", "seconds"])?;
        for p in &points {
            w.write_record([p.library_bytes.to_string(), p.items.to_string(), p.seconds.to_string()])?;
        }
        w.flush()?;
        let measured = Series { label: "answer time".into(), points: xs.iter().zip(&ys).map(|(&x, &y)| (x, y, 0.0)).collect() };
        let line = Series { label: "linear fit".into(), points: xs.iter().map(|&x| (x, fit.slope * x + fit.intercept, 0.0)).collect() };
        plot_series(&out.join("bench_pir.svg"), "PIR answer time", "library size (MB)", "seconds", &[measured, line], false)?;
    }
    Ok(PirBench { points, fit, scan_rate: fit.slope })
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("bad list value {v:?}: {e}")))
        .collect()
}

pub fn out_dir(path: Option<PathBuf>) -> PathBuf {
    path.unwrap_or_else(|| PathBuf::from("."))
}
