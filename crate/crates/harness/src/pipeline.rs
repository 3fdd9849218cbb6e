//! One seeded end-to-end run: data, keys, tree, packing, a fetch per worker
//! and every metric.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use pkd::crypto::{client_keygen, keygen, KeyMaterial};
use pkd::ingest::sample_stack_workers;
use pkd::metrics::{
    message_counts_with_skips, precision, quality, recall, reconcile, spam_precision, AssignmentRecord, MessageCounts,
};
use pkd::packing::{
    assign_bucket, check_packing, decode_bucket, encode_bucket, max_tasks, pkd_pir_packing, task_payload, Packing,
};
use pkd::pir::{answer, build_library, decode, default_chunk_bits, make_query};
use pkd::protocol::{EncryptedBackend, PlaintextBackend, SumBackend};
use pkd::tree::{build_pkd, post_process, PkdParams, PkdTree};
use pkd::workload::{
    ensure_nonempty, ensure_nonempty_subvolume, gen_subvolume_tasks, read_workers, TaskGenerator, TaskSpec,
    WorkerGenerator, WorkerProfile, DEFAULT_MAX_RETRIES,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, TaskSource, WorkerSource};

/// Independent random streams per pipeline phase, so changing one phase
/// never shifts another's draws.
#[derive(Clone, Copy, Debug)]
pub enum Phase {
    Workers = 1,
    Keys = 2,
    Tree = 3,
    Tasks = 4,
    Fetch = 5,
    Payload = 6,
}

pub fn phase_rng(seed: u64, phase: Phase) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(phase as u64);
    rng
}

pub fn generate_workers(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<WorkerProfile>> {
    let rng = &mut phase_rng(seed, Phase::Workers);
    let workers = match cfg.generator {
        WorkerSource::Unif => WorkerGenerator::Unif.generate(cfg.n_workers, cfg.n_dims, rng)?,
        WorkerSource::Onespe => WorkerGenerator::OneSpe.generate(cfg.n_workers, cfg.n_dims, rng)?,
        WorkerSource::Stack => {
            let path = cfg.stack_profiles.as_ref().context("the stack generator needs stack_profiles")?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let table = read_workers(&text)?;
            if let Some(w) = table.first() {
                ensure!(w.dims() == cfg.n_dims, "stack profiles have {} dims, config says {}", w.dims(), cfg.n_dims);
            }
            sample_stack_workers(&table, cfg.n_workers, rng)?
        }
    };
    Ok(workers)
}

/// Tasks that each match at least one worker. SUBVOLUME tasks need the tree.
pub fn generate_tasks(cfg: &ExperimentConfig, seed: u64, workers: &[WorkerProfile], tree: Option<&PkdTree>) -> Result<Vec<TaskSpec>> {
    let rng = &mut phase_rng(seed, Phase::Tasks);
    let (n, d, w) = (cfg.n_tasks, cfg.n_dims, cfg.task_weight_bits);
    let tasks = match cfg.task_generator {
        TaskSource::Unif => ensure_nonempty(TaskGenerator::Unif.generate(n, d, w, rng)?, workers, TaskGenerator::Unif, DEFAULT_MAX_RETRIES, rng)?,
        TaskSource::Onespe => {
            ensure_nonempty(TaskGenerator::OneSpe.generate(n, d, w, rng)?, workers, TaskGenerator::OneSpe, DEFAULT_MAX_RETRIES, rng)?
        }
        TaskSource::Subvolume => {
            let tree = tree.context("SUBVOLUME tasks need a tree")?;
            let tasks = gen_subvolume_tasks(tree, n, cfg.subvolume_ratio, w, rng)?;
            ensure_nonempty_subvolume(tasks, workers, tree, cfg.subvolume_ratio, DEFAULT_MAX_RETRIES, rng)?
        }
    };
    Ok(tasks)
}

pub fn dealer_keys(cfg: &ExperimentConfig, seed: u64) -> Result<KeyMaterial> {
    let (public, shares, _) = keygen(cfg.key_bits, cfg.key_shares, cfg.threshold, &mut phase_rng(seed, Phase::Keys))?;
    Ok(KeyMaterial { public, shares })
}

pub fn tree_params(cfg: &ExperimentConfig) -> PkdParams {
    PkdParams::new(cfg.depth_h, cfg.l_bins, cfg.epsilon, cfg.tau, cfg.n_dims)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub keygen: f64,
    pub build: f64,
    pub post_process: f64,
    pub tasks: f64,
    pub pack: f64,
    pub fetch: f64,
    pub metrics: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    /// Quality of the post-processed tree.
    pub quality: f64,
    /// Quality of the raw tree.
    pub quality_raw: f64,
    pub precision_pir: f64,
    pub precision_spam: f64,
    pub precision_excluded_tasks: usize,
    pub recall: f64,
    pub max_tasks: usize,
    pub buckets: usize,
    pub bucket_bytes: u64,
    pub messages_measured: MessageCounts,
    pub messages_formula: MessageCounts,
    pub skipped_medians: usize,
    /// Mean squared error of node counts against the true counts.
    pub mse_raw: f64,
    pub mse_post: f64,
    pub max_consistency_gap: f64,
    pub timings: Timings,
}

/// Products of a run kept for inspection beyond the report.
pub struct RunArtifacts {
    pub workers: Vec<WorkerProfile>,
    pub tasks: Vec<TaskSpec>,
    pub raw_tree: PkdTree,
    pub tree: PkdTree,
    pub packing: Packing,
    pub assignments: Vec<AssignmentRecord>,
}

fn mse(tree: &PkdTree, truth: &[f64], raw: bool) -> f64 {
    let nodes = tree.nodes_preorder();
    let sum: f64 = nodes
        .iter()
        .zip(truth)
        .map(|(n, t)| (if raw { n.raw_count } else { n.count } - t).powi(2))
        .sum();
    sum / nodes.len() as f64
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_secs_f64();
    out
}

pub fn run_once(cfg: &ExperimentConfig, seed: u64) -> Result<RunReport> {
    run_with_artifacts(cfg, seed).map(|(r, _)| r)
}

pub fn run_with_artifacts(cfg: &ExperimentConfig, seed: u64) -> Result<(RunReport, RunArtifacts)> {
    cfg.validate()?;
    let mut timings = Timings::default();
    let workers = generate_workers(cfg, seed)?;

    let keys = if cfg.mock_crypto { None } else { Some(timed(&mut timings.keygen, || dealer_keys(cfg, seed))?) };
    let backend: Box<dyn SumBackend + '_> = match &keys {
        Some(k) => Box::new(EncryptedBackend::new(k)),
        None => Box::new(PlaintextBackend::new(cfg.threshold)),
    };

    let build = timed(&mut timings.build, || {
        Ok(build_pkd(&workers, &tree_params(cfg), backend.as_ref(), &mut phase_rng(seed, Phase::Tree))?)
    })?;
    let formula = message_counts_with_skips(
        cfg.n_workers as u64,
        cfg.threshold as u64,
        cfg.depth_h as u32,
        cfg.l_bins as u64,
        build.skipped_medians as u64,
    );
    if !reconcile(&build.log, &formula) {
        bail!(
            "message counts do not reconcile: measured ({}, {}, {}), formula {formula:?}",
            build.log.to_platform(),
            build.log.by_platform(),
            build.log.per_worker_average()
        );
    }
    let measured = MessageCounts {
        to_platform: build.log.to_platform(),
        per_worker_avg: build.log.per_worker_average(),
        by_platform: build.log.by_platform(),
    };

    let raw_tree = build.tree;
    let tree = timed(&mut timings.post_process, || Ok(post_process(raw_tree.clone())))?;
    let gap = tree.max_consistency_gap();
    ensure!(gap < 1e-6, "post-processed tree is inconsistent (gap {gap})");
    tree.check_structure()?;

    let tasks = timed(&mut timings.tasks, || generate_tasks(cfg, seed, &workers, Some(&tree)))?;

    let packing = timed(&mut timings.pack, || {
        let packing = pkd_pir_packing(&tree, &tasks);
        let verdict = check_packing(&packing, &tasks);
        if let Some(v) = verdict.first() {
            bail!("packing violates {:?}: {v:?}", v.condition());
        }
        Ok(packing)
    })?;

    let assignments = timed(&mut timings.fetch, || fetch_all(cfg, seed, &workers, &tasks, &packing))?;

    let start = Instant::now();
    let truth = tree.true_counts(&workers);
    let prec = precision(&assignments, &tasks);
    let report = RunReport {
        config: cfg.clone(),
        seed,
        quality: quality(&tree, &workers, &tasks)?,
        quality_raw: quality(&raw_tree, &workers, &tasks)?,
        precision_pir: prec.value,
        precision_spam: spam_precision(&workers, &tasks),
        precision_excluded_tasks: prec.excluded_tasks.len(),
        recall: recall(&assignments),
        max_tasks: max_tasks(&packing),
        buckets: packing.len(),
        bucket_bytes: packing.weight_bits.div_ceil(8),
        messages_measured: measured,
        messages_formula: formula,
        skipped_medians: build.skipped_medians,
        mse_raw: mse(&raw_tree, &truth, true),
        mse_post: mse(&tree, &truth, false),
        max_consistency_gap: gap,
        timings,
    };
    let mut report = report;
    report.timings.metrics = start.elapsed().as_secs_f64();
    Ok((report, RunArtifacts { workers, tasks, raw_tree, tree, packing, assignments }))
}

/// One bucket download per worker. With real crypto every worker makes its
/// own client key and retrieves its bucket through PIR; the decoded bucket
/// must list exactly the packed task ids with their payloads.
fn fetch_all(
    cfg: &ExperimentConfig,
    seed: u64,
    workers: &[WorkerProfile],
    tasks: &[TaskSpec],
    packing: &Packing,
) -> Result<Vec<AssignmentRecord>> {
    let shared: Vec<Arc<BTreeSet<u64>>> = packing.buckets.iter().map(|b| Arc::new(b.task_ids.clone())).collect();
    let bucket_of = |i: usize, w: &WorkerProfile| {
        assign_bucket(packing, w).with_context(|| format!("worker {i} lies in no bucket"))
    };

    if cfg.mock_crypto {
        return workers
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let b = bucket_of(i, w)?;
                Ok(AssignmentRecord::new(i, b, shared[b].clone(), w, tasks))
            })
            .collect();
    }

    let by_id: HashMap<u64, &TaskSpec> = tasks.iter().map(|t| (t.task_id, t)).collect();
    let payload = |id: u64| task_payload(by_id[&id], seed);
    let items: Vec<Vec<u8>> = packing.buckets.iter().map(|b| encode_bucket(b, payload)).collect();

    let rng = &mut phase_rng(seed, Phase::Fetch);
    let mut library = None;
    let mut out = Vec::with_capacity(workers.len());
    for (i, w) in workers.iter().enumerate() {
        let b = bucket_of(i, w)?;
        let (pk, sk) = client_keygen(cfg.key_bits, rng)?;
        let y = default_chunk_bits(&pk, items.len());
        let lib = match &library {
            Some(lib) => lib,
            None => library.insert(build_library(&items, y, pk.plaintext_bits())?),
        };
        ensure!(lib.chunk_bits() == y, "client keys disagree on the chunk width");
        let query = make_query(&pk, b, items.len(), rng)?;
        let bytes = decode(&sk, &answer(&query, lib)?, y, lib.item_len())?;
        let got = decode_bucket(&bytes)?;
        let ids: BTreeSet<u64> = got.iter().map(|(id, _)| *id).collect();
        ensure!(ids == *shared[b], "worker {i} decoded the wrong bucket");
        for (id, body) in &got {
            ensure!(*body == payload(*id), "worker {i} got a corrupted payload for task {id}");
        }
        out.push(AssignmentRecord::new(i, b, shared[b].clone(), w, tasks));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig { n_workers: 200, n_tasks: 30, n_dims: 2, depth_h: 3, mock_crypto: true, repetitions: 1, ..ExperimentConfig::default() }
    }

    #[test]
    fn mock_run_reconciles_and_is_deterministic() {
        let a = run_once(&tiny(), 3).unwrap();
        let b = run_once(&tiny(), 3).unwrap();
        assert_eq!(a.messages_measured, a.messages_formula);
        assert_eq!(a.recall, 1.0);
        assert_eq!(
            (a.quality, a.precision_pir, a.mse_raw, a.max_tasks),
            (b.quality, b.precision_pir, b.mse_raw, b.max_tasks)
        );
    }

    #[test]
    fn subvolume_full_leaf_tasks_are_perfectly_precise() {
        let cfg = ExperimentConfig { task_generator: TaskSource::Subvolume, subvolume_ratio: 1.0, ..tiny() };
        let r = run_once(&cfg, 1).unwrap();
        assert_eq!(r.precision_pir, 1.0);
    }
}
