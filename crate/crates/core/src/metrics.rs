//! Evaluation quantities: estimate quality, assignment precision and recall,
//! message-count formulas and delivery capacity.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::MessageLog;
use crate::tree::{estimate_matching, PkdTree};
use crate::workload::{match_count, matches_unchecked, TaskSpec, WorkerProfile};

pub use crate::packing::max_tasks;

const BYTES_PER_MB: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("task {0} matches no worker; relative error is undefined")]
    ZeroMatch(u64),
    #[error("no tasks to evaluate")]
    NoTasks,
}

/// Mean relative error of the estimated matching counts,
/// `Q = (1/|T|) Σ |t_match − t̃_match| / t_match`.
pub fn quality(tree: &PkdTree, workers: &[WorkerProfile], tasks: &[TaskSpec]) -> Result<f64, MetricsError> {
    let pairs = tasks
        .iter()
        .map(|t| match match_count(workers, t) {
            0 => Err(MetricsError::ZeroMatch(t.task_id)),
            m => Ok((m as f64, estimate_matching(tree, t))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    quality_from_counts(&pairs)
}

/// `Q` over `(true, estimated)` pairs.
pub fn quality_from_counts(pairs: &[(f64, f64)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::NoTasks);
    }
    Ok(pairs.iter().map(|(t, e)| (t - e).abs() / t).sum::<f64>() / pairs.len() as f64)
}

/// What one worker fetched and which tasks it actually matches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssignmentRecord {
    pub worker_index: usize,
    pub bucket_index: usize,
    /// Shared by every worker fetching the same bucket.
    pub downloaded: Arc<BTreeSet<u64>>,
    pub matching: BTreeSet<u64>,
}

impl AssignmentRecord {
    pub fn new(worker_index: usize, bucket_index: usize, downloaded: Arc<BTreeSet<u64>>, worker: &WorkerProfile, tasks: &[TaskSpec]) -> Self {
        let matching = tasks.iter().filter(|t| matches_unchecked(worker, t)).map(|t| t.task_id).collect();
        Self { worker_index, bucket_index, downloaded, matching }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Precision {
    pub value: f64,
    /// Tasks nobody downloaded, left out of the mean.
    pub excluded_tasks: Vec<u64>,
}

/// Per task, the share of its downloaders that match it, averaged over tasks.
pub fn precision(assignments: &[AssignmentRecord], tasks: &[TaskSpec]) -> Precision {
    let mut downloads: HashMap<u64, (u64, u64)> = HashMap::new();
    for a in assignments {
        for id in a.downloaded.iter() {
            let e = downloads.entry(*id).or_default();
            e.0 += 1;
            e.1 += a.matching.contains(id) as u64;
        }
    }
    let mut excluded = Vec::new();
    let mut ratios = Vec::new();
    for t in tasks {
        match downloads.get(&t.task_id) {
            Some(&(dl, hit)) if dl > 0 => ratios.push(hit as f64 / dl as f64),
            _ => excluded.push(t.task_id),
        }
    }
    if !excluded.is_empty() {
        log::info!("precision: {} task(s) downloaded by nobody were excluded", excluded.len());
    }
    let value = if ratios.is_empty() { 0.0 } else { ratios.iter().sum::<f64>() / ratios.len() as f64 };
    Precision { value, excluded_tasks: excluded }
}

/// Precision when every worker downloads every task: `mean(t_match) / |P|`.
pub fn spam_precision(workers: &[WorkerProfile], tasks: &[TaskSpec]) -> f64 {
    let total: usize = tasks.iter().map(|t| match_count(workers, t)).sum();
    total as f64 / tasks.len() as f64 / workers.len() as f64
}

/// Fraction of matching (worker, task) pairs whose task was downloaded.
pub fn recall(assignments: &[AssignmentRecord]) -> f64 {
    let (hit, total) = assignments.iter().fold((0usize, 0usize), |(h, n), a| {
        (h + a.matching.iter().filter(|id| a.downloaded.contains(id)).count(), n + a.matching.len())
    });
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageCounts {
    pub to_platform: u64,
    pub per_worker_avg: f64,
    pub by_platform: u64,
}

/// Encrypted messages of one tree build: every one of the `l·(2^h − 1)`
/// histogram bins and `2^(h+1) − 1` counts costs `|P|` uploads, `T` requests
/// and `T` partial decryptions.
pub fn message_counts(p: u64, t: u64, h: u32, l: u64) -> MessageCounts {
    message_counts_with_skips(p, t, h, l, 0)
}

/// [`message_counts`] when `skipped` medians were replaced by midpoint
/// splits.
pub fn message_counts_with_skips(p: u64, t: u64, h: u32, l: u64, skipped: u64) -> MessageCounts {
    let queries = l * ((1u64 << h) - 1 - skipped) + ((1u64 << (h + 1)) - 1);
    MessageCounts {
        to_platform: (p + t) * queries,
        per_worker_avg: (1.0 + t as f64 / p as f64) * queries as f64,
        by_platform: t * queries,
    }
}

/// Whether a protocol trace matches the closed-form counts exactly.
pub fn reconcile(log: &MessageLog, expected: &MessageCounts) -> bool {
    log.to_platform() == expected.to_platform
        && log.by_platform() == expected.by_platform
        && (log.per_worker_average() - expected.per_worker_avg).abs() <= 1e-9 * expected.per_worker_avg.max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Capacity {
    pub spam: f64,
    pub pir: f64,
    pub pir_size_bound: f64,
    pub pir_time_bound: f64,
}

/// Largest number of tasks deliverable within a download budget of
/// `s_bytes` and a server time budget of `t_secs`.
///
/// `k` is the largest bucket's share of all tasks, `f` the PIR expansion
/// factor and `scan_rate` the server's answer time in seconds per MB.
pub fn capacity(s_bytes: f64, t_secs: f64, f: f64, k: f64, depth: u32, task_bytes: f64, scan_rate: f64) -> Capacity {
    let spam = s_bytes / task_bytes;
    let pir_size_bound = s_bytes / (f * task_bytes * k);
    let pir_time_bound = t_secs / (2f64.powi(depth as i32) * scan_rate * (task_bytes / BYTES_PER_MB) * k);
    Capacity { spam, pir: pir_size_bound.min(pir_time_bound), pir_size_bound, pir_time_bound }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_example() {
        let m = message_counts(4, 2, 1, 10);
        assert_eq!(m.to_platform, 78);
        assert_eq!(m.by_platform, 26);
        assert_eq!(m.per_worker_avg, 19.5);
        assert_eq!(message_counts(4, 2, 1, 0).by_platform, 2 * 3);
    }

    #[test]
    fn quality_formula() {
        assert_eq!(quality_from_counts(&[(4.0, 8.0), (1.0, 2.0)]).unwrap(), 1.0);
        assert_eq!(quality_from_counts(&[(4.0, 4.0)]).unwrap(), 0.0);
        assert!(quality_from_counts(&[]).is_err());
    }

    #[test]
    fn capacity_examples() {
        let c = capacity(100e6, 1.0, 10.0, 0.01, 10, 1e6, 0.14);
        assert_eq!(c.spam, 100.0);
        assert!((c.pir_size_bound - 1000.0).abs() < 1e-9);
        let k = 1.0 / 1024.0;
        let c = capacity(100e6, 1.0, 10.0, k, 10, 1e6, 0.14);
        assert!((c.pir_size_bound - 100e6 * 1024.0 / (10.0 * 1e6)).abs() < 1e-6);
    }

    #[test]
    fn single_worker_precision() {
        let w = WorkerProfile::new(vec![0.5]);
        let t = vec![TaskSpec::full_space(1, 1, 8)];
        let r = AssignmentRecord::new(0, 0, Arc::new([1].into_iter().collect()), &w, &t);
        assert_eq!(precision(std::slice::from_ref(&r), &t).value, 1.0);
        assert_eq!(recall(&[r]), 1.0);
    }

    proptest::proptest! {
        #[test]
        fn per_worker_identity(p in 1u64..1000, t in 1u64..10, h in 1u32..12, l in 0u64..20) {
            let m = message_counts(p, t, h, l);
            proptest::prop_assert!((m.per_worker_avg * p as f64 - m.to_platform as f64).abs() < 1e-6 * m.to_platform as f64 + 1e-9);
        }

        #[test]
        fn capacity_monotone(k1 in 1e-4f64..1.0, k2 in 1e-4f64..1.0, s in 1e6f64..1e9, t in 0.1f64..100.0) {
            let (lo, hi) = if k1 < k2 { (k1, k2) } else { (k2, k1) };
            let a = capacity(s, t, 10.0, lo, 10, 1e6, 0.14);
            let b = capacity(s, t, 10.0, hi, 10, 1e6, 0.14);
            proptest::prop_assert!(a.pir >= b.pir);
            proptest::prop_assert!(capacity(2.0 * s, t, 10.0, lo, 10, 1e6, 0.14).pir >= a.pir);
            proptest::prop_assert!(capacity(s, 2.0 * t, 10.0, lo, 10, 1e6, 0.14).pir >= a.pir);
        }
    }
}
