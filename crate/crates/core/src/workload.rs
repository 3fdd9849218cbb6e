//! Worker profiles, task specifications, the matching predicate and the
//! synthetic generators (UNIF, ONESPE, SUBVOLUME).

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::PkdTree;

/// Payload size given to generated tasks unless configured otherwise (1 KiB).
pub const DEFAULT_TASK_WEIGHT_BITS: u64 = 8 * 1024;

/// Resampling attempts per task in [`ensure_nonempty`].
pub const DEFAULT_MAX_RETRIES: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("dimension mismatch: profile has {profile} skills, task has {task} ranges")]
    DimensionMismatch { profile: usize, task: usize },
    #[error("could not draw a task matching at least one worker for task {task_id} after {retries} retries ({generator}, {dims} dims, {workers} workers)")]
    RetryBudgetExhausted { task_id: u64, retries: usize, generator: &'static str, dims: usize, workers: usize },
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed workload file, line {line}: {reason}")]
    Format { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, WorkloadError>;

/// A worker's private skill vector in `[0, 1]^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub skills: Vec<f64>,
}

impl WorkerProfile {
    pub fn new(skills: Vec<f64>) -> Self {
        Self { skills }
    }

    pub fn dims(&self) -> usize {
        self.skills.len()
    }
}

/// A task: one closed skill range per dimension plus its payload size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: u64,
    pub metadata: Vec<(f64, f64)>,
    pub weight_bits: u64,
}

impl TaskSpec {
    pub fn new(task_id: u64, metadata: Vec<(f64, f64)>, weight_bits: u64) -> Self {
        debug_assert!(metadata.iter().all(|(lo, hi)| lo <= hi));
        Self { task_id, metadata, weight_bits }
    }

    pub fn dims(&self) -> usize {
        self.metadata.len()
    }

    /// Payload length in bytes.
    pub fn weight_bytes(&self) -> usize {
        self.weight_bits.div_ceil(8) as usize
    }

    /// The task spanning the whole unit cube.
    pub fn full_space(task_id: u64, dims: usize, weight_bits: u64) -> Self {
        Self::new(task_id, vec![(0.0, 1.0); dims], weight_bits)
    }
}

/// `true` iff every skill lies in the corresponding closed task range.
pub fn matches(profile: &WorkerProfile, task: &TaskSpec) -> Result<bool> {
    if profile.dims() != task.dims() {
        return Err(WorkloadError::DimensionMismatch { profile: profile.dims(), task: task.dims() });
    }
    Ok(matches_unchecked(profile, task))
}

pub(crate) fn matches_unchecked(profile: &WorkerProfile, task: &TaskSpec) -> bool {
    profile
        .skills
        .iter()
        .zip(&task.metadata)
        .all(|(&s, &(lo, hi))| lo <= s && s <= hi)
}

/// Number of workers matching `task`.
pub fn match_count(workers: &[WorkerProfile], task: &TaskSpec) -> usize {
    workers.iter().filter(|w| matches_unchecked(w, task)).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkerGenerator {
    Unif,
    OneSpe,
}

impl WorkerGenerator {
    pub fn sample<R: Rng + ?Sized>(self, dims: usize, rng: &mut R) -> WorkerProfile {
        match self {
            WorkerGenerator::Unif => WorkerProfile::new((0..dims).map(|_| rng.random_range(0.0..=1.0)).collect()),
            WorkerGenerator::OneSpe => {
                let specialty = rng.random_range(0..dims);
                let skills = (0..dims)
                    .map(|d| if d == specialty { rng.random_range(0.5..=1.0) } else { rng.random_range(0.0..0.5) })
                    .collect();
                WorkerProfile::new(skills)
            }
        }
    }

    pub fn generate<R: Rng + ?Sized>(self, count: usize, dims: usize, rng: &mut R) -> Result<Vec<WorkerProfile>> {
        check_sizes(count, dims)?;
        Ok((0..count).map(|_| self.sample(dims, rng)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskGenerator {
    Unif,
    OneSpe,
}

impl TaskGenerator {
    pub fn sample<R: Rng + ?Sized>(self, task_id: u64, dims: usize, weight_bits: u64, rng: &mut R) -> TaskSpec {
        let metadata = match self {
            TaskGenerator::Unif => (0..dims)
                .map(|_| {
                    let (a, b): (f64, f64) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
                    (a.min(b), a.max(b))
                })
                .collect(),
            TaskGenerator::OneSpe => {
                let specialty = rng.random_range(0..dims);
                (0..dims)
                    .map(|d| {
                        if d == specialty {
                            (rng.random_range(0.5..=1.0), 1.0)
                        } else {
                            (0.0, rng.random_range(0.0..0.5))
                        }
                    })
                    .collect()
            }
        };
        TaskSpec::new(task_id, metadata, weight_bits)
    }

    pub fn generate<R: Rng + ?Sized>(self, count: usize, dims: usize, weight_bits: u64, rng: &mut R) -> Result<Vec<TaskSpec>> {
        check_sizes(count, dims)?;
        Ok((0..count as u64).map(|id| self.sample(id, dims, weight_bits, rng)).collect())
    }
}

fn check_sizes(count: usize, dims: usize) -> Result<()> {
    if count == 0 || dims == 0 {
        return Err(WorkloadError::InvalidParameter(format!("count = {count}, dims = {dims}; both must be ≥ 1")));
    }
    Ok(())
}

pub fn gen_unif_workers<R: Rng + ?Sized>(count: usize, dims: usize, rng: &mut R) -> Result<Vec<WorkerProfile>> {
    WorkerGenerator::Unif.generate(count, dims, rng)
}

pub fn gen_unif_tasks<R: Rng + ?Sized>(count: usize, dims: usize, weight_bits: u64, rng: &mut R) -> Result<Vec<TaskSpec>> {
    TaskGenerator::Unif.generate(count, dims, weight_bits, rng)
}

pub fn gen_onespe_workers<R: Rng + ?Sized>(count: usize, dims: usize, rng: &mut R) -> Result<Vec<WorkerProfile>> {
    WorkerGenerator::OneSpe.generate(count, dims, rng)
}

pub fn gen_onespe_tasks<R: Rng + ?Sized>(count: usize, dims: usize, weight_bits: u64, rng: &mut R) -> Result<Vec<TaskSpec>> {
    TaskGenerator::OneSpe.generate(count, dims, weight_bits, rng)
}

/// SUBVOLUME tasks: each lies inside one uniformly chosen leaf, with every
/// side scaled by `ratio^(1/d)` so the task covers `ratio` of the leaf volume.
/// The lower corner is uniform over the feasible offsets.
pub fn gen_subvolume_tasks<R: Rng + ?Sized>(
    tree: &PkdTree,
    count: usize,
    ratio: f64,
    weight_bits: u64,
    rng: &mut R,
) -> Result<Vec<TaskSpec>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(WorkloadError::InvalidParameter(format!("subvolume ratio must be in (0, 1], got {ratio}")));
    }
    check_sizes(count, tree.dims())?;
    let leaves: Vec<_> = tree.leaves().collect();
    let scale = ratio.powf(1.0 / tree.dims() as f64);
    Ok((0..count as u64)
        .map(|id| {
            let leaf = leaves[rng.random_range(0..leaves.len())];
            let metadata = leaf
                .subspace
                .bounds()
                .iter()
                .map(|&(lo, hi)| {
                    let side = (hi - lo) * scale;
                    let slack = (hi - lo - side).max(0.0);
                    let a = if slack > 0.0 { lo + rng.random_range(0.0..=slack) } else { lo };
                    (a, (a + side).min(hi))
                })
                .collect();
            TaskSpec::new(id, metadata, weight_bits)
        })
        .collect())
}

/// Resamples every task that matches no worker, up to `max_retries` times
/// per task.
pub fn ensure_nonempty<R: Rng + ?Sized>(
    tasks: Vec<TaskSpec>,
    workers: &[WorkerProfile],
    generator: TaskGenerator,
    max_retries: usize,
    rng: &mut R,
) -> Result<Vec<TaskSpec>> {
    let name = match generator {
        TaskGenerator::Unif => "unif",
        TaskGenerator::OneSpe => "onespe",
    };
    resample_empty(tasks, workers, name, max_retries, |t| generator.sample(t.task_id, t.dims(), t.weight_bits, rng))
}

/// [`ensure_nonempty`] for SUBVOLUME tasks of `tree`.
pub fn ensure_nonempty_subvolume<R: Rng + ?Sized>(
    tasks: Vec<TaskSpec>,
    workers: &[WorkerProfile],
    tree: &PkdTree,
    ratio: f64,
    max_retries: usize,
    rng: &mut R,
) -> Result<Vec<TaskSpec>> {
    resample_empty(tasks, workers, "subvolume", max_retries, |t| {
        let mut fresh = gen_subvolume_tasks(tree, 1, ratio, t.weight_bits, rng).expect("ratio already validated").remove(0);
        fresh.task_id = t.task_id;
        fresh
    })
}

fn resample_empty(
    tasks: Vec<TaskSpec>,
    workers: &[WorkerProfile],
    generator: &'static str,
    max_retries: usize,
    mut resample: impl FnMut(&TaskSpec) -> TaskSpec,
) -> Result<Vec<TaskSpec>> {
    tasks
        .into_iter()
        .map(|mut task| {
            let mut retries = 0;
            while match_count(workers, &task) == 0 {
                if retries == max_retries {
                    return Err(WorkloadError::RetryBudgetExhausted {
                        task_id: task.task_id,
                        retries,
                        generator,
                        dims: task.dims(),
                        workers: workers.len(),
                    });
                }
                task = resample(&task);
                retries += 1;
            }
            Ok(task)
        })
        .collect()
}

const WORKERS_MAGIC: &str = "# pkd-workers v1";
const TASKS_MAGIC: &str = "# pkd-tasks v1";

/// One line per worker: `id<TAB>skill_1<TAB>…<TAB>skill_n`.
pub fn write_workers(workers: &[WorkerProfile]) -> String {
    let dims = workers.first().map_or(0, WorkerProfile::dims);
    let mut s = format!("{WORKERS_MAGIC} dims={dims}\n");
    for (i, w) in workers.iter().enumerate() {
        write!(s, "{i}").unwrap();
        for x in &w.skills {
            write!(s, "\t{x}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// One line per task: `id<TAB>weight_bits<TAB>lo_1<TAB>hi_1<TAB>…`.
pub fn write_tasks(tasks: &[TaskSpec]) -> String {
    let dims = tasks.first().map_or(0, TaskSpec::dims);
    let mut s = format!("{TASKS_MAGIC} dims={dims}\n");
    for t in tasks {
        write!(s, "{}\t{}", t.task_id, t.weight_bits).unwrap();
        for (lo, hi) in &t.metadata {
            write!(s, "\t{lo}\t{hi}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn parse_header(line: Option<&str>, magic: &str) -> Result<usize> {
    let line = line.ok_or(WorkloadError::Format { line: 1, reason: "empty file".into() })?;
    line.strip_prefix(magic)
        .and_then(|rest| rest.trim().strip_prefix("dims="))
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| WorkloadError::Format { line: 1, reason: format!("expected `{magic} dims=<n>`") })
}

fn parse_fields<T: std::str::FromStr>(line: &str, lineno: usize) -> Result<Vec<T>> {
    line.split('\t')
        .map(|f| f.trim().parse().map_err(|_| WorkloadError::Format { line: lineno, reason: format!("bad field {f:?}") }))
        .collect()
}

pub fn read_workers(text: &str) -> Result<Vec<WorkerProfile>> {
    let mut lines = text.lines();
    let dims = parse_header(lines.next(), WORKERS_MAGIC)?;
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let lineno = i + 2;
            let (_, rest) = line.split_once('\t').ok_or(WorkloadError::Format { line: lineno, reason: "missing skills".into() })?;
            let skills: Vec<f64> = parse_fields(rest, lineno)?;
            if skills.len() != dims || skills.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(WorkloadError::Format { line: lineno, reason: format!("expected {dims} skills in [0, 1]") });
            }
            Ok(WorkerProfile::new(skills))
        })
        .collect()
}

pub fn read_tasks(text: &str) -> Result<Vec<TaskSpec>> {
    let mut lines = text.lines();
    let dims = parse_header(lines.next(), TASKS_MAGIC)?;
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let lineno = i + 2;
            let mut fields = line.splitn(3, '\t');
            let bad = |reason: &str| WorkloadError::Format { line: lineno, reason: reason.into() };
            let id = fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| bad("bad task id"))?;
            let weight = fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| bad("bad weight"))?;
            let bounds: Vec<f64> = parse_fields(fields.next().ok_or_else(|| bad("missing ranges"))?, lineno)?;
            if bounds.len() != 2 * dims {
                return Err(bad(&format!("expected {} range bounds", 2 * dims)));
            }
            let metadata: Vec<(f64, f64)> = bounds.chunks(2).map(|c| (c[0], c[1])).collect();
            if metadata.iter().any(|(lo, hi)| lo > hi) {
                return Err(bad("range with lo > hi"));
            }
            Ok(TaskSpec::new(id, metadata, weight))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn full_space_matches_everyone() {
        let workers = gen_unif_workers(1000, 3, &mut rng(1)).unwrap();
        let t = TaskSpec::full_space(0, 3, 8);
        assert_eq!(match_count(&workers, &t), 1000);
    }

    #[test]
    fn closed_endpoints() {
        let w = WorkerProfile::new(vec![0.5, 0.2]);
        let t = TaskSpec::new(0, vec![(0.5, 0.5), (0.0, 1.0)], 8);
        assert!(matches(&w, &t).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let w = WorkerProfile::new(vec![0.5]);
        let t = TaskSpec::full_space(0, 2, 8);
        assert_eq!(matches(&w, &t), Err(WorkloadError::DimensionMismatch { profile: 1, task: 2 }));
    }

    #[test]
    fn unif_mean_near_half() {
        let workers = gen_unif_workers(100_000, 2, &mut rng(2)).unwrap();
        for d in 0..2 {
            let mean = workers.iter().map(|w| w.skills[d]).sum::<f64>() / 1e5;
            // sd of U[0,1] is 1/√12
            assert!((mean - 0.5).abs() < 3.0 / 12f64.sqrt() / 1e5f64.sqrt());
        }
    }

    #[test]
    fn onespe_single_specialty() {
        let workers = gen_onespe_workers(10_000, 5, &mut rng(3)).unwrap();
        assert!(workers.iter().all(|w| w.skills.iter().filter(|&&s| s >= 0.5).count() == 1));
    }

    #[test]
    fn onespe_task_needs_shared_specialty() {
        let mut r = rng(4);
        let workers = gen_onespe_workers(2000, 4, &mut r).unwrap();
        let tasks = gen_onespe_tasks(200, 4, 8, &mut r).unwrap();
        for t in &tasks {
            let t_spec = t.metadata.iter().position(|&(_, hi)| hi == 1.0).unwrap();
            for w in &workers {
                let w_spec = w.skills.iter().position(|&s| s >= 0.5).unwrap();
                if matches(w, t).unwrap() {
                    assert_eq!(w_spec, t_spec);
                }
            }
        }
    }

    #[test]
    fn ensure_nonempty_resamples() {
        let mut r = rng(5);
        let workers = vec![WorkerProfile::new(vec![0.9, 0.9])];
        let empty = TaskSpec::new(7, vec![(0.0, 0.1), (0.0, 0.1)], 8);
        let full = TaskSpec::full_space(8, 2, 8);
        let out = ensure_nonempty(vec![empty, full.clone()], &workers, TaskGenerator::Unif, 10_000, &mut r).unwrap();
        assert_eq!(out[1], full);
        assert_eq!(out[0].task_id, 7);
        assert!(out.iter().all(|t| match_count(&workers, t) >= 1));
    }

    #[test]
    fn ensure_nonempty_budget_exhausted() {
        // ONESPE tasks can never match a worker without a ≥ 0.5 coordinate
        let workers = vec![WorkerProfile::new(vec![0.1, 0.1])];
        let t = TaskGenerator::OneSpe.sample(3, 2, 8, &mut rng(6));
        let err = ensure_nonempty(vec![t], &workers, TaskGenerator::OneSpe, 50, &mut rng(7)).unwrap_err();
        assert!(matches!(err, WorkloadError::RetryBudgetExhausted { task_id: 3, retries: 50, .. }));
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let mut r = rng(8);
        let workers = gen_unif_workers(50, 3, &mut r).unwrap();
        let tasks = gen_unif_tasks(20, 3, 1234, &mut r).unwrap();
        assert_eq!(read_workers(&write_workers(&workers)).unwrap(), workers);
        assert_eq!(read_tasks(&write_tasks(&tasks)).unwrap(), tasks);
        assert!(read_workers("# pkd-workers v1 dims=2\n0\t0.5\n").is_err());
    }

    #[test]
    fn same_seed_same_data() {
        let a = gen_unif_workers(100, 4, &mut rng(9)).unwrap();
        let b = gen_unif_workers(100, 4, &mut rng(9)).unwrap();
        assert_eq!(write_workers(&a), write_workers(&b));
    }

    proptest::proptest! {
        #[test]
        fn generated_values_in_range(seed in 0u64..1000, dims in 1usize..6) {
            let mut r = rng(seed);
            for w in gen_onespe_workers(50, dims, &mut r).unwrap().iter().chain(gen_unif_workers(50, dims, &mut r).unwrap().iter()) {
                proptest::prop_assert!(w.skills.iter().all(|s| (0.0..=1.0).contains(s)));
            }
            for t in gen_unif_tasks(50, dims, 8, &mut r).unwrap().iter().chain(gen_onespe_tasks(50, dims, 8, &mut r).unwrap().iter()) {
                proptest::prop_assert!(t.metadata.iter().all(|&(lo, hi)| 0.0 <= lo && lo <= hi && hi <= 1.0));
            }
        }
    }
}
