//! Grouping tasks into equal-size PIR items.
//!
//! A packing is partitioned when each bucket owns a region of the skill space,
//! the regions partition the space and every bucket holds exactly the tasks
//! meeting its region. The PKD packing uses the tree leaves as regions.
//!
//! Task ranges follow the same closed-open reading as tree subspaces: `[a, b]`
//! with `a < b` occupies `[a, b)` (closed when `b` is the maximum of the
//! space) and `[a, a]` is the single point `a`.

use std::collections::{BTreeSet, HashMap};

use fixedbitset::FixedBitSet;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{PkdNode, PkdTree, Subspace};
use crate::workload::{TaskSpec, WorkerProfile};

/// Largest instance accepted by [`brute_force_optimal`].
pub const BRUTE_FORCE_MAX_TASKS: usize = 8;

/// Arrangement size above which exhaustive cell enumeration is refused.
pub const MAX_ARRANGEMENT_CELLS: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PackingError {
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("dimension mismatch between tasks and space")]
    DimensionMismatch,
    #[error("malformed bucket encoding: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, PackingError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// Disjoint boxes whose union is the bucket's subspace. PKD buckets own a
    /// single leaf.
    pub region: Vec<Subspace>,
    pub task_ids: BTreeSet<u64>,
    /// Sum of the contained tasks' weights.
    pub raw_size_bits: u64,
    pub padded_size_bits: u64,
}

impl Bucket {
    pub fn contains_point(&self, point: &[f64]) -> bool {
        self.region.iter().any(|s| s.contains(point))
    }

    pub fn len(&self) -> usize {
        self.task_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.task_ids.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Packing {
    pub space: Subspace,
    pub buckets: Vec<Bucket>,
    /// Uniform item size `w_P`.
    pub weight_bits: u64,
}

impl Packing {
    fn from_groups(space: Subspace, groups: Vec<(Vec<Subspace>, BTreeSet<u64>)>, weights: &HashMap<u64, u64>) -> Self {
        let mut buckets: Vec<Bucket> = groups
            .into_iter()
            .map(|(region, task_ids)| {
                let raw = task_ids.iter().map(|id| weights[id]).sum();
                Bucket { region, task_ids, raw_size_bits: raw, padded_size_bits: 0 }
            })
            .collect();
        let weight_bits = buckets.iter().map(|b| b.raw_size_bits).max().unwrap_or(0);
        for b in &mut buckets {
            b.padded_size_bits = weight_bits;
        }
        Packing { space, buckets, weight_bits }
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    /// Size of the library: number of buckets times the uniform size.
    pub fn library_bits(&self) -> u64 {
        self.buckets.len() as u64 * self.weight_bits
    }
}

fn weights_by_id(tasks: &[TaskSpec]) -> HashMap<u64, u64> {
    tasks.iter().map(|t| (t.task_id, t.weight_bits)).collect()
}

/// One bucket per leaf, holding every task that meets the leaf, all padded to
/// the largest bucket.
pub fn pkd_pir_packing(tree: &PkdTree, tasks: &[TaskSpec]) -> Packing {
    let leaves: Vec<&PkdNode> = tree.leaves().collect();
    let mut members: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); leaves.len()];
    fn walk(node: &PkdNode, task: &TaskSpec, index: usize, out: &mut Vec<usize>) {
        if !node.subspace.intersects_task(task) {
            return;
        }
        match &node.children {
            Some(c) => {
                walk(&c[0], task, 2 * index, out);
                walk(&c[1], task, 2 * index + 1, out);
            }
            None => out.push(index),
        }
    }
    let mut hits = Vec::new();
    for task in tasks {
        hits.clear();
        walk(tree.root(), task, 0, &mut hits);
        for &leaf in &hits {
            members[leaf].insert(task.task_id);
        }
    }
    let groups = leaves.iter().zip(members).map(|(leaf, ids)| (vec![leaf.subspace.clone()], ids)).collect();
    Packing::from_groups(tree.root().subspace.clone(), groups, &weights_by_id(tasks))
}

/// Index of the bucket whose region contains the worker.
pub fn assign_bucket(packing: &Packing, profile: &WorkerProfile) -> Option<usize> {
    packing.buckets.iter().position(|b| b.contains_point(&profile.skills))
}

/// Packing condition violated by a [`Violation`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// Every item has the same size.
    UniformSize,
    /// Every bucket is associated with a non-empty subspace of the space.
    Association,
    /// A bucket holds exactly the tasks meeting its subspace.
    ExactMembership,
    /// The subspaces cover the space.
    Coverage,
    /// The subspaces do not intersect.
    Disjointness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    PaddingMismatch { bucket: usize, padded_bits: u64, weight_bits: u64 },
    Oversized { bucket: usize, raw_bits: u64, weight_bits: u64 },
    RawSizeMismatch { bucket: usize, declared_bits: u64, actual_bits: u64 },
    EmptyRegion { bucket: usize },
    OutsideSpace { bucket: usize },
    UnknownTask { bucket: usize, task_id: u64 },
    MissingTask { bucket: usize, task_id: u64 },
    ExtraTask { bucket: usize, task_id: u64 },
    Uncovered { covered_volume: f64, space_volume: f64 },
    Overlap { first: usize, second: usize },
}

impl Violation {
    pub fn condition(&self) -> Condition {
        match self {
            Violation::PaddingMismatch { .. } | Violation::Oversized { .. } | Violation::RawSizeMismatch { .. } => {
                Condition::UniformSize
            }
            Violation::EmptyRegion { .. } | Violation::OutsideSpace { .. } => Condition::Association,
            Violation::UnknownTask { .. } | Violation::MissingTask { .. } | Violation::ExtraTask { .. } => {
                Condition::ExactMembership
            }
            Violation::Uncovered { .. } => Condition::Coverage,
            Violation::Overlap { .. } => Condition::Disjointness,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PackingVerdict {
    pub violations: Vec<Violation>,
}

impl PackingVerdict {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

fn region_intersects(region: &[Subspace], task: &TaskSpec) -> bool {
    region.iter().any(|s| s.intersects_task(task))
}

fn box_within(inner: &Subspace, outer: &Subspace) -> bool {
    inner.bounds().iter().zip(outer.bounds()).enumerate().all(|(d, (&(a, b), &(lo, hi)))| {
        lo <= a && b <= hi && (!inner.is_closed_upper(d) || (b == hi && outer.is_closed_upper(d)))
    })
}

/// Checks a packing against the uniform-size and partition conditions and
/// lists every violation found.
///
/// The availability condition (every point finds all its tasks in one bucket)
/// follows from exact membership plus coverage and is not checked separately.
pub fn check_packing(packing: &Packing, tasks: &[TaskSpec]) -> PackingVerdict {
    let mut violations = Vec::new();
    let by_id: HashMap<u64, &TaskSpec> = tasks.iter().map(|t| (t.task_id, t)).collect();

    for (i, b) in packing.buckets.iter().enumerate() {
        if b.padded_size_bits != packing.weight_bits {
            violations.push(Violation::PaddingMismatch { bucket: i, padded_bits: b.padded_size_bits, weight_bits: packing.weight_bits });
        }
        let actual: u64 = b.task_ids.iter().filter_map(|id| by_id.get(id)).map(|t| t.weight_bits).sum();
        if actual != b.raw_size_bits {
            violations.push(Violation::RawSizeMismatch { bucket: i, declared_bits: b.raw_size_bits, actual_bits: actual });
        }
        if actual > packing.weight_bits {
            violations.push(Violation::Oversized { bucket: i, raw_bits: actual, weight_bits: packing.weight_bits });
        }
    }
    for (i, b) in packing.buckets.iter().enumerate() {
        if b.region.is_empty() {
            violations.push(Violation::EmptyRegion { bucket: i });
        }
        if b.region.iter().any(|s| s.dims() != packing.space.dims() || !box_within(s, &packing.space)) {
            violations.push(Violation::OutsideSpace { bucket: i });
        }
    }
    for (i, b) in packing.buckets.iter().enumerate() {
        for id in &b.task_ids {
            match by_id.get(id) {
                None => violations.push(Violation::UnknownTask { bucket: i, task_id: *id }),
                Some(t) if !region_intersects(&b.region, t) => violations.push(Violation::ExtraTask { bucket: i, task_id: *id }),
                Some(_) => {}
            }
        }
        for t in tasks {
            if !b.task_ids.contains(&t.task_id) && region_intersects(&b.region, t) {
                violations.push(Violation::MissingTask { bucket: i, task_id: t.task_id });
            }
        }
    }
    let boxes: Vec<(usize, &Subspace)> =
        packing.buckets.iter().enumerate().flat_map(|(i, b)| b.region.iter().map(move |s| (i, s))).collect();
    let mut overlapping = BTreeSet::new();
    for (x, &(i, a)) in boxes.iter().enumerate() {
        for &(j, b) in &boxes[x + 1..] {
            if a.dims() == b.dims() && !a.is_disjoint(b) {
                overlapping.insert((i.min(j), i.max(j)));
            }
        }
    }
    violations.extend(overlapping.into_iter().map(|(first, second)| Violation::Overlap { first, second }));
    let covered: f64 = boxes.iter().map(|(_, s)| s.volume()).sum();
    let space_volume = packing.space.volume();
    // Disjoint boxes inside the space cover it iff their volumes add up.
    if (covered - space_volume).abs() > 1e-9 * space_volume {
        violations.push(Violation::Uncovered { covered_volume: covered, space_volume });
    }
    PackingVerdict { violations }
}

/// Per-dimension breakpoints of the task arrangement inside the space.
fn breakpoints(tasks: &[TaskSpec], space: &Subspace) -> Vec<Vec<f64>> {
    (0..space.dims())
        .map(|d| {
            let (lo, hi) = space.interval(d);
            let mut e: Vec<f64> = tasks
                .iter()
                .flat_map(|t| [t.metadata[d].0, t.metadata[d].1])
                .filter(|&x| lo < x && x < hi)
                .chain([lo, hi])
                .collect();
            e.sort_by(f64::total_cmp);
            e.dedup();
            e
        })
        .collect()
}

/// One-dimensional cells `[e_k, e_{k+1})` (the last closed when the space is)
/// with the set of tasks meeting each of them on dimension `d`.
fn dimension_cells(tasks: &[TaskSpec], space: &Subspace, d: usize, e: &[f64]) -> Vec<((f64, f64, bool), FixedBitSet)> {
    (0..e.len() - 1)
        .map(|k| {
            let closed = k + 2 == e.len() && space.is_closed_upper(d);
            let (lo, hi) = (e[k], e[k + 1]);
            let mut set = FixedBitSet::with_capacity(tasks.len());
            for (i, t) in tasks.iter().enumerate() {
                let (a, b) = t.metadata[d];
                let meets = if a < b { a < hi && b > lo } else { lo <= a && (a < hi || (closed && a == hi)) };
                set.set(i, meets);
            }
            ((lo, hi, closed), set)
        })
        .collect()
}

fn set_weight(set: &FixedBitSet, tasks: &[TaskSpec]) -> u64 {
    set.ones().map(|i| tasks[i].weight_bits).sum()
}

fn check_dims(tasks: &[TaskSpec], space: &Subspace) -> Result<()> {
    if tasks.iter().any(|t| t.dims() != space.dims()) {
        return Err(PackingError::DimensionMismatch);
    }
    Ok(())
}

/// Minimal weight `m_T`: the largest total weight of tasks covering a single
/// point of the space, found by a pruned sweep over the arrangement cells.
pub fn min_weight(tasks: &[TaskSpec], space: &Subspace) -> Result<u64> {
    check_dims(tasks, space)?;
    let e = breakpoints(tasks, space);
    let cells: Vec<Vec<FixedBitSet>> = (0..space.dims())
        .map(|d| {
            let mut c: Vec<FixedBitSet> = dimension_cells(tasks, space, d, &e[d]).into_iter().map(|(_, s)| s).collect();
            c.sort_by_key(|s| std::cmp::Reverse(set_weight(s, tasks)));
            c.dedup();
            c
        })
        .collect();
    fn sweep(d: usize, current: &FixedBitSet, cells: &[Vec<FixedBitSet>], tasks: &[TaskSpec], best: &mut u64) {
        if d == cells.len() {
            *best = (*best).max(set_weight(current, tasks));
            return;
        }
        for c in &cells[d] {
            let mut s = current.clone();
            s.intersect_with(c);
            if set_weight(&s, tasks) > *best {
                sweep(d + 1, &s, cells, tasks, best);
            }
        }
    }
    let mut all = FixedBitSet::with_capacity(tasks.len());
    all.insert_range(..);
    let mut best = 0;
    sweep(0, &all, &cells, tasks, &mut best);
    Ok(best)
}

/// `w_P = m_T`.
pub fn is_acceptable(packing: &Packing, tasks: &[TaskSpec]) -> Result<bool> {
    Ok(packing.weight_bits == min_weight(tasks, &packing.space)?)
}

/// Every box of the task arrangement with the tasks meeting it.
pub fn arrangement_cells(tasks: &[TaskSpec], space: &Subspace) -> Result<Vec<(Subspace, FixedBitSet)>> {
    check_dims(tasks, space)?;
    let e = breakpoints(tasks, space);
    let per_dim: Vec<_> = (0..space.dims()).map(|d| dimension_cells(tasks, space, d, &e[d])).collect();
    let total = per_dim.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.len()));
    if total.is_none_or(|n| n > MAX_ARRANGEMENT_CELLS) {
        return Err(PackingError::TooLarge(format!("arrangement has more than {MAX_ARRANGEMENT_CELLS} cells")));
    }
    let mut out = Vec::with_capacity(total.unwrap_or(0));
    let mut index = vec![0usize; space.dims()];
    loop {
        let mut set = FixedBitSet::with_capacity(tasks.len());
        set.insert_range(..);
        let mut bounds = Vec::with_capacity(space.dims());
        let mut closed = Vec::with_capacity(space.dims());
        for (d, &k) in index.iter().enumerate() {
            let ((lo, hi, c), s) = &per_dim[d][k];
            set.intersect_with(s);
            bounds.push((*lo, *hi));
            closed.push(*c);
        }
        out.push((Subspace::new(bounds, closed).expect("breakpoints are strictly increasing"), set));
        let mut d = 0;
        loop {
            if d == index.len() {
                return Ok(out);
            }
            index[d] += 1;
            if index[d] < per_dim[d].len() {
                break;
            }
            index[d] = 0;
            d += 1;
        }
    }
}

/// Consistency: for every task `t` in a bucket `b`, some point matching `t`
/// has all of its tasks in `b`.
pub fn is_consistent(packing: &Packing, tasks: &[TaskSpec]) -> Result<bool> {
    let cells = arrangement_cells(tasks, &packing.space)?;
    let index: HashMap<u64, usize> = tasks.iter().enumerate().map(|(i, t)| (t.task_id, i)).collect();
    Ok(packing.buckets.iter().all(|b| {
        let mut bucket_set = FixedBitSet::with_capacity(tasks.len());
        for id in &b.task_ids {
            if let Some(&i) = index.get(id) {
                bucket_set.insert(i);
            }
        }
        b.task_ids.iter().all(|id| {
            index.get(id).is_some_and(|&i| cells.iter().any(|(_, s)| s.contains(i) && s.is_subset(&bucket_set)))
        })
    }))
}

/// Acceptable partitioned packing with the fewest buckets, searched
/// exhaustively over groupings of the arrangement cells. Returns `None` when
/// no acceptable packing has at most `max_buckets` buckets.
///
/// Cells whose task set is contained in another cell's can always join that
/// cell's bucket without changing it, so only maximal task sets are grouped.
pub fn brute_force_optimal(tasks: &[TaskSpec], space: &Subspace, max_buckets: Option<usize>) -> Result<Option<Packing>> {
    if tasks.len() > BRUTE_FORCE_MAX_TASKS {
        return Err(PackingError::TooLarge(format!("{} tasks, at most {BRUTE_FORCE_MAX_TASKS} supported", tasks.len())));
    }
    let cells = arrangement_cells(tasks, space)?;
    let m_t = min_weight(tasks, space)?;

    let mut by_set: Vec<(FixedBitSet, Vec<Subspace>)> = Vec::new();
    for (cell, set) in cells {
        match by_set.iter_mut().find(|(s, _)| *s == set) {
            Some((_, region)) => region.push(cell),
            None => by_set.push((set, vec![cell])),
        }
    }
    let is_maximal = |i: usize| {
        !by_set.iter().enumerate().any(|(j, (s, _))| j != i && by_set[i].0.is_subset(s) && by_set[i].0 != *s)
    };
    let maximal: Vec<usize> = (0..by_set.len()).filter(|&i| is_maximal(i)).collect();
    let cap = max_buckets.unwrap_or(maximal.len()).min(maximal.len());

    fn assign(
        next: usize,
        maximal: &[usize],
        sets: &[(FixedBitSet, Vec<Subspace>)],
        groups: &mut Vec<(FixedBitSet, Vec<usize>)>,
        k: usize,
        m_t: u64,
        tasks: &[TaskSpec],
    ) -> bool {
        if next == maximal.len() {
            return groups.len() == k;
        }
        // too few sets left to open the remaining groups
        if maximal.len() - next < k - groups.len() {
            return false;
        }
        let set = &sets[maximal[next]].0;
        for g in 0..groups.len() {
            let mut union = groups[g].0.clone();
            union.union_with(set);
            if set_weight(&union, tasks) <= m_t {
                let saved = std::mem::replace(&mut groups[g].0, union);
                groups[g].1.push(maximal[next]);
                if assign(next + 1, maximal, sets, groups, k, m_t, tasks) {
                    return true;
                }
                groups[g].1.pop();
                groups[g].0 = saved;
            }
        }
        if groups.len() < k {
            groups.push((set.clone(), vec![maximal[next]]));
            if assign(next + 1, maximal, sets, groups, k, m_t, tasks) {
                return true;
            }
            groups.pop();
        }
        false
    }

    for k in 1..=cap {
        let mut groups = Vec::new();
        if !assign(0, &maximal, &by_set, &mut groups, k, m_t, tasks) {
            continue;
        }
        // attach every non-maximal cell set to the first group containing it
        let mut regions: Vec<Vec<Subspace>> = groups.iter().map(|(_, members)| {
            members.iter().flat_map(|&i| by_set[i].1.iter().cloned()).collect()
        }).collect();
        for (i, (set, region)) in by_set.iter().enumerate() {
            if maximal.contains(&i) {
                continue;
            }
            let g = groups.iter().position(|(u, _)| set.is_subset(u)).expect("every set lies under a maximal one");
            regions[g].extend(region.iter().cloned());
        }
        let packed = groups
            .iter()
            .zip(regions)
            .map(|((union, _), region)| (region, union.ones().map(|i| tasks[i].task_id).collect()))
            .collect();
        return Ok(Some(Packing::from_groups(space.clone(), packed, &weights_by_id(tasks))));
    }
    Ok(None)
}

/// Largest number of tasks in one bucket.
pub fn max_tasks(packing: &Packing) -> usize {
    packing.buckets.iter().map(Bucket::len).max().unwrap_or(0)
}

/// Deterministic pseudo-random payload of the task's declared size.
pub fn task_payload(task: &TaskSpec, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(task.task_id);
    let mut bytes = vec![0u8; task.weight_bytes()];
    rng.fill_bytes(&mut bytes);
    bytes
}

/// Wire layout of a bucket: `u32` task count, then per task `u64` id, `u32`
/// length and payload, all big-endian. Padding is added by the PIR library.
pub fn encode_bucket(bucket: &Bucket, payload: impl Fn(u64) -> Vec<u8>) -> Vec<u8> {
    let mut out = (bucket.task_ids.len() as u32).to_be_bytes().to_vec();
    for &id in &bucket.task_ids {
        let body = payload(id);
        out.extend_from_slice(&id.to_be_bytes());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    out
}

/// Inverse of [`encode_bucket`]; trailing zero padding is ignored.
pub fn decode_bucket(bytes: &[u8]) -> Result<Vec<(u64, Vec<u8>)>> {
    fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
        if bytes.len() < n {
            return Err(PackingError::Format("truncated bucket".into()));
        }
        let (head, tail) = bytes.split_at(n);
        *bytes = tail;
        Ok(head)
    }
    let mut rest = bytes;
    let count = u32::from_be_bytes(take(&mut rest, 4)?.try_into().expect("4 bytes"));
    (0..count)
        .map(|_| {
            let id = u64::from_be_bytes(take(&mut rest, 8)?.try_into().expect("8 bytes"));
            let len = u32::from_be_bytes(take(&mut rest, 4)?.try_into().expect("4 bytes")) as usize;
            Ok((id, take(&mut rest, len)?.to_vec()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub bucket: usize,
    pub bounds: Vec<Vec<(f64, f64)>>,
    pub task_ids: Vec<u64>,
    pub raw_size_bits: u64,
}

/// Bucket index ↔ region and contents, for the harness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingManifest {
    pub weight_bits: u64,
    pub buckets: Vec<ManifestEntry>,
}

impl Packing {
    pub fn manifest(&self) -> PackingManifest {
        PackingManifest {
            weight_bits: self.weight_bits,
            buckets: self
                .buckets
                .iter()
                .enumerate()
                .map(|(i, b)| ManifestEntry {
                    bucket: i,
                    bounds: b.region.iter().map(|s| s.bounds().to_vec()).collect(),
                    task_ids: b.task_ids.iter().copied().collect(),
                    raw_size_bits: b.raw_size_bits,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: u64, meta: Vec<(f64, f64)>, w: u64) -> TaskSpec {
        TaskSpec::new(id, meta, w)
    }

    /// Tasks `[i, i+1)` with the given weights plus a last one, over `[0, N+1)`.
    fn reduction(weights: &[u64], sentinel: u64) -> (Vec<TaskSpec>, Subspace) {
        let mut tasks: Vec<TaskSpec> =
            weights.iter().enumerate().map(|(i, &w)| task(i as u64, vec![(i as f64, i as f64 + 1.0)], w)).collect();
        let n = weights.len() as f64;
        tasks.push(task(weights.len() as u64, vec![(n, n + 1.0)], sentinel));
        (tasks, Subspace::space(vec![(0.0, n + 1.0)]))
    }

    #[test]
    fn min_weight_basic_cases() {
        let space = Subspace::unit(1);
        let disjoint = [task(0, vec![(0.0, 0.2)], 5), task(1, vec![(0.5, 0.7)], 9)];
        assert_eq!(min_weight(&disjoint, &space).unwrap(), 9);
        let same = [task(0, vec![(0.1, 0.4)], 3), task(1, vec![(0.1, 0.4)], 4)];
        assert_eq!(min_weight(&same, &space).unwrap(), 7);
        // touching at 0.5: half-open, no shared point
        let touching = [task(0, vec![(0.0, 0.5)], 3), task(1, vec![(0.5, 1.0)], 4)];
        assert_eq!(min_weight(&touching, &space).unwrap(), 4);
        // a point task on the boundary shares the point with the right task
        let point = [task(0, vec![(0.0, 0.5)], 3), task(1, vec![(0.5, 1.0)], 4), task(2, vec![(0.5, 0.5)], 2)];
        assert_eq!(min_weight(&point, &space).unwrap(), 6);
        assert_eq!(min_weight(&[], &space).unwrap(), 0);
    }

    #[test]
    fn reduction_instance() {
        let (tasks, space) = reduction(&[1, 2, 3], 3);
        assert_eq!(min_weight(&tasks, &space).unwrap(), 3);
        let best = brute_force_optimal(&tasks, &space, None).unwrap().unwrap();
        assert_eq!(best.len(), 3);
        assert!(is_acceptable(&best, &tasks).unwrap());
        assert!(check_packing(&best, &tasks).is_valid());
        assert!(brute_force_optimal(&tasks, &space, Some(2)).unwrap().is_none());
    }

    #[test]
    fn single_task() {
        let tasks = [task(0, vec![(0.2, 0.6), (0.1, 0.3)], 10)];
        let best = brute_force_optimal(&tasks, &Subspace::unit(2), None).unwrap().unwrap();
        assert_eq!(best.len(), 1);
        assert!(is_acceptable(&best, &tasks).unwrap());
    }

    #[test]
    fn too_many_tasks() {
        let tasks: Vec<TaskSpec> = (0..9).map(|i| task(i, vec![(0.0, 1.0)], 1)).collect();
        assert!(matches!(brute_force_optimal(&tasks, &Subspace::unit(1), None), Err(PackingError::TooLarge(_))));
    }

    #[test]
    fn mutations_are_reported() {
        let (tasks, space) = reduction(&[1, 2, 3], 3);
        let good = brute_force_optimal(&tasks, &space, None).unwrap().unwrap();

        let mut missing = good.clone();
        let b = missing.buckets.iter().position(|b| b.len() == 2).unwrap();
        let removed = *missing.buckets[b].task_ids.iter().next().unwrap();
        missing.buckets[b].task_ids.remove(&removed);
        missing.buckets[b].raw_size_bits -= tasks[removed as usize].weight_bits;
        let v = check_packing(&missing, &tasks);
        assert_eq!(v.first(), Some(&Violation::MissingTask { bucket: b, task_id: removed }));

        let mut overlap = good.clone();
        let extra = overlap.buckets[1].region[0].clone();
        overlap.buckets[0].region.push(extra);
        let v = check_packing(&overlap, &tasks);
        assert!(v.violations.iter().any(|x| x.condition() == Condition::Disjointness));

        let mut uneven = good;
        uneven.buckets[0].padded_size_bits += 1;
        assert_eq!(check_packing(&uneven, &tasks).first().unwrap().condition(), Condition::UniformSize);
    }

    #[test]
    fn bucket_wire_roundtrip() {
        let tasks = [task(3, vec![(0.0, 1.0)], 20), task(9, vec![(0.0, 1.0)], 64)];
        let b = Bucket {
            region: vec![Subspace::unit(1)],
            task_ids: [3, 9].into_iter().collect(),
            raw_size_bits: 84,
            padded_size_bits: 84,
        };
        let mut wire = encode_bucket(&b, |id| task_payload(tasks.iter().find(|t| t.task_id == id).unwrap(), 7));
        wire.extend_from_slice(&[0; 16]);
        let decoded = decode_bucket(&wire).unwrap();
        assert_eq!(decoded.len(), 2);
        assert_eq!(decoded[0], (3, task_payload(&tasks[0], 7)));
        assert_eq!(decoded[1].1.len(), 8);
        assert_ne!(task_payload(&tasks[0], 7), task_payload(&tasks[0], 8));
    }

    #[test]
    fn consistency_checker() {
        let (tasks, space) = reduction(&[1, 2, 3], 3);
        let best = brute_force_optimal(&tasks, &space, None).unwrap().unwrap();
        assert!(is_consistent(&best, &tasks).unwrap());
        // every point of `a` also matches `b`, so a bucket holding `a`
        // without `b` serves nobody
        let tasks = [task(0, vec![(0.0, 0.5)], 1), task(1, vec![(0.0, 1.0)], 1)];
        let space = Subspace::unit(1);
        let bucket = |ids: &[u64]| Bucket {
            region: vec![space.clone()],
            task_ids: ids.iter().copied().collect(),
            raw_size_bits: ids.len() as u64,
            padded_size_bits: 2,
        };
        let p = Packing { space: space.clone(), buckets: vec![bucket(&[0]), bucket(&[0, 1])], weight_bits: 2 };
        assert!(!is_consistent(&p, &tasks).unwrap());
        let p = Packing { space: space.clone(), buckets: vec![bucket(&[1]), bucket(&[0, 1])], weight_bits: 2 };
        assert!(is_consistent(&p, &tasks).unwrap());
    }
}
