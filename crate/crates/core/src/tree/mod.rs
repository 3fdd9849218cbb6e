//! The PKD tree: a KD-tree of the skill space whose splits are private
//! medians and whose node counts are private sums.

mod budget;
mod subspace;

pub use budget::{allocate_budget, BudgetPlan, COUNT_SHARE};
pub use subspace::Subspace;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::{NoiseError, NoiseParams};
use crate::protocol::{priv_med_members, run_private_sum, select_decryptors, MessageLog, ProtocolError, SumBackend};
use crate::workload::{TaskSpec, WorkerProfile};

pub const TREE_FORMAT_VERSION: u32 = 1;

/// Intervals narrower than this are split at their midpoint without a
/// private median.
pub const MIN_SPLIT_WIDTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("invalid tree parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("malformed tree: {0}")]
    Structure(String),
    #[error("cannot read tree: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, TreeError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub dim: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PkdNode {
    pub subspace: Subspace,
    /// Decrypted perturbed count.
    pub raw_count: f64,
    /// Count after constrained inference; equal to `raw_count` before it.
    pub count: f64,
    pub split: Option<Split>,
    pub children: Option<Box<[PkdNode; 2]>>,
}

impl PkdNode {
    fn leaf(subspace: Subspace, raw_count: f64) -> Self {
        Self { subspace, raw_count, count: raw_count, split: None, children: None }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PkdTree {
    format_version: u32,
    dims: usize,
    depth: usize,
    bins: usize,
    budget: BudgetPlan,
    /// Variance of one count query per level (index = level), used to weight
    /// constrained inference.
    count_variance_by_level: Vec<f64>,
    post_processed: bool,
    root: PkdNode,
}

/// Parameters of one tree construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PkdParams {
    pub depth: usize,
    pub bins: usize,
    pub epsilon: f64,
    pub tau: usize,
    /// Split dimensions, cycled round-robin from the root.
    pub dim_order: Vec<usize>,
}

impl PkdParams {
    /// Round-robin over all `dims` dimensions in index order.
    pub fn new(depth: usize, bins: usize, epsilon: f64, tau: usize, dims: usize) -> Self {
        Self { depth, bins, epsilon, tau, dim_order: (0..dims).collect() }
    }
}

/// A built tree with the protocol trace that produced it.
#[derive(Clone, Debug)]
pub struct PkdBuild {
    pub tree: PkdTree,
    pub log: MessageLog,
    pub decryptors: Vec<usize>,
    pub count_queries: usize,
    pub median_queries: usize,
    /// Internal nodes split at the midpoint by the zero-width guard.
    pub skipped_medians: usize,
}

/// Builds a PKD tree of depth `params.depth` over `workers`.
///
/// The root count and every child count are dedicated private sums; splits are
/// private medians over the leaf's interval on the level's dimension, with
/// workers at the split value going right. The returned tree carries raw
/// counts; see [`post_process`].
pub fn build_pkd<B: SumBackend + ?Sized>(
    workers: &[WorkerProfile],
    params: &PkdParams,
    backend: &B,
    rng: &mut dyn RngCore,
) -> Result<PkdBuild> {
    let n = workers.len();
    let dims = workers.first().map_or(0, WorkerProfile::dims);
    if dims == 0 || workers.iter().any(|w| w.dims() != dims) {
        return Err(TreeError::InvalidParameter("workers must be non-empty with a common, positive dimension".into()));
    }
    if let Some(w) = workers.iter().position(|w| w.skills.iter().any(|s| !(0.0..=1.0).contains(s))) {
        return Err(TreeError::InvalidParameter(format!("worker {w} has a skill outside [0, 1]")));
    }
    if params.dim_order.is_empty() || params.dim_order.iter().any(|&d| d >= dims) {
        return Err(TreeError::InvalidParameter(format!("dim_order must be non-empty with entries below {dims}")));
    }
    if params.bins == 0 {
        return Err(TreeError::InvalidParameter("need at least one histogram bin".into()));
    }
    if backend.threshold() <= params.tau || n <= params.tau {
        return Err(TreeError::InvalidParameter(format!(
            "need tau < T and tau < |P|, got tau = {}, T = {}, |P| = {n}",
            params.tau,
            backend.threshold()
        )));
    }
    let h = params.depth;
    let budget = allocate_budget(params.epsilon, h)?;
    let decryptors = select_decryptors(backend, n, rng)?;
    let mut log = MessageLog::new(n);
    let mut count_queries = 0;
    let mut median_queries = 0;
    let mut skipped_medians = 0;

    let mut count = |members: &[usize], eps: f64, log: &mut MessageLog, rng: &mut dyn RngCore| -> Result<f64> {
        let mut bits = vec![false; n];
        for &w in members {
            bits[w] = true;
        }
        let noise = NoiseParams::new(eps, n, params.tau)?;
        count_queries += 1;
        Ok(run_private_sum(&bits, &noise, backend, &decryptors, log, rng)? as f64)
    };

    let everyone: Vec<usize> = (0..n).collect();
    let root_count = count(&everyone, budget.count_epsilon(h), &mut log, rng)?;
    let mut root = PkdNode::leaf(Subspace::unit(dims), root_count);

    // Frontier of (path from the root as left/right choices, members).
    let mut frontier: Vec<(Vec<bool>, Vec<usize>)> = vec![(Vec::new(), everyone)];
    for d in 0..h {
        let level = h - d;
        let dim = params.dim_order[d % params.dim_order.len()];
        let med_noise = NoiseParams::new(budget.median_epsilon(level), n, params.tau)?;
        let eps_c = budget.count_epsilon(level - 1);
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for (path, members) in frontier {
            let node = node_at_mut(&mut root, &path);
            let (lo, hi) = node.subspace.interval(dim);
            let midpoint = lo + (hi - lo) / 2.0;
            let split_value = if hi - lo < MIN_SPLIT_WIDTH {
                skipped_medians += 1;
                midpoint
            } else {
                let values: Vec<(usize, f64)> = members.iter().map(|&w| (w, workers[w].skills[dim])).collect();
                median_queries += 1;
                let (m, _) = priv_med_members(&values, (lo, hi), params.bins, &med_noise, backend, &decryptors, &mut log, rng)?;
                if lo < m && m < hi {
                    m
                } else {
                    midpoint
                }
            };
            let (left_space, right_space) = node.subspace.split(dim, split_value).ok_or_else(|| {
                TreeError::Structure(format!("cannot split [{lo}, {hi}) at {split_value}: interval below float resolution"))
            })?;
            let (left_members, right_members): (Vec<usize>, Vec<usize>) =
                members.iter().partition(|&&w| workers[w].skills[dim] < split_value);
            let left_count = count(&left_members, eps_c, &mut log, rng)?;
            let right_count = count(&right_members, eps_c, &mut log, rng)?;
            node.split = Some(Split { dim, value: split_value });
            node.children = Some(Box::new([PkdNode::leaf(left_space, left_count), PkdNode::leaf(right_space, right_count)]));
            let mut left_path = path.clone();
            left_path.push(false);
            let mut right_path = path;
            right_path.push(true);
            next.push((left_path, left_members));
            next.push((right_path, right_members));
        }
        frontier = next;
    }

    let count_variance_by_level = (0..=h)
        .map(|i| {
            if backend.adds_noise() {
                Ok(NoiseParams::new(budget.count_epsilon(i), n, params.tau)?.total_noise_variance().max(f64::MIN_POSITIVE))
            } else {
                Ok(1.0)
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    let tree = PkdTree {
        format_version: TREE_FORMAT_VERSION,
        dims,
        depth: h,
        bins: params.bins,
        budget,
        count_variance_by_level,
        post_processed: false,
        root,
    };
    Ok(PkdBuild { tree, log, decryptors, count_queries, median_queries, skipped_medians })
}

fn node_at_mut<'a>(root: &'a mut PkdNode, path: &[bool]) -> &'a mut PkdNode {
    path.iter().fold(root, |node, &right| &mut node.children.as_mut().expect("path follows existing nodes")[right as usize])
}

/// Constrained inference: replaces every count by its generalised least
/// squares estimate under the constraint that each parent equals the sum of
/// its children, weighting levels by their noise variance.
///
/// Bottom-up, each node combines its own observation `y` (variance `σ²`) with
/// the sum of its children's estimates (variance `V_s`):
/// `z = (y/σ² + s/V_s) / (1/σ² + 1/V_s)`. Top-down, the gap between a
/// parent's final value and its children's sum is shared in proportion to the
/// children's variances.
pub fn post_process(mut tree: PkdTree) -> PkdTree {
    let sigma2 = tree.count_variance_by_level.clone();
    // Variance of the bottom-up estimate per level.
    let mut v = vec![0.0; sigma2.len()];
    v[0] = sigma2[0];
    for i in 1..sigma2.len() {
        let vs = 2.0 * v[i - 1];
        v[i] = 1.0 / (1.0 / sigma2[i] + 1.0 / vs);
    }
    fn up(node: &mut PkdNode, level: usize, sigma2: &[f64], v: &[f64]) -> f64 {
        let Some(children) = node.children.as_mut() else {
            node.count = node.raw_count;
            return node.count;
        };
        let s = up(&mut children[0], level - 1, sigma2, v) + up(&mut children[1], level - 1, sigma2, v);
        let vs = 2.0 * v[level - 1];
        node.count = (node.raw_count / sigma2[level] + s / vs) / (1.0 / sigma2[level] + 1.0 / vs);
        node.count
    }
    fn down(node: &mut PkdNode) {
        let parent = node.count;
        if let Some(children) = node.children.as_mut() {
            // Siblings sit on the same level, so their variances are equal.
            let gap = parent - children[0].count - children[1].count;
            children[0].count += gap / 2.0;
            children[1].count = parent - children[0].count;
            down(&mut children[0]);
            down(&mut children[1]);
        }
    }
    let depth = tree.depth;
    up(&mut tree.root, depth, &sigma2, &v);
    down(&mut tree.root);
    tree.post_processed = true;
    tree
}

/// Estimated number of workers matching `task`, assuming workers are spread
/// uniformly inside each leaf.
pub fn estimate_matching(tree: &PkdTree, task: &TaskSpec) -> f64 {
    fn walk(node: &PkdNode, task: &TaskSpec) -> f64 {
        if node.subspace.overlap_volume(task) == 0.0 {
            return 0.0;
        }
        match &node.children {
            Some(children) => walk(&children[0], task) + walk(&children[1], task),
            None => node.count * node.subspace.overlap_volume(task) / node.subspace.volume(),
        }
    }
    walk(&tree.root, task)
}

impl PkdTree {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn budget(&self) -> &BudgetPlan {
        &self.budget
    }

    pub fn root(&self) -> &PkdNode {
        &self.root
    }

    pub fn is_post_processed(&self) -> bool {
        self.post_processed
    }

    pub fn count_variance(&self, level: usize) -> f64 {
        self.count_variance_by_level[level]
    }

    pub fn num_leaves(&self) -> usize {
        1 << self.depth
    }

    /// Leaves from left to right.
    pub fn leaves(&self) -> impl Iterator<Item = &PkdNode> {
        self.nodes_preorder().into_iter().filter(|n| n.is_leaf())
    }

    /// All nodes, parents before children, left subtree first.
    pub fn nodes_preorder(&self) -> Vec<&PkdNode> {
        let mut out = Vec::with_capacity((2 << self.depth) - 1);
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            out.push(node);
            if let Some(children) = &node.children {
                stack.push(&children[1]);
                stack.push(&children[0]);
            }
        }
        out
    }

    /// Index (left to right) of the leaf containing `point`.
    pub fn leaf_index(&self, point: &[f64]) -> Option<usize> {
        if !self.root.subspace.contains(point) {
            return None;
        }
        let mut node = &self.root;
        let mut index = 0;
        while let (Some(split), Some(children)) = (&node.split, &node.children) {
            let right = point[split.dim] >= split.value;
            index = 2 * index + right as usize;
            node = &children[right as usize];
        }
        Some(index)
    }

    /// Exact worker count of every node, in [`Self::nodes_preorder`] order.
    pub fn true_counts(&self, workers: &[WorkerProfile]) -> Vec<f64> {
        self.nodes_preorder()
            .iter()
            .map(|node| workers.iter().filter(|w| node.subspace.contains(&w.skills)).count() as f64)
            .collect()
    }

    /// Checks that every leaf sits at depth `h` and every split partitions
    /// its parent, so the leaves partition the unit cube.
    pub fn check_structure(&self) -> Result<()> {
        if self.root.subspace != Subspace::unit(self.dims) {
            return Err(TreeError::Structure("root does not cover the unit cube".into()));
        }
        fn check(node: &PkdNode, remaining: usize) -> std::result::Result<(), String> {
            match (&node.split, &node.children) {
                (None, None) if remaining == 0 => Ok(()),
                (None, None) => Err(format!("leaf {:?} is {remaining} levels too shallow", node.subspace.bounds())),
                (Some(split), Some(children)) if remaining > 0 => {
                    let expected = node
                        .subspace
                        .split(split.dim, split.value)
                        .ok_or_else(|| format!("split {split:?} outside its node"))?;
                    if children[0].subspace != expected.0 || children[1].subspace != expected.1 {
                        return Err(format!("children of {:?} do not partition it at {split:?}", node.subspace.bounds()));
                    }
                    check(&children[0], remaining - 1)?;
                    check(&children[1], remaining - 1)
                }
                _ => Err(format!("node {:?} has inconsistent split data or depth", node.subspace.bounds())),
            }
        }
        check(&self.root, self.depth).map_err(TreeError::Structure)
    }

    /// Largest `|parent − (left + right)|` over internal nodes.
    pub fn max_consistency_gap(&self) -> f64 {
        self.nodes_preorder()
            .iter()
            .filter_map(|n| n.children.as_ref().map(|c| (n.count - c[0].count - c[1].count).abs()))
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tree: PkdTree = serde_json::from_str(text).map_err(|e| TreeError::Format(e.to_string()))?;
        if tree.format_version != TREE_FORMAT_VERSION {
            return Err(TreeError::Format(format!("unsupported tree format version {}", tree.format_version)));
        }
        tree.check_structure()?;
        Ok(tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::PlaintextBackend;
    use crate::workload::gen_unif_workers;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn manual_tree(raw: [f64; 3], variances: Vec<f64>) -> PkdTree {
        let (l, r) = Subspace::unit(1).split(0, 0.5).unwrap();
        let mut root = PkdNode::leaf(Subspace::unit(1), raw[0]);
        root.split = Some(Split { dim: 0, value: 0.5 });
        root.children = Some(Box::new([PkdNode::leaf(l, raw[1]), PkdNode::leaf(r, raw[2])]));
        PkdTree {
            format_version: TREE_FORMAT_VERSION,
            dims: 1,
            depth: 1,
            bins: 2,
            budget: allocate_budget(1.0, 1).unwrap(),
            count_variance_by_level: variances,
            post_processed: false,
            root,
        }
    }

    #[test]
    fn gls_by_hand() {
        // minimise (a+b−10)² + (a−7)² + (b−5)²: a = 19/3, b = 13/3
        let t = post_process(manual_tree([10.0, 7.0, 5.0], vec![1.0, 1.0]));
        let c = t.root.children.as_ref().unwrap();
        assert!((t.root.count - 32.0 / 3.0).abs() < 1e-12);
        assert!((c[0].count - 19.0 / 3.0).abs() < 1e-12);
        assert!((c[1].count - 13.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn consistent_counts_are_a_fixed_point() {
        let t = post_process(manual_tree([12.0, 7.0, 5.0], vec![3.0, 0.5]));
        let c = t.root.children.as_ref().unwrap();
        assert!((t.root.count - 12.0).abs() < 1e-12);
        assert!((c[0].count - 7.0).abs() < 1e-12);
        assert!((c[1].count - 5.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_build_counts_exactly() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let workers = gen_unif_workers(300, 2, &mut rng).unwrap();
        let build = build_pkd(&workers, &PkdParams::new(3, 10, 1.0, 1, 2), &PlaintextBackend::noiseless(2), &mut rng).unwrap();
        build.tree.check_structure().unwrap();
        let truth = build.tree.true_counts(&workers);
        for (node, t) in build.tree.nodes_preorder().iter().zip(truth) {
            assert_eq!(node.raw_count, t);
        }
        assert_eq!(build.count_queries, 15);
        assert_eq!(build.median_queries, 7);
        assert_eq!(build.tree.leaves().count(), 8);
    }

    #[test]
    fn leaf_index_matches_containing_leaf() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let workers = gen_unif_workers(200, 3, &mut rng).unwrap();
        let tree = build_pkd(&workers, &PkdParams::new(4, 8, 5.0, 0, 3), &PlaintextBackend::new(1), &mut rng).unwrap().tree;
        let leaves: Vec<_> = tree.leaves().collect();
        for w in &workers {
            let i = tree.leaf_index(&w.skills).unwrap();
            assert!(leaves[i].subspace.contains(&w.skills));
            assert_eq!(leaves.iter().filter(|l| l.subspace.contains(&w.skills)).count(), 1);
        }
        assert_eq!(tree.leaf_index(&[1.0, 1.0, 1.0]), Some(15));
        assert_eq!(tree.leaf_index(&[1.1, 0.0, 0.0]), None);
    }

    #[test]
    fn json_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let workers = gen_unif_workers(100, 2, &mut rng).unwrap();
        let tree = post_process(build_pkd(&workers, &PkdParams::new(2, 5, 1.0, 1, 2), &PlaintextBackend::new(2), &mut rng).unwrap().tree);
        let back = PkdTree::from_json(&tree.to_json()).unwrap();
        assert_eq!(back, tree);
        let bumped = tree.to_json().replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(PkdTree::from_json(&bumped), Err(TreeError::Format(_))));
    }

    #[test]
    fn rejects_threshold_not_above_tau() {
        let workers = vec![WorkerProfile::new(vec![0.5]); 5];
        let err = build_pkd(&workers, &PkdParams::new(1, 2, 1.0, 2, 1), &PlaintextBackend::new(2), &mut ChaCha20Rng::seed_from_u64(4));
        assert!(matches!(err, Err(TreeError::InvalidParameter(_))));
    }

    #[test]
    fn point_mass_deep_tree() {
        let workers = vec![WorkerProfile::new(vec![0.3]); 50];
        let build = build_pkd(&workers, &PkdParams::new(12, 2, 1e4, 0, 1), &PlaintextBackend::noiseless(1), &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        build.tree.check_structure().unwrap();
        assert_eq!(build.median_queries + build.skipped_medians, (1 << 12) - 1);
    }
}
