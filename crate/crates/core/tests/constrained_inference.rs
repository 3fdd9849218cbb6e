//! Post-processing against a dense weighted least-squares solve.

use nalgebra::{DMatrix, DVector};
use pkd::protocol::PlaintextBackend;
use pkd::tree::{build_pkd, post_process, PkdNode, PkdParams, PkdTree};
use pkd::workload::gen_unif_workers;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Every node as (level, first leaf, leaf count, raw count), preorder.
fn rows(node: &PkdNode, level: usize, first: usize, out: &mut Vec<(usize, usize, usize, f64)>) -> usize {
    match &node.children {
        None => {
            out.push((level, first, 1, node.raw_count));
            1
        }
        Some(c) => {
            let at = out.len();
            out.push((level, first, 0, node.raw_count));
            let l = rows(&c[0], level - 1, first, out);
            let r = rows(&c[1], level - 1, first + l, out);
            out[at].2 = l + r;
            l + r
        }
    }
}

fn dense_leaf_estimate(tree: &PkdTree) -> DVector<f64> {
    let mut r = Vec::new();
    let leaves = rows(tree.root(), tree.depth(), 0, &mut r);
    let mut a = DMatrix::zeros(r.len(), leaves);
    let mut w = DMatrix::zeros(r.len(), r.len());
    let mut y = DVector::zeros(r.len());
    for (i, &(level, first, len, raw)) in r.iter().enumerate() {
        for j in first..first + len {
            a[(i, j)] = 1.0;
        }
        w[(i, i)] = 1.0 / tree.count_variance(level);
        y[i] = raw;
    }
    let at_w = a.transpose() * &w;
    (&at_w * &a).lu().solve(&(at_w * y)).expect("full column rank")
}

#[test]
fn matches_dense_generalised_least_squares() {
    for seed in 0..5u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let workers = gen_unif_workers(300, 2, &mut rng).unwrap();
        let depth = 1 + seed as usize % 4;
        let params = PkdParams::new(depth, 8, 0.5, 1, 2);
        let raw = build_pkd(&workers, &params, &PlaintextBackend::new(2), &mut rng).unwrap().tree;
        let expected = dense_leaf_estimate(&raw);
        let post = post_process(raw);
        for (leaf, want) in post.leaves().zip(expected.iter()) {
            assert!((leaf.count - want).abs() < 1e-6 * want.abs().max(1.0), "seed {seed}: {} vs {want}", leaf.count);
        }
        assert!(post.max_consistency_gap() < 1e-6);
    }
}
