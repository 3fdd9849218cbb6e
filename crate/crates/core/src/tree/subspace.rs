use serde::{Deserialize, Serialize};

use crate::workload::TaskSpec;

/// Axis-aligned box of the skill space.
///
/// Each interval is half-open `[lo, hi)`, except that it is closed at the
/// maximum of the space it was carved from (`closed_upper`), so that the
/// leaves of a tree partition the closed unit cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    bounds: Vec<(f64, f64)>,
    closed_upper: Vec<bool>,
}

impl Subspace {
    /// `[0, 1]^dims`.
    pub fn unit(dims: usize) -> Self {
        Self::space(vec![(0.0, 1.0); dims])
    }

    /// A whole space: closed at the maximum on every dimension.
    pub fn space(bounds: Vec<(f64, f64)>) -> Self {
        assert!(bounds.iter().all(|(lo, hi)| lo < hi), "subspace needs lo < hi on every dimension");
        let closed_upper = vec![true; bounds.len()];
        Self { bounds, closed_upper }
    }

    pub fn new(bounds: Vec<(f64, f64)>, closed_upper: Vec<bool>) -> Option<Self> {
        (bounds.len() == closed_upper.len() && bounds.iter().all(|(lo, hi)| lo < hi))
            .then_some(Self { bounds, closed_upper })
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn interval(&self, dim: usize) -> (f64, f64) {
        self.bounds[dim]
    }

    pub fn is_closed_upper(&self, dim: usize) -> bool {
        self.closed_upper[dim]
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims()
            && point
                .iter()
                .zip(&self.bounds)
                .zip(&self.closed_upper)
                .all(|((&x, &(lo, hi)), &closed)| lo <= x && (x < hi || (closed && x == hi)))
    }

    /// Splits along `dim` at `value`: the left part is `[lo, value)`, the right
    /// part `[value, hi)` keeps the parent's closedness.
    pub fn split(&self, dim: usize, value: f64) -> Option<(Subspace, Subspace)> {
        let (lo, hi) = self.bounds[dim];
        if !(lo < value && value < hi) {
            return None;
        }
        let mut left = self.clone();
        left.bounds[dim].1 = value;
        left.closed_upper[dim] = false;
        let mut right = self.clone();
        right.bounds[dim].0 = value;
        Some((left, right))
    }

    /// Volume of the intersection with the task's closed box.
    pub fn overlap_volume(&self, task: &TaskSpec) -> f64 {
        self.bounds
            .iter()
            .zip(&task.metadata)
            .map(|(&(lo, hi), &(a, b))| (hi.min(b) - lo.max(a)).max(0.0))
            .product()
    }

    /// Whether a worker in this subspace can match the task.
    ///
    /// A task range `[a, b]` with `a < b` is read as `[a, b)`, so touching
    /// at a single boundary value does not count. A point range `a == b`
    /// intersects iff the point belongs to the interval.
    pub fn intersects_task(&self, task: &TaskSpec) -> bool {
        task.metadata.len() == self.dims()
            && self
                .bounds
                .iter()
                .zip(&self.closed_upper)
                .zip(&task.metadata)
                .all(|((&(lo, hi), &closed), &(a, b))| {
                    if a < b {
                        a < hi && b > lo
                    } else {
                        lo <= a && (a < hi || (closed && a == hi))
                    }
                })
    }

    /// `true` iff the two boxes share no point.
    pub fn is_disjoint(&self, other: &Subspace) -> bool {
        self.bounds
            .iter()
            .zip(&self.closed_upper)
            .zip(other.bounds.iter().zip(&other.closed_upper))
            .any(|((&(lo1, hi1), &c1), (&(lo2, hi2), &c2))| {
                let a_before_b = hi1 < lo2 || (hi1 == lo2 && !c1);
                let b_before_a = hi2 < lo1 || (hi2 == lo1 && !c2);
                a_before_b || b_before_a
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(meta: Vec<(f64, f64)>) -> TaskSpec {
        TaskSpec::new(0, meta, 8)
    }

    #[test]
    fn split_is_half_open() {
        let s = Subspace::unit(2);
        let (l, r) = s.split(0, 0.5).unwrap();
        assert!(!l.contains(&[0.5, 0.2]));
        assert!(r.contains(&[0.5, 0.2]));
        assert!(r.contains(&[1.0, 1.0]));
        assert!(!l.contains(&[0.4, 1.01]));
        assert!(l.is_disjoint(&r));
        assert!(s.split(0, 1.0).is_none());
        assert!((l.volume() + r.volume() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn touching_task_does_not_intersect() {
        let (l, r) = Subspace::unit(1).split(0, 0.5).unwrap();
        let t = task(vec![(0.2, 0.5)]);
        assert!(l.intersects_task(&t));
        assert!(!r.intersects_task(&t));
        let t = task(vec![(0.5, 0.9)]);
        assert!(!l.intersects_task(&t));
        assert!(r.intersects_task(&t));
    }

    #[test]
    fn point_task_follows_membership() {
        let (l, r) = Subspace::unit(1).split(0, 0.5).unwrap();
        let t = task(vec![(0.5, 0.5)]);
        assert!(!l.intersects_task(&t));
        assert!(r.intersects_task(&t));
        let t = task(vec![(1.0, 1.0)]);
        assert!(r.intersects_task(&t));
    }

    #[test]
    fn overlap_volume_of_subbox() {
        let s = Subspace::new(vec![(0.0, 0.5), (0.5, 1.0)], vec![false, true]).unwrap();
        let t = task(vec![(0.25, 0.75), (0.0, 1.0)]);
        assert!((s.overlap_volume(&t) - 0.125).abs() < 1e-15);
    }
}
