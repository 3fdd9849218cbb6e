use serde::{Deserialize, Serialize};

/// Decrypted, perturbed histogram over `l` equal-width ranges of a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedHistogram {
    bins: Vec<i64>,
    domain: (f64, f64),
    epsilon_spent: f64,
}

impl PerturbedHistogram {
    pub fn new(bins: Vec<i64>, domain: (f64, f64), epsilon_spent: f64) -> Self {
        assert!(!bins.is_empty(), "histogram needs at least one bin");
        assert!(domain.0 < domain.1, "empty histogram domain");
        Self { bins, domain, epsilon_spent }
    }

    pub fn bins(&self) -> &[i64] {
        &self.bins
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn epsilon_spent(&self) -> f64 {
        self.epsilon_spent
    }

    pub fn bin_width(&self) -> f64 {
        (self.domain.1 - self.domain.0) / self.bins.len() as f64
    }

    /// Bin ranges `[lo_k, hi_k)`; the last one is closed at the domain max.
    pub fn ranges(&self) -> Vec<(f64, f64)> {
        let (lo, hi) = self.domain;
        let w = self.bin_width();
        let l = self.bins.len();
        (0..l)
            .map(|k| (lo + w * k as f64, if k + 1 == l { hi } else { lo + w * (k + 1) as f64 }))
            .collect()
    }
}

/// Median estimate from a perturbed histogram, assuming uniform mass inside
/// the median bin:
///
/// `m = D_min + (D_max − D_min)/l · (k + 1/2 + (θ_> − θ_<) / (2·b_k))`
///
/// Negative perturbed bins are clamped to zero before the scan. `k` is the
/// first bin at which the cumulative mass reaches half of the total; `θ_<`
/// and `θ_>` are the clamped masses strictly before and after it. A zero
/// median bin yields the bin centre and a non-positive total yields the
/// domain midpoint.
pub fn estimate_median(hist: &PerturbedHistogram) -> f64 {
    let (lo, hi) = hist.domain;
    let clamped: Vec<f64> = hist.bins.iter().map(|&b| b.max(0) as f64).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return lo + (hi - lo) / 2.0;
    }
    let half = total / 2.0;
    let mut before = 0.0;
    let mut k = clamped.len() - 1;
    for (i, &b) in clamped.iter().enumerate() {
        if before + b >= half {
            k = i;
            break;
        }
        before += b;
    }
    let bk = clamped[k];
    let after = total - before - bk;
    let offset = if bk == 0.0 { 0.0 } else { (after - before) / (2.0 * bk) };
    let w = hist.bin_width();
    (lo + w * (k as f64 + 0.5 + offset)).clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(bins: &[i64]) -> PerturbedHistogram {
        PerturbedHistogram::new(bins.to_vec(), (0.0, 1.0), 1.0)
    }

    #[test]
    fn symmetric_histogram() {
        assert!((estimate_median(&hist(&[10; 10])) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_bin_mass() {
        assert!((estimate_median(&hist(&[0, 0, 10, 0, 0, 0, 0, 0, 0, 0])) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn boundary_between_bins() {
        assert!((estimate_median(&hist(&[10, 10, 0, 0, 0, 0, 0, 0, 0, 0])) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn negative_bins_clamped() {
        // clamped to [0, 0, 10, 0...]: negative mass must not move the estimate
        let m = estimate_median(&hist(&[-50, 0, 10, 0, 0, 0, 0, 0, 0, -3]));
        assert!((m - 0.25).abs() < 1e-12);
    }

    #[test]
    fn non_positive_total_gives_midpoint() {
        let h = PerturbedHistogram::new(vec![-1, -2, 0], (0.2, 0.6), 1.0);
        assert!((estimate_median(&h) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn sub_domain() {
        // domain [0.5, 0.7), 4 bins of 0.05, all mass in bin 1 → centre 0.575
        let h = PerturbedHistogram::new(vec![0, 8, 0, 0], (0.5, 0.7), 1.0);
        assert!((estimate_median(&h) - 0.575).abs() < 1e-12);
    }

    #[test]
    fn ranges_partition_domain() {
        let r = hist(&[1; 4]).ranges();
        assert_eq!(r.first().unwrap().0, 0.0);
        assert_eq!(r.last().unwrap().1, 1.0);
        for w in r.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }

    proptest::proptest! {
        #[test]
        fn estimate_within_domain(bins in proptest::collection::vec(-20i64..50, 1..16), lo in 0.0f64..0.5, width in 0.01f64..0.5) {
            let h = PerturbedHistogram::new(bins, (lo, lo + width), 1.0);
            let m = estimate_median(&h);
            proptest::prop_assert!(m >= lo && m <= lo + width);
        }
    }
}
