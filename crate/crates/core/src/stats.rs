//! Small statistical helpers: goodness-of-fit tests, confidence intervals and
//! least-squares line fits.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

/// Minimum expected count for a χ² cell to stand alone.
const MIN_EXPECTED: f64 = 5.0;

fn chi_square_p(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(stat)
}

/// χ² goodness-of-fit p-value of integer samples against a pmf.
///
/// `observed` maps value to count and must hold `n` samples in total. Cells
/// whose expected count is below 5 are pooled into a single remainder cell
/// (which also carries all unobserved mass); if the remainder is itself too
/// small it is folded into the largest cell.
pub fn chi_square_gof<F: Fn(i64) -> f64>(observed: &BTreeMap<i64, u64>, pmf: F, n: u64) -> f64 {
    let n = n as f64;
    let (Some(&lo), Some(&hi)) = (observed.keys().next(), observed.keys().next_back()) else {
        return 1.0;
    };
    // (observed, expected) per kept cell
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut kept_obs = 0.0;
    let mut kept_exp = 0.0;
    for k in lo..=hi {
        let e = n * pmf(k);
        if e >= MIN_EXPECTED {
            let o = observed.get(&k).copied().unwrap_or(0) as f64;
            cells.push((o, e));
            kept_obs += o;
            kept_exp += e;
        }
    }
    if cells.is_empty() {
        return 1.0;
    }
    let rest = ((n - kept_obs), (n - kept_exp).max(0.0));
    if rest.1 >= MIN_EXPECTED {
        cells.push(rest);
    } else {
        let biggest = cells
            .iter_mut()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        biggest.0 += rest.0;
        biggest.1 += rest.1;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    chi_square_p(stat, cells.len() - 1)
}

/// Two-sample χ² homogeneity test between two integer histograms.
pub fn chi_square_two_sample(a: &BTreeMap<i64, u64>, b: &BTreeMap<i64, u64>) -> f64 {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let total = (na + nb) as f64;
    let (fa, fb) = (na as f64 / total, nb as f64 / total);

    let keys: std::collections::BTreeSet<i64> = a.keys().chain(b.keys()).copied().collect();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for k in keys {
        let (x, y) = (a.get(&k).copied().unwrap_or(0) as f64, b.get(&k).copied().unwrap_or(0) as f64);
        if (x + y) * fa.min(fb) >= MIN_EXPECTED {
            cells.push((x, y));
        } else {
            pooled.0 += x;
            pooled.1 += y;
        }
    }
    if (pooled.0 + pooled.1) * fa.min(fb) >= MIN_EXPECTED {
        cells.push(pooled);
    } else if let Some(last) = cells.last_mut() {
        last.0 += pooled.0;
        last.1 += pooled.1;
    }
    if cells.len() < 2 {
        return 1.0;
    }
    let stat: f64 = cells
        .iter()
        .map(|&(x, y)| {
            let row = x + y;
            let (ex, ey) = (row * fa, row * fb);
            (x - ex).powi(2) / ex + (y - ey).powi(2) / ey
        })
        .sum();
    chi_square_p(stat, cells.len() - 1)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample standard deviation (0 for fewer than two values).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Mean and two-sided Student-t confidence half-width at `level` (e.g. 0.95).
pub fn mean_ci(xs: &[f64], level: f64) -> (f64, f64) {
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let df = (xs.len() - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, df).expect("df > 0").inverse_cdf(0.5 + level / 2.0);
    (m, t * std_dev(xs) / (xs.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let (mx, my) = (mean(xs), mean(ys));
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit { slope, intercept: my - slope * mx, r_squared }
}
