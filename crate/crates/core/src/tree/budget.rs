use serde::{Deserialize, Serialize};

use super::{Result, TreeError};

/// Share of the total budget spent on node counts; the rest goes to medians.
pub const COUNT_SHARE: f64 = 0.7;

/// Privacy budget per tree level.
///
/// Level `i` counts down from `h` at the root to `0` at the leaves. Counts are
/// taken on levels `h..=0` and medians on levels `h..=1`; the budgets grow
/// geometrically (ratio `∛2`) towards the leaves for counts and are uniform
/// for medians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    epsilon_total: f64,
    /// Indexed by level, `[0]` is the leaf level.
    epsilon_c_by_level: Vec<f64>,
    /// Indexed by level minus one, `[0]` is the level right above the leaves.
    epsilon_m_by_level: Vec<f64>,
}

/// Splits `epsilon` over a tree of depth `h ≥ 1`.
pub fn allocate_budget(epsilon: f64, h: usize) -> Result<BudgetPlan> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(TreeError::InvalidParameter(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    if h == 0 {
        return Err(TreeError::InvalidParameter("tree depth must be at least 1".into()));
    }
    let eps_c = COUNT_SHARE * epsilon;
    let eps_m = (1.0 - COUNT_SHARE) * epsilon;
    let cbrt2 = 2f64.cbrt();
    let norm = (cbrt2 - 1.0) / (2f64.powf((h + 1) as f64 / 3.0) - 1.0);
    let epsilon_c_by_level = (0..=h).map(|i| 2f64.powf((h - i) as f64 / 3.0) * eps_c * norm).collect();
    let epsilon_m_by_level = vec![eps_m / h as f64; h];
    Ok(BudgetPlan { epsilon_total: epsilon, epsilon_c_by_level, epsilon_m_by_level })
}

impl BudgetPlan {
    pub fn epsilon_total(&self) -> f64 {
        self.epsilon_total
    }

    pub fn depth(&self) -> usize {
        self.epsilon_m_by_level.len()
    }

    /// `ε^c_i` for `i ∈ 0..=h`.
    pub fn count_epsilon(&self, level: usize) -> f64 {
        self.epsilon_c_by_level[level]
    }

    /// `ε^m_i` for `i ∈ 1..=h`.
    pub fn median_epsilon(&self, level: usize) -> f64 {
        assert!(level >= 1, "no median is computed at the leaf level");
        self.epsilon_m_by_level[level - 1]
    }

    /// Count budgets from the root (level `h`) down to the leaves.
    pub fn count_epsilons_root_first(&self) -> Vec<f64> {
        self.epsilon_c_by_level.iter().rev().copied().collect()
    }

    /// Median budgets from the root (level `h`) down to level 1.
    pub fn median_epsilons_root_first(&self) -> Vec<f64> {
        self.epsilon_m_by_level.iter().rev().copied().collect()
    }

    pub fn count_total(&self) -> f64 {
        self.epsilon_c_by_level.iter().sum()
    }

    pub fn median_total(&self) -> f64 {
        self.epsilon_m_by_level.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_one_by_hand() {
        let b = allocate_budget(1.0, 1).unwrap();
        let c1 = 0.7 * (2f64.cbrt() - 1.0) / (2f64.powf(2.0 / 3.0) - 1.0);
        assert!((b.count_epsilon(1) - c1).abs() < 1e-15);
        assert!((b.count_epsilon(1) - 0.309_745).abs() < 1e-6);
        assert!((b.count_epsilon(0) - 0.390_255).abs() < 1e-6);
        assert!((b.count_epsilon(0) - 2f64.cbrt() * c1).abs() < 1e-15);
        assert!((b.median_epsilon(1) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(allocate_budget(0.0, 3).is_err());
        assert!(allocate_budget(1.0, 0).is_err());
        assert!(allocate_budget(f64::INFINITY, 3).is_err());
    }

    proptest::proptest! {
        #[test]
        fn shares_sum_to_split(eps in 1e-3f64..100.0, h in 1usize..=16) {
            let b = allocate_budget(eps, h).unwrap();
            proptest::prop_assert!((b.count_total() - 0.7 * eps).abs() < 1e-9);
            proptest::prop_assert!((b.median_total() - 0.3 * eps).abs() < 1e-9);
            for i in 0..h {
                proptest::prop_assert!((b.count_epsilon(i) / b.count_epsilon(i + 1) - 2f64.cbrt()).abs() < 1e-12);
            }
        }
    }
}
