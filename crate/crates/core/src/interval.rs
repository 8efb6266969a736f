use serde::{Deserialize, Serialize};

/// Per-sample interval widths around a mean estimate: the interval for
/// sample `i` is `[y_hat[i] - delta_low[i], y_hat[i] + delta_up[i]]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalBatch {
    pub delta_low: Vec<f64>,
    pub delta_up: Vec<f64>,
}

impl IntervalBatch {
    pub fn new(delta_low: Vec<f64>, delta_up: Vec<f64>) -> Self {
        debug_assert_eq!(delta_low.len(), delta_up.len());
        IntervalBatch { delta_low, delta_up }
    }

    /// Symmetric interval of half-width `half[i]`.
    pub fn symmetric(half: Vec<f64>) -> Self {
        IntervalBatch {
            delta_low: half.clone(),
            delta_up: half,
        }
    }

    pub fn len(&self) -> usize {
        self.delta_low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_low.is_empty()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.delta_low.iter().zip(&self.delta_up).map(|(l, u)| l + u).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        IntervalBatch {
            delta_low: self.delta_low.iter().map(|v| v * c).collect(),
            delta_up: self.delta_up.iter().map(|v| v * c).collect(),
        }
    }

    /// Lower and upper bounds around `y_hat`.
    pub fn bounds(&self, y_hat: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lo = y_hat.iter().zip(&self.delta_low).map(|(m, d)| m - d).collect();
        let hi = y_hat.iter().zip(&self.delta_up).map(|(m, d)| m + d).collect();
        (lo, hi)
    }
}
