//! Fixed-size features of a terminal booking state.
//!
//! Layout: `[Q, depot_x, depot_y, w_1..w_n, depot-distance stats (7),
//! pairwise-distance stats (7)]`. Statistics are taken over the locations
//! with at least one accepted request, in the order
//! `(min, max, mean, median, std, q1, q3)`. Quantiles interpolate linearly
//! between order statistics; the standard deviation is the population one.

use serde::{Deserialize, Serialize};

use crate::instance::InstanceSpec;

pub const STAT_NAMES: [&str; 7] = ["min", "max", "mean", "median", "std", "q1", "q3"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The `w` block.
    pub fn counts(&self) -> &[f64] {
        let n = self.values.len() - 17;
        &self.values[3..3 + n]
    }

    pub fn depot_stats(&self) -> &[f64] {
        let n = self.values.len();
        &self.values[n - 14..n - 7]
    }

    pub fn pairwise_stats(&self) -> &[f64] {
        let n = self.values.len();
        &self.values[n - 7..]
    }
}

pub fn feature_len(n: usize) -> usize {
    n + 17
}

/// Column names for an instance with `n` locations.
pub fn feature_names(n: usize) -> Vec<String> {
    let mut names = vec!["capacity".to_string(), "depot_x".to_string(), "depot_y".to_string()];
    names.extend((1..=n).map(|j| format!("w{j}")));
    names.extend(STAT_NAMES.iter().map(|s| format!("depot_{s}")));
    names.extend(STAT_NAMES.iter().map(|s| format!("pair_{s}")));
    names
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Summary statistics of `values`; all zeros for an empty set.
pub fn summary(values: &[f64]) -> [f64; 7] {
    if values.is_empty() {
        return [0.0; 7];
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    [
        sorted[0],
        sorted[sorted.len() - 1],
        mean,
        quantile(&sorted, 0.5),
        var.sqrt(),
        quantile(&sorted, 0.25),
        quantile(&sorted, 0.75),
    ]
}

pub fn extract(w: &[u32], spec: &InstanceSpec) -> FeatureVector {
    let depot = spec.depot();
    let mut values = Vec::with_capacity(feature_len(spec.n()));
    values.push(spec.capacity as f64);
    values.push(depot.x);
    values.push(depot.y);
    values.extend(w.iter().map(|&c| c as f64));

    let active: Vec<usize> = (0..w.len()).filter(|&j| w[j] > 0).collect();
    let to_depot: Vec<f64> = active.iter().map(|&j| spec.location(j).dist(&depot)).collect();
    let mut pairs = Vec::with_capacity(active.len() * active.len().saturating_sub(1) / 2);
    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a + 1..] {
            pairs.push(spec.location(i).dist(&spec.location(j)));
        }
    }
    values.extend(summary(&to_depot));
    values.extend(summary(&pairs));
    FeatureVector { values }
}
