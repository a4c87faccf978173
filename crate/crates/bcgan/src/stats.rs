//! Embedding-space diagnostics: activity sweeps, boxplot statistics, and the
//! dead-neuron fraction.

use std::fmt::Write as _;

use crate::conditioning::{label_range_max, Conditioning};
use crate::dataset::EPSILON_TEMPERATURE;
use crate::error::{Error, Result};

pub const DEFAULT_DEAD_TOLERANCE: f64 = 1e-6;

/// Per-neuron activity over a label sweep: rows = neurons, cols = samples.
#[derive(Debug, Clone)]
pub struct ActivityMatrix {
    pub neurons: usize,
    pub samples: usize,
    /// Row-major, neurons x samples.
    pub values: Vec<f32>,
}

impl ActivityMatrix {
    pub fn row(&self, neuron: usize) -> &[f32] {
        &self.values[neuron * self.samples..(neuron + 1) * self.samples]
    }
}

/// Sweep the strategy over a uniform inclusive grid of its working range and
/// record every embedding coordinate.
///
/// Working ranges: class-bin and binary-bits sweep T over [eps0, 2*T_c]
/// (class-bin thereby visits every class when num_samples >= its class
/// count); normalized-scalar sweeps its normalized input over the labels
/// that map onto (0, 1].
pub fn sweep_activations(strategy: &Conditioning, num_samples: usize) -> Result<ActivityMatrix> {
    if num_samples < 2 {
        return Err(Error::Config("sweep needs at least 2 samples".into()));
    }
    let d_e = strategy.embedding_dim();
    // All strategies share the label working range [eps0, 2*T_c]; the
    // normalized-scalar strategy maps it onto its internal (0, 1] grid.
    let hi = label_range_max() as f64;
    let lo = EPSILON_TEMPERATURE as f64;
    let mut values = vec![0.0f32; d_e * num_samples];
    for j in 0..num_samples {
        let t = (lo + (hi - lo) * j as f64 / (num_samples - 1) as f64) as f32;
        let emb = strategy.embed(t)?;
        for (i, &v) in emb.iter().enumerate() {
            values[i * num_samples + j] = v;
        }
    }
    Ok(ActivityMatrix {
        neurons: d_e,
        samples: num_samples,
        values,
    })
}

/// Tukey boxplot statistics for one neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

/// Linear-interpolation quantile (as in the common "type 7" convention):
/// position q * (n - 1) between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn row_stats(row: &[f32]) -> Result<NeuronStats> {
    if row.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let mut sorted: Vec<f64> = row.iter().map(|&v| v as f64).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min = sorted[0];
    let max = *sorted.last().unwrap();
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let std = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    // Tukey whiskers: most extreme data point within 1.5*IQR of the box.
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let whisker_low = *sorted
        .iter()
        .find(|&&v| v >= lo_fence)
        .unwrap_or(&min);
    let whisker_high = *sorted
        .iter()
        .rev()
        .find(|&&v| v <= hi_fence)
        .unwrap_or(&max);
    Ok(NeuronStats {
        min,
        q1,
        median,
        q3,
        max,
        mean,
        std,
        whisker_low,
        whisker_high,
    })
}

pub fn boxplot_stats(matrix: &ActivityMatrix) -> Result<Vec<NeuronStats>> {
    if matrix.neurons == 0 || matrix.samples == 0 {
        return Err(Error::EmptyMatrix);
    }
    (0..matrix.neurons).map(|i| row_stats(matrix.row(i))).collect()
}

/// Fraction of neurons whose output range over the sweep is below `tau`.
pub fn dead_fraction(matrix: &ActivityMatrix, tau: f64) -> f64 {
    if matrix.neurons == 0 {
        return 0.0;
    }
    let dead = (0..matrix.neurons)
        .filter(|&i| {
            let row = matrix.row(i);
            let min = row.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
            let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            max - min < tau
        })
        .count();
    dead as f64 / matrix.neurons as f64
}

/// CSV export, one row per neuron.
pub fn encode_stats_csv(stats: &[NeuronStats], matrix: &ActivityMatrix, tau: f64) -> String {
    let mut out =
        String::from("neuron,min,q1,median,q3,max,mean,std,whisker_lo,whisker_hi,dead\n");
    for (i, s) in stats.iter().enumerate() {
        let row = matrix.row(i);
        let min = row.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let dead = (max - min < tau) as u8;
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{},{dead}",
            s.min, s.q1, s.median, s.q3, s.max, s.mean, s.std, s.whisker_low, s.whisker_high
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::StrategyKind;
    use crate::rng::Rng;

    fn matrix_from_rows(rows: Vec<Vec<f32>>) -> ActivityMatrix {
        let neurons = rows.len();
        let samples = rows[0].len();
        ActivityMatrix {
            neurons,
            samples,
            values: rows.into_iter().flatten().collect(),
        }
    }

    #[test]
    fn sweep_shape_and_endpoints() {
        let mut rng = Rng::seed_from_u64(31);
        let strat = Conditioning::init(StrategyKind::BinaryBits, 64, &mut rng);
        let m = sweep_activations(&strat, 1000).unwrap();
        assert_eq!(m.neurons, 64);
        assert_eq!(m.samples, 1000);
        // endpoints: first column is embed(eps0), last is embed(2*T_c)
        let first = strat.embed(EPSILON_TEMPERATURE).unwrap();
        let last = strat.embed(label_range_max()).unwrap();
        for i in 0..64 {
            assert_eq!(m.row(i)[0], first[i]);
            assert_eq!(m.row(i)[999], last[i]);
        }
    }

    #[test]
    fn class_bin_sweep_has_one_column_per_class() {
        let mut rng = Rng::seed_from_u64(32);
        let strat = Conditioning::init(StrategyKind::ClassBin, 8, &mut rng);
        let k = strat.num_classes().unwrap();
        let m = sweep_activations(&strat, 1000).unwrap();
        let mut distinct: Vec<Vec<u32>> = Vec::new();
        for j in 0..m.samples {
            let col: Vec<u32> = (0..m.neurons).map(|i| m.row(i)[j].to_bits()).collect();
            if !distinct.contains(&col) {
                distinct.push(col);
            }
        }
        assert_eq!(distinct.len(), k);
    }

    #[test]
    fn boxplot_one_to_nine() {
        let m = matrix_from_rows(vec![(1..=9).map(|v| v as f32).collect()]);
        let s = &boxplot_stats(&m).unwrap()[0];
        assert_eq!(s.median, 5.0);
        assert_eq!(s.q1, 3.0);
        assert_eq!(s.q3, 7.0);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 9.0);
        assert!(s.min <= s.whisker_low && s.whisker_low <= s.q1);
        assert!(s.q3 <= s.whisker_high && s.whisker_high <= s.max);
    }

    #[test]
    fn boxplot_constant_and_single() {
        let m = matrix_from_rows(vec![vec![2.5; 7]]);
        let s = &boxplot_stats(&m).unwrap()[0];
        assert_eq!(s.q3 - s.q1, 0.0);
        assert_eq!(s.whisker_low, 2.5);
        assert_eq!(s.whisker_high, 2.5);

        let m = matrix_from_rows(vec![vec![-1.25]]);
        let s = &boxplot_stats(&m).unwrap()[0];
        assert_eq!(s.min, -1.25);
        assert_eq!(s.q1, -1.25);
        assert_eq!(s.median, -1.25);
        assert_eq!(s.q3, -1.25);
        assert_eq!(s.max, -1.25);
    }

    #[test]
    fn quantiles_match_sort_oracle() {
        // brute-force oracle: identical formula, independently coded against
        // sorted data with explicit interpolation
        let mut rng = Rng::seed_from_u64(33);
        for _ in 0..100 {
            let len = 1 + rng.next_below(50) as usize;
            let row: Vec<f32> = (0..len).map(|_| rng.next_f32() * 4.0 - 2.0).collect();
            let m = matrix_from_rows(vec![row.clone()]);
            let s = &boxplot_stats(&m).unwrap()[0];
            let mut sorted: Vec<f64> = row.iter().map(|&v| v as f64).collect();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (q, got) in [(0.25, s.q1), (0.5, s.median), (0.75, s.q3)] {
                let pos = q * (sorted.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let expected = if lo + 1 < sorted.len() {
                    sorted[lo] * (1.0 - (pos - lo as f64)) + sorted[lo + 1] * (pos - lo as f64)
                } else {
                    sorted[lo]
                };
                assert!((got - expected).abs() < 1e-12, "q={q}: {got} vs {expected}");
            }
        }
    }

    #[test]
    fn dead_fraction_cases() {
        let mut rows: Vec<Vec<f32>> = (0..9)
            .map(|i| (0..10).map(|j| (i * 10 + j) as f32).collect())
            .collect();
        rows.push(vec![3.0; 10]);
        let m = matrix_from_rows(rows);
        assert_eq!(dead_fraction(&m, 1e-6), 0.1);

        let responsive = matrix_from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(dead_fraction(&responsive, 1e-6), 0.0);

        let all_dead = matrix_from_rows(vec![vec![1.0; 4], vec![-2.0; 4]]);
        assert_eq!(dead_fraction(&all_dead, 1e-6), 1.0);
    }

    #[test]
    fn dead_fraction_column_permutation_invariant() {
        let mut rng = Rng::seed_from_u64(34);
        let rows: Vec<Vec<f32>> = (0..5)
            .map(|_| (0..8).map(|_| rng.next_f32() * 1e-5).collect())
            .collect();
        let m = matrix_from_rows(rows.clone());
        let permuted = matrix_from_rows(
            rows.iter()
                .map(|r| {
                    let mut v = r.clone();
                    v.rotate_left(3);
                    v.swap(0, 5);
                    v
                })
                .collect(),
        );
        assert_eq!(dead_fraction(&m, 1e-5), dead_fraction(&permuted, 1e-5));
    }
}
