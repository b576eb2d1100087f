//! Small statistics helpers for Monte Carlo summaries.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator; zero for a single sample.
pub fn variance(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => f64::NAN,
        1 => 0.0,
        n => {
            let m = mean(xs);
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
        }
    }
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Linear interpolation quantile, `q ∈ [0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Means of consecutive equal-length batches of a stream of vectors.
///
/// The stream length is fixed up front so sample `i` lands in batch
/// `i * batches / total`.
#[derive(Clone, Debug)]
pub struct BatchMeans {
    dim: usize,
    total: usize,
    batches: usize,
    seen: usize,
    sums: Vec<f64>,
    counts: Vec<usize>,
}

impl BatchMeans {
    pub fn new(dim: usize, total: usize, batches: usize) -> Self {
        let batches = batches.clamp(1, total.max(1));
        BatchMeans {
            dim,
            total,
            batches,
            seen: 0,
            sums: vec![0.0; dim * batches],
            counts: vec![0; batches],
        }
    }

    #[inline]
    pub fn push(&mut self, v: &[f64]) {
        let b = (self.seen * self.batches / self.total).min(self.batches - 1);
        for (s, x) in self.sums[b * self.dim..(b + 1) * self.dim].iter_mut().zip(v) {
            *s += x;
        }
        self.counts[b] += 1;
        self.seen += 1;
    }

    /// One row per non-empty batch.
    pub fn batch_means(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(b, &c)| self.sums[b * self.dim..(b + 1) * self.dim].iter().map(|s| s / c as f64).collect())
            .collect()
    }
}

/// Grand mean and standard error per component from pooled batch means.
pub fn pooled_estimate(batches: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = batches.first().map_or(0, |b| b.len());
    (0..dim)
        .map(|i| {
            let col: Vec<f64> = batches.iter().map(|b| b[i]).collect();
            (mean(&col), std_dev(&col) / (col.len() as f64).sqrt())
        })
        .unzip()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Histogram with Freedman–Diaconis bin width `2 IQR / n^{1/3}`.
pub fn freedman_diaconis(xs: &[f64]) -> Histogram {
    let finite: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.is_empty() {
        return Histogram { edges: vec![], counts: vec![] };
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let iqr = quantile(&finite, 0.75) - quantile(&finite, 0.25);
    let width = 2.0 * iqr / (finite.len() as f64).cbrt();
    let bins = if width > 0.0 && hi > lo {
        (((hi - lo) / width).ceil() as usize).clamp(1, 1000)
    } else {
        1
    };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|i| lo + span * i as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    for x in finite {
        let b = (((x - lo) / span) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    Histogram { edges, counts }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(variance(&[7.0]), 0.0);
        assert_eq!(quantile(&xs, 0.5), 2.5);
    }

    #[test]
    fn batch_means_partition_the_stream() {
        let mut bm = BatchMeans::new(1, 10, 5);
        for i in 0..10 {
            bm.push(&[i as f64]);
        }
        let means: Vec<f64> = bm.batch_means().into_iter().map(|v| v[0]).collect();
        assert_eq!(means, vec![0.5, 2.5, 4.5, 6.5, 8.5]);
        let (m, se) = pooled_estimate(&bm.batch_means().to_vec());
        assert_eq!(m[0], 4.5);
        assert!(se[0] > 0.0);
    }

    #[test]
    fn histogram_counts_everything() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let h = freedman_diaconis(&xs);
        assert_eq!(h.counts.iter().sum::<usize>(), 1000);
        assert_eq!(h.edges.len(), h.counts.len() + 1);
        let flat = freedman_diaconis(&[2.0, 2.0]);
        assert_eq!(flat.counts, vec![2]);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [0.2, 0.1, 0.05];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((log_log_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }
}
