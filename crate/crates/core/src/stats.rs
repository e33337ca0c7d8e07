//! Sample moments and fixed-range histograms for pyramid diagnostics.

use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;

/// Mean, variance and excess kurtosis of a sample (population moments).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    /// `m4 / m2² − 3`; zero for a sample with no spread.
    pub excess_kurtosis: f64,
}

pub fn moments<T: Real>(values: &[T]) -> Moments {
    let n = values.len();
    if n == 0 {
        return Moments {
            count: 0,
            mean: 0.0,
            variance: 0.0,
            excess_kurtosis: 0.0,
        };
    }
    let mean = values.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in values {
        let d = v.as_f64() - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n as f64;
    m4 /= n as f64;
    let excess_kurtosis = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };
    Moments {
        count: n,
        mean,
        variance: m2,
        excess_kurtosis,
    }
}

/// Equal-width histogram over `[lo, hi]`. Values outside the range are
/// counted in the end bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new<T: Real>(values: &[T], bins: usize, lo: f64, hi: f64) -> Self {
        assert!(bins > 0 && hi > lo, "histogram needs bins and a nonempty range");
        let mut counts = vec![0u64; bins];
        for v in values {
            counts[Self::bin_of(v.as_f64(), bins, lo, hi)] += 1;
        }
        Histogram { lo, hi, counts }
    }

    fn bin_of(v: f64, bins: usize, lo: f64, hi: f64) -> usize {
        let t = (v - lo) / (hi - lo) * bins as f64;
        if t.is_nan() || t < 0.0 {
            0
        } else {
            (t as usize).min(bins - 1)
        }
    }

    pub fn bin(&self, v: f64) -> usize {
        Self::bin_of(v, self.counts.len(), self.lo, self.hi)
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    /// Lower edge of bin `i`.
    pub fn edge(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.bin_width()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_small_sample() {
        let m = moments(&[1.0f64, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert_eq!(m.variance, 1.25);
        // m4 = (2·5.0625 + 2·0.0625)/4 = 2.5625
        assert!((m.excess_kurtosis - (2.5625 / 1.5625 - 3.0)).abs() < 1e-12);
        assert_eq!(moments::<f32>(&[]).count, 0);
        assert_eq!(moments(&[0.7f32; 9]).excess_kurtosis, 0.0);
    }

    #[test]
    fn sparse_sample_is_heavy_tailed() {
        let mut v = vec![0.0f64; 999];
        v.push(1.0);
        assert!(moments(&v).excess_kurtosis > 100.0);
    }

    #[test]
    fn histogram_binning() {
        let h = Histogram::new(&[0.0f64, -1.0, 1.0, 5.0, -5.0, 0.004], 256, -1.0, 1.0);
        assert_eq!(h.bin(0.0), 128);
        assert_eq!(h.counts[128], 2);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[255], 2);
        assert_eq!(h.total(), 6);
        assert_eq!(h.edge(128), 0.0);
    }
}
