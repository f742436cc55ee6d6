//! Reproducible random variates and small empirical statistics.
//!
//! Every stream is a ChaCha8 keystream. The 256-bit key is expanded from the
//! 64-bit seed with SplitMix64 and the stream id selects the ChaCha nonce, so
//! `(seed, stream_id)` pins the sequence on every platform. Uniforms take the
//! top 53 bits and are shifted by half an ulp so they lie strictly in (0,1).
//! Normals use the Marsaglia polar method; the second variate of each
//! accepted pair is cached and returned by the next call.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source of the variates used by the simulation and resampling code.
pub trait Variates {
    fn uniform(&mut self) -> f64;
    fn normal(&mut self) -> f64;

    /// Student t with 3 degrees of freedom scaled to unit variance.
    fn t3_std(&mut self) -> f64 {
        let z = self.normal();
        let w: f64 = (0..3).map(|_| self.normal().powi(2)).sum();
        z / (w / 3.0).sqrt() / 3f64.sqrt()
    }

    /// Chi-square with one degree of freedom scaled to unit variance.
    fn chisq1_std(&mut self) -> f64 {
        self.normal().powi(2) / std::f64::consts::SQRT_2
    }

    fn error(&mut self, family: ErrorFamily) -> f64 {
        match family {
            ErrorFamily::Normal => self.normal(),
            ErrorFamily::T3Std => self.t3_std(),
            ErrorFamily::Chisq1Std => self.chisq1_std(),
        }
    }

    /// Uniform index in `0..n`.
    fn index_below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
    }

    /// `count` i.i.d. uniforms sorted ascending.
    fn uniform_order_stats(&mut self, count: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..count).map(|_| self.uniform()).collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorFamily {
    Normal,
    T3Std,
    Chisq1Std,
}

#[derive(Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream_id: u64,
    spare_normal: Option<f64>,
}

impl std::fmt::Debug for RngStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RngStream")
            .field("seed", &self.seed)
            .field("stream_id", &self.stream_id)
            .finish()
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_id);
        RngStream {
            rng,
            seed,
            stream_id,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

impl Variates for RngStream {
    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * factor);
                return u * factor;
            }
        }
    }
}

/// Quantile by linear interpolation between order statistics at
/// position `(n - 1) * level`.
pub fn empirical_quantile(sample: &[f64], level: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Input("empirical quantile of an empty sample".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    empirical_quantile_sorted(&sorted, level)
}

/// Same as [`empirical_quantile`] for a sample that is already ascending.
pub fn empirical_quantile_sorted(sorted: &[f64], level: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Input("empirical quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Input(format!(
            "quantile level {level} outside [0, 1]"
        )));
    }
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    let x = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    // one Newton step polishes the inverse to full precision
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    x - (normal_cdf(x) - p) / density
}

/// Correlation between the sorted sample and Blom normal scores.
pub fn normal_qq_correlation(sample: &[f64]) -> f64 {
    let n = sample.len();
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let scores: Vec<f64> = (1..=n)
        .map(|i| normal_quantile((i as f64 - 0.375) / (n as f64 + 0.25)))
        .collect();
    pearson(&sorted, &scores)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mean_and_range() {
        let mut s = RngStream::new(7, 0);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
            sum += u;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn standardized_error_variances() {
        let mut s = RngStream::new(11, 3);
        let t: Vec<f64> = (0..1_000_000).map(|_| s.t3_std()).collect();
        assert!((variance(&t) - 1.0).abs() < 0.05, "{}", variance(&t));
        let c: Vec<f64> = (0..1_000_000).map(|_| s.chisq1_std()).collect();
        assert!((variance(&c) - 1.0).abs() < 0.05);
        assert!((mean(&c) - 1.0 / 2f64.sqrt()).abs() < 0.01);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut s = RngStream::new(42, 5);
            (0..1000).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = RngStream::new(42, 5);
            (0..1000).map(|_| s.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut s = RngStream::new(42, 6);
            (0..1000).map(|_| s.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn order_stat_means_match_beta() {
        let mut s = RngStream::new(3, 9);
        let reps = 100_000;
        let mut sums = [0.0; 10];
        for _ in 0..reps {
            let v = s.uniform_order_stats(10);
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
            for (acc, x) in sums.iter_mut().zip(&v) {
                *acc += x;
            }
        }
        for (k, acc) in sums.iter().enumerate() {
            let expect = (k + 1) as f64 / 11.0;
            assert!((acc / reps as f64 - expect).abs() < 0.005);
        }
        assert_eq!(s.uniform_order_stats(1).len(), 1);
    }

    #[test]
    fn normal_passes_ks() {
        let mut s = RngStream::new(2024, 1);
        let mut v: Vec<f64> = (0..100_000).map(|_| s.normal()).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let d = v
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = normal_cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.006, "KS statistic {d}");
    }

    #[test]
    fn empirical_quantiles() {
        assert_eq!(empirical_quantile(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
        assert_eq!(
            empirical_quantile(&[1.0, 2.0, 3.0, 4.0], 0.25).unwrap(),
            1.75
        );
        assert_eq!(empirical_quantile(&[5.0, -1.0, 2.0], 0.0).unwrap(), -1.0);
        assert_eq!(empirical_quantile(&[5.0, -1.0, 2.0], 1.0).unwrap(), 5.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&[1.0], 1.5).is_err());
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for p in [0.001, 0.03, 0.5, 0.95, 0.999] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-11);
        }
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-10);
    }
}
