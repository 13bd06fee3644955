//! Calibration diagnostics and tests for differences in predictive
//! performance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::forecast_dist::CountDistribution;

pub const DEFAULT_PIT_BINS: usize = 10;

/// PIT of a continuous forecast: the forecast cdf at the observation.
pub fn pit_continuous(cdf_at_obs: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&cdf_at_obs) {
        return Err(Error::domain(format!(
            "cdf value {cdf_at_obs} outside [0, 1]"
        )));
    }
    Ok(cdf_at_obs)
}

/// Non-randomized PIT for counts: the piecewise-linear conditional cdf
/// `F(u | y)` interpolating between `P(y − 1)` and `P(y)`.
pub fn pit_count_cdf(u: f64, cdf_prev: f64, cdf_at: f64) -> f64 {
    if cdf_at <= cdf_prev {
        return if u >= cdf_at { 1.0 } else { 0.0 };
    }
    if u <= cdf_prev {
        0.0
    } else if u >= cdf_at {
        1.0
    } else {
        (u - cdf_prev) / (cdf_at - cdf_prev)
    }
}

/// Histogram of non-randomized PIT values, normalized so that each bin of a
/// uniform PIT has height `1 / J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitHistogram {
    pub bin_heights: Vec<f64>,
    pub n: usize,
}

impl PitHistogram {
    pub fn bins(&self) -> usize {
        self.bin_heights.len()
    }

    /// Combines histograms computed on disjoint sets of forecasts.
    pub fn merge(&self, other: &PitHistogram) -> Result<PitHistogram> {
        if self.bins() != other.bins() {
            return Err(Error::LengthMismatch {
                left: self.bins(),
                right: other.bins(),
            });
        }
        let n = self.n + other.n;
        let (wa, wb) = (self.n as f64 / n as f64, other.n as f64 / n as f64);
        Ok(PitHistogram {
            bin_heights: self
                .bin_heights
                .iter()
                .zip(&other.bin_heights)
                .map(|(a, b)| wa * a + wb * b)
                .collect(),
            n,
        })
    }
}

pub fn pit_histogram(
    forecasts: &[CountDistribution],
    observations: &[u64],
    bins: usize,
) -> Result<PitHistogram> {
    if forecasts.len() != observations.len() {
        return Err(Error::LengthMismatch {
            left: forecasts.len(),
            right: observations.len(),
        });
    }
    let pairs: Vec<(f64, f64)> = forecasts
        .iter()
        .zip(observations)
        .map(|(f, y)| (f.cdf(*y as i64 - 1), f.cdf(*y as i64)))
        .collect();
    pit_histogram_from_cdfs(&pairs, bins)
}

/// PIT histogram from `(P(y − 1), P(y))` pairs.
pub fn pit_histogram_from_cdfs(cdfs: &[(f64, f64)], bins: usize) -> Result<PitHistogram> {
    if cdfs.is_empty() {
        return Err(Error::domain("PIT histogram needs at least one forecast"));
    }
    if bins < 2 {
        return Err(Error::domain(format!("need at least 2 bins, got {bins}")));
    }
    let mut heights = vec![0.0; bins];
    for &(lo, hi) in cdfs {
        let mut prev = 0.0;
        for (j, h) in heights.iter_mut().enumerate() {
            let cur = pit_count_cdf((j + 1) as f64 / bins as f64, lo, hi);
            *h += cur - prev;
            prev = cur;
        }
    }
    let n = cdfs.len();
    heights.iter_mut().for_each(|h| *h /= n as f64);
    Ok(PitHistogram {
        bin_heights: heights,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: String,
    pub n: usize,
    /// Set when all differences were exactly zero and the test was not
    /// computed (statistic 0, p-value 1).
    pub degenerate: bool,
}

impl TestResult {
    fn degenerate(method: &str, n: usize) -> Self {
        TestResult {
            statistic: 0.0,
            p_value: 1.0,
            method: method.to_string(),
            n,
            degenerate: true,
        }
    }
}

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

fn two_sided_normal(z: f64) -> f64 {
    2.0 * Normal::standard().cdf(-z.abs())
}

/// Logistic regression of binary outcomes on logit-transformed
/// probabilities, fitted by Newton–Raphson. Returns `(intercept, slope)`.
pub fn calibration_slope(probs: &[f64], outcomes: &[u8]) -> Result<(f64, f64)> {
    const MAX_ITER: usize = 50;
    const TOL: f64 = 1e-8;
    const DIVERGED: f64 = 30.0;

    if probs.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: outcomes.len(),
        });
    }
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::domain(format!(
            "probability {p} not strictly inside (0, 1)"
        )));
    }
    if outcomes.iter().any(|y| *y > 1) {
        return Err(Error::domain("outcomes must be 0 or 1"));
    }
    if !outcomes.contains(&0) || !outcomes.contains(&1) {
        return Err(Error::domain("need at least one outcome of each kind"));
    }
    let x: Vec<f64> = probs.iter().map(|p| (p / (1.0 - p)).ln()).collect();
    let xbar = x.iter().sum::<f64>() / x.len() as f64;
    if x.iter()
        .all(|v| (v - xbar).abs() <= 1e-12 * (1.0 + xbar.abs()))
    {
        return Err(Error::domain(
            "constant predicted probabilities: slope is not identifiable",
        ));
    }

    let (mut b0, mut b1) = (0.0f64, 1.0f64);
    for _ in 0..MAX_ITER {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (xi, yi) in x.iter().zip(outcomes) {
            let eta = b0 + b1 * xi;
            let p = 1.0 / (1.0 + (-eta).exp());
            let r = *yi as f64 - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * xi;
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        if g0.hypot(g1) < TOL {
            // under separation the likelihood flattens out before the
            // coefficients reach the divergence bound
            let fitted_exactly = x.iter().zip(outcomes).all(|(xi, yi)| {
                let p = 1.0 / (1.0 + (-(b0 + b1 * xi)).exp());
                (*yi as f64 - p).abs() < 1e-6
            });
            if fitted_exactly {
                return Err(Error::Separation);
            }
            return Ok((b0, b1));
        }
        let det = h00 * h11 - h01 * h01;
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::Separation);
        }
        b0 += (h11 * g0 - h01 * g1) / det;
        b1 += (h00 * g1 - h01 * g0) / det;
        if b0.abs() > DIVERGED || b1.abs() > DIVERGED {
            return Err(Error::Separation);
        }
    }
    Err(Error::Separation)
}

/// Diebold–Mariano test for equal predictive performance of two score
/// series from `horizon`-step-ahead forecasts. The long-run variance is
/// `γ₀ + 2 Σ_{l=1}^{horizon−1} γ_l`.
pub fn dm_test(scores_a: &[f64], scores_b: &[f64], horizon: usize) -> Result<TestResult> {
    const METHOD: &str = "diebold-mariano";
    let d = differences(scores_a, scores_b)?;
    let n = d.len();
    if horizon == 0 {
        return Err(Error::domain("forecast horizon must be at least 1"));
    }
    if n < 2 * horizon || n < 2 {
        return Err(Error::domain(format!(
            "need at least {} score pairs for horizon {horizon}, got {n}",
            (2 * horizon).max(2)
        )));
    }
    if d.iter().all(|x| *x == 0.0) {
        return Ok(TestResult::degenerate(METHOD, n));
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let autocov = |lag: usize| -> f64 {
        d[lag..]
            .iter()
            .zip(&d[..n - lag])
            .map(|(x, y)| (x - mean) * (y - mean))
            .sum::<f64>()
            / nf
    };
    let lrv = autocov(0) + 2.0 * (1..horizon).map(autocov).sum::<f64>();
    if !(lrv > 0.0) {
        return Err(Error::NonPositiveVariance(lrv));
    }
    let statistic = mean / (lrv / nf).sqrt();
    Ok(TestResult {
        statistic,
        p_value: two_sided_normal(statistic),
        method: METHOD.into(),
        n,
        degenerate: false,
    })
}

/// Sign-flip permutation test on paired score differences.
pub fn permutation_test(
    scores_a: &[f64],
    scores_b: &[f64],
    replications: usize,
    seed: u64,
) -> Result<TestResult> {
    const METHOD: &str = "permutation";
    let d = differences(scores_a, scores_b)?;
    if d.is_empty() {
        return Err(Error::domain("need at least one score pair"));
    }
    if replications < 99 {
        return Err(Error::domain(format!(
            "need at least 99 replications, got {replications}"
        )));
    }
    let n = d.len() as f64;
    let observed = d.iter().sum::<f64>() / n;
    let threshold = observed.abs() * (1.0 - 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..replications {
        let s: f64 = d
            .iter()
            .map(|x| if rng.random::<bool>() { *x } else { -*x })
            .sum();
        if (s / n).abs() >= threshold {
            extreme += 1;
        }
    }
    Ok(TestResult {
        statistic: observed,
        p_value: (1 + extreme) as f64 / (replications + 1) as f64,
        method: METHOD.into(),
        n: d.len(),
        degenerate: false,
    })
}

/// Paired t-test. All-zero differences give a flagged p-value of 1;
/// differences that are constant but non-zero have no variance and are an
/// error.
pub fn paired_t_test(scores_a: &[f64], scores_b: &[f64]) -> Result<TestResult> {
    const METHOD: &str = "paired-t";
    let d = differences(scores_a, scores_b)?;
    let n = d.len();
    if n < 2 {
        return Err(Error::domain("paired t-test needs at least 2 pairs"));
    }
    if d.iter().all(|x| *x == 0.0) {
        return Ok(TestResult::degenerate(METHOD, n));
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return Err(Error::NonPositiveVariance(var));
    }
    let statistic = mean / (var / nf).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 1.0).expect("df >= 1");
    Ok(TestResult {
        statistic,
        p_value: 2.0 * t.cdf(-statistic.abs()),
        method: METHOD.into(),
        n,
        degenerate: false,
    })
}
