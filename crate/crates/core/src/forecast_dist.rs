//! Predictive distributions consumed by the scoring and calibration code.
//!
//! Count forecasts are represented by [`CountDistribution`]: Poisson,
//! negative binomial (variance `mu + mu^2 / size`), an explicit pmf over
//! `0..K`, or an equally weighted mixture of negative binomials (the form
//! produced by averaging conditional laws along simulated paths).
//! Continuous forecasts ([`ContinuousDistribution`]) are mapped onto counts
//! by [`ContinuousDistribution::discretize`].

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Tail mass below which infinite-support laws are truncated.
pub const TAIL_MASS: f64 = 1e-9;

/// Pmf values below this (relative to the mode) are treated as zero when
/// tabulating analytic laws.
const TABLE_CUTOFF: f64 = 1e-20;

const EMPIRICAL_SUM_TOL: f64 = 1e-12;

/// `ln Γ(k + size) − ln Γ(size)`.
pub(crate) fn ln_gamma_ratio(k: u64, size: f64) -> f64 {
    if k < 64 {
        (0..k).map(|i| (size + i as f64).ln()).sum()
    } else {
        ln_gamma(k as f64 + size) - ln_gamma(size)
    }
}

/// Log pmf of the negative binomial with the given mean and size.
pub fn ln_nb_pmf(k: u64, mean: f64, size: f64) -> f64 {
    let kf = k as f64;
    let mut lp = ln_gamma_ratio(k, size) - ln_gamma(kf + 1.0) - size * (mean / size).ln_1p();
    if k > 0 {
        lp += kf * (mean / (mean + size)).ln();
    }
    lp
}

pub fn ln_poisson_pmf(k: u64, mean: f64) -> f64 {
    let kf = k as f64;
    let mut lp = -mean - ln_gamma(kf + 1.0);
    if k > 0 {
        lp += kf * mean.ln();
    }
    lp
}

/// One negative binomial component of a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbComponent {
    pub mean: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CountKind {
    Poisson { mean: f64 },
    NegBin { mean: f64, size: f64 },
    Empirical { probs: Vec<f64> },
    NegBinMixture { components: Vec<NbComponent> },
}

/// A forecast as a probability law over the non-negative integers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "CountKind", into = "CountKind")]
pub struct CountDistribution {
    kind: CountKind,
    // tabulated on first use; mixtures are costly to tabulate
    table: OnceLock<PmfTable>,
}

impl PartialEq for CountDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl TryFrom<CountKind> for CountDistribution {
    type Error = Error;

    fn try_from(kind: CountKind) -> Result<Self> {
        match kind {
            CountKind::Poisson { mean } => Self::poisson(mean),
            CountKind::NegBin { mean, size } => Self::neg_bin(mean, size),
            CountKind::Empirical { probs } => Self::empirical(probs),
            CountKind::NegBinMixture { components } => Self::nb_mixture(components),
        }
    }
}

impl From<CountDistribution> for CountKind {
    fn from(d: CountDistribution) -> Self {
        d.kind
    }
}

fn check_mean(mean: f64) -> Result<()> {
    if mean.is_finite() && mean > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "mean must be finite and > 0, got {mean}"
        )))
    }
}

fn check_size(size: f64) -> Result<()> {
    // +inf is rejected: use Poisson for the limit
    if size.is_finite() && size > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "overdispersion must be finite and > 0, got {size}"
        )))
    }
}

/// Pmf values of a distribution over `offset..offset + probs.len()`.
/// Mass outside that window is negligible.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfTable {
    pub offset: u64,
    pub probs: Vec<f64>,
}

impl PmfTable {
    pub fn end(&self) -> u64 {
        self.offset + self.probs.len() as u64
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if k < self.offset {
            return 0.0;
        }
        self.probs
            .get((k - self.offset) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    /// Running cumulative sums aligned with `probs`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }

    pub fn cdf(&self, k: i64) -> f64 {
        if k < self.offset as i64 {
            return 0.0;
        }
        let upto = ((k as u64 - self.offset) as usize + 1).min(self.probs.len());
        self.probs[..upto].iter().sum()
    }
}

/// Tabulates a unimodal law from its mode outwards with the pmf ratio
/// `p(k+1)/p(k) = ratio(k)`.
fn tabulate_unimodal(mode: u64, ln_pmf_mode: f64, ratio: impl Fn(u64) -> f64) -> PmfTable {
    let p_mode = ln_pmf_mode.exp();
    let cut = TABLE_CUTOFF * p_mode;
    let mut down = Vec::new();
    let mut p = p_mode;
    let mut k = mode;
    while k > 0 {
        p /= ratio(k - 1);
        if !(p > cut) {
            break;
        }
        k -= 1;
        down.push(p);
    }
    let offset = k;
    down.reverse();
    let mut probs = down;
    probs.push(p_mode);
    let mut p = p_mode;
    let mut k = mode;
    loop {
        p *= ratio(k);
        k += 1;
        if !(p > cut) {
            break;
        }
        probs.push(p);
    }
    PmfTable { offset, probs }
}

fn nb_table(mean: f64, size: f64) -> PmfTable {
    let q = mean / (mean + size);
    let mode = if size > 1.0 {
        ((size - 1.0) * mean / size).floor() as u64
    } else {
        0
    };
    tabulate_unimodal(mode, ln_nb_pmf(mode, mean, size), |k| {
        (k as f64 + size) / (k as f64 + 1.0) * q
    })
}

fn poisson_table(mean: f64) -> PmfTable {
    let mode = mean.floor() as u64;
    tabulate_unimodal(mode, ln_poisson_pmf(mode, mean), |k| {
        mean / (k as f64 + 1.0)
    })
}

impl CountDistribution {
    fn from_kind(kind: CountKind) -> Self {
        Self {
            kind,
            table: OnceLock::new(),
        }
    }

    pub fn poisson(mean: f64) -> Result<Self> {
        check_mean(mean)?;
        Ok(Self::from_kind(CountKind::Poisson { mean }))
    }

    /// Negative binomial with variance `mean + mean^2 / size`.
    pub fn neg_bin(mean: f64, size: f64) -> Result<Self> {
        check_mean(mean)?;
        check_size(size)?;
        Ok(Self::from_kind(CountKind::NegBin { mean, size }))
    }

    pub fn empirical(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain(
                "empirical pmf needs at least one probability",
            ));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::domain(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > EMPIRICAL_SUM_TOL {
            return Err(Error::domain(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self::from_kind(CountKind::Empirical { probs }))
    }

    /// Point mass at `k`.
    pub fn point_mass(k: u64) -> Self {
        let mut probs = vec![0.0; k as usize + 1];
        probs[k as usize] = 1.0;
        Self::from_kind(CountKind::Empirical { probs })
    }

    /// Equally weighted mixture of negative binomials.
    pub fn nb_mixture(components: Vec<NbComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::domain("mixture needs at least one component"));
        }
        for c in &components {
            check_mean(c.mean)?;
            check_size(c.size)?;
        }
        Ok(Self::from_kind(CountKind::NegBinMixture { components }))
    }

    pub fn kind(&self) -> &CountKind {
        &self.kind
    }

    pub fn ln_pmf(&self, k: u64) -> f64 {
        match &self.kind {
            CountKind::Poisson { mean } => ln_poisson_pmf(k, *mean),
            CountKind::NegBin { mean, size } => ln_nb_pmf(k, *mean, *size),
            _ => self.pmf(k).ln(),
        }
    }

    /// `P(Y = k)`.
    pub fn pmf(&self, k: u64) -> f64 {
        match &self.kind {
            CountKind::Poisson { mean } => ln_poisson_pmf(k, *mean).exp(),
            CountKind::NegBin { mean, size } => ln_nb_pmf(k, *mean, *size).exp(),
            CountKind::Empirical { probs } => probs.get(k as usize).copied().unwrap_or(0.0),
            CountKind::NegBinMixture { components } => {
                let total: f64 = components
                    .iter()
                    .map(|c| ln_nb_pmf(k, c.mean, c.size).exp())
                    .sum();
                total / components.len() as f64
            }
        }
    }

    /// Tabulated pmf over the effective support.
    pub fn table(&self) -> &PmfTable {
        self.table.get_or_init(|| self.tabulate())
    }

    fn tabulate(&self) -> PmfTable {
        match &self.kind {
            CountKind::Poisson { mean } => poisson_table(*mean),
            CountKind::NegBin { mean, size } => nb_table(*mean, *size),
            CountKind::Empirical { probs } => PmfTable {
                offset: 0,
                probs: probs.clone(),
            },
            CountKind::NegBinMixture { components } => {
                let tables: Vec<PmfTable> = components
                    .iter()
                    .map(|c| nb_table(c.mean, c.size))
                    .collect();
                let lo = tables.iter().map(|t| t.offset).min().unwrap_or(0);
                let hi = tables.iter().map(|t| t.end()).max().unwrap_or(0);
                let mut probs = vec![0.0; (hi - lo) as usize];
                for t in &tables {
                    let start = (t.offset - lo) as usize;
                    for (slot, p) in probs[start..].iter_mut().zip(&t.probs) {
                        *slot += p;
                    }
                }
                let w = components.len() as f64;
                probs.iter_mut().for_each(|p| *p /= w);
                PmfTable { offset: lo, probs }
            }
        }
    }

    /// `P(Y <= k)`; zero for negative `k`.
    pub fn cdf(&self, k: i64) -> f64 {
        if k < 0 {
            return 0.0;
        }
        match &self.kind {
            CountKind::Empirical { probs } => {
                let upto = (k as usize + 1).min(probs.len());
                probs[..upto].iter().sum()
            }
            _ => self.table().cdf(k),
        }
    }

    /// `(mean, variance)`.
    pub fn moments(&self) -> (f64, f64) {
        match &self.kind {
            CountKind::Poisson { mean } => (*mean, *mean),
            CountKind::NegBin { mean, size } => (*mean, mean + mean * mean / size),
            CountKind::Empirical { probs } => {
                let mean: f64 = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                let var = probs
                    .iter()
                    .enumerate()
                    .map(|(k, p)| (k as f64 - mean).powi(2) * p)
                    .sum();
                (mean, var)
            }
            CountKind::NegBinMixture { components } => {
                let n = components.len() as f64;
                let mean = components.iter().map(|c| c.mean).sum::<f64>() / n;
                let within = components
                    .iter()
                    .map(|c| c.mean + c.mean * c.mean / c.size)
                    .sum::<f64>()
                    / n;
                let between = components
                    .iter()
                    .map(|c| (c.mean - mean).powi(2))
                    .sum::<f64>()
                    / n;
                (mean, within + between)
            }
        }
    }

    /// Smallest `k` with `cdf(k) >= p`.
    pub fn quantile(&self, p: f64) -> Result<u64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!(
                "quantile level must lie in (0, 1), got {p}"
            )));
        }
        let table = self.table();
        let mut acc = 0.0;
        for (i, q) in table.probs.iter().enumerate() {
            acc += q;
            if acc >= p {
                return Ok(table.offset + i as u64);
            }
        }
        Ok(table.end().saturating_sub(1))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.kind {
            CountKind::Poisson { mean } => sample_poisson(*mean, rng),
            CountKind::NegBin { mean, size } => sample_nb(*mean, *size, rng),
            CountKind::Empirical { probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return k as u64;
                    }
                }
                last_positive(probs)
            }
            CountKind::NegBinMixture { components } => {
                let c = &components[rng.random_range(0..components.len())];
                sample_nb(c.mean, c.size, rng)
            }
        }
    }

    /// `m` iid draws, reproducible for a fixed seed.
    pub fn simulate(&self, m: usize, seed: u64) -> Result<SampleEnsemble> {
        if m == 0 {
            return Err(Error::domain("need at least one draw"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = match &self.kind {
            CountKind::Empirical { probs } => {
                let cum = PmfTable {
                    offset: 0,
                    probs: probs.clone(),
                }
                .cumulative();
                let last = last_positive(probs);
                (0..m)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let k = cum.partition_point(|c| *c <= u) as u64;
                        k.min(last) as f64
                    })
                    .collect()
            }
            _ => (0..m).map(|_| self.sample(&mut rng) as f64).collect(),
        };
        SampleEnsemble::from_column(draws)
    }
}

/// A count law matched to given moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentMatched {
    pub dist: CountDistribution,
    /// Set when the variance did not exceed the mean and a Poisson (or a
    /// point mass at zero for a zero mean) was returned instead of an NB.
    pub poisson_fallback: bool,
}

/// NB with the given mean and variance (`size = mean² / (variance − mean)`),
/// falling back to Poisson when `variance <= mean`.
pub fn moment_matched(mean: f64, variance: f64) -> Result<MomentMatched> {
    if !(mean.is_finite() && variance.is_finite()) || mean < 0.0 || variance < 0.0 {
        return Err(Error::domain(format!(
            "invalid moments ({mean}, {variance})"
        )));
    }
    if mean == 0.0 {
        return Ok(MomentMatched {
            dist: CountDistribution::point_mass(0),
            poisson_fallback: true,
        });
    }
    if variance <= mean {
        return Ok(MomentMatched {
            dist: CountDistribution::poisson(mean)?,
            poisson_fallback: true,
        });
    }
    Ok(MomentMatched {
        dist: CountDistribution::neg_bin(mean, mean * mean / (variance - mean))?,
        poisson_fallback: false,
    })
}

fn last_positive(probs: &[f64]) -> u64 {
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0) as u64
}

pub(crate) fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => mean.round() as u64,
    }
}

/// Gamma–Poisson draw from NB(mean, size).
pub(crate) fn sample_nb<R: Rng + ?Sized>(mean: f64, size: f64, rng: &mut R) -> u64 {
    let gamma = Gamma::new(size, mean / size).expect("validated NB parameters");
    sample_poisson(gamma.sample(rng), rng)
}

/// Whether a continuous forecast describes counts directly or their logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Natural,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ContinuousKind {
    Gaussian { mean: f64, sd: f64 },
    LogNormal { meanlog: f64, sdlog: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousDistribution {
    kind: ContinuousKind,
    scale: Scale,
}

impl ContinuousDistribution {
    pub fn gaussian(mean: f64, sd: f64, scale: Scale) -> Result<Self> {
        if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
            return Err(Error::domain(format!("invalid Gaussian({mean}, {sd})")));
        }
        Ok(Self {
            kind: ContinuousKind::Gaussian { mean, sd },
            scale,
        })
    }

    pub fn log_normal(meanlog: f64, sdlog: f64) -> Result<Self> {
        if !(meanlog.is_finite() && sdlog.is_finite() && sdlog > 0.0) {
            return Err(Error::domain(format!(
                "invalid LogNormal({meanlog}, {sdlog})"
            )));
        }
        Ok(Self {
            kind: ContinuousKind::LogNormal { meanlog, sdlog },
            scale: Scale::Natural,
        })
    }

    pub fn kind(&self) -> ContinuousKind {
        self.kind
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    /// The law of the count itself: a Gaussian on the log scale becomes a
    /// log-normal on the natural scale.
    pub fn back_transformed(&self) -> ContinuousKind {
        match (self.kind, self.scale) {
            (ContinuousKind::Gaussian { mean, sd }, Scale::Log) => ContinuousKind::LogNormal {
                meanlog: mean,
                sdlog: sd,
            },
            (kind, _) => kind,
        }
    }

    /// `(F(x), 1 − F(x))` of the count-scale law, each computed accurately.
    fn cdf_sf(&self, x: f64) -> (f64, f64) {
        let z = match self.back_transformed() {
            ContinuousKind::Gaussian { mean, sd } => (x - mean) / sd,
            ContinuousKind::LogNormal { meanlog, sdlog } => {
                if x <= 0.0 {
                    return (0.0, 1.0);
                }
                (x.ln() - meanlog) / sdlog
            }
        };
        let arg = z / std::f64::consts::SQRT_2;
        (0.5 * erfc(-arg), 0.5 * erfc(arg))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_sf(x).0
    }

    /// Count-scale `(mean, variance)`.
    pub fn moments(&self) -> (f64, f64) {
        match self.back_transformed() {
            ContinuousKind::Gaussian { mean, sd } => (mean, sd * sd),
            ContinuousKind::LogNormal { meanlog, sdlog } => {
                let s2 = sdlog * sdlog;
                (
                    (meanlog + s2 / 2.0).exp(),
                    s2.exp_m1() * (2.0 * meanlog + s2).exp(),
                )
            }
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!(
                "quantile level must lie in (0, 1), got {p}"
            )));
        }
        let z = Normal::standard().inverse_cdf(p);
        Ok(match self.back_transformed() {
            ContinuousKind::Gaussian { mean, sd } => mean + sd * z,
            ContinuousKind::LogNormal { meanlog, sdlog } => (meanlog + sdlog * z).exp(),
        })
    }

    /// Count pmf with `π_0 = F(0.5)` and `π_k = F(k + 0.5) − F(k − 0.5)`,
    /// truncated once the remaining tail mass drops below [`TAIL_MASS`] and
    /// renormalized.
    pub fn discretize(&self) -> CountDistribution {
        const MAX_SUPPORT: usize = 100_000_000;
        let (c0, s0) = self.cdf_sf(0.5);
        let mut probs = vec![c0];
        let (mut prev_c, mut prev_s) = (c0, s0);
        while prev_s >= TAIL_MASS && probs.len() < MAX_SUPPORT {
            let x = probs.len() as f64 + 0.5;
            let (c, s) = self.cdf_sf(x);
            // difference on whichever side avoids cancellation
            let p = if s < 0.5 { prev_s - s } else { c - prev_c };
            probs.push(p.max(0.0));
            prev_c = c;
            prev_s = s;
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        CountDistribution::from_kind(CountKind::Empirical { probs })
    }

    pub fn simulate(&self, m: usize, seed: u64) -> Result<SampleEnsemble> {
        if m == 0 {
            return Err(Error::domain("need at least one draw"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = rand_distr::StandardNormal;
        let draws = (0..m)
            .map(|_| {
                let e: f64 = z.sample(&mut rng);
                match self.back_transformed() {
                    ContinuousKind::Gaussian { mean, sd } => mean + sd * e,
                    ContinuousKind::LogNormal { meanlog, sdlog } => (meanlog + sdlog * e).exp(),
                }
            })
            .collect();
        SampleEnsemble::from_column(draws)
    }
}

/// Mean vector and covariance matrix of a multivariate forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateMoments {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl MultivariateMoments {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::domain(format!(
                "covariance is {}x{}, mean has length {d}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-10 {
                    return Err(Error::domain("covariance matrix is not symmetric"));
                }
            }
        }
        let trace = covariance.trace();
        let min_eig = covariance
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-8 * trace.abs() {
            return Err(Error::domain(format!(
                "covariance is not positive semi-definite (eigenvalue {min_eig})"
            )));
        }
        Ok(Self { mean, covariance })
    }

    /// Independent components with the given means and variances.
    pub fn diagonal(means: &[f64], variances: &[f64]) -> Result<Self> {
        if means.len() != variances.len() {
            return Err(Error::LengthMismatch {
                left: means.len(),
                right: variances.len(),
            });
        }
        Self::new(
            DVector::from_column_slice(means),
            DMatrix::from_diagonal(&DVector::from_column_slice(variances)),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

/// `M` simulated outcomes of dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEnsemble {
    n_samples: usize,
    dim: usize,
    data: Vec<f64>,
}

impl SampleEnsemble {
    pub fn new(n_samples: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n_samples == 0 || dim == 0 {
            return Err(Error::domain(
                "ensemble needs at least one sample of dimension >= 1",
            ));
        }
        if data.len() != n_samples * dim {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: n_samples * dim,
            });
        }
        Ok(Self {
            n_samples,
            dim,
            data,
        })
    }

    pub fn from_column(values: Vec<f64>) -> Result<Self> {
        Self::new(values.len(), 1, values)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::domain("ragged ensemble rows"));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn is_count_valued(&self) -> bool {
        self.data.iter().all(|x| *x >= 0.0 && x.fract() == 0.0)
    }

    /// Ensemble mean and empirical covariance (divisor `M − 1`).
    pub fn moments(&self) -> Result<MultivariateMoments> {
        if self.n_samples < 2 {
            return Err(Error::domain(
                "empirical covariance needs at least 2 samples",
            ));
        }
        let m = self.n_samples as f64;
        let mut mean = DVector::zeros(self.dim);
        for r in self.rows() {
            for (acc, x) in mean.iter_mut().zip(r) {
                *acc += x;
            }
        }
        mean /= m;
        let centered = DMatrix::from_fn(self.n_samples, self.dim, |i, j| {
            self.data[i * self.dim + j] - mean[j]
        });
        let mut cov = centered.transpose() * &centered / (m - 1.0);
        // exact symmetry
        for i in 0..self.dim {
            for j in 0..i {
                let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        MultivariateMoments::new(mean, cov)
    }
}
