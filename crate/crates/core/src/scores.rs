//! Point scoring functions and proper scoring rules.
//!
//! All scores are negatively oriented: smaller is better.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast_dist::{CountDistribution, MultivariateMoments, PmfTable, SampleEnsemble};

/// Value reported in place of an infinite logarithmic score.
pub const LOG_SCORE_SENTINEL: f64 = 700.0;

pub fn abs_error(pred: f64, obs: f64) -> f64 {
    (pred - obs).abs()
}

pub fn sq_error(pred: f64, obs: f64) -> f64 {
    (pred - obs).powi(2)
}

/// `|pred − obs| / obs`; requires `obs > 0`.
pub fn abs_pct_error(pred: f64, obs: f64) -> Result<f64> {
    if !(obs > 0.0) {
        return Err(Error::domain(format!(
            "absolute percentage error needs a positive observation, got {obs}"
        )));
    }
    Ok((pred - obs).abs() / obs)
}

/// `|pred − obs| / pred`; requires `pred > 0`.
pub fn rel_error(pred: f64, obs: f64) -> Result<f64> {
    if !(pred > 0.0) {
        return Err(Error::domain(format!(
            "relative error needs a positive prediction, got {pred}"
        )));
    }
    Ok((pred - obs).abs() / pred)
}

fn check_paired(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::domain("need at least one forecast"));
    }
    Ok(())
}

pub fn rmse(preds: &[f64], obs: &[f64]) -> Result<f64> {
    check_paired(preds, obs)?;
    let mse = preds
        .iter()
        .zip(obs)
        .map(|(p, y)| sq_error(*p, *y))
        .sum::<f64>()
        / preds.len() as f64;
    Ok(mse.sqrt())
}

pub fn mae(preds: &[f64], obs: &[f64]) -> Result<f64> {
    check_paired(preds, obs)?;
    Ok(preds
        .iter()
        .zip(obs)
        .map(|(p, y)| abs_error(*p, *y))
        .sum::<f64>()
        / preds.len() as f64)
}

/// `MAE(A) / MAE(B)`; values below 1 favour A.
pub fn rel_mae(preds_a: &[f64], preds_b: &[f64], obs: &[f64]) -> Result<f64> {
    check_paired(preds_a, obs)?;
    check_paired(preds_b, obs)?;
    let mae_b = mae(preds_b, obs)?;
    if mae_b == 0.0 {
        return Err(Error::domain("reference forecast has zero MAE"));
    }
    Ok(mae(preds_a, obs)? / mae_b)
}

/// A logarithmic score with a flag for observations of zero predictive
/// probability, whose score is replaced by [`LOG_SCORE_SENTINEL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogScore {
    pub value: f64,
    pub zero_probability: bool,
}

impl LogScore {
    fn from_ln_prob(lp: f64) -> Self {
        if lp.is_finite() {
            LogScore {
                value: -lp,
                zero_probability: false,
            }
        } else {
            LogScore {
                value: LOG_SCORE_SENTINEL,
                zero_probability: true,
            }
        }
    }
}

/// `−log P(Y = obs)`.
pub fn log_score(dist: &CountDistribution, obs: u64) -> LogScore {
    LogScore::from_ln_prob(dist.ln_pmf(obs))
}

fn check_prob(p: f64, y: u8) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability {p} outside [0, 1]")));
    }
    if y > 1 {
        return Err(Error::domain(format!(
            "binary outcome must be 0 or 1, got {y}"
        )));
    }
    Ok(())
}

/// Binary logarithmic score for predicted probability `p` of `y = 1`.
pub fn log_score_binary(p: f64, y: u8) -> Result<LogScore> {
    check_prob(p, y)?;
    let prob = if y == 1 { p } else { 1.0 - p };
    Ok(LogScore::from_ln_prob(prob.ln()))
}

pub fn brier(p: f64, y: u8) -> Result<f64> {
    check_prob(p, y)?;
    Ok((p - y as f64).powi(2))
}

/// Ranked probability score `Σ_{j≥0} (P_j − 1{obs ≤ j})²`.
pub fn rps(dist: &CountDistribution, obs: u64) -> f64 {
    rps_table(dist.table(), obs)
}

/// RPS against a pre-tabulated pmf. The cdf is 0 below the table and equal
/// to its total mass above it.
pub fn rps_table(table: &PmfTable, obs: u64) -> f64 {
    let lo = table.offset;
    let hi = table.end();
    let mut score = 0.0;
    if obs < lo {
        score += (lo - obs) as f64;
    }
    let mut acc = 0.0;
    for (i, p) in table.probs.iter().enumerate() {
        acc += p;
        let j = lo + i as u64;
        let ind = if obs <= j { 1.0 } else { 0.0 };
        score += (acc - ind).powi(2);
    }
    if obs > hi {
        score += (obs - hi) as f64 * acc * acc;
    }
    score
}

/// Sample version of the RPS:
/// `(1/M) Σ |x_i − y| − (1/(2M²)) Σ_i Σ_j |x_i − x_j|`.
pub fn rps_from_samples(samples: &[f64], obs: f64) -> Result<f64> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::domain("sample-based RPS needs at least 2 samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mf = m as f64;
    let first = sorted.iter().map(|x| (x - obs).abs()).sum::<f64>() / mf;
    // Σ_i Σ_j |x_i − x_j| = 2 Σ_i (2i − M + 1) x_(i)
    let pair: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - mf + 1.0) * x)
        .sum::<f64>()
        * 2.0;
    Ok(first - pair / (2.0 * mf * mf))
}

/// Dawid–Sebastiani score `log σ² + (y − μ)²/σ²`.
pub fn dss(mean: f64, variance: f64, obs: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::domain(format!(
            "DSS needs a positive variance, got {variance}"
        )));
    }
    Ok(variance.ln() + (obs - mean).powi(2) / variance)
}

/// Cholesky factor of the covariance, retried once with a small diagonal
/// jitter.
fn factorize(cov: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(cov.clone()) {
        return Ok(c);
    }
    let d = cov.nrows();
    let jitter = 1e-10 * cov.trace() / d as f64;
    if jitter > 0.0 {
        let jittered = cov + DMatrix::identity(d, d) * jitter;
        if let Some(c) = Cholesky::new(jittered) {
            return Ok(c);
        }
    }
    Err(Error::SingularCovariance)
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|x| x.ln())
        .sum::<f64>()
}

/// Multivariate Dawid–Sebastiani score `log|Σ| + (y − μ)ᵀ Σ⁻¹ (y − μ)`,
/// divided by `2d` when `scaled`.
pub fn mdss(mm: &MultivariateMoments, obs: &[f64], scaled: bool) -> Result<f64> {
    let d = mm.dim();
    if obs.len() != d {
        return Err(Error::LengthMismatch {
            left: obs.len(),
            right: d,
        });
    }
    let chol = factorize(mm.covariance())?;
    let resid = DVector::from_column_slice(obs) - mm.mean();
    let z = chol
        .l_dirty()
        .solve_lower_triangular(&resid)
        .ok_or(Error::SingularCovariance)?;
    let value = log_det(&chol) + z.norm_squared();
    Ok(if scaled {
        value / (2.0 * d as f64)
    } else {
        value
    })
}

/// Log-determinant sharpness `log|Σ|`, divided by `2d` when `scaled`.
pub fn log_det_sharpness(mm: &MultivariateMoments, scaled: bool) -> Result<f64> {
    let chol = factorize(mm.covariance())?;
    let value = log_det(&chol);
    Ok(if scaled {
        value / (2.0 * mm.dim() as f64)
    } else {
        value
    })
}

/// Energy score `(1/M) Σ ‖x_i − y‖ − (1/(2M²)) Σ_i Σ_j ‖x_i − x_j‖`.
pub fn energy_score(ens: &SampleEnsemble, obs: &[f64]) -> Result<f64> {
    if ens.n_samples() < 2 {
        return Err(Error::domain("energy score needs at least 2 samples"));
    }
    if obs.len() != ens.dim() {
        return Err(Error::LengthMismatch {
            left: obs.len(),
            right: ens.dim(),
        });
    }
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let m = ens.n_samples() as f64;
    let first = ens.rows().map(|r| dist(r, obs)).sum::<f64>() / m;
    let mut pair = 0.0;
    for i in 0..ens.n_samples() {
        for j in 0..i {
            pair += dist(ens.row(i), ens.row(j));
        }
    }
    Ok(first - 2.0 * pair / (2.0 * m * m))
}

/// Per-forecast values of one score and their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub name: String,
    pub values: Vec<f64>,
    pub mean: f64,
}

pub fn mean_score(name: impl Into<String>, values: Vec<f64>) -> Result<ScoreSeries> {
    if values.is_empty() {
        return Err(Error::domain("mean score of an empty series"));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(ScoreSeries {
        name: name.into(),
        values,
        mean,
    })
}

/// Univariate scores that can be requested from the evaluation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// Logarithmic score.
    Ls,
    /// Ranked probability score.
    Rps,
    /// Dawid–Sebastiani score.
    Dss,
    /// Absolute error of the predictive median.
    Ae,
    /// Squared error of the predictive mean.
    Se,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Ls => "ls",
            ScoreKind::Rps => "rps",
            ScoreKind::Dss => "dss",
            ScoreKind::Ae => "ae",
            ScoreKind::Se => "se",
        }
    }

    pub fn evaluate(self, dist: &CountDistribution, obs: u64) -> Result<f64> {
        let y = obs as f64;
        match self {
            ScoreKind::Ls => Ok(log_score(dist, obs).value),
            ScoreKind::Rps => Ok(rps(dist, obs)),
            ScoreKind::Dss => {
                let (m, v) = dist.moments();
                dss(m, v, y)
            }
            ScoreKind::Ae => Ok(abs_error(dist.quantile(0.5)? as f64, y)),
            ScoreKind::Se => Ok(sq_error(dist.moments().0, y)),
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ls" | "log" => Ok(ScoreKind::Ls),
            "rps" => Ok(ScoreKind::Rps),
            "dss" => Ok(ScoreKind::Dss),
            "ae" => Ok(ScoreKind::Ae),
            "se" => Ok(ScoreKind::Se),
            other => Err(Error::Config(format!("unknown score '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast_dist::ln_nb_pmf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_scores() {
        assert_eq!(abs_error(5.0, 5.0), 0.0);
        assert_eq!(abs_error(3.0, 7.0), 4.0);
        assert_eq!(sq_error(3.0, 7.0), 16.0);
        assert!((rmse(&[0.0, 0.0], &[1.0, 3.0]).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(abs_pct_error(10.0, 10.0).unwrap(), 0.0);
        assert_eq!(abs_pct_error(15.0, 10.0).unwrap(), 0.5);
        assert_eq!(rel_error(10.0, 15.0).unwrap(), 0.5);
        assert!(abs_pct_error(1.0, 0.0).is_err());
        assert!(rel_error(0.0, 1.0).is_err());
    }

    #[test]
    fn relative_mae() {
        let obs = [1.0, 2.0, 3.0];
        let a = [2.0, 2.0, 2.0];
        assert_eq!(rel_mae(&a, &a, &obs).unwrap(), 1.0);
        assert_eq!(rel_mae(&obs, &a, &obs).unwrap(), 0.0);
        // errors {1,3} vs {2,2}
        assert_eq!(
            rel_mae(&[1.0, 3.0], &[2.0, -2.0], &[0.0, 0.0]).unwrap(),
            1.0
        );
        assert!(rel_mae(&a, &obs, &obs).is_err());
        assert!(rel_mae(&a[..2], &a, &obs).is_err());
    }

    #[test]
    fn log_scores() {
        let pm = CountDistribution::point_mass(3);
        assert_eq!(log_score(&pm, 3).value, 0.0);
        let e = CountDistribution::empirical(vec![0.5, 0.5]).unwrap();
        assert!((log_score(&e, 1).value - 2f64.ln()).abs() < 1e-15);
        let p = CountDistribution::poisson(1.0).unwrap();
        assert!((log_score(&p, 0).value - 1.0).abs() < 1e-15);
        let z = log_score(&e, 5);
        assert!(z.zero_probability);
        assert_eq!(z.value, LOG_SCORE_SENTINEL);
    }

    #[test]
    fn binary_scores() {
        assert_eq!(log_score_binary(1.0, 1).unwrap().value, 0.0);
        assert_eq!(brier(1.0, 1).unwrap(), 0.0);
        assert!((log_score_binary(0.5, 0).unwrap().value - 2f64.ln()).abs() < 1e-15);
        assert_eq!(brier(0.5, 0).unwrap(), 0.25);
        assert!((brier(0.8, 0).unwrap() - 0.64).abs() < 1e-15);
        assert!(log_score_binary(1.0, 0).unwrap().zero_probability);
        assert!(brier(1.2, 0).is_err());
    }

    fn brute_rps(pmf: impl Fn(u64) -> f64, obs: u64) -> f64 {
        let mut acc = 0.0;
        let mut s = 0.0;
        let mut j = 0u64;
        loop {
            acc += pmf(j);
            let ind = if obs <= j { 1.0 } else { 0.0 };
            s += (acc - ind).powi(2);
            if j >= obs && 1.0 - acc < 1e-12 {
                return s;
            }
            j += 1;
        }
    }

    #[test]
    fn rps_cases() {
        assert_eq!(rps(&CountDistribution::point_mass(4), 4), 0.0);
        let e = CountDistribution::empirical(vec![0.5, 0.5]).unwrap();
        assert!((rps(&e, 1) - 0.25).abs() < 1e-15);
        let nb = CountDistribution::neg_bin(5.0, 2.0).unwrap();
        let brute = brute_rps(|k| ln_nb_pmf(k, 5.0, 2.0).exp(), 3);
        assert!((rps(&nb, 3) - brute).abs() < 1e-9);
        // observation far in the upper tail
        let brute = brute_rps(|k| ln_nb_pmf(k, 5.0, 2.0).exp(), 400);
        assert!((rps(&nb, 400) - brute).abs() < 1e-9);
    }

    #[test]
    fn sample_rps_cases() {
        assert_eq!(rps_from_samples(&[3.0, 3.0, 3.0], 3.0).unwrap(), 0.0);
        assert!((rps_from_samples(&[0.0, 2.0], 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(rps_from_samples(&[1.0], 1.0).is_err());
    }

    #[test]
    fn sample_rps_converges_to_pmf_rps() {
        let e = CountDistribution::empirical(vec![0.1, 0.2, 0.4, 0.2, 0.1]).unwrap();
        let exact = rps(&e, 1);
        let reps = 30;
        let m = 2000;
        let vals: Vec<f64> = (0..reps)
            .map(|r| {
                let s = e.simulate(m, 100 + r).unwrap().column(0);
                rps_from_samples(&s, 1.0).unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * sd / (reps as f64).sqrt() + 1e-12);
    }

    #[test]
    fn dss_cases() {
        assert_eq!(dss(0.0, 1.0, 0.0).unwrap(), 0.0);
        assert!((dss(2.0, 4.0, 4.0).unwrap() - (2.0 * 2f64.ln() + 1.0)).abs() < 1e-12);
        assert!(dss(0.0, 0.0, 1.0).is_err());
        let mm = MultivariateMoments::diagonal(&[2.0], &[4.0]).unwrap();
        assert!(
            (dss(2.0, 4.0, 4.0).unwrap() - 2.0 * mdss(&mm, &[4.0], true).unwrap()).abs() < 1e-15
        );
    }

    #[test]
    fn mdss_cases() {
        let mm = MultivariateMoments::diagonal(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!(mdss(&mm, &[1.0, 2.0, 3.0], false).unwrap().abs() < 1e-15);
        let mm = MultivariateMoments::diagonal(&[2.0], &[4.0]).unwrap();
        assert!((mdss(&mm, &[4.0], false).unwrap() - (4f64.ln() + 1.0)).abs() < 1e-12);
        assert!((mdss(&mm, &[4.0], true).unwrap() - 1.1931).abs() < 1e-4);
        let means = [1.0, 5.0, 2.5];
        let vars = [0.5, 3.0, 10.0];
        let y = [2.0, 1.0, 7.0];
        let mm = MultivariateMoments::diagonal(&means, &vars).unwrap();
        let sum: f64 = (0..3).map(|i| dss(means[i], vars[i], y[i]).unwrap()).sum();
        assert!((mdss(&mm, &y, false).unwrap() - sum).abs() < 1e-12);
        assert!(mdss(&mm, &y[..2], false).is_err());
    }

    #[test]
    fn mdss_singular_and_jitter() {
        let zero = MultivariateMoments::new(DVector::zeros(2), DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            mdss(&zero, &[0.0, 0.0], true),
            Err(Error::SingularCovariance)
        ));
        // rank one: jitter makes it factorizable
        let rank1 = MultivariateMoments::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        assert!(mdss(&rank1, &[0.5, 0.5], true).unwrap().is_finite());
    }

    #[test]
    fn log_det_sharpness_cases() {
        let id = MultivariateMoments::diagonal(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(log_det_sharpness(&id, true).unwrap().abs() < 1e-15);
        let e2 = MultivariateMoments::diagonal(&[0.0], &[std::f64::consts::E.powi(2)]).unwrap();
        assert!((log_det_sharpness(&e2, true).unwrap() - 1.0).abs() < 1e-12);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let c = 0.25;
        let a = MultivariateMoments::new(DVector::zeros(2), cov.clone()).unwrap();
        let b = MultivariateMoments::new(DVector::zeros(2), cov * c).unwrap();
        let diff = log_det_sharpness(&b, false).unwrap() - log_det_sharpness(&a, false).unwrap();
        assert!((diff - 2.0 * c.ln()).abs() < 1e-12);
    }

    #[test]
    fn energy_score_cases() {
        let ens = SampleEnsemble::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(energy_score(&ens, &[1.0, 2.0]).unwrap(), 0.0);
        let ens = SampleEnsemble::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert!((energy_score(&ens, &[1.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        let xs = [0.0, 3.0, 1.0, 7.0, 2.0];
        let ens = SampleEnsemble::from_column(xs.to_vec()).unwrap();
        let a = energy_score(&ens, &[2.5]).unwrap();
        let b = rps_from_samples(&xs, 2.5).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn mean_score_cases() {
        assert_eq!(mean_score("x", vec![2.0; 5]).unwrap().mean, 2.0);
        assert_eq!(mean_score("x", vec![1.0, 3.0]).unwrap().mean, 2.0);
        assert_eq!(
            mean_score("x", vec![1.0, 4.0, 7.0]).unwrap().mean,
            mean_score("x", vec![7.0, 1.0, 4.0]).unwrap().mean
        );
        assert!(mean_score("x", vec![]).is_err());
    }

    #[test]
    fn point_mass_on_outcome_is_best() {
        let y = 6;
        let pm = CountDistribution::point_mass(y);
        let others = [
            CountDistribution::neg_bin(6.0, 3.0).unwrap(),
            CountDistribution::poisson(6.0).unwrap(),
            CountDistribution::empirical(vec![0.0; 6].into_iter().chain([0.9, 0.1]).collect())
                .unwrap(),
        ];
        for d in &others {
            assert!(log_score(&pm, y).value <= log_score(d, y).value);
            assert!(rps(&pm, y) <= rps(d, y));
        }
    }

    #[test]
    fn log_det_sharpness_ignores_observation() {
        let mm = MultivariateMoments::diagonal(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        let s = log_det_sharpness(&mm, true).unwrap();
        for y in [[0.0, 0.0], [10.0, -3.0]] {
            let m = mdss(&mm, &y, true).unwrap();
            assert!(m >= s);
        }
        assert_eq!(s, log_det_sharpness(&mm, true).unwrap());
    }

    /// Mean score of a forecast on common outcomes, with the standard error
    /// of its paired difference to a reference.
    fn paired(reference: &[f64], other: &[f64]) -> (f64, f64) {
        let n = reference.len() as f64;
        let d: Vec<f64> = other.iter().zip(reference).map(|(a, b)| a - b).collect();
        let m = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (m, sd / n.sqrt())
    }

    #[test]
    fn propriety_against_shifted_means() {
        let truth = CountDistribution::neg_bin(10.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let ys: Vec<u64> = (0..100_000).map(|_| truth.sample(&mut rng)).collect();
        let score_all = |d: &CountDistribution| -> [Vec<f64>; 3] {
            let table = d.table();
            let (m, v) = d.moments();
            [
                ys.iter().map(|y| log_score(d, *y).value).collect(),
                ys.iter().map(|y| rps_table(table, *y)).collect(),
                ys.iter().map(|y| dss(m, v, *y as f64).unwrap()).collect(),
            ]
        };
        let base = score_all(&truth);
        for mean in [8.0, 9.0, 11.0, 12.0] {
            let alt = score_all(&CountDistribution::neg_bin(mean, 2.0).unwrap());
            for (b, a) in base.iter().zip(&alt) {
                let (diff, se) = paired(b, a);
                assert!(diff > 3.0 * se, "mean {mean}: diff {diff} se {se}");
            }
        }
    }
}
