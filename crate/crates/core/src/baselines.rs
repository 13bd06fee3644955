//! Naive historical forecasters used as reference methods.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ee_model::SurveillanceSeries;
use crate::error::{Error, Result};
use crate::forecast_dist::{
    moment_matched, ContinuousDistribution, CountDistribution, MomentMatched,
};

/// Past counts keyed by ISO calendar week number.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoricalIndex {
    by_week: BTreeMap<u32, Vec<f64>>,
}

impl HistoricalIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, week: u32, count: f64) -> Result<()> {
        if !(count >= 0.0 && count.is_finite()) || !(1..=53).contains(&week) {
            return Err(Error::domain(format!(
                "invalid history entry week {week}, count {count}"
            )));
        }
        self.by_week.entry(week).or_default().push(count);
        Ok(())
    }

    /// Counts of group `g` in the weeks before time index `before`.
    pub fn from_series(data: &SurveillanceSeries, g: usize, before: usize) -> Self {
        let mut idx = Self::new();
        for t in 0..before.min(data.n_times()) {
            idx.by_week
                .entry(data.weeks()[t].week())
                .or_default()
                .push(data.count(g, t) as f64);
        }
        idx
    }

    /// History used for `week`; week 53 pools weeks 52, 53 and 1.
    pub fn values_for(&self, week: u32) -> Vec<f64> {
        let weeks: &[u32] = if week == 53 {
            &[52, 53, 1]
        } else {
            std::slice::from_ref(&week)
        };
        weeks
            .iter()
            .filter_map(|w| self.by_week.get(w))
            .flatten()
            .copied()
            .collect()
    }
}

/// `(meanlog, sdlog)`: mean and sample standard deviation of the logs.
pub fn fit_log_normal(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InsufficientHistory(format!(
            "need at least 2 values, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::domain(format!(
            "log-normal fit needs positive values, got {v}"
        )));
    }
    // sorted so the fit does not depend on the order of past years
    let mut logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    logs.sort_by(f64::total_cmp);
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Log-normal fitted to the same calendar week of previous years,
/// discretized to counts. A zero spread yields a point mass.
pub fn naive_forecast(index: &HistoricalIndex, week: u32) -> Result<CountDistribution> {
    let values = index.values_for(week);
    if values.len() < 2 {
        return Err(Error::InsufficientHistory(format!(
            "week {week}: {} historical values",
            values.len()
        )));
    }
    if values.iter().any(|v| *v <= 0.0) {
        return Err(Error::domain(format!("week {week}: zero count in history")));
    }
    let (meanlog, sdlog) = fit_log_normal(&values)?;
    if sdlog <= 1e-12 {
        return Ok(CountDistribution::point_mass(meanlog.exp().round() as u64));
    }
    Ok(ContinuousDistribution::log_normal(meanlog, sdlog)?.discretize())
}

/// Per group, an NB matched to the mean and sample variance of past
/// seasonal totals (`totals[g]`), Poisson when the variance does not exceed
/// the mean.
pub fn naive_final_size(totals: &[Vec<f64>]) -> Result<Vec<MomentMatched>> {
    totals
        .iter()
        .enumerate()
        .map(|(g, past)| {
            if past.len() < 2 {
                return Err(Error::InsufficientHistory(format!(
                    "group {g}: {} past seasons",
                    past.len()
                )));
            }
            let n = past.len() as f64;
            let mean = past.iter().sum::<f64>() / n;
            let var = past.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            moment_matched(mean, var)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast_dist::CountKind;

    #[test]
    fn constant_history_gives_point_mass() {
        let mut idx = HistoricalIndex::new();
        for _ in 0..4 {
            idx.insert(10, 37.0).unwrap();
        }
        let d = naive_forecast(&idx, 10).unwrap();
        assert_eq!(d.pmf(37), 1.0);
    }

    #[test]
    fn log_normal_moments_of_logs() {
        let e = std::f64::consts::E;
        let (m, s) = fit_log_normal(&[e, e.powi(3)]).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn week_53_pools_neighbours() {
        let mut idx = HistoricalIndex::new();
        idx.insert(52, 100.0).unwrap();
        idx.insert(1, 120.0).unwrap();
        idx.insert(52, 90.0).unwrap();
        assert!(naive_forecast(&idx, 53).is_ok());
        assert_eq!(idx.values_for(53).len(), 3);
        assert!(matches!(
            naive_forecast(&idx, 1),
            Err(Error::InsufficientHistory(_))
        ));
    }

    #[test]
    fn zero_count_is_rejected() {
        let mut idx = HistoricalIndex::new();
        idx.insert(5, 0.0).unwrap();
        idx.insert(5, 3.0).unwrap();
        assert!(naive_forecast(&idx, 5).is_err());
    }

    #[test]
    fn order_of_years_does_not_matter() {
        let vals = [120.0, 80.0, 300.0, 41.0, 95.0];
        let mut a = HistoricalIndex::new();
        let mut b = HistoricalIndex::new();
        for v in vals {
            a.insert(8, v).unwrap();
        }
        for v in vals.iter().rev() {
            b.insert(8, *v).unwrap();
        }
        assert_eq!(
            naive_forecast(&a, 8).unwrap(),
            naive_forecast(&b, 8).unwrap()
        );
    }

    #[test]
    fn discretized_mean_close_to_log_normal_mean() {
        let mut idx = HistoricalIndex::new();
        for v in [200.0, 260.0, 150.0, 310.0] {
            idx.insert(3, v).unwrap();
        }
        let (ml, sl) = fit_log_normal(&idx.values_for(3)).unwrap();
        assert!(sl < 1.0);
        let analytic = (ml + sl * sl / 2.0).exp();
        let (m, _) = naive_forecast(&idx, 3).unwrap().moments();
        assert!((m - analytic).abs() / analytic < 0.01);
    }

    #[test]
    fn final_size_moment_matching() {
        let r = naive_final_size(&[vec![100.0, 200.0], vec![50.0, 50.0, 50.0]]).unwrap();
        let CountKind::NegBin { mean, size } = r[0].dist.kind().clone() else {
            panic!()
        };
        assert!((mean - 150.0).abs() < 1e-12);
        assert!((size - 150.0 * 150.0 / 4850.0).abs() < 1e-12);
        assert!((size - 4.64).abs() < 0.01);
        assert!(r[1].poisson_fallback);
        let (m, v) = r[0].dist.moments();
        assert!((m - 150.0).abs() < 1e-9 && (v - 5000.0).abs() < 1e-9);
        assert!(naive_final_size(&[vec![1.0]]).is_err());
    }
}
