//! One-step-ahead and simulation-based long-term forecasts, and targets
//! derived from simulated paths.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::ModelFit;
use super::model::Model;
use super::series::{IsoWeek, SurveillanceSeries};
use crate::error::{Error, Result};
use crate::forecast_dist::{
    moment_matched, sample_nb, CountDistribution, MomentMatched, MultivariateMoments, NbComponent,
    SampleEnsemble,
};

fn lagged_counts(data: &SurveillanceSeries, t: usize) -> Vec<f64> {
    data.counts_at(t - 1)
        .into_iter()
        .map(|y| y as f64)
        .collect()
}

fn check_time(data: &SurveillanceSeries, t: usize) -> Result<()> {
    if t == 0 || t >= data.n_times() {
        return Err(Error::domain(format!(
            "time {t} outside the forecastable range 1..{}",
            data.n_times()
        )));
    }
    Ok(())
}

/// `μ_gt` for every group given the observed counts of week `t − 1`.
pub fn conditional_mean(fit: &ModelFit, data: &SurveillanceSeries, t: usize) -> Result<Vec<f64>> {
    fit.model().conditional_means(fit.params(), data, t)
}

/// Plug-in NB predictive laws `[t][g]` for each time in `times`, each
/// conditioning on the observed counts of the previous week.
pub fn one_step_ahead(
    fit: &ModelFit,
    data: &SurveillanceSeries,
    times: Range<usize>,
) -> Result<Vec<Vec<CountDistribution>>> {
    let sizes = fit.sizes();
    times
        .map(|t| {
            check_time(data, t)?;
            conditional_mean(fit, data, t)?
                .into_iter()
                .zip(&sizes)
                .map(|(mu, size)| CountDistribution::neg_bin(mu, *size))
                .collect()
        })
        .collect()
}

/// Endemic and epidemic parts of the fitted mean of one group-week.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedComponents {
    pub t: usize,
    pub group: usize,
    pub endemic: f64,
    pub epidemic: f64,
}

impl FittedComponents {
    pub fn mean(&self) -> f64 {
        self.endemic + self.epidemic
    }
}

pub fn decompose_fitted(
    fit: &ModelFit,
    data: &SurveillanceSeries,
    times: Range<usize>,
) -> Result<Vec<FittedComponents>> {
    let w = fit.model().weights(fit.params(), false)?.w;
    let mut out = Vec::new();
    for t in times {
        check_time(data, t)?;
        let (nu, epi) =
            fit.model()
                .mean_components(fit.params(), &w, data, t, &lagged_counts(data, t));
        out.extend((0..nu.len()).map(|g| FittedComponents {
            t,
            group: g,
            endemic: nu[g],
            epidemic: epi[g],
        }));
    }
    Ok(out)
}

/// Simulated trajectories with the conditional NB law of every simulated
/// count.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSimulation {
    /// Time index of the first simulated week.
    pub start: usize,
    pub weeks: Vec<IsoWeek>,
    pub n_paths: usize,
    pub groups: usize,
    /// `[path][week][group]`, flattened.
    counts: Vec<f64>,
    /// Conditional means, same layout as `counts`.
    means: Vec<f64>,
    pub sizes: Vec<f64>,
}

impl PathSimulation {
    pub fn horizon(&self) -> usize {
        self.weeks.len()
    }

    fn idx(&self, path: usize, h: usize, g: usize) -> usize {
        (path * self.horizon() + h) * self.groups + g
    }

    pub fn count(&self, path: usize, h: usize, g: usize) -> f64 {
        self.counts[self.idx(path, h, g)]
    }

    pub fn conditional_mean(&self, path: usize, h: usize, g: usize) -> f64 {
        self.means[self.idx(path, h, g)]
    }

    /// Ensemble over `(week, group)` outcomes, index `h · G + g`.
    pub fn ensemble(&self) -> SampleEnsemble {
        SampleEnsemble::new(
            self.n_paths,
            self.horizon() * self.groups,
            self.counts.clone(),
        )
        .expect("consistent simulation layout")
    }

    /// Ensemble of one group's trajectory.
    pub fn group_ensemble(&self, g: usize) -> SampleEnsemble {
        let data = (0..self.n_paths)
            .flat_map(|m| (0..self.horizon()).map(move |h| (m, h)))
            .map(|(m, h)| self.count(m, h, g))
            .collect();
        SampleEnsemble::new(self.n_paths, self.horizon(), data).expect("consistent layout")
    }

    /// Per-path totals over the horizon, one column per group.
    pub fn totals(&self) -> SampleEnsemble {
        let data = (0..self.n_paths)
            .flat_map(|m| {
                (0..self.groups)
                    .map(move |g| (0..self.horizon()).map(|h| self.count(m, h, g)).sum())
            })
            .collect();
        SampleEnsemble::new(self.n_paths, self.groups, data).expect("consistent layout")
    }

    /// Per-path weekly counts summed over groups.
    pub fn weekly_totals(&self) -> Vec<Vec<f64>> {
        (0..self.n_paths)
            .map(|m| {
                (0..self.horizon())
                    .map(|h| (0..self.groups).map(|g| self.count(m, h, g)).sum())
                    .collect()
            })
            .collect()
    }
}

/// Simulates `n_paths` trajectories of `horizon` weeks starting at time
/// `start`, conditioning on the observed counts of week `start − 1`.
/// Path `m` draws from its own stream of the seeded generator.
pub fn simulate_paths(
    fit: &ModelFit,
    data: &SurveillanceSeries,
    start: usize,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathSimulation> {
    simulate_with_params(
        fit.model(),
        fit.params(),
        data,
        start,
        horizon,
        n_paths,
        seed,
    )
}

pub fn simulate_with_params(
    model: &Model,
    theta: &[f64],
    data: &SurveillanceSeries,
    start: usize,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathSimulation> {
    model.check_params(theta)?;
    if start == 0 || start > data.n_times() {
        return Err(Error::domain(format!(
            "simulation start {start} needs an observed previous week (1..={})",
            data.n_times()
        )));
    }
    if horizon == 0 || n_paths == 0 {
        return Err(Error::domain("horizon and number of paths must be >= 1"));
    }
    let g_n = model.groups();
    let w = model.weights(theta, false)?.w;
    let sizes = model.sizes(theta);
    let rates: Vec<(Vec<f64>, Vec<f64>)> = (0..horizon)
        .map(|h| model.rates(theta, data, start + h))
        .collect();
    let init = lagged_counts(data, start);

    let paths: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(m as u64);
            let mut counts = Vec::with_capacity(horizon * g_n);
            let mut means = Vec::with_capacity(horizon * g_n);
            let mut prev = init.clone();
            for (nu, phi) in &rates {
                let input = Model::epidemic_input(&w, &prev);
                let cur: Vec<f64> = (0..g_n)
                    .map(|g| {
                        let mu = nu[g] + phi[g] * input[g];
                        means.push(mu);
                        sample_nb(mu, sizes[g], &mut rng) as f64
                    })
                    .collect();
                counts.extend_from_slice(&cur);
                prev = cur;
            }
            (counts, means)
        })
        .collect();

    let mut counts = Vec::with_capacity(n_paths * horizon * g_n);
    let mut means = Vec::with_capacity(n_paths * horizon * g_n);
    for (c, m) in paths {
        counts.extend(c);
        means.extend(m);
    }
    Ok(PathSimulation {
        start,
        weeks: (0..horizon).map(|h| data.week_at(start + h)).collect(),
        n_paths,
        groups: g_n,
        counts,
        means,
        sizes,
    })
}

/// Simulates `n_times` weeks from the model at `theta`, starting from the
/// counts `initial` observed in `first_week`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_series(
    model: &Model,
    theta: &[f64],
    labels: &[String],
    populations: Option<Vec<f64>>,
    first_week: IsoWeek,
    initial: &[u64],
    n_times: usize,
    seed: u64,
) -> Result<SurveillanceSeries> {
    if n_times < 2 {
        return Err(Error::domain("a simulated series needs at least two weeks"));
    }
    if initial.len() != model.groups() {
        return Err(Error::LengthMismatch {
            left: initial.len(),
            right: model.groups(),
        });
    }
    let seedling = SurveillanceSeries::new(
        initial.iter().map(|y| vec![*y, *y]).collect(),
        vec![first_week, first_week.next()],
        labels.to_vec(),
        populations.clone(),
    )?;
    let sim = simulate_with_params(model, theta, &seedling, 1, n_times - 1, 1, seed)?;
    let counts = (0..model.groups())
        .map(|g| {
            std::iter::once(initial[g])
                .chain((0..n_times - 1).map(|h| sim.count(0, h, g) as u64))
                .collect()
        })
        .collect();
    let weeks = (0..n_times).map(|t| first_week.plus(t as i64)).collect();
    SurveillanceSeries::new(counts, weeks, labels.to_vec(), populations)
}

/// Rao-Blackwellized marginals `[h][g]` and joint moments of a long-term
/// forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct LongTermForecast {
    pub weeks: Vec<IsoWeek>,
    pub marginals: Vec<Vec<CountDistribution>>,
    /// Ensemble moments over `(week, group)`, index `h · G + g`.
    pub moments: MultivariateMoments,
}

pub fn long_term_predictive(sim: &PathSimulation) -> Result<LongTermForecast> {
    if sim.n_paths < 2 {
        return Err(Error::domain("long-term predictive needs at least 2 paths"));
    }
    let marginals = (0..sim.horizon())
        .map(|h| {
            (0..sim.groups)
                .map(|g| {
                    let comps = (0..sim.n_paths)
                        .map(|m| NbComponent {
                            mean: sim.conditional_mean(m, h, g),
                            size: sim.sizes[g],
                        })
                        .collect();
                    CountDistribution::nb_mixture(comps)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LongTermForecast {
        weeks: sim.weeks.clone(),
        marginals,
        moments: sim.ensemble().moments()?,
    })
}

/// Forecast of the per-group totals over the simulated horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalSizeForecast {
    pub groups: Vec<MomentMatched>,
    pub moments: MultivariateMoments,
}

/// NB approximations of the per-group totals matched to the ensemble
/// moments, plus the joint moments of the totals.
pub fn final_size_forecast(totals: &SampleEnsemble) -> Result<FinalSizeForecast> {
    let moments = totals.moments()?;
    let groups = (0..totals.dim())
        .map(|g| moment_matched(moments.mean()[g], moments.covariance()[(g, g)]))
        .collect::<Result<Vec<_>>>()?;
    Ok(FinalSizeForecast { groups, moments })
}

/// Distribution of the week in which the summed counts peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakWeekForecast {
    pub weeks: Vec<IsoWeek>,
    pub probs: Vec<f64>,
    pub median: IsoWeek,
    pub lower: IsoWeek,
    pub upper: IsoWeek,
}

impl PeakWeekForecast {
    /// Earliest week whose cumulative probability reaches `p`.
    pub fn quantile(&self, p: f64) -> IsoWeek {
        let mut acc = 0.0;
        for (w, q) in self.weeks.iter().zip(&self.probs) {
            acc += q;
            if acc >= p - 1e-12 {
                return *w;
            }
        }
        *self.weeks.last().expect("non-empty season")
    }
}

/// Per path, the first week attaining the maximum count; reported as a pmf
/// over `weeks` with median and 2.5%/97.5% quantiles.
pub fn peak_week_forecast(paths: &[Vec<f64>], weeks: &[IsoWeek]) -> Result<PeakWeekForecast> {
    if paths.is_empty() || weeks.is_empty() {
        return Err(Error::domain(
            "peak week forecast needs at least one path and week",
        ));
    }
    let mut counts = vec![0usize; weeks.len()];
    for p in paths {
        if p.len() != weeks.len() {
            return Err(Error::LengthMismatch {
                left: p.len(),
                right: weeks.len(),
            });
        }
        let mut best = 0;
        for (i, x) in p.iter().enumerate() {
            if *x > p[best] {
                best = i;
            }
        }
        counts[best] += 1;
    }
    let n = paths.len() as f64;
    let mut f = PeakWeekForecast {
        weeks: weeks.to_vec(),
        probs: counts.iter().map(|c| *c as f64 / n).collect(),
        median: weeks[0],
        lower: weeks[0],
        upper: weeks[0],
    };
    f.median = f.quantile(0.5);
    f.lower = f.quantile(0.025);
    f.upper = f.quantile(0.975);
    Ok(f)
}
