use std::collections::BTreeMap;
use std::ops::Range;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{
    align_contacts, ExperimentConfig, ModeConfig, Plan, NAIVE_FINAL_SIZE, NAIVE_MODEL,
};
use super::ingest::ingest_csv;
use super::report::{
    EvaluationReport, FitReport, FitSummary, ForecastMode, ForecastRecord, ModelFailure,
    ModelReport, MultivariateRecord, MultivariateTarget, PairwiseTest, ParamEstimate,
    PeakWeekRecord, Runtime, QUANTILE_LEVELS,
};
use crate::baselines::{naive_final_size, naive_forecast, HistoricalIndex};
use crate::calibration::{dm_test, permutation_test, pit_histogram_from_cdfs};
use crate::ee_model::{
    final_size_forecast, fit, long_term_predictive, one_step_ahead, peak_week_forecast,
    simulate_paths, ContactMatrix, IsoWeek, ModelFit, ModelSpec, OptimOptions, SurveillanceSeries,
};
use crate::error::{Error, Result};
use crate::forecast_dist::{CountDistribution, MultivariateMoments};
use crate::scores::{log_det_sharpness, mdss, mean_score};

/// Seed of a named substream of `seed`, e.g. one model at one origin.
pub fn substream(seed: u64, name: &str, index: u64) -> u64 {
    fn splitmix64(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    // FNV-1a keeps the mapping stable across platforms and releases
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(splitmix64(seed ^ h).wrapping_add(index))
}

/// Reads the data and contact matrix named by `cfg`; `contacts` overrides
/// the configured matrix.
pub fn load_inputs(
    cfg: &ExperimentConfig,
    contacts: Option<&std::path::Path>,
) -> Result<(SurveillanceSeries, Option<ContactMatrix>)> {
    let mut data = ingest_csv(&cfg.data, cfg.groups.as_deref())?;
    if let Some(p) = &cfg.populations {
        data = data
            .with_populations(p.clone())
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let path = contacts.or(cfg.contacts.as_deref());
    let matrix = path.map(ContactMatrix::from_csv).transpose()?;
    Ok((data, matrix))
}

enum Job {
    Model(ModelSpec),
    Naive,
}

impl Job {
    fn name(&self) -> &str {
        match self {
            Job::Model(s) => &s.name,
            Job::Naive => NAIVE_MODEL,
        }
    }
}

/// One marginal forecast before scoring.
struct Unit {
    origin: usize,
    t: usize,
    horizon: usize,
    group: usize,
    dist: CountDistribution,
}

#[derive(Default)]
struct Output {
    units: Vec<Unit>,
    fits: Vec<FitSummary>,
    multivariate: Vec<MultivariateRecord>,
    peak_weeks: Vec<PeakWeekRecord>,
    fit_seconds: f64,
    forecast_seconds: Vec<f64>,
}

fn model_specs(
    cfg: &ExperimentConfig,
    data: &SurveillanceSeries,
    contacts: Option<&ContactMatrix>,
) -> Result<Vec<ModelSpec>> {
    let contacts = contacts
        .map(|c| align_contacts(c, data.labels()))
        .transpose()?;
    cfg.models
        .iter()
        .map(|m| {
            let spec = m.to_spec(contacts.as_ref())?;
            spec.validate(data.n_groups())
                .map_err(|e| Error::Config(format!("model '{}': {e}", m.name)))?;
            Ok(spec)
        })
        .collect()
}

fn summarize(
    f: &ModelFit,
    data: &SurveillanceSeries,
    season_start_week: u32,
) -> Result<FitSummary> {
    let w = f.window();
    let se = f.std_errors();
    Ok(FitSummary {
        model: f.spec().name.clone(),
        window_start: data.weeks()[w.start],
        window_end: data.weeks()[w.end - 1],
        n_params: f.n_params(),
        loglik: f.loglik(),
        aic: f.aic(),
        params: f
            .param_names()
            .iter()
            .zip(f.params())
            .enumerate()
            .map(|(i, (name, x))| ParamEstimate {
                name: name.clone(),
                estimate: *x,
                std_error: se.as_ref().map(|s| s[i]),
            })
            .collect(),
        sizes: f.sizes(),
        kappa: f.kappa(),
        iterations: f.diagnostics().iterations,
        gradient_norm: f.diagnostics().gradient_norm,
        warnings: f.diagnostics().warnings.clone(),
        seasons: f.season_loglik(data, w, season_start_week)?,
    })
}

/// Fits every configured model on the training window.
pub fn fit_models(
    cfg: &ExperimentConfig,
    data: &SurveillanceSeries,
    contacts: Option<&ContactMatrix>,
) -> Result<FitReport> {
    cfg.validate()?;
    let plan = cfg.plan(data)?;
    let specs = model_specs(cfg, data, contacts)?;
    let results: Vec<Result<FitSummary>> = specs
        .par_iter()
        .map(|s| {
            let f = fit(
                s,
                data,
                plan.fit_window.clone(),
                None,
                OptimOptions::default(),
            )?;
            summarize(&f, data, cfg.season_start_week)
        })
        .collect();
    let mut report = FitReport {
        fits: Vec::new(),
        failures: Vec::new(),
    };
    for (s, r) in specs.iter().zip(results) {
        match r {
            Ok(f) => report.fits.push(f),
            Err(e) => report.failures.push(ModelFailure {
                model: s.name.clone(),
                message: e.to_string(),
            }),
        }
    }
    Ok(report)
}

/// Fits, forecasts and scores every configured model. Failures of single
/// models are listed in the report; configuration and data problems are
/// errors.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &SurveillanceSeries,
    contacts: Option<&ContactMatrix>,
) -> Result<EvaluationReport> {
    cfg.validate()?;
    let plan = cfg.plan(data)?;
    let mut jobs: Vec<Job> = model_specs(cfg, data, contacts)?
        .into_iter()
        .map(Job::Model)
        .collect();
    if cfg.naive {
        jobs.push(Job::Naive);
    }
    let results: Vec<Result<ModelReport>> = jobs
        .par_iter()
        .map(|job| {
            let out = match (job, &cfg.mode) {
                (Job::Model(spec), ModeConfig::OneStepAhead { refit }) => {
                    model_one_step(cfg, &plan, data, spec, *refit)
                }
                (Job::Model(spec), ModeConfig::LongTerm { .. }) => {
                    model_long_term(cfg, &plan, data, spec)
                }
                (Job::Naive, ModeConfig::OneStepAhead { .. }) => naive_one_step(&plan, data),
                (Job::Naive, ModeConfig::LongTerm { .. }) => naive_long_term(&plan, data),
            }?;
            assemble(cfg, data, job.name(), out)
        })
        .collect();

    let mut report = EvaluationReport {
        mode: if cfg.is_long_term() {
            ForecastMode::LongTerm
        } else {
            ForecastMode::OneStepAhead
        },
        seed: cfg.seed,
        scores: cfg.scores.clone(),
        models: Vec::new(),
        tests: Vec::new(),
        naive_final_size: Vec::new(),
        failures: Vec::new(),
        warnings: Vec::new(),
    };
    if cfg.is_long_term() && cfg.naive_final_size {
        match naive_final_sizes(cfg, &plan, data) {
            Ok(r) => report.naive_final_size = r,
            Err(e) => report.failures.push(ModelFailure {
                model: NAIVE_FINAL_SIZE.to_string(),
                message: e.to_string(),
            }),
        }
    }
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(m) => report.models.push(m),
            Err(e) => report.failures.push(ModelFailure {
                model: job.name().to_string(),
                message: e.to_string(),
            }),
        }
    }
    let (tests, warnings) = pairwise_tests(cfg, data.n_groups(), &report.models);
    report.tests = tests;
    report.warnings = warnings;
    Ok(report)
}

fn model_one_step(
    cfg: &ExperimentConfig,
    plan: &Plan,
    data: &SurveillanceSeries,
    spec: &ModelSpec,
    refit: bool,
) -> Result<Output> {
    let opts = OptimOptions::default();
    let mut out = Output::default();
    let start = Instant::now();
    let mut current = fit(spec, data, plan.fit_window.clone(), None, opts)?;
    out.fit_seconds = start.elapsed().as_secs_f64();
    out.fits
        .push(summarize(&current, data, cfg.season_start_week)?);
    for t in plan.test.clone() {
        let start = Instant::now();
        if refit && t > current.window().end {
            current = fit(
                spec,
                data,
                plan.fit_window.start..t,
                Some(current.params()),
                opts,
            )?;
            out.fits
                .push(summarize(&current, data, cfg.season_start_week)?);
        }
        let dists = one_step_ahead(&current, data, t..t + 1)?
            .pop()
            .expect("one time");
        out.forecast_seconds.push(start.elapsed().as_secs_f64());
        out.units
            .extend(dists.into_iter().enumerate().map(|(g, dist)| Unit {
                origin: t,
                t,
                horizon: 1,
                group: g,
                dist,
            }));
    }
    Ok(out)
}

fn observed_block(data: &SurveillanceSeries, range: Range<usize>) -> Vec<f64> {
    range
        .flat_map(|t| data.counts_at(t))
        .map(|y| y as f64)
        .collect()
}

fn observed_peak(data: &SurveillanceSeries, range: Range<usize>) -> IsoWeek {
    let mut best = range.start;
    let total = |t: usize| data.counts_at(t).iter().sum::<u64>();
    for t in range {
        if total(t) > total(best) {
            best = t;
        }
    }
    data.weeks()[best]
}

fn multivariate_record(
    origin: IsoWeek,
    target: MultivariateTarget,
    mm: &MultivariateMoments,
    obs: &[f64],
) -> Result<MultivariateRecord> {
    Ok(MultivariateRecord {
        origin,
        target,
        dim: mm.dim(),
        mdss: mdss(mm, obs, true)?,
        logds: log_det_sharpness(mm, true)?,
    })
}

fn model_long_term(
    cfg: &ExperimentConfig,
    plan: &Plan,
    data: &SurveillanceSeries,
    spec: &ModelSpec,
) -> Result<Output> {
    let h_n = plan.horizon;
    let per_origin: Vec<Result<(Output, f64)>> = plan
        .origins
        .par_iter()
        .enumerate()
        .map(|(i, &o)| {
            let mut out = Output::default();
            // all data before the origin
            let start = Instant::now();
            let f = fit(
                spec,
                data,
                plan.fit_window.start..o,
                None,
                OptimOptions::default(),
            )?;
            let fit_seconds = start.elapsed().as_secs_f64();
            out.fits.push(summarize(&f, data, cfg.season_start_week)?);

            let start = Instant::now();
            let seed = substream(cfg.seed, &spec.name, i as u64);
            let sim = simulate_paths(&f, data, o, h_n, cfg.simulations, seed)?;
            let lt = long_term_predictive(&sim)?;
            let origin = data.weeks()[o];
            let weekly = observed_block(data, o..o + h_n);
            out.multivariate.push(multivariate_record(
                origin,
                MultivariateTarget::Weekly,
                &lt.moments,
                &weekly,
            )?);
            let totals: Vec<f64> = data
                .totals(o..o + h_n)
                .into_iter()
                .map(|y| y as f64)
                .collect();
            let fs = final_size_forecast(&sim.totals())?;
            out.multivariate.push(multivariate_record(
                origin,
                MultivariateTarget::FinalSize,
                &fs.moments,
                &totals,
            )?);
            let peak = peak_week_forecast(&sim.weekly_totals(), &sim.weeks)?;
            out.peak_weeks.push(PeakWeekRecord {
                origin,
                median: peak.median,
                lower: peak.lower,
                upper: peak.upper,
                observed: observed_peak(data, o..o + h_n),
                probs: peak
                    .weeks
                    .iter()
                    .copied()
                    .zip(peak.probs.iter().copied())
                    .collect(),
            });
            for (h, row) in lt.marginals.into_iter().enumerate() {
                out.units
                    .extend(row.into_iter().enumerate().map(|(g, dist)| Unit {
                        origin: o,
                        t: o + h,
                        horizon: h + 1,
                        group: g,
                        dist,
                    }));
            }
            out.forecast_seconds.push(start.elapsed().as_secs_f64());
            Ok((out, fit_seconds))
        })
        .collect();
    merge_origins(per_origin)
}

fn merge_origins(parts: Vec<Result<(Output, f64)>>) -> Result<Output> {
    let mut out = Output::default();
    for p in parts {
        let (o, fit_seconds) = p?;
        out.units.extend(o.units);
        out.fits.extend(o.fits);
        out.multivariate.extend(o.multivariate);
        out.peak_weeks.extend(o.peak_weeks);
        out.fit_seconds += fit_seconds;
        out.forecast_seconds.extend(o.forecast_seconds);
    }
    Ok(out)
}

fn naive_one_step(plan: &Plan, data: &SurveillanceSeries) -> Result<Output> {
    let mut out = Output::default();
    for t in plan.test.clone() {
        let start = Instant::now();
        let week = data.weeks()[t].week();
        for g in 0..data.n_groups() {
            let index = HistoricalIndex::from_series(data, g, t);
            let dist = naive_forecast(&index, week).map_err(|e| {
                Error::domain(format!(
                    "{}, group {}: {e}",
                    data.weeks()[t],
                    data.labels()[g]
                ))
            })?;
            out.units.push(Unit {
                origin: t,
                t,
                horizon: 1,
                group: g,
                dist,
            });
        }
        out.forecast_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(out)
}

/// Per-group totals of the complete seasons before time `before`.
fn past_season_totals(
    data: &SurveillanceSeries,
    before: usize,
    season_start_week: u32,
) -> Vec<Vec<f64>> {
    let mut seasons: BTreeMap<String, (usize, Vec<f64>)> = BTreeMap::new();
    for t in 0..before {
        let label = data.weeks()[t].season_label(season_start_week);
        let entry = seasons
            .entry(label)
            .or_insert_with(|| (0, vec![0.0; data.n_groups()]));
        entry.0 += 1;
        for (g, y) in data.counts_at(t).into_iter().enumerate() {
            entry.1[g] += y as f64;
        }
    }
    let complete: Vec<&Vec<f64>> = seasons
        .values()
        .filter(|(n, _)| *n >= 52)
        .map(|(_, v)| v)
        .collect();
    (0..data.n_groups())
        .map(|g| complete.iter().map(|v| v[g]).collect())
        .collect()
}

fn naive_long_term(plan: &Plan, data: &SurveillanceSeries) -> Result<Output> {
    let g_n = data.n_groups();
    let mut out = Output::default();
    for &o in &plan.origins {
        let start = Instant::now();
        let origin = data.weeks()[o];
        let indices: Vec<HistoricalIndex> = (0..g_n)
            .map(|g| HistoricalIndex::from_series(data, g, o))
            .collect();
        let (mut means, mut vars) = (Vec::new(), Vec::new());
        for h in 0..plan.horizon {
            let week = data.week_at(o + h);
            for (g, index) in indices.iter().enumerate() {
                let dist = naive_forecast(index, week.week()).map_err(|e| {
                    Error::domain(format!("{week}, group {}: {e}", data.labels()[g]))
                })?;
                let (m, v) = dist.moments();
                means.push(m);
                vars.push(v);
                out.units.push(Unit {
                    origin: o,
                    t: o + h,
                    horizon: h + 1,
                    group: g,
                    dist,
                });
            }
        }
        let weekly = observed_block(data, o..o + plan.horizon);
        let mm = MultivariateMoments::diagonal(&means, &vars)?;
        out.multivariate.push(multivariate_record(
            origin,
            MultivariateTarget::Weekly,
            &mm,
            &weekly,
        )?);

        out.forecast_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(out)
}

/// Final sizes from NB fits to the totals of past complete seasons, one
/// record per origin.
fn naive_final_sizes(
    cfg: &ExperimentConfig,
    plan: &Plan,
    data: &SurveillanceSeries,
) -> Result<Vec<MultivariateRecord>> {
    plan.origins
        .iter()
        .map(|&o| {
            let sizes = naive_final_size(&past_season_totals(data, o, cfg.season_start_week))?;
            let (m, v): (Vec<f64>, Vec<f64>) = sizes.iter().map(|s| s.dist.moments()).unzip();
            let totals: Vec<f64> = data
                .totals(o..o + plan.horizon)
                .into_iter()
                .map(|y| y as f64)
                .collect();
            let mm = MultivariateMoments::diagonal(&m, &v)?;
            multivariate_record(data.weeks()[o], MultivariateTarget::FinalSize, &mm, &totals)
        })
        .collect()
}

fn assemble(
    cfg: &ExperimentConfig,
    data: &SurveillanceSeries,
    name: &str,
    out: Output,
) -> Result<ModelReport> {
    let mut forecasts = Vec::with_capacity(out.units.len());
    for u in &out.units {
        let observed = data.count(u.group, u.t);
        let (mean, variance) = u.dist.moments();
        forecasts.push(ForecastRecord {
            origin: data.weeks()[u.origin],
            week: data.weeks()[u.t],
            horizon: u.horizon,
            group: data.labels()[u.group].clone(),
            observed,
            mean,
            variance,
            quantiles: QUANTILE_LEVELS
                .iter()
                .map(|p| u.dist.quantile(*p))
                .collect::<Result<_>>()?,
            pit_cdf: (u.dist.cdf(observed as i64 - 1), u.dist.cdf(observed as i64)),
        });
    }
    let scores = cfg
        .scores
        .iter()
        .map(|kind| {
            let values = out
                .units
                .iter()
                .zip(&forecasts)
                .map(|(u, f)| kind.evaluate(&u.dist, f.observed))
                .collect::<Result<Vec<_>>>()?;
            mean_score(kind.name(), values)
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = forecasts.iter().map(|f| f.pit_cdf).collect();
    Ok(ModelReport {
        name: name.to_string(),
        fits: out.fits,
        pit: pit_histogram_from_cdfs(&pairs, cfg.pit_bins)?,
        forecasts,
        scores,
        multivariate: out.multivariate,
        peak_weeks: out.peak_weeks,
        runtime: Runtime {
            fit_seconds: out.fit_seconds,
            forecast_seconds: out.forecast_seconds,
        },
    })
}

/// Score comparisons between every pair of models on the per-week score
/// averaged over groups. The Diebold-Mariano test is only run for
/// one-step-ahead forecasts; long-term score series are compared by
/// permutation only.
fn pairwise_tests(
    cfg: &ExperimentConfig,
    groups: usize,
    models: &[ModelReport],
) -> (Vec<PairwiseTest>, Vec<String>) {
    let weekly = |values: &[f64]| -> Vec<f64> {
        values
            .chunks(groups)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    };
    let mut tests = Vec::new();
    let mut warnings = Vec::new();
    for (i, a) in models.iter().enumerate() {
        for b in &models[i + 1..] {
            for kind in &cfg.scores {
                let (Some(sa), Some(sb)) = (a.score(*kind), b.score(*kind)) else {
                    continue;
                };
                let (wa, wb) = (weekly(&sa.values), weekly(&sb.values));
                let mut push = |r: Result<_>| match r {
                    Ok(result) => tests.push(PairwiseTest {
                        model_a: a.name.clone(),
                        model_b: b.name.clone(),
                        score: *kind,
                        result,
                    }),
                    Err(e) => {
                        warnings.push(format!("{} vs {} ({}): {e}", a.name, b.name, kind.name()))
                    }
                };
                if !cfg.is_long_term() {
                    push(dm_test(&wa, &wb, 1));
                }
                let seed = substream(
                    cfg.seed,
                    &format!("{}|{}|{}", a.name, b.name, kind.name()),
                    0,
                );
                push(permutation_test(&wa, &wb, cfg.permutations, seed));
            }
        }
    }
    (tests, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_differ_by_name_and_index() {
        let a = substream(1, "m", 0);
        assert_eq!(a, substream(1, "m", 0));
        assert_ne!(a, substream(1, "m", 1));
        assert_ne!(a, substream(1, "n", 0));
        assert_ne!(a, substream(2, "m", 0));
    }
}
