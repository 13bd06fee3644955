use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::NAIVE_FINAL_SIZE;
use crate::calibration::{PitHistogram, TestResult};
use crate::ee_model::{IsoWeek, SeasonLoglik};
use crate::error::Result;
use crate::scores::{ScoreKind, ScoreSeries};

/// Probability levels of the fan-chart quantiles.
pub const QUANTILE_LEVELS: [f64; 5] = [0.025, 0.1, 0.5, 0.9, 0.975];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMode {
    OneStepAhead,
    LongTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: ForecastMode,
    pub seed: u64,
    pub scores: Vec<ScoreKind>,
    pub models: Vec<ModelReport>,
    pub tests: Vec<PairwiseTest>,
    /// Long-term mode: final sizes forecast from past seasons alone.
    pub naive_final_size: Vec<MultivariateRecord>,
    pub failures: Vec<ModelFailure>,
    /// Comparisons that could not be computed.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    /// One entry per fit; empty for the naive forecaster.
    pub fits: Vec<FitSummary>,
    pub forecasts: Vec<ForecastRecord>,
    /// One series per requested score, aligned with `forecasts`.
    pub scores: Vec<ScoreSeries>,
    pub pit: PitHistogram,
    pub multivariate: Vec<MultivariateRecord>,
    pub peak_weeks: Vec<PeakWeekRecord>,
    pub runtime: Runtime,
}

impl ModelReport {
    pub fn score(&self, kind: ScoreKind) -> Option<&ScoreSeries> {
        self.scores.iter().find(|s| s.name == kind.name())
    }
}

/// Marginal forecast of one group in one week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    /// First predicted week; data up to the week before are conditioned on.
    pub origin: IsoWeek,
    pub week: IsoWeek,
    /// Steps ahead, 1 for the origin week.
    pub horizon: usize,
    pub group: String,
    pub observed: u64,
    pub mean: f64,
    pub variance: f64,
    /// At [`QUANTILE_LEVELS`].
    pub quantiles: Vec<u64>,
    /// `(F(y − 1), F(y))` at the observation.
    pub pit_cdf: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultivariateTarget {
    /// Joint counts of all weeks and groups of the horizon.
    Weekly,
    /// Per-group totals over the horizon.
    FinalSize,
}

impl MultivariateTarget {
    pub fn name(self) -> &'static str {
        match self {
            MultivariateTarget::Weekly => "weekly",
            MultivariateTarget::FinalSize => "final_size",
        }
    }
}

/// Scaled multivariate Dawid-Sebastiani score and log-determinant
/// sharpness of one long-term forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultivariateRecord {
    pub origin: IsoWeek,
    pub target: MultivariateTarget,
    pub dim: usize,
    pub mdss: f64,
    pub logds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakWeekRecord {
    pub origin: IsoWeek,
    pub median: IsoWeek,
    pub lower: IsoWeek,
    pub upper: IsoWeek,
    pub observed: IsoWeek,
    pub probs: Vec<(IsoWeek, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    /// Wall time of the initial fit(s).
    pub fit_seconds: f64,
    /// Wall time per forecast origin, refits included.
    pub forecast_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    /// First and last response week of the fit.
    pub window_start: IsoWeek,
    pub window_end: IsoWeek,
    pub n_params: usize,
    pub loglik: f64,
    pub aic: f64,
    pub params: Vec<ParamEstimate>,
    pub sizes: Vec<f64>,
    pub kappa: Option<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub warnings: Vec<String>,
    pub seasons: Vec<SeasonLoglik>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub model_a: String,
    pub model_b: String,
    pub score: ScoreKind,
    pub result: TestResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFailure {
    pub model: String,
    pub message: String,
}

/// Fits on their own, as produced by the `fit` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub fits: Vec<FitSummary>,
    pub failures: Vec<ModelFailure>,
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

fn write_table(
    dir: &Path,
    name: &str,
    header: &[String],
    rows: Vec<Vec<String>>,
) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = writer(&path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(path)
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Writes the report tables and `report.json` into `dir`, returning the
/// paths written. Tables carry no timings, so they depend only on data,
/// config and seed.
pub fn emit_report(report: &EvaluationReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();

    let mut header = strings(&["model", "origin", "week", "horizon", "group", "observed"]);
    header.extend(report.scores.iter().map(|s| s.name().to_string()));
    let mut rows = Vec::new();
    for m in &report.models {
        for (i, f) in m.forecasts.iter().enumerate() {
            let mut row = vec![
                m.name.clone(),
                f.origin.to_string(),
                f.week.to_string(),
                f.horizon.to_string(),
                f.group.clone(),
                f.observed.to_string(),
            ];
            row.extend(m.scores.iter().map(|s| s.values[i].to_string()));
            rows.push(row);
        }
    }
    out.push(write_table(dir, "scores_by_week.csv", &header, rows)?);

    let rows = report
        .models
        .iter()
        .flat_map(|m| {
            m.scores.iter().map(|s| {
                vec![
                    m.name.clone(),
                    s.name.clone(),
                    s.mean.to_string(),
                    s.values.len().to_string(),
                ]
            })
        })
        .collect();
    out.push(write_table(
        dir,
        "mean_scores.csv",
        &strings(&["model", "score", "mean", "n"]),
        rows,
    )?);

    let mut rows = Vec::new();
    for m in &report.models {
        let j = m.pit.bin_heights.len();
        for (b, h) in m.pit.bin_heights.iter().enumerate() {
            rows.push(vec![
                m.name.clone(),
                (b + 1).to_string(),
                (b as f64 / j as f64).to_string(),
                ((b + 1) as f64 / j as f64).to_string(),
                h.to_string(),
            ]);
        }
    }
    out.push(write_table(
        dir,
        "pit_bins.csv",
        &strings(&["model", "bin", "lower", "upper", "height"]),
        rows,
    )?);

    out.push(emit_fanchart(report, dir)?);

    let rows = report
        .tests
        .iter()
        .map(|t| {
            vec![
                t.model_a.clone(),
                t.model_b.clone(),
                t.score.name().to_string(),
                t.result.method.clone(),
                t.result.statistic.to_string(),
                t.result.p_value.to_string(),
                t.result.n.to_string(),
                t.result.degenerate.to_string(),
            ]
        })
        .collect();
    out.push(write_table(
        dir,
        "tests.csv",
        &strings(&[
            "model_a",
            "model_b",
            "score",
            "method",
            "statistic",
            "p_value",
            "n",
            "degenerate",
        ]),
        rows,
    )?);

    let rows = report
        .models
        .iter()
        .flat_map(|m| {
            m.fits.iter().map(|f| {
                vec![
                    f.model.clone(),
                    f.window_start.to_string(),
                    f.window_end.to_string(),
                    f.n_params.to_string(),
                    f.loglik.to_string(),
                    f.aic.to_string(),
                ]
            })
        })
        .collect();
    out.push(write_table(
        dir,
        "fits.csv",
        &strings(&[
            "model",
            "window_start",
            "window_end",
            "n_params",
            "loglik",
            "aic",
        ]),
        rows,
    )?);

    if report.mode == ForecastMode::LongTerm {
        let named = report
            .models
            .iter()
            .flat_map(|m| m.multivariate.iter().map(move |r| (m.name.as_str(), r)))
            .chain(
                report
                    .naive_final_size
                    .iter()
                    .map(|r| (NAIVE_FINAL_SIZE, r)),
            );
        let rows = named
            .map(|(name, r)| {
                vec![
                    name.to_string(),
                    r.origin.to_string(),
                    r.target.name().to_string(),
                    r.dim.to_string(),
                    r.mdss.to_string(),
                    r.logds.to_string(),
                ]
            })
            .collect();
        out.push(write_table(
            dir,
            "multivariate_scores.csv",
            &strings(&["model", "origin", "target", "dim", "mdss", "logds"]),
            rows,
        )?);

        let rows = report
            .models
            .iter()
            .flat_map(|m| {
                m.peak_weeks.iter().map(|p| {
                    vec![
                        m.name.clone(),
                        p.origin.to_string(),
                        p.median.to_string(),
                        p.lower.to_string(),
                        p.upper.to_string(),
                        p.observed.to_string(),
                    ]
                })
            })
            .collect();
        out.push(write_table(
            dir,
            "peak_weeks.csv",
            &strings(&["model", "origin", "median", "lower", "upper", "observed"]),
            rows,
        )?);
    }

    let rows = report
        .failures
        .iter()
        .map(|f| vec![f.model.clone(), f.message.clone()])
        .collect();
    out.push(write_table(
        dir,
        "failures.csv",
        &strings(&["model", "message"]),
        rows,
    )?);

    let json = dir.join("report.json");
    std::fs::write(&json, serde_json::to_string_pretty(report)? + "\n")?;
    out.push(json);
    Ok(out)
}

/// Writes `fanchart_quantiles.csv`: predictive mean and quantiles of every
/// marginal forecast next to the observation.
pub fn emit_fanchart(report: &EvaluationReport, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut header = strings(&[
        "model", "origin", "week", "horizon", "group", "observed", "mean",
    ]);
    header.extend(QUANTILE_LEVELS.iter().map(|p| format!("q{p}")));
    let mut rows = Vec::new();
    for m in &report.models {
        for f in &m.forecasts {
            let mut row = vec![
                m.name.clone(),
                f.origin.to_string(),
                f.week.to_string(),
                f.horizon.to_string(),
                f.group.clone(),
                f.observed.to_string(),
                f.mean.to_string(),
            ];
            row.extend(f.quantiles.iter().map(u64::to_string));
            rows.push(row);
        }
    }
    write_table(dir, "fanchart_quantiles.csv", &header, rows)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<EvaluationReport> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
