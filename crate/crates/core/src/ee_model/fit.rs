use std::ops::Range;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use super::model::{Model, ModelSpec};
use super::optim::{fd_hessian, minimize, OptimOptions};
use super::series::SurveillanceSeries;
use crate::error::{Error, Result};

/// Maximum-likelihood fit of an endemic-epidemic model.
#[derive(Debug, Clone)]
pub struct ModelFit {
    model: Model,
    params: Vec<f64>,
    loglik: f64,
    aic: f64,
    covariance: Option<DMatrix<f64>>,
    window: Range<usize>,
    diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub warnings: Vec<String>,
}

/// Sum of log-likelihood contributions within one season.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonLoglik {
    pub season: String,
    pub loglik: f64,
}

fn check_rank(x: &DMatrix<f64>, what: &str) -> Result<()> {
    if x.ncols() == 0 {
        return Ok(());
    }
    let sv = x.clone().singular_values();
    let max = sv.max();
    let rank = sv.iter().filter(|s| **s > 1e-9 * max.max(1.0)).count();
    if rank < x.ncols() {
        return Err(Error::RankDeficient(format!(
            "{what} design has rank {rank} < {} columns",
            x.ncols()
        )));
    }
    Ok(())
}

/// Fits `spec` by maximizing the conditional log-likelihood of the
/// response times in `window`.
pub fn fit(
    spec: &ModelSpec,
    data: &SurveillanceSeries,
    window: Range<usize>,
    init: Option<&[f64]>,
    opts: OptimOptions,
) -> Result<ModelFit> {
    let model = Model::new(spec.clone(), data.labels())?;
    let n = model.n_params();
    let mut warnings = Vec::new();
    if window.len() * data.n_groups() < n {
        warnings.push(format!(
            "{} observations for {n} parameters",
            window.len() * data.n_groups()
        ));
    }
    let (xe, xp) = model.design_matrices(data, window.clone());
    check_rank(&xe, "endemic")?;
    check_rank(&xp, "epidemic")?;

    let theta0 = match init {
        Some(t) => {
            model.check_params(t)?;
            t.to_vec()
        }
        None => model.initial_params(data, window.clone()),
    };
    // validates the window and the starting point
    model.log_likelihood(&theta0, data, window.clone(), false)?;

    let mut objective = |theta: &[f64]| -> Option<(f64, Vec<f64>)> {
        let e = model
            .log_likelihood(theta, data, window.clone(), true)
            .ok()?;
        let g = e.gradient?.into_iter().map(|x| -x).collect();
        Some((-e.value, g))
    };
    let res = minimize(&mut objective, &theta0, opts)
        .ok_or_else(|| Error::domain("log-likelihood not finite at the starting values"))?;
    if !res.converged {
        return Err(Error::NonConvergence {
            iterations: res.iterations,
            gradient_norm: res.grad_norm(),
        });
    }
    let covariance = fd_hessian(&mut objective, &res.x)
        .and_then(Cholesky::new)
        .map(|c| c.inverse());
    if covariance.is_none() {
        warnings.push("observed information is not positive definite".into());
    }
    let loglik = -res.value;
    Ok(ModelFit {
        aic: -2.0 * loglik + 2.0 * n as f64,
        loglik,
        params: res.x.clone(),
        covariance,
        window,
        diagnostics: FitDiagnostics {
            iterations: res.iterations,
            converged: res.converged,
            gradient_norm: res.grad_norm(),
            warnings,
        },
        model,
    })
}

impl ModelFit {
    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn spec(&self) -> &ModelSpec {
        self.model.spec()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.model.layout().names
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn aic(&self) -> f64 {
        self.aic
    }

    pub fn window(&self) -> Range<usize> {
        self.window.clone()
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// Inverse observed information on the unconstrained scale.
    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        self.covariance.as_ref()
    }

    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| c.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect())
    }

    /// Negative-binomial sizes `ψ_g` per group.
    pub fn sizes(&self) -> Vec<f64> {
        self.model.sizes(&self.params)
    }

    pub fn kappa(&self) -> Option<f64> {
        self.model.kappa(&self.params)
    }

    /// Log-likelihood contributions of `window` grouped by season, seasons
    /// starting at ISO week `season_start_week`.
    pub fn season_loglik(
        &self,
        data: &SurveillanceSeries,
        window: Range<usize>,
        season_start_week: u32,
    ) -> Result<Vec<SeasonLoglik>> {
        let e = self
            .model
            .log_likelihood(&self.params, data, window.clone(), false)?;
        let mut out: Vec<SeasonLoglik> = Vec::new();
        for (t, ll) in window.zip(e.by_time) {
            let season = data.weeks()[t].season_label(season_start_week);
            match out.last_mut() {
                Some(s) if s.season == season => s.loglik += ll,
                _ => out.push(SeasonLoglik { season, loglik: ll }),
            }
        }
        Ok(out)
    }
}
