//! Model specification, parameter layout and the conditional
//! negative-binomial likelihood.
//!
//! Given last week's counts, `Y_gt ~ NB(μ_gt, ψ_g)` with
//! `μ_gt = ν_gt + φ_gt Σ_{g'} c_{g'g} Y_{g',t−1}`, where `log ν_gt` and
//! `log φ_gt` are linear predictors built from group intercepts, a holiday
//! indicator and sine–cosine seasonality.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use super::contact::{row_normalize_with_derivative, ContactMatrix, PowerBasis};
use super::series::{IsoWeek, SurveillanceSeries};
use crate::error::{Error, Result};
use crate::forecast_dist::ln_nb_pmf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    Shared,
    GroupSpecific,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seasonality {
    /// Number of harmonic pairs `sin(kωt), cos(kωt)`, `k = 1..=S`.
    pub harmonics: usize,
    pub sharing: Sharing,
}

impl Seasonality {
    pub const NONE: Seasonality = Seasonality {
        harmonics: 0,
        sharing: Sharing::Shared,
    };
}

/// Covariates of one log-linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub intercept: Sharing,
    pub seasonality: Seasonality,
    /// Shared coefficient on the holiday-week indicator.
    pub holiday: bool,
}

impl ComponentSpec {
    pub fn intercepts_only() -> Self {
        Self {
            intercept: Sharing::GroupSpecific,
            seasonality: Seasonality::NONE,
            holiday: false,
        }
    }

    fn n_params(&self, groups: usize) -> usize {
        let per = |s: Sharing| if s == Sharing::Shared { 1 } else { groups };
        per(self.intercept)
            + usize::from(self.holiday)
            + 2 * self.seasonality.harmonics * per(self.seasonality.sharing)
    }

    fn names(&self, prefix: &str, labels: &[String]) -> Vec<String> {
        let mut out = Vec::new();
        match self.intercept {
            Sharing::Shared => out.push(format!("{prefix}.(Intercept)")),
            Sharing::GroupSpecific => {
                out.extend(labels.iter().map(|l| format!("{prefix}.(Intercept).{l}")))
            }
        }
        if self.holiday {
            out.push(format!("{prefix}.holiday"));
        }
        for k in 1..=self.seasonality.harmonics {
            for f in ["sin", "cos"] {
                match self.seasonality.sharing {
                    Sharing::Shared => out.push(format!("{prefix}.{f}({k}wt)")),
                    Sharing::GroupSpecific => {
                        out.extend(labels.iter().map(|l| format!("{prefix}.{f}({k}wt).{l}")))
                    }
                }
            }
        }
        out
    }

    /// Non-zero design entries `(column, value)` for group `g` at time `t`.
    fn terms(
        &self,
        groups: usize,
        g: usize,
        t: usize,
        holiday: bool,
        omega: f64,
        out: &mut Vec<(usize, f64)>,
    ) {
        out.clear();
        let mut col = 0;
        match self.intercept {
            Sharing::Shared => {
                out.push((0, 1.0));
                col += 1;
            }
            Sharing::GroupSpecific => {
                out.push((g, 1.0));
                col += groups;
            }
        }
        if self.holiday {
            if holiday {
                out.push((col, 1.0));
            }
            col += 1;
        }
        let tf = t as f64;
        for k in 1..=self.seasonality.harmonics {
            let arg = k as f64 * omega * tf;
            for v in [arg.sin(), arg.cos()] {
                match self.seasonality.sharing {
                    Sharing::Shared => {
                        out.push((col, v));
                        col += 1;
                    }
                    Sharing::GroupSpecific => {
                        out.push((col + g, v));
                        col += groups;
                    }
                }
            }
        }
    }
}

/// How lagged counts of other groups enter the epidemic component.
#[derive(Debug, Clone, PartialEq)]
pub enum ContactStructure {
    /// No mixing between groups.
    Identity,
    /// All weights 1.
    Homogeneous,
    /// Weights used exactly as given.
    Fixed(ContactMatrix),
    /// `C^κ` with κ estimated, row-normalized after each transform.
    PowerAdjusted(ContactMatrix),
}

impl ContactStructure {
    fn label(&self) -> &'static str {
        match self {
            ContactStructure::Identity => "identity",
            ContactStructure::Homogeneous => "homogeneous",
            ContactStructure::Fixed(_) => "fixed",
            ContactStructure::PowerAdjusted(_) => "power-adjusted",
        }
    }
}

/// Default seasonal frequency: one cycle per 52 weeks.
pub const OMEGA_52: f64 = 2.0 * std::f64::consts::PI / 52.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub endemic: ComponentSpec,
    /// `None` gives an endemic-only model (`φ = 0`).
    pub epidemic: Option<ComponentSpec>,
    pub contacts: ContactStructure,
    pub overdispersion: Sharing,
    /// Seasonal frequency in radians per week.
    pub omega: f64,
    /// ISO weeks flagged by the holiday indicator.
    pub holiday_weeks: Vec<u32>,
    /// Multiply `ν_gt` by the group's population fraction.
    pub population_offset: bool,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            endemic: ComponentSpec::intercepts_only(),
            epidemic: Some(ComponentSpec::intercepts_only()),
            contacts: ContactStructure::Identity,
            overdispersion: Sharing::GroupSpecific,
            omega: OMEGA_52,
            holiday_weeks: vec![52, 1],
            population_offset: false,
        }
    }

    pub fn validate(&self, groups: usize) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::domain(format!(
                "seasonal frequency must be > 0, got {}",
                self.omega
            )));
        }
        let dim = match &self.contacts {
            ContactStructure::Fixed(c) | ContactStructure::PowerAdjusted(c) => Some(c.dim()),
            _ => None,
        };
        if let Some(d) = dim {
            if d != groups {
                return Err(Error::domain(format!(
                    "contact matrix is {d}x{d} but the data have {groups} groups"
                )));
            }
        }
        Ok(())
    }

    pub fn contact_label(&self) -> &'static str {
        self.contacts.label()
    }
}

/// Positions of each parameter block in the packed parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub endemic: Range<usize>,
    pub epidemic: Range<usize>,
    pub log_size: Range<usize>,
    pub log_kappa: Option<usize>,
    pub names: Vec<String>,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec, labels: &[String]) -> Self {
        let g = labels.len();
        let ne = spec.endemic.n_params(g);
        let np = spec.epidemic.map_or(0, |c| c.n_params(g));
        let nd = if spec.overdispersion == Sharing::Shared {
            1
        } else {
            g
        };
        let endemic = 0..ne;
        let epidemic = ne..ne + np;
        let log_size = ne + np..ne + np + nd;
        let log_kappa =
            matches!(spec.contacts, ContactStructure::PowerAdjusted(_)).then_some(log_size.end);
        let mut names = spec.endemic.names("end", labels);
        if let Some(c) = spec.epidemic {
            names.extend(c.names("epi", labels));
        }
        match spec.overdispersion {
            Sharing::Shared => names.push("log_size".into()),
            Sharing::GroupSpecific => names.extend(labels.iter().map(|l| format!("log_size.{l}"))),
        }
        if log_kappa.is_some() {
            names.push("log_kappa".into());
        }
        Self {
            endemic,
            epidemic,
            log_size,
            log_kappa,
            names,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Contact weights for a parameter vector, with the derivative with
/// respect to `log κ` for the power-adjusted structure.
pub(crate) struct Weights {
    pub w: DMatrix<f64>,
    pub dw_dlogk: Option<DMatrix<f64>>,
}

/// A specification bound to a number of groups, ready for evaluation.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    layout: ParamLayout,
    groups: usize,
    basis: Option<PowerBasis>,
}

/// Log-likelihood value with optional gradient and per-time contributions.
#[derive(Debug, Clone)]
pub struct LikelihoodEval {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    /// Contribution of each response time in the window, summed over groups.
    pub by_time: Vec<f64>,
}

/// `ψ(y + size) − ψ(size)`.
fn digamma_diff(y: u64, size: f64) -> f64 {
    if y < 64 {
        (0..y).map(|i| 1.0 / (size + i as f64)).sum()
    } else {
        digamma(y as f64 + size) - digamma(size)
    }
}

impl Model {
    pub fn new(spec: ModelSpec, labels: &[String]) -> Result<Self> {
        let groups = labels.len();
        spec.validate(groups)?;
        let layout = ParamLayout::new(&spec, labels);
        let basis = match &spec.contacts {
            ContactStructure::PowerAdjusted(c) => Some(PowerBasis::new(c)?),
            _ => None,
        };
        Ok(Self {
            spec,
            layout,
            groups,
            basis,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn n_params(&self) -> usize {
        self.layout.len()
    }

    pub(crate) fn check_params(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::LengthMismatch {
                left: theta.len(),
                right: self.n_params(),
            });
        }
        Ok(())
    }

    pub fn sizes(&self, theta: &[f64]) -> Vec<f64> {
        let ls = &theta[self.layout.log_size.clone()];
        (0..self.groups)
            .map(|g| if ls.len() == 1 { ls[0] } else { ls[g] }.exp())
            .collect()
    }

    pub fn kappa(&self, theta: &[f64]) -> Option<f64> {
        self.layout.log_kappa.map(|i| theta[i].exp())
    }

    pub(crate) fn weights(&self, theta: &[f64], with_derivative: bool) -> Result<Weights> {
        let g = self.groups;
        Ok(match &self.spec.contacts {
            ContactStructure::Identity => Weights {
                w: DMatrix::identity(g, g),
                dw_dlogk: None,
            },
            ContactStructure::Homogeneous => Weights {
                w: DMatrix::from_element(g, g, 1.0),
                dw_dlogk: None,
            },
            ContactStructure::Fixed(c) => Weights {
                w: c.weights().clone(),
                dw_dlogk: None,
            },
            ContactStructure::PowerAdjusted(_) => {
                let basis = self
                    .basis
                    .as_ref()
                    .expect("power basis built with the model");
                let kappa = self.kappa(theta).expect("power model has κ");
                if with_derivative {
                    let (m, dm) = basis.power_with_derivative(kappa);
                    let (w, dw) = row_normalize_with_derivative(&m, &dm)?;
                    Weights {
                        w,
                        dw_dlogk: Some(dw * kappa),
                    }
                } else {
                    let (m, _) = basis.power(kappa);
                    let (w, _) = row_normalize_with_derivative(&m, &m)?;
                    Weights { w, dw_dlogk: None }
                }
            }
        })
    }

    fn is_holiday(&self, week: IsoWeek) -> bool {
        self.spec.holiday_weeks.contains(&week.week())
    }

    fn offset(&self, data: &SurveillanceSeries, g: usize) -> f64 {
        match (self.spec.population_offset, data.populations()) {
            (true, Some(p)) => p[g] / p.iter().sum::<f64>(),
            _ => 1.0,
        }
    }

    /// `(ν_gt, φ_gt)` for every group at time `t`.
    pub fn rates(
        &self,
        theta: &[f64],
        data: &SurveillanceSeries,
        t: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let week = data.week_at(t);
        let hol = self.is_holiday(week);
        let mut buf = Vec::new();
        let mut nu = Vec::with_capacity(self.groups);
        let mut phi = Vec::with_capacity(self.groups);
        let beta = &theta[self.layout.endemic.clone()];
        let gamma = &theta[self.layout.epidemic.clone()];
        for g in 0..self.groups {
            self.spec
                .endemic
                .terms(self.groups, g, t, hol, self.spec.omega, &mut buf);
            let eta: f64 = buf.iter().map(|(j, x)| beta[*j] * x).sum();
            nu.push(eta.exp() * self.offset(data, g));
            phi.push(match self.spec.epidemic {
                Some(c) => {
                    c.terms(self.groups, g, t, hol, self.spec.omega, &mut buf);
                    buf.iter().map(|(j, x)| gamma[*j] * x).sum::<f64>().exp()
                }
                None => 0.0,
            });
        }
        (nu, phi)
    }

    /// Epidemic input `Σ_{g'} w_{g'g} y_{g'}` for each group.
    pub(crate) fn epidemic_input(w: &DMatrix<f64>, lagged: &[f64]) -> Vec<f64> {
        (0..w.ncols())
            .map(|g| (0..w.nrows()).map(|h| w[(h, g)] * lagged[h]).sum())
            .collect()
    }

    /// Endemic and epidemic parts of the conditional mean at time `t` given
    /// the previous week's counts.
    pub(crate) fn mean_components(
        &self,
        theta: &[f64],
        weights: &DMatrix<f64>,
        data: &SurveillanceSeries,
        t: usize,
        lagged: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let (nu, phi) = self.rates(theta, data, t);
        let input = Self::epidemic_input(weights, lagged);
        let epi = phi.iter().zip(&input).map(|(p, e)| p * e).collect();
        (nu, epi)
    }

    /// `μ_gt` for every group at parameters `theta`, given the observed
    /// counts of week `t − 1`.
    pub fn conditional_means(
        &self,
        theta: &[f64],
        data: &SurveillanceSeries,
        t: usize,
    ) -> Result<Vec<f64>> {
        self.check_params(theta)?;
        if t == 0 || t > data.n_times() {
            return Err(Error::domain(format!(
                "time {t} has no observed previous week"
            )));
        }
        let w = self.weights(theta, false)?.w;
        let lagged: Vec<f64> = data
            .counts_at(t - 1)
            .into_iter()
            .map(|y| y as f64)
            .collect();
        let (nu, epi) = self.mean_components(theta, &w, data, t, &lagged);
        Ok(nu.iter().zip(&epi).map(|(a, b)| a + b).collect())
    }

    /// Design matrices (endemic, epidemic) stacked over the window's
    /// group-weeks.
    pub fn design_matrices(
        &self,
        data: &SurveillanceSeries,
        window: Range<usize>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let g = self.groups;
        let rows = window.len() * g;
        let ne = self.layout.endemic.len();
        let np = self.layout.epidemic.len();
        let mut xe = DMatrix::zeros(rows, ne);
        let mut xp = DMatrix::zeros(rows, np);
        let mut buf = Vec::new();
        for (i, t) in window.enumerate() {
            let hol = self.is_holiday(data.week_at(t));
            for k in 0..g {
                let r = i * g + k;
                self.spec
                    .endemic
                    .terms(g, k, t, hol, self.spec.omega, &mut buf);
                for (j, x) in &buf {
                    xe[(r, *j)] = *x;
                }
                if let Some(c) = self.spec.epidemic {
                    c.terms(g, k, t, hol, self.spec.omega, &mut buf);
                    for (j, x) in &buf {
                        xp[(r, *j)] = *x;
                    }
                }
            }
        }
        (xe, xp)
    }

    /// Conditional log-likelihood over the response times in `window`
    /// (each conditioning on the week before).
    pub fn log_likelihood(
        &self,
        theta: &[f64],
        data: &SurveillanceSeries,
        window: Range<usize>,
        with_gradient: bool,
    ) -> Result<LikelihoodEval> {
        self.check_params(theta)?;
        if window.start == 0 || window.end > data.n_times() || window.is_empty() {
            return Err(Error::domain(format!(
                "likelihood window {window:?} must lie within 1..{}",
                data.n_times()
            )));
        }
        let g_n = self.groups;
        let weights = self.weights(theta, with_gradient)?;
        let sizes = self.sizes(theta);
        let shared_size = self.layout.log_size.len() == 1;
        let mut grad = with_gradient.then(|| vec![0.0; self.n_params()]);
        let mut by_time = Vec::with_capacity(window.len());
        let mut total = 0.0;
        let mut buf = Vec::new();
        let beta_off = self.layout.endemic.start;
        let gamma_off = self.layout.epidemic.start;

        for t in window {
            let lagged: Vec<f64> = data
                .counts_at(t - 1)
                .into_iter()
                .map(|y| y as f64)
                .collect();
            let (nu, phi) = self.rates(theta, data, t);
            let input = Self::epidemic_input(&weights.w, &lagged);
            let dinput = weights
                .dw_dlogk
                .as_ref()
                .map(|dw| Self::epidemic_input(dw, &lagged));
            let hol = self.is_holiday(data.week_at(t));
            let mut at_t = 0.0;
            for g in 0..g_n {
                let y = data.count(g, t);
                let yf = y as f64;
                let mu = nu[g] + phi[g] * input[g];
                let size = sizes[g];
                let lp = ln_nb_pmf(y, mu, size);
                if !lp.is_finite() {
                    return Err(Error::NonFiniteLikelihood { group: g, time: t });
                }
                at_t += lp;
                if let Some(grad) = grad.as_mut() {
                    let s = yf / mu - (yf + size) / (mu + size);
                    self.spec
                        .endemic
                        .terms(g_n, g, t, hol, self.spec.omega, &mut buf);
                    for (j, x) in &buf {
                        grad[beta_off + j] += s * nu[g] * x;
                    }
                    if let Some(c) = self.spec.epidemic {
                        c.terms(g_n, g, t, hol, self.spec.omega, &mut buf);
                        for (j, x) in &buf {
                            grad[gamma_off + j] += s * phi[g] * input[g] * x;
                        }
                    }
                    let dsize = digamma_diff(y, size) - (mu / size).ln_1p() + 1.0
                        - (yf + size) / (mu + size);
                    let k = if shared_size { 0 } else { g };
                    grad[self.layout.log_size.start + k] += dsize * size;
                    if let (Some(i), Some(d)) = (self.layout.log_kappa, dinput.as_ref()) {
                        grad[i] += s * phi[g] * d[g];
                    }
                }
            }
            by_time.push(at_t);
            total += at_t;
        }
        Ok(LikelihoodEval {
            value: total,
            gradient: grad,
            by_time,
        })
    }

    /// Starting values: endemic intercepts at the log mean count, all other
    /// coefficients 0, `log ψ = 0` and `κ = 1`.
    pub fn initial_params(&self, data: &SurveillanceSeries, window: Range<usize>) -> Vec<f64> {
        let mut theta = vec![0.0; self.n_params()];
        let mean_of = |gs: &[usize]| -> f64 {
            let n = (gs.len() * window.len()) as f64;
            let s: u64 = gs
                .iter()
                .map(|&g| data.group_counts(g)[window.clone()].iter().sum::<u64>())
                .sum();
            (s as f64 / n).max(0.5)
        };
        match self.spec.endemic.intercept {
            Sharing::Shared => {
                let all: Vec<usize> = (0..self.groups).collect();
                theta[self.layout.endemic.start] = mean_of(&all).ln();
            }
            Sharing::GroupSpecific => {
                for g in 0..self.groups {
                    theta[self.layout.endemic.start + g] = mean_of(&[g]).ln();
                }
            }
        }
        theta
    }
}
