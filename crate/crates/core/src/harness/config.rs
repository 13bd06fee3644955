use std::collections::HashSet;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ee_model::{
    ComponentSpec, ContactMatrix, ContactStructure, IsoWeek, ModelSpec, Seasonality, Sharing,
    SurveillanceSeries,
};
use crate::error::{Error, Result};
use crate::scores::ScoreKind;

/// Name under which the naive historical forecaster appears in reports.
pub const NAIVE_MODEL: &str = "naive";
/// Name of the naive final-size forecaster of long-term experiments.
pub const NAIVE_FINAL_SIZE: &str = "naive-final-size";

/// Declarative description of one evaluation experiment, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Count table with header `year,week,<group>...`.
    pub data: PathBuf,
    /// Group columns to use, in order. All columns when absent.
    #[serde(default)]
    pub groups: Option<Vec<String>>,
    /// Contact matrix CSV for `fixed` and `power` models.
    #[serde(default)]
    pub contacts: Option<PathBuf>,
    /// Population sizes per group, needed for population offsets.
    #[serde(default)]
    pub populations: Option<Vec<f64>>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Simulated paths per long-term forecast.
    #[serde(default = "default_simulations")]
    pub simulations: usize,
    #[serde(default = "default_pit_bins")]
    pub pit_bins: usize,
    #[serde(default = "default_scores")]
    pub scores: Vec<ScoreKind>,
    /// ISO week on which seasons start, 1 for calendar years.
    #[serde(default = "default_season_start")]
    pub season_start_week: u32,
    /// Sign flips drawn by the permutation test.
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    /// Include the naive historical forecaster of weekly counts.
    #[serde(default = "default_true")]
    pub naive: bool,
    /// In long-term mode, also forecast final sizes from past seasons.
    #[serde(default = "default_true")]
    pub naive_final_size: bool,
    pub train: Window,
    pub test: Window,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
}

/// Inclusive range of calendar weeks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start: IsoWeek,
    pub end: IsoWeek,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeConfig {
    /// Every test week predicted from the week before. Parameters stay at
    /// the training fit unless `refit` is set.
    OneStepAhead {
        #[serde(default)]
        refit: bool,
    },
    /// Simulated trajectories of `horizon` weeks from each origin. Defaults
    /// to one origin at the start of the test window covering all of it.
    LongTerm {
        #[serde(default)]
        horizon: Option<usize>,
        #[serde(default)]
        origins: Option<Vec<IsoWeek>>,
    },
}

impl Default for ModeConfig {
    fn default() -> Self {
        ModeConfig::OneStepAhead { refit: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactKind {
    Identity,
    Homogeneous,
    Fixed,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default = "default_contacts")]
    pub contacts: ContactKind,
    /// Row-normalize a fixed contact matrix before use.
    #[serde(default = "default_true")]
    pub row_normalize: bool,
    #[serde(default = "default_group_specific")]
    pub overdispersion: Sharing,
    /// Seasonal period in weeks.
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_holiday_weeks")]
    pub holiday_weeks: Vec<u32>,
    #[serde(default)]
    pub population_offset: bool,
    #[serde(default)]
    pub endemic: ComponentConfig,
    /// Absent for an endemic-only model.
    #[serde(default)]
    pub epidemic: Option<ComponentConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    #[serde(default = "default_group_specific")]
    pub intercept: Sharing,
    #[serde(default)]
    pub harmonics: usize,
    #[serde(default = "default_shared")]
    pub seasonality: Sharing,
    #[serde(default)]
    pub holiday: bool,
}

impl Default for ComponentConfig {
    fn default() -> Self {
        Self {
            intercept: Sharing::GroupSpecific,
            harmonics: 0,
            seasonality: Sharing::Shared,
            holiday: false,
        }
    }
}

impl From<ComponentConfig> for ComponentSpec {
    fn from(c: ComponentConfig) -> Self {
        ComponentSpec {
            intercept: c.intercept,
            seasonality: Seasonality {
                harmonics: c.harmonics,
                sharing: c.seasonality,
            },
            holiday: c.holiday,
        }
    }
}

fn default_seed() -> u64 {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}
fn default_simulations() -> usize {
    1000
}
fn default_pit_bins() -> usize {
    crate::calibration::DEFAULT_PIT_BINS
}
fn default_scores() -> Vec<ScoreKind> {
    vec![ScoreKind::Ls, ScoreKind::Rps, ScoreKind::Dss]
}
fn default_season_start() -> u32 {
    1
}
fn default_permutations() -> usize {
    9999
}
fn default_true() -> bool {
    true
}
fn default_contacts() -> ContactKind {
    ContactKind::Identity
}
fn default_group_specific() -> Sharing {
    Sharing::GroupSpecific
}
fn default_shared() -> Sharing {
    Sharing::Shared
}
fn default_period() -> f64 {
    52.0
}
fn default_holiday_weeks() -> Vec<u32> {
    vec![52, 1]
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Time indices of an experiment resolved against the data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    /// Response times of the training fit.
    pub fit_window: Range<usize>,
    pub test: Range<usize>,
    /// Long-term origins with a common horizon; empty in one-step mode.
    pub origins: Vec<usize>,
    pub horizon: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            let resolve = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            resolve(&mut cfg.data);
            resolve(&mut cfg.output_dir);
            if let Some(c) = cfg.contacts.as_mut() {
                resolve(c);
            }
        }
        Ok(cfg)
    }

    pub fn is_long_term(&self) -> bool {
        matches!(self.mode, ModeConfig::LongTerm { .. })
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.train.start >= self.train.end {
            return Err(config_err(format!(
                "training window {} to {} needs at least two weeks",
                self.train.start, self.train.end
            )));
        }
        if self.test.start > self.test.end {
            return Err(config_err(format!(
                "test window {} to {} is empty",
                self.test.start, self.test.end
            )));
        }
        if self.test.start <= self.train.end {
            return Err(config_err(format!(
                "test window starts at {}, not after the training window ending {}",
                self.test.start, self.train.end
            )));
        }
        if self.simulations == 0 {
            return Err(config_err("simulations must be >= 1"));
        }
        if self.pit_bins < 2 {
            return Err(config_err("pit_bins must be >= 2"));
        }
        if self.scores.is_empty() {
            return Err(config_err("no scores requested"));
        }
        if !(1..=53).contains(&self.season_start_week) {
            return Err(config_err("season_start_week must lie in 1..=53"));
        }
        if self.permutations < 99 {
            return Err(config_err("permutations must be >= 99"));
        }
        if self.models.is_empty() && !self.naive && !(self.is_long_term() && self.naive_final_size)
        {
            return Err(config_err("no models to evaluate"));
        }
        let mut names = HashSet::new();
        names.insert(NAIVE_MODEL);
        names.insert(NAIVE_FINAL_SIZE);
        for m in &self.models {
            if m.name.is_empty() {
                return Err(config_err("model name must not be empty"));
            }
            if !names.insert(m.name.as_str()) {
                return Err(config_err(format!("duplicate model name '{}'", m.name)));
            }
            if !(m.period > 0.0 && m.period.is_finite()) {
                return Err(config_err(format!(
                    "model '{}': period must be > 0",
                    m.name
                )));
            }
            if let Some(w) = m.holiday_weeks.iter().find(|w| !(1..=53).contains(*w)) {
                return Err(config_err(format!(
                    "model '{}': invalid holiday week {w}",
                    m.name
                )));
            }
        }
        if let ModeConfig::LongTerm { horizon, origins } = &self.mode {
            if *horizon == Some(0) {
                return Err(config_err("horizon must be >= 1"));
            }
            let h = self.horizon();
            for o in self.origins() {
                if o < self.test.start || o.plus(h as i64 - 1) > self.test.end {
                    return Err(config_err(format!(
                        "origin {o} with horizon {h} leaves the test window {} to {}",
                        self.test.start, self.test.end
                    )));
                }
            }
            if origins.as_ref().is_some_and(|o| o.is_empty()) {
                return Err(config_err("origins must not be empty"));
            }
        }
        Ok(())
    }

    fn horizon(&self) -> usize {
        match &self.mode {
            ModeConfig::LongTerm {
                horizon: Some(h), ..
            } => *h,
            _ => (self.test.start.weeks_until(&self.test.end) + 1) as usize,
        }
    }

    fn origins(&self) -> Vec<IsoWeek> {
        match &self.mode {
            ModeConfig::LongTerm {
                origins: Some(o), ..
            } => o.clone(),
            _ => vec![self.test.start],
        }
    }

    /// Resolves the windows against the data.
    pub fn plan(&self, data: &SurveillanceSeries) -> Result<Plan> {
        let locate = |w: IsoWeek| {
            data.index_of(w)
                .filter(|t| *t < data.n_times())
                .ok_or_else(|| {
                    config_err(format!(
                        "week {w} is not in the data ({} to {})",
                        data.weeks()[0],
                        data.weeks()[data.n_times() - 1]
                    ))
                })
        };
        let train_start = locate(self.train.start)?;
        let train_end = locate(self.train.end)?;
        let test_start = locate(self.test.start)?;
        let test_end = locate(self.test.end)?;
        let (origins, horizon) = if self.is_long_term() {
            let origins = self
                .origins()
                .into_iter()
                .map(locate)
                .collect::<Result<Vec<_>>>()?;
            (origins, self.horizon())
        } else {
            (Vec::new(), 1)
        };
        Ok(Plan {
            fit_window: train_start + 1..train_end + 1,
            test: test_start..test_end + 1,
            origins,
            horizon,
        })
    }
}

/// Reorders `contacts` to the group order of the data.
pub fn align_contacts(contacts: &ContactMatrix, labels: &[String]) -> Result<ContactMatrix> {
    if contacts.labels() == labels {
        return Ok(contacts.clone());
    }
    if contacts.dim() != labels.len() {
        return Err(config_err(format!(
            "contact matrix has {} groups, the data {}",
            contacts.dim(),
            labels.len()
        )));
    }
    let perm = labels
        .iter()
        .map(|l| {
            contacts
                .labels()
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| config_err(format!("group '{l}' missing from the contact matrix")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(contacts.permuted(&perm))
}

impl ModelConfig {
    /// Model specification; `contacts` must already follow the data's group
    /// order.
    pub fn to_spec(&self, contacts: Option<&ContactMatrix>) -> Result<ModelSpec> {
        let need = || {
            contacts
                .cloned()
                .ok_or_else(|| config_err(format!("model '{}' needs a contact matrix", self.name)))
        };
        let structure = match self.contacts {
            ContactKind::Identity => ContactStructure::Identity,
            ContactKind::Homogeneous => ContactStructure::Homogeneous,
            ContactKind::Fixed => {
                let c = need()?;
                ContactStructure::Fixed(if self.row_normalize {
                    c.row_normalize()?
                } else {
                    c
                })
            }
            ContactKind::Power => ContactStructure::PowerAdjusted(need()?),
        };
        let mut spec = ModelSpec::new(self.name.clone());
        spec.endemic = self.endemic.into();
        spec.epidemic = self.epidemic.map(Into::into);
        spec.contacts = structure;
        spec.overdispersion = self.overdispersion;
        spec.omega = 2.0 * std::f64::consts::PI / self.period;
        spec.holiday_weeks = self.holiday_weeks.clone();
        spec.population_offset = self.population_offset;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
data = "counts.csv"
seed = 7
scores = ["ls", "dss"]

[train]
start = "2011-W27"
end = "2015-W26"

[test]
start = "2015-W27"
end = "2016-W26"

[[models]]
name = "no-mixing"
overdispersion = "group_specific"

[models.endemic]
harmonics = 1
holiday = true

[models.epidemic]
intercept = "group_specific"

[[models]]
name = "power"
contacts = "power"
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.simulations, 1000);
        assert_eq!(cfg.scores, vec![ScoreKind::Ls, ScoreKind::Dss]);
        assert_eq!(cfg.mode, ModeConfig::OneStepAhead { refit: false });
        assert!(cfg.naive);
        let m = &cfg.models[0];
        assert_eq!(m.endemic.harmonics, 1);
        assert!(m.endemic.holiday);
        assert!(m.epidemic.is_some());
        assert!(cfg.models[1].epidemic.is_none());
        assert_eq!(cfg.models[1].contacts, ContactKind::Power);
    }

    #[test]
    fn rejects_bad_windows_and_settings() {
        let swap = BASE.replace("start = \"2015-W27\"", "start = \"2015-W20\"");
        assert!(matches!(
            ExperimentConfig::from_toml(&swap),
            Err(Error::Config(_))
        ));
        let empty = BASE.replace("end = \"2016-W26\"", "end = \"2015-W20\"");
        assert!(ExperimentConfig::from_toml(&empty).is_err());
        let zero_m = format!("simulations = 0\n{BASE}");
        assert!(ExperimentConfig::from_toml(&zero_m).is_err());
        let dup = BASE.replace("name = \"power\"", "name = \"no-mixing\"");
        assert!(ExperimentConfig::from_toml(&dup).is_err());
        let unknown = format!("colour = 1\n{BASE}");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
        let zero_h = format!("mode = {{ kind = \"long_term\", horizon = 0 }}\n{BASE}");
        assert!(ExperimentConfig::from_toml(&zero_h).is_err());
    }

    #[test]
    fn long_term_origins_stay_in_test_window() {
        let lt = |m: &str| format!("mode = {m}\n{BASE}");
        let ok = ExperimentConfig::from_toml(&lt("{ kind = \"long_term\" }")).unwrap();
        assert!(ok.is_long_term());
        // 2015 has 53 ISO weeks
        assert_eq!(ok.horizon(), 53);
        assert!(ExperimentConfig::from_toml(&lt(
            "{ kind = \"long_term\", horizon = 30, origins = [\"2015-W27\", \"2015-W40\"] }"
        ))
        .is_ok());
        assert!(ExperimentConfig::from_toml(&lt(
            "{ kind = \"long_term\", horizon = 30, origins = [\"2016-W01\"] }"
        ))
        .is_err());
    }

    #[test]
    fn contacts_are_reordered_by_label() {
        let c = ContactMatrix::new(
            nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let r = align_contacts(&c, &["b".into(), "a".into()]).unwrap();
        assert_eq!(r.weights()[(0, 0)], 5.0);
        assert!(align_contacts(&c, &["a".into(), "z".into()]).is_err());
    }
}
