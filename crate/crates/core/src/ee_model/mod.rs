//! Endemic-epidemic negative-binomial model for multivariate surveillance
//! counts: specification, fitting, and forecasting.

pub mod contact;
pub mod fit;
pub mod forecast;
pub mod model;
pub mod optim;
pub mod series;

pub use contact::ContactMatrix;
pub use fit::{fit, FitDiagnostics, ModelFit, SeasonLoglik};
pub use forecast::{
    conditional_mean, decompose_fitted, final_size_forecast, long_term_predictive, one_step_ahead,
    peak_week_forecast, simulate_paths, simulate_series, simulate_with_params, FinalSizeForecast,
    FittedComponents, LongTermForecast, PathSimulation, PeakWeekForecast,
};
pub use model::{
    ComponentSpec, ContactStructure, LikelihoodEval, Model, ModelSpec, ParamLayout, Seasonality,
    Sharing, OMEGA_52,
};
pub use optim::OptimOptions;
pub use series::{IsoWeek, SurveillanceSeries};
