#![allow(dead_code)]

use std::path::PathBuf;

use epiforecast::ee_model::{
    simulate_series, ComponentSpec, IsoWeek, Model, ModelSpec, Seasonality, Sharing,
    SurveillanceSeries,
};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn labels(g: usize) -> Vec<String> {
    (0..g).map(|i| format!("g{i}")).collect()
}

/// Two groups, one shared harmonic in the endemic part, group-specific
/// epidemic intercepts and sizes, no mixing.
pub fn recovery_spec() -> ModelSpec {
    let mut spec = ModelSpec::new("recovery");
    spec.endemic = ComponentSpec {
        intercept: Sharing::GroupSpecific,
        seasonality: Seasonality {
            harmonics: 1,
            sharing: Sharing::Shared,
        },
        holiday: false,
    };
    spec
}

/// Truth in packed order: endemic intercepts, sin, cos, epidemic
/// intercepts, log sizes.
pub fn recovery_truth() -> Vec<f64> {
    vec![
        5f64.ln(),
        3f64.ln(),
        0.5,
        -0.3,
        0.4f64.ln(),
        0.6f64.ln(),
        5f64.ln(),
        10f64.ln(),
    ]
}

pub fn simulate(
    spec: &ModelSpec,
    theta: &[f64],
    groups: usize,
    n_times: usize,
    seed: u64,
) -> SurveillanceSeries {
    let labels = labels(groups);
    let model = Model::new(spec.clone(), &labels).unwrap();
    let start = IsoWeek::new(2001, 1).unwrap();
    let initial = vec![5; groups];
    simulate_series(&model, theta, &labels, None, start, &initial, n_times, seed).unwrap()
}

/// Writes `data` in the ingest format.
pub fn write_counts(data: &SurveillanceSeries, path: &std::path::Path) {
    let mut out = String::from("year,week");
    for l in data.labels() {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for t in 0..data.n_times() {
        let w = data.week_at(t);
        out.push_str(&format!("{},{}", w.year(), w.week()));
        for y in data.counts_at(t) {
            out.push_str(&format!(",{y}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}
