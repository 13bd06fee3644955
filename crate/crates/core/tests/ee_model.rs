mod common;

use epiforecast::ee_model::{
    fit, long_term_predictive, one_step_ahead, simulate_paths, simulate_with_params, ComponentSpec,
    ContactMatrix, ContactStructure, Model, ModelSpec, OptimOptions, Seasonality, Sharing,
    SurveillanceSeries,
};
use nalgebra::DMatrix;

use common::{labels, recovery_spec, recovery_truth, simulate};

#[test]
fn single_replication_recovers_parameters() {
    let spec = recovery_spec();
    let truth = recovery_truth();
    let data = simulate(&spec, &truth, 2, 500, 11);
    let f = fit(&spec, &data, 1..500, None, OptimOptions::default()).unwrap();
    let se = f.std_errors().unwrap();
    for (i, name) in f.param_names().iter().enumerate() {
        let z = (f.params()[i] - truth[i]) / se[i];
        assert!(
            z.abs() < 4.0,
            "{name}: estimate {} truth {}",
            f.params()[i],
            truth[i]
        );
    }
    assert!(f.diagnostics().converged);
    assert!((f.aic() - (-2.0 * f.loglik() + 2.0 * f.n_params() as f64)).abs() < 1e-8);
}

#[test]
fn refitting_from_the_optimum_is_a_fixed_point() {
    let spec = recovery_spec();
    let data = simulate(&spec, &recovery_truth(), 2, 300, 5);
    let a = fit(&spec, &data, 1..300, None, OptimOptions::default()).unwrap();
    let b = fit(
        &spec,
        &data,
        1..300,
        Some(a.params()),
        OptimOptions::default(),
    )
    .unwrap();
    assert_eq!(b.diagnostics().iterations, 0);
    assert!((a.loglik() - b.loglik()).abs() < 1e-8);
}

#[test]
fn season_contributions_sum_to_total() {
    let spec = recovery_spec();
    let data = simulate(&spec, &recovery_truth(), 2, 300, 6);
    let f = fit(&spec, &data, 1..300, None, OptimOptions::default()).unwrap();
    let seasons = f.season_loglik(&data, 1..300, 27).unwrap();
    assert!(seasons.len() >= 6);
    let sum: f64 = seasons.iter().map(|s| s.loglik).sum();
    assert!((sum - f.loglik()).abs() < 1e-8);
}

fn mixing_spec(c: ContactMatrix) -> ModelSpec {
    let mut spec = ModelSpec::new("mixing");
    spec.endemic = ComponentSpec {
        intercept: Sharing::GroupSpecific,
        seasonality: Seasonality {
            harmonics: 1,
            sharing: Sharing::GroupSpecific,
        },
        holiday: true,
    };
    spec.contacts = ContactStructure::PowerAdjusted(c);
    spec
}

fn permute_series(data: &SurveillanceSeries, perm: &[usize]) -> SurveillanceSeries {
    SurveillanceSeries::new(
        perm.iter()
            .map(|&g| data.group_counts(g).to_vec())
            .collect(),
        data.weeks().to_vec(),
        perm.iter().map(|&g| data.labels()[g].clone()).collect(),
        None,
    )
    .unwrap()
}

#[test]
fn likelihood_is_invariant_to_group_relabeling() {
    let c = ContactMatrix::new(
        DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 1.0, 0.5, 1.0, 2.0]),
        labels(3),
    )
    .unwrap();
    let spec = mixing_spec(c.clone());
    let model = Model::new(spec.clone(), &labels(3)).unwrap();
    let names = model.layout().names.clone();
    let theta: Vec<f64> = (0..names.len())
        .map(|i| 0.1 * ((i * 7 % 5) as f64) - 0.2)
        .collect();
    let data = simulate(&spec, &theta, 3, 120, 3);
    let base = model.log_likelihood(&theta, &data, 1..120, true).unwrap();

    let perm = [2, 0, 1];
    let pdata = permute_series(&data, &perm);
    let pspec = mixing_spec(c.permuted(&perm));
    let pmodel = Model::new(pspec, pdata.labels()).unwrap();
    // labels travel with the groups, so parameter names identify positions
    let ptheta: Vec<f64> = pmodel
        .layout()
        .names
        .iter()
        .map(|n| theta[names.iter().position(|m| m == n).unwrap()])
        .collect();
    let permuted = pmodel
        .log_likelihood(&ptheta, &pdata, 1..120, true)
        .unwrap();
    assert!((base.value - permuted.value).abs() < 1e-9 * base.value.abs());
    let (g0, g1) = (base.gradient.unwrap(), permuted.gradient.unwrap());
    for (i, n) in pmodel.layout().names.iter().enumerate() {
        let j = names.iter().position(|m| m == n).unwrap();
        assert!((g1[i] - g0[j]).abs() < 1e-8 * (1.0 + g0[j].abs()), "{n}");
    }
}

#[test]
fn eighty_percent_intervals_cover_at_nominal_rate() {
    let spec = recovery_spec();
    let mut theta = recovery_truth();
    theta[0] = 50f64.ln();
    theta[1] = 30f64.ln();
    let data = simulate(&spec, &theta, 2, 2501, 80);
    let model = Model::new(spec, data.labels()).unwrap();
    let sizes = model.sizes(&theta);
    let mut hits = 0usize;
    let mut n = 0usize;
    for t in 1..data.n_times() {
        let mu = model.conditional_means(&theta, &data, t).unwrap();
        for g in 0..2 {
            let d =
                epiforecast::forecast_dist::CountDistribution::neg_bin(mu[g], sizes[g]).unwrap();
            let (lo, hi) = (d.quantile(0.1).unwrap(), d.quantile(0.9).unwrap());
            let y = data.count(g, t);
            hits += usize::from(lo <= y && y <= hi);
            n += 1;
        }
    }
    assert_eq!(n, 5000);
    let coverage = hits as f64 / n as f64;
    assert!((0.76..=0.84).contains(&coverage), "coverage {coverage}");
}

#[test]
fn endemic_only_paths_are_iid_draws() {
    let mut spec = ModelSpec::new("endemic");
    spec.epidemic = None;
    let data = simulate(&spec, &[2f64.ln(), 8f64.ln(), 0.0, 1f64.ln()], 2, 20, 1);
    let model = Model::new(spec, data.labels()).unwrap();
    let theta = [2f64.ln(), 8f64.ln(), 0.0, 1f64.ln()];
    let m = 20_000;
    let sim = simulate_with_params(&model, &theta, &data, 5, 4, m, 99).unwrap();
    for (g, (nu, size)) in [(2.0, 1.0), (8.0, 1.0)].into_iter().enumerate() {
        for h in 0..4 {
            let mean = (0..m).map(|p| sim.count(p, h, g)).sum::<f64>() / m as f64;
            let se = ((nu + nu * nu / size) / m as f64).sqrt();
            assert!((mean - nu).abs() < 3.0 * se, "g{g} h{h}: {mean}");
        }
    }
    let lt = long_term_predictive(&sim).unwrap();
    let nb = epiforecast::forecast_dist::CountDistribution::neg_bin(8.0, 1.0).unwrap();
    for k in 0..60 {
        assert!((lt.marginals[2][1].pmf(k) - nb.pmf(k)).abs() < 1e-12);
    }
}

#[test]
fn simulation_is_reproducible_under_a_seed() {
    let spec = recovery_spec();
    let data = simulate(&spec, &recovery_truth(), 2, 200, 8);
    let f = fit(&spec, &data, 1..150, None, OptimOptions::default()).unwrap();
    let a = simulate_paths(&f, &data, 150, 20, 50, 4).unwrap();
    let b = simulate_paths(&f, &data, 150, 20, 50, 4).unwrap();
    let c = simulate_paths(&f, &data, 150, 20, 50, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn one_week_simulation_matches_plug_in_forecast() {
    let spec = recovery_spec();
    let data = simulate(&spec, &recovery_truth(), 2, 200, 9);
    let f = fit(&spec, &data, 1..150, None, OptimOptions::default()).unwrap();
    let analytic = one_step_ahead(&f, &data, 150..151).unwrap();
    let sim = simulate_paths(&f, &data, 150, 1, 200, 1).unwrap();
    let lt = long_term_predictive(&sim).unwrap();
    for (a, b) in analytic[0].iter().zip(&lt.marginals[0]) {
        for k in 0..b.table().end() {
            if a.pmf(k) > 1e-10 {
                assert!((a.pmf(k) - b.pmf(k)).abs() < 1e-12, "k={k}");
            }
        }
    }
}
