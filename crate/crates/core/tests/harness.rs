mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use epiforecast::ee_model::ModelSpec;
use epiforecast::harness::{
    emit_report, ingest_csv, load_inputs, load_report, run_experiment, EvaluationReport,
    ExperimentConfig,
};
use epiforecast::scores::ScoreKind;
use epiforecast::Error;

use common::{fixture, simulate, write_counts};

fn fixture_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_file(fixture("experiment.toml")).unwrap();
    cfg.permutations = 999;
    cfg
}

fn run(cfg: &ExperimentConfig) -> EvaluationReport {
    let (data, contacts) = load_inputs(cfg, None).unwrap();
    run_experiment(cfg, &data, contacts.as_ref()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn fixture_experiment_tables_are_reproducible_and_consistent() {
    let cfg = fixture_config();
    let a = run(&cfg);
    let b = run(&cfg);
    assert!(a.failures.is_empty(), "{:?}", a.failures);
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let files = emit_report(&a, da.path()).unwrap();
    emit_report(&b, db.path()).unwrap();
    for f in &files {
        let name = f.file_name().unwrap();
        if name == "report.json" {
            continue;
        }
        let x = std::fs::read(f).unwrap();
        let y = std::fs::read(db.path().join(name)).unwrap();
        assert!(x == y, "{name:?} differs between runs");
        assert!(!x.contains(&b'\r'), "{name:?} has CR line endings");
    }

    // every requested score for every model, one row per forecast
    let (header, by_week) = read_csv(&da.path().join("scores_by_week.csv"));
    let (_, means) = read_csv(&da.path().join("mean_scores.csv"));
    assert_eq!(means.len(), a.models.len() * cfg.scores.len());
    let forecasts: usize = a.models.iter().map(|m| m.forecasts.len()).sum();
    assert_eq!(by_week.len(), forecasts);
    assert_eq!(forecasts, 4 * 6 * 53);
    for row in &means {
        let col = header.iter().position(|h| *h == row[1]).unwrap();
        let values: Vec<f64> = by_week
            .iter()
            .filter(|r| r[0] == row[0])
            .map(|r| r[col].parse().unwrap())
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let reported: f64 = row[2].parse().unwrap();
        assert!((mean - reported).abs() < 1e-10, "{} {}", row[0], row[1]);
        assert_eq!(row[3], values.len().to_string());
    }

    let (_, quantiles) = read_csv(&da.path().join("fanchart_quantiles.csv"));
    assert_eq!(quantiles.len(), forecasts);
    let (_, pit) = read_csv(&da.path().join("pit_bins.csv"));
    assert_eq!(pit.len(), a.models.len() * cfg.pit_bins);
    let (_, tests) = read_csv(&da.path().join("tests.csv"));
    assert!(!tests.is_empty());

    let loaded = load_report(da.path().join("report.json")).unwrap();
    assert_eq!(loaded, a);
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn identical_models_score_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("synthetic_counts.csv");
    let model = "contacts = \"identity\"\nendemic = { harmonics = 1 }\nepidemic = {}\n";
    let cfg = write_config(
        dir.path(),
        &format!(
            "data = {data:?}\nnaive = false\npermutations = 999\n\
             [train]\nstart = \"2011-W27\"\nend = \"2015-W26\"\n\
             [test]\nstart = \"2015-W27\"\nend = \"2016-W26\"\n\
             [[models]]\nname = \"first\"\n{model}\
             [[models]]\nname = \"second\"\n{model}"
        ),
    );
    let report = run(&ExperimentConfig::from_file(cfg).unwrap());
    assert_eq!(report.models.len(), 2);
    assert_eq!(report.models[0].scores, report.models[1].scores);
    let dm: Vec<_> = report
        .tests
        .iter()
        .filter(|t| t.result.method.starts_with("diebold"))
        .collect();
    assert_eq!(dm.len(), report.scores.len());
    for t in dm {
        assert_eq!(t.result.p_value, 1.0);
    }
}

#[test]
fn endemic_only_mean_dss_matches_true_law() {
    let mut spec = ModelSpec::new("stationary");
    spec.epidemic = None;
    let (nu, size) = ([6.0f64, 15.0], [2.0f64, 4.0]);
    let theta = [nu[0].ln(), nu[1].ln(), size[0].ln(), size[1].ln()];
    let data = simulate(&spec, &theta, 2, 801, 31);
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    write_counts(&data, &counts);
    let test_start = data.week_at(501);
    let test_end = data.week_at(800);
    let cfg = write_config(
        dir.path(),
        &format!(
            "data = {counts:?}\nnaive = false\npermutations = 999\nscores = [\"dss\"]\n\
             [train]\nstart = \"{}\"\nend = \"{}\"\n\
             [test]\nstart = \"{test_start}\"\nend = \"{test_end}\"\n\
             [[models]]\nname = \"endemic\"\n",
            data.week_at(0),
            data.week_at(500),
        ),
    );
    let report = run(&ExperimentConfig::from_file(cfg).unwrap());
    let s = report.models[0].score(ScoreKind::Dss).unwrap();
    assert_eq!(s.values.len(), 600);
    // expected DSS under the true law is ln σ² + 1
    let expected = (0..2)
        .map(|g| (nu[g] + nu[g] * nu[g] / size[g]).ln() + 1.0)
        .sum::<f64>()
        / 2.0;
    let n = s.values.len() as f64;
    let var = s.values.iter().map(|v| (v - s.mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!(
        (s.mean - expected).abs() < 3.0 * se,
        "mean {} expected {expected} se {se}",
        s.mean
    );
}

#[test]
fn one_week_long_term_log_scores_equal_one_step_scores() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("synthetic_counts.csv");
    let body = |mode: &str| {
        format!(
            "data = {data:?}\nnaive = false\nnaive_final_size = false\npermutations = 999\n\
             scores = [\"ls\", \"rps\"]\nsimulations = 50\n{mode}\n\
             [train]\nstart = \"2011-W27\"\nend = \"2015-W26\"\n\
             [test]\nstart = \"2015-W27\"\nend = \"2016-W26\"\n\
             [[models]]\nname = \"no-mixing\"\nendemic = {{ harmonics = 1, holiday = true }}\nepidemic = {{}}\n"
        )
    };
    let one = run(&ExperimentConfig::from_file(write_config(dir.path(), &body(""))).unwrap());
    let long = run(&ExperimentConfig::from_file(write_config(
        dir.path(),
        &body("mode = { kind = \"long_term\", horizon = 1, origins = [\"2015-W27\"] }"),
    ))
    .unwrap());
    let (a, b) = (&one.models[0], &long.models[0]);
    assert_eq!(b.forecasts.len(), 6);
    for kind in [ScoreKind::Ls, ScoreKind::Rps] {
        let (sa, sb) = (a.score(kind).unwrap(), b.score(kind).unwrap());
        for (i, rec) in b.forecasts.iter().enumerate() {
            assert_eq!(rec.week, a.forecasts[i].week);
            assert_eq!(rec.group, a.forecasts[i].group);
            assert!(
                (sa.values[i] - sb.values[i]).abs() < 1e-9,
                "{} {}: {} vs {}",
                kind.name(),
                rec.group,
                sa.values[i],
                sb.values[i]
            );
        }
    }
}

#[test]
fn long_term_report_has_multivariate_and_peak_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("synthetic_counts.csv");
    let cfg = write_config(
        dir.path(),
        &format!(
            "data = {data:?}\nnaive = false\npermutations = 999\nsimulations = 200\nseed = 3\n\
             mode = {{ kind = \"long_term\" }}\n\
             [train]\nstart = \"2011-W27\"\nend = \"2015-W26\"\n\
             [test]\nstart = \"2015-W27\"\nend = \"2016-W26\"\n\
             [[models]]\nname = \"no-mixing\"\nendemic = {{ harmonics = 1 }}\nepidemic = {{}}\n"
        ),
    );
    let cfg = ExperimentConfig::from_file(cfg).unwrap();
    let report = run(&cfg);
    let m = &report.models[0];
    assert_eq!(m.forecasts.len(), 53 * 6);
    let dims: BTreeMap<&str, usize> = m
        .multivariate
        .iter()
        .map(|r| (r.target.name(), r.dim))
        .collect();
    assert_eq!(dims["weekly"], 53 * 6);
    assert_eq!(dims["final_size"], 6);
    assert_eq!(m.peak_weeks.len(), 1);
    assert_eq!(report.naive_final_size.len(), 1);
    assert_eq!(report.naive_final_size[0].dim, 6);

    let out = tempfile::tempdir().unwrap();
    emit_report(&report, out.path()).unwrap();
    let (_, mv) = read_csv(&out.path().join("multivariate_scores.csv"));
    assert_eq!(mv.len(), 3);
    assert_eq!(load_report(out.path().join("report.json")).unwrap(), report);
}

#[test]
fn empty_test_window_is_rejected() {
    let text = "data = \"x.csv\"\n[train]\nstart = \"2011-W27\"\nend = \"2015-W26\"\n\
                [test]\nstart = \"2016-W27\"\nend = \"2016-W26\"\n";
    assert!(matches!(
        ExperimentConfig::from_toml(text),
        Err(Error::Config(_))
    ));
}

#[test]
fn ingest_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gappy.csv");
    std::fs::write(&path, "year,week,a\n2021,1,1\n2021,2,2\n2021,4,1\n").unwrap();
    let e = ingest_csv(&path, None).unwrap_err();
    let msg = e.to_string();
    assert!(msg.contains("gappy.csv:4:"), "{msg}");
    assert!(msg.contains("2021-W03"), "{msg}");
    assert!(matches!(
        ingest_csv(dir.path().join("missing.csv"), None),
        Err(Error::Io(_))
    ));
    let data = ingest_csv(fixture("synthetic_counts.csv"), None).unwrap();
    assert_eq!(data.n_groups(), 6);
    assert_eq!(data.n_times(), 261);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_epiforecast"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().to_str().unwrap();
    let config = fixture("experiment.toml");
    let config = config.to_str().unwrap();

    let ok = cli(&[
        "evaluate",
        "--config",
        config,
        "--out-dir",
        dir,
        "--threads",
        "2",
    ]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    for f in [
        "scores_by_week.csv",
        "mean_scores.csv",
        "pit_bins.csv",
        "fanchart_quantiles.csv",
        "tests.csv",
        "report.json",
    ] {
        assert!(out.path().join(f).exists(), "{f}");
    }
    let report = out.path().join("report.json");
    let redo = tempfile::tempdir().unwrap();
    let rep = cli(&[
        "report",
        report.to_str().unwrap(),
        "--out-dir",
        redo.path().to_str().unwrap(),
    ]);
    assert_eq!(rep.status.code(), Some(0));
    assert_eq!(
        std::fs::read(out.path().join("scores_by_week.csv")).unwrap(),
        std::fs::read(redo.path().join("scores_by_week.csv")).unwrap()
    );

    let fit = cli(&["fit", "--config", config, "--out-dir", dir]);
    assert_eq!(fit.status.code(), Some(0));
    assert!(out.path().join("fits.json").exists());

    let bad = out.path().join("bad.toml");
    std::fs::write(&bad, "data = \"x.csv\"\nunknown = 1\n").unwrap();
    let b = cli(&["evaluate", "--config", bad.to_str().unwrap()]);
    assert_eq!(b.status.code(), Some(1));
    let missing = cli(&["evaluate", "--config", "/nonexistent/config.toml"]);
    assert_eq!(missing.status.code(), Some(1));

    // the log-normal baseline cannot handle the zero counts of the fixture
    let text = std::fs::read_to_string(fixture("experiment.toml"))
        .unwrap()
        .replace("naive = false", "naive = true")
        .replace(
            "synthetic_counts.csv",
            fixture("synthetic_counts.csv").to_str().unwrap(),
        )
        .replace(
            "contacts_6x6.csv",
            fixture("contacts_6x6.csv").to_str().unwrap(),
        );
    let partial = out.path().join("partial.toml");
    std::fs::write(&partial, text).unwrap();
    let p = cli(&[
        "evaluate",
        "--config",
        partial.to_str().unwrap(),
        "--out-dir",
        dir,
    ]);
    assert_eq!(
        p.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&p.stderr)
    );
    let (_, failures) = read_csv(&out.path().join("failures.csv"));
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0][0], "naive");
}
