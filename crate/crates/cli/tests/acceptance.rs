//! Acceptance suite. Runs every criterion at its stated size and tolerance,
//! prints one PASS/FAIL line per criterion and exits non-zero if any fails.
//!
//! Set `CONDCHART_UPDATE_GOLDEN=1` to rewrite the golden files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use condchart::chartmodel::{bootstrap_bands, fit, ModelConfig, ScreeningQuery};
use condchart::diagnosis::{diagnose, DiagnosisSettings, GroupVariable, Subgroup};
use condchart::longdata::save_csv;
use condchart::numstat::{mean, normal_qq_correlation, normal_quantile, RngStream, Variates};
use condchart::quantreg::{solve, QrProblem};
use condchart::ranktest::chisq_cdf;
use condchart::repro::{repro_table1, Table1Plan, Table1Report};
use condchart::simlab::{generate, h, lag_estimate, SimModelSpec};
use condchart::splines::{basis_eval, KnotSpec};

#[path = "../../core/tests/common/mod.rs"]
mod common;

use common::{chisq_cdf_oracle, random_instance, vertex_oracle};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_table1(
    report: &Table1Report,
    models: std::ops::RangeInclusive<u8>,
    lo: f64,
    hi: f64,
) -> Outcome {
    let cells: Vec<_> = report
        .cells
        .iter()
        .filter(|c| models.contains(&c.result.model_id))
        .collect();
    let bad: Vec<String> = cells
        .iter()
        .filter(|c| !(lo..=hi).contains(&c.result.rejection_rate))
        .map(|c| {
            format!(
                "model {} tau {} knots {}: {:.4}",
                c.result.model_id, c.result.tau, c.result.knots, c.result.rejection_rate
            )
        })
        .collect();
    let rates: Vec<f64> = cells.iter().map(|c| c.result.rejection_rate).collect();
    let (min, max) = rates
        .iter()
        .fold((1.0f64, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    outcome(
        bad.is_empty() && cells.len() == 18,
        format!(
            "{} cells, rates in [{min:.4}, {max:.4}], bounds [{lo}, {hi}]{}",
            cells.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; outside: {}", bad.join("; "))
            }
        ),
    )
}

fn criterion_knot_spread(report: &Table1Report) -> Outcome {
    let mut worst = (0.0f64, String::new());
    for model in 1..=6u8 {
        for tau in [0.5, 0.95] {
            let rates: Vec<f64> = report
                .cells
                .iter()
                .filter(|c| c.result.model_id == model && c.result.tau == tau)
                .map(|c| c.result.rejection_rate)
                .collect();
            let spread = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - rates.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread > worst.0 || worst.1.is_empty() {
                worst = (spread, format!("model {model} tau {tau}"));
            }
        }
    }
    outcome(
        worst.0 < 0.02,
        format!("largest spread across knots {:.4} ({})", worst.0, worst.1),
    )
}

fn criterion_consistency() -> Outcome {
    let b = 0.5;
    let seed = 404;
    let mut rmse = Vec::new();
    let mut corr = 0.0;
    for n in [100usize, 400] {
        let spec = SimModelSpec::model(1, b).unwrap().with_size(n, 10);
        let est: Vec<f64> = (0..200)
            .map(|r| lag_estimate(&spec, 0.5, 3, seed + n as u64, r).unwrap())
            .collect();
        rmse.push((est.iter().map(|e| (e - b).powi(2)).sum::<f64>() / est.len() as f64).sqrt());
        if n == 400 {
            let m = mean(&est);
            let sd =
                (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt();
            let z: Vec<f64> = est.iter().map(|e| (e - m) / sd).collect();
            corr = normal_qq_correlation(&z);
        }
    }
    outcome(
        rmse[1] < rmse[0] && corr > 0.985,
        format!(
            "RMSE n=100 {:.5}, n=400 {:.5}; QQ correlation at n=400 {corr:.4}",
            rmse[0], rmse[1]
        ),
    )
}

fn criterion_solver() -> Outcome {
    let mut rng = RngStream::new(2024, 5);
    let mut worst = 0.0f64;
    let mut sign_failures = 0;
    let mut solved = 0;
    for _ in 0..1000 {
        let d = 1 + rng.index_below(3);
        let n = d + 1 + rng.index_below(10 - d);
        let (x, y) = random_instance(&mut rng, n, d);
        for tau in [0.1, 0.5, 0.9] {
            let sol = solve(&QrProblem::new(&x, &y, tau).unwrap()).unwrap();
            worst = worst.max((sol.objective - vertex_oracle(&x, &y, tau)).abs());
            let tn = tau * n as f64;
            let eps = 1e-9;
            if !(sol.n_neg as f64 <= tn + eps && (sol.n_neg + sol.n_zero) as f64 >= tn - eps) {
                sign_failures += 1;
            }
            solved += 1;
        }
    }
    outcome(
        worst <= 1e-9 && sign_failures == 0,
        format!("{solved} solves on 1000 instances; max objective gap {worst:.2e}; sign-bound failures {sign_failures}"),
    )
}

fn criterion_splines() -> Outcome {
    let spec = KnotSpec::new(vec![0.13, 0.4, 0.41, 0.77], 4, 0.0, 1.2).unwrap();
    let points: Vec<f64> = (0..1000).map(|k| 1.2 * k as f64 / 999.0).collect();
    let pou = points
        .iter()
        .map(|&t| (basis_eval(&spec, t).unwrap().iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);

    let cubic = |t: f64| 2.0 - 3.0 * t + 0.5 * t * t + 1.7 * t * t * t;
    let g = spec.greville_abscissae();
    let k = g.len();
    let a = DMatrix::from_fn(k, k, |r, c| basis_eval(&spec, g[r]).unwrap()[c]);
    let rhs = DVector::from_iterator(k, g.iter().map(|&t| cubic(t)));
    let coef = a.lu().solve(&rhs).unwrap();
    let repro = points
        .iter()
        .map(|&t| {
            let b = basis_eval(&spec, t).unwrap();
            (b.iter().zip(coef.iter()).map(|(x, c)| x * c).sum::<f64>() - cubic(t)).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        pou <= 1e-12 && repro <= 1e-9,
        format!("partition of unity error {pou:.2e}; cubic reproduction error {repro:.2e}"),
    )
}

fn fine_grid() -> Vec<f64> {
    (0..49).map(|k| 0.02 + 0.02 * k as f64).collect()
}

fn criterion_diagnosis() -> Outcome {
    let seed = 707;
    let knots = KnotSpec::uniform(3, 4, 0.0, 1.0).unwrap();
    let mut calm = [0usize; 3];
    let js = [2usize, 5, 9];
    let mut detected = 0;
    let reps = 100;
    for r in 0..reps {
        let spec = SimModelSpec::model(1, 0.5).unwrap().with_size(500, 10);
        let data = generate(&spec, &mut RngStream::new(seed, r)).unwrap();
        let model = fit(
            &data,
            &ModelConfig::new(1, knots.clone(), fine_grid()).unwrap(),
        )
        .unwrap();
        for (k, &j) in js.iter().enumerate() {
            let report = diagnose(
                &model,
                &data,
                &DiagnosisSettings::new(j),
                &mut RngStream::new(seed + 1, r * 10 + j as u64),
            )
            .unwrap();
            if report.max_abs_z() < 3.5 {
                calm[k] += 1;
            }
        }

        let spec = SimModelSpec::model(1, 0.8).unwrap().with_size(500, 10);
        let data = generate(&spec, &mut RngStream::new(seed + 2, r))
            .unwrap()
            .without_covariates();
        let model = fit(
            &data,
            &ModelConfig::new(0, knots.clone(), fine_grid()).unwrap(),
        )
        .unwrap();
        let mut settings = DiagnosisSettings::new(2);
        settings.group = Subgroup::Below {
            var: GroupVariable::FirstMeasurement,
            quantile_level: 0.25,
        };
        let report = diagnose(&model, &data, &settings, &mut RngStream::new(seed + 3, r)).unwrap();
        if report.max_abs_z() > 3.0 {
            detected += 1;
        }
    }
    let need = (0.95 * reps as f64).ceil() as usize;
    outcome(
        calm.iter().all(|&c| c >= need) && detected as f64 >= 0.8 * reps as f64,
        format!(
            "max|z| < 3.5 in {}/{}/{} of {reps} replicates at j = 2/5/9; misspecified fit flagged in {detected} of {reps}",
            calm[0], calm[1], calm[2]
        ),
    )
}

fn criterion_bootstrap() -> Outcome {
    let seed = 808;
    let b = 0.5;
    let grid = vec![0.1, 0.5, 0.9];
    let config =
        ModelConfig::new(1, KnotSpec::uniform(3, 4, 0.0, 1.0).unwrap(), grid.clone()).unwrap();
    let (y_prev, x, t) = (30.0, 10.0, 0.6);
    let query = ScreeningQuery {
        history: vec![(0.4, y_prev)],
        covariates: vec![x],
        t_query: t,
        y_query: 0.0,
    };
    let truth: Vec<f64> = grid
        .iter()
        .map(|&tau| h(t) + b * y_prev + x + normal_quantile(tau))
        .collect();
    let reps = 200;
    let mut covered = vec![0usize; grid.len()];
    for r in 0..reps {
        let spec = SimModelSpec::model(1, b).unwrap();
        let data = generate(&spec, &mut RngStream::new(seed, r)).unwrap();
        let bands = bootstrap_bands(&data, &config, &query, 200, 0.9, seed + 1 + r).unwrap();
        for k in 0..grid.len() {
            if bands.lower[k] <= truth[k] && truth[k] <= bands.upper[k] {
                covered[k] += 1;
            }
        }
    }
    let rates: Vec<String> = covered
        .iter()
        .zip(&grid)
        .map(|(c, tau)| format!("tau {tau}: {:.3}", *c as f64 / reps as f64))
        .collect();
    outcome(
        covered.iter().all(|&c| c as f64 >= 0.8 * reps as f64),
        format!("coverage {}", rates.join(", ")),
    )
}

fn criterion_chisq() -> Outcome {
    let mut worst = 0.0f64;
    for q in 1..=10 {
        for k in 0..=5000 {
            let x = 50.0 * k as f64 / 5000.0;
            worst = worst.max((chisq_cdf(x, q) - chisq_cdf_oracle(x, q)).abs());
        }
    }
    outcome(
        worst <= 1e-10,
        format!("max deviation {worst:.2e} over 5001 points x 10 dof"),
    )
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn criterion_determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let data = dir.path().join("data.csv");
    let spec = SimModelSpec::model(1, 0.5).unwrap().with_size(80, 10);
    save_csv(&generate(&spec, &mut RngStream::new(5, 0)).unwrap(), &data).unwrap();
    let d = data.to_str().unwrap().to_string();

    let bin = env!("CARGO_BIN_EXE_condchart");
    let run = |args: &[&str], out: &Path| -> Vec<u8> {
        let status = Command::new(bin)
            .args(args)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        fs::read(out).unwrap()
    };
    let model_a = dir.path().join("model_a.json");
    let model_b = dir.path().join("model_b.json");
    let fit_args = ["fit", "--data", &d, "--n-knots", "2", "--seed", "1"];
    let model = run(&fit_args, &model_a);
    let model_again = run(&fit_args, &model_b);

    let csv_args = [
        "simulate",
        "--model-id",
        "2",
        "--tau",
        "0.95",
        "--knots",
        "2",
        "--reps",
        "40",
        "--seed",
        "11",
    ];
    let csv = run(&csv_args, &dir.path().join("cal_a.csv"));
    let csv_again = run(&csv_args, &dir.path().join("cal_b.csv"));

    let m = model_a.to_str().unwrap().to_string();
    let svg_of = |name: &str| -> Vec<u8> {
        let svg = dir.path().join(name);
        let args = [
            "screen",
            "--model",
            &m,
            "--history",
            "0.2:20,0.4:30",
            "--covariates",
            "10",
            "--t",
            "0.6",
            "--y",
            "31",
            "--bootstrap",
            "30",
            "--data",
            &d,
            "--seed",
            "3",
            "--svg",
            svg.to_str().unwrap(),
        ];
        run(&args, &dir.path().join(format!("{name}.json")));
        fs::read(&svg).unwrap()
    };
    let svg = svg_of("a.svg");
    let svg_again = svg_of("b.svg");

    let golden = golden_dir();
    let files = [
        ("model.json", &model),
        ("calibration.csv", &csv),
        ("chart.svg", &svg),
    ];
    if std::env::var_os("CONDCHART_UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(&golden).unwrap();
        for (name, bytes) in files {
            fs::write(golden.join(name), bytes).unwrap();
        }
    }
    let mut mismatched = Vec::new();
    for (name, bytes) in files {
        if fs::read(golden.join(name)).ok().as_deref() != Some(bytes.as_slice()) {
            mismatched.push(name);
        }
    }
    let repeatable = model == model_again && csv == csv_again && svg == svg_again;
    outcome(
        repeatable && mismatched.is_empty(),
        format!("repeat runs identical: {repeatable}; golden mismatches: {mismatched:?}"),
    )
}

fn main() {
    // Under `cargo test -- --list` or with a filter, behave like an empty harness.
    if std::env::args().skip(1).any(|a| a == "--list") {
        return;
    }
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        println!(
            "criterion {n:>2} {} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        results.push((n, name, o));
    };

    let table = repro_table1(&Table1Plan::full(2000, 20_240)).unwrap();
    record(1, "type I error, models 1-3", &|| {
        criterion_table1(&table, 1..=3, 0.035, 0.065)
    });
    record(2, "type I error, models 4-6", &|| {
        criterion_table1(&table, 4..=6, 0.03, 0.09)
    });
    record(3, "knot insensitivity", &|| criterion_knot_spread(&table));
    record(
        4,
        "estimator consistency and normality",
        &criterion_consistency,
    );
    record(5, "solver against vertex enumeration", &criterion_solver);
    record(6, "spline basis", &criterion_splines);
    record(
        7,
        "diagnosis self-consistency and power",
        &criterion_diagnosis,
    );
    record(8, "bootstrap band coverage", &criterion_bootstrap);
    record(9, "chi-squared distribution function", &criterion_chisq);
    record(10, "determinism and golden files", &criterion_determinism);

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0} s (type I error grid {:.0} s)",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64(),
        table.elapsed.as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
