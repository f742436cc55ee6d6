use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use condchart::chartmodel::{bootstrap_bands, fit, screen, FittedChartModel, ScreeningQuery};
use condchart::diagnosis::{diagnose, DiagnosisSettings};
use condchart::longdata::{build_design, load_csv, Dataset};
use condchart::modelfile::{load_model, model_to_json, to_exact_json};
use condchart::numstat::RngStream;
use condchart::quantreg::{solve, QrProblem};
use condchart::ranktest::{rank_score_test, TestSpec};
use condchart::repro::{repro_diagnosis_figures, repro_table1, Table1Plan};
use condchart::simlab::{
    power_curve, type1_error, write_calibration_csv, CalibrationSetup, SimModelSpec,
};
use condchart::svg::{render_chart, render_qq};
use condchart::{Error, Result};

mod config;

use config::{parse_group, parse_history, parse_reals, FileConfig, ModelFlags};

const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(
    name = "condchart",
    version,
    about = "Conditional growth charts from longitudinal data"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON file with default values for any option.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Primary output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for replicate loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the conditional quantile model and write it as JSON.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Place a new measurement among the centiles conditional on its history.
    Screen {
        #[arg(long)]
        model: PathBuf,
        /// Prior measurements as `t:y,t:y,...`, oldest first.
        #[arg(long, default_value = "")]
        history: String,
        /// Covariates at the new measurement, comma separated.
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        covariates: String,
        #[arg(long)]
        t: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        /// Write the chart to this SVG file.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Subject-bootstrap replicates for pointwise bands; needs --data.
        #[arg(long)]
        bootstrap: Option<usize>,
        /// Data the model was fitted on, resampled for the bands.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Coverage of the bootstrap bands.
        #[arg(long)]
        level: Option<f64>,
    },
    /// Rank score test that some linear coefficients vanish.
    Test {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        tau: Option<f64>,
        /// Linear-block columns tested jointly (0 is the lag-1 measurement).
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<usize>>,
        /// Print every linear coefficient with the p-value of its own test.
        #[arg(long)]
        table: bool,
    },
    /// Compare observed and model-simulated j-th measurements.
    Diagnose {
        #[arg(long)]
        data: PathBuf,
        /// Fitted model; refitted from --data with the model flags otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        model_flags: ModelFlags,
        #[arg(long)]
        j: Option<usize>,
        /// all, first-below:L, first-above:L, cov-below:C:J:L or cov-above:C:J:L.
        #[arg(long)]
        group: Option<String>,
        /// Number of simulated measurements.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Monte Carlo rejection rates of the lag test on a simulation model.
    Simulate {
        #[arg(long)]
        model_id: Option<u8>,
        #[arg(long)]
        tau: Option<f64>,
        /// Equally spaced interior knots on [0, 1].
        #[arg(long)]
        knots: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// Use 10000 replicates.
        #[arg(long, conflicts_with = "reps")]
        full: bool,
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<usize>>,
        /// Lag coefficients above the null value; gives a power curve.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        b_values: Option<Vec<f64>>,
    },
    /// Regenerate the Type I error table and diagnosis figures into a directory.
    Repro {
        #[arg(long)]
        reps: Option<usize>,
        /// Also run the two-column lag test.
        #[arg(long)]
        pair: bool,
        /// Skip the Type I error table.
        #[arg(long)]
        figures_only: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.common.config.as_deref())?;
    if let Some(n) = cli.common.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let seed = cli.common.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let out = cli.common.out.as_deref();
    match cli.command {
        Command::Fit { data, model } => cmd_fit(&file, &data, &model, out),
        Command::Screen {
            model,
            history,
            covariates,
            t,
            y,
            svg,
            bootstrap,
            data,
            level,
        } => {
            let query = ScreeningQuery {
                history: parse_history(&history)?,
                covariates: parse_reals(&covariates)?,
                t_query: t,
                y_query: y,
            };
            let boot = bootstrap.or(file.bootstrap);
            let level = level.or(file.level).unwrap_or(0.9);
            cmd_screen(
                &model,
                &query,
                svg.as_deref(),
                boot,
                data.as_deref(),
                level,
                seed,
                out,
            )
        }
        Command::Test {
            data,
            model,
            tau,
            columns,
            table,
        } => {
            let tau = tau.or(file.tau).unwrap_or(0.5);
            let columns = columns.or(file.columns.clone()).unwrap_or_else(|| vec![0]);
            cmd_test(&file, &data, &model, tau, columns, table, out)
        }
        Command::Diagnose {
            data,
            model,
            model_flags,
            j,
            group,
            size,
            svg,
        } => {
            let mut settings = DiagnosisSettings::new(j.or(file.j).unwrap_or(2));
            if let Some(g) = group.or(file.group.clone()) {
                settings.group = parse_group(&g)?;
            }
            if let Some(s) = size.or(file.size) {
                settings.simulated_size = s;
            }
            cmd_diagnose(
                &file,
                &data,
                model.as_deref(),
                &model_flags,
                &settings,
                svg.as_deref(),
                seed,
                out,
            )
        }
        Command::Simulate {
            model_id,
            tau,
            knots,
            reps,
            full,
            columns,
            b_values,
        } => {
            let model_id = model_id.or(file.model_id).unwrap_or(1);
            let mut setup = CalibrationSetup::new(
                tau.or(file.tau).unwrap_or(0.5),
                knots.or(file.n_knots).unwrap_or(1),
                if full {
                    10_000
                } else {
                    reps.or(file.reps).unwrap_or(2000)
                },
                seed,
            );
            if let Some(c) = columns.or(file.columns.clone()) {
                setup.tested_columns = c;
            }
            cmd_simulate(model_id, &setup, b_values.or(file.b_values.clone()), out)
        }
        Command::Repro {
            reps,
            pair,
            figures_only,
        } => {
            let dir = out.ok_or_else(|| Error::Config("repro needs --out DIR".into()))?;
            cmd_repro(
                dir,
                reps.or(file.reps).unwrap_or(2000),
                pair,
                figures_only,
                seed,
            )
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn model_header(model: &FittedChartModel) -> serde_json::Value {
    let s = &model.config.spec;
    json!({
        "p": model.config.p,
        "order": s.order,
        "interior_knots": s.interior_knots,
        "domain": [s.t_lower, s.t_upper],
        "tau_grid": model.config.tau_grid,
        "n_covariates": model.n_covariates,
    })
}

fn cmd_fit(file: &FileConfig, data: &Path, flags: &ModelFlags, out: Option<&Path>) -> Result<()> {
    let dataset = load_csv(data)?;
    let config = flags.resolve(file, &dataset)?;
    let model = fit(&dataset, &config)?;
    emit(out, &model_to_json(&model)?)?;

    let mut summary = String::new();
    summary.push_str(&format!("# config {}\n", model_header(&model)));
    let s = &model.fit_summary;
    summary.push_str(&format!(
        "rows {}  subjects {}  skipped {}\n",
        s.n_rows, s.n_subjects, s.skipped_subjects
    ));
    summary.push_str("tau\tobjective\tdegenerate\n");
    for f in &model.per_tau {
        summary.push_str(&format!(
            "{}\t{:.6}\t{}\n",
            f.tau, f.objective, f.degenerate
        ));
    }
    if out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_screen(
    model_path: &Path,
    query: &ScreeningQuery,
    svg: Option<&Path>,
    bootstrap: Option<usize>,
    data: Option<&Path>,
    level: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let model = load_model(model_path)?;
    let report = screen(&model, query)?;
    let bands = match bootstrap {
        Some(b) => {
            let data = data.ok_or_else(|| Error::Config("--bootstrap needs --data".into()))?;
            let dataset = load_csv(data)?;
            Some(bootstrap_bands(
                &dataset,
                &model.config,
                query,
                b,
                level,
                seed,
            )?)
        }
        None => None,
    };
    if let Some(path) = svg {
        fs::write(path, render_chart(&model, query, bands.as_ref())?)?;
    }
    let mut header = model_header(&model);
    header["seed"] = json!(seed);
    header["bootstrap"] = json!(bootstrap);
    header["level"] = json!(level);
    let doc = json!({ "config": header, "report": report, "bands": bands });
    match out {
        Some(p) => {
            fs::write(p, to_exact_json(&doc)?)?;
            println!("band: {}", report.band);
        }
        None => {
            println!("band: {}", report.band);
            for (tau, v) in report.centiles.tau_grid.iter().zip(&report.centiles.values) {
                println!("{tau}\t{v:.4}");
            }
            if report.centiles.monotonicity_repaired {
                println!("note: crossing centiles were rearranged");
            }
        }
    }
    Ok(())
}

fn linear_column_names(p: usize, dataset: &Dataset) -> Vec<String> {
    let mut names = Vec::new();
    for k in 1..=p {
        names.push(format!("y[j-{k}]"));
        names.push(format!("d{k}*y[j-{k}]"));
    }
    names.extend(dataset.covariate_names.iter().cloned());
    names
}

fn cmd_test(
    file: &FileConfig,
    data: &Path,
    flags: &ModelFlags,
    tau: f64,
    columns: Vec<usize>,
    table: bool,
    out: Option<&Path>,
) -> Result<()> {
    let dataset = load_csv(data)?;
    let config = flags.resolve(file, &dataset)?;
    let design = build_design(&dataset, config.p, &config.spec)?;
    let header = json!({
        "p": config.p,
        "order": config.spec.order,
        "interior_knots": config.spec.interior_knots,
        "domain": [config.spec.t_lower, config.spec.t_upper],
        "tau": tau,
    });
    if table {
        let names = linear_column_names(config.p, &dataset);
        let x = design.full_design();
        let full = solve(&QrProblem::new(&x, &design.response, tau)?)?;
        let kn = config.spec.dimension();
        let mut text = format!("# config {header}\n");
        for (c, name) in names.iter().enumerate() {
            let r = rank_score_test(&design, &TestSpec::new(vec![c], tau))?;
            text.push_str(&format!(
                "{name}\t{:.4} ({:.3})\n",
                full.coefficients[kn + c],
                r.p_value
            ));
        }
        return emit(out, &text);
    }
    let spec = TestSpec::new(columns.clone(), tau);
    let result = rank_score_test(&design, &spec)?;
    let mut header = header;
    header["columns"] = json!(columns);
    emit(
        out,
        &to_exact_json(&json!({ "config": header, "result": result }))?,
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_diagnose(
    file: &FileConfig,
    data: &Path,
    model_path: Option<&Path>,
    flags: &ModelFlags,
    settings: &DiagnosisSettings,
    svg: Option<&Path>,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let dataset = load_csv(data)?;
    let model = match model_path {
        Some(p) => load_model(p)?,
        None => fit(&dataset, &flags.resolve(file, &dataset)?)?,
    };
    let report = diagnose(&model, &dataset, settings, &mut RngStream::new(seed, 0))?;
    if let Some(path) = svg {
        fs::write(path, render_qq(&report))?;
    }
    let mut header = model_header(&model);
    header["seed"] = json!(seed);
    header["diagnosis"] = serde_json::to_value(settings)?;
    emit(
        out,
        &to_exact_json(&json!({ "config": header, "report": report }))?,
    )
}

fn cmd_simulate(
    model_id: u8,
    setup: &CalibrationSetup,
    b_values: Option<Vec<f64>>,
    out: Option<&Path>,
) -> Result<()> {
    let spec = SimModelSpec::model(model_id, 0.0)?;
    let mut header = vec![
        format!(
            "model_id={model_id} n_subjects={} m_per_subject={}",
            spec.n_subjects, spec.m_per_subject
        ),
        format!(
            "tau={} knots={} tested_columns={:?} replicates={} seed={}",
            setup.tau, setup.knots, setup.tested_columns, setup.replicates, setup.seed
        ),
    ];
    let results = match b_values {
        Some(bs) => {
            header.push(format!("b offsets from the null value: {bs:?}"));
            power_curve(&spec, setup, &bs)?
                .into_iter()
                .map(|p| p.result)
                .collect()
        }
        None => vec![type1_error(&spec, setup)?],
    };
    let mut buf = Vec::new();
    write_calibration_csv(&results, &header, &mut buf)?;
    emit(out, &String::from_utf8(buf).expect("CSV is UTF-8"))
}

fn cmd_repro(dir: &Path, reps: usize, pair: bool, figures_only: bool, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    if !figures_only {
        let mut plans = vec![Table1Plan::full(reps, seed)];
        if pair {
            let mut p = Table1Plan::full(reps, seed);
            p.tested_columns = vec![0, 1];
            plans.push(p);
        }
        let mut markdown = String::new();
        let mut results = Vec::new();
        for plan in &plans {
            let report = repro_table1(plan)?;
            eprintln!(
                "q = {}: {:.1} s",
                plan.tested_columns.len(),
                report.elapsed.as_secs_f64()
            );
            markdown.push_str(&report.to_markdown());
            markdown.push('\n');
            results.extend(report.results());
        }
        let header = vec![format!("type I error grid, replicates={reps} seed={seed}")];
        let mut csv = Vec::new();
        write_calibration_csv(&results, &header, &mut csv)?;
        fs::write(dir.join("table1.csv"), csv)?;
        fs::write(dir.join("table1.md"), markdown)?;
    }
    let fig_dir = dir.join("figures");
    fs::create_dir_all(&fig_dir)?;
    for fig in repro_diagnosis_figures(500, 0.8, seed)? {
        fs::write(fig_dir.join(format!("{}.svg", fig.name)), &fig.svg)?;
        fs::write(
            fig_dir.join(format!("{}.json", fig.name)),
            to_exact_json(&fig.report)?,
        )?;
    }
    Ok(())
}
