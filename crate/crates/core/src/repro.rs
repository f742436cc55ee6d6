//! Batch runs regenerating the Type I error table and the diagnosis figures
//! on simulated data.

use std::fmt::Write;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::chartmodel::{fit, ModelConfig};
use crate::diagnosis::{diagnose, DiagnosisSettings, DiagnosticsReport, GroupVariable, Subgroup};
use crate::error::Result;
use crate::numstat::RngStream;
use crate::simlab::{generate, type1_error, CalibrationResult, CalibrationSetup, SimModelSpec};
use crate::splines::KnotSpec;
use crate::svg::render_qq;

/// Published Type I error rates from 10000 replicates, as
/// `(model, tau, knots, rate)`.
#[rustfmt::skip]
pub const REFERENCE_TYPE1: [(u8, f64, usize, f64); 36] = [
    (1, 0.5, 1, 0.0524), (2, 0.5, 1, 0.0535), (3, 0.5, 1, 0.0531),
    (1, 0.5, 2, 0.0494), (2, 0.5, 2, 0.0472), (3, 0.5, 2, 0.0488),
    (1, 0.5, 3, 0.0513), (2, 0.5, 3, 0.0485), (3, 0.5, 3, 0.0479),
    (1, 0.95, 1, 0.0508), (2, 0.95, 1, 0.0572), (3, 0.95, 1, 0.0523),
    (1, 0.95, 2, 0.0498), (2, 0.95, 2, 0.0551), (3, 0.95, 2, 0.0505),
    (1, 0.95, 3, 0.0495), (2, 0.95, 3, 0.0550), (3, 0.95, 3, 0.0500),
    (4, 0.5, 1, 0.0534), (5, 0.5, 1, 0.0497), (6, 0.5, 1, 0.0563),
    (4, 0.5, 2, 0.0506), (5, 0.5, 2, 0.0462), (6, 0.5, 2, 0.0505),
    (4, 0.5, 3, 0.0510), (5, 0.5, 3, 0.0457), (6, 0.5, 3, 0.0523),
    (4, 0.95, 1, 0.0543), (5, 0.95, 1, 0.0672), (6, 0.95, 1, 0.0521),
    (4, 0.95, 2, 0.0504), (5, 0.95, 2, 0.0662), (6, 0.95, 2, 0.0517),
    (4, 0.95, 3, 0.0479), (5, 0.95, 3, 0.0684), (6, 0.95, 3, 0.0510),
];

pub fn reference_rate(model_id: u8, tau: f64, knots: usize) -> Option<f64> {
    REFERENCE_TYPE1
        .iter()
        .find(|r| r.0 == model_id && r.1 == tau && r.2 == knots)
        .map(|r| r.3)
}

/// Acceptance interval for a Type I error estimate: tighter for the
/// homoscedastic models.
pub fn type1_bounds(model_id: u8) -> (f64, f64) {
    if model_id <= 3 {
        (0.035, 0.065)
    } else {
        (0.03, 0.09)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Cell {
    pub result: CalibrationResult,
    pub reference: Option<f64>,
    pub in_bounds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Report {
    pub cells: Vec<Table1Cell>,
    pub seed: u64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct Table1Plan {
    pub models: Vec<u8>,
    pub taus: Vec<f64>,
    pub knots: Vec<usize>,
    pub tested_columns: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl Table1Plan {
    /// All six models at levels 0.5 and 0.95 with 1, 2 and 3 knots.
    pub fn full(replicates: usize, seed: u64) -> Self {
        Table1Plan {
            models: (1..=6).collect(),
            taus: vec![0.5, 0.95],
            knots: vec![1, 2, 3],
            tested_columns: vec![0],
            replicates,
            seed,
        }
    }

    /// Seed of one cell; cells never share replicate streams.
    pub fn cell_seed(&self, model_id: u8, tau_index: usize, knots: usize) -> u64 {
        self.seed
            .wrapping_add(1_000_003 * model_id as u64)
            .wrapping_add(10_007 * tau_index as u64)
            .wrapping_add(101 * knots as u64)
    }
}

pub fn repro_table1(plan: &Table1Plan) -> Result<Table1Report> {
    let start = Instant::now();
    let mut cells = Vec::new();
    for &model_id in &plan.models {
        let spec = SimModelSpec::model(model_id, 0.0)?;
        for (ti, &tau) in plan.taus.iter().enumerate() {
            for &knots in &plan.knots {
                let mut setup = CalibrationSetup::new(
                    tau,
                    knots,
                    plan.replicates,
                    plan.cell_seed(model_id, ti, knots),
                );
                setup.tested_columns = plan.tested_columns.clone();
                let result = type1_error(&spec, &setup)?;
                let (lo, hi) = type1_bounds(model_id);
                cells.push(Table1Cell {
                    in_bounds: (lo..=hi).contains(&result.rejection_rate),
                    reference: reference_rate(model_id, tau, knots),
                    result,
                });
            }
        }
    }
    Ok(Table1Report {
        cells,
        seed: plan.seed,
        elapsed: start.elapsed(),
    })
}

impl Table1Report {
    pub fn results(&self) -> Vec<CalibrationResult> {
        self.cells.iter().map(|c| c.result.clone()).collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Type I error at nominal 0.05\n");
        let _ = writeln!(
            s,
            "Seed {}; wall clock {:.1} s.\n",
            self.seed,
            self.elapsed.as_secs_f64()
        );
        let _ = writeln!(
            s,
            "| model | tau | knots | q | replicates | rate | MC s.e. | reference | flag |"
        );
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|");
        for c in &self.cells {
            let r = &c.result;
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {:.4} | {:.4} | {} | {} |",
                r.model_id,
                r.tau,
                r.knots,
                r.q,
                r.replicates,
                r.rejection_rate,
                r.mc_standard_error,
                c.reference.map_or("-".to_string(), |v| format!("{v:.4}")),
                if c.in_bounds { "" } else { "OUT OF BOUNDS" }
            );
        }
        s
    }
}

/// One diagnosis figure with the report behind it.
#[derive(Debug, Clone)]
pub struct DiagnosisFigure {
    pub name: String,
    pub report: DiagnosticsReport,
    pub svg: String,
}

/// QQ figures at measurements 2, 5 and 9 for a correctly specified fit and
/// for an unconditional fit, overall and in the subgroups with low and high
/// first measurements, on Model-1 data with a strong lag effect.
pub fn repro_diagnosis_figures(
    n_subjects: usize,
    b: f64,
    seed: u64,
) -> Result<Vec<DiagnosisFigure>> {
    let spec = SimModelSpec::model(1, b)?.with_size(n_subjects, 10);
    let data = generate(&spec, &mut RngStream::new(seed, 0))?;
    let grid: Vec<f64> = (1..50).map(|k| k as f64 / 50.0).collect();
    let knots = KnotSpec::uniform(3, 4, 0.0, 1.0)?;
    let conditional = fit(&data, &ModelConfig::new(1, knots.clone(), grid.clone())?)?;
    let unconditional = fit(
        &data.without_covariates(),
        &ModelConfig::new(0, knots, grid)?,
    )?;
    let groups = [
        ("all", Subgroup::All),
        (
            "group1",
            Subgroup::Below {
                var: GroupVariable::FirstMeasurement,
                quantile_level: 0.25,
            },
        ),
        (
            "group2",
            Subgroup::AtOrAbove {
                var: GroupVariable::FirstMeasurement,
                quantile_level: 0.75,
            },
        ),
    ];
    let mut out = Vec::new();
    let mut stream = 1;
    for (model_name, model, model_data) in [
        ("conditional", &conditional, data.clone()),
        ("unconditional", &unconditional, data.without_covariates()),
    ] {
        for (group_name, group) in groups {
            for j in [2, 5, 9] {
                let mut settings = DiagnosisSettings::new(j);
                settings.group = group;
                let report = diagnose(
                    model,
                    &model_data,
                    &settings,
                    &mut RngStream::new(seed, stream),
                )?;
                stream += 1;
                out.push(DiagnosisFigure {
                    name: format!("qq_{model_name}_{group_name}_j{j}"),
                    svg: render_qq(&report),
                    report,
                });
            }
        }
    }
    Ok(out)
}
