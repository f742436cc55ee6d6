//! Browser demo: simulate a cohort, fit conditional centiles, then screen a
//! subject, run the goodness-of-fit check, or estimate a test's size.
//!
//! The `*_impl` functions hold the logic and are usable natively; the
//! exported wrappers convert errors for JavaScript and take 32-bit seeds
//! so that callers pass plain numbers.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use condchart::chartmodel::{fit, screen, FittedChartModel, ModelConfig, ScreeningQuery};
use condchart::diagnosis::{diagnose, DiagnosisSettings, GroupVariable, Subgroup};
use condchart::longdata::Dataset;
use condchart::numstat::RngStream;
use condchart::simlab::{generate, type1_error, CalibrationSetup, SimModelSpec};
use condchart::splines::KnotSpec;
use condchart::svg::{render_chart, render_qq};

fn js(e: impl ToString) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    data: Dataset,
    model: FittedChartModel,
}

#[derive(Serialize)]
struct ScreenView {
    band: String,
    centiles: Vec<(f64, f64)>,
    repaired: bool,
    svg: String,
}

#[derive(Serialize)]
struct DiagnoseView {
    n_observed: usize,
    max_abs_z: f64,
    tau_points: Vec<(f64, f64, f64)>,
    svg: String,
}

impl Demo {
    /// Model-1 cohort of `n_subjects` with lag coefficient `b`, fitted with
    /// one lag, the covariate, three knots and the default levels.
    pub fn create(seed: u64, n_subjects: usize, b: f64) -> condchart::Result<Demo> {
        let spec = SimModelSpec::model(1, b)?.with_size(n_subjects, 10);
        let data = generate(&spec, &mut RngStream::new(seed, 0))?;
        let config = ModelConfig::with_default_grid(1, KnotSpec::uniform(3, 4, 0.0, 1.0)?)?;
        let model = fit(&data, &config)?;
        Ok(Demo { data, model })
    }

    pub fn screen_impl(
        &self,
        t_prev: f64,
        y_prev: f64,
        x: f64,
        t: f64,
        y: f64,
    ) -> condchart::Result<String> {
        let query = ScreeningQuery {
            history: vec![(t_prev, y_prev)],
            covariates: vec![x],
            t_query: t,
            y_query: y,
        };
        let report = screen(&self.model, &query)?;
        let view = ScreenView {
            band: report.band.to_string(),
            centiles: report
                .centiles
                .tau_grid
                .iter()
                .copied()
                .zip(report.centiles.values.iter().copied())
                .collect(),
            repaired: report.centiles.monotonicity_repaired,
            svg: render_chart(&self.model, &query, None)?,
        };
        Ok(serde_json::to_string(&view)?)
    }

    /// `group` is `all`, `low` (first measurement below its lower quartile)
    /// or `high` (at or above the upper quartile).
    pub fn diagnose_impl(&self, j: usize, group: &str, seed: u64) -> condchart::Result<String> {
        let mut settings = DiagnosisSettings::new(j);
        settings.simulated_size = 5000;
        settings.group = match group {
            "all" => Subgroup::All,
            "low" => Subgroup::Below {
                var: GroupVariable::FirstMeasurement,
                quantile_level: 0.25,
            },
            "high" => Subgroup::AtOrAbove {
                var: GroupVariable::FirstMeasurement,
                quantile_level: 0.75,
            },
            other => return Err(condchart::Error::Input(format!("unknown group {other:?}"))),
        };
        let report = diagnose(
            &self.model,
            &self.data,
            &settings,
            &mut RngStream::new(seed, 1),
        )?;
        let view = DiagnoseView {
            n_observed: report.n_observed,
            max_abs_z: report.max_abs_z(),
            tau_points: report
                .tau_points
                .iter()
                .map(|p| (p.tau, p.tau_hat, p.z))
                .collect(),
            svg: render_qq(&report),
        };
        Ok(serde_json::to_string(&view)?)
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, n_subjects: usize, b: f64) -> Result<Demo, JsValue> {
        Demo::create(seed.into(), n_subjects, b).map_err(js)
    }

    /// JSON with the band label, the centiles and the chart SVG.
    pub fn screen(
        &self,
        t_prev: f64,
        y_prev: f64,
        x: f64,
        t: f64,
        y: f64,
    ) -> Result<String, JsValue> {
        self.screen_impl(t_prev, y_prev, x, t, y).map_err(js)
    }

    /// JSON with the standardized level deviations and the QQ plot SVG.
    pub fn diagnose(&self, j: usize, group: &str, seed: u32) -> Result<String, JsValue> {
        self.diagnose_impl(j, group, seed.into()).map_err(js)
    }
}

/// Rejection rate of the lag test on null data from a simulation model, as JSON.
pub fn calibrate_impl(
    model_id: u8,
    tau: f64,
    knots: usize,
    reps: usize,
    seed: u64,
) -> condchart::Result<String> {
    let spec = SimModelSpec::model(model_id, 0.0)?;
    let result = type1_error(&spec, &CalibrationSetup::new(tau, knots, reps, seed))?;
    Ok(serde_json::to_string(&result)?)
}

#[wasm_bindgen]
pub fn calibrate(
    model_id: u8,
    tau: f64,
    knots: usize,
    reps: usize,
    seed: u32,
) -> Result<String, JsValue> {
    calibrate_impl(model_id, tau, knots, reps, seed.into()).map_err(js)
}
