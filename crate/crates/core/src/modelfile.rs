//! JSON persistence of fitted models. Every float is written in scientific
//! notation with 17 significant digits, so files round-trip exactly and are
//! byte-stable for a given model.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::chartmodel::{FitSummary, FittedChartModel, ModelConfig, TauFit};
use crate::error::{Error, Result};
use crate::splines::KnotSpec;

pub const MODEL_VERSION: &str = "centile-model/1";

#[derive(Debug, Serialize, Deserialize)]
struct ConfigRecord {
    p: usize,
    order: usize,
    interior_knots: Vec<f64>,
    t_lower: f64,
    t_upper: f64,
    tau_grid: Vec<f64>,
    n_covariates: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelRecord {
    version: String,
    config: ConfigRecord,
    per_tau: Vec<TauFit>,
    fit_summary: FitSummary,
}

/// Pretty printer writing floats as `{:.16e}`.
struct ExactFloats<'a>(PrettyFormatter<'a>);

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if !value.is_finite() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "non-finite value in model",
            ));
        }
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes any value with the exact float formatting of model files.
pub fn to_exact_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, ExactFloats(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serializer emits UTF-8"))
}

pub fn model_to_json(model: &FittedChartModel) -> Result<String> {
    let spec = &model.config.spec;
    let record = ModelRecord {
        version: MODEL_VERSION.to_string(),
        config: ConfigRecord {
            p: model.config.p,
            order: spec.order,
            interior_knots: spec.interior_knots.clone(),
            t_lower: spec.t_lower,
            t_upper: spec.t_upper,
            tau_grid: model.config.tau_grid.clone(),
            n_covariates: model.n_covariates,
        },
        per_tau: model.per_tau.clone(),
        fit_summary: model.fit_summary.clone(),
    };
    to_exact_json(&record)
}

pub fn model_from_json(text: &str) -> Result<FittedChartModel> {
    let record: ModelRecord = serde_json::from_str(text)?;
    if record.version != MODEL_VERSION {
        return Err(Error::Input(format!(
            "unsupported model version {:?}",
            record.version
        )));
    }
    let c = record.config;
    let spec = KnotSpec::new(c.interior_knots, c.order, c.t_lower, c.t_upper)?;
    let kn = spec.dimension();
    let lin = 2 * c.p + c.n_covariates;
    let config = ModelConfig::new(c.p, spec, c.tau_grid)?;
    if record.per_tau.len() != config.tau_grid.len() {
        return Err(Error::Input(
            "per-tau entries do not match the tau grid".into(),
        ));
    }
    for (fit, &tau) in record.per_tau.iter().zip(&config.tau_grid) {
        if fit.tau != tau || fit.alpha.len() != kn || fit.beta.len() != lin {
            return Err(Error::Input(format!(
                "coefficients for tau = {} have the wrong shape",
                fit.tau
            )));
        }
    }
    Ok(FittedChartModel {
        config,
        n_covariates: c.n_covariates,
        per_tau: record.per_tau,
        fit_summary: record.fit_summary,
    })
}

pub fn save_model(model: &FittedChartModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FittedChartModel> {
    model_from_json(&fs::read_to_string(path)?)
}
