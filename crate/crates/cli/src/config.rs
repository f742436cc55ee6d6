//! Optional JSON run configuration. Command-line flags take precedence over
//! values read from the file.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use condchart::chartmodel::ModelConfig;
use condchart::diagnosis::{GroupVariable, Subgroup};
use condchart::longdata::Dataset;
use condchart::splines::KnotSpec;
use condchart::{Error, Result};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    // model
    pub p: Option<usize>,
    pub knots: Option<Vec<f64>>,
    pub n_knots: Option<usize>,
    pub order: Option<usize>,
    pub tau_grid: Option<Vec<f64>>,
    // rank test
    pub tau: Option<f64>,
    pub columns: Option<Vec<usize>>,
    // screening
    pub bootstrap: Option<usize>,
    pub level: Option<f64>,
    // diagnosis
    pub j: Option<usize>,
    pub group: Option<String>,
    pub size: Option<usize>,
    // simulation
    pub model_id: Option<u8>,
    pub reps: Option<usize>,
    pub b_values: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Model settings from flags, falling back to the file and then to a cubic
/// lag-1 model with one knot at the middle of the observed time range.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ModelFlags {
    /// Number of lagged measurements in the model.
    #[arg(long)]
    pub p: Option<usize>,
    /// Interior knots, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "n_knots")]
    pub knots: Option<Vec<f64>>,
    /// Number of equally spaced interior knots on the observed time range.
    #[arg(long)]
    pub n_knots: Option<usize>,
    /// Spline order (4 is cubic).
    #[arg(long)]
    pub order: Option<usize>,
    /// Quantile levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tau_grid: Option<Vec<f64>>,
}

impl ModelFlags {
    pub fn resolve(&self, file: &FileConfig, data: &Dataset) -> Result<ModelConfig> {
        let p = self.p.or(file.p).unwrap_or(1);
        let order = self.order.or(file.order).unwrap_or(4);
        let times = data.all_times();
        let explicit = self.knots.clone().or_else(|| {
            if self.n_knots.is_some() {
                None
            } else {
                file.knots.clone()
            }
        });
        let spec = match explicit {
            Some(k) => KnotSpec::for_times(k, order, &times),
            None => {
                let count = self.n_knots.or(file.n_knots).unwrap_or(1);
                let range = KnotSpec::for_times(vec![], order, &times)?;
                KnotSpec::uniform(count, order, range.t_lower, range.t_upper)
            }
        }
        .map_err(as_config)?;
        let grid = self
            .tau_grid
            .clone()
            .or_else(|| file.tau_grid.clone())
            .unwrap_or_else(|| condchart::chartmodel::DEFAULT_TAU_GRID.to_vec());
        ModelConfig::new(p, spec, grid)
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Input(m) | Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

/// `t:y,t:y,...` in ascending time order.
pub fn parse_history(text: &str) -> Result<Vec<(f64, f64)>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|pair| {
            let (t, y) = pair.split_once(':').ok_or_else(|| {
                Error::Input(format!("history entry {pair:?} is not of the form t:y"))
            })?;
            Ok((parse_real(t)?, parse_real(y)?))
        })
        .collect()
}

pub fn parse_reals(text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',').map(parse_real).collect()
}

fn parse_real(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Input(format!("{s:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Input(format!("{s:?} is not finite")));
    }
    Ok(v)
}

/// `all`, `first-below:L`, `first-above:L`, `cov-below:C:J:L` or
/// `cov-above:C:J:L`, where `L` is a quantile level, `C` a 0-based covariate
/// and `J` a 1-based measurement index.
pub fn parse_group(text: &str) -> Result<Subgroup> {
    let parts: Vec<&str> = text.split(':').collect();
    let level = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Config(format!("bad quantile level {s:?} in group {text:?}")))
    };
    let index = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Config(format!("bad index {s:?} in group {text:?}")))
    };
    match parts.as_slice() {
        ["all"] => Ok(Subgroup::All),
        ["first-below", l] => Ok(Subgroup::Below {
            var: GroupVariable::FirstMeasurement,
            quantile_level: level(l)?,
        }),
        ["first-above", l] => Ok(Subgroup::AtOrAbove {
            var: GroupVariable::FirstMeasurement,
            quantile_level: level(l)?,
        }),
        ["cov-below", c, j, l] => Ok(Subgroup::Below {
            var: GroupVariable::CovariateAt {
                covariate: index(c)?,
                j: index(j)?,
            },
            quantile_level: level(l)?,
        }),
        ["cov-above", c, j, l] => Ok(Subgroup::AtOrAbove {
            var: GroupVariable::CovariateAt {
                covariate: index(c)?,
                j: index(j)?,
            },
            quantile_level: level(l)?,
        }),
        _ => Err(Error::Config(format!("unrecognized group {text:?}"))),
    }
}
